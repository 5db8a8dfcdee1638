//! Orderings and hidden-unit connectivity degrees for the masked
//! autoencoder.
//!
//! Connectivity rule, with `rank(j)` the 1-based position of attribute `j`
//! in the member's ordering and `deg(h)` the degree of hidden unit `h`:
//!
//! * input `j` feeds hidden `h` iff `deg(h) >= rank(j)`
//! * hidden `h` feeds the output group of attribute `d` iff `rank(d) > deg(h)`
//!
//! so the output of `d` only sees attributes ranked strictly before it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One ensemble member: an ordering plus one draw of hidden degrees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMember {
    /// Index into [`MaskSet::orderings`].
    pub ordering: usize,
    /// Per hidden unit, in `1..=max(D-1, 1)`.
    pub degrees: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    dim: usize,
    hidden: usize,
    n_orderings: usize,
    n_masks: usize,
    seed: u64,
    /// `orderings[o][p]` is the attribute at 0-based position `p`.
    orderings: Vec<Vec<usize>>,
    /// `ranks[o][j]` is the 1-based position of attribute `j`.
    ranks: Vec<Vec<usize>>,
    members: Vec<MaskMember>,
}

/// Draws `n_orderings` orderings (the first is the identity, later ones are
/// uniform permutations) and `n_masks` degree vectors per ordering, all from
/// one ChaCha8 stream seeded by `seed`.
///
/// `dim == 1` is accepted: the only conditional is then an unconditional
/// mixture and every hidden unit is cut off from the output.
pub fn build_masks(dim: usize, hidden: usize, n_orderings: usize, n_masks: usize, seed: u64) -> Result<MaskSet> {
    if dim == 0 {
        return Err(Error::InvalidDimension("need at least one attribute".into()));
    }
    if hidden == 0 {
        return Err(Error::InvalidDimension("need at least one hidden unit".into()));
    }
    if n_orderings == 0 || n_masks == 0 {
        return Err(Error::InvalidConfig(
            "ensemble needs at least one ordering and one mask".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_degree = (dim - 1).max(1);
    let mut orderings = Vec::with_capacity(n_orderings);
    let mut members = Vec::with_capacity(n_orderings * n_masks);
    for o in 0..n_orderings {
        let mut perm: Vec<usize> = (0..dim).collect();
        if o > 0 {
            perm.shuffle(&mut rng);
        }
        orderings.push(perm);
        for _ in 0..n_masks {
            let degrees = (0..hidden).map(|_| rng.random_range(1..=max_degree)).collect();
            members.push(MaskMember { ordering: o, degrees });
        }
    }
    let ranks = orderings
        .iter()
        .map(|perm| {
            let mut rank = vec![0; dim];
            for (p, &j) in perm.iter().enumerate() {
                rank[j] = p + 1;
            }
            rank
        })
        .collect();
    Ok(MaskSet {
        dim,
        hidden,
        n_orderings,
        n_masks,
        seed,
        orderings,
        ranks,
        members,
    })
}

impl MaskSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_orderings(&self) -> usize {
        self.n_orderings
    }

    pub fn n_masks(&self) -> usize {
        self.n_masks
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total ensemble size, `n_orderings * n_masks`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn orderings(&self) -> &[Vec<usize>] {
        &self.orderings
    }

    pub fn members(&self) -> &[MaskMember] {
        &self.members
    }

    pub fn member(&self, m: usize) -> &MaskMember {
        &self.members[m]
    }

    /// Attributes in the order used by member `m`.
    pub fn ordering_of(&self, m: usize) -> &[usize] {
        &self.orderings[self.members[m].ordering]
    }

    /// 1-based position of attribute `j` under member `m`.
    pub fn rank(&self, m: usize, j: usize) -> usize {
        self.ranks[self.members[m].ordering][j]
    }

    /// Input-to-hidden mask, `H x D`.
    pub fn input_mask(&self, m: usize) -> Vec<Vec<bool>> {
        let member = &self.members[m];
        member
            .degrees
            .iter()
            .map(|&deg| (0..self.dim).map(|j| deg >= self.rank(m, j)).collect())
            .collect()
    }

    /// Hidden-to-output mask at attribute-group granularity, `D x H`. Every
    /// raw head output of attribute `d` shares row `d`.
    pub fn output_mask(&self, m: usize) -> Vec<Vec<bool>> {
        let member = &self.members[m];
        (0..self.dim)
            .map(|d| member.degrees.iter().map(|&deg| self.rank(m, d) > deg).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Inputs that can reach output group `d` through the hidden layer,
    /// enumerated from the two mask matrices.
    fn reachable_inputs(inp: &[Vec<bool>], out: &[Vec<bool>], d: usize) -> Vec<usize> {
        let dim = inp[0].len();
        (0..dim)
            .filter(|&j| (0..inp.len()).any(|h| inp[h][j] && out[d][h]))
            .collect()
    }

    #[test]
    fn exhaustive_path_check_small() {
        let masks = build_masks(3, 4, 2, 2, 11).unwrap();
        assert_eq!(masks.len(), 4);
        for m in 0..masks.len() {
            let inp = masks.input_mask(m);
            let out = masks.output_mask(m);
            assert_eq!((inp.len(), inp[0].len()), (4, 3));
            assert_eq!((out.len(), out[0].len()), (3, 4));
            for d in 0..3 {
                for j in reachable_inputs(&inp, &out, d) {
                    assert!(masks.rank(m, j) < masks.rank(m, d), "member {m}: input {j} reaches {d}");
                }
            }
        }
    }

    #[test]
    fn first_in_order_has_no_incoming_connectivity() {
        let masks = build_masks(5, 16, 3, 2, 0).unwrap();
        assert_eq!(masks.orderings()[0], vec![0, 1, 2, 3, 4]);
        for m in 0..masks.len() {
            let first = masks.ordering_of(m)[0];
            assert!(masks.output_mask(m)[first].iter().all(|c| !c));
        }
    }

    #[test]
    fn degrees_in_range_and_deterministic() {
        let a = build_masks(8, 50, 10, 10, 42).unwrap();
        let b = build_masks(8, 50, 10, 10, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a
            .members()
            .iter()
            .flat_map(|m| &m.degrees)
            .all(|&g| (1..=7).contains(&g)));
        assert_ne!(a, build_masks(8, 50, 10, 10, 43).unwrap());
        for perm in a.orderings() {
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn degenerate_dimensions() {
        assert!(matches!(build_masks(0, 4, 1, 1, 0), Err(Error::InvalidDimension(_))));
        assert!(matches!(build_masks(3, 0, 1, 1, 0), Err(Error::InvalidDimension(_))));
        let one = build_masks(1, 4, 2, 2, 0).unwrap();
        for m in 0..one.len() {
            assert!(one.output_mask(m)[0].iter().all(|c| !c));
        }
    }
}
