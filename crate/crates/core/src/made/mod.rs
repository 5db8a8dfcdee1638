//! Masked autoregressive density model with Gaussian-mixture or Bernoulli
//! conditionals.
//!
//! One hidden ReLU layer is shared by every ensemble member; each member
//! re-masks the same weights with its own ordering and degrees. The density
//! of the ensemble is the uniform mixture of the member densities.

mod masks;
pub mod persist;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, sigmoid, softplus, softplus_inv};

pub use masks::{build_masks, MaskMember, MaskSet};

/// Largest supported mixture size.
pub const MAX_COMPONENTS: usize = 16;

/// Lower bound added to the softplus standard deviation, in normalized units.
pub const SIGMA_MIN: f64 = 1e-3;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// `components` weights, means and variances per attribute.
    GaussianMixture { components: usize },
    /// One success probability per attribute.
    Bernoulli,
}

impl Head {
    /// Raw network outputs per attribute.
    pub fn outputs_per_attribute(&self) -> usize {
        match *self {
            Head::GaussianMixture { components } => 3 * components,
            Head::Bernoulli => 1,
        }
    }

    /// Bernoulli only when every column is binary, else a `components`-mixture.
    pub fn for_data(all_binary: bool, components: usize) -> Head {
        if all_binary {
            Head::Bernoulli
        } else {
            Head::GaussianMixture { components }
        }
    }
}

/// Architecture and ensemble settings used to build fresh parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden: usize,
    pub components: usize,
    pub n_orderings: usize,
    pub n_masks: usize,
    /// Seeds the masks; the weights use a stream derived from it.
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: 500,
            components: 3,
            n_orderings: 10,
            n_masks: 10,
            seed: 0,
        }
    }
}

impl ModelSpec {
    /// Fresh parameters for data of dimension `dim`; the head follows
    /// [`Head::for_data`].
    pub fn build(&self, dim: usize, all_binary: bool) -> Result<MadeParams> {
        let masks = build_masks(dim, self.hidden, self.n_orderings, self.n_masks, self.seed)?;
        let head = Head::for_data(all_binary, self.components);
        MadeParams::init(masks, head, self.seed.wrapping_add(0x9E37_79B9_7F4A_7C15))
    }
}

/// Conditional distribution of one attribute given its predecessors.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditional {
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    Bernoulli {
        prob: f64,
    },
}

impl Conditional {
    /// Density (or mass, for Bernoulli) at `x`.
    pub fn log_prob(&self, x: f64) -> f64 {
        match self {
            Conditional::Mixture {
                weights,
                means,
                variances,
            } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(means)
                    .zip(variances)
                    .map(|((w, m), v)| w.ln() - HALF_LN_2PI - 0.5 * v.ln() - (x - m).powi(2) / (2.0 * v))
                    .collect();
                log_sum_exp(&terms)
            }
            Conditional::Bernoulli { prob } => x * prob.ln() + (1.0 - x) * (1.0 - prob).ln(),
        }
    }
}

/// Conditionals for every attribute, indexed by attribute (not by rank).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalParams {
    pub attributes: Vec<Conditional>,
}

/// Weights, biases and masks defining the density.
///
/// Parameters live in one flat vector laid out as
/// `[w1 (H x D), b1 (H), w2 (H x D*R), b2 (D*R)]`, where `R` is
/// [`Head::outputs_per_attribute`]. `w2` is stored hidden-major so that a
/// hidden unit's fan-out is contiguous. Within an attribute's `R` outputs a
/// mixture head uses `[logits K, means K, scale K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MadeParams {
    head: Head,
    masks: MaskSet,
    theta: Vec<f64>,
}

/// Offsets of the four parameter blocks in the flat vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    d: usize,
    h: usize,
    r: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

impl Layout {
    fn new(d: usize, h: usize, r: usize) -> Self {
        let b1 = h * d;
        let w2 = b1 + h;
        let b2 = w2 + h * d * r;
        Layout {
            d,
            h,
            r,
            b1,
            w2,
            b2,
            total: b2 + d * r,
        }
    }
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    hidden: Vec<f64>,
    raw: Vec<f64>,
    member_logp: Vec<f64>,
    cached_hidden: Vec<f64>,
    cached_draw: Vec<f64>,
}

impl MadeParams {
    /// Fresh parameters: weights uniform in `±sqrt(6 / (fan_in + fan_out))`,
    /// hidden biases zero. Mixture heads start with equal weights, means
    /// spread at `(k + 1/2) / K` and standard deviation `1 / (2K)` so that
    /// components are distinguishable even for the first attribute of an
    /// ordering, whose outputs see only the bias. Bernoulli biases are zero.
    pub fn init(masks: MaskSet, head: Head, seed: u64) -> Result<Self> {
        check_head(head)?;
        let layout = Layout::new(masks.dim(), masks.hidden(), head.outputs_per_attribute());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; layout.total];
        let lim1 = (6.0 / (layout.d + layout.h) as f64).sqrt();
        for w in &mut theta[..layout.b1] {
            *w = rng.random_range(-lim1..lim1);
        }
        let lim2 = (6.0 / (layout.h + layout.d * layout.r) as f64).sqrt();
        for w in &mut theta[layout.w2..layout.b2] {
            *w = rng.random_range(-lim2..lim2);
        }
        if let Head::GaussianMixture { components: k } = head {
            let scale_bias = softplus_inv(1.0 / (2.0 * k as f64) - SIGMA_MIN);
            for d in 0..layout.d {
                let base = layout.b2 + d * layout.r;
                for c in 0..k {
                    theta[base + k + c] = (c as f64 + 0.5) / k as f64;
                    theta[base + 2 * k + c] = scale_bias;
                }
            }
        }
        Ok(Self { head, masks, theta })
    }

    /// Reassembles a model from a flat parameter vector.
    pub fn from_parts(masks: MaskSet, head: Head, theta: Vec<f64>) -> Result<Self> {
        check_head(head)?;
        let layout = Layout::new(masks.dim(), masks.hidden(), head.outputs_per_attribute());
        if theta.len() != layout.total {
            return Err(Error::ShapeMismatch {
                expected: layout.total,
                got: theta.len(),
            });
        }
        if theta.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { head, masks, theta })
    }

    fn layout(&self) -> Layout {
        Layout::new(self.masks.dim(), self.masks.hidden(), self.head.outputs_per_attribute())
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn masks(&self) -> &MaskSet {
        &self.masks
    }

    pub fn dim(&self) -> usize {
        self.masks.dim()
    }

    pub fn hidden(&self) -> usize {
        self.masks.hidden()
    }

    pub fn n_members(&self) -> usize {
        self.masks.len()
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Sets every weight to zero and the output biases of attribute `d` to
    /// `bias(d)`. Handy for building models with constant conditionals.
    pub fn set_constant_heads(&mut self, mut bias: impl FnMut(usize) -> Vec<f64>) {
        let l = self.layout();
        self.theta.iter_mut().for_each(|w| *w = 0.0);
        for d in 0..l.d {
            let b = bias(d);
            assert_eq!(b.len(), l.r, "bias length must match head outputs");
            self.theta[l.b2 + d * l.r..l.b2 + (d + 1) * l.r].copy_from_slice(&b);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Hidden activations and raw head outputs of member `m`.
    fn forward_raw(&self, x: &[f64], m: usize, hidden: &mut [f64], raw: &mut [f64]) {
        let l = self.layout();
        let order = self.masks.ordering_of(m);
        let degrees = &self.masks.member(m).degrees;
        let (w1, rest) = self.theta.split_at(l.b1);
        let (b1, rest) = rest.split_at(l.h);
        let (w2, b2) = rest.split_at(l.h * l.d * l.r);
        raw.copy_from_slice(b2);
        for h in 0..l.h {
            let deg = degrees[h];
            if deg >= l.d {
                // no output sees this unit (only possible when D = 1)
                hidden[h] = 0.0;
                continue;
            }
            let row = &w1[h * l.d..(h + 1) * l.d];
            let mut a = b1[h];
            for &j in &order[..deg.min(l.d)] {
                a += row[j] * x[j];
            }
            let z = if a > 0.0 { a } else { 0.0 };
            hidden[h] = z;
            if z == 0.0 {
                continue;
            }
            let fan_out = &w2[h * l.d * l.r..(h + 1) * l.d * l.r];
            for &d in order.get(deg..).unwrap_or(&[]) {
                let o = d * l.r;
                for (acc, w) in raw[o..o + l.r].iter_mut().zip(&fan_out[o..o + l.r]) {
                    *acc += w * z;
                }
            }
        }
    }

    /// Conditional parameters of every attribute under ensemble member
    /// `mask_index`.
    pub fn forward_conditionals(&self, x: &[f64], mask_index: usize) -> Result<ConditionalParams> {
        self.check_input(x)?;
        if mask_index >= self.n_members() {
            return Err(Error::InvalidConfig(format!(
                "mask index {mask_index} out of range for {} members",
                self.n_members()
            )));
        }
        let l = self.layout();
        let mut hidden = vec![0.0; l.h];
        let mut raw = vec![0.0; l.d * l.r];
        self.forward_raw(x, mask_index, &mut hidden, &mut raw);
        let attributes = raw
            .chunks_exact(l.r)
            .map(|out| match self.head {
                Head::GaussianMixture { components: k } => {
                    let lse = log_sum_exp(&out[..k]);
                    Conditional::Mixture {
                        weights: out[..k].iter().map(|v| (v - lse).exp()).collect(),
                        means: out[k..2 * k].to_vec(),
                        variances: out[2 * k..]
                            .iter()
                            .map(|&v| (softplus(v) + SIGMA_MIN).powi(2))
                            .collect(),
                    }
                }
                Head::Bernoulli => Conditional::Bernoulli { prob: sigmoid(out[0]) },
            })
            .collect();
        Ok(ConditionalParams { attributes })
    }

    /// `log p_m(x)` for every ensemble member.
    pub fn member_log_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        self.fill_member_logp(x, &mut ws);
        Ok(ws.member_logp)
    }

    fn fill_member_logp(&self, x: &[f64], ws: &mut Workspace) {
        let l = self.layout();
        ws.hidden.resize(l.h, 0.0);
        ws.raw.resize(l.d * l.r, 0.0);
        ws.member_logp.clear();
        for m in 0..self.n_members() {
            self.forward_raw(x, m, &mut ws.hidden, &mut ws.raw);
            let lp: f64 = (0..l.d)
                .map(|d| head_log_prob(self.head, &ws.raw[d * l.r..(d + 1) * l.r], x[d], None))
                .sum();
            ws.member_logp.push(lp);
        }
    }

    /// Ensemble log-density `log((1/M) sum_m p_m(x))`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        Ok(self.log_density_with(x, &mut ws))
    }

    /// As [`log_density`](Self::log_density) without input checks, reusing
    /// `ws` across calls.
    pub fn log_density_with(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.fill_member_logp(x, ws);
        log_mean_exp(&ws.member_logp)
    }

    /// Negative ensemble log-density; larger means more anomalous.
    pub fn anomaly_score(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.log_density(x)?)
    }

    /// Adds `coef * d log p(x) / d theta` into `grad` and returns `log p(x)`.
    /// Masks are constants; the ReLU derivative at zero is taken as zero.
    pub fn accumulate_log_density_grad(&self, x: &[f64], coef: f64, grad: &mut [f64], ws: &mut Workspace) -> f64 {
        let l = self.layout();
        debug_assert_eq!(grad.len(), l.total);
        let n_members = self.n_members();
        let width = l.d * l.r;
        ws.cached_hidden.resize(n_members * l.h, 0.0);
        ws.cached_draw.resize(n_members * width, 0.0);
        ws.member_logp.clear();
        ws.raw.resize(width, 0.0);
        for m in 0..n_members {
            let hidden = &mut ws.cached_hidden[m * l.h..(m + 1) * l.h];
            let draw = &mut ws.cached_draw[m * width..(m + 1) * width];
            self.forward_raw(x, m, hidden, &mut ws.raw);
            let mut lp = 0.0;
            for (d, &xd) in x.iter().enumerate() {
                let span = d * l.r..(d + 1) * l.r;
                lp += head_log_prob(self.head, &ws.raw[span.clone()], xd, Some(&mut draw[span]));
            }
            ws.member_logp.push(lp);
        }
        let total = log_mean_exp(&ws.member_logp);

        let (gw1, rest) = grad.split_at_mut(l.b1);
        let (gb1, rest) = rest.split_at_mut(l.h);
        let (gw2, gb2) = rest.split_at_mut(l.h * width);
        let w2 = &self.theta[l.w2..l.b2];
        let inv_m = 1.0 / n_members as f64;
        for m in 0..n_members {
            let weight = coef * (ws.member_logp[m] - total).exp() * inv_m;
            if weight == 0.0 {
                continue;
            }
            let order = self.masks.ordering_of(m);
            let degrees = &self.masks.member(m).degrees;
            let hidden = &ws.cached_hidden[m * l.h..(m + 1) * l.h];
            let draw = &mut ws.cached_draw[m * width..(m + 1) * width];
            draw.iter_mut().for_each(|g| *g *= weight);
            for (g, dr) in gb2.iter_mut().zip(draw.iter()) {
                *g += dr;
            }
            for h in 0..l.h {
                let z = hidden[h];
                if z == 0.0 {
                    continue;
                }
                let deg = degrees[h];
                let fan_out = &w2[h * width..(h + 1) * width];
                let gfan = &mut gw2[h * width..(h + 1) * width];
                let mut dz = 0.0;
                for &d in order.get(deg..).unwrap_or(&[]) {
                    let o = d * l.r;
                    for c in o..o + l.r {
                        gfan[c] += draw[c] * z;
                        dz += fan_out[c] * draw[c];
                    }
                }
                gb1[h] += dz;
                let grow = &mut gw1[h * l.d..(h + 1) * l.d];
                for &j in &order[..deg.min(l.d)] {
                    grow[j] += dz * x[j];
                }
            }
        }
        total
    }
}

fn check_head(head: Head) -> Result<()> {
    match head {
        Head::GaussianMixture { components } if components == 0 || components > MAX_COMPONENTS => Err(
            Error::InvalidConfig(format!("mixture size must be in 1..={MAX_COMPONENTS}")),
        ),
        _ => Ok(()),
    }
}

/// `log((1/n) sum exp(v))`; returns `max(v)` exactly when all entries agree.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + (sum / v.len() as f64).ln()
}

/// Log-probability of `x` under one attribute's raw head outputs, optionally
/// writing the gradient with respect to those outputs into `grad`.
fn head_log_prob(head: Head, raw: &[f64], x: f64, grad: Option<&mut [f64]>) -> f64 {
    match head {
        Head::Bernoulli => {
            let t = raw[0];
            if let Some(g) = grad {
                g[0] = x - sigmoid(t);
            }
            x * t - softplus(t)
        }
        Head::GaussianMixture { components: k } => mixture_log_prob(k, raw, x, grad),
    }
}

fn mixture_log_prob(k: usize, raw: &[f64], x: f64, grad: Option<&mut [f64]>) -> f64 {
    let mut sig = [0.0; MAX_COMPONENTS];
    let mut comp = [0.0; MAX_COMPONENTS];
    let logits = &raw[..k];
    let means = &raw[k..2 * k];
    let scales = &raw[2 * k..3 * k];
    let lse_logits = log_sum_exp(logits);
    for c in 0..k {
        sig[c] = softplus(scales[c]) + SIGMA_MIN;
        let u = (x - means[c]) / sig[c];
        comp[c] = logits[c] - lse_logits - HALF_LN_2PI - sig[c].ln() - 0.5 * u * u;
    }
    let lp = log_sum_exp(&comp[..k]);
    if let Some(g) = grad {
        for c in 0..k {
            let resp = (comp[c] - lp).exp();
            let weight = (logits[c] - lse_logits).exp();
            let diff = x - means[c];
            let s = sig[c];
            g[c] = resp - weight;
            g[k + c] = resp * diff / (s * s);
            g[2 * k + c] = resp * (diff * diff / (s * s * s) - 1.0 / s) * sigmoid(scales[c]);
        }
    }
    lp
}

/// Closed-form `log N(x | mean, var)`.
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}
