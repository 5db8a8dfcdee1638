//! Binary model container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes  "SUPMADE\0"
//! version      u32
//! dim          u32
//! hidden       u32
//! head         u8       0 = gaussian mixture, 1 = bernoulli
//! components   u32      0 for bernoulli
//! n_orderings  u32
//! n_masks      u32
//! mask_seed    u64
//! stats_ref    u32 length + UTF-8 bytes (norm-stats file name)
//! n_params     u64
//! params       n_params x f64
//! ```
//!
//! Masks are not stored; they are rebuilt from `(dim, hidden, n_orderings,
//! n_masks, mask_seed)`.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{build_masks, Head, MadeParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SUPMADE\0";
pub const FORMAT_VERSION: u32 = 1;

/// A model together with the name of the norm-stats file it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: MadeParams,
    pub norm_stats: String,
}

fn malformed(e: std::io::Error) -> Error {
    Error::MalformedModel(e.to_string())
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let masks = p.masks();
        let mut out = Vec::with_capacity(64 + 8 * p.n_params());
        out.extend_from_slice(MAGIC);
        // writes into a Vec cannot fail
        out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
        out.write_u32::<LittleEndian>(masks.dim() as u32).unwrap();
        out.write_u32::<LittleEndian>(masks.hidden() as u32).unwrap();
        let (tag, k) = match p.head() {
            Head::GaussianMixture { components } => (0u8, components as u32),
            Head::Bernoulli => (1u8, 0),
        };
        out.write_u8(tag).unwrap();
        out.write_u32::<LittleEndian>(k).unwrap();
        out.write_u32::<LittleEndian>(masks.n_orderings() as u32).unwrap();
        out.write_u32::<LittleEndian>(masks.n_masks() as u32).unwrap();
        out.write_u64::<LittleEndian>(masks.seed()).unwrap();
        out.write_u32::<LittleEndian>(self.norm_stats.len() as u32).unwrap();
        out.extend_from_slice(self.norm_stats.as_bytes());
        out.write_u64::<LittleEndian>(p.n_params() as u64).unwrap();
        for &w in p.theta() {
            out.write_f64::<LittleEndian>(w).unwrap();
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(malformed)?;
        if &magic != MAGIC {
            return Err(Error::MalformedModel("bad magic".into()));
        }
        let version = cur.read_u32::<LittleEndian>().map_err(malformed)?;
        if version != FORMAT_VERSION {
            return Err(Error::MalformedModel(format!("unsupported version {version}")));
        }
        let dim = cur.read_u32::<LittleEndian>().map_err(malformed)? as usize;
        let hidden = cur.read_u32::<LittleEndian>().map_err(malformed)? as usize;
        let tag = cur.read_u8().map_err(malformed)?;
        let k = cur.read_u32::<LittleEndian>().map_err(malformed)? as usize;
        let head = match tag {
            0 => Head::GaussianMixture { components: k },
            1 => Head::Bernoulli,
            t => return Err(Error::MalformedModel(format!("unknown head tag {t}"))),
        };
        let n_orderings = cur.read_u32::<LittleEndian>().map_err(malformed)? as usize;
        let n_masks = cur.read_u32::<LittleEndian>().map_err(malformed)? as usize;
        let seed = cur.read_u64::<LittleEndian>().map_err(malformed)?;
        let len = cur.read_u32::<LittleEndian>().map_err(malformed)? as usize;
        let mut name = vec![0u8; len];
        cur.read_exact(&mut name).map_err(malformed)?;
        let norm_stats = String::from_utf8(name).map_err(|e| Error::MalformedModel(e.to_string()))?;
        let n = cur.read_u64::<LittleEndian>().map_err(malformed)? as usize;
        let remaining = bytes.len() - cur.position() as usize;
        if remaining != n * 8 {
            return Err(Error::MalformedModel(format!(
                "expected {n} parameters, found {} bytes",
                remaining
            )));
        }
        let mut theta = vec![0.0; n];
        cur.read_f64_into::<LittleEndian>(&mut theta).map_err(malformed)?;
        let masks = build_masks(dim, hidden, n_orderings, n_masks, seed)?;
        let params = MadeParams::from_parts(masks, head, theta)?;
        Ok(ModelFile { params, norm_stats })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}
