//! Compact on-disk format for pruned models.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "FSPW"
//! 4       4           format version (u32 LE)
//! 8       8           parameter count P (u64 LE)
//! 16      8           sparsity (f64 LE)
//! 24      32          SHA-256 digest of the model spec JSON
//! 56      8           stored value count (u64 LE), equals the mask popcount
//! 64      ceil(P/8)   mask, parameter 0 in the least-significant bit of the first byte
//! ...     4 * count   kept values (f32 LE) in ascending parameter order
//! ```

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::nn::{FlatParams, ModelSpec};
use crate::sparsify::PruneMask;

pub const MAGIC: [u8; 4] = *b"FSPW";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone)]
pub struct SparseModelFile {
    pub param_count: u64,
    pub sparsity: f64,
    pub spec_digest: [u8; 32],
    pub mask: PruneMask,
    /// Values of kept parameters in ascending index order.
    pub values: Vec<f32>,
}

impl SparseModelFile {
    pub fn from_model(spec: &ModelSpec, params: &[f32], mask: &PruneMask) -> Result<Self> {
        if mask.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                actual: mask.len(),
                context: "mask",
            });
        }
        Ok(SparseModelFile {
            param_count: params.len() as u64,
            sparsity: mask.sparsity(),
            spec_digest: spec.digest(),
            mask: mask.clone(),
            values: mask.iter_ones().map(|i| params[i]).collect(),
        })
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.len()
    }

    /// Dense parameter vector with pruned entries set to zero.
    pub fn to_params(&self) -> FlatParams {
        let mut p = vec![0.0f32; self.param_count as usize];
        for (i, v) in self.mask.iter_ones().zip(&self.values) {
            p[i] = *v;
        }
        FlatParams(p)
    }

    pub fn check_spec(&self, spec: &ModelSpec) -> Result<(), FormatError> {
        if spec.digest() == self.spec_digest {
            Ok(())
        } else {
            Err(FormatError::SpecDigestMismatch)
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + (self.param_count as usize).div_ceil(8) + 4 * self.values.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.param_count.to_le_bytes());
        out.extend_from_slice(&self.sparsity.to_le_bytes());
        out.extend_from_slice(&self.spec_digest);
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.mask.to_packed_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(FormatError::Truncated {
                    needed: n,
                    available: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4)?;
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        need(8)?;
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(FormatError::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        need(HEADER_LEN)?;
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let param_count = u64_at(8);
        let sparsity = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let spec_digest: [u8; 32] = bytes[24..56].try_into().unwrap();
        let declared = u64_at(56);

        let mask_len = usize::try_from(param_count)
            .ok()
            .and_then(|p| p.checked_add(7))
            .map(|p| p / 8)
            .ok_or(FormatError::Truncated {
                needed: usize::MAX,
                available: bytes.len(),
            })?;
        let mask_end = HEADER_LEN.saturating_add(mask_len);
        need(mask_end)?;
        let mask = PruneMask::from_packed_bytes(param_count as usize, &bytes[HEADER_LEN..mask_end])
            .expect("mask slice sized from the header");
        if declared != mask.count_ones() as u64 {
            return Err(FormatError::PopcountMismatch {
                declared,
                popcount: mask.count_ones() as u64,
            });
        }
        let end = mask_end + 4 * mask.count_ones();
        need(end)?;
        if bytes.len() > end {
            return Err(FormatError::TrailingBytes(bytes.len() - end));
        }
        let values = bytes[mask_end..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SparseModelFile {
            param_count,
            sparsity,
            spec_digest,
            mask,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

pub fn save_model(
    path: &Path,
    spec: &ModelSpec,
    params: &[f32],
    mask: &PruneMask,
) -> Result<SparseModelFile> {
    let f = SparseModelFile::from_model(spec, params, mask)?;
    f.save(path)?;
    Ok(f)
}

pub fn load_model(path: &Path) -> Result<SparseModelFile> {
    SparseModelFile::load(path)
}
