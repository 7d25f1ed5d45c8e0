//! Binary checkpoint format.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "VIBNET01"
//! 8       4     format version (u32 LE, currently 1)
//! 12      4     descriptor length N (u32 LE)
//! 16      N     architecture descriptor (UTF-8 JSON)
//! 16+N    8     parameter count P (u64 LE)
//! 24+N    8*P   parameters (f64 LE, canonical order)
//! ```

use std::path::Path;

use super::network::{Architecture, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VIBNET01";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Network {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let descriptor = serde_json::to_vec(self.architecture()).expect("architecture serializes");
        let params = self.params();
        let mut out = Vec::with_capacity(24 + descriptor.len() + 8 * params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
        out.extend_from_slice(&descriptor);
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint; `origin` is only used in error messages.
    pub fn from_checkpoint_bytes(bytes: &[u8], origin: &Path) -> Result<Network> {
        let err = |offset: usize, msg: &str| Error::parse(origin, offset as u64, msg);
        let take = |offset: usize, len: usize| -> Result<&[u8]> {
            bytes
                .get(offset..offset + len)
                .ok_or_else(|| err(offset, "unexpected end of checkpoint"))
        };
        if take(0, 8)? != CHECKPOINT_MAGIC {
            return Err(err(0, "bad checkpoint magic"));
        }
        let version = u32::from_le_bytes(take(8, 4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version(format!(
                "checkpoint {} has format version {version}, expected {CHECKPOINT_VERSION}",
                origin.display()
            )));
        }
        let desc_len = u32::from_le_bytes(take(12, 4)?.try_into().unwrap()) as usize;
        let architecture: Architecture = serde_json::from_slice(take(16, desc_len)?)
            .map_err(|e| err(16, &format!("invalid architecture descriptor: {e}")))?;
        let count_at = 16 + desc_len;
        let count = u64::from_le_bytes(take(count_at, 8)?.try_into().unwrap()) as usize;
        let data_at = count_at + 8;
        let payload = take(data_at, count.checked_mul(8).ok_or_else(|| err(count_at, "parameter count overflows"))?)?;
        if bytes.len() != data_at + payload.len() {
            return Err(err(data_at + payload.len(), "trailing bytes after parameters"));
        }
        let params: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut net = Network::new(architecture, 0)?;
        if net.param_count() != count {
            return Err(err(count_at, "parameter count does not match architecture"));
        }
        net.set_params(&params)?;
        Ok(net)
    }
}
