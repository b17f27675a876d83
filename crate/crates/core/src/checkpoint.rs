//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `ENTAUGCK`, `u32` version, `u8` precision,
//! config text (`u32` length + UTF-8), `u64` completed epochs, weights and
//! optimizer velocity (`u64` count + `f64` values each), cache states
//! (`u64` count + `u64 index, f64 entropy, f64 magnitude, i64 last epoch`),
//! per-epoch records (`u32` length + JSON), then an FNV-1a `u64` over every
//! preceding byte. Augmentation randomness is derived from
//! `(seed, epoch, sample)`, so no generator state needs saving.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::config::Precision;
use crate::error::{Error, Result};
use crate::metrics::RunRecord;
use crate::policy::SampleState;

pub const MAGIC: &[u8; 8] = b"ENTAUGCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// The run configuration in `key=value` form.
    pub config_text: String,
    pub precision: Precision,
    pub completed_epochs: usize,
    pub params: Vec<f64>,
    pub velocity: Vec<f64>,
    pub cache: Vec<SampleState>,
    pub records: Vec<RunRecord>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Checkpoint(reason.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let w = &mut out;
        let io = |e: std::io::Error| bad(e.to_string());
        w.extend_from_slice(MAGIC);
        w.write_u32::<LE>(VERSION).map_err(io)?;
        w.write_u8(match self.precision {
            Precision::F32 => 0,
            Precision::F64 => 1,
        })
        .map_err(io)?;
        w.write_u32::<LE>(self.config_text.len() as u32).map_err(io)?;
        w.extend_from_slice(self.config_text.as_bytes());
        w.write_u64::<LE>(self.completed_epochs as u64).map_err(io)?;
        for values in [&self.params, &self.velocity] {
            w.write_u64::<LE>(values.len() as u64).map_err(io)?;
            for &v in values.iter() {
                w.write_f64::<LE>(v).map_err(io)?;
            }
        }
        w.write_u64::<LE>(self.cache.len() as u64).map_err(io)?;
        for s in &self.cache {
            w.write_u64::<LE>(s.sample_index as u64).map_err(io)?;
            w.write_f64::<LE>(s.norm_entropy).map_err(io)?;
            w.write_f64::<LE>(s.mag).map_err(io)?;
            w.write_i64::<LE>(s.last_update_epoch).map_err(io)?;
        }
        let records = serde_json::to_vec(&self.records)?;
        w.write_u32::<LE>(records.len() as u32).map_err(io)?;
        w.extend_from_slice(&records);
        let sum = fnv1a(w);
        w.write_u64::<LE>(sum).map_err(io)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
        if fnv1a(body) != stored {
            return Err(bad("checksum mismatch; the file is truncated or corrupted"));
        }
        let mut r = Cursor::new(&body[MAGIC.len()..]);
        let eof = |e: std::io::Error| bad(format!("truncated checkpoint: {e}"));
        let version = r.read_u32::<LE>().map_err(eof)?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let precision = match r.read_u8().map_err(eof)? {
            0 => Precision::F32,
            1 => Precision::F64,
            t => return Err(bad(format!("unknown precision tag {t}"))),
        };
        let remaining = |r: &Cursor<&[u8]>| r.get_ref().len() as u64 - r.position();
        let len = r.read_u32::<LE>().map_err(eof)? as u64;
        if len > remaining(&r) {
            return Err(bad("config text overruns the file"));
        }
        let mut text = vec![0u8; len as usize];
        r.read_exact(&mut text).map_err(eof)?;
        let config_text = String::from_utf8(text).map_err(|_| bad("config text is not UTF-8"))?;
        let completed_epochs = r.read_u64::<LE>().map_err(eof)? as usize;
        let read_f64s = |r: &mut Cursor<&[u8]>| -> Result<Vec<f64>> {
            let n = r.read_u64::<LE>().map_err(eof)?;
            if n.saturating_mul(8) > remaining(r) {
                return Err(bad("value block overruns the file"));
            }
            (0..n).map(|_| r.read_f64::<LE>().map_err(eof)).collect()
        };
        let params = read_f64s(&mut r)?;
        let velocity = read_f64s(&mut r)?;
        let n = r.read_u64::<LE>().map_err(eof)?;
        if n.saturating_mul(32) > remaining(&r) {
            return Err(bad("cache block overruns the file"));
        }
        let cache = (0..n)
            .map(|_| {
                Ok(SampleState {
                    sample_index: r.read_u64::<LE>().map_err(eof)? as usize,
                    norm_entropy: r.read_f64::<LE>().map_err(eof)?,
                    mag: r.read_f64::<LE>().map_err(eof)?,
                    last_update_epoch: r.read_i64::<LE>().map_err(eof)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let len = r.read_u32::<LE>().map_err(eof)? as u64;
        if len != remaining(&r) {
            return Err(bad("record block length does not match the file"));
        }
        let records = serde_json::from_slice(&body[MAGIC.len() + r.position() as usize..])?;
        Ok(Self {
            config_text,
            precision,
            completed_epochs,
            params,
            velocity,
            cache,
            records,
        })
    }

    /// Writes via a temporary file and rename, so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
