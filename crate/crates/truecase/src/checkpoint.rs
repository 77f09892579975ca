//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "TCSE"
//! version u32      format version (currently 1)
//! meta    u32 length + that many bytes of UTF-8 JSON
//!         (hyperparameters, vocabulary characters in id order,
//!          best dev F1, epoch)
//! count   u32      number of named tensors
//! tensor  u32 name length, name bytes, u32 rank, u32 dims...,
//!         f32 little-endian data (row-major)
//! crc     u32      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Training values are rounded from f64 to f32 on save; loading widens
//! them back. [`crate::train::train`] rounds the returned parameters the
//! same way, so predictions before saving and after reloading agree
//! bit for bit.

use std::fs;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

const MAGIC: [u8; 4] = *b"TCSE";
const VERSION: u32 = 1;

/// A trained model ready for inference or further inspection.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub best_f1: f64,
    pub epoch: u32,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: String,
    best_f1: f64,
    epoch: u32,
}

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320), table built at compile
// time.
const CRC_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut bit = 0;
        while bit < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            bit += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = CRC_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

impl Checkpoint {
    /// Serializes to the binary format described in the module docs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            config: self.params.config.clone(),
            vocab: self.vocab.chars().iter().collect(),
            best_f1: self.best_f1,
            epoch: self.epoch,
        };
        let meta_json = serde_json::to_vec(&meta).expect("metadata serialization");
        let named = self.params.named();

        let mut buf = Vec::with_capacity(64 + meta_json.len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta_json);
        buf.extend_from_slice(&(named.len() as u32).to_le_bytes());
        for (name, tensor) in named {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &d in tensor.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let crc = crc32(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    /// Parses and verifies a checkpoint. The CRC is checked before any
    /// field is trusted, so corruption anywhere in the file is caught
    /// up front and no partial model escapes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(Error::CorruptCheckpoint { field: "length" });
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32(body) != stored {
            return Err(Error::CorruptCheckpoint { field: "crc" });
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.bytes(4, "magic")? != MAGIC {
            return Err(Error::CorruptCheckpoint { field: "magic" });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta_bytes = r.bytes(meta_len, "metadata")?;
        let meta: Meta = serde_json::from_slice(meta_bytes)
            .map_err(|_| Error::CorruptCheckpoint { field: "metadata" })?;
        let vocab = Vocabulary::from_chars(meta.vocab.chars());
        if vocab.size() != meta.config.vocab_size {
            return Err(Error::CorruptCheckpoint {
                field: "vocabulary size",
            });
        }

        let mut params = ModelParams::zeros(meta.config.clone())?;
        let count = r.u32("tensor count")? as usize;
        {
            let slots = params.named_mut();
            if count != slots.len() {
                return Err(Error::CorruptCheckpoint {
                    field: "tensor count",
                });
            }
            for (name, tensor) in slots {
                let name_len = r.u32("tensor name length")? as usize;
                let got = r.bytes(name_len, "tensor name")?;
                if got != name.as_bytes() {
                    return Err(Error::CorruptCheckpoint {
                        field: "tensor name",
                    });
                }
                let rank = r.u32("tensor rank")? as usize;
                if rank != tensor.shape().len() {
                    return Err(Error::CorruptCheckpoint {
                        field: "tensor rank",
                    });
                }
                for expect in tensor.shape().to_vec() {
                    if r.u32("tensor dims")? as usize != expect {
                        return Err(Error::CorruptCheckpoint {
                            field: "tensor dims",
                        });
                    }
                }
                let data = r.bytes(tensor.len() * 4, "tensor data")?;
                for (chunk, slot) in data.chunks_exact(4).zip(tensor.data_mut()) {
                    *slot = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
                }
            }
        }
        if r.pos != body.len() {
            return Err(Error::CorruptCheckpoint {
                field: "trailing bytes",
            });
        }
        Ok(Checkpoint {
            params,
            vocab,
            best_f1: meta.best_f1,
            epoch: meta.epoch,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptCheckpoint { field });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4, field)?.try_into().unwrap()))
    }
}

impl ModelParams {
    /// All-zero parameters of the given architecture; the loader fills
    /// them in.
    pub fn zeros(config: ModelConfig) -> Result<ModelParams> {
        let mut p = ModelParams::init(config, 0)?;
        for (_, t) in p.named_mut() {
            t.fill(0.0);
        }
        Ok(p)
    }
}
