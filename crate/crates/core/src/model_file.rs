//! Versioned binary container for a fitted model.
//!
//! Layout (little-endian): magic `OGRID1`, field config JSON, run config
//! echo, dual tree, feature bank, kernel set, decoder weights, log digest.
//! Wall-clock times are left out so equal runs give equal bytes.

use std::path::Path;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::field::{FieldConfig, FieldError, FieldModel};
use crate::train::EpochLog;
use crate::tree::{DualTree, TreeError};

pub const MAGIC: &[u8; 6] = b"OGRID1";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file is malformed: {0}")]
    Decode(#[from] DecodeError),
    #[error("model file config is invalid: {0}")]
    Config(#[from] serde_json::Error),
    #[error("model file tree is invalid: {0}")]
    Tree(#[from] TreeError),
    #[error("model file parameters are invalid: {0}")]
    Field(#[from] FieldError),
    #[error("{0} trailing bytes after the log digest")]
    Trailing(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-epoch losses as stored in the file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDigest {
    pub data_loss: f64,
    pub reg_loss: f64,
    pub discarded_fraction: f64,
}

impl From<&EpochLog> for LogDigest {
    fn from(e: &EpochLog) -> Self {
        Self {
            data_loss: e.data_loss,
            reg_loss: e.reg_loss,
            discarded_fraction: e.discarded_fraction,
        }
    }
}

pub struct ModelFile {
    pub model: FieldModel,
    /// Free-form record of the run configuration, usually JSON.
    pub run_config: String,
    pub log: Vec<LogDigest>,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.buf.extend_from_slice(MAGIC);
        let cfg = serde_json::to_vec(self.model.config()).expect("config serializes");
        w.bytes(&cfg);
        w.bytes(self.run_config.as_bytes());
        self.model.tree().encode(&mut w);
        let p = self.model.params();
        w.f64s(p.features());
        w.f64s(p.kernels());
        w.f64s(p.w1());
        w.f64s(p.b1());
        w.f64s(p.w2());
        w.f64(p.b2());
        w.u32(self.log.len() as u32);
        for e in &self.log {
            w.f64(e.data_loss);
            w.f64(e.reg_loss);
            w.f64(e.discarded_fraction);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelFileError> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC, "magic")?;
        let config: FieldConfig = serde_json::from_slice(r.bytes("field config")?)?;
        config.validate()?;
        let run_config = String::from_utf8(r.bytes("run config")?.to_vec())
            .map_err(|_| DecodeError::Invalid("run config"))?;
        let tree = DualTree::decode(&mut r)?;
        let mut data = Vec::new();
        for what in ["features", "kernels", "w1", "b1", "w2"] {
            data.extend(r.f64s(what)?);
        }
        data.push(r.f64("b2")?);
        let model = FieldModel::from_parts(tree, config, data)?;
        let n = r.u32("log length")? as usize;
        let log = (0..n)
            .map(|_| {
                Ok(LogDigest {
                    data_loss: r.f64("log")?,
                    reg_loss: r.f64("log")?,
                    discarded_fraction: r.f64("log")?,
                })
            })
            .collect::<Result<Vec<_>, DecodeError>>()?;
        if r.remaining() != 0 {
            return Err(ModelFileError::Trailing(r.remaining()));
        }
        Ok(Self { model, run_config, log })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::field::{field_forward, Interpolation};
    use crate::mesh::{sample_surface, shapes};
    use crate::tree::{build_structured_octree, LodSet};

    fn model(cfg: FieldConfig) -> FieldModel {
        let mesh = shapes::torus(0.5, 0.2, 24, 12);
        let pts = sample_surface(&mesh, 3000, 5).unwrap();
        let lods = LodSet::new(vec![2, 3]).unwrap();
        let tree = DualTree::assign_anchors(&build_structured_octree(&pts, &lods).unwrap(), &pts).unwrap().0;
        let mut m = FieldModel::new(tree, cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        m.params_mut().data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let small = FieldConfig {
            features: 4,
            hidden: 8,
            conv_kernel: Some(3),
            ..FieldConfig::default()
        };
        let tri = FieldConfig {
            interpolation: Interpolation::Trilinear,
            conv_kernel: None,
            ..small.clone()
        };
        for cfg in [small, tri] {
            let file = ModelFile {
                model: model(cfg),
                run_config: "{\"seed\":1}".into(),
                log: vec![LogDigest {
                    data_loss: 0.1,
                    reg_loss: 0.2,
                    discarded_fraction: 0.0,
                }],
            };
            let bytes = file.to_bytes();
            let back = ModelFile::from_bytes(&bytes).unwrap();
            assert_eq!(back.to_bytes(), bytes);
            assert_eq!(back.run_config, file.run_config);
            assert_eq!(back.log, file.log);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..500 {
                let x = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                for lod in [2, 3] {
                    let a = field_forward(&file.model, &x, lod);
                    let b = field_forward(&back.model, &x, lod);
                    assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
                }
            }
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let file = ModelFile {
            model: model(FieldConfig {
                features: 2,
                hidden: 4,
                conv_kernel: None,
                ..FieldConfig::default()
            }),
            run_config: String::new(),
            log: vec![],
        };
        let bytes = file.to_bytes();
        assert!(ModelFile::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(ModelFile::from_bytes(b"OGRID2").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(ModelFile::from_bytes(&extra), Err(ModelFileError::Trailing(1))));
        let mut flipped = bytes;
        flipped[10] ^= 0xff;
        assert!(ModelFile::from_bytes(&flipped).is_err());
    }
}
