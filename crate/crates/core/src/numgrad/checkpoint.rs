//! Checkpoint files.
//!
//! Layout: the magic line `HSACCKPT`, one line of JSON manifest (format
//! version, config text and its SHA-256 digest, array shapes and offsets,
//! optimizer scalars), then every array as little-endian `f64` in manifest
//! order. Values round-trip bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CheckpointError;

use super::adam::{AdamHyper, AdamState};
use super::params::ParameterSet;
use super::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8] = b"HSACCKPT\n";

/// Hex SHA-256 of a config's canonical text.
pub fn config_digest(config_text: &str) -> String {
    let hash = Sha256::digest(config_text.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub config_text: String,
    pub params: BTreeMap<String, ParameterSet>,
    pub optimizers: BTreeMap<String, AdamState>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    group: String,
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimizerEntry {
    name: String,
    step_count: u64,
    hyper: AdamHyper,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config_digest: String,
    config: String,
    arrays: Vec<ArrayEntry>,
    optimizers: Vec<OptimizerEntry>,
    payload_scalars: usize,
}

fn moment_group(opt: &str, which: &str) -> String {
    format!("optimizer:{opt}:{which}")
}

impl Checkpoint {
    pub fn digest(&self) -> String {
        config_digest(&self.config_text)
    }

    fn all_groups(&self) -> Vec<(String, &ParameterSet)> {
        let mut groups: Vec<(String, &ParameterSet)> = self.params.iter().map(|(k, v)| (k.clone(), v)).collect();
        for (name, opt) in &self.optimizers {
            groups.push((moment_group(name, "m"), &opt.first_moment));
            groups.push((moment_group(name, "v"), &opt.second_moment));
        }
        groups
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut arrays = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        let mut offset = 0;
        for (group, set) in self.all_groups() {
            for (name, t) in set.iter() {
                arrays.push(ArrayEntry {
                    group: group.clone(),
                    name: name.to_string(),
                    shape: [t.rows(), t.cols()],
                    offset,
                });
                offset += t.len();
                for v in t.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let manifest = Manifest {
            version: FORMAT_VERSION,
            config_digest: self.digest(),
            config: self.config_text.clone(),
            arrays,
            optimizers: self
                .optimizers
                .iter()
                .map(|(name, o)| OptimizerEntry {
                    name: name.clone(),
                    step_count: o.step_count,
                    hyper: o.hyper,
                })
                .collect(),
            payload_scalars: offset,
        };
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(serde_json::to_string(&manifest).expect("manifest serializes").as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&payload);
        out
    }

    /// Parses a checkpoint; with `expected_digest` set, the stored config
    /// digest must equal it.
    pub fn from_bytes(bytes: &[u8], expected_digest: Option<&str>) -> Result<Self, CheckpointError> {
        let malformed = |m: &str| CheckpointError::Malformed(m.to_string());
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| malformed("missing magic line"))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed("manifest line is not terminated"))?;
        let manifest: Manifest =
            serde_json::from_slice(&rest[..nl]).map_err(|e| CheckpointError::Malformed(format!("manifest: {e}")))?;
        if manifest.version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: manifest.version,
                expected: FORMAT_VERSION,
            });
        }
        if config_digest(&manifest.config) != manifest.config_digest {
            return Err(malformed("stored config does not hash to the stored digest"));
        }
        if let Some(expected) = expected_digest {
            if expected != manifest.config_digest {
                return Err(CheckpointError::DigestMismatch {
                    stored: manifest.config_digest,
                    expected: expected.to_string(),
                });
            }
        }
        let payload = &rest[nl + 1..];
        if payload.len() != manifest.payload_scalars * 8 {
            return Err(CheckpointError::Malformed(format!(
                "payload has {} bytes, manifest declares {} scalars",
                payload.len(),
                manifest.payload_scalars
            )));
        }
        let mut groups: BTreeMap<String, ParameterSet> = BTreeMap::new();
        for a in &manifest.arrays {
            let n = a.shape[0] * a.shape[1];
            if a.offset + n > manifest.payload_scalars {
                return Err(malformed("array extends past the payload"));
            }
            let data: Vec<f64> = payload[a.offset * 8..(a.offset + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            groups
                .entry(a.group.clone())
                .or_default()
                .insert_unchecked(a.name.clone(), Tensor::new(a.shape[0], a.shape[1], data));
        }
        let mut optimizers = BTreeMap::new();
        for o in manifest.optimizers {
            let first = groups.remove(&moment_group(&o.name, "m")).unwrap_or_default();
            let second = groups.remove(&moment_group(&o.name, "v")).unwrap_or_default();
            if !first.is_congruent(&second) {
                return Err(malformed("optimizer moments are not congruent"));
            }
            optimizers.insert(
                o.name,
                AdamState {
                    step_count: o.step_count,
                    first_moment: first,
                    second_moment: second,
                    hyper: o.hyper,
                },
            );
        }
        Ok(Self {
            config_text: manifest.config,
            params: groups,
            optimizers,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, expected_digest: Option<&str>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CheckpointError::Missing(path.display().to_string()),
            _ => CheckpointError::Io(e),
        })?;
        Self::from_bytes(&bytes, expected_digest)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected_digest: Option<&str>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::load(path, expected_digest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::{init_params, Activation, MlpConfig};

    fn sample() -> Checkpoint {
        let cfg = MlpConfig::new(3, &[5], 2, Activation::Tanh);
        let p = init_params(&cfg, 3).unwrap();
        let mut opt = AdamState::new(&p, AdamHyper::default());
        let mut q = p.clone();
        let g = p.clone();
        opt.step(&mut q, &g).unwrap();
        let mut ck = Checkpoint {
            config_text: "seed = 3\n".into(),
            ..Default::default()
        };
        ck.params.insert("actor".into(), q);
        ck.optimizers.insert("actor".into(), opt);
        ck
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Some(&ck.digest())).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let bytes = sample().to_bytes();
        for cut in [3, 20, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut], None),
                Err(CheckpointError::Malformed(_))
            ));
        }
    }

    #[test]
    fn changed_config_is_a_digest_mismatch() {
        let ck = sample();
        let other = config_digest("seed = 4\n");
        assert!(matches!(
            Checkpoint::from_bytes(&ck.to_bytes(), Some(&other)),
            Err(CheckpointError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn unknown_version_is_reported() {
        let bytes = sample().to_bytes();
        let s = String::from_utf8_lossy(&bytes).replacen("\"version\":1", "\"version\":9", 1);
        // Lossy conversion may alter the binary payload, which is irrelevant
        // because the version is checked first.
        assert!(matches!(
            Checkpoint::from_bytes(s.as_bytes(), None),
            Err(CheckpointError::VersionMismatch { found: 9, .. })
        ));
    }
}
