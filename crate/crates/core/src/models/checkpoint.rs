//! Checkpoint container.
//!
//! Layout: `b"VRFAMCKP"`, `u32` format version, `u64` manifest length, the JSON
//! manifest, then every tensor as little-endian `f32` in manifest order. All
//! integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VRFAMCKP";

/// What a checkpoint was trained on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainedOn {
    pub passcode: String,
    pub window_size: usize,
    pub split_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorIndex {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in elements.
    offset: usize,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: ModelSpec,
    trained_on: TrainedOn,
    tensors: Vec<TensorIndex>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub trained_on: TrainedOn,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_model(model: &Model, trained_on: TrainedOn) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec: model.spec().clone(),
            trained_on,
            params: model.params().clone(),
        }
    }

    /// Rebuilds the model, checking that the stored tensors match the spec's layer inventory.
    pub fn to_model(&self) -> Result<Model> {
        Model::from_parts(self.spec.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0;
        for e in self.params.entries() {
            tensors.push(TensorIndex {
                name: e.name.clone(),
                shape: e.value.shape().to_vec(),
                offset,
                trainable: e.trainable,
            });
            offset += e.value.numel();
        }
        let manifest = Manifest {
            format_version: self.format_version,
            spec: self.spec.clone(),
            trained_on: self.trained_on.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(20 + json.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for e in self.params.entries() {
            for v in e.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (this build reads {CHECKPOINT_FORMAT_VERSION})"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let manifest_end = 20usize.checked_add(len).filter(|&e| e <= bytes.len());
        let manifest_end = manifest_end.ok_or_else(|| Error::Format("truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[20..manifest_end])
            .map_err(|e| Error::Format(format!("invalid manifest: {e}")))?;
        if manifest.format_version != version {
            return Err(Error::Format("manifest and header disagree on the format version".into()));
        }
        let payload = &bytes[manifest_end..];
        if payload.len() % 4 != 0 {
            return Err(Error::Format("payload length is not a whole number of f32 values".into()));
        }
        let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let mut params = ParamStore::new();
        let mut expected_offset = 0;
        for t in manifest.tensors {
            let n: usize = t.shape.iter().product();
            if t.offset != expected_offset || t.offset + n > values.len() {
                return Err(Error::Format(format!("tensor `{}` lies outside the payload", t.name)));
            }
            let value = Tensor::new(t.shape, values[t.offset..t.offset + n].to_vec())
                .map_err(|e| Error::Format(format!("tensor `{}`: {e}", t.name)))?;
            params
                .add(t.name.clone(), value, t.trainable)
                .map_err(|_| Error::Format(format!("tensor `{}` appears more than once", t.name)))?;
            expected_offset += n;
        }
        if expected_offset != values.len() {
            return Err(Error::Format(format!(
                "payload holds {} values, manifest indexes {expected_offset}",
                values.len()
            )));
        }
        Ok(Checkpoint { format_version: version, spec: manifest.spec, trained_on: manifest.trained_on, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn trained_on() -> TrainedOn {
        TrainedOn { passcode: "1379".into(), window_size: 20, split_seed: 7 }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for kind in ModelKind::ALL {
            let model = Model::build(&ModelSpec::new(kind, 20, 3), 3).unwrap();
            let ck = Checkpoint::from_model(&model, trained_on());
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            assert_eq!(back.spec, ck.spec);
            assert_eq!(back.trained_on, ck.trained_on);
            let restored = back.to_model().unwrap();
            for (a, b) in model.params().entries().iter().zip(restored.params().entries()) {
                assert_eq!(a.name, b.name);
                assert_eq!(a.trainable, b.trainable);
                let (ab, bb): (Vec<u32>, Vec<u32>) = (
                    a.value.data().iter().map(|v| v.to_bits()).collect(),
                    b.value.data().iter().map(|v| v.to_bits()).collect(),
                );
                assert_eq!(ab, bb);
            }
        }
    }

    #[test]
    fn corruption_is_reported() {
        let model = Model::build(&ModelSpec::new(ModelKind::Mlp, 20, 3), 3).unwrap();
        let bytes = Checkpoint::from_model(&model, trained_on()).to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes;
        bad[8] = 99;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn inventory_mismatch_is_rejected() {
        let model = Model::build(&ModelSpec::new(ModelKind::Mlp, 20, 3), 3).unwrap();
        let mut ck = Checkpoint::from_model(&model, trained_on());
        ck.spec = ModelSpec::new(ModelKind::Mlp, 30, 3);
        assert!(matches!(ck.to_model(), Err(Error::Format(_))));
    }
}
