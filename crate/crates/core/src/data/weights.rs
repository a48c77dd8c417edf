use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::DataError;

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"TIWT";
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightLayer {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Named parameter tensors of a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub format_version: u32,
    pub layers: Vec<WeightLayer>,
}

impl ModelWeights {
    pub fn new(layers: Vec<WeightLayer>) -> Result<Self, DataError> {
        let w = ModelWeights {
            format_version: WEIGHTS_FORMAT_VERSION,
            layers,
        };
        w.check_shapes()?;
        Ok(w)
    }

    pub fn layer(&self, name: &str) -> Option<&WeightLayer> {
        self.layers.iter().find(|l| l.name == name)
    }

    fn check_shapes(&self) -> Result<(), DataError> {
        for layer in &self.layers {
            let expected: usize = layer.shape.iter().product();
            if expected != layer.values.len() {
                return Err(DataError::Schema(format!(
                    "layer {}: shape {:?} needs {expected} values, has {}",
                    layer.name,
                    layer.shape,
                    layer.values.len()
                )));
            }
        }
        Ok(())
    }

    /// Serializes to the layout documented in `docs/weights-format.md`.
    pub fn to_bytes(&self) -> Result<Vec<u8>, DataError> {
        self.check_shapes()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.name.len() as u32).to_le_bytes());
            out.extend_from_slice(layer.name.as_bytes());
            out.extend_from_slice(&(layer.shape.len() as u32).to_le_bytes());
            for &d in &layer.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &layer.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(DataError::Corruption("bad magic".into()));
        }
        let format_version = cur.u32()?;
        if format_version != WEIGHTS_FORMAT_VERSION {
            return Err(DataError::Version {
                found: format_version,
                supported: WEIGHTS_FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 + DIGEST_LEN {
            return Err(DataError::Corruption("payload truncated".into()));
        }
        let body_len = bytes.len() - DIGEST_LEN;
        if Sha256::digest(&bytes[..body_len]).as_slice() != &bytes[body_len..] {
            return Err(DataError::Corruption("checksum mismatch (truncated or altered)".into()));
        }
        let mut cur = Cursor {
            bytes: &bytes[..body_len],
            pos: 12,
        };
        let count = cur.u32_at(8)?;
        let mut layers = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| DataError::Corruption("layer name is not UTF-8".into()))?;
            let ndim = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u64()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| DataError::Corruption("shape overflow".into()))?;
            let raw = cur.take(n.checked_mul(8).ok_or_else(|| {
                DataError::Corruption("shape overflow".into())
            })?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            layers.push(WeightLayer {
                name,
                shape,
                values,
            });
        }
        if cur.pos != cur.bytes.len() {
            return Err(DataError::Corruption("trailing bytes after last layer".into()));
        }
        Ok(ModelWeights {
            format_version,
            layers,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DataError::Corruption("unexpected end of payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u32_at(&self, offset: usize) -> Result<u32, DataError> {
        self.bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| DataError::Corruption("unexpected end of payload".into()))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, weights.to_bytes()?).map_err(|e| DataError::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    ModelWeights::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_layers() -> ModelWeights {
        ModelWeights::new(vec![
            WeightLayer {
                name: "conv".into(),
                shape: vec![3, 2, 4],
                values: (0..24).map(|i| (i as f64).sin() * 1e-3).collect(),
            },
            WeightLayer {
                name: "bias".into(),
                shape: vec![4],
                values: vec![f64::MIN_POSITIVE, -0.0, 1.0 / 3.0, f64::MAX],
            },
            WeightLayer {
                name: "dense".into(),
                shape: vec![2, 2],
                values: vec![0.1, 0.2, 0.3, 0.4],
            },
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let w = three_layers();
        save_weights(&w, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.format_version, w.format_version);
        for (a, b) in w.layers.iter().zip(&back.layers) {
            let bits_a: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let bytes = three_layers().to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 8];
        assert!(matches!(
            ModelWeights::from_bytes(cut),
            Err(DataError::Corruption(_))
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut w = three_layers();
        w.format_version = 999;
        let bytes = w.to_bytes().unwrap();
        assert!(matches!(
            ModelWeights::from_bytes(&bytes),
            Err(DataError::Version { found: 999, .. })
        ));
    }

    #[test]
    fn inconsistent_shape_is_refused() {
        let err = ModelWeights::new(vec![WeightLayer {
            name: "x".into(),
            shape: vec![2, 3],
            values: vec![0.0; 5],
        }]);
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_weights_round_trip(values in proptest::collection::vec(any::<f64>(), 0..64),
                                        name in "[a-z.]{1,12}") {
            let w = ModelWeights::new(vec![WeightLayer {
                name,
                shape: vec![values.len()],
                values,
            }]).unwrap();
            let back = ModelWeights::from_bytes(&w.to_bytes().unwrap()).unwrap();
            let a: Vec<u64> = w.layers[0].values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.layers[0].values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(&w.layers[0].name, &back.layers[0].name);
        }
    }
}
