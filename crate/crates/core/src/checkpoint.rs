//! `.nivel.json` checkpoint files.
//!
//! A JSON document whose tensors are base64 blobs of little-endian `f64`,
//! followed by a CRC-32 over the concatenated blob bytes. Floats never pass
//! through decimal text, so a save/load cycle is bit-exact.
//!
//! ```text
//! {
//!   "magic": "NIVEL-CKPT",
//!   "version": 1,
//!   "meta": { "stage", "iteration", "seed", "config" },
//!   "field": { "depth", "width", "layers", "octaves", "leaky_slope",
//!              "encoding_layout", "layer_dims", "weights": [b64], "biases": [b64] },
//!   "palette": b64,        // (L+1)·3 values, background last
//!   "crc32": "xxxxxxxx"    // over weights, biases, palette blobs in order
//! }
//! ```

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::compositor::Palette;
use crate::error::{Error, Result};
use crate::field::{Architecture, EncodingConfig, FieldParams, Mlp};

pub const MAGIC: &str = "NIVEL-CKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "nivel.json";
pub const ENCODING_LAYOUT: &str = "sin-x,sin-y,cos-x,cos-y";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub stage: String,
    pub iteration: u64,
    pub seed: u64,
    /// Echo of the run configuration that produced the checkpoint.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub field: FieldParams,
    pub palette: Palette,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct FileRepr {
    magic: String,
    version: u32,
    meta: CheckpointMeta,
    field: FieldRepr,
    palette: String,
    crc32: String,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    depth: usize,
    width: usize,
    layers: usize,
    octaves: usize,
    leaky_slope: f64,
    encoding_layout: String,
    layer_dims: Vec<(usize, usize)>,
    weights: Vec<String>,
    biases: Vec<String>,
}

fn to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!("blob length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn decode_blob(b64: &str) -> Result<Vec<u8>> {
    STANDARD.decode(b64).map_err(|e| Error::Format(format!("bad base64: {e}")))
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        self.field.validate()?;
        self.palette.validate()?;
        if self.palette.layers() != self.field.layers() {
            return Err(Error::DimensionMismatch("palette and field layer counts differ".into()));
        }
        let mut crc = crc32fast::Hasher::new();
        let mut blob = |values: &[f64]| {
            let bytes = to_bytes(values);
            crc.update(&bytes);
            STANDARD.encode(bytes)
        };
        let net = &self.field.net;
        let weights: Vec<String> = net.weights.iter().map(|w| blob(w)).collect();
        let biases: Vec<String> = net.biases.iter().map(|b| blob(b)).collect();
        let palette = blob(&self.palette.flat());
        let arch = net.arch;
        let repr = FileRepr {
            magic: MAGIC.into(),
            version: FORMAT_VERSION,
            meta: self.meta.clone(),
            field: FieldRepr {
                depth: arch.depth,
                width: arch.width,
                layers: arch.outputs,
                octaves: arch.encoding.octaves,
                leaky_slope: arch.leaky_slope,
                encoding_layout: ENCODING_LAYOUT.into(),
                layer_dims: arch.layer_dims(),
                weights,
                biases,
            },
            palette,
            crc32: format!("{:08x}", crc.finalize()),
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("not JSON: {e}")))?;
        if value.get("magic").and_then(|m| m.as_str()) != Some(MAGIC) {
            return Err(Error::Format("missing or wrong magic header".into()));
        }
        let repr: FileRepr = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
        if repr.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                repr.version
            )));
        }
        let f = &repr.field;
        if f.encoding_layout != ENCODING_LAYOUT {
            return Err(Error::Format(format!("unknown encoding layout {:?}", f.encoding_layout)));
        }

        let mut crc = crc32fast::Hasher::new();
        let mut read = |b64: &str| -> Result<Vec<f64>> {
            let bytes = decode_blob(b64)?;
            crc.update(&bytes);
            from_bytes(&bytes)
        };
        let weights = f.weights.iter().map(|w| read(w)).collect::<Result<Vec<_>>>()?;
        let biases = f.biases.iter().map(|b| read(b)).collect::<Result<Vec<_>>>()?;
        let palette_flat = read(&repr.palette)?;
        let actual = format!("{:08x}", crc.finalize());
        if actual != repr.crc32 {
            return Err(Error::Format(format!("checksum mismatch: stored {} computed {actual}", repr.crc32)));
        }

        let arch = Architecture {
            depth: f.depth,
            width: f.width,
            outputs: f.layers,
            encoding: EncodingConfig::new(f.octaves).map_err(|e| Error::Invariant(e.to_string()))?,
            leaky_slope: f.leaky_slope,
        };
        arch.validate().map_err(|e| Error::Invariant(e.to_string()))?;
        if f.layer_dims.first().map(|d| d.0) != Some(arch.encoding.dim()) {
            return Err(Error::Invariant(format!(
                "recorded {} octaves need fan-in {}, first weight matrix has {:?}",
                f.octaves,
                arch.encoding.dim(),
                f.layer_dims.first().map(|d| d.0)
            )));
        }
        if f.layer_dims != arch.layer_dims() {
            return Err(Error::Invariant(format!(
                "layer dims {:?} disagree with depth {} width {} layers {}",
                f.layer_dims, f.depth, f.width, f.layers
            )));
        }
        let field = FieldParams {
            net: Mlp { arch, weights, biases },
        };
        field.validate().map_err(|e| Error::Invariant(e.to_string()))?;

        if palette_flat.len() != (f.layers + 1) * 3 {
            return Err(Error::Invariant(format!(
                "palette holds {} values, expected {}",
                palette_flat.len(),
                (f.layers + 1) * 3
            )));
        }
        let palette = Palette::new(palette_flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
            .map_err(|e| Error::Invariant(e.to_string()))?;
        Ok(Self {
            field,
            palette,
            meta: repr.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ModelVariant, OccupancyField, Point2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Checkpoint {
            field: FieldParams::init_uniform(ModelVariant::Small.architecture(5), &mut rng).unwrap(),
            palette: Palette::uniform(5, &mut rng),
            meta: CheckpointMeta {
                stage: "distill".into(),
                iteration: 42,
                seed,
                config: serde_json::json!({ "layers": 5 }),
            },
        }
    }

    #[test]
    fn round_trip_is_exact_on_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("a.{EXTENSION}"));
        let ck = sample(1);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        for i in 0..32 {
            for j in 0..32 {
                let p = Point2::pixel_center(i, j, 32, 32);
                assert_eq!(ck.field.occupancy(p), back.field.occupancy(p));
            }
        }
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let text = sample(2).to_json().unwrap().replace(MAGIC, "SOMETHING-ELSE");
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let text = sample(2).to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Format(_))));
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let ck = sample(3);
        let mut value: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        let mut tampered = ck.field.net.biases[0].clone();
        tampered[0] += 1.0;
        value["field"]["biases"][0] = STANDARD.encode(to_bytes(&tampered)).into();
        let text = serde_json::to_string(&value).unwrap();
        match Checkpoint::from_json(&text) {
            Err(Error::Format(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn octave_disagreement_is_invariant_error() {
        let mut value: serde_json::Value = serde_json::from_str(&sample(4).to_json().unwrap()).unwrap();
        value["field"]["octaves"] = 3.into();
        let text = serde_json::to_string(&value).unwrap();
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Invariant(_))));
    }

    #[test]
    fn serialization_is_byte_stable() {
        assert_eq!(sample(5).to_json().unwrap(), sample(5).to_json().unwrap());
    }
}
