//! JSON wire types shared with the guidance service.
//!
//! Images travel as base64 of row-major, channel-last, little-endian `f32`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::ScheduleSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRequest {
    pub image_b64: String,
    pub h: usize,
    pub w: usize,
    pub t: f64,
    pub prompt: String,
    pub guidance_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsResponse {
    pub eps_b64: String,
    pub alpha_t: f64,
    pub sigma_t: f64,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub prompt: String,
    pub steps: usize,
    pub seed: u64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub mode: String,
    pub model_id: String,
    pub schedule: ScheduleSpec,
}

/// Narrows to `f32` and base64-encodes.
pub fn encode_f32(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

/// Decodes a base64 `f32` array and upcasts to `f64`.
pub fn decode_f32(b64: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| Error::Guidance(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Guidance(format!("payload length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_payload_round_trip() {
        let v = vec![0.0, -1.5, 0.25, 3.0e-3];
        let back = decode_f32(&encode_f32(&v)).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn health_schedule_uses_capital_t() {
        let h = HealthResponse {
            status: "ok".into(),
            mode: "stub".into(),
            model_id: "m".into(),
            schedule: ScheduleSpec::default(),
        };
        let v = serde_json::to_value(&h).unwrap();
        assert_eq!(v["schedule"]["T"], 1000);
    }

    #[test]
    fn truncated_payload_rejected() {
        assert!(decode_f32(&STANDARD.encode([0u8; 6])).is_err());
    }
}
