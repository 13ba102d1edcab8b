//! Model files: a JSON header with the architecture, transforms and
//! normalization constants, plus the flat weight vector embedded as
//! base64-encoded little-endian f64 — bit-exact through a round trip.

use super::{InputScaling, MlpSpec, OutputTransform, ParamVector};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::io;
use std::path::Path;

pub fn encode_params(params: &ParamVector) -> String {
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for v in &params.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_params(s: &str) -> io::Result<ParamVector> {
    let bytes = B64
        .decode(s)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if bytes.len() % 8 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "weight payload length is not a multiple of 8",
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ParamVector { values })
}

/// On-disk representation shared by all network kinds. Optional fields are
/// present only where the network kind uses them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: String,
    pub spec: MlpSpec,
    pub scaling: InputScaling,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<OutputTransform>,
    /// Reference scale for the heat-source surrogate's normalized output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_ref: Option<f64>,
    pub seed: u64,
    pub params_b64: String,
    /// Base parameters and emission scale for hypernetwork-emitted targets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_params_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Box<ModelTarget>>,
}

/// Definition of the network a hypernetwork emits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelTarget {
    pub spec: MlpSpec,
    pub scaling: InputScaling,
    pub transform: OutputTransform,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}
