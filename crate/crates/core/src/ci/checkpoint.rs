//! Checkpoint directories: `head.json` plus optional `encoder.json`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::encoder::BOW_NAME;
use super::{BagOfWordsEncoder, CiClassifier, CiError, ClassifierKind, Encoder, Head, Result, INPUT_ORDER};

pub const FORMAT_VERSION: u32 = 1;
const HEAD_FILE: &str = "head.json";
const ENCODER_FILE: &str = "encoder.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub name: String,
    pub version: String,
    pub dim: usize,
    /// File holding embedded encoder parameters, relative to the checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFile {
    pub format_version: u32,
    pub kind: ClassifierKind,
    pub input_order: Vec<String>,
    pub separator: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub encoder: EncoderInfo,
    pub epochs_trained: usize,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string(value).map_err(|e| CiError::Checkpoint(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn save_checkpoint(dir: impl AsRef<Path>, clf: &CiClassifier) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let embedded = match clf.encoder.export() {
        Some(params) => {
            fs::write(dir.join(ENCODER_FILE), to_json(&params)?)?;
            Some(ENCODER_FILE.to_string())
        }
        None => None,
    };
    let head = HeadFile {
        format_version: FORMAT_VERSION,
        kind: clf.kind,
        input_order: match clf.kind {
            ClassifierKind::ConditionalIndependence => INPUT_ORDER.iter().map(|s| s.to_string()).collect(),
            ClassifierKind::Dependence => vec!["response".into(), "u_j".into()],
        },
        separator: clf.separator.clone(),
        weights: clf.head.weights.clone(),
        bias: clf.head.bias,
        encoder: EncoderInfo {
            name: clf.encoder.name().to_string(),
            version: clf.encoder.version().to_string(),
            dim: clf.encoder.dim(),
            embedded,
        },
        epochs_trained: clf.epochs_trained,
    };
    fs::write(dir.join(HEAD_FILE), to_json(&head)?)?;
    Ok(())
}

pub fn read_head(dir: impl AsRef<Path>) -> Result<HeadFile> {
    let path = dir.as_ref().join(HEAD_FILE);
    if !path.is_file() {
        return Err(CiError::MissingCheckpoint(path.display().to_string()));
    }
    let head: HeadFile = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(|e| CiError::Checkpoint(format!("{}: {e}", path.display())))?;
    if head.format_version != FORMAT_VERSION {
        return Err(CiError::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            head.format_version
        )));
    }
    if head.weights.len() != head.encoder.dim {
        return Err(CiError::Checkpoint(format!(
            "{} weights for encoder dimension {}",
            head.weights.len(),
            head.encoder.dim
        )));
    }
    Ok(head)
}

/// Loads a classifier. `encoder` supplies an external encoder for checkpoints
/// that do not embed their own; it must match the recorded name and dimension.
pub fn load_checkpoint(dir: impl AsRef<Path>, encoder: Option<Arc<dyn Encoder>>) -> Result<CiClassifier> {
    let dir = dir.as_ref();
    let head = read_head(dir)?;
    let encoder: Arc<dyn Encoder> = match (encoder, &head.encoder.embedded) {
        (Some(enc), _) => {
            if enc.name() != head.encoder.name || enc.dim() != head.encoder.dim {
                return Err(CiError::Checkpoint(format!(
                    "checkpoint expects encoder {} (dim {}), got {} (dim {})",
                    head.encoder.name,
                    head.encoder.dim,
                    enc.name(),
                    enc.dim()
                )));
            }
            enc
        }
        (None, Some(file)) if head.encoder.name == BOW_NAME => {
            let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(file))?)
                .map_err(|e| CiError::Checkpoint(e.to_string()))?;
            Arc::new(BagOfWordsEncoder::from_json(value).map_err(|e| CiError::Checkpoint(e.to_string()))?)
        }
        (None, _) => {
            return Err(CiError::Checkpoint(format!(
                "checkpoint needs an external encoder {:?}",
                head.encoder.name
            )))
        }
    };
    if encoder.dim() != head.weights.len() {
        return Err(CiError::Checkpoint("encoder dimension mismatch".into()));
    }
    Ok(CiClassifier {
        encoder,
        head: Head {
            weights: head.weights,
            bias: head.bias,
        },
        separator: head.separator,
        kind: head.kind,
        epochs_trained: head.epochs_trained,
    })
}
