//! The four detection systems under attack. All of them read features
//! through the legacy extractor.

pub mod cart;
mod drebin;
mod famous;
mod kirin;
mod pbamd;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{Bundle, Label};
use crate::features::extract_legacy;

pub use drebin::{drebin_classify, drebin_train, DrebinModel, DrebinParams, DrebinReport};
pub use famous::{
    emsp_table, famous_classify, famous_train, maliciousness_score, FamousModel, Score,
};
pub use kirin::{kirin_classify, KirinRule, KirinVerdict, CALL_ACTION, KIRIN_RULES};
pub use pbamd::{
    information_gain, nearest, pbamd_classify, pbamd_train, select_features, two_means, PbamdModel,
    PbamdParams,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("bad model file: {0}")]
    ModelFormat(String),
}

/// Training bundles with a known label, and `true` for malicious.
fn labelled(train: &[Bundle]) -> Result<(Vec<&Bundle>, Vec<bool>), DetectorError> {
    let samples: Vec<&Bundle> = train.iter().filter(|b| b.label != Label::Unknown).collect();
    let y: Vec<bool> = samples
        .iter()
        .map(|b| b.label == Label::Malicious)
        .collect();
    let m = y.iter().filter(|&&v| v).count();
    if m == 0 || m == y.len() {
        return Err(DetectorError::DegenerateTraining(format!(
            "{m} malicious and {} benign bundles",
            y.len() - m
        )));
    }
    Ok((samples, y))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "drebin")]
    Drebin,
    #[serde(rename = "kirin")]
    Kirin,
    #[serde(rename = "pb-amd")]
    Pbamd,
    #[serde(rename = "famous")]
    Famous,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Drebin,
        DetectorKind::Kirin,
        DetectorKind::Pbamd,
        DetectorKind::Famous,
    ];

    pub fn key(self) -> &'static str {
        match self {
            DetectorKind::Drebin => "drebin",
            DetectorKind::Kirin => "kirin",
            DetectorKind::Pbamd => "pb-amd",
            DetectorKind::Famous => "famous",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DetectorKind::Drebin => "Drebin",
            DetectorKind::Kirin => "Kirin",
            DetectorKind::Pbamd => "PB-AMD",
            DetectorKind::Famous => "FAMOUS",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.key() == lower || k.key().replace('-', "") == lower)
            .ok_or_else(|| format!("unknown detector `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub drebin: DrebinParams,
    pub pbamd: PbamdParams,
    pub famous_max_depth: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            drebin: DrebinParams::default(),
            pbamd: PbamdParams::default(),
            famous_max_depth: 8,
        }
    }
}

pub trait Detector: Send + Sync {
    fn kind(&self) -> DetectorKind;
    fn is_malicious(&self, b: &Bundle) -> bool;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", content = "model", rename_all = "kebab-case")]
pub enum TrainedDetector {
    Kirin,
    Drebin(DrebinModel),
    #[serde(rename = "pb-amd")]
    Pbamd(PbamdModel),
    Famous(FamousModel),
}

pub fn kirin_bundle(b: &Bundle) -> KirinVerdict {
    let fv = extract_legacy(b);
    kirin_classify(&fv.permissions(), &fv.intent_actions())
}

impl Detector for TrainedDetector {
    fn kind(&self) -> DetectorKind {
        match self {
            TrainedDetector::Kirin => DetectorKind::Kirin,
            TrainedDetector::Drebin(_) => DetectorKind::Drebin,
            TrainedDetector::Pbamd(_) => DetectorKind::Pbamd,
            TrainedDetector::Famous(_) => DetectorKind::Famous,
        }
    }

    fn is_malicious(&self, b: &Bundle) -> bool {
        match self {
            TrainedDetector::Kirin => kirin_bundle(b).malicious,
            TrainedDetector::Drebin(m) => drebin_classify(m, b).is_malicious(),
            TrainedDetector::Pbamd(m) => m.classify(b),
            TrainedDetector::Famous(m) => m.classify(b),
        }
    }
}

pub fn train(
    kind: DetectorKind,
    train: &[Bundle],
    params: &TrainParams,
    seed: u64,
) -> Result<TrainedDetector, DetectorError> {
    Ok(match kind {
        DetectorKind::Kirin => TrainedDetector::Kirin,
        DetectorKind::Drebin => TrainedDetector::Drebin(drebin_train(train, &params.drebin, seed)?),
        DetectorKind::Pbamd => TrainedDetector::Pbamd(pbamd_train(train, &params.pbamd, seed)?),
        DetectorKind::Famous => {
            TrainedDetector::Famous(famous_train(train, params.famous_max_depth)?)
        }
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    detector: TrainedDetector,
}

impl TrainedDetector {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            detector: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| DetectorError::ModelFormat(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(DetectorError::ModelFormat(format!(
                "format_version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file.detector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names() {
        for k in DetectorKind::ALL {
            assert_eq!(k.key().parse::<DetectorKind>().unwrap(), k);
        }
        assert_eq!(
            "PBAMD".parse::<DetectorKind>().unwrap(),
            DetectorKind::Pbamd
        );
        assert!("svm".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn kirin_model_file() {
        let text = TrainedDetector::Kirin.to_json();
        assert!(text.contains("\"format_version\": 1"));
        assert_eq!(
            TrainedDetector::from_json(&text).unwrap(),
            TrainedDetector::Kirin
        );
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            TrainedDetector::from_json(&bumped),
            Err(DetectorError::ModelFormat(_))
        ));
    }
}
