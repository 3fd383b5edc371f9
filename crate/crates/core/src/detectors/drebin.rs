//! Linear SVM over Drebin observations, trained with seeded Pegasos
//! (stochastic subgradient descent on the regularized hinge loss).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{labelled, DetectorError};
use crate::bundle::Bundle;
use crate::features::{drebin_observations, Category, DrebinObservation, FeatureId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrebinParams {
    pub epochs: usize,
    pub lambda: f64,
}

impl Default for DrebinParams {
    fn default() -> Self {
        DrebinParams {
            epochs: 20,
            lambda: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrebinModel {
    pub weights: BTreeMap<FeatureId, f64>,
    /// Highest score of any benign training bundle.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrebinReport {
    pub original_label: i8,
    pub predicted_label: i8,
    pub observations: Vec<DrebinObservation>,
    pub score: f64,
    pub threshold: f64,
}

pub fn drebin_train(
    train: &[Bundle],
    params: &DrebinParams,
    seed: u64,
) -> Result<DrebinModel, DetectorError> {
    let (samples, y) = labelled(train)?;
    let rows: Vec<Vec<FeatureId>> = samples
        .iter()
        .map(|b| {
            drebin_observations(b)
                .into_iter()
                .map(|o| o.feature)
                .collect()
        })
        .collect();
    let mut vocab: Vec<FeatureId> = rows.iter().flatten().cloned().collect();
    vocab.sort();
    vocab.dedup();
    let index: BTreeMap<&FeatureId, usize> =
        vocab.iter().enumerate().map(|(i, f)| (f, i)).collect();
    let x: Vec<Vec<usize>> = rows
        .iter()
        .map(|r| r.iter().map(|f| index[f]).collect())
        .collect();

    let mut w = vec![0.0f64; vocab.len()];
    // w is kept as scale * v so the shrink step is O(1)
    let mut scale = 1.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let yi = if y[i] { 1.0 } else { -1.0 };
            let margin = yi * scale * x[i].iter().map(|&j| w[j]).sum::<f64>();
            let shrink = 1.0 - eta * params.lambda;
            if shrink <= 0.0 {
                w.iter_mut().for_each(|v| *v = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                for &j in &x[i] {
                    w[j] += eta * yi / scale;
                }
            }
            if scale < 1e-9 {
                w.iter_mut().for_each(|v| *v *= scale);
                scale = 1.0;
            }
        }
    }

    let weights: BTreeMap<FeatureId, f64> =
        vocab.into_iter().zip(w.iter().map(|v| v * scale)).collect();
    let mut model = DrebinModel {
        weights,
        threshold: 0.0,
    };
    model.threshold = samples
        .iter()
        .zip(&y)
        .filter(|(_, m)| !**m)
        .map(|(b, _)| model.score(b))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(model)
}

impl DrebinModel {
    pub fn weight(&self, f: &FeatureId) -> f64 {
        self.weights.get(f).copied().unwrap_or(0.0)
    }

    pub fn score(&self, b: &Bundle) -> f64 {
        drebin_observations(b)
            .iter()
            .map(|o| self.weight(&o.feature))
            .sum()
    }
}

pub fn drebin_classify(m: &DrebinModel, b: &Bundle) -> DrebinReport {
    let observations: Vec<DrebinObservation> = drebin_observations(b)
        .into_iter()
        .map(|o| DrebinObservation {
            weight: m.weight(&o.feature),
            ..o
        })
        .collect();
    let score: f64 = observations.iter().map(|o| o.weight).sum();
    DrebinReport {
        original_label: b.label.as_signed(),
        predicted_label: if score > m.threshold { 1 } else { -1 },
        observations,
        score,
        threshold: m.threshold,
    }
}

impl DrebinReport {
    pub fn is_malicious(&self) -> bool {
        self.predicted_label == 1
    }

    /// Observations the attacker acts on: those with a positive weight.
    pub fn flagged(&self) -> impl Iterator<Item = &DrebinObservation> {
        self.observations.iter().filter(|o| o.weight > 0.0)
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("original label".into(), json!(self.original_label));
        map.insert("predicted label".into(), json!(self.predicted_label));
        map.insert("score".into(), json!(self.score));
        map.insert("threshold".into(), json!(self.threshold));
        for c in Category::ALL {
            let items: Vec<Value> = self
                .observations
                .iter()
                .filter(|o| o.category == c)
                .map(|o| json!([o.feature.value(), o.weight]))
                .collect();
            map.insert(c.key().into(), Value::Array(items));
        }
        Value::Object(map)
    }

    pub fn from_json(v: &Value) -> Result<Self, DetectorError> {
        let bad = |what: &str| DetectorError::ModelFormat(format!("report: {what}"));
        let obj = v.as_object().ok_or_else(|| bad("not an object"))?;
        let int = |k: &str| -> Result<i8, DetectorError> {
            obj.get(k)
                .and_then(Value::as_i64)
                .and_then(|n| i8::try_from(n).ok())
                .ok_or_else(|| bad(k))
        };
        let real = |k: &str| obj.get(k).and_then(Value::as_f64).ok_or_else(|| bad(k));
        let mut observations = Vec::new();
        for c in Category::ALL {
            let items = obj
                .get(c.key())
                .and_then(Value::as_array)
                .ok_or_else(|| bad(c.key()))?;
            for item in items {
                let pair = item
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| bad(c.key()))?;
                let value = pair[0].as_str().ok_or_else(|| bad(c.key()))?;
                let weight = pair[1].as_f64().ok_or_else(|| bad(c.key()))?;
                observations.push(DrebinObservation {
                    feature: FeatureId::in_category(c, value),
                    category: c,
                    weight,
                });
            }
        }
        Ok(DrebinReport {
            original_label: int("original label")?,
            predicted_label: int("predicted label")?,
            observations,
            score: real("score")?,
            threshold: real("threshold")?,
        })
    }
}
