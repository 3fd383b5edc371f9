//! Permission scoring: EMSP = PuM/M - PuB/B per permission, MS = sum of the
//! EMSPs of an app's permissions, then a tree over (EMSP_1..EMSP_n, MS).

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::cart::Tree;
use super::{labelled, DetectorError};
use crate::bundle::Bundle;
use crate::features::legacy_permissions;
use crate::manifest::PermissionName;
use crate::tables::Tables;

pub type Score = Ratio<i64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamousModel {
    /// Every permission of the table, in feature order.
    pub emsp: BTreeMap<String, Score>,
    pub classifier: Tree,
}

/// EMSP for every table permission, exact.
pub fn emsp_table(train: &[Bundle]) -> Result<BTreeMap<String, Score>, DetectorError> {
    let (samples, y) = labelled(train)?;
    let m = y.iter().filter(|&&v| v).count() as i64;
    let b = y.len() as i64 - m;
    let mut pum: BTreeMap<String, i64> = BTreeMap::new();
    let mut pub_: BTreeMap<String, i64> = BTreeMap::new();
    for (bundle, malicious) in samples.iter().zip(&y) {
        let counts = if *malicious { &mut pum } else { &mut pub_ };
        for p in legacy_permissions(bundle) {
            *counts.entry(p.as_str().to_string()).or_insert(0) += 1;
        }
    }
    Ok(Tables::global()
        .permissions()
        .map(|(name, _)| {
            let c = |t: &BTreeMap<String, i64>| t.get(name).copied().unwrap_or(0);
            (
                name.to_string(),
                Ratio::new(c(&pum), m) - Ratio::new(c(&pub_), b),
            )
        })
        .collect())
}

pub fn maliciousness_score(
    emsp: &BTreeMap<String, Score>,
    perms: &BTreeSet<PermissionName>,
) -> Score {
    perms
        .iter()
        .filter_map(|p| emsp.get(p.as_str()))
        .fold(Ratio::from_integer(0), |acc, s| acc + s)
}

fn to_f64(r: &Score) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn feature_row(emsp: &BTreeMap<String, Score>, perms: &BTreeSet<PermissionName>) -> Vec<f64> {
    let mut row: Vec<f64> = emsp
        .iter()
        .map(|(p, s)| {
            if perms.contains(&PermissionName::new(p.as_str())) {
                to_f64(s)
            } else {
                0.0
            }
        })
        .collect();
    row.push(to_f64(&maliciousness_score(emsp, perms)));
    row
}

pub fn famous_train(train: &[Bundle], max_depth: usize) -> Result<FamousModel, DetectorError> {
    let emsp = emsp_table(train)?;
    let (samples, y) = labelled(train)?;
    let x: Vec<Vec<f64>> = samples
        .iter()
        .map(|b| feature_row(&emsp, &legacy_permissions(b)))
        .collect();
    let classifier = Tree::fit(&x, &y, max_depth);
    Ok(FamousModel { emsp, classifier })
}

impl FamousModel {
    pub fn ms(&self, b: &Bundle) -> Score {
        maliciousness_score(&self.emsp, &legacy_permissions(b))
    }

    pub fn classify(&self, b: &Bundle) -> bool {
        self.classifier
            .predict(&feature_row(&self.emsp, &legacy_permissions(b)))
    }
}

pub fn famous_classify(m: &FamousModel, b: &Bundle) -> bool {
    m.classify(b)
}
