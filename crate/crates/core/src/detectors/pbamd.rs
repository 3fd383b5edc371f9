//! Information-gain feature selection, 2-means clustering, and one tree per
//! cluster over binary permission features.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cart::Tree;
use super::{labelled, DetectorError};
use crate::bundle::Bundle;
use crate::features::{legacy_permissions, FeatureId};

const MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbamdParams {
    pub n_features: usize,
    pub max_depth: usize,
}

impl Default for PbamdParams {
    fn default() -> Self {
        PbamdParams {
            n_features: 100,
            max_depth: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PbamdModel {
    pub selected_features: Vec<FeatureId>,
    pub centroids: Vec<Vec<f64>>,
    pub trees: Vec<Tree>,
}

fn entropy(pos: usize, n: usize) -> f64 {
    if n == 0 || pos == 0 || pos == n {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Information gain of a binary feature against the label.
pub fn information_gain(present: &[bool], y: &[bool]) -> f64 {
    let n = y.len();
    let pos = y.iter().filter(|&&v| v).count();
    let n1 = present.iter().filter(|&&v| v).count();
    let pos1 = present.iter().zip(y).filter(|(&p, &v)| p && v).count();
    let (n0, pos0) = (n - n1, pos - pos1);
    let cond = (n1 as f64 * entropy(pos1, n1) + n0 as f64 * entropy(pos0, n0)) / n as f64;
    entropy(pos, n) - cond
}

/// Top `k` features by information gain; ties keep lexicographic order.
pub fn select_features(rows: &[BTreeSet<FeatureId>], y: &[bool], k: usize) -> Vec<FeatureId> {
    let candidates: BTreeSet<&FeatureId> = rows.iter().flatten().collect();
    let mut scored: Vec<(f64, &FeatureId)> = candidates
        .into_iter()
        .map(|f| {
            let present: Vec<bool> = rows.iter().map(|r| r.contains(f)).collect();
            (information_gain(&present, y), f)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, f)| f.clone()).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; equal distances go to the lower index.
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate().skip(1) {
        if dist2(c, x) < dist2(&centroids[best], x) {
            best = i;
        }
    }
    best
}

/// Lloyd's k-means with k = 2. The first centre is a seeded random point,
/// the second the point farthest from it.
pub fn two_means(x: &[Vec<f64>], seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..x.len());
    let mut second = 0;
    for i in 1..x.len() {
        if dist2(&x[i], &x[first]) > dist2(&x[second], &x[first]) {
            second = i;
        }
    }
    let mut centroids = vec![x[first].clone(), x[second].clone()];
    let mut assign: Vec<usize> = x.iter().map(|r| nearest(&centroids, r)).collect();
    for _ in 0..MAX_ITER {
        for (k, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = x
                .iter()
                .zip(&assign)
                .filter(|(_, a)| **a == k)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in c.iter_mut().enumerate() {
                *v = members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64;
            }
        }
        let next: Vec<usize> = x.iter().map(|r| nearest(&centroids, r)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    (centroids, assign)
}

fn permission_set(b: &Bundle) -> BTreeSet<FeatureId> {
    legacy_permissions(b)
        .iter()
        .map(|p| FeatureId::perm(p.as_str()))
        .collect()
}

fn binary_row(selected: &[FeatureId], present: &BTreeSet<FeatureId>) -> Vec<f64> {
    selected
        .iter()
        .map(|f| if present.contains(f) { 1.0 } else { 0.0 })
        .collect()
}

pub fn pbamd_train(
    train: &[Bundle],
    params: &PbamdParams,
    seed: u64,
) -> Result<PbamdModel, DetectorError> {
    let (samples, y) = labelled(train)?;
    let sets: Vec<BTreeSet<FeatureId>> = samples.iter().map(|b| permission_set(b)).collect();
    let selected_features = select_features(&sets, &y, params.n_features);
    let x: Vec<Vec<f64>> = sets
        .iter()
        .map(|s| binary_row(&selected_features, s))
        .collect();
    let (centroids, assign) = two_means(&x, seed);
    let majority = y.iter().filter(|&&v| v).count() * 2 > y.len();
    let trees = (0..centroids.len())
        .map(|k| {
            let idx: Vec<usize> = (0..x.len()).filter(|&i| assign[i] == k).collect();
            if idx.is_empty() {
                return Tree::leaf(majority);
            }
            let cx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let cy: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
            Tree::fit(&cx, &cy, params.max_depth)
        })
        .collect();
    Ok(PbamdModel {
        selected_features,
        centroids,
        trees,
    })
}

impl PbamdModel {
    pub fn cluster_of(&self, b: &Bundle) -> usize {
        nearest(
            &self.centroids,
            &binary_row(&self.selected_features, &permission_set(b)),
        )
    }

    pub fn classify(&self, b: &Bundle) -> bool {
        let row = binary_row(&self.selected_features, &permission_set(b));
        self.trees[nearest(&self.centroids, &row)].predict(&row)
    }
}

pub fn pbamd_classify(m: &PbamdModel, b: &Bundle) -> bool {
    m.classify(b)
}
