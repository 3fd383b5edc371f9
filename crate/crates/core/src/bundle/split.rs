//! Train/test splits. The test side holds only malicious bundles; the train
//! side mixes benign and malicious at the configured spatial ratio.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bundle, BundleError, Label};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPlan {
    /// Benign share of the training set.
    pub spatial_ratio: f64,
    /// Share of the malicious bundles used for training.
    pub train_fraction: f64,
    /// Train on the oldest malicious bundles and test on the newest.
    pub temporal: bool,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            spatial_ratio: 0.9,
            train_fraction: 0.8,
            temporal: true,
            seed: 0,
        }
    }
}

/// (train, test)
pub type Fold = (Vec<Bundle>, Vec<Bundle>);

fn by_time(v: &mut [Bundle]) {
    v.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

pub fn split_dataset(
    corpus: &[Bundle],
    plan: &SplitPlan,
) -> Result<(Vec<Bundle>, Vec<Bundle>), BundleError> {
    if !(plan.spatial_ratio > 0.0 && plan.spatial_ratio < 1.0) {
        return Err(BundleError::InvalidSpec(format!(
            "spatial_ratio {} outside (0,1)",
            plan.spatial_ratio
        )));
    }
    if !(plan.train_fraction > 0.0 && plan.train_fraction < 1.0) {
        return Err(BundleError::InvalidSpec(format!(
            "train_fraction {} outside (0,1)",
            plan.train_fraction
        )));
    }
    let mut malicious: Vec<Bundle> = corpus
        .iter()
        .filter(|b| b.label == Label::Malicious)
        .cloned()
        .collect();
    let mut benign: Vec<Bundle> = corpus
        .iter()
        .filter(|b| b.label == Label::Benign)
        .cloned()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    if plan.temporal {
        by_time(&mut malicious);
        by_time(&mut benign);
    } else {
        malicious.shuffle(&mut rng);
        benign.shuffle(&mut rng);
    }

    let n = malicious.len();
    let n_train = (plan.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(BundleError::InsufficientData(format!(
            "{n} malicious bundles cannot be split {}/{}",
            plan.train_fraction,
            1.0 - plan.train_fraction
        )));
    }
    let test = malicious.split_off(n_train);
    let benign_for =
        |m: usize| (m as f64 * plan.spatial_ratio / (1.0 - plan.spatial_ratio)).round() as usize;

    let available: Vec<Bundle> = if plan.temporal {
        let cut = test
            .iter()
            .map(|b| b.timestamp)
            .min()
            .expect("test set is non-empty");
        benign.into_iter().filter(|b| b.timestamp <= cut).collect()
    } else {
        benign
    };
    // Too little benign data: keep the ratio by training on fewer (the
    // newest) malicious bundles instead.
    let n_mal = (0..=n_train)
        .rev()
        .find(|&m| benign_for(m) <= available.len())
        .unwrap_or(0);
    if n_mal == 0 {
        return Err(BundleError::InsufficientData(format!(
            "{} benign bundles available, {} needed for one malicious training bundle",
            available.len(),
            benign_for(1)
        )));
    }
    let n_benign = benign_for(n_mal);
    let chosen: Vec<Bundle> = if plan.temporal {
        let skip = available.len() - n_benign;
        available.into_iter().skip(skip).collect()
    } else {
        available.into_iter().take(n_benign).collect()
    };

    let mut train = malicious.split_off(n_train - n_mal);
    train.extend(chosen);
    by_time(&mut train);
    let mut test = test;
    by_time(&mut test);
    Ok((train, test))
}

/// Five disjoint malicious test folds, each paired with every benign bundle
/// for training alongside the other four malicious folds.
pub fn five_fold(corpus: &[Bundle], seed: u64) -> Result<Vec<Fold>, BundleError> {
    let mut malicious: Vec<Bundle> = corpus
        .iter()
        .filter(|b| b.label == Label::Malicious)
        .cloned()
        .collect();
    let benign: Vec<Bundle> = corpus
        .iter()
        .filter(|b| b.label == Label::Benign)
        .cloned()
        .collect();
    if malicious.len() < 5 || benign.is_empty() {
        return Err(BundleError::InsufficientData(format!(
            "{} malicious and {} benign bundles",
            malicious.len(),
            benign.len()
        )));
    }
    malicious.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = malicious.len();
    let bounds: Vec<usize> = (0..=5).map(|k| k * n / 5).collect();
    Ok((0..5)
        .map(|k| {
            let test: Vec<Bundle> = malicious[bounds[k]..bounds[k + 1]].to_vec();
            let mut train: Vec<Bundle> = malicious[..bounds[k]]
                .iter()
                .chain(&malicious[bounds[k + 1]..])
                .cloned()
                .chain(benign.iter().cloned())
                .collect();
            by_time(&mut train);
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{generate_corpus, CorpusSpec};

    fn corpus() -> Vec<Bundle> {
        generate_corpus(&CorpusSpec {
            n_benign: 90,
            n_malicious: 10,
            ..CorpusSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn temporal_split_shape() {
        let c = corpus();
        let (train, test) = split_dataset(&c, &SplitPlan::default()).unwrap();
        assert_eq!(test.len(), 2);
        assert!(test.iter().all(|b| b.label == Label::Malicious));
        let benign = train.iter().filter(|b| b.label == Label::Benign).count() as f64;
        let share = benign / train.len() as f64;
        assert!((0.88..=0.92).contains(&share), "{share}");
        let cut = test.iter().map(|b| b.timestamp).min().unwrap();
        assert!(train.iter().all(|b| b.timestamp <= cut));
        let ids: std::collections::BTreeSet<&str> = train.iter().map(|b| b.id.as_str()).collect();
        assert!(test.iter().all(|b| !ids.contains(b.id.as_str())));
    }

    #[test]
    fn shuffled_split_is_seeded() {
        let c = corpus();
        let plan = SplitPlan {
            temporal: false,
            seed: 3,
            ..SplitPlan::default()
        };
        let a = split_dataset(&c, &plan).unwrap();
        assert_eq!(a, split_dataset(&c, &plan).unwrap());
        assert_eq!(a.1.len(), 2);
        assert_eq!(a.0.len(), 8 + 72);
    }

    #[test]
    fn too_few_benign() {
        let c = corpus();
        let plan = SplitPlan {
            spatial_ratio: 0.99,
            ..SplitPlan::default()
        };
        assert!(matches!(
            split_dataset(&c, &plan),
            Err(BundleError::InsufficientData(_))
        ));
        let only: Vec<Bundle> = c
            .iter()
            .filter(|b| b.label == Label::Benign)
            .cloned()
            .collect();
        assert!(split_dataset(&only, &SplitPlan::default()).is_err());
    }

    #[test]
    fn scarce_benign_shrinks_malicious_training() {
        let mut c = corpus();
        let late = c.iter().map(|b| b.timestamp).max().unwrap() + 1;
        for (k, b) in c
            .iter_mut()
            .filter(|b| b.label == Label::Benign)
            .enumerate()
        {
            b.timestamp = if k % 2 == 0 { late } else { k as i64 };
        }
        let (train, test) = split_dataset(&c, &SplitPlan::default()).unwrap();
        assert_eq!(test.len(), 2);
        let mal: Vec<&Bundle> = train
            .iter()
            .filter(|b| b.label == Label::Malicious)
            .collect();
        assert_eq!(mal.len(), 5);
        assert_eq!(train.len() - mal.len(), 45);
        let mut all: Vec<Bundle> = c
            .iter()
            .filter(|b| b.label == Label::Malicious)
            .cloned()
            .collect();
        by_time(&mut all);
        let newest: Vec<&str> = all[3..8].iter().map(|b| b.id.as_str()).collect();
        assert_eq!(
            mal.iter().map(|b| b.id.as_str()).collect::<Vec<_>>(),
            newest
        );
    }

    #[test]
    fn five_disjoint_folds() {
        let c = corpus();
        let folds = five_fold(&c, 1).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = std::collections::BTreeSet::new();
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 98);
            for b in test {
                assert!(seen.insert(b.id.clone()));
            }
        }
        assert_eq!(seen.len(), 10);
    }
}
