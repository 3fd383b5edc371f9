//! Evasion-robustness experiments and dataset statistics.

mod families;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attacks::{
    apply, validate_functionality, AttackInput, AttackKind, AttackOutcome, ManipulationError,
};
use crate::bundle::{five_fold, split_dataset, Bundle, BundleError, SplitPlan};
use crate::detectors::{
    drebin_classify, train, Detector, DetectorError, DetectorKind, DrebinModel, DrebinReport,
    TrainParams, TrainedDetector,
};

pub use families::{
    permission_families, top_benign_families, PermissionFamily, FAMILY_MAX_SIZE,
    FAMILY_MIN_SUPPORT, TOP_FAMILIES,
};
pub use stats::{
    maliciousness_compare, protection_stats, Maliciousness, MaliciousnessComparison,
    ProtectionStats,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no bundles to evaluate")]
    EmptyTestSet,
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// A row of the results table: the untouched test set or one attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    Original,
    Attack(AttackKind),
}

impl Case {
    pub const ALL: [Case; 7] = [
        Case::Original,
        Case::Attack(AttackKind::Mb1),
        Case::Attack(AttackKind::Mb2),
        Case::Attack(AttackKind::Mb3),
        Case::Attack(AttackKind::Mb4),
        Case::Attack(AttackKind::Sb),
        Case::Attack(AttackKind::Combined),
    ];

    pub fn key(self) -> &'static str {
        match self {
            Case::Original => "original",
            Case::Attack(a) => a.key(),
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Case::Original => "Original",
            Case::Attack(a) => a.display_name(),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("original") {
            return Ok(Case::Original);
        }
        s.parse()
            .map(Case::Attack)
            .map_err(|_| format!("unknown case `{s}`"))
    }
}

impl Serialize for Case {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Case {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Fraction of `bundles` the detector flags.
pub fn detection_rate(detector: &dyn Detector, bundles: &[Bundle]) -> Result<f64, EvalError> {
    if bundles.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let hits = bundles
        .par_iter()
        .filter(|b| detector.is_malicious(b))
        .count();
    Ok(hits as f64 / bundles.len() as f64)
}

/// What attackers of each model get to see about the training data.
pub struct AttackerKnowledge {
    pub model: DrebinModel,
    pub families: Vec<PermissionFamily>,
}

impl AttackerKnowledge {
    pub fn prepare(
        train_set: &[Bundle],
        params: &TrainParams,
        seed: u64,
    ) -> Result<Self, EvalError> {
        Ok(AttackerKnowledge {
            model: crate::detectors::drebin_train(train_set, &params.drebin, seed)?,
            families: top_benign_families(train_set),
        })
    }

    pub fn report(&self, b: &Bundle) -> DrebinReport {
        drebin_classify(&self.model, b)
    }
}

/// Per-bundle attack seed, stable across runs and independent of order.
pub fn bundle_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Attacks every bundle; the result keeps the input order.
pub fn attack_all(
    kind: AttackKind,
    bundles: &[Bundle],
    knowledge: &AttackerKnowledge,
    seed: u64,
) -> Vec<Result<AttackOutcome, ManipulationError>> {
    bundles
        .par_iter()
        .map(|b| {
            let report;
            let input = match kind.tuple().attacker_model {
                crate::attacks::AttackerModel::MA => {
                    report = knowledge.report(b);
                    AttackInput::Report(&report)
                }
                crate::attacks::AttackerModel::DA => AttackInput::Families(&knowledge.families),
                crate::attacks::AttackerModel::ZK => AttackInput::Nothing,
            };
            apply(kind, b, input, bundle_seed(seed, &b.id))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleVerdict {
    pub id: String,
    pub initial: bool,
    /// `None` when the attack failed on this bundle.
    #[serde(rename = "final")]
    pub final_verdict: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvasionReport {
    pub detector: DetectorKind,
    pub case: Case,
    pub initial_detection_rate: f64,
    /// Evasion robustness: detection rate over the successfully attacked bundles.
    pub final_detection_rate: f64,
    pub per_bundle: Vec<BundleVerdict>,
    pub n_errors: usize,
}

fn evasion_report(
    detector: &TrainedDetector,
    case: Case,
    test: &[Bundle],
    attacked: Option<&[Result<AttackOutcome, ManipulationError>]>,
) -> Result<EvasionReport, EvalError> {
    let initial: Vec<bool> = test.par_iter().map(|b| detector.is_malicious(b)).collect();
    let finals: Vec<Option<bool>> = match attacked {
        None => initial.iter().map(|&v| Some(v)).collect(),
        Some(outcomes) => outcomes
            .par_iter()
            .map(|o| o.as_ref().ok().map(|o| detector.is_malicious(&o.bundle)))
            .collect(),
    };
    let rate = |v: &mut dyn Iterator<Item = bool>| -> Result<f64, EvalError> {
        let (mut n, mut hits) = (0usize, 0usize);
        for x in v {
            n += 1;
            hits += x as usize;
        }
        if n == 0 {
            return Err(EvalError::EmptyTestSet);
        }
        Ok(hits as f64 / n as f64)
    };
    Ok(EvasionReport {
        detector: detector.kind(),
        case,
        initial_detection_rate: rate(&mut initial.iter().copied())?,
        final_detection_rate: rate(&mut finals.iter().flatten().copied())?,
        n_errors: finals.iter().filter(|v| v.is_none()).count(),
        per_bundle: test
            .iter()
            .zip(initial.iter().zip(&finals))
            .map(|(b, (&i, &f))| BundleVerdict {
                id: b.id.clone(),
                initial: i,
                final_verdict: f,
            })
            .collect(),
    })
}

/// Trains `detector` on `train_set`, attacks `test` with `attack` and
/// reports the detection rate before and after.
pub fn run_experiment(
    detector: DetectorKind,
    attack: Option<AttackKind>,
    train_set: &[Bundle],
    test: &[Bundle],
    params: &TrainParams,
    seed: u64,
) -> Result<EvasionReport, EvalError> {
    let model = train(detector, train_set, params, seed)?;
    match attack {
        None => evasion_report(&model, Case::Original, test, None),
        Some(kind) => {
            let knowledge = AttackerKnowledge::prepare(train_set, params, seed)?;
            let outcomes = attack_all(kind, test, &knowledge, seed);
            evasion_report(&model, Case::Attack(kind), test, Some(&outcomes))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalityRates {
    /// Share of attacked bundles passing the check with includes allowed.
    pub lax: f64,
    /// Share passing when any include counts as a failure.
    pub strict: f64,
    pub n_attacked: usize,
    pub n_errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub n_train: usize,
    pub n_test: usize,
    pub reports: Vec<EvasionReport>,
    pub functionality: BTreeMap<Case, FunctionalityRates>,
}

fn functionality_rates(
    outcomes: &[Result<AttackOutcome, ManipulationError>],
) -> FunctionalityRates {
    let ok: Vec<&AttackOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let pass = |strict: bool| {
        let n = ok
            .par_iter()
            .filter(|o| validate_functionality(&o.bundle, strict).is_functional())
            .count();
        if ok.is_empty() {
            0.0
        } else {
            n as f64 / ok.len() as f64
        }
    };
    FunctionalityRates {
        lax: pass(false),
        strict: pass(true),
        n_attacked: ok.len(),
        n_errors: outcomes.len() - ok.len(),
    }
}

/// Every (case, detector) pair on one split. Detectors are trained once and
/// each attack runs once over the test set.
pub fn run_split(
    train_set: &[Bundle],
    test: &[Bundle],
    detectors: &[DetectorKind],
    cases: &[Case],
    params: &TrainParams,
    seed: u64,
) -> Result<SplitResult, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let models: Vec<TrainedDetector> = detectors
        .par_iter()
        .map(|&k| train(k, train_set, params, seed))
        .collect::<Result<_, _>>()?;
    let needs_knowledge = cases.iter().any(|c| matches!(c, Case::Attack(_)));
    let knowledge = if needs_knowledge {
        Some(AttackerKnowledge::prepare(train_set, params, seed)?)
    } else {
        None
    };

    let mut reports = Vec::new();
    let mut functionality = BTreeMap::new();
    for &case in cases {
        let outcomes = match case {
            Case::Original => None,
            Case::Attack(kind) => {
                let k = knowledge.as_ref().expect("prepared for attack cases");
                Some(attack_all(kind, test, k, seed))
            }
        };
        if let Some(o) = &outcomes {
            functionality.insert(case, functionality_rates(o));
        }
        for m in &models {
            reports.push(evasion_report(m, case, test, outcomes.as_deref())?);
        }
    }
    Ok(SplitResult {
        n_train: train_set.len(),
        n_test: test.len(),
        reports,
        functionality,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// One split following the plan: oldest malicious bundles train, newest test.
    #[default]
    Temporal,
    /// Five disjoint malicious test folds, benign data reused in each.
    FiveFold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Experiment {
    pub split: SplitPlan,
    pub split_mode: SplitMode,
    pub detectors: Vec<DetectorKind>,
    pub cases: Vec<Case>,
    pub train: TrainParams,
    pub seed: u64,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            split: SplitPlan::default(),
            split_mode: SplitMode::default(),
            detectors: DetectorKind::ALL.to_vec(),
            cases: Case::ALL.to_vec(),
            train: TrainParams::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub mean: f64,
    /// Population standard deviation across splits.
    pub std: f64,
}

impl RateSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        RateSummary {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    /// case -> detector -> rate over splits
    pub rates: BTreeMap<Case, BTreeMap<DetectorKind, RateSummary>>,
    pub functionality: BTreeMap<Case, FunctionalityRates>,
    pub splits: Vec<SplitResult>,
}

impl ExperimentReport {
    pub fn rate(&self, case: Case, detector: DetectorKind) -> Option<f64> {
        self.rates.get(&case)?.get(&detector).map(|r| r.mean)
    }

    /// Share of attacked bundles that failed, over all splits.
    pub fn error_rate(&self, case: Case) -> f64 {
        let (e, n) =
            self.splits
                .iter()
                .fold((0, 0), |(e, n), s| match s.functionality.get(&case) {
                    Some(f) => (e + f.n_errors, n + f.n_errors + f.n_attacked),
                    None => (e, n),
                });
        if n == 0 {
            0.0
        } else {
            e as f64 / n as f64
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The rate matrix, one row per case in table order, mean and std per detector.
    pub fn to_csv(&self) -> String {
        let cases: Vec<Case> = Case::ALL
            .into_iter()
            .filter(|c| self.rates.contains_key(c))
            .collect();
        let dets = &self.experiment.detectors;
        let mut out = String::from("case");
        for d in dets {
            out.push_str(&format!(",{d},{d} std"));
        }
        out.push('\n');
        for c in cases {
            out.push_str(c.display_name());
            for d in dets {
                match self.rates[&c].get(d) {
                    Some(r) => out.push_str(&format!(",{:.3},{:.3}", r.mean, r.std)),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn run_evaluation(
    corpus: &[Bundle],
    experiment: &Experiment,
) -> Result<ExperimentReport, EvalError> {
    let folds = match experiment.split_mode {
        SplitMode::Temporal => vec![split_dataset(corpus, &experiment.split)?],
        SplitMode::FiveFold => five_fold(corpus, experiment.split.seed)?,
    };
    let splits: Vec<SplitResult> = folds
        .iter()
        .enumerate()
        .map(|(i, (tr, te))| {
            run_split(
                tr,
                te,
                &experiment.detectors,
                &experiment.cases,
                &experiment.train,
                experiment.seed.wrapping_add(i as u64),
            )
        })
        .collect::<Result<_, _>>()?;

    let mut rates: BTreeMap<Case, BTreeMap<DetectorKind, RateSummary>> = BTreeMap::new();
    for &case in &experiment.cases {
        for &det in &experiment.detectors {
            let values: Vec<f64> = splits
                .iter()
                .flat_map(|s| s.reports.iter())
                .filter(|r| r.case == case && r.detector == det)
                .map(|r| r.final_detection_rate)
                .collect();
            rates
                .entry(case)
                .or_default()
                .insert(det, RateSummary::of(&values));
        }
    }
    let mut functionality = BTreeMap::new();
    for &case in &experiment.cases {
        let per: Vec<&FunctionalityRates> = splits
            .iter()
            .filter_map(|s| s.functionality.get(&case))
            .collect();
        if per.is_empty() {
            continue;
        }
        let n = per.len() as f64;
        functionality.insert(
            case,
            FunctionalityRates {
                lax: per.iter().map(|f| f.lax).sum::<f64>() / n,
                strict: per.iter().map(|f| f.strict).sum::<f64>() / n,
                n_attacked: per.iter().map(|f| f.n_attacked).sum(),
                n_errors: per.iter().map(|f| f.n_errors).sum(),
            },
        );
    }
    Ok(ExperimentReport {
        experiment: experiment.clone(),
        rates,
        functionality,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{generate_corpus, CorpusSpec, Label};

    fn small() -> Vec<Bundle> {
        generate_corpus(&CorpusSpec {
            n_benign: 270,
            n_malicious: 30,
            ..CorpusSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn case_names() {
        for c in Case::ALL {
            assert_eq!(c.key().parse::<Case>().unwrap(), c);
            assert_eq!(
                serde_json::to_string(&c).unwrap(),
                format!("\"{}\"", c.key())
            );
        }
        assert!("mb9".parse::<Case>().is_err());
    }

    #[test]
    fn empty_test_set() {
        assert!(matches!(
            detection_rate(&TrainedDetector::Kirin, &[]),
            Err(EvalError::EmptyTestSet)
        ));
    }

    #[test]
    fn population_std() {
        let r = RateSummary::of(&[0.0, 1.0]);
        assert_eq!((r.mean, r.std), (0.5, 0.5));
        assert_eq!(RateSummary::of(&[0.3]).std, 0.0);
    }

    #[test]
    fn kirin_mb4_goes_to_zero() {
        let c = small();
        let (tr, te) = split_dataset(&c, &SplitPlan::default()).unwrap();
        let r = run_experiment(
            DetectorKind::Kirin,
            Some(AttackKind::Mb4),
            &tr,
            &te,
            &TrainParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(r.initial_detection_rate, 1.0);
        assert_eq!(r.final_detection_rate, 0.0);
        assert_eq!(r.n_errors, 0);
        let orig = run_experiment(
            DetectorKind::Drebin,
            None,
            &tr,
            &te,
            &TrainParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(orig.initial_detection_rate, orig.final_detection_rate);
    }

    #[test]
    fn report_is_deterministic_and_shaped() {
        let c = small();
        let exp = Experiment {
            cases: vec![Case::Original, Case::Attack(AttackKind::Sb)],
            ..Experiment::default()
        };
        let a = run_evaluation(&c, &exp).unwrap();
        let b = run_evaluation(&c, &exp).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let csv = a.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("case,Drebin,Drebin std"));
        assert!(lines[2].starts_with("SB,"));
        for d in [
            DetectorKind::Kirin,
            DetectorKind::Pbamd,
            DetectorKind::Famous,
        ] {
            assert_eq!(
                a.rate(Case::Original, d),
                a.rate(Case::Attack(AttackKind::Sb), d)
            );
        }
        assert!(a.splits[0]
            .reports
            .iter()
            .all(|r| r.per_bundle.len() == a.splits[0].n_test));
        assert!(c.iter().any(|b| b.label == Label::Benign));
    }
}
