//! The `gauntlet` command line: corpus generation, training, single-bundle
//! attacks and full evaluations, all driven by one JSON config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{
    apply, validate_functionality, AttackInput, AttackKind, AttackerModel, Edit, Functionality,
    ManipulationError,
};
use crate::bundle::{
    five_fold, generate_corpus, load_bundle, save_bundle, split_dataset, Bundle, BundleError,
    CorpusSpec, Label, SplitPlan,
};
use crate::detectors::{
    drebin_classify, train, DetectorError, DetectorKind, TrainParams, TrainedDetector,
};
use crate::evaluation::{
    bundle_seed, permission_families, protection_stats, top_benign_families, Case, EvalError,
    Experiment, ExperimentReport, PermissionFamily, ProtectionStats, SplitMode, FAMILY_MAX_SIZE,
    FAMILY_MIN_SUPPORT,
};

pub const INDEX_FILE: &str = "index.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const STATS_FILE: &str = "stats.json";
pub const MODELS_DIR: &str = "models";
pub const FAMILIES_FILE: &str = "families.json";
pub const ATTACKED_DIR: &str = "attacked";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("attack failed: {0}")]
    Manipulation(#[from] ManipulationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus at {dir}: {message}")]
    Corpus { dir: PathBuf, message: String },
    #[error("{case}: {rate:.3} of the attacks failed (budget {budget:.3})")]
    ErrorBudget { case: Case, rate: f64, budget: f64 },
    #[error("{0} of {1} bundles are not functional")]
    NonFunctional(usize, usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

/// Everything a run needs. `seed` replaces the seeds inside `corpus` and
/// `split`, so one number governs all randomness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusSpec,
    /// Existing corpus to use instead of `<out>/corpus`.
    pub corpus_dir: Option<PathBuf>,
    pub split: SplitPlan,
    pub split_mode: SplitMode,
    pub detectors: Vec<DetectorKind>,
    pub cases: Vec<Case>,
    pub train: TrainParams,
    pub out: PathBuf,
    pub strict_functionality: bool,
    /// Largest tolerated share of failed attacks per case.
    pub max_error_rate: f64,
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let e = Experiment::default();
        ExperimentConfig {
            seed: 1,
            corpus: CorpusSpec::default(),
            corpus_dir: None,
            split: e.split,
            split_mode: e.split_mode,
            detectors: e.detectors,
            cases: e.cases,
            train: e.train,
            out: PathBuf::from("gauntlet-out"),
            strict_functionality: false,
            max_error_rate: 0.1,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.seed,
            ..self.corpus.clone()
        }
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            split: SplitPlan {
                seed: self.seed,
                ..self.split
            },
            split_mode: self.split_mode,
            detectors: self.detectors.clone(),
            cases: self.cases.clone(),
            train: self.train,
            seed: self.seed,
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus_dir
            .clone()
            .unwrap_or_else(|| self.out.join("corpus"))
    }

    pub fn models_path(&self) -> PathBuf {
        self.out.join(MODELS_DIR)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub label: Label,
    pub timestamp: i64,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub spec: CorpusSpec,
    pub bundles: Vec<IndexEntry>,
}

pub fn save_corpus(
    bundles: &[Bundle],
    spec: &CorpusSpec,
    dir: &Path,
) -> Result<CorpusIndex, CliError> {
    let entries = bundles
        .par_iter()
        .map(|b| {
            save_bundle(b, &dir.join(&b.id))?;
            Ok(IndexEntry {
                id: b.id.clone(),
                label: b.label,
                timestamp: b.timestamp,
                digest: b.digest(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let index = CorpusIndex {
        spec: spec.clone(),
        bundles: entries,
    };
    write(&dir.join(INDEX_FILE), &pretty(&index))?;
    Ok(index)
}

/// Loads every bundle listed in the index and checks its digest.
pub fn load_corpus(dir: &Path) -> Result<Vec<Bundle>, CliError> {
    let index_path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&index_path).map_err(|e| CliError::Corpus {
        dir: dir.to_path_buf(),
        message: format!("cannot read {INDEX_FILE}: {e}"),
    })?;
    let index: CorpusIndex = serde_json::from_str(&text).map_err(|e| CliError::Corpus {
        dir: dir.to_path_buf(),
        message: format!("{INDEX_FILE}: {e}"),
    })?;
    index
        .bundles
        .par_iter()
        .map(|e| {
            let b = load_bundle(&dir.join(&e.id))?;
            if b.digest() != e.digest {
                return Err(CliError::Corpus {
                    dir: dir.to_path_buf(),
                    message: format!("{} does not match its indexed digest", e.id),
                });
            }
            Ok(b)
        })
        .collect()
}

pub fn cmd_gen_corpus(config: &ExperimentConfig) -> Result<CorpusIndex, CliError> {
    let spec = config.corpus_spec();
    let corpus = generate_corpus(&spec)?;
    save_corpus(&corpus, &spec, &config.corpus_path())
}

fn first_split(corpus: &[Bundle], experiment: &Experiment) -> Result<Vec<Bundle>, CliError> {
    Ok(match experiment.split_mode {
        SplitMode::Temporal => split_dataset(corpus, &experiment.split)?.0,
        SplitMode::FiveFold => five_fold(corpus, experiment.split.seed)?.swap_remove(0).0,
    })
}

/// Trains each configured detector on the first split and writes one model
/// file per detector plus the attacker's benign families.
pub fn cmd_train(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let corpus = load_corpus(&config.corpus_path())?;
    let experiment = config.experiment();
    let train_set = first_split(&corpus, &experiment)?;
    let models: Vec<TrainedDetector> = experiment
        .detectors
        .par_iter()
        .map(|&k| train(k, &train_set, &experiment.train, experiment.seed))
        .collect::<Result<_, _>>()?;
    let dir = config.models_path();
    let mut written = Vec::new();
    for m in &models {
        let path = dir.join(format!(
            "{}.json",
            crate::detectors::Detector::kind(m).key()
        ));
        write(&path, &m.to_json())?;
        written.push(path);
    }
    let path = dir.join(FAMILIES_FILE);
    write(&path, &pretty(&top_benign_families(&train_set)))?;
    written.push(path);
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: AttackKind,
    pub bundle: String,
    pub seed: u64,
    pub before_digest: String,
    pub after_digest: String,
    pub functionality: Functionality,
    pub audit: Vec<Edit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackRun {
    pub output: PathBuf,
    pub audit_path: PathBuf,
    pub record: AttackRecord,
}

fn attacker_model(
    config: &ExperimentConfig,
    model: Option<&Path>,
) -> Result<crate::detectors::DrebinModel, CliError> {
    let saved = config
        .models_path()
        .join(format!("{}.json", DetectorKind::Drebin.key()));
    let path = model
        .map(Path::to_path_buf)
        .or_else(|| saved.exists().then_some(saved));
    if let Some(path) = path {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        return match TrainedDetector::from_json(&text)? {
            TrainedDetector::Drebin(m) => Ok(m),
            other => Err(CliError::Config(format!(
                "{} holds a {} model, not Drebin",
                path.display(),
                crate::detectors::Detector::kind(&other)
            ))),
        };
    }
    let corpus = load_corpus(&config.corpus_path())?;
    let experiment = config.experiment();
    let train_set = first_split(&corpus, &experiment)?;
    Ok(crate::detectors::drebin_train(
        &train_set,
        &experiment.train.drebin,
        experiment.seed,
    )?)
}

fn attacker_families(config: &ExperimentConfig) -> Result<Vec<PermissionFamily>, CliError> {
    let saved = config.models_path().join(FAMILIES_FILE);
    if saved.exists() {
        let text = fs::read_to_string(&saved).map_err(io_err(&saved))?;
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", saved.display())));
    }
    let corpus = load_corpus(&config.corpus_path())?;
    Ok(top_benign_families(&first_split(
        &corpus,
        &config.experiment(),
    )?))
}

/// Attacks one bundle. Attacks needing a Drebin model take `model`, else the
/// trained one under `<out>/models`, else train one from the corpus.
pub fn cmd_attack(
    config: &ExperimentConfig,
    kind: AttackKind,
    bundle_path: &Path,
    model: Option<&Path>,
) -> Result<AttackRun, CliError> {
    let b = load_bundle(bundle_path)?;
    let seed = bundle_seed(config.seed, &b.id);
    let outcome = match kind.tuple().attacker_model {
        AttackerModel::MA => {
            let m = attacker_model(config, model)?;
            apply(
                kind,
                &b,
                AttackInput::Report(&drebin_classify(&m, &b)),
                seed,
            )?
        }
        AttackerModel::DA => apply(
            kind,
            &b,
            AttackInput::Families(&attacker_families(config)?),
            seed,
        )?,
        AttackerModel::ZK => apply(kind, &b, AttackInput::Nothing, seed)?,
    };
    let name = format!("{}.{}", b.id, kind.key());
    let output = config.out.join(ATTACKED_DIR).join(&name);
    save_bundle(&outcome.bundle, &output)?;
    let record = AttackRecord {
        attack: kind,
        bundle: b.id.clone(),
        seed,
        before_digest: b.digest(),
        after_digest: outcome.bundle.digest(),
        functionality: validate_functionality(&outcome.bundle, config.strict_functionality),
        audit: outcome.audit,
    };
    let audit_path = config
        .out
        .join(ATTACKED_DIR)
        .join(format!("{name}.audit.json"));
    write(&audit_path, &pretty(&record))?;
    Ok(AttackRun {
        output,
        audit_path,
        record,
    })
}

/// Runs the experiment and writes `report.json` and `report.csv`. The
/// reports are written even when the error budget is exceeded.
pub fn cmd_evaluate(config: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let corpus = load_corpus(&config.corpus_path())?;
    let report = crate::evaluation::run_evaluation(&corpus, &config.experiment())?;
    write(&config.out.join(REPORT_JSON), &report.to_json())?;
    write(&config.out.join(REPORT_CSV), &report.to_csv())?;
    for &case in &report.experiment.cases {
        let rate = report.error_rate(case);
        if rate > config.max_error_rate {
            return Err(CliError::ErrorBudget {
                case,
                rate,
                budget: config.max_error_rate,
            });
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub n_bundles: usize,
    pub protection: ProtectionStats,
    pub families: Vec<PermissionFamily>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub benign: LabelStats,
    pub malicious: LabelStats,
}

const STATS_FAMILIES: usize = 10;

pub fn cmd_stats(config: &ExperimentConfig) -> Result<CorpusStats, CliError> {
    let corpus = load_corpus(&config.corpus_path())?;
    let of = |label: Label| {
        let subset: Vec<Bundle> = corpus
            .iter()
            .filter(|b| b.label == label)
            .cloned()
            .collect();
        let mut families = permission_families(&subset, FAMILY_MAX_SIZE, FAMILY_MIN_SUPPORT);
        families.truncate(STATS_FAMILIES);
        LabelStats {
            n_bundles: subset.len(),
            protection: protection_stats(&subset),
            families,
        }
    };
    let stats = CorpusStats {
        benign: of(Label::Benign),
        malicious: of(Label::Malicious),
    };
    write(&config.out.join(STATS_FILE), &pretty(&stats))?;
    Ok(stats)
}

pub fn cmd_validate(
    config: &ExperimentConfig,
    paths: &[PathBuf],
) -> Result<Vec<(String, Functionality)>, CliError> {
    paths
        .par_iter()
        .map(|p| {
            let b = load_bundle(p)?;
            Ok((
                b.id.clone(),
                validate_functionality(&b, config.strict_functionality),
            ))
        })
        .collect()
}

fn verdict(f: &Functionality) -> String {
    match f {
        Functionality::Functional => "functional".into(),
        Functionality::NonFunctional(r) => {
            let r = serde_json::to_value(r).expect("serializes");
            match r.get("detail").and_then(|d| d.as_str()) {
                Some(d) => format!(
                    "non-functional ({}: {d})",
                    r["reason"].as_str().unwrap_or_default()
                ),
                None => format!(
                    "non-functional ({})",
                    r["reason"].as_str().unwrap_or_default()
                ),
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gauntlet",
    version,
    about = "Evasion attacks against permission-based Android malware detectors"
)]
pub struct Cli {
    /// JSON config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Treat XInclude as breaking the app.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Corpus directory, default `<out>/corpus`.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated cases, e.g. `original,sb`.
    #[arg(long, global = true, value_delimiter = ',', value_parser = str::parse::<Case>)]
    pub cases: Option<Vec<Case>>,
    /// Comma-separated detectors, e.g. `kirin,famous`.
    #[arg(long, global = true, value_delimiter = ',', value_parser = str::parse::<DetectorKind>)]
    pub detectors: Option<Vec<DetectorKind>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    GenCorpus,
    /// Train the detectors and save them under `<out>/models`.
    Train,
    /// Attack one bundle directory.
    Attack {
        #[arg(value_parser = str::parse::<AttackKind>)]
        attack: AttackKind,
        bundle: PathBuf,
        /// Drebin model file for the attacks that need one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run every case against every detector.
    Evaluate,
    /// Protection levels and permission families of the corpus.
    Stats,
    /// Check bundles with the functionality proxy.
    Validate {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
    },
}

impl Cli {
    pub fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(j) = self.jobs {
            c.jobs = Some(j);
        }
        if self.strict {
            c.strict_functionality = true;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if let Some(d) = &self.corpus {
            c.corpus_dir = Some(d.clone());
        }
        if let Some(v) = &self.cases {
            c.cases = v.clone();
        }
        if let Some(v) = &self.detectors {
            c.detectors = v.clone();
        }
        Ok(c)
    }
}

macro_rules! emit {
    ($out:expr, $($arg:tt)*) => {{
        $out.push_str(&format!($($arg)*));
        $out.push('\n');
    }};
}

fn dispatch(
    command: &Command,
    config: &ExperimentConfig,
    out: &mut String,
) -> Result<(), CliError> {
    match command {
        Command::GenCorpus => {
            let index = cmd_gen_corpus(config)?;
            emit!(
                out,
                "wrote {} bundles to {}",
                index.bundles.len(),
                config.corpus_path().display()
            );
        }
        Command::Train => {
            for p in cmd_train(config)? {
                emit!(out, "{}", p.display());
            }
        }
        Command::Attack {
            attack,
            bundle,
            model,
        } => {
            let run = cmd_attack(config, *attack, bundle, model.as_deref())?;
            emit!(out, "{}", run.output.display());
            emit!(
                out,
                "{} edits, audit {}",
                run.record.audit.len(),
                run.audit_path.display()
            );
            emit!(out, "{}", verdict(&run.record.functionality));
        }
        Command::Evaluate => {
            let report = cmd_evaluate(config)?;
            out.push_str(&report.to_csv());
            for (case, f) in &report.functionality {
                emit!(
                    out,
                    "{case}: functional {:.3} (strict {:.3}), errors {}",
                    f.lax,
                    f.strict,
                    f.n_errors
                );
            }
        }
        Command::Stats => {
            let s = cmd_stats(config)?;
            for (name, l) in [("benign", &s.benign), ("malicious", &s.malicious)] {
                emit!(out, "{name}: {} bundles", l.n_bundles);
                for (level, share) in &l.protection.dominant {
                    emit!(out, "  dominant {level:?} {share:.3}");
                }
                for f in l.families.iter().take(3) {
                    let members: Vec<&str> = f.members.iter().map(|p| p.short()).collect();
                    emit!(out, "  {{{}}} {:.3}", members.join(", "), f.support);
                }
            }
        }
        Command::Validate { bundles } => {
            let results = cmd_validate(config, bundles)?;
            let bad = results.iter().filter(|(_, f)| !f.is_functional()).count();
            for (id, f) in &results {
                emit!(out, "{id}: {}", verdict(f));
            }
            if bad > 0 {
                return Err(CliError::NonFunctional(bad, results.len()));
            }
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = cli.config()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = String::new();
    let result = pool.install(|| dispatch(&cli.command, &config, &mut out));
    match std::io::stdout().lock().write_all(out.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(io_err(Path::new("<stdout>"))(e))
        }
        _ => result,
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gauntlet: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::PermissionTagKind;

    fn config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            corpus: CorpusSpec {
                n_benign: 270,
                n_malicious: 30,
                ..CorpusSpec::default()
            },
            out: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("gauntlet").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(
            serde_json::from_str::<ExperimentConfig>("{}").unwrap(),
            ExperimentConfig::default()
        );
        let c = ExperimentConfig::default();
        assert_eq!(
            serde_json::from_str::<ExperimentConfig>(&pretty(&c)).unwrap(),
            c
        );
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sede": 3}"#).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"seed": 5, "cases": ["mb1", "mb2"], "out": "x"}"#).unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["--config", p, "evaluate"]).config().unwrap();
        assert_eq!(
            (c.seed, c.cases.len(), c.out.as_path()),
            (5, 2, Path::new("x"))
        );
        let c = parse(&[
            "--config",
            p,
            "--seed",
            "9",
            "--cases",
            "SB",
            "--detectors",
            "kirin,pbamd",
            "--strict",
            "evaluate",
        ])
        .config()
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.cases, vec![Case::Attack(AttackKind::Sb)]);
        assert_eq!(c.detectors, vec![DetectorKind::Kirin, DetectorKind::Pbamd]);
        assert!(c.strict_functionality);
        assert_eq!(c.experiment().split.seed, 9);
        assert_eq!(c.corpus_spec().seed, 9);
    }

    #[test]
    fn bad_arguments_are_usage_errors() {
        let err = |args: &[&str]| {
            Cli::try_parse_from(std::iter::once("gauntlet").chain(args.iter().copied()))
                .unwrap_err()
        };
        assert_eq!(
            err(&["attack", "mb9", "x"]).kind(),
            clap::error::ErrorKind::ValueValidation
        );
        assert_eq!(
            err(&["--cases", "mb7", "evaluate"]).kind(),
            clap::error::ErrorKind::ValueValidation
        );
        assert_eq!(
            err(&["validate"]).kind(),
            clap::error::ErrorKind::MissingRequiredArgument
        );
    }

    #[test]
    fn corpus_index_is_seeded() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ia = cmd_gen_corpus(&config(a.path())).unwrap();
        let ib = cmd_gen_corpus(&config(b.path())).unwrap();
        assert_eq!(ia, ib);
        assert_eq!(ia.bundles.len(), 300);
        let c = ExperimentConfig {
            seed: 2,
            ..config(b.path())
        };
        assert_ne!(cmd_gen_corpus(&c).unwrap(), ia);
        let loaded = load_corpus(&a.path().join("corpus")).unwrap();
        assert_eq!(
            loaded,
            generate_corpus(&config(a.path()).corpus_spec()).unwrap()
        );
    }

    #[test]
    fn no_malicious_bundles_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path());
        c.corpus.n_malicious = 0;
        assert!(matches!(
            cmd_gen_corpus(&c),
            Err(CliError::Bundle(BundleError::InvalidSpec(_)))
        ));
    }

    #[test]
    fn missing_or_tampered_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        assert!(matches!(cmd_evaluate(&c), Err(CliError::Corpus { .. })));
        let index = cmd_gen_corpus(&c).unwrap();
        let meta = c
            .corpus_path()
            .join(&index.bundles[0].id)
            .join(crate::bundle::META_FILE);
        let text = fs::read_to_string(&meta)
            .unwrap()
            .replace("\"timestamp\": ", "\"timestamp\": 1");
        fs::write(&meta, text).unwrap();
        assert!(matches!(
            load_corpus(&c.corpus_path()),
            Err(CliError::Corpus { .. })
        ));
    }

    #[test]
    fn evaluate_writes_reports_and_repeats_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig {
            cases: vec![Case::Original, Case::Attack(AttackKind::Sb)],
            ..config(dir.path())
        };
        cmd_gen_corpus(&c).unwrap();
        let report = cmd_evaluate(&c).unwrap();
        let first = fs::read(dir.path().join(REPORT_JSON)).unwrap();
        cmd_evaluate(&c).unwrap();
        assert_eq!(fs::read(dir.path().join(REPORT_JSON)).unwrap(), first);
        let csv = fs::read_to_string(dir.path().join(REPORT_CSV)).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(
            report.rate(Case::Original, DetectorKind::Kirin),
            report.rate(Case::Attack(AttackKind::Sb), DetectorKind::Kirin)
        );
    }

    #[test]
    fn attack_fixture_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        cmd_gen_corpus(&c).unwrap();
        let written = cmd_train(&c).unwrap();
        assert_eq!(written.len(), 5);
        let path = dir.path().join("fixture");
        save_bundle(&crate::bundle::tests::fixture(), &path).unwrap();

        let run = cmd_attack(&c, AttackKind::Mb4, &path, None).unwrap();
        let attacked = load_bundle(&run.output).unwrap();
        assert!(attacked
            .manifest
            .permissions()
            .all(|p| p.tag_kind == PermissionTagKind::UsesPermissionSdk23));
        assert!(run.record.functionality.is_functional());
        let audit: AttackRecord =
            serde_json::from_str(&fs::read_to_string(&run.audit_path).unwrap()).unwrap();
        assert_eq!(audit, run.record);

        let run = cmd_attack(&c, AttackKind::Sb, &path, None).unwrap();
        let manifest = fs::read_to_string(run.output.join(crate::bundle::MANIFEST_FILE)).unwrap();
        assert!(manifest.contains("aHR0cDovL2FiYy5jb20="));

        let run = cmd_attack(&c, AttackKind::Mb3, &path, None).unwrap();
        assert_eq!(run.record.bundle, "fixture");
    }

    #[test]
    fn attack_with_explicit_model_needs_drebin() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        let path = dir.path().join("fixture");
        save_bundle(&crate::bundle::tests::fixture(), &path).unwrap();
        assert!(cmd_attack(&c, AttackKind::Mb2, &path, None).is_err());
        let kirin = dir.path().join("kirin.json");
        fs::write(&kirin, TrainedDetector::Kirin.to_json()).unwrap();
        assert!(matches!(
            cmd_attack(&c, AttackKind::Mb2, &path, Some(&kirin)),
            Err(CliError::Config(_))
        ));
        assert!(cmd_attack(&c, AttackKind::Mb4, &path, None).is_ok());
    }

    #[test]
    fn validate_and_stats() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path());
        let index = cmd_gen_corpus(&c).unwrap();
        let s = cmd_stats(&c).unwrap();
        assert_eq!((s.benign.n_bundles, s.malicious.n_bundles), (270, 30));
        assert!(s.benign.protection.dominant[&crate::tables::ProtectionLevel::Normal] > 0.6);
        assert!(dir.path().join(STATS_FILE).is_file());

        let paths: Vec<PathBuf> = index
            .bundles
            .iter()
            .take(3)
            .map(|e| c.corpus_path().join(&e.id))
            .collect();
        let v = cmd_validate(&c, &paths).unwrap();
        assert!(v.iter().all(|(_, f)| f.is_functional()));
        let path = dir.path().join("fixture");
        save_bundle(&crate::bundle::tests::fixture(), &path).unwrap();
        let run = cmd_attack(&c, AttackKind::Mb1, &path, None).unwrap();
        c.strict_functionality = true;
        let v = cmd_validate(&c, &[run.output]).unwrap();
        assert!(matches!(&v[0].1, Functionality::NonFunctional(_)));
        assert!(verdict(&v[0].1).starts_with("non-functional (x_include_ignored"));
    }
}
