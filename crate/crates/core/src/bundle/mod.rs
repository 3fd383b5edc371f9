//! One app in depackaged textual form, and corpora of them.

mod generate;
mod split;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::manifest::{parse_manifest, serialize_manifest, ManifestDoc, ManifestError};
use crate::smali::{parse_smali, serialize_smali, SmaliProgram};

pub use generate::{generate_corpus, kirin_combos, CorpusSpec, FamilyProfile};
pub use split::{five_fold, split_dataset, Fold, SplitPlan};

pub const MANIFEST_FILE: &str = "AndroidManifest.xml";
pub const META_FILE: &str = "meta.json";
pub const SMALI_DIR: &str = "smali";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: PathBuf,
        line: u32,
        column: u32,
        message: String,
    },
    #[error("meta.json: {0}")]
    MetaSchema(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
    Unknown,
}

impl Label {
    /// Drebin's encoding: -1 benign, 1 malicious, 0 when unknown.
    pub fn as_signed(self) -> i8 {
        match self {
            Label::Benign => -1,
            Label::Malicious => 1,
            Label::Unknown => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub id: String,
    pub label: Label,
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bundle {
    pub id: String,
    pub label: Label,
    pub timestamp: i64,
    pub manifest: ManifestDoc,
    pub smali: SmaliProgram,
    /// XInclude targets keyed by href (relative to the bundle root), raw XML.
    pub include_files: BTreeMap<String, String>,
}

impl Bundle {
    pub fn meta(&self) -> Meta {
        Meta {
            id: self.id.clone(),
            label: self.label,
            timestamp: self.timestamp,
        }
    }

    /// Every file of the bundle as (relative path, contents), sorted by path.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut meta = serde_json::to_string_pretty(&self.meta()).expect("meta serializes");
        meta.push('\n');
        let mut out = vec![
            (
                MANIFEST_FILE.to_string(),
                serialize_manifest(&self.manifest),
            ),
            (META_FILE.to_string(), meta),
        ];
        for (path, file) in &self.smali.files {
            out.push((format!("{SMALI_DIR}/{path}"), serialize_smali(file)));
        }
        for (href, xml) in &self.include_files {
            out.push((href.clone(), xml.clone()));
        }
        out.sort();
        out
    }

    /// SHA-256 over every file path and its contents.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (path, text) in self.files() {
            h.update((path.len() as u64).to_le_bytes());
            h.update(path.as_bytes());
            h.update((text.len() as u64).to_le_bytes());
            h.update(text.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn read_text(path: &Path) -> Result<String, BundleError> {
    if !path.exists() {
        return Err(BundleError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

fn manifest_parse_error(file: &Path, e: ManifestError) -> BundleError {
    let (line, column) = match &e {
        ManifestError::XmlSyntax { line, column, .. } => (*line, *column),
        _ => (1, 1),
    };
    BundleError::Parse {
        file: file.to_path_buf(),
        line,
        column,
        message: e.to_string(),
    }
}

fn collect_smali(dir: &Path, rel: &str, out: &mut SmaliProgram) -> Result<(), BundleError> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        let rel_path = if rel.is_empty() {
            name
        } else {
            format!("{rel}/{name}")
        };
        if path.is_dir() {
            collect_smali(&path, &rel_path, out)?;
        } else if rel_path.ends_with(".smali") {
            let text = read_text(&path)?;
            out.files.insert(rel_path, parse_smali(&text));
        }
    }
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<Bundle, BundleError> {
    let manifest_path = path.join(MANIFEST_FILE);
    let meta_path = path.join(META_FILE);
    let smali_path = path.join(SMALI_DIR);
    let manifest_text = read_text(&manifest_path)?;
    let meta_text = read_text(&meta_path)?;
    if !smali_path.is_dir() {
        return Err(BundleError::MissingFile(smali_path));
    }

    let meta: Meta =
        serde_json::from_str(&meta_text).map_err(|e| BundleError::MetaSchema(e.to_string()))?;
    if meta.id.is_empty() {
        return Err(BundleError::MetaSchema("empty id".into()));
    }
    let manifest =
        parse_manifest(&manifest_text).map_err(|e| manifest_parse_error(&manifest_path, e))?;

    let mut smali = SmaliProgram::default();
    collect_smali(&smali_path, "", &mut smali)?;

    let mut include_files = BTreeMap::new();
    let inc_dir = path.join(crate::manifest::INCLUDE_DIR);
    if inc_dir.is_dir() {
        let mut names: Vec<_> = fs::read_dir(&inc_dir)
            .map_err(io_err(&inc_dir))?
            .collect::<Result<Vec<_>, _>>()
            .map_err(io_err(&inc_dir))?
            .into_iter()
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".xml"))
            .collect();
        names.sort();
        for name in names {
            let href = format!("{}/{name}", crate::manifest::INCLUDE_DIR);
            include_files.insert(href.clone(), read_text(&path.join(&href))?);
        }
    }
    for inc in manifest.includes() {
        if include_files.contains_key(&inc.href) {
            continue;
        }
        let p = path.join(&inc.href);
        if p.is_file() {
            include_files.insert(inc.href.clone(), read_text(&p)?);
        }
    }

    Ok(Bundle {
        id: meta.id,
        label: meta.label,
        timestamp: meta.timestamp,
        manifest,
        smali,
        include_files,
    })
}

/// Writes the bundle under `path`, replacing any earlier bundle there.
pub fn save_bundle(b: &Bundle, path: &Path) -> Result<(), BundleError> {
    for sub in [SMALI_DIR, crate::manifest::INCLUDE_DIR] {
        let p = path.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(io_err(&p))?;
        }
    }
    let smali_dir = path.join(SMALI_DIR);
    fs::create_dir_all(&smali_dir).map_err(io_err(&smali_dir))?;
    for (rel, text) in b.files() {
        let p = path.join(&rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&p, text).map_err(io_err(&p))?;
    }
    Ok(())
}
