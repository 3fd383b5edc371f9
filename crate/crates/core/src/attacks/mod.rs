//! The six evasion attacks and the structural functionality check.
//!
//! Manifest attacks hide permission requests and components from the legacy
//! extractor; the smali attack hides strings and API names behind base64,
//! reflection and manifest meta-data pockets.

mod validate;

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bundle::{Bundle, Label, MANIFEST_FILE, SMALI_DIR};
use crate::detectors::DrebinReport;
use crate::evaluation::PermissionFamily;
use crate::features::{Category, DrebinObservation};
use crate::manifest::{
    extract_to_include, insert_pocket, serialize_manifest, to_group, to_sdk23, ComponentKind,
    ExtractTarget, ManifestDoc, ManifestError, PermissionName, PermissionRequest,
    PermissionTagKind,
};
use crate::smali::{
    encode_string, find_targets, pocket_fetch_code, pocket_helper, reflect_call, serialize_smali,
    SmaliError, SmaliFile, Statement, Target, TargetKind, POCKET_HELPER_PATH, REFLECT_NAME_OFFSET,
};
use crate::tables::Tables;

pub use validate::{validate_functionality, Functionality, NonFunctionalReason};

#[derive(Debug, Error)]
pub enum ManipulationError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Smali { path: String, source: SmaliError },
    #[error("no permission families to mimic")]
    NoFamilies,
    #[error("{0} needs {1}")]
    MissingInput(AttackKind, &'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackerModel {
    /// Knows the model and gets its reports.
    MA,
    /// Knows the benign training data.
    DA,
    /// Knows nothing.
    ZK,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttackTuple {
    pub attacker_model: AttackerModel,
    pub smali_access: bool,
    pub manifest_access: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Mb1,
    Mb2,
    Mb3,
    Mb4,
    Sb,
    Combined,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Mb1,
        AttackKind::Mb2,
        AttackKind::Mb3,
        AttackKind::Mb4,
        AttackKind::Sb,
        AttackKind::Combined,
    ];

    pub fn tuple(self) -> AttackTuple {
        let (attacker_model, smali_access, manifest_access) = match self {
            AttackKind::Mb1 | AttackKind::Mb2 => (AttackerModel::MA, false, true),
            AttackKind::Mb3 => (AttackerModel::DA, false, true),
            AttackKind::Mb4 => (AttackerModel::ZK, false, true),
            AttackKind::Sb => (AttackerModel::MA, true, false),
            AttackKind::Combined => (AttackerModel::MA, true, true),
        };
        AttackTuple {
            attacker_model,
            smali_access,
            manifest_access,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            AttackKind::Mb1 => "mb1",
            AttackKind::Mb2 => "mb2",
            AttackKind::Mb3 => "mb3",
            AttackKind::Mb4 => "mb4",
            AttackKind::Sb => "sb",
            AttackKind::Combined => "combined",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            AttackKind::Mb1 => "MB1",
            AttackKind::Mb2 => "MB2",
            AttackKind::Mb3 => "MB3",
            AttackKind::Mb4 => "MB4",
            AttackKind::Sb => "SB",
            AttackKind::Combined => "Combined",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        AttackKind::ALL
            .into_iter()
            .find(|k| k.key() == lower)
            .ok_or_else(|| format!("unknown attack `{s}`"))
    }
}

/// One applied rewrite, with sha256 digests of the touched file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: String,
    pub location: String,
    pub before_digest: Option<String>,
    pub after_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub bundle: Bundle,
    pub audit: Vec<Edit>,
}

/// What the attacker model hands to an attack.
#[derive(Clone, Copy, Debug)]
pub enum AttackInput<'a> {
    Report(&'a DrebinReport),
    Families(&'a [PermissionFamily]),
    Nothing,
}

fn sha(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A bundle under rewrite plus the edits applied so far.
struct Work {
    bundle: Bundle,
    audit: Vec<Edit>,
}

impl Work {
    fn new(b: &Bundle) -> Self {
        let mut bundle = b.clone();
        bundle.label = Label::Unknown;
        Work {
            bundle,
            audit: Vec::new(),
        }
    }

    fn set_manifest(&mut self, kind: &str, what: String, doc: ManifestDoc) {
        let before = sha(&serialize_manifest(&self.bundle.manifest));
        self.bundle.manifest = doc;
        self.audit.push(Edit {
            kind: kind.into(),
            location: format!("{MANIFEST_FILE}: {what}"),
            before_digest: Some(before),
            after_digest: sha(&serialize_manifest(&self.bundle.manifest)),
        });
    }

    fn set_smali(&mut self, kind: &str, path: &str, index: usize, file: SmaliFile) {
        let before = self
            .bundle
            .smali
            .files
            .get(path)
            .map(|f| sha(&serialize_smali(f)));
        let after = sha(&serialize_smali(&file));
        self.bundle.smali.files.insert(path.to_string(), file);
        self.audit.push(Edit {
            kind: kind.into(),
            location: format!("{SMALI_DIR}/{path}:{index}"),
            before_digest: before,
            after_digest: after,
        });
    }

    fn extract(&mut self, target: ExtractTarget<'_>) -> Result<(), ManipulationError> {
        let what = match target {
            ExtractTarget::Permission(p) => format!("{} {}", p.tag_kind.element_name(), p.name),
            ExtractTarget::Component { kind, name } => format!("{} {name}", kind.element_name()),
        };
        let (doc, file) = extract_to_include(&self.bundle.manifest, target)?;
        self.set_manifest("extract_to_include", what, doc);
        self.audit.push(Edit {
            kind: "add_include".into(),
            location: file.path.clone(),
            before_digest: self.bundle.include_files.get(&file.path).map(|t| sha(t)),
            after_digest: sha(&file.xml),
        });
        self.bundle.include_files.insert(file.path, file.xml);
        Ok(())
    }

    fn conceal(&mut self, name: &PermissionName) -> Result<(), ManipulationError> {
        let p = PermissionRequest::new(PermissionTagKind::UsesPermission, name.as_str());
        while self
            .bundle
            .manifest
            .permissions()
            .any(|q| q.tag_kind == p.tag_kind && q.name == p.name)
        {
            let doc = to_sdk23(&self.bundle.manifest, &p)?;
            self.set_manifest("to_sdk23", format!("uses-permission {name}"), doc);
        }
        Ok(())
    }

    fn finish(self) -> AttackOutcome {
        AttackOutcome {
            bundle: self.bundle,
            audit: self.audit,
        }
    }
}

fn flagged(report: &DrebinReport) -> Vec<&DrebinObservation> {
    report.flagged().collect()
}

fn component_kind(c: Category) -> Option<ComponentKind> {
    match c {
        Category::ActivityList => Some(ComponentKind::Activity),
        Category::ServiceList => Some(ComponentKind::Service),
        Category::BroadcastReceiverList => Some(ComponentKind::Receiver),
        _ => None,
    }
}

fn manifest_side(
    w: &mut Work,
    obs: &[&DrebinObservation],
    rng: &mut ChaCha8Rng,
) -> Result<(), ManipulationError> {
    for o in obs {
        let value = o.feature.value().to_string();
        if let Some(kind) = component_kind(o.category) {
            while w
                .bundle
                .manifest
                .components()
                .any(|c| c.kind == kind && c.name == value)
            {
                w.extract(ExtractTarget::Component { kind, name: &value })?;
            }
            continue;
        }
        match o.category {
            Category::IntentActionList => loop {
                let Some((kind, name)) = w
                    .bundle
                    .manifest
                    .components()
                    .find(|c| c.intent_actions().any(|a| a == value))
                    .map(|c| (c.kind, c.name.clone()))
                else {
                    break;
                };
                w.extract(ExtractTarget::Component { kind, name: &name })?;
            },
            Category::RequestedPermissionList => {
                let p = PermissionRequest::new(PermissionTagKind::UsesPermission, value.as_str());
                while w
                    .bundle
                    .manifest
                    .permissions()
                    .any(|q| q.tag_kind == p.tag_kind && q.name == p.name)
                {
                    let use_group =
                        rng.gen_bool(0.5) && Tables::global().group_of(&value).is_some();
                    if use_group {
                        let doc = to_group(&w.bundle.manifest, &p)?;
                        w.set_manifest("to_group", format!("uses-permission {value}"), doc);
                    } else {
                        w.extract(ExtractTarget::Permission(&p))?;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Names `find_targets` should look for to remove a smali-side observation:
/// string fragments for URLs, call names for API observations.
fn smali_needles(o: &DrebinObservation) -> (Vec<String>, Vec<String>) {
    let value = o.feature.value();
    match o.category {
        Category::URLDomainList => (vec![value.to_string()], vec![]),
        Category::SuspiciousApiList | Category::RestrictedApiList => {
            (vec![], vec![value.to_string()])
        }
        Category::UsedPermissionsList => (
            vec![],
            Tables::global()
                .api_entries()
                .iter()
                .filter(|e| e.permission == value)
                .map(|e| format!("{}->{}", e.class, e.method))
                .collect(),
        ),
        _ => (vec![], vec![]),
    }
}

fn pocket_name(value: &str) -> String {
    format!("gp_{}", &sha(value)[..8])
}

fn smali_err(path: &str) -> impl Fn(SmaliError) -> ManipulationError + '_ {
    move |source| ManipulationError::Smali {
        path: path.to_string(),
        source,
    }
}

fn pocket(w: &mut Work, path: &str, index: usize, value: &str) -> Result<(), ManipulationError> {
    let (doc, name) = insert_pocket(&w.bundle.manifest, &pocket_name(value), value);
    w.set_manifest("insert_pocket", format!("meta-data {name}"), doc);
    let file =
        pocket_fetch_code(&w.bundle.smali.files[path], index, &name).map_err(smali_err(path))?;
    w.set_smali("pocket_fetch_code", path, index, file);
    Ok(())
}

fn smali_side(w: &mut Work, obs: &[&DrebinObservation]) -> Result<(), ManipulationError> {
    let (mut strings, mut calls) = (Vec::new(), Vec::new());
    for o in obs {
        let (s, c) = smali_needles(o);
        strings.extend(s);
        calls.extend(c);
    }
    let program = &w.bundle.smali;
    let mut targets: Vec<Target> = find_targets(program, &strings)
        .into_iter()
        .filter(|t| t.kind != TargetKind::ApiCall)
        .chain(
            find_targets(program, &calls)
                .into_iter()
                .filter(|t| t.kind == TargetKind::ApiCall),
        )
        .filter(|t| t.path != POCKET_HELPER_PATH)
        .collect();
    targets.sort_by(|a, b| a.path.cmp(&b.path).then(b.index.cmp(&a.index)));
    targets.dedup_by(|a, b| a.path == b.path && a.index == b.index);
    if targets.is_empty() {
        return Ok(());
    }

    for t in &targets {
        let path = t.path.as_str();
        let file = &w.bundle.smali.files[path];
        match &file.statements[t.index].stmt {
            Statement::Invoke { method, .. } => {
                let encoded = BASE64.encode(&method.method_name);
                let out = reflect_call(file, t.index, &encoded).map_err(smali_err(path))?;
                w.set_smali("reflect_call", path, t.index, out);
                pocket(w, path, t.index + REFLECT_NAME_OFFSET, &encoded)?;
            }
            Statement::ConstString { .. } => {
                let out = encode_string(file, t.index).map_err(smali_err(path))?;
                let Statement::ConstString { literal, .. } = &out.statements[t.index].stmt else {
                    unreachable!("encode_string keeps the const-string in place");
                };
                let encoded = literal.clone();
                w.set_smali("encode_string", path, t.index, out);
                pocket(w, path, t.index, &encoded)?;
            }
            _ => unreachable!("find_targets only returns strings and calls"),
        }
    }
    if !w.bundle.smali.files.contains_key(POCKET_HELPER_PATH) {
        w.set_smali("add_pocket_helper", POCKET_HELPER_PATH, 0, pocket_helper());
    }
    Ok(())
}

/// Hides every flagged manifest observation: components (and the
/// components carrying a flagged intent action) go to include files;
/// permissions flip a seeded coin between an include file and their group
/// constant, falling back to the include when there is no group.
pub fn mb1(
    b: &Bundle,
    report: &DrebinReport,
    seed: u64,
) -> Result<AttackOutcome, ManipulationError> {
    let mut w = Work::new(b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    manifest_side(&mut w, &flagged(report), &mut rng)?;
    Ok(w.finish())
}

/// Turns every flagged permission request into `uses-permission-sdk-23`.
pub fn mb2(b: &Bundle, report: &DrebinReport) -> Result<AttackOutcome, ManipulationError> {
    let mut w = Work::new(b);
    for o in flagged(report) {
        if o.category == Category::RequestedPermissionList {
            w.conceal(&PermissionName::new(o.feature.value()))?;
        }
    }
    Ok(w.finish())
}

/// Picks one of the given benign families and conceals every request
/// outside it.
pub fn mb3(
    b: &Bundle,
    families: &[PermissionFamily],
    seed: u64,
) -> Result<AttackOutcome, ManipulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = families
        .choose(&mut rng)
        .ok_or(ManipulationError::NoFamilies)?;
    let mut w = Work::new(b);
    let outside: Vec<PermissionName> = b
        .manifest
        .permissions()
        .filter(|p| {
            p.tag_kind == PermissionTagKind::UsesPermission && !family.members.contains(&p.name)
        })
        .map(|p| p.name.clone())
        .collect();
    for name in &outside {
        w.conceal(name)?;
    }
    Ok(w.finish())
}

/// Conceals every `uses-permission` tag.
pub fn mb4(b: &Bundle) -> Result<AttackOutcome, ManipulationError> {
    let mut w = Work::new(b);
    let all: Vec<PermissionName> = b
        .manifest
        .permissions()
        .filter(|p| p.tag_kind == PermissionTagKind::UsesPermission)
        .map(|p| p.name.clone())
        .collect();
    for name in &all {
        w.conceal(name)?;
    }
    Ok(w.finish())
}

/// Encodes flagged strings, reflects flagged calls and moves the encoded
/// values into manifest pockets. Permission tags are never touched.
pub fn sb(b: &Bundle, report: &DrebinReport) -> Result<AttackOutcome, ManipulationError> {
    let mut w = Work::new(b);
    smali_side(&mut w, &flagged(report))?;
    Ok(w.finish())
}

/// SB on the smali-side observations, then MB1 on the manifest-side ones.
pub fn combined(
    b: &Bundle,
    report: &DrebinReport,
    seed: u64,
) -> Result<AttackOutcome, ManipulationError> {
    let (manifest, smali): (Vec<&DrebinObservation>, Vec<&DrebinObservation>) = report
        .flagged()
        .partition(|o| o.category.is_manifest_side());
    let mut w = Work::new(b);
    smali_side(&mut w, &smali)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    manifest_side(&mut w, &manifest, &mut rng)?;
    Ok(w.finish())
}

pub fn apply(
    kind: AttackKind,
    b: &Bundle,
    input: AttackInput<'_>,
    seed: u64,
) -> Result<AttackOutcome, ManipulationError> {
    match (kind, input) {
        (AttackKind::Mb1, AttackInput::Report(r)) => mb1(b, r, seed),
        (AttackKind::Mb2, AttackInput::Report(r)) => mb2(b, r),
        (AttackKind::Sb, AttackInput::Report(r)) => sb(b, r),
        (AttackKind::Combined, AttackInput::Report(r)) => combined(b, r, seed),
        (AttackKind::Mb3, AttackInput::Families(f)) => mb3(b, f, seed),
        (AttackKind::Mb4, _) => mb4(b),
        (AttackKind::Mb3, _) => Err(ManipulationError::MissingInput(kind, "permission families")),
        (_, _) => Err(ManipulationError::MissingInput(kind, "a Drebin report")),
    }
}
