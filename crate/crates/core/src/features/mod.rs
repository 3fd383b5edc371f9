//! Feature extraction. `extract_legacy` replicates what an Androguard-based
//! pipeline sees; `extract_full` is the ground truth used for audits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::Bundle;
use crate::manifest::{
    parse_fragment, Component, ComponentKind, ManifestError, Node, PermissionName,
    PermissionTagKind,
};
use crate::smali::{literal_kind, SmaliProgram, Statement, TargetKind};
use crate::tables::Tables;

#[derive(Debug, Error, PartialEq)]
pub enum FeaturesError {
    #[error("include {0} has no file in the bundle")]
    UnresolvedInclude(String),
    #[error("include {href}: {source}")]
    IncludeParse {
        href: String,
        #[source]
        source: ManifestError,
    },
}

/// The nine report categories. The serialized names are the report keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    IntentActionList,
    ServiceList,
    ActivityList,
    BroadcastReceiverList,
    RequestedPermissionList,
    SuspiciousApiList,
    RestrictedApiList,
    UsedPermissionsList,
    URLDomainList,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::IntentActionList,
        Category::ServiceList,
        Category::ActivityList,
        Category::BroadcastReceiverList,
        Category::RequestedPermissionList,
        Category::SuspiciousApiList,
        Category::RestrictedApiList,
        Category::UsedPermissionsList,
        Category::URLDomainList,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Category::IntentActionList => "IntentActionList",
            Category::ServiceList => "ServiceList",
            Category::ActivityList => "ActivityList",
            Category::BroadcastReceiverList => "BroadcastReceiverList",
            Category::RequestedPermissionList => "RequestedPermissionList",
            Category::SuspiciousApiList => "SuspiciousApiList",
            Category::RestrictedApiList => "RestrictedApiList",
            Category::UsedPermissionsList => "UsedPermissionsList",
            Category::URLDomainList => "URLDomainList",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Category::ALL.into_iter().find(|c| c.key() == key)
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Category::IntentActionList => "intent:",
            Category::ServiceList => "comp:service:",
            Category::ActivityList => "comp:activity:",
            Category::BroadcastReceiverList => "comp:receiver:",
            Category::RequestedPermissionList => "perm:",
            Category::SuspiciousApiList => "api:",
            Category::RestrictedApiList => "restricted:",
            Category::UsedPermissionsList => "used:",
            Category::URLDomainList => "url:",
        }
    }

    /// Whether the observation lives in the manifest (as opposed to smali).
    pub fn is_manifest_side(self) -> bool {
        matches!(
            self,
            Category::IntentActionList
                | Category::ServiceList
                | Category::ActivityList
                | Category::BroadcastReceiverList
                | Category::RequestedPermissionList
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Namespaced feature name, e.g. `perm:android.permission.INTERNET`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(String);

impl FeatureId {
    pub fn from_raw(s: impl Into<String>) -> Self {
        FeatureId(s.into())
    }

    pub fn in_category(category: Category, value: &str) -> Self {
        FeatureId(format!("{}{value}", category.prefix()))
    }

    pub fn perm(name: &str) -> Self {
        Self::in_category(Category::RequestedPermissionList, name)
    }

    pub fn intent(action: &str) -> Self {
        Self::in_category(Category::IntentActionList, action)
    }

    pub fn component(kind: ComponentKind, name: &str) -> Self {
        FeatureId(format!("comp:{}:{name}", kind.element_name()))
    }

    pub fn api(method: &str) -> Self {
        Self::in_category(Category::SuspiciousApiList, method)
    }

    pub fn restricted(class: &str, method: &str) -> Self {
        FeatureId(format!("restricted:{class}->{method}"))
    }

    pub fn used(permission: &str) -> Self {
        Self::in_category(Category::UsedPermissionsList, permission)
    }

    pub fn url(host: &str) -> Self {
        Self::in_category(Category::URLDomainList, host)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn category(&self) -> Option<Category> {
        Category::ALL
            .into_iter()
            .find(|c| self.0.starts_with(c.prefix()))
    }

    /// The part after the namespace prefix.
    pub fn value(&self) -> &str {
        match self.category() {
            Some(c) => &self.0[c.prefix().len()..],
            None => self.0.split_once(':').map_or(&self.0[..], |(_, v)| v),
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: BTreeMap<FeatureId, u32>,
}

impl FeatureVector {
    pub fn add(&mut self, id: FeatureId) {
        *self.entries.entry(id).or_insert(0) += 1;
    }

    pub fn contains(&self, id: &FeatureId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &FeatureId> {
        self.entries.keys()
    }

    pub fn in_category(&self, c: Category) -> impl Iterator<Item = &FeatureId> {
        self.entries
            .keys()
            .filter(move |id| id.category() == Some(c))
    }

    pub fn permissions(&self) -> BTreeSet<PermissionName> {
        self.in_category(Category::RequestedPermissionList)
            .map(|id| PermissionName::new(id.value()))
            .collect()
    }

    pub fn intent_actions(&self) -> BTreeSet<String> {
        self.in_category(Category::IntentActionList)
            .map(|id| id.value().to_string())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrebinObservation {
    pub feature: FeatureId,
    pub category: Category,
    pub weight: f64,
}

/// Host part of a URL literal, or the literal itself for a bare IP.
pub fn url_host(literal: &str) -> Option<String> {
    match literal_kind(literal) {
        TargetKind::Ip => Some(literal.to_string()),
        TargetKind::Url => {
            let rest = &literal[literal.find("://")? + 3..];
            let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
            let host_port = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
            let host = match host_port.rsplit_once(':') {
                Some((h, port)) if port.bytes().all(|b| b.is_ascii_digit()) => h,
                _ => host_port,
            };
            (!host.is_empty()).then(|| host.to_ascii_lowercase())
        }
        _ => None,
    }
}

fn add_component(fv: &mut FeatureVector, c: &Component) {
    if c.kind != ComponentKind::Provider {
        fv.add(FeatureId::component(c.kind, &c.name));
    }
    for action in c.intent_actions() {
        fv.add(FeatureId::intent(action));
    }
}

fn add_smali(fv: &mut FeatureVector, smali: &SmaliProgram, requested: &BTreeSet<PermissionName>) {
    let tables = Tables::global();
    for file in smali.files.values() {
        for line in &file.statements {
            match &line.stmt {
                Statement::ConstString { literal, .. } => {
                    if let Some(host) = url_host(literal) {
                        fv.add(FeatureId::url(&host));
                    }
                }
                Statement::Invoke { method, .. } => {
                    let (class, name) = (&method.class_descriptor, &method.method_name);
                    if tables.is_suspicious(name) {
                        fv.add(FeatureId::api(name));
                    }
                    if let Some(p) = tables.api_permission(class, name) {
                        if requested.contains(&PermissionName::new(p)) {
                            fv.add(FeatureId::used(p));
                        } else {
                            fv.add(FeatureId::restricted(class, name));
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

/// Only plain `uses-permission` tags whose constant is in the permission
/// table count; sdk-23 tags, group constants and include files are skipped.
pub fn legacy_permissions(b: &Bundle) -> BTreeSet<PermissionName> {
    let tables = Tables::global();
    b.manifest
        .permissions()
        .filter(|p| {
            p.tag_kind == PermissionTagKind::UsesPermission && tables.is_listed(p.name.as_str())
        })
        .map(|p| p.name.clone())
        .collect()
}

pub fn extract_legacy(b: &Bundle) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let perms = legacy_permissions(b);
    for p in &perms {
        fv.add(FeatureId::perm(p.as_str()));
    }
    for c in b.manifest.components() {
        add_component(&mut fv, c);
    }
    add_smali(&mut fv, &b.smali, &perms);
    fv
}

/// Everything the app really declares: all tag kinds, group constants
/// expanded to their members, include files resolved.
pub fn extract_full(b: &Bundle) -> Result<FeatureVector, FeaturesError> {
    let tables = Tables::global();
    let mut nodes: Vec<Node> = b
        .manifest
        .permissions()
        .cloned()
        .map(Node::Permission)
        .collect();
    nodes.extend(b.manifest.components().cloned().map(Node::Component));
    for inc in b.manifest.includes() {
        let xml = b
            .include_files
            .get(&inc.href)
            .ok_or_else(|| FeaturesError::UnresolvedInclude(inc.href.clone()))?;
        let node = parse_fragment(xml).map_err(|source| FeaturesError::IncludeParse {
            href: inc.href.clone(),
            source,
        })?;
        nodes.push(node);
    }

    let mut perms = BTreeSet::new();
    let mut components = Vec::new();
    for node in &nodes {
        match node {
            Node::Permission(p) => match tables.group_members(p.name.as_str()) {
                Some(members) => perms.extend(members.iter().map(PermissionName::new)),
                None => {
                    perms.insert(p.name.clone());
                }
            },
            Node::Component(c) => components.push(c),
            _ => {}
        }
    }

    let mut fv = FeatureVector::default();
    for p in &perms {
        fv.add(FeatureId::perm(p.as_str()));
    }
    for c in components {
        add_component(&mut fv, c);
    }
    add_smali(&mut fv, &b.smali, &perms);
    Ok(fv)
}

/// The observations a Drebin report lists for `b`, weights zero, sorted by
/// category then feature.
pub fn drebin_observations(b: &Bundle) -> Vec<DrebinObservation> {
    let mut out: Vec<DrebinObservation> = extract_legacy(b)
        .ids()
        .filter_map(|id| {
            id.category().map(|category| DrebinObservation {
                feature: id.clone(),
                category,
                weight: 0.0,
            })
        })
        .collect();
    out.sort_by(|a, b| (a.category, &a.feature).cmp(&(b.category, &b.feature)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::Label;
    use crate::manifest::{
        extract_to_include, to_sdk23, Application, ManifestDoc, PermissionRequest,
    };
    use crate::smali::parse_smali;

    fn bundle(perms: &[PermissionRequest], smali: &str) -> Bundle {
        let mut manifest = ManifestDoc::new("a.b");
        manifest
            .nodes
            .extend(perms.iter().cloned().map(Node::Permission));
        manifest.nodes.push(Node::Application(Application {
            attrs: vec![],
            nodes: vec![Node::Component(
                Component::new(ComponentKind::Receiver, ".R")
                    .with_actions(["android.intent.action.BOOT_COMPLETED"]),
            )],
        }));
        let mut program = SmaliProgram::default();
        program
            .files
            .insert("a/b/M.smali".into(), parse_smali(smali));
        Bundle {
            id: "t".into(),
            label: Label::Malicious,
            timestamp: 0,
            manifest,
            smali: program,
            include_files: BTreeMap::new(),
        }
    }

    fn perm_names(fv: &FeatureVector) -> Vec<String> {
        fv.permissions()
            .iter()
            .map(|p| p.as_str().to_string())
            .collect()
    }

    #[test]
    fn legacy_sees_only_plain_listed_tags() {
        let b = bundle(
            &[PermissionRequest::uses("android.permission.READ_SMS")],
            "",
        );
        assert_eq!(
            perm_names(&extract_legacy(&b)),
            ["android.permission.READ_SMS"]
        );
        assert_eq!(
            extract_legacy(&b).entries[&FeatureId::perm("android.permission.READ_SMS")],
            1
        );

        let sdk23 = PermissionRequest::new(
            PermissionTagKind::UsesPermissionSdk23,
            "android.permission.READ_SMS",
        );
        assert!(perm_names(&extract_legacy(&bundle(&[sdk23], ""))).is_empty());
        let group = PermissionRequest::uses("android.permission.SMS");
        assert!(perm_names(&extract_legacy(&bundle(&[group], ""))).is_empty());
        let custom = PermissionRequest::new(
            PermissionTagKind::CustomPermission,
            "android.permission.READ_SMS",
        );
        assert!(perm_names(&extract_legacy(&bundle(&[custom], ""))).is_empty());
    }

    #[test]
    fn full_expands_groups_and_includes() {
        let b = bundle(&[PermissionRequest::uses("android.permission.SMS")], "");
        let names = perm_names(&extract_full(&b).unwrap());
        let expected: Vec<String> = Tables::global()
            .group_members("android.permission.SMS")
            .unwrap()
            .iter()
            .cloned()
            .collect();
        assert_eq!(names, expected);
        assert!(names.contains(&"android.permission.READ_SMS".to_string()));
        assert!(names.contains(&"android.permission.WRITE_SMS".to_string()));

        let p = PermissionRequest::uses("android.permission.INTERNET");
        let mut b = bundle(std::slice::from_ref(&p), "");
        let before = extract_full(&b).unwrap();
        b.manifest = to_sdk23(&b.manifest, &p).unwrap();
        assert_eq!(extract_full(&b).unwrap(), before);
        let q = PermissionRequest::new(PermissionTagKind::UsesPermissionSdk23, p.name.as_str());
        let (doc, file) = extract_to_include(&b.manifest, (&q).into()).unwrap();
        b.manifest = doc;
        b.include_files.insert(file.path.clone(), file.xml);
        assert_eq!(
            extract_full(&b).unwrap().permissions(),
            before.permissions()
        );
        assert!(extract_legacy(&b).permissions().is_empty());

        b.include_files.clear();
        assert!(matches!(
            extract_full(&b),
            Err(FeaturesError::UnresolvedInclude(_))
        ));
    }

    const CALLS: &str = ".method a()V
    .locals 2
    const-string v0, \"http://abc.com/path?q=1\"
    const-string v1, \"100.50.43.22\"
    invoke-virtual {v0, v1}, Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;Ljava/lang/String;)V
    invoke-virtual {v0}, Ljava/net/URL;->openConnection()Ljava/net/URLConnection;
    invoke-virtual {v0}, Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;
.end method";

    #[test]
    fn smali_observations() {
        let b = bundle(
            &[PermissionRequest::uses("android.permission.INTERNET")],
            CALLS,
        );
        let obs = drebin_observations(&b);
        let find = |c: Category| -> Vec<&str> {
            obs.iter()
                .filter(|o| o.category == c)
                .map(|o| o.feature.value())
                .collect()
        };
        assert_eq!(
            find(Category::SuspiciousApiList),
            ["getDeviceId", "sendTextMessage"]
        );
        assert_eq!(
            find(Category::UsedPermissionsList),
            ["android.permission.INTERNET"]
        );
        assert_eq!(
            find(Category::RestrictedApiList),
            [
                "Landroid/telephony/SmsManager;->sendTextMessage",
                "Landroid/telephony/TelephonyManager;->getDeviceId"
            ]
        );
        assert_eq!(find(Category::URLDomainList), ["100.50.43.22", "abc.com"]);
        assert_eq!(find(Category::BroadcastReceiverList), [".R"]);
        assert_eq!(
            find(Category::IntentActionList),
            ["android.intent.action.BOOT_COMPLETED"]
        );
        assert!(obs.iter().all(|o| o.weight == 0.0));
    }

    #[test]
    fn url_hosts() {
        assert_eq!(url_host("http://abc.com").as_deref(), Some("abc.com"));
        assert_eq!(
            url_host("https://u:p@Ex.org:8443/x").as_deref(),
            Some("ex.org")
        );
        assert_eq!(url_host("not a url"), None);
        assert_eq!(url_host("http://"), None);
        assert_eq!(url_host("10.0.0.1").as_deref(), Some("10.0.0.1"));
    }

    #[test]
    fn feature_ids() {
        let id = FeatureId::component(ComponentKind::Service, ".Push");
        assert_eq!(id.as_str(), "comp:service:.Push");
        assert_eq!(id.category(), Some(Category::ServiceList));
        assert_eq!(id.value(), ".Push");
        let p = FeatureId::component(ComponentKind::Provider, ".P");
        assert_eq!(p.category(), None);
        assert_eq!(p.value(), "provider:.P");
        for c in Category::ALL {
            assert_eq!(Category::from_key(c.key()), Some(c));
            assert_eq!(FeatureId::in_category(c, "x").category(), Some(c));
        }
    }

    #[test]
    fn legacy_subset_of_full() {
        let b = bundle(
            &[
                PermissionRequest::uses("android.permission.INTERNET"),
                PermissionRequest::uses("android.permission.SMS"),
                PermissionRequest::uses("com.vendor.permission.X"),
            ],
            CALLS,
        );
        let legacy = extract_legacy(&b).permissions();
        let full = extract_full(&b).unwrap().permissions();
        assert!(legacy.is_subset(&full));
        assert!(full.contains(&PermissionName::new("com.vendor.permission.X")));
    }
}
