//! AndroidManifest.xml in its depackaged textual form.
//!
//! The document is kept as an ordered tree so that rewrites can replace an
//! element in place (an include reference takes the slot of the element it
//! replaced) and unknown elements survive untouched.

mod parse;
mod rewrite;
mod write;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tables::{ProtectionLevel, Tables};

pub use parse::{parse_fragment, parse_manifest};
pub use rewrite::{
    extract_to_include, insert_pocket, to_group, to_sdk23, ExtractTarget, IncludedFile, INCLUDE_DIR,
};
pub use write::{serialize_fragment, serialize_manifest};

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";
pub const XINCLUDE_NS: &str = "http://www.w3.org/2001/XInclude";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("XML syntax error at {line}:{column}: {message}")]
    XmlSyntax {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("root element is not <manifest>")]
    NoManifestRoot,
    #[error("element not found: {0}")]
    NotFound(String),
    #[error("no superior group defined for {0}")]
    NoGroupDefined(String),
}

/// A permission constant such as `android.permission.READ_SMS`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PermissionName(String);

impl PermissionName {
    pub fn new(constant: impl Into<String>) -> Self {
        PermissionName(constant.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The constant without its dotted prefix (`READ_SMS`).
    pub fn short(&self) -> &str {
        self.0.rsplit('.').next().unwrap_or(&self.0)
    }

    pub fn protection_level(&self) -> ProtectionLevel {
        Tables::global().protection_level(&self.0)
    }

    pub fn group(&self) -> Option<PermissionName> {
        Tables::global().group_of(&self.0).map(PermissionName::new)
    }
}

impl fmt::Display for PermissionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PermissionName {
    fn from(s: &str) -> Self {
        PermissionName::new(s)
    }
}

/// Qualified attribute name (`android:name`) and its unescaped value.
pub type Attr = (String, String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PermissionTagKind {
    UsesPermission,
    UsesPermissionSdk23,
    CustomPermission,
}

impl PermissionTagKind {
    pub fn element_name(self) -> &'static str {
        match self {
            PermissionTagKind::UsesPermission => "uses-permission",
            PermissionTagKind::UsesPermissionSdk23 => "uses-permission-sdk-23",
            PermissionTagKind::CustomPermission => "permission",
        }
    }

    pub fn from_element(name: &str) -> Option<Self> {
        match name {
            "uses-permission" => Some(PermissionTagKind::UsesPermission),
            "uses-permission-sdk-23" => Some(PermissionTagKind::UsesPermissionSdk23),
            "permission" => Some(PermissionTagKind::CustomPermission),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermissionRequest {
    pub tag_kind: PermissionTagKind,
    pub name: PermissionName,
    /// Attributes other than `android:name`, in document order.
    pub attrs: Vec<Attr>,
}

impl PermissionRequest {
    pub fn new(tag_kind: PermissionTagKind, name: impl Into<String>) -> Self {
        PermissionRequest {
            tag_kind,
            name: PermissionName::new(name),
            attrs: Vec::new(),
        }
    }

    pub fn uses(name: impl Into<String>) -> Self {
        Self::new(PermissionTagKind::UsesPermission, name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
    Provider,
}

impl ComponentKind {
    pub fn element_name(self) -> &'static str {
        match self {
            ComponentKind::Activity => "activity",
            ComponentKind::Service => "service",
            ComponentKind::Receiver => "receiver",
            ComponentKind::Provider => "provider",
        }
    }

    pub fn from_element(name: &str) -> Option<Self> {
        match name {
            "activity" => Some(ComponentKind::Activity),
            "service" => Some(ComponentKind::Service),
            "receiver" => Some(ComponentKind::Receiver),
            "provider" => Some(ComponentKind::Provider),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FilterItem {
    Action(String),
    Category(String),
    Raw(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct IntentFilter {
    pub attrs: Vec<Attr>,
    pub items: Vec<FilterItem>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComponentChild {
    IntentFilter(IntentFilter),
    Raw(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub kind: ComponentKind,
    pub name: String,
    pub attrs: Vec<Attr>,
    pub children: Vec<ComponentChild>,
}

impl Component {
    pub fn new(kind: ComponentKind, name: impl Into<String>) -> Self {
        Component {
            kind,
            name: name.into(),
            attrs: Vec::new(),
            children: Vec::new(),
        }
    }

    /// Adds one intent filter holding `actions`.
    pub fn with_actions<I, S>(mut self, actions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.children
            .push(ComponentChild::IntentFilter(IntentFilter {
                attrs: Vec::new(),
                items: actions
                    .into_iter()
                    .map(|a| FilterItem::Action(a.into()))
                    .collect(),
            }));
        self
    }

    pub fn intent_actions(&self) -> impl Iterator<Item = &str> {
        self.children
            .iter()
            .filter_map(|c| match c {
                ComponentChild::IntentFilter(f) => Some(f),
                ComponentChild::Raw(_) => None,
            })
            .flat_map(|f| f.items.iter())
            .filter_map(|i| match i {
                FilterItem::Action(a) => Some(a.as_str()),
                _ => None,
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaDataEntry {
    pub name: String,
    /// `None` when the element carries no `android:value` (e.g. a resource reference).
    pub value: Option<String>,
    pub attrs: Vec<Attr>,
}

impl MetaDataEntry {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        MetaDataEntry {
            name: name.into(),
            value: Some(value.into()),
            attrs: Vec::new(),
        }
    }
}

/// An `<xi:include href=.../>` element. The description is audit metadata
/// only and does not take part in equality.
#[derive(Clone, Debug, Eq)]
pub struct IncludeRef {
    pub href: String,
    pub replaced_description: String,
}

impl PartialEq for IncludeRef {
    fn eq(&self, other: &Self) -> bool {
        self.href == other.href
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Application {
    pub attrs: Vec<Attr>,
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Permission(PermissionRequest),
    Component(Component),
    MetaData(MetaDataEntry),
    Include(IncludeRef),
    Application(Application),
    /// Unrecognised element, kept as its exact source text.
    Opaque(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ManifestDoc {
    pub package_name: String,
    /// Root attributes other than `package` and namespace declarations.
    pub attrs: Vec<Attr>,
    /// Namespace declarations beyond `android` and `xi`, as (prefix, uri).
    pub namespaces: Vec<(String, String)>,
    pub nodes: Vec<Node>,
}

impl ManifestDoc {
    pub fn new(package_name: impl Into<String>) -> Self {
        ManifestDoc {
            package_name: package_name.into(),
            ..Default::default()
        }
    }

    pub fn application(&self) -> Option<&Application> {
        self.nodes.iter().find_map(|n| match n {
            Node::Application(a) => Some(a),
            _ => None,
        })
    }

    pub fn application_mut(&mut self) -> Option<&mut Application> {
        self.nodes.iter_mut().find_map(|n| match n {
            Node::Application(a) => Some(a),
            _ => None,
        })
    }

    /// Returns the application element, appending an empty one if absent.
    pub fn ensure_application(&mut self) -> &mut Application {
        if self.application().is_none() {
            self.nodes.push(Node::Application(Application::default()));
        }
        self.application_mut().expect("just inserted")
    }

    fn app_nodes(&self) -> impl Iterator<Item = &Node> {
        self.application().into_iter().flat_map(|a| a.nodes.iter())
    }

    /// Permission elements directly under `<manifest>`.
    pub fn permissions(&self) -> impl Iterator<Item = &PermissionRequest> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Permission(p) => Some(p),
            _ => None,
        })
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.app_nodes().filter_map(|n| match n {
            Node::Component(c) => Some(c),
            _ => None,
        })
    }

    pub fn metadata(&self) -> impl Iterator<Item = &MetaDataEntry> {
        self.app_nodes().filter_map(|n| match n {
            Node::MetaData(m) => Some(m),
            _ => None,
        })
    }

    /// Include references at both the manifest and application level.
    pub fn includes(&self) -> impl Iterator<Item = &IncludeRef> {
        self.nodes
            .iter()
            .chain(self.app_nodes())
            .filter_map(|n| match n {
                Node::Include(i) => Some(i),
                _ => None,
            })
    }

    pub fn opaque_nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes
            .iter()
            .chain(self.app_nodes())
            .filter_map(|n| match n {
                Node::Opaque(s) => Some(s.as_str()),
                _ => None,
            })
    }

    pub fn meta_value(&self, name: &str) -> Option<&str> {
        self.metadata()
            .find(|m| m.name == name)
            .and_then(|m| m.value.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permission_name_short_and_table_lookup() {
        let p = PermissionName::new("android.permission.READ_SMS");
        assert_eq!(p.short(), "READ_SMS");
        assert_eq!(p.protection_level(), ProtectionLevel::Dangerous);
        assert_eq!(p.group().unwrap().as_str(), "android.permission.SMS");
        assert_eq!(
            PermissionName::new("android.permission.INTERNET").group(),
            None
        );
    }

    #[test]
    fn include_ref_equality_ignores_description() {
        let a = IncludeRef {
            href: "includes/inc_0.xml".into(),
            replaced_description: "receiver .Sms".into(),
        };
        let b = IncludeRef {
            href: "includes/inc_0.xml".into(),
            replaced_description: String::new(),
        };
        assert_eq!(a, b);
    }
}
