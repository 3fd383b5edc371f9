//! Single-element rewrites. Each returns a new document and leaves every
//! other element where it was.

use super::{
    serialize_fragment, Component, ComponentKind, IncludeRef, ManifestDoc, ManifestError,
    MetaDataEntry, Node, PermissionName, PermissionRequest, PermissionTagKind,
};
use crate::tables::Tables;

pub const INCLUDE_DIR: &str = "includes";

/// What `extract_to_include` moves out of the manifest.
#[derive(Clone, Copy, Debug)]
pub enum ExtractTarget<'a> {
    Permission(&'a PermissionRequest),
    Component { kind: ComponentKind, name: &'a str },
}

impl<'a> From<&'a Component> for ExtractTarget<'a> {
    fn from(c: &'a Component) -> Self {
        ExtractTarget::Component {
            kind: c.kind,
            name: &c.name,
        }
    }
}

impl<'a> From<&'a PermissionRequest> for ExtractTarget<'a> {
    fn from(p: &'a PermissionRequest) -> Self {
        ExtractTarget::Permission(p)
    }
}

/// An include file produced by extraction: path relative to the bundle root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncludedFile {
    pub path: String,
    pub xml: String,
}

fn find_permission(
    doc: &ManifestDoc,
    kind: PermissionTagKind,
    name: &PermissionName,
) -> Option<usize> {
    doc.nodes
        .iter()
        .position(|n| matches!(n, Node::Permission(p) if p.tag_kind == kind && &p.name == name))
}

fn not_found(p: &PermissionRequest) -> ManifestError {
    ManifestError::NotFound(format!("{} {}", p.tag_kind.element_name(), p.name))
}

/// Renames one `uses-permission` tag to `uses-permission-sdk-23`.
pub fn to_sdk23(doc: &ManifestDoc, p: &PermissionRequest) -> Result<ManifestDoc, ManifestError> {
    if p.tag_kind != PermissionTagKind::UsesPermission {
        return Err(not_found(p));
    }
    let idx = find_permission(doc, p.tag_kind, &p.name).ok_or_else(|| not_found(p))?;
    let mut out = doc.clone();
    if let Node::Permission(req) = &mut out.nodes[idx] {
        req.tag_kind = PermissionTagKind::UsesPermissionSdk23;
    }
    Ok(out)
}

/// Replaces a permission constant with its superior group constant.
pub fn to_group(doc: &ManifestDoc, p: &PermissionRequest) -> Result<ManifestDoc, ManifestError> {
    let idx = find_permission(doc, p.tag_kind, &p.name).ok_or_else(|| not_found(p))?;
    let group = Tables::global()
        .group_of(p.name.as_str())
        .ok_or_else(|| ManifestError::NoGroupDefined(p.name.to_string()))?;
    let mut out = doc.clone();
    if let Node::Permission(req) = &mut out.nodes[idx] {
        req.name = PermissionName::new(group);
    }
    Ok(out)
}

fn next_include_path(doc: &ManifestDoc) -> String {
    let taken: Vec<&str> = doc.includes().map(|i| i.href.as_str()).collect();
    (0..)
        .map(|k| format!("{INCLUDE_DIR}/inc_{k}.xml"))
        .find(|p| !taken.contains(&p.as_str()))
        .expect("unbounded counter")
}

/// Cuts `target` out of the manifest into its own XML file and leaves an
/// `xi:include` reference in its slot.
pub fn extract_to_include(
    doc: &ManifestDoc,
    target: ExtractTarget<'_>,
) -> Result<(ManifestDoc, IncludedFile), ManifestError> {
    let path = next_include_path(doc);
    let mut out = doc.clone();
    let (slot, description) = match target {
        ExtractTarget::Permission(p) => {
            let idx = find_permission(doc, p.tag_kind, &p.name).ok_or_else(|| not_found(p))?;
            (
                &mut out.nodes[idx],
                format!("{} {}", p.tag_kind.element_name(), p.name),
            )
        }
        ExtractTarget::Component { kind, name } => {
            let missing = || ManifestError::NotFound(format!("{} {name}", kind.element_name()));
            let app = out.application_mut().ok_or_else(missing)?;
            let idx = app
                .nodes
                .iter()
                .position(|n| matches!(n, Node::Component(c) if c.kind == kind && c.name == name))
                .ok_or_else(missing)?;
            (
                &mut app.nodes[idx],
                format!("{} {name}", kind.element_name()),
            )
        }
    };
    let removed = std::mem::replace(
        slot,
        Node::Include(IncludeRef {
            href: path.clone(),
            replaced_description: description,
        }),
    );
    let xml = serialize_fragment(&removed);
    Ok((out, IncludedFile { path, xml }))
}

/// Adds a meta-data "pocket" to the application element. On a name clash
/// the smallest free `_k` suffix is appended. Returns the name actually used.
pub fn insert_pocket(doc: &ManifestDoc, name: &str, value: &str) -> (ManifestDoc, String) {
    let taken: Vec<&str> = doc.metadata().map(|m| m.name.as_str()).collect();
    let assigned = if taken.contains(&name) {
        (1..)
            .map(|k| format!("{name}_{k}"))
            .find(|n| !taken.contains(&n.as_str()))
            .expect("unbounded counter")
    } else {
        name.to_string()
    };
    let mut out = doc.clone();
    let app = out.ensure_application();
    let at = app
        .nodes
        .iter()
        .rposition(|n| matches!(n, Node::MetaData(_)))
        .map_or(0, |i| i + 1);
    app.nodes.insert(
        at,
        Node::MetaData(MetaDataEntry::new(assigned.clone(), value)),
    );
    (out, assigned)
}
