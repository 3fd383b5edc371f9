use roxmltree::{Document, Node as XNode};

use super::{
    Application, Attr, Component, ComponentChild, ComponentKind, FilterItem, IncludeRef,
    IntentFilter, ManifestDoc, ManifestError, MetaDataEntry, Node, PermissionName,
    PermissionRequest, PermissionTagKind, ANDROID_NS, XINCLUDE_NS,
};

/// Parses a textual manifest. Include references are recorded, never expanded.
pub fn parse_manifest(text: &str) -> Result<ManifestDoc, ManifestError> {
    let xml = parse_xml(text)?;
    let root = xml.root_element();
    if root.tag_name().name() != "manifest" || root.tag_name().namespace().is_some() {
        return Err(ManifestError::NoManifestRoot);
    }

    let mut doc = ManifestDoc::default();
    for ns in root.namespaces() {
        match (ns.name(), ns.uri()) {
            (Some("android"), ANDROID_NS) | (Some("xi"), XINCLUDE_NS) => {}
            (Some(prefix), uri) => doc.namespaces.push((prefix.to_string(), uri.to_string())),
            (None, uri) => doc.namespaces.push((String::new(), uri.to_string())),
        }
    }
    for (name, value) in attrs_of(root) {
        if name == "package" {
            doc.package_name = value;
        } else {
            doc.attrs.push((name, value));
        }
    }

    for child in root.children().filter(XNode::is_element) {
        let node = if is_include(child) {
            Node::Include(include_of(child))
        } else if child.tag_name().name() == "application" && child.tag_name().namespace().is_none()
        {
            Node::Application(Application {
                attrs: attrs_of(child),
                nodes: child
                    .children()
                    .filter(XNode::is_element)
                    .map(|n| application_child(n, text))
                    .collect(),
            })
        } else if let Some(p) = permission_of(child) {
            Node::Permission(p)
        } else {
            Node::Opaque(source_of(child, text))
        };
        doc.nodes.push(node);
    }
    Ok(doc)
}

/// Parses the single element held by an include file (a permission tag,
/// a component, or a meta-data tag; anything else becomes opaque).
pub fn parse_fragment(text: &str) -> Result<Node, ManifestError> {
    let xml = parse_xml(text)?;
    let root = xml.root_element();
    if let Some(p) = permission_of(root) {
        return Ok(Node::Permission(p));
    }
    Ok(application_child(root, text))
}

fn parse_xml(text: &str) -> Result<Document<'_>, ManifestError> {
    Document::parse(text).map_err(|e| {
        let (line, column) = match e {
            // reported at 1:1 by the parser; the real position is end of input
            roxmltree::Error::UnexpectedEndOfStream | roxmltree::Error::UnclosedRootNode => {
                end_position(text)
            }
            _ => (e.pos().row, e.pos().col),
        };
        ManifestError::XmlSyntax {
            line,
            column,
            message: e.to_string(),
        }
    })
}

fn end_position(text: &str) -> (u32, u32) {
    let line = text.matches('\n').count() as u32 + 1;
    let last = text.rsplit('\n').next().unwrap_or("");
    (line, last.chars().count() as u32 + 1)
}

fn application_child(n: XNode<'_, '_>, text: &str) -> Node {
    if is_include(n) {
        return Node::Include(include_of(n));
    }
    if n.tag_name().namespace().is_some() {
        return Node::Opaque(source_of(n, text));
    }
    let tag = n.tag_name().name();
    if let Some(kind) = ComponentKind::from_element(tag) {
        if let Some(c) = component_of(kind, n, text) {
            return Node::Component(c);
        }
    } else if tag == "meta-data" {
        let mut name = None;
        let mut value = None;
        let mut attrs = Vec::new();
        for (k, v) in attrs_of(n) {
            match k.as_str() {
                "android:name" if name.is_none() => name = Some(v),
                "android:value" if value.is_none() => value = Some(v),
                _ => attrs.push((k, v)),
            }
        }
        if let Some(name) = name.filter(|s| !s.is_empty()) {
            if !n.children().any(|c| c.is_element()) {
                return Node::MetaData(MetaDataEntry { name, value, attrs });
            }
        }
    }
    Node::Opaque(source_of(n, text))
}

fn permission_of(n: XNode<'_, '_>) -> Option<PermissionRequest> {
    if n.tag_name().namespace().is_some() || n.children().any(|c| c.is_element()) {
        return None;
    }
    let tag_kind = PermissionTagKind::from_element(n.tag_name().name())?;
    let (name, attrs) = split_name(attrs_of(n));
    Some(PermissionRequest {
        tag_kind,
        name: PermissionName::new(name?),
        attrs,
    })
}

fn component_of(kind: ComponentKind, n: XNode<'_, '_>, text: &str) -> Option<Component> {
    let (name, attrs) = split_name(attrs_of(n));
    let children = n
        .children()
        .filter(XNode::is_element)
        .map(|c| {
            if c.tag_name().name() == "intent-filter" && c.tag_name().namespace().is_none() {
                ComponentChild::IntentFilter(IntentFilter {
                    attrs: attrs_of(c),
                    items: c
                        .children()
                        .filter(XNode::is_element)
                        .map(|item| filter_item(item, text))
                        .collect(),
                })
            } else {
                ComponentChild::Raw(source_of(c, text))
            }
        })
        .collect();
    Some(Component {
        kind,
        name: name?,
        attrs,
        children,
    })
}

fn filter_item(n: XNode<'_, '_>, text: &str) -> FilterItem {
    let simple = n.tag_name().namespace().is_none()
        && !n.children().any(|c| c.is_element())
        && n.attributes().len() == 1;
    let name = n.attribute((ANDROID_NS, "name"));
    match (simple, n.tag_name().name(), name) {
        (true, "action", Some(a)) => FilterItem::Action(a.to_string()),
        (true, "category", Some(c)) => FilterItem::Category(c.to_string()),
        _ => FilterItem::Raw(source_of(n, text)),
    }
}

fn split_name(attrs: Vec<Attr>) -> (Option<String>, Vec<Attr>) {
    let mut name = None;
    let mut rest = Vec::new();
    for (k, v) in attrs {
        if k == "android:name" && name.is_none() {
            name = Some(v);
        } else {
            rest.push((k, v));
        }
    }
    (name.filter(|s| !s.is_empty()), rest)
}

fn is_include(n: XNode<'_, '_>) -> bool {
    n.tag_name().namespace() == Some(XINCLUDE_NS) && n.tag_name().name() == "include"
}

fn include_of(n: XNode<'_, '_>) -> IncludeRef {
    IncludeRef {
        href: n.attribute("href").unwrap_or_default().to_string(),
        replaced_description: String::new(),
    }
}

fn attrs_of(n: XNode<'_, '_>) -> Vec<Attr> {
    n.attributes()
        .map(|a| {
            let qname = match a.namespace() {
                None => a.name().to_string(),
                Some(ANDROID_NS) => format!("android:{}", a.name()),
                Some(XINCLUDE_NS) => format!("xi:{}", a.name()),
                Some(uri) => match n.lookup_prefix(uri) {
                    Some(prefix) => format!("{prefix}:{}", a.name()),
                    None => a.name().to_string(),
                },
            };
            (qname, a.value().to_string())
        })
        .collect()
}

fn source_of(n: XNode<'_, '_>, text: &str) -> String {
    text[n.range()].to_string()
}
