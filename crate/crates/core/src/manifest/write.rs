use std::fmt::Write as _;

use super::{
    Attr, Component, ComponentChild, FilterItem, IncludeRef, ManifestDoc, MetaDataEntry, Node,
    PermissionRequest, ANDROID_NS, XINCLUDE_NS,
};

const INDENT: &str = "    ";

pub fn serialize_manifest(doc: &ManifestDoc) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    out.push_str("<manifest");
    push_attr(&mut out, "xmlns:android", ANDROID_NS);
    if has_includes(&doc.nodes) {
        push_attr(&mut out, "xmlns:xi", XINCLUDE_NS);
    }
    for (prefix, uri) in &doc.namespaces {
        if prefix.is_empty() {
            push_attr(&mut out, "xmlns", uri);
        } else {
            push_attr(&mut out, &format!("xmlns:{prefix}"), uri);
        }
    }
    push_attr(&mut out, "package", &doc.package_name);
    push_attrs(&mut out, &doc.attrs);
    if doc.nodes.is_empty() {
        out.push_str("/>\n");
        return out;
    }
    out.push_str(">\n");
    for node in &doc.nodes {
        write_node(&mut out, node, 1, None);
    }
    out.push_str("</manifest>\n");
    out
}

/// Serializes one element as a standalone document (the body of an include
/// file). The element declares the namespaces it needs itself.
pub fn serialize_fragment(node: &Node) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    let ns = match node {
        Node::Include(_) => ("xmlns:xi", XINCLUDE_NS),
        _ => ("xmlns:android", ANDROID_NS),
    };
    write_node(&mut out, node, 0, Some(ns));
    out
}

fn has_includes(nodes: &[Node]) -> bool {
    nodes.iter().any(|n| match n {
        Node::Include(_) => true,
        Node::Application(a) => has_includes(&a.nodes),
        _ => false,
    })
}

type NsDecl<'a> = Option<(&'a str, &'a str)>;

fn write_node(out: &mut String, node: &Node, depth: usize, ns: NsDecl<'_>) {
    let pad = INDENT.repeat(depth);
    match node {
        Node::Permission(p) => write_permission(out, &pad, p, ns),
        Node::Component(c) => write_component(out, &pad, c, ns),
        Node::MetaData(m) => write_meta(out, &pad, m, ns),
        Node::Include(i) => write_include(out, &pad, i, ns),
        Node::Application(a) => {
            out.push_str(&pad);
            out.push_str("<application");
            push_ns(out, ns);
            push_attrs(out, &a.attrs);
            if a.nodes.is_empty() {
                out.push_str("/>\n");
            } else {
                out.push_str(">\n");
                for n in &a.nodes {
                    write_node(out, n, depth + 1, None);
                }
                let _ = writeln!(out, "{pad}</application>");
            }
        }
        Node::Opaque(raw) => {
            let _ = writeln!(out, "{pad}{raw}");
        }
    }
}

fn write_permission(out: &mut String, pad: &str, p: &PermissionRequest, ns: NsDecl<'_>) {
    let _ = write!(out, "{pad}<{}", p.tag_kind.element_name());
    push_ns(out, ns);
    push_attr(out, "android:name", p.name.as_str());
    push_attrs(out, &p.attrs);
    out.push_str("/>\n");
}

fn write_meta(out: &mut String, pad: &str, m: &MetaDataEntry, ns: NsDecl<'_>) {
    let _ = write!(out, "{pad}<meta-data");
    push_ns(out, ns);
    push_attr(out, "android:name", &m.name);
    if let Some(v) = &m.value {
        push_attr(out, "android:value", v);
    }
    push_attrs(out, &m.attrs);
    out.push_str("/>\n");
}

fn write_include(out: &mut String, pad: &str, i: &IncludeRef, ns: NsDecl<'_>) {
    let _ = write!(out, "{pad}<xi:include");
    push_ns(out, ns);
    push_attr(out, "href", &i.href);
    out.push_str("/>\n");
}

fn write_component(out: &mut String, pad: &str, c: &Component, ns: NsDecl<'_>) {
    let tag = c.kind.element_name();
    let _ = write!(out, "{pad}<{tag}");
    push_ns(out, ns);
    push_attr(out, "android:name", &c.name);
    push_attrs(out, &c.attrs);
    if c.children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    let inner = format!("{pad}{INDENT}");
    let item_pad = format!("{inner}{INDENT}");
    for child in &c.children {
        match child {
            ComponentChild::Raw(raw) => {
                let _ = writeln!(out, "{inner}{raw}");
            }
            ComponentChild::IntentFilter(f) => {
                let _ = write!(out, "{inner}<intent-filter");
                push_attrs(out, &f.attrs);
                if f.items.is_empty() {
                    out.push_str("/>\n");
                    continue;
                }
                out.push_str(">\n");
                for item in &f.items {
                    match item {
                        FilterItem::Action(a) => {
                            let _ = write!(out, "{item_pad}<action");
                            push_attr(out, "android:name", a);
                            out.push_str("/>\n");
                        }
                        FilterItem::Category(cat) => {
                            let _ = write!(out, "{item_pad}<category");
                            push_attr(out, "android:name", cat);
                            out.push_str("/>\n");
                        }
                        FilterItem::Raw(raw) => {
                            let _ = writeln!(out, "{item_pad}{raw}");
                        }
                    }
                }
                let _ = writeln!(out, "{inner}</intent-filter>");
            }
        }
    }
    let _ = writeln!(out, "{pad}</{tag}>");
}

fn push_ns(out: &mut String, ns: NsDecl<'_>) {
    if let Some((name, uri)) = ns {
        push_attr(out, name, uri);
    }
}

fn push_attrs(out: &mut String, attrs: &[Attr]) {
    for (k, v) in attrs {
        push_attr(out, k, v);
    }
}

fn push_attr(out: &mut String, name: &str, value: &str) {
    out.push(' ');
    out.push_str(name);
    out.push_str("=\"");
    escape_into(out, value);
    out.push('"');
}

fn escape_into(out: &mut String, value: &str) {
    for ch in value.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
}
