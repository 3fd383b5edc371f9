//! A pragmatic subset of smali: enough structure to find string constants
//! and API calls and rewrite them. Every other line is kept verbatim.

mod rewrite;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

pub use rewrite::{
    encode_string, encoded_payload, find_targets, has_scheme, ip_to_int, is_ip_literal,
    literal_kind, pocket_fetch_code, pocket_helper, pocket_references, reflect_call, Target,
    TargetKind, POCKET_CLASS, POCKET_HELPER_PATH, POCKET_METHOD, REFLECT_NAME_OFFSET,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmaliError {
    #[error("statement {0} is not a const-string")]
    NotAString(usize),
    #[error("statement {0} is not an invoke")]
    NotAnInvoke(usize),
    #[error("statement index {0} out of range")]
    OutOfRange(usize),
    #[error("no .locals directive encloses statement {0}")]
    NoLocalsDirective(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InvokeKind {
    Virtual,
    Static,
    Direct,
}

impl InvokeKind {
    pub fn opcode(self) -> &'static str {
        match self {
            InvokeKind::Virtual => "invoke-virtual",
            InvokeKind::Static => "invoke-static",
            InvokeKind::Direct => "invoke-direct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MethodRef {
    pub class_descriptor: String,
    pub method_name: String,
    /// Parameter list and return type, e.g. `(Ljava/lang/String;)Ljava/lang/Object;`.
    pub signature: String,
}

impl MethodRef {
    pub fn new(class: &str, name: &str, signature: &str) -> Self {
        MethodRef {
            class_descriptor: class.into(),
            method_name: name.into(),
            signature: signature.into(),
        }
    }

    /// Parameter type descriptors in declaration order.
    pub fn param_types(&self) -> Vec<String> {
        let inner = self
            .signature
            .strip_prefix('(')
            .and_then(|s| s.split_once(')'))
            .map_or("", |(params, _)| params);
        let bytes = inner.as_bytes();
        let mut out = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let start = i;
            while bytes[i] == b'[' {
                i += 1;
            }
            if bytes[i] == b'L' {
                while i < bytes.len() && bytes[i] != b';' {
                    i += 1;
                }
            }
            i += 1;
            out.push(inner[start..i.min(inner.len())].to_string());
        }
        out
    }
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}->{}{}",
            self.class_descriptor, self.method_name, self.signature
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Statement {
    ConstString {
        register: String,
        literal: String,
    },
    Const4 {
        register: String,
        value: i8,
    },
    Invoke {
        kind: InvokeKind,
        registers: Vec<String>,
        method: MethodRef,
    },
    MoveResultObject {
        register: String,
    },
    NewArray {
        dest: String,
        size: String,
        type_descriptor: String,
    },
    /// Any line outside the subset, stored byte-for-byte.
    Raw(String),
}

impl Statement {
    pub fn const_string(register: &str, literal: &str) -> Self {
        Statement::ConstString {
            register: register.into(),
            literal: literal.into(),
        }
    }

    pub fn invoke(kind: InvokeKind, registers: &[&str], method: MethodRef) -> Self {
        Statement::Invoke {
            kind,
            registers: registers.iter().map(|r| r.to_string()).collect(),
            method,
        }
    }
}

/// One source line: indentation, statement, trailing whitespace.
/// For `Raw` statements both padding fields are empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Line {
    pub indent: String,
    pub stmt: Statement,
    pub trailing: String,
}

impl Line {
    pub fn new(indent: &str, stmt: Statement) -> Self {
        Line {
            indent: indent.into(),
            stmt,
            trailing: String::new(),
        }
    }

    pub fn raw(text: impl Into<String>) -> Self {
        Line::new("", Statement::Raw(text.into()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SmaliFile {
    pub class_descriptor: String,
    pub statements: Vec<Line>,
    pub trailing_newline: bool,
}

impl SmaliFile {
    pub fn statement(&self, index: usize) -> Option<&Statement> {
        self.statements.get(index).map(|l| &l.stmt)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SmaliProgram {
    /// Keyed by path relative to the `smali/` directory, `/`-separated.
    pub files: BTreeMap<String, SmaliFile>,
}

pub fn is_register(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('v' | 'p'))
        && !s[1..].is_empty()
        && s[1..].bytes().all(|b| b.is_ascii_digit())
}

fn is_class_descriptor(s: &str) -> bool {
    s.len() > 2 && s.starts_with('L') && s.ends_with(';')
}

/// Total parser: lines outside the subset become `Raw`.
pub fn parse_smali(text: &str) -> SmaliFile {
    let (body, trailing_newline) = match text.strip_suffix('\n') {
        Some(b) => (b, true),
        None => (text, false),
    };
    let mut file = SmaliFile {
        trailing_newline,
        ..Default::default()
    };
    if body.is_empty() && !trailing_newline {
        return file;
    }
    for raw in body.split('\n') {
        let content = raw.trim();
        if file.class_descriptor.is_empty() && content.starts_with(".class") {
            if let Some(desc) = content
                .split_whitespace()
                .last()
                .filter(|d| is_class_descriptor(d))
            {
                file.class_descriptor = desc.to_string();
            }
        }
        file.statements.push(parse_line(raw));
    }
    file
}

pub(crate) fn parse_line(raw: &str) -> Line {
    let content = raw.trim();
    match parse_statement(content) {
        Some(stmt) if !content.is_empty() => {
            let start = raw.len() - raw.trim_start().len();
            let end = start + content.len();
            Line {
                indent: raw[..start].to_string(),
                stmt,
                trailing: raw[end..].to_string(),
            }
        }
        _ => Line::raw(raw),
    }
}

pub fn serialize_smali(file: &SmaliFile) -> String {
    let mut out = String::new();
    for (i, line) in file.statements.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match &line.stmt {
            Statement::Raw(text) => out.push_str(text),
            stmt => {
                out.push_str(&line.indent);
                write_statement(&mut out, stmt);
                out.push_str(&line.trailing);
            }
        }
    }
    if file.trailing_newline {
        out.push('\n');
    }
    out
}

fn parse_statement(s: &str) -> Option<Statement> {
    let split = s
        .find(|c: char| c.is_whitespace() || c == '{')
        .unwrap_or(s.len());
    let (op, rest) = s.split_at(split);
    let rest = rest.trim();
    match op {
        "const-string" => {
            let (reg, lit) = rest.split_once(',')?;
            let reg = reg.trim();
            let literal = parse_string_literal(lit.trim())?;
            is_register(reg).then(|| Statement::ConstString {
                register: reg.to_string(),
                literal,
            })
        }
        "const/4" => {
            let (reg, val) = rest.split_once(',')?;
            let reg = reg.trim();
            let value = parse_small_int(val.trim())?;
            (is_register(reg) && (-8..=7).contains(&value)).then(|| Statement::Const4 {
                register: reg.to_string(),
                value: value as i8,
            })
        }
        "move-result-object" => is_register(rest).then(|| Statement::MoveResultObject {
            register: rest.to_string(),
        }),
        "new-array" => {
            let mut parts = rest.splitn(3, ',').map(str::trim);
            let (dest, size, ty) = (parts.next()?, parts.next()?, parts.next()?);
            (is_register(dest) && is_register(size) && ty.starts_with('[') && !ty.contains(' '))
                .then(|| Statement::NewArray {
                    dest: dest.into(),
                    size: size.into(),
                    type_descriptor: ty.into(),
                })
        }
        "invoke-virtual" | "invoke-static" | "invoke-direct" => {
            let kind = match op {
                "invoke-virtual" => InvokeKind::Virtual,
                "invoke-static" => InvokeKind::Static,
                _ => InvokeKind::Direct,
            };
            let rest = rest.strip_prefix('{')?;
            let (regs, target) = rest.split_once('}')?;
            let registers: Vec<String> = if regs.trim().is_empty() {
                Vec::new()
            } else {
                regs.split(',').map(|r| r.trim().to_string()).collect()
            };
            if !registers.iter().all(|r| is_register(r)) {
                return None;
            }
            let target = target.trim_start().strip_prefix(',')?.trim();
            let (class, method) = target.split_once("->")?;
            let paren = method.find('(')?;
            let (name, signature) = method.split_at(paren);
            if !is_class_descriptor(class)
                || name.is_empty()
                || signature.contains(char::is_whitespace)
                || !signature.contains(')')
            {
                return None;
            }
            Some(Statement::Invoke {
                kind,
                registers,
                method: MethodRef::new(class, name, signature),
            })
        }
        _ => None,
    }
}

fn parse_small_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = match body.strip_prefix("0x") {
        Some(hex) => i64::from_str_radix(hex, 16).ok()?,
        None => body.parse().ok()?,
    };
    Some(if neg { -v } else { v })
}

/// Parses a quoted smali string literal; the whole input must be the literal.
fn parse_string_literal(s: &str) -> Option<String> {
    let inner = s.strip_prefix('"')?;
    let mut out = String::new();
    let mut chars = inner.chars();
    loop {
        match chars.next()? {
            '"' => return chars.next().is_none().then_some(out),
            '\\' => match chars.next()? {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                'r' => out.push('\r'),
                'b' => out.push('\u{8}'),
                'f' => out.push('\u{c}'),
                '0' => out.push('\0'),
                '\\' => out.push('\\'),
                '"' => out.push('"'),
                '\'' => out.push('\''),
                'u' => {
                    let hex: String = chars.by_ref().take(4).collect();
                    let code = u32::from_str_radix(&hex, 16).ok()?;
                    out.push(char::from_u32(code)?);
                }
                _ => return None,
            },
            c => out.push(c),
        }
    }
}

fn escape_literal(out: &mut String, s: &str) {
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\'' => out.push_str("\\'"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
}

fn write_statement(out: &mut String, stmt: &Statement) {
    match stmt {
        Statement::ConstString { register, literal } => {
            let _ = write!(out, "const-string {register}, \"");
            escape_literal(out, literal);
            out.push('"');
        }
        Statement::Const4 { register, value } => {
            if *value < 0 {
                let _ = write!(out, "const/4 {register}, -0x{:x}", -(*value as i16));
            } else {
                let _ = write!(out, "const/4 {register}, 0x{value:x}");
            }
        }
        Statement::Invoke {
            kind,
            registers,
            method,
        } => {
            let _ = write!(
                out,
                "{} {{{}}}, {method}",
                kind.opcode(),
                registers.join(", ")
            );
        }
        Statement::MoveResultObject { register } => {
            let _ = write!(out, "move-result-object {register}");
        }
        Statement::NewArray {
            dest,
            size,
            type_descriptor,
        } => {
            let _ = write!(out, "new-array {dest}, {size}, {type_descriptor}");
        }
        Statement::Raw(text) => out.push_str(text),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const FIG5: &str = "\
.class public Lwap/cash/DownloadActivity;
.super Landroid/app/Activity;

.method public run()V
    .locals 7

    const-string v5, \"http://abc.com\"
    invoke-virtual {p0, v6}, Lwap/cash/DownloadActivity;->getSystemService(Ljava/lang/String;)Ljava/lang/Object;
    move-result-object v0
    return-void
.end method
";

    #[test]
    fn fig5_lines() {
        let f = parse_smali(FIG5);
        assert_eq!(f.class_descriptor, "Lwap/cash/DownloadActivity;");
        assert_eq!(
            f.statement(6),
            Some(&Statement::const_string("v5", "http://abc.com"))
        );
        assert_eq!(
            f.statement(7),
            Some(&Statement::invoke(
                InvokeKind::Virtual,
                &["p0", "v6"],
                MethodRef::new(
                    "Lwap/cash/DownloadActivity;",
                    "getSystemService",
                    "(Ljava/lang/String;)Ljava/lang/Object;"
                )
            ))
        );
        assert_eq!(
            f.statement(4),
            Some(&Statement::Raw("    .locals 7".into()))
        );
        assert_eq!(serialize_smali(&f), FIG5);
    }

    #[test]
    fn raw_only_file_is_byte_identical() {
        let text =
            ".class public La;\r\n  .super Ljava/lang/Object;  \n\n# comment \"x\"\nreturn-void";
        let f = parse_smali(text);
        assert!(f
            .statements
            .iter()
            .all(|l| matches!(l.stmt, Statement::Raw(_))));
        assert_eq!(serialize_smali(&f), text);
    }

    #[test]
    fn lenient_spacing_is_canonicalised() {
        let f = parse_smali(
            "invoke-static{v5,p1},Landroid/util/Base64;->decode(Ljava/lang/String;I)[B",
        );
        match f.statement(0).unwrap() {
            Statement::Invoke {
                registers, method, ..
            } => {
                assert_eq!(registers, &["v5", "p1"]);
                assert_eq!(method.method_name, "decode");
            }
            s => panic!("{s:?}"),
        }
        assert_eq!(
            serialize_smali(&f),
            "invoke-static {v5, p1}, Landroid/util/Base64;->decode(Ljava/lang/String;I)[B"
        );
    }

    #[test]
    fn subset_forms() {
        let f = parse_smali("const/4 p1, 0x0\nconst/4 v2, -0x1\nnew-array v0, v2, [Ljava/lang/Object;\nconst-string/jumbo v1, \"x\"\nconst-string v1, \"a\\\"b\\\\c\\n\\u0041\"");
        assert_eq!(
            f.statement(0),
            Some(&Statement::Const4 {
                register: "p1".into(),
                value: 0
            })
        );
        assert_eq!(
            f.statement(1),
            Some(&Statement::Const4 {
                register: "v2".into(),
                value: -1
            })
        );
        assert!(matches!(f.statement(2), Some(Statement::NewArray { .. })));
        assert!(matches!(f.statement(3), Some(Statement::Raw(_))));
        assert_eq!(
            f.statement(4),
            Some(&Statement::const_string("v1", "a\"b\\c\nA"))
        );
        let back = parse_smali(&serialize_smali(&f));
        assert_eq!(back, f);
    }

    #[test]
    fn param_types() {
        let m = MethodRef::new("La;", "f", "(Ljava/lang/String;I[J[[Landroid/os/Bundle;D)V");
        assert_eq!(
            m.param_types(),
            [
                "Ljava/lang/String;",
                "I",
                "[J",
                "[[Landroid/os/Bundle;",
                "D"
            ]
        );
        assert!(MethodRef::new("La;", "f", "()V").param_types().is_empty());
    }

    #[test]
    fn empty_text() {
        let f = parse_smali("");
        assert!(f.statements.is_empty());
        assert_eq!(serialize_smali(&f), "");
        assert_eq!(serialize_smali(&parse_smali("\n")), "\n");
    }

    proptest! {
        #[test]
        fn parse_is_total_and_stable(text in "[ -~\\t\\n]{0,400}") {
            let f = parse_smali(&text);
            let once = serialize_smali(&f);
            prop_assert_eq!(parse_smali(&once), f.clone());
            for (line, src) in f.statements.iter().zip(text.trim_end_matches('\n').split('\n')) {
                if let Statement::Raw(r) = &line.stmt {
                    prop_assert_eq!(r.as_str(), src);
                }
            }
        }

        #[test]
        fn literal_escaping_round_trips(lit in "\\PC{0,40}") {
            let f = SmaliFile {
                class_descriptor: String::new(),
                statements: vec![Line::new("    ", Statement::const_string("v0", &lit))],
                trailing_newline: true,
            };
            prop_assert_eq!(parse_smali(&serialize_smali(&f)), f);
        }
    }
}
