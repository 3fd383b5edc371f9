//! The three smali rewrite stages: base64 encoding of a string constant,
//! reflective replacement of an API call, and replacement of a constant by
//! a lookup of a manifest meta-data "pocket".

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use super::{
    is_register, parse_line, parse_smali, InvokeKind, Line, MethodRef, SmaliError, SmaliFile,
    SmaliProgram, Statement,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetKind {
    Url,
    ApiCall,
    Ip,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Target {
    pub path: String,
    pub index: usize,
    pub kind: TargetKind,
}

/// Class and method of the pocket retrieval helper added alongside pocketed code.
pub const POCKET_CLASS: &str = "Lgauntlet/runtime/Pockets;";
pub const POCKET_METHOD: &str = "fetch";
pub const POCKET_HELPER_PATH: &str = "gauntlet/runtime/Pockets.smali";
const POCKET_SIGNATURE: &str = "(Ljava/lang/String;)Ljava/lang/String;";

/// Position of the encoded-name `const-string` inside the reflection sequence.
pub const REFLECT_NAME_OFFSET: usize = 1;

const BASE64_CLASS: &str = "Landroid/util/Base64;";

pub fn is_ip_literal(s: &str) -> bool {
    let parts: Vec<&str> = s.split('.').collect();
    parts.len() == 4
        && parts.iter().all(|p| {
            !p.is_empty()
                && p.len() <= 3
                && p.bytes().all(|b| b.is_ascii_digit())
                && p.parse::<u16>().is_ok_and(|v| v <= 255)
        })
}

/// Dotted quad to its 32-bit integer value. `None` unless `is_ip_literal`.
pub fn ip_to_int(s: &str) -> Option<u32> {
    if !is_ip_literal(s) {
        return None;
    }
    s.split('.')
        .try_fold(0u32, |acc, p| Some((acc << 8) | p.parse::<u32>().ok()?))
}

pub fn has_scheme(s: &str) -> bool {
    match s.find("://") {
        Some(i) if i > 0 => s[..i]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')),
        _ => false,
    }
}

/// How `find_targets` classifies a string constant.
pub fn literal_kind(lit: &str) -> TargetKind {
    if is_ip_literal(lit) {
        TargetKind::Ip
    } else if has_scheme(lit) {
        TargetKind::Url
    } else {
        TargetKind::Other
    }
}

/// The base64 text that replaces `literal`; IPs are first turned into their
/// decimal integer form.
pub fn encoded_payload(literal: &str) -> String {
    match ip_to_int(literal) {
        Some(n) => BASE64.encode(n.to_string()),
        None => BASE64.encode(literal),
    }
}

/// Every string constant containing an observation and every call whose
/// name or descriptor equals one, sorted by (path, index).
pub fn find_targets(program: &SmaliProgram, observations: &[String]) -> Vec<Target> {
    let obs: Vec<&str> = observations
        .iter()
        .map(String::as_str)
        .filter(|o| !o.is_empty())
        .collect();
    let mut out = Vec::new();
    for (path, file) in &program.files {
        for (index, line) in file.statements.iter().enumerate() {
            let kind = match &line.stmt {
                Statement::ConstString { literal, .. }
                    if obs.iter().any(|o| literal.contains(o)) =>
                {
                    literal_kind(literal)
                }
                Statement::Invoke { method, .. } => {
                    let short = format!("{}->{}", method.class_descriptor, method.method_name);
                    let full = method.to_string();
                    if obs
                        .iter()
                        .any(|o| *o == method.method_name || *o == short || *o == full)
                    {
                        TargetKind::ApiCall
                    } else {
                        continue;
                    }
                }
                _ => continue,
            };
            out.push(Target {
                path: path.clone(),
                index,
                kind,
            });
        }
    }
    out
}

/// Finds the `.locals N` directive of the method enclosing `index`, bumps it
/// by `count` and returns the first newly available register number.
fn allocate_locals(file: &mut SmaliFile, index: usize, count: usize) -> Result<usize, SmaliError> {
    for i in (0..index).rev() {
        let Statement::Raw(text) = &file.statements[i].stmt else {
            continue;
        };
        let content = text.trim();
        if content.starts_with(".method") || content.starts_with(".end method") {
            break;
        }
        if let Some(n) = content
            .strip_prefix(".locals")
            .and_then(|n| n.trim().parse::<usize>().ok())
        {
            let indent_len = text.len() - text.trim_start().len();
            let new_text = format!("{}.locals {}", &text[..indent_len], n + count);
            file.statements[i].stmt = Statement::Raw(new_text);
            return Ok(n);
        }
    }
    Err(SmaliError::NoLocalsDirective(index))
}

fn decode_sequence(indent: &str, value_reg: &str, flag_reg: &str) -> Vec<Line> {
    vec![
        Line::new(
            indent,
            Statement::Const4 {
                register: flag_reg.into(),
                value: 0,
            },
        ),
        Line::new(
            indent,
            Statement::invoke(
                InvokeKind::Static,
                &[value_reg, flag_reg],
                MethodRef::new(BASE64_CLASS, "decode", "(Ljava/lang/String;I)[B"),
            ),
        ),
        Line::new(
            indent,
            Statement::MoveResultObject {
                register: value_reg.into(),
            },
        ),
    ]
}

/// Replaces the literal at `index` by its base64 form and inserts a
/// `Base64.decode` call that restores it into the original register.
pub fn encode_string(file: &SmaliFile, index: usize) -> Result<SmaliFile, SmaliError> {
    let line = file
        .statements
        .get(index)
        .ok_or(SmaliError::OutOfRange(index))?;
    let Statement::ConstString { register, literal } = &line.stmt else {
        return Err(SmaliError::NotAString(index));
    };
    let (register, encoded, indent) = (
        register.clone(),
        encoded_payload(literal),
        line.indent.clone(),
    );

    let mut out = file.clone();
    let flag = format!("v{}", allocate_locals(&mut out, index, 1)?);
    out.statements[index].stmt = Statement::const_string(&register, &encoded);
    let tail = out.statements.split_off(index + 1);
    out.statements
        .extend(decode_sequence(&indent, &register, &flag));
    out.statements.extend(tail);
    Ok(out)
}

fn primitive_box(ty: &str) -> Option<&'static str> {
    Some(match ty {
        "Z" => "Ljava/lang/Boolean;",
        "B" => "Ljava/lang/Byte;",
        "S" => "Ljava/lang/Short;",
        "C" => "Ljava/lang/Character;",
        "I" => "Ljava/lang/Integer;",
        "J" => "Ljava/lang/Long;",
        "F" => "Ljava/lang/Float;",
        "D" => "Ljava/lang/Double;",
        _ => return None,
    })
}

/// Replaces the call at `index` with a reflective lookup and invocation.
/// The method name is carried as `encoded_name` (base64) and decoded at run
/// time, so the plain name does not appear in the rewritten sequence.
pub fn reflect_call(
    file: &SmaliFile,
    index: usize,
    encoded_name: &str,
) -> Result<SmaliFile, SmaliError> {
    let line = file
        .statements
        .get(index)
        .ok_or(SmaliError::OutOfRange(index))?;
    let Statement::Invoke {
        kind,
        registers,
        method,
    } = &line.stmt
    else {
        return Err(SmaliError::NotAnInvoke(index));
    };
    let (kind, registers, method, indent) = (
        *kind,
        registers.clone(),
        method.clone(),
        line.indent.clone(),
    );

    let mut out = file.clone();
    let base = allocate_locals(&mut out, index, 6)?;
    let r = |k: usize| format!("v{}", base + k);
    let (cls, name, tmp, string, arr, mth) = (r(0), r(1), r(2), r(3), r(4), r(5));

    let raw = |s: String| parse_line(&format!("{indent}{s}"));
    let mut seq: Vec<Line> = Vec::new();
    seq.push(raw(format!(
        "const-class {cls}, {}",
        method.class_descriptor
    )));
    seq.push(Line::new(
        &indent,
        Statement::const_string(&name, encoded_name),
    ));
    seq.extend(decode_sequence(&indent, &name, &tmp));
    seq.push(raw(format!("new-instance {string}, Ljava/lang/String;")));
    seq.push(raw(format!(
        "invoke-direct {{{string}, {name}}}, Ljava/lang/String;-><init>([B)V"
    )));

    let params = method.param_types();
    seq.push(raw(format!("const/16 {tmp}, 0x{:x}", params.len())));
    seq.push(Line::new(
        &indent,
        Statement::NewArray {
            dest: arr.clone(),
            size: tmp.clone(),
            type_descriptor: "[Ljava/lang/Class;".into(),
        },
    ));
    for (i, ty) in params.iter().enumerate() {
        seq.push(raw(format!("const/16 {tmp}, 0x{i:x}")));
        match primitive_box(ty) {
            Some(boxed) => seq.push(raw(format!(
                "sget-object {name}, {boxed}->TYPE:Ljava/lang/Class;"
            ))),
            None => seq.push(raw(format!("const-class {name}, {ty}"))),
        }
        seq.push(raw(format!("aput-object {name}, {arr}, {tmp}")));
    }
    seq.push(Line::new(
        &indent,
        Statement::invoke(
            InvokeKind::Virtual,
            &[&cls, &string, &arr],
            MethodRef::new(
                "Ljava/lang/Class;",
                "getDeclaredMethod",
                "(Ljava/lang/String;[Ljava/lang/Class;)Ljava/lang/reflect/Method;",
            ),
        ),
    ));
    seq.push(Line::new(
        &indent,
        Statement::MoveResultObject {
            register: mth.clone(),
        },
    ));
    seq.push(Line::new(
        &indent,
        Statement::Const4 {
            register: tmp.clone(),
            value: 1,
        },
    ));
    seq.push(raw(format!(
        "invoke-virtual {{{mth}, {tmp}}}, Ljava/lang/reflect/AccessibleObject;->setAccessible(Z)V"
    )));

    // Argument registers: static calls have no receiver; wide types take two slots.
    let (receiver, arg_regs) = match kind {
        InvokeKind::Static => (None, &registers[..]),
        _ => (
            registers.first().cloned(),
            registers.get(1..).unwrap_or(&[]),
        ),
    };
    let mut args: Vec<(&str, Vec<String>)> = Vec::new();
    let mut slot = 0;
    for ty in &params {
        let width = if ty == "J" || ty == "D" { 2 } else { 1 };
        if let Some(regs) = arg_regs.get(slot..slot + width) {
            args.push((ty.as_str(), regs.to_vec()));
        }
        slot += width;
    }
    seq.push(raw(format!("const/16 {tmp}, 0x{:x}", args.len())));
    seq.push(Line::new(
        &indent,
        Statement::NewArray {
            dest: arr.clone(),
            size: tmp.clone(),
            type_descriptor: "[Ljava/lang/Object;".into(),
        },
    ));
    for (i, (ty, regs)) in args.iter().enumerate() {
        seq.push(raw(format!("const/16 {tmp}, 0x{i:x}")));
        let value = match primitive_box(ty) {
            Some(boxed) => {
                let regs: Vec<&str> = regs.iter().map(String::as_str).collect();
                seq.push(Line::new(
                    &indent,
                    Statement::invoke(
                        InvokeKind::Static,
                        &regs,
                        MethodRef::new(boxed, "valueOf", &format!("({ty}){boxed}")),
                    ),
                ));
                seq.push(Line::new(
                    &indent,
                    Statement::MoveResultObject {
                        register: name.clone(),
                    },
                ));
                name.clone()
            }
            None => regs[0].clone(),
        };
        seq.push(raw(format!("aput-object {value}, {arr}, {tmp}")));
    }
    let receiver = match receiver {
        Some(r) => r,
        None => {
            seq.push(Line::new(
                &indent,
                Statement::Const4 {
                    register: name.clone(),
                    value: 0,
                },
            ));
            name.clone()
        }
    };
    seq.push(Line::new(
        &indent,
        Statement::invoke(
            InvokeKind::Virtual,
            &[&mth, &receiver, &arr],
            MethodRef::new(
                "Ljava/lang/reflect/Method;",
                "invoke",
                "(Ljava/lang/Object;[Ljava/lang/Object;)Ljava/lang/Object;",
            ),
        ),
    ));

    out.statements.splice(index..=index, seq);
    Ok(out)
}

/// Replaces the string constant at `index` with a call to the pocket helper
/// that reads meta-data `pocket_name` into the same register.
pub fn pocket_fetch_code(
    file: &SmaliFile,
    index: usize,
    pocket_name: &str,
) -> Result<SmaliFile, SmaliError> {
    let line = file
        .statements
        .get(index)
        .ok_or(SmaliError::OutOfRange(index))?;
    let Statement::ConstString { register, .. } = &line.stmt else {
        return Err(SmaliError::NotAString(index));
    };
    let (register, indent) = (register.clone(), line.indent.clone());
    let stub = vec![
        Line::new(&indent, Statement::const_string(&register, pocket_name)),
        Line::new(
            &indent,
            Statement::invoke(
                InvokeKind::Static,
                &[&register],
                MethodRef::new(POCKET_CLASS, POCKET_METHOD, POCKET_SIGNATURE),
            ),
        ),
        Line::new(&indent, Statement::MoveResultObject { register }),
    ];
    let mut out = file.clone();
    out.statements.splice(index..=index, stub);
    Ok(out)
}

/// Pocket names read by `file`, with the index of the fetching call.
pub fn pocket_references(file: &SmaliFile) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (i, line) in file.statements.iter().enumerate() {
        let Statement::Invoke {
            registers, method, ..
        } = &line.stmt
        else {
            continue;
        };
        if method.class_descriptor != POCKET_CLASS || method.method_name != POCKET_METHOD {
            continue;
        }
        let name = i
            .checked_sub(1)
            .and_then(|p| file.statement(p))
            .and_then(|s| match s {
                Statement::ConstString { register, literal }
                    if registers.first() == Some(register) && is_register(register) =>
                {
                    Some(literal.clone())
                }
                _ => None,
            })
            .unwrap_or_default();
        out.push((i, name));
    }
    out
}

/// The helper class that pocket stubs call into. It looks the name up in
/// the application's meta-data bundle and decodes nothing itself.
pub fn pocket_helper() -> SmaliFile {
    parse_smali(POCKET_HELPER_SOURCE)
}

const POCKET_HELPER_SOURCE: &str = "\
.class public final Lgauntlet/runtime/Pockets;
.super Ljava/lang/Object;
.source \"Pockets.java\"


# direct methods
.method public static fetch(Ljava/lang/String;)Ljava/lang/String;
    .locals 3

    invoke-static {}, Landroid/app/ActivityThread;->currentApplication()Landroid/app/Application;
    move-result-object v0
    invoke-virtual {v0}, Landroid/content/Context;->getPackageManager()Landroid/content/pm/PackageManager;
    move-result-object v1
    invoke-virtual {v0}, Landroid/content/Context;->getPackageName()Ljava/lang/String;
    move-result-object v0
    const/16 v2, 0x80
    invoke-virtual {v1, v0, v2}, Landroid/content/pm/PackageManager;->getApplicationInfo(Ljava/lang/String;I)Landroid/content/pm/ApplicationInfo;
    move-result-object v0
    iget-object v0, v0, Landroid/content/pm/ApplicationInfo;->metaData:Landroid/os/Bundle;
    invoke-virtual {v0, p0}, Landroid/os/Bundle;->getString(Ljava/lang/String;)Ljava/lang/String;
    move-result-object v0
    return-object v0
.end method
";

#[cfg(test)]
mod tests {
    use super::super::{serialize_smali, tests::FIG5};
    use super::*;

    fn program(text: &str) -> SmaliProgram {
        let mut p = SmaliProgram::default();
        p.files
            .insert("wap/cash/DownloadActivity.smali".into(), parse_smali(text));
        p
    }

    #[test]
    fn ip_integer_form() {
        // 100*2^24 + 50*2^16 + 43*2^8 + 22, computed independently
        assert_eq!(ip_to_int("100.50.43.22"), Some(1_681_009_430));
        assert_eq!(encoded_payload("100.50.43.22"), "MTY4MTAwOTQzMA==");
        assert!(!is_ip_literal("256.1.1.1"));
        assert!(!is_ip_literal("1.2.3"));
        assert!(!is_ip_literal("1.2.3.4.5"));
        assert!(!is_ip_literal("a.b.c.d"));
        assert!(!is_ip_literal("1..2.3"));
        assert_eq!(ip_to_int("0.0.0.0"), Some(0));
        assert_eq!(ip_to_int("255.255.255.255"), Some(u32::MAX));
    }

    #[test]
    fn targets_in_fig5() {
        let p = program(FIG5);
        let t = find_targets(&p, &["http://abc.com".into()]);
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].index, t[0].kind), (6, TargetKind::Url));
        let t = find_targets(&p, &["getSystemService".into()]);
        assert_eq!((t[0].index, t[0].kind), (7, TargetKind::ApiCall));
        assert!(find_targets(&p, &["nothing-here".into()]).is_empty());
        assert!(find_targets(&p, &["".into()]).is_empty());
    }

    #[test]
    fn encode_fig5_string() {
        let f = parse_smali(FIG5);
        let out = encode_string(&f, 6).unwrap();
        assert_eq!(
            out.statement(6),
            Some(&Statement::const_string("v5", "aHR0cDovL2FiYy5jb20="))
        );
        assert_eq!(
            out.statement(7),
            Some(&Statement::Const4 {
                register: "v7".into(),
                value: 0
            })
        );
        match out.statement(8).unwrap() {
            Statement::Invoke {
                kind,
                registers,
                method,
            } => {
                assert_eq!(*kind, InvokeKind::Static);
                assert_eq!(registers, &["v5", "v7"]);
                assert_eq!(
                    method.to_string(),
                    "Landroid/util/Base64;->decode(Ljava/lang/String;I)[B"
                );
            }
            s => panic!("{s:?}"),
        }
        assert_eq!(
            out.statement(9),
            Some(&Statement::MoveResultObject {
                register: "v5".into()
            })
        );
        assert_eq!(
            out.statement(4),
            Some(&Statement::Raw("    .locals 8".into()))
        );
        // re-parse yields the same statement count
        let text = serialize_smali(&out);
        assert_eq!(parse_smali(&text).statements.len(), f.statements.len() + 3);
        assert!(!text.contains("http://abc.com"));
    }

    #[test]
    fn encode_empty_and_errors() {
        let f = parse_smali(".method a()V\n    .locals 0\n    const-string v0, \"\"\n.end method");
        let out = encode_string(&f, 2).unwrap();
        assert_eq!(out.statement(2), Some(&Statement::const_string("v0", "")));
        assert_eq!(out.statements.len(), f.statements.len() + 3);
        assert_eq!(encode_string(&f, 1), Err(SmaliError::NotAString(1)));
        assert_eq!(encode_string(&f, 99), Err(SmaliError::OutOfRange(99)));
        let bare = parse_smali("const-string v0, \"x\"");
        assert_eq!(
            encode_string(&bare, 0),
            Err(SmaliError::NoLocalsDirective(0))
        );
    }

    #[test]
    fn reflection_erases_name() {
        let f = parse_smali(FIG5);
        let out = reflect_call(&f, 7, &BASE64.encode("getSystemService")).unwrap();
        let text = serialize_smali(&out);
        assert!(!text.contains("getSystemService"), "{text}");
        assert!(text.contains("Ljava/lang/Class;->getDeclaredMethod(Ljava/lang/String;[Ljava/lang/Class;)Ljava/lang/reflect/Method;"));
        assert!(text.contains("Ljava/lang/reflect/Method;->invoke(Ljava/lang/Object;[Ljava/lang/Object;)Ljava/lang/Object;"));
        assert_eq!(
            out.statement(7 + REFLECT_NAME_OFFSET),
            Some(&Statement::const_string("v8", "Z2V0U3lzdGVtU2VydmljZQ=="))
        );
        assert!(text.contains("const-class v7, Lwap/cash/DownloadActivity;"));
        assert_eq!(parse_smali(&text), out);
        assert!(text.contains("invoke-virtual {v12, p0, v11}, Ljava/lang/reflect/Method;->invoke"));
        // the result move after the original call still follows the sequence
        let idx = out
            .statements
            .iter()
            .position(|l| matches!(&l.stmt, Statement::Invoke { method, .. } if method.method_name == "invoke"))
            .unwrap();
        assert_eq!(
            out.statement(idx + 1),
            Some(&Statement::MoveResultObject {
                register: "v0".into()
            })
        );
        assert_eq!(reflect_call(&f, 6, "x"), Err(SmaliError::NotAnInvoke(6)));
    }

    #[test]
    fn static_reflection_uses_null_receiver() {
        let f = parse_smali(
            ".method a()V\n    .locals 2\n    invoke-static {v0, v1}, Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;I)V\n.end method",
        );
        let out = reflect_call(&f, 2, "c2VuZFRleHRNZXNzYWdl").unwrap();
        let text = serialize_smali(&out);
        assert!(!text.contains("sendTextMessage"));
        assert!(text.contains("sget-object v3, Ljava/lang/Integer;->TYPE:Ljava/lang/Class;"));
        assert!(text.contains("aput-object v0, v6, v4"));
        assert!(
            text.contains("invoke-static {v1}, Ljava/lang/Integer;->valueOf(I)Ljava/lang/Integer;")
        );
        assert!(text.contains("aput-object v3, v6, v4"));
        assert!(text.contains("const/4 v3, 0x0"));
        assert_eq!(parse_smali(&text), out);
        assert!(text.contains("invoke-virtual {v7, v3, v6}"));
        assert!(text.contains(".locals 8"));
    }

    #[test]
    fn pocket_stub_replaces_literal() {
        let f = parse_smali(
            ".method a()V\n    .locals 5\n    const-string v4, \"100.50.43.22\"\n    const/16 v1, 0x22b8\n.end method",
        );
        let out = pocket_fetch_code(&f, 2, "1232rt").unwrap();
        let text = serialize_smali(&out);
        assert!(!text.contains("100.50.43.22"));
        assert_eq!(pocket_references(&out), [(3, "1232rt".to_string())]);

        let two = pocket_fetch_code(&out, 2, "other");
        assert!(two.is_ok());
        assert_eq!(
            pocket_fetch_code(&f, 3, "x"),
            Err(SmaliError::NotAString(3))
        );
    }

    #[test]
    fn helper_parses() {
        let h = pocket_helper();
        assert_eq!(h.class_descriptor, POCKET_CLASS);
    }
}
