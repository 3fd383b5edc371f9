//! Static stand-in for "install and run it": the bundle must still be
//! internally consistent after rewriting.

use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::manifest::{parse_fragment, parse_manifest, serialize_manifest};
use crate::smali::{parse_smali, pocket_references, serialize_smali, POCKET_HELPER_PATH};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum NonFunctionalReason {
    ManifestRoundTrip,
    UnresolvedInclude(String),
    /// Android ignores include tags, so the included content is lost.
    XIncludeIgnored(String),
    SmaliRoundTrip(String),
    DanglingPocket(String),
    MissingPocketHelper,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Functionality {
    Functional,
    NonFunctional(NonFunctionalReason),
}

impl Functionality {
    pub fn is_functional(&self) -> bool {
        matches!(self, Functionality::Functional)
    }
}

pub fn validate_functionality(b: &Bundle, strict: bool) -> Functionality {
    use NonFunctionalReason::*;
    let fail = Functionality::NonFunctional;

    match parse_manifest(&serialize_manifest(&b.manifest)) {
        Ok(doc) if doc == b.manifest => {}
        _ => return fail(ManifestRoundTrip),
    }
    for inc in b.manifest.includes() {
        let resolved = b
            .include_files
            .get(&inc.href)
            .is_some_and(|xml| parse_fragment(xml).is_ok());
        if !resolved {
            return fail(UnresolvedInclude(inc.href.clone()));
        }
    }
    if strict {
        if let Some(inc) = b.manifest.includes().next() {
            return fail(XIncludeIgnored(inc.href.clone()));
        }
    }
    for (path, file) in &b.smali.files {
        if parse_smali(&serialize_smali(file)) != *file {
            return fail(SmaliRoundTrip(path.clone()));
        }
    }
    let names: Vec<&str> = b.manifest.metadata().map(|m| m.name.as_str()).collect();
    let mut any_pocket = false;
    for (path, file) in &b.smali.files {
        if path == POCKET_HELPER_PATH {
            continue;
        }
        for (_, name) in pocket_references(file) {
            any_pocket = true;
            if !names.contains(&name.as_str()) {
                return fail(DanglingPocket(name));
            }
        }
    }
    if any_pocket && !b.smali.files.contains_key(POCKET_HELPER_PATH) {
        return fail(MissingPocketHelper);
    }
    Functionality::Functional
}
