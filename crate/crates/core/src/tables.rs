//! Bundled reference data: the permission table (protection level and
//! superior group per constant), the suspicious-API list and the
//! API-to-permission map.
//!
//! The tables ship inside the crate. Setting `GAUNTLET_DATA_DIR` to a
//! directory holding `permissions.json`, `suspicious_apis.json` and
//! `api_permissions.json` replaces them at first use.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATA_DIR_ENV: &str = "GAUNTLET_DATA_DIR";

const PERMISSIONS_JSON: &str = include_str!("../data/permissions.json");
const SUSPICIOUS_JSON: &str = include_str!("../data/suspicious_apis.json");
const API_PERMISSIONS_JSON: &str = include_str!("../data/api_permissions.json");

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed table {name}: {source}")]
    Json {
        name: &'static str,
        source: serde_json::Error,
    },
    #[error("permission {permission} names group {group}, which is itself a listed permission")]
    GroupShadowsPermission { permission: String, group: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectionLevel {
    Normal,
    Dangerous,
    Signature,
    Special,
    Unknown,
}

impl ProtectionLevel {
    pub const ALL: [ProtectionLevel; 5] = [
        ProtectionLevel::Normal,
        ProtectionLevel::Dangerous,
        ProtectionLevel::Signature,
        ProtectionLevel::Special,
        ProtectionLevel::Unknown,
    ];
}

impl fmt::Display for ProtectionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProtectionLevel::Normal => "normal",
            ProtectionLevel::Dangerous => "dangerous",
            ProtectionLevel::Signature => "signature",
            ProtectionLevel::Special => "special",
            ProtectionLevel::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionInfo {
    pub protection_level: ProtectionLevel,
    pub group: Option<String>,
}

#[derive(Deserialize)]
struct PermissionFile {
    permissions: BTreeMap<String, PermissionInfo>,
}

#[derive(Deserialize)]
struct SuspiciousFile {
    methods: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiPermissionEntry {
    /// Smali class descriptor, e.g. `Landroid/telephony/SmsManager;`.
    pub class: String,
    pub method: String,
    pub permission: String,
}

#[derive(Deserialize)]
struct ApiPermissionFile {
    entries: Vec<ApiPermissionEntry>,
}

/// All reference tables, immutable once loaded.
#[derive(Clone, Debug)]
pub struct Tables {
    permissions: BTreeMap<String, PermissionInfo>,
    groups: BTreeMap<String, BTreeSet<String>>,
    suspicious: BTreeSet<String>,
    api_permissions: Vec<ApiPermissionEntry>,
}

impl Tables {
    pub fn from_json(
        permissions: &str,
        suspicious: &str,
        api_permissions: &str,
    ) -> Result<Self, TableError> {
        let permissions: PermissionFile =
            serde_json::from_str(permissions).map_err(|source| TableError::Json {
                name: "permissions.json",
                source,
            })?;
        let suspicious: SuspiciousFile =
            serde_json::from_str(suspicious).map_err(|source| TableError::Json {
                name: "suspicious_apis.json",
                source,
            })?;
        let api: ApiPermissionFile =
            serde_json::from_str(api_permissions).map_err(|source| TableError::Json {
                name: "api_permissions.json",
                source,
            })?;

        let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (name, info) in &permissions.permissions {
            if let Some(group) = &info.group {
                if permissions.permissions.contains_key(group) {
                    return Err(TableError::GroupShadowsPermission {
                        permission: name.clone(),
                        group: group.clone(),
                    });
                }
                groups
                    .entry(group.clone())
                    .or_default()
                    .insert(name.clone());
            }
        }

        Ok(Tables {
            permissions: permissions.permissions,
            groups,
            suspicious: suspicious.methods.into_iter().collect(),
            api_permissions: api.entries,
        })
    }

    pub fn bundled() -> Self {
        Self::from_json(PERMISSIONS_JSON, SUSPICIOUS_JSON, API_PERMISSIONS_JSON)
            .expect("bundled tables are well-formed")
    }

    pub fn load_dir(dir: &Path) -> Result<Self, TableError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| TableError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Self::from_json(
            &read("permissions.json")?,
            &read("suspicious_apis.json")?,
            &read("api_permissions.json")?,
        )
    }

    /// Process-wide tables: `GAUNTLET_DATA_DIR` if set, else the bundled copy.
    ///
    /// Panics if the override directory is set but unreadable, since every
    /// extractor silently depending on a half-loaded table would be worse.
    pub fn global() -> &'static Tables {
        static TABLES: OnceLock<Tables> = OnceLock::new();
        TABLES.get_or_init(|| match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) => {
                Tables::load_dir(Path::new(&dir)).unwrap_or_else(|e| panic!("{DATA_DIR_ENV}: {e}"))
            }
            None => Tables::bundled(),
        })
    }

    pub fn permission(&self, constant: &str) -> Option<&PermissionInfo> {
        self.permissions.get(constant)
    }

    pub fn is_listed(&self, constant: &str) -> bool {
        self.permissions.contains_key(constant)
    }

    pub fn protection_level(&self, constant: &str) -> ProtectionLevel {
        self.permissions
            .get(constant)
            .map_or(ProtectionLevel::Unknown, |p| p.protection_level)
    }

    pub fn group_of(&self, constant: &str) -> Option<&str> {
        self.permissions.get(constant)?.group.as_deref()
    }

    pub fn group_members(&self, group: &str) -> Option<&BTreeSet<String>> {
        self.groups.get(group)
    }

    pub fn permissions(&self) -> impl Iterator<Item = (&str, &PermissionInfo)> {
        self.permissions.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_suspicious(&self, method_name: &str) -> bool {
        self.suspicious.contains(method_name)
    }

    pub fn suspicious_methods(&self) -> impl Iterator<Item = &str> {
        self.suspicious.iter().map(String::as_str)
    }

    /// Permission guarding `class->method`, if the call is in the map.
    pub fn api_permission(&self, class: &str, method: &str) -> Option<&str> {
        self.api_permissions
            .iter()
            .find(|e| e.class == class && e.method == method)
            .map(|e| e.permission.as_str())
    }

    pub fn api_entries(&self) -> &[ApiPermissionEntry] {
        &self.api_permissions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tables_load() {
        let t = Tables::bundled();
        assert_eq!(
            t.group_of("android.permission.READ_SMS"),
            Some("android.permission.SMS")
        );
        assert_eq!(
            t.group_of("android.permission.WRITE_EXTERNAL_STORAGE"),
            Some("android.permission.STORAGE")
        );
        let sms = t.group_members("android.permission.SMS").unwrap();
        assert!(sms.contains("android.permission.READ_SMS"));
        assert!(sms.contains("android.permission.WRITE_SMS"));
        assert!(!t.is_listed("android.permission.SMS"));
        assert_eq!(
            t.protection_level("android.permission.INTERNET"),
            ProtectionLevel::Normal
        );
        assert_eq!(
            t.protection_level("com.example.CUSTOM"),
            ProtectionLevel::Unknown
        );
        assert!(t.is_suspicious("sendTextMessage"));
        assert!(t.is_suspicious("setWifiEnabled"));
        assert_eq!(
            t.api_permission("Ljava/net/URL;", "openConnection"),
            Some("android.permission.INTERNET")
        );
    }

    #[test]
    fn every_api_permission_is_listed() {
        let t = Tables::bundled();
        for e in t.api_entries() {
            assert!(t.is_listed(&e.permission), "{}", e.permission);
        }
    }

    #[test]
    fn group_named_like_a_permission_is_rejected() {
        let perms = r#"{"permissions": {
            "a.P": {"protection_level": "dangerous", "group": "a.Q"},
            "a.Q": {"protection_level": "normal", "group": null}}}"#;
        let err = Tables::from_json(perms, r#"{"methods": []}"#, r#"{"entries": []}"#);
        assert!(matches!(
            err,
            Err(TableError::GroupShadowsPermission { .. })
        ));
    }
}
