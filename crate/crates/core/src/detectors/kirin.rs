use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::manifest::PermissionName;

pub const CALL_ACTION: &str = "android.intent.action.CALL";

pub struct KirinRule {
    pub id: u8,
    pub permissions: &'static [&'static str],
    pub action: Option<&'static str>,
}

/// The nine install-time rules, with short names mapped to full constants.
pub const KIRIN_RULES: [KirinRule; 9] = [
    KirinRule {
        id: 1,
        permissions: &["android.permission.SET_DEBUG_APP"],
        action: None,
    },
    KirinRule {
        id: 2,
        permissions: &[
            "android.permission.READ_PHONE_STATE",
            "android.permission.RECORD_AUDIO",
            "android.permission.INTERNET",
        ],
        action: None,
    },
    KirinRule {
        id: 3,
        permissions: &[
            "android.permission.PROCESS_OUTGOING_CALLS",
            "android.permission.RECORD_AUDIO",
            "android.permission.INTERNET",
        ],
        action: None,
    },
    KirinRule {
        id: 4,
        permissions: &[
            "android.permission.ACCESS_FINE_LOCATION",
            "android.permission.INTERNET",
            "android.permission.RECEIVE_BOOT_COMPLETED",
        ],
        action: None,
    },
    KirinRule {
        id: 5,
        permissions: &[
            "android.permission.ACCESS_COARSE_LOCATION",
            "android.permission.INTERNET",
            "android.permission.RECEIVE_BOOT_COMPLETED",
        ],
        action: None,
    },
    KirinRule {
        id: 6,
        permissions: &[
            "android.permission.RECEIVE_SMS",
            "android.permission.WRITE_SMS",
        ],
        action: None,
    },
    KirinRule {
        id: 7,
        permissions: &[
            "android.permission.SEND_SMS",
            "android.permission.WRITE_SMS",
        ],
        action: None,
    },
    KirinRule {
        id: 8,
        permissions: &[
            "com.android.launcher.permission.INSTALL_SHORTCUT",
            "com.android.launcher.permission.UNINSTALL_SHORTCUT",
        ],
        action: None,
    },
    KirinRule {
        id: 9,
        permissions: &["android.permission.SET_PREFERRED_APPLICATIONS"],
        action: Some(CALL_ACTION),
    },
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KirinVerdict {
    pub malicious: bool,
    pub triggered_rules: Vec<u8>,
}

pub fn kirin_classify(
    perms: &BTreeSet<PermissionName>,
    intent_actions: &BTreeSet<String>,
) -> KirinVerdict {
    let triggered_rules: Vec<u8> = KIRIN_RULES
        .iter()
        .filter(|r| {
            r.permissions
                .iter()
                .all(|p| perms.contains(&PermissionName::new(*p)))
                && r.action.is_none_or(|a| intent_actions.contains(a))
        })
        .map(|r| r.id)
        .collect();
    KirinVerdict {
        malicious: !triggered_rules.is_empty(),
        triggered_rules,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perms(short: &[&str]) -> BTreeSet<PermissionName> {
        short
            .iter()
            .map(|s| {
                if s.contains('.') {
                    PermissionName::new(*s)
                } else {
                    PermissionName::new(format!("android.permission.{s}"))
                }
            })
            .collect()
    }

    #[test]
    fn spot_checks() {
        let none = BTreeSet::new();
        assert_eq!(
            kirin_classify(&perms(&["RECEIVE_SMS", "WRITE_SMS"]), &none).triggered_rules,
            [6]
        );
        assert_eq!(
            kirin_classify(&BTreeSet::new(), &none),
            KirinVerdict {
                malicious: false,
                triggered_rules: vec![]
            }
        );
        let set = perms(&[
            "READ_PHONE_STATE",
            "RECORD_AUDIO",
            "INTERNET",
            "SEND_SMS",
            "WRITE_SMS",
        ]);
        assert_eq!(kirin_classify(&set, &none).triggered_rules, [2, 7]);
    }

    #[test]
    fn rule9_needs_call_action() {
        let p = perms(&["SET_PREFERRED_APPLICATIONS"]);
        assert!(!kirin_classify(&p, &BTreeSet::new()).malicious);
        let actions: BTreeSet<String> = [CALL_ACTION.to_string()].into();
        assert_eq!(kirin_classify(&p, &actions).triggered_rules, [9]);
    }

    #[test]
    fn monotone_in_permissions() {
        let all: Vec<&str> = KIRIN_RULES
            .iter()
            .flat_map(|r| r.permissions.iter().copied())
            .collect();
        let actions: BTreeSet<String> = [CALL_ACTION.to_string()].into();
        for mask in 0u32..(1 << 12) {
            let small: BTreeSet<PermissionName> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << (i % 12)) != 0)
                .map(|(_, p)| PermissionName::new(*p))
                .collect();
            let mut big = small.clone();
            big.insert(PermissionName::new(all[(mask as usize) % all.len()]));
            let a = kirin_classify(&small, &actions).triggered_rules;
            let b = kirin_classify(&big, &actions).triggered_rules;
            assert!(a.iter().all(|r| b.contains(r)));
        }
    }
}
