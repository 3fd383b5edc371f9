//! Frequent permission subsets ("families") by depth-first search with
//! support pruning: a superset never has more support than its subsets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, Label};
use crate::features::legacy_permissions;
use crate::manifest::PermissionName;

pub const FAMILY_MAX_SIZE: usize = 3;
pub const FAMILY_MIN_SUPPORT: f64 = 0.05;
pub const TOP_FAMILIES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermissionFamily {
    pub members: BTreeSet<PermissionName>,
    /// Share of the given bundles requesting every member.
    pub support: f64,
    /// The same share restricted to the benign (resp. malicious) bundles.
    pub support_benign: f64,
    pub support_malicious: f64,
}

fn share(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

/// All families of at most `max_size` permissions requested together by at
/// least `min_support` of `bundles`, sorted by support (descending), size,
/// then members.
pub fn permission_families(
    bundles: &[Bundle],
    max_size: usize,
    min_support: f64,
) -> Vec<PermissionFamily> {
    let sets: Vec<BTreeSet<PermissionName>> = bundles.iter().map(legacy_permissions).collect();
    let n = sets.len();
    if n == 0 || max_size == 0 {
        return Vec::new();
    }
    let frequent = |rows: &[usize]| share(rows.len(), n) >= min_support;

    let mut rows_of: BTreeMap<&PermissionName, Vec<usize>> = BTreeMap::new();
    for (i, s) in sets.iter().enumerate() {
        for p in s {
            rows_of.entry(p).or_default().push(i);
        }
    }
    let items: Vec<(&PermissionName, Vec<usize>)> =
        rows_of.into_iter().filter(|(_, r)| frequent(r)).collect();

    let mut found: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut stack: Vec<(Vec<usize>, Vec<usize>)> = items
        .iter()
        .enumerate()
        .map(|(k, (_, rows))| (vec![k], rows.clone()))
        .collect();
    while let Some((members, rows)) = stack.pop() {
        if members.len() < max_size {
            let last = *members.last().expect("non-empty");
            for (k, (_, other)) in items.iter().enumerate().skip(last + 1) {
                let both: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|r| other.binary_search(r).is_ok())
                    .collect();
                if frequent(&both) {
                    let mut next = members.clone();
                    next.push(k);
                    stack.push((next, both));
                }
            }
        }
        found.push((members, rows));
    }

    let n_benign = bundles.iter().filter(|b| b.label == Label::Benign).count();
    let n_malicious = bundles
        .iter()
        .filter(|b| b.label == Label::Malicious)
        .count();
    let mut out: Vec<(usize, PermissionFamily)> = found
        .into_iter()
        .map(|(members, rows)| {
            let count_label = |l: Label| rows.iter().filter(|&&r| bundles[r].label == l).count();
            let family = PermissionFamily {
                members: members.iter().map(|&k| items[k].0.clone()).collect(),
                support: share(rows.len(), n),
                support_benign: share(count_label(Label::Benign), n_benign),
                support_malicious: share(count_label(Label::Malicious), n_malicious),
            };
            (rows.len(), family)
        })
        .collect();
    out.sort_by(|(ca, a), (cb, b)| {
        cb.cmp(ca)
            .then(a.members.len().cmp(&b.members.len()))
            .then_with(|| a.members.cmp(&b.members))
    });
    out.into_iter().map(|(_, f)| f).collect()
}

/// The families a data-aware attacker mimics: the most supported ones among
/// the benign bundles.
pub fn top_benign_families(train: &[Bundle]) -> Vec<PermissionFamily> {
    let benign: Vec<Bundle> = train
        .iter()
        .filter(|b| b.label == Label::Benign)
        .cloned()
        .collect();
    let mut f = permission_families(&benign, FAMILY_MAX_SIZE, FAMILY_MIN_SUPPORT);
    f.truncate(TOP_FAMILIES);
    f
}
