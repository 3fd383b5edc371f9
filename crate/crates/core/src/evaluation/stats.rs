//! Dataset inspection: protection-level histograms and the scanner-count
//! maliciousness comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::detectors::Detector;
use crate::manifest::{PermissionName, PermissionTagKind};
use crate::tables::ProtectionLevel;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtectionStats {
    /// Share of all permission requests at each level.
    pub general: BTreeMap<ProtectionLevel, f64>,
    /// Share of bundles whose most requested level is each level.
    pub dominant: BTreeMap<ProtectionLevel, f64>,
}

fn requested(b: &Bundle) -> BTreeSet<&PermissionName> {
    b.manifest
        .permissions()
        .filter(|p| p.tag_kind != PermissionTagKind::CustomPermission)
        .map(|p| &p.name)
        .collect()
}

/// Bundles without any request count toward neither histogram.
pub fn protection_stats(bundles: &[Bundle]) -> ProtectionStats {
    let mut general: BTreeMap<ProtectionLevel, usize> = BTreeMap::new();
    let mut dominant: BTreeMap<ProtectionLevel, usize> = BTreeMap::new();
    for b in bundles {
        let mut hist: BTreeMap<ProtectionLevel, usize> = BTreeMap::new();
        for p in requested(b) {
            *hist.entry(p.protection_level()).or_default() += 1;
        }
        for (l, c) in &hist {
            *general.entry(*l).or_default() += c;
        }
        // max_by_key keeps the last maximum; iterate high to low so ties
        // fall to the lowest level.
        if let Some((l, _)) = hist.iter().rev().max_by_key(|(_, c)| **c) {
            *dominant.entry(*l).or_default() += 1;
        }
    }
    let normalize = |m: BTreeMap<ProtectionLevel, usize>| {
        let total: usize = m.values().sum();
        m.into_iter()
            .map(|(l, c)| (l, c as f64 / total as f64))
            .collect()
    };
    ProtectionStats {
        general: normalize(general),
        dominant: normalize(dominant),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Maliciousness {
    Lower,
    Equal,
    Higher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaliciousnessComparison {
    pub original: usize,
    pub attacked: usize,
    pub verdict: Maliciousness,
}

impl MaliciousnessComparison {
    /// The attacked bundle may not be flagged by more scanners.
    pub fn passes(&self) -> bool {
        self.verdict != Maliciousness::Higher
    }
}

pub fn maliciousness_compare(
    scanners: &[&dyn Detector],
    original: &Bundle,
    attacked: &Bundle,
) -> MaliciousnessComparison {
    let count = |b: &Bundle| scanners.iter().filter(|s| s.is_malicious(b)).count();
    let (o, a) = (count(original), count(attacked));
    MaliciousnessComparison {
        original: o,
        attacked: a,
        verdict: match a.cmp(&o) {
            std::cmp::Ordering::Less => Maliciousness::Lower,
            std::cmp::Ordering::Equal => Maliciousness::Equal,
            std::cmp::Ordering::Greater => Maliciousness::Higher,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::Label;
    use crate::detectors::TrainedDetector;
    use crate::manifest::{ManifestDoc, Node, PermissionRequest};

    fn app(perms: &[&str]) -> Bundle {
        let mut manifest = ManifestDoc::new("p");
        for p in perms {
            manifest
                .nodes
                .push(Node::Permission(PermissionRequest::uses(format!(
                    "android.permission.{p}"
                ))));
        }
        Bundle {
            id: "b".into(),
            label: Label::Benign,
            timestamp: 0,
            manifest,
            smali: Default::default(),
            include_files: Default::default(),
        }
    }

    #[test]
    fn dominant_majority_and_tie() {
        let s = protection_stats(&[app(&["INTERNET", "VIBRATE", "WAKE_LOCK", "CAMERA"])]);
        assert_eq!(s.dominant, [(ProtectionLevel::Normal, 1.0)].into());
        assert_eq!(s.general[&ProtectionLevel::Normal], 0.75);
        let tie = protection_stats(&[app(&["INTERNET", "CAMERA"])]);
        assert_eq!(tie.dominant, [(ProtectionLevel::Normal, 1.0)].into());
    }

    #[test]
    fn histograms_sum_to_one() {
        let s = protection_stats(&[
            app(&["INTERNET", "CAMERA", "SEND_SMS"]),
            app(&[]),
            app(&["READ_SMS"]),
        ]);
        for m in [&s.general, &s.dominant] {
            assert!((m.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(s.dominant[&ProtectionLevel::Dangerous], 1.0);
        assert!(protection_stats(&[]).general.is_empty());
    }

    #[test]
    fn identical_bundles_compare_equal() {
        let k = TrainedDetector::Kirin;
        let scanners: Vec<&dyn Detector> = vec![&k];
        let b = app(&["SET_DEBUG_APP"]);
        let c = maliciousness_compare(&scanners, &b, &b);
        assert_eq!(c.verdict, Maliciousness::Equal);
        assert!(c.passes());
        let lower = maliciousness_compare(&scanners, &b, &app(&[]));
        assert_eq!(
            (lower.original, lower.attacked, lower.verdict),
            (1, 0, Maliciousness::Lower)
        );
    }
}
