//! Trains the four detectors on a temporal split and reports their
//! detection rates, then shows Kirin's rules on a hand-picked set.

use std::collections::BTreeSet;

use gauntlet::bundle::{generate_corpus, split_dataset, CorpusSpec, SplitPlan};
use gauntlet::detectors::{kirin_classify, train, DetectorKind, TrainParams};
use gauntlet::evaluation::detection_rate;
use gauntlet::manifest::PermissionName;

fn main() {
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let (train_set, test) = split_dataset(&corpus, &SplitPlan::default()).unwrap();
    println!("train {} / test {}", train_set.len(), test.len());
    for kind in DetectorKind::ALL {
        let model = train(kind, &train_set, &TrainParams::default(), 1).unwrap();
        println!("{kind}: {:.3}", detection_rate(&model, &test).unwrap());
    }

    let perms: BTreeSet<PermissionName> = [
        "READ_PHONE_STATE",
        "RECORD_AUDIO",
        "INTERNET",
        "SEND_SMS",
        "WRITE_SMS",
    ]
    .iter()
    .map(|p| PermissionName::new(format!("android.permission.{p}")))
    .collect();
    let v = kirin_classify(&perms, &BTreeSet::new());
    println!("kirin rules fired: {:?}", v.triggered_rules);
}
