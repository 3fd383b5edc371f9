//! Runs each attack on one malicious bundle and prints its audit trail and
//! what the legacy extractor still sees afterwards.

use gauntlet::attacks::{apply, validate_functionality, AttackInput, AttackKind, AttackerModel};
use gauntlet::bundle::{generate_corpus, split_dataset, CorpusSpec, Label, SplitPlan};
use gauntlet::detectors::{kirin_bundle, Detector, TrainedDetector};
use gauntlet::evaluation::{bundle_seed, AttackerKnowledge};
use gauntlet::features::legacy_permissions;

fn main() {
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let (train_set, test) = split_dataset(&corpus, &SplitPlan::default()).unwrap();
    let knowledge = AttackerKnowledge::prepare(&train_set, &Default::default(), 1).unwrap();
    let drebin = TrainedDetector::Drebin(knowledge.model.clone());
    let b = test.iter().find(|b| b.label == Label::Malicious).unwrap();
    println!(
        "{}: {} legacy permissions, kirin rules {:?}, drebin {}",
        b.id,
        legacy_permissions(b).len(),
        kirin_bundle(b).triggered_rules,
        drebin.is_malicious(b)
    );

    let report = knowledge.report(b);
    for kind in AttackKind::ALL {
        let input = match kind.tuple().attacker_model {
            AttackerModel::MA => AttackInput::Report(&report),
            AttackerModel::DA => AttackInput::Families(&knowledge.families),
            AttackerModel::ZK => AttackInput::Nothing,
        };
        let out = apply(kind, b, input, bundle_seed(1, &b.id)).unwrap();
        println!(
            "\n{kind}: {} edits, {} legacy permissions left, kirin {:?}, drebin {}, strict {:?}",
            out.audit.len(),
            legacy_permissions(&out.bundle).len(),
            kirin_bundle(&out.bundle).triggered_rules,
            drebin.is_malicious(&out.bundle),
            validate_functionality(&out.bundle, true)
        );
        for e in out.audit.iter().take(4) {
            println!("  {} @ {}", e.kind, e.location);
        }
    }
}
