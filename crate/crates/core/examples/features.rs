//! Legacy versus full feature extraction on a bundle whose SMS permission is
//! hidden behind its group constant and whose receiver lives in an include.

use gauntlet::bundle::{generate_corpus, CorpusSpec, Label};
use gauntlet::features::{drebin_observations, extract_full, extract_legacy};
use gauntlet::manifest::{extract_to_include, to_group};

fn main() {
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let mut b = corpus
        .into_iter()
        .find(|b| b.label == Label::Malicious && b.manifest.components().next().is_some())
        .unwrap();
    let grouped = b
        .manifest
        .permissions()
        .find(|p| p.name.group().is_some())
        .cloned();
    if let Some(p) = grouped {
        b.manifest = to_group(&b.manifest, &p).unwrap();
    }
    let c = b.manifest.components().next().unwrap().clone();
    let (doc, inc) = extract_to_include(&b.manifest, (&c).into()).unwrap();
    b.manifest = doc;
    b.include_files.insert(inc.path, inc.xml);

    let legacy = extract_legacy(&b);
    let full = extract_full(&b).unwrap();
    println!(
        "legacy sees {} features, full sees {}",
        legacy.ids().count(),
        full.ids().count()
    );
    for id in full.ids().filter(|id| !legacy.contains(id)) {
        println!("  hidden from legacy: {}", id.as_str());
    }
    println!("drebin observations:");
    for o in drebin_observations(&b) {
        println!("  {:?} {}", o.category, o.feature.as_str());
    }
}
