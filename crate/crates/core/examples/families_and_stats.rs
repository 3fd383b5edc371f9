//! Permission families and protection-level histograms per label.

use gauntlet::bundle::{generate_corpus, Bundle, CorpusSpec, Label};
use gauntlet::evaluation::{permission_families, protection_stats};

fn main() {
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    for label in [Label::Benign, Label::Malicious] {
        let subset: Vec<Bundle> = corpus
            .iter()
            .filter(|b| b.label == label)
            .cloned()
            .collect();
        let stats = protection_stats(&subset);
        println!("{label:?}: dominant levels {:?}", stats.dominant);
        for f in permission_families(&subset, 3, 0.2).iter().take(5) {
            let names: Vec<&str> = f.members.iter().map(|p| p.short()).collect();
            println!("  {{{}}} {:.3}", names.join(", "), f.support);
        }
    }
}
