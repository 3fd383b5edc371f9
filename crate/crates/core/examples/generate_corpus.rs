//! Generates a small synthetic corpus, writes it to a temp directory and
//! reads one bundle back.

use gauntlet::bundle::{generate_corpus, load_bundle, save_bundle, CorpusSpec, Label};

fn main() {
    let spec = CorpusSpec {
        n_benign: 45,
        n_malicious: 5,
        ..CorpusSpec::default()
    };
    let corpus = generate_corpus(&spec).expect("valid spec");
    let malicious = corpus
        .iter()
        .filter(|b| b.label == Label::Malicious)
        .count();
    println!("{} bundles, {malicious} malicious", corpus.len());

    let dir = std::env::temp_dir().join("gauntlet-example-corpus");
    let b = corpus.iter().find(|b| b.label == Label::Malicious).unwrap();
    save_bundle(b, &dir.join(&b.id)).unwrap();
    let back = load_bundle(&dir.join(&b.id)).unwrap();
    assert_eq!(&back, b);
    println!("{} round-tripped, digest {}", b.id, &b.digest()[..16]);
    for p in b.manifest.permissions() {
        println!("  {} {}", p.tag_kind.element_name(), p.name.as_str());
    }
}
