//! The functionality proxy on attacked bundles, lax and strict.

use gauntlet::attacks::{mb1, mb4, validate_functionality};
use gauntlet::bundle::{generate_corpus, split_dataset, CorpusSpec, SplitPlan};
use gauntlet::detectors::{drebin_classify, drebin_train, DrebinParams};

fn main() {
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let (train_set, test) = split_dataset(&corpus, &SplitPlan::default()).unwrap();
    let model = drebin_train(&train_set, &DrebinParams::default(), 1).unwrap();
    for b in test.iter().take(3) {
        let report = drebin_classify(&model, b);
        let moved = mb1(b, &report, 7).unwrap().bundle;
        let hidden = mb4(b).unwrap().bundle;
        println!("{}", b.id);
        println!("  mb1 lax {:?}", validate_functionality(&moved, false));
        println!("  mb1 strict {:?}", validate_functionality(&moved, true));
        println!("  mb4 strict {:?}", validate_functionality(&hidden, true));
    }
}
