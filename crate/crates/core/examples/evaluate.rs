//! Runs every attack against every detector on the reference corpus and
//! prints the rate matrix.

use gauntlet::bundle::{generate_corpus, CorpusSpec};
use gauntlet::evaluation::{run_evaluation, Experiment};

fn main() {
    let corpus = generate_corpus(&CorpusSpec::default()).expect("default spec is valid");
    let report = run_evaluation(&corpus, &Experiment::default()).expect("evaluation runs");
    print!("{}", report.to_csv());
    for (case, f) in &report.functionality {
        println!(
            "{case}: strict {:.3}, lax {:.3}, errors {}",
            f.strict, f.lax, f.n_errors
        );
    }
}
