//! Apply the length, comment-rank and advertisement rules to a raw
//! repository and write the survivors as a corpus file.
//!
//! cargo run --example clean_corpus > cleaned.tsv

use std::io::{self, Write};

use stc::corpus::{build_vocabulary, clean_pairs, CleaningConfig};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let corpus = generate(&SyntheticConfig {
        seed: 3,
        posts: 200,
        ..Default::default()
    });
    let (cleaned, report) = clean_pairs(&corpus.repository, &CleaningConfig::default());
    eprintln!("{report:#?}");

    let vocab = build_vocabulary(&cleaned)?;
    eprintln!(
        "{} words over {} documents, tag {}",
        vocab.len(),
        vocab.n_docs(),
        vocab.tag()
    );

    let stdout = io::stdout();
    let mut out = stdout.lock();
    cleaned.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}
