//! Prints random vs pretrained few-shot Jaccard at each tail share.
//!
//! `cargo run --release -p ontorec-core --example sparsity_sweep -- [seeds]`

use ontorec::pipeline::{sparsity_sweep, SweepConfig};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let cfg = SweepConfig::default();
    for seed in 0..seeds {
        let points = sparsity_sweep(&cfg, seed).expect("sweep runs");
        for p in &points {
            println!(
                "seed {seed} tail {:.2} n {:>3} random {:.4} pretrained {:.4} gap {:+.4}",
                p.tail,
                p.few_shot_admissions,
                p.random,
                p.pretrained,
                p.gap()
            );
        }
    }
}
