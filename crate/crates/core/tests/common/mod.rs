//! Fixtures shared by the integration and acceptance targets.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ontorec::axioms::IndicationAtom;
use ontorec::grounding::{predicate_forward, PredicateName};
use ontorec::ontology::{synthetic_tree, OntologyDag, OntologyKind, TreeShape};
use ontorec::trainer::{seed_mix, train_epoch, Corpus, TrainConfig, TrainState};

pub fn tree(kind: OntologyKind, nodes: usize, depth: usize, prefix: &str, seed: u64) -> OntologyDag {
    let shape = TreeShape {
        nodes,
        max_depth: depth,
        prefix: prefix.into(),
    };
    synthetic_tree(kind, &shape, seed)
}

/// Three ~30-node ontologies of depth 3 with one indication pair.
pub fn toy_corpus(seed: u64) -> Corpus {
    let d = tree(OntologyKind::Diagnosis, 30, 3, "D", seed_mix(seed, 1, 0));
    let p = tree(OntologyKind::Procedure, 30, 3, "P", seed_mix(seed, 1, 1));
    let m = tree(OntologyKind::Medication, 30, 3, "M", seed_mix(seed, 1, 2));
    Corpus::new(d, p, m, &[]).unwrap()
}

pub fn toy_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        dim: 8,
        epochs: 500,
        seed_count: 2,
        rng_seed: seed,
        ..TrainConfig::default()
    };
    cfg.adam.lr = 2e-3;
    cfg
}

pub struct AlignmentFixture {
    pub corpus: Corpus,
    /// True `(medication, diagnosis)` leaf pairs withheld from training.
    pub held_out: Vec<IndicationAtom>,
}

/// Medication sibling groups indicated for disjoint diagnosis subtrees,
/// listed at leaf level; 20% of those true pairs are withheld. Training pairs
/// name leaves only, so descendant expansion cannot reintroduce a withheld
/// pair.
pub fn alignment_fixture(seed: u64) -> AlignmentFixture {
    let d = tree(OntologyKind::Diagnosis, 200, 4, "D", seed_mix(seed, 2, 0));
    let p = tree(OntologyKind::Procedure, 30, 3, "P", seed_mix(seed, 2, 1));
    let m = tree(OntologyKind::Medication, 80, 3, "M", seed_mix(seed, 2, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(seed, 2, 3));

    let groups: Vec<Vec<usize>> = (0..m.len())
        .map(|n| m.children(n).iter().copied().filter(|&c| m.is_leaf(c)).collect::<Vec<_>>())
        .filter(|g| g.len() >= 2)
        .collect();
    let mut taken = vec![false; d.len()];
    let mut pairs = Vec::new();
    for (n, group) in (0..d.len()).filter(|&n| !d.is_leaf(n)).zip(&groups) {
        let sub = d.descendants(n);
        let leaves: Vec<usize> = sub.iter().copied().filter(|&x| d.is_leaf(x)).collect();
        if !(3..=20).contains(&leaves.len()) || taken[n] || sub.iter().any(|&x| taken[x]) {
            continue;
        }
        taken[n] = true;
        sub.iter().for_each(|&x| taken[x] = true);
        for &med in group {
            pairs.extend(leaves.iter().map(|&leaf| (med, leaf)));
        }
    }
    let (held_out, train): (Vec<IndicationAtom>, Vec<IndicationAtom>) =
        pairs.into_iter().partition(|_| rng.gen_bool(0.2));
    AlignmentFixture {
        corpus: Corpus::new(d, p, m, &train).unwrap(),
        held_out,
    }
}

pub fn alignment_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        dim: 16,
        epochs: 30,
        seed_count: 16,
        rng_seed: seed,
        ..TrainConfig::default()
    };
    cfg.adam.lr = 1e-2;
    cfg
}

/// Mean `I(m, d)` on withheld true pairs, and its expectation when each
/// withheld pair's diagnosis is replaced by a uniformly drawn one.
pub fn alignment_signal(seed: u64) -> (f64, f64) {
    let fx = alignment_fixture(seed);
    let cfg = alignment_config(seed);
    let mut state = TrainState::new(&fx.corpus, &cfg);
    for _ in 0..cfg.epochs {
        train_epoch(&mut state, &fx.corpus, &cfg).unwrap();
    }
    let med = state.table(OntologyKind::Medication);
    let diag = state.table(OntologyKind::Diagnosis);
    let net = state.predicates.get(PredicateName::Indication);
    let score = |(m, d): IndicationAtom| predicate_forward(net, med.row(m), diag.row(d)).unwrap();
    let n_diag = fx.corpus.dag(OntologyKind::Diagnosis).len();
    let true_mean = fx.held_out.iter().map(|&x| score(x)).sum::<f64>() / fx.held_out.len() as f64;
    let rand_mean = fx
        .held_out
        .iter()
        .map(|&(m, _)| (0..n_diag).map(|d| score((m, d))).sum::<f64>() / n_diag as f64)
        .sum::<f64>()
        / fx.held_out.len() as f64;
    (true_mean, rand_mean)
}
