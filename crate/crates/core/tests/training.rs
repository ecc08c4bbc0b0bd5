mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ontorec::axioms::{eval_ontology_axioms, NeuralScorer};
use ontorec::ontology::OntologyKind;
use ontorec::sampler::batch_from_nodes;
use ontorec::trainer::{select_epochs, train, train_epoch, EpochLog, Selection, TrainConfig, TrainState};

/// Per epoch, the batch-mean log and a fixed full-ontology evaluation.
fn toy_run(seed: u64) -> (Vec<EpochLog>, Vec<[f64; 3]>) {
    let corpus = common::toy_corpus(seed);
    let cfg = common::toy_config(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full: Vec<_> = OntologyKind::ALL
        .iter()
        .map(|&k| {
            let dag = corpus.dag(k);
            batch_from_nodes(dag, (0..dag.len()).collect(), cfg.neg_cap, &mut rng)
        })
        .collect();
    let mut st = TrainState::new(&corpus, &cfg);
    let (mut logs, mut evals) = (Vec::new(), Vec::new());
    for _ in 0..cfg.epochs {
        logs.push(train_epoch(&mut st, &corpus, &cfg).unwrap());
        evals.push(OntologyKind::ALL.map(|k| {
            let scorer = NeuralScorer {
                emb: st.table(k),
                nets: st.nets(k),
            };
            eval_ontology_axioms(&full[k.index()], &scorer, &cfg.aggregation, cfg.quantifier)
                .unwrap()
                .report
                .aggregated
        }));
    }
    (logs, evals)
}

/// Each toy ontology reaches 0.95, and after epoch 20 full-ontology
/// satisfiability never falls more than 0.02 from one epoch to the next.
#[test]
fn toy_ontologies_train_and_stay_stable() {
    for seed in 0..3 {
        let (logs, evals) = toy_run(seed);
        for k in 0..3 {
            let best = logs.iter().map(|l| l.ontology_sat[k]).fold(0.0, f64::max);
            assert!(best >= 0.95, "seed {seed}, ontology {k}: best {best}");
            for e in 20..evals.len() {
                let drop = evals[e - 1][k] - evals[e][k];
                assert!(drop <= 0.02, "seed {seed}, ontology {k}, epoch {}: drop {drop}", e + 1);
            }
        }
    }
}

#[test]
fn held_out_indications_score_above_random_pairs() {
    let (held, random) = common::alignment_signal(0);
    assert!(held - random >= 0.2, "held {held}, random {random}");
}

#[test]
fn training_is_deterministic() {
    let fx = common::alignment_fixture(1);
    let cfg = TrainConfig {
        epochs: 3,
        ..common::alignment_config(1)
    };
    let a = train(&fx.corpus, &cfg).unwrap();
    let b = train(&fx.corpus, &cfg).unwrap();
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
}

fn naive_selection(logs: &[EpochLog]) -> Selection {
    let pick = |key: &dyn Fn(&EpochLog) -> f64| {
        let best = logs.iter().map(key).fold(f64::NEG_INFINITY, f64::max);
        logs.iter().find(|l| key(l) == best).unwrap().epoch
    };
    Selection {
        procedure_epoch: pick(&|l| l.ontology_sat[1]),
        indication_epoch: pick(&|l| l.indication_sat),
    }
}

proptest! {
    #[test]
    fn selection_is_a_pure_function_of_the_logs(
        sats in prop::collection::vec((0u8..5, 0u8..5), 1..30),
    ) {
        // coarse values force ties
        let logs: Vec<EpochLog> = sats
            .iter()
            .enumerate()
            .map(|(i, &(p, s))| EpochLog {
                epoch: i + 1,
                ontology_sat: [0.0, p as f64 / 4.0, 0.0],
                indication_sat: s as f64 / 4.0,
                losses: vec![],
            })
            .collect();
        prop_assert_eq!(select_epochs(&logs), naive_selection(&logs));
        prop_assert_eq!(select_epochs(&logs), select_epochs(&logs.clone()));
    }
}
