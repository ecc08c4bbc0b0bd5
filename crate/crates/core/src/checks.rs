//! Self-contained validation suites: finite-difference gradients, crisp
//! soundness, closure and sampler oracles, metric oracles and the checkpoint
//! rule. Each suite is deterministic and runs on small generated fixtures.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::axioms::{eval_ontology_axioms, OracleScorer, QuantifierMode};
use crate::error::{Error, Result};
use crate::grounding::{EmbeddingTable, PredicateSet, SatScores};
use crate::logic::AggregationConfig;
use crate::metrics::{admission_jaccard, admission_prf, ddi_score, jaccard, precision_recall_f1, DdiMatrix};
use crate::ontology::{OntologyDag, OntologyKind, RelationTriples};
use crate::sampler::{batch_from_nodes, close_seeds, sample_batch, AxiomBatch, NegCap};
use crate::trainer::{
    grad_check_against, ontology_step_grads, seed_mix, select_checkpoints, select_epochs, Corpus, EpochLog,
    Selection, TrainConfig, TrainState,
};

/// Deliberate corruption used to confirm that a suite can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Perturbs one analytic embedding gradient before comparison.
    Gradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn from(name: &'static str, r: Result<String>) -> Self {
        match r {
            Ok(detail) => SuiteResult {
                name,
                passed: true,
                detail,
            },
            Err(e) => SuiteResult {
                name,
                passed: false,
                detail: e.to_string(),
            },
        }
    }
}

pub const SUITES: [&str; 6] = [
    "grad_check",
    "crisp_soundness",
    "closure_oracle",
    "sampler_oracle",
    "metric_oracle",
    "checkpoint_rule",
];

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const RANDOM_DAGS: usize = 100;
pub const METRIC_CASES: usize = 1000;

pub fn run_suite(name: &str, fault: Fault) -> Option<SuiteResult> {
    let (name, r) = match name {
        "grad_check" => ("grad_check", grad_check_suite(8, 0, fault)),
        "crisp_soundness" => ("crisp_soundness", crisp_soundness(RANDOM_DAGS, 0)),
        "closure_oracle" => ("closure_oracle", closure_oracle(RANDOM_DAGS, 0)),
        "sampler_oracle" => ("sampler_oracle", sampler_oracle(RANDOM_DAGS, 0)),
        "metric_oracle" => ("metric_oracle", metric_oracle(METRIC_CASES, 0)),
        "checkpoint_rule" => ("checkpoint_rule", checkpoint_rule()),
        _ => return None,
    };
    Some(SuiteResult::from(name, r))
}

pub fn run_all(fault: Fault) -> Vec<SuiteResult> {
    SUITES.iter().filter_map(|s| run_suite(s, fault)).collect()
}

fn fail(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Random single-parent tree on `n` nodes: each node attaches to a uniformly
/// chosen earlier node, then codes are shuffled so indices carry no order.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> OntologyDag {
    assert!(n >= 2);
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(rng);
    let code = |i: usize| format!("n{}", labels[i]);
    let edges: Vec<(String, String)> = (1..n).map(|i| (code(rng.gen_range(0..i)), code(i))).collect();
    OntologyDag::from_edges(OntologyKind::Diagnosis, &edges).expect("random tree is valid")
}

/// Parent, ancestor and sibling relations by explicit path enumeration.
pub fn brute_force_relations(dag: &OntologyDag) -> RelationTriples {
    let mut t = RelationTriples::default();
    for u in 0..dag.len() {
        // depth-first walk recording path length
        let mut stack: Vec<(usize, usize)> = dag.children(u).iter().map(|&c| (c, 1)).collect();
        while let Some((v, len)) = stack.pop() {
            if len == 1 {
                t.parent_pairs.insert((u, v));
            } else {
                t.ancestor_pairs.insert((u, v));
            }
            stack.extend(dag.children(v).iter().map(|&c| (c, len + 1)));
        }
    }
    for a in 0..dag.len() {
        for b in (a + 1)..dag.len() {
            if dag.parent(a).is_some() && dag.parent(a) == dag.parent(b) {
                t.sibling_pairs.insert((a, b));
            }
        }
    }
    t
}

/// Toy corpus of three random trees with `n` nodes each.
pub fn toy_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [d, p, m] = OntologyKind::ALL.map(|kind| {
        let t = random_tree(n, &mut rng);
        let edges: Vec<(String, String)> = t.edges().map(|(p, c)| (t.id(p).into(), t.id(c).into())).collect();
        OntologyDag::from_edges(kind, &edges).expect("relabelled tree is valid")
    });
    Corpus::new(d, p, m, &[(n - 1, n - 1)]).expect("toy corpus is valid")
}

/// Central-difference check of every embedding and predicate parameter of
/// each ontology on a toy batch of at most ten nodes.
pub fn grad_check_suite(dim: usize, seed: u64, fault: Fault) -> Result<String> {
    let corpus = toy_corpus(10, seed_mix(seed, 40, 0));
    let cfg = TrainConfig {
        dim,
        seed_count: 3,
        rng_seed: seed,
        ..TrainConfig::default()
    };
    let state = TrainState::new(&corpus, &cfg);
    let mut worst: f64 = 0.0;
    for kind in OntologyKind::ALL {
        let batch = sample_batch(corpus.dag(kind), cfg.seed_count, seed_mix(seed, 41, kind.index() as u64), cfg.neg_cap);
        let (_, _, mut grads) = ontology_step_grads(&state, kind, &batch, &cfg)?;
        if fault == Fault::Gradient {
            let i = batch.nodes[0] * dim;
            grads.emb[i] += 1e-2 + grads.emb[i].abs();
        }
        worst = worst.max(grad_check_against(&state, kind, &batch, &cfg, &grads)?);
    }
    if worst < GRAD_TOLERANCE {
        Ok(format!("max relative error {worst:.2e} (d = {dim})"))
    } else {
        Err(fail(format!("max relative error {worst:.2e} >= {GRAD_TOLERANCE:e} (d = {dim})")))
    }
}

/// With indicator predicates read from the true relations, every axiom that
/// has at least one instance evaluates to exactly 1.
pub fn crisp_soundness(dags: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(seed, 42, 0));
    let agg = AggregationConfig::default();
    let mut evaluated = 0usize;
    for i in 0..dags {
        let n = rng.gen_range(2..=200);
        let dag = random_tree(n, &mut rng);
        let full = dag.derive_relations(None);
        let scorer = OracleScorer { triples: &full };
        let mut batches = vec![sample_batch(&dag, 6, rng.gen(), NegCap::Unbounded)];
        if n <= 25 {
            batches.push(batch_from_nodes(&dag, (0..n).collect(), NegCap::Unbounded, &mut rng));
        }
        for batch in &batches {
            for mode in [QuantifierMode::Restricted, QuantifierMode::Literal] {
                let e = eval_ontology_axioms(batch, &scorer, &agg, mode)?;
                for &(name, sat) in &e.report.axioms {
                    if sat != 1.0 {
                        return Err(fail(format!("dag {i} ({n} nodes, {mode:?}): {name} = {sat}")));
                    }
                    evaluated += 1;
                }
                if e.report.aggregated != 1.0 {
                    return Err(fail(format!("dag {i}: aggregate {}", e.report.aggregated)));
                }
            }
        }
    }
    Ok(format!("{dags} dags, {evaluated} axiom evaluations all exactly 1"))
}

/// Derived relations against path enumeration, and batch closure against
/// the definition.
pub fn closure_oracle(dags: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(seed, 43, 0));
    for i in 0..dags {
        let n = rng.gen_range(2..=200);
        let dag = random_tree(n, &mut rng);
        let fast = dag.derive_relations(None);
        if fast != brute_force_relations(&dag) {
            return Err(fail(format!("dag {i} ({n} nodes): relations differ from path enumeration")));
        }
        let k = rng.gen_range(1..=n.min(8));
        let seeds: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let mut want = BTreeSet::new();
        for &s in &seeds {
            want.insert(s);
            for v in 0..n {
                let linked = fast.parent_pairs.contains(&(v, s))
                    || fast.ancestor_pairs.contains(&(v, s))
                    || fast.is_sibling(v, s);
                if linked {
                    want.insert(v);
                }
            }
        }
        if close_seeds(&dag, &seeds) != want.into_iter().collect::<Vec<_>>() {
            return Err(fail(format!("dag {i}: closure of {seeds:?} differs")));
        }
    }
    Ok(format!("{dags} dags match path enumeration"))
}

/// Batch edge sets against a pair scan, plus locality of the gradient.
pub fn sampler_oracle(dags: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(seed, 44, 0));
    for i in 0..dags {
        let n = rng.gen_range(2..=200);
        let dag = random_tree(n, &mut rng);
        let cap = [NegCap::PerPositive(4), NegCap::Absolute(7), NegCap::Unbounded][i % 3];
        let batch = sample_batch(&dag, rng.gen_range(1..=8), rng.gen(), cap);
        check_batch(&dag, &batch).map_err(|m| fail(format!("dag {i} ({n} nodes): {m}")))?;
    }
    let locality = check_locality(seed)?;
    Ok(format!("{dags} dags match pair scan; {locality}"))
}

fn check_batch(dag: &OntologyDag, b: &AxiomBatch) -> std::result::Result<(), String> {
    if !b.nodes.windows(2).all(|w| w[0] < w[1]) {
        return Err("nodes not sorted and unique".into());
    }
    let mut edges = Vec::new();
    for &u in &b.nodes {
        for &v in &b.nodes {
            if dag.parent(v) == Some(u) {
                edges.push((u, v));
            }
        }
    }
    if b.positive_edges != edges {
        return Err("positive edges differ from pair scan".into());
    }
    let full = dag.derive_relations(None);
    let inside = |&(u, v): &(usize, usize)| b.contains(u) && b.contains(v);
    let restricted = RelationTriples {
        parent_pairs: full.parent_pairs.iter().filter(|p| inside(p)).copied().collect(),
        ancestor_pairs: full.ancestor_pairs.iter().filter(|p| inside(p)).copied().collect(),
        sibling_pairs: full.sibling_pairs.iter().filter(|p| inside(p)).copied().collect(),
    };
    if b.triples != restricted {
        return Err("batch relations differ from restricted full relations".into());
    }
    let distinct: BTreeSet<_> = b.negative_pairs.iter().collect();
    if distinct.len() != b.negative_pairs.len() {
        return Err("duplicate negative pair".into());
    }
    for &(u, v) in &b.negative_pairs {
        if u == v || !b.contains(u) || !b.contains(v) || dag.parent(v) == Some(u) {
            return Err(format!("invalid negative pair ({u}, {v})"));
        }
    }
    Ok(())
}

/// Embedding rows outside the batch receive exactly zero gradient.
fn check_locality(seed: u64) -> Result<String> {
    let corpus = toy_corpus(40, seed_mix(seed, 45, 0));
    let cfg = TrainConfig {
        dim: 4,
        seed_count: 2,
        ..TrainConfig::default()
    };
    let state = TrainState::new(&corpus, &cfg);
    let mut outside = 0;
    for kind in OntologyKind::ALL {
        let batch = sample_batch(corpus.dag(kind), 2, seed_mix(seed, 46, kind.index() as u64), cfg.neg_cap);
        let (_, _, g) = ontology_step_grads(&state, kind, &batch, &cfg)?;
        for (node, row) in g.emb.chunks(cfg.dim).enumerate() {
            if !batch.contains(node) {
                outside += 1;
                if row.iter().any(|&x| x != 0.0) {
                    return Err(fail(format!("{kind}: node {node} outside the batch has a gradient")));
                }
            }
        }
    }
    Ok(format!("locality holds on {outside} out-of-batch rows"))
}

fn set_of(v: &[bool]) -> BTreeSet<usize> {
    v.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

fn oracle_jaccard(t: &[bool], p: &[bool]) -> f64 {
    let (t, p) = (set_of(t), set_of(p));
    t.intersection(&p).count() as f64 / t.union(&p).count() as f64
}

fn oracle_prf(t: &[bool], p: &[bool]) -> (f64, f64, f64) {
    let (t, p) = (set_of(t), set_of(p));
    let inter = t.intersection(&p).count() as f64;
    let prec = if p.is_empty() { 0.0 } else { inter / p.len() as f64 };
    let rec = if t.is_empty() { 0.0 } else { inter / t.len() as f64 };
    let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
    (prec, rec, f1)
}

fn oracle_ddi(preds: &[Vec<bool>], ddi: &DdiMatrix) -> Option<f64> {
    let (mut hits, mut pairs) = (0, 0);
    for p in preds {
        let s: Vec<usize> = set_of(p).into_iter().collect();
        for a in &s {
            for b in &s {
                if a < b {
                    pairs += 1;
                    hits += ddi.get(*a, *b) as usize;
                }
            }
        }
    }
    (pairs > 0).then(|| hits as f64 / pairs as f64)
}

fn nested_mean(xs: &[Vec<f64>]) -> f64 {
    xs.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).sum::<f64>() / xs.len() as f64
}

/// Metric functions against set-based reimplementations on random cases,
/// plus the two hand values.
pub fn metric_oracle(cases: usize, seed: u64) -> Result<String> {
    const TOL: f64 = 1e-12;
    let close = |a: f64, b: f64| (a - b).abs() <= TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(seed, 47, 0));
    for case in 0..cases {
        let n = rng.gen_range(1..=12);
        let density = rng.gen_range(0.1..0.9);
        let mut ddi = DdiMatrix::new(n);
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.gen_bool(0.3) {
                    ddi.set(a, b);
                }
            }
        }
        let mut draw = |nonempty: bool| loop {
            let v: Vec<bool> = (0..n).map(|_| rng.gen_bool(density)).collect();
            if !nonempty || v.contains(&true) {
                break v;
            }
        };
        let patients = 1 + case % 4;
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..patients {
            let adms = 1 + (case / 4) % 3;
            truth.push((0..adms).map(|_| draw(true)).collect::<Vec<_>>());
            pred.push((0..adms).map(|_| draw(false)).collect::<Vec<_>>());
        }
        let per = |f: &dyn Fn(&[bool], &[bool]) -> f64| -> Vec<Vec<f64>> {
            truth
                .iter()
                .zip(&pred)
                .map(|(ts, ps)| ts.iter().zip(ps).map(|(t, p)| f(t, p)).collect())
                .collect()
        };
        let mismatch = |what: &str| fail(format!("case {case}: {what} disagrees with set oracle"));

        let j = jaccard(&truth, &pred)?;
        if !close(j, nested_mean(&per(&oracle_jaccard))) {
            return Err(mismatch("jaccard"));
        }
        let prf = precision_recall_f1(&truth, &pred)?;
        let want = [
            nested_mean(&per(&|t, p| oracle_prf(t, p).0)),
            nested_mean(&per(&|t, p| oracle_prf(t, p).1)),
            nested_mean(&per(&|t, p| oracle_prf(t, p).2)),
        ];
        if !(close(prf.precision, want[0]) && close(prf.recall, want[1]) && close(prf.f1, want[2])) {
            return Err(mismatch("precision/recall/f1"));
        }
        let flat: Vec<Vec<bool>> = pred.iter().flatten().cloned().collect();
        let got = match ddi_score(flat.iter().map(|v| v.as_slice()), &ddi) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        match (got, oracle_ddi(&flat, &ddi)) {
            (Some(a), Some(b)) if close(a, b) => {}
            (None, None) => {}
            _ => return Err(mismatch("ddi")),
        }
    }

    let hot = |on: &[usize]| (0..3).map(|i| on.contains(&i)).collect::<Vec<bool>>();
    let j = admission_jaccard(&hot(&[0, 1]), &hot(&[1, 2]))?;
    let mut d = DdiMatrix::new(3);
    d.set(0, 1);
    let all = hot(&[0, 1, 2]);
    let r = ddi_score([all.as_slice()], &d)?;
    if j != 1.0 / 3.0 || r != 1.0 / 3.0 {
        return Err(fail(format!("hand values: jaccard {j}, ddi {r}, expected 1/3")));
    }
    let e = admission_prf(&hot(&[0]), &hot(&[]))?;
    if !e.empty_prediction || e.precision != 0.0 {
        return Err(fail("empty prediction not flagged"));
    }
    Ok(format!("{cases} random cases within {TOL:e}; hand values exact"))
}

fn hand_log(epoch: usize, proc_sat: f64, ind_sat: f64) -> EpochLog {
    EpochLog {
        epoch,
        ontology_sat: [0.5, proc_sat, 0.5],
        indication_sat: ind_sat,
        losses: vec![],
    }
}

/// Hand-built logs whose procedure and indication peaks fall on different
/// epochs yield a mixed checkpoint; ties resolve to the earliest epoch.
pub fn checkpoint_rule() -> Result<String> {
    let logs = vec![
        hand_log(1, 0.60, 0.40),
        hand_log(2, 0.90, 0.50),
        hand_log(3, 0.70, 0.80),
        hand_log(4, 0.90, 0.80),
    ];
    let sel = select_epochs(&logs);
    let want = Selection {
        procedure_epoch: 2,
        indication_epoch: 3,
    };
    if sel != want {
        return Err(fail(format!("selected {sel:?}, expected {want:?}")));
    }
    let history: Vec<_> = logs
        .iter()
        .map(|l| {
            let tag = l.epoch as f64;
            crate::grounding::ModelCheckpoint {
                tables: OntologyKind::ALL
                    .iter()
                    .map(|&k| EmbeddingTable {
                        kind: k,
                        ids: vec![format!("{k}0")],
                        dim: 1,
                        data: vec![tag],
                    })
                    .collect(),
                predicates: PredicateSet::new(1, l.epoch as u64),
                epoch: l.epoch,
                table_epochs: [l.epoch; 3],
                sat_scores: SatScores {
                    ontology: l.ontology_sat,
                    indication: l.indication_sat,
                },
                config: String::new(),
            }
        })
        .collect();
    let mixed = select_checkpoints(&logs, &history);
    let sources: Vec<f64> = mixed.tables.iter().map(|t| t.data[0]).collect();
    if sources != [3.0, 2.0, 3.0] || mixed.table_epochs != [3, 2, 3] {
        return Err(fail(format!("composed tables come from epochs {sources:?}")));
    }
    if select_epochs(&logs) != sel {
        return Err(fail("selection is not a pure function of the logs"));
    }
    Ok("procedure from epoch 2, diagnosis and medication from epoch 3".into())
}
