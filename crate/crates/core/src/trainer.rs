//! Satisfiability maximization: each epoch trains the diagnosis, procedure
//! and medication encoders in turn, then aligns medication and diagnosis
//! embeddings through the indication predicate.

use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axioms::{
    backprop_indication, backprop_ontology, eval_indication_axioms, eval_ontology_axioms,
    expand_indications, sample_indication_negatives, IndicationAtom, IndicationGrads,
    NeuralScorer, OntologyGrads, OntologyNets, QuantifierMode,
};
use crate::error::{Error, Result};
use crate::grounding::{
    init_embeddings, EmbeddingTable, ModelCheckpoint, PredicateName, PredicateSet, Relation,
    SatScores,
};
use crate::logic::AggregationConfig;
use crate::ontology::{OntologyDag, OntologyKind};
use crate::optim::{Adam, AdamConfig};
use crate::sampler::{sample_batch_with, AxiomBatch, NegCap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Batches per ontology per epoch; `None` means `ceil(|nodes| / seed_count)`.
    pub steps_per_epoch: Option<usize>,
    /// Seed nodes per batch before closure.
    pub seed_count: usize,
    /// Indication pairs per alignment step.
    pub indication_batch: usize,
    pub adam: AdamConfig,
    pub aggregation: AggregationConfig,
    pub neg_cap: NegCap,
    pub rng_seed: u64,
    pub quantifier: QuantifierMode,
    /// Alignment updates only the indication predicate.
    pub freeze_embeddings_on_align: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            epochs: 50,
            steps_per_epoch: None,
            seed_count: 32,
            indication_batch: 64,
            adam: AdamConfig::default(),
            aggregation: AggregationConfig::default(),
            neg_cap: NegCap::default(),
            rng_seed: 0,
            quantifier: QuantifierMode::Restricted,
            freeze_embeddings_on_align: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("batch", self.seed_count),
            ("indication batch", self.indication_batch),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps per epoch must be positive".into()));
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.adam.lr
            )));
        }
        if matches!(self.neg_cap, NegCap::Absolute(0) | NegCap::PerPositive(0)) {
            return Err(Error::Config("negative cap must be positive".into()));
        }
        self.aggregation.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn steps_for(&self, dag: &OntologyDag) -> usize {
        self.steps_per_epoch
            .unwrap_or_else(|| dag.len().div_ceil(self.seed_count))
    }
}

/// The three ontologies plus the descendant-expanded indication pairs.
#[derive(Clone, Debug)]
pub struct Corpus {
    /// Indexed by [`OntologyKind::index`].
    pub dags: Vec<OntologyDag>,
    /// `(medication, diagnosis)` index pairs, expanded and sorted.
    pub indications: Vec<IndicationAtom>,
    indication_set: HashSet<IndicationAtom>,
}

impl Corpus {
    pub fn new(
        diagnosis: OntologyDag,
        procedure: OntologyDag,
        medication: OntologyDag,
        indications: &[IndicationAtom],
    ) -> Result<Self> {
        let dags = vec![diagnosis, procedure, medication];
        for (dag, kind) in dags.iter().zip(OntologyKind::ALL) {
            if dag.kind() != kind {
                return Err(Error::Config(format!(
                    "expected a {kind} ontology, got {}",
                    dag.kind()
                )));
            }
        }
        let n_med = dags[OntologyKind::Medication.index()].len();
        if let Some(&(m, _)) = indications.iter().find(|(m, _)| *m >= n_med) {
            return Err(Error::UnknownNode(format!("medication #{m}")));
        }
        let indications = expand_indications(indications, &dags[OntologyKind::Diagnosis.index()])?;
        let indication_set = indications.iter().copied().collect();
        Ok(Corpus {
            dags,
            indications,
            indication_set,
        })
    }

    pub fn dag(&self, kind: OntologyKind) -> &OntologyDag {
        &self.dags[kind.index()]
    }

    pub fn indication_set(&self) -> &HashSet<IndicationAtom> {
        &self.indication_set
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean aggregated satisfiability over the epoch's batches, by ontology.
    pub ontology_sat: [f64; 3],
    /// Satisfiability on the full indication set after alignment.
    pub indication_sat: f64,
    /// Loss of every optimizer step in phase order.
    pub losses: Vec<f64>,
}

/// Parameters plus optimizer state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub tables: Vec<EmbeddingTable>,
    pub predicates: PredicateSet,
    pub epoch: usize,
    emb_opt: Vec<Adam>,
    net_opt: Vec<Adam>,
    rng: ChaCha8Rng,
    eval_negatives: Vec<IndicationAtom>,
}

impl TrainState {
    pub fn new(corpus: &Corpus, cfg: &TrainConfig) -> Self {
        let tables: Vec<EmbeddingTable> = OntologyKind::ALL
            .iter()
            .map(|&k| init_embeddings(corpus.dag(k), cfg.dim, seed_mix(cfg.rng_seed, 1, k.index() as u64)))
            .collect();
        let predicates = PredicateSet::new(cfg.dim, seed_mix(cfg.rng_seed, 2, 0));
        let emb_opt = tables.iter().map(|t| Adam::new(t.data.len())).collect();
        let net_opt = predicates.nets.iter().map(|n| Adam::new(n.param_count())).collect();

        let mut eval_rng = ChaCha8Rng::seed_from_u64(seed_mix(cfg.rng_seed, 3, 0));
        let eval_negatives = sample_indication_negatives(
            corpus.dag(OntologyKind::Medication).len(),
            corpus.dag(OntologyKind::Diagnosis).len(),
            corpus.indication_set(),
            corpus.indications.len(),
            &mut eval_rng,
        );
        TrainState {
            tables,
            predicates,
            epoch: 0,
            emb_opt,
            net_opt,
            rng: ChaCha8Rng::seed_from_u64(seed_mix(cfg.rng_seed, 4, 0)),
            eval_negatives,
        }
    }

    /// Resumes from saved parameters with fresh optimizer state.
    pub fn from_checkpoint(corpus: &Corpus, cfg: &TrainConfig, ckpt: &ModelCheckpoint) -> Result<Self> {
        for (t, k) in ckpt.tables.iter().zip(OntologyKind::ALL) {
            if !t.matches(corpus.dag(k)) {
                return Err(Error::Config(format!(
                    "checkpoint {k} table does not match the {k} ontology"
                )));
            }
            if t.dim != cfg.dim {
                return Err(Error::DimensionMismatch {
                    expected: cfg.dim,
                    actual: t.dim,
                });
            }
        }
        let mut st = TrainState::new(corpus, cfg);
        st.tables = ckpt.tables.clone();
        st.predicates = ckpt.predicates.clone();
        st.epoch = ckpt.epoch;
        Ok(st)
    }

    pub fn table(&self, kind: OntologyKind) -> &EmbeddingTable {
        &self.tables[kind.index()]
    }

    pub fn nets(&self, kind: OntologyKind) -> OntologyNets<'_> {
        let p = &self.predicates;
        OntologyNets {
            parent: p.get(PredicateName::Onto(Relation::Parent, kind)),
            sibling: p.get(PredicateName::Onto(Relation::Sibling, kind)),
            ancestor: p.get(PredicateName::Onto(Relation::Ancestor, kind)),
        }
    }

    pub fn snapshot(&self, log: Option<&EpochLog>, cfg: &TrainConfig) -> ModelCheckpoint {
        ModelCheckpoint {
            tables: self.tables.clone(),
            predicates: self.predicates.clone(),
            epoch: self.epoch,
            table_epochs: [self.epoch; 3],
            sat_scores: log.map_or_else(SatScores::default, |l| SatScores {
                ontology: l.ontology_sat,
                indication: l.indication_sat,
            }),
            config: cfg.to_json(),
        }
    }
}

pub fn seed_mix(seed: u64, stream: u64, sub: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(sub.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss, report and gradients of one ontology batch.
pub fn ontology_step_grads(
    state: &TrainState,
    kind: OntologyKind,
    batch: &AxiomBatch,
    cfg: &TrainConfig,
) -> Result<(f64, f64, OntologyGrads)> {
    let emb = state.table(kind);
    let nets = state.nets(kind);
    let eval = eval_ontology_axioms(
        batch,
        &NeuralScorer { emb, nets },
        &cfg.aggregation,
        cfg.quantifier,
    )?;
    let mut grads = OntologyGrads::zeros(emb, nets);
    backprop_ontology(&eval, emb, nets, &mut grads)?;
    Ok((eval.report.loss, eval.report.aggregated, grads))
}

/// One ontology phase: `steps_for` batches of that ontology only. Returns the
/// mean batch satisfiability.
pub fn train_ontology_phase(
    state: &mut TrainState,
    corpus: &Corpus,
    kind: OntologyKind,
    cfg: &TrainConfig,
    losses: &mut Vec<f64>,
) -> Result<f64> {
    let dag = corpus.dag(kind);
    let steps = cfg.steps_for(dag);
    let mut sat_sum = 0.0;
    for _ in 0..steps {
        let batch = sample_batch_with(dag, cfg.seed_count, cfg.neg_cap, &mut state.rng);
        let (loss, sat, grads) = ontology_step_grads(state, kind, &batch, cfg)?;
        if !loss.is_finite() || grads.emb.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                epoch: state.epoch + 1,
                phase: kind.to_string(),
            });
        }
        losses.push(loss);
        sat_sum += sat;

        let k = kind.index();
        state.emb_opt[k].step(&cfg.adam, &mut state.tables[k].data, &grads.emb);
        for rel in Relation::ALL {
            let slot = PredicateName::Onto(rel, kind).slot();
            state.net_opt[slot].step(
                &cfg.adam,
                &mut state.predicates.nets[slot].params,
                &grads.nets[rel.index()],
            );
        }
    }
    Ok(sat_sum / steps as f64)
}

/// One alignment pass over the indication pairs.
pub fn train_alignment_phase(
    state: &mut TrainState,
    corpus: &Corpus,
    cfg: &TrainConfig,
    losses: &mut Vec<f64>,
) -> Result<()> {
    let pairs = &corpus.indications;
    if pairs.is_empty() {
        return Ok(());
    }
    let (med_k, diag_k) = (OntologyKind::Medication.index(), OntologyKind::Diagnosis.index());
    let n_med = corpus.dag(OntologyKind::Medication).len();
    let n_diag = corpus.dag(OntologyKind::Diagnosis).len();
    let slot = PredicateName::Indication.slot();
    let batch = cfg.indication_batch.min(pairs.len());
    let steps = pairs.len().div_ceil(batch);

    for _ in 0..steps {
        let pos: Vec<IndicationAtom> = index::sample(&mut state.rng, pairs.len(), batch)
            .into_iter()
            .map(|i| pairs[i])
            .collect();
        let neg = sample_indication_negatives(n_med, n_diag, corpus.indication_set(), batch, &mut state.rng);
        let med = &state.tables[med_k];
        let diag = &state.tables[diag_k];
        let net = &state.predicates.nets[slot];
        let eval = eval_indication_axioms(&pos, &neg, med, diag, net, &cfg.aggregation)?;
        if !eval.report.loss.is_finite() {
            return Err(Error::Divergence {
                epoch: state.epoch + 1,
                phase: "alignment".into(),
            });
        }
        losses.push(eval.report.loss);
        let mut grads = IndicationGrads::zeros(med, diag, net);
        backprop_indication(&eval, med, diag, net, &mut grads)?;

        state.net_opt[slot].step(&cfg.adam, &mut state.predicates.nets[slot].params, &grads.net);
        if !cfg.freeze_embeddings_on_align {
            state.emb_opt[med_k].step(&cfg.adam, &mut state.tables[med_k].data, &grads.med);
            state.emb_opt[diag_k].step(&cfg.adam, &mut state.tables[diag_k].data, &grads.diag);
        }
    }
    Ok(())
}

/// Satisfiability of the indication knowledge base on every pair, against a
/// fixed negative sample drawn at state construction.
pub fn indication_satisfiability(state: &TrainState, corpus: &Corpus, cfg: &TrainConfig) -> Result<f64> {
    if corpus.indications.is_empty() {
        return Ok(0.0);
    }
    let eval = eval_indication_axioms(
        &corpus.indications,
        &state.eval_negatives,
        state.table(OntologyKind::Medication),
        state.table(OntologyKind::Diagnosis),
        state.predicates.get(PredicateName::Indication),
        &cfg.aggregation,
    )?;
    Ok(eval.report.aggregated)
}

/// Runs one epoch: three ontology phases in fixed order, then alignment.
pub fn train_epoch(state: &mut TrainState, corpus: &Corpus, cfg: &TrainConfig) -> Result<EpochLog> {
    let mut losses = Vec::new();
    let mut ontology_sat = [0.0; 3];
    for kind in OntologyKind::ALL {
        ontology_sat[kind.index()] = train_ontology_phase(state, corpus, kind, cfg, &mut losses)?;
    }
    train_alignment_phase(state, corpus, cfg, &mut losses)?;
    state.epoch += 1;
    Ok(EpochLog {
        epoch: state.epoch,
        ontology_sat,
        indication_sat: indication_satisfiability(state, corpus, cfg)?,
        losses,
    })
}

/// Runs only the alignment phase, for re-aligning an existing checkpoint.
pub fn align_epoch(state: &mut TrainState, corpus: &Corpus, cfg: &TrainConfig) -> Result<EpochLog> {
    let mut losses = Vec::new();
    train_alignment_phase(state, corpus, cfg, &mut losses)?;
    state.epoch += 1;
    Ok(EpochLog {
        epoch: state.epoch,
        ontology_sat: [f64::NAN; 3],
        indication_sat: indication_satisfiability(state, corpus, cfg)?,
        losses,
    })
}

/// Epochs chosen by the checkpoint rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    /// Epoch with the highest procedure-ontology satisfiability.
    pub procedure_epoch: usize,
    /// Epoch with the highest indication satisfiability; supplies the
    /// medication and diagnosis tables.
    pub indication_epoch: usize,
}

fn argmax_earliest(logs: &[EpochLog], key: impl Fn(&EpochLog) -> f64) -> usize {
    let mut best = &logs[0];
    for l in &logs[1..] {
        if key(l) > key(best) {
            best = l;
        }
    }
    best.epoch
}

/// Ties go to the earliest epoch. Panics on empty `logs`.
pub fn select_epochs(logs: &[EpochLog]) -> Selection {
    assert!(!logs.is_empty(), "checkpoint selection needs at least one epoch");
    Selection {
        procedure_epoch: argmax_earliest(logs, |l| l.ontology_sat[OntologyKind::Procedure.index()]),
        indication_epoch: argmax_earliest(logs, |l| l.indication_sat),
    }
}

/// Procedure parts from the procedure-best epoch, everything else from the
/// indication-best epoch.
pub fn compose_checkpoint(proc_best: &ModelCheckpoint, ind_best: &ModelCheckpoint) -> ModelCheckpoint {
    let p = OntologyKind::Procedure;
    let mut out = ind_best.clone();
    out.tables[p.index()] = proc_best.tables[p.index()].clone();
    for rel in Relation::ALL {
        let name = PredicateName::Onto(rel, p);
        *out.predicates.get_mut(name) = proc_best.predicates.get(name).clone();
    }
    out.table_epochs = [ind_best.epoch, proc_best.epoch, ind_best.epoch];
    out.sat_scores.ontology[p.index()] = proc_best.sat_scores.ontology[p.index()];
    out.epoch = ind_best.epoch.max(proc_best.epoch);
    out
}

/// Applies the selection rule to per-epoch snapshots (`history[i]` taken
/// after epoch `logs[i].epoch`).
pub fn select_checkpoints(logs: &[EpochLog], history: &[ModelCheckpoint]) -> ModelCheckpoint {
    let sel = select_epochs(logs);
    let find = |e: usize| {
        history
            .iter()
            .find(|c| c.epoch == e)
            .expect("snapshot for selected epoch")
    };
    compose_checkpoint(find(sel.procedure_epoch), find(sel.indication_epoch))
}

/// Tracks the best snapshots while training so that the full history need
/// not be kept. Agrees with [`select_checkpoints`].
#[derive(Clone, Debug, Default)]
pub struct Checkpointer {
    proc_best: Option<(f64, ModelCheckpoint)>,
    ind_best: Option<(f64, ModelCheckpoint)>,
}

impl Checkpointer {
    pub fn observe(&mut self, log: &EpochLog, state: &TrainState, cfg: &TrainConfig) {
        let p = log.ontology_sat[OntologyKind::Procedure.index()];
        if self.proc_best.as_ref().is_none_or(|(best, _)| p > *best) {
            self.proc_best = Some((p, state.snapshot(Some(log), cfg)));
        }
        let i = log.indication_sat;
        if self.ind_best.as_ref().is_none_or(|(best, _)| i > *best) {
            self.ind_best = Some((i, state.snapshot(Some(log), cfg)));
        }
    }

    pub fn finish(&self) -> Option<ModelCheckpoint> {
        match (&self.proc_best, &self.ind_best) {
            (Some((_, p)), Some((_, i))) => Some(compose_checkpoint(p, i)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub checkpoint: ModelCheckpoint,
    pub state: TrainState,
}

/// Full pretraining run with checkpoint selection.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut state = TrainState::new(corpus, cfg);
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut ckpt = Checkpointer::default();
    for _ in 0..cfg.epochs {
        let log = train_epoch(&mut state, corpus, cfg)?;
        ckpt.observe(&log, &state, cfg);
        logs.push(log);
    }
    let checkpoint = ckpt.finish().expect("at least one epoch");
    Ok(TrainOutcome {
        logs,
        checkpoint,
        state,
    })
}

/// Largest relative error between analytic and central-difference gradients
/// of one ontology batch loss, over every entry of that ontology's table and
/// of its three predicate networks.
pub fn grad_check(
    state: &TrainState,
    kind: OntologyKind,
    batch: &AxiomBatch,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (_, _, grads) = ontology_step_grads(state, kind, batch, cfg)?;
    grad_check_against(state, kind, batch, cfg, &grads)
}

/// Relative error with a small absolute floor so that two near-zero
/// derivatives do not register as a mismatch.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares caller-supplied analytic gradients against finite differences.
pub fn grad_check_against(
    state: &TrainState,
    kind: OntologyKind,
    batch: &AxiomBatch,
    cfg: &TrainConfig,
    grads: &OntologyGrads,
) -> Result<f64> {
    let h = GRAD_CHECK_STEP;
    let loss_of = |st: &TrainState| -> Result<f64> {
        let nets = st.nets(kind);
        let e = eval_ontology_axioms(
            batch,
            &NeuralScorer {
                emb: st.table(kind),
                nets,
            },
            &cfg.aggregation,
            cfg.quantifier,
        )?;
        Ok(e.report.loss)
    };

    let mut worst: f64 = 0.0;
    let mut probe = state.clone();
    let k = kind.index();
    for i in 0..probe.tables[k].data.len() {
        let orig = probe.tables[k].data[i];
        probe.tables[k].data[i] = orig + h;
        let up = loss_of(&probe)?;
        probe.tables[k].data[i] = orig - h;
        let dn = loss_of(&probe)?;
        probe.tables[k].data[i] = orig;
        worst = worst.max(relative_error(grads.emb[i], (up - dn) / (2.0 * h)));
    }
    for rel in Relation::ALL {
        let slot = PredicateName::Onto(rel, kind).slot();
        for i in 0..probe.predicates.nets[slot].params.len() {
            let orig = probe.predicates.nets[slot].params[i];
            probe.predicates.nets[slot].params[i] = orig + h;
            let up = loss_of(&probe)?;
            probe.predicates.nets[slot].params[i] = orig - h;
            let dn = loss_of(&probe)?;
            probe.predicates.nets[slot].params[i] = orig;
            worst = worst.max(relative_error(grads.nets[rel.index()][i], (up - dn) / (2.0 * h)));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_batch;

    fn log(epoch: usize, proc_sat: f64, ind: f64) -> EpochLog {
        EpochLog {
            epoch,
            ontology_sat: [0.5, proc_sat, 0.5],
            indication_sat: ind,
            losses: vec![],
        }
    }

    #[test]
    fn selection_rule() {
        let rising: Vec<_> = (1..=5).map(|e| log(e, e as f64 / 10.0, e as f64 / 10.0)).collect();
        assert_eq!(
            select_epochs(&rising),
            Selection {
                procedure_epoch: 5,
                indication_epoch: 5
            }
        );
        let mixed: Vec<_> = (1..=8)
            .map(|e| log(e, if e == 3 { 0.9 } else { 0.1 }, if e == 7 { 0.8 } else { 0.2 }))
            .collect();
        assert_eq!(
            select_epochs(&mixed),
            Selection {
                procedure_epoch: 3,
                indication_epoch: 7
            }
        );
        let tied = vec![log(1, 0.2, 0.6), log(2, 0.7, 0.6), log(3, 0.7, 0.1)];
        assert_eq!(
            select_epochs(&tied),
            Selection {
                procedure_epoch: 2,
                indication_epoch: 1
            }
        );
    }

    fn tiny_corpus() -> Corpus {
        use crate::ontology::OntologyKind::*;
        let mk = |k, p: &str| {
            let e: Vec<(String, String)> = [("r", "a"), ("r", "b"), ("a", "c"), ("a", "d")]
                .iter()
                .map(|(x, y)| (format!("{p}{x}"), format!("{p}{y}")))
                .collect();
            OntologyDag::from_edges(k, &e).unwrap()
        };
        Corpus::new(mk(Diagnosis, "d"), mk(Procedure, "p"), mk(Medication, "m"), &[(2, 1)]).unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            dim: 4,
            epochs: 2,
            seed_count: 2,
            indication_batch: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(tiny_cfg().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..tiny_cfg() },
            TrainConfig { dim: 0, ..tiny_cfg() },
            TrainConfig { steps_per_epoch: Some(0), ..tiny_cfg() },
            TrainConfig {
                aggregation: AggregationConfig { p_forall: 0.5, p_sat: 2.0 },
                ..tiny_cfg()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let back: TrainConfig = serde_json::from_str(&tiny_cfg().to_json()).unwrap();
        assert_eq!(back, tiny_cfg());
    }

    #[test]
    fn indications_are_expanded() {
        let c = tiny_corpus();
        // diagnosis "da" (index 1) has children dc, dd
        assert_eq!(c.indications.len(), 3);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let corpus = tiny_corpus();
        let mut cfg = tiny_cfg();
        cfg.adam.lr = 0.0;
        let mut st = TrainState::new(&corpus, &cfg);
        let before = (st.tables.clone(), st.predicates.clone());
        train_epoch(&mut st, &corpus, &cfg).unwrap();
        assert_eq!(st.tables, before.0);
        assert_eq!(st.predicates, before.1);
    }

    #[test]
    fn fixed_seed_gives_identical_logs() {
        let corpus = tiny_corpus();
        let a = train(&corpus, &tiny_cfg()).unwrap();
        let b = train(&corpus, &tiny_cfg()).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.checkpoint, b.checkpoint);
    }

    #[test]
    fn checkpointer_matches_pure_rule() {
        let corpus = tiny_corpus();
        let cfg = TrainConfig { epochs: 6, ..tiny_cfg() };
        let mut st = TrainState::new(&corpus, &cfg);
        let mut logs = Vec::new();
        let mut history = Vec::new();
        let mut cp = Checkpointer::default();
        for _ in 0..cfg.epochs {
            let l = train_epoch(&mut st, &corpus, &cfg).unwrap();
            cp.observe(&l, &st, &cfg);
            history.push(st.snapshot(Some(&l), &cfg));
            logs.push(l);
        }
        assert_eq!(cp.finish().unwrap(), select_checkpoints(&logs, &history));
    }

    #[test]
    fn small_grad_check() {
        let corpus = tiny_corpus();
        let cfg = tiny_cfg();
        let st = TrainState::new(&corpus, &cfg);
        let batch = sample_batch(corpus.dag(OntologyKind::Diagnosis), 2, 5, cfg.neg_cap);
        let err = grad_check(&st, OntologyKind::Diagnosis, &batch, &cfg).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
