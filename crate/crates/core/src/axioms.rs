//! Axiom schemata over a sampled batch, their fuzzy evaluation, and the
//! gradient of the knowledge-base loss w.r.t. every grounded atom.
//!
//! Evaluation is split in two so that the schemata can be checked against
//! crisp oracle predicates: atoms are first interned and scored through an
//! [`AtomScorer`], then [`evaluate_kb`] folds instance values through the
//! quantifiers and `sat_agg`. Neural training pushes the resulting atom
//! gradients through the predicate networks with [`backprop_ontology`] and
//! [`backprop_indication`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::{EmbeddingTable, PredicateNet, Relation};
use crate::logic::{forall_grad, sat_agg_grad, AggregationConfig, Formula};
use crate::ontology::OntologyDag;
use crate::sampler::AxiomBatch;

/// How quantified variables are instantiated over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantifierMode {
    /// Only instances whose antecedent relations hold in the batch.
    #[default]
    Restricted,
    /// Every binding of the variables over the batch nodes.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Domain {
    Nodes,
    PositiveEdges,
    NegativePairs,
    /// `(x, y)` over parent pairs, ancestor pairs, or sibling pairs in both orders.
    Pairs(Relation),
    /// `x` with two distinct children `y != z`.
    CommonParent,
    /// `x -> y -> z` along parent edges.
    ParentChain,
    /// `(x, y)` a parent edge, `(y, z)` an ancestor pair.
    ParentThenAncestor,
}

/// One named axiom schema.
#[derive(Clone, Debug)]
pub struct Schema {
    pub name: &'static str,
    pub formula: Formula,
    atoms: Vec<(Relation, Var, Var)>,
    domain: Domain,
}

/// Named schemata making up one knowledge base.
#[derive(Clone, Debug)]
pub struct AxiomSet {
    pub schemata: Vec<Schema>,
}

impl AxiomSet {
    pub fn names(&self) -> Vec<&'static str> {
        self.schemata.iter().map(|s| s.name).collect()
    }

    pub fn len(&self) -> usize {
        self.schemata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemata.is_empty()
    }
}

/// The ontology knowledge base: structure of parent, ancestor and sibling
/// relations plus the positive/negative edge facts of the batch.
pub fn ontology_axioms() -> AxiomSet {
    use Formula as F;
    use Relation::{Ancestor as A, Parent as P, Sibling as S};
    use Var::{X, Y, Z};
    let a = F::atom;
    let schema = |name, formula, atoms: &[(Relation, Var, Var)], domain| Schema {
        name,
        formula,
        atoms: atoms.to_vec(),
        domain,
    };
    AxiomSet {
        schemata: vec![
            schema("parent_not_reflexive", F::not(a(0)), &[(P, X, X)], Domain::Nodes),
            schema(
                "parent_asymmetric",
                F::implies(a(0), F::not(a(1))),
                &[(P, X, Y), (P, Y, X)],
                Domain::Pairs(P),
            ),
            schema("ancestor_not_reflexive", F::not(a(0)), &[(A, X, X)], Domain::Nodes),
            schema(
                "ancestor_asymmetric",
                F::implies(a(0), F::not(a(1))),
                &[(A, X, Y), (A, Y, X)],
                Domain::Pairs(A),
            ),
            schema(
                "sibling_definition",
                F::implies(F::and(a(0), a(1)), a(2)),
                &[(P, X, Y), (P, X, Z), (S, Y, Z)],
                Domain::CommonParent,
            ),
            schema("sibling_not_reflexive", F::not(a(0)), &[(S, X, X)], Domain::Nodes),
            schema(
                "sibling_symmetric",
                F::implies(a(0), a(1)),
                &[(S, X, Y), (S, Y, X)],
                Domain::Pairs(S),
            ),
            schema(
                "ancestor_from_parent_chain",
                F::implies(F::and(a(0), a(1)), a(2)),
                &[(P, X, Y), (P, Y, Z), (A, X, Z)],
                Domain::ParentChain,
            ),
            schema(
                "ancestor_from_parent_of_ancestor",
                F::implies(F::and(a(0), a(1)), a(2)),
                &[(P, X, Y), (A, Y, Z), (A, X, Z)],
                Domain::ParentThenAncestor,
            ),
            schema("positive_edges", a(0), &[(P, X, Y)], Domain::PositiveEdges),
            schema("negative_edges", F::not(a(0)), &[(P, X, Y)], Domain::NegativePairs),
        ],
    }
}

/// Names of the two indication axioms.
pub const INDICATION_AXIOMS: [&str; 2] = ["indication_positive", "indication_negative"];

/// Truth values for ontology atoms `R(x, y)`.
pub trait AtomScorer {
    fn score(&self, rel: Relation, x: usize, y: usize) -> f64;
}

impl<F: Fn(Relation, usize, usize) -> f64> AtomScorer for F {
    fn score(&self, rel: Relation, x: usize, y: usize) -> f64 {
        self(rel, x, y)
    }
}

/// Crisp predicates read off the true relations of the batch.
pub struct OracleScorer<'a> {
    pub triples: &'a crate::ontology::RelationTriples,
}

impl AtomScorer for OracleScorer<'_> {
    fn score(&self, rel: Relation, x: usize, y: usize) -> f64 {
        let hit = match rel {
            Relation::Parent => self.triples.parent_pairs.contains(&(x, y)),
            Relation::Ancestor => self.triples.ancestor_pairs.contains(&(x, y)),
            Relation::Sibling => x != y && self.triples.is_sibling(x, y),
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

/// An axiom with its instances expressed as indices into a shared atom list.
#[derive(Clone, Debug)]
pub struct GroundedAxiom {
    pub name: &'static str,
    pub formula: Formula,
    pub instances: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SatReport {
    /// Satisfiability of each evaluated axiom, in knowledge-base order.
    pub axioms: Vec<(&'static str, f64)>,
    /// Axioms whose quantifier domain was empty in this batch.
    pub skipped: Vec<&'static str>,
    pub aggregated: f64,
    pub loss: f64,
}

impl SatReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.axioms.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

/// Report plus `d loss / d atom` for every atom.
#[derive(Clone, Debug)]
pub struct Evaluation<A> {
    pub report: SatReport,
    pub atoms: Vec<A>,
    pub atom_values: Vec<f64>,
    pub atom_grads: Vec<f64>,
}

/// Folds grounded axioms through `forall` and `sat_agg`, returning the report
/// and the loss gradient w.r.t. each atom value.
pub fn evaluate_kb(
    axioms: &[GroundedAxiom],
    atom_values: &[f64],
    cfg: &AggregationConfig,
) -> Result<(SatReport, Vec<f64>)> {
    let mut sats = Vec::new();
    let mut names = Vec::new();
    let mut skipped = Vec::new();
    let mut inner: Vec<(usize, Vec<f64>, Vec<Vec<f64>>)> = Vec::new();

    for (k, ax) in axioms.iter().enumerate() {
        if ax.instances.is_empty() {
            skipped.push(ax.name);
            continue;
        }
        let arity = ax.formula.arity();
        let mut vals = Vec::with_capacity(ax.instances.len());
        let mut locals = Vec::with_capacity(ax.instances.len());
        for inst in &ax.instances {
            let local: Vec<f64> = inst.iter().map(|&i| atom_values[i]).collect();
            debug_assert_eq!(local.len(), arity);
            vals.push(ax.formula.eval(&local));
            locals.push(local);
        }
        let (sat, dsat) = forall_grad(&vals, cfg)?;
        sats.push(sat);
        names.push(ax.name);
        inner.push((k, dsat, locals));
    }

    let (aggregated, dagg) = sat_agg_grad(&sats, cfg)?;
    let mut grads = vec![0.0; atom_values.len()];
    for ((k, dsat, locals), &da) in inner.iter().zip(&dagg) {
        let ax = &axioms[*k];
        let mut local_grad = vec![0.0; ax.formula.arity()];
        for ((inst, local), &di) in ax.instances.iter().zip(locals).zip(dsat) {
            // loss = 1 - aggregated
            let upstream = -da * di;
            if upstream == 0.0 {
                continue;
            }
            local_grad.iter_mut().for_each(|g| *g = 0.0);
            ax.formula.backprop(local, upstream, &mut local_grad);
            for (&atom, &g) in inst.iter().zip(&local_grad) {
                grads[atom] += g;
            }
        }
    }

    let report = SatReport {
        axioms: names.into_iter().zip(sats).collect(),
        skipped,
        aggregated,
        loss: 1.0 - aggregated,
    };
    Ok((report, grads))
}

/// Assigns dense indices to atoms in first-use order.
struct Interner<A> {
    atoms: Vec<A>,
    index: HashMap<A, usize>,
}

impl<A: Copy + Eq + std::hash::Hash> Interner<A> {
    fn new() -> Self {
        Interner {
            atoms: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn get(&mut self, a: A) -> usize {
        *self.index.entry(a).or_insert_with(|| {
            self.atoms.push(a);
            self.atoms.len() - 1
        })
    }
}

/// An ontology atom `R(x, y)` over node indices.
pub type OntoAtom = (Relation, usize, usize);

fn bindings(batch: &AxiomBatch, domain: Domain, mode: QuantifierMode) -> Vec<[usize; 3]> {
    let nodes = &batch.nodes;
    let t = &batch.triples;
    match (domain, mode) {
        (Domain::Nodes, _) => nodes.iter().map(|&x| [x, x, x]).collect(),
        (Domain::PositiveEdges, _) => batch.positive_edges.iter().map(|&(x, y)| [x, y, y]).collect(),
        (Domain::NegativePairs, _) => batch.negative_pairs.iter().map(|&(x, y)| [x, y, y]).collect(),

        (Domain::Pairs(_), QuantifierMode::Literal) => nodes
            .iter()
            .flat_map(|&x| nodes.iter().map(move |&y| [x, y, y]))
            .collect(),
        (Domain::Pairs(Relation::Parent), _) => {
            t.parent_pairs.iter().map(|&(x, y)| [x, y, y]).collect()
        }
        (Domain::Pairs(Relation::Ancestor), _) => {
            t.ancestor_pairs.iter().map(|&(x, y)| [x, y, y]).collect()
        }
        (Domain::Pairs(Relation::Sibling), _) => t
            .sibling_pairs
            .iter()
            .flat_map(|&(a, b)| [[a, b, b], [b, a, a]])
            .collect(),

        // y == z would demand S(y, y), contradicting irreflexivity.
        (Domain::CommonParent, QuantifierMode::Literal) => triples_over(nodes)
            .filter(|[_, y, z]| y != z)
            .collect(),
        (Domain::ParentChain | Domain::ParentThenAncestor, QuantifierMode::Literal) => {
            triples_over(nodes).collect()
        }
        (Domain::CommonParent, _) => {
            let mut kids: HashMap<usize, Vec<usize>> = HashMap::new();
            for &(p, c) in &t.parent_pairs {
                kids.entry(p).or_default().push(c);
            }
            let mut out = Vec::new();
            for &(x, y) in &t.parent_pairs {
                for &z in &kids[&x] {
                    if z != y {
                        out.push([x, y, z]);
                    }
                }
            }
            out
        }
        (Domain::ParentChain, _) => {
            let mut out = Vec::new();
            for &(x, y) in &t.parent_pairs {
                for &(_, z) in t.parent_pairs.range((y, 0)..(y + 1, 0)) {
                    out.push([x, y, z]);
                }
            }
            out
        }
        (Domain::ParentThenAncestor, _) => {
            let mut out = Vec::new();
            for &(x, y) in &t.parent_pairs {
                for &(_, z) in t.ancestor_pairs.range((y, 0)..(y + 1, 0)) {
                    out.push([x, y, z]);
                }
            }
            out
        }
    }
}

fn triples_over(nodes: &[usize]) -> impl Iterator<Item = [usize; 3]> + '_ {
    nodes.iter().flat_map(move |&x| {
        nodes
            .iter()
            .flat_map(move |&y| nodes.iter().map(move |&z| [x, y, z]))
    })
}

/// Instantiates every ontology schema over `batch`.
pub fn ground_ontology_axioms(
    batch: &AxiomBatch,
    mode: QuantifierMode,
) -> (Vec<GroundedAxiom>, Vec<OntoAtom>) {
    let set = ontology_axioms();
    let mut interner = Interner::new();
    let mut grounded = Vec::with_capacity(set.len());
    for schema in set.schemata {
        let instances = bindings(batch, schema.domain, mode)
            .into_iter()
            .map(|b| {
                schema
                    .atoms
                    .iter()
                    .map(|&(rel, u, v)| {
                        let pick = |var| match var {
                            Var::X => b[0],
                            Var::Y => b[1],
                            Var::Z => b[2],
                        };
                        interner.get((rel, pick(u), pick(v)))
                    })
                    .collect()
            })
            .collect();
        grounded.push(GroundedAxiom {
            name: schema.name,
            formula: schema.formula,
            instances,
        });
    }
    (grounded, interner.atoms)
}

/// Evaluates the ontology knowledge base on `batch` under `scorer`.
pub fn eval_ontology_axioms(
    batch: &AxiomBatch,
    scorer: &impl AtomScorer,
    cfg: &AggregationConfig,
    mode: QuantifierMode,
) -> Result<Evaluation<OntoAtom>> {
    if batch.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let (grounded, atoms) = ground_ontology_axioms(batch, mode);
    let atom_values: Vec<f64> = atoms.iter().map(|&(r, x, y)| scorer.score(r, x, y)).collect();
    let (report, atom_grads) = evaluate_kb(&grounded, &atom_values, cfg)?;
    Ok(Evaluation {
        report,
        atoms,
        atom_values,
        atom_grads,
    })
}

/// Parent, sibling and ancestor networks of one ontology.
#[derive(Clone, Copy)]
pub struct OntologyNets<'a> {
    pub parent: &'a PredicateNet,
    pub sibling: &'a PredicateNet,
    pub ancestor: &'a PredicateNet,
}

impl<'a> OntologyNets<'a> {
    pub fn get(&self, rel: Relation) -> &'a PredicateNet {
        match rel {
            Relation::Parent => self.parent,
            Relation::Sibling => self.sibling,
            Relation::Ancestor => self.ancestor,
        }
    }
}

/// Neural grounding of ontology atoms.
pub struct NeuralScorer<'a> {
    pub emb: &'a EmbeddingTable,
    pub nets: OntologyNets<'a>,
}

impl AtomScorer for NeuralScorer<'_> {
    fn score(&self, rel: Relation, x: usize, y: usize) -> f64 {
        self.nets
            .get(rel)
            .forward(self.emb.row(x), self.emb.row(y))
            .expect("embedding width matches predicate input")
    }
}

/// Gradient buffers for one ontology phase.
#[derive(Clone, Debug, PartialEq)]
pub struct OntologyGrads {
    /// Same layout as the embedding table.
    pub emb: Vec<f64>,
    /// Indexed by [`Relation::index`].
    pub nets: [Vec<f64>; 3],
}

impl OntologyGrads {
    pub fn zeros(emb: &EmbeddingTable, nets: OntologyNets<'_>) -> Self {
        OntologyGrads {
            emb: vec![0.0; emb.data.len()],
            nets: Relation::ALL.map(|r| vec![0.0; nets.get(r).param_count()]),
        }
    }
}

/// Pushes atom gradients through the predicate networks into `grads`.
pub fn backprop_ontology(
    eval: &Evaluation<OntoAtom>,
    emb: &EmbeddingTable,
    nets: OntologyNets<'_>,
    grads: &mut OntologyGrads,
) -> Result<()> {
    let d = emb.dim;
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    for (&(rel, x, y), &g) in eval.atoms.iter().zip(&eval.atom_grads) {
        if g == 0.0 {
            continue;
        }
        gx.iter_mut().for_each(|v| *v = 0.0);
        gy.iter_mut().for_each(|v| *v = 0.0);
        nets.get(rel).backward(
            emb.row(x),
            emb.row(y),
            g,
            &mut grads.nets[rel.index()],
            &mut gx,
            &mut gy,
        )?;
        for (a, b) in grads.emb[x * d..(x + 1) * d].iter_mut().zip(&gx) {
            *a += b;
        }
        for (a, b) in grads.emb[y * d..(y + 1) * d].iter_mut().zip(&gy) {
            *a += b;
        }
    }
    Ok(())
}

/// A `(medication, diagnosis)` atom over node indices.
pub type IndicationAtom = (usize, usize);

/// Evaluates `forall (m, d) in pairs: I(m, d)` and
/// `forall (m, d) in neg_pairs: not I(m, d)`.
pub fn eval_indication_with(
    pairs: &[IndicationAtom],
    neg_pairs: &[IndicationAtom],
    score: impl Fn(usize, usize) -> f64,
    cfg: &AggregationConfig,
) -> Result<Evaluation<IndicationAtom>> {
    if pairs.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut interner = Interner::new();
    let pos = pairs.iter().map(|&p| vec![interner.get(p)]).collect();
    let neg = neg_pairs.iter().map(|&p| vec![interner.get(p)]).collect();
    let grounded = [
        GroundedAxiom {
            name: INDICATION_AXIOMS[0],
            formula: Formula::atom(0),
            instances: pos,
        },
        GroundedAxiom {
            name: INDICATION_AXIOMS[1],
            formula: Formula::not(Formula::atom(0)),
            instances: neg,
        },
    ];
    let atoms = interner.atoms;
    let atom_values: Vec<f64> = atoms.iter().map(|&(m, d)| score(m, d)).collect();
    let (report, atom_grads) = evaluate_kb(&grounded, &atom_values, cfg)?;
    Ok(Evaluation {
        report,
        atoms,
        atom_values,
        atom_grads,
    })
}

pub fn eval_indication_axioms(
    pairs: &[IndicationAtom],
    neg_pairs: &[IndicationAtom],
    med_emb: &EmbeddingTable,
    diag_emb: &EmbeddingTable,
    net: &PredicateNet,
    cfg: &AggregationConfig,
) -> Result<Evaluation<IndicationAtom>> {
    if med_emb.dim != diag_emb.dim {
        return Err(Error::DimensionMismatch {
            expected: med_emb.dim,
            actual: diag_emb.dim,
        });
    }
    if net.arg_dim() != med_emb.dim {
        return Err(Error::DimensionMismatch {
            expected: net.arg_dim(),
            actual: med_emb.dim,
        });
    }
    eval_indication_with(
        pairs,
        neg_pairs,
        |m, d| net.forward(med_emb.row(m), diag_emb.row(d)).unwrap(),
        cfg,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndicationGrads {
    pub med: Vec<f64>,
    pub diag: Vec<f64>,
    pub net: Vec<f64>,
}

impl IndicationGrads {
    pub fn zeros(med: &EmbeddingTable, diag: &EmbeddingTable, net: &PredicateNet) -> Self {
        IndicationGrads {
            med: vec![0.0; med.data.len()],
            diag: vec![0.0; diag.data.len()],
            net: vec![0.0; net.param_count()],
        }
    }
}

pub fn backprop_indication(
    eval: &Evaluation<IndicationAtom>,
    med_emb: &EmbeddingTable,
    diag_emb: &EmbeddingTable,
    net: &PredicateNet,
    grads: &mut IndicationGrads,
) -> Result<()> {
    let d = med_emb.dim;
    let mut gm = vec![0.0; d];
    let mut gd = vec![0.0; d];
    for (&(m, dg), &g) in eval.atoms.iter().zip(&eval.atom_grads) {
        if g == 0.0 {
            continue;
        }
        gm.iter_mut().for_each(|v| *v = 0.0);
        gd.iter_mut().for_each(|v| *v = 0.0);
        net.backward(med_emb.row(m), diag_emb.row(dg), g, &mut grads.net, &mut gm, &mut gd)?;
        for (a, b) in grads.med[m * d..(m + 1) * d].iter_mut().zip(&gm) {
            *a += b;
        }
        for (a, b) in grads.diag[dg * d..(dg + 1) * d].iter_mut().zip(&gd) {
            *a += b;
        }
    }
    Ok(())
}

/// Adds `(m, c)` for every descendant `c` of each indicated diagnosis.
/// Output is sorted and deduplicated, so the map is idempotent.
pub fn expand_indications(
    pairs: &[IndicationAtom],
    diag_dag: &OntologyDag,
) -> Result<Vec<IndicationAtom>> {
    let mut out = BTreeSet::new();
    for &(m, d) in pairs {
        if d >= diag_dag.len() {
            return Err(Error::UnknownNode(format!("diagnosis #{d}")));
        }
        out.insert((m, d));
        out.extend(diag_dag.descendants(d).into_iter().map(|c| (m, c)));
    }
    Ok(out.into_iter().collect())
}

/// Uniformly samples `count` distinct `(medication, diagnosis)` pairs outside
/// `known`. Returns fewer if the complement is smaller than `count`.
pub fn sample_indication_negatives(
    n_med: usize,
    n_diag: usize,
    known: &HashSet<IndicationAtom>,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<IndicationAtom> {
    let available = (n_med * n_diag).saturating_sub(known.len());
    let count = count.min(available);
    if count == 0 {
        return Vec::new();
    }
    if count * 2 >= available {
        let all: Vec<IndicationAtom> = (0..n_med)
            .flat_map(|m| (0..n_diag).map(move |d| (m, d)))
            .filter(|p| !known.contains(p))
            .collect();
        return rand::seq::index::sample(rng, all.len(), count)
            .into_iter()
            .map(|i| all[i])
            .collect();
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = (rng.gen_range(0..n_med), rng.gen_range(0..n_diag));
        if !known.contains(&p) && seen.insert(p) {
            out.push(p);
        }
    }
    out
}

/// Reads `med_id<TAB>diag_id` lines into index pairs.
pub fn load_indications(
    path: impl AsRef<Path>,
    med_dag: &OntologyDag,
    diag_dag: &OntologyDag,
) -> Result<Vec<IndicationAtom>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (m, d) = line
            .split_once('\t')
            .filter(|(_, d)| !d.contains('\t'))
            .ok_or_else(|| Error::parse(path, lineno + 1, "expected `med_id<TAB>diag_id`"))?;
        out.push((med_dag.require(m)?, diag_dag.require(d)?));
    }
    Ok(out)
}

pub fn save_indications(
    path: impl AsRef<Path>,
    pairs: &[IndicationAtom],
    med_dag: &OntologyDag,
    diag_dag: &OntologyDag,
) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for &(m, d) in pairs {
        text.push_str(med_dag.id(m));
        text.push('\t');
        text.push_str(diag_dag.id(d));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::OntologyKind;
    use crate::sampler::{sample_batch, NegCap};

    fn chain() -> OntologyDag {
        OntologyDag::from_edges(OntologyKind::Diagnosis, &[("a", "b"), ("b", "c")]).unwrap()
    }

    fn cfg() -> AggregationConfig {
        AggregationConfig::default()
    }

    #[test]
    fn eleven_uniquely_named_schemata() {
        let names = ontology_axioms().names();
        assert_eq!(names.len(), 11);
        let uniq: BTreeSet<_> = names.iter().collect();
        assert_eq!(uniq.len(), 11);
    }

    #[test]
    fn oracle_predicates_satisfy_every_axiom() {
        let d = chain();
        let b = sample_batch(&d, 3, 0, NegCap::Unbounded);
        for mode in [QuantifierMode::Restricted, QuantifierMode::Literal] {
            let e =
                eval_ontology_axioms(&b, &OracleScorer { triples: &b.triples }, &cfg(), mode).unwrap();
            assert!(e.report.axioms.iter().all(|&(_, v)| v == 1.0), "{:?}", e.report);
            assert_eq!(e.report.loss, 0.0);
        }
    }

    #[test]
    fn constant_half_predicates_on_chain() {
        let d = chain();
        let b = sample_batch(&d, 3, 0, NegCap::Unbounded);
        let e = eval_ontology_axioms(&b, &|_, _, _| 0.5, &cfg(), QuantifierMode::Restricted).unwrap();
        let r = &e.report;
        // no siblings, and a -> b -> c has no (parent, ancestor) continuation
        assert_eq!(
            r.skipped,
            ["sibling_definition", "sibling_symmetric", "ancestor_from_parent_of_ancestor"]
        );
        assert_eq!(r.axioms.len() + r.skipped.len(), 11);
        for name in ["parent_not_reflexive", "ancestor_not_reflexive", "negative_edges", "positive_edges"] {
            assert!((r.get(name).unwrap() - 0.5).abs() < 1e-12, "{name}");
        }
        // 1 - 0.5 + 0.5 * 0.5
        for name in ["parent_asymmetric", "ancestor_asymmetric", "sibling_symmetric"] {
            if let Some(v) = r.get(name) {
                assert!((v - 0.75).abs() < 1e-12, "{name}");
            }
        }
        // 1 - 0.25 + 0.25 * 0.5
        assert!((r.get("ancestor_from_parent_chain").unwrap() - 0.875).abs() < 1e-12);
    }

    #[test]
    fn star_has_no_ancestor_domain() {
        let d = OntologyDag::from_edges(OntologyKind::Diagnosis, &[("a", "b"), ("a", "c")]).unwrap();
        let b = sample_batch(&d, 3, 0, NegCap::Unbounded);
        let e = eval_ontology_axioms(&b, &|_, _, _| 0.5, &cfg(), QuantifierMode::Restricted).unwrap();
        assert!(e.report.skipped.contains(&"ancestor_asymmetric"));
        assert!(e.report.skipped.contains(&"ancestor_from_parent_chain"));
        assert!(e.report.get("sibling_definition").is_some());
    }

    #[test]
    fn aggregated_is_order_invariant() {
        let d = chain();
        let b = sample_batch(&d, 3, 0, NegCap::Unbounded);
        let scorer = |r: Relation, x: usize, y: usize| 0.1 + 0.2 * r.index() as f64 + 0.05 * (x + 2 * y) as f64;
        let (mut grounded, atoms) = ground_ontology_axioms(&b, QuantifierMode::Restricted);
        let vals: Vec<f64> = atoms.iter().map(|&(r, x, y)| scorer(r, x, y)).collect();
        let (a, _) = evaluate_kb(&grounded, &vals, &cfg()).unwrap();
        grounded.reverse();
        let (r, _) = evaluate_kb(&grounded, &vals, &cfg()).unwrap();
        assert!((a.aggregated - r.aggregated).abs() < 1e-12);
    }

    #[test]
    fn indication_examples() {
        let pos = [(0, 0), (1, 2)];
        let neg = [(0, 1), (1, 0)];
        let oracle = |m, d| if pos.contains(&(m, d)) { 1.0 } else { 0.0 };
        let e = eval_indication_with(&pos, &neg, oracle, &cfg()).unwrap();
        assert_eq!(e.report.aggregated, 1.0);
        let e = eval_indication_with(&pos, &neg, |_, _| 0.5, &cfg()).unwrap();
        assert_eq!(e.report.axioms, vec![("indication_positive", 0.5), ("indication_negative", 0.5)]);
        assert!((e.report.aggregated - 0.5).abs() < 1e-15);
        assert!((e.report.loss - 0.5).abs() < 1e-15);
        assert!(matches!(
            eval_indication_with(&[], &neg, |_, _| 0.5, &cfg()),
            Err(Error::EmptyDomain)
        ));
    }

    #[test]
    fn indication_dimension_mismatch() {
        let d = chain();
        let med = crate::grounding::init_embeddings(&d, 4, 0);
        let diag = crate::grounding::init_embeddings(&d, 3, 0);
        let net = PredicateNet::new(crate::grounding::PredicateName::Indication, 4, 0);
        assert!(matches!(
            eval_indication_axioms(&[(0, 0)], &[], &med, &diag, &net, &cfg()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn expansion() {
        let d = chain();
        let (a, b, c) = (0, 1, 2);
        assert_eq!(expand_indications(&[(7, c)], &d).unwrap(), vec![(7, c)]);
        assert_eq!(
            expand_indications(&[(7, a)], &d).unwrap(),
            vec![(7, a), (7, b), (7, c)]
        );
        let once = expand_indications(&[(7, b), (3, a)], &d).unwrap();
        assert_eq!(expand_indications(&once, &d).unwrap(), once);
        assert!(matches!(expand_indications(&[(0, 9)], &d), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn negatives_avoid_known_pairs() {
        let known: HashSet<_> = [(0, 0), (1, 1), (2, 2)].into_iter().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let neg = sample_indication_negatives(3, 3, &known, 100, &mut rng);
        assert_eq!(neg.len(), 6);
        assert!(neg.iter().all(|p| !known.contains(p)));
        let neg = sample_indication_negatives(50, 50, &known, 10, &mut rng);
        assert_eq!(neg.iter().collect::<HashSet<_>>().len(), 10);
    }
}
