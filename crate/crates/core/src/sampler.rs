//! Axiom-oriented batch construction.
//!
//! A batch is a handful of seed nodes closed over their parents, ancestors
//! and siblings. Quantified variables then range over the batch only, so the
//! materialized variable slots scale with `n_vars * |batch| * dim` instead of
//! the full ontology.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ontology::{OntologyDag, RelationTriples};

/// How many negative (non-edge) pairs a batch keeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NegCap {
    /// At most `k * |positive_edges|`.
    PerPositive(usize),
    Absolute(usize),
    /// Every non-edge ordered pair in the batch.
    Unbounded,
}

impl Default for NegCap {
    fn default() -> Self {
        NegCap::PerPositive(4)
    }
}

impl NegCap {
    fn limit(self, positives: usize) -> usize {
        match self {
            NegCap::PerPositive(k) => k.saturating_mul(positives.max(1)),
            NegCap::Absolute(n) => n,
            NegCap::Unbounded => usize::MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxiomBatch {
    /// Sorted node indices.
    pub nodes: Vec<usize>,
    /// `(parent, child)` edges with both ends in the batch.
    pub positive_edges: Vec<(usize, usize)>,
    /// Ordered pairs of distinct batch nodes with no edge `u -> v`.
    pub negative_pairs: Vec<(usize, usize)>,
    /// Relations of the full ontology restricted to batch nodes.
    pub triples: RelationTriples,
}

impl AxiomBatch {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }
}

/// Closes `seeds` over parents, full ancestor chains and siblings. Siblings
/// of added nodes are not pulled in.
pub fn close_seeds(dag: &OntologyDag, seeds: &[usize]) -> Vec<usize> {
    let mut set: BTreeSet<usize> = BTreeSet::new();
    for &s in seeds {
        set.insert(s);
        set.extend(dag.parent(s));
        set.extend(dag.ancestors(s));
        set.extend(dag.siblings(s));
    }
    set.into_iter().collect()
}

/// Builds the batch induced by an explicit node set.
pub fn batch_from_nodes(
    dag: &OntologyDag,
    nodes: Vec<usize>,
    neg_cap: NegCap,
    rng: &mut impl Rng,
) -> AxiomBatch {
    let member: HashSet<usize> = nodes.iter().copied().collect();

    let mut triples = RelationTriples::default();
    let mut by_parent: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &n in &nodes {
        if let Some(p) = dag.parent(n).filter(|p| member.contains(p)) {
            triples.parent_pairs.insert((p, n));
        }
        if let Some(p) = dag.parent(n) {
            by_parent.entry(p).or_default().push(n);
        }
        for a in dag.ancestors(n).filter(|a| member.contains(a)) {
            triples.ancestor_pairs.insert((a, n));
        }
    }
    for kids in by_parent.values() {
        for (i, &a) in kids.iter().enumerate() {
            for &b in &kids[i + 1..] {
                triples.sibling_pairs.insert((a.min(b), a.max(b)));
            }
        }
    }

    let positive_edges: Vec<(usize, usize)> = triples.parent_pairs.iter().copied().collect();
    let negative_pairs = sample_negatives(dag, &nodes, neg_cap.limit(positive_edges.len()), rng);

    AxiomBatch {
        nodes,
        positive_edges,
        negative_pairs,
        triples,
    }
}

fn sample_negatives(
    dag: &OntologyDag,
    nodes: &[usize],
    limit: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    let m = nodes.len();
    if m < 2 || limit == 0 {
        return Vec::new();
    }
    let decode = |code: usize| {
        let (i, j) = (code / (m - 1), code % (m - 1));
        let j = if j >= i { j + 1 } else { j };
        (nodes[i], nodes[j])
    };
    let total = m * (m - 1);
    let edges = nodes
        .iter()
        .filter(|&&n| dag.parent(n).is_some_and(|p| nodes.binary_search(&p).is_ok()))
        .count();
    let available = total - edges;

    let mut out: Vec<(usize, usize)> = if limit >= available / 2 {
        let all: Vec<(usize, usize)> = (0..total)
            .map(decode)
            .filter(|&(u, v)| !dag.has_edge(u, v))
            .collect();
        if limit >= all.len() {
            all
        } else {
            index::sample(rng, all.len(), limit)
                .into_iter()
                .map(|i| all[i])
                .collect()
        }
    } else {
        let mut seen = HashSet::with_capacity(limit);
        let mut picked = Vec::with_capacity(limit);
        while picked.len() < limit {
            let (u, v) = decode(rng.gen_range(0..total));
            if !dag.has_edge(u, v) && seen.insert((u, v)) {
                picked.push((u, v));
            }
        }
        picked
    };
    out.sort_unstable();
    out
}

/// Samples `seed_count` seeds uniformly without replacement, closes them, and
/// derives positive and negative edge sets. Deterministic in `rng_seed`.
pub fn sample_batch(
    dag: &OntologyDag,
    seed_count: usize,
    rng_seed: u64,
    neg_cap: NegCap,
) -> AxiomBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_batch_with(dag, seed_count, neg_cap, &mut rng)
}

pub fn sample_batch_with(
    dag: &OntologyDag,
    seed_count: usize,
    neg_cap: NegCap,
    rng: &mut impl Rng,
) -> AxiomBatch {
    let k = seed_count.min(dag.len());
    let seeds: Vec<usize> = index::sample(rng, dag.len(), k).into_vec();
    let nodes = close_seeds(dag, &seeds);
    batch_from_nodes(dag, nodes, neg_cap, rng)
}

/// Scalar variable slots materialized for `n_vars` variables over the batch.
pub fn batch_footprint(batch: &AxiomBatch, n_vars: usize, dim: usize) -> usize {
    n_vars * batch.len() * dim
}
