//! Single-parent ontology DAGs and the relations derived from them.
//!
//! Nodes are addressed by a dense `usize` index everywhere below the I/O
//! boundary; the opaque string codes only matter when reading and writing
//! files.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OntologyKind {
    Diagnosis,
    Procedure,
    Medication,
}

impl OntologyKind {
    /// Training order within an epoch.
    pub const ALL: [OntologyKind; 3] = [
        OntologyKind::Diagnosis,
        OntologyKind::Procedure,
        OntologyKind::Medication,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OntologyKind::Diagnosis => "diagnosis",
            OntologyKind::Procedure => "procedure",
            OntologyKind::Medication => "medication",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OntologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OntologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagnosis" => Ok(OntologyKind::Diagnosis),
            "procedure" => Ok(OntologyKind::Procedure),
            "medication" => Ok(OntologyKind::Medication),
            other => Err(Error::Config(format!("unknown ontology kind `{other}`"))),
        }
    }
}

/// A validated tree-shaped ontology: acyclic, one root, every other node
/// with exactly one parent.
#[derive(Clone, Debug)]
pub struct OntologyDag {
    kind: OntologyKind,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    root: usize,
}

impl OntologyDag {
    /// Builds and validates a DAG from `(parent, child)` edges.
    ///
    /// Node indices follow first appearance, parent before child.
    pub fn from_edges<S: AsRef<str>>(kind: OntologyKind, edges: &[(S, S)]) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |code: &str, ids: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(code) {
                return i;
            }
            let i = ids.len();
            ids.push(code.to_string());
            index.insert(code.to_string(), i);
            i
        };

        let mut raw: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (p, c) in edges {
            let p = intern(p.as_ref(), &mut ids);
            let c = intern(c.as_ref(), &mut ids);
            raw.push((p, c));
        }

        let n = ids.len();
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(p, c) in &raw {
            if p == c {
                return Err(Error::Cycle(ids[c].clone()));
            }
            match parent[c] {
                Some(existing) if existing == p => continue,
                Some(existing) => {
                    return Err(Error::MultiParent {
                        node: ids[c].clone(),
                        first: ids[existing].clone(),
                        second: ids[p].clone(),
                    })
                }
                None => {
                    parent[c] = Some(p);
                    children[p].push(c);
                }
            }
        }

        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        if n == 0 {
            return Err(Error::Orphan(Vec::new()));
        }
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::Cycle(ids[0].clone())),
            many => return Err(Error::Orphan(many.iter().map(|&i| ids[i].clone()).collect())),
        };

        // With a unique root and single parents, anything unreachable from the
        // root sits on a parent cycle.
        let mut depth = vec![usize::MAX; n];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &c in &children[u] {
                depth[c] = depth[u] + 1;
                queue.push_back(c);
            }
        }
        if let Some(stuck) = (0..n).find(|&i| depth[i] == usize::MAX) {
            return Err(Error::Cycle(ids[stuck].clone()));
        }

        Ok(OntologyDag {
            kind,
            ids,
            index,
            parent,
            children,
            depth,
            root,
        })
    }

    pub fn kind(&self) -> OntologyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn id(&self, node: usize) -> &str {
        &self.ids[node]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn lookup(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn require(&self, code: &str) -> Result<usize> {
        self.lookup(code)
            .ok_or_else(|| Error::UnknownNode(code.to_string()))
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    /// `(parent, child)` pairs in node order of the child.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).filter_map(move |c| self.parent[c].map(|p| (p, c)))
    }

    pub fn edge_count(&self) -> usize {
        self.len() - 1
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parent[child] == Some(parent)
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    /// Edges from the root to `code`.
    pub fn depth_of(&self, code: &str) -> Result<usize> {
        Ok(self.depth[self.require(code)?])
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Multi-hop ancestors of `node` (grandparent upwards), nearest first.
    pub fn ancestors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let mut cur = self.parent[node].and_then(|p| self.parent[p]);
        std::iter::from_fn(move || {
            let out = cur?;
            cur = self.parent[out];
            Some(out)
        })
    }

    /// Other children of `node`'s parent.
    pub fn siblings(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent[node]
            .into_iter()
            .flat_map(move |p| self.children[p].iter().copied())
            .filter(move |&s| s != node)
    }

    /// All proper descendants of `node` in BFS order.
    pub fn descendants(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut queue: VecDeque<usize> = self.children[node].iter().copied().collect();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            queue.extend(self.children[u].iter().copied());
        }
        out
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    /// Derives parent, ancestor, and sibling relations. `max_depth` bounds
    /// the ancestor closure to paths of at most that many hops.
    pub fn derive_relations(&self, max_depth: Option<usize>) -> RelationTriples {
        let limit = max_depth.unwrap_or(usize::MAX);
        let parent_pairs: BTreeSet<(usize, usize)> = self.edges().collect();

        let mut ancestor_pairs = BTreeSet::new();
        for node in 0..self.len() {
            for (hops, anc) in (2..).zip(self.ancestors(node)) {
                if hops > limit {
                    break;
                }
                ancestor_pairs.insert((anc, node));
            }
        }

        let mut sibling_pairs = BTreeSet::new();
        for kids in &self.children {
            for (i, &a) in kids.iter().enumerate() {
                for &b in &kids[i + 1..] {
                    sibling_pairs.insert((a.min(b), a.max(b)));
                }
            }
        }

        RelationTriples {
            parent_pairs,
            ancestor_pairs,
            sibling_pairs,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "# {} ontology, {} nodes", self.kind, self.len()).unwrap();
        for (p, c) in self.edges() {
            writeln!(out, "{}\t{}", self.ids[c], self.ids[p]).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads the `child<TAB>parent` edge-list format.
pub fn load_ontology(path: impl AsRef<Path>, kind: OntologyKind) -> Result<OntologyDag> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (child, parent) = match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(p), None) if !c.is_empty() && !p.is_empty() => (c, p),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    "expected `child<TAB>parent`",
                ))
            }
        };
        edges.push((parent.to_string(), child.to_string()));
    }
    if edges.is_empty() {
        return Err(Error::parse(path, 0, "ontology file has no edges"));
    }
    OntologyDag::from_edges(kind, &edges)
}

/// Derived relations over node indices. Sibling pairs are stored once as
/// `(min, max)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationTriples {
    pub parent_pairs: BTreeSet<(usize, usize)>,
    pub ancestor_pairs: BTreeSet<(usize, usize)>,
    pub sibling_pairs: BTreeSet<(usize, usize)>,
}

impl RelationTriples {
    pub fn is_sibling(&self, a: usize, b: usize) -> bool {
        self.sibling_pairs.contains(&(a.min(b), a.max(b)))
    }
}

/// Shape parameters for a generated tree ontology.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TreeShape {
    pub nodes: usize,
    pub max_depth: usize,
    /// Code prefix, e.g. `D` gives `D00017`.
    pub prefix: String,
}

/// Generates a random single-parent ontology with exactly `shape.nodes` nodes
/// and maximum depth exactly `shape.max_depth` (when enough nodes exist).
///
/// A spine of length `max_depth` is laid first; remaining nodes attach to a
/// uniformly chosen node that still has room below it.
pub fn synthetic_tree(kind: OntologyKind, shape: &TreeShape, seed: u64) -> OntologyDag {
    assert!(shape.nodes >= 2, "a tree ontology needs at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (shape.nodes - 1).to_string().len().max(3);
    let code = |i: usize| format!("{}{:0width$}", shape.prefix, i, width = width);

    let spine = shape.max_depth.min(shape.nodes - 1);
    let mut depth = vec![0usize];
    let mut edges: Vec<(String, String)> = Vec::with_capacity(shape.nodes - 1);
    for i in 1..=spine {
        edges.push((code(i - 1), code(i)));
        depth.push(i);
    }
    let mut open: Vec<usize> = (0..depth.len()).filter(|&i| depth[i] < spine).collect();
    for i in depth.len()..shape.nodes {
        let p = open[rng.gen_range(0..open.len())];
        edges.push((code(p), code(i)));
        depth.push(depth[p] + 1);
        if depth[i] < spine {
            open.push(i);
        }
    }
    OntologyDag::from_edges(kind, &edges).expect("generated tree is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag(edges: &[(&str, &str)]) -> Result<OntologyDag> {
        OntologyDag::from_edges(OntologyKind::Diagnosis, edges)
    }

    fn pairs(d: &OntologyDag, set: &BTreeSet<(usize, usize)>) -> Vec<(String, String)> {
        set.iter()
            .map(|&(a, b)| (d.id(a).to_string(), d.id(b).to_string()))
            .collect()
    }

    #[test]
    fn minimal_dag() {
        let d = dag(&[("a", "b"), ("a", "c"), ("b", "d")]).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.edges().count(), 3);
        assert_eq!(d.id(d.root()), "a");
    }

    #[test]
    fn rejects_second_parent() {
        let err = dag(&[("a", "b"), ("c", "b")]).unwrap_err();
        assert!(matches!(err, Error::MultiParent { .. }), "{err}");
    }

    #[test]
    fn rejects_two_roots() {
        let err = dag(&[("a", "b"), ("c", "d")]).unwrap_err();
        assert!(matches!(err, Error::Orphan(ref r) if r.len() == 2), "{err}");
    }

    #[test]
    fn rejects_cycles() {
        assert!(matches!(dag(&[("a", "a")]), Err(Error::Cycle(_))));
        // root plus a detached 2-cycle
        let err = dag(&[("r", "a"), ("b", "c"), ("c", "b")]).unwrap_err();
        assert!(matches!(err, Error::Cycle(_)), "{err}");
    }

    #[test]
    fn chain_relations() {
        let d = dag(&[("a", "b"), ("b", "c")]).unwrap();
        let r = d.derive_relations(None);
        assert_eq!(
            pairs(&d, &r.parent_pairs),
            vec![("a".into(), "b".into()), ("b".into(), "c".into())]
        );
        assert_eq!(pairs(&d, &r.ancestor_pairs), vec![("a".into(), "c".into())]);
        assert!(r.sibling_pairs.is_empty());
    }

    #[test]
    fn star_relations() {
        let d = dag(&[("a", "b"), ("a", "c")]).unwrap();
        let r = d.derive_relations(None);
        assert!(r.ancestor_pairs.is_empty());
        assert_eq!(pairs(&d, &r.sibling_pairs), vec![("b".into(), "c".into())]);
        let (b, c) = (d.lookup("b").unwrap(), d.lookup("c").unwrap());
        assert!(r.is_sibling(c, b));
    }

    #[test]
    fn bounded_closure() {
        let d = dag(&[("a", "b"), ("b", "c"), ("c", "d"), ("d", "e")]).unwrap();
        assert_eq!(d.derive_relations(None).ancestor_pairs.len(), 6);
        assert_eq!(d.derive_relations(Some(2)).ancestor_pairs.len(), 3);
        assert!(d.derive_relations(Some(1)).ancestor_pairs.is_empty());
    }

    #[test]
    fn depths() {
        let d = dag(&[("a", "b"), ("b", "c")]).unwrap();
        assert_eq!(d.depth_of("a").unwrap(), 0);
        assert_eq!(d.depth_of("c").unwrap(), 2);
        assert!(matches!(d.depth_of("zz"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn descendants_and_siblings() {
        let d = dag(&[("a", "b"), ("a", "c"), ("b", "d"), ("d", "e")]).unwrap();
        let b = d.lookup("b").unwrap();
        let mut desc: Vec<&str> = d.descendants(b).into_iter().map(|i| d.id(i)).collect();
        desc.sort();
        assert_eq!(desc, ["d", "e"]);
        let sib: Vec<&str> = d.siblings(b).map(|i| d.id(i)).collect();
        assert_eq!(sib, ["c"]);
        let e = d.lookup("e").unwrap();
        let anc: Vec<&str> = d.ancestors(e).map(|i| d.id(i)).collect();
        assert_eq!(anc, ["b", "a"]);
    }

    #[test]
    fn synthetic_shape_is_exact() {
        let shape = TreeShape {
            nodes: 500,
            max_depth: 5,
            prefix: "M".into(),
        };
        let d = synthetic_tree(OntologyKind::Medication, &shape, 3);
        assert_eq!(d.len(), 500);
        assert_eq!(d.edge_count(), 499);
        assert_eq!(d.max_depth(), 5);
        let again = synthetic_tree(OntologyKind::Medication, &shape, 3);
        assert_eq!(d.ids(), again.ids());
    }
}
