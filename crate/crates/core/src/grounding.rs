//! Trainable parameters: per-node embedding tables and the predicate scorer
//! networks, plus their on-disk formats.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logic::{clamp_truth, TRUTH_EPS};
use crate::ontology::{OntologyDag, OntologyKind};

/// One `dim`-wide row per ontology node, rows in DAG node order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub kind: OntologyKind,
    pub dim: usize,
    pub ids: Vec<String>,
    pub data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Rows follow `dag` order and ids match exactly.
    pub fn matches(&self, dag: &OntologyDag) -> bool {
        self.kind == dag.kind() && self.ids == dag.ids()
    }
}

/// Rows drawn i.i.d. from `U[-1/sqrt(d), 1/sqrt(d)]`.
pub fn init_embeddings(dag: &OntologyDag, dim: usize, seed: u64) -> EmbeddingTable {
    assert!(dim >= 1, "embedding dim must be positive");
    let bound = 1.0 / (dim as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dag.len() * dim).map(|_| dist.sample(&mut rng)).collect();
    EmbeddingTable {
        kind: dag.kind(),
        dim,
        ids: dag.ids().to_vec(),
        data,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Parent,
    Sibling,
    Ancestor,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Parent, Relation::Sibling, Relation::Ancestor];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Names of the ten predicate parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredicateName {
    Onto(Relation, OntologyKind),
    Indication,
}

impl PredicateName {
    /// Canonical ordering used for storage: P/S/A per ontology, then `I`.
    pub fn all() -> Vec<PredicateName> {
        let mut out: Vec<PredicateName> = OntologyKind::ALL
            .iter()
            .flat_map(|&k| Relation::ALL.iter().map(move |&r| PredicateName::Onto(r, k)))
            .collect();
        out.push(PredicateName::Indication);
        out
    }

    pub fn slot(self) -> usize {
        match self {
            PredicateName::Onto(r, k) => k.index() * 3 + r.index(),
            PredicateName::Indication => 9,
        }
    }
}

impl fmt::Display for PredicateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateName::Indication => f.write_str("I"),
            PredicateName::Onto(r, k) => {
                let r = match r {
                    Relation::Parent => "P",
                    Relation::Sibling => "S",
                    Relation::Ancestor => "A",
                };
                let k = match k {
                    OntologyKind::Diagnosis => "diag",
                    OntologyKind::Procedure => "proc",
                    OntologyKind::Medication => "med",
                };
                write!(f, "{r}_{k}")
            }
        }
    }
}

impl FromStr for PredicateName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredicateName::all()
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Checkpoint(format!("unknown predicate `{s}`")))
    }
}

#[inline]
fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `clamp(sigmoid(MLP([x; y])))` with ELU hidden layers.
///
/// Parameters live in one flat vector; layer `l` stores its row-major
/// `sizes[l+1] x sizes[l]` weight matrix followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct PredicateNet {
    pub name: PredicateName,
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl PredicateNet {
    /// Default architecture for embedding width `dim`: `2d -> 2d -> d -> 1`.
    pub fn new(name: PredicateName, dim: usize, seed: u64) -> Self {
        Self::with_sizes(name, vec![2 * dim, 2 * dim, dim, 1], seed)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn with_sizes(name: PredicateName, sizes: Vec<usize>, seed: u64) -> Self {
        assert!(sizes.len() >= 2 && *sizes.last().unwrap() == 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&sizes));
        for w in sizes.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            params.extend((0..w[0] * w[1]).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        PredicateNet {
            name,
            sizes,
            params,
        }
    }

    pub fn zeros(name: PredicateName, sizes: Vec<usize>) -> Self {
        let n = param_count(&sizes);
        PredicateNet {
            name,
            sizes,
            params: vec![0.0; n],
        }
    }

    pub fn from_params(name: PredicateName, sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let expected = param_count(&sizes);
        if params.len() != expected || sizes.len() < 2 || sizes.last() != Some(&1) {
            return Err(Error::DimensionMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(PredicateNet {
            name,
            sizes,
            params,
        })
    }

    /// Width of each argument vector.
    pub fn arg_dim(&self) -> usize {
        self.sizes[0] / 2
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_args(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let d = self.arg_dim();
        for v in [x, y] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Pre-activations of every layer.
    fn pre_activations(&self, x: &[f64], y: &[f64]) -> Vec<Vec<f64>> {
        let mut input: Vec<f64> = x.iter().chain(y).copied().collect();
        let mut pre = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    bias[o] + row.iter().zip(&input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l < last {
                input = z.iter().map(|&v| elu(v)).collect();
            }
            pre.push(z);
        }
        pre
    }

    /// Truth value in `[TRUTH_EPS, 1 - TRUTH_EPS]`.
    pub fn forward(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_args(x, y)?;
        let pre = self.pre_activations(x, y);
        Ok(clamp_truth(sigmoid(pre.last().unwrap()[0])))
    }

    /// Accumulates `upstream * d(forward)/d(.)` into the parameter and
    /// argument gradient buffers. Returns the forward value.
    pub fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        upstream: f64,
        grad_params: &mut [f64],
        grad_x: &mut [f64],
        grad_y: &mut [f64],
    ) -> Result<f64> {
        self.check_args(x, y)?;
        if grad_params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: grad_params.len(),
            });
        }
        let pre = self.pre_activations(x, y);
        let s = sigmoid(pre.last().unwrap()[0]);
        let out = clamp_truth(s);
        if upstream == 0.0 || s < TRUTH_EPS || s > 1.0 - TRUTH_EPS {
            return Ok(out);
        }

        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }

        let input0: Vec<f64> = x.iter().chain(y).copied().collect();
        // dL/dz for the current layer
        let mut delta = vec![upstream * s * (1.0 - s)];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let woff = offsets[l];
            let boff = woff + n_in * n_out;
            let act_in: Vec<f64> = if l == 0 {
                input0.clone()
            } else {
                pre[l - 1].iter().map(|&v| elu(v)).collect()
            };
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad_params[boff + o] += d;
                let grow = &mut grad_params[woff + o * n_in..woff + (o + 1) * n_in];
                for (g, a) in grow.iter_mut().zip(&act_in) {
                    *g += d * a;
                }
            }
            let weights = &self.params[woff..boff];
            let mut back = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (b, w) in back.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *b += d * w;
                }
            }
            if l > 0 {
                for (b, &z) in back.iter_mut().zip(&pre[l - 1]) {
                    *b *= elu_grad(z);
                }
                delta = back;
            } else {
                let d = x.len();
                for (g, b) in grad_x.iter_mut().zip(&back[..d]) {
                    *g += b;
                }
                for (g, b) in grad_y.iter_mut().zip(&back[d..]) {
                    *g += b;
                }
            }
        }
        Ok(out)
    }
}

/// Gradients returned by [`predicate_backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct PredicateGrads {
    pub params: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn predicate_forward(net: &PredicateNet, x: &[f64], y: &[f64]) -> Result<f64> {
    net.forward(x, y)
}

pub fn predicate_backward(
    net: &PredicateNet,
    x: &[f64],
    y: &[f64],
    upstream: f64,
) -> Result<PredicateGrads> {
    let mut g = PredicateGrads {
        params: vec![0.0; net.param_count()],
        x: vec![0.0; x.len()],
        y: vec![0.0; y.len()],
    };
    net.backward(x, y, upstream, &mut g.params, &mut g.x, &mut g.y)?;
    Ok(g)
}

/// The ten predicate networks, indexed by [`PredicateName::slot`].
#[derive(Clone, Debug, PartialEq)]
pub struct PredicateSet {
    pub nets: Vec<PredicateNet>,
}

impl PredicateSet {
    pub fn new(dim: usize, seed: u64) -> Self {
        let nets = PredicateName::all()
            .into_iter()
            .enumerate()
            .map(|(i, name)| PredicateNet::new(name, dim, seed.wrapping_add(1000 + i as u64)))
            .collect();
        PredicateSet { nets }
    }

    pub fn get(&self, name: PredicateName) -> &PredicateNet {
        &self.nets[name.slot()]
    }

    pub fn get_mut(&mut self, name: PredicateName) -> &mut PredicateNet {
        &mut self.nets[name.slot()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SatScores {
    /// Indexed by [`OntologyKind::index`].
    pub ontology: [f64; 3],
    pub indication: f64,
}

/// Three embedding tables, all predicates, and the bookkeeping needed to
/// reproduce the run that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    /// Indexed by [`OntologyKind::index`].
    pub tables: Vec<EmbeddingTable>,
    pub predicates: PredicateSet,
    pub epoch: usize,
    /// Epoch each table was taken from.
    pub table_epochs: [usize; 3],
    pub sat_scores: SatScores,
    /// Serialized training configuration.
    pub config: String,
}

impl ModelCheckpoint {
    pub fn table(&self, kind: OntologyKind) -> &EmbeddingTable {
        &self.tables[kind.index()]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.raw(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u64(self.epoch as u64);
        for &e in &self.table_epochs {
            w.u64(e as u64);
        }
        for &s in &self.sat_scores.ontology {
            w.f64(s);
        }
        w.f64(self.sat_scores.indication);
        w.str(&self.config);
        w.u32(self.tables.len() as u32);
        for t in &self.tables {
            w.str(t.kind.as_str());
            w.u64(t.rows() as u64);
            w.u64(t.dim as u64);
            for id in &t.ids {
                w.str(id);
            }
            for &v in &t.data {
                w.f64(v);
            }
        }
        w.u32(self.predicates.nets.len() as u32);
        for net in &self.predicates.nets {
            w.str(&net.name.to_string());
            w.u32(net.sizes.len() as u32);
            for &s in &net.sizes {
                w.u64(s as u64);
            }
            w.u64(net.params.len() as u64);
            for &v in &net.params {
                w.f64(v);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { buf: bytes, pos: 0 };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic header".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let epoch = r.u64()? as usize;
        let mut table_epochs = [0usize; 3];
        for e in &mut table_epochs {
            *e = r.u64()? as usize;
        }
        let mut sat_scores = SatScores::default();
        for s in &mut sat_scores.ontology {
            *s = r.f64()?;
        }
        sat_scores.indication = r.f64()?;
        let config = r.str()?;

        let n_tables = r.u32()? as usize;
        let mut tables = Vec::with_capacity(n_tables);
        for _ in 0..n_tables {
            let kind: OntologyKind = r.str()?.parse()?;
            let rows = r.u64()? as usize;
            let dim = r.u64()? as usize;
            let ids = (0..rows).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
            let data = (0..rows * dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tables.push(EmbeddingTable {
                kind,
                dim,
                ids,
                data,
            });
        }
        let n_nets = r.u32()? as usize;
        let mut nets = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            let name: PredicateName = r.str()?.parse()?;
            let n_sizes = r.u32()? as usize;
            let sizes = (0..n_sizes)
                .map(|_| r.u64().map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let n_params = r.u64()? as usize;
            let params = (0..n_params).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            nets.push(PredicateNet::from_params(name, sizes, params)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(ModelCheckpoint {
            tables,
            predicates: PredicateSet { nets },
            epoch,
            table_epochs,
            sat_scores,
            config,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8] = b"ONTOCKPT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Default)]
struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u32(&mut self, v: u32) {
        self.raw(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.raw(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.raw(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.raw(s.as_bytes());
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8 string".into()))
    }
}

/// Writes the text embedding format: a `dim=<d>` header, then one
/// `kind<TAB>node_id<TAB>v1 v2 ... vd` line per node, 17 significant digits.
pub fn export_tables(tables: &[EmbeddingTable], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = tables.first().map_or(0, |t| t.dim);
    if let Some(t) = tables.iter().find(|t| t.dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: t.dim,
        });
    }
    let mut out = Vec::new();
    writeln!(out, "dim={dim}").unwrap();
    for t in tables {
        for (i, id) in t.ids.iter().enumerate() {
            write!(out, "{}\t{}\t", t.kind, id).unwrap();
            for (j, v) in t.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(b' ');
                }
                write!(out, "{v:.16e}").unwrap();
            }
            out.push(b'\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn export_embeddings(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    export_tables(&ckpt.tables, path)
}

/// Reads the text embedding format back, one table per kind in file order.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingTable>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let dim: usize = match lines.next() {
        Some((_, h)) => h
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "expected `dim=<d>` header"))?,
        None => return Err(Error::parse(path, 1, "empty embedding file")),
    };
    let mut tables: Vec<EmbeddingTable> = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse(path, lineno + 1, msg);
        let mut fields = line.splitn(3, '\t');
        let (kind, id, values) = match (fields.next(), fields.next(), fields.next()) {
            (Some(k), Some(i), Some(v)) => (k, i, v),
            _ => return Err(bad("expected `kind<TAB>node_id<TAB>values`")),
        };
        let kind: OntologyKind = kind.parse().map_err(|_| bad("unknown ontology kind"))?;
        let row = values
            .split(' ')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("malformed number"))?;
        if row.len() != dim {
            return Err(bad(&format!("expected {dim} values, found {}", row.len())));
        }
        let pos = match tables.iter().position(|t| t.kind == kind) {
            Some(p) => p,
            None => {
                tables.push(EmbeddingTable {
                    kind,
                    dim,
                    ids: Vec::new(),
                    data: Vec::new(),
                });
                tables.len() - 1
            }
        };
        tables[pos].ids.push(id.to_string());
        tables[pos].data.extend(row);
    }
    Ok(tables)
}
