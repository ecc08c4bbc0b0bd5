//! Instance-based reference recommender fine-tuned from the embedding tables.
//!
//! `score(m | adm) = σ(w·[ē_d; ē_p] + e_mᵀ M ē_d + b_m)`, where `ē_d`, `ē_p`
//! are mean diagnosis and procedure embeddings of the admission. The shared
//! `w` sets an admission-level offset; medications are told apart only by
//! their embeddings and biases.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ehr::{Admission, MedVocab, Ontologies, PatientRecord};
use crate::error::{Error, Result};
use crate::grounding::{init_embeddings, EmbeddingTable};
use crate::optim::{Adam, AdamConfig};
use crate::ontology::{OntologyDag, OntologyKind};
use crate::trainer::seed_mix;

/// Anything that maps an admission to a multi-hot medication vector.
pub trait Recommender {
    fn recommend(&self, adm: &Admission) -> Vec<bool>;
}

impl<F: Fn(&Admission) -> Vec<bool>> Recommender for F {
    fn recommend(&self, adm: &Admission) -> Vec<bool> {
        self(adm)
    }
}

/// Starting point for the three embedding tables.
#[derive(Clone, Copy, Debug)]
pub enum Init<'a> {
    Random { dim: usize, seed: u64 },
    Pretrained(&'a [EmbeddingTable]),
}

impl Init<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Init::Random { .. } => "random",
            Init::Pretrained(_) => "pretrained",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub threshold: f64,
    pub rng_seed: u64,
}

impl Default for RecConfig {
    fn default() -> Self {
        RecConfig {
            epochs: 40,
            batch_size: 32,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            threshold: 0.5,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceModel {
    pub dim: usize,
    pub vocab: MedVocab,
    /// Diagnosis, procedure, medication tables, rows in ontology order.
    pub tables: [EmbeddingTable; 3],
    /// Shared weights over `[ē_d; ē_p]`, length `2d`.
    pub w: Vec<f64>,
    /// `d × d`, row-major.
    pub m: Vec<f64>,
    pub b: Vec<f64>,
    pub threshold: f64,
}

/// Reorders `table` rows to follow `dag`. Every ontology code must be present.
fn align_table(table: &EmbeddingTable, dag: &OntologyDag) -> Result<EmbeddingTable> {
    if table.matches(dag) {
        return Ok(table.clone());
    }
    let index = table.index();
    let mut data = Vec::with_capacity(dag.len() * table.dim);
    for id in dag.ids() {
        let row = index.get(id.as_str()).ok_or_else(|| Error::UnknownCode {
            kind: dag.kind().to_string(),
            code: id.clone(),
        })?;
        data.extend_from_slice(table.row(*row));
    }
    Ok(EmbeddingTable {
        kind: dag.kind(),
        dim: table.dim,
        ids: dag.ids().to_vec(),
        data,
    })
}

fn initial_tables(init: Init<'_>, onto: Ontologies<'_>) -> Result<[EmbeddingTable; 3]> {
    let kinds = [OntologyKind::Diagnosis, OntologyKind::Procedure, OntologyKind::Medication];
    let tables = match init {
        Init::Random { dim, seed } => {
            if dim == 0 {
                return Err(Error::Config("embedding dim must be positive".into()));
            }
            kinds.map(|k| init_embeddings(onto.get(k), dim, seed_mix(seed, 11, k.index() as u64)))
        }
        Init::Pretrained(all) => {
            let mut out = Vec::with_capacity(3);
            for k in kinds {
                let t = all
                    .iter()
                    .find(|t| t.kind == k)
                    .ok_or_else(|| Error::Config(format!("no {k} embeddings supplied")))?;
                out.push(align_table(t, onto.get(k))?);
            }
            let [d, p, m]: [EmbeddingTable; 3] = out.try_into().unwrap();
            [d, p, m]
        }
    };
    let dim = tables[0].dim;
    for t in &tables[1..] {
        if t.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: t.dim,
            });
        }
    }
    Ok(tables)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn mean_rows(table: &EmbeddingTable, rows: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; table.dim];
    for &r in rows {
        for (o, x) in out.iter_mut().zip(table.row(r)) {
            *o += x;
        }
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
    out
}

struct Forward {
    ed: Vec<f64>,
    ep: Vec<f64>,
    /// `M ē_d`.
    u: Vec<f64>,
    probs: Vec<f64>,
}

/// Gradient buffers mirroring the model's parameters.
struct Grads {
    tables: [Vec<f64>; 3],
    w: Vec<f64>,
    m: Vec<f64>,
    b: Vec<f64>,
}

impl ReferenceModel {
    pub fn new(init: Init<'_>, onto: Ontologies<'_>, vocab: MedVocab) -> Result<Self> {
        let tables = initial_tables(init, onto)?;
        let dim = tables[0].dim;
        let v = vocab.len();
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        Ok(ReferenceModel {
            dim,
            vocab,
            tables,
            w: vec![0.0; 2 * dim],
            m,
            b: vec![0.0; v],
            threshold: 0.5,
        })
    }

    fn forward(&self, adm: &Admission) -> Forward {
        let d = self.dim;
        let ed = mean_rows(&self.tables[0], &adm.diagnoses);
        let ep = mean_rows(&self.tables[1], &adm.procedures);
        let u: Vec<f64> = (0..d)
            .map(|i| self.m[i * d..(i + 1) * d].iter().zip(&ed).map(|(a, b)| a * b).sum())
            .collect();
        let lin: f64 = self.w[..d].iter().zip(&ed).chain(self.w[d..].iter().zip(&ep)).map(|(a, b)| a * b).sum();
        let probs = self
            .vocab
            .meds
            .iter()
            .enumerate()
            .map(|(j, &med)| {
                let bil: f64 = self.tables[2].row(med).iter().zip(&u).map(|(a, b)| a * b).sum();
                sigmoid(lin + bil + self.b[j])
            })
            .collect();
        Forward { ed, ep, u, probs }
    }

    /// Per-medication probabilities over the vocabulary.
    pub fn scores(&self, adm: &Admission) -> Vec<f64> {
        self.forward(adm).probs
    }

    /// Mean binary cross-entropy per medication.
    pub fn loss(&self, adm: &Admission) -> f64 {
        let y = self.vocab.multi_hot(&adm.medications);
        let eps = 1e-12;
        let p = self.scores(adm);
        -p.iter()
            .zip(&y)
            .map(|(&p, &y)| if y { (p + eps).ln() } else { (1.0 - p + eps).ln() })
            .sum::<f64>()
            / p.len().max(1) as f64
    }

    fn zero_grads(&self) -> Grads {
        Grads {
            tables: [0, 1, 2].map(|k| vec![0.0; self.tables[k].data.len()]),
            w: vec![0.0; self.w.len()],
            m: vec![0.0; self.m.len()],
            b: vec![0.0; self.b.len()],
        }
    }

    /// Accumulates `scale · d(loss)/dθ` for one admission into `g`.
    fn backward(&self, adm: &Admission, scale: f64, g: &mut Grads) {
        let d = self.dim;
        let f = self.forward(adm);
        let y = self.vocab.multi_hot(&adm.medications);
        let nv = self.vocab.len().max(1) as f64;
        let mut g_ed = vec![0.0; d];
        let mut g_ep = vec![0.0; d];
        let mut g_u = vec![0.0; d];
        for (j, &med) in self.vocab.meds.iter().enumerate() {
            let delta = scale * (f.probs[j] - if y[j] { 1.0 } else { 0.0 }) / nv;
            if delta == 0.0 {
                continue;
            }
            for i in 0..d {
                g.w[i] += delta * f.ed[i];
                g.w[d + i] += delta * f.ep[i];
                g_ed[i] += delta * self.w[i];
                g_ep[i] += delta * self.w[d + i];
            }
            g.b[j] += delta;
            let em = self.tables[2].row(med);
            let gm = &mut g.tables[2][med * d..(med + 1) * d];
            for i in 0..d {
                gm[i] += delta * f.u[i];
                g_u[i] += delta * em[i];
            }
        }
        for r in 0..d {
            for c in 0..d {
                g.m[r * d + c] += g_u[r] * f.ed[c];
                g_ed[c] += self.m[r * d + c] * g_u[r];
            }
        }
        let spread = |rows: &[usize], src: &[f64], dst: &mut [f64]| {
            let n = rows.len() as f64;
            for &row in rows {
                for i in 0..d {
                    dst[row * d + i] += src[i] / n;
                }
            }
        };
        spread(&adm.diagnoses, &g_ed, &mut g.tables[0]);
        spread(&adm.procedures, &g_ep, &mut g.tables[1]);
    }

    fn predict_with(&self, adm: &Admission) -> Vec<bool> {
        self.scores(adm).iter().map(|&p| p >= self.threshold).collect()
    }
}

impl Recommender for ReferenceModel {
    fn recommend(&self, adm: &Admission) -> Vec<bool> {
        self.predict_with(adm)
    }
}

struct Optimizers {
    tables: [Adam; 3],
    w: Adam,
    m: Adam,
    b: Adam,
}

fn apply(model: &mut ReferenceModel, opt: &mut Optimizers, g: &Grads, cfg: &AdamConfig) {
    for k in 0..3 {
        opt.tables[k].step(cfg, &mut model.tables[k].data, &g.tables[k]);
    }
    opt.w.step(cfg, &mut model.w, &g.w);
    opt.m.step(cfg, &mut model.m, &g.m);
    opt.b.step(cfg, &mut model.b, &g.b);
}

/// Fits the reference model on the admissions of `train` patients with
/// minibatch Adam on mean per-medication binary cross-entropy. Embeddings
/// are fine-tuned end to end.
pub fn train_reference_model(
    records: &[PatientRecord],
    train: &[usize],
    vocab: &MedVocab,
    onto: Ontologies<'_>,
    init: Init<'_>,
    cfg: &RecConfig,
) -> Result<ReferenceModel> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut model = ReferenceModel::new(init, onto, vocab.clone())?;
    model.threshold = cfg.threshold;
    let mut admissions: Vec<&Admission> = train
        .iter()
        .flat_map(|&p| &records[p].admissions)
        .collect();
    let mut opt = Optimizers {
        tables: [0, 1, 2].map(|k| Adam::new(model.tables[k].data.len())),
        w: Adam::new(model.w.len()),
        m: Adam::new(model.m.len()),
        b: Adam::new(model.b.len()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(cfg.rng_seed, 12, 0));
    for _ in 0..cfg.epochs {
        admissions.shuffle(&mut rng);
        for batch in admissions.chunks(cfg.batch_size) {
            let mut g = model.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for adm in batch {
                model.backward(adm, scale, &mut g);
            }
            apply(&mut model, &mut opt, &g, &cfg.adam);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::OntologyKind::*;

    struct Fx {
        diag: OntologyDag,
        proc_: OntologyDag,
        med: OntologyDag,
    }

    impl Fx {
        fn onto(&self) -> Ontologies<'_> {
            Ontologies {
                diagnosis: &self.diag,
                procedure: &self.proc_,
                medication: &self.med,
            }
        }
    }

    fn fx() -> Fx {
        Fx {
            diag: OntologyDag::from_edges(Diagnosis, &[("D", "d1"), ("D", "d2"), ("d1", "d3")]).unwrap(),
            proc_: OntologyDag::from_edges(Procedure, &[("P", "p1"), ("P", "p2")]).unwrap(),
            med: OntologyDag::from_edges(Medication, &[("M", "a"), ("M", "b"), ("M", "c")]).unwrap(),
        }
    }

    fn records() -> Vec<PatientRecord> {
        let adm = |d: &[usize], p: &[usize], m: &[usize]| Admission {
            diagnoses: d.to_vec(),
            procedures: p.to_vec(),
            medications: m.to_vec(),
        };
        vec![PatientRecord {
            patient_id: "x".into(),
            admissions: vec![adm(&[1, 3], &[1], &[1, 2]), adm(&[2], &[], &[3])],
        }]
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = fx();
        let recs = records();
        let vocab = MedVocab::from_records(&recs);
        let mut model = ReferenceModel::new(Init::Random { dim: 3, seed: 4 }, f.onto(), vocab).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        use rand::Rng;
        model.w.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
        model.m.iter_mut().for_each(|x| *x += rng.gen_range(-0.5..0.5));
        let adm = &recs[0].admissions[0];
        let mut g = model.zero_grads();
        model.backward(adm, 1.0, &mut g);
        let h = 1e-6;
        let check = |model: &mut ReferenceModel, get: &dyn Fn(&mut ReferenceModel) -> &mut Vec<f64>, analytic: &[f64]| {
            for i in 0..analytic.len() {
                let x = get(model)[i];
                get(model)[i] = x + h;
                let up = model.loss(adm);
                get(model)[i] = x - h;
                let down = model.loss(adm);
                get(model)[i] = x;
                let num = (up - down) / (2.0 * h);
                assert!((num - analytic[i]).abs() < 1e-7, "param {i}: {num} vs {}", analytic[i]);
            }
        };
        check(&mut model, &|m| &mut m.w, &g.w);
        check(&mut model, &|m| &mut m.m, &g.m);
        check(&mut model, &|m| &mut m.b, &g.b);
        for k in 0..3 {
            check(&mut model, &|m| &mut m.tables[k].data, &g.tables[k]);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let f = fx();
        let recs = records();
        let vocab = MedVocab::from_records(&recs);
        let init = Init::Random { dim: 4, seed: 1 };
        let cfg = RecConfig {
            epochs: 0,
            ..RecConfig::default()
        };
        let trained = train_reference_model(&recs, &[0], &vocab, f.onto(), init, &cfg).unwrap();
        assert_eq!(trained, ReferenceModel::new(init, f.onto(), vocab).unwrap());
    }

    #[test]
    fn pretrained_tables_are_reordered_and_checked() {
        let f = fx();
        let recs = records();
        let vocab = MedVocab::from_records(&recs);
        let mut tables: Vec<EmbeddingTable> = [&f.diag, &f.proc_, &f.med]
            .iter()
            .map(|d| init_embeddings(d, 2, 3))
            .collect();
        let model = ReferenceModel::new(Init::Pretrained(&tables), f.onto(), vocab.clone()).unwrap();
        assert_eq!(model.tables[0], tables[0]);

        tables[2].ids.reverse();
        let model = ReferenceModel::new(Init::Pretrained(&tables), f.onto(), vocab.clone()).unwrap();
        assert_eq!(model.tables[2].row(0), tables[2].row(3));

        tables[2].ids[0] = "zz".into();
        assert!(matches!(
            ReferenceModel::new(Init::Pretrained(&tables), f.onto(), vocab.clone()),
            Err(Error::UnknownCode { .. })
        ));

        let mut bad: Vec<EmbeddingTable> = [&f.diag, &f.proc_].iter().map(|d| init_embeddings(d, 2, 3)).collect();
        bad.push(init_embeddings(&f.med, 3, 3));
        assert!(matches!(
            ReferenceModel::new(Init::Pretrained(&bad), f.onto(), vocab),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let f = fx();
        let recs = records();
        let vocab = MedVocab::from_records(&recs);
        let run = || {
            train_reference_model(&recs, &[0], &vocab, f.onto(), Init::Random { dim: 4, seed: 2 }, &RecConfig::default())
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
