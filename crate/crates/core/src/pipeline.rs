//! End-to-end glue: a synthetic world (ontologies, indications, EHR, DDI)
//! and the random-vs-pretrained evaluation protocol.

use serde::{Deserialize, Serialize};

use crate::axioms::IndicationAtom;
use crate::ehr::{
    calibrated_ddi, gen_synthetic_ehr, pick_medications, split_dataset, synthetic_indications, MedVocab,
    Ontologies, PatientRecord, SplitConfig, SplitSpec, SyntheticEhrConfig,
};
use crate::error::Result;
use crate::grounding::EmbeddingTable;
use crate::metrics::DdiMatrix;
use crate::ontology::{synthetic_tree, OntologyDag, OntologyKind, TreeShape};
use crate::recommender::{train_reference_model, Init, RecConfig, ReferenceModel};
use crate::report::{bootstrap, point_metrics, score_admissions, EvalSet, ReportRow};
use crate::optim::AdamConfig;
use crate::trainer::{seed_mix, train, Corpus, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub diagnosis: TreeShape,
    pub procedure: TreeShape,
    pub medication: TreeShape,
    pub ehr: SyntheticEhrConfig,
    /// Pooled DDI rate of the ground-truth prescriptions.
    pub ddi_rate: f64,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let shape = |nodes, max_depth, prefix: &str| TreeShape {
            nodes,
            max_depth,
            prefix: prefix.into(),
        };
        WorldConfig {
            diagnosis: shape(400, 5, "D"),
            procedure: shape(150, 4, "P"),
            medication: shape(300, 4, "M"),
            ehr: SyntheticEhrConfig::default(),
            ddi_rate: 0.078,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub diagnosis: OntologyDag,
    pub procedure: OntologyDag,
    pub medication: OntologyDag,
    /// Unexpanded `(medication, diagnosis)` pairs.
    pub indications: Vec<IndicationAtom>,
    pub records: Vec<PatientRecord>,
    pub vocab: MedVocab,
    pub ddi: DdiMatrix,
}

impl World {
    pub fn onto(&self) -> Ontologies<'_> {
        Ontologies {
            diagnosis: &self.diagnosis,
            procedure: &self.procedure,
            medication: &self.medication,
        }
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::new(
            self.diagnosis.clone(),
            self.procedure.clone(),
            self.medication.clone(),
            &self.indications,
        )
    }
}

pub fn synthetic_world(cfg: &WorldConfig) -> Result<World> {
    let s = cfg.rng_seed;
    let diagnosis = synthetic_tree(OntologyKind::Diagnosis, &cfg.diagnosis, seed_mix(s, 20, 0));
    let procedure = synthetic_tree(OntologyKind::Procedure, &cfg.procedure, seed_mix(s, 20, 1));
    let medication = synthetic_tree(OntologyKind::Medication, &cfg.medication, seed_mix(s, 20, 2));
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed_mix(s, 21, 0));
    let meds = pick_medications(&medication, cfg.ehr.medications, &mut rng);
    let indications = synthetic_indications(&medication, &diagnosis, &meds, seed_mix(s, 22, 0));
    let onto = Ontologies {
        diagnosis: &diagnosis,
        procedure: &procedure,
        medication: &medication,
    };
    let ehr = SyntheticEhrConfig {
        rng_seed: seed_mix(s, 23, 0),
        ..cfg.ehr.clone()
    };
    let records = gen_synthetic_ehr(onto, &meds, &indications, &ehr)?;
    let vocab = MedVocab::from_records(&records);
    let ddi = calibrated_ddi(&records, &vocab, cfg.ddi_rate, seed_mix(s, 24, 0));
    Ok(World {
        diagnosis,
        procedure,
        medication,
        indications,
        records,
        vocab,
        ddi,
    })
}

/// Every admission of the test patients.
pub fn test_admissions(records: &[PatientRecord], split: &SplitSpec) -> Vec<(usize, usize)> {
    split
        .test
        .iter()
        .flat_map(|&p| (0..records[p].admissions.len()).map(move |t| (p, t)))
        .collect()
}

pub fn fit(world: &World, split: &SplitSpec, init: Init<'_>, cfg: &RecConfig) -> Result<ReferenceModel> {
    train_reference_model(&world.records, &split.train, &world.vocab, world.onto(), init, cfg)
}

/// Point Jaccard of `model` on the few-shot set, `None` if that set is empty.
pub fn few_shot_jaccard(world: &World, split: &SplitSpec, model: &ReferenceModel) -> Result<Option<f64>> {
    if split.few_shot.is_empty() {
        return Ok(None);
    }
    let s = score_admissions(model, &world.records, &world.vocab, &split.few_shot);
    Ok(Some(point_metrics(&s, &world.ddi)?.jaccard))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub split: SplitConfig,
    pub recommender: RecConfig,
    pub bootstrap_rounds: usize,
    pub rng_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: SplitConfig::default(),
            recommender: RecConfig::default(),
            bootstrap_rounds: 10,
            rng_seed: 0,
        }
    }
}

/// Report rows for {random, pretrained} × {full test, few-shot}. The random
/// baseline uses the dimension of `pretrained`.
pub fn evaluate_inits(world: &World, pretrained: &[EmbeddingTable], cfg: &EvalConfig) -> Result<Vec<ReportRow>> {
    let split = split_dataset(&world.records, &world.medication, &cfg.split)?;
    let dim = pretrained.first().map_or(0, |t| t.dim);
    let inits = [
        Init::Random {
            dim,
            seed: seed_mix(cfg.rng_seed, 30, 0),
        },
        Init::Pretrained(pretrained),
    ];
    let full = test_admissions(&world.records, &split);
    let mut rows = Vec::new();
    for init in inits {
        let model = fit(world, &split, init, &cfg.recommender)?;
        for (set, sel) in [(EvalSet::Full, &full), (EvalSet::FewShot, &split.few_shot)] {
            let summary = if sel.is_empty() {
                None
            } else {
                let s = score_admissions(&model, &world.records, &world.vocab, sel);
                Some(bootstrap(&s, &world.ddi, cfg.bootstrap_rounds, seed_mix(cfg.rng_seed, 31, 0))?)
            };
            rows.push(ReportRow {
                model: "reference".into(),
                set,
                init: init.label().into(),
                summary,
            });
        }
    }
    Ok(rows)
}

/// Settings of the sparsity sweep: pretrain once per seed, then compare
/// random and pretrained initialization on the few-shot set at each tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub patients: usize,
    pub dim: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub rec_epochs: usize,
    pub rec_lr: f64,
    /// Tail shares to compare, e.g. `[0.2, 0.3]`.
    pub tails: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            patients: 4000,
            dim: 32,
            pretrain_epochs: 20,
            pretrain_lr: 1e-2,
            rec_epochs: 40,
            rec_lr: 3e-3,
            tails: vec![0.2, 0.3],
        }
    }
}

/// Few-shot Jaccard of both initializations at one tail share.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tail: f64,
    pub few_shot_admissions: usize,
    pub random: f64,
    pub pretrained: f64,
}

impl SweepPoint {
    pub fn gap(&self) -> f64 {
        self.pretrained - self.random
    }
}

/// One seed of the sweep. World, pretraining, split and recommender all
/// derive from `seed`. Tails with an empty few-shot set are skipped.
pub fn sparsity_sweep(cfg: &SweepConfig, seed: u64) -> Result<Vec<SweepPoint>> {
    let world = synthetic_world(&WorldConfig {
        rng_seed: seed,
        ehr: SyntheticEhrConfig {
            patients: cfg.patients,
            ..SyntheticEhrConfig::default()
        },
        ..WorldConfig::default()
    })?;
    let pre = TrainConfig {
        dim: cfg.dim,
        epochs: cfg.pretrain_epochs,
        rng_seed: seed,
        adam: AdamConfig {
            lr: cfg.pretrain_lr,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let tables = train(&world.corpus()?, &pre)?.checkpoint.tables;
    let rec = RecConfig {
        epochs: cfg.rec_epochs,
        rng_seed: seed,
        adam: AdamConfig {
            lr: cfg.rec_lr,
            ..AdamConfig::default()
        },
        ..RecConfig::default()
    };
    let mut out = Vec::new();
    for &tail in &cfg.tails {
        let split_cfg = SplitConfig {
            tail_percentage: tail,
            rng_seed: seed,
            ..SplitConfig::default()
        };
        let split = split_dataset(&world.records, &world.medication, &split_cfg)?;
        let random = fit(&world, &split, Init::Random { dim: cfg.dim, seed }, &rec)?;
        let pretrained = fit(&world, &split, Init::Pretrained(&tables), &rec)?;
        if let (Some(r), Some(p)) = (
            few_shot_jaccard(&world, &split, &random)?,
            few_shot_jaccard(&world, &split, &pretrained)?,
        ) {
            out.push(SweepPoint {
                tail,
                few_shot_admissions: split.few_shot.len(),
                random: r,
                pretrained: p,
            });
        }
    }
    Ok(out)
}
