use std::sync::OnceLock;

use proptest::prelude::*;

use ontorec::checks::metric_oracle;
use ontorec::ehr::{load_ehr, save_ehr, split_dataset, Admission, EhrManifest, MedVocab, PatientRecord, SplitConfig, SyntheticEhrConfig};
use ontorec::metrics::{ddi_score, jaccard, precision_recall_f1, DdiMatrix};
use ontorec::pipeline::{synthetic_world, World, WorldConfig};
use ontorec::recommender::{train_reference_model, Init, RecConfig};
use ontorec::report::{bootstrap, format_report, point_metrics, score_admissions, EvalSet, MeanStd, MetricSummary, PointMetrics, ReportRow};

fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        synthetic_world(&WorldConfig {
            ehr: SyntheticEhrConfig {
                patients: 1000,
                ..SyntheticEhrConfig::default()
            },
            rng_seed: 8,
            ..WorldConfig::default()
        })
        .unwrap()
    })
}

fn all_admissions(records: &[PatientRecord]) -> Vec<(usize, usize)> {
    records
        .iter()
        .enumerate()
        .flat_map(|(p, r)| (0..r.admissions.len()).map(move |t| (p, t)))
        .collect()
}

#[test]
fn metrics_match_set_oracles_on_1000_cases() {
    metric_oracle(1000, 21).unwrap();
}

#[test]
fn report_matches_golden_file() {
    let ms = |mean, std| MeanStd { mean, std };
    let point = PointMetrics {
        jaccard: 0.0,
        f1: 0.0,
        ddi: None,
        avg_drugs: 0.0,
        empty_prediction: false,
    };
    let rows = vec![
        ReportRow {
            model: "reference".into(),
            set: EvalSet::Full,
            init: "random".into(),
            summary: Some(MetricSummary {
                point,
                jaccard: ms(1.0 / 3.0, 0.0125),
                f1: ms(0.4, 0.0),
                ddi: Some(ms(0.078, 0.0012)),
                avg_drugs: ms(2.5, 0.5),
                admissions: 10,
            }),
        },
        ReportRow {
            model: "reference".into(),
            set: EvalSet::FewShot,
            init: "pretrained".into(),
            summary: Some(MetricSummary {
                point,
                jaccard: ms(0.12345, 0.0679),
                f1: ms(0.2, 0.1),
                ddi: None,
                avg_drugs: ms(1.0, 0.0),
                admissions: 3,
            }),
        },
        ReportRow {
            model: "reference".into(),
            set: EvalSet::FewShot,
            init: "random".into(),
            summary: None,
        },
    ];
    let golden = include_str!("data/report.golden.tsv");
    assert_eq!(format_report(&rows), golden);
}

#[test]
fn loader_counts_match_generator_manifest() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ehr.txt");
    save_ehr(&path, &w.records, w.onto()).unwrap();
    let loaded = load_ehr(&path, w.onto()).unwrap();
    let want = EhrManifest::of(&w.records, 1.1, 8);
    assert_eq!(EhrManifest::of(&loaded, 1.1, 8), want);
    assert_eq!(want.patients, 1000);
    assert_eq!(loaded, w.records);
}

#[test]
fn reference_model_overfits_ten_admissions() {
    let w = world();
    let records: Vec<PatientRecord> = w.records[..10]
        .iter()
        .map(|r| PatientRecord {
            patient_id: r.patient_id.clone(),
            admissions: vec![r.admissions[0].clone()],
        })
        .collect();
    let vocab = MedVocab::from_records(&records);
    let cfg = RecConfig {
        epochs: 400,
        batch_size: 10,
        ..RecConfig::default()
    };
    let train: Vec<usize> = (0..10).collect();
    let model = train_reference_model(&records, &train, &vocab, w.onto(), Init::Random { dim: 16, seed: 1 }, &cfg).unwrap();
    let s = score_admissions(&model, &records, &vocab, &all_admissions(&records));
    let j = point_metrics(&s, &DdiMatrix::new(vocab.len())).unwrap().jaccard;
    assert!(j > 0.9, "training jaccard {j}");
}

#[test]
fn perfect_and_empty_models() {
    let w = world();
    let sel = all_admissions(&w.records);
    let oracle = |a: &Admission| w.vocab.multi_hot(&a.medications);
    let s = score_admissions(&oracle, &w.records, &w.vocab, &sel);
    let m = bootstrap(&s, &w.ddi, 10, 0).unwrap();
    assert_eq!((m.point.jaccard, m.point.f1), (1.0, 1.0));
    assert_eq!((m.jaccard.mean, m.jaccard.std), (1.0, 0.0));
    let truth = ddi_score(s.truth.iter().flatten().map(|v| v.as_slice()), &w.ddi).unwrap();
    assert_eq!(m.point.ddi, Some(truth));
    assert!((truth - 0.078).abs() < 0.005, "ground-truth ddi {truth}");

    let empty = |_: &Admission| vec![false; w.vocab.len()];
    let s = score_admissions(&empty, &w.records, &w.vocab, &sel);
    let m = bootstrap(&s, &w.ddi, 10, 0).unwrap();
    assert_eq!((m.point.jaccard, m.point.f1, m.point.avg_drugs), (0.0, 0.0, 0.0));
    assert!(m.point.empty_prediction && m.ddi.is_none());
    let row = ReportRow {
        model: "empty".into(),
        set: EvalSet::Full,
        init: "none".into(),
        summary: Some(m),
    };
    assert!(format_report(&[row]).ends_with("0.0000±0.0000\t0.0000±0.0000\tn/a\t0.0000±0.0000\n"));
}

fn hot(n: usize, bits: u32) -> Vec<bool> {
    (0..n).map(|i| bits >> i & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_deterministic_and_partitions_patients(seed in any::<u64>(), tail in 0.05f64..0.5) {
        let w = world();
        let cfg = SplitConfig { tail_percentage: tail, rng_seed: seed, ..SplitConfig::default() };
        let a = split_dataset(&w.records, &w.medication, &cfg).unwrap();
        let b = split_dataset(&w.records, &w.medication, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).chain(&a.validation).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..w.records.len()).collect::<Vec<_>>());
        for &(p, t) in &a.few_shot {
            prop_assert!(a.test.contains(&p));
            let tails = w.records[p].admissions[t].medications.iter().filter(|m| a.tail_meds.contains(m)).count();
            prop_assert!(tails >= cfg.min_tail_meds);
        }
    }
}

proptest! {
    #[test]
    fn jaccard_and_f1_ignore_vocabulary_order(
        n in 1usize..10,
        adm in prop::collection::vec((1u32..1024, 0u32..1024), 1..6),
        perm_seed in any::<u64>(),
    ) {
        let mask = (1u32 << n) - 1;
        let adm: Vec<(u32, u32)> = adm.into_iter().map(|(t, p)| (t & mask, p & mask)).filter(|&(t, _)| t != 0).collect();
        prop_assume!(!adm.is_empty());
        let truth = vec![adm.iter().map(|&(t, _)| hot(n, t)).collect::<Vec<_>>()];
        let pred = vec![adm.iter().map(|&(_, p)| hot(n, p)).collect::<Vec<_>>()];
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(perm_seed));
        let permute = |x: &Vec<Vec<Vec<bool>>>| -> Vec<Vec<Vec<bool>>> {
            x.iter().map(|p| p.iter().map(|v| perm.iter().map(|&i| v[i]).collect()).collect()).collect()
        };
        let (pt, pp) = (permute(&truth), permute(&pred));
        prop_assert!((jaccard(&truth, &pred).unwrap() - jaccard(&pt, &pp).unwrap()).abs() < 1e-12);
        let (a, b) = (precision_recall_f1(&truth, &pred).unwrap(), precision_recall_f1(&pt, &pp).unwrap());
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
    }

    /// Counting ordered pairs over both triangles gives the same ratio as
    /// counting unordered pairs over the upper triangle.
    #[test]
    fn ddi_rate_is_invariant_under_symmetrization(
        n in 2usize..10,
        pairs in prop::collection::vec((0usize..10, 0usize..10), 0..20),
        preds in prop::collection::vec(0u32..1024, 1..6),
    ) {
        let mut d = DdiMatrix::new(n);
        for &(a, b) in &pairs {
            // only the upper triangle is ever given
            let (a, b) = (a % n, b % n);
            d.set(a.min(b), a.max(b));
        }
        let preds: Vec<Vec<bool>> = preds.iter().map(|&p| hot(n, p & ((1 << n) - 1))).collect();
        let (mut hits, mut total) = (0usize, 0usize);
        for p in &preds {
            for a in 0..n {
                for b in 0..n {
                    if a != b && p[a] && p[b] {
                        total += 1;
                        hits += d.get(a, b) as usize;
                    }
                }
            }
        }
        let got = ddi_score(preds.iter().map(|v| v.as_slice()), &d);
        if total == 0 {
            prop_assert!(got.is_err());
        } else {
            prop_assert!((got.unwrap() - hits as f64 / total as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn few_shot_set_is_stable_across_reruns() {
    let w = world();
    let cfg = SplitConfig::default();
    let a = split_dataset(&w.records, &w.medication, &cfg).unwrap();
    let b = split_dataset(&w.records, &w.medication, &cfg).unwrap();
    assert_eq!(a.few_shot, b.few_shot);
    assert!(!a.few_shot.is_empty());
}
