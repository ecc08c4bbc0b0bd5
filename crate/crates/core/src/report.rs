//! Bootstrap evaluation of a recommender and the TSV metrics report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ehr::{MedVocab, PatientRecord};
use crate::error::{Error, Result};
use crate::metrics::{ddi_score, jaccard, precision_recall_f1, DdiMatrix};
use crate::recommender::Recommender;

pub const REPORT_HEADER: &str = "model\tinit\tjaccard\tf1\tddi\tavg_drugs";

/// Metrics of one evaluation pass. `ddi` is `None` when no admission had two
/// or more predictions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMetrics {
    pub jaccard: f64,
    pub f1: f64,
    pub ddi: Option<f64>,
    pub avg_drugs: f64,
    pub empty_prediction: bool,
}

/// Predictions grouped per patient, ready for the metric functions.
pub struct Scored {
    pub truth: Vec<Vec<Vec<bool>>>,
    pub pred: Vec<Vec<Vec<bool>>>,
}

/// Runs `model` on the selected `(patient, admission)` pairs, grouped by
/// patient in first-appearance order.
pub fn score_admissions(
    model: &impl Recommender,
    records: &[PatientRecord],
    vocab: &MedVocab,
    selection: &[(usize, usize)],
) -> Scored {
    let mut groups: BTreeMap<usize, (Vec<Vec<bool>>, Vec<Vec<bool>>)> = BTreeMap::new();
    for &(p, t) in selection {
        let adm = &records[p].admissions[t];
        let e = groups.entry(p).or_default();
        e.0.push(vocab.multi_hot(&adm.medications));
        e.1.push(model.recommend(adm));
    }
    let (truth, pred) = groups.into_values().unzip();
    Scored { truth, pred }
}

pub fn point_metrics(s: &Scored, ddi: &DdiMatrix) -> Result<PointMetrics> {
    let prf = precision_recall_f1(&s.truth, &s.pred)?;
    let preds = s.pred.iter().flatten();
    let ddi = match ddi_score(preds.clone().map(|v| v.as_slice()), ddi) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    let n = preds.clone().count() as f64;
    let avg_drugs = preds.map(|v| v.iter().filter(|&&b| b).count()).sum::<usize>() as f64 / n;
    Ok(PointMetrics {
        jaccard: jaccard_or_zero(&s.truth, &s.pred)?,
        f1: prf.f1,
        ddi,
        avg_drugs,
        empty_prediction: prf.empty_prediction,
    })
}

/// Ground truth is never empty in loaded data, so an undefined Jaccard can
/// only stem from an empty truth and empty prediction; it counts as 0 here.
fn jaccard_or_zero(truth: &[Vec<Vec<bool>>], pred: &[Vec<Vec<bool>>]) -> Result<f64> {
    match jaccard(truth, pred) {
        Err(Error::UndefinedMetric("jaccard of two empty sets")) => Ok(0.0),
        r => r,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation; `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

/// Bootstrap summary of one evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    /// Metrics on the set itself, without resampling.
    pub point: PointMetrics,
    pub jaccard: MeanStd,
    pub f1: MeanStd,
    pub ddi: Option<MeanStd>,
    pub avg_drugs: MeanStd,
    pub admissions: usize,
}

/// Resamples patients with replacement `rounds` times.
pub fn bootstrap(s: &Scored, ddi: &DdiMatrix, rounds: usize, seed: u64) -> Result<MetricSummary> {
    if rounds == 0 {
        return Err(Error::Config("bootstrap rounds must be positive".into()));
    }
    let point = point_metrics(s, ddi)?;
    let n = s.truth.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut j, mut f, mut d, mut a) = (vec![], vec![], vec![], vec![]);
    for _ in 0..rounds {
        let pick: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let sample = Scored {
            truth: pick.iter().map(|&i| s.truth[i].clone()).collect(),
            pred: pick.iter().map(|&i| s.pred[i].clone()).collect(),
        };
        let m = point_metrics(&sample, ddi)?;
        j.push(m.jaccard);
        f.push(m.f1);
        d.extend(m.ddi);
        a.push(m.avg_drugs);
    }
    Ok(MetricSummary {
        point,
        jaccard: MeanStd::of(&j).unwrap(),
        f1: MeanStd::of(&f).unwrap(),
        ddi: MeanStd::of(&d),
        avg_drugs: MeanStd::of(&a).unwrap(),
        admissions: s.truth.iter().map(Vec::len).sum(),
    })
}

/// Which test subset a report row covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSet {
    Full,
    FewShot,
}

impl EvalSet {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSet::Full => "full",
            EvalSet::FewShot => "few_shot",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub set: EvalSet,
    pub init: String,
    /// `None` when the evaluation set is empty.
    pub summary: Option<MetricSummary>,
}

fn cell(m: Option<MeanStd>) -> String {
    match m {
        Some(m) => format!("{:.4}±{:.4}", m.mean, m.std),
        None => "n/a".into(),
    }
}

/// Header plus one line per row; the model column reads `model/set`.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        let m = r.summary.as_ref();
        writeln!(
            s,
            "{}/{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            r.set.as_str(),
            r.init,
            cell(m.map(|m| m.jaccard)),
            cell(m.map(|m| m.f1)),
            cell(m.and_then(|m| m.ddi)),
            cell(m.map(|m| m.avg_drugs)),
        )
        .unwrap();
    }
    s
}
