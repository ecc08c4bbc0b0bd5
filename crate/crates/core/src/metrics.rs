//! Set-prediction metrics over multi-hot medication vectors.
//!
//! Per-admission scores are averaged over a patient's admissions, then over
//! patients. The DDI rate pools medication pairs over all admissions given.

use crate::error::{Error, Result};

/// Symmetric 0/1 interaction matrix over the medication vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct DdiMatrix {
    n: usize,
    cells: Vec<bool>,
}

impl DdiMatrix {
    pub fn new(n: usize) -> Self {
        DdiMatrix {
            n,
            cells: vec![false; n * n],
        }
    }

    /// Marks `(a, b)` and `(b, a)`; self-pairs are ignored.
    pub fn set(&mut self, a: usize, b: usize) {
        if a != b {
            self.cells[a * self.n + b] = true;
            self.cells[b * self.n + a] = true;
        }
    }

    pub fn get(&self, a: usize, b: usize) -> bool {
        self.cells[a * self.n + b]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pair_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count() / 2
    }

    /// Interacting pairs `(a, b)` with `a < b`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |a| ((a + 1)..self.n).filter(move |&b| self.get(a, b)).map(move |b| (a, b)))
    }
}

fn check_len(truth: &[bool], pred: &[bool]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

fn counts(truth: &[bool], pred: &[bool]) -> (usize, usize, usize) {
    let mut inter = 0;
    let (mut t, mut p) = (0, 0);
    for (&a, &b) in truth.iter().zip(pred) {
        t += a as usize;
        p += b as usize;
        inter += (a && b) as usize;
    }
    (inter, t, p)
}

/// `|truth ∩ pred| / |truth ∪ pred|` for one admission.
pub fn admission_jaccard(truth: &[bool], pred: &[bool]) -> Result<f64> {
    check_len(truth, pred)?;
    let (inter, t, p) = counts(truth, pred);
    let union = t + p - inter;
    if union == 0 {
        return Err(Error::UndefinedMetric("jaccard of two empty sets"));
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some admission had an empty prediction (precision taken as 0).
    pub empty_prediction: bool,
    /// Some admission had an empty ground truth (recall taken as 0).
    pub empty_truth: bool,
}

pub fn admission_prf(truth: &[bool], pred: &[bool]) -> Result<Prf> {
    check_len(truth, pred)?;
    let (inter, t, p) = counts(truth, pred);
    // inter is 0 whenever p or t is, so max(1) yields the 0 convention
    let precision = inter as f64 / p.max(1) as f64;
    let recall = inter as f64 / t.max(1) as f64;
    let f1 = 2.0 * inter as f64 / (p + t).max(1) as f64;
    Ok(Prf {
        precision,
        recall,
        f1,
        empty_prediction: p == 0,
        empty_truth: t == 0,
    })
}

fn check_nesting<T>(truth: &[Vec<T>], pred: &[Vec<T>]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    for (t, p) in truth.iter().zip(pred) {
        if t.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                actual: p.len(),
            });
        }
    }
    if truth.iter().all(|t| t.is_empty()) {
        return Err(Error::UndefinedMetric("no admissions"));
    }
    Ok(())
}

/// Mean over patients of the mean per-admission Jaccard. `truth[n][t]` is the
/// multi-hot label of patient `n`'s admission `t`. Patients without
/// admissions are ignored.
pub fn jaccard(truth: &[Vec<Vec<bool>>], pred: &[Vec<Vec<bool>>]) -> Result<f64> {
    check_nesting(truth, pred)?;
    let mut total = 0.0;
    let mut patients = 0;
    for (ts, ps) in truth.iter().zip(pred) {
        if ts.is_empty() {
            continue;
        }
        let mut s = 0.0;
        for (t, p) in ts.iter().zip(ps) {
            s += admission_jaccard(t, p)?;
        }
        total += s / ts.len() as f64;
        patients += 1;
    }
    Ok(total / patients as f64)
}

/// Precision, recall and F1 averaged the same way as [`jaccard`].
pub fn precision_recall_f1(truth: &[Vec<Vec<bool>>], pred: &[Vec<Vec<bool>>]) -> Result<Prf> {
    check_nesting(truth, pred)?;
    let mut acc = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        empty_prediction: false,
        empty_truth: false,
    };
    let mut patients = 0;
    for (ts, ps) in truth.iter().zip(pred) {
        if ts.is_empty() {
            continue;
        }
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for (t, q) in ts.iter().zip(ps) {
            let s = admission_prf(t, q)?;
            p += s.precision;
            r += s.recall;
            f += s.f1;
            acc.empty_prediction |= s.empty_prediction;
            acc.empty_truth |= s.empty_truth;
        }
        let n = ts.len() as f64;
        acc.precision += p / n;
        acc.recall += r / n;
        acc.f1 += f / n;
        patients += 1;
    }
    let n = patients as f64;
    acc.precision /= n;
    acc.recall /= n;
    acc.f1 /= n;
    Ok(acc)
}

/// Fraction of unordered predicted medication pairs that interact, pooled
/// over admissions. Admissions with fewer than two predictions add nothing.
pub fn ddi_score<'a>(preds: impl IntoIterator<Item = &'a [bool]>, ddi: &DdiMatrix) -> Result<f64> {
    let mut hits = 0usize;
    let mut pairs = 0usize;
    for pred in preds {
        if pred.len() != ddi.len() {
            return Err(Error::DimensionMismatch {
                expected: ddi.len(),
                actual: pred.len(),
            });
        }
        let on: Vec<usize> = pred.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        for (i, &a) in on.iter().enumerate() {
            for &b in &on[i + 1..] {
                pairs += 1;
                hits += ddi.get(a, b) as usize;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::UndefinedMetric("no admission with two or more predictions"));
    }
    Ok(hits as f64 / pairs as f64)
}
