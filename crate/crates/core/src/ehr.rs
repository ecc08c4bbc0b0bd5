//! Patient records, their text format, synthetic generation, DDI files, and
//! the patient-level split with its few-shot test subset.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axioms::{expand_indications, IndicationAtom};
use crate::error::{Error, Result};
use crate::metrics::DdiMatrix;
use crate::ontology::{OntologyDag, OntologyKind};

/// One visit. Codes are node indices into the respective ontology, sorted
/// and unique.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Admission {
    pub diagnoses: Vec<usize>,
    pub procedures: Vec<usize>,
    pub medications: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatientRecord {
    pub patient_id: String,
    /// Chronological.
    pub admissions: Vec<Admission>,
}

/// The three ontologies records are validated against.
#[derive(Clone, Copy)]
pub struct Ontologies<'a> {
    pub diagnosis: &'a OntologyDag,
    pub procedure: &'a OntologyDag,
    pub medication: &'a OntologyDag,
}

impl<'a> Ontologies<'a> {
    pub fn get(&self, kind: OntologyKind) -> &'a OntologyDag {
        match kind {
            OntologyKind::Diagnosis => self.diagnosis,
            OntologyKind::Procedure => self.procedure,
            OntologyKind::Medication => self.medication,
        }
    }
}

fn parse_codes(
    field: &str,
    dag: &OntologyDag,
    path: &Path,
    lineno: usize,
) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for code in field.split(',').filter(|c| !c.is_empty()) {
        let idx = dag.lookup(code).ok_or_else(|| Error::UnknownCode {
            kind: dag.kind().to_string(),
            code: code.to_string(),
        })?;
        if !out.insert(idx) {
            return Err(Error::parse(path, lineno, format!("duplicate code `{code}`")));
        }
    }
    Ok(out.into_iter().collect())
}

fn parse_admission(
    text: &str,
    expected: usize,
    onto: Ontologies<'_>,
    path: &Path,
    lineno: usize,
) -> Result<Admission> {
    let bad = |msg: String| Error::parse(path, lineno, msg);
    let (label, body) = text
        .split_once(':')
        .ok_or_else(|| bad(format!("admission `{text}` lacks `admN:` label")))?;
    if label.trim() != format!("adm{expected}") {
        return Err(bad(format!("expected `adm{expected}`, found `{}`", label.trim())));
    }
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for tok in body.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed field `{tok}`")))?;
        if !matches!(key, "D" | "P" | "M") || fields.insert(key, val).is_some() {
            return Err(bad(format!("unexpected or repeated field `{key}`")));
        }
    }
    let get = |k: &str| fields.get(k).copied().unwrap_or("");
    let adm = Admission {
        diagnoses: parse_codes(get("D"), onto.diagnosis, path, lineno)?,
        procedures: parse_codes(get("P"), onto.procedure, path, lineno)?,
        medications: parse_codes(get("M"), onto.medication, path, lineno)?,
    };
    if adm.medications.is_empty() {
        return Err(bad(format!("adm{expected} has no medications")));
    }
    if adm.diagnoses.is_empty() {
        return Err(bad(format!("adm{expected} has no diagnoses")));
    }
    Ok(adm)
}

/// Reads `patient_id | adm1: D=.. P=.. M=.. | adm2: ...` lines.
pub fn load_ehr(path: impl AsRef<Path>, onto: Ontologies<'_>) -> Result<Vec<PatientRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('|').map(str::trim);
        let patient_id = parts.next().unwrap_or_default().to_string();
        if patient_id.is_empty() || patient_id.contains(char::is_whitespace) {
            return Err(Error::parse(path, lineno, "missing or malformed patient id"));
        }
        if !seen.insert(patient_id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate patient `{patient_id}`")));
        }
        let admissions = parts
            .enumerate()
            .map(|(k, a)| parse_admission(a, k + 1, onto, path, lineno))
            .collect::<Result<Vec<_>>>()?;
        if admissions.is_empty() {
            return Err(Error::parse(path, lineno, "patient has no admissions"));
        }
        out.push(PatientRecord {
            patient_id,
            admissions,
        });
    }
    Ok(out)
}

pub fn format_ehr(records: &[PatientRecord], onto: Ontologies<'_>) -> String {
    let mut s = String::new();
    let join = |codes: &[usize], dag: &OntologyDag| {
        codes.iter().map(|&c| dag.id(c)).collect::<Vec<_>>().join(",")
    };
    for r in records {
        s.push_str(&r.patient_id);
        for (k, a) in r.admissions.iter().enumerate() {
            write!(
                s,
                " | adm{}: D={} P={} M={}",
                k + 1,
                join(&a.diagnoses, onto.diagnosis),
                join(&a.procedures, onto.procedure),
                join(&a.medications, onto.medication)
            )
            .unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn save_ehr(path: impl AsRef<Path>, records: &[PatientRecord], onto: Ontologies<'_>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_ehr(records, onto)).map_err(|e| Error::io(path, e))
}

/// Medications that occur in a dataset, in ontology index order. Positions
/// in this list are the multi-hot coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MedVocab {
    pub meds: Vec<usize>,
    position: HashMap<usize, usize>,
}

impl MedVocab {
    pub fn new(meds: impl IntoIterator<Item = usize>) -> Self {
        let meds: Vec<usize> = meds.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let position = meds.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        MedVocab { meds, position }
    }

    pub fn from_records(records: &[PatientRecord]) -> Self {
        Self::new(
            records
                .iter()
                .flat_map(|r| &r.admissions)
                .flat_map(|a| a.medications.iter().copied()),
        )
    }

    pub fn len(&self) -> usize {
        self.meds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meds.is_empty()
    }

    pub fn position(&self, med: usize) -> Option<usize> {
        self.position.get(&med).copied()
    }

    /// Multi-hot vector of `meds`; codes outside the vocabulary are dropped.
    pub fn multi_hot(&self, meds: &[usize]) -> Vec<bool> {
        let mut v = vec![false; self.len()];
        for &m in meds {
            if let Some(i) = self.position(m) {
                v[i] = true;
            }
        }
        v
    }
}

/// Reads `med_id<TAB>med_id` interacting pairs. Codes unknown to the
/// medication ontology are errors; known codes outside `vocab` are skipped.
pub fn load_ddi(path: impl AsRef<Path>, med_dag: &OntologyDag, vocab: &MedVocab) -> Result<DdiMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ddi = DdiMatrix::new(vocab.len());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .filter(|(_, b)| !b.contains('\t'))
            .ok_or_else(|| Error::parse(path, i + 1, "expected `med_id<TAB>med_id`"))?;
        let lookup = |c: &str| {
            med_dag.lookup(c).ok_or_else(|| Error::UnknownCode {
                kind: "medication".into(),
                code: c.to_string(),
            })
        };
        let (a, b) = (lookup(a)?, lookup(b)?);
        if let (Some(a), Some(b)) = (vocab.position(a), vocab.position(b)) {
            ddi.set(a, b);
        }
    }
    Ok(ddi)
}

pub fn save_ddi(path: impl AsRef<Path>, ddi: &DdiMatrix, vocab: &MedVocab, med_dag: &OntologyDag) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for (a, b) in ddi.pairs() {
        writeln!(s, "{}\t{}", med_dag.id(vocab.meds[a]), med_dag.id(vocab.meds[b])).unwrap();
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Counts written alongside a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EhrManifest {
    pub patients: usize,
    pub admissions: usize,
    pub prescriptions: usize,
    pub distinct_medications: usize,
    pub distinct_diagnoses: usize,
    pub distinct_procedures: usize,
    pub zipf_s: f64,
    pub rng_seed: u64,
}

impl EhrManifest {
    pub fn of(records: &[PatientRecord], zipf_s: f64, rng_seed: u64) -> Self {
        let adms = || records.iter().flat_map(|r| &r.admissions);
        let distinct = |f: fn(&Admission) -> &Vec<usize>| {
            adms().flat_map(|a| f(a).iter()).collect::<HashSet<_>>().len()
        };
        EhrManifest {
            patients: records.len(),
            admissions: adms().count(),
            prescriptions: adms().map(|a| a.medications.len()).sum(),
            distinct_medications: distinct(|a| &a.medications),
            distinct_diagnoses: distinct(|a| &a.diagnoses),
            distinct_procedures: distinct(|a| &a.procedures),
            zipf_s,
            rng_seed,
        }
    }
}

/// Knobs of the synthetic EHR generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEhrConfig {
    pub patients: usize,
    /// Size of the prescribed medication vocabulary.
    pub medications: usize,
    /// Zipf exponent for code popularity; 0 is uniform.
    pub zipf_s: f64,
    /// Share of admissions driven by a condition (a medication group and
    /// its indicated diagnoses) rather than by background draws only.
    pub indication_rate: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticEhrConfig {
    fn default() -> Self {
        SyntheticEhrConfig {
            patients: 1000,
            medications: 120,
            zipf_s: 1.1,
            indication_rate: 0.85,
            rng_seed: 0,
        }
    }
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-s)).collect()
}

/// Picks the prescribed medication vocabulary: sibling groups of leaves (at
/// least two, at most [`MAX_GROUP`] per group, in random order) until `count` is reached,
/// topped up with single leaves if the groups run out.
pub fn pick_medications(med_dag: &OntologyDag, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut by_parent: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for leaf in med_dag.leaves() {
        if let Some(p) = med_dag.parent(leaf) {
            by_parent.entry(p).or_default().push(leaf);
        }
    }
    let (mut groups, singles): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        by_parent.into_values().partition(|g| g.len() >= 2);
    groups.shuffle(rng);
    let mut rest: Vec<usize> = singles.into_iter().flatten().collect();
    rest.shuffle(rng);
    let mut out = Vec::with_capacity(count);
    for g in groups {
        if out.len() >= count {
            break;
        }
        let take = g.len().min(MAX_GROUP).min(count - out.len());
        out.extend_from_slice(&g[..take]);
    }
    let short = count.saturating_sub(out.len());
    out.extend(rest.into_iter().take(short));
    out.sort_unstable();
    out
}

/// Indication pairs where medications sharing a parent in the medication
/// ontology treat the same region of the diagnosis ontology. Each group gets
/// its own non-leaf diagnosis node, preferring subtrees of 3 to 20 leaves
/// that do not overlap earlier picks; each member is indicated for that node
/// or one of its children.
pub fn synthetic_indications(
    med_dag: &OntologyDag,
    diag_dag: &OntologyDag,
    meds: &[usize],
    seed: u64,
) -> Vec<IndicationAtom> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaf_count = |n: usize| diag_dag.descendants(n).iter().filter(|&&c| diag_dag.is_leaf(c)).count();
    let mut internal: Vec<(usize, usize)> = (0..diag_dag.len())
        .filter(|&n| n != diag_dag.root() && !diag_dag.is_leaf(n))
        .map(|n| (n, leaf_count(n)))
        .collect();
    internal.shuffle(&mut rng);
    // moderate subtrees first, the rest as fallback
    internal.sort_by_key(|&(_, c)| !(3..=20).contains(&c));
    let mut taken: HashSet<usize> = HashSet::new();
    let mut pick = || -> usize {
        let free = internal.iter().position(|&(n, _)| {
            !taken.contains(&n) && !diag_dag.ancestors(n).chain(diag_dag.parent(n)).any(|a| taken.contains(&a))
                && !diag_dag.descendants(n).iter().any(|d| taken.contains(d))
        });
        let n = match free {
            Some(i) => internal[i].0,
            None if !internal.is_empty() => internal[rng.gen_range(0..internal.len())].0,
            None => diag_dag.leaves()[rng.gen_range(0..diag_dag.leaves().len())],
        };
        taken.insert(n);
        n
    };
    let groups = medication_groups(med_dag, meds);
    let bases: Vec<usize> = groups.iter().map(|_| pick()).collect();
    let mut out = BTreeSet::new();
    for (members, base) in groups.into_iter().zip(bases) {
        for m in members {
            let kids = diag_dag.children(base);
            let target = if !kids.is_empty() && rng.gen_bool(0.5) {
                kids[rng.gen_range(0..kids.len())]
            } else {
                base
            };
            out.insert((m, target));
        }
    }
    out.into_iter().collect()
}

/// Chance that a condition-driven admission receives a given medication of
/// the condition's group.
pub const REGIMEN_RATE: f64 = 0.8;

/// Largest medication group [`pick_medications`] keeps.
pub const MAX_GROUP: usize = 5;

/// Medications grouped by their parent in the medication ontology. Groups
/// are the unit of therapeutic similarity in the synthetic world.
pub fn medication_groups(med_dag: &OntologyDag, meds: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &m in meds {
        groups.entry(med_dag.parent(m).unwrap_or(m)).or_default().push(m);
    }
    groups.into_values().collect()
}

/// Generates patients from Zipf-ranked conditions. A condition is a
/// medication group together with the diagnosis leaves its members are
/// (expanded-)indicated for; an admission driven by a condition draws one of
/// those diagnoses and each of the group's medications with probability
/// [`REGIMEN_RATE`], so rare
/// medications co-occur in rare conditions. Background diagnoses,
/// procedures and medications follow separate Zipf laws.
pub fn gen_synthetic_ehr(
    onto: Ontologies<'_>,
    meds: &[usize],
    indications: &[IndicationAtom],
    cfg: &SyntheticEhrConfig,
) -> Result<Vec<PatientRecord>> {
    if meds.is_empty() {
        return Err(Error::Config("synthetic EHR needs at least one medication".into()));
    }
    if !(0.0..=1.0).contains(&cfg.indication_rate) {
        return Err(Error::Config("indication rate must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let ranked = |mut codes: Vec<usize>, rng: &mut ChaCha8Rng| {
        codes.shuffle(rng);
        let w = WeightedIndex::new(zipf_weights(codes.len(), cfg.zipf_s)).unwrap();
        (codes, w)
    };
    let (diag_codes, diag_w) = ranked(onto.diagnosis.leaves(), &mut rng);
    let (proc_codes, proc_w) = ranked(onto.procedure.leaves(), &mut rng);

    let mut indicated: HashMap<usize, Vec<usize>> = HashMap::new();
    for (m, d) in expand_indications(indications, onto.diagnosis)? {
        if onto.diagnosis.is_leaf(d) {
            indicated.entry(m).or_default().push(d);
        }
    }
    let mut groups = medication_groups(onto.medication, meds);
    groups.shuffle(&mut rng);
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    // medication popularity ranks follow condition ranks, then rank in group
    let med_codes: Vec<usize> = groups.iter().flatten().copied().collect();
    let med_w = WeightedIndex::new(zipf_weights(med_codes.len(), cfg.zipf_s)).unwrap();
    let group_w = WeightedIndex::new(zipf_weights(groups.len(), cfg.zipf_s)).unwrap();
    let regions: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let r: BTreeSet<usize> = g.iter().flat_map(|m| indicated.get(m).into_iter().flatten().copied()).collect();
            r.into_iter().collect()
        })
        .collect();

    let draw_distinct = |codes: &[usize], w: &WeightedIndex<f64>, k: usize, rng: &mut ChaCha8Rng| {
        let k = k.min(codes.len());
        let mut out = BTreeSet::new();
        let mut tries = 0;
        while out.len() < k && tries < 50 * k {
            out.insert(codes[w.sample(rng)]);
            tries += 1;
        }
        out
    };

    let width = cfg.patients.max(1).to_string().len();
    let mut records = Vec::with_capacity(cfg.patients);
    for p in 0..cfg.patients {
        let n_adm = 1 + (0..3).take_while(|_| rng.gen_bool(0.4)).count();
        let mut admissions = Vec::with_capacity(n_adm);
        for _ in 0..n_adm {
            let mut diagnoses = BTreeSet::new();
            let mut medications = BTreeSet::new();
            if rng.gen_bool(cfg.indication_rate) {
                let g = group_w.sample(&mut rng);
                if let Some(&d) = regions[g].choose(&mut rng) {
                    diagnoses.insert(d);
                }
                medications.extend(groups[g].iter().copied().filter(|_| rng.gen_bool(REGIMEN_RATE)));
                if medications.is_empty() {
                    medications.insert(groups[g][rng.gen_range(0..groups[g].len())]);
                }
            }
            let n_diag = rng.gen_range(usize::from(diagnoses.is_empty())..=3);
            diagnoses.extend(draw_distinct(&diag_codes, &diag_w, n_diag, &mut rng));
            let n_proc = rng.gen_range(0..=2);
            let procedures = draw_distinct(&proc_codes, &proc_w, n_proc, &mut rng);
            let n_bg = rng.gen_range(usize::from(medications.is_empty())..=2);
            medications.extend(draw_distinct(&med_codes, &med_w, n_bg, &mut rng));

            admissions.push(Admission {
                diagnoses: diagnoses.into_iter().collect(),
                procedures: procedures.into_iter().collect(),
                medications: medications.into_iter().collect(),
            });
        }
        records.push(PatientRecord {
            patient_id: format!("P{:0width$}", p, width = width),
            admissions,
        });
    }
    Ok(records)
}

/// Builds a DDI matrix whose pooled rate over the ground-truth prescriptions
/// of `records` lands at `target` (from below), by marking co-prescribed
/// pairs in random order.
pub fn calibrated_ddi(records: &[PatientRecord], vocab: &MedVocab, target: f64, seed: u64) -> DdiMatrix {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut total = 0usize;
    for a in records.iter().flat_map(|r| &r.admissions) {
        let pos: Vec<usize> = a.medications.iter().filter_map(|&m| vocab.position(m)).collect();
        for (i, &x) in pos.iter().enumerate() {
            for &y in &pos[i + 1..] {
                *counts.entry((x.min(y), x.max(y))).or_default() += 1;
                total += 1;
            }
        }
    }
    let mut pairs: Vec<((usize, usize), usize)> = counts.into_iter().collect();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let budget = (target * total as f64).round() as usize;
    let mut ddi = DdiMatrix::new(vocab.len());
    let mut used = 0;
    for ((a, b), c) in pairs {
        if used + c <= budget {
            ddi.set(a, b);
            used += c;
        }
        if used == budget {
            break;
        }
    }
    ddi
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Train : test : validation patient ratio.
    pub ratio: [usize; 3],
    /// Share of the medication vocabulary (lowest frequency first) flagged
    /// as few-shot.
    pub tail_percentage: f64,
    /// Test admissions with at least this many few-shot medications form the
    /// few-shot set.
    pub min_tail_meds: usize,
    pub rng_seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratio: [4, 1, 1],
            tail_percentage: 0.3,
            min_tail_meds: 2,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    /// Patient indices into the record list.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
    /// Medication node indices flagged few-shot.
    pub tail_meds: BTreeSet<usize>,
    /// `(patient, admission)` indices of few-shot test admissions.
    pub few_shot: Vec<(usize, usize)>,
    pub tail_percentage: f64,
}

/// Medication node indices in ascending prescription frequency, ties broken
/// by code.
pub fn medications_by_frequency(records: &[PatientRecord], med_dag: &OntologyDag) -> Vec<(usize, usize)> {
    let mut freq: HashMap<usize, usize> = HashMap::new();
    for a in records.iter().flat_map(|r| &r.admissions) {
        for &m in &a.medications {
            *freq.entry(m).or_default() += 1;
        }
    }
    let mut order: Vec<(usize, usize)> = freq.into_iter().collect();
    order.sort_by(|&(ma, fa), &(mb, fb)| fa.cmp(&fb).then_with(|| med_dag.id(ma).cmp(med_dag.id(mb))));
    order
}

pub fn tail_medications(records: &[PatientRecord], med_dag: &OntologyDag, tail_percentage: f64) -> BTreeSet<usize> {
    let order = medications_by_frequency(records, med_dag);
    let k = (tail_percentage * order.len() as f64 + 1e-9).floor() as usize;
    order.into_iter().take(k).map(|(m, _)| m).collect()
}

/// Patient-level split plus the few-shot subset of the test partition.
pub fn split_dataset(records: &[PatientRecord], med_dag: &OntologyDag, cfg: &SplitConfig) -> Result<SplitSpec> {
    if records.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    if cfg.ratio.iter().sum::<usize>() == 0 || !(0.0..=1.0).contains(&cfg.tail_percentage) {
        return Err(Error::Config("invalid split ratio or tail percentage".into()));
    }
    let n = records.len();
    let total: usize = cfg.ratio.iter().sum();
    let n_test = (n * cfg.ratio[1] + total / 2) / total;
    let n_val = (n * cfg.ratio[2] + total / 2) / total;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.rng_seed));
    let mut test = order[..n_test].to_vec();
    let mut validation = order[n_test..n_test + n_val].to_vec();
    let mut train = order[n_test + n_val..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    validation.sort_unstable();

    let tail_meds = tail_medications(records, med_dag, cfg.tail_percentage);
    let mut few_shot = Vec::new();
    for &p in &test {
        for (t, a) in records[p].admissions.iter().enumerate() {
            let hits = a.medications.iter().filter(|m| tail_meds.contains(m)).count();
            if hits >= cfg.min_tail_meds.max(1) {
                few_shot.push((p, t));
            }
        }
    }
    Ok(SplitSpec {
        train,
        test,
        validation,
        tail_meds,
        few_shot,
        tail_percentage: cfg.tail_percentage,
    })
}
