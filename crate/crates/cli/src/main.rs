//! `ontorec`: pretrain ontology embeddings, generate synthetic data, evaluate
//! embeddings as recommender initialization, and run the validation suites.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 data error, 3 training
//! divergence, 4 failed check.

mod manifest;
mod settings;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use ontorec::checks::{self, Fault};
use ontorec::ehr::{load_ddi, load_ehr, save_ddi, save_ehr, EhrManifest, MedVocab, Ontologies};
use ontorec::axioms::{load_indications, save_indications};
use ontorec::grounding::{export_embeddings, load_embeddings, ModelCheckpoint};
use ontorec::ontology::{load_ontology, OntologyDag, OntologyKind};
use ontorec::pipeline::{evaluate_inits, synthetic_world, World, WorldConfig};
use ontorec::report::format_report;
use ontorec::trainer::{align_epoch, train, Corpus, TrainState};

use manifest::{write_atomic, RunManifest};
use settings::Knobs;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Divergence(String),
    Check(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Check(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Divergence(m) | CliError::Check(m) => m,
        }
    }
}

impl From<ontorec::Error> for CliError {
    fn from(e: ontorec::Error) -> Self {
        use ontorec::Error as E;
        match e {
            E::Config(_) => CliError::Config(e.to_string()),
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "ontorec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain embeddings for the three ontologies and align them.
    Pretrain(PretrainArgs),
    /// Run only the alignment phase on an existing checkpoint.
    Align(AlignArgs),
    /// Write the embedding tables of a checkpoint as text.
    Export(ExportArgs),
    /// Generate synthetic ontologies, indications, EHR and DDI files.
    GenData(GenDataArgs),
    /// Compare random and pretrained initialization of the reference recommender.
    Eval(EvalArgs),
    /// Run the validation suites.
    Check(CheckArgs),
    /// Confirm that the inputs recorded in a run manifest are unchanged.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct OntologyPaths {
    #[arg(long)]
    diagnosis: PathBuf,
    #[arg(long)]
    procedure: PathBuf,
    #[arg(long)]
    medication: PathBuf,
}

impl OntologyPaths {
    fn load(&self, m: &mut RunManifest) -> Result<[OntologyDag; 3]> {
        let mut out = Vec::with_capacity(3);
        for (path, kind) in [&self.diagnosis, &self.procedure, &self.medication]
            .into_iter()
            .zip(OntologyKind::ALL)
        {
            out.push(load_ontology(path, kind)?);
            m.input(path)?;
        }
        Ok(out.try_into().expect("three ontologies"))
    }
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[command(flatten)]
    ontologies: OntologyPaths,
    /// `medication<TAB>diagnosis` indication pairs.
    #[arg(long)]
    indications: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML file of knob values; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    ontologies: OntologyPaths,
    #[arg(long)]
    indications: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    patients: usize,
    /// Prescribed medication vocabulary size.
    #[arg(long, default_value_t = 120)]
    medications: usize,
    #[arg(long, default_value_t = 1.1)]
    zipf_s: f64,
    /// Target pooled DDI rate of the ground-truth prescriptions.
    #[arg(long, default_value_t = 0.078)]
    ddi_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Pretrained embeddings in the text export format.
    #[arg(long)]
    embeddings: PathBuf,
    #[command(flatten)]
    ontologies: OntologyPaths,
    #[arg(long)]
    ehr: PathBuf,
    #[arg(long)]
    ddi: PathBuf,
    /// Report path (TSV).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Run only this suite.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(checks::SUITES))]
    suite: Option<String>,
    /// Corrupt the analytic gradient to confirm the gradient suite fails.
    #[arg(long, hide = true)]
    inject_gradient_fault: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// Runs a core writer through an atomic rename and records the output digest.
fn emit(
    m: &mut RunManifest,
    path: &Path,
    write: impl FnOnce(&Path) -> ontorec::Result<()>,
) -> Result<()> {
    write_atomic(path, |tmp| write(tmp).map_err(CliError::from))?;
    m.output(path)
}

fn emit_text(m: &mut RunManifest, path: &Path, text: &str) -> Result<()> {
    emit(m, path, |tmp| {
        fs::write(tmp, text).map_err(|e| ontorec::Error::Io {
            path: tmp.into(),
            source: e,
        })
    })
}

fn finish(mut m: RunManifest, started: Instant, path: &Path) -> Result<()> {
    m.wall_clock_secs = started.elapsed().as_secs_f64();
    m.save(path)
}

fn cmd_pretrain(a: &PretrainArgs) -> Result<()> {
    let started = Instant::now();
    let knobs = a.knobs.resolve(a.config.as_deref())?;
    let cfg = knobs.train_config()?;
    let mut m = RunManifest::new("pretrain", serde_json::to_value(&cfg).expect("config serializes"));
    m.seeds.insert("rng_seed".into(), cfg.rng_seed);

    let [d, p, med] = a.ontologies.load(&mut m)?;
    let pairs = load_indications(&a.indications, &med, &d)?;
    m.input(&a.indications)?;
    let corpus = Corpus::new(d, p, med, &pairs)?;

    let out = train(&corpus, &cfg)?;
    create_dir(&a.out_dir)?;
    let mut log = String::new();
    for l in &out.logs {
        writeln!(log, "{}", serde_json::to_string(l).expect("log serializes")).unwrap();
    }
    let ckpt = &out.checkpoint;
    emit(&mut m, &a.out_dir.join("checkpoint.bin"), |p| ckpt.save(p))?;
    emit(&mut m, &a.out_dir.join("embeddings.tsv"), |p| export_embeddings(ckpt, p))?;
    emit_text(&mut m, &a.out_dir.join("epochs.jsonl"), &log)?;
    let s = &ckpt.sat_scores;
    println!(
        "pretrained {} epochs: sat diagnosis {:.4} procedure {:.4} medication {:.4} indication {:.4} (tables from epochs {:?})",
        cfg.epochs, s.ontology[0], s.ontology[1], s.ontology[2], s.indication, ckpt.table_epochs
    );
    finish(m, started, &a.out_dir.join("manifest.json"))
}

fn cmd_align(a: &AlignArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt = ModelCheckpoint::load(&a.checkpoint)?;
    let mut knobs = a.knobs.resolve(a.config.as_deref())?;
    knobs.dim = knobs.dim.or(Some(ckpt.tables[0].dim));
    let cfg = knobs.train_config()?;
    let mut m = RunManifest::new("align", serde_json::to_value(&cfg).expect("config serializes"));
    m.seeds.insert("rng_seed".into(), cfg.rng_seed);
    m.input(&a.checkpoint)?;

    let [d, p, med] = a.ontologies.load(&mut m)?;
    let pairs = load_indications(&a.indications, &med, &d)?;
    m.input(&a.indications)?;
    let corpus = Corpus::new(d, p, med, &pairs)?;

    let mut state = TrainState::from_checkpoint(&corpus, &cfg, &ckpt)?;
    let mut best: Option<(f64, ModelCheckpoint)> = None;
    for _ in 0..cfg.epochs {
        let log = align_epoch(&mut state, &corpus, &cfg)?;
        if best.as_ref().is_none_or(|(s, _)| log.indication_sat > *s) {
            let mut snap = state.snapshot(Some(&log), &cfg);
            snap.sat_scores.ontology = ckpt.sat_scores.ontology;
            snap.table_epochs[OntologyKind::Procedure.index()] = ckpt.table_epochs[OntologyKind::Procedure.index()];
            best = Some((log.indication_sat, snap));
        }
    }
    let (sat, best) = best.expect("at least one epoch");
    create_dir(&a.out_dir)?;
    emit(&mut m, &a.out_dir.join("checkpoint.bin"), |p| best.save(p))?;
    emit(&mut m, &a.out_dir.join("embeddings.tsv"), |p| export_embeddings(&best, p))?;
    println!("aligned {} epochs: best indication sat {sat:.4} at epoch {}", cfg.epochs, best.epoch);
    finish(m, started, &a.out_dir.join("manifest.json"))
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt = ModelCheckpoint::load(&a.checkpoint)?;
    let config = serde_json::from_str(&ckpt.config).unwrap_or(serde_json::Value::Null);
    let mut m = RunManifest::new("export", config);
    m.input(&a.checkpoint)?;
    emit(&mut m, &a.out, |p| export_embeddings(&ckpt, p))?;
    finish(m, started, &manifest_beside(&a.out))
}

fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_owned();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let started = Instant::now();
    let d = WorldConfig::default();
    let cfg = WorldConfig {
        ehr: ontorec::ehr::SyntheticEhrConfig {
            patients: a.patients,
            medications: a.medications,
            zipf_s: a.zipf_s,
            ..d.ehr.clone()
        },
        ddi_rate: a.ddi_rate,
        rng_seed: a.seed,
        ..d
    };
    if a.patients == 0 || a.medications < 2 || a.zipf_s.is_nan() || a.zipf_s < 0.0 || !(0.0..=1.0).contains(&a.ddi_rate) {
        return Err(CliError::Config(
            "need patients > 0, medications >= 2, zipf-s >= 0 and ddi-rate in [0, 1]".into(),
        ));
    }
    if a.medications >= cfg.medication.nodes {
        return Err(CliError::Config(format!(
            "medications must be below the medication ontology size {}",
            cfg.medication.nodes
        )));
    }
    let w = synthetic_world(&cfg)?;
    let mut m = RunManifest::new("gen-data", serde_json::to_value(&cfg).expect("config serializes"));
    m.seeds.insert("rng_seed".into(), a.seed);
    create_dir(&a.out_dir)?;
    let dir = &a.out_dir;
    emit(&mut m, &dir.join("diagnosis.tsv"), |p| w.diagnosis.save(p))?;
    emit(&mut m, &dir.join("procedure.tsv"), |p| w.procedure.save(p))?;
    emit(&mut m, &dir.join("medication.tsv"), |p| w.medication.save(p))?;
    emit(&mut m, &dir.join("indications.tsv"), |p| {
        save_indications(p, &w.indications, &w.medication, &w.diagnosis)
    })?;
    emit(&mut m, &dir.join("ehr.txt"), |p| save_ehr(p, &w.records, w.onto()))?;
    emit(&mut m, &dir.join("ddi.tsv"), |p| save_ddi(p, &w.ddi, &w.vocab, &w.medication))?;
    let counts = EhrManifest::of(&w.records, a.zipf_s, a.seed);
    let json = serde_json::to_string_pretty(&counts).expect("manifest serializes") + "\n";
    emit_text(&mut m, &dir.join("ehr_manifest.json"), &json)?;
    println!(
        "generated {} patients, {} admissions, {} medications in use",
        counts.patients, counts.admissions, counts.distinct_medications
    );
    finish(m, started, &dir.join("manifest.json"))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let knobs = a.knobs.resolve(a.config.as_deref())?;
    let cfg = knobs.eval_config()?;
    let mut m = RunManifest::new("eval", serde_json::to_value(&cfg).expect("config serializes"));
    m.seeds.insert("rng_seed".into(), cfg.rng_seed);

    let [diagnosis, procedure, medication] = a.ontologies.load(&mut m)?;
    let onto = Ontologies {
        diagnosis: &diagnosis,
        procedure: &procedure,
        medication: &medication,
    };
    let records = load_ehr(&a.ehr, onto)?;
    m.input(&a.ehr)?;
    let vocab = MedVocab::from_records(&records);
    let ddi = load_ddi(&a.ddi, &medication, &vocab)?;
    m.input(&a.ddi)?;
    let tables = load_embeddings(&a.embeddings)?;
    m.input(&a.embeddings)?;
    if let Some(dim) = knobs.dim {
        if tables.iter().any(|t| t.dim != dim) {
            return Err(CliError::Data(format!(
                "{}: embeddings are not {dim}-dimensional",
                a.embeddings.display()
            )));
        }
    }

    let world = World {
        diagnosis,
        procedure,
        medication,
        indications: Vec::new(),
        records,
        vocab,
        ddi,
    };
    let rows = evaluate_inits(&world, &tables, &cfg)?;
    let report = format_report(&rows);
    emit_text(&mut m, &a.out, &report)?;
    print!("{report}");
    finish(m, started, &manifest_beside(&a.out))
}

fn cmd_check(a: &CheckArgs) -> Result<()> {
    let fault = if a.inject_gradient_fault {
        Fault::Gradient
    } else {
        Fault::None
    };
    let names: Vec<&str> = match &a.suite {
        Some(s) => vec![s.as_str()],
        None => checks::SUITES.to_vec(),
    };
    let mut failed = Vec::new();
    for name in names {
        let t = Instant::now();
        let r = checks::run_suite(name, fault).expect("suite names are validated by clap");
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<16} {:>6.2}s  {}", r.name, t.elapsed().as_secs_f64(), r.detail);
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("failed suites: {}", failed.join(", "))))
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let m = RunManifest::load(&a.manifest)?;
    let changed = m.changed_inputs();
    if changed.is_empty() {
        println!("{} inputs unchanged", m.inputs.len());
        Ok(())
    } else {
        Err(CliError::Data(format!("inputs changed since the run: {}", changed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Align(a) => cmd_align(a),
        Command::Export(a) => cmd_export(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Check(a) => cmd_check(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
