//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ontorec::checks::{
    checkpoint_rule, closure_oracle, crisp_soundness, grad_check_suite, metric_oracle, sampler_oracle, Fault,
};
use ontorec::ehr::SyntheticEhrConfig;
use ontorec::grounding::export_embeddings;
use ontorec::pipeline::{evaluate_inits, sparsity_sweep, synthetic_world, EvalConfig, SweepConfig, WorldConfig};
use ontorec::recommender::RecConfig;
use ontorec::report::format_report;
use ontorec::trainer::{train, TrainConfig};

type Outcome = Result<String, String>;

fn grad_kernel() -> Outcome {
    let mut details = Vec::new();
    for dim in [4, 8] {
        for seed in 0..3 {
            details.push(grad_check_suite(dim, seed, Fault::None).map_err(|e| e.to_string())?);
        }
    }
    Ok(format!("{} toy batches below 1e-4, e.g. {}", details.len(), details[details.len() - 1]))
}

fn trainability() -> Outcome {
    let corpus = common::toy_corpus(0);
    let cfg = common::toy_config(0);
    let a = train(&corpus, &cfg).map_err(|e| e.to_string())?;
    let b = train(&corpus, &cfg).map_err(|e| e.to_string())?;
    if a.logs != b.logs {
        return Err("two runs with one seed differ".into());
    }
    let mut reached = Vec::new();
    for k in 0..3 {
        match a.logs.iter().find(|l| l.ontology_sat[k] >= 0.95) {
            Some(l) => reached.push(l.epoch),
            None => {
                let best = a.logs.iter().map(|l| l.ontology_sat[k]).fold(0.0, f64::max);
                return Err(format!("ontology {k} peaked at {best:.4} in {} epochs", cfg.epochs));
            }
        }
    }
    Ok(format!("sat >= 0.95 first at epochs {reached:?} of {}; runs identical", cfg.epochs))
}

fn alignment() -> Outcome {
    let mut gaps = Vec::new();
    for seed in 0..5 {
        let (held, random) = common::alignment_signal(seed);
        gaps.push(held - random);
    }
    let shown: Vec<String> = gaps.iter().map(|g| format!("{g:.3}")).collect();
    if gaps.iter().all(|&g| g >= 0.2) {
        Ok(format!("held-out minus random per seed: {}", shown.join(", ")))
    } else {
        Err(format!("gap below 0.2: {}", shown.join(", ")))
    }
}

fn few_shot() -> Outcome {
    let cfg = SweepConfig::default();
    let (mut random, mut pretrained) = (0.0, 0.0);
    let mut sparser_wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let pts = sparsity_sweep(&cfg, seed).map_err(|e| e.to_string())?;
        let [p20, p30] = pts.as_slice() else {
            return Err(format!("seed {seed}: a few-shot set is empty"));
        };
        random += p20.random + p30.random;
        pretrained += p20.pretrained + p30.pretrained;
        if p20.gap() >= p30.gap() {
            sparser_wins += 1;
        }
        lines.push(format!("{:+.4}/{:+.4}", p20.gap(), p30.gap()));
    }
    let detail = format!(
        "mean jaccard pretrained {:.4} vs random {:.4}; gap 20%/30% per seed {}; sparser gap larger in {sparser_wins}/5",
        pretrained / 10.0,
        random / 10.0,
        lines.join(", ")
    );
    if pretrained >= random && sparser_wins >= 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Pretrain, export, evaluate and render the report into `dir`.
fn pipeline_once(dir: &std::path::Path) -> Result<(), String> {
    let world = synthetic_world(&WorldConfig {
        ehr: SyntheticEhrConfig {
            patients: 600,
            ..SyntheticEhrConfig::default()
        },
        rng_seed: 3,
        ..WorldConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        dim: 8,
        epochs: 3,
        rng_seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&world.corpus().map_err(|e| e.to_string())?, &cfg).map_err(|e| e.to_string())?;
    export_embeddings(&out.checkpoint, dir.join("embeddings.tsv")).map_err(|e| e.to_string())?;
    out.checkpoint.save(dir.join("checkpoint.bin")).map_err(|e| e.to_string())?;
    let eval = EvalConfig {
        recommender: RecConfig {
            epochs: 5,
            ..RecConfig::default()
        },
        rng_seed: 3,
        ..EvalConfig::default()
    };
    let rows = evaluate_inits(&world, &out.checkpoint.tables, &eval).map_err(|e| e.to_string())?;
    fs::write(dir.join("report.tsv"), format_report(&rows)).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        pipeline_once(d.path())?;
    }
    for name in ["embeddings.tsv", "checkpoint.bin", "report.tsv"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok("embeddings, checkpoint and report byte-identical".into())
}

fn core<T>(r: ontorec::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("logic kernel gradients", Some(Duration::from_secs(10)), grad_kernel),
        ("crisp-limit soundness", Some(Duration::from_secs(30)), || core(crisp_soundness(100, 0))),
        ("closure and sampler oracles", Some(Duration::from_secs(30)), || {
            let a = core(closure_oracle(100, 0))?;
            let b = core(sampler_oracle(100, 0))?;
            Ok(format!("{a}; {b}"))
        }),
        ("toy trainability", Some(Duration::from_secs(60)), trainability),
        ("alignment signal", Some(Duration::from_secs(60)), alignment),
        ("metric oracles", Some(Duration::from_secs(5)), || core(metric_oracle(1000, 0))),
        ("few-shot direction", Some(Duration::from_secs(600)), few_shot),
        ("checkpoint composition", None, || core(checkpoint_rule())),
        ("pipeline determinism", None, determinism),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let t = Instant::now();
        let outcome = run();
        let took = t.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if took > l => Err(format!("took {:.1}s, limit {}s", took.as_secs_f64(), l.as_secs())),
            (o, _) => o,
        };
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += outcome.is_err() as usize;
        println!("{verdict} {name} ({:.1}s): {detail}", took.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
