//! Tunable knobs shared by the commands. Each knob may come from a flag, a
//! TOML config file or the built-in default, in that order of precedence.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use ontorec::axioms::QuantifierMode;
use ontorec::ehr::SplitConfig;
use ontorec::logic::AggregationConfig;
use ontorec::optim::AdamConfig;
use ontorec::pipeline::EvalConfig;
use ontorec::recommender::RecConfig;
use ontorec::sampler::NegCap;
use ontorec::trainer::TrainConfig;

use crate::CliError;

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Knobs {
    /// Embedding dimension [default: 64]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Pretraining (or alignment) epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed nodes per axiom batch [default: 32]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Pretraining learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Exponent of the universal quantifier mean [default: 2]
    #[arg(long)]
    pub p_forall: Option<f64>,
    /// Exponent of the axiom aggregator [default: 2]
    #[arg(long)]
    pub p_sat: Option<f64>,
    /// Negatives per batch: `K` (K per positive edge), `abs:N` or `all` [default: 4]
    #[arg(long)]
    pub neg_cap: Option<String>,
    /// Master random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Few-shot tail as a percentage of the medication vocabulary [default: 30]
    #[arg(long)]
    pub tail_percentage: Option<f64>,
    /// Minimum few-shot medications for an admission to join the few-shot set [default: 2]
    #[arg(long)]
    pub min_tail_meds: Option<usize>,
    /// Bind quantified variables over every batch node
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub literal_quantifier: Option<bool>,
    /// Alignment trains only the indication predicate
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_embeddings_on_align: Option<bool>,
    /// Recommender training epochs [default: 40]
    #[arg(long)]
    pub rec_epochs: Option<usize>,
    /// Recommender learning rate [default: 0.01]
    #[arg(long)]
    pub rec_lr: Option<f64>,
    /// Bootstrap resamples per report row [default: 10]
    #[arg(long)]
    pub bootstrap_rounds: Option<usize>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Knobs { $($f: $hi.$f.clone().or_else(|| $lo.$f.clone()),)* }
    };
}

impl Knobs {
    /// Fields set here win over `lower`.
    pub fn over(&self, lower: &Knobs) -> Knobs {
        overlay!(
            self,
            lower,
            dim,
            epochs,
            batch,
            lr,
            p_forall,
            p_sat,
            neg_cap,
            seed,
            tail_percentage,
            min_tail_meds,
            literal_quantifier,
            freeze_embeddings_on_align,
            rec_epochs,
            rec_lr,
            bootstrap_rounds
        )
    }

    pub fn resolve(&self, config: Option<&Path>) -> Result<Knobs, CliError> {
        let Some(path) = config else {
            return Ok(self.clone());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let file: Knobs =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(self.over(&file))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            dim: self.dim.unwrap_or(d.dim),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed_count: self.batch.unwrap_or(d.seed_count),
            adam: AdamConfig {
                lr: self.lr.unwrap_or(d.adam.lr),
                ..d.adam
            },
            aggregation: AggregationConfig {
                p_forall: self.p_forall.unwrap_or(d.aggregation.p_forall),
                p_sat: self.p_sat.unwrap_or(d.aggregation.p_sat),
            },
            neg_cap: match &self.neg_cap {
                Some(s) => parse_neg_cap(s)?,
                None => d.neg_cap,
            },
            rng_seed: self.seed(),
            quantifier: if self.literal_quantifier.unwrap_or(false) {
                QuantifierMode::Literal
            } else {
                QuantifierMode::Restricted
            },
            freeze_embeddings_on_align: self.freeze_embeddings_on_align.unwrap_or(false),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_config(&self) -> Result<EvalConfig, CliError> {
        let d = EvalConfig::default();
        let tail = self.tail_percentage.map_or(d.split.tail_percentage, |p| p / 100.0);
        if !(0.0..=1.0).contains(&tail) {
            return Err(CliError::Config(format!(
                "tail percentage must lie in [0, 100], got {}",
                tail * 100.0
            )));
        }
        let rec = RecConfig {
            epochs: self.rec_epochs.unwrap_or(d.recommender.epochs),
            adam: AdamConfig {
                lr: self.rec_lr.unwrap_or(d.recommender.adam.lr),
                ..d.recommender.adam
            },
            rng_seed: self.seed(),
            ..d.recommender
        };
        if !(rec.adam.lr >= 0.0 && rec.adam.lr.is_finite()) {
            return Err(CliError::Config("recommender learning rate must be finite and non-negative".into()));
        }
        let min_tail_meds = self.min_tail_meds.unwrap_or(d.split.min_tail_meds);
        if min_tail_meds == 0 {
            return Err(CliError::Config("min tail meds must be positive".into()));
        }
        let rounds = self.bootstrap_rounds.unwrap_or(d.bootstrap_rounds);
        if rounds == 0 {
            return Err(CliError::Config("bootstrap rounds must be positive".into()));
        }
        Ok(EvalConfig {
            split: SplitConfig {
                tail_percentage: tail,
                min_tail_meds,
                rng_seed: self.seed(),
                ..d.split
            },
            recommender: rec,
            bootstrap_rounds: rounds,
            rng_seed: self.seed(),
        })
    }
}

pub fn parse_neg_cap(s: &str) -> Result<NegCap, CliError> {
    let bad = || CliError::Config(format!("invalid negative cap `{s}` (expected K, abs:N or all)"));
    let cap = match s {
        "all" => NegCap::Unbounded,
        _ => match s.strip_prefix("abs:") {
            Some(n) => NegCap::Absolute(n.parse().map_err(|_| bad())?),
            None => NegCap::PerPositive(s.parse().map_err(|_| bad())?),
        },
    };
    Ok(cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let cli = Knobs {
            dim: Some(8),
            ..Knobs::default()
        };
        let file: Knobs = toml::from_str("dim = 16\nepochs = 3\nliteral-quantifier = true").unwrap();
        let k = cli.over(&file);
        let cfg = k.train_config().unwrap();
        assert_eq!((cfg.dim, cfg.epochs, cfg.seed_count), (8, 3, 32));
        assert_eq!(cfg.quantifier, QuantifierMode::Literal);
    }

    #[test]
    fn unknown_file_key_rejected() {
        assert!(toml::from_str::<Knobs>("dimension = 3").is_err());
    }

    #[test]
    fn neg_cap_forms() {
        assert_eq!(parse_neg_cap("4").unwrap(), NegCap::PerPositive(4));
        assert_eq!(parse_neg_cap("abs:9").unwrap(), NegCap::Absolute(9));
        assert_eq!(parse_neg_cap("all").unwrap(), NegCap::Unbounded);
        assert!(parse_neg_cap("x").is_err());
    }

    #[test]
    fn tail_is_a_percentage() {
        let k = Knobs {
            tail_percentage: Some(20.0),
            ..Knobs::default()
        };
        assert_eq!(k.eval_config().unwrap().split.tail_percentage, 0.2);
    }
}
