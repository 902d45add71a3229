//! Experiment harness: typed run configuration, the method/loss activation
//! matrix, deterministic seeding, and persistence of runs, comparisons, and
//! sweeps.

pub mod compare;
pub mod runner;
pub mod theory_cmd;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::factorworld::ScenarioKind;
use crate::fairlosses::{cfair_head_name, HEAD_DOMAIN, HEAD_LAFTR};
use crate::neuralcore::NetSpec;
use crate::selftrain::{ConsistencyKind, DenominatorMode, DomainFilter, FairnessKind, TrainConfig};

/// The fixed method matrix. Each method pins which loss components are
/// active; the weights scale them and a zero weight deactivates a component
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Base,
    Laftr,
    Cfair,
    LaftrDann,
    LaftrFixmatch,
    CfairFixmatch,
    OursLaftr,
    OursCfair,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Base,
        Method::Laftr,
        Method::Cfair,
        Method::LaftrDann,
        Method::LaftrFixmatch,
        Method::CfairFixmatch,
        Method::OursLaftr,
        Method::OursCfair,
    ];

    pub fn fairness(self) -> FairnessKind {
        match self {
            Method::Base => FairnessKind::None,
            Method::Laftr | Method::LaftrDann | Method::LaftrFixmatch | Method::OursLaftr => {
                FairnessKind::Laftr
            }
            Method::Cfair | Method::CfairFixmatch | Method::OursCfair => FairnessKind::Cfair,
        }
    }

    pub fn consistency(self) -> ConsistencyKind {
        match self {
            Method::LaftrFixmatch | Method::CfairFixmatch => ConsistencyKind::Standard,
            Method::OursLaftr | Method::OursCfair => ConsistencyKind::Fair,
            _ => ConsistencyKind::None,
        }
    }

    pub fn uses_domain_loss(self) -> bool {
        matches!(self, Method::LaftrDann)
    }

    /// Source-only methods select models on the source validation split;
    /// adaptation methods use the labeled target validation split.
    pub fn source_only(self) -> bool {
        matches!(self, Method::Base | Method::Laftr | Method::Cfair)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Method::Base),
            "laftr" => Ok(Method::Laftr),
            "cfair" => Ok(Method::Cfair),
            "laftr+dann" => Ok(Method::LaftrDann),
            "laftr+fixmatch" => Ok(Method::LaftrFixmatch),
            "cfair+fixmatch" => Ok(Method::CfairFixmatch),
            "ours-laftr" => Ok(Method::OursLaftr),
            "ours-cfair" => Ok(Method::OursCfair),
            other => Err(Error::Config(format!("unknown method `{}`", other))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Base => "base",
            Method::Laftr => "laftr",
            Method::Cfair => "cfair",
            Method::LaftrDann => "laftr+dann",
            Method::LaftrFixmatch => "laftr+fixmatch",
            Method::CfairFixmatch => "cfair+fixmatch",
            Method::OursLaftr => "ours-laftr",
            Method::OursCfair => "ours-cfair",
        };
        f.write_str(s)
    }
}

/// Transform used for consistency training and consistency evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransformSpec {
    Identity,
    /// Resample these nuisance factors over the union of domain supports.
    NuisanceResample { factors: Vec<String> },
    /// Corrupt this fraction of unprotected coordinates.
    FeatureCorruption { corruption_fraction: f64, protected: Vec<usize> },
}

/// Fully resolved configuration for a single training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub nuisance_values: usize,
    pub background_factors: usize,
    pub background_cardinality: usize,
    pub method: Method,
    pub seed: u64,

    pub feature_dim: usize,
    pub noise_scale: f64,
    pub separability: f64,
    pub emitter_seed: u64,

    pub n_train: usize,
    pub n_eval: usize,
    pub sample_seed: u64,

    pub encoder: Vec<usize>,
    pub adversary_hidden: usize,
    pub reversal_coeff: f64,

    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,

    pub epochs: usize,
    pub warmup_epochs: usize,
    pub tau: f64,
    pub w_fair: f64,
    pub w_cons: f64,
    pub w_domain: f64,

    pub transform: TransformSpec,
    pub no_teacher_update: bool,
    pub uniform_group_weights: bool,
    pub consistency_domain: DomainFilter,
    pub confident_denominator: bool,

    pub consistency_eval_trials: usize,
}

impl RunConfig {
    /// Read a run configuration from flat config keys, applying the
    /// documented defaults for anything absent.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let scenario: ScenarioKind = cfg.str_or("scenario.kind", "dshift").parse()?;
        let method: Method = cfg.str_or("method", "ours-laftr").parse()?;
        let transform = match cfg.str_or("transform.kind", "nuisance_resample") {
            "identity" => TransformSpec::Identity,
            "nuisance_resample" => TransformSpec::NuisanceResample {
                factors: cfg
                    .str_or("transform.factors", "d")
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .collect(),
            },
            "feature_corruption" => TransformSpec::FeatureCorruption {
                corruption_fraction: cfg.f64_or("transform.corruption_fraction", 0.5)?,
                protected: cfg.list_or::<usize>("transform.protected", &[])?,
            },
            other => return Err(Error::Config(format!("unknown transform kind `{}`", other))),
        };
        let consistency_domain = match cfg.str_or("train.consistency_domain", "both") {
            "both" => DomainFilter::Both,
            "source" => DomainFilter::SourceOnly,
            "target" => DomainFilter::TargetOnly,
            other => {
                return Err(Error::Config(format!("unknown consistency domain `{}`", other)))
            }
        };
        let n_train = cfg.usize_or("sample.n", 4000)?;
        Ok(Self {
            scenario,
            nuisance_values: cfg.usize_or("factors.nuisance_values", 8)?,
            background_factors: cfg.usize_or("factors.background", 2)?,
            background_cardinality: cfg.usize_or("factors.background_values", 10)?,
            method,
            seed: cfg.u64_or("seed", 0)?,
            feature_dim: cfg.usize_or("emitter.feature_dim", 16)?,
            noise_scale: cfg.f64_or("emitter.noise_scale", 0.5)?,
            separability: cfg.f64_or("emitter.separability", 3.0)?,
            emitter_seed: cfg.u64_or("emitter.seed", 7)?,
            n_train,
            n_eval: cfg.usize_or("sample.n_eval", (n_train / 4).max(1))?,
            sample_seed: cfg.u64_or("sample.seed", 1)?,
            encoder: cfg.list_or("net.encoder", &[64usize, 64])?,
            adversary_hidden: cfg.usize_or("net.adversary_hidden", 64)?,
            reversal_coeff: cfg.f64_or("net.reversal_coeff", 1.0)?,
            learning_rate: cfg.f64_or("opt.lr", 0.05)?,
            momentum: cfg.f64_or("opt.momentum", 0.9)?,
            batch_size: cfg.usize_or("opt.batch", 128)?,
            epochs: cfg.usize_or("train.epochs", 60)?,
            warmup_epochs: cfg.usize_or("train.warmup", 5)?,
            tau: cfg.f64_or("train.tau", 0.95)?,
            w_fair: cfg.f64_or("train.w_fair", 1.0)?,
            w_cons: cfg.f64_or("train.w_cons", 1.0)?,
            w_domain: cfg.f64_or("train.w_domain", 1.0)?,
            transform,
            no_teacher_update: cfg.bool_or("ablation.no_teacher_update", false)?,
            uniform_group_weights: cfg.bool_or("ablation.uniform_group_weights", false)?,
            consistency_domain,
            confident_denominator: cfg.bool_or("train.confident_denominator", false)?,
            consistency_eval_trials: cfg.usize_or("eval.consistency_trials", 4)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("train.tau {} outside [0, 1]", self.tau)));
        }
        if self.batch_size < 4 {
            return Err(Error::Config("opt.batch must be at least 4".into()));
        }
        if self.epochs == 0 || self.n_train == 0 || self.n_eval == 0 {
            return Err(Error::Config("epochs and sample sizes must be positive".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::Config("train.warmup must be smaller than train.epochs".into()));
        }
        Ok(())
    }

    /// Canonical flat form; its hash names the output directory.
    pub fn to_config(&self) -> Config {
        let mut c = Config::new();
        c.set("scenario.kind", self.scenario);
        c.set("factors.nuisance_values", self.nuisance_values);
        c.set("factors.background", self.background_factors);
        c.set("factors.background_values", self.background_cardinality);
        c.set("method", self.method);
        c.set("seed", self.seed);
        c.set("emitter.feature_dim", self.feature_dim);
        c.set("emitter.noise_scale", self.noise_scale);
        c.set("emitter.separability", self.separability);
        c.set("emitter.seed", self.emitter_seed);
        c.set("sample.n", self.n_train);
        c.set("sample.n_eval", self.n_eval);
        c.set("sample.seed", self.sample_seed);
        c.set(
            "net.encoder",
            self.encoder.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        c.set("net.adversary_hidden", self.adversary_hidden);
        c.set("net.reversal_coeff", self.reversal_coeff);
        c.set("opt.lr", self.learning_rate);
        c.set("opt.momentum", self.momentum);
        c.set("opt.batch", self.batch_size);
        c.set("train.epochs", self.epochs);
        c.set("train.warmup", self.warmup_epochs);
        c.set("train.tau", self.tau);
        c.set("train.w_fair", self.w_fair);
        c.set("train.w_cons", self.w_cons);
        c.set("train.w_domain", self.w_domain);
        match &self.transform {
            TransformSpec::Identity => c.set("transform.kind", "identity"),
            TransformSpec::NuisanceResample { factors } => {
                c.set("transform.kind", "nuisance_resample");
                c.set("transform.factors", factors.join(","));
            }
            TransformSpec::FeatureCorruption { corruption_fraction, protected } => {
                c.set("transform.kind", "feature_corruption");
                c.set("transform.corruption_fraction", corruption_fraction);
                c.set(
                    "transform.protected",
                    protected.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
                );
            }
        }
        c.set("ablation.no_teacher_update", self.no_teacher_update);
        c.set("ablation.uniform_group_weights", self.uniform_group_weights);
        c.set(
            "train.consistency_domain",
            match self.consistency_domain {
                DomainFilter::Both => "both",
                DomainFilter::SourceOnly => "source",
                DomainFilter::TargetOnly => "target",
            },
        );
        c.set("train.confident_denominator", self.confident_denominator);
        c.set("eval.consistency_trials", self.consistency_eval_trials);
        c
    }

    pub fn hash(&self) -> String {
        self.to_config().hash()
    }

    /// Network architecture implied by the method matrix.
    pub fn net_spec(&self) -> NetSpec {
        let mut adversaries = Vec::new();
        let adv_dims = |out: usize| vec![self.adversary_hidden, out];
        match self.method.fairness() {
            FairnessKind::Laftr => {
                adversaries.push((HEAD_LAFTR.to_string(), adv_dims(1), self.reversal_coeff));
            }
            FairnessKind::Cfair => {
                for y in 0..2 {
                    adversaries.push((cfair_head_name(y), adv_dims(2), self.reversal_coeff));
                }
            }
            FairnessKind::None => {}
        }
        if self.method.uses_domain_loss() {
            adversaries.push((HEAD_DOMAIN.to_string(), adv_dims(2), self.reversal_coeff));
        }
        NetSpec {
            input_dim: self.feature_dim,
            encoder: self.encoder.clone(),
            classifier: vec![2],
            adversaries,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            warmup_epochs: self.warmup_epochs,
            batch_size: self.batch_size,
            tau: self.tau,
            w_fair: self.w_fair,
            w_cons: self.w_cons,
            w_domain: self.w_domain,
            fairness: self.method.fairness(),
            consistency: self.method.consistency(),
            domain_loss: self.method.uses_domain_loss(),
            no_teacher_update: self.no_teacher_update,
            uniform_group_weights: self.uniform_group_weights,
            consistency_domain: self.consistency_domain,
            denominator: if self.confident_denominator {
                DenominatorMode::ConfidentOnly
            } else {
                DenominatorMode::GroupSize
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_matrix_is_fixed() {
        use ConsistencyKind as C;
        use FairnessKind as F;
        let rows: [(Method, FairnessKind, ConsistencyKind, bool); 8] = [
            (Method::Base, F::None, C::None, false),
            (Method::Laftr, F::Laftr, C::None, false),
            (Method::Cfair, F::Cfair, C::None, false),
            (Method::LaftrDann, F::Laftr, C::None, true),
            (Method::LaftrFixmatch, F::Laftr, C::Standard, false),
            (Method::CfairFixmatch, F::Cfair, C::Standard, false),
            (Method::OursLaftr, F::Laftr, C::Fair, false),
            (Method::OursCfair, F::Cfair, C::Fair, false),
        ];
        for (m, f, c, d) in rows {
            assert_eq!(m.fairness(), f);
            assert_eq!(m.consistency(), c);
            assert_eq!(m.uses_domain_loss(), d);
        }
    }

    #[test]
    fn config_round_trip_preserves_hash() {
        let cfg = Config::parse("scenario.kind = dshift\nmethod = laftr\nseed = 3").unwrap();
        let rc = RunConfig::from_config(&cfg).unwrap();
        let rc2 = RunConfig::from_config(&Config::parse(&rc.to_config().canonical_string()).unwrap())
            .unwrap();
        assert_eq!(rc, rc2);
        assert_eq!(rc.hash(), rc2.hash());
    }

    #[test]
    fn method_parse_round_trip() {
        for m in Method::ALL {
            let back: Method = m.to_string().parse().unwrap();
            assert_eq!(m, back);
        }
    }
}
