//! Single-run driver: generate the scenario's datasets, train per the
//! method matrix, evaluate both domains every epoch, select the best
//! checkpoint on the configured validation split, and persist everything.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::mix_seed;
use crate::error::{Error, Result};
use crate::factorworld::transforms::{
    FeatureCorruption, IdentityTransform, NuisanceResample, Transform,
};
use crate::factorworld::{
    build_scenario_with_background, sample_dataset, Dataset, Domain, Emitter, ShiftScenario,
};
use crate::metrics::{evaluate, group_consistency, EvalReport};
use crate::neuralcore::{snapshot, Network};
use crate::selftrain::{DomainFilter, StepLog, Trainer};

use super::{RunConfig, TransformSpec};

// Per-purpose rng streams on the run seed; dataset seeds are derived
// separately so that batching never perturbs sampling.
const STREAM_LABELED: u64 = 1;
const STREAM_UNLABELED: u64 = 2;
const STREAM_TRANSFORM: u64 = 3;
const STREAM_EVAL: u64 = 4;

const SALT_INIT: u64 = 0xA111;
const SALT_SAMPLE: u64 = 0x5A17;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: String,
    pub scenario: String,
    pub seed: u64,
    pub selected_epoch: usize,
    /// Selection by the source-validation alternative, logged alongside.
    pub selected_epoch_source_val: usize,
    pub per_epoch_source: Vec<EvalReport>,
    pub per_epoch_target: Vec<EvalReport>,
    pub final_source: EvalReport,
    pub final_target: EvalReport,
    pub out_dir: Option<PathBuf>,
}

/// All datasets of one scenario instance.
pub struct ScenarioData {
    pub scenario: ShiftScenario,
    pub emitter: Emitter,
    pub source_train: Dataset,
    pub source_test: Dataset,
    pub source_val: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
    pub target_val: Dataset,
}

pub fn generate_data(cfg: &RunConfig) -> Result<ScenarioData> {
    let scenario = build_scenario_with_background(
        cfg.scenario,
        cfg.nuisance_values,
        cfg.background_factors,
        cfg.background_cardinality,
    )?;
    let emitter = Emitter::build(
        &scenario.layout,
        cfg.feature_dim,
        cfg.noise_scale,
        cfg.separability,
        cfg.emitter_seed,
    )?;
    let seed_for = |domain: u64, split: u64| {
        mix_seed(mix_seed(mix_seed(cfg.sample_seed, SALT_SAMPLE ^ cfg.seed), domain), split)
    };
    let sample = |domain: Domain, split: u64, n: usize| {
        let d = match domain {
            Domain::Source => 0,
            Domain::Target => 1,
        };
        sample_dataset(
            &scenario.layout,
            scenario.config(domain),
            &emitter,
            n,
            seed_for(d, split),
            domain,
        )
    };
    Ok(ScenarioData {
        source_train: sample(Domain::Source, 0, cfg.n_train)?,
        source_test: sample(Domain::Source, 1, cfg.n_eval)?,
        source_val: sample(Domain::Source, 2, cfg.n_eval)?,
        target_train: sample(Domain::Target, 0, cfg.n_train)?,
        target_test: sample(Domain::Target, 1, cfg.n_eval)?,
        target_val: sample(Domain::Target, 2, cfg.n_eval)?,
        scenario,
        emitter,
    })
}

pub fn build_transform(cfg: &RunConfig, data: &ScenarioData) -> Result<Box<dyn Transform>> {
    Ok(match &cfg.transform {
        TransformSpec::Identity => Box::new(IdentityTransform),
        TransformSpec::NuisanceResample { factors } => {
            let names: Vec<&str> = factors.iter().map(|s| s.as_str()).collect();
            Box::new(NuisanceResample::new(&data.scenario, data.emitter.clone(), &names)?)
        }
        TransformSpec::FeatureCorruption { corruption_fraction, protected } => Box::new(
            FeatureCorruption::from_dataset(&data.source_train, protected, *corruption_fraction)?,
        ),
    })
}

/// Shuffled cyclic index stream; reshuffles whenever it wraps.
struct CyclicSampler {
    indices: Vec<usize>,
    pos: usize,
}

impl CyclicSampler {
    fn new(indices: Vec<usize>) -> Self {
        Self { indices, pos: usize::MAX } // first draw triggers a shuffle
    }

    fn next_batch(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            if self.pos >= self.indices.len() {
                for i in (1..self.indices.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    self.indices.swap(i, j);
                }
                self.pos = 0;
            }
            out.push(self.indices[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Group-stratified batches: equal quotas from every nonempty group.
struct StratifiedSampler {
    groups: Vec<CyclicSampler>,
}

impl StratifiedSampler {
    fn new(ds: &Dataset) -> Self {
        let groups = ds
            .group_indices()
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(CyclicSampler::new)
            .collect();
        Self { groups }
    }

    fn next_batch(&mut self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let quota = (batch_size / self.groups.len()).max(1);
        let mut out = Vec::with_capacity(quota * self.groups.len());
        for g in self.groups.iter_mut() {
            out.extend(g.next_batch(quota, rng));
        }
        out
    }
}

fn write_train_log(logs: &[StepLog]) -> String {
    let mut out = String::from(
        "epoch,step,loss_cls,loss_fair,loss_domain,loss_cons_std,loss_cons_fair,\
         lambda_00,lambda_01,lambda_10,lambda_11,\
         conf_frac_00,conf_frac_01,conf_frac_10,conf_frac_11\n",
    );
    for l in logs {
        write!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            l.epoch, l.step, l.loss_cls, l.loss_fair, l.loss_domain, l.loss_cons_std, l.loss_cons_fair
        )
        .unwrap();
        for v in &l.lambda {
            write!(out, ",{:.6}", v).unwrap();
        }
        for v in &l.confident_frac {
            write!(out, ",{:.6}", v).unwrap();
        }
        out.push('\n');
    }
    out
}

fn write_eval_log(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    if let Some(first) = reports.first() {
        out.push_str("epoch,");
        out.push_str(&EvalReport::csv_header(&first.group_stats));
        out.push('\n');
    }
    for (epoch, r) in reports.iter().enumerate() {
        write!(out, "{},{}\n", epoch, r.csv_row()).unwrap();
    }
    out
}

/// Train one configuration end to end. Bit-deterministic for a fixed
/// config; identical configs produce identical artifacts.
pub fn run(cfg: &RunConfig, out_root: Option<&Path>) -> Result<RunRecord> {
    cfg.validate()?;
    let data = generate_data(cfg)?;
    let transform = build_transform(cfg, &data)?;
    let tc = cfg.train_config();

    let net = Network::build(&cfg.net_spec(), mix_seed(cfg.seed, SALT_INIT));
    let mut trainer = Trainer::new(net, cfg.learning_rate, cfg.momentum)?;

    // Unlabeled pool: both domains for the domain loss, otherwise filtered
    // by the consistency-domain ablation.
    let pool_filter = if tc.domain_loss { DomainFilter::Both } else { tc.consistency_domain };
    let unlabeled = match pool_filter {
        DomainFilter::Both => Dataset::concat(&[&data.source_train, &data.target_train])?,
        DomainFilter::SourceOnly => data.source_train.clone(),
        DomainFilter::TargetOnly => data.target_train.clone(),
    };

    let mut rng_labeled = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_labeled.set_stream(STREAM_LABELED);
    let mut rng_unlabeled = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_unlabeled.set_stream(STREAM_UNLABELED);
    let mut rng_transform = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_transform.set_stream(STREAM_TRANSFORM);

    let mut labeled_sampler = StratifiedSampler::new(&data.source_train);
    let mut unlabeled_sampler = CyclicSampler::new((0..unlabeled.len()).collect());
    let steps_per_epoch = data.source_train.len().div_ceil(cfg.batch_size);

    let val = if cfg.method.source_only() { &data.source_val } else { &data.target_val };

    let mut all_logs: Vec<StepLog> = Vec::new();
    let mut per_epoch_source = Vec::with_capacity(cfg.epochs);
    let mut per_epoch_target = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;
    let mut best_source_val: Option<(f64, usize)> = None;

    for epoch in 0..cfg.epochs {
        if crate::selftrain::should_promote(epoch, cfg.warmup_epochs, tc.no_teacher_update) {
            trainer.promote_student_to_teacher();
        }

        let labeled_batches: Vec<Vec<usize>> = (0..steps_per_epoch)
            .map(|_| labeled_sampler.next_batch(cfg.batch_size, &mut rng_labeled))
            .collect();
        let unlabeled_batches: Vec<Vec<usize>> = if tc.uses_unlabeled() {
            (0..steps_per_epoch)
                .map(|_| unlabeled_sampler.next_batch(cfg.batch_size, &mut rng_unlabeled))
                .collect()
        } else {
            Vec::new()
        };

        let logs = trainer.train_epoch(
            &data.source_train,
            &labeled_batches,
            &unlabeled,
            &unlabeled_batches,
            transform.as_ref(),
            &tc,
            &mut rng_transform,
        )?;
        all_logs.extend(logs);

        let src = evaluate(&trainer.net, &data.source_test, "S")?;
        let tgt = evaluate(&trainer.net, &data.target_test, "T")?;
        let val_report = evaluate(&trainer.net, val, if cfg.method.source_only() { "S" } else { "T" })?;
        let score = val_report.selection_score();
        if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
            best = Some((score, epoch, trainer.net.clone()));
        }
        let src_val_score = evaluate(&trainer.net, &data.source_val, "S")?.selection_score();
        if best_source_val.map_or(true, |(s, _)| src_val_score > s) {
            best_source_val = Some((src_val_score, epoch));
        }
        per_epoch_source.push(src);
        per_epoch_target.push(tgt);
    }

    let (_, selected_epoch, best_net) = best.ok_or_else(|| Error::Contract("no epochs ran".into()))?;
    let final_source = evaluate(&best_net, &data.source_test, "S")?;
    let mut final_target = evaluate(&best_net, &data.target_test, "T")?;
    let mut rng_eval = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_eval.set_stream(STREAM_EVAL);
    final_target.consistency = Some(group_consistency(
        &best_net,
        &data.target_test,
        transform.as_ref(),
        cfg.consistency_eval_trials,
        &mut rng_eval,
    )?);

    let mut record = RunRecord {
        config_hash: cfg.hash(),
        method: cfg.method.to_string(),
        scenario: cfg.scenario.to_string(),
        seed: cfg.seed,
        selected_epoch,
        selected_epoch_source_val: best_source_val.map(|(_, e)| e).unwrap_or(0),
        per_epoch_source,
        per_epoch_target,
        final_source,
        final_target,
        out_dir: None,
    };

    if let Some(root) = out_root {
        let dir = root.join("runs").join(&record.config_hash);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("config"), cfg.to_config().canonical_string())?;
        std::fs::write(dir.join("train_log.csv"), write_train_log(&all_logs))?;
        std::fs::write(dir.join("eval_source.csv"), write_eval_log(&record.per_epoch_source))?;
        std::fs::write(dir.join("eval_target.csv"), write_eval_log(&record.per_epoch_target))?;
        snapshot::save(&best_net, &dir.join("model.snapshot"))?;
        record.out_dir = Some(dir.clone());
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    }
    Ok(record)
}
