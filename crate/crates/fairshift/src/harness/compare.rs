//! Method comparisons over seeds (the per-scenario baseline matrix) and
//! loss-weight sweeps with Pareto frontier extraction.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::factorworld::ScenarioKind;
use crate::metrics::collect_pareto;

use super::runner::{run, RunRecord};
use super::{Method, RunConfig};

/// Mean and population standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

/// One method x domain row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub domain: String,
    pub accuracy: MeanStd,
    pub v_acc: MeanStd,
    pub delta_odds: MeanStd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Percent values with 2 decimals, raw rates with 6.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,domain,acc_mean,acc_std,v_acc_mean,v_acc_std,delta_odds_mean,delta_odds_std\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.2},{:.2},{:.2},{:.2},{:.6},{:.6}",
                r.method,
                r.domain,
                r.accuracy.mean * 100.0,
                r.accuracy.std * 100.0,
                r.v_acc.mean,
                r.v_acc.std,
                r.delta_odds.mean,
                r.delta_odds.std
            )
            .unwrap();
        }
        out
    }

    pub fn row(&self, method: Method, domain: &str) -> Option<&ComparisonRow> {
        let name = method.to_string();
        self.rows.iter().find(|r| r.method == name && r.domain == domain)
    }
}

/// Run `methods x seeds` on one scenario and aggregate the selected
/// checkpoints' test metrics per domain. Runs execute in a fixed order and
/// the table layout is fixed, so reruns are byte-identical.
pub fn compare(
    base: &RunConfig,
    scenario: ScenarioKind,
    methods: &[Method],
    seeds: &[u64],
    out_root: Option<&Path>,
) -> Result<(Comparison, Vec<RunRecord>)> {
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &method in methods {
        let mut per_seed = Vec::new();
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.scenario = scenario;
            cfg.method = method;
            cfg.seed = seed;
            per_seed.push(run(&cfg, out_root)?);
        }
        for domain in ["S", "T"] {
            fn report<'a>(r: &'a RunRecord, domain: &str) -> &'a crate::metrics::EvalReport {
                if domain == "S" {
                    &r.final_source
                } else {
                    &r.final_target
                }
            }
            let accs: Vec<f64> = per_seed.iter().map(|r| report(r, domain).accuracy).collect();
            let vaccs: Vec<f64> = per_seed.iter().map(|r| report(r, domain).v_acc).collect();
            let odds: Vec<f64> = per_seed.iter().map(|r| report(r, domain).delta_odds).collect();
            rows.push(ComparisonRow {
                method: method.to_string(),
                domain: domain.to_string(),
                accuracy: mean_std(&accs),
                v_acc: mean_std(&vaccs),
                delta_odds: mean_std(&odds),
            });
        }
        records.extend(per_seed);
    }
    let table = Comparison {
        scenario: scenario.to_string(),
        seeds: seeds.to_vec(),
        rows,
    };
    if let Some(root) = out_root {
        std::fs::create_dir_all(root)?;
        std::fs::write(root.join(format!("compare_{}.csv", scenario)), table.to_csv())?;
        std::fs::write(
            root.join(format!("compare_{}.json", scenario)),
            serde_json::to_string_pretty(&table)? + "\n",
        )?;
    }
    Ok((table, records))
}

/// One sweep point: a (w_fair, w_cons) cell under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub w_fair: f64,
    pub w_cons: f64,
    pub seed: u64,
    pub target_accuracy: f64,
    pub target_delta_odds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Non-dominated (accuracy, delta_odds) subset of the points.
    pub frontier: Vec<(f64, f64)>,
}

impl Sweep {
    pub fn points_csv(&self) -> String {
        let mut out = String::from("w_fair,w_cons,seed,target_acc,target_delta_odds\n");
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{:.2},{:.6}",
                p.w_fair,
                p.w_cons,
                p.seed,
                p.target_accuracy * 100.0,
                p.target_delta_odds
            )
            .unwrap();
        }
        out
    }

    pub fn frontier_csv(&self) -> String {
        let mut out = String::from("target_acc,target_delta_odds\n");
        for (acc, odds) in &self.frontier {
            writeln!(out, "{:.2},{:.6}", acc * 100.0, odds).unwrap();
        }
        out
    }
}

/// Grid sweep over loss weights; every grid cell runs every seed.
pub fn sweep(
    base: &RunConfig,
    w_fair_grid: &[f64],
    w_cons_grid: &[f64],
    seeds: &[u64],
    out_root: Option<&Path>,
) -> Result<Sweep> {
    if w_fair_grid.is_empty() || w_cons_grid.is_empty() {
        return Err(crate::error::Error::Config("sweep grid must be nonempty".into()));
    }
    let mut points = Vec::new();
    for &w_fair in w_fair_grid {
        for &w_cons in w_cons_grid {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.w_fair = w_fair;
                cfg.w_cons = w_cons;
                cfg.seed = seed;
                let record = run(&cfg, out_root)?;
                points.push(SweepPoint {
                    w_fair,
                    w_cons,
                    seed,
                    target_accuracy: record.final_target.accuracy,
                    target_delta_odds: record.final_target.delta_odds,
                });
            }
        }
    }
    let pairs: Vec<(f64, f64)> =
        points.iter().map(|p| (p.target_accuracy, p.target_delta_odds)).collect();
    let frontier = collect_pareto(&pairs);
    let sweep = Sweep { points, frontier };
    if let Some(root) = out_root {
        std::fs::create_dir_all(root)?;
        std::fs::write(root.join("sweep_points.csv"), sweep.points_csv())?;
        std::fs::write(root.join("sweep_frontier.csv"), sweep.frontier_csv())?;
    }
    Ok(sweep)
}
