//! The `theory` subcommand: certify the error and unfairness bounds on
//! randomly generated precondition-satisfying worlds, verify both
//! propositions on random rate tables, and emit a JSON report.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::theorylab::bounds::{verify_theorem_bounds, BoundReport};
use crate::theorylab::minimax::{solve_constrained_minimax, MINIMAX_BUDGET};
use crate::theorylab::propositions::{
    random_fair_subpop_table, random_pmf, random_unfair_subpop_table, verify_prop_subpop,
};
use crate::theorylab::worldgen::{generate_certified, random_feasible_classifier, MuMode, WorldGenConfig};

#[derive(Debug, Clone)]
pub struct TheoryArgs {
    pub worlds: usize,
    pub seed: u64,
    pub alpha: f64,
    pub cbar: f64,
    pub mu_mode: MuMode,
    pub prop_tables: usize,
}

impl Default for TheoryArgs {
    fn default() -> Self {
        Self {
            worlds: 200,
            seed: 0,
            alpha: 0.3,
            cbar: 4.0,
            mu_mode: MuMode::MinTeacherError,
            prop_tables: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldReport {
    pub index: usize,
    pub points: usize,
    pub attempts: usize,
    pub mu: f64,
    pub gamma: f64,
    pub c: f64,
    /// Bounds for a random constraint-satisfying classifier.
    pub feasible: BoundReport,
    /// Bounds for the enumerated minimax optimum, when within budget.
    pub minimax: Option<BoundReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryReport {
    pub worlds: usize,
    pub seed: u64,
    pub alpha_bar: f64,
    pub c_bar: f64,
    pub mu_mode: String,
    pub bound_violations: usize,
    pub uncertified_worlds: usize,
    pub subpop_tables: usize,
    pub subpop_max_target_odds: f64,
    pub subpop_counterexample_min_target_odds: f64,
    pub per_world: Vec<WorldReport>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        self.bound_violations == 0
            && self.uncertified_worlds == 0
            && self.subpop_max_target_odds <= 1e-12
            && self.subpop_counterexample_min_target_odds > 0.0
    }
}

pub fn run_theory(args: &TheoryArgs, report_path: Option<&Path>) -> Result<TheoryReport> {
    let cfg = WorldGenConfig {
        alpha_bar: args.alpha,
        c_bar: args.cbar,
        mu_mode: args.mu_mode,
        ..WorldGenConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut per_world = Vec::with_capacity(args.worlds);
    let mut violations = 0usize;
    let mut uncertified = 0usize;
    for index in 0..args.worlds {
        let cw = generate_certified(&mut rng, &cfg)?;
        let ghat = random_feasible_classifier(&mut rng, &cw.world, &cw.teacher, cw.params.mu);
        let feasible = verify_theorem_bounds(&cw.world, &cw.graph, &cw.teacher, &ghat, &cw.params)?;
        if !feasible.certified {
            uncertified += 1;
        } else if !feasible.all_bounds_hold() {
            violations += 1;
        }
        let minimax = if cw.world.num_points() <= MINIMAX_BUDGET {
            let sol = solve_constrained_minimax(&cw.world, &cw.graph, &cw.teacher, cw.params.mu)?;
            let rep =
                verify_theorem_bounds(&cw.world, &cw.graph, &cw.teacher, &sol.labeling, &cw.params)?;
            if !rep.certified {
                uncertified += 1;
            } else if !rep.all_bounds_hold() {
                violations += 1;
            }
            Some(rep)
        } else {
            None
        };
        per_world.push(WorldReport {
            index,
            points: cw.world.num_points(),
            attempts: cw.attempts,
            mu: cw.params.mu,
            gamma: cw.params.gamma,
            c: cw.params.c(),
            feasible,
            minimax,
        });
    }

    // Proposition sweep: fair tables must transfer exactly; broken tables
    // must yield positive target unfairness.
    let mut max_fair_target = 0.0f64;
    let mut min_counter_target = f64::INFINITY;
    for _ in 0..args.prop_tables {
        let m = 2 + (rng.next_u64() % 7) as usize;
        let fair = random_fair_subpop_table(&mut rng, m);
        let ps = random_pmf(&mut rng, m);
        let pt = random_pmf(&mut rng, m);
        let rep = verify_prop_subpop(&fair, &ps, &pt)?;
        max_fair_target = max_fair_target.max(rep.target_odds.abs());

        let broken = random_unfair_subpop_table(&mut rng, m, 0.1);
        let rep = verify_prop_subpop(&broken, &ps, &pt)?;
        min_counter_target = min_counter_target.min(rep.target_odds);
    }
    if args.prop_tables == 0 {
        min_counter_target = f64::INFINITY;
    }

    let report = TheoryReport {
        worlds: args.worlds,
        seed: args.seed,
        alpha_bar: args.alpha,
        c_bar: args.cbar,
        mu_mode: match args.mu_mode {
            MuMode::MinTeacherError => "min-teacher-error".to_string(),
            MuMode::Fixed(v) => format!("fixed:{}", v),
        },
        bound_violations: violations,
        uncertified_worlds: uncertified,
        subpop_tables: args.prop_tables,
        subpop_max_target_odds: max_fair_target,
        subpop_counterexample_min_target_odds: min_counter_target,
        per_world,
    };
    if let Some(path) = report_path {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}
