//! Brute-force solver for the theoretical training objective:
//! minimize the worst-group consistency loss subject to a per-group
//! disagreement budget against the teacher.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{consistency_loss_discrete, error_and_disagreement, DiscreteWorld, NeighborGraph, MASS_TOL};

/// Total-point enumeration budget; 2^16 labelings at most.
pub const MINIMAX_BUDGET: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxSolution {
    pub labeling: Vec<usize>,
    pub max_group_consistency: f64,
    pub error_on_population: f64,
    pub feasible_count: usize,
}

/// Enumerates every binary labeling; among those with
/// `L_{U_a^y}(g, g_tc) <= mu` for all groups, returns one minimizing the
/// maximum per-group consistency loss. Ties break toward smaller population
/// error, then the lexicographically smallest labeling.
pub fn solve_constrained_minimax(
    world: &DiscreteWorld,
    graph: &NeighborGraph,
    teacher: &[usize],
    mu: f64,
) -> Result<MinimaxSolution> {
    let n = world.num_points();
    if n > MINIMAX_BUDGET {
        return Err(Error::Budget(format!(
            "{} points exceed the labeling enumeration budget of {}",
            n, MINIMAX_BUDGET
        )));
    }
    if world.num_labels != 2 {
        return Err(Error::Contract("labeling enumeration is defined for binary labels".into()));
    }
    if teacher.len() != n {
        return Err(Error::Contract("teacher must label every point".into()));
    }

    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    let mut feasible_count = 0usize;
    for mask in 0u32..(1u32 << n) {
        let labeling: Vec<usize> = (0..n).map(|p| ((mask >> p) & 1) as usize).collect();
        let ed = error_and_disagreement(world, &labeling, teacher)?;
        if ed.disagreement.per_group.iter().any(|&l| l > mu + MASS_TOL) {
            continue;
        }
        feasible_count += 1;
        let r = consistency_loss_discrete(world, graph, &labeling)?;
        let key = (r.max(), ed.error.overall);
        let better = match &best {
            None => true,
            Some((max_r, eps, lab)) => {
                if key.0 + MASS_TOL < *max_r {
                    true
                } else if (key.0 - max_r).abs() <= MASS_TOL {
                    if key.1 + MASS_TOL < *eps {
                        true
                    } else if (key.1 - eps).abs() <= MASS_TOL {
                        labeling < *lab
                    } else {
                        false
                    }
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((key.0, key.1, labeling));
        }
    }
    match best {
        Some((max_r, eps, labeling)) => Ok(MinimaxSolution {
            labeling,
            max_group_consistency: max_r,
            error_on_population: eps,
            feasible_count,
        }),
        None => Err(Error::Infeasible(format!("no labeling satisfies the disagreement budget {}", mu))),
    }
}
