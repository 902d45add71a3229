//! (alpha, c)-multiplicative intra-group expansion checked by full subset
//! enumeration: every nonempty subset V of the group support with
//! P(V) <= alpha must satisfy min{c P(V), 1} <= P(N(V)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{DiscreteWorld, NeighborGraph, MASS_TOL};

/// Per-group enumeration budget; 2^20 subsets at most.
pub const EXPANSION_BUDGET: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub group: usize,
    pub alpha: f64,
    pub c_bar: f64,
    pub holds: bool,
    /// Smallest P(N(V)) / P(V) over qualifying subsets; at least 1.
    pub c_star: f64,
    /// A subset attaining the minimal ratio, as point ids.
    pub witness: Vec<usize>,
    pub subsets_checked: usize,
}

pub fn check_expansion(
    world: &DiscreteWorld,
    graph: &NeighborGraph,
    group: usize,
    alpha: f64,
    c_bar: f64,
) -> Result<ExpansionReport> {
    if group >= world.num_groups() {
        return Err(Error::Contract(format!("group {} out of range", group)));
    }
    let points = world.points_in_group(group);
    if points.len() > EXPANSION_BUDGET {
        return Err(Error::Budget(format!(
            "group {} has {} points, enumeration budget is {}",
            group,
            points.len(),
            EXPANSION_BUDGET
        )));
    }
    let k = points.len();
    let mut holds = true;
    let mut c_star = f64::INFINITY;
    let mut witness = Vec::new();
    let mut subsets_checked = 0usize;
    for mask in 1u32..(1u32 << k) {
        let subset: Vec<usize> =
            (0..k).filter(|&i| mask & (1 << i) != 0).map(|i| points[i]).collect();
        let p_v: f64 = subset.iter().map(|&p| world.mass[p]).sum();
        if p_v > alpha + MASS_TOL {
            continue;
        }
        subsets_checked += 1;
        let neighborhood = graph.neighbors_of_set(&subset);
        let p_n: f64 = neighborhood.iter().map(|&p| world.mass[p]).sum();
        if p_n + MASS_TOL < (c_bar * p_v).min(1.0) {
            holds = false;
        }
        if p_v > 0.0 {
            let ratio = p_n / p_v;
            if ratio < c_star {
                c_star = ratio;
                witness = subset;
            }
        }
    }
    if c_star == f64::INFINITY {
        // No qualifying subset with positive mass: expansion holds vacuously.
        c_star = f64::MAX;
    }
    Ok(ExpansionReport { group, alpha, c_bar, holds, c_star, witness, subsets_checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theorylab::hand_world;
    use std::collections::BTreeMap;

    fn uniform_group4() -> DiscreteWorld {
        hand_world(&[vec![0.25; 4], vec![1.0], vec![1.0], vec![1.0]])
    }

    #[test]
    fn fully_connected_group_expands_for_any_c() {
        let world = uniform_group4();
        let pts = world.points_in_group(0);
        // Hub map: everyone maps to point pts[0], so all balls overlap.
        let hub: BTreeMap<usize, usize> = pts.iter().map(|&p| (p, pts[0])).collect();
        let graph = NeighborGraph::build(&world, vec![hub]).unwrap();
        for c_bar in [2.0, 10.0, 1e6] {
            let rep = check_expansion(&world, &graph, 0, 0.9, c_bar).unwrap();
            assert!(rep.holds, "c_bar {}", c_bar);
        }
    }

    #[test]
    fn isolated_point_has_ratio_one_and_fails() {
        // Point with no incident map: N({x}) = {x}, so c*(alpha) = 1 for any
        // alpha at or above its mass, and expansion fails for any c_bar > 1.
        let world = hand_world(&[vec![0.5, 0.3, 0.2], vec![1.0], vec![1.0], vec![1.0]]);
        let pts = world.points_in_group(0);
        // Connect only the first two points; pts[2] is isolated.
        let map = BTreeMap::from([(pts[0], pts[1]), (pts[1], pts[0])]);
        let graph = NeighborGraph::build(&world, vec![map]).unwrap();
        let rep = check_expansion(&world, &graph, 0, 0.25, 1.5).unwrap();
        assert!(!rep.holds);
        assert!((rep.c_star - 1.0).abs() < 1e-12);
        assert_eq!(rep.witness, vec![pts[2]]);
    }

    #[test]
    fn four_point_uniform_cycle_has_c_star_three() {
        // Subset enumeration oracle: at alpha = 0.3 only singletons qualify;
        // each singleton's closed neighborhood on the cycle has mass 0.75.
        let world = uniform_group4();
        let pts = world.points_in_group(0);
        let fwd: BTreeMap<usize, usize> =
            pts.iter().enumerate().map(|(i, &p)| (p, pts[(i + 1) % 4])).collect();
        let graph = NeighborGraph::build(&world, vec![fwd]).unwrap();
        let rep = check_expansion(&world, &graph, 0, 0.3, 3.0).unwrap();
        assert!((rep.c_star - 3.0).abs() < 1e-12);
        assert!(rep.holds);
        assert_eq!(rep.subsets_checked, 4);
        // Any c_bar above 3 must fail on the singleton witness.
        let rep = check_expansion(&world, &graph, 0, 0.3, 3.1).unwrap();
        assert!(!rep.holds);
    }

    #[test]
    fn neighborhood_never_shrinks() {
        // c*(alpha) >= 1 always, since x is in N({x}).
        let world = uniform_group4();
        let pts = world.points_in_group(0);
        let map = BTreeMap::from([(pts[1], pts[2])]);
        let graph = NeighborGraph::build(&world, vec![map]).unwrap();
        let rep = check_expansion(&world, &graph, 0, 1.0, 1.0).unwrap();
        assert!(rep.c_star >= 1.0);
    }

    #[test]
    fn oversized_group_hits_budget_error() {
        let world = hand_world(&[vec![1.0 / 21.0; 21], vec![1.0], vec![1.0], vec![1.0]]);
        // Masses do not exactly sum to 1; validate() is not called here and
        // the budget check fires before any mass arithmetic.
        let graph = NeighborGraph::build(&world, vec![]).unwrap();
        let err = check_expansion(&world, &graph, 0, 0.3, 4.0).unwrap_err();
        assert!(matches!(err, Error::Budget(_)));
    }
}
