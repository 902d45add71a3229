//! Exact certification of the self-training fairness theory on finite
//! discrete worlds: neighbor graphs from transformation maps, multiplicative
//! intra-group expansion, consistency/error/disagreement losses, the main
//! error and unfairness bounds, and the subpopulation-shift propositions.
//!
//! Everything here is enumeration: no sampling, no approximation.

pub mod bounds;
pub mod expansion;
pub mod minimax;
pub mod propositions;
pub mod worldgen;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorworld::Domain;
use crate::metrics::population_variance;

pub const MASS_TOL: f64 = 1e-12;

/// A finite point set with group and domain tags, per-point mass under its
/// group distribution `U_a^y = (S_a^y + T_a^y) / 2`, mixture weights over
/// groups, and the oracle labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWorld {
    pub num_labels: usize,
    pub num_sensitive: usize,
    /// Group id per point: `y * num_sensitive + a`.
    pub group: Vec<usize>,
    pub domain: Vec<Domain>,
    /// Mass of each point within its own group's distribution.
    pub mass: Vec<f64>,
    /// Mixture weight of each group in the population distribution U.
    pub group_weight: Vec<f64>,
    /// Oracle labels; within a group they all equal the group's label.
    pub oracle: Vec<usize>,
}

impl DiscreteWorld {
    pub fn num_points(&self) -> usize {
        self.group.len()
    }

    pub fn num_groups(&self) -> usize {
        self.num_labels * self.num_sensitive
    }

    pub fn group_label(&self, group_id: usize) -> usize {
        group_id / self.num_sensitive
    }

    pub fn points_in_group(&self, group_id: usize) -> Vec<usize> {
        (0..self.num_points()).filter(|&p| self.group[p] == group_id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_points();
        if self.domain.len() != n || self.mass.len() != n || self.oracle.len() != n {
            return Err(Error::Contract("world field lengths disagree".into()));
        }
        if self.group_weight.len() != self.num_groups() {
            return Err(Error::Contract("one mixture weight per group required".into()));
        }
        let wsum: f64 = self.group_weight.iter().sum();
        if (wsum - 1.0).abs() > MASS_TOL || self.group_weight.iter().any(|&w| w < 0.0) {
            return Err(Error::Contract("group mixture weights must form a distribution".into()));
        }
        for g in 0..self.num_groups() {
            let pts = self.points_in_group(g);
            if pts.is_empty() {
                continue;
            }
            let sum: f64 = pts.iter().map(|&p| self.mass[p]).sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(Error::Contract(format!("group {} masses sum to {}", g, sum)));
            }
            let y = self.group_label(g);
            if pts.iter().any(|&p| self.oracle[p] != y) {
                return Err(Error::Contract(format!(
                    "group {} contains a point whose oracle label is not {}",
                    g, y
                )));
            }
        }
        if self.mass.iter().any(|&m| m < 0.0) {
            return Err(Error::Contract("negative point mass".into()));
        }
        Ok(())
    }
}

/// Transformation-induced neighborhood structure. Balls are radius-zero:
/// `B(x) = {x} union {images of x under each partial map}`. Neighbors are
/// group-restricted ball overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub maps: Vec<BTreeMap<usize, usize>>,
    pub balls: Vec<BTreeSet<usize>>,
    pub neighbors: Vec<BTreeSet<usize>>,
}

impl NeighborGraph {
    pub fn build(world: &DiscreteWorld, maps: Vec<BTreeMap<usize, usize>>) -> Result<Self> {
        let n = world.num_points();
        for (k, map) in maps.iter().enumerate() {
            for (&from, &to) in map {
                if from >= n || to >= n {
                    return Err(Error::Contract(format!("map {} references a missing point", k)));
                }
            }
        }
        let mut balls = Vec::with_capacity(n);
        for p in 0..n {
            let mut ball = BTreeSet::new();
            ball.insert(p);
            for map in &maps {
                if let Some(&q) = map.get(&p) {
                    ball.insert(q);
                }
            }
            balls.push(ball);
        }
        let mut neighbors = Vec::with_capacity(n);
        for p in 0..n {
            let mut nb = BTreeSet::new();
            for q in 0..n {
                if world.group[q] == world.group[p] && !balls[p].is_disjoint(&balls[q]) {
                    nb.insert(q);
                }
            }
            neighbors.push(nb);
        }
        let graph = Self { maps, balls, neighbors };
        graph.assert_invariants(world)?;
        Ok(graph)
    }

    /// Symmetry and group closure of the neighbor relation.
    fn assert_invariants(&self, world: &DiscreteWorld) -> Result<()> {
        let n = world.num_points();
        for p in 0..n {
            if !self.neighbors[p].contains(&p) {
                return Err(Error::Contract(format!("point {} is not its own neighbor", p)));
            }
            for &q in &self.neighbors[p] {
                if world.group[q] != world.group[p] {
                    return Err(Error::Contract(format!("neighbor {} of {} leaves the group", q, p)));
                }
                if !self.neighbors[q].contains(&p) {
                    return Err(Error::Contract(format!("neighbor relation asymmetric at ({}, {})", p, q)));
                }
            }
        }
        Ok(())
    }

    /// `N(V)`: the union of the group-restricted neighborhoods of V's points.
    pub fn neighbors_of_set(&self, set: &[usize]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &p in set {
            out.extend(self.neighbors[p].iter().copied());
        }
        out
    }
}

/// Per-group values plus their mixture over the population distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupValues {
    pub per_group: Vec<f64>,
    pub overall: f64,
}

impl GroupValues {
    fn mix(per_group: Vec<f64>, world: &DiscreteWorld) -> Self {
        let overall = per_group.iter().zip(world.group_weight.iter()).map(|(v, w)| v * w).sum();
        Self { per_group, overall }
    }

    pub fn max(&self) -> f64 {
        self.per_group.iter().cloned().fold(0.0, f64::max)
    }
}

fn check_total(world: &DiscreteWorld, g: &[usize], what: &str) -> Result<()> {
    if g.len() != world.num_points() {
        return Err(Error::Contract(format!("{} must label every point", what)));
    }
    if g.iter().any(|&l| l >= world.num_labels) {
        return Err(Error::Contract(format!("{} assigns an out-of-range label", what)));
    }
    Ok(())
}

/// Consistency loss per group: the mass of points x whose ball contains a
/// point classified differently from x.
pub fn consistency_loss_discrete(
    world: &DiscreteWorld,
    graph: &NeighborGraph,
    g: &[usize],
) -> Result<GroupValues> {
    check_total(world, g, "classifier")?;
    let mut per_group = vec![0.0; world.num_groups()];
    for p in 0..world.num_points() {
        if graph.balls[p].iter().any(|&q| g[q] != g[p]) {
            per_group[world.group[p]] += world.mass[p];
        }
    }
    Ok(GroupValues::mix(per_group, world))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDisagreement {
    /// 0-1 error vs the oracle labels.
    pub error: GroupValues,
    /// 0-1 disagreement vs the reference classifier.
    pub disagreement: GroupValues,
}

pub fn error_and_disagreement(
    world: &DiscreteWorld,
    g: &[usize],
    g_ref: &[usize],
) -> Result<ErrorDisagreement> {
    check_total(world, g, "classifier")?;
    check_total(world, g_ref, "reference classifier")?;
    let mut err = vec![0.0; world.num_groups()];
    let mut dis = vec![0.0; world.num_groups()];
    for p in 0..world.num_points() {
        if g[p] != world.oracle[p] {
            err[world.group[p]] += world.mass[p];
        }
        if g[p] != g_ref[p] {
            dis[world.group[p]] += world.mass[p];
        }
    }
    Ok(ErrorDisagreement {
        error: GroupValues::mix(err, world),
        disagreement: GroupValues::mix(dis, world),
    })
}

/// Group errors alone, when no reference classifier is involved.
pub fn group_errors(world: &DiscreteWorld, g: &[usize]) -> Result<GroupValues> {
    Ok(error_and_disagreement(world, g, g)?.error)
}

/// Equalized odds on a discrete world from group errors:
/// half the summed per-class gaps between the two sensitive groups.
pub fn delta_odds_discrete(world: &DiscreteWorld, g: &[usize]) -> Result<f64> {
    if world.num_sensitive != 2 {
        return Err(Error::Contract("discrete equalized odds needs a binary sensitive attribute".into()));
    }
    let errs = group_errors(world, g)?;
    let mut total = 0.0;
    for y in 0..world.num_labels {
        let e0 = errs.per_group[y * 2];
        let e1 = errs.per_group[y * 2 + 1];
        total += (e0 - e1).abs();
    }
    Ok(0.5 * total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVariance {
    pub group_consistency: Vec<f64>,
    pub consistency_variance: f64,
    /// Population variance of the per-group accuracies of `g`, raw units.
    pub accuracy_variance: f64,
}

/// Variance diagnostics linking group consistency dispersion to group
/// accuracy dispersion.
pub fn group_consistency_variance(
    world: &DiscreteWorld,
    graph: &NeighborGraph,
    g: &[usize],
) -> Result<ConsistencyVariance> {
    let r = consistency_loss_discrete(world, graph, g)?;
    let errs = group_errors(world, g)?;
    let accs: Vec<f64> = errs.per_group.iter().map(|e| 1.0 - e).collect();
    Ok(ConsistencyVariance {
        consistency_variance: population_variance(&r.per_group),
        group_consistency: r.per_group,
        accuracy_variance: population_variance(&accs),
    })
}

#[cfg(test)]
pub(crate) fn hand_world(masses_per_group: &[Vec<f64>]) -> DiscreteWorld {
    assert_eq!(masses_per_group.len(), 4, "binary worlds have 4 groups");
    let mut group = Vec::new();
    let mut mass = Vec::new();
    let mut oracle = Vec::new();
    for (g, masses) in masses_per_group.iter().enumerate() {
        for &m in masses {
            group.push(g);
            mass.push(m);
            oracle.push(g / 2);
        }
    }
    let n = group.len();
    DiscreteWorld {
        num_labels: 2,
        num_sensitive: 2,
        domain: vec![Domain::Source; n],
        group,
        mass,
        group_weight: vec![0.25; 4],
        oracle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cycle_map(points: &[usize]) -> BTreeMap<usize, usize> {
        points
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, points[(i + 1) % points.len()]))
            .collect()
    }

    fn world_with_cycles() -> (DiscreteWorld, NeighborGraph) {
        let world = hand_world(&[
            vec![0.5, 0.25, 0.25],
            vec![0.4, 0.3, 0.3],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0],
            vec![0.2, 0.3, 0.5],
        ]);
        world.validate().unwrap();
        let mut maps = Vec::new();
        for g in 0..4 {
            maps.push(cycle_map(&world.points_in_group(g)));
        }
        let graph = NeighborGraph::build(&world, maps).unwrap();
        (world, graph)
    }

    #[test]
    fn neighbor_symmetry_and_group_closure_hold() {
        // build() already asserts the invariants; just exercise it.
        let (world, graph) = world_with_cycles();
        for p in 0..world.num_points() {
            assert!(graph.neighbors[p].contains(&p));
        }
    }

    #[test]
    fn constant_classifier_has_zero_consistency_loss() {
        let (world, graph) = world_with_cycles();
        let g = vec![1usize; world.num_points()];
        let r = consistency_loss_discrete(&world, &graph, &g).unwrap();
        assert!(r.per_group.iter().all(|&v| v == 0.0));
        assert_eq!(r.overall, 0.0);
    }

    #[test]
    fn one_disagreeing_edge_marks_both_endpoints() {
        // Two points joined by a map, labeled differently: both inconsistent.
        let world = hand_world(&[vec![0.5, 0.5], vec![1.0], vec![1.0], vec![1.0]]);
        let maps = vec![BTreeMap::from([(0usize, 1usize)])];
        let graph = NeighborGraph::build(&world, maps).unwrap();
        let mut g = world.oracle.clone();
        g[0] = 1; // group 0 has oracle label 0
        let r = consistency_loss_discrete(&world, &graph, &g).unwrap();
        // Point 0's ball contains 1 (labels differ) and point 1's ball is
        // {1}; the overlap-based neighbor notion is symmetric but the ball
        // of 1 does not see 0, so only point 0 is inconsistent here.
        assert!((r.per_group[0] - 0.5).abs() < 1e-15);

        // Adding the reverse map makes both endpoints inconsistent.
        let maps = vec![
            BTreeMap::from([(0usize, 1usize)]),
            BTreeMap::from([(1usize, 0usize)]),
        ];
        let graph = NeighborGraph::build(&world, maps).unwrap();
        let r = consistency_loss_discrete(&world, &graph, &g).unwrap();
        assert!((r.per_group[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_classifier_matches_per_point_ball_enumeration() {
        let (world, graph) = world_with_cycles();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g: Vec<usize> = (0..world.num_points()).map(|_| rng.gen_range(0..2)).collect();
            let r = consistency_loss_discrete(&world, &graph, &g).unwrap();
            // Independent recomputation from explicit balls.
            let mut expect = vec![0.0; 4];
            for p in 0..world.num_points() {
                let mut bad = false;
                for &q in &graph.balls[p] {
                    if g[q] != g[p] {
                        bad = true;
                    }
                }
                if bad {
                    expect[world.group[p]] += world.mass[p];
                }
            }
            for (a, b) in r.per_group.iter().zip(expect.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn error_and_disagreement_examples() {
        let (world, _) = world_with_cycles();
        let oracle = world.oracle.clone();
        let out = error_and_disagreement(&world, &oracle, &oracle).unwrap();
        assert_eq!(out.error.overall, 0.0);
        assert_eq!(out.disagreement.overall, 0.0);

        // Hand world: masses (0.5, 0.25, 0.25) in group 0, flip the 0.25 one.
        let world = hand_world(&[vec![0.5, 0.25, 0.25], vec![1.0], vec![1.0], vec![1.0]]);
        let mut g = world.oracle.clone();
        g[1] = 1 - g[1];
        let out = error_and_disagreement(&world, &g, &world.oracle.clone()).unwrap();
        assert!((out.error.per_group[0] - 0.25).abs() < 1e-15);
        assert!((out.disagreement.per_group[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn delta_odds_from_group_errors() {
        let world = hand_world(&[vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0], vec![1.0]]);
        let mut g = world.oracle.clone();
        // Error 0.5 in group (y=0, a=0) only.
        g[0] = 1;
        let d = delta_odds_discrete(&world, &g).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn consistency_variance_examples() {
        let (world, graph) = world_with_cycles();
        let constant = vec![0usize; world.num_points()];
        let out = group_consistency_variance(&world, &graph, &constant).unwrap();
        assert_eq!(out.consistency_variance, 0.0);

        // Per-group R of (0, 0.5, 0, 0.5): variance of those four values.
        // Construct directly: flip one 0.5-mass point in groups 1 and 3.
        let world = hand_world(&[
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        ]);
        let mut maps = Vec::new();
        for g in 0..4 {
            let pts = world.points_in_group(g);
            maps.push(BTreeMap::from([(pts[0], pts[1]), (pts[1], pts[0])]));
        }
        let graph = NeighborGraph::build(&world, maps).unwrap();
        let mut g = world.oracle.clone();
        // Disagreement inside groups 1 and 3 only: R = 1.0 there (both
        // endpoints see the other), 0 elsewhere.
        let p1 = world.points_in_group(1)[0];
        let p3 = world.points_in_group(3)[0];
        g[p1] = 1 - g[p1];
        g[p3] = 1 - g[p3];
        let out = group_consistency_variance(&world, &graph, &g).unwrap();
        let expect = population_variance(&[0.0, 1.0, 0.0, 1.0]);
        assert!((out.consistency_variance - expect).abs() < 1e-15);

        // Two-value example from the population-variance identity.
        assert!((population_variance(&[0.0, 0.5]) - 0.0625).abs() < 1e-15);
    }
}
