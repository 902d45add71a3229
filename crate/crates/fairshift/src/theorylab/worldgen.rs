//! Seeded random generator for precondition-satisfying discrete worlds:
//! per-group Dirichlet masses, transformation maps biased toward intra-group
//! connectivity, a teacher corrupted from the oracle within the error
//! budget, and a feasible trained classifier within the disagreement budget.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorworld::Domain;

use super::bounds::{verify_theorem_bounds, BoundReport, TheoremParams};
use super::{DiscreteWorld, NeighborGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MuMode {
    /// mu = the smallest per-group teacher error.
    MinTeacherError,
    /// A fixed value; worlds whose teacher error dips below it are rejected.
    Fixed(f64),
}

impl std::str::FromStr for MuMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "min-teacher-error" {
            return Ok(Self::MinTeacherError);
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let v: f64 =
                v.parse().map_err(|_| Error::Config(format!("bad fixed mu value `{}`", v)))?;
            return Ok(Self::Fixed(v));
        }
        Err(Error::Config(format!("unknown mu mode `{}`", s)))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WorldGenConfig {
    pub alpha_bar: f64,
    pub c_bar: f64,
    pub min_points_per_group: usize,
    pub max_points_per_group: usize,
    pub mu_mode: MuMode,
    /// Probability that a group's teacher gets corrupted at all.
    pub corrupt_prob: f64,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        Self {
            alpha_bar: 0.3,
            c_bar: 4.0,
            min_points_per_group: 3,
            max_points_per_group: 5,
            mu_mode: MuMode::MinTeacherError,
            corrupt_prob: 0.85,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CertifiedWorld {
    pub world: DiscreteWorld,
    pub graph: NeighborGraph,
    pub teacher: Vec<usize>,
    pub params: TheoremParams,
    pub report: BoundReport,
    pub attempts: usize,
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
    v
}

/// One candidate world: structure varies per group between a hub map, a
/// cycle, and a cycle with a skip map.
fn candidate(rng: &mut ChaCha8Rng, cfg: &WorldGenConfig) -> Result<(DiscreteWorld, NeighborGraph, Vec<usize>)> {
    let mut group = Vec::new();
    let mut mass = Vec::new();
    let mut domain = Vec::new();
    let mut oracle = Vec::new();
    let mut group_points: Vec<Vec<usize>> = Vec::new();
    for g in 0..4 {
        let k = rng.gen_range(cfg.min_points_per_group..=cfg.max_points_per_group);
        let masses = dirichlet(rng, k);
        let mut pts = Vec::new();
        for m in masses {
            pts.push(group.len());
            group.push(g);
            mass.push(m);
            domain.push(if rng.gen::<f64>() < 0.5 { Domain::Source } else { Domain::Target });
            oracle.push(g / 2);
        }
        group_points.push(pts);
    }
    let world = DiscreteWorld {
        num_labels: 2,
        num_sensitive: 2,
        group,
        domain,
        mass,
        group_weight: dirichlet(rng, 4),
        oracle,
    };
    world.validate()?;

    let mut maps: Vec<BTreeMap<usize, usize>> = Vec::new();
    for pts in &group_points {
        let style = rng.gen_range(0..10);
        if style < 4 {
            // Hub: every ball meets the hub, the group is fully connected.
            let hub = pts[rng.gen_range(0..pts.len())];
            maps.push(pts.iter().map(|&p| (p, hub)).collect());
        } else if style < 7 {
            maps.push(pts.iter().enumerate().map(|(i, &p)| (p, pts[(i + 1) % pts.len()])).collect());
        } else {
            maps.push(pts.iter().enumerate().map(|(i, &p)| (p, pts[(i + 1) % pts.len()])).collect());
            maps.push(pts.iter().enumerate().map(|(i, &p)| (p, pts[(i + 2) % pts.len()])).collect());
        }
    }
    let graph = NeighborGraph::build(&world, maps)?;

    // Teacher: oracle corrupted per group on a random point within the
    // error budget, when one exists.
    let mut teacher = world.oracle.clone();
    for pts in &group_points {
        if rng.gen::<f64>() >= cfg.corrupt_prob {
            continue;
        }
        let eligible: Vec<usize> =
            pts.iter().copied().filter(|&p| world.mass[p] <= cfg.alpha_bar).collect();
        if eligible.is_empty() {
            continue;
        }
        let p = eligible[rng.gen_range(0..eligible.len())];
        teacher[p] = 1 - teacher[p];
    }
    Ok((world, graph, teacher))
}

/// Rejection-sample a world whose precondition certificates all pass.
/// The returned report certifies the teacher against itself (ghat =
/// teacher); callers verify their own ghat separately.
pub fn generate_certified(rng: &mut ChaCha8Rng, cfg: &WorldGenConfig) -> Result<CertifiedWorld> {
    const MAX_ATTEMPTS: usize = 20_000;
    for attempt in 1..=MAX_ATTEMPTS {
        let (world, graph, teacher) = candidate(rng, cfg)?;
        let teacher_err = super::group_errors(&world, &teacher)?;
        let mu = match cfg.mu_mode {
            MuMode::MinTeacherError => {
                teacher_err.per_group.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            MuMode::Fixed(v) => v,
        };
        let mut gamma = 0.0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                gamma = gamma.max((teacher_err.per_group[i] - teacher_err.per_group[j]).abs());
            }
        }
        let params = TheoremParams { alpha_bar: cfg.alpha_bar, c_bar: cfg.c_bar, mu, gamma };
        if params.validate().is_err() {
            continue;
        }
        let report = verify_theorem_bounds(&world, &graph, &teacher, &teacher, &params)?;
        if report.certified {
            return Ok(CertifiedWorld { world, graph, teacher, params, report, attempts: attempt });
        }
    }
    Err(Error::Budget(format!("no certified world within {} attempts", MAX_ATTEMPTS)))
}

/// A classifier satisfying every per-group disagreement budget: flip a
/// random mass-bounded subset of the teacher's labels in each group.
pub fn random_feasible_classifier(
    rng: &mut ChaCha8Rng,
    world: &DiscreteWorld,
    teacher: &[usize],
    mu: f64,
) -> Vec<usize> {
    let mut g = teacher.to_vec();
    for gid in 0..world.num_groups() {
        if rng.gen::<f64>() < 0.3 {
            continue; // leave this group at the teacher
        }
        let mut pts = world.points_in_group(gid);
        // Shuffle, then flip greedily while the budget allows.
        for i in (1..pts.len()).rev() {
            let j = rng.gen_range(0..=i);
            pts.swap(i, j);
        }
        let mut used = 0.0;
        for &p in &pts {
            if used + world.mass[p] <= mu {
                g[p] = 1 - g[p];
                used += world.mass[p];
            }
        }
    }
    g
}
