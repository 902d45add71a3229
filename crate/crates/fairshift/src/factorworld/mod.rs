//! Latent-factor generative worlds under controlled distribution shifts.
//!
//! A world has one label factor, one sensitive factor, and any number of
//! nuisance factors. A fixed emitter maps factor tuples to feature vectors;
//! the two domains differ only in the marginal distributions of the factors,
//! never in the emitter itself.

pub mod io;
pub mod transforms;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorRole {
    Label,
    Sensitive,
    Nuisance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub cardinality: usize,
    pub role: FactorRole,
}

/// Ordered factor list with exactly one label and one sensitive factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorLayout {
    factors: Vec<FactorSpec>,
}

impl FactorLayout {
    pub fn new(factors: Vec<FactorSpec>) -> Result<Self> {
        let labels = factors.iter().filter(|f| f.role == FactorRole::Label).count();
        let sensitives = factors.iter().filter(|f| f.role == FactorRole::Sensitive).count();
        if labels != 1 || sensitives != 1 {
            return Err(Error::Config(format!(
                "layout needs exactly one label and one sensitive factor, got {} and {}",
                labels, sensitives
            )));
        }
        for f in &factors {
            let min = match f.role {
                FactorRole::Label | FactorRole::Sensitive => 2,
                FactorRole::Nuisance => 1,
            };
            if f.cardinality < min {
                return Err(Error::Config(format!(
                    "factor `{}` needs cardinality >= {}",
                    f.name, min
                )));
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn label(&self) -> &FactorSpec {
        self.factors.iter().find(|f| f.role == FactorRole::Label).unwrap()
    }

    pub fn sensitive(&self) -> &FactorSpec {
        self.factors.iter().find(|f| f.role == FactorRole::Sensitive).unwrap()
    }

    pub fn num_labels(&self) -> usize {
        self.label().cardinality
    }

    pub fn num_sensitive(&self) -> usize {
        self.sensitive().cardinality
    }

    pub fn num_groups(&self) -> usize {
        self.num_labels() * self.num_sensitive()
    }

    /// Nuisance factors in layout order; positions index `LabeledSample::nuisance`.
    pub fn nuisance(&self) -> Vec<&FactorSpec> {
        self.factors.iter().filter(|f| f.role == FactorRole::Nuisance).collect()
    }

    pub fn nuisance_position(&self, name: &str) -> Option<usize> {
        self.nuisance().iter().position(|f| f.name == name)
    }

    pub fn factor_by_name(&self, name: &str) -> Option<&FactorSpec> {
        self.factors.iter().find(|f| f.name == name)
    }

    /// Group index convention: `y * num_sensitive + a`.
    pub fn group_id(&self, y: usize, a: usize) -> usize {
        y * self.num_sensitive() + a
    }
}

/// Per-domain factor marginals: a joint table over (label, sensitive) and
/// one categorical pmf per nuisance factor, with explicit support masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Index `y * num_sensitive + a`.
    pub joint_label_sensitive: Vec<f64>,
    pub nuisance_marginals: Vec<Vec<f64>>,
    pub support_masks: Vec<Vec<bool>>,
}

fn check_pmf(pmf: &[f64], what: &str) -> Result<()> {
    if pmf.iter().any(|&p| p < 0.0) {
        return Err(Error::Config(format!("{}: negative probability", what)));
    }
    let sum: f64 = pmf.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Config(format!("{}: probabilities sum to {}, expected 1", what, sum)));
    }
    if pmf.iter().all(|&p| p == 0.0) {
        return Err(Error::Config(format!("{}: degenerate all-zero pmf", what)));
    }
    Ok(())
}

impl DomainConfig {
    /// Support masks derived from the pmfs' positive entries.
    pub fn new(joint_label_sensitive: Vec<f64>, nuisance_marginals: Vec<Vec<f64>>) -> Self {
        let support_masks = nuisance_marginals
            .iter()
            .map(|pmf| pmf.iter().map(|&p| p > 0.0).collect())
            .collect();
        Self { joint_label_sensitive, nuisance_marginals, support_masks }
    }

    pub fn validate(&self, layout: &FactorLayout) -> Result<()> {
        if self.joint_label_sensitive.len() != layout.num_groups() {
            return Err(Error::Config("joint table size does not match layout".into()));
        }
        check_pmf(&self.joint_label_sensitive, "joint (label, sensitive) table")?;
        let nuisance = layout.nuisance();
        if self.nuisance_marginals.len() != nuisance.len() || self.support_masks.len() != nuisance.len() {
            return Err(Error::Config("nuisance marginal count does not match layout".into()));
        }
        for (i, f) in nuisance.iter().enumerate() {
            let pmf = &self.nuisance_marginals[i];
            let mask = &self.support_masks[i];
            if pmf.len() != f.cardinality || mask.len() != f.cardinality {
                return Err(Error::Config(format!("factor `{}`: pmf length mismatch", f.name)));
            }
            check_pmf(pmf, &format!("factor `{}` pmf", f.name))?;
            for (v, (&p, &ok)) in pmf.iter().zip(mask.iter()).enumerate() {
                if !ok && p != 0.0 {
                    return Err(Error::Config(format!(
                        "factor `{}`: value {} has mass outside its support mask",
                        f.name, v
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    Sshift1,
    Sshift2,
    Dshift,
    Hshift,
    Custom,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sshift1" => Ok(Self::Sshift1),
            "sshift2" => Ok(Self::Sshift2),
            "dshift" => Ok(Self::Dshift),
            "hshift" => Ok(Self::Hshift),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Config(format!("unknown scenario kind `{}`", other))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Sshift1 => "sshift1",
            Self::Sshift2 => "sshift2",
            Self::Dshift => "dshift",
            Self::Hshift => "hshift",
            Self::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScenario {
    pub kind: ScenarioKind,
    pub layout: FactorLayout,
    pub source: DomainConfig,
    pub target: DomainConfig,
}

impl ShiftScenario {
    pub fn custom(layout: FactorLayout, source: DomainConfig, target: DomainConfig) -> Result<Self> {
        let s = Self { kind: ScenarioKind::Custom, layout, source, target };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate(&self.layout)?;
        self.target.validate(&self.layout)?;
        match self.kind {
            ScenarioKind::Sshift1 | ScenarioKind::Dshift => {
                if self.source.joint_label_sensitive != self.target.joint_label_sensitive {
                    return Err(Error::Config(format!(
                        "{}: source and target (label, sensitive) tables must be equal",
                        self.kind
                    )));
                }
            }
            _ => {}
        }
        if matches!(self.kind, ScenarioKind::Dshift | ScenarioKind::Hshift)
            && self.source.support_masks == self.target.support_masks
        {
            return Err(Error::Config(format!(
                "{}: source and target supports must differ on the shifted factor",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn config(&self, domain: Domain) -> &DomainConfig {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    /// Values permitted in either domain for the given nuisance factor.
    pub fn union_support(&self, nuisance_pos: usize) -> Vec<usize> {
        let s = &self.source.support_masks[nuisance_pos];
        let t = &self.target.support_masks[nuisance_pos];
        (0..s.len()).filter(|&v| s[v] || t[v]).collect()
    }
}

/// Canonical layout for the built-in scenarios: binary label `y`, binary
/// sensitive attribute `a`, one shifting nuisance factor `d`, and
/// `background_factors` static nuisance factors (`bg0`, `bg1`, ...) whose
/// marginals stay uniform in both domains. Background factors carry the
/// within-group variation that the transformations do not touch.
pub fn scenario_layout_with_background(
    num_nuisance_values: usize,
    background_factors: usize,
    background_cardinality: usize,
) -> Result<FactorLayout> {
    let mut factors = vec![
        FactorSpec { name: "y".into(), cardinality: 2, role: FactorRole::Label },
        FactorSpec { name: "a".into(), cardinality: 2, role: FactorRole::Sensitive },
        FactorSpec { name: "d".into(), cardinality: num_nuisance_values, role: FactorRole::Nuisance },
    ];
    for b in 0..background_factors {
        factors.push(FactorSpec {
            name: format!("bg{}", b),
            cardinality: background_cardinality,
            role: FactorRole::Nuisance,
        });
    }
    FactorLayout::new(factors)
}

pub fn scenario_layout(num_nuisance_values: usize) -> Result<FactorLayout> {
    scenario_layout_with_background(num_nuisance_values, 0, 0)
}

const JOINT_BASE: [f64; 4] = [0.1, 0.4, 0.4, 0.1];
const JOINT_FLIPPED: [f64; 4] = [0.4, 0.1, 0.1, 0.4];

/// The four named shift scenarios. At eight nuisance values the tables are
/// the canonical ones: Sshift1 tilts P(D) from [4,4,3,1,...]/16 to its
/// mirror, Sshift2 flips the (y, a) correlation, Dshift moves from a
/// two-value support to the full uniform support, Hshift combines both.
/// Background factors, when present, are uniform in both domains.
pub fn build_scenario_with_background(
    kind: ScenarioKind,
    num_nuisance_values: usize,
    background_factors: usize,
    background_cardinality: usize,
) -> Result<ShiftScenario> {
    if kind == ScenarioKind::Custom {
        return Err(Error::Config(
            "custom scenarios carry their own domain configs; use ShiftScenario::custom".into(),
        ));
    }
    let n = num_nuisance_values;
    if n < 4 {
        return Err(Error::Config("named scenarios need at least 4 nuisance values".into()));
    }
    let layout = scenario_layout_with_background(n, background_factors, background_cardinality)?;

    let uniform: Vec<f64> = vec![1.0 / n as f64; n];
    let skew_low: Vec<f64> = {
        // weights [4, 4, 3, 1, 1, ...]; total 11 + (n - 3)
        let total = (11 + (n - 3)) as f64;
        (0..n)
            .map(|v| match v {
                0 | 1 => 4.0 / total,
                2 => 3.0 / total,
                _ => 1.0 / total,
            })
            .collect()
    };
    let skew_high: Vec<f64> = skew_low.iter().rev().cloned().collect();
    let two_value: Vec<f64> = (0..n).map(|v| if v < 2 { 0.5 } else { 0.0 }).collect();

    let (src_joint, tgt_joint, src_d, tgt_d) = match kind {
        ScenarioKind::Sshift1 => (JOINT_BASE, JOINT_BASE, skew_low, skew_high),
        ScenarioKind::Sshift2 => (JOINT_BASE, JOINT_FLIPPED, uniform.clone(), uniform),
        ScenarioKind::Dshift => (JOINT_BASE, JOINT_BASE, two_value, uniform),
        ScenarioKind::Hshift => (JOINT_BASE, JOINT_FLIPPED, two_value, uniform),
        ScenarioKind::Custom => unreachable!(),
    };

    let mut src_marginals = vec![src_d];
    let mut tgt_marginals = vec![tgt_d];
    for _ in 0..background_factors {
        src_marginals.push(vec![1.0 / background_cardinality as f64; background_cardinality]);
        tgt_marginals.push(vec![1.0 / background_cardinality as f64; background_cardinality]);
    }

    let scenario = ShiftScenario {
        kind,
        layout,
        source: DomainConfig::new(src_joint.to_vec(), src_marginals),
        target: DomainConfig::new(tgt_joint.to_vec(), tgt_marginals),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn build_scenario(kind: ScenarioKind, num_nuisance_values: usize) -> Result<ShiftScenario> {
    build_scenario_with_background(kind, num_nuisance_values, 0, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn letter(self) -> char {
        match self {
            Domain::Source => 'S',
            Domain::Target => 'T',
        }
    }

    pub fn from_letter(c: char) -> Result<Self> {
        match c {
            'S' => Ok(Domain::Source),
            'T' => Ok(Domain::Target),
            other => Err(Error::Parse(format!("unknown domain tag `{}`", other))),
        }
    }
}

/// Fixed generative map from factor tuples to features:
/// `x = sep * e(y, d) + sep * e(a) + sum_nuisance e(d_j) + noise_scale * eps`
/// with `eps ~ N(0, I)`.
///
/// Embeddings are frozen at build time; label and sensitive embeddings are
/// scaled by a separability multiplier so groups stay disjoint. The label's
/// embedding is drawn per (label, first-nuisance-value) pair: how a class
/// manifests in feature space changes with the shifting factor, the way a
/// rendered object's appearance changes with its scale. A classifier
/// therefore has to learn each nuisance value's class regions rather than
/// read the label off one global direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub feature_dim: usize,
    pub noise_scale: f64,
    /// embeddings[factor][value] is a feature_dim vector. For the label
    /// factor of a layout with nuisance factors the outer index is
    /// `y * first_nuisance_cardinality + d`.
    embeddings: Vec<Vec<Vec<f64>>>,
    /// Cardinality of the first nuisance factor, if any.
    interaction_values: Option<usize>,
}

impl Emitter {
    pub fn build(
        layout: &FactorLayout,
        feature_dim: usize,
        noise_scale: f64,
        separability: f64,
        seed: u64,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if noise_scale < 0.0 {
            return Err(Error::Config("noise_scale must be nonnegative".into()));
        }
        let interaction_values = layout.nuisance().first().map(|f| f.cardinality);
        let mut embeddings = Vec::with_capacity(layout.factors().len());
        for (fi, f) in layout.factors().iter().enumerate() {
            let (scale, values) = match f.role {
                FactorRole::Label => (separability, f.cardinality * interaction_values.unwrap_or(1)),
                FactorRole::Sensitive => (separability, f.cardinality),
                FactorRole::Nuisance => (1.0, f.cardinality),
            };
            let mut per_value = Vec::with_capacity(values);
            for v in 0..values {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((fi as u64) << 32) | v as u64);
                let mut e = vec![0.0; feature_dim];
                fill_normals(&mut rng, &mut e);
                for x in e.iter_mut() {
                    *x *= scale;
                }
                per_value.push(e);
            }
            embeddings.push(per_value);
        }
        Ok(Self { feature_dim, noise_scale, embeddings, interaction_values })
    }

    /// Deterministic part of the emission: the embedding sum of a tuple.
    /// Factor values are given in layout order (label, sensitive, nuisance
    /// interleaved as declared).
    pub fn embedding_sum(&self, layout: &FactorLayout, y: usize, a: usize, nuisance: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.feature_dim];
        let mut npos = 0;
        for (fi, f) in layout.factors().iter().enumerate() {
            let v = match f.role {
                FactorRole::Label => match self.interaction_values {
                    Some(m) => y * m + nuisance[0],
                    None => y,
                },
                FactorRole::Sensitive => a,
                FactorRole::Nuisance => {
                    let v = nuisance[npos];
                    npos += 1;
                    v
                }
            };
            let e = &self.embeddings[fi][v];
            for (xi, ei) in x.iter_mut().zip(e.iter()) {
                *xi += ei;
            }
        }
        x
    }

    /// Full emission with fresh Gaussian noise from `rng`. The same factor
    /// tuple and the same rng state always produce the same vector; the
    /// domain never enters.
    pub fn emit(&self, layout: &FactorLayout, y: usize, a: usize, nuisance: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = self.embedding_sum(layout, y, a, nuisance);
        let mut noise = vec![0.0; self.feature_dim];
        fill_normals(rng, &mut noise);
        for (xi, n) in x.iter_mut().zip(noise.iter()) {
            *xi += self.noise_scale * n;
        }
        x
    }
}

/// Standard normals via Box-Muller, two per uniform pair.
pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out[i] = r * theta.cos();
        if i + 1 < out.len() {
            out[i + 1] = r * theta.sin();
        }
        i += 2;
    }
}

/// Inverse-CDF draw from a categorical pmf.
pub fn draw_categorical(pmf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Guard against the trailing-sum-below-one corner: last positive entry.
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(pmf.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: usize,
    pub a: usize,
    pub nuisance: Vec<usize>,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub feature_dim: usize,
    pub num_labels: usize,
    pub num_sensitive: usize,
    pub nuisance_cardinalities: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.num_labels * self.num_sensitive
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.samples[i].y * self.num_sensitive + self.samples[i].a
    }

    /// Indices of each (y, a) group, in dataset order.
    pub fn group_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_groups()];
        for i in 0..self.len() {
            groups[self.group_of(i)].push(i);
        }
        groups
    }

    /// Merge datasets with identical schema (used for the unlabeled pool).
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Contract("concat of zero datasets".into()))?;
        let mut out = (*first).clone();
        for p in &parts[1..] {
            if p.feature_dim != out.feature_dim
                || p.num_labels != out.num_labels
                || p.num_sensitive != out.num_sensitive
            {
                return Err(Error::Contract("dataset schema mismatch in concat".into()));
            }
            out.samples.extend(p.samples.iter().cloned());
        }
        Ok(out)
    }
}

/// Draw `n` i.i.d. samples from one domain's marginals through the shared
/// emitter. Fully deterministic given the seed.
pub fn sample_dataset(
    layout: &FactorLayout,
    config: &DomainConfig,
    emitter: &Emitter,
    n: usize,
    seed: u64,
    domain: Domain,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    config.validate(layout)?;
    let n_a = layout.num_sensitive();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let cell = draw_categorical(&config.joint_label_sensitive, &mut rng);
        let (y, a) = (cell / n_a, cell % n_a);
        let nuisance: Vec<usize> = config
            .nuisance_marginals
            .iter()
            .map(|pmf| draw_categorical(pmf, &mut rng))
            .collect();
        let x = emitter.emit(layout, y, a, &nuisance, &mut rng);
        samples.push(LabeledSample { x, y, a, nuisance, domain });
    }
    Ok(Dataset {
        samples,
        feature_dim: emitter.feature_dim,
        num_labels: layout.num_labels(),
        num_sensitive: layout.num_sensitive(),
        nuisance_cardinalities: layout.nuisance().iter().map(|f| f.cardinality).collect(),
    })
}
