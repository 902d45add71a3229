//! Group-preserving data transformations.
//!
//! Both transforms leave the label and the sensitive attribute untouched:
//! nuisance resampling rewrites nuisance factor values and re-emits, and
//! feature corruption rewrites a random subset of unprotected coordinates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Dataset, Emitter, FactorLayout, FactorRole, LabeledSample, ShiftScenario};

pub trait Transform: Send + Sync {
    /// A transformed feature vector for the sample. `y` and `a` are never
    /// consulted for anything but re-emission of the unchanged values.
    fn apply(&self, sample: &LabeledSample, rng: &mut ChaCha8Rng) -> Vec<f64>;

    fn name(&self) -> &'static str;
}

/// Re-emits the sample's own factor tuple with fresh noise.
#[derive(Debug, Clone)]
pub struct IdentityTransform;

impl Transform for IdentityTransform {
    fn apply(&self, sample: &LabeledSample, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        sample.x.clone()
    }

    fn name(&self) -> &'static str {
        "identity"
    }
}

/// Resamples chosen nuisance factors uniformly over the union of the source
/// and target supports, then re-emits the feature vector. Sampling the union
/// is what lets a transformation reach target-only factor values from a
/// source sample.
#[derive(Debug, Clone)]
pub struct NuisanceResample {
    layout: FactorLayout,
    emitter: Emitter,
    /// Positions into `LabeledSample::nuisance` that get resampled.
    transformable: Vec<usize>,
    /// Union support values per transformable position, parallel to it.
    union_supports: Vec<Vec<usize>>,
}

impl NuisanceResample {
    pub fn new(scenario: &ShiftScenario, emitter: Emitter, factor_names: &[&str]) -> Result<Self> {
        let layout = scenario.layout.clone();
        let mut transformable = Vec::new();
        let mut union_supports = Vec::new();
        for name in factor_names {
            let f = layout
                .factor_by_name(name)
                .ok_or_else(|| Error::Contract(format!("unknown factor `{}`", name)))?;
            if f.role != FactorRole::Nuisance {
                return Err(Error::Contract(format!(
                    "factor `{}` is not a nuisance factor; transforms must preserve the group",
                    name
                )));
            }
            let pos = layout.nuisance_position(name).unwrap();
            let support = scenario.union_support(pos);
            if support.is_empty() {
                return Err(Error::Config(format!("factor `{}` has empty union support", name)));
            }
            transformable.push(pos);
            union_supports.push(support);
        }
        Ok(Self { layout, emitter, transformable, union_supports })
    }

    /// The transformed nuisance tuple alongside the features, for tests and
    /// the discrete-world bridge.
    pub fn resample_tuple(&self, sample: &LabeledSample, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut nuisance = sample.nuisance.clone();
        for (pos, support) in self.transformable.iter().zip(self.union_supports.iter()) {
            nuisance[*pos] = support[rng.gen_range(0..support.len())];
        }
        nuisance
    }
}

impl Transform for NuisanceResample {
    fn apply(&self, sample: &LabeledSample, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let nuisance = self.resample_tuple(sample, rng);
        self.emitter.emit(&self.layout, sample.y, sample.a, &nuisance, rng)
    }

    fn name(&self) -> &'static str {
        "nuisance_resample"
    }
}

/// Replaces a fixed-size random subset of unprotected coordinates with
/// per-coordinate uniform draws between the training-set minimum and
/// maximum of that coordinate.
#[derive(Debug, Clone)]
pub struct FeatureCorruption {
    protected: Vec<bool>,
    corruption_fraction: f64,
    ranges: Vec<(f64, f64)>,
}

impl FeatureCorruption {
    pub fn from_dataset(
        train: &Dataset,
        protected_indices: &[usize],
        corruption_fraction: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&corruption_fraction) {
            return Err(Error::Config(format!(
                "corruption_fraction {} outside [0, 1]",
                corruption_fraction
            )));
        }
        let d = train.feature_dim;
        for &i in protected_indices {
            if i >= d {
                return Err(Error::Config(format!("protected index {} outside feature_dim {}", i, d)));
            }
        }
        let mut protected = vec![false; d];
        for &i in protected_indices {
            protected[i] = true;
        }
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for smp in &train.samples {
            for (r, &v) in ranges.iter_mut().zip(smp.x.iter()) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        Ok(Self { protected, corruption_fraction, ranges })
    }

    fn num_to_corrupt(&self, eligible: usize) -> usize {
        (self.corruption_fraction * eligible as f64).round() as usize
    }
}

impl Transform for FeatureCorruption {
    fn apply(&self, sample: &LabeledSample, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = sample.x.clone();
        let mut eligible: Vec<usize> =
            (0..x.len()).filter(|&i| !self.protected[i]).collect();
        let k = self.num_to_corrupt(eligible.len());
        // Partial Fisher-Yates: the first k entries become the chosen coords.
        for j in 0..k {
            let pick = rng.gen_range(j..eligible.len());
            eligible.swap(j, pick);
            let i = eligible[j];
            let (lo, hi) = self.ranges[i];
            x[i] = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        }
        x
    }

    fn name(&self) -> &'static str {
        "feature_corruption"
    }
}
