//! Exact verification of the subpopulation-shift propositions: a model that
//! is conditionally fair under every nuisance value stays fair when the
//! nuisance marginal shifts, and a fair model stays fair when the sensitive
//! attribute's marginal shifts. Both are closed-form mixture computations,
//! no sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorworld::PROB_TOL;

/// Conditional prediction rates P(g(X) = y | A = a, Y = y, Y^i = v) for a
/// binary label and sensitive attribute over an m-valued nuisance factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopRateTable {
    pub num_nuisance: usize,
    /// Index (a * 2 + y) * num_nuisance + v.
    rates: Vec<f64>,
}

impl SubpopRateTable {
    pub fn new(num_nuisance: usize, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != 4 * num_nuisance {
            return Err(Error::Contract(format!(
                "rate table needs {} entries, got {}",
                4 * num_nuisance,
                rates.len()
            )));
        }
        if rates.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::Contract("rates must lie in [0, 1]".into()));
        }
        Ok(Self { num_nuisance, rates })
    }

    pub fn rate(&self, a: usize, y: usize, v: usize) -> f64 {
        self.rates[(a * 2 + y) * self.num_nuisance + v]
    }

    pub fn set_rate(&mut self, a: usize, y: usize, v: usize, r: f64) {
        self.rates[(a * 2 + y) * self.num_nuisance + v] = r;
    }

    /// (y, v) pairs where the two sensitive groups' rates differ.
    pub fn premise_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..2 {
            for v in 0..self.num_nuisance {
                if self.rate(0, y, v) != self.rate(1, y, v) {
                    out.push((y, v));
                }
            }
        }
        out
    }

    /// Equalized odds under a nuisance marginal, by the mixture
    /// decomposition over the factor values.
    pub fn delta_odds(&self, nuisance_pmf: &[f64]) -> Result<f64> {
        if nuisance_pmf.len() != self.num_nuisance {
            return Err(Error::Contract("pmf length does not match the rate table".into()));
        }
        let mut total = 0.0;
        for y in 0..2 {
            let gap: f64 = (0..self.num_nuisance)
                .map(|v| nuisance_pmf[v] * (self.rate(0, y, v) - self.rate(1, y, v)))
                .sum();
            total += gap.abs();
        }
        Ok(0.5 * total)
    }
}

fn check_pmf(pmf: &[f64]) -> Result<()> {
    if pmf.iter().any(|&p| p < 0.0) {
        return Err(Error::Contract("negative probability in pmf".into()));
    }
    let s: f64 = pmf.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::Contract(format!("pmf sums to {}", s)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopReport {
    pub premise_ok: bool,
    pub violations: Vec<(usize, usize)>,
    pub source_odds: f64,
    pub target_odds: f64,
}

/// Fairness transfer under a nuisance subpopulation shift: when the rate
/// table is conditionally fair, the target equalized odds is exactly zero
/// whatever the shifted marginal. A violated premise is reported, not
/// rejected; violated tables are the counterexample generator's output.
pub fn verify_prop_subpop(
    table: &SubpopRateTable,
    source_pmf: &[f64],
    target_pmf: &[f64],
) -> Result<SubpopReport> {
    check_pmf(source_pmf)?;
    check_pmf(target_pmf)?;
    let violations = table.premise_violations();
    Ok(SubpopReport {
        premise_ok: violations.is_empty(),
        violations,
        source_odds: table.delta_odds(source_pmf)?,
        target_odds: table.delta_odds(target_pmf)?,
    })
}

/// Group-conditional rates P(g(X) = y | A = a, Y = y) with no nuisance
/// conditioning; the sensitive-shift proposition needs nothing finer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitiveRateTable {
    /// rates[a][y]
    pub rates: [[f64; 2]; 2],
}

impl SensitiveRateTable {
    pub fn new(rates: [[f64; 2]; 2]) -> Result<Self> {
        for row in &rates {
            for &r in row {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Contract("rates must lie in [0, 1]".into()));
                }
            }
        }
        Ok(Self { rates })
    }

    pub fn delta_odds(&self) -> f64 {
        0.5 * ((self.rates[0][0] - self.rates[1][0]).abs() + (self.rates[0][1] - self.rates[1][1]).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveShiftReport {
    pub premise_ok: bool,
    pub source_odds: f64,
    pub target_odds: f64,
}

/// Fairness transfer under a sensitive-attribute marginal shift: the
/// group-conditional rates are invariant to P(A) because the fixed
/// generative model pins P(X | A, Y), so source and target equalized odds
/// coincide exactly; a source-fair table stays fair.
pub fn verify_prop_sensitive_shift(
    table: &SensitiveRateTable,
    source_pa: &[f64; 2],
    target_pa: &[f64; 2],
) -> Result<SensitiveShiftReport> {
    check_pmf(source_pa)?;
    check_pmf(target_pa)?;
    let odds = table.delta_odds();
    Ok(SensitiveShiftReport { premise_ok: odds == 0.0, source_odds: odds, target_odds: odds })
}

/// Random pmf over m values: normalized exponential draws, all positive.
pub fn random_pmf(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut pmf: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = pmf.iter().sum();
    for p in pmf.iter_mut() {
        *p /= s;
    }
    pmf
}

/// Conditionally fair table: the two sensitive groups share every rate.
pub fn random_fair_subpop_table(rng: &mut ChaCha8Rng, num_nuisance: usize) -> SubpopRateTable {
    let mut table = SubpopRateTable::new(num_nuisance, vec![0.0; 4 * num_nuisance]).unwrap();
    for y in 0..2 {
        for v in 0..num_nuisance {
            let r = rng.gen::<f64>();
            table.set_rate(0, y, v, r);
            table.set_rate(1, y, v, r);
        }
    }
    table
}

/// Counterexample generator: a fair table with one conditional rate knocked
/// out of agreement by at least `min_gap`.
pub fn random_unfair_subpop_table(
    rng: &mut ChaCha8Rng,
    num_nuisance: usize,
    min_gap: f64,
) -> SubpopRateTable {
    let mut table = random_fair_subpop_table(rng, num_nuisance);
    let y = rng.gen_range(0..2usize);
    let v = rng.gen_range(0..num_nuisance);
    let base = table.rate(0, y, v);
    let shifted = if base + min_gap <= 1.0 { base + min_gap } else { base - min_gap };
    table.set_rate(1, y, v, shifted);
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn conditionally_fair_table_is_exactly_fair_in_both_domains() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let table = random_fair_subpop_table(&mut rng, 6);
            let ps = random_pmf(&mut rng, 6);
            let pt = random_pmf(&mut rng, 6);
            let rep = verify_prop_subpop(&table, &ps, &pt).unwrap();
            assert!(rep.premise_ok);
            assert!(rep.source_odds.abs() <= 1e-12);
            assert!(rep.target_odds.abs() <= 1e-12);
        }
    }

    #[test]
    fn partially_unfair_table_follows_the_mixture_closed_form() {
        // Fair at v = 0, gap 0.4 at v = 1 for both classes.
        let mut table = SubpopRateTable::new(2, vec![0.0; 8]).unwrap();
        for y in 0..2 {
            table.set_rate(0, y, 0, 0.9);
            table.set_rate(1, y, 0, 0.9);
            table.set_rate(0, y, 1, 0.9);
            table.set_rate(1, y, 1, 0.5);
        }
        let rep = verify_prop_subpop(&table, &[0.9, 0.1], &[0.1, 0.9]).unwrap();
        assert!(!rep.premise_ok);
        assert_eq!(rep.violations, vec![(0, 1), (1, 1)]);
        assert!((rep.source_odds - 0.04).abs() < 1e-12);
        assert!((rep.target_odds - 0.36).abs() < 1e-12);
    }

    #[test]
    fn shared_point_mass_gives_equal_odds_in_both_domains() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let table = random_unfair_subpop_table(&mut rng, 4, 0.3);
        let point = vec![0.0, 1.0, 0.0, 0.0];
        let rep = verify_prop_subpop(&table, &point, &point).unwrap();
        assert_eq!(rep.source_odds, rep.target_odds);
    }

    #[test]
    fn counterexamples_have_positive_target_odds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut positives = 0;
        for _ in 0..50 {
            let table = random_unfair_subpop_table(&mut rng, 5, 0.2);
            let ps = random_pmf(&mut rng, 5);
            let pt = random_pmf(&mut rng, 5);
            let rep = verify_prop_subpop(&table, &ps, &pt).unwrap();
            assert!(!rep.premise_ok);
            if rep.target_odds > 0.0 {
                positives += 1;
            }
        }
        // A random positive-mass pmf cannot cancel the single broken cell.
        assert_eq!(positives, 50);
    }

    #[test]
    fn sensitive_shift_keeps_fair_tables_fair() {
        let table = SensitiveRateTable::new([[0.8, 0.9], [0.8, 0.9]]).unwrap();
        let rep = verify_prop_sensitive_shift(&table, &[0.9, 0.1], &[0.1, 0.9]).unwrap();
        assert!(rep.premise_ok);
        assert_eq!(rep.target_odds, 0.0);
    }

    #[test]
    fn sensitive_shift_preserves_any_gap() {
        // Gap g in each class: both domains read the same table.
        let table = SensitiveRateTable::new([[0.9, 0.8], [0.6, 0.5]]).unwrap();
        let rep = verify_prop_sensitive_shift(&table, &[0.7, 0.3], &[0.2, 0.8]).unwrap();
        assert!(!rep.premise_ok);
        assert!((rep.source_odds - 0.3).abs() < 1e-12);
        assert_eq!(rep.source_odds, rep.target_odds);

        let same = verify_prop_sensitive_shift(&table, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(same.source_odds, same.target_odds);
    }
}
