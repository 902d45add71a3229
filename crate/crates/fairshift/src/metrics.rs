//! Evaluation metrics: equalized odds, variance of group accuracy,
//! per-group transformation consistency, benefit ratio, model-selection
//! score, and Pareto frontier collation.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorworld::transforms::Transform;
use crate::factorworld::Dataset;
use crate::neuralcore::{predictions, Matrix, Network};

/// Per-(y, a) confusion cells. Group index is `y * num_sensitive + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub num_labels: usize,
    pub num_sensitive: usize,
    pub count: Vec<usize>,
    pub correct: Vec<usize>,
}

impl GroupStats {
    pub fn from_predictions(
        preds: &[usize],
        labels: &[usize],
        sensitive: &[usize],
        num_labels: usize,
        num_sensitive: usize,
    ) -> Result<Self> {
        if preds.len() != labels.len() || preds.len() != sensitive.len() {
            return Err(Error::Contract("prediction/label/sensitive length mismatch".into()));
        }
        let mut count = vec![0usize; num_labels * num_sensitive];
        let mut correct = vec![0usize; num_labels * num_sensitive];
        for ((&p, &y), &a) in preds.iter().zip(labels).zip(sensitive) {
            if y >= num_labels || a >= num_sensitive {
                return Err(Error::Contract("label or sensitive index out of range".into()));
            }
            let g = y * num_sensitive + a;
            count[g] += 1;
            if p == y {
                correct[g] += 1;
            }
        }
        Ok(Self { num_labels, num_sensitive, count, correct })
    }

    pub fn num_groups(&self) -> usize {
        self.count.len()
    }

    pub fn group_id(&self, y: usize, a: usize) -> usize {
        y * self.num_sensitive + a
    }

    /// Accuracy of one group; error if the cell is empty.
    pub fn accuracy(&self, g: usize) -> Result<f64> {
        if self.count[g] == 0 {
            let (y, a) = (g / self.num_sensitive, g % self.num_sensitive);
            return Err(Error::Metric(format!("empty group cell (y={}, a={})", y, a)));
        }
        Ok(self.correct[g] as f64 / self.count[g] as f64)
    }

    pub fn overall_accuracy(&self) -> f64 {
        let total: usize = self.count.iter().sum();
        let correct: usize = self.correct.iter().sum();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }
}

/// Binary equalized odds: half the summed absolute gaps in group-conditional
/// true rates. For y in {0, 1}, the cell accuracy P(pred = y | A = a, Y = y)
/// is exactly the true positive / true negative rate of group a.
pub fn equalized_odds(preds: &[usize], labels: &[usize], sensitive: &[usize]) -> Result<f64> {
    let stats = GroupStats::from_predictions(preds, labels, sensitive, 2, 2)?;
    equalized_odds_from_stats(&stats)
}

/// The same quantity computed from confusion cells.
pub fn equalized_odds_from_stats(stats: &GroupStats) -> Result<f64> {
    if stats.num_labels != 2 || stats.num_sensitive != 2 {
        return Err(Error::Metric("binary equalized odds needs 2 labels and 2 groups".into()));
    }
    let mut total = 0.0;
    for y in 0..2 {
        let r0 = stats.accuracy(stats.group_id(y, 0))?;
        let r1 = stats.accuracy(stats.group_id(y, 1))?;
        total += (r0 - r1).abs();
    }
    Ok(0.5 * total)
}

/// Multi-class / multi-attribute generalization: the mean over classes of
/// the largest pairwise gap in group accuracy.
pub fn equalized_odds_multi(stats: &GroupStats) -> Result<f64> {
    let mut total = 0.0;
    for y in 0..stats.num_labels {
        let mut worst = 0.0f64;
        for a in 0..stats.num_sensitive {
            for a2 in a + 1..stats.num_sensitive {
                let gap = (stats.accuracy(stats.group_id(y, a))?
                    - stats.accuracy(stats.group_id(y, a2))?)
                .abs();
                worst = worst.max(gap);
            }
        }
        total += worst;
    }
    Ok(total / stats.num_labels as f64)
}

/// Population variance of the group accuracies, in percent squared.
pub fn variance_group_accuracy(stats: &GroupStats) -> Result<f64> {
    let accs: Vec<f64> = (0..stats.num_groups())
        .map(|g| stats.accuracy(g).map(|v| v * 100.0))
        .collect::<Result<_>>()?;
    Ok(population_variance(&accs))
}

pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

/// Per-group agreement rate of predictions under two independent random
/// transformations, averaged over `trials` rounds. Empty groups yield None.
pub fn group_consistency(
    net: &Network,
    dataset: &Dataset,
    transform: &dyn Transform,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Option<f64>>> {
    if trials == 0 {
        return Err(Error::Contract("trials must be at least 1".into()));
    }
    let n = dataset.len();
    let mut agree = vec![0usize; dataset.num_groups()];
    let mut seen = vec![0usize; dataset.num_groups()];
    for _ in 0..trials {
        let mut xa = Matrix::zeros(n, dataset.feature_dim);
        let mut xb = Matrix::zeros(n, dataset.feature_dim);
        for (i, smp) in dataset.samples.iter().enumerate() {
            xa.row_mut(i).copy_from_slice(&transform.apply(smp, rng));
            xb.row_mut(i).copy_from_slice(&transform.apply(smp, rng));
        }
        let pa = predictions(&net.classify(&xa)?);
        let pb = predictions(&net.classify(&xb)?);
        for i in 0..n {
            let g = dataset.group_of(i);
            seen[g] += 1;
            if pa[i] == pb[i] {
                agree[g] += 1;
            }
        }
    }
    Ok(agree
        .iter()
        .zip(seen.iter())
        .map(|(&a, &s)| if s == 0 { None } else { Some(a as f64 / s as f64) })
        .collect())
}

/// Fraction of the labeled-to-ideal accuracy gap recovered by
/// semi-supervised training.
pub fn benefit_ratio(a_semi: f64, a_baseline: f64, a_ideal: f64) -> Result<f64> {
    if a_ideal == a_baseline {
        return Err(Error::Metric("benefit ratio undefined: ideal equals baseline".into()));
    }
    Ok((a_semi - a_baseline) / (a_ideal - a_baseline))
}

/// Accuracy minus unfairness; both arguments must share units.
pub fn model_selection_score(accuracy: f64, delta_odds: f64) -> f64 {
    accuracy - delta_odds
}

/// Non-dominated subset under (maximize accuracy, minimize delta_odds),
/// sorted by accuracy with input order preserved among ties.
pub fn collect_pareto(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let dominates = |p: (f64, f64), q: (f64, f64)| {
        p.0 >= q.0 && p.1 <= q.1 && (p.0 > q.0 || p.1 < q.1)
    };
    let mut frontier: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&q| !points.iter().any(|&p| dominates(p, q)))
        .collect();
    frontier.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    frontier.dedup();
    frontier
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx.sqrt() * vy.sqrt())
    }
}

/// Full evaluation of a classifier on one dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: String,
    /// Overall accuracy in [0, 1].
    pub accuracy: f64,
    pub delta_odds: f64,
    /// Percent-squared population variance of group accuracies.
    pub v_acc: f64,
    pub group_stats: GroupStats,
    /// Group accuracies in [0, 1], index `y * num_sensitive + a`.
    pub group_accuracy: Vec<f64>,
    /// Per-group agreement under two random transforms, when measured.
    pub consistency: Option<Vec<Option<f64>>>,
}

impl EvalReport {
    pub fn selection_score(&self) -> f64 {
        model_selection_score(self.accuracy, self.delta_odds)
    }

    pub fn csv_header(stats: &GroupStats) -> String {
        let mut h = String::from("domain,accuracy,delta_odds,v_acc");
        for y in 0..stats.num_labels {
            for a in 0..stats.num_sensitive {
                h.push_str(&format!(",acc_y{}a{}", y, a));
            }
        }
        h
    }

    /// Percent values with 2 decimals, raw rates with 6.
    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{:.2},{:.6},{:.2}",
            self.domain,
            self.accuracy * 100.0,
            self.delta_odds,
            self.v_acc
        );
        for acc in &self.group_accuracy {
            row.push_str(&format!(",{:.2}", acc * 100.0));
        }
        row
    }
}

/// Evaluate classifier predictions over a dataset.
pub fn evaluate(net: &Network, dataset: &Dataset, domain_tag: &str) -> Result<EvalReport> {
    let n = dataset.len();
    let mut x = Matrix::zeros(n, dataset.feature_dim);
    for (i, smp) in dataset.samples.iter().enumerate() {
        x.row_mut(i).copy_from_slice(&smp.x);
    }
    let preds = predictions(&net.classify(&x)?);
    let labels: Vec<usize> = dataset.samples.iter().map(|s| s.y).collect();
    let sens: Vec<usize> = dataset.samples.iter().map(|s| s.a).collect();
    let stats =
        GroupStats::from_predictions(&preds, &labels, &sens, dataset.num_labels, dataset.num_sensitive)?;
    let delta = if dataset.num_labels == 2 && dataset.num_sensitive == 2 {
        equalized_odds_from_stats(&stats)?
    } else {
        equalized_odds_multi(&stats)?
    };
    let v_acc = variance_group_accuracy(&stats)?;
    let group_accuracy: Vec<f64> =
        (0..stats.num_groups()).map(|g| stats.accuracy(g)).collect::<Result<_>>()?;
    Ok(EvalReport {
        domain: domain_tag.to_string(),
        accuracy: stats.overall_accuracy(),
        delta_odds: delta,
        v_acc,
        group_stats: stats,
        group_accuracy,
        consistency: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(rates: [(usize, usize); 4]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        // rates[y * 2 + a] = (correct, total) for that cell
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        let mut sens = Vec::new();
        for y in 0..2 {
            for a in 0..2 {
                let (correct, total) = rates[y * 2 + a];
                for i in 0..total {
                    labels.push(y);
                    sens.push(a);
                    preds.push(if i < correct { y } else { 1 - y });
                }
            }
        }
        (preds, labels, sens)
    }

    #[test]
    fn perfect_predictor_has_zero_odds() {
        let (p, l, s) = cells([(5, 5), (5, 5), (5, 5), (5, 5)]);
        assert_eq!(equalized_odds(&p, &l, &s).unwrap(), 0.0);
    }

    #[test]
    fn constant_predictor_has_zero_odds() {
        // Always predict 1: TNR = 0 for both groups, TPR = 1 for both.
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let sens = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let preds = vec![1; 8];
        assert_eq!(equalized_odds(&preds, &labels, &sens).unwrap(), 0.0);
    }

    #[test]
    fn odds_match_enumerated_confusion_cells() {
        // TPR (y=1): 0.9 vs 0.7; TNR (y=0): 0.8 vs 0.8 -> 0.5 * 0.2 = 0.1
        let (p, l, s) = cells([(8, 10), (8, 10), (9, 10), (7, 10)]);
        let d = equalized_odds(&p, &l, &s).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_cell_names_the_cell() {
        let (p, l, s) = cells([(5, 5), (5, 5), (5, 5), (0, 0)]);
        let err = equalized_odds(&p, &l, &s).unwrap_err();
        assert!(err.to_string().contains("y=1, a=1"), "{}", err);
    }

    #[test]
    fn odds_invariant_under_attribute_swap() {
        let (p, l, s) = cells([(4, 9), (8, 10), (9, 13), (7, 10)]);
        let swapped: Vec<usize> = s.iter().map(|&a| 1 - a).collect();
        let d1 = equalized_odds(&p, &l, &s).unwrap();
        let d2 = equalized_odds(&p, &l, &swapped).unwrap();
        assert!((d1 - d2).abs() < 1e-15);
    }

    #[test]
    fn variance_examples() {
        let (p, l, s) = cells([(9, 10), (9, 10), (8, 10), (8, 10)]);
        let stats = GroupStats::from_predictions(&p, &l, &s, 2, 2).unwrap();
        assert!((variance_group_accuracy(&stats).unwrap() - 25.0).abs() < 1e-12);

        let equal = GroupStats::from_predictions(
            &cells([(7, 10), (7, 10), (7, 10), (7, 10)]).0,
            &cells([(7, 10), (7, 10), (7, 10), (7, 10)]).1,
            &cells([(7, 10), (7, 10), (7, 10), (7, 10)]).2,
            2,
            2,
        )
        .unwrap();
        assert_eq!(variance_group_accuracy(&equal).unwrap(), 0.0);
    }

    #[test]
    fn variance_single_deviation_closed_form() {
        // Three groups at accuracy p, one at p - delta: variance 3 delta^2 / 16.
        let (p, l, s) = cells([(10, 10), (10, 10), (10, 10), (6, 10)]);
        let stats = GroupStats::from_predictions(&p, &l, &s, 2, 2).unwrap();
        let delta: f64 = 40.0; // percent
        let expect = 3.0 * delta * delta / 16.0;
        assert!((variance_group_accuracy(&stats).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn benefit_ratio_examples() {
        assert_eq!(benefit_ratio(0.9, 0.6, 0.9).unwrap(), 1.0);
        assert_eq!(benefit_ratio(0.6, 0.6, 0.9).unwrap(), 0.0);
        assert!((benefit_ratio(0.8, 0.6, 0.9).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(benefit_ratio(0.7, 0.5, 0.5).is_err());
    }

    #[test]
    fn selection_score_ordering() {
        assert_eq!(model_selection_score(0.9, 0.0), 0.9);
        let low_unfairness = model_selection_score(0.85, 0.02);
        let high_unfairness = model_selection_score(0.90, 0.10);
        assert!(low_unfairness > high_unfairness);
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(collect_pareto(&[(0.9, 0.1)]), vec![(0.9, 0.1)]);
        let pts = [(0.9, 0.1), (0.8, 0.05), (0.85, 0.2)];
        assert_eq!(collect_pareto(&pts), vec![(0.8, 0.05), (0.9, 0.1)]);
        // A point dominated in both coordinates is excluded.
        let pts = [(0.9, 0.1), (0.8, 0.2)];
        assert_eq!(collect_pareto(&pts), vec![(0.9, 0.1)]);
    }

    #[test]
    fn group_consistency_examples() {
        use crate::factorworld::transforms::{IdentityTransform, NuisanceResample, Transform};
        use crate::factorworld::{build_scenario, sample_dataset, Domain, Emitter, ScenarioKind};
        use crate::neuralcore::NetSpec;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        let s = build_scenario(ScenarioKind::Dshift, 8).unwrap();
        let em = Emitter::build(&s.layout, 6, 0.5, 3.0, 7).unwrap();
        let ds = sample_dataset(&s.layout, &s.source, &em, 80, 5, Domain::Source).unwrap();
        let net = Network::build(
            &NetSpec { input_dim: 6, encoder: vec![8], classifier: vec![2], adversaries: vec![] },
            3,
        );

        // Identity transform: any deterministic net agrees with itself.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cons = group_consistency(&net, &ds, &IdentityTransform, 3, &mut rng).unwrap();
        assert!(cons.iter().all(|c| c == &Some(1.0)));

        // Constant-output net: agreement 1.0 under any transform.
        let mut constant = net.clone();
        for p in constant.param_slices_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        constant.classifier.layers[0].bias[0] = 5.0;
        let resample = NuisanceResample::new(&s, em.clone(), &["d"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cons = group_consistency(&constant, &ds, &resample, 3, &mut rng).unwrap();
        assert!(cons.iter().all(|c| c == &Some(1.0)));

        // Two-point group against exhaustive enumeration of the finite
        // transform set: with zero noise the transform has 8 equally likely
        // outcomes per sample, so expected agreement is sum_c p_c^2 with
        // p_c the chance both transformed predictions land in class c.
        let em0 = Emitter::build(&s.layout, 6, 0.0, 3.0, 7).unwrap();
        let mut tiny = sample_dataset(&s.layout, &s.source, &em0, 2, 9, Domain::Source).unwrap();
        for smp in tiny.samples.iter_mut() {
            // Force both points into one group so a single cell is exercised.
            smp.y = 0;
            smp.a = 0;
            smp.x = em0.embedding_sum(&s.layout, 0, 0, &smp.nuisance);
        }
        let resample0 = NuisanceResample::new(&s, em0.clone(), &["d"]).unwrap();
        let mut expected_agree = 0.0;
        for smp in &tiny.samples {
            let mut per_class = [0.0f64; 2];
            for d in s.union_support(0) {
                let x = em0.embedding_sum(&s.layout, smp.y, smp.a, &[d]);
                let mut m = Matrix::zeros(1, 6);
                m.row_mut(0).copy_from_slice(&x);
                let pred = predictions(&net.classify(&m).unwrap())[0];
                per_class[pred] += 1.0 / 8.0;
            }
            expected_agree += (per_class[0] * per_class[0] + per_class[1] * per_class[1]) / 2.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cons = group_consistency(&net, &tiny, &resample0, 4000, &mut rng).unwrap();
        let measured = cons[0].unwrap();
        assert!(
            (measured - expected_agree).abs() < 0.03,
            "measured {} expected {}",
            measured,
            expected_agree
        );
    }

    #[test]
    fn eval_report_formats_percent_and_rates() {
        let (p, l, s) = cells([(8, 10), (8, 10), (9, 10), (7, 10)]);
        let stats = GroupStats::from_predictions(&p, &l, &s, 2, 2).unwrap();
        let report = EvalReport {
            domain: "T".into(),
            accuracy: stats.overall_accuracy(),
            delta_odds: equalized_odds_from_stats(&stats).unwrap(),
            v_acc: variance_group_accuracy(&stats).unwrap(),
            group_accuracy: (0..4).map(|g| stats.accuracy(g).unwrap()).collect(),
            group_stats: stats,
            consistency: None,
        };
        assert_eq!(EvalReport::csv_header(&report.group_stats), "domain,accuracy,delta_odds,v_acc,acc_y0a0,acc_y0a1,acc_y1a0,acc_y1a1");
        assert_eq!(report.csv_row(), "T,80.00,0.100000,50.00,80.00,80.00,90.00,70.00");
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
    }
}
