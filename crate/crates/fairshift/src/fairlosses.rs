//! Supervised and fairness losses: classification, Laftr adversarial
//! fairness, CFair balanced-error adversaries, DANN domain discrimination,
//! and group-blind consistency.
//!
//! Every loss returns its scalar value together with exact parameter
//! gradients. Adversary heads minimize their own losses; the encoder sees
//! those same losses through gradient reversal.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::factorworld::transforms::Transform;
use crate::factorworld::{Dataset, Domain, LabeledSample};
use crate::neuralcore::{
    argmax, sigmoid, softmax, softmax_cross_entropy, Gradients, HeadGrads, Matrix, Network,
};

pub const HEAD_LAFTR: &str = "adv_a";
pub const HEAD_DOMAIN: &str = "adv_domain";

pub fn cfair_head_name(y: usize) -> String {
    format!("adv_a_y{}", y)
}

/// A batch of samples with their (y, a) group partition.
/// Group index convention matches the rest of the crate: `y * num_sensitive + a`.
#[derive(Debug, Clone)]
pub struct GroupedBatch<'a> {
    pub samples: Vec<&'a LabeledSample>,
    pub num_labels: usize,
    pub num_sensitive: usize,
}

impl<'a> GroupedBatch<'a> {
    pub fn from_indices(ds: &'a Dataset, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| &ds.samples[i]).collect(),
            num_labels: ds.num_labels,
            num_sensitive: ds.num_sensitive,
        }
    }

    pub fn whole(ds: &'a Dataset) -> Self {
        Self::from_indices(ds, &(0..ds.len()).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.num_labels * self.num_sensitive
    }

    pub fn group_id(&self, row: usize) -> usize {
        let s = self.samples[row];
        s.y * self.num_sensitive + s.a
    }

    /// Rows of each (y, a) group, batch order preserved.
    pub fn group_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.num_groups()];
        for i in 0..self.len() {
            rows[self.group_id(i)].push(i);
        }
        rows
    }

    pub fn features(&self) -> Matrix {
        let d = self.samples.first().map(|s| s.x.len()).unwrap_or(0);
        let mut x = Matrix::zeros(self.len(), d);
        for (i, s) in self.samples.iter().enumerate() {
            x.row_mut(i).copy_from_slice(&s.x);
        }
        x
    }

    pub fn transformed_features(&self, transform: &dyn Transform, rng: &mut ChaCha8Rng) -> Matrix {
        let d = self.samples.first().map(|s| s.x.len()).unwrap_or(0);
        let mut x = Matrix::zeros(self.len(), d);
        for (i, s) in self.samples.iter().enumerate() {
            x.row_mut(i).copy_from_slice(&transform.apply(s, rng));
        }
        x
    }

    fn ensure_nonempty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Contract(format!("{} on an empty batch", what)));
        }
        Ok(())
    }
}

/// Mean softmax cross-entropy through the classifier head.
pub fn classification_loss(net: &Network, batch: &GroupedBatch) -> Result<(f64, Gradients)> {
    batch.ensure_nonempty("classification loss")?;
    let pass = net.forward(&batch.features())?;
    let logits = pass.classifier_logits();
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut d_logits = Matrix::zeros(batch.len(), logits.cols);
    for i in 0..batch.len() {
        let (l, g) = softmax_cross_entropy(logits.row(i), batch.samples[i].y);
        loss += l / n;
        for (dst, v) in d_logits.row_mut(i).iter_mut().zip(g.iter()) {
            *dst = v / n;
        }
    }
    let mut hg = HeadGrads::zeros(net, batch.len());
    hg.classifier = Some(d_logits);
    Ok((loss, net.backward(&pass, &hg)?))
}

#[derive(Debug)]
pub struct LaftrLoss {
    pub loss: f64,
    pub grads: Gradients,
    /// (y, a) groups absent from the batch and skipped.
    pub skipped_groups: Vec<usize>,
}

/// Laftr fairness loss: per-group mean of |h(f(x)) - a| summed over groups,
/// with h the sigmoid of a scalar adversary logit. The adversary minimizes;
/// the encoder receives the reversed gradient.
pub fn laftr_fairness_loss(net: &Network, batch: &GroupedBatch) -> Result<LaftrLoss> {
    batch.ensure_nonempty("laftr loss")?;
    if batch.num_sensitive != 2 {
        return Err(Error::Contract("laftr loss is defined for a binary sensitive attribute".into()));
    }
    let head = net.adversary_index(HEAD_LAFTR)?;
    let pass = net.forward(&batch.features())?;
    let logits = pass.adversary_logits(head);
    if logits.cols != 1 {
        return Err(Error::Contract("laftr adversary must emit a single logit".into()));
    }

    let groups = batch.group_rows();
    let mut loss = 0.0;
    let mut d_logits = Matrix::zeros(batch.len(), 1);
    let mut skipped = Vec::new();
    for (g, rows) in groups.iter().enumerate() {
        if rows.is_empty() {
            skipped.push(g);
            log::warn!("laftr: group {} empty in batch, term skipped", g);
            continue;
        }
        let inv = 1.0 / rows.len() as f64;
        for &i in rows {
            let a = batch.samples[i].a as f64;
            let h = sigmoid(logits.get(i, 0));
            loss += inv * (h - a).abs();
            let sign = if h > a {
                1.0
            } else if h < a {
                -1.0
            } else {
                0.0
            };
            d_logits.set(i, 0, inv * sign * h * (1.0 - h));
        }
    }

    let mut hg = HeadGrads::zeros(net, batch.len());
    hg.adversaries[head] = Some(d_logits);
    Ok(LaftrLoss { loss, grads: net.backward(&pass, &hg)?, skipped_groups: skipped })
}

#[derive(Debug)]
pub struct CfairLoss {
    pub loss: f64,
    pub grads: Gradients,
    /// (y, a) cells with no samples; their reweighting terms carry weight 0.
    pub empty_cells: Vec<(usize, usize)>,
}

/// CFair loss: one adversary head per class predicting the sensitive
/// attribute, trained with cost-sensitive cross-entropy that estimates the
/// balanced error rate. Each sample in class y is weighted by
/// `1 / (2 P(A = a | Y = y))` with cell frequencies taken from the batch.
pub fn cfair_loss(net: &Network, batch: &GroupedBatch) -> Result<CfairLoss> {
    batch.ensure_nonempty("cfair loss")?;
    let pass = net.forward(&batch.features())?;
    let n_a = batch.num_sensitive;

    // Cell and class counts straight from the batch.
    let mut cell = vec![0usize; batch.num_groups()];
    for i in 0..batch.len() {
        cell[batch.group_id(i)] += 1;
    }

    let mut loss = 0.0;
    let mut hg = HeadGrads::zeros(net, batch.len());
    let mut empty_cells = Vec::new();
    for y in 0..batch.num_labels {
        let head = net.adversary_index(&cfair_head_name(y))?;
        let logits = pass.adversary_logits(head);
        if logits.cols != n_a {
            return Err(Error::Contract(format!(
                "cfair head for class {} must emit {} logits",
                y, n_a
            )));
        }
        let class_count: usize = (0..n_a).map(|a| cell[y * n_a + a]).sum();
        if class_count == 0 {
            log::warn!("cfair: class {} empty in batch, head skipped", y);
            for a in 0..n_a {
                empty_cells.push((y, a));
            }
            continue;
        }
        for a in 0..n_a {
            if cell[y * n_a + a] == 0 {
                empty_cells.push((y, a));
                log::warn!("cfair: cell (y={}, a={}) empty in batch, weight 0", y, a);
            }
        }
        let d_logits = hg.adversaries[head].as_mut().unwrap();
        let inv_class = 1.0 / class_count as f64;
        for i in 0..batch.len() {
            let s = batch.samples[i];
            if s.y != y {
                continue;
            }
            let p_cell = cell[y * n_a + s.a] as f64 / class_count as f64;
            let w = 1.0 / (2.0 * p_cell);
            let (l, g) = softmax_cross_entropy(logits.row(i), s.a);
            loss += inv_class * w * l;
            for (dst, v) in d_logits.row_mut(i).iter_mut().zip(g.iter()) {
                *dst = inv_class * w * v;
            }
        }
    }
    Ok(CfairLoss { loss, grads: net.backward(&pass, &hg)?, empty_cells })
}

/// Domain-discriminator cross-entropy on a mixed source/target batch.
/// The discriminator minimizes; the encoder receives the reversed gradient.
pub fn dann_domain_loss(net: &Network, batch: &GroupedBatch) -> Result<(f64, Gradients)> {
    batch.ensure_nonempty("domain loss")?;
    let has_source = batch.samples.iter().any(|s| s.domain == Domain::Source);
    let has_target = batch.samples.iter().any(|s| s.domain == Domain::Target);
    if !has_source || !has_target {
        return Err(Error::Contract("domain loss needs both domains in the batch".into()));
    }
    let head = net.adversary_index(HEAD_DOMAIN)?;
    let pass = net.forward(&batch.features())?;
    let logits = pass.adversary_logits(head);
    if logits.cols != 2 {
        return Err(Error::Contract("domain head must emit two logits".into()));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut d_logits = Matrix::zeros(batch.len(), 2);
    for i in 0..batch.len() {
        let tag = match batch.samples[i].domain {
            Domain::Source => 0,
            Domain::Target => 1,
        };
        let (l, g) = softmax_cross_entropy(logits.row(i), tag);
        loss += l / n;
        for (dst, v) in d_logits.row_mut(i).iter_mut().zip(g.iter()) {
            *dst = v / n;
        }
    }
    let mut hg = HeadGrads::zeros(net, batch.len());
    hg.adversaries[head] = Some(d_logits);
    Ok((loss, net.backward(&pass, &hg)?))
}

#[derive(Debug)]
pub struct ConsistencyLoss {
    pub loss: f64,
    pub grads: Gradients,
    pub confident_count: usize,
}

/// Group-blind FixMatch-style consistency: cross-entropy between the
/// teacher's confident pseudo-labels on x and the student on t(x), averaged
/// over the whole batch. The teacher contributes no gradients.
pub fn standard_consistency_loss(
    net: &Network,
    teacher: &Network,
    batch: &GroupedBatch,
    transform: &dyn Transform,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ConsistencyLoss> {
    batch.ensure_nonempty("consistency loss")?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Contract(format!("confidence threshold {} outside [0, 1]", tau)));
    }
    let teacher_logits = teacher.classify(&batch.features())?;
    let x_t = batch.transformed_features(transform, rng);
    let pass = net.forward(&x_t)?;
    let student_logits = pass.classifier_logits();

    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut confident = 0usize;
    let mut d_logits = Matrix::zeros(batch.len(), student_logits.cols);
    for i in 0..batch.len() {
        let probs = softmax(teacher_logits.row(i));
        let pseudo = argmax(teacher_logits.row(i));
        if probs[pseudo] < tau {
            continue;
        }
        confident += 1;
        let (l, g) = softmax_cross_entropy(student_logits.row(i), pseudo);
        loss += l / n;
        for (dst, v) in d_logits.row_mut(i).iter_mut().zip(g.iter()) {
            *dst = v / n;
        }
    }
    let mut hg = HeadGrads::zeros(net, batch.len());
    hg.classifier = Some(d_logits);
    Ok(ConsistencyLoss { loss, grads: net.backward(&pass, &hg)?, confident_count: confident })
}
