//! Minimal dense-network engine: exact backpropagation over an encoder,
//! a classifier head, and named adversary heads coupled to the encoder
//! through gradient reversal.
//!
//! All math is f64. A network is deterministic given its build seed; each
//! parameter tensor draws from its own rng stream so that adding or
//! removing heads never perturbs the initialization of shared tensors.

pub mod optim;
pub mod snapshot;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}

/// One dense layer: `z = x W^T + b` with `weights` of shape out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn out_dim(&self) -> usize {
        self.weights.rows
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols
    }

    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and bias.
    fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut weights = Matrix::zeros(out_dim, in_dim);
        for v in weights.data.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        let mut bias = vec![0.0; out_dim];
        for v in bias.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        Self { weights, bias }
    }

    /// z = x W^T + b for a batch x of shape (B, in).
    fn affine(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols, self.in_dim(), "layer input width mismatch");
        let mut out = Matrix::zeros(x.rows, self.out_dim());
        for i in 0..x.rows {
            let xi = x.row(i);
            let oi = out.row_mut(i);
            oi.copy_from_slice(&self.bias);
            for (o, wrow) in oi.iter_mut().zip(0..self.weights.rows) {
                let w = self.weights.row(wrow);
                let mut acc = 0.0;
                for k in 0..w.len() {
                    acc += xi[k] * w[k];
                }
                *o += acc;
            }
        }
        out
    }
}

/// Multilayer perceptron. ReLU after every layer except possibly the last;
/// the encoder keeps ReLU on its output, heads emit raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub relu_output: bool,
}

/// Per-layer pre-activations and activations cached during forward.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// activations[0] is the input; activations[l+1] feeds layer l+1.
    pub activations: Vec<Matrix>,
    /// pre[l] is the affine output of layer l before any nonlinearity.
    pub pre: Vec<Matrix>,
}

impl MlpCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache has layers")
    }
}

impl Mlp {
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].in_dim()];
        d.extend(self.layers.iter().map(|l| l.out_dim()));
        d
    }

    pub fn forward(&self, x: &Matrix) -> MlpCache {
        let mut activations = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(activations.last().unwrap());
            let is_last = l + 1 == self.layers.len();
            let a = if is_last && !self.relu_output {
                z.clone()
            } else {
                let mut a = z.clone();
                for v in a.data.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                a
            };
            pre.push(z);
            activations.push(a);
        }
        MlpCache { activations, pre }
    }

    /// Backprop `d_out` (gradient w.r.t. this MLP's output) through the
    /// cached pass. Returns per-layer gradients and the gradient w.r.t.
    /// the MLP input.
    fn backward(&self, cache: &MlpCache, d_out: &Matrix) -> (Vec<LayerGrad>, Matrix) {
        let mut grads = vec![LayerGrad::zeros_like(&self.layers[0]); 0];
        grads.reserve(self.layers.len());
        for layer in &self.layers {
            grads.push(LayerGrad::zeros_like(layer));
        }
        let mut d_act = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            let is_last = l + 1 == self.layers.len();
            let mut d_pre = d_act;
            if !(is_last && !self.relu_output) {
                let z = &cache.pre[l];
                for (g, &zv) in d_pre.data.iter_mut().zip(z.data.iter()) {
                    if zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let input = &cache.activations[l];
            let layer = &self.layers[l];
            let grad = &mut grads[l];
            // dW[o][k] = sum_i d_pre[i][o] * input[i][k]; db[o] = sum_i d_pre[i][o]
            for i in 0..d_pre.rows {
                let dp = d_pre.row(i);
                let xi = input.row(i);
                for o in 0..layer.out_dim() {
                    let g = dp[o];
                    if g == 0.0 {
                        continue;
                    }
                    grad.db[o] += g;
                    let wrow = grad.dw.row_mut(o);
                    for k in 0..xi.len() {
                        wrow[k] += g * xi[k];
                    }
                }
            }
            // d_input[i][k] = sum_o d_pre[i][o] * W[o][k]
            let mut d_in = Matrix::zeros(d_pre.rows, layer.in_dim());
            for i in 0..d_pre.rows {
                let dp = d_pre.row(i);
                let di = d_in.row_mut(i);
                for o in 0..layer.out_dim() {
                    let g = dp[o];
                    if g == 0.0 {
                        continue;
                    }
                    let w = layer.weights.row(o);
                    for k in 0..w.len() {
                        di[k] += g * w[k];
                    }
                }
            }
            d_act = d_in;
        }
        (grads, d_act)
    }
}

/// Gradient of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

impl LayerGrad {
    fn zeros_like(layer: &DenseLayer) -> Self {
        Self { dw: Matrix::zeros(layer.weights.rows, layer.weights.cols), db: vec![0.0; layer.bias.len()] }
    }
}

/// An adversary head coupled to the encoder through gradient reversal:
/// forward is the identity on the representation, backward multiplies the
/// gradient flowing into the encoder by `-reversal_coeff`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryHead {
    pub name: String,
    pub mlp: Mlp,
    pub reversal_coeff: f64,
}

/// Dense encoder + classifier head + optional adversary heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub encoder: Mlp,
    pub classifier: Mlp,
    pub adversaries: Vec<AdversaryHead>,
}

/// Architecture description used to build and snapshot networks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub input_dim: usize,
    /// Encoder hidden widths; the last entry is the representation size.
    pub encoder: Vec<usize>,
    /// Classifier widths after the representation, ending in num_classes.
    pub classifier: Vec<usize>,
    /// (name, widths ending in the head output size, reversal coefficient)
    pub adversaries: Vec<(String, Vec<usize>, f64)>,
}

// Fixed per-tensor stream ids: shared tensors keep their init streams no
// matter which heads exist.
const STREAM_ENCODER: u64 = 0;
const STREAM_CLASSIFIER: u64 = 100;
const STREAM_ADVERSARY: u64 = 200;
const STREAM_ADVERSARY_STRIDE: u64 = 100;

fn build_mlp(dims: &[usize], relu_output: bool, seed: u64, stream_base: u64) -> Mlp {
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for l in 0..dims.len() - 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_base + 2 * l as u64);
        layers.push(DenseLayer::init(dims[l + 1], dims[l], &mut rng));
    }
    Mlp { layers, relu_output }
}

impl Network {
    pub fn build(spec: &NetSpec, seed: u64) -> Self {
        let mut enc_dims = vec![spec.input_dim];
        enc_dims.extend_from_slice(&spec.encoder);
        let encoder = build_mlp(&enc_dims, true, seed, STREAM_ENCODER);
        let rep = *enc_dims.last().unwrap();

        let mut cls_dims = vec![rep];
        cls_dims.extend_from_slice(&spec.classifier);
        let classifier = build_mlp(&cls_dims, false, seed, STREAM_CLASSIFIER);

        let mut adversaries = Vec::new();
        for (k, (name, widths, coeff)) in spec.adversaries.iter().enumerate() {
            let mut dims = vec![rep];
            dims.extend_from_slice(widths);
            let base = STREAM_ADVERSARY + STREAM_ADVERSARY_STRIDE * k as u64;
            adversaries.push(AdversaryHead {
                name: name.clone(),
                mlp: build_mlp(&dims, false, seed, base),
                reversal_coeff: *coeff,
            });
        }
        Self { encoder, classifier, adversaries }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.layers.last().unwrap().out_dim()
    }

    pub fn adversary_index(&self, name: &str) -> Result<usize> {
        self.adversaries
            .iter()
            .position(|h| h.name == name)
            .ok_or_else(|| Error::Contract(format!("no adversary head named `{}`", name)))
    }

    /// Forward the batch through every head, caching all intermediates.
    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        if x.cols != self.input_dim() {
            return Err(Error::Contract(format!(
                "input width {} does not match first layer width {}",
                x.cols,
                self.input_dim()
            )));
        }
        let encoder = self.encoder.forward(x);
        let classifier = self.classifier.forward(encoder.output());
        let adversaries = self
            .adversaries
            .iter()
            .map(|h| h.mlp.forward(encoder.output()))
            .collect();
        Ok(ForwardPass { encoder, classifier, adversaries })
    }

    /// Classifier logits without keeping caches.
    pub fn classify(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.classifier.output().clone())
    }

    /// Exact gradients of the per-head losses whose logit gradients are
    /// supplied. Adversary contributions reach the encoder scaled by
    /// `-reversal_coeff`; the heads themselves receive plain gradients.
    pub fn backward(&self, pass: &ForwardPass, head_grads: &HeadGrads) -> Result<Gradients> {
        if head_grads.adversaries.len() != self.adversaries.len() {
            return Err(Error::Contract(format!(
                "expected {} adversary gradients, got {}",
                self.adversaries.len(),
                head_grads.adversaries.len()
            )));
        }
        let d_cls = head_grads
            .classifier
            .as_ref()
            .ok_or_else(|| Error::Contract("missing classifier head gradient".into()))?;
        let (cls_grads, mut d_rep) = self.classifier.backward(&pass.classifier, d_cls);

        let mut adv_grads = Vec::with_capacity(self.adversaries.len());
        for (k, head) in self.adversaries.iter().enumerate() {
            let d_head = head_grads.adversaries[k].as_ref().ok_or_else(|| {
                Error::Contract(format!("missing gradient for adversary head `{}`", head.name))
            })?;
            let (hg, d_rep_h) = head.mlp.backward(&pass.adversaries[k], d_head);
            adv_grads.push(hg);
            let c = -head.reversal_coeff;
            for (acc, v) in d_rep.data.iter_mut().zip(d_rep_h.data.iter()) {
                *acc += c * v;
            }
        }

        let (enc_grads, _d_input) = self.encoder.backward(&pass.encoder, &d_rep);
        Ok(Gradients { encoder: enc_grads, classifier: cls_grads, adversaries: adv_grads })
    }

    /// Visit every parameter slice in the fixed traversal order shared by
    /// gradients, optimizer state, and snapshots.
    pub fn visit_params<F: FnMut(&str, &[f64])>(&self, mut f: F) {
        for (name, slice) in self.param_slices() {
            f(&name, slice);
        }
    }

    fn param_slices(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.encoder.layers.iter().enumerate() {
            out.push((format!("enc.{}.w", l), layer.weights.data.as_slice()));
            out.push((format!("enc.{}.b", l), layer.bias.as_slice()));
        }
        for (l, layer) in self.classifier.layers.iter().enumerate() {
            out.push((format!("cls.{}.w", l), layer.weights.data.as_slice()));
            out.push((format!("cls.{}.b", l), layer.bias.as_slice()));
        }
        for head in &self.adversaries {
            for (l, layer) in head.mlp.layers.iter().enumerate() {
                out.push((format!("adv.{}.{}.w", head.name, l), layer.weights.data.as_slice()));
                out.push((format!("adv.{}.{}.b", head.name, l), layer.bias.as_slice()));
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in self.encoder.layers.iter_mut() {
            out.push(layer.weights.data.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        for layer in self.classifier.layers.iter_mut() {
            out.push(layer.weights.data.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        for head in self.adversaries.iter_mut() {
            for layer in head.mlp.layers.iter_mut() {
                out.push(layer.weights.data.as_mut_slice());
                out.push(layer.bias.as_mut_slice());
            }
        }
        out
    }

    /// Architecture spec recoverable from the built network.
    pub fn spec(&self) -> NetSpec {
        NetSpec {
            input_dim: self.input_dim(),
            encoder: self.encoder.layers.iter().map(|l| l.out_dim()).collect(),
            classifier: self.classifier.layers.iter().map(|l| l.out_dim()).collect(),
            adversaries: self
                .adversaries
                .iter()
                .map(|h| (h.name.clone(), h.mlp.layers.iter().map(|l| l.out_dim()).collect(), h.reversal_coeff))
                .collect(),
        }
    }
}

/// Cached activations from one forward call.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub encoder: MlpCache,
    pub classifier: MlpCache,
    pub adversaries: Vec<MlpCache>,
}

impl ForwardPass {
    pub fn classifier_logits(&self) -> &Matrix {
        self.classifier.output()
    }

    pub fn adversary_logits(&self, k: usize) -> &Matrix {
        self.adversaries[k].output()
    }
}

/// Per-head logit gradients fed to `Network::backward`. Every head must be
/// present; pass explicit zeros for heads a loss does not touch.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub classifier: Option<Matrix>,
    pub adversaries: Vec<Option<Matrix>>,
}

impl HeadGrads {
    /// All-zero gradients shaped for `net` on a batch of `batch` rows.
    pub fn zeros(net: &Network, batch: usize) -> Self {
        Self {
            classifier: Some(Matrix::zeros(batch, net.num_classes())),
            adversaries: net
                .adversaries
                .iter()
                .map(|h| Some(Matrix::zeros(batch, h.mlp.layers.last().unwrap().out_dim())))
                .collect(),
        }
    }
}

/// Parameter gradients in network traversal order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: Vec<LayerGrad>,
    pub classifier: Vec<LayerGrad>,
    pub adversaries: Vec<Vec<LayerGrad>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            encoder: net.encoder.layers.iter().map(LayerGrad::zeros_like).collect(),
            classifier: net.classifier.layers.iter().map(LayerGrad::zeros_like).collect(),
            adversaries: net
                .adversaries
                .iter()
                .map(|h| h.mlp.layers.iter().map(LayerGrad::zeros_like).collect())
                .collect(),
        }
    }

    /// self += scale * other
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        fn add(dst: &mut [LayerGrad], src: &[LayerGrad], s: f64) {
            for (d, o) in dst.iter_mut().zip(src.iter()) {
                for (a, b) in d.dw.data.iter_mut().zip(o.dw.data.iter()) {
                    *a += s * b;
                }
                for (a, b) in d.db.iter_mut().zip(o.db.iter()) {
                    *a += s * b;
                }
            }
        }
        add(&mut self.encoder, &other.encoder, scale);
        add(&mut self.classifier, &other.classifier, scale);
        for (d, o) in self.adversaries.iter_mut().zip(other.adversaries.iter()) {
            add(d, o, scale);
        }
    }

    /// Flat view in the same order as `Network::param_slices_mut`.
    pub fn flat_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for g in &self.encoder {
            out.push(&g.dw.data);
            out.push(&g.db);
        }
        for g in &self.classifier {
            out.push(&g.dw.data);
            out.push(&g.db);
        }
        for head in &self.adversaries {
            for g in head {
                out.push(&g.dw.data);
                out.push(&g.db);
            }
        }
        out
    }
}

/// Softmax cross-entropy against an integer label for one logit row.
/// Returns the loss and the gradient `softmax - onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label out of range");
    let p = softmax(logits);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = p;
    grad[label] -= 1.0;
    (loss, grad)
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= s;
    }
    out
}

/// Argmax with deterministic tie-break toward the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax predictions for every row of a logit matrix.
pub fn predictions(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows).map(|i| argmax(logits.row(i))).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> NetSpec {
        NetSpec {
            input_dim: 3,
            encoder: vec![5, 4],
            classifier: vec![2],
            adversaries: vec![("adv_a".into(), vec![4, 1], 1.0)],
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut net = Network::build(&tiny_spec(), 1);
        for p in net.param_slices_mut() {
            for v in p.iter_mut() {
                *v = 0.0;
            }
        }
        let x = Matrix::from_rows(vec![vec![1.0, -2.0, 3.0]]);
        let pass = net.forward(&x).unwrap();
        assert!(pass.classifier_logits().data.iter().all(|&v| v == 0.0));
        assert!(pass.adversary_logits(0).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let layer = DenseLayer {
            weights: Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            bias: vec![0.0, 0.0],
        };
        let net = Network {
            encoder: Mlp { layers: vec![], relu_output: true },
            classifier: Mlp { layers: vec![layer], relu_output: false },
            adversaries: vec![],
        };
        // An empty encoder is not built in practice; drive the head directly.
        let x = Matrix::from_rows(vec![vec![0.25, -1.5], vec![2.0, 0.5]]);
        let cache = net.classifier.forward(&x);
        assert_eq!(cache.output().data, x.data);
    }

    // Independent straight-line re-evaluation of a fixed 2-layer forward.
    #[test]
    fn forward_matches_straight_line_arithmetic() {
        let spec = NetSpec { input_dim: 2, encoder: vec![2], classifier: vec![2], adversaries: vec![] };
        let net = Network::build(&spec, 42);
        let x = vec![0.7, -1.3];
        let pass = net.forward(&Matrix::from_rows(vec![x.clone()])).unwrap();

        let e = &net.encoder.layers[0];
        let h0 = (e.weights.get(0, 0) * x[0] + e.weights.get(0, 1) * x[1] + e.bias[0]).max(0.0);
        let h1 = (e.weights.get(1, 0) * x[0] + e.weights.get(1, 1) * x[1] + e.bias[1]).max(0.0);
        let c = &net.classifier.layers[0];
        let z0 = c.weights.get(0, 0) * h0 + c.weights.get(0, 1) * h1 + c.bias[0];
        let z1 = c.weights.get(1, 0) * h0 + c.weights.get(1, 1) * h1 + c.bias[1];

        let logits = pass.classifier_logits();
        assert!((logits.get(0, 0) - z0).abs() < 1e-15);
        assert!((logits.get(0, 1) - z1).abs() < 1e-15);
    }

    #[test]
    fn zero_loss_grads_give_zero_param_grads() {
        let net = Network::build(&tiny_spec(), 3);
        let x = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]);
        let pass = net.forward(&x).unwrap();
        let grads = net.backward(&pass, &HeadGrads::zeros(&net, 2)).unwrap();
        for s in grads.flat_slices() {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn missing_head_grad_is_contract_violation() {
        let net = Network::build(&tiny_spec(), 3);
        let x = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0]]);
        let pass = net.forward(&x).unwrap();
        let mut hg = HeadGrads::zeros(&net, 1);
        hg.adversaries[0] = None;
        let err = net.backward(&pass, &hg).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let net = Network::build(&tiny_spec(), 3);
        let x = Matrix::from_rows(vec![vec![1.0, 2.0]]);
        assert!(matches!(net.forward(&x), Err(Error::Contract(_))));
    }

    #[test]
    fn reversal_zero_matches_detached_adversary() {
        let mut spec = tiny_spec();
        spec.adversaries[0].2 = 0.0;
        let net = Network::build(&spec, 7);
        let x = Matrix::from_rows(vec![vec![0.3, -0.8, 1.2], vec![1.0, 1.0, -1.0]]);
        let pass = net.forward(&x).unwrap();

        let mut hg = HeadGrads::zeros(&net, 2);
        hg.classifier.as_mut().unwrap().set(0, 0, 0.4);
        hg.adversaries[0].as_mut().unwrap().set(1, 0, -0.9);
        let grads = net.backward(&pass, &hg).unwrap();

        // Same run with the adversary gradient zeroed: encoder grads must match.
        let mut hg_detached = HeadGrads::zeros(&net, 2);
        hg_detached.classifier.as_mut().unwrap().set(0, 0, 0.4);
        let detached = net.backward(&pass, &hg_detached).unwrap();
        for (a, b) in grads.encoder.iter().zip(detached.encoder.iter()) {
            assert_eq!(a.dw.data, b.dw.data);
            assert_eq!(a.db, b.db);
        }
        // The head itself still receives its gradient.
        assert!(grads.adversaries[0].iter().any(|g| g.dw.data.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn reversal_scales_encoder_contribution_elementwise() {
        let coeff = 1.7;
        let mut spec = tiny_spec();
        spec.adversaries[0].2 = coeff;
        let net = Network::build(&spec, 11);
        let mut pass_net = net.clone();
        pass_net.adversaries[0].reversal_coeff = -1.0; // backward factor -(-1) = +1
        let x = Matrix::from_rows(vec![vec![0.3, -0.8, 1.2]]);
        let pass = net.forward(&x).unwrap();
        let pass2 = pass_net.forward(&x).unwrap();

        let mut hg = HeadGrads::zeros(&net, 1);
        hg.adversaries[0].as_mut().unwrap().set(0, 0, 0.6);
        let reversed = net.backward(&pass, &hg).unwrap();
        let passthrough = pass_net.backward(&pass2, &hg).unwrap();
        for (r, p) in reversed.encoder.iter().zip(passthrough.encoder.iter()) {
            for (a, b) in r.dw.data.iter().zip(p.dw.data.iter()) {
                assert!((a - (-coeff) * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        for k in 2..6 {
            let (loss, _) = softmax_cross_entropy(&vec![0.0; k], 0);
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ce_saturated() {
        let (loss, _) = softmax_cross_entropy(&[20.0, -20.0], 0);
        assert!(loss < 1e-8);
    }

    #[test]
    fn softmax_ce_closed_form() {
        // loss for logits [1, 2] with label 1 is ln(1 + e^{-1})
        let (loss, grad) = softmax_cross_entropy(&[1.0, 2.0], 1);
        assert!((loss - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        let p1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((grad[1] - (p1 - 1.0)).abs() < 1e-12);
        assert!((grad[0] - (1.0 - p1)).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.9, 0.9]), 1);
    }

    #[test]
    fn build_is_deterministic_and_head_independent() {
        let a = Network::build(&tiny_spec(), 99);
        let b = Network::build(&tiny_spec(), 99);
        assert_eq!(a, b);

        // Adding a head must not perturb encoder/classifier init.
        let mut spec = tiny_spec();
        spec.adversaries.push(("adv_domain".into(), vec![4, 2], 1.0));
        let c = Network::build(&spec, 99);
        assert_eq!(a.encoder, c.encoder);
        assert_eq!(a.classifier, c.classifier);
        assert_eq!(a.adversaries[0], c.adversaries[0]);
    }
}
