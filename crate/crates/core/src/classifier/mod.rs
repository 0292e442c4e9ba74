//! Two-class bubble classifiers with hand-rolled forward and backward
//! passes.
//!
//! Two shapes are supported: [`LinearTwoLogit`], which produces symmetric
//! logits `(-s, +s)` from a single affine score, and [`Mlp`], a
//! 2000 → hidden → 2 perceptron with rectifier activation. Both expose
//! exact analytic gradients with respect to the input image (what the
//! attack engine ascends) and with respect to every parameter (what the
//! trainer descends); no autodiff, no approximation.
//!
//! Parameters also have a documented flat layout (weights before biases,
//! row-major matrices — see [`Model::params`]) shared by the momentum-SGD
//! trainer, the finite-difference checks, and the binary container format.

pub mod container;
pub mod train;

use crate::image::{BubbleImage, Label, MarkType, Raster};
use crate::{Error, Result, PIXELS};

pub use container::{decode_model, encode_model, load_model, save_model};
pub use train::{
    train, write_history_csv, EpochStats, ModelKind, Scaler, TrainConfig,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Loss functions the attack and trainer can ascend/descend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy, max-shift stabilized.
    Ce,
    /// Binary difference-of-logits: `-(z_label - z_other)`.
    Dlr,
}

/// Linear model with one affine score `s = w . x + b` reported as the
/// symmetric logit pair `(-s, +s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTwoLogit {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearTwoLogit {
    /// Zero-initialized linear model.
    pub fn zeros() -> Self {
        LinearTwoLogit {
            weights: vec![0.0; PIXELS],
            bias: 0.0,
        }
    }

    /// Build from explicit parameters; the weight vector must have one
    /// entry per pixel.
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.len() != PIXELS {
            return Err(Error::invalid(format!(
                "linear model needs {PIXELS} weights, got {}",
                weights.len()
            )));
        }
        Ok(LinearTwoLogit { weights, bias })
    }

    fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

/// One-hidden-layer perceptron: `z = W2 relu(W1 x + b1) + b2`.
///
/// `w1` is hidden x 2000 row-major; `w2` is 2 x hidden row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; 2],
}

impl Mlp {
    /// Zero-initialized perceptron with the given hidden width.
    pub fn zeros(hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        Ok(Mlp {
            hidden,
            w1: vec![0.0; hidden * PIXELS],
            b1: vec![0.0; hidden],
            w2: vec![0.0; 2 * hidden],
            b2: [0.0; 2],
        })
    }

    /// Pre-activation values of the hidden layer (useful for checking how
    /// close an input sits to a rectifier kink).
    pub fn hidden_preactivations(&self, x: &Raster) -> Vec<f64> {
        let xs = x.data();
        (0..self.hidden)
            .map(|j| dot(&self.w1[j * PIXELS..(j + 1) * PIXELS], xs) + self.b1[j])
            .collect()
    }
}

/// Either classifier shape behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Linear(LinearTwoLogit),
    Mlp(Mlp),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax cross-entropy of a two-logit output, stabilized by subtracting
/// the max logit before exponentiating.
pub fn loss_cross_entropy(logits: [f64; 2], label: Label) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[label.index()]
}

/// Binary difference-of-logits loss `-(z_label - z_other)`: negative when
/// the model favors the true label, zero at equal logits, antisymmetric
/// under label flip.
pub fn loss_dlr_binary(logits: [f64; 2], label: Label) -> f64 {
    -(logits[label.index()] - logits[label.other().index()])
}

/// Dispatch on [`LossKind`].
pub fn loss_value(logits: [f64; 2], label: Label, kind: LossKind) -> f64 {
    match kind {
        LossKind::Ce => loss_cross_entropy(logits, label),
        LossKind::Dlr => loss_dlr_binary(logits, label),
    }
}

/// Gradient of the loss with respect to the two logits.
fn loss_grad_logits(logits: [f64; 2], label: Label, kind: LossKind) -> [f64; 2] {
    match kind {
        LossKind::Ce => {
            let m = logits[0].max(logits[1]);
            let e0 = (logits[0] - m).exp();
            let e1 = (logits[1] - m).exp();
            let sum = e0 + e1;
            let mut g = [e0 / sum, e1 / sum];
            g[label.index()] -= 1.0;
            g
        }
        LossKind::Dlr => {
            let mut g = [0.0; 2];
            g[label.index()] = -1.0;
            g[label.other().index()] = 1.0;
            g
        }
    }
}

impl Model {
    /// Two logits for an input image. The linear shape always returns
    /// `(-s, +s)`.
    pub fn forward(&self, x: &Raster) -> [f64; 2] {
        match self {
            Model::Linear(m) => {
                let s = m.score(x.data());
                [-s, s]
            }
            Model::Mlp(m) => {
                let xs = x.data();
                let mut z = m.b2;
                for j in 0..m.hidden {
                    let a = dot(&m.w1[j * PIXELS..(j + 1) * PIXELS], xs) + m.b1[j];
                    if a > 0.0 {
                        z[0] += m.w2[j] * a;
                        z[1] += m.w2[m.hidden + j] * a;
                    }
                }
                z
            }
        }
    }

    /// Predicted label: argmax of the logits, ties to index 0 (non-mark).
    pub fn predict(&self, x: &Raster) -> Label {
        let z = self.forward(x);
        if z[1] > z[0] {
            Label::Mark
        } else {
            Label::NonMark
        }
    }

    /// Loss of the model on one labeled input.
    pub fn loss(&self, x: &Raster, label: Label, kind: LossKind) -> f64 {
        loss_value(self.forward(x), label, kind)
    }

    /// Loss and its exact gradient with respect to the input pixels, in
    /// one backward pass. The rectifier uses subgradient 0 at exactly 0.
    pub fn loss_and_grad_input(&self, x: &Raster, label: Label, kind: LossKind) -> (f64, Raster) {
        match self {
            Model::Linear(m) => {
                let s = m.score(x.data());
                let logits = [-s, s];
                let g = loss_grad_logits(logits, label, kind);
                let ds = g[1] - g[0];
                let mut grad = Vec::with_capacity(PIXELS);
                grad.extend(m.weights.iter().map(|w| ds * w));
                (
                    loss_value(logits, label, kind),
                    Raster::from_vec(grad).expect("weight count matches pixels"),
                )
            }
            Model::Mlp(m) => {
                let xs = x.data();
                let mut acts = vec![0.0; m.hidden];
                let mut z = m.b2;
                for j in 0..m.hidden {
                    let a = dot(&m.w1[j * PIXELS..(j + 1) * PIXELS], xs) + m.b1[j];
                    if a > 0.0 {
                        acts[j] = a;
                        z[0] += m.w2[j] * a;
                        z[1] += m.w2[m.hidden + j] * a;
                    }
                }
                let g = loss_grad_logits(z, label, kind);
                let mut grad = vec![0.0; PIXELS];
                for j in 0..m.hidden {
                    if acts[j] > 0.0 {
                        let gh = g[0] * m.w2[j] + g[1] * m.w2[m.hidden + j];
                        if gh != 0.0 {
                            let row = &m.w1[j * PIXELS..(j + 1) * PIXELS];
                            for (gi, wi) in grad.iter_mut().zip(row) {
                                *gi += gh * wi;
                            }
                        }
                    }
                }
                (
                    loss_value(z, label, kind),
                    Raster::from_vec(grad).expect("fixed size"),
                )
            }
        }
    }

    /// Exact gradient of the loss with respect to the input pixels.
    pub fn grad_input(&self, x: &Raster, label: Label, kind: LossKind) -> Raster {
        self.loss_and_grad_input(x, label, kind).1
    }

    /// Number of parameters in the flat layout.
    pub fn param_len(&self) -> usize {
        match self {
            Model::Linear(_) => PIXELS + 1,
            Model::Mlp(m) => m.hidden * PIXELS + m.hidden + 2 * m.hidden + 2,
        }
    }

    /// Copy of all parameters in the documented flat order:
    /// linear = `w | b`; perceptron = `w1 (row-major) | b1 | w2 (row-major) | b2`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Model::Linear(m) => {
                let mut p = m.weights.clone();
                p.push(m.bias);
                p
            }
            Model::Mlp(m) => {
                let mut p = Vec::with_capacity(self.param_len());
                p.extend_from_slice(&m.w1);
                p.extend_from_slice(&m.b1);
                p.extend_from_slice(&m.w2);
                p.extend_from_slice(&m.b2);
                p
            }
        }
    }

    /// Overwrite all parameters from the flat layout.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                flat.len()
            )));
        }
        match self {
            Model::Linear(m) => {
                m.weights.copy_from_slice(&flat[..PIXELS]);
                m.bias = flat[PIXELS];
            }
            Model::Mlp(m) => {
                let h = m.hidden;
                let (w1, rest) = flat.split_at(h * PIXELS);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(2 * h);
                m.w1.copy_from_slice(w1);
                m.b1.copy_from_slice(b1);
                m.w2.copy_from_slice(w2);
                m.b2.copy_from_slice(b2);
            }
        }
        Ok(())
    }

    /// Flat index ranges holding weight matrices (biases excluded); the
    /// trainer applies weight decay only inside these.
    pub fn weight_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            Model::Linear(_) => vec![0..PIXELS],
            Model::Mlp(m) => {
                let h = m.hidden;
                vec![0..h * PIXELS, h * PIXELS + h..h * PIXELS + h + 2 * h]
            }
        }
    }

    /// Backward pass for training: adds the parameter gradient of the loss
    /// at `(x, label)` into `out` (flat layout) and returns the loss.
    pub fn accumulate_param_grads(
        &self,
        x: &Raster,
        label: Label,
        kind: LossKind,
        out: &mut [f64],
    ) -> f64 {
        debug_assert_eq!(out.len(), self.param_len());
        match self {
            Model::Linear(m) => {
                let s = m.score(x.data());
                let logits = [-s, s];
                let g = loss_grad_logits(logits, label, kind);
                let ds = g[1] - g[0];
                for (o, xi) in out[..PIXELS].iter_mut().zip(x.data()) {
                    *o += ds * xi;
                }
                out[PIXELS] += ds;
                loss_value(logits, label, kind)
            }
            Model::Mlp(m) => {
                let h = m.hidden;
                let xs = x.data();
                let mut acts = vec![0.0; h];
                let mut z = m.b2;
                for j in 0..h {
                    let a = dot(&m.w1[j * PIXELS..(j + 1) * PIXELS], xs) + m.b1[j];
                    if a > 0.0 {
                        acts[j] = a;
                        z[0] += m.w2[j] * a;
                        z[1] += m.w2[h + j] * a;
                    }
                }
                let g = loss_grad_logits(z, label, kind);
                let (gw1, rest) = out.split_at_mut(h * PIXELS);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(2 * h);
                gb2[0] += g[0];
                gb2[1] += g[1];
                for j in 0..h {
                    gw2[j] += g[0] * acts[j];
                    gw2[h + j] += g[1] * acts[j];
                    if acts[j] > 0.0 {
                        let gh = g[0] * m.w2[j] + g[1] * m.w2[h + j];
                        gb1[j] += gh;
                        if gh != 0.0 {
                            let row = &mut gw1[j * PIXELS..(j + 1) * PIXELS];
                            for (o, xi) in row.iter_mut().zip(xs) {
                                *o += gh * xi;
                            }
                        }
                    }
                }
                loss_value(z, label, kind)
            }
        }
    }

    /// Parameter gradient as a standalone vector (flat layout).
    pub fn grad_params(&self, x: &Raster, label: Label, kind: LossKind) -> Vec<f64> {
        let mut out = vec![0.0; self.param_len()];
        self.accumulate_param_grads(x, label, kind, &mut out);
        out
    }
}

/// Accuracy of a model over a labeled set, overall and per mark family.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_mark_type: BTreeMap<MarkType, f64>,
}

/// Evaluate accuracy with the tie-to-non-mark argmax rule.
pub fn evaluate(model: &Model, data: &[BubbleImage]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let mut correct = 0usize;
    let mut per: BTreeMap<MarkType, (usize, usize)> = BTreeMap::new();
    for img in data {
        let ok = model.predict(&img.pixels) == img.label;
        correct += usize::from(ok);
        let entry = per.entry(img.mark_type).or_insert((0, 0));
        entry.0 += usize::from(ok);
        entry.1 += 1;
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        per_mark_type: per
            .into_iter()
            .map(|(m, (c, t))| (m, c as f64 / t as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn raster_from_fn(f: impl Fn(usize) -> f64) -> Raster {
        Raster::from_vec((0..PIXELS).map(f).collect()).unwrap()
    }

    fn random_raster(s: &mut Stream) -> Raster {
        Raster::from_vec((0..PIXELS).map(|_| s.uniform()).collect()).unwrap()
    }

    fn random_linear(s: &mut Stream) -> Model {
        let w = (0..PIXELS).map(|_| s.uniform_in(-0.05, 0.05)).collect();
        Model::Linear(LinearTwoLogit::new(w, s.uniform_in(-0.5, 0.5)).unwrap())
    }

    fn random_mlp(s: &mut Stream, hidden: usize) -> Model {
        let mut m = Model::Mlp(Mlp::zeros(hidden).unwrap());
        let n = m.param_len();
        let params: Vec<f64> = (0..n).map(|_| s.uniform_in(-0.05, 0.05)).collect();
        m.set_params(&params).unwrap();
        m
    }

    #[test]
    fn linear_forward_examples() {
        let zero = Model::Linear(LinearTwoLogit::zeros());
        assert_eq!(zero.forward(&Raster::filled(0.4)), [0.0, 0.0]);

        let m = Model::Linear(LinearTwoLogit::new(vec![0.001; PIXELS], 0.0).unwrap());
        let z = m.forward(&Raster::filled(1.0));
        assert!((z[0] + 2.0).abs() < 1e-12 && (z[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_logits_always_symmetric() {
        let mut s = Stream::new(4, 0);
        let m = random_linear(&mut s);
        for _ in 0..20 {
            let z = m.forward(&random_raster(&mut s));
            assert_eq!(z[0], -z[1]);
        }
    }

    #[test]
    fn mlp_with_zero_output_weights_is_constant() {
        let mut m = Mlp::zeros(8).unwrap();
        m.b2 = [0.3, -0.7];
        // Nonzero first layer so the hidden activations vary.
        for v in m.w1.iter_mut().step_by(17) {
            *v = 0.2;
        }
        let model = Model::Mlp(m);
        let mut s = Stream::new(5, 0);
        for _ in 0..5 {
            assert_eq!(model.forward(&random_raster(&mut s)), [0.3, -0.7]);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((loss_cross_entropy([0.0, 0.0], Label::Mark) - ln2).abs() < 1e-12);
        assert!((loss_cross_entropy([0.0, 0.0], Label::NonMark) - ln2).abs() < 1e-12);
        assert!(loss_cross_entropy([-20.0, 20.0], Label::Mark) <= 1e-8);
        // 40-digit reference: 2 + ln(1 + e^-2).
        let want = 2.126928011042972;
        assert!((loss_cross_entropy([3.0, 1.0], Label::Mark) - want).abs() < 1e-12);
        // Max-shift keeps huge logits finite.
        assert!(loss_cross_entropy([1e308, -1e308], Label::NonMark).is_finite());
    }

    #[test]
    fn dlr_examples_and_antisymmetry() {
        assert_eq!(loss_dlr_binary([2.0, 5.0], Label::Mark), -3.0);
        assert_eq!(loss_dlr_binary([2.0, 5.0], Label::NonMark), 3.0);
        assert_eq!(loss_dlr_binary([1.25, 1.25], Label::Mark), 0.0);
        let mut s = Stream::new(6, 0);
        for _ in 0..1000 {
            let z = [s.uniform_in(-50.0, 50.0), s.uniform_in(-50.0, 50.0)];
            let a = loss_dlr_binary(z, Label::Mark);
            let b = loss_dlr_binary(z, Label::NonMark);
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn linear_dlr_input_gradient_closed_form() {
        let mut s = Stream::new(7, 0);
        let m = random_linear(&mut s);
        let x = random_raster(&mut s);
        let g = m.grad_input(&x, Label::NonMark, LossKind::Dlr);
        if let Model::Linear(lin) = &m {
            // Label 0: loss = -(-s - s) = 2s, so the gradient is 2w.
            for (gi, wi) in g.data().iter().zip(&lin.weights) {
                assert!((gi - 2.0 * wi).abs() < 1e-12);
            }
            // Label 1 flips the sign.
            let g1 = m.grad_input(&x, Label::Mark, LossKind::Dlr);
            for (gi, wi) in g1.data().iter().zip(&lin.weights) {
                assert!((gi + 2.0 * wi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_model_has_zero_gradient() {
        let m = Model::Mlp(Mlp::zeros(16).unwrap());
        let g = m.grad_input(&Raster::filled(0.5), Label::Mark, LossKind::Ce);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    /// Central finite difference on a scalar function.
    fn central_diff(f: impl Fn(f64) -> f64, at: f64, step: f64) -> f64 {
        (f(at + step) - f(at - step)) / (2.0 * step)
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let mut s = Stream::new(8, 0);
        for case in 0..12 {
            let model = if case % 2 == 0 {
                random_linear(&mut s)
            } else {
                random_mlp(&mut s, 12)
            };
            let kind = if case % 4 < 2 { LossKind::Ce } else { LossKind::Dlr };
            let x = random_raster(&mut s);
            let label = if case % 3 == 0 { Label::Mark } else { Label::NonMark };
            let analytic = model.grad_input(&x, label, kind);
            for _ in 0..20 {
                let pixel = s.index(PIXELS);
                let numeric = central_diff(
                    |v| {
                        let mut xp = x.clone();
                        xp.data_mut()[pixel] = v;
                        model.loss(&xp, label, kind)
                    },
                    x.data()[pixel],
                    1e-4,
                );
                let rel = relative_error(analytic.data()[pixel], numeric);
                assert!(
                    rel <= 1e-4,
                    "case {case} pixel {pixel}: analytic {} vs numeric {numeric}",
                    analytic.data()[pixel]
                );
            }
        }
    }

    #[test]
    fn param_gradients_match_finite_differences() {
        let mut s = Stream::new(9, 0);
        for case in 0..8 {
            let model = if case % 2 == 0 {
                random_linear(&mut s)
            } else {
                random_mlp(&mut s, 10)
            };
            let kind = if case < 4 { LossKind::Ce } else { LossKind::Dlr };
            let x = random_raster(&mut s);
            let label = if case % 3 == 0 { Label::Mark } else { Label::NonMark };
            let analytic = model.grad_params(&x, label, kind);
            let base = model.params();
            for _ in 0..20 {
                let idx = s.index(base.len());
                let numeric = central_diff(
                    |v| {
                        let mut m = model.clone();
                        let mut p = base.clone();
                        p[idx] = v;
                        m.set_params(&p).unwrap();
                        m.loss(&x, label, kind)
                    },
                    base[idx],
                    1e-4,
                );
                let rel = relative_error(analytic[idx], numeric);
                assert!(
                    rel <= 1e-4,
                    "case {case} param {idx}: analytic {} vs numeric {numeric}",
                    analytic[idx]
                );
            }
        }
    }

    #[test]
    fn params_round_trip_through_flat_layout() {
        let mut s = Stream::new(10, 0);
        for model in [random_linear(&mut s), random_mlp(&mut s, 7)] {
            let flat = model.params();
            assert_eq!(flat.len(), model.param_len());
            let mut copy = match &model {
                Model::Linear(_) => Model::Linear(LinearTwoLogit::zeros()),
                Model::Mlp(m) => Model::Mlp(Mlp::zeros(m.hidden).unwrap()),
            };
            copy.set_params(&flat).unwrap();
            assert_eq!(copy, model);
            assert!(copy.set_params(&flat[1..]).is_err());
        }
    }

    #[test]
    fn predict_breaks_ties_toward_non_mark() {
        let zero = Model::Linear(LinearTwoLogit::zeros());
        assert_eq!(zero.predict(&Raster::filled(0.3)), Label::NonMark);
    }

    #[test]
    fn evaluate_counts_per_type() {
        let zero = Model::Linear(LinearTwoLogit::zeros()); // always non-mark
        let blank = BubbleImage::new(Raster::filled(0.9), MarkType::Blank).unwrap();
        let filled = BubbleImage::new(Raster::filled(0.1), MarkType::Filled).unwrap();
        let data = vec![blank.clone(), filled.clone(), blank, filled];
        let eval = evaluate(&zero, &data).unwrap();
        assert_eq!(eval.accuracy, 0.5);
        assert_eq!(eval.per_mark_type[&MarkType::Blank], 1.0);
        assert_eq!(eval.per_mark_type[&MarkType::Filled], 0.0);
        assert!(evaluate(&zero, &[]).is_err());
    }

    #[test]
    fn weight_ranges_cover_weights_only() {
        let m = random_mlp(&mut Stream::new(11, 0), 4);
        let ranges = m.weight_ranges();
        let total: usize = ranges.iter().map(|r| r.len()).sum();
        // 4*2000 + 2*4 weights; 4 + 2 biases excluded.
        assert_eq!(total, 4 * PIXELS + 8);
        assert_eq!(m.param_len(), total + 6);
    }

    #[test]
    fn gradient_loss_value_agrees_with_loss() {
        let mut s = Stream::new(12, 0);
        let m = random_mlp(&mut s, 9);
        let x = random_raster(&mut s);
        for kind in [LossKind::Ce, LossKind::Dlr] {
            let (l, _) = m.loss_and_grad_input(&x, Label::Mark, kind);
            assert_eq!(l, m.loss(&x, Label::Mark, kind));
        }
    }

    #[test]
    fn raster_from_fn_helper_is_exercised() {
        let r = raster_from_fn(|i| (i % 7) as f64 / 10.0);
        assert_eq!(r.get(0, 6), 0.6);
    }
}
