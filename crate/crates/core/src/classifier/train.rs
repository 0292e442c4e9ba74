//! Momentum-SGD training with optional z-score standardization.
//!
//! Training always minimizes cross-entropy. When standardization is on,
//! the model learns in z-scored feature space and the fitted scaler is
//! folded into the first layer before the model is returned, so callers
//! (and attackers) always see a model operating on raw pixel intensities.
//!
//! Everything is bit-deterministic per seed: weight init and per-epoch
//! batch order come from dedicated RNG substreams, batches run
//! sequentially, and no adaptive optimizer state depends on summation
//! order.

use serde::{Deserialize, Serialize};

use crate::image::{BubbleImage, Label, Raster};
use crate::rng::{Purpose, Stream};
use crate::{Error, Result, PIXELS};

use super::{LinearTwoLogit, LossKind, Mlp, Model};

/// Which classifier shape to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

/// Hyperparameters for [`train`]. Defaults are tuned for the synthetic
/// bubble corpus at desk scale; they carry no claim beyond that.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Hidden width for [`ModelKind::Mlp`]; ignored by the linear model.
    pub hidden: usize,
    /// The default suits the perceptron; the two-layer net needs a
    /// gentler rate (0.01–0.03) or its loss blows up under momentum.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// L2 penalty applied to weight matrices only (never biases).
    pub weight_decay: f64,
    /// Fit a z-score scaler on the training split and fold it into the
    /// returned model.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 64,
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 1e-4,
            standardize: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Check every field is in its documented domain.
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::invalid("hidden must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be nonnegative"));
        }
        Ok(())
    }
}

/// Per-feature affine transform `(x - mean) / scale`.
///
/// Fitting uses the population standard deviation; features with zero
/// variance get scale 1 so they transform to exactly 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    /// The do-nothing scaler.
    pub fn identity() -> Self {
        Scaler {
            mean: vec![0.0; PIXELS],
            scale: vec![1.0; PIXELS],
        }
    }

    /// Fit per-pixel mean and standard deviation over a dataset
    /// (two-pass; requires at least 2 samples).
    pub fn fit(data: &[BubbleImage]) -> Result<Scaler> {
        if data.len() < 2 {
            return Err(Error::invalid("scaler fit needs at least 2 samples"));
        }
        let n = data.len() as f64;
        let mut mean = vec![0.0; PIXELS];
        for img in data {
            for (m, x) in mean.iter_mut().zip(img.pixels.data()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; PIXELS];
        for img in data {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(img.pixels.data()) {
                let d = x - m;
                *v += d * d;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Scaler { mean, scale })
    }

    /// Standardize one raster.
    pub fn apply(&self, x: &Raster) -> Raster {
        let data = x
            .data()
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect();
        Raster::from_vec(data).expect("fixed size")
    }

    /// Undo [`Scaler::apply`].
    pub fn inverse(&self, z: &Raster) -> Raster {
        let data = z
            .data()
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| z * s + m)
            .collect();
        Raster::from_vec(data).expect("fixed size")
    }
}

/// Rewrite a model trained on standardized features so it acts on raw
/// pixels: each first-layer weight divides by the feature scale, and the
/// first-layer bias absorbs `-sum_i w_i mean_i / scale_i`. Logits agree
/// with the standardized composition up to floating-point roundoff.
pub fn fold_scaler(model: &Model, scaler: &Scaler) -> Model {
    match model {
        Model::Linear(m) => {
            let mut weights = Vec::with_capacity(PIXELS);
            let mut bias = m.bias;
            for ((w, s), mu) in m.weights.iter().zip(&scaler.scale).zip(&scaler.mean) {
                let wr = w / s;
                weights.push(wr);
                bias -= wr * mu;
            }
            Model::Linear(LinearTwoLogit { weights, bias })
        }
        Model::Mlp(m) => {
            let mut folded = m.clone();
            for j in 0..m.hidden {
                let row = &mut folded.w1[j * PIXELS..(j + 1) * PIXELS];
                let mut shift = 0.0;
                for ((w, s), mu) in row.iter_mut().zip(&scaler.scale).zip(&scaler.mean) {
                    *w /= s;
                    shift += *w * mu;
                }
                folded.b1[j] -= shift;
            }
            Model::Mlp(folded)
        }
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Mean per-sample cross-entropy over the epoch's batches, measured at
    /// each batch's pre-update parameters.
    pub loss: f64,
}

fn init_model(kind: ModelKind, cfg: &TrainConfig) -> Model {
    let mut rng = Stream::for_item(cfg.seed, Purpose::WeightInit, 0);
    // Scaled-uniform by fan-in; biases start at zero.
    match kind {
        ModelKind::Linear => {
            let bound = 1.0 / (PIXELS as f64).sqrt();
            let w = (0..PIXELS).map(|_| rng.uniform_in(-bound, bound)).collect();
            Model::Linear(LinearTwoLogit { weights: w, bias: 0.0 })
        }
        ModelKind::Mlp => {
            let h = cfg.hidden;
            let b1 = 1.0 / (PIXELS as f64).sqrt();
            let b2 = 1.0 / (h as f64).sqrt();
            let w1 = (0..h * PIXELS).map(|_| rng.uniform_in(-b1, b1)).collect();
            let w2 = (0..2 * h).map(|_| rng.uniform_in(-b2, b2)).collect();
            Model::Mlp(Mlp {
                hidden: h,
                w1,
                b1: vec![0.0; h],
                w2,
                b2: [0.0; 2],
            })
        }
    }
}

fn accuracy(model: &Model, xs: &[Raster], labels: &[Label]) -> f64 {
    let correct = xs
        .iter()
        .zip(labels)
        .filter(|(x, &y)| model.predict(x) == y)
        .count();
    correct as f64 / xs.len() as f64
}

/// Train a classifier on the train split, tracking accuracy on both
/// splits each epoch. Returns the model in raw pixel space together with
/// its history.
///
/// Requires both splits nonempty and both classes present in the train
/// split. Identical `(data, kind, config)` triples produce bit-identical
/// models and histories.
pub fn train(
    train_set: &[BubbleImage],
    val_set: &[BubbleImage],
    kind: ModelKind,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<EpochStats>)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("train and validation splits must be nonempty"));
    }
    let marks = train_set.iter().filter(|i| i.label == Label::Mark).count();
    if marks == 0 || marks == train_set.len() {
        return Err(Error::invalid(
            "training split must contain both classes",
        ));
    }

    let scaler = if cfg.standardize {
        Scaler::fit(train_set)?
    } else {
        Scaler::identity()
    };
    let tx: Vec<Raster> = train_set.iter().map(|i| scaler.apply(&i.pixels)).collect();
    let ty: Vec<Label> = train_set.iter().map(|i| i.label).collect();
    let vx: Vec<Raster> = val_set.iter().map(|i| scaler.apply(&i.pixels)).collect();
    let vy: Vec<Label> = val_set.iter().map(|i| i.label).collect();

    let mut model = init_model(kind, cfg);
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut grads = vec![0.0; params.len()];
    let weight_ranges = model.weight_ranges();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..tx.len()).collect();

    for epoch in 1..=cfg.epochs {
        let mut shuffle_rng = Stream::for_item(cfg.seed, Purpose::EpochShuffle, epoch as u64);
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill(0.0);
            for &i in batch {
                loss_sum += model.accumulate_param_grads(&tx[i], ty[i], LossKind::Ce, &mut grads);
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= inv;
            }
            for range in &weight_ranges {
                for i in range.clone() {
                    grads[i] += cfg.weight_decay * params[i];
                }
            }
            for ((v, g), p) in velocity.iter_mut().zip(&grads).zip(&mut params) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            model.set_params(&params)?;
        }

        history.push(EpochStats {
            epoch,
            train_acc: accuracy(&model, &tx, &ty),
            val_acc: accuracy(&model, &vx, &vy),
            loss: loss_sum / tx.len() as f64,
        });
    }

    Ok((fold_scaler(&model, &scaler), history))
}

/// Write a training history as CSV with header `epoch,train_acc,val_acc,loss`.
pub fn write_history_csv(path: &std::path::Path, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), io_of_csv(e)))?;
    for row in history {
        w.serialize(row)
            .map_err(|e| Error::io(path.display().to_string(), io_of_csv(e)))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn io_of_csv(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}
