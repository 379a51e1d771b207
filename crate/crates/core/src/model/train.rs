//! Mini-batch Adam training.
//!
//! A batch is a list of utterances with different chunk counts. Each utterance is run on
//! its own valid chunk prefix, which is what zero-padding to the longest utterance plus a
//! chunk mask computes, without materializing the padding. Per-utterance gradients are
//! computed in parallel and summed in batch order, so results do not depend on the thread
//! count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward};
use super::{
    argmax, loss, FusionMode, InputShape, ModelConfig, ModelError, Params, Sample, TrainedModel, UtteranceInput,
};
use crate::eval::macro_f1;
use crate::features::MarkerStats;
use crate::par::{self, Execution};
use crate::rng::mix_seed;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_macro_f1: f64,
    pub alpha: Vec<f64>,
}

pub type TrainingHistory = Vec<EpochRecord>;

/// Optimizer state around a parameter set.
pub struct Trainer {
    pub config: ModelConfig,
    pub shape: InputShape,
    pub fusion: FusionMode,
    pub params: Params,
    m: Params,
    v: Params,
    steps: u64,
    exec: Execution,
}

impl Trainer {
    pub fn new(
        config: ModelConfig,
        shape: InputShape,
        fusion: FusionMode,
        exec: Execution,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if let FusionMode::Fixed(j) = fusion {
            if j >= shape.sources {
                return Err(ModelError::InvalidConfig(format!("fixed source {j} out of range")));
            }
        }
        let params = Params::init(&config, &shape, config.seed);
        let m = params.zeros_like();
        let v = params.zeros_like();
        Ok(Self { config, shape, fusion, params, m, v, steps: 0, exec })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Mean loss and gradient over `batch`. `dropout_seed` of `None` disables dropout.
    pub fn loss_and_gradient(&self, batch: &[(&UtteranceInput, usize)], dropout_seed: Option<u64>) -> (f64, Params) {
        let per_sample = par::map_range(self.exec, batch.len(), |i| {
            let (x, label) = batch[i];
            let mut rng = dropout_seed.map(|s| ChaCha8Rng::seed_from_u64(mix_seed(&[s, i as u64])));
            let cache = forward(&self.params, &self.config, self.fusion, x, rng.as_mut());
            let mut g = self.params.zeros_like();
            backward(&self.params, &self.config, self.fusion, x, &cache, label, &mut g);
            (loss(&cache.probs, label), g)
        });
        let n = batch.len() as f64;
        let mut total = self.params.zeros_like();
        let mut l = 0.0;
        for (li, g) in &per_sample {
            l += li;
            total.add_scaled(g, 1.0 / n);
        }
        (l / n, total)
    }

    /// One Adam update on `batch`; returns the batch loss before the update.
    pub fn step(&mut self, batch: &[(&UtteranceInput, usize)], dropout_seed: Option<u64>) -> f64 {
        let (l, mut g) = self.loss_and_gradient(batch, dropout_seed);
        if matches!(self.fusion, FusionMode::Fixed(_)) {
            g.theta.fill(0.0);
        }
        self.apply(&g);
        l
    }

    fn apply(&mut self, g: &Params) {
        self.steps += 1;
        let t = self.steps as i32;
        let lr = self.config.learning_rate;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let grads = g.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let freeze_theta = matches!(self.fusion, FusionMode::Fixed(_));
        for (((i, p), (_, m)), (_, v)) in self.params.tensors_mut().into_iter().zip(ms).zip(vs) {
            if i == 0 && freeze_theta {
                continue;
            }
            for j in 0..p.len() {
                let gj = grads[i][j];
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }

    pub fn alpha(&self) -> ndarray::Array1<f64> {
        super::fusion_weights(&self.params.theta, self.fusion)
    }
}

fn check_simplex(alpha: &ndarray::Array1<f64>) {
    assert!(alpha.iter().all(|&a| a >= 0.0), "fusion weights left the simplex: {alpha}");
    assert!((alpha.sum() - 1.0).abs() < 1e-12, "fusion weights do not sum to one: {alpha}");
}

/// Trains a classifier on `samples` (raw markers; standardization is fitted here).
///
/// The returned parameters are rounded to `f32` so a saved checkpoint reproduces the
/// in-memory model exactly.
pub fn train(
    samples: &[Sample],
    config: &ModelConfig,
    fusion: FusionMode,
    exec: Execution,
) -> Result<(TrainedModel, TrainingHistory), ModelError> {
    let first = samples.first().ok_or(ModelError::EmptyDataset)?;
    let shape = first.input.shape().ok_or(ModelError::EmptyDataset)?;
    for s in samples {
        s.input.check(&shape)?;
        if s.label >= config.classes {
            return Err(ModelError::InvalidConfig(format!("label {} out of range", s.label)));
        }
    }
    let stats = MarkerStats::fit(
        shape.markers,
        samples.iter().flat_map(|s| s.input.markers.rows().into_iter().map(|r| r.to_slice().unwrap())),
    );
    let inputs: Vec<UtteranceInput> = samples.iter().map(|s| s.input.standardized(&stats)).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();

    let mut trainer = Trainer::new(config.clone(), shape, fusion, exec)?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, epoch as u64, 0x5AFF1E]));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&UtteranceInput, usize)> = idx.iter().map(|&i| (&inputs[i], labels[i])).collect();
            let dropout_seed = (config.dropout > 0.0).then(|| mix_seed(&[config.seed, epoch as u64, step as u64]));
            let l = trainer.step(&batch, dropout_seed);
            if !l.is_finite() || !trainer.params.all_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, step });
            }
            epoch_loss += l * idx.len() as f64;
        }
        let alpha = trainer.alpha();
        check_simplex(&alpha);
        let preds = par::map(exec, &inputs, |x| argmax(&forward(&trainer.params, config, fusion, x, None).probs));
        history.push(EpochRecord {
            epoch,
            loss: epoch_loss / samples.len() as f64,
            train_macro_f1: macro_f1(&preds, &labels).unwrap_or(0.0),
            alpha: alpha.to_vec(),
        });
        log::debug!("epoch {epoch}: loss {:.4}", epoch_loss / samples.len() as f64);
    }
    let mut params = trainer.params;
    params.round_to_f32();
    Ok((TrainedModel { config: config.clone(), shape, fusion, params, marker_stats: stats }, history))
}
