//! Central finite-difference check of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{backward, forward};
use super::{loss, FusionMode, ModelConfig, ModelError, Params, UtteranceInput};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Maximum accepted relative error per coordinate.
    pub tolerance: f64,
    /// Magnitudes below this are compared absolutely (the denominator is floored here).
    pub abs_floor: f64,
    pub coordinates: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, tolerance: 1e-4, abs_floor: 1e-6, coordinates: 240, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checks: Vec<CoordinateCheck>,
    pub max_rel_error: f64,
    pub tensors_covered: usize,
}

/// Compares `analytic` against central differences of `loss_at` on coordinates spread
/// over every tensor of `params`.
pub fn compare_gradients(
    params: &Params,
    analytic: &Params,
    loss_at: impl Fn(&Params) -> f64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, ModelError> {
    let names: Vec<String> = params.manifest().into_iter().map(|(n, _)| n).collect();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let per_tensor = opts.coordinates.div_ceil(names.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let grads = analytic.tensors();
    let mut checks = Vec::new();
    let mut probe = params.clone();
    for (ti, &size) in sizes.iter().enumerate() {
        let picks = sample(&mut rng, size, per_tensor.min(size)).into_vec();
        for idx in picks {
            let orig = params.tensors()[ti][idx];
            set(&mut probe, ti, idx, orig + opts.step);
            let up = loss_at(&probe);
            set(&mut probe, ti, idx, orig - opts.step);
            let down = loss_at(&probe);
            set(&mut probe, ti, idx, orig);
            let numeric = (up - down) / (2.0 * opts.step);
            let a = grads[ti][idx];
            let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
            checks.push(CoordinateCheck { tensor: names[ti].clone(), index: idx, analytic: a, numeric, rel_error });
        }
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    let failed: Vec<&CoordinateCheck> =
        checks.iter().filter(|c| c.rel_error.is_nan() || c.rel_error >= opts.tolerance).collect();
    if !failed.is_empty() {
        let mut worst = failed.clone();
        worst.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
        let worst = worst
            .iter()
            .take(5)
            .map(|c| format!("{}[{}] analytic {:.3e} numeric {:.3e}", c.tensor, c.index, c.analytic, c.numeric))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(ModelError::GradientMismatch { failed: failed.len(), checked: checks.len(), worst });
    }
    let tensors_covered = sizes.iter().filter(|&&s| s > 0).count();
    Ok(GradCheckReport { checks, max_rel_error, tensors_covered })
}

fn set(p: &mut Params, tensor: usize, idx: usize, value: f64) {
    let (_, t) = p.tensors_mut().into_iter().nth(tensor).expect("tensor index");
    t[idx] = value;
}

/// Gradient check of the full network on one standardized sample, dropout off.
pub fn grad_check(
    params: &Params,
    cfg: &ModelConfig,
    fusion: FusionMode,
    input: &UtteranceInput,
    label: usize,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, ModelError> {
    if input.chunks() == 0 {
        return Err(ModelError::EmptyUtterance);
    }
    let cache = forward(params, cfg, fusion, input, None);
    let mut analytic = params.zeros_like();
    backward(params, cfg, fusion, input, &cache, label, &mut analytic);
    compare_gradients(params, &analytic, |p| loss(&forward(p, cfg, fusion, input, None).probs, label), opts)
}
