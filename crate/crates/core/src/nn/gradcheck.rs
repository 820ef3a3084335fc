//! Central finite-difference gradient checking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::ParamStore;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Fraction of scalar entries to probe (1.0 = all).
    pub sample_fraction: f64,
    /// Lower bound on the relative-error denominator.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-4,
            sample_fraction: 1.0,
            denominator_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the gradients already accumulated in `store` (from a backward
/// pass of `loss`) against central differences of `loss`.
pub fn check_gradients(
    store: &mut ParamStore<f64>,
    loss: impl Fn(&ParamStore<f64>) -> Result<f64>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut entries: Vec<(usize, usize)> = Vec::new();
    for (pid, p) in store.iter().enumerate() {
        if p.trainable {
            entries.extend((0..p.value.len()).map(|i| (pid, i)));
        }
    }
    if opts.sample_fraction < 1.0 {
        entries.shuffle(&mut rng);
        let keep = ((entries.len() as f64 * opts.sample_fraction).ceil() as usize).max(1);
        entries.truncate(keep);
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pid, i) in entries {
        let analytic = store.param(pid).grad.data()[i];
        let orig = store.param(pid).value.data()[i];
        store.param_mut(pid).value.data_mut()[i] = orig + opts.step;
        let up = loss(store)?;
        store.param_mut(pid).value.data_mut()[i] = orig - opts.step;
        let down = loss(store)?;
        store.param_mut(pid).value.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * opts.step);
        let denom = analytic.abs().max(numeric.abs()).max(opts.denominator_floor);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst = Some((store.param(pid).name.clone(), i));
        }
    }
    Ok(report)
}
