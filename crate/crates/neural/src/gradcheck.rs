//! Central-difference check of the reverse pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::encode::Sample;
use crate::error::Result;
use crate::train::batch_loss_grad;
use crate::model::Model;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// `|a − f| / max(|a|, |f|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

/// Compares the analytic gradient of the batch loss with central differences
/// on `count` parameters drawn without replacement.
pub fn gradient_check(model: &Model, theta: &[f64], batch: &[&Sample], count: usize, step: f64, seed: u64) -> Result<Vec<GradCheck>> {
    let (_, grad) = batch_loss_grad(model, theta, batch)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, theta.len(), count.min(theta.len()));
    let mut probe = theta.to_vec();
    picks
        .iter()
        .map(|i| {
            probe[i] = theta[i] + step;
            let plus = batch_loss_grad(model, &probe, batch)?.0;
            probe[i] = theta[i] - step;
            let minus = batch_loss_grad(model, &probe, batch)?.0;
            probe[i] = theta[i];
            Ok(GradCheck { index: i, analytic: grad[i], numeric: (plus - minus) / (2.0 * step) })
        })
        .collect()
}
