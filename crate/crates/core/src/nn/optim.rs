use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layers::Parameter;
use super::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            lr_decay: 0.1,
            decay_every: 7,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 8,
            epochs: 50,
            seed: 0x7EA1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lr_decay", self.lr_decay),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "train.{name} must be positive, got {v}"
            )));
        }
        if self.decay_every == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument(
                "train.decay_every, train.batch_size and train.epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Step schedule: `lr * lr_decay^(epoch / decay_every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// Default step schedule.
pub fn lr_schedule(epoch: usize) -> f64 {
    TrainConfig::default().lr_at(epoch)
}

/// Momentum SGD with L2 decay folded into the gradient:
/// `v = momentum * v + (g + wd * w)`, `w -= lr * v`. Decay only touches
/// parameters flagged for it.
pub fn sgd_step<T: Scalar>(params: &mut [&mut Parameter<T>], lr: f64, momentum: f64, weight_decay: f64) {
    let (lr, mu) = (T::from_f64_lossy(lr), T::from_f64_lossy(momentum));
    for p in params.iter_mut() {
        let wd = if p.decay {
            T::from_f64_lossy(weight_decay)
        } else {
            T::zero()
        };
        let Parameter {
            value, grad, momentum, ..
        } = &mut **p;
        for ((w, g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(momentum.data_mut()) {
            *v = mu * *v + (*g + wd * *w);
            *w -= lr * *v;
        }
    }
}
