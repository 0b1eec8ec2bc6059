//! Linear warmup followed by cosine decay.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
    pub lr_base: f64,
    pub lr_min: f64,
}

impl Schedule {
    pub fn new(
        warmup_epochs: usize,
        total_epochs: usize,
        steps_per_epoch: usize,
        lr_base: f64,
        lr_min: f64,
    ) -> Result<Self> {
        if warmup_epochs >= total_epochs {
            return Err(Error::config(format!(
                "warmup ({warmup_epochs} epochs) must be shorter than the run ({total_epochs})"
            )));
        }
        if steps_per_epoch == 0 {
            return Err(Error::config("steps_per_epoch must be positive"));
        }
        Ok(Schedule {
            warmup_epochs,
            total_epochs,
            steps_per_epoch,
            lr_base,
            lr_min,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.total_epochs * self.steps_per_epoch
    }

    /// Learning rate at a global step. The warmup ramp at step s is
    /// lr_base * (s + 1) / warmup_steps; the cosine phase starts at lr_base
    /// (step == warmup end) and exactly reaches lr_min on the final step.
    pub fn lr_at(&self, step: usize) -> f64 {
        let warmup_steps = self.warmup_epochs * self.steps_per_epoch;
        if step < warmup_steps {
            return self.lr_base * (step + 1) as f64 / warmup_steps as f64;
        }
        let decay_steps = self.total_steps() - warmup_steps;
        let t = (step - warmup_steps).min(decay_steps.saturating_sub(1));
        let progress = if decay_steps <= 1 {
            1.0
        } else {
            t as f64 / (decay_steps - 1) as f64
        };
        self.lr_min
            + 0.5 * (self.lr_base - self.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
