use alloc::format;

use crate::error::{Error, Result};

/// Fraction of clients sampled each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JoinRatio {
    Fixed(f64),
    /// Redrawn uniformly from `[low, high]` every round.
    Range {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub total_rounds: usize,
    pub join_ratio: JoinRatio,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    /// Learning rate for the head-mixing weights; `None` means `local_lr`.
    pub weight_lr: Option<f64>,
    /// Value every mixing weight starts from on a client's first round.
    pub weight_init: f64,
    pub eval_every: usize,
    /// Stop after this many evaluations without a new best mean accuracy.
    pub early_stop_patience: Option<usize>,
    pub master_seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            total_rounds: 100,
            join_ratio: JoinRatio::Fixed(1.0),
            local_epochs: 1,
            batch_size: 10,
            local_lr: 0.05,
            weight_lr: None,
            weight_init: 1.0,
            eval_every: 1,
            early_stop_patience: None,
            master_seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn weight_lr(&self) -> f64 {
        self.weight_lr.unwrap_or(self.local_lr)
    }

    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |r: f64| r > 0.0 && r <= 1.0;
        match self.join_ratio {
            JoinRatio::Fixed(r) if !ratio_ok(r) => {
                return Err(Error::config(format!(
                    "join ratio must be in (0, 1], got {r}"
                )));
            }
            JoinRatio::Range { low, high } if !(ratio_ok(low) && ratio_ok(high) && low <= high) => {
                return Err(Error::config(format!(
                    "join ratio range must satisfy 0 < low <= high <= 1, got [{low}, {high}]"
                )));
            }
            _ => {}
        }
        if self.total_rounds == 0 {
            return Err(Error::config("total_rounds must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        if !(self.local_lr > 0.0 && self.local_lr.is_finite()) {
            return Err(Error::config("local_lr must be positive"));
        }
        let wlr = self.weight_lr();
        if !(wlr >= 0.0 && wlr.is_finite()) {
            return Err(Error::config("weight_lr must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.weight_init) {
            return Err(Error::config("weight_init must lie in [0, 1]"));
        }
        if self.early_stop_patience == Some(0) {
            return Err(Error::config("early_stop_patience must be at least 1"));
        }
        Ok(())
    }
}
