use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_epochs: usize,
    pub beta1_final: f64,
    pub beta2_final: f64,
}

impl Schedule {
    pub fn new(
        total_epochs: usize,
        beta1_final: f64,
        beta2_final: f64,
    ) -> Result<Self, TrainError> {
        let s = Self {
            total_epochs,
            beta1_final,
            beta2_final,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.total_epochs < 4 {
            return Err(TrainError::ShortSchedule(self.total_epochs));
        }
        Ok(())
    }

    /// Epochs where the ramp starts and ends.
    pub fn boundaries(&self) -> (usize, usize) {
        (self.total_epochs / 4, self.total_epochs / 2)
    }
}

/// Zero for the first quarter, a linear ramp through the second quarter,
/// then the final values.
pub fn beta_at(schedule: &Schedule, epoch: usize) -> (f64, f64) {
    let (start, end) = schedule.boundaries();
    let f = if epoch < start {
        0.0
    } else if epoch >= end {
        1.0
    } else {
        (epoch - start) as f64 / (end - start) as f64
    };
    if f == 1.0 {
        (schedule.beta1_final, schedule.beta2_final)
    } else {
        (schedule.beta1_final * f, schedule.beta2_final * f)
    }
}
