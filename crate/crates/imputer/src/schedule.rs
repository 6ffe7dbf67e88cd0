//! The four-phase curriculum: a linear masking-rate ramp with a guaranteed
//! full-masking plateau over the final epochs.

use serde::{Deserialize, Serialize};

use crate::error::ImputerError;
use crate::Result;

/// Curriculum phase bands by masking rate. Rates in `[0.9, 1.0)` fall in the
/// advanced band; only exact full masking is the final phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Foundational learning: rates up to 30%.
    Foundational,
    /// Intermediate training: 30-60%.
    Intermediate,
    /// Advanced training: 60% up to (but excluding) full masking.
    Advanced,
    /// Full-masking training: rate exactly 1.0.
    FullMasking,
}

impl Phase {
    pub fn of_rate(rate: f64) -> Phase {
        if rate >= 1.0 {
            Phase::FullMasking
        } else if rate >= 0.6 {
            Phase::Advanced
        } else if rate >= 0.3 {
            Phase::Intermediate
        } else {
            Phase::Foundational
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Phase::Foundational => 1,
            Phase::Intermediate => 2,
            Phase::Advanced => 3,
            Phase::FullMasking => 4,
        }
    }
}

/// Masking-rate schedule: linear from `initial_rate` at epoch 0 to 1.0 at
/// `total_epochs - final_full_epochs`, then constant 1.0. Construction
/// enforces the monotone ramp and the terminal plateau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSchedule {
    pub total_epochs: usize,
    pub final_full_epochs: usize,
    pub initial_rate: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            total_epochs: 150,
            final_full_epochs: 25,
            initial_rate: 0.10,
        }
    }
}

impl CurriculumSchedule {
    pub fn new(total_epochs: usize, final_full_epochs: usize, initial_rate: f64) -> Result<Self> {
        let s = CurriculumSchedule {
            total_epochs,
            final_full_epochs,
            initial_rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.final_full_epochs == 0 || self.final_full_epochs >= self.total_epochs {
            return Err(ImputerError::InvalidSchedule(format!(
                "final_full_epochs {} must be in 1..{}",
                self.final_full_epochs, self.total_epochs
            )));
        }
        if !(self.initial_rate > 0.0 && self.initial_rate <= 1.0) {
            return Err(ImputerError::InvalidSchedule(format!(
                "initial_rate {} outside (0, 1]",
                self.initial_rate
            )));
        }
        Ok(())
    }

    fn ramp_end(&self) -> usize {
        self.total_epochs - self.final_full_epochs
    }

    /// Masking rate for an epoch. Errors outside `0..total_epochs`.
    pub fn rate(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(ImputerError::EpochOutOfRange {
                epoch,
                total: self.total_epochs,
            });
        }
        let ramp_end = self.ramp_end();
        if epoch >= ramp_end {
            return Ok(1.0);
        }
        Ok(self.initial_rate + (1.0 - self.initial_rate) * epoch as f64 / ramp_end as f64)
    }

    pub fn phase(&self, epoch: usize) -> Result<Phase> {
        Ok(Phase::of_rate(self.rate(epoch)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_zero_is_ten_percent() {
        let s = CurriculumSchedule::default();
        assert_eq!(s.rate(0).unwrap(), 0.10);
    }

    #[test]
    fn final_twenty_five_epochs_are_full() {
        let s = CurriculumSchedule::default();
        for epoch in 125..150 {
            assert_eq!(s.rate(epoch).unwrap(), 1.0);
            assert_eq!(s.phase(epoch).unwrap(), Phase::FullMasking);
        }
        assert!(s.rate(124).unwrap() < 1.0);
    }

    #[test]
    fn midpoint_interpolates_to_fifty_five_percent() {
        let s = CurriculumSchedule::default();
        // the ramp midpoint would be epoch 62.5; bracketing integer epochs
        // average to the interpolated value
        let mid = (s.rate(62).unwrap() + s.rate(63).unwrap()) / 2.0;
        assert!((mid - 0.55).abs() < 1e-12);
    }

    #[test]
    fn monotone_non_decreasing() {
        let s = CurriculumSchedule::default();
        let mut prev = 0.0;
        for epoch in 0..150 {
            let r = s.rate(epoch).unwrap();
            assert!(r >= prev);
            assert!((0.10..=1.0).contains(&r));
            prev = r;
        }
    }

    #[test]
    fn out_of_range_epoch_errors() {
        let s = CurriculumSchedule::default();
        assert!(matches!(
            s.rate(150),
            Err(ImputerError::EpochOutOfRange { epoch: 150, total: 150 })
        ));
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(CurriculumSchedule::new(150, 150, 0.1).is_err());
        assert!(CurriculumSchedule::new(150, 0, 0.1).is_err());
        assert!(CurriculumSchedule::new(150, 25, 0.0).is_err());
    }

    #[test]
    fn phase_bands_follow_the_table() {
        assert_eq!(Phase::of_rate(0.10), Phase::Foundational);
        assert_eq!(Phase::of_rate(0.29), Phase::Foundational);
        assert_eq!(Phase::of_rate(0.30), Phase::Intermediate);
        assert_eq!(Phase::of_rate(0.59), Phase::Intermediate);
        assert_eq!(Phase::of_rate(0.60), Phase::Advanced);
        assert_eq!(Phase::of_rate(0.999), Phase::Advanced);
        assert_eq!(Phase::of_rate(1.0), Phase::FullMasking);
    }
}
