//! PI secondary frequency controller.
//!
//! The input is the consensus average, held constant between episodes. The
//! controller itself steps at the plant rate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("controller input must be finite, got {0}")]
    NonFinite(f64),
    #[error("invalid PI gains: {0}")]
    Gains(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    /// Proportional gain, Hz/Hz.
    pub kp: f64,
    /// Integral gain, 1/s.
    pub ki: f64,
    pub out_min: f64,
    pub out_max: f64,
}

impl PiGains {
    pub fn new(kp: f64, ki: f64, out_min: f64, out_max: f64) -> Result<Self, ControlError> {
        let g = Self { kp, ki, out_min, out_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !self.kp.is_finite() || !self.ki.is_finite() {
            return Err(ControlError::Gains("gains must be finite".into()));
        }
        if self.ki < 0.0 {
            return Err(ControlError::Gains(format!("ki must be non-negative, got {}", self.ki)));
        }
        if !(self.out_min < self.out_max) {
            return Err(ControlError::Gains(format!(
                "out_min ({}) must be below out_max ({})",
                self.out_min, self.out_max
            )));
        }
        Ok(())
    }

    /// Same limits, both gains zero: primary control only.
    pub fn disabled(&self) -> Self {
        Self { kp: 0.0, ki: 0.0, ..*self }
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.out_min, self.out_max)
    }
}

/// Integrator, held input and output of one DG's controller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    /// ∫ held_input dt, Hz·s.
    pub integral: f64,
    pub held_input: f64,
    /// Correction δf applied to the droop line, Hz.
    pub output: f64,
}

impl PiState {
    /// Latches a new consensus result; it is held until the next one.
    pub fn set_input(&mut self, value: f64) -> Result<(), ControlError> {
        if !value.is_finite() {
            return Err(ControlError::NonFinite(value));
        }
        self.held_input = value;
        Ok(())
    }

    /// Advances by `dt` with integral-freeze anti-windup: while the output
    /// sits on a limit and the input pushes further out, the integrator holds.
    pub fn step(&mut self, gains: &PiGains, dt: f64) {
        debug_assert!(dt > 0.0);
        let winding_up = (self.output >= gains.out_max && self.held_input > 0.0)
            || (self.output <= gains.out_min && self.held_input < 0.0);
        if !winding_up {
            self.integral += self.held_input * dt;
        }
        self.output = gains.clamp(gains.kp * self.held_input + gains.ki * self.integral);
    }
}
