//! The driven two-level working medium.

use crate::error::ModelError;

/// Two-level system with transition frequency `omega(t) = omega0 + lambda*cos(omega_s t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrivenTls {
    omega0: f64,
    lambda: f64,
    omega_s: f64,
}

impl DrivenTls {
    pub fn new(omega0: f64, lambda: f64, omega_s: f64) -> Result<Self, ModelError> {
        if !(omega0 > 0.0) {
            return Err(ModelError::Invalid("omega0 must be > 0".into()));
        }
        if !(lambda >= 0.0) {
            return Err(ModelError::Invalid("lambda must be >= 0".into()));
        }
        if !(omega_s > 0.0) {
            return Err(ModelError::Invalid("omega_s must be > 0".into()));
        }
        Ok(Self { omega0, lambda, omega_s })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn omega_s(&self) -> f64 {
        self.omega_s
    }

    /// Instantaneous transition frequency.
    pub fn omega(&self, t: f64) -> f64 {
        self.omega0 + self.lambda * (self.omega_s * t).cos()
    }

    /// d omega / dt, used by the work-route power integral.
    pub fn omega_dot(&self, t: f64) -> f64 {
        -self.lambda * self.omega_s * (self.omega_s * t).sin()
    }

    /// Accumulated phase `int_0^t omega(tau) dtau` of the bare coherence.
    pub fn phase(&self, t: f64) -> f64 {
        self.omega0 * t + self.lambda / self.omega_s * (self.omega_s * t).sin()
    }

    /// Driving period `tau_s`.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega_s
    }

    /// Bessel argument `lambda / omega_s` of the sideband expansion.
    pub fn modulation_index(&self) -> f64 {
        self.lambda / self.omega_s
    }

    pub fn with_omega_s(&self, omega_s: f64) -> Result<Self, ModelError> {
        Self::new(self.omega0, self.lambda, omega_s)
    }
}
