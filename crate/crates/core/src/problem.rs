//! Problem instances of `-Δu = d^(-β) u^(-α)` with `u = 0` on the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SelError};
use crate::grid::{build_grid, DomainShape, Grid};

/// How the monotonizing shift is picked from the barrier pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "factor", rename_all = "snake_case")]
pub enum ShiftPolicy {
    /// The smallest shift that monotonizes the right-hand side on the order interval.
    Minimal,
    /// `factor` times the minimal shift (`factor >= 1`).
    Scaled(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub beta: f64,
    pub shape: DomainShape,
    pub n: usize,
    /// Relative weighted-L² gap at which the two-sided iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub eig_tol: f64,
    pub shift: ShiftPolicy,
}

impl ProblemSpec {
    /// Instance on the unit interval with default tolerances.
    pub fn new(alpha: f64, beta: f64, n: usize) -> Self {
        Self::on(alpha, beta, DomainShape::unit_interval(), n)
    }

    pub fn on(alpha: f64, beta: f64, shape: DomainShape, n: usize) -> Self {
        Self {
            alpha,
            beta,
            shape,
            n,
            tol: 1e-10,
            max_iter: 500,
            inner_tol: 1e-13,
            eig_tol: 1e-11,
            shift: ShiftPolicy::Minimal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(SelError::InvalidParameter(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < 2.0) {
            return Err(SelError::InvalidParameter(format!("beta must lie in [0, 2), got {}", self.beta)));
        }
        if self.n < 2 {
            return Err(SelError::InvalidResolution(self.n));
        }
        self.shape.validate()?;
        for (name, v) in [("tol", self.tol), ("inner_tol", self.inner_tol), ("eig_tol", self.eig_tol)] {
            if !(v > 0.0) {
                return Err(SelError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(SelError::InvalidParameter("max_iter must be >= 1".into()));
        }
        if let ShiftPolicy::Scaled(f) = self.shift {
            if !(f >= 1.0 && f.is_finite()) {
                return Err(SelError::InvalidParameter(format!("shift factor must be >= 1, got {f}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        self.validate()?;
        build_grid(self.shape, self.n)
    }

    /// Same instance at a different resolution.
    pub fn at(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}
