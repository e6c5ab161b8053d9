//! Composite-objective mirror descent on `(M, μ)` under the squared
//! Frobenius geometry.
//!
//! One step linearizes the hinge at the current point and solves
//!
//! ```text
//! M⁺ = argmin_{M ⪰ 0} ½‖M − M̂‖²_F + η⟨G, M⟩ + ηρ r(M)
//! μ⁺ = argmin_{μ ≥ 1} ½(μ − μ̂)² + η g μ
//! ```
//!
//! which for the nuclear norm is eigenvalue soft-thresholding of `M̂ − ηG`
//! at `ηρ`, and for `μ` a clipped gradient step.

use crate::error::{Error, Result};
use crate::loss::{active_diff, LossConfig, RegKind};
use crate::metric::{eig_soft_threshold, project_psd, ConstraintTriplet, MetricState, SymMatrix};

/// `η₀ / √len`
pub fn learning_rate_for(interval_len: u64, eta0: f64) -> f64 {
    eta0 / (interval_len as f64).sqrt()
}

/// Entrywise soft-threshold at `tau`, then PSD projection. This is exact
/// for diagonal inputs and an approximation of the joint L1 + PSD prox
/// otherwise.
pub fn l1_psd_prox(a: &SymMatrix, tau: f64) -> Result<SymMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("threshold must be finite and >= 0, got {tau}")));
    }
    let shrunk = a.map_entries(|v| v.signum() * (v.abs() - tau).max(0.0));
    project_psd(&shrunk)
}

/// Regularized proximal map for the configured regularizer.
pub fn prox(a: &SymMatrix, tau: f64, kind: RegKind) -> Result<SymMatrix> {
    match kind {
        RegKind::Nuclear => eig_soft_threshold(a, tau),
        RegKind::ElementwiseL1 => l1_psd_prox(a, tau),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComidLearner {
    pub state: MetricState,
    pub eta: f64,
    pub cfg: LossConfig,
    /// When set, `M` is additionally projected onto `‖M‖_F ≤ radius`.
    pub ball_radius: Option<f64>,
}

impl ComidLearner {
    pub fn new(state: MetricState, eta: f64, cfg: LossConfig) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid("eta", format!("learning rate must be finite and > 0, got {eta}")));
        }
        cfg.validate()?;
        Ok(ComidLearner {
            state,
            eta,
            cfg,
            ball_radius: None,
        })
    }

    pub fn with_ball(mut self, radius: Option<f64>) -> Self {
        self.ball_radius = radius;
        self
    }

    /// One mirror-descent step on `c`. The learner itself is left untouched.
    pub fn comid_step(&self, c: &ConstraintTriplet) -> Result<ComidLearner> {
        let eta = self.eta;
        if !c.x.iter().chain(c.z.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("constraint"));
        }
        let active = active_diff(&self.state, c)?;

        if active.is_none() && self.cfg.rho == 0.0 {
            return Ok(self.clone());
        }

        let (moved, mu) = match active {
            Some(u) => {
                if !u.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("metric gradient"));
                }
                // G = y u uᵀ, g = −y
                let moved = self.state.m.add_rank_one(&u, -eta * c.label())?;
                (moved, (self.state.mu + eta * c.label()).max(1.0))
            }
            None => (self.state.m.clone(), self.state.mu.max(1.0)),
        };
        if !moved.is_finite() {
            return Err(Error::NonFinite("metric gradient step"));
        }

        let mut m = prox(&moved, eta * self.cfg.rho, self.cfg.reg_kind)?;
        if let Some(r) = self.ball_radius {
            let norm = m.frobenius_norm();
            if norm > r {
                m = m.scaled(r / norm);
            }
        }
        Ok(ComidLearner {
            state: MetricState::new(m, mu),
            ..self.clone()
        })
    }
}
