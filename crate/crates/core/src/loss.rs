//! Margin hinge loss on pairwise constraints, its subgradients, and the
//! clipped `[0, 1]` surrogate used to weight experts.
//!
//! A constraint is satisfied with margin when similar pairs have
//! `d² ≤ μ − 1` and dissimilar pairs `d² ≥ μ + 1`. With
//! `z = y (μ − uᵀ M u)` this is `z ≥ 1`, so the per-step loss is
//! `max(0, 1 − z) + ρ r(M)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metric::{check_dim, clamp_quad, ConstraintTriplet, MetricState, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    /// Sum of singular values.
    Nuclear,
    /// Sum of absolute entries.
    ElementwiseL1,
}

/// How the hinge value is squashed into `[0, 1]` before it enters the
/// expert weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipKind {
    /// `min(c, ℓ) / c`
    Linear,
    /// Logistic ramp centred at `c`, rescaled so that `ℓ = 0` maps to 0.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub rho: f64,
    pub reg_kind: RegKind,
    pub clip_c: f64,
    pub clip_kind: ClipKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            rho: 0.0,
            reg_kind: RegKind::Nuclear,
            clip_c: 2.0,
            clip_kind: ClipKind::Linear,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid("rho", format!("must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.clip_c > 0.0) || !self.clip_c.is_finite() {
            return Err(Error::invalid("clip_c", format!("must be finite and > 0, got {}", self.clip_c)));
        }
        Ok(())
    }
}

/// `z = y (μ − uᵀ M u)`
pub fn margin_argument(state: &MetricState, c: &ConstraintTriplet) -> Result<f64> {
    check_dim(state.dim(), c.dim())?;
    let u = c.diff();
    let d2 = clamp_quad(state.m.quad_form(&u)?, u.norm_squared());
    Ok(c.label() * (state.mu - d2))
}

pub fn hinge(z: f64) -> f64 {
    (1.0 - z).max(0.0)
}

pub fn regularizer(m: &SymMatrix, cfg: &LossConfig) -> Result<f64> {
    match cfg.reg_kind {
        // for a symmetric matrix the singular values are |λᵢ|
        RegKind::Nuclear => Ok(m.eigen()?.values.iter().map(|l| l.abs()).sum()),
        RegKind::ElementwiseL1 => Ok(m.as_matrix().iter().map(|v| v.abs()).sum()),
    }
}

/// The hinge part alone, `max(0, 1 − z)`.
pub fn hinge_loss(state: &MetricState, c: &ConstraintTriplet) -> Result<f64> {
    Ok(hinge(margin_argument(state, c)?))
}

/// `f_t(M, μ) = hinge(z) + ρ r(M)`
pub fn composite_loss(state: &MetricState, c: &ConstraintTriplet, cfg: &LossConfig) -> Result<f64> {
    let h = hinge_loss(state, c)?;
    if cfg.rho == 0.0 {
        return Ok(h);
    }
    Ok(h + cfg.rho * regularizer(&state.m, cfg)?)
}

/// Subgradient of the hinge part in `M`: `y u uᵀ` when `z < 1`, zero
/// otherwise (including the kink).
pub fn grad_m(state: &MetricState, c: &ConstraintTriplet) -> Result<SymMatrix> {
    match active_diff(state, c)? {
        Some(u) => Ok(SymMatrix::rank_one(&u, c.label())),
        None => Ok(SymMatrix::zeros(state.dim())),
    }
}

/// Subgradient of the hinge part in `μ`: `−y` when `z < 1`, else 0.
pub fn grad_mu(state: &MetricState, c: &ConstraintTriplet) -> Result<f64> {
    Ok(if margin_argument(state, c)? < 1.0 { -c.label() } else { 0.0 })
}

/// `u = x − z` when the hinge is active, `None` otherwise.
pub(crate) fn active_diff(state: &MetricState, c: &ConstraintTriplet) -> Result<Option<DVector<f64>>> {
    if margin_argument(state, c)? < 1.0 {
        Ok(Some(c.diff()))
    } else {
        Ok(None)
    }
}

/// Squashes a hinge value into `[0, 1]`.
pub fn clip_value(hinge_value: f64, cfg: &LossConfig) -> f64 {
    let c = cfg.clip_c;
    match cfg.clip_kind {
        ClipKind::Linear => hinge_value.min(c) / c,
        ClipKind::Logistic => {
            let sigma = |v: f64| 1.0 / (1.0 + (-v).exp());
            let floor = sigma(-c);
            ((sigma(hinge_value - c) - floor) / (1.0 - floor)).clamp(0.0, 1.0)
        }
    }
}

/// Clipped loss of the hinge part; the regularizer does not enter.
pub fn clipped_loss(state: &MetricState, c: &ConstraintTriplet, cfg: &LossConfig) -> Result<f64> {
    Ok(clip_value(hinge_loss(state, c)?, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::central_difference;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triplet(u: &[f64], y: i8) -> ConstraintTriplet {
        let x = DVector::from_column_slice(u);
        let z = DVector::zeros(u.len());
        ConstraintTriplet::new(x, z, y, 1).unwrap()
    }

    fn cfg(rho: f64) -> LossConfig {
        LossConfig {
            rho,
            ..LossConfig::default()
        }
    }

    #[test]
    fn margin_argument_examples() {
        let st = MetricState::new(SymMatrix::identity(2), 2.0);
        let u = [0.5f64.sqrt(), 0.0];
        assert!((margin_argument(&st, &triplet(&u, 1)).unwrap() - 1.5).abs() < 1e-15);
        assert!((margin_argument(&st, &triplet(&u, -1)).unwrap() + 1.5).abs() < 1e-15);

        let zero = MetricState::cold_start(2);
        assert_eq!(margin_argument(&zero, &triplet(&[3.0, 1.0], 1)).unwrap(), 1.0);
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(1.5), 0.0);
        assert_eq!(hinge(1.0), 0.0);
        assert_eq!(hinge(-1.5), 2.5);
    }

    #[test]
    fn regularizer_examples() {
        let nuclear = cfg(0.0);
        let l1 = LossConfig {
            reg_kind: RegKind::ElementwiseL1,
            ..nuclear
        };
        assert!((regularizer(&SymMatrix::identity(3), &nuclear).unwrap() - 3.0).abs() < 1e-12);
        let m = SymMatrix::from_row_slice(2, &[1.0, -2.0, -2.0, 1.0]).unwrap();
        assert_eq!(regularizer(&m, &l1).unwrap(), 6.0);
        assert_eq!(regularizer(&SymMatrix::zeros(4), &nuclear).unwrap(), 0.0);
        // eigenvalues 3 and -1
        assert!((regularizer(&m, &nuclear).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn composite_loss_examples() {
        // dissimilar pair at d² = 0.5 with μ = 2: z = -1.5, hinge = 2.5
        let st = MetricState::new(SymMatrix::identity(2), 2.0);
        let c = triplet(&[0.5f64.sqrt(), 0.0], -1);
        assert_eq!(composite_loss(&st, &c, &cfg(0.0)).unwrap(), hinge_loss(&st, &c).unwrap());
        assert!((composite_loss(&st, &c, &cfg(0.1)).unwrap() - 2.7).abs() < 1e-12);

        let zero = MetricState::cold_start(2);
        let sat = triplet(&[1.0, 1.0], 1);
        assert_eq!(composite_loss(&zero, &sat, &cfg(5.0)).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let zero = MetricState::new(SymMatrix::zeros(2), 0.5);
        let g = grad_m(&zero, &triplet(&[1.0, 0.0], 1)).unwrap();
        assert_eq!(g, SymMatrix::from_diagonal(&[1.0, 0.0]));
        assert_eq!(grad_mu(&zero, &triplet(&[1.0, 0.0], 1)).unwrap(), -1.0);

        let st = MetricState::cold_start(2);
        let g = grad_m(&st, &triplet(&[1.0, 1.0], -1)).unwrap();
        assert_eq!(g, SymMatrix::from_row_slice(2, &[-1.0; 4]).unwrap());
        assert_eq!(grad_mu(&st, &triplet(&[1.0, 1.0], -1)).unwrap(), 1.0);

        // z = 1 exactly: kink, zero subgradient
        let kink = triplet(&[2.0, 0.0], 1);
        assert_eq!(margin_argument(&st, &kink).unwrap(), 1.0);
        assert_eq!(grad_m(&st, &kink).unwrap(), SymMatrix::zeros(2));
        assert_eq!(grad_mu(&st, &kink).unwrap(), 0.0);

        let far = MetricState::new(SymMatrix::zeros(2), 4.0);
        assert_eq!(grad_mu(&far, &triplet(&[1.0, 0.0], 1)).unwrap(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 4;
        let mut checked = 0;
        while checked < 100 {
            let b = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let m = SymMatrix::new(&b * b.transpose()).unwrap();
            let st = MetricState::new(m, rng.random_range(1.0..3.0));
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let y = if rng.random_bool(0.5) { 1 } else { -1 };
            let c = triplet(&u, y);
            let z = margin_argument(&st, &c).unwrap();
            if (z - 1.0).abs() <= 0.01 {
                continue;
            }
            checked += 1;
            let gm = grad_m(&st, &c).unwrap();
            for i in 0..n {
                for j in i..n {
                    let perturbed = |h: f64| {
                        let mut e = nalgebra::DMatrix::zeros(n, n);
                        e[(i, j)] = 1.0;
                        e[(j, i)] = 1.0;
                        let m = st.m.add_scaled(&SymMatrix::new(e).unwrap(), h).unwrap();
                        hinge_loss(&MetricState::new(m, st.mu), &c).unwrap()
                    };
                    // directional derivative along E is <G, E>
                    let expected = if i == j { gm.get(i, i) } else { 2.0 * gm.get(i, j) };
                    let fd = central_difference(perturbed, 0.0, 1e-6);
                    assert!((fd - expected).abs() <= 1e-5 * expected.abs().max(1.0), "{fd} vs {expected}");
                }
            }
            let fd_mu = central_difference(
                |h| hinge_loss(&MetricState::new(st.m.clone(), st.mu + h), &c).unwrap(),
                0.0,
                1e-6,
            );
            let g_mu = grad_mu(&st, &c).unwrap();
            assert!((fd_mu - g_mu).abs() <= 1e-5 * g_mu.abs().max(1.0));
        }
    }

    #[test]
    fn clipped_loss_examples() {
        let c = cfg(0.0);
        assert_eq!(clip_value(5.0, &c), 1.0);
        assert_eq!(clip_value(0.0, &c), 0.0);
        assert_eq!(clip_value(1.0, &c), 0.5);

        let logistic = LossConfig {
            clip_kind: ClipKind::Logistic,
            ..c
        };
        assert_eq!(clip_value(0.0, &logistic), 0.0);
        assert!(clip_value(50.0, &logistic) > 0.999);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(cfg(-1.0).validate().is_err());
        let bad = LossConfig {
            clip_c: 0.0,
            ..cfg(0.0)
        };
        assert!(bad.validate().is_err());
        assert!(cfg(0.3).validate().is_ok());
    }

    proptest! {
        #[test]
        fn clipped_loss_is_bounded_and_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0, c in 0.1f64..5.0, logistic: bool) {
            let cfg = LossConfig {
                clip_c: c,
                clip_kind: if logistic { ClipKind::Logistic } else { ClipKind::Linear },
                ..LossConfig::default()
            };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (vlo, vhi) = (clip_value(lo, &cfg), clip_value(hi, &cfg));
            prop_assert!((0.0..=1.0).contains(&vlo) && (0.0..=1.0).contains(&vhi));
            prop_assert!(vlo <= vhi);
        }

        #[test]
        fn grad_m_is_symmetric_rank_one(u in proptest::collection::vec(-3.0f64..3.0, 3), y: bool, mu in 1.0f64..4.0) {
            let st = MetricState::new(SymMatrix::identity(3), mu);
            let c = triplet(&u, if y { 1 } else { -1 });
            let g = grad_m(&st, &c).unwrap();
            let eig = g.eigen().unwrap();
            let nonzero = eig.values.iter().filter(|l| l.abs() > 1e-9).count();
            prop_assert!(nonzero <= 1);
        }

        #[test]
        fn composite_loss_is_nonnegative(u in proptest::collection::vec(-3.0f64..3.0, 3), y: bool, mu in 1.0f64..4.0, rho in 0.0f64..2.0) {
            let st = MetricState::new(SymMatrix::from_diagonal(&[0.5, 1.0, 0.0]), mu);
            let c = triplet(&u, if y { 1 } else { -1 });
            prop_assert!(composite_loss(&st, &c, &cfg(rho)).unwrap() >= 0.0);
        }
    }
}
