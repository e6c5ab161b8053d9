//! Symmetric-matrix primitives behind the Mahalanobis metric.
//!
//! A metric is parameterized by a positive semidefinite matrix `M`, with
//! `d²(x, z) = (x − z)ᵀ M (x − z)`. Everything here works on dense
//! matrices through a symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Feasibility tolerance for PSD checks. Eigenvalues and quadratic forms in
/// `(-PSD_TOL, 0)` are treated as zero.
pub const PSD_TOL: f64 = 1e-9;

/// Dense symmetric matrix. Every constructor symmetrizes, so
/// `a[(i, j)] == a[(j, i)]` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds from a square matrix, replacing it with `(a + aᵀ) / 2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if a.nrows() == 0 {
            return Err(Error::invalid("dim", "matrix dimension must be at least 1"));
        }
        Ok(Self::symmetrized(a))
    }

    fn symmetrized(mut a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        SymMatrix(a)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Row-major construction; the input is symmetrized.
    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    /// `scale · u uᵀ`
    pub fn rank_one(u: &DVector<f64>, scale: f64) -> Self {
        let n = u.len();
        let mut a = DMatrix::zeros(n, n);
        a.ger(scale, u, u, 0.0);
        Self::symmetrized(a)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self + alpha · other`
    pub fn add_scaled(&self, other: &SymMatrix, alpha: f64) -> Result<SymMatrix> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::symmetrized(&self.0 + &other.0 * alpha))
    }

    /// `self + alpha · u uᵀ`
    pub fn add_rank_one(&self, u: &DVector<f64>, alpha: f64) -> Result<SymMatrix> {
        check_dim(self.dim(), u.len())?;
        let mut a = self.0.clone();
        a.ger(alpha, u, u, 1.0);
        Ok(Self::symmetrized(a))
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }

    pub fn map_entries(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        SymMatrix(self.0.map(f))
    }

    /// `uᵀ A u`
    pub fn quad_form(&self, u: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        Ok(u.dot(&(&self.0 * u)))
    }

    /// Eigendecomposition with eigenvalues in descending order. Equal
    /// eigenvalues keep the solver's order.
    pub fn eigen(&self) -> Result<SymEigen> {
        if !self.is_finite() {
            return Err(Error::NonFinite("symmetric eigendecomposition input"));
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = eig.eigenvectors.select_columns(order.iter());
        Ok(SymEigen { values, vectors })
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = self.eigen()?;
        Ok(eig.values[eig.values.len() - 1])
    }

    pub fn is_psd(&self) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -PSD_TOL)
    }
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped = self.values.map(f);
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= mapped[j];
        }
        SymMatrix::symmetrized(&scaled * self.vectors.transpose())
    }
}

/// The metric `(M, μ)`: a PSD matrix and the margin threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pub m: SymMatrix,
    pub mu: f64,
}

impl MetricState {
    pub fn new(m: SymMatrix, mu: f64) -> Self {
        MetricState { m, mu }
    }

    /// `M = 0`, `μ = 1`.
    pub fn cold_start(n: usize) -> Self {
        MetricState {
            m: SymMatrix::zeros(n),
            mu: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    /// True when `M ⪰ 0` up to [`PSD_TOL`] and `μ ≥ 1`.
    pub fn is_feasible(&self) -> Result<bool> {
        Ok(self.mu >= 1.0 && self.m.is_psd()?)
    }
}

/// A pairwise constraint `(x, z, y)` observed at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintTriplet {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    /// `+1` similar, `-1` dissimilar.
    pub y: i8,
    pub t: u64,
}

impl ConstraintTriplet {
    pub fn new(x: DVector<f64>, z: DVector<f64>, y: i8, t: u64) -> Result<Self> {
        check_dim(x.len(), z.len())?;
        if y != 1 && y != -1 {
            return Err(Error::invalid("y", format!("label must be +1 or -1, got {y}")));
        }
        Ok(ConstraintTriplet { x, z, y, t })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `u = x − z`
    pub fn diff(&self) -> DVector<f64> {
        &self.x - &self.z
    }

    pub fn label(&self) -> f64 {
        f64::from(self.y)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `(x − z)ᵀ M (x − z)`, clamped to zero when within `PSD_TOL · ‖x − z‖²`
/// below it.
pub fn mahalanobis_sq(state: &MetricState, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
    check_dim(state.dim(), x.len())?;
    check_dim(state.dim(), z.len())?;
    let u = x - z;
    Ok(clamp_quad(state.m.quad_form(&u)?, u.norm_squared()))
}

pub(crate) fn clamp_quad(value: f64, u_norm_sq: f64) -> f64 {
    if value < 0.0 && value >= -PSD_TOL * u_norm_sq {
        0.0
    } else {
        value
    }
}

/// Euclidean projection onto the PSD cone: negative eigenvalues are zeroed.
pub fn project_psd(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(a.eigen()?.reconstruct_with(|l| l.max(0.0)))
}

/// Minimizer of `½‖M − a‖²_F + tau·‖M‖_*` over `M ⪰ 0`, i.e. eigenvalue
/// soft-thresholding followed by clipping at zero.
pub fn eig_soft_threshold(a: &SymMatrix, tau: f64) -> Result<SymMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("threshold must be finite and >= 0, got {tau}")));
    }
    Ok(a.eigen()?.reconstruct_with(|l| (l - tau).max(0.0)))
}

/// Linear map `E = diag(√λ₁..√λ_d) · V_{1..d}ᵀ` (`d × n`) built from the top
/// `d` eigenpairs of `M`, so that `‖E x − E z‖²` is the Mahalanobis distance
/// whenever `d ≥ rank(M)`.
pub fn embedding(state: &MetricState, d: usize) -> Result<DMatrix<f64>> {
    let n = state.dim();
    if d == 0 || d > n {
        return Err(Error::invalid("d", format!("embedding dimension must be in 1..={n}, got {d}")));
    }
    let eig = state.m.eigen()?;
    let mut e = DMatrix::zeros(d, n);
    for i in 0..d {
        let scale = eig.values[i].max(0.0).sqrt();
        for j in 0..n {
            e[(i, j)] = scale * eig.vectors[(j, i)];
        }
    }
    Ok(e)
}

/// Applies an embedding to row-stacked points (`n_points × n`), giving
/// `n_points × d`.
pub fn embed_rows(e: &DMatrix<f64>, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(e.ncols(), points.ncols())?;
    Ok(points * e.transpose())
}
