//! Slow reference solvers used to cross-check the fast paths.
//!
//! Nothing in here calls the library's eigendecomposition or proximal
//! operators: the eigensolver is a cyclic Jacobi iteration on plain
//! `Vec<f64>` storage, and the proximal minimizer is an iterative
//! projected-gradient method built on top of it.

/// Row-major square matrix used by the reference routines.
pub type Dense = Vec<Vec<f64>>;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalues, eigenvectors)` with eigenvectors stored as columns.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    let mut m = a.clone();
    let mut v = identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

pub fn identity(n: usize) -> Dense {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// PSD projection by Jacobi eigendecomposition.
pub fn psd_projection(a: &Dense) -> Dense {
    let n = a.len();
    let (vals, vecs) = jacobi_eigen(a);
    let mut out = vec![vec![0.0; n]; n];
    for (k, &l) in vals.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[i][j] += l * vecs[i][k] * vecs[j][k];
            }
        }
    }
    out
}

/// Minimizes `½‖M − a‖²_F + tau·‖M‖_*` over PSD `M` by projected
/// subgradient descent. On the PSD cone the identity is a subgradient of
/// the nuclear norm, so each iterate is `P(M − step·(M − a + tau·I))`.
pub fn nuclear_prox_by_descent(a: &Dense, tau: f64, iterations: usize) -> Dense {
    let n = a.len();
    let step = 0.5;
    let mut m = vec![vec![0.0; n]; n];
    for _ in 0..iterations {
        let mut next = m.clone();
        for i in 0..n {
            for j in 0..n {
                let mut g = m[i][j] - a[i][j];
                if i == j {
                    g += tau;
                }
                next[i][j] = m[i][j] - step * g;
            }
        }
        m = psd_projection(&next);
    }
    m
}

/// Objective `½‖M − a‖²_F + tau·Σ|λᵢ(M)|`.
pub fn nuclear_prox_objective(m: &Dense, a: &Dense, tau: f64) -> f64 {
    let n = a.len();
    let mut fit = 0.0;
    for i in 0..n {
        for j in 0..n {
            fit += (m[i][j] - a[i][j]).powi(2);
        }
    }
    let (vals, _) = jacobi_eigen(m);
    0.5 * fit + tau * vals.iter().map(|l| l.abs()).sum::<f64>()
}

/// Central difference `(f(x + h) − f(x − h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
