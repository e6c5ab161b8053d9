//! Evaluation: neighbour and clustering quality of a learned embedding,
//! regret bookkeeping, and the analytic regret bounds.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::comid::prox;
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::metric::{check_dim, ConstraintTriplet, MetricState, SymMatrix};

fn majority(labels: impl Iterator<Item = u8>) -> u8 {
    let mut counts = [0usize; 256];
    for l in labels {
        counts[usize::from(l)] += 1;
    }
    // first maximum wins, i.e. the smallest label among ties
    let mut best = 0;
    for (label, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = label;
        }
    }
    best as u8
}

fn nearest_labels(
    query: nalgebra::DVectorView<'_, f64>,
    train: &DMatrix<f64>,
    train_labels: &[u8],
    k: usize,
    skip: Option<usize>,
) -> u8 {
    let mut dist: Vec<(f64, usize)> = (0..train.nrows())
        .filter(|&i| Some(i) != skip)
        .map(|i| {
            let d: f64 = train.row(i).iter().zip(query.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    let by_dist_then_index = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_dist_then_index);
        dist.truncate(k);
    }
    majority(dist.iter().map(|&(_, i)| train_labels[i]))
}

fn check_labeled(points: &DMatrix<f64>, labels: &[u8], what: &'static str) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::Empty(what));
    }
    if points.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: points.nrows(),
            got: labels.len(),
        });
    }
    Ok(())
}

/// Fraction of test points misclassified by a `k`-nearest-neighbour vote
/// over the training points (rows). Vote ties go to the smallest label and
/// distance ties to the lower index.
pub fn knn_error(train: &DMatrix<f64>, train_labels: &[u8], test: &DMatrix<f64>, test_labels: &[u8], k: usize) -> Result<f64> {
    check_labeled(train, train_labels, "training set")?;
    check_labeled(test, test_labels, "test set")?;
    check_dim(train.ncols(), test.ncols())?;
    if k == 0 || k > train.nrows() {
        return Err(Error::invalid("k", format!("must be in 1..={}, got {k}", train.nrows())));
    }
    let wrong = (0..test.nrows())
        .filter(|&i| {
            let query = test.row(i).transpose();
            nearest_labels(query.as_view(), train, train_labels, k, None) != test_labels[i]
        })
        .count();
    Ok(wrong as f64 / test.nrows() as f64)
}

/// Leave-one-out variant of [`knn_error`] on a single labelled set.
pub fn knn_error_loo(points: &DMatrix<f64>, labels: &[u8], k: usize) -> Result<f64> {
    check_labeled(points, labels, "point set")?;
    if k == 0 || k >= points.nrows() {
        return Err(Error::invalid("k", format!("must be in 1..{}, got {k}", points.nrows())));
    }
    let wrong = (0..points.nrows())
        .filter(|&i| {
            let query = points.row(i).transpose();
            nearest_labels(query.as_view(), points, labels, k, Some(i)) != labels[i]
        })
        .count();
    Ok(wrong as f64 / points.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
}

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    points.row(i).iter().zip(centroids.row(c).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn plus_plus_seeds(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&nearest) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a centre
            Err(_) => rng.random_range(0..n),
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(points: &DMatrix<f64>, mut centroids: DMatrix<f64>) -> KMeansFit {
    let (n, k) = (points.nrows(), centroids.nrows());
    let mut assignments = vec![0; n];
    for _ in 0..KMEANS_MAX_ITERS {
        for (i, a) in assignments.iter_mut().enumerate() {
            *a = (0..k)
                .min_by(|&p, &q| sq_dist(points, i, &centroids, p).total_cmp(&sq_dist(points, i, &centroids, q)))
                .unwrap_or(0);
        }
        let mut sums = DMatrix::zeros(k, points.ncols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += points.row(i);
            counts[a] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            // empty clusters keep their centre
            if counts[c] == 0 {
                continue;
            }
            let updated = sums.row(c) / counts[c] as f64;
            shift = shift.max((&updated - centroids.row(c)).norm());
            centroids.set_row(c, &updated);
        }
        if shift <= KMEANS_TOL {
            break;
        }
    }
    for (i, a) in assignments.iter_mut().enumerate() {
        *a = (0..k)
            .min_by(|&p, &q| sq_dist(points, i, &centroids, p).total_cmp(&sq_dist(points, i, &centroids, q)))
            .unwrap_or(0);
    }
    let inertia = assignments.iter().enumerate().map(|(i, &a)| sq_dist(points, i, &centroids, a)).sum();
    KMeansFit {
        assignments,
        centroids,
        inertia,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs
/// by inertia is returned.
pub fn kmeans(points: &DMatrix<f64>, n_clusters: usize, restarts: usize, rng: &mut impl Rng) -> Result<KMeansFit> {
    if n_clusters == 0 {
        return Err(Error::invalid("n_clusters", "must be >= 1"));
    }
    if points.nrows() < n_clusters {
        return Err(Error::invalid(
            "n_clusters",
            format!("{} points cannot form {n_clusters} clusters", points.nrows()),
        ));
    }
    if restarts == 0 {
        return Err(Error::invalid("restarts", "must be >= 1"));
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts {
        let fit = lloyd(points, plus_plus_seeds(points, n_clusters, rng));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(a; b) / √(H(a) H(b))` with natural-log
/// entropies; `0/0` is 0.
pub fn nmi<A: Copy + Ord, B: Copy + Ord>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("label sequence"));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(A, B), usize> = BTreeMap::new();
    let mut ca: BTreeMap<A, usize> = BTreeMap::new();
    let mut cb: BTreeMap<B, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = ca[&x] as f64 / n;
            let py = cb[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

pub fn kmeans_nmi(points: &DMatrix<f64>, labels: &[u8], n_clusters: usize, restarts: usize, rng: &mut impl Rng) -> Result<f64> {
    check_labeled(points, labels, "point set")?;
    if n_clusters < 2 {
        return Err(Error::invalid("n_clusters", "must be >= 2"));
    }
    let fit = kmeans(points, n_clusters, restarts, rng)?;
    nmi(&fit.assignments, labels)
}

/// Per-step learner and comparator losses together with the comparator's
/// step-to-step movement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    learner: Vec<f64>,
    comparator: Vec<f64>,
    cum_learner: Vec<f64>,
    cum_comparator: Vec<f64>,
    cum_gamma: Vec<f64>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records step `t = len + 1`. `variation` is `‖M_t − M_{t−1}‖_F`.
    pub fn push(&mut self, learner_loss: f64, comparator_loss: f64, variation: f64) {
        let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
        self.cum_learner.push(last(&self.cum_learner) + learner_loss);
        self.cum_comparator.push(last(&self.cum_comparator) + comparator_loss);
        self.cum_gamma.push(last(&self.cum_gamma) + variation.max(0.0));
        self.learner.push(learner_loss);
        self.comparator.push(comparator_loss);
    }

    pub fn len(&self) -> usize {
        self.learner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learner.is_empty()
    }

    pub fn learner_losses(&self) -> &[f64] {
        &self.learner
    }

    pub fn comparator_losses(&self) -> &[f64] {
        &self.comparator
    }

    fn check(&self, q: usize, s: usize) -> Result<()> {
        if q == 0 || q > s || s > self.len() {
            return Err(Error::OutOfRange {
                start: q,
                end: s,
                len: self.len(),
            });
        }
        Ok(())
    }

    fn span(cum: &[f64], q: usize, s: usize) -> f64 {
        cum[s - 1] - if q >= 2 { cum[q - 2] } else { 0.0 }
    }

    /// Learner minus comparator cumulative loss over `[q, s]` (1-based,
    /// inclusive).
    pub fn dynamic_regret(&self, q: usize, s: usize) -> Result<f64> {
        self.check(q, s)?;
        Ok(Self::span(&self.cum_learner, q, s) - Self::span(&self.cum_comparator, q, s))
    }

    /// `Σ_{t=q}^{s−1} ‖M_{t+1} − M_t‖_F`.
    pub fn gamma(&self, q: usize, s: usize) -> Result<f64> {
        self.check(q, s)?;
        Ok(self.cum_gamma[s - 1] - self.cum_gamma[q - 1])
    }

    /// Cumulative comparator variation up to each step.
    pub fn gamma_cumulative(&self) -> &[f64] {
        &self.cum_gamma
    }
}

/// Cumulative learner loss over `[q, s]` minus a fixed comparator's loss on
/// the same interval.
pub fn static_regret(losses: &[f64], comparator_loss: f64, q: usize, s: usize) -> Result<f64> {
    if q == 0 || q > s || s > losses.len() {
        return Err(Error::OutOfRange {
            start: q,
            end: s,
            len: losses.len(),
        });
    }
    Ok(losses[q - 1..s].iter().sum::<f64>() - comparator_loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub max_iters: usize,
    /// Relative objective improvement below which the search stops.
    pub tol: f64,
    /// Iterations without improvement before stopping.
    pub patience: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            max_iters: 2000,
            tol: 1e-6,
            patience: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchFit {
    pub state: MetricState,
    /// `Σ_t f_t` at `state`.
    pub total_loss: f64,
    pub iterations: usize,
}

/// Stacked difference vectors and labels, for evaluating the summed loss
/// in a few dense products.
struct Stacked {
    u: DMatrix<f64>,
    y: DVector<f64>,
}

impl Stacked {
    fn new(stream: &[ConstraintTriplet]) -> Result<Self> {
        let n = stream.first().ok_or(Error::Empty("constraint stream"))?.dim();
        let mut u = DMatrix::zeros(stream.len(), n);
        for (t, c) in stream.iter().enumerate() {
            check_dim(n, c.dim())?;
            u.set_row(t, &c.diff().transpose());
        }
        let y = DVector::from_iterator(stream.len(), stream.iter().map(|c| c.label()));
        Ok(Stacked { u, y })
    }

    fn margins(&self, st: &MetricState) -> DVector<f64> {
        let um = &self.u * st.m.as_matrix();
        let quad = DVector::from_iterator(self.u.nrows(), um.row_iter().zip(self.u.row_iter()).map(|(a, b)| a.dot(&b).max(0.0)));
        self.y.component_mul(&quad.map(|d| st.mu - d))
    }

    fn objective(&self, st: &MetricState, cfg: &LossConfig) -> Result<f64> {
        let hinge: f64 = self.margins(st).iter().map(|z| (1.0 - z).max(0.0)).sum();
        Ok(hinge + self.y.len() as f64 * cfg.rho * crate::loss::regularizer(&st.m, cfg)?)
    }
}

/// Minimizes `Σ_t f_t(M, μ)` over the feasible set by proximal subgradient
/// descent with a `1/√k` step, starting from each of `starts` and keeping
/// the best iterate seen.
pub fn batch_comparator(
    stream: &[ConstraintTriplet],
    cfg: &LossConfig,
    starts: &[MetricState],
    opts: BatchOptions,
) -> Result<BatchFit> {
    let data = Stacked::new(stream)?;
    let t_len = stream.len() as f64;
    let mean_sq = data.u.row_iter().map(|r| r.norm_squared()).sum::<f64>() / t_len;
    let base_step = 1.0 / mean_sq.max(1e-12);
    let n = data.u.ncols();
    let cold = [MetricState::cold_start(n)];
    let starts = if starts.is_empty() { &cold[..] } else { starts };

    let mut best: Option<BatchFit> = None;
    for start in starts {
        check_dim(n, start.dim())?;
        let mut st = start.clone();
        let mut best_here = data.objective(&st, cfg)?;
        let mut best_state = st.clone();
        let mut stale = 0;
        let mut iterations = 0;
        for k in 0..opts.max_iters {
            iterations = k + 1;
            let z = data.margins(&st);
            let active = DVector::from_iterator(z.len(), z.iter().zip(data.y.iter().copied()).map(|(&z, y)| if z < 1.0 { y } else { 0.0 }));
            // mean subgradient: G = (1/T) Σ y u uᵀ, g = −(1/T) Σ y
            let weighted = DMatrix::from_fn(data.u.nrows(), n, |i, j| data.u[(i, j)] * active[i]);
            let g_m = SymMatrix::new(data.u.transpose() * weighted / t_len)?;
            let g_mu = -active.sum() / t_len;
            let step = base_step / ((k + 1) as f64).sqrt();
            let moved = st.m.add_scaled(&g_m, -step)?;
            let m = prox(&moved, step * cfg.rho, cfg.reg_kind)?;
            st = MetricState::new(m, (st.mu - step * g_mu).max(1.0));

            let f = data.objective(&st, cfg)?;
            if !f.is_finite() {
                return Err(Error::NonFinite("batch objective"));
            }
            if f < best_here - opts.tol * best_here.abs().max(1.0) {
                stale = 0;
            } else {
                stale += 1;
            }
            if f < best_here {
                best_here = f;
                best_state = st.clone();
            }
            if stale >= opts.patience {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| best_here < b.total_loss) {
            best = Some(BatchFit {
                state: best_state,
                total_loss: best_here,
                iterations,
            });
        }
    }
    Ok(best.expect("at least one start"))
}

/// Constants entering the regret bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub g_ell: f64,
    pub phi_max: f64,
    pub d_max: f64,
    pub sigma: f64,
    pub c_norm: f64,
    pub eta0: f64,
}

/// `g_ell = max‖u‖² + ρ`, `φ_max = c√n`, `D_max = 2c√n`, `σ = 1`.
pub fn bound_constants(max_u_sq: f64, c_norm: f64, rho: f64, eta0: f64, n: usize) -> BoundConstants {
    let root_n = (n as f64).sqrt();
    BoundConstants {
        g_ell: max_u_sq + rho,
        phi_max: c_norm * root_n,
        d_max: 2.0 * c_norm * root_n,
        sigma: 1.0,
        c_norm,
        eta0,
    }
}

/// Dynamic regret bound of a single learner run at `η₀/√T`:
/// `√T [(D_max + 4 φ_max γ)/η₀ + η₀ G²/(2σ)]`.
pub fn corollary1_bound(k: &BoundConstants, gamma: f64, t_len: u64) -> f64 {
    let root_t = (t_len as f64).sqrt();
    root_t * ((k.d_max + 4.0 * k.phi_max * gamma) / k.eta0 + k.eta0 * k.g_ell * k.g_ell / (2.0 * k.sigma))
}

/// Static regret bound with a tuned rate: `G √(2 T D_max / σ)`.
pub fn static_bound(k: &BoundConstants, t_len: u64) -> f64 {
    k.g_ell * (2.0 * t_len as f64 * k.d_max / k.sigma).sqrt()
}

/// Ensemble bound on `[q, s]`: `8C(1 + γ)√|I| + 40 ln(s + 1) √|I|`.
pub fn sadl_bound(c_thm: f64, gamma: f64, q: u64, s: u64) -> f64 {
    let root_len = ((s + 1).saturating_sub(q) as f64).sqrt();
    8.0 * c_thm * (1.0 + gamma) * root_len + experts_term(s, s + 1 - q)
}

/// Cost of tracking the best expert on an interval ending at `s`:
/// `40 ln(s + 1) √len`.
pub fn experts_term(s: u64, len: u64) -> f64 {
    40.0 * ((s + 1) as f64).ln() * (len as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::composite_loss;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(data: &[[f64; 2]]) -> DMatrix<f64> {
        DMatrix::from_fn(data.len(), 2, |i, j| data[i][j])
    }

    #[test]
    fn knn_separated_blobs() {
        let train = rows(&[[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.0, 10.1]]);
        let labels = [1, 1, 2, 2];
        let test = rows(&[[0.05, 0.02], [9.9, 10.0]]);
        assert_eq!(knn_error(&train, &labels, &test, &[1, 2], 1).unwrap(), 0.0);
        assert_eq!(knn_error_loo(&train, &labels, 1).unwrap(), 0.0);
    }

    #[test]
    fn knn_exact_match_decides() {
        let train = rows(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let test = rows(&[[1.0, 0.0]]);
        assert_eq!(knn_error(&train, &[3, 7, 3], &test, &[7], 1).unwrap(), 0.0);
        assert_eq!(knn_error(&train, &[3, 7, 3], &test, &[3], 1).unwrap(), 1.0);
    }

    #[test]
    fn knn_ties_prefer_lower_index_and_label() {
        // all training points equidistant: index order picks the first two,
        // which split the vote, and the smaller label wins
        let train = rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        let test = rows(&[[0.0, 0.0]]);
        assert_eq!(knn_error(&train, &[5, 2, 9, 9], &test, &[2], 2).unwrap(), 0.0);
        assert_eq!(knn_error(&train, &[5, 2, 9, 9], &test, &[9], 3).unwrap(), 1.0);
    }

    #[test]
    fn knn_errors() {
        let empty = DMatrix::<f64>::zeros(0, 2);
        let one = rows(&[[0.0, 0.0]]);
        assert!(knn_error(&empty, &[], &one, &[1], 1).is_err());
        assert!(knn_error(&one, &[1], &empty, &[], 1).is_err());
        assert!(knn_error(&one, &[1], &one, &[1], 2).is_err());
        assert!(knn_error_loo(&one, &[1], 1).is_err());
    }

    #[test]
    fn knn_shuffled_labels_sit_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 900;
        let pts = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let mut labels: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
        labels.shuffle(&mut rng);
        let err = knn_error_loo(&pts, &labels, 5).unwrap();
        let sd = (2.0 / 9.0 / n as f64).sqrt();
        assert!((err - 2.0 / 3.0).abs() <= 3.0 * sd, "{err}");
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
        let truth = [1u8, 1, 2, 2, 3, 3, 3];
        let relabeled = [9usize, 9, 4, 4, 0, 0, 0];
        assert!((nmi(&relabeled, &truth).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[1, 2, 3]).unwrap(), 0.0);
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn nmi_matches_hand_computation() {
        // a = (0,0,1,1), b = (0,0,0,1): H(a) = ln 2, H(b) = −¾ln¾ − ¼ln¼,
        // I = H(b) − H(b|a) = H(b) − ½ ln 2
        let ha = 2f64.ln();
        let hb = -(0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let expected = (hb - 0.5 * ha) / (ha * hb).sqrt();
        assert!((nmi(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap() - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nmi_bounded_and_permutation_invariant(
            labels in proptest::collection::vec((0u8..4, 0u8..3), 1..60),
            perm in Just([2u8, 0, 3, 1]).prop_shuffle(),
        ) {
            let a: Vec<u8> = labels.iter().map(|p| p.0).collect();
            let b: Vec<u8> = labels.iter().map(|p| p.1).collect();
            let v = nmi(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            let pa: Vec<u8> = a.iter().map(|&x| perm[usize::from(x)]).collect();
            prop_assert!((nmi(&pa, &b).unwrap() - v).abs() < 1e-12);
            prop_assert!((nmi(&b, &a).unwrap() - v).abs() < 1e-12);
        }

        #[test]
        fn regret_is_additive(
            steps in proptest::collection::vec((0.0f64..3.0, 0.0f64..3.0, 0.0f64..1.0), 2..40),
            cut in 0.0f64..1.0,
        ) {
            let mut ledger = RegretLedger::new();
            for &(a, b, v) in &steps {
                ledger.push(a, b, v);
            }
            let s = steps.len();
            let m = 1 + ((s - 1) as f64 * cut) as usize;
            let m = m.min(s - 1);
            let whole = ledger.dynamic_regret(1, s).unwrap();
            let parts = ledger.dynamic_regret(1, m).unwrap() + ledger.dynamic_regret(m + 1, s).unwrap();
            prop_assert!((whole - parts).abs() < 1e-9);
            let g = ledger.gamma_cumulative();
            prop_assert!(g.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centers = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
        let n = 150;
        let labels: Vec<u8> = (0..n).map(|i| (i % 3) as u8).collect();
        let pts = DMatrix::from_fn(n, 2, |i, j| centers[usize::from(labels[i])][j] + rng.random_range(-0.5..0.5));
        let v = kmeans_nmi(&pts, &labels, 3, 10, &mut rng).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zeros = DMatrix::zeros(10, 3);
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let v = kmeans_nmi(&zeros, &labels, 3, 2, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert!(kmeans(&DMatrix::zeros(2, 3), 3, 1, &mut rng).is_err());
        assert!(kmeans_nmi(&zeros, &labels, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn kmeans_inertia_never_worse_with_restarts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-1.0..1.0));
        let one = kmeans(&pts, 4, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let many = kmeans(&pts, 4, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(many.inertia <= one.inertia + 1e-12);
    }

    #[test]
    fn ledger_examples() {
        let mut ledger = RegretLedger::new();
        ledger.push(1.0, 0.0, 0.0);
        ledger.push(1.0, 0.5, 0.25);
        assert!((ledger.dynamic_regret(1, 2).unwrap() - 1.5).abs() < 1e-15);
        assert!((ledger.gamma(1, 2).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(ledger.gamma(2, 2).unwrap(), 0.0);
        assert!(ledger.dynamic_regret(0, 1).is_err());
        assert!(ledger.dynamic_regret(2, 3).is_err());

        let mut same = RegretLedger::new();
        for v in [0.3, 0.7, 1.1] {
            same.push(v, v, 0.0);
        }
        assert_eq!(same.dynamic_regret(1, 3).unwrap(), 0.0);
    }

    #[test]
    fn static_regret_examples() {
        let losses = [0.5, 1.0, 1.5];
        assert_eq!(static_regret(&losses, 3.0, 1, 3).unwrap(), 0.0);
        assert_eq!(static_regret(&losses, 1.0, 2, 3).unwrap(), 1.5);
        assert!(static_regret(&losses, 0.0, 2, 4).is_err());
    }

    #[test]
    fn bound_constant_examples() {
        let k = bound_constants(0.0, 1.0, 0.0, 1.0, 25);
        assert_eq!(k.phi_max, 5.0);
        assert_eq!(k.d_max, 10.0);
        assert_eq!(k.g_ell, 0.0);
        assert_eq!(k.sigma, 1.0);
        assert_eq!(bound_constants(3.0, 1.0, 0.5, 1.0, 25).g_ell, 3.5);
    }

    #[test]
    fn single_learner_bound_examples() {
        let k = BoundConstants {
            g_ell: 2.0,
            phi_max: 5.0,
            d_max: 10.0,
            sigma: 1.0,
            c_norm: 1.0,
            eta0: 1.0,
        };
        assert!((corollary1_bound(&k, 0.0, 100) - 120.0).abs() < 1e-12);
        assert!(corollary1_bound(&k, 0.5, 100) > corollary1_bound(&k, 0.0, 100));
        assert!(corollary1_bound(&k, 0.0, 400) > corollary1_bound(&k, 0.0, 100));
    }

    #[test]
    fn sadl_bound_examples() {
        let v = sadl_bound(1.0, 0.0, 1, 4);
        assert!((v - (16.0 + 80.0 * 5f64.ln())).abs() < 1e-12);
        assert!((v - 144.75).abs() < 0.01);
        let first = |c: f64, g: f64, q, s| sadl_bound(c, g, q, s) - experts_term(s, s + 1 - q);
        assert!((first(1.0, 0.0, 1, 8) / first(1.0, 0.0, 5, 8) - 2f64.sqrt()).abs() < 1e-12);
        assert!((first(1.0, 1.0, 1, 8) / first(1.0, 0.0, 1, 8) - 2.0).abs() < 1e-12);
    }

    fn random_stream(seed: u64, len: usize) -> Vec<ConstraintTriplet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|t| {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                let z = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                let y = if x[0] * z[0] > 0.0 { 1 } else { -1 };
                ConstraintTriplet::new(x, z, y, t as u64 + 1).unwrap()
            })
            .collect()
    }

    #[test]
    fn batch_objective_matches_per_step_sum() {
        let stream = random_stream(4, 50);
        let cfg = LossConfig {
            rho: 0.1,
            ..LossConfig::default()
        };
        let st = MetricState::new(SymMatrix::from_diagonal(&[1.0, 0.5, 0.0]), 1.5);
        let direct: f64 = stream.iter().map(|c| composite_loss(&st, c, &cfg).unwrap()).sum();
        let stacked = Stacked::new(&stream).unwrap().objective(&st, &cfg).unwrap();
        assert!((direct - stacked).abs() < 1e-9);
    }

    #[test]
    fn batch_comparator_beats_its_starts() {
        let stream = random_stream(8, 200);
        let cfg = LossConfig {
            rho: 0.01,
            ..LossConfig::default()
        };
        let starts = [MetricState::cold_start(3), MetricState::new(SymMatrix::identity(3), 2.0)];
        let fit = batch_comparator(&stream, &cfg, &starts, BatchOptions::default()).unwrap();
        for s in &starts {
            let f: f64 = stream.iter().map(|c| composite_loss(s, c, &cfg).unwrap()).sum();
            assert!(fit.total_loss <= f);
        }
        assert!(fit.state.is_feasible().unwrap());
        assert!(batch_comparator(&[], &cfg, &starts, BatchOptions::default()).is_err());
    }
}
