//! Synthetic nonstationary world: two independent three-blob clusterings
//! living in disjoint 3-D coordinate subspaces, continuous random rotations
//! of the whole data set, and discrete switches of which clustering labels
//! the constraints.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::metric::{ConstraintTriplet, MetricState, SymMatrix};

/// Orthogonality drift of the cumulative rotation tolerated before it is
/// re-orthonormalized.
const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clustering {
    A,
    B,
}

impl Clustering {
    /// First coordinate of the clustering's 3-D subspace.
    pub fn offset(self) -> usize {
        match self {
            Clustering::A => 0,
            Clustering::B => 3,
        }
    }
}

impl std::str::FromStr for Clustering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Clustering::A),
            "B" | "b" => Ok(Clustering::B),
            other => Err(Error::invalid("clustering", format!("expected A or B, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for Clustering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Clustering::A => "A",
            Clustering::B => "B",
        })
    }
}

/// Which coordinates a random rotation may mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationScope {
    Full,
    /// Only the six clustering coordinates.
    ClusterSubspaces,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSegment {
    pub duration: u64,
    pub clustering: Clustering,
    /// Frobenius norm of the rotation generator per step.
    pub rotation_rate: f64,
}

impl DriftSegment {
    pub fn new(duration: u64, clustering: Clustering, rotation_rate: f64) -> Self {
        DriftSegment {
            duration,
            clustering,
            rotation_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftScenario {
    pub n_points: usize,
    pub dim: usize,
    pub proportions: [f64; 3],
    pub segments: Vec<DriftSegment>,
    pub blob_separation: f64,
    pub noise_sigma: f64,
    /// Scale of the ground-truth projector.
    pub gain: f64,
    pub rotation_scope: RotationScope,
    pub seed: u64,
}

impl Default for DriftScenario {
    fn default() -> Self {
        DriftScenario {
            n_points: 2000,
            dim: 25,
            proportions: [0.5, 0.2, 0.3],
            segments: vec![DriftSegment::new(1024, Clustering::A, 0.0)],
            blob_separation: 4.0,
            noise_sigma: 1.0,
            gain: 0.25,
            rotation_scope: RotationScope::Full,
            seed: 0,
        }
    }
}

impl DriftScenario {
    /// Six-segment profile: static A, switch to B, moderate, fast and
    /// moderate drift, then back to A with slow drift. Segment lengths are
    /// fixed fractions of `total_steps`.
    pub fn paper_shaped(total_steps: u64) -> Self {
        let fractions = [0.25, 0.125, 0.125, 0.125, 0.125, 0.25];
        let rates = [
            (Clustering::A, 0.0),
            (Clustering::B, 0.0),
            (Clustering::B, 0.01),
            (Clustering::B, 0.03),
            (Clustering::B, 0.01),
            (Clustering::A, 0.003),
        ];
        let mut segments = Vec::with_capacity(6);
        let mut used = 0;
        for (i, (frac, (cl, rate))) in fractions.iter().zip(rates).enumerate() {
            let duration = if i == fractions.len() - 1 {
                total_steps.saturating_sub(used).max(1)
            } else {
                ((total_steps as f64 * frac).round() as u64).max(1)
            };
            used += duration;
            segments.push(DriftSegment::new(duration, cl, rate));
        }
        DriftScenario {
            segments,
            ..DriftScenario::default()
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 7 {
            return Err(Error::invalid("dim", format!("need at least 7 dimensions, got {}", self.dim)));
        }
        if self.n_points < 2 {
            return Err(Error::invalid("n_points", "need at least 2 points"));
        }
        if self.proportions.iter().any(|p| !(*p >= 0.0)) || (self.proportions.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("proportions", format!("must be nonnegative and sum to 1, got {:?}", self.proportions)));
        }
        if self.segments.is_empty() {
            return Err(Error::invalid("segments", "at least one segment is required"));
        }
        for s in &self.segments {
            if s.duration == 0 {
                return Err(Error::invalid("segments", "segment duration must be >= 1"));
            }
            if !(s.rotation_rate >= 0.0) || !s.rotation_rate.is_finite() {
                return Err(Error::invalid("segments", format!("rotation rate must be finite and >= 0, got {}", s.rotation_rate)));
            }
        }
        for (name, v) in [
            ("blob_separation", self.blob_separation),
            ("noise_sigma", self.noise_sigma),
            ("gain", self.gain),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `μ*`: midpoint between the mean within-blob and mean between-blob
    /// squared distances under the ground-truth metric, floored at 1.
    pub fn comparator_margin(&self) -> f64 {
        let s2 = self.noise_sigma * self.noise_sigma;
        // within: g·E‖n−n'‖² = 6gσ²; between: g(2·sep² + 6σ²)
        (self.gain * (self.blob_separation.powi(2) + 6.0 * s2)).max(1.0)
    }
}

/// The data set at one instant. Points are stored in their original frame;
/// the current coordinates are `q · x`.
#[derive(Debug, Clone)]
pub struct WorldState {
    base: DMatrix<f64>,
    labels_a: Vec<u8>,
    labels_b: Vec<u8>,
    q: DMatrix<f64>,
    t: u64,
    active: Clustering,
}

pub fn generate_world(sc: &DriftScenario) -> Result<WorldState> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let sample_label = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in sc.proportions.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as u8 + 1;
            }
        }
        3
    };
    let labels_a: Vec<u8> = (0..sc.n_points).map(|_| sample_label(&mut rng)).collect();
    let labels_b: Vec<u8> = (0..sc.n_points).map(|_| sample_label(&mut rng)).collect();

    let mut base = DMatrix::zeros(sc.n_points, sc.dim);
    for i in 0..sc.n_points {
        for j in 0..sc.dim {
            let g: f64 = rng.sample(StandardNormal);
            base[(i, j)] = sc.noise_sigma * g;
        }
        // blob means sit on scaled simplex vertices of each subspace
        base[(i, Clustering::A.offset() + usize::from(labels_a[i] - 1))] += sc.blob_separation;
        base[(i, Clustering::B.offset() + usize::from(labels_b[i] - 1))] += sc.blob_separation;
    }

    Ok(WorldState {
        base,
        labels_a,
        labels_b,
        q: DMatrix::identity(sc.dim, sc.dim),
        t: 0,
        active: sc.segments[0].clustering,
    })
}

impl WorldState {
    pub fn n_points(&self) -> usize {
        self.base.nrows()
    }

    pub fn dim(&self) -> usize {
        self.base.ncols()
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn active(&self) -> Clustering {
        self.active
    }

    pub fn set_active(&mut self, clustering: Clustering) {
        self.active = clustering;
    }

    /// Cumulative rotation.
    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Labels in `{1, 2, 3}`.
    pub fn labels(&self, clustering: Clustering) -> &[u8] {
        match clustering {
            Clustering::A => &self.labels_a,
            Clustering::B => &self.labels_b,
        }
    }

    pub fn active_labels(&self) -> &[u8] {
        self.labels(self.active)
    }

    /// Points in their original, unrotated frame (one per row).
    pub fn original_points(&self) -> &DMatrix<f64> {
        &self.base
    }

    /// Current coordinates, one point per row.
    pub fn points(&self) -> DMatrix<f64> {
        &self.base * self.q.transpose()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        &self.q * self.base.row(i).transpose()
    }

    /// Applies `R = exp(eps·S)` for a random skew-symmetric `S` with
    /// `‖S‖_F = 1`, and advances the clock. `eps = 0` leaves the data alone.
    pub fn rotation_step(&mut self, eps: f64, scope: RotationScope, rng: &mut impl Rng) {
        self.t += 1;
        if eps == 0.0 {
            return;
        }
        let r = (random_skew(self.dim(), scope, rng) * eps).exp();
        self.q = r * &self.q;
        let drift = (self.q.transpose() * &self.q - DMatrix::<f64>::identity(self.dim(), self.dim())).norm();
        if drift > ORTHO_TOL {
            self.q = reorthonormalize(&self.q);
        }
    }

    /// A uniformly random pair of distinct points, labelled by the active
    /// clustering.
    pub fn sample_constraint(&self, t: u64, rng: &mut impl Rng) -> Result<ConstraintTriplet> {
        let n = self.n_points();
        if n < 2 {
            return Err(Error::invalid("n_points", "need at least 2 points to sample a pair"));
        }
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let labels = self.active_labels();
        let y = if labels[i] == labels[j] { 1 } else { -1 };
        ConstraintTriplet::new(self.point(i), self.point(j), y, t)
    }

    /// `M* = g·q P qᵀ`, with `P` the projector onto the active clustering's
    /// original subspace, and `μ*` from [`DriftScenario::comparator_margin`].
    pub fn ground_truth_metric(&self, sc: &DriftScenario) -> MetricState {
        let basis = self.q.columns(self.active.offset(), 3);
        let m = SymMatrix::new(basis * basis.transpose() * sc.gain).expect("square by construction");
        MetricState::new(m, sc.comparator_margin())
    }
}

fn random_skew(dim: usize, scope: RotationScope, rng: &mut impl Rng) -> DMatrix<f64> {
    let active = match scope {
        RotationScope::Full => dim,
        RotationScope::ClusterSubspaces => 6.min(dim),
    };
    let mut g = DMatrix::zeros(dim, dim);
    for i in 0..active {
        for j in 0..active {
            g[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let s = &g - g.transpose();
    let norm = s.norm();
    if norm == 0.0 {
        s
    } else {
        s / norm
    }
}

fn reorthonormalize(q: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = q.clone().qr();
    let r = qr.r();
    let mut out = qr.q();
    for j in 0..out.ncols() {
        if r[(j, j)] < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    out
}

/// One emitted step of a drift profile.
#[derive(Debug, Clone)]
pub struct ProfileStep {
    pub constraint: ConstraintTriplet,
    /// Ground-truth metric at this step.
    pub comparator: MetricState,
    /// `‖M*_t − M*_{t−1}‖_F` (zero at the first step).
    pub variation: f64,
    pub segment: usize,
}

/// Iterator over a scenario's constraint stream.
#[derive(Debug, Clone)]
pub struct ProfileStream {
    sc: DriftScenario,
    world: WorldState,
    rng: ChaCha8Rng,
    segment: usize,
    in_segment: u64,
    previous: Option<SymMatrix>,
}

pub fn run_profile(sc: &DriftScenario) -> Result<ProfileStream> {
    let world = generate_world(sc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(1);
    Ok(ProfileStream {
        sc: sc.clone(),
        world,
        rng,
        segment: 0,
        in_segment: 0,
        previous: None,
    })
}

impl ProfileStream {
    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn scenario(&self) -> &DriftScenario {
        &self.sc
    }

    fn next_step(&mut self) -> Option<Result<ProfileStep>> {
        while self.in_segment == self.sc.segments.get(self.segment)?.duration {
            self.segment += 1;
            self.in_segment = 0;
        }
        let seg = self.sc.segments[self.segment];
        self.in_segment += 1;

        self.world.rotation_step(seg.rotation_rate, self.sc.rotation_scope, &mut self.rng);
        self.world.set_active(seg.clustering);
        let t = self.world.time();
        let constraint = match self.world.sample_constraint(t, &mut self.rng) {
            Ok(c) => c,
            Err(e) => return Some(Err(e)),
        };
        let comparator = self.world.ground_truth_metric(&self.sc);
        let variation = self
            .previous
            .as_ref()
            .map_or(0.0, |p| (comparator.m.as_matrix() - p.as_matrix()).norm());
        self.previous = Some(comparator.m.clone());
        Some(Ok(ProfileStep {
            constraint,
            comparator,
            variation,
            segment: self.segment,
        }))
    }
}

impl Iterator for ProfileStream {
    type Item = Result<ProfileStep>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_step()
    }
}
