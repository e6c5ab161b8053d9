//! The acceptance criteria, shared by `sadl verify` and the `acceptance`
//! test target. Each check returns a [`Check`] carrying its verdict and the
//! measured numbers.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sadl_core::drift::{generate_world, run_profile};
use sadl_core::eval::{
    batch_comparator, bound_constants, corollary1_bound, experts_term, static_bound, static_regret, BatchOptions,
};
use sadl_core::loss::{clipped_loss, composite_loss, grad_m, grad_mu, hinge_loss, margin_argument};
use sadl_core::metric::{eig_soft_threshold, mahalanobis_sq};
use sadl_core::reference::{central_difference, nuclear_prox_by_descent, Dense};
use sadl_core::{
    ComidLearner, ConstraintTriplet, DriftScenario, DyadicInterval, MetricState, RotationScope, SadlEnsemble, SymMatrix,
};

use crate::config::{self, ExperimentConfig};
use crate::runner::run_experiment;
use crate::table::Summary;
use crate::RunError;

#[derive(Debug, Clone)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {} {} {}: {} ({:.1}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(id: u8, name: &'static str, body: impl FnOnce() -> Result<(bool, String), RunError>) -> Check {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn to_dense(m: &SymMatrix) -> Dense {
    let a = m.as_matrix();
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

fn random_symmetric(n: usize, rng: &mut impl Rng) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymMatrix::new((&g + g.transpose()) * 0.5).expect("symmetric by construction")
}

fn random_psd(n: usize, rng: &mut impl Rng) -> SymMatrix {
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt());
    SymMatrix::new(&b * b.transpose()).expect("symmetric by construction")
}

/// Closed-form eigenvalue soft-thresholding against a brute-force
/// projected-gradient minimizer of `½‖M − A‖² + τ‖M‖_*` over PSD `M`.
pub fn prox_oracle(matrices: usize, seed: u64) -> Check {
    timed(1, "prox oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..matrices {
            let a = random_symmetric(5, &mut rng);
            for tau in [0.1, 1.0] {
                let closed = eig_soft_threshold(&a, tau)?;
                let brute = nuclear_prox_by_descent(&to_dense(&a), tau, 200);
                for (i, row) in brute.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        worst = worst.max((closed.get(i, j) - v).abs());
                    }
                }
            }
        }
        Ok((worst <= 1e-5, format!("{matrices} matrices x 2 taus, max |diff| = {worst:.2e} (tol 1e-5)")))
    })
}

/// Analytic subgradients against central differences at random points
/// away from the hinge kink.
pub fn gradient_check(points: usize, seed: u64) -> Check {
    timed(2, "gradient check", || {
        let n = 6;
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut taken = 0;
        let mut active = 0;
        while taken < points {
            let state = MetricState::new(random_psd(n, &mut rng), rng.random_range(1.0..4.0));
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = if rng.random::<bool>() { 1 } else { -1 };
            let c = ConstraintTriplet::new(x, z, y, 1)?;
            if (margin_argument(&state, &c)? - 1.0).abs() <= 0.01 {
                continue;
            }
            taken += 1;
            let gm = grad_m(&state, &c)?;
            let gmu = grad_mu(&state, &c)?;
            if gmu != 0.0 {
                active += 1;
            }
            let loss_at = |m: &SymMatrix, mu: f64| hinge_loss(&MetricState::new(m.clone(), mu), &c).expect("dimensions agree");

            let mut analytic = vec![gmu];
            let mut numeric = vec![central_difference(|v| loss_at(&state.m, v), state.mu, h)];
            for i in 0..n {
                for j in i..n {
                    // symmetric perturbation E_ij + E_ji (or E_ii)
                    let mut e = DMatrix::zeros(n, n);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    let e = SymMatrix::new(e)?;
                    let f = |s: f64| loss_at(&state.m.add_scaled(&e, s).expect("same size"), state.mu);
                    let factor = if i == j { 1.0 } else { 2.0 };
                    analytic.push(factor * gm.get(i, j));
                    numeric.push(central_difference(f, 0.0, h));
                }
            }
            let scale = analytic.iter().chain(&numeric).fold(0.0f64, |m, v| m.max(v.abs()));
            if scale > 0.0 {
                let err = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                worst = worst.max(err / scale);
            }
        }
        Ok((
            worst <= 1e-5,
            format!("{points} points ({active} with active hinge), max relative error = {worst:.2e} (tol 1e-5)"),
        ))
    })
}

/// Outcome of one instrumented SADL run.
struct SadlAudit {
    steps: u64,
    psd_violations: u64,
    mu_violations: u64,
    min_eig: f64,
    min_mu: f64,
    max_prob_err: f64,
    min_weight: f64,
    max_regret_identity: f64,
}

fn audit_sadl(cfg: &ExperimentConfig, steps: u64) -> Result<SadlAudit, RunError> {
    let sc = cfg.scenario(0)?;
    let mut ensemble = SadlEnsemble::new(cfg.sadl_config(cfg.trial_seed(0)))?;
    let mut audit = SadlAudit {
        steps: 0,
        psd_violations: 0,
        mu_violations: 0,
        min_eig: f64::INFINITY,
        min_mu: f64::INFINITY,
        max_prob_err: 0.0,
        min_weight: f64::INFINITY,
        max_regret_identity: 0.0,
    };
    for step in run_profile(&sc)?.take(steps as usize) {
        let report = ensemble.sadl_step(&step?.constraint)?;
        audit.steps += 1;
        for st in std::iter::once(&report.output).chain(&report.updated_states) {
            let eig = st.m.min_eigenvalue()?;
            audit.min_eig = audit.min_eig.min(eig);
            audit.min_mu = audit.min_mu.min(st.mu);
            audit.psd_violations += u64::from(eig < -1e-9);
            audit.mu_violations += u64::from(!(st.mu >= 1.0));
        }
        let p_sum: f64 = report.probabilities.iter().sum();
        audit.max_prob_err = audit.max_prob_err.max((p_sum - 1.0).abs());
        audit.min_weight = report.weights.iter().copied().fold(audit.min_weight, f64::min);
        let identity: f64 = report.probabilities.iter().zip(&report.regrets).map(|(p, r)| p * r).sum();
        audit.max_regret_identity = audit.max_regret_identity.max(identity.abs());
    }
    Ok(audit)
}

/// Criteria 3 and 4 from one run of `steps` steps.
pub fn sadl_invariants(cfg: &ExperimentConfig, steps: u64) -> [Check; 2] {
    let start = Instant::now();
    let audit = audit_sadl(cfg, steps);
    let elapsed = start.elapsed();
    match audit {
        Ok(a) => [
            Check {
                id: 3,
                name: "feasibility",
                passed: a.steps == steps && a.psd_violations == 0 && a.mu_violations == 0,
                detail: format!(
                    "{} steps, {} PSD and {} mu violations, min eigenvalue {:.2e}, min mu {}",
                    a.steps, a.psd_violations, a.mu_violations, a.min_eig, a.min_mu
                ),
                elapsed,
            },
            Check {
                id: 4,
                name: "MW invariants",
                passed: a.steps == steps && a.max_prob_err <= 1e-12 && a.min_weight > 0.0 && a.max_regret_identity <= 1e-12,
                detail: format!(
                    "max |sum p - 1| = {:.1e}, min weight = {:.3e}, max |sum p r| = {:.1e} (tol 1e-12)",
                    a.max_prob_err, a.min_weight, a.max_regret_identity
                ),
                elapsed,
            },
        ],
        Err(e) => [3, 4].map(|id| Check {
            id,
            name: if id == 3 { "feasibility" } else { "MW invariants" },
            passed: false,
            detail: format!("error: {e}"),
            elapsed,
        }),
    }
}

/// Per-interval gap between SADL's cumulative clipped loss and that of the
/// interval's own expert, averaged over seeds, against `40 ln(s+1) √|I|`.
pub fn experts_regret(cfg: &ExperimentConfig, seeds: u64, horizon: u64, lengths: &[u64]) -> Check {
    timed(5, "expert tracking bound", || {
        let loss = cfg.loss();
        // (level, index) -> (sum over seeds of gap, seeds seen)
        let mut gaps: HashMap<(u32, u64), (f64, u64)> = HashMap::new();
        for seed in 0..seeds {
            let sc = cfg.scenario(seed)?;
            let mut ensemble = SadlEnsemble::new(cfg.sadl_config(cfg.trial_seed(seed)))?;
            let mut open: HashMap<(u32, u64), (DyadicInterval, f64)> = HashMap::new();
            for step in run_profile(&sc)?.take(horizon as usize) {
                let c = step?.constraint;
                let report = ensemble.sadl_step(&c)?;
                let own = clipped_loss(&report.output, &c, &loss)?;
                for (interval, l) in report.intervals.iter().zip(&report.clipped_losses) {
                    if !lengths.contains(&interval.len()) {
                        continue;
                    }
                    let e = open.entry((interval.level, interval.index)).or_insert((*interval, 0.0));
                    e.1 += own - l;
                }
            }
            for (key, (interval, gap)) in open {
                if interval.end() <= horizon {
                    let e = gaps.entry(key).or_default();
                    e.0 += gap;
                    e.1 += 1;
                }
            }
        }
        let mut worst_ratio = f64::NEG_INFINITY;
        let mut worst = String::new();
        let mut count = 0;
        for ((level, index), (sum, n)) in &gaps {
            let interval = DyadicInterval {
                level: *level,
                index: *index,
                i0: cfg.i0,
            };
            let mean = sum / *n as f64;
            let bound = experts_term(interval.end(), interval.len());
            count += 1;
            if mean / bound > worst_ratio {
                worst_ratio = mean / bound;
                worst = format!("{interval}: mean gap {mean:.3} vs bound {bound:.1}");
            }
        }
        let complete = gaps.values().all(|&(_, n)| n == seeds);
        Ok((
            complete && count > 0 && worst_ratio <= 1.0,
            format!("{count} intervals, {seeds} seeds; tightest {worst} (ratio {worst_ratio:.4})"),
        ))
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct RegretSample {
    gt_regret: f64,
    bound: f64,
    static_regret: Option<f64>,
    static_bound: f64,
}

/// Runs one learner at `η₀/√T` over the first `t_len` constraints.
fn single_learner_regret(
    cfg: &ExperimentConfig,
    stream: &[ConstraintTriplet],
    comparator_losses: &[f64],
    comparator: &MetricState,
    t_len: usize,
    with_batch: bool,
) -> Result<RegretSample, RunError> {
    let loss = cfg.loss();
    let prefix = &stream[..t_len];
    let eta = cfg.eta0 / (t_len as f64).sqrt();
    let mut learner = ComidLearner::new(MetricState::cold_start(cfg.dim), eta, loss)?;
    let mut losses = Vec::with_capacity(t_len);
    let mut c_norm = comparator.m.frobenius_norm();
    for c in prefix {
        c_norm = c_norm.max(learner.state.m.frobenius_norm());
        losses.push(composite_loss(&learner.state, c, &loss)?);
        learner = learner.comid_step(c)?;
    }
    let max_u_sq = prefix.iter().map(|c| c.diff().norm_squared()).fold(0.0, f64::max);
    let k = bound_constants(max_u_sq, c_norm, cfg.rho, cfg.eta0, cfg.dim);
    let total: f64 = losses.iter().sum();
    let gt_regret = total - comparator_losses[..t_len].iter().sum::<f64>();
    let static_regret = if with_batch {
        let fit = batch_comparator(prefix, &loss, &[comparator.clone(), learner.state.clone()], BatchOptions::default())?;
        Some(static_regret(&losses, fit.total_loss, 1, t_len)?)
    } else {
        None
    };
    Ok(RegretSample {
        gt_regret,
        bound: corollary1_bound(&k, 0.0, t_len as u64),
        static_regret,
        static_bound: static_bound(&k, t_len as u64),
    })
}

/// Single learner on a static stream: regret against the ground truth
/// under the single-learner bound, static regret under its own bound, and
/// static regret growing like `√T`.
pub fn static_regret_scaling(cfg: &ExperimentConfig, seeds: u64, bound_lengths: &[usize], ratio_pairs: &[usize]) -> Check {
    timed(6, "single-learner regret", || {
        let longest = bound_lengths.iter().copied().chain(ratio_pairs.iter().map(|t| 2 * t)).max().unwrap_or(0);
        let mut bound_violations = 0;
        let mut static_violations = 0;
        let mut worst_bound_ratio = f64::NEG_INFINITY;
        let mut sums: HashMap<usize, f64> = HashMap::new();
        let mut negative_static = 0;
        for seed in 0..seeds {
            let sc = cfg.scenario(seed)?;
            if sc.segments.iter().any(|s| s.rotation_rate != 0.0) || sc.segments.iter().any(|s| s.clustering != sc.segments[0].clustering) {
                return Err(RunError::Format("the regret check needs a static scenario".into()));
            }
            let mut stream = Vec::with_capacity(longest);
            let mut comparator_losses = Vec::with_capacity(longest);
            let mut comparator = None;
            for step in run_profile(&sc)?.take(longest) {
                let step = step?;
                comparator_losses.push(composite_loss(&step.comparator, &step.constraint, &cfg.loss())?);
                comparator.get_or_insert(step.comparator);
                stream.push(step.constraint);
            }
            if stream.len() < longest {
                return Err(RunError::Format(format!("scenario has {} steps, need {longest}", stream.len())));
            }
            let comparator = comparator.expect("non-empty stream");
            let mut lengths: Vec<usize> = bound_lengths.to_vec();
            for &t in ratio_pairs {
                lengths.extend([t, 2 * t]);
            }
            lengths.sort_unstable();
            lengths.dedup();
            for t_len in lengths {
                let with_batch = ratio_pairs.iter().any(|&t| t == t_len || 2 * t == t_len);
                let s = single_learner_regret(cfg, &stream, &comparator_losses, &comparator, t_len, with_batch)?;
                if bound_lengths.contains(&t_len) {
                    worst_bound_ratio = worst_bound_ratio.max(s.gt_regret / s.bound);
                    bound_violations += usize::from(s.gt_regret > s.bound);
                }
                if let Some(r) = s.static_regret {
                    *sums.entry(t_len).or_default() += r;
                    static_violations += usize::from(r > s.static_bound);
                    negative_static += usize::from(r < 0.0);
                }
            }
        }
        let mut ratios = Vec::new();
        for &t in ratio_pairs {
            ratios.push((t, sums[&(2 * t)] / sums[&t]));
        }
        let limit = 2f64.sqrt() + 0.2;
        let ratios_ok = ratios.iter().all(|&(_, r)| r <= limit);
        let ratio_text: Vec<String> = ratios.iter().map(|(t, r)| format!("R({})/R({t}) = {r:.3}", 2 * t)).collect();
        let means: Vec<String> = {
            let mut keys: Vec<&usize> = sums.keys().collect();
            keys.sort();
            keys.iter().map(|t| format!("{t}:{:.1}", sums[t] / seeds as f64)).collect()
        };
        Ok((
            bound_violations == 0 && static_violations == 0 && ratios_ok,
            format!(
                "ground-truth regret over bound: {bound_violations} violations (max ratio {worst_bound_ratio:.4}); \
                 static regret over bound: {static_violations}; mean static regret {}; {} (limit {limit:.3}); \
                 {negative_static} runs with negative static regret",
                means.join(" "),
                ratio_text.join(", ")
            ),
        ))
    })
}

/// Mean k-NN / NMI summaries of the switch experiment, checked for the
/// qualitative ordering.
pub fn switch_reproduction(cfg: &ExperimentConfig, threads: Option<usize>, time_limit: Duration) -> Check {
    timed(7, "switch reproduction", || {
        let start = Instant::now();
        let result = run_experiment(cfg, threads)?;
        if !result.failures.is_empty() {
            return Ok((false, format!("{} failed runs, first: {}", result.failures.len(), result.failures[0].message)));
        }
        let summary = result.table.summarize(cfg.nmi_threshold);
        let verdict = judge_switch(cfg, &summary)?;
        let runtime = start.elapsed();
        let in_time = runtime <= time_limit;
        Ok((
            verdict.0 && in_time,
            format!("{}; runtime {:.0}s (limit {}s)", verdict.1, runtime.as_secs_f64(), time_limit.as_secs()),
        ))
    })
}

/// Applies parts (a), (b) and (c) to a summary. The first algorithm is the
/// adaptive one; the first baseline is the fast learner and the last the
/// slow one.
pub fn judge_switch(cfg: &ExperimentConfig, summary: &Summary) -> Result<(bool, String), RunError> {
    let algos = cfg.algorithms();
    if algos.len() < 3 {
        return Err(RunError::Format("need the adaptive run and at least two baselines".into()));
    }
    let names: Vec<String> = algos.iter().map(|a| a.name()).collect();
    let sadl = &names[0];
    let slow = names[1..]
        .iter()
        .zip(&cfg.baselines)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(n, _)| n)
        .expect("baselines present");
    let switch_t = cfg.segments[0].duration;
    let missing = |what: &str| RunError::Format(format!("summary has no {what}"));

    let pre = summary.series(sadl).filter(|r| r.t <= switch_t).last().ok_or_else(|| missing("pre-switch evaluation"))?;
    let first = summary.series(sadl).next().ok_or_else(|| missing("evaluations"))?;
    let best_after = summary
        .series(sadl)
        .filter(|r| r.t > switch_t)
        .min_by(|a, b| a.knn_err_mean.total_cmp(&b.knn_err_mean))
        .ok_or_else(|| missing("post-switch evaluation"))?;
    let final_sadl = summary.last(sadl).ok_or_else(|| missing("final evaluation"))?;
    let final_slow = summary.last(slow).ok_or_else(|| missing("slow baseline"))?;

    let recovered = best_after.knn_err_mean <= pre.knn_err_mean + 0.05;
    let slow_behind = final_slow.knn_err_mean >= final_sadl.knn_err_mean + 0.15;
    let nmi_ok = pre.nmi_prob >= first.nmi_prob;
    let mut c_ok = true;
    let mut c_text = Vec::new();
    for name in &names[1..] {
        let f = summary.last(name).ok_or_else(|| missing("baseline evaluation"))?;
        c_ok &= final_sadl.knn_err_mean <= f.knn_err_mean + 0.01;
        c_text.push(format!("{name} {:.4}", f.knn_err_mean));
    }
    Ok((
        recovered && slow_behind && nmi_ok && c_ok,
        format!(
            "(a) {} pre-switch {:.4} at t={}, best after switch {:.4} at t={}, final {:.4}, {slow} final {:.4}; \
             (b) {} P(NMI>{}) {:.2} at t={} -> {:.2} at t={}; (c) {} final baselines: {}",
            verdict(recovered && slow_behind),
            pre.knn_err_mean,
            pre.t,
            best_after.knn_err_mean,
            best_after.t,
            final_sadl.knn_err_mean,
            final_slow.knn_err_mean,
            verdict(nmi_ok),
            cfg.nmi_threshold,
            first.nmi_prob,
            first.t,
            pre.nmi_prob,
            pre.t,
            verdict(c_ok),
            c_text.join(", ")
        ),
    ))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn pairwise(points: &DMatrix<f64>) -> Vec<f64> {
    let n = points.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((points.row(i) - points.row(j)).norm());
        }
    }
    out
}

/// Rotation isometry, comparator consistency, and the similar-pair rate.
pub fn drift_sanity(worlds: u64, draws_per_world: u64) -> Check {
    timed(8, "drift machinery", || {
        let sc = DriftScenario {
            n_points: 200,
            seed: 8,
            ..DriftScenario::default()
        };
        let mut world = generate_world(&sc)?;
        let before = pairwise(&world.points());
        let gt0 = world.ground_truth_metric(&sc);
        let originals = world.points();
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        for _ in 0..100 {
            world.rotation_step(0.05, RotationScope::Full, &mut rng);
        }
        let after = pairwise(&world.points());
        let isometry = before.iter().zip(&after).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let gt1 = world.ground_truth_metric(&sc);
        let rotated = world.points();
        let mut consistency = 0.0f64;
        for i in 0..sc.n_points {
            let j = (i * 7 + 3) % sc.n_points;
            let d0 = mahalanobis_sq(&gt0, &originals.row(i).transpose(), &originals.row(j).transpose())?;
            let d1 = mahalanobis_sq(&gt1, &rotated.row(i).transpose(), &rotated.row(j).transpose())?;
            consistency = consistency.max((d0 - d1).abs());
        }

        let mut similar = 0u64;
        for w in 0..worlds {
            let world = generate_world(&DriftScenario {
                seed: 1000 + w,
                ..DriftScenario::default()
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + w);
            for t in 0..draws_per_world {
                similar += u64::from(world.sample_constraint(t + 1, &mut rng)?.y == 1);
            }
        }
        let n = (worlds * draws_per_world) as f64;
        let p_hat = similar as f64 / n;
        let p = 0.38;
        let sigma = (p * (1.0 - p) / n).sqrt();
        let rate_ok = (p_hat - p).abs() <= 3.0 * sigma;
        Ok((
            isometry <= 1e-8 && consistency <= 1e-8 && rate_ok,
            format!(
                "max distance change {isometry:.1e}, max comparator mismatch {consistency:.1e} (tol 1e-8); \
                 P(y=+1) = {p_hat:.4} over {n} draws, 0.38 +/- {:.4}",
                3.0 * sigma
            ),
        ))
    })
}

/// Runs `track --deterministic` twice and compares the result files.
pub fn determinism(bin: &Path, config: &Path, trials: u64) -> Check {
    timed(9, "determinism", || {
        let dir = tempfile::tempdir().map_err(|e| RunError::io(Path::new("tempdir"), e))?;
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out = dir.path().join(run);
            let status = Command::new(bin)
                .arg("track")
                .arg("--config")
                .arg(config)
                .args(["--trials", &trials.to_string(), "--deterministic", "--out"])
                .arg(&out)
                .output()
                .map_err(|e| RunError::io(bin, e))?;
            if !status.status.success() {
                return Ok((false, format!("track exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr))));
            }
            let path = out.join("results.csv");
            outputs.push(std::fs::read(&path).map_err(|e| RunError::io(&path, e))?);
        }
        let same = outputs[0] == outputs[1];
        Ok((same, format!("two runs, {} bytes each, identical = {same}", outputs[0].len())))
    })
}

/// Inputs for the full suite.
#[derive(Debug, Clone)]
pub struct Suite {
    pub desk: ExperimentConfig,
    pub profile: ExperimentConfig,
    pub static_world: ExperimentConfig,
    pub bin: PathBuf,
    /// Config file handed to the binary for the determinism check.
    pub determinism_config: PathBuf,
    pub threads: Option<usize>,
}

impl Suite {
    /// The shipped configs. The determinism config is written into `scratch`.
    pub fn builtin(bin: PathBuf, scratch: &Path) -> Result<Suite, RunError> {
        std::fs::create_dir_all(scratch).map_err(|e| RunError::io(scratch, e))?;
        for (name, text) in config::BUILTIN {
            let path = scratch.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
            }
            std::fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        }
        Ok(Suite {
            desk: config::builtin("desk_switch.toml")?,
            profile: config::builtin("paper_profile.toml")?,
            static_world: config::builtin("static_regret.toml")?,
            bin,
            determinism_config: scratch.join("desk_switch.toml"),
            threads: None,
        })
    }

    pub fn run_one(&self, id: u8) -> Vec<Check> {
        match id {
            1 => vec![prox_oracle(200, 1)],
            2 => vec![gradient_check(100, 2)],
            3 | 4 => {
                let [a, b] = sadl_invariants(&self.profile, 4096);
                if id == 3 {
                    vec![a]
                } else {
                    vec![b]
                }
            }
            5 => vec![experts_regret(&self.profile, 30, 2048, &[16, 64, 256])],
            6 => vec![static_regret_scaling(&self.static_world, self.static_world.trials, &[256, 1024, 4096], &[256, 1024])],
            7 => vec![switch_reproduction(&self.desk, self.threads, Duration::from_secs(15 * 60))],
            8 => vec![drift_sanity(200, 100)],
            9 => vec![determinism(&self.bin, &self.determinism_config, 2)],
            _ => Vec::new(),
        }
    }

    /// Runs the selected criteria in order; 3 and 4 share one run.
    pub fn run(&self, ids: &[u8], mut report: impl FnMut(&Check)) -> Vec<Check> {
        let mut out = Vec::new();
        let mut shared: Option<[Check; 2]> = None;
        for &id in ids {
            let checks = if id == 3 || id == 4 {
                let pair = shared.get_or_insert_with(|| sadl_invariants(&self.profile, 4096));
                vec![pair[usize::from(id - 3)].clone()]
            } else {
                self.run_one(id)
            };
            for c in checks {
                report(&c);
                out.push(c);
            }
        }
        out
    }
}
