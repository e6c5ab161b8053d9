//! Runs an experiment: one world and constraint stream per trial, every
//! configured algorithm on that same stream, and periodic k-NN / NMI
//! evaluation in the learned embedding.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sadl_core::drift::run_profile;
use sadl_core::eval::{kmeans_nmi, knn_error_loo, RegretLedger};
use sadl_core::loss::{clipped_loss, composite_loss};
use sadl_core::metric::{embed_rows, embedding};
use sadl_core::{ComidLearner, ConstraintTriplet, MetricState, SadlEnsemble};

use crate::config::{AlgoSpec, ExperimentConfig};
use crate::table::{Row, Table};
use crate::RunError;

/// Mixed into the trial seed for the ensemble's output draws, so that they
/// do not share a stream with the world.
const ENSEMBLE_SEED_SALT: u64 = 0x5AD1_0C0F_FEE0_D00D;

/// Point coordinates and active labels at an evaluation step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: u64,
    pub points: DMatrix<f64>,
    pub labels: Vec<u8>,
}

/// Everything an algorithm sees or is scored against in one trial.
#[derive(Debug, Clone, Default)]
pub struct TrialStream {
    pub constraints: Vec<ConstraintTriplet>,
    /// Ground-truth loss per step, when a comparator exists.
    pub comparator_losses: Option<Vec<f64>>,
    /// `‖M*_t − M*_{t−1}‖_F` per step.
    pub variations: Option<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
}

impl TrialStream {
    /// An external stream: no world, no comparator, no evaluations.
    /// Times are renumbered `1, 2, …`.
    pub fn external(constraints: Vec<ConstraintTriplet>) -> Self {
        let constraints = constraints
            .into_iter()
            .enumerate()
            .map(|(i, c)| ConstraintTriplet { t: i as u64 + 1, ..c })
            .collect();
        TrialStream {
            constraints,
            ..TrialStream::default()
        }
    }
}

pub fn build_trial(cfg: &ExperimentConfig, trial: u64) -> Result<TrialStream, RunError> {
    let sc = cfg.scenario(trial)?;
    let loss = cfg.loss();
    let total = sc.total_steps() as usize;
    let mut stream = run_profile(&sc)?;
    let mut out = TrialStream {
        constraints: Vec::with_capacity(total),
        comparator_losses: Some(Vec::with_capacity(total)),
        variations: Some(Vec::with_capacity(total)),
        snapshots: Vec::new(),
    };
    while let Some(step) = stream.next() {
        let step = step?;
        let t = step.constraint.t;
        out.comparator_losses.as_mut().expect("set above").push(composite_loss(&step.comparator, &step.constraint, &loss)?);
        out.variations.as_mut().expect("set above").push(step.variation);
        out.constraints.push(step.constraint);
        if t % cfg.eval_every == 0 {
            let world = stream.world();
            out.snapshots.push(Snapshot {
                t,
                points: world.points(),
                labels: world.active_labels().to_vec(),
            });
        }
    }
    Ok(out)
}

enum Tracker {
    Sadl(Box<SadlEnsemble>),
    Comid(ComidLearner),
}

impl Tracker {
    fn new(cfg: &ExperimentConfig, algo: AlgoSpec, trial_seed: u64) -> Result<Self, RunError> {
        Ok(match algo {
            AlgoSpec::Sadl => Tracker::Sadl(Box::new(SadlEnsemble::new(cfg.sadl_config(trial_seed ^ ENSEMBLE_SEED_SALT))?)),
            AlgoSpec::Comid(eta) => Tracker::Comid(
                ComidLearner::new(MetricState::cold_start(cfg.dim), eta, cfg.loss())?.with_ball(cfg.ball_radius),
            ),
        })
    }

    /// The metric used at this step, and the level it came from.
    fn step(&mut self, c: &ConstraintTriplet) -> Result<(MetricState, Option<u32>), RunError> {
        match self {
            Tracker::Sadl(e) => {
                let report = e.sadl_step(c)?;
                Ok((report.output, report.chosen.map(|i| i.level)))
            }
            Tracker::Comid(l) => {
                let out = l.state.clone();
                *l = l.comid_step(c)?;
                Ok((out, None))
            }
        }
    }
}

/// k-NN error and k-means NMI of `state`'s embedding of a snapshot.
pub fn evaluate_snapshot(
    cfg: &ExperimentConfig,
    state: &MetricState,
    snap: &Snapshot,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), RunError> {
    let e = embedding(state, cfg.embed_dim)?;
    let p = embed_rows(&e, &snap.points)?;
    let knn = knn_error_loo(&p, &snap.labels, cfg.knn_k)?;
    let nmi = kmeans_nmi(&p, &snap.labels, cfg.nmi_clusters, cfg.nmi_restarts, rng)?;
    Ok((knn, nmi))
}

fn finite(v: f64, what: &str, t: u64) -> Result<f64, RunError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(RunError::Numeric(format!("non-finite {what} at t = {t}")))
    }
}

pub fn run_algorithm(cfg: &ExperimentConfig, algo: AlgoSpec, data: &TrialStream, trial: u64) -> Result<Vec<Row>, RunError> {
    let trial_seed = cfg.trial_seed(trial);
    let loss = cfg.loss();
    let name = algo.name();
    let mut tracker = Tracker::new(cfg, algo, trial_seed)?;
    let mut ledger = RegretLedger::new();
    let mut snapshots = data.snapshots.iter().peekable();
    let mut rows = Vec::with_capacity(data.constraints.len());

    for (i, c) in data.constraints.iter().enumerate() {
        let t = c.t;
        let (state, level) = tracker.step(c)?;
        let loss_raw = finite(composite_loss(&state, c, &loss)?, "loss", t)?;
        let loss_clipped = clipped_loss(&state, c, &loss)?;
        let (gamma_cum, regret_cum) = match (&data.comparator_losses, &data.variations) {
            (Some(cl), Some(var)) => {
                ledger.push(loss_raw, cl[i], var[i]);
                let n = ledger.len();
                (Some(ledger.gamma_cumulative()[n - 1]), Some(ledger.dynamic_regret(1, n)?))
            }
            _ => (None, None),
        };
        let (knn_err, nmi) = match snapshots.next_if(|s| s.t == t) {
            Some(snap) => {
                // same k-means seeding for every algorithm at this step
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
                rng.set_stream(t);
                let (knn, nmi) = evaluate_snapshot(cfg, &state, snap, &mut rng)?;
                (Some(finite(knn, "k-NN error", t)?), Some(finite(nmi, "NMI", t)?))
            }
            None => (None, None),
        };
        rows.push(Row {
            t,
            trial,
            algo: name.clone(),
            loss_raw,
            loss_clipped,
            chosen_level: level,
            knn_err,
            nmi,
            gamma_cum,
            regret_cum,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub trial: u64,
    pub algo: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub table: Table,
    /// Runs aborted on a numeric error; their rows are dropped.
    pub failures: Vec<Failure>,
}

fn run_trial(cfg: &ExperimentConfig, trial: u64, data: Result<TrialStream, RunError>) -> (Vec<Row>, Vec<Failure>) {
    let algos = cfg.algorithms();
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            let failures = algos
                .iter()
                .map(|a| Failure {
                    trial,
                    algo: a.name(),
                    message: e.to_string(),
                })
                .collect();
            return (Vec::new(), failures);
        }
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for algo in algos {
        match run_algorithm(cfg, algo, &data, trial) {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(Failure {
                trial,
                algo: algo.name(),
                message: e.to_string(),
            }),
        }
    }
    (rows, failures)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, RunError> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?)
}

fn collect(cfg: &ExperimentConfig, per_trial: Vec<(Vec<Row>, Vec<Failure>)>) -> ExperimentResult {
    let mut table = Table::default();
    let mut failures = Vec::new();
    for (rows, f) in per_trial {
        table.rows.extend(rows);
        failures.extend(f);
    }
    let order: Vec<String> = cfg.algorithms().iter().map(AlgoSpec::name).collect();
    table.sort(&order);
    ExperimentResult { table, failures }
}

/// Runs every trial of `cfg`. `threads = None` lets rayon decide; the
/// output does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult, RunError> {
    cfg.validate()?;
    let per_trial = pool(threads)?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| run_trial(cfg, trial, build_trial(cfg, trial)))
            .collect::<Vec<_>>()
    });
    Ok(collect(cfg, per_trial))
}

/// Runs the configured algorithms once over an external stream.
pub fn run_on_stream(cfg: &ExperimentConfig, constraints: Vec<ConstraintTriplet>) -> Result<ExperimentResult, RunError> {
    cfg.validate()?;
    if let Some(c) = constraints.first() {
        if c.dim() != cfg.dim {
            return Err(sadl_core::Error::DimensionMismatch {
                expected: cfg.dim,
                got: c.dim(),
            }
            .into());
        }
    }
    let data = TrialStream::external(constraints);
    Ok(collect(cfg, vec![run_trial(cfg, 0, Ok(data))]))
}

/// Writes `results.csv`, `summary.csv`, and `failures.csv` when any run
/// failed.
pub fn write_outputs(result: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    result.table.emit_csv(&dir.join("results.csv"))?;
    result.table.summarize(cfg.nmi_threshold).emit_csv(&dir.join("summary.csv"))?;
    let failures = dir.join("failures.csv");
    if result.failures.is_empty() {
        if failures.exists() {
            std::fs::remove_file(&failures).map_err(|e| RunError::io(&failures, e))?;
        }
        return Ok(());
    }
    let mut w = csv::Writer::from_path(&failures)?;
    w.write_record(["trial", "algo", "message"])?;
    for f in &result.failures {
        w.write_record([f.trial.to_string(), f.algo.clone(), f.message.clone()])?;
    }
    w.flush().map_err(|e| RunError::io(&failures, e))?;
    Ok(())
}
