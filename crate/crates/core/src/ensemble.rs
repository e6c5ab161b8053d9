//! Strongly adaptive meta-learner over dyadic intervals.
//!
//! Each dyadic interval `[I₀2ʲk, I₀2ʲ(k+1) − 1]`, `k ≥ 1`, owns a COMID
//! learner with rate `η₀/√|I|`. The intervals containing `t` are the
//! active experts; one is drawn with probability proportional to its
//! multiplicative weight and its current metric is emitted. After the
//! constraint is revealed every expert takes a COMID step and its weight is
//! multiplied by `1 + η_I r_t(I)`, where `r_t(I)` is the ensemble's expected
//! clipped loss minus the expert's own.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::comid::{learning_rate_for, ComidLearner};
use crate::error::{Error, Result};
use crate::loss::{clipped_loss, LossConfig};
use crate::metric::{ConstraintTriplet, MetricState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
    pub i0: u64,
}

impl DyadicInterval {
    pub fn len(&self) -> u64 {
        self.i0 << self.level
    }

    pub fn start(&self) -> u64 {
        self.len() * self.index
    }

    /// Inclusive.
    pub fn end(&self) -> u64 {
        self.start() + self.len() - 1
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start() <= t && t <= self.end()
    }

    /// `min(1/2, 1/√|I|)`
    pub fn mw_rate(&self) -> f64 {
        (1.0 / (self.len() as f64).sqrt()).min(0.5)
    }
}

impl std::fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start(), self.end())
    }
}

/// All dyadic intervals containing `t`, finest first. Empty when `t < i0`.
pub fn active_intervals(t: u64, i0: u64) -> Vec<DyadicInterval> {
    let mut out = Vec::new();
    if i0 == 0 || t < i0 {
        return out;
    }
    let mut level = 0u32;
    while let Some(len) = i0.checked_shl(level).filter(|&len| len <= t && len >> level == i0) {
        out.push(DyadicInterval {
            level,
            index: t / len,
            i0,
        });
        level += 1;
    }
    out
}

#[derive(Debug, Clone)]
pub struct LearnerSlot {
    pub interval: DyadicInterval,
    pub learner: ComidLearner,
    pub weight: f64,
    pub mw_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SadlConfig {
    pub i0: u64,
    pub eta0: f64,
    pub loss: LossConfig,
    /// State of the very first learner.
    pub init: MetricState,
    pub ball_radius: Option<f64>,
    pub seed: u64,
}

impl SadlConfig {
    pub fn new(dim: usize, eta0: f64, loss: LossConfig, seed: u64) -> Self {
        SadlConfig {
            i0: 1,
            eta0,
            loss,
            init: MetricState::cold_start(dim),
            ball_radius: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.i0 == 0 {
            return Err(Error::invalid("i0", "base interval length must be >= 1"));
        }
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return Err(Error::invalid("eta0", format!("must be finite and > 0, got {}", self.eta0)));
        }
        self.loss.validate()
    }
}

/// What happened during one [`SadlEnsemble::sadl_step`].
#[derive(Debug, Clone)]
pub struct StepReport {
    /// The emitted metric (the chosen expert's state before the update).
    pub output: MetricState,
    /// `None` before the first interval opens (`t < I₀`).
    pub chosen: Option<DyadicInterval>,
    pub intervals: Vec<DyadicInterval>,
    pub probabilities: Vec<f64>,
    /// Weights after the update, aligned with `intervals`.
    pub weights: Vec<f64>,
    pub clipped_losses: Vec<f64>,
    pub regrets: Vec<f64>,
    /// Every expert's state after its COMID step.
    pub updated_states: Vec<MetricState>,
}

impl StepReport {
    /// Expected clipped loss of the randomized output.
    pub fn expected_clipped_loss(&self) -> f64 {
        self.probabilities
            .iter()
            .zip(&self.clipped_losses)
            .map(|(p, l)| p * l)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct SadlEnsemble {
    cfg: SadlConfig,
    slots: Vec<LearnerSlot>,
    t: u64,
    rng: ChaCha8Rng,
}

impl SadlEnsemble {
    pub fn new(cfg: SadlConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(SadlEnsemble {
            cfg,
            slots: Vec::new(),
            t: 1,
            rng,
        })
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn slots(&self) -> &[LearnerSlot] {
        &self.slots
    }

    pub fn config(&self) -> &SadlConfig {
        &self.cfg
    }

    /// Drops experts whose interval ended and opens the ones starting at
    /// `t`. A new level-`j` expert starts from the last estimate of the
    /// level-`j−1` expert and a new level-0 expert continues the previous
    /// level-0 one, so the finest chain acts as one fast learner that seeds
    /// every coarser scale.
    pub fn spawn_and_retire(&mut self) {
        let t = self.t;
        let previous: Vec<(u32, MetricState)> = self
            .slots
            .iter()
            .map(|s| (s.interval.level, s.learner.state.clone()))
            .collect();

        self.slots.retain(|s| s.interval.end() >= t);

        for interval in active_intervals(t, self.cfg.i0) {
            if interval.start() != t {
                continue;
            }
            let source = interval.level.saturating_sub(1);
            let init = previous
                .iter()
                .find(|(level, _)| *level == source)
                .map_or_else(|| self.cfg.init.clone(), |(_, s)| s.clone());

            let learner = ComidLearner {
                state: init,
                eta: learning_rate_for(interval.len(), self.cfg.eta0),
                cfg: self.cfg.loss,
                ball_radius: self.cfg.ball_radius,
            };
            let mw_rate = interval.mw_rate();
            self.slots.push(LearnerSlot {
                interval,
                learner,
                weight: mw_rate,
                mw_rate,
            });
        }
        self.slots.sort_by_key(|s| s.interval.level);
    }

    /// `w(I) / Σ w`
    pub fn selection_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.slots.iter().map(|s| s.weight).sum();
        self.slots.iter().map(|s| s.weight / total).collect()
    }

    /// Draws an expert with probability proportional to its weight.
    pub fn select_output(&mut self) -> Result<(MetricState, DyadicInterval)> {
        if self.slots.is_empty() {
            return Err(Error::EmptyEnsemble(self.t));
        }
        let total: f64 = self.slots.iter().map(|s| s.weight).sum();
        let mut target = self.rng.random::<f64>() * total;
        let mut chosen = self.slots.len() - 1;
        for (i, s) in self.slots.iter().enumerate() {
            if target < s.weight {
                chosen = i;
                break;
            }
            target -= s.weight;
        }
        let slot = &self.slots[chosen];
        Ok((slot.learner.state.clone(), slot.interval))
    }

    /// Clipped loss of every expert's current state on `c`.
    pub fn clipped_losses(&self, c: &ConstraintTriplet) -> Result<Vec<f64>> {
        self.slots
            .iter()
            .map(|s| clipped_loss(&s.learner.state, c, &self.cfg.loss))
            .collect()
    }

    /// `r_t(I) = Σ_J p(J) ℓ(J) − ℓ(I)` for each active expert.
    pub fn estimated_regrets(&self, c: &ConstraintTriplet) -> Result<Vec<f64>> {
        if self.slots.is_empty() {
            return Err(Error::EmptyEnsemble(self.t));
        }
        let losses = self.clipped_losses(c)?;
        Ok(regrets_from(&self.selection_probabilities(), &losses))
    }

    /// `w(I) ← w(I)·(1 + η_I r(I))`
    pub fn update_weights(&mut self, regrets: &[f64]) {
        for (slot, r) in self.slots.iter_mut().zip(regrets) {
            slot.weight *= 1.0 + slot.mw_rate * r;
        }
    }

    /// One round: open/close experts, draw the output, observe `c`, update
    /// every expert and its weight, advance the clock.
    pub fn sadl_step(&mut self, c: &ConstraintTriplet) -> Result<StepReport> {
        if c.t != self.t {
            return Err(Error::invalid(
                "t",
                format!("constraint time {} does not match ensemble time {}", c.t, self.t),
            ));
        }
        self.spawn_and_retire();

        if self.slots.is_empty() {
            self.t += 1;
            return Ok(StepReport {
                output: self.cfg.init.clone(),
                chosen: None,
                intervals: Vec::new(),
                probabilities: Vec::new(),
                weights: Vec::new(),
                clipped_losses: Vec::new(),
                regrets: Vec::new(),
                updated_states: Vec::new(),
            });
        }

        let (output, chosen) = self.select_output()?;
        let probabilities = self.selection_probabilities();
        let clipped_losses = self.clipped_losses(c)?;
        let regrets = regrets_from(&probabilities, &clipped_losses);

        for slot in self.slots.iter_mut() {
            slot.learner = slot.learner.comid_step(c)?;
        }
        self.update_weights(&regrets);
        self.t += 1;

        Ok(StepReport {
            output,
            chosen: Some(chosen),
            intervals: self.slots.iter().map(|s| s.interval).collect(),
            probabilities,
            weights: self.slots.iter().map(|s| s.weight).collect(),
            clipped_losses,
            regrets,
            updated_states: self.slots.iter().map(|s| s.learner.state.clone()).collect(),
        })
    }
}

/// Estimated regrets from selection probabilities and per-expert losses.
pub fn regrets_from(probabilities: &[f64], losses: &[f64]) -> Vec<f64> {
    let mean: f64 = probabilities.iter().zip(losses).map(|(p, l)| p * l).sum();
    losses.iter().map(|l| mean - l).collect()
}
