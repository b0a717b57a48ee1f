//! The adaptive-fidelity optimization loop.
//!
//! Every configuration is warmed up on a short prefix of resources, a learning
//! curve is fitted to that prefix, and the configuration is then evaluated up
//! to its efficient point. The loss observed there is the configuration's label
//! for the surrogate. Once the main budget is spent, the best few paused
//! configurations are resumed to their saturation points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{fit_curve, CurveModel, FidelityPoints, Observation};
use crate::history::{History, Objective, Recorder, Stage, Step, Trial, TrialId};
use crate::space::{Configuration, SearchSpace};
use crate::surrogate::{Surrogate, TrainingSet, DEFAULT_CANDIDATES};

pub type SeededRng = ChaCha8Rng;

/// Minimum number of warm-up steps, enough for a stable three-parameter fit.
pub const MIN_WARMUP_STEPS: u32 = 5;

// bail out of the main loop if proposals keep failing without consuming budget
const MAX_IDLE_TRIALS: usize = 1000;

/// Proposals in a row that may repeat an evaluated configuration before the
/// space counts as exhausted.
pub const MAX_REDRAWS: usize = 1000;

/// Asks `draw` for a configuration not in `seen`, giving up (space exhausted)
/// after [`MAX_REDRAWS`] repeats.
pub(crate) fn fresh_proposal(
    seen: &[Configuration],
    mut draw: impl FnMut() -> Configuration,
) -> Option<Configuration> {
    (0..MAX_REDRAWS).map(|_| draw()).find(|c| !seen.contains(c))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{field}` {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("budget {budget} is smaller than the minimum of {required} resource units")]
    BudgetTooSmall { budget: f64, required: f64 },
    #[error("invalid resource range: r_min={r_min}, r_max={r_max}")]
    InvalidRange { r_min: u32, r_max: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub warmup_fraction: f64,
    pub deterioration_patience: usize,
    pub n_init: usize,
    pub post_fraction: f64,
    pub top_m: usize,
    pub n_candidates: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            delta1: 1e-3,
            delta2: 1e-4,
            warmup_fraction: 0.1,
            deterioration_patience: 3,
            n_init: 5,
            post_fraction: 0.1,
            top_m: 3,
            n_candidates: DEFAULT_CANDIDATES,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta1 > 0.0 && self.delta1.is_finite()) {
            return Err(invalid("delta1", "must be positive"));
        }
        if !(self.delta2 > 0.0) {
            return Err(invalid("delta2", "must be positive"));
        }
        if self.delta2 > self.delta1 {
            return Err(invalid("delta2", "must not exceed delta1"));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction <= 1.0) {
            return Err(invalid("warmup_fraction", "must lie in (0, 1]"));
        }
        if self.deterioration_patience == 0 {
            return Err(invalid("deterioration_patience", "must be positive"));
        }
        if self.n_init == 0 {
            return Err(invalid("n_init", "must be positive"));
        }
        if !(self.post_fraction > 0.0 && self.post_fraction < 1.0) {
            return Err(invalid("post_fraction", "must lie in (0, 1)"));
        }
        if self.top_m == 0 {
            return Err(invalid("top_m", "must be positive"));
        }
        if self.n_candidates == 0 {
            return Err(invalid("n_candidates", "must be positive"));
        }
        Ok(())
    }

    /// Last warm-up resource: `max(5, ceil(warmup_fraction * r_max))`, shifted
    /// so that warm-up always covers five steps from `r_min`, and capped at
    /// `r_max`.
    pub fn warmup_resource(&self, r_min: u32, r_max: u32) -> u32 {
        let by_fraction = (self.warmup_fraction * f64::from(r_max)).ceil() as u32;
        by_fraction
            .max(MIN_WARMUP_STEPS)
            .max(r_min + MIN_WARMUP_STEPS - 1)
            .min(r_max)
    }
}

/// True iff each of the last `k` consecutive changes is a strict increase of
/// the loss.
pub fn warmup_should_terminate(observations: &[Observation], k: usize) -> bool {
    if k == 0 || observations.len() <= k {
        return false;
    }
    observations[observations.len() - k - 1..]
        .windows(2)
        .all(|w| w[1].value > w[0].value)
}

/// What a proposer gets to see before choosing the next configuration.
pub struct ProposalContext<'a> {
    pub space: &'a SearchSpace,
    /// Number of trials proposed so far.
    pub trial_index: usize,
    /// `(configuration, label)` for every trial that reached its efficient point.
    pub labeled: &'a [(Configuration, f64)],
    pub seed: u64,
}

/// A single-fidelity configuration proposer.
///
/// It sees labels as if they were final performances; the scheduler decides
/// which fidelity produces them.
pub trait Suggester {
    fn suggest(&mut self, ctx: &ProposalContext<'_>, rng: &mut SeededRng) -> Configuration;
}

/// Random generator for refitting the surrogate on `n_labels` points.
///
/// Derived from the run seed so that refits never disturb the proposal stream.
pub(crate) fn surrogate_rng(seed: u64, n_labels: usize) -> SeededRng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((n_labels as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ 0x94D0_49BB_1331_11EB;
    SeededRng::seed_from_u64(mixed)
}

pub(crate) fn fit_on_labels(space: &SearchSpace, labeled: &[(Configuration, f64)], seed: u64) -> Option<Surrogate> {
    if labeled.len() < 2 {
        return None;
    }
    let inputs = labeled
        .iter()
        .map(|(c, _)| space.encode(c))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    let targets = labeled.iter().map(|(_, y)| *y).collect();
    let data = TrainingSet::new(inputs, targets).ok()?;
    Surrogate::fit(data, &mut surrogate_rng(seed, labeled.len())).ok()
}

/// GP + expected improvement, with `n_init` uniform draws first.
#[derive(Debug, Clone)]
pub struct GpEiSuggester {
    pub n_init: usize,
    pub n_candidates: usize,
}

impl GpEiSuggester {
    pub fn from_config(cfg: &OptimizerConfig) -> Self {
        Self {
            n_init: cfg.n_init,
            n_candidates: cfg.n_candidates,
        }
    }
}

impl Suggester for GpEiSuggester {
    fn suggest(&mut self, ctx: &ProposalContext<'_>, rng: &mut SeededRng) -> Configuration {
        if ctx.trial_index < self.n_init {
            return ctx.space.sample(rng);
        }
        match fit_on_labels(ctx.space, ctx.labeled, ctx.seed) {
            Some(s) => s
                .suggest(ctx.space, rng, self.n_candidates)
                .unwrap_or_else(|_| ctx.space.sample(rng)),
            None => ctx.space.sample(rng),
        }
    }
}

/// Uniform random proposals.
#[derive(Debug, Clone, Default)]
pub struct RandomSuggester;

impl Suggester for RandomSuggester {
    fn suggest(&mut self, ctx: &ProposalContext<'_>, rng: &mut SeededRng) -> Configuration {
        ctx.space.sample(rng)
    }
}

/// Wraps any closure `(ctx, rng) -> Configuration` as a suggester.
pub struct FnSuggester<F>(pub F);

impl<F> Suggester for FnSuggester<F>
where
    F: FnMut(&ProposalContext<'_>, &mut SeededRng) -> Configuration,
{
    fn suggest(&mut self, ctx: &ProposalContext<'_>, rng: &mut SeededRng) -> Configuration {
        (self.0)(ctx, rng)
    }
}

/// Overrides for exercising the pipeline in degenerate settings.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineHooks {
    /// Skip curve fitting and use these points for every trial.
    pub forced_points: Option<FidelityPoints>,
    pub early_termination: bool,
    pub post_processing: bool,
}

impl Default for PipelineHooks {
    fn default() -> Self {
        Self {
            forced_points: None,
            early_termination: true,
            post_processing: true,
        }
    }
}

enum Proposer<'s> {
    /// Built-in GP/EI loop with a surrogate refitted after every new label.
    Native { cache: Option<Surrogate> },
    External(&'s mut dyn Suggester),
}

/// Adaptive-fidelity Bayesian optimization.
#[derive(Debug, Clone, Default)]
pub struct FastBo {
    cfg: OptimizerConfig,
    hooks: PipelineHooks,
}

impl FastBo {
    pub fn new(cfg: OptimizerConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            hooks: PipelineHooks::default(),
        })
    }

    #[doc(hidden)]
    pub fn with_hooks(mut self, hooks: PipelineHooks) -> Self {
        self.hooks = hooks;
        self
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn run(
        &self,
        objective: &dyn Objective,
        space: &SearchSpace,
        r_min: u32,
        r_max: u32,
        budget: f64,
    ) -> Result<History, RunError> {
        Pipeline {
            cfg: &self.cfg,
            hooks: self.hooks,
            proposer: Proposer::Native { cache: None },
        }
        .run(objective, space, r_min, r_max, budget)
    }
}

/// A single-fidelity suggester lifted into the adaptive-fidelity pipeline.
pub struct Adaptive<S> {
    suggester: S,
    cfg: OptimizerConfig,
    hooks: PipelineHooks,
}

/// Extends a single-fidelity proposer to the multi-fidelity setting: it is fed
/// efficient-point labels in place of final performances.
pub fn adaptify<S: Suggester>(suggester: S, cfg: OptimizerConfig) -> Result<Adaptive<S>, ConfigError> {
    cfg.validate()?;
    Ok(Adaptive {
        suggester,
        cfg,
        hooks: PipelineHooks::default(),
    })
}

impl<S: Suggester> Adaptive<S> {
    #[doc(hidden)]
    pub fn with_hooks(mut self, hooks: PipelineHooks) -> Self {
        self.hooks = hooks;
        self
    }

    pub fn suggester(&self) -> &S {
        &self.suggester
    }

    pub fn run(
        &mut self,
        objective: &dyn Objective,
        space: &SearchSpace,
        r_min: u32,
        r_max: u32,
        budget: f64,
    ) -> Result<History, RunError> {
        Pipeline {
            cfg: &self.cfg,
            hooks: self.hooks,
            proposer: Proposer::External(&mut self.suggester),
        }
        .run(objective, space, r_min, r_max, budget)
    }
}

struct Pipeline<'a> {
    cfg: &'a OptimizerConfig,
    hooks: PipelineHooks,
    proposer: Proposer<'a>,
}

impl Pipeline<'_> {
    fn propose(
        &mut self,
        space: &SearchSpace,
        trial_index: usize,
        labeled: &[(Configuration, f64)],
        rng: &mut SeededRng,
    ) -> Configuration {
        match &mut self.proposer {
            Proposer::Native { cache } => {
                if trial_index < self.cfg.n_init {
                    return space.sample(rng);
                }
                match cache {
                    Some(s) => s
                        .suggest(space, rng, self.cfg.n_candidates)
                        .unwrap_or_else(|_| space.sample(rng)),
                    None => space.sample(rng),
                }
            }
            Proposer::External(s) => {
                let ctx = ProposalContext {
                    space,
                    trial_index,
                    labeled,
                    seed: self.cfg.seed,
                };
                s.suggest(&ctx, rng)
            }
        }
    }

    fn on_new_label(&mut self, space: &SearchSpace, labeled: &[(Configuration, f64)]) {
        if let Proposer::Native { cache } = &mut self.proposer {
            *cache = fit_on_labels(space, labeled, self.cfg.seed);
        }
    }

    fn run(
        mut self,
        objective: &dyn Objective,
        space: &SearchSpace,
        r_min: u32,
        r_max: u32,
        budget: f64,
    ) -> Result<History, RunError> {
        self.cfg.validate()?;
        if r_min == 0 || r_min > r_max {
            return Err(RunError::InvalidRange { r_min, r_max });
        }
        let r_w = self.cfg.warmup_resource(r_min, r_max);
        if !(budget >= f64::from(r_w)) {
            return Err(RunError::BudgetTooSmall {
                budget,
                required: f64::from(r_w),
            });
        }
        let main_limit = if self.hooks.post_processing {
            (1.0 - self.cfg.post_fraction) * budget
        } else {
            budget
        };

        let mut rng = SeededRng::seed_from_u64(self.cfg.seed);
        let mut recorder = Recorder::new(budget);
        let mut trials: Vec<Trial> = Vec::new();
        let mut labeled: Vec<(Configuration, f64)> = Vec::new();
        let mut idle = 0;

        'main: while recorder.time() < main_limit && idle < MAX_IDLE_TRIALS {
            let seen: Vec<Configuration> = trials.iter().map(|t| t.config.clone()).collect();
            let index = trials.len();
            let Some(config) = fresh_proposal(&seen, || self.propose(space, index, &labeled, &mut rng)) else {
                break;
            };
            let mut trial = Trial::new(trials.len() as TrialId, config);
            let started = recorder.time();

            // warm-up
            let mut warmed_up = true;
            for r in r_min..=r_w {
                match recorder.step(objective, &mut trial, r, main_limit) {
                    Step::Observed => {}
                    Step::OutOfBudget => {
                        trials.push(trial);
                        break 'main;
                    }
                    Step::Failed => {
                        trial.stage = Stage::TerminatedEarly;
                        warmed_up = false;
                        break;
                    }
                }
                if self.hooks.early_termination
                    && warmup_should_terminate(&trial.observations, self.cfg.deterioration_patience)
                {
                    trial.stage = Stage::TerminatedEarly;
                    warmed_up = false;
                    break;
                }
            }
            if !warmed_up {
                idle = if recorder.time() > started { 0 } else { idle + 1 };
                trials.push(trial);
                continue;
            }
            idle = 0;

            let points = match self.hooks.forced_points {
                Some(p) => p,
                None => {
                    let curve = fit_curve(&trial.observations).unwrap_or_else(|_| {
                        CurveModel::constant(trial.last_value().expect("warm-up produced observations"))
                    });
                    trial.curve = Some(curve);
                    FidelityPoints::from_model(&curve, self.cfg.delta1, self.cfg.delta2, r_w, r_max)
                }
            };
            trial.points = Some(points);
            trial.stage = Stage::CurveFitted;

            // continue to the efficient point
            for r in r_w + 1..=points.efficient {
                match recorder.step(objective, &mut trial, r, main_limit) {
                    Step::Observed => {}
                    Step::OutOfBudget => {
                        trials.push(trial);
                        break 'main;
                    }
                    Step::Failed => {
                        trial.stage = Stage::TerminatedEarly;
                        break;
                    }
                }
            }
            if trial.stage == Stage::TerminatedEarly {
                trials.push(trial);
                continue;
            }
            let label = trial.value_at(points.efficient).expect("trial reached its efficient point");
            trial.label = Some(label);
            trial.stage = Stage::Paused;
            labeled.push((trial.config.clone(), label));
            self.on_new_label(space, &labeled);
            trials.push(trial);
        }

        if self.hooks.post_processing {
            let mut ranked: Vec<usize> = trials
                .iter()
                .enumerate()
                .filter(|(_, t)| t.stage == Stage::Paused)
                .map(|(i, _)| i)
                .collect();
            ranked.sort_by(|&a, &b| {
                let (ta, tb) = (&trials[a], &trials[b]);
                ta.label
                    .partial_cmp(&tb.label)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(ta.id.cmp(&tb.id))
            });
            'post: for &i in ranked.iter().take(self.cfg.top_m) {
                let trial = &mut trials[i];
                let points = trial.points.expect("paused trials have fidelity points");
                trial.stage = Stage::Resumed;
                for r in points.efficient + 1..=points.saturation {
                    match recorder.step(objective, trial, r, budget) {
                        Step::Observed => {}
                        Step::OutOfBudget => break 'post,
                        Step::Failed => continue 'post,
                    }
                }
                trial.stage = Stage::Completed;
            }
        }

        Ok(recorder.finish(trials))
    }
}
