//! Reference optimizers: random search, full-fidelity BO, successive halving
//! and Hyperband. All of them share the clock and history contracts of the
//! adaptive scheduler and evaluate one resource step at a time.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::history::{History, Objective, Recorder, Rung, Stage, Step, Trial, TrialId};
use crate::scheduler::{fit_on_labels, fresh_proposal, ConfigError, RunError, SeededRng};
use crate::space::{Configuration, SearchSpace};
use crate::surrogate::Surrogate;

/// Successive-halving parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShaConfig {
    pub eta: u32,
    pub r_min: u32,
    pub r_max: u32,
}

impl ShaConfig {
    pub fn new(eta: u32, r_min: u32, r_max: u32) -> Result<Self, ConfigError> {
        let cfg = Self { eta, r_min, r_max };
        cfg.validate()?;
        Ok(cfg)
    }

    // r_max == r_min is allowed: it is Hyperband's single-bracket case.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.eta < 2 {
            return Err(ConfigError::Invalid {
                field: "eta",
                reason: "must be at least 2".into(),
            });
        }
        if self.r_min == 0 || self.r_max < self.r_min {
            return Err(ConfigError::Invalid {
                field: "r_max",
                reason: format!("need 1 <= r_min <= r_max (got {} and {})", self.r_min, self.r_max),
            });
        }
        Ok(())
    }

    /// Largest `s` with `r_min * eta^s <= r_max`.
    pub fn s_max(&self) -> u32 {
        let mut s = 0;
        let mut r = u64::from(self.r_min);
        while r * u64::from(self.eta) <= u64::from(self.r_max) {
            r *= u64::from(self.eta);
            s += 1;
        }
        s
    }

    /// `(n, r0)` for Hyperband bracket `s`:
    /// `n = ceil((s_max + 1) / (s + 1) * eta^s)` and `r0 = r_max * eta^-s`.
    pub fn bracket(&self, s: u32) -> (usize, u32) {
        let s_max = u64::from(self.s_max());
        let eta_s = u64::from(self.eta).pow(s);
        let n = ((s_max + 1) * eta_s).div_ceil(u64::from(s) + 1);
        let r0 = (u64::from(self.r_max) / eta_s).max(u64::from(self.r_min));
        (n as usize, r0 as u32)
    }
}

fn full_fidelity_precheck(r_max: u32, budget: f64) -> Result<(), RunError> {
    if r_max == 0 {
        return Err(RunError::InvalidRange { r_min: 1, r_max });
    }
    if !(budget >= f64::from(r_max)) {
        return Err(RunError::BudgetTooSmall {
            budget,
            required: f64::from(r_max),
        });
    }
    Ok(())
}

/// Runs `trial` from its last observed resource up to `target`. Returns
/// `false` once the budget is exhausted.
fn advance(recorder: &mut Recorder, objective: &dyn Objective, trial: &mut Trial, target: u32, limit: f64) -> bool {
    for r in trial.last_resource() + 1..=target {
        match recorder.step(objective, trial, r, limit) {
            Step::Observed => {}
            Step::OutOfBudget => return false,
            Step::Failed => {
                trial.stage = Stage::TerminatedEarly;
                return true;
            }
        }
    }
    true
}

/// Uniform sampling without repeats, every configuration trained to `r_max`.
pub fn random_search(
    space: &SearchSpace,
    objective: &dyn Objective,
    r_max: u32,
    budget: f64,
    seed: u64,
) -> Result<History, RunError> {
    full_fidelity_precheck(r_max, budget)?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut recorder = Recorder::new(budget);
    let mut trials = Vec::new();
    while recorder.time() < budget {
        let Some(config) = fresh_proposal(&seen(&trials), || space.sample(&mut rng)) else {
            break;
        };
        let mut trial = Trial::new(trials.len() as TrialId, config);
        let before = recorder.time();
        let more = advance(&mut recorder, objective, &mut trial, r_max, budget);
        finish_full(&mut trial, r_max);
        trials.push(trial);
        if !more || recorder.time() == before {
            break;
        }
    }
    Ok(recorder.finish(trials))
}

fn seen(trials: &[Trial]) -> Vec<Configuration> {
    trials.iter().map(|t| t.config.clone()).collect()
}

fn finish_full(trial: &mut Trial, r_max: u32) {
    if trial.stage != Stage::TerminatedEarly && trial.last_resource() == r_max {
        trial.label = trial.last_value();
        trial.stage = Stage::Completed;
    }
}

/// Standard BO: GP/EI proposals, every label taken at `r_max`.
pub fn bo_full(
    space: &SearchSpace,
    objective: &dyn Objective,
    r_max: u32,
    budget: f64,
    seed: u64,
    n_init: usize,
    n_candidates: usize,
) -> Result<History, RunError> {
    full_fidelity_precheck(r_max, budget)?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut recorder = Recorder::new(budget);
    let mut trials = Vec::new();
    let mut labeled: Vec<(Configuration, f64)> = Vec::new();
    let mut surrogate: Option<Surrogate> = None;
    while recorder.time() < budget {
        let propose = || match &surrogate {
            Some(s) if trials.len() >= n_init => s
                .suggest(space, &mut rng, n_candidates)
                .unwrap_or_else(|_| space.sample(&mut rng)),
            _ => space.sample(&mut rng),
        };
        let Some(config) = fresh_proposal(&seen(&trials), propose) else {
            break;
        };
        let mut trial = Trial::new(trials.len() as TrialId, config);
        let before = recorder.time();
        let more = advance(&mut recorder, objective, &mut trial, r_max, budget);
        finish_full(&mut trial, r_max);
        if let Some(label) = trial.label {
            labeled.push((trial.config.clone(), label));
            surrogate = fit_on_labels(space, &labeled, seed);
        }
        trials.push(trial);
        if !more || recorder.time() == before {
            break;
        }
    }
    Ok(recorder.finish(trials))
}

/// Synchronous successive halving over `n` fresh configurations, run to
/// completion.
pub fn successive_halving(
    space: &SearchSpace,
    objective: &dyn Objective,
    sha: ShaConfig,
    n: usize,
    seed: u64,
) -> Result<History, RunError> {
    sha.validate()?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut recorder = Recorder::new(f64::INFINITY);
    let mut trials = Vec::new();
    run_bracket(
        &mut recorder,
        objective,
        space,
        &mut rng,
        &mut trials,
        BracketPlan {
            index: 0,
            n: n.max(1),
            r0: sha.r_min,
            r_max: sha.r_max,
            eta: sha.eta,
        },
    );
    Ok(recorder.finish(trials))
}

/// Hyperband: brackets `s_max, ..., 0` repeated until the budget runs out.
pub fn hyperband(
    space: &SearchSpace,
    objective: &dyn Objective,
    sha: ShaConfig,
    budget: f64,
    seed: u64,
) -> Result<History, RunError> {
    sha.validate()?;
    let s_max = sha.s_max();
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut recorder = Recorder::new(budget);
    let mut trials = Vec::new();
    let mut index = 0;
    'cycle: loop {
        for s in (0..=s_max).rev() {
            if recorder.time() >= budget {
                break 'cycle;
            }
            let (n, r0) = sha.bracket(s);
            let before = recorder.time();
            let completed = run_bracket(
                &mut recorder,
                objective,
                space,
                &mut rng,
                &mut trials,
                BracketPlan {
                    index,
                    n,
                    r0,
                    r_max: sha.r_max,
                    eta: sha.eta,
                },
            );
            index += 1;
            if !completed || recorder.time() == before {
                break 'cycle;
            }
        }
    }
    // Configurations sampled for a bracket the budget cut short never ran.
    trials.retain(|t| !t.observations.is_empty() || t.stage == Stage::TerminatedEarly);
    Ok(recorder.finish(trials))
}

struct BracketPlan {
    index: usize,
    n: usize,
    r0: u32,
    r_max: u32,
    eta: u32,
}

/// Runs one successive-halving bracket. Rung `l` holds `floor(n / eta^l)`
/// configurations at resource `r0 * eta^l`; the last rung (a single survivor,
/// or no room for another rung) is trained to `r_max`. Returns `false` if the
/// budget ran out mid-bracket.
fn run_bracket(
    recorder: &mut Recorder,
    objective: &dyn Objective,
    space: &SearchSpace,
    rng: &mut SeededRng,
    trials: &mut Vec<Trial>,
    plan: BracketPlan,
) -> bool {
    let budget = recorder_budget(recorder);
    let first = trials.len();
    for _ in 0..plan.n {
        let id = trials.len() as TrialId;
        trials.push(Trial::new(id, space.sample(rng)));
    }
    let mut population: Vec<usize> = (first..trials.len()).collect();
    let mut resource = u64::from(plan.r0);
    let eta = u64::from(plan.eta);
    let mut level = 0;
    loop {
        let last = population.len() <= 1 || resource * eta > u64::from(plan.r_max);
        let r = if last { plan.r_max } else { resource as u32 };
        let mut rung = Rung {
            bracket: plan.index,
            level,
            resource: r,
            trials: population.iter().map(|&i| trials[i].id).collect(),
            promoted: Vec::new(),
        };
        for &i in &population {
            let trial = &mut trials[i];
            if trial.stage == Stage::TerminatedEarly {
                continue;
            }
            if trial.stage == Stage::Paused {
                trial.stage = Stage::Resumed;
            }
            if !advance(recorder, objective, trial, r, budget) {
                recorder.push_rung(rung);
                return false;
            }
            if trial.stage != Stage::TerminatedEarly {
                trial.label = trial.value_at(r);
                trial.stage = if last { Stage::Completed } else { Stage::Paused };
            }
        }
        if last {
            recorder.push_rung(rung);
            return true;
        }
        let mut ranked: Vec<usize> = population
            .iter()
            .copied()
            .filter(|&i| trials[i].stage != Stage::TerminatedEarly)
            .collect();
        ranked.sort_by(|&a, &b| {
            let va = trials[a].value_at(r).unwrap_or(f64::INFINITY);
            let vb = trials[b].value_at(r).unwrap_or(f64::INFINITY);
            va.total_cmp(&vb).then(trials[a].id.cmp(&trials[b].id))
        });
        let keep = (population.len() / plan.eta as usize).max(1).min(ranked.len());
        ranked.truncate(keep);
        rung.promoted = ranked.iter().map(|&i| trials[i].id).collect();
        recorder.push_rung(rung);
        if ranked.is_empty() {
            return true;
        }
        population = ranked;
        resource *= eta;
        level += 1;
    }
}

fn recorder_budget(recorder: &Recorder) -> f64 {
    recorder.budget()
}
