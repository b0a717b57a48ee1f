//! Objectives, the simulated resource clock, and run histories.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::curve::{CurveModel, FidelityPoints, Observation};
use crate::space::Configuration;

pub type TrialId = u64;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct ObjectiveError {
    pub message: String,
}

impl ObjectiveError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// A resource-consuming evaluator.
///
/// `evaluate(config, r)` returns the loss after `r` cumulative resource units
/// and must be consistent within one run. Charging is done by the caller:
/// resuming a configuration only pays for the steps it has not paid for yet.
pub trait Objective {
    fn evaluate(&self, config: &Configuration, resource: u32) -> Result<f64, ObjectiveError>;

    /// Cost of the single step that brings `config` to `resource`.
    fn step_cost(&self, _config: &Configuration, _resource: u32) -> f64 {
        1.0
    }
}

impl<F> Objective for F
where
    F: Fn(&Configuration, u32) -> Result<f64, ObjectiveError>,
{
    fn evaluate(&self, config: &Configuration, resource: u32) -> Result<f64, ObjectiveError> {
        self(config, resource)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    WarmUp,
    TerminatedEarly,
    CurveFitted,
    EfficientEval,
    Paused,
    Resumed,
    Completed,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Lifecycle record of one evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: TrialId,
    pub config: Configuration,
    pub stage: Stage,
    pub observations: Vec<Observation>,
    pub curve: Option<CurveModel>,
    pub points: Option<FidelityPoints>,
    pub label: Option<f64>,
}

impl Trial {
    pub fn new(id: TrialId, config: Configuration) -> Self {
        Self {
            id,
            config,
            stage: Stage::WarmUp,
            observations: Vec::new(),
            curve: None,
            points: None,
            label: None,
        }
    }

    pub fn last_resource(&self) -> u32 {
        self.observations.last().map_or(0, |o| o.resource)
    }

    pub fn last_value(&self) -> Option<f64> {
        self.observations.last().map(|o| o.value)
    }

    pub fn value_at(&self, resource: u32) -> Option<f64> {
        self.observations.iter().find(|o| o.resource == resource).map(|o| o.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub trial: TrialId,
    pub resource: u32,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub time: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: TrialId,
    pub resource: u32,
    pub message: String,
}

/// One successive-halving rung: who was evaluated at which resource and who
/// moved on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rung {
    pub bracket: usize,
    pub level: usize,
    pub resource: u32,
    pub trials: Vec<TrialId>,
    pub promoted: Vec<TrialId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub budget: f64,
    pub events: Vec<Event>,
    /// One point per event: the lowest loss observed so far.
    pub incumbent_trace: Vec<TracePoint>,
    pub trials: Vec<Trial>,
    pub failures: Vec<TrialFailure>,
    pub rungs: Vec<Rung>,
}

impl History {
    pub fn total_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    pub fn final_incumbent(&self) -> Option<f64> {
        self.incumbent_trace.last().map(|p| p.incumbent)
    }

    pub fn trial(&self, id: TrialId) -> Option<&Trial> {
        self.trials.iter().find(|t| t.id == id)
    }

    /// Checks the structural invariants every optimizer must maintain.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut prev_time = 0.0;
        for e in &self.events {
            if e.time < prev_time {
                return Err(format!("event time decreased at trial {}", e.trial));
            }
            prev_time = e.time;
        }
        if self.incumbent_trace.windows(2).any(|w| w[1].incumbent > w[0].incumbent) {
            return Err("incumbent trace increased".into());
        }
        if self.incumbent_trace.windows(2).any(|w| w[1].time < w[0].time) {
            return Err("incumbent trace time decreased".into());
        }
        for t in &self.trials {
            if t.observations.windows(2).any(|w| w[1].resource <= w[0].resource) {
                return Err(format!("trial {} observations not strictly increasing", t.id));
            }
        }
        Ok(())
    }
}

/// Outcome of asking the clock for one more evaluation.
#[derive(Debug)]
pub(crate) enum Step {
    Observed,
    OutOfBudget,
    Failed,
}

/// Simulated clock plus event log shared by every optimizer.
pub(crate) struct Recorder {
    time: f64,
    best: f64,
    charged: HashMap<TrialId, u32>,
    history: History,
}

impl Recorder {
    pub(crate) fn new(budget: f64) -> Self {
        Self {
            time: 0.0,
            best: f64::INFINITY,
            charged: HashMap::new(),
            history: History {
                budget,
                ..History::default()
            },
        }
    }

    pub(crate) fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn budget(&self) -> f64 {
        self.history.budget
    }

    /// Evaluates `trial` at `resource` unless the clock has reached `limit`.
    /// Steps already paid for by this trial are not charged again.
    pub(crate) fn step(&mut self, objective: &dyn Objective, trial: &mut Trial, resource: u32, limit: f64) -> Step {
        if self.time >= limit {
            return Step::OutOfBudget;
        }
        let value = match objective.evaluate(&trial.config, resource) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                return self.fail(trial, resource, ObjectiveError::new(format!("non-finite value {v}")));
            }
            Err(e) => return self.fail(trial, resource, e),
        };
        let paid = self.charged.entry(trial.id).or_insert(0);
        let cost: f64 = (*paid + 1..=resource).map(|r| objective.step_cost(&trial.config, r)).sum();
        *paid = (*paid).max(resource);
        self.time += cost;
        self.best = self.best.min(value);
        self.history.events.push(Event {
            time: self.time,
            trial: trial.id,
            resource,
            value,
        });
        self.history.incumbent_trace.push(TracePoint {
            time: self.time,
            incumbent: self.best,
        });
        trial.observations.push(Observation::new(resource, value));
        Step::Observed
    }

    fn fail(&mut self, trial: &Trial, resource: u32, error: ObjectiveError) -> Step {
        self.history.failures.push(TrialFailure {
            trial: trial.id,
            resource,
            message: error.message.clone(),
        });
        Step::Failed
    }

    pub(crate) fn push_rung(&mut self, rung: Rung) {
        self.history.rungs.push(rung);
    }

    pub(crate) fn finish(mut self, mut trials: Vec<Trial>) -> History {
        trials.sort_by_key(|t| t.id);
        self.history.trials = trials;
        self.history
    }
}
