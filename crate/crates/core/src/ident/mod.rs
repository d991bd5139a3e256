//! Identification engine: rewrite rules, derivation recipes, search, and
//! numeric verification of derivations.

mod json;
mod recipes;
pub mod rules;
mod search;
mod verify;

pub use json::{derivation_from_json, derivation_to_json};
pub use rules::{apply, CiAction, DerivationStep, Justification, Rule, RuleError};
pub use verify::{verify, StepReport, VerifyOptions, VerifyReport};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::expr::{ProbExpr, Term, TermPath};
use crate::graph::CiQuery;
use crate::model::{to_swig, Estimand, ModelError, Role, Swig, SwigError};
use crate::oracle::OracleError;

#[derive(Debug, Error)]
pub enum IdentError {
    #[error("strategy not applicable: {0}")]
    StrategyInapplicable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Swig(#[from] SwigError),
    #[error("rule application failed: {0}")]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("derivation file: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Identified,
    NotIdentified {
        reason: String,
        blocking: Option<CiQuery>,
    },
}

impl Status {
    pub fn is_identified(&self) -> bool {
        matches!(self, Status::Identified)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    /// Strategy that produced the derivation, in flag syntax.
    pub strategy: String,
    /// Intervention targets of the graph the steps refer to, in order.
    pub targets: Vec<String>,
    pub estimand: Term,
    pub steps: Vec<DerivationStep>,
    pub final_expr: ProbExpr,
    pub status: Status,
}

impl Derivation {
    /// Checks that each step starts where the previous one ended.
    pub fn is_chained(&self) -> bool {
        let mut cur = ProbExpr::Term(self.estimand.clone());
        for s in &self.steps {
            if s.input != cur {
                return false;
            }
            cur = s.output.clone();
        }
        cur == self.final_expr
    }

    /// The SWIG the steps refer to: `swig`'s base split on [`Self::targets`].
    pub fn swig_for(&self, swig: &Swig) -> Result<Swig, IdentError> {
        let current: Vec<&str> = swig
            .pairs()
            .iter()
            .map(|p| swig.variable(p.target).name.as_str())
            .collect();
        if current == self.targets {
            return Ok(swig.clone());
        }
        let names: Vec<&str> = self.targets.iter().map(String::as_str).collect();
        Ok(to_swig(&swig.base().with_targets(&names)?)?)
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.estimand)?;
        for s in &self.steps {
            write!(f, "  = {}", s.output)?;
            let why = s.justification.to_string();
            if why.is_empty() {
                writeln!(f, "    [{}]", s.rule)?;
            } else {
                writeln!(f, "    [{}: {}]", s.rule, why)?;
            }
        }
        match &self.status {
            Status::Identified => writeln!(f, "identified: {}", self.final_expr.canonicalize().unwrap_or_else(|_| self.final_expr.clone())),
            Status::NotIdentified { reason, blocking } => {
                write!(f, "not identified: {reason}")?;
                if let Some(q) = blocking {
                    write!(f, " (blocked by {q})")?;
                }
                writeln!(f)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    TopDown,
    BottomUp,
}

/// How to look for an identifying formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Adjustment set, or a search over observed sets when absent.
    Backdoor(Option<Vec<String>>),
    /// Mediator set, or a search when absent.
    Frontdoor(Option<Vec<String>>),
    /// Extra covariates to introduce before the sequential g-formula steps.
    SequentialBackdoor(Vec<String>),
    /// Mediators; defaults to the observed mediator-role variables.
    SequentialFrontdoor(Option<Vec<String>>),
    MediatorIntervention(Option<Vec<String>>),
    Search { direction: Direction, depth: usize },
}

pub const DEFAULT_DEPTH: usize = 4;

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let list = |a: Option<&str>| -> Option<Vec<String>> {
            a.map(|a| {
                a.split(',')
                    .map(|v| v.trim().to_string())
                    .filter(|v| !v.is_empty())
                    .collect()
            })
        };
        let depth = |a: Option<&str>| -> Result<usize, String> {
            match a {
                None => Ok(DEFAULT_DEPTH),
                Some(d) => match d.trim().parse::<usize>() {
                    Ok(d) if d >= 1 => Ok(d),
                    _ => Err(format!("depth must be a positive integer, got `{d}`")),
                },
            }
        };
        Ok(match name {
            "backdoor" => Strategy::Backdoor(list(args)),
            "frontdoor" => Strategy::Frontdoor(list(args)),
            "sequential_backdoor" => Strategy::SequentialBackdoor(list(args).unwrap_or_default()),
            "sequential_frontdoor" => Strategy::SequentialFrontdoor(list(args)),
            "mediator_intervention" => Strategy::MediatorIntervention(list(args)),
            "top_down" => Strategy::Search {
                direction: Direction::TopDown,
                depth: depth(args)?,
            },
            "bottom_up" => Strategy::Search {
                direction: Direction::BottomUp,
                depth: depth(args)?,
            },
            other => return Err(format!("unknown strategy `{other}`")),
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with = |f: &mut fmt::Formatter<'_>, name: &str, a: &Option<Vec<String>>| match a {
            Some(v) => write!(f, "{name}:{}", v.join(",")),
            None => write!(f, "{name}"),
        };
        match self {
            Strategy::Backdoor(a) => with(f, "backdoor", a),
            Strategy::Frontdoor(a) => with(f, "frontdoor", a),
            Strategy::SequentialBackdoor(v) if v.is_empty() => write!(f, "sequential_backdoor"),
            Strategy::SequentialBackdoor(v) => write!(f, "sequential_backdoor:{}", v.join(",")),
            Strategy::SequentialFrontdoor(a) => with(f, "sequential_frontdoor", a),
            Strategy::MediatorIntervention(a) => with(f, "mediator_intervention", a),
            Strategy::Search { direction, depth } => {
                let d = match direction {
                    Direction::TopDown => "top_down",
                    Direction::BottomUp => "bottom_up",
                };
                write!(f, "{d}:{depth}")
            }
        }
    }
}

/// Why a recipe stopped short of an observed-data formula.
#[derive(Debug)]
pub(crate) enum Stop {
    Blocked { reason: String, query: Option<CiQuery> },
    Error(IdentError),
}

impl From<RuleError> for Stop {
    fn from(e: RuleError) -> Self {
        match e.blocking() {
            Some(q) => Stop::Blocked {
                reason: e.to_string(),
                query: Some(q.clone()),
            },
            None => Stop::Error(IdentError::Rule(e)),
        }
    }
}

impl From<IdentError> for Stop {
    fn from(e: IdentError) -> Self {
        Stop::Error(e)
    }
}

/// An expression under rewriting, with the steps taken so far.
#[derive(Clone, Debug)]
pub(crate) struct Builder<'s> {
    pub swig: &'s Swig,
    pub expr: ProbExpr,
    pub steps: Vec<DerivationStep>,
}

impl<'s> Builder<'s> {
    pub fn new(swig: &'s Swig, start: &Term) -> Self {
        Builder {
            swig,
            expr: ProbExpr::Term(start.clone()),
            steps: Vec::new(),
        }
    }

    pub fn apply(&mut self, path: &TermPath, rule: Rule) -> Result<(), RuleError> {
        let step = apply(self.swig, &self.expr, path, &rule)?;
        self.expr = step.output.clone();
        self.steps.push(step);
        Ok(())
    }

    /// Path of the term that has `var` as a dependent.
    pub fn path_of(&self, var: &str) -> Result<TermPath, RuleError> {
        self.expr
            .find_term(|t| t.dependent(var).is_some())
            .ok_or_else(|| RuleError::Precondition(format!("no term with dependent `{var}`")))
    }

    pub fn term_of(&self, var: &str) -> Result<Term, RuleError> {
        let p = self.path_of(var)?;
        Ok(self.expr.term_at(&p).expect("path from find_term").clone())
    }

    pub fn apply_to(&mut self, var: &str, rule: Rule) -> Result<(), RuleError> {
        let p = self.path_of(var)?;
        self.apply(&p, rule)
    }
}

/// Whether `e` is an observed-data formula: only `q0` terms over observed,
/// non-intervention variables.
pub fn observed_only(swig: &Swig, e: &ProbExpr) -> Result<(), String> {
    for (_, t) in e.terms() {
        if !t.regime.is_observed() {
            return Err(format!("term {t} is not in the observed regime"));
        }
        for s in t.slots() {
            let id = swig.require(&s.var.name).map_err(|e| e.to_string())?;
            let v = swig.variable(id);
            if !v.observed {
                return Err(format!("term {t} uses unobserved variable {}", v.name));
            }
            if swig.is_intervention(id) {
                return Err(format!("term {t} still conditions on {}", v.name));
            }
        }
    }
    Ok(())
}

pub(crate) fn finish(
    swig: &Swig,
    strategy: &Strategy,
    estimand: &Term,
    result: Result<Builder<'_>, (Builder<'_>, Stop)>,
) -> Result<Derivation, IdentError> {
    let targets = swig
        .pairs()
        .iter()
        .map(|p| swig.variable(p.target).name.clone())
        .collect();
    let (b, status) = match result {
        Ok(b) => {
            let status = match observed_only(swig, &b.expr) {
                Ok(()) => Status::Identified,
                Err(reason) => Status::NotIdentified {
                    reason,
                    blocking: None,
                },
            };
            (b, status)
        }
        Err((_, Stop::Error(e))) => return Err(e),
        Err((b, Stop::Blocked { reason, query })) => (
            b,
            Status::NotIdentified {
                reason,
                blocking: query,
            },
        ),
    };
    Ok(Derivation {
        strategy: strategy.to_string(),
        targets,
        estimand: estimand.clone(),
        final_expr: b.expr.clone(),
        steps: b.steps,
        status,
    })
}

/// Rewrites `estimand` into an observed-data formula with `strategy`.
///
/// Failing to find a formula is reported through [`Status::NotIdentified`];
/// errors are reserved for malformed input or a strategy that does not fit the
/// estimand.
pub fn identify(swig: &Swig, estimand: &Estimand, strategy: &Strategy) -> Result<Derivation, IdentError> {
    let term = estimand.to_term(swig)?;
    match strategy {
        Strategy::Backdoor(set) => recipes::backdoor(swig, &term, set.as_deref(), strategy),
        Strategy::Frontdoor(set) => recipes::frontdoor(swig, &term, set.as_deref(), strategy),
        Strategy::SequentialBackdoor(extra) => {
            let r = recipes::sequential_backdoor(swig, &term, extra);
            finish(swig, strategy, &term, r)
        }
        Strategy::SequentialFrontdoor(m) => {
            let mediators = match m {
                Some(m) => m.clone(),
                None => default_mediators(swig),
            };
            let r = recipes::sequential_frontdoor(swig, &term, &mediators);
            finish(swig, strategy, &term, r)
        }
        Strategy::MediatorIntervention(m) => {
            let mediators = match m {
                Some(m) => m.clone(),
                None => default_mediators(swig),
            };
            recipes::mediator_intervention(swig, &term, &mediators, strategy)
        }
        Strategy::Search { direction, depth } => search::search(swig, &term, *direction, *depth, strategy),
    }
}

/// Observed mediator-role variables in topological order.
pub fn default_mediators(swig: &Swig) -> Vec<String> {
    swig.topological_order()
        .iter()
        .map(|&id| swig.variable(id))
        .filter(|v| v.role == Role::Mediator && v.observed)
        .map(|v| v.name.clone())
        .collect()
}

/// Identifies `estimand` (posed on `doses`) by composing an intervention on
/// the mediators, the targets of `mediators`, with the dose intervention.
pub fn compose_mediator_intervention(
    doses: &Swig,
    mediators: &Swig,
    estimand: &Estimand,
) -> Result<Derivation, IdentError> {
    if !doses.base().same_structure(mediators.base()) {
        return Err(IdentError::StrategyInapplicable(
            "the two graphs do not share a base DAG".into(),
        ));
    }
    let m: Vec<String> = mediators
        .pairs()
        .iter()
        .map(|p| mediators.variable(p.target).name.clone())
        .collect();
    let strategy = Strategy::MediatorIntervention(Some(m.clone()));
    let term = estimand.to_term(doses)?;
    recipes::mediator_intervention(doses, &term, &m, &strategy)
}

#[cfg(test)]
mod tests;
