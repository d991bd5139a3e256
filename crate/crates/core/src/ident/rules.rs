//! Rewrite rules. Each application checks its side condition and records a
//! [`DerivationStep`] carrying enough to re-run the check.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{fresh_symbol, ExprError, ProbExpr, Slot, Term, TermPath, ValueRef};
use crate::graph::{interventions_droppable, later_interventions, CiQuery, DropCheck, QueryError};
use crate::model::{ModelError, Swig};

/// What a conditional-independence step does to one conditioner.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CiAction {
    Insert { value: ValueRef },
    Delete,
    Change { value: ValueRef },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Sum a term over fresh values of new dependents.
    TotalProbability { vars: Vec<String>, binders: Vec<String> },
    /// Chain rule over an ordered partition of the dependents; each block is
    /// conditioned on the blocks after it.
    Product { blocks: Vec<Vec<String>> },
    CiModify { var: String, action: CiAction },
    /// `q_s(. | X_t=x, Xo_t=x, ..) = q_{s-t}(. | X_t=x, Xo_t=x, ..)`.
    Consistency { index: usize },
    /// Consistency read right to left: activates intervention `index`.
    ReverseConsistency { index: usize },
    /// Removes interventions with time after `keep_through` (all when absent).
    DropLater { keep_through: Option<u32> },
    DropInterventions { indices: Vec<usize> },
    /// With intervention `index` inactive, `Xo` is a copy of `X`: drops `Xo`
    /// when both are conditioned on, or renames a lone `Xo` to `X`.
    Redundancy { index: usize },
    /// With intervention `index` inactive, conditions on `Xo` next to `X`.
    ReverseRedundancy { index: usize },
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::TotalProbability { .. } => "total_probability",
            Rule::Product { .. } => "product",
            Rule::CiModify { .. } => "ci_modify",
            Rule::Consistency { .. } => "consistency",
            Rule::ReverseConsistency { .. } => "reverse_consistency",
            Rule::DropLater { .. } => "drop_later",
            Rule::DropInterventions { .. } => "drop_interventions",
            Rule::Redundancy { .. } => "redundancy",
            Rule::ReverseRedundancy { .. } => "reverse_redundancy",
        }
    }

    /// Total probability over `vars` with binders chosen fresh for `e`.
    pub fn total_probability(e: &ProbExpr, vars: &[String]) -> Rule {
        let mut taken = e.symbols();
        let binders = vars
            .iter()
            .map(|v| {
                let b = fresh_symbol(v, &taken);
                taken.insert(b.clone());
                b
            })
            .collect();
        Rule::TotalProbability {
            vars: vars.to_vec(),
            binders,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::TotalProbability { vars, .. } => {
                write!(f, "total probability over {}", vars.join(", "))
            }
            Rule::Product { blocks } => {
                let b: Vec<String> = blocks.iter().map(|b| b.join(", ")).collect();
                write!(f, "product rule [{}]", b.join(" | "))
            }
            Rule::CiModify { var, action } => match action {
                CiAction::Insert { value } => write!(f, "insert {var}={value}"),
                CiAction::Delete => write!(f, "delete {var}"),
                CiAction::Change { value } => write!(f, "set {var}={value}"),
            },
            Rule::Consistency { index } => write!(f, "consistency at {index}"),
            Rule::ReverseConsistency { index } => write!(f, "consistency at {index}, reversed"),
            Rule::DropLater { keep_through: Some(t) } => {
                write!(f, "drop interventions after time {t}")
            }
            Rule::DropLater { keep_through: None } => write!(f, "drop all interventions"),
            Rule::DropInterventions { indices } => {
                let i: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
                write!(f, "drop interventions {}", i.join(", "))
            }
            Rule::Redundancy { index } => write!(f, "redundancy at {index}"),
            Rule::ReverseRedundancy { index } => write!(f, "redundancy at {index}, reversed"),
        }
    }
}

/// Evidence for a step's side condition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Justification {
    /// Total probability and the product rule need no side condition.
    Unconditional,
    Independence { query: CiQuery },
    Consistency {
        target: String,
        intervention: String,
        value: ValueRef,
    },
    Drop {
        dropped: Vec<String>,
        query: Option<CiQuery>,
    },
    Redundancy { target: String, intervention: String },
}

impl fmt::Display for Justification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Justification::Unconditional => Ok(()),
            Justification::Independence { query } => write!(f, "{query}"),
            Justification::Consistency {
                target,
                intervention,
                value,
            } => write!(f, "{target} = {intervention} = {value}"),
            Justification::Drop { dropped, query } => {
                write!(f, "no remaining variable descends from {}", dropped.join(", "))?;
                if let Some(q) = query {
                    write!(f, "; {q}")?;
                }
                Ok(())
            }
            Justification::Redundancy {
                target,
                intervention,
            } => write!(f, "{intervention} copies {target}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationStep {
    pub rule: Rule,
    pub path: TermPath,
    pub input: ProbExpr,
    pub output: ProbExpr,
    pub justification: Justification,
}

impl DerivationStep {
    /// Re-applies the rule to the recorded input and checks it reproduces the
    /// recorded output and justification.
    pub fn recheck(&self, swig: &Swig) -> Result<(), RuleError> {
        let again = apply(swig, &self.input, &self.path, &self.rule)?;
        if again.output != self.output {
            return Err(RuleError::Precondition(format!(
                "recorded output differs from `{}`",
                again.output
            )));
        }
        if again.justification != self.justification {
            return Err(RuleError::Precondition("recorded justification differs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("no term at {0}")]
    NotATerm(TermPath),
    #[error("refused: {0} does not hold")]
    Refused(CiQuery),
    #[error("refused: {variable} descends from {intervention}")]
    DropRefused {
        variable: String,
        intervention: String,
        query: CiQuery,
    },
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl RuleError {
    /// The independence whose failure blocked the step, if any.
    pub fn blocking(&self) -> Option<&CiQuery> {
        match self {
            RuleError::Refused(q) | RuleError::DropRefused { query: q, .. } => Some(q),
            _ => None,
        }
    }
}

fn names(slots: &[Slot]) -> Vec<String> {
    slots.iter().map(|s| s.var.name.clone()).collect()
}

fn pre(msg: impl Into<String>) -> RuleError {
    RuleError::Precondition(msg.into())
}

/// Applies `rule` to the term at `path` of `e`.
pub fn apply(swig: &Swig, e: &ProbExpr, path: &TermPath, rule: &Rule) -> Result<DerivationStep, RuleError> {
    let term = e.term_at(path).ok_or_else(|| RuleError::NotATerm(path.clone()))?.clone();
    for s in term.slots() {
        swig.require(&s.var.name)?;
    }
    let (new, justification) = match rule {
        Rule::TotalProbability { vars, binders } => total_probability(swig, e, &term, vars, binders)?,
        Rule::Product { blocks } => product(&term, blocks)?,
        Rule::CiModify { var, action } => ci_modify(swig, &term, var, action)?,
        Rule::Consistency { index } => consistency(swig, &term, *index, false)?,
        Rule::ReverseConsistency { index } => consistency(swig, &term, *index, true)?,
        Rule::DropLater { keep_through } => {
            let indices: Vec<usize> = later_interventions(swig, *keep_through)
                .into_iter()
                .map(|(t, _)| t)
                .collect();
            drop_interventions(swig, &term, &indices)?
        }
        Rule::DropInterventions { indices } => drop_interventions(swig, &term, indices)?,
        Rule::Redundancy { index } => redundancy(swig, &term, *index)?,
        Rule::ReverseRedundancy { index } => reverse_redundancy(swig, &term, *index)?,
    };
    let output = e.replace_at(path, new)?;
    if output == *e {
        return Err(pre("the rule leaves the expression unchanged"));
    }
    output.validate()?;
    let before: BTreeSet<String> = e.parameters().into_keys().collect();
    if let Some(p) = output.parameters().into_keys().find(|p| !before.contains(p)) {
        return Err(pre(format!("symbol `{p}` would be used outside its binder")));
    }
    Ok(DerivationStep {
        rule: rule.clone(),
        path: path.clone(),
        input: e.clone(),
        output,
        justification,
    })
}

type Rewrite = (ProbExpr, Justification);

fn total_probability(
    swig: &Swig,
    e: &ProbExpr,
    term: &Term,
    vars: &[String],
    binders: &[String],
) -> Result<Rewrite, RuleError> {
    if vars.is_empty() || vars.len() != binders.len() {
        return Err(pre("total probability needs one binder per new variable"));
    }
    let taken = e.symbols();
    let mut seen_vars = BTreeSet::new();
    let mut seen_binders = BTreeSet::new();
    let mut t = term.clone();
    for (v, b) in vars.iter().zip(binders) {
        let id = swig.require(v)?;
        if term.mentions(v) || !seen_vars.insert(v) {
            return Err(pre(format!("`{v}` is already in the term")));
        }
        if taken.contains(b) || !seen_binders.insert(b) {
            return Err(pre(format!("binder `{b}` is not fresh")));
        }
        t.dependents.push(Slot::new(swig.var_ref(id), Some(ValueRef::sym(b.clone()))));
    }
    Ok((ProbExpr::sum(binders.to_vec(), t.into()), Justification::Unconditional))
}

fn product(term: &Term, blocks: &[Vec<String>]) -> Result<Rewrite, RuleError> {
    if blocks.len() < 2 || blocks.iter().any(Vec::is_empty) {
        return Err(pre("the product rule needs at least two non-empty blocks"));
    }
    let mut listed: Vec<&String> = blocks.iter().flatten().collect();
    listed.sort();
    let mut deps: Vec<&String> = term.dependents.iter().map(|s| &s.var.name).collect();
    deps.sort();
    let n = listed.len();
    listed.dedup();
    if listed.len() != n || listed != deps {
        return Err(pre("blocks must partition the dependents"));
    }
    let slot = |name: &String| term.dependent(name).cloned().expect("checked partition");
    let factors = (0..blocks.len())
        .map(|i| {
            let dependents: Vec<Slot> = blocks[i].iter().map(slot).collect();
            let mut conditioners: Vec<Slot> = blocks[i + 1..].iter().flatten().map(slot).collect();
            conditioners.extend(term.conditioners.iter().cloned());
            ProbExpr::Term(Term::new(term.regime, dependents, conditioners))
        })
        .collect();
    Ok((ProbExpr::Product { factors }, Justification::Unconditional))
}

fn ci_modify(swig: &Swig, term: &Term, var: &str, action: &CiAction) -> Result<Rewrite, RuleError> {
    let id = swig.require(var)?;
    if term.dependent(var).is_some() {
        return Err(pre(format!("`{var}` is a dependent")));
    }
    let present = term.conditioner(var).cloned();
    let mut t = term.clone();
    match (action, &present) {
        (CiAction::Insert { value }, None) => {
            t.conditioners.push(Slot::new(swig.var_ref(id), Some(value.clone())));
        }
        (CiAction::Delete, Some(_)) => t.conditioners.retain(|s| s.var.name != var),
        (CiAction::Change { value }, Some(old)) => {
            if old.value.as_ref() == Some(value) {
                return Err(pre(format!("`{var}` already has value {value}")));
            }
            for s in t.conditioners.iter_mut().filter(|s| s.var.name == var) {
                s.value = Some(value.clone());
            }
        }
        (CiAction::Insert { .. }, Some(_)) => return Err(pre(format!("`{var}` is already conditioned on"))),
        (_, None) => return Err(pre(format!("`{var}` is not conditioned on"))),
    }
    if let CiAction::Insert { value: ValueRef::Level(l) } | CiAction::Change { value: ValueRef::Level(l) } = action {
        if *l >= swig.variable(id).levels {
            return Err(pre(format!("level {l} out of range for `{var}`")));
        }
    }
    let others: Vec<String> = term
        .conditioners
        .iter()
        .filter(|s| s.var.name != var)
        .map(|s| s.var.name.clone())
        .collect();
    let q = CiQuery::new(term.regime, &names(&term.dependents), &[var.to_string()], &others);
    if !crate::graph::d_separated(swig, &q)? {
        return Err(RuleError::Refused(q));
    }
    Ok((t.into(), Justification::Independence { query: q }))
}

fn pair_names(swig: &Swig, index: usize) -> Result<(String, String), RuleError> {
    let pair = swig.require_pair(index)?;
    Ok((
        swig.variable(pair.target).name.clone(),
        swig.variable(pair.intervention).name.clone(),
    ))
}

fn consistency(swig: &Swig, term: &Term, index: usize, reverse: bool) -> Result<Rewrite, RuleError> {
    let (x, xo) = pair_names(swig, index)?;
    if term.regime.contains(index) == reverse {
        return Err(pre(format!(
            "intervention {index} is {} in {}",
            if reverse { "already active" } else { "not active" },
            term.regime
        )));
    }
    let vx = term.conditioner(&x).and_then(|s| s.value.clone());
    let vo = term.conditioner(&xo).and_then(|s| s.value.clone());
    let value = match (vx, vo) {
        (Some(a), Some(b)) if a == b => a,
        (Some(a), Some(b)) => {
            return Err(pre(format!("{x}={a} and {xo}={b} are not syntactically equal")))
        }
        _ => return Err(pre(format!("consistency needs both {x} and {xo} conditioned on"))),
    };
    let mut t = term.clone();
    t.regime = if reverse {
        term.regime.with(index)
    } else {
        term.regime.without(index)
    };
    Ok((
        t.into(),
        Justification::Consistency {
            target: x,
            intervention: xo,
            value,
        },
    ))
}

fn drop_interventions(swig: &Swig, term: &Term, indices: &[usize]) -> Result<Rewrite, RuleError> {
    let mut relevant = Vec::new();
    for &t in indices {
        let (_, xo) = pair_names(swig, t)?;
        if term.regime.contains(t) || term.mentions(&xo) {
            relevant.push((t, xo));
        }
    }
    if relevant.is_empty() {
        return Err(pre("no intervention to drop"));
    }
    let idx: Vec<usize> = relevant.iter().map(|r| r.0).collect();
    let query = match interventions_droppable(swig, term, &idx)? {
        DropCheck::Allowed(q) => q,
        DropCheck::Dependent(q) => return Err(RuleError::Refused(q)),
        DropCheck::Descendant {
            variable,
            intervention,
        } => {
            let rest: Vec<String> = term
                .conditioners
                .iter()
                .map(|s| s.var.name.clone())
                .filter(|n| *n != variable && *n != intervention)
                .collect();
            let query = CiQuery::new(term.regime, &[variable.clone()], &[intervention.clone()], &rest);
            return Err(RuleError::DropRefused {
                variable,
                intervention,
                query,
            });
        }
    };
    let mut t = term.clone();
    let dropped: Vec<String> = relevant.iter().map(|r| r.1.clone()).collect();
    t.conditioners.retain(|s| !dropped.contains(&s.var.name));
    for &(i, _) in &relevant {
        t.regime = t.regime.without(i);
    }
    Ok((t.into(), Justification::Drop { dropped, query }))
}

fn redundancy(swig: &Swig, term: &Term, index: usize) -> Result<Rewrite, RuleError> {
    let (x, xo) = pair_names(swig, index)?;
    if term.regime.contains(index) {
        return Err(pre(format!("intervention {index} is active in {}", term.regime)));
    }
    let mut t = term.clone();
    match (term.conditioner(&x), term.conditioner(&xo)) {
        (Some(a), Some(b)) => {
            if a.value != b.value {
                return Err(pre(format!("{x} and {xo} have different values")));
            }
            t.conditioners.retain(|s| s.var.name != xo);
        }
        (None, Some(_)) => {
            if term.dependent(&x).is_some() {
                return Err(pre(format!("{x} is a dependent")));
            }
            let x_ref = swig.var_ref(swig.require(&x)?);
            for s in t.conditioners.iter_mut().filter(|s| s.var.name == xo) {
                s.var = x_ref.clone();
            }
        }
        _ => match (term.dependent(&x), term.dependent(&xo)) {
            (None, Some(_)) => {
                let x_ref = swig.var_ref(swig.require(&x)?);
                for s in t.dependents.iter_mut().filter(|s| s.var.name == xo) {
                    s.var = x_ref.clone();
                }
            }
            _ => return Err(pre(format!("nothing to simplify for {xo}"))),
        },
    }
    Ok((
        t.into(),
        Justification::Redundancy {
            target: x,
            intervention: xo,
        },
    ))
}

fn reverse_redundancy(swig: &Swig, term: &Term, index: usize) -> Result<Rewrite, RuleError> {
    let (x, xo) = pair_names(swig, index)?;
    if term.regime.contains(index) {
        return Err(pre(format!("intervention {index} is active in {}", term.regime)));
    }
    if term.mentions(&xo) {
        return Err(pre(format!("{xo} is already in the term")));
    }
    let value = term
        .conditioner(&x)
        .and_then(|s| s.value.clone())
        .ok_or_else(|| pre(format!("{x} is not conditioned on at a value")))?;
    let mut t = term.clone();
    t.conditioners
        .push(Slot::new(swig.var_ref(swig.require(&xo)?), Some(value)));
    Ok((
        t.into(),
        Justification::Redundancy {
            target: x,
            intervention: xo,
        },
    ))
}
