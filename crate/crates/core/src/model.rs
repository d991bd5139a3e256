//! Base DAGs, single-world node splitting, regimes and estimands.
//!
//! A [`BaseDag`] is the pre-intervention causal graph. [`to_swig`] splits every
//! intervention target `X` into the natural node `X` (keeps its parents) and an
//! intervention node `Xo` (feeds the former children of `X`). In the observed
//! regime `Xo` is a deterministic copy of `X`; an active intervention severs the
//! copy edge and turns `Xo` into a root.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Slot, Term, ValueRef, VarRef};

/// Maximum number of intervention targets a graph may declare.
pub const MAX_TARGETS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Covariate,
    Target,
    Intervention,
    Mediator,
    Outcome,
    Other,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Covariate => "covariate",
            Role::Target => "target",
            Role::Intervention => "intervention",
            Role::Mediator => "mediator",
            Role::Outcome => "outcome",
            Role::Other => "other",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "covariate" => Role::Covariate,
            "target" => Role::Target,
            "intervention" => Role::Intervention,
            "mediator" => Role::Mediator,
            "outcome" => Role::Outcome,
            "other" => Role::Other,
            _ => return Err(format!("unknown role `{s}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub time: u32,
    pub role: Role,
    pub observed: bool,
    pub levels: usize,
}

impl Variable {
    pub fn new(name: impl Into<String>, time: u32, role: Role) -> Self {
        Variable {
            name: name.into(),
            time,
            role,
            observed: true,
            levels: 2,
        }
    }

    pub fn unobserved(mut self) -> Self {
        self.observed = false;
        self
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    pub fn var_ref(&self) -> VarRef {
        VarRef::new(self.name.clone(), self.time)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("regime {regime} refers to intervention {index}, but only {targets} targets exist")]
    InvalidRegime {
        regime: Regime,
        index: usize,
        targets: usize,
    },
    #[error("invalid estimand: {0}")]
    InvalidEstimand(String),
}

/// A structural rule broken by a [`BaseDag`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Cycle { path: Vec<String> },
    DuplicateEdge { from: String, to: String },
    TimeOrder { parent: String, child: String },
    TargetOrdering { earlier: String, later: String },
    InterventionInBase(String),
    ZeroLevels(String),
    TooManyTargets(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { path } => write!(f, "cycle: {}", path.join(" -> ")),
            Violation::DuplicateEdge { from, to } => write!(f, "duplicate edge {from} -> {to}"),
            Violation::TimeOrder { parent, child } => {
                write!(f, "time order: edge {parent} -> {child} points back in time")
            }
            Violation::TargetOrdering { earlier, later } => write!(
                f,
                "target ordering: {later} is ordered after {earlier} but is one of its ancestors"
            ),
            Violation::InterventionInBase(name) => write!(
                f,
                "intervention-role variable `{name}` in a base graph (intervention nodes are created by splitting)"
            ),
            Violation::ZeroLevels(name) => write!(f, "variable `{name}` has zero levels"),
            Violation::TooManyTargets(n) => {
                write!(f, "{n} targets declared, at most {MAX_TARGETS} supported")
            }
        }
    }
}

/// The pre-intervention causal DAG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseDag {
    name: String,
    variables: Vec<Variable>,
    edges: Vec<(VarId, VarId)>,
    targets: Vec<VarId>,
    index: HashMap<String, VarId>,
}

impl BaseDag {
    pub fn new(name: impl Into<String>) -> Self {
        BaseDag {
            name: name.into(),
            variables: Vec::new(),
            edges: Vec::new(),
            targets: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn edges(&self) -> &[(VarId, VarId)] {
        &self.edges
    }

    /// Intervention targets in intervention order (index 0 is intervention 1).
    pub fn targets(&self) -> &[VarId] {
        &self.targets
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn add_variable(&mut self, var: Variable) -> Result<VarId, ModelError> {
        if self.index.contains_key(&var.name) {
            return Err(ModelError::DuplicateVariable(var.name));
        }
        let id = VarId(self.variables.len());
        self.index.insert(var.name.clone(), id);
        self.variables.push(var);
        Ok(id)
    }

    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<(), ModelError> {
        let a = self.require(from)?;
        let b = self.require(to)?;
        self.edges.push((a, b));
        Ok(())
    }

    pub fn add_target(&mut self, name: &str) -> Result<(), ModelError> {
        let id = self.require(name)?;
        self.targets.push(id);
        Ok(())
    }

    /// Copy of this graph with a different target list.
    pub fn with_targets(&self, names: &[&str]) -> Result<BaseDag, ModelError> {
        let mut out = self.clone();
        out.targets = names
            .iter()
            .map(|n| self.require(n))
            .collect::<Result<_, _>>()?;
        Ok(out)
    }

    pub fn set_observed(&mut self, name: &str, observed: bool) -> Result<(), ModelError> {
        let id = self.require(name)?;
        self.variables[id.0].observed = observed;
        Ok(())
    }

    /// Same variables and edges, ignoring targets and observability.
    pub fn same_structure(&self, other: &BaseDag) -> bool {
        let names = |d: &BaseDag| -> BTreeSet<(String, u32, usize)> {
            d.variables
                .iter()
                .map(|v| (v.name.clone(), v.time, v.levels))
                .collect()
        };
        let edges = |d: &BaseDag| -> BTreeSet<(String, String)> {
            d.edges
                .iter()
                .map(|&(a, b)| (d.variable(a).name.clone(), d.variable(b).name.clone()))
                .collect()
        };
        names(self) == names(other) && edges(self) == edges(other)
    }

    fn require(&self, name: &str) -> Result<VarId, ModelError> {
        self.id(name)
            .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
    }

    fn parent_lists(&self) -> Vec<Vec<VarId>> {
        let mut parents = vec![Vec::new(); self.variables.len()];
        for &(a, b) in &self.edges {
            if !parents[b.0].contains(&a) {
                parents[b.0].push(a);
            }
        }
        parents
    }

    /// Lists every broken structural rule; empty iff the graph is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for v in &self.variables {
            if v.role == Role::Intervention {
                out.push(Violation::InterventionInBase(v.name.clone()));
            }
            if v.levels == 0 {
                out.push(Violation::ZeroLevels(v.name.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            if !seen.insert((a, b)) {
                out.push(Violation::DuplicateEdge {
                    from: self.variable(a).name.clone(),
                    to: self.variable(b).name.clone(),
                });
            }
            let (pa, ch) = (self.variable(a), self.variable(b));
            if pa.time > ch.time {
                out.push(Violation::TimeOrder {
                    parent: pa.name.clone(),
                    child: ch.name.clone(),
                });
            }
        }
        if self.targets.len() > MAX_TARGETS {
            out.push(Violation::TooManyTargets(self.targets.len()));
        }
        let parents = self.parent_lists();
        if let Some(cycle) = find_cycle(&parents) {
            out.push(Violation::Cycle {
                path: cycle
                    .into_iter()
                    .map(|id| self.variable(id).name.clone())
                    .collect(),
            });
            return out;
        }
        for (i, &earlier) in self.targets.iter().enumerate() {
            let anc = ancestors_of(&parents, earlier);
            for &later in &self.targets[i + 1..] {
                if later != earlier && anc[later.0] {
                    out.push(Violation::TargetOrdering {
                        earlier: self.variable(earlier).name.clone(),
                        later: self.variable(later).name.clone(),
                    });
                }
            }
        }
        out
    }
}

fn ancestors_of(parents: &[Vec<VarId>], v: VarId) -> Vec<bool> {
    let mut seen = vec![false; parents.len()];
    let mut stack = parents[v.0].clone();
    while let Some(u) = stack.pop() {
        if !seen[u.0] {
            seen[u.0] = true;
            stack.extend(parents[u.0].iter().copied());
        }
    }
    seen
}

/// Returns one directed cycle (first node repeated at the end) if any exists.
fn find_cycle(parents: &[Vec<VarId>]) -> Option<Vec<VarId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = parents.len();
    let mut mark = vec![Mark::New; n];
    let mut stack: Vec<VarId> = Vec::new();

    fn visit(
        v: VarId,
        parents: &[Vec<VarId>],
        mark: &mut [Mark],
        stack: &mut Vec<VarId>,
    ) -> Option<Vec<VarId>> {
        mark[v.0] = Mark::Open;
        stack.push(v);
        for &p in &parents[v.0] {
            match mark[p.0] {
                Mark::Open => {
                    // stack holds a child-to-parent chain; reverse it into edge direction
                    let start = stack.iter().position(|&x| x == p).unwrap();
                    let mut cycle: Vec<VarId> = stack[start..].to_vec();
                    cycle.reverse();
                    cycle.push(cycle[0]);
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(c) = visit(p, parents, mark, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[v.0] = Mark::Done;
        None
    }

    for v in 0..n {
        if mark[v] == Mark::New {
            if let Some(c) = visit(VarId(v), parents, &mut mark, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Set of active interventions, by 1-based intervention index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Regime(u64);

impl Regime {
    /// The observed-data regime `q0`.
    pub const OBSERVED: Regime = Regime(0);

    /// Interventions `1..=t` active.
    pub fn prefix(t: usize) -> Regime {
        assert!(t <= MAX_TARGETS, "regime prefix {t} exceeds {MAX_TARGETS}");
        if t == 64 {
            Regime(u64::MAX)
        } else {
            Regime((1u64 << t) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Regime {
        let mut r = Regime::OBSERVED;
        for i in indices {
            r = r.with(i);
        }
        r
    }

    pub fn contains(self, t: usize) -> bool {
        t >= 1 && t <= MAX_TARGETS && self.0 & (1u64 << (t - 1)) != 0
    }

    pub fn with(self, t: usize) -> Regime {
        assert!(
            (1..=MAX_TARGETS).contains(&t),
            "intervention index {t} out of range"
        );
        Regime(self.0 | (1u64 << (t - 1)))
    }

    pub fn without(self, t: usize) -> Regime {
        if !(1..=MAX_TARGETS).contains(&t) {
            return self;
        }
        Regime(self.0 & !(1u64 << (t - 1)))
    }

    pub fn is_observed(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (1..=MAX_TARGETS).filter(move |&t| self.contains(t))
    }

    /// `Some(t)` when the regime is exactly `{1..t}`.
    pub fn as_prefix(self) -> Option<usize> {
        let t = self.len();
        (Regime::prefix(t) == self).then_some(t)
    }

    pub fn is_subset(self, other: Regime) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn bits(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_prefix() {
            Some(t) => write!(f, "q{t}"),
            None => {
                let parts: Vec<String> = self.indices().map(|i| i.to_string()).collect();
                write!(f, "q{{{}}}", parts.join(","))
            }
        }
    }
}

impl Serialize for Regime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.indices())
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<usize> = Vec::deserialize(d)?;
        if let Some(bad) = v.iter().find(|&&i| !(1..=MAX_TARGETS).contains(&i)) {
            return Err(serde::de::Error::custom(format!(
                "intervention index {bad} out of range"
            )));
        }
        Ok(Regime::from_indices(v))
    }
}

/// A split target: the natural node and its intervention node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitPair {
    pub target: VarId,
    pub intervention: VarId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwigError {
    #[error("invalid base graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidBase(Vec<Violation>),
    #[error("target `{0}` is already split")]
    DuplicateSplit(String),
    #[error("intervention node name `{0}` collides with an existing variable")]
    NameCollision(String),
}

/// A node-split graph. Variables `0..base.len()` are the base variables; the
/// intervention nodes follow in intervention order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Swig {
    base: BaseDag,
    variables: Vec<Variable>,
    parents: Vec<Vec<VarId>>,
    children: Vec<Vec<VarId>>,
    pairs: Vec<SplitPair>,
    index: HashMap<String, VarId>,
    topo: Vec<VarId>,
}

/// Name of the intervention node split off `target`: `D1` becomes `Do1`, `Y` becomes `Yo`.
pub fn intervention_name(target: &str) -> String {
    let digits = target
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .count();
    let (head, tail) = target.split_at(target.len() - digits);
    format!("{head}o{tail}")
}

/// Splits every target of `base` into a natural node and an intervention node.
pub fn to_swig(base: &BaseDag) -> Result<Swig, SwigError> {
    let mut seen = BTreeSet::new();
    for &t in base.targets() {
        let v = base.variable(t);
        if v.role == Role::Intervention || !seen.insert(t) {
            return Err(SwigError::DuplicateSplit(v.name.clone()));
        }
    }
    let violations = base.validate();
    if !violations.is_empty() {
        return Err(SwigError::InvalidBase(violations));
    }

    let mut variables = base.variables().to_vec();
    let mut index = base.index.clone();
    let mut pairs = Vec::with_capacity(base.targets().len());
    for &t in base.targets() {
        let target = base.variable(t);
        let name = intervention_name(&target.name);
        if index.contains_key(&name) {
            return Err(SwigError::NameCollision(name));
        }
        let id = VarId(variables.len());
        index.insert(name.clone(), id);
        variables.push(Variable {
            name,
            time: target.time,
            role: Role::Intervention,
            observed: target.observed,
            levels: target.levels,
        });
        pairs.push(SplitPair {
            target: t,
            intervention: id,
        });
    }

    let n = variables.len();
    let mut parents: Vec<Vec<VarId>> = vec![Vec::new(); n];
    let redirect = |v: VarId| {
        pairs
            .iter()
            .find(|p| p.target == v)
            .map_or(v, |p| p.intervention)
    };
    for &(a, b) in base.edges() {
        let src = redirect(a);
        if !parents[b.0].contains(&src) {
            parents[b.0].push(src);
        }
    }
    for p in &pairs {
        parents[p.intervention.0].push(p.target);
    }
    let mut children = vec![Vec::new(); n];
    for (child, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p.0].push(VarId(child));
        }
    }
    let topo = topological_order(&variables, &parents);

    Ok(Swig {
        base: base.clone(),
        variables,
        parents,
        children,
        pairs,
        index,
        topo,
    })
}

/// Kahn's algorithm with ties broken by (time, name).
fn topological_order(vars: &[Variable], parents: &[Vec<VarId>]) -> Vec<VarId> {
    let n = vars.len();
    let mut indeg: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p.0].push(c);
        }
    }
    let key = |i: usize| (vars[i].time, vars[i].name.clone());
    let mut ready: BTreeSet<((u32, String), usize)> = (0..n)
        .filter(|&i| indeg[i] == 0)
        .map(|i| (key(i), i))
        .collect();
    let mut out = Vec::with_capacity(n);
    while let Some(first) = ready.iter().next().cloned() {
        ready.remove(&first);
        let v = first.1;
        out.push(VarId(v));
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert((key(c), c));
            }
        }
    }
    out
}

impl Swig {
    pub fn base(&self) -> &BaseDag {
        &self.base
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<VarId, ModelError> {
        self.id(name)
            .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
    }

    pub fn var_ref(&self, id: VarId) -> VarRef {
        self.variable(id).var_ref()
    }

    /// Regime-0 parents (the copy edge included for intervention nodes).
    pub fn parents(&self, id: VarId) -> &[VarId] {
        &self.parents[id.0]
    }

    pub fn children(&self, id: VarId) -> &[VarId] {
        &self.children[id.0]
    }

    pub fn pairs(&self) -> &[SplitPair] {
        &self.pairs
    }

    pub fn num_targets(&self) -> usize {
        self.pairs.len()
    }

    /// Split pair of intervention `t` (1-based).
    pub fn pair(&self, t: usize) -> Option<SplitPair> {
        t.checked_sub(1).and_then(|i| self.pairs.get(i)).copied()
    }

    /// 1-based intervention index of a target or intervention node.
    pub fn split_index(&self, id: VarId) -> Option<usize> {
        self.pairs
            .iter()
            .position(|p| p.target == id || p.intervention == id)
            .map(|i| i + 1)
    }

    pub fn is_intervention(&self, id: VarId) -> bool {
        self.pairs.iter().any(|p| p.intervention == id)
    }

    pub fn is_target(&self, id: VarId) -> bool {
        self.pairs.iter().any(|p| p.target == id)
    }

    /// All variables in a topological order of the regime-0 graph.
    pub fn topological_order(&self) -> &[VarId] {
        &self.topo
    }

    pub fn require_pair(&self, t: usize) -> Result<SplitPair, ModelError> {
        self.pair(t).ok_or(ModelError::InvalidRegime {
            regime: if (1..=MAX_TARGETS).contains(&t) {
                Regime::OBSERVED.with(t)
            } else {
                Regime::OBSERVED
            },
            index: t,
            targets: self.pairs.len(),
        })
    }

    pub fn check_regime(&self, s: Regime) -> Result<(), ModelError> {
        match s.indices().find(|&t| t > self.pairs.len()) {
            Some(index) => Err(ModelError::InvalidRegime {
                regime: s,
                index,
                targets: self.pairs.len(),
            }),
            None => Ok(()),
        }
    }

    /// Regime mapping the regime of another split of the same base onto this
    /// one, by intervention node name.
    pub fn translate_regime(&self, other: &Swig, s: Regime) -> Result<Regime, ModelError> {
        let mut out = Regime::OBSERVED;
        for t in s.indices() {
            let pair = other.pair(t).ok_or(ModelError::InvalidRegime {
                regime: s,
                index: t,
                targets: other.num_targets(),
            })?;
            let name = &other.variable(pair.intervention).name;
            let id = self.require(name)?;
            let idx = self
                .split_index(id)
                .ok_or_else(|| ModelError::UnknownVariable(name.clone()))?;
            out = out.with(idx);
        }
        Ok(out)
    }
}

/// An interventional quantity such as `q1(Y1 | Do1=d1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Estimand {
    pub regime: Regime,
    pub dependents: Vec<(String, Option<ValueRef>)>,
    pub conditioners: Vec<(String, ValueRef)>,
}

impl Estimand {
    /// `q_n(outcome | Do_1=d_1, ..., Do_n=d_n)` with all interventions active and
    /// one parameter symbol per intervention (`d1`, `d2`, ...).
    pub fn all_interventions(swig: &Swig, outcomes: &[&str]) -> Result<Estimand, ModelError> {
        let n = swig.num_targets();
        let conditioners = swig
            .pairs()
            .iter()
            .map(|p| {
                let target = swig.variable(p.target);
                (
                    swig.variable(p.intervention).name.clone(),
                    ValueRef::sym(target.name.to_lowercase()),
                )
            })
            .collect();
        let est = Estimand {
            regime: Regime::prefix(n),
            dependents: outcomes.iter().map(|o| (o.to_string(), None)).collect(),
            conditioners,
        };
        est.to_term(swig)?;
        Ok(est)
    }

    pub fn to_term(&self, swig: &Swig) -> Result<Term, ModelError> {
        swig.check_regime(self.regime)?;
        let mut names = BTreeSet::new();
        let mut slot = |name: &str, value: Option<ValueRef>| -> Result<Slot, ModelError> {
            let id = swig.require(name)?;
            if !names.insert(name.to_string()) {
                return Err(ModelError::InvalidEstimand(format!(
                    "variable `{name}` appears more than once"
                )));
            }
            if let Some(ValueRef::Level(l)) = value {
                if l >= swig.variable(id).levels {
                    return Err(ModelError::InvalidEstimand(format!(
                        "level {l} out of range for `{name}`"
                    )));
                }
            }
            Ok(Slot::new(swig.var_ref(id), value))
        };
        let mut dependents = Vec::new();
        for (n, v) in &self.dependents {
            dependents.push(slot(n, v.clone())?);
        }
        let mut conditioners = Vec::new();
        for (n, v) in &self.conditioners {
            conditioners.push(slot(n, Some(v.clone()))?);
        }
        if dependents.is_empty() {
            return Err(ModelError::InvalidEstimand("no dependent variables".into()));
        }
        Ok(Term::new(self.regime, dependents, conditioners))
    }
}
