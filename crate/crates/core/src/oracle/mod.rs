//! Exact discrete semantics for every regime of a SWIG.
//!
//! A [`DiscreteModel`] holds one conditional probability table per
//! non-intervention variable, over its regime-0 parents in the SWIG (so
//! children of a split target read the intervention node). The joint of regime
//! `s` multiplies the tables with, for each intervention node, either the copy
//! constraint `Xo = X` (inactive) or an exogenous full-support law (active;
//! uniform unless overridden).

mod io;
mod sample;

pub use io::{ModelFile, ModelFileError, ModelFileVariable};
pub use sample::{plugin_estimate, random_model, sample, Dataset, PluginEstimate};

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::expr::{ProbExpr, Term, ValueRef};
use crate::graph::CiQuery;
use crate::model::{ModelError, Regime, Swig, VarId};

/// Largest dense joint the oracle will enumerate.
pub const MAX_STATES: usize = 1 << 22;

/// Conditioning events below this probability are treated as impossible.
pub const MIN_CONDITIONING_PROB: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("joint state space of {0} configurations exceeds the limit of {MAX_STATES}")]
    StateSpaceTooLarge(u128),
    #[error("invalid table for `{var}`: {reason}")]
    InvalidCpt { var: String, reason: String },
    #[error("conditioning event of {0} has zero probability")]
    ZeroProbability(String),
    #[error("symbol `{0}` has no value")]
    UnboundSymbol(String),
    #[error("free variable `{0}` has no value")]
    UnboundVariable(String),
    #[error("level {level} out of range for `{var}`")]
    LevelOutOfRange { var: String, level: usize },
    #[error("symbol `{0}` pins variables with different numbers of levels")]
    InconsistentSymbol(String),
    #[error("plug-in estimation needs observed-data terms, found {0}")]
    NotObservedTerm(String),
    #[error("dataset has no column `{0}`")]
    MissingColumn(String),
}

/// Conditional probability table of one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    pub parents: Vec<VarId>,
    /// `rows[r][level]`, rows in row-major order over the parents (first parent
    /// most significant).
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteModel {
    swig: Swig,
    cpts: Vec<Option<Cpt>>,
    active_laws: Vec<Vec<f64>>,
}

impl DiscreteModel {
    /// Builds a model; `tables` maps each non-intervention variable to its rows.
    pub fn new(swig: Swig, tables: BTreeMap<String, Vec<Vec<f64>>>) -> Result<Self, OracleError> {
        let mut cpts = vec![None; swig.len()];
        for v in 0..swig.len() {
            let id = VarId(v);
            if swig.is_intervention(id) {
                continue;
            }
            let var = swig.variable(id);
            let rows = tables.get(&var.name).ok_or_else(|| OracleError::InvalidCpt {
                var: var.name.clone(),
                reason: "missing table".into(),
            })?;
            cpts[v] = Some(Cpt {
                parents: swig.parents(id).to_vec(),
                rows: rows.clone(),
            });
        }
        if let Some(extra) = tables.keys().find(|k| swig.id(k).is_none()) {
            return Err(OracleError::Model(ModelError::UnknownVariable(extra.clone())));
        }
        Self::from_cpts(swig, cpts)
    }

    pub(crate) fn from_cpts(swig: Swig, cpts: Vec<Option<Cpt>>) -> Result<Self, OracleError> {
        let active_laws = swig
            .pairs()
            .iter()
            .map(|p| {
                let k = swig.variable(p.intervention).levels;
                vec![1.0 / k as f64; k]
            })
            .collect();
        let model = DiscreteModel {
            swig,
            cpts,
            active_laws,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), OracleError> {
        let swig = &self.swig;
        state_space(swig)?;
        for v in 0..swig.len() {
            let id = VarId(v);
            let var = swig.variable(id);
            let bad = |reason: String| OracleError::InvalidCpt {
                var: var.name.clone(),
                reason,
            };
            match (&self.cpts[v], swig.is_intervention(id)) {
                (None, true) => continue,
                (Some(_), true) => return Err(bad("intervention nodes have no table".into())),
                (None, false) => return Err(bad("missing table".into())),
                (Some(cpt), false) => {
                    if cpt.parents != swig.parents(id) {
                        return Err(bad("parents differ from the graph".into()));
                    }
                    let rows: usize = cpt.parents.iter().map(|p| swig.variable(*p).levels).product();
                    if cpt.rows.len() != rows {
                        return Err(bad(format!("expected {rows} rows, found {}", cpt.rows.len())));
                    }
                    for (r, row) in cpt.rows.iter().enumerate() {
                        if row.len() != var.levels {
                            return Err(bad(format!("row {r} has {} entries, expected {}", row.len(), var.levels)));
                        }
                        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                            return Err(bad(format!("row {r} has a negative or non-finite entry")));
                        }
                        let sum: f64 = row.iter().sum();
                        if (sum - 1.0).abs() > 1e-12 {
                            return Err(bad(format!("row {r} sums to {sum}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn swig(&self) -> &Swig {
        &self.swig
    }

    pub fn cpt(&self, id: VarId) -> Option<&Cpt> {
        self.cpts[id.0].as_ref()
    }

    /// Replaces the exogenous law used for intervention `t` when it is active.
    pub fn with_active_law(mut self, t: usize, law: Vec<f64>) -> Result<Self, OracleError> {
        let pair = self.swig.require_pair(t)?;
        let var = self.swig.variable(pair.intervention);
        let sum: f64 = law.iter().sum();
        if law.len() != var.levels || law.iter().any(|&p| p <= 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidCpt {
                var: var.name.clone(),
                reason: "active law must be a full-support distribution".into(),
            });
        }
        self.active_laws[t - 1] = law;
        Ok(self)
    }

    /// Probability of `level` for variable `id` given a full assignment.
    fn factor(&self, id: VarId, regime: Regime, assign: &[usize]) -> f64 {
        match &self.cpts[id.0] {
            Some(cpt) => {
                let mut row = 0;
                for &p in &cpt.parents {
                    row = row * self.swig.variable(p).levels + assign[p.0];
                }
                cpt.rows[row][assign[id.0]]
            }
            None => {
                let t = self.swig.split_index(id).expect("intervention node");
                if regime.contains(t) {
                    self.active_laws[t - 1][assign[id.0]]
                } else {
                    let target = self.swig.pair(t).unwrap().target;
                    if assign[id.0] == assign[target.0] {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        }
    }

    /// Full joint table of regime `s` by enumeration.
    pub fn joint(&self, s: Regime) -> Result<RegimeJoint, OracleError> {
        self.swig.check_regime(s)?;
        let levels: Vec<usize> = self.swig.variables().iter().map(|v| v.levels).collect();
        let size = state_space(&self.swig)?;
        let order = self.swig.topological_order();
        let mut probs = vec![0.0; size];
        let mut assign = vec![0usize; levels.len()];
        for slot in probs.iter_mut() {
            let mut p = 1.0;
            for &v in order {
                p *= self.factor(v, s, &assign);
                if p == 0.0 {
                    break;
                }
            }
            *slot = p;
            // odometer, last variable fastest
            for i in (0..levels.len()).rev() {
                assign[i] += 1;
                if assign[i] < levels[i] {
                    break;
                }
                assign[i] = 0;
            }
        }
        Ok(RegimeJoint {
            regime: s,
            strides: strides(&levels),
            levels,
            probs,
        })
    }

    /// Distribution of `dependents` given fixed `conditioners` in regime `s`.
    pub fn query(
        &self,
        s: Regime,
        dependents: &[VarId],
        conditioners: &[(VarId, usize)],
    ) -> Result<Table, OracleError> {
        let joint = self.joint(s)?;
        let mut vars: Vec<VarId> = conditioners.iter().map(|c| c.0).collect();
        vars.extend_from_slice(dependents);
        let marg = joint.marginal(&vars);
        let dep_levels: Vec<usize> = dependents.iter().map(|d| joint.levels[d.0]).collect();
        let block: usize = dep_levels.iter().product();
        let mut offset = 0;
        for &(v, l) in conditioners {
            if l >= joint.levels[v.0] {
                return Err(OracleError::LevelOutOfRange {
                    var: self.swig.variable(v).name.clone(),
                    level: l,
                });
            }
            offset = offset * joint.levels[v.0] + l;
        }
        let values: Vec<f64> = marg[offset * block..(offset + 1) * block].to_vec();
        let total: f64 = values.iter().sum();
        if total < MIN_CONDITIONING_PROB {
            return Err(OracleError::ZeroProbability(self.describe(conditioners)));
        }
        Ok(Table {
            vars: dependents.to_vec(),
            levels: dep_levels,
            values: values.into_iter().map(|p| p / total).collect(),
        })
    }

    fn describe(&self, fixed: &[(VarId, usize)]) -> String {
        let parts: Vec<String> = fixed
            .iter()
            .map(|(v, l)| format!("{}={l}", self.swig.variable(*v).name))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

fn strides(levels: &[usize]) -> Vec<usize> {
    let mut s = vec![1; levels.len()];
    for i in (0..levels.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * levels[i + 1];
    }
    s
}

fn state_space(swig: &Swig) -> Result<usize, OracleError> {
    let size: u128 = swig.variables().iter().map(|v| v.levels as u128).product();
    if size > MAX_STATES as u128 {
        return Err(OracleError::StateSpaceTooLarge(size));
    }
    Ok(size as usize)
}

/// Dense joint of one regime; variable 0 is the most significant digit.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeJoint {
    pub regime: Regime,
    pub levels: Vec<usize>,
    strides: Vec<usize>,
    pub probs: Vec<f64>,
}

impl RegimeJoint {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn level_of(&self, index: usize, v: VarId) -> usize {
        (index / self.strides[v.0]) % self.levels[v.0]
    }

    /// Marginal over `vars`, row-major in the given order.
    pub fn marginal(&self, vars: &[VarId]) -> Vec<f64> {
        let size: usize = vars.iter().map(|v| self.levels[v.0]).product();
        let mut out = vec![0.0; size];
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut k = 0;
            for &v in vars {
                k = k * self.levels[v.0] + self.level_of(i, v);
            }
            out[k] += p;
        }
        out
    }
}

/// A probability table over `vars`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub vars: Vec<VarId>,
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
}

impl Table {
    pub fn get(&self, levels: &[usize]) -> f64 {
        let mut k = 0;
        for (l, n) in levels.iter().zip(&self.levels) {
            k = k * n + l;
        }
        self.values[k]
    }
}

/// Values for free variables and symbols while evaluating an expression.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Env {
    pub vars: BTreeMap<String, usize>,
    pub symbols: BTreeMap<String, usize>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn var(mut self, name: &str, level: usize) -> Self {
        self.vars.insert(name.to_string(), level);
        self
    }

    pub fn symbol(mut self, name: &str, level: usize) -> Self {
        self.symbols.insert(name.to_string(), level);
        self
    }
}

impl std::fmt::Display for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .vars
            .iter()
            .chain(self.symbols.iter())
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Something that can value a conditional term.
pub trait TermSource {
    fn swig(&self) -> &Swig;

    /// `P_regime(dependents | conditioners)` at the given levels.
    fn conditional(
        &mut self,
        regime: Regime,
        dependents: &[(VarId, usize)],
        conditioners: &[(VarId, usize)],
    ) -> Result<f64, OracleError>;
}

/// Caching exact evaluator over one model.
pub struct Evaluator<'m> {
    model: &'m DiscreteModel,
    joints: HashMap<Regime, RegimeJoint>,
    marginals: HashMap<(Regime, Vec<VarId>), Vec<f64>>,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m DiscreteModel) -> Self {
        Evaluator {
            model,
            joints: HashMap::new(),
            marginals: HashMap::new(),
        }
    }

    fn marginal_at(&mut self, regime: Regime, fixed: &[(VarId, usize)]) -> Result<f64, OracleError> {
        let mut fixed = fixed.to_vec();
        fixed.sort();
        let vars: Vec<VarId> = fixed.iter().map(|f| f.0).collect();
        let key = (regime, vars);
        if !self.marginals.contains_key(&key) {
            if !self.joints.contains_key(&regime) {
                let j = self.model.joint(regime)?;
                self.joints.insert(regime, j);
            }
            let m = self.joints[&regime].marginal(&key.1);
            self.marginals.insert(key.clone(), m);
        }
        let table = &self.marginals[&key];
        let mut k = 0;
        for &(v, l) in &fixed {
            k = k * self.model.swig.variable(v).levels + l;
        }
        Ok(table[k])
    }
}

impl TermSource for Evaluator<'_> {
    fn swig(&self) -> &Swig {
        &self.model.swig
    }

    fn conditional(
        &mut self,
        regime: Regime,
        dependents: &[(VarId, usize)],
        conditioners: &[(VarId, usize)],
    ) -> Result<f64, OracleError> {
        let denom = if conditioners.is_empty() {
            1.0
        } else {
            self.marginal_at(regime, conditioners)?
        };
        if denom < MIN_CONDITIONING_PROB {
            return Err(OracleError::ZeroProbability(self.model.describe(conditioners)));
        }
        let mut all = conditioners.to_vec();
        all.extend_from_slice(dependents);
        Ok(self.marginal_at(regime, &all)? / denom)
    }
}

fn resolve_term(
    swig: &Swig,
    t: &Term,
    env: &Env,
) -> Result<(Vec<(VarId, usize)>, Vec<(VarId, usize)>), OracleError> {
    let resolve = |slots: &[crate::expr::Slot]| -> Result<Vec<(VarId, usize)>, OracleError> {
        slots
            .iter()
            .map(|s| {
                let id = swig.require(&s.var.name)?;
                let level = match &s.value {
                    None => *env
                        .vars
                        .get(&s.var.name)
                        .ok_or_else(|| OracleError::UnboundVariable(s.var.name.clone()))?,
                    Some(ValueRef::Level(l)) => *l,
                    Some(ValueRef::Sym(x)) => *env
                        .symbols
                        .get(x)
                        .ok_or_else(|| OracleError::UnboundSymbol(x.clone()))?,
                };
                if level >= swig.variable(id).levels {
                    return Err(OracleError::LevelOutOfRange {
                        var: s.var.name.clone(),
                        level,
                    });
                }
                Ok((id, level))
            })
            .collect()
    };
    Ok((resolve(&t.dependents)?, resolve(&t.conditioners)?))
}

/// Number of levels a symbol ranges over inside `e` (from the variables it pins).
fn symbol_levels(swig: &Swig, e: &ProbExpr, sym: &str) -> Result<usize, OracleError> {
    let mut levels = None;
    for (_, t) in e.terms() {
        for s in t.slots() {
            if s.value.as_ref().and_then(ValueRef::as_sym) == Some(sym) {
                let n = swig.variable(swig.require(&s.var.name)?).levels;
                match levels {
                    None => levels = Some(n),
                    Some(m) if m != n => return Err(OracleError::InconsistentSymbol(sym.into())),
                    _ => {}
                }
            }
        }
    }
    levels.ok_or_else(|| OracleError::UnboundSymbol(sym.into()))
}

/// Value of `e` under `env` with terms valued by `src`.
pub fn eval_with<S: TermSource>(src: &mut S, e: &ProbExpr, env: &Env) -> Result<f64, OracleError> {
    match e {
        ProbExpr::Term(t) => {
            let (dep, cond) = resolve_term(src.swig(), t, env)?;
            src.conditional(t.regime, &dep, &cond)
        }
        ProbExpr::Product { factors } => {
            let mut p = 1.0;
            for f in factors {
                p *= eval_with(src, f, env)?;
            }
            Ok(p)
        }
        ProbExpr::Sum { binders, body } => {
            let domains: Vec<usize> = binders
                .iter()
                .map(|b| symbol_levels(src.swig(), body, b))
                .collect::<Result<_, _>>()?;
            let mut env = env.clone();
            let mut total = 0.0;
            for combo in odometer(&domains) {
                for (b, l) in binders.iter().zip(&combo) {
                    env.symbols.insert(b.clone(), *l);
                }
                total += eval_with(src, body, &env)?;
            }
            Ok(total)
        }
    }
}

/// Exact value of `e` on `model` under `env`.
pub fn eval_expr(model: &DiscreteModel, e: &ProbExpr, env: &Env) -> Result<f64, OracleError> {
    eval_with(&mut Evaluator::new(model), e, env)
}

/// All assignments of the given levels, last position fastest.
pub fn odometer(levels: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = levels.iter().product();
    let mut cur = vec![0usize; levels.len()];
    (0..total).map(move |i| {
        if i > 0 {
            for k in (0..levels.len()).rev() {
                cur[k] += 1;
                if cur[k] < levels[k] {
                    break;
                }
                cur[k] = 0;
            }
        }
        cur.clone()
    })
}

/// Free variables and parameters of a set of expressions, with their domains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Axes {
    pub vars: Vec<(String, usize)>,
    pub symbols: Vec<(String, usize)>,
}

impl Axes {
    pub fn of(swig: &Swig, exprs: &[&ProbExpr]) -> Result<Axes, OracleError> {
        let mut vars: BTreeMap<String, usize> = BTreeMap::new();
        let mut symbols: BTreeMap<String, usize> = BTreeMap::new();
        for e in exprs {
            for v in e.free_variables() {
                let n = swig.variable(swig.require(&v.name)?).levels;
                vars.insert(v.name, n);
            }
            for (sym, pinned) in e.parameters() {
                for v in pinned {
                    let n = swig.variable(swig.require(&v.name)?).levels;
                    if let Some(&m) = symbols.get(&sym) {
                        if m != n {
                            return Err(OracleError::InconsistentSymbol(sym));
                        }
                    }
                    symbols.insert(sym.clone(), n);
                }
            }
        }
        Ok(Axes {
            vars: vars.into_iter().collect(),
            symbols: symbols.into_iter().collect(),
        })
    }

    /// Every environment over these axes.
    pub fn envs(&self) -> Vec<Env> {
        let domains: Vec<usize> = self
            .vars
            .iter()
            .chain(self.symbols.iter())
            .map(|(_, n)| *n)
            .collect();
        odometer(&domains)
            .map(|combo| {
                let mut env = Env::new();
                let nv = self.vars.len();
                for (i, (name, _)) in self.vars.iter().enumerate() {
                    env.vars.insert(name.clone(), combo[i]);
                }
                for (i, (name, _)) in self.symbols.iter().enumerate() {
                    env.symbols.insert(name.clone(), combo[nv + i]);
                }
                env
            })
            .collect()
    }
}

/// Values of `e` at every assignment of its free variables and parameters.
pub fn eval_table(model: &DiscreteModel, e: &ProbExpr) -> Result<Vec<(Env, f64)>, OracleError> {
    let axes = Axes::of(&model.swig, &[e])?;
    let mut ev = Evaluator::new(model);
    axes.envs()
        .into_iter()
        .map(|env| {
            let v = eval_with(&mut ev, e, &env)?;
            Ok((env, v))
        })
        .collect()
}

/// Largest absolute difference between `a` and `b` over the union of their axes.
pub fn max_deviation(model: &DiscreteModel, a: &ProbExpr, b: &ProbExpr) -> Result<f64, OracleError> {
    let mut ev = Evaluator::new(model);
    max_deviation_with(&mut ev, a, b)
}

pub fn max_deviation_with<S: TermSource>(src: &mut S, a: &ProbExpr, b: &ProbExpr) -> Result<f64, OracleError> {
    let axes = Axes::of(src.swig(), &[a, b])?;
    let mut worst: f64 = 0.0;
    for env in axes.envs() {
        let x = eval_with(src, a, &env)?;
        let y = eval_with(src, b, &env)?;
        worst = worst.max((x - y).abs());
    }
    Ok(worst)
}

/// Result of an exhaustive independence test on a model.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceCi {
    pub independent: bool,
    /// Largest `|P(x,y|z) - P(x|z)P(y|z)|` over all assignments.
    pub max_gap: f64,
    /// Conditioning assignments skipped for having (near) zero probability.
    pub skipped_strata: usize,
}

/// Tests `q.x ⫫ q.y | q.z` in the regime joint by enumeration.
pub fn brute_force_ci(model: &DiscreteModel, q: &CiQuery, tol: f64) -> Result<BruteForceCi, OracleError> {
    let (x, y, z) = q.resolve(&model.swig).map_err(|e| match e {
        crate::graph::QueryError::Model(m) => OracleError::Model(m),
        other => OracleError::Model(ModelError::InvalidEstimand(other.to_string())),
    })?;
    let joint = model.joint(q.regime)?;
    let (x, y, z): (Vec<VarId>, Vec<VarId>, Vec<VarId>) =
        (x.into_iter().collect(), y.into_iter().collect(), z.into_iter().collect());
    let mut all = z.clone();
    all.extend(&x);
    all.extend(&y);
    let marg = joint.marginal(&all);
    let size = |vs: &[VarId]| -> usize { vs.iter().map(|v| joint.levels[v.0]).product() };
    let (nz, nx, ny) = (size(&z), size(&x), size(&y));
    let mut max_gap: f64 = 0.0;
    let mut skipped = 0;
    for zi in 0..nz {
        let block = &marg[zi * nx * ny..(zi + 1) * nx * ny];
        let pz: f64 = block.iter().sum();
        if pz < MIN_CONDITIONING_PROB {
            skipped += 1;
            continue;
        }
        let px: Vec<f64> = (0..nx).map(|i| block[i * ny..(i + 1) * ny].iter().sum::<f64>() / pz).collect();
        let py: Vec<f64> = (0..ny).map(|j| (0..nx).map(|i| block[i * ny + j]).sum::<f64>() / pz).collect();
        for i in 0..nx {
            for j in 0..ny {
                max_gap = max_gap.max((block[i * ny + j] / pz - px[i] * py[j]).abs());
            }
        }
    }
    Ok(BruteForceCi {
        independent: max_gap <= tol,
        max_gap,
        skipped_strata: skipped,
    })
}

/// Variables of `vars` resolved to ids, for callers holding names.
pub fn ids(swig: &Swig, vars: &[&str]) -> Result<Vec<VarId>, OracleError> {
    vars.iter().map(|v| Ok(swig.require(v)?)).collect()
}
