//! Probability expressions over regime-indexed distributions.
//!
//! An expression is a tree of [`Term`]s (`q_s(A | B)`), sums over bound value
//! symbols and products. Symbols not bound by an enclosing sum are parameters
//! of the expression (the `d1` in `q1(Y1 | Do1=d1)`); variables without a value
//! are free and range over all their levels.

mod text;

pub use text::{parse_expr, parse_expr_with, ParseError};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Regime;

/// A variable as referenced from an expression. Ordered by `(time, name)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarRef {
    pub name: String,
    pub time: u32,
}

impl VarRef {
    pub fn new(name: impl Into<String>, time: u32) -> Self {
        VarRef {
            name: name.into(),
            time,
        }
    }
}

impl Ord for VarRef {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, &self.name).cmp(&(other.time, &other.name))
    }
}

impl PartialOrd for VarRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The value a variable is pinned to inside a term.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRef {
    Level(usize),
    #[serde(rename = "symbol")]
    Sym(String),
}

impl ValueRef {
    pub fn sym(s: impl Into<String>) -> Self {
        ValueRef::Sym(s.into())
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            ValueRef::Sym(s) => Some(s),
            ValueRef::Level(_) => None,
        }
    }
}

impl fmt::Display for ValueRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueRef::Level(l) => write!(f, "{l}"),
            ValueRef::Sym(s) => f.write_str(s),
        }
    }
}

/// A variable inside a term, optionally pinned to a value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub var: VarRef,
    pub value: Option<ValueRef>,
}

impl Slot {
    pub fn new(var: VarRef, value: Option<ValueRef>) -> Self {
        Slot { var, value }
    }

    pub fn bare(var: VarRef) -> Self {
        Slot { var, value: None }
    }

    pub fn name(&self) -> &str {
        &self.var.name
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Some(v) => write!(f, "{}={}", self.var.name, v),
            None => f.write_str(&self.var.name),
        }
    }
}

/// `q_regime(dependents | conditioners)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub regime: Regime,
    pub dependents: Vec<Slot>,
    pub conditioners: Vec<Slot>,
}

impl Term {
    pub fn new(regime: Regime, dependents: Vec<Slot>, conditioners: Vec<Slot>) -> Self {
        Term {
            regime,
            dependents,
            conditioners,
        }
    }

    pub fn dependent(&self, name: &str) -> Option<&Slot> {
        self.dependents.iter().find(|s| s.var.name == name)
    }

    pub fn conditioner(&self, name: &str) -> Option<&Slot> {
        self.conditioners.iter().find(|s| s.var.name == name)
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.dependent(name).is_some() || self.conditioner(name).is_some()
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.dependents.iter().chain(self.conditioners.iter())
    }

    pub fn dependent_names(&self) -> BTreeSet<&str> {
        self.dependents.iter().map(|s| s.name()).collect()
    }

    fn symbols(&self) -> impl Iterator<Item = &str> {
        self.slots()
            .filter_map(|s| s.value.as_ref().and_then(ValueRef::as_sym))
    }

    /// Dependents and conditioners each sorted by `(time, name)`.
    pub fn sorted(&self) -> Term {
        let mut t = self.clone();
        t.dependents.sort_by(|a, b| a.var.cmp(&b.var));
        t.conditioners.sort_by(|a, b| a.var.cmp(&b.var));
        t
    }

    fn map_symbols(&self, f: &mut impl FnMut(&str) -> String) -> Term {
        let map = |s: &Slot, f: &mut dyn FnMut(&str) -> String| Slot {
            var: s.var.clone(),
            value: s.value.as_ref().map(|v| match v {
                ValueRef::Sym(x) => ValueRef::Sym(f(x)),
                other => other.clone(),
            }),
        };
        Term {
            regime: self.regime,
            dependents: self.dependents.iter().map(|s| map(s, f)).collect(),
            conditioners: self.conditioners.iter().map(|s| map(s, f)).collect(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.regime)?;
        for (i, s) in self.dependents.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        if !self.conditioners.is_empty() {
            f.write_str(" | ")?;
            for (i, s) in self.conditioners.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{s}")?;
            }
        }
        f.write_str(")")
    }
}

/// Location of a node: child indices from the root (a sum has one child, 0).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermPath(pub Vec<usize>);

impl TermPath {
    pub fn root() -> Self {
        TermPath(Vec::new())
    }

    fn child(&self, i: usize) -> TermPath {
        let mut p = self.0.clone();
        p.push(i);
        TermPath(p)
    }
}

impl fmt::Display for TermPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "/{}", parts.join("/"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("variable `{0}` appears more than once in a term")]
    RepeatedVariable(String),
    #[error("binder `{0}` is never used")]
    UnusedBinder(String),
    #[error("binder `{0}` is bound twice")]
    DuplicateBinder(String),
    #[error("sum without binders")]
    EmptyBinders,
    #[error("product without factors")]
    EmptyProduct,
    #[error("term without dependents")]
    NoDependents,
    #[error("no node at path {0}")]
    BadPath(TermPath),
}

/// Expression tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum ProbExpr {
    Term(Term),
    Sum {
        binders: Vec<String>,
        body: Box<ProbExpr>,
    },
    Product {
        factors: Vec<ProbExpr>,
    },
}

impl From<Term> for ProbExpr {
    fn from(t: Term) -> Self {
        ProbExpr::Term(t)
    }
}

impl ProbExpr {
    pub fn sum(binders: Vec<String>, body: ProbExpr) -> ProbExpr {
        if binders.is_empty() {
            return body;
        }
        ProbExpr::Sum {
            binders,
            body: Box::new(body),
        }
    }

    /// Product of `factors`, splicing nested products; a single factor is returned as is.
    pub fn product(factors: Vec<ProbExpr>) -> ProbExpr {
        let mut flat = Vec::with_capacity(factors.len());
        for f in factors {
            match f {
                ProbExpr::Product { factors } => flat.extend(factors),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            ProbExpr::Product { factors: flat }
        }
    }

    pub fn as_term(&self) -> Option<&Term> {
        match self {
            ProbExpr::Term(t) => Some(t),
            _ => None,
        }
    }

    pub fn node_at(&self, path: &TermPath) -> Option<&ProbExpr> {
        let mut cur = self;
        for &i in &path.0 {
            cur = match cur {
                ProbExpr::Term(_) => return None,
                ProbExpr::Sum { body, .. } => {
                    if i != 0 {
                        return None;
                    }
                    body
                }
                ProbExpr::Product { factors } => factors.get(i)?,
            };
        }
        Some(cur)
    }

    pub fn term_at(&self, path: &TermPath) -> Option<&Term> {
        self.node_at(path).and_then(ProbExpr::as_term)
    }

    /// Replaces the node at `path`; a product replacing a product factor is spliced in.
    pub fn replace_at(&self, path: &TermPath, new: ProbExpr) -> Result<ProbExpr, ExprError> {
        fn go(e: &ProbExpr, path: &[usize], new: ProbExpr) -> Option<ProbExpr> {
            let Some((&first, rest)) = path.split_first() else {
                return Some(new);
            };
            match e {
                ProbExpr::Term(_) => None,
                ProbExpr::Sum { binders, body } => {
                    if first != 0 {
                        return None;
                    }
                    Some(ProbExpr::Sum {
                        binders: binders.clone(),
                        body: Box::new(go(body, rest, new)?),
                    })
                }
                ProbExpr::Product { factors } => {
                    factors.get(first)?;
                    let replaced = go(&factors[first], rest, new)?;
                    let mut out = Vec::with_capacity(factors.len() + 2);
                    for (i, f) in factors.iter().enumerate() {
                        if i != first {
                            out.push(f.clone());
                        } else if let ProbExpr::Product { factors: inner } = replaced.clone() {
                            out.extend(inner);
                        } else {
                            out.push(replaced.clone());
                        }
                    }
                    Some(ProbExpr::Product { factors: out })
                }
            }
        }
        go(self, &path.0, new).ok_or_else(|| ExprError::BadPath(path.clone()))
    }

    /// Every term with its path, in left-to-right order.
    pub fn terms(&self) -> Vec<(TermPath, &Term)> {
        fn go<'a>(e: &'a ProbExpr, path: TermPath, out: &mut Vec<(TermPath, &'a Term)>) {
            match e {
                ProbExpr::Term(t) => out.push((path, t)),
                ProbExpr::Sum { body, .. } => go(body, path.child(0), out),
                ProbExpr::Product { factors } => {
                    for (i, f) in factors.iter().enumerate() {
                        go(f, path.child(i), out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(self, TermPath::root(), &mut out);
        out
    }

    /// First term satisfying `pred`.
    pub fn find_term(&self, pred: impl Fn(&Term) -> bool) -> Option<TermPath> {
        self.terms()
            .into_iter()
            .find(|(_, t)| pred(t))
            .map(|(p, _)| p)
    }

    pub fn regimes_used(&self) -> BTreeSet<Regime> {
        self.terms().into_iter().map(|(_, t)| t.regime).collect()
    }

    /// Every variable mentioned anywhere.
    pub fn variables(&self) -> BTreeSet<VarRef> {
        self.terms()
            .into_iter()
            .flat_map(|(_, t)| t.slots().map(|s| s.var.clone()).collect::<Vec<_>>())
            .collect()
    }

    /// Variables appearing without a value: the expression is a function of them.
    pub fn free_variables(&self) -> BTreeSet<VarRef> {
        self.terms()
            .into_iter()
            .flat_map(|(_, t)| {
                t.slots()
                    .filter(|s| s.value.is_none())
                    .map(|s| s.var.clone())
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Symbols not bound by an enclosing sum, with the variables they pin.
    pub fn parameters(&self) -> BTreeMap<String, BTreeSet<VarRef>> {
        let mut out: BTreeMap<String, BTreeSet<VarRef>> = BTreeMap::new();
        self.visit_symbols(&mut |sym, var, bound| {
            if !bound {
                out.entry(sym.to_string()).or_default().insert(var.clone());
            }
        });
        out
    }

    /// Every symbol, bound or free.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_symbols(&mut |s, _, _| {
            out.insert(s.to_string());
        });
        if let ProbExpr::Sum { .. } | ProbExpr::Product { .. } = self {
            self.visit_binders(&mut |b| {
                out.insert(b.to_string());
            });
        }
        out
    }

    fn visit_binders(&self, f: &mut impl FnMut(&str)) {
        match self {
            ProbExpr::Term(_) => {}
            ProbExpr::Sum { binders, body } => {
                binders.iter().for_each(|b| f(b));
                body.visit_binders(f);
            }
            ProbExpr::Product { factors } => factors.iter().for_each(|x| x.visit_binders(f)),
        }
    }

    fn visit_symbols(&self, f: &mut impl FnMut(&str, &VarRef, bool)) {
        fn go(e: &ProbExpr, scope: &mut Vec<String>, f: &mut impl FnMut(&str, &VarRef, bool)) {
            match e {
                ProbExpr::Term(t) => {
                    for s in t.slots() {
                        if let Some(ValueRef::Sym(x)) = &s.value {
                            f(x, &s.var, scope.contains(x));
                        }
                    }
                }
                ProbExpr::Sum { binders, body } => {
                    let n = scope.len();
                    scope.extend(binders.iter().cloned());
                    go(body, scope, f);
                    scope.truncate(n);
                }
                ProbExpr::Product { factors } => {
                    for x in factors {
                        go(x, scope, f);
                    }
                }
            }
        }
        go(self, &mut Vec::new(), f)
    }

    /// Structural well-formedness.
    pub fn validate(&self) -> Result<(), ExprError> {
        fn go(e: &ProbExpr, scope: &mut Vec<String>) -> Result<(), ExprError> {
            match e {
                ProbExpr::Term(t) => {
                    if t.dependents.is_empty() {
                        return Err(ExprError::NoDependents);
                    }
                    let mut seen = BTreeSet::new();
                    for s in t.slots() {
                        if !seen.insert(&s.var.name) {
                            return Err(ExprError::RepeatedVariable(s.var.name.clone()));
                        }
                    }
                    Ok(())
                }
                ProbExpr::Sum { binders, body } => {
                    if binders.is_empty() {
                        return Err(ExprError::EmptyBinders);
                    }
                    let n = scope.len();
                    for b in binders {
                        if scope.contains(b) {
                            return Err(ExprError::DuplicateBinder(b.clone()));
                        }
                        scope.push(b.clone());
                    }
                    go(body, scope)?;
                    scope.truncate(n);
                    let used: BTreeSet<String> = body.symbols();
                    if let Some(b) = binders.iter().find(|b| !used.contains(*b)) {
                        return Err(ExprError::UnusedBinder(b.clone()));
                    }
                    Ok(())
                }
                ProbExpr::Product { factors } => {
                    if factors.is_empty() {
                        return Err(ExprError::EmptyProduct);
                    }
                    factors.iter().try_for_each(|f| go(f, scope))
                }
            }
        }
        go(self, &mut Vec::new())
    }

    /// Canonical form: a single sum over all binders (pulled to the front) of a
    /// flat product of terms. Terms are internally sorted by `(time, name)`,
    /// factors are sorted, and bound symbols are renamed in first-use order.
    pub fn canonicalize(&self) -> Result<ProbExpr, ExprError> {
        self.validate()?;
        let params: BTreeSet<String> = self.parameters().into_keys().collect();

        // Prenex form with capture-free internal names.
        let mut terms = Vec::new();
        let mut binders = Vec::new();
        collect_prenex(self, &mut HashMap::new(), &mut binders, &mut terms);
        let mut terms: Vec<Term> = terms.iter().map(Term::sorted).collect();

        let mut names: HashMap<String, String> = HashMap::new();
        for _ in 0..16 {
            terms.sort_by(|a, b| {
                masked_key(a)
                    .cmp(&masked_key(b))
                    .then_with(|| bound_names(a, &names).cmp(&bound_names(b, &names)))
            });
            let next = first_use_names(&terms, &params);
            if next == names {
                break;
            }
            names = next;
        }

        let mut order: Vec<(String, String)> =
            names.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        order.sort_by_key(|(k, _)| first_use_rank(&terms, k));
        let mut renamed: Vec<ProbExpr> = terms
            .iter()
            .map(|t| {
                ProbExpr::Term(
                    t.map_symbols(&mut |s| names.get(s).cloned().unwrap_or_else(|| s.to_string())),
                )
            })
            .collect();
        let body = if renamed.len() == 1 {
            renamed.pop().unwrap()
        } else {
            ProbExpr::Product { factors: renamed }
        };
        debug_assert_eq!(order.len(), binders.len());
        Ok(ProbExpr::sum(
            order.into_iter().map(|(_, v)| v).collect(),
            body,
        ))
    }

    /// Equality of canonical forms.
    pub fn struct_eq(&self, other: &ProbExpr) -> bool {
        match (self.canonicalize(), other.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }
}

const INTERNAL: char = '#';

fn collect_prenex(
    e: &ProbExpr,
    scope: &mut HashMap<String, String>,
    binders: &mut Vec<String>,
    terms: &mut Vec<Term>,
) {
    match e {
        ProbExpr::Term(t) => {
            terms.push(
                t.map_symbols(&mut |s| scope.get(s).cloned().unwrap_or_else(|| s.to_string())),
            );
        }
        ProbExpr::Sum { binders: bs, body } => {
            let saved: Vec<(String, Option<String>)> = bs
                .iter()
                .map(|b| {
                    let fresh = format!("{INTERNAL}{}", binders.len());
                    binders.push(fresh.clone());
                    (b.clone(), scope.insert(b.clone(), fresh))
                })
                .collect();
            collect_prenex(body, scope, binders, terms);
            for (b, old) in saved.into_iter().rev() {
                match old {
                    Some(o) => scope.insert(b, o),
                    None => scope.remove(&b),
                };
            }
        }
        ProbExpr::Product { factors } => {
            for f in factors {
                collect_prenex(f, scope, binders, terms);
            }
        }
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum ValKey<'a> {
    Bare,
    Level(usize),
    Param(&'a str),
    Bound,
}

type SlotKey<'a> = (&'a VarRef, ValKey<'a>);

fn slot_key(s: &Slot) -> SlotKey<'_> {
    let v = match &s.value {
        None => ValKey::Bare,
        Some(ValueRef::Level(l)) => ValKey::Level(*l),
        Some(ValueRef::Sym(x)) if x.starts_with(INTERNAL) => ValKey::Bound,
        Some(ValueRef::Sym(x)) => ValKey::Param(x),
    };
    (&s.var, v)
}

fn masked_key(t: &Term) -> (Regime, Vec<SlotKey<'_>>, Vec<SlotKey<'_>>) {
    (
        t.regime,
        t.dependents.iter().map(slot_key).collect(),
        t.conditioners.iter().map(slot_key).collect(),
    )
}

fn bound_names<'a>(t: &'a Term, names: &'a HashMap<String, String>) -> Vec<&'a str> {
    t.symbols()
        .filter(|s| s.starts_with(INTERNAL))
        .map(|s| names.get(s).map(String::as_str).unwrap_or(""))
        .collect()
}

fn first_use_names(terms: &[Term], params: &BTreeSet<String>) -> HashMap<String, String> {
    let mut out: HashMap<String, String> = HashMap::new();
    let mut taken: BTreeSet<String> = params.clone();
    for t in terms {
        for s in t.slots() {
            if let Some(ValueRef::Sym(x)) = &s.value {
                if x.starts_with(INTERNAL) && !out.contains_key(x) {
                    let name = fresh_symbol(&s.var.name, &taken);
                    taken.insert(name.clone());
                    out.insert(x.clone(), name);
                }
            }
        }
    }
    out
}

fn first_use_rank(terms: &[Term], internal: &str) -> usize {
    terms
        .iter()
        .flat_map(|t| t.symbols())
        .position(|s| s == internal)
        .unwrap_or(usize::MAX)
}

/// Lower-cased variable name, primed until it avoids every name in `taken`.
pub fn fresh_symbol(var_name: &str, taken: &BTreeSet<String>) -> String {
    let mut name = var_name.to_lowercase();
    while taken.contains(&name) {
        name.push('\'');
    }
    name
}

impl fmt::Display for ProbExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbExpr::Term(t) => write!(f, "{t}"),
            ProbExpr::Sum { binders, body } => {
                write!(f, "sum{{{}}} {}", binders.join(","), body)
            }
            ProbExpr::Product { factors } => {
                for (i, x) in factors.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" * ")?;
                    }
                    match x {
                        ProbExpr::Term(t) => write!(f, "{t}")?,
                        other => write!(f, "({other})")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str, time: u32) -> VarRef {
        VarRef::new(name, time)
    }

    fn slot(name: &str, time: u32, val: Option<&str>) -> Slot {
        Slot::new(v(name, time), val.map(ValueRef::sym))
    }

    fn backdoor() -> ProbExpr {
        ProbExpr::sum(
            vec!["l".into()],
            ProbExpr::product(vec![
                Term::new(
                    Regime::OBSERVED,
                    vec![slot("Y1", 1, None)],
                    vec![slot("D1", 1, Some("d1")), slot("L", 0, Some("l"))],
                )
                .into(),
                Term::new(Regime::OBSERVED, vec![slot("L", 0, Some("l"))], vec![]).into(),
            ]),
        )
    }

    fn frontdoor(d: &str, m: &str) -> ProbExpr {
        ProbExpr::sum(
            vec![m.into(), d.into()],
            ProbExpr::product(vec![
                Term::new(
                    Regime::OBSERVED,
                    vec![slot("Y1", 1, None)],
                    vec![slot("D1", 1, Some(d)), slot("M1", 1, Some(m))],
                )
                .into(),
                Term::new(Regime::OBSERVED, vec![slot("D1", 1, Some(d))], vec![]).into(),
                Term::new(
                    Regime::OBSERVED,
                    vec![slot("M1", 1, Some(m))],
                    vec![slot("D1", 1, Some("d1"))],
                )
                .into(),
            ]),
        )
    }

    #[test]
    fn conditioner_order_is_irrelevant() {
        let a = Term::new(
            Regime::OBSERVED,
            vec![slot("Y1", 1, None)],
            vec![slot("L", 0, None), slot("D1", 1, None)],
        );
        let mut b = a.clone();
        b.conditioners.reverse();
        assert_ne!(a, b);
        assert_eq!(
            ProbExpr::from(a).canonicalize().unwrap(),
            ProbExpr::from(b).canonicalize().unwrap()
        );
    }

    #[test]
    fn nested_products_flatten() {
        let t =
            |n: &str| ProbExpr::from(Term::new(Regime::OBSERVED, vec![slot(n, 0, None)], vec![]));
        let nested = ProbExpr::Product {
            factors: vec![
                ProbExpr::Product {
                    factors: vec![t("A"), t("B")],
                },
                t("C"),
            ],
        };
        let flat = ProbExpr::Product {
            factors: vec![t("A"), t("B"), t("C")],
        };
        assert_eq!(nested.canonicalize().unwrap(), flat);
        assert_eq!(
            ProbExpr::product(vec![ProbExpr::product(vec![t("A"), t("B")]), t("C")]),
            flat
        );
    }

    #[test]
    fn alpha_equivalent_front_door_forms_are_equal() {
        let a = frontdoor("d1'", "m");
        let b = frontdoor("x", "y");
        assert!(a.struct_eq(&b));
        let c = a.canonicalize().unwrap();
        assert_eq!(
            c.to_string(),
            "sum{d1',m1} q0(D1=d1') * q0(M1=m1 | D1=d1) * q0(Y1 | D1=d1', M1=m1)"
        );
    }

    #[test]
    fn back_door_and_front_door_differ() {
        assert!(backdoor().struct_eq(&backdoor()));
        assert!(!backdoor().struct_eq(&frontdoor("e", "m")));
    }

    #[test]
    fn sums_are_pulled_out_of_products() {
        // sum_m [ (sum_e A(e, m)) * B(m) ]  ==  sum_{e,m} A(e, m) * B(m)
        let a = Term::new(
            Regime::OBSERVED,
            vec![slot("Y1", 1, None)],
            vec![slot("D1", 1, Some("e")), slot("M1", 1, Some("m"))],
        );
        let b = Term::new(Regime::OBSERVED, vec![slot("M1", 1, Some("m"))], vec![]);
        let nested = ProbExpr::sum(
            vec!["m".into()],
            ProbExpr::product(vec![
                ProbExpr::sum(vec!["e".into()], a.clone().into()),
                b.clone().into(),
            ]),
        );
        let flat = ProbExpr::sum(
            vec!["e".into(), "m".into()],
            ProbExpr::product(vec![a.into(), b.into()]),
        );
        assert!(nested.struct_eq(&flat));
    }

    #[test]
    fn canonicalize_is_idempotent_on_fixtures() {
        for e in [backdoor(), frontdoor("p", "q")] {
            let once = e.canonicalize().unwrap();
            assert_eq!(once.canonicalize().unwrap(), once);
        }
    }

    #[test]
    fn validation_errors() {
        let t = Term::new(Regime::OBSERVED, vec![slot("L", 0, Some("l"))], vec![]);
        let unused = ProbExpr::sum(vec!["l".into(), "z".into()], t.clone().into());
        assert_eq!(unused.validate(), Err(ExprError::UnusedBinder("z".into())));
        let dup = ProbExpr::sum(vec!["l".into()], ProbExpr::sum(vec!["l".into()], t.into()));
        assert_eq!(dup.validate(), Err(ExprError::DuplicateBinder("l".into())));
        let rep = ProbExpr::from(Term::new(
            Regime::OBSERVED,
            vec![slot("L", 0, None)],
            vec![slot("L", 0, None)],
        ));
        assert_eq!(rep.validate(), Err(ExprError::RepeatedVariable("L".into())));
    }

    #[test]
    fn regimes_and_parameters() {
        assert_eq!(
            backdoor().regimes_used(),
            BTreeSet::from([Regime::OBSERVED])
        );
        let est = ProbExpr::from(Term::new(
            Regime::prefix(1),
            vec![slot("Y1", 1, None)],
            vec![slot("Do1", 1, Some("d1"))],
        ));
        assert_eq!(est.regimes_used(), BTreeSet::from([Regime::prefix(1)]));
        assert_eq!(est.parameters().keys().collect::<Vec<_>>(), vec!["d1"]);
        assert_eq!(
            backdoor().parameters().keys().collect::<Vec<_>>(),
            vec!["d1"]
        );
        assert_eq!(
            backdoor()
                .free_variables()
                .into_iter()
                .map(|v| v.name)
                .collect::<Vec<_>>(),
            vec!["Y1"]
        );
    }

    #[test]
    fn replace_splices_products() {
        let e = backdoor();
        let path = e.find_term(|t| t.dependent("L").is_some()).unwrap();
        let extra = ProbExpr::product(vec![
            Term::new(Regime::OBSERVED, vec![slot("L", 0, Some("l"))], vec![]).into(),
            Term::new(Regime::OBSERVED, vec![slot("A", 0, Some("l"))], vec![]).into(),
        ]);
        let out = e.replace_at(&path, extra).unwrap();
        match out {
            ProbExpr::Sum { body, .. } => match *body {
                ProbExpr::Product { factors } => assert_eq!(factors.len(), 3),
                _ => panic!("expected product"),
            },
            _ => panic!("expected sum"),
        }
        assert!(e.replace_at(&TermPath(vec![0, 7]), backdoor()).is_err());
    }
}
