//! Bounded search for a derivation: introduce a few observed variables, split
//! the joint term into single-variable factors, and push each factor to `q0`
//! with a fixed preference order over the rules.

use std::collections::BTreeSet;

use super::recipes::{run, subsets, topo_sorted};
use super::{finish, Builder, Derivation, Direction, IdentError, Rule, Status, Stop, Strategy};
use crate::expr::{Term, ValueRef};
use crate::graph::CiQuery;
use crate::ident::rules::CiAction;
use crate::model::{Regime, Swig, VarId};

const MAX_LOCAL_STEPS: usize = 64;

pub(crate) fn search(
    swig: &Swig,
    term: &Term,
    direction: Direction,
    depth: usize,
    strategy: &Strategy,
) -> Result<Derivation, IdentError> {
    if depth == 0 {
        return Err(IdentError::StrategyInapplicable("search depth must be at least 1".into()));
    }
    match direction {
        Direction::TopDown => top_down(swig, term, depth, strategy),
        Direction::BottomUp => bottom_up(swig, term, depth, strategy),
    }
}

fn pool(swig: &Swig, term: &Term, keep: impl Fn(VarId) -> bool) -> Vec<String> {
    let mut out: Vec<(u32, String)> = (0..swig.len())
        .map(VarId)
        .filter(|&v| {
            let var = swig.variable(v);
            var.observed && !swig.is_intervention(v) && !term.mentions(&var.name) && keep(v)
        })
        .map(|v| (swig.variable(v).time, swig.variable(v).name.clone()))
        .collect();
    out.sort();
    out.into_iter().map(|(_, n)| n).collect()
}

fn attempt<'s>(swig: &'s Swig, term: &Term, set: &[String]) -> super::recipes::Outcome<'s> {
    run(swig, term, |b| {
        let deps: Vec<String> = term.dependents.iter().map(|s| s.var.name.clone()).collect();
        if !set.is_empty() {
            let rule = Rule::total_probability(&b.expr, set);
            b.apply_to(&deps[0], rule)?;
        }
        let mut all = deps.clone();
        all.extend(set.iter().cloned());
        let mut order = topo_sorted(swig, &all);
        order.reverse();
        if order.len() > 1 {
            let blocks = order.iter().map(|v| vec![v.clone()]).collect();
            b.apply_to(&deps[0], Rule::Product { blocks })?;
        }
        for v in &order {
            localize(b, v)?;
        }
        Ok(())
    })
}

fn top_down(swig: &Swig, term: &Term, depth: usize, strategy: &Strategy) -> Result<Derivation, IdentError> {
    let candidates = pool(swig, term, |_| true);
    let mut first = None;
    for set in subsets(&candidates, depth) {
        let d = finish(swig, strategy, term, attempt(swig, term, &set))?;
        if d.status.is_identified() {
            return Ok(d);
        }
        first.get_or_insert(d);
    }
    Ok(not_found(first.expect("the empty set is always tried"), depth))
}

fn not_found(mut d: Derivation, depth: usize) -> Derivation {
    if let Status::NotIdentified { reason, .. } = &mut d.status {
        *reason = format!("search to depth {depth} found no derivation; first attempt: {reason}");
    }
    d
}

/// Grows the introduced set one variable at a time, walking the observed
/// ancestors of the dependents forward in time and keeping a variable when its
/// own factor can be brought to `q0` given the ones kept before it.
fn bottom_up(swig: &Swig, term: &Term, depth: usize, strategy: &Strategy) -> Result<Derivation, IdentError> {
    let g = swig.regime_graph(Regime::OBSERVED)?;
    let deps: Vec<VarId> = term
        .dependents
        .iter()
        .map(|s| swig.require(&s.var.name))
        .collect::<Result<_, _>>()?;
    let anc = g.ancestors(deps);
    let candidates = topo_sorted(swig, &pool(swig, term, |v| anc[v.0]));

    let mut kept: Vec<String> = Vec::new();
    for v in &candidates {
        if kept.len() >= depth {
            break;
        }
        let id = swig.require(v)?;
        let mut factor = Term::new(
            term.regime,
            vec![crate::expr::Slot::new(swig.var_ref(id), Some(ValueRef::sym(format!("{}_", v.to_lowercase()))))],
            term.conditioners.clone(),
        );
        for k in &kept {
            let kid = swig.require(k)?;
            factor.conditioners.push(crate::expr::Slot::new(
                swig.var_ref(kid),
                Some(ValueRef::sym(format!("{}_", k.to_lowercase()))),
            ));
        }
        let mut scratch = Builder::new(swig, &factor);
        if localize(&mut scratch, v).is_ok() {
            kept.push(v.clone());
        }
    }

    let d = finish(swig, strategy, term, attempt(swig, term, &kept))?;
    if d.status.is_identified() {
        return Ok(d);
    }
    // the greedy set can overshoot; fall back to its subsets, smallest first
    let mut first = None;
    for set in subsets(&kept, kept.len()) {
        let d = finish(swig, strategy, term, attempt(swig, term, &set))?;
        if d.status.is_identified() {
            return Ok(d);
        }
        first.get_or_insert(d);
    }
    Ok(not_found(first.unwrap_or(d), depth))
}

struct Local<'a, 'b, 's> {
    b: &'a mut Builder<'s>,
    key: &'b str,
    blocked: Option<CiQuery>,
}

impl<'s> Local<'_, '_, 's> {
    fn term(&self) -> Result<Term, Stop> {
        Ok(self.b.term_of(self.key)?)
    }

    fn names(&self, t: usize) -> (String, String) {
        let p = self.b.swig.pair(t).expect("valid index");
        (
            self.b.swig.variable(p.target).name.clone(),
            self.b.swig.variable(p.intervention).name.clone(),
        )
    }

    /// Applies `rules` in order on a copy; commits only if all succeed.
    fn try_all(&mut self, rules: &[Rule]) -> Result<bool, Stop> {
        let mut scratch = self.b.clone();
        for r in rules {
            if let Err(e) = scratch.apply_to(self.key, r.clone()) {
                match Stop::from(e) {
                    Stop::Blocked { query, .. } => {
                        if self.blocked.is_none() {
                            self.blocked = query;
                        }
                    }
                    Stop::Error(IdentError::Rule(_)) => {}
                    Stop::Error(e) => return Err(Stop::Error(e)),
                }
                return Ok(false);
            }
        }
        *self.b = scratch;
        Ok(true)
    }

    fn cutoffs(&self, term: &Term) -> Vec<Option<u32>> {
        let swig = self.b.swig;
        let mut times = BTreeSet::new();
        for t in 1..=swig.num_targets() {
            let (_, xo) = self.names(t);
            if term.regime.contains(t) || term.mentions(&xo) {
                let time = swig.variable(swig.pair(t).unwrap().intervention).time;
                times.insert(time);
            }
        }
        let mut out = vec![None];
        out.extend(times.into_iter().filter(|&t| t > 0).map(|t| Some(t - 1)));
        out.dedup();
        out
    }

    fn step(&mut self) -> Result<bool, Stop> {
        let term = self.term()?;
        let swig = self.b.swig;

        if !term.regime.is_observed() {
            for c in self.cutoffs(&term) {
                if self.try_all(&[Rule::DropLater { keep_through: c }])? {
                    return Ok(true);
                }
            }
        }

        for t in term.regime.indices().collect::<Vec<_>>().into_iter().rev() {
            if self.try_all(&[Rule::Consistency { index: t }])? {
                return Ok(true);
            }
        }

        for t in 1..=swig.num_targets() {
            let (_, xo) = self.names(t);
            if !term.regime.contains(t) && term.mentions(&xo) && self.try_all(&[Rule::Redundancy { index: t }])? {
                return Ok(true);
            }
        }

        for t in term.regime.indices() {
            let (x, xo) = self.names(t);
            let Some(vo) = term.conditioner(&xo).and_then(|s| s.value.clone()) else {
                continue;
            };
            if term.dependent(&x).is_some() {
                continue;
            }
            match term.conditioner(&x).and_then(|s| s.value.clone()) {
                None => {
                    let insert = Rule::CiModify {
                        var: x,
                        action: CiAction::Insert { value: vo },
                    };
                    if self.try_all(&[insert])? {
                        return Ok(true);
                    }
                }
                Some(vx) if vx != vo => {
                    let move_o = Rule::CiModify {
                        var: xo,
                        action: CiAction::Change { value: vx },
                    };
                    if self.try_all(&[move_o])? {
                        return Ok(true);
                    }
                    let move_x = Rule::CiModify {
                        var: x,
                        action: CiAction::Change { value: vo },
                    };
                    if self.try_all(&[move_x])? {
                        return Ok(true);
                    }
                }
                Some(_) => {}
            }
        }

        if !term.regime.is_observed() {
            let plain: Vec<String> = term
                .conditioners
                .iter()
                .filter(|s| !swig.is_intervention(swig.id(&s.var.name).expect("resolved")))
                .map(|s| s.var.name.clone())
                .collect();
            for c in self.cutoffs(&term) {
                for v in &plain {
                    let rules = [
                        Rule::CiModify {
                            var: v.clone(),
                            action: CiAction::Delete,
                        },
                        Rule::DropLater { keep_through: c },
                    ];
                    if self.try_all(&rules)? {
                        return Ok(true);
                    }
                }
            }
        }
        Ok(false)
    }
}

/// Rewrites the factor with dependent `key` until it is an observed-regime
/// term free of intervention nodes, or no rule applies.
pub(crate) fn localize(b: &mut Builder<'_>, key: &str) -> Result<(), Stop> {
    let mut seen = BTreeSet::new();
    let mut local = Local { b, key, blocked: None };
    for _ in 0..MAX_LOCAL_STEPS {
        let term = local.term()?;
        let clean = term.regime.is_observed()
            && term.slots().all(|s| {
                let id = local.b.swig.id(&s.var.name).expect("resolved");
                !local.b.swig.is_intervention(id)
            });
        if clean || !seen.insert(term.to_string()) {
            return Ok(());
        }
        if !local.step()? {
            return Err(Stop::Blocked {
                reason: format!("no rule brings {term} to the observed regime"),
                query: local.blocked,
            });
        }
    }
    Ok(())
}
