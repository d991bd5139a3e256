//! Built-in derivations: back-door, front-door, their sequential forms, and the
//! mediator-intervention composition.

use std::collections::BTreeSet;

use super::{finish, Builder, Derivation, IdentError, Rule, Status, Stop, Strategy};
use crate::expr::{Term, ValueRef};
use crate::graph::{d_separated, later_interventions, CiQuery};
use crate::ident::rules::CiAction;
use crate::model::{to_swig, Swig, VarId};

pub(crate) type Outcome<'s> = Result<Builder<'s>, (Builder<'s>, Stop)>;

pub(crate) fn run<'s>(
    swig: &'s Swig,
    term: &Term,
    f: impl FnOnce(&mut Builder<'s>) -> Result<(), Stop>,
) -> Outcome<'s> {
    let mut b = Builder::new(swig, term);
    match f(&mut b) {
        Ok(()) => Ok(b),
        Err(s) => Err((b, s)),
    }
}

fn inapplicable(msg: impl Into<String>) -> Stop {
    Stop::Error(IdentError::StrategyInapplicable(msg.into()))
}

fn names(slots: &[crate::expr::Slot]) -> Vec<String> {
    slots.iter().map(|s| s.var.name.clone()).collect()
}

/// Sorts variable names by the SWIG's topological order.
pub(crate) fn topo_sorted(swig: &Swig, vars: &[String]) -> Vec<String> {
    let pos = |v: &String| {
        let id = swig.id(v).expect("resolved variable");
        swig.topological_order().iter().position(|&x| x == id)
    };
    let mut out = vars.to_vec();
    out.sort_by_key(pos);
    out
}

fn check_new_vars(swig: &Swig, term: &Term, vars: &[String]) -> Result<(), Stop> {
    let mut seen = BTreeSet::new();
    for v in vars {
        let id = swig
            .id(v)
            .ok_or_else(|| inapplicable(format!("unknown variable `{v}`")))?;
        if swig.is_intervention(id) {
            return Err(inapplicable(format!("`{v}` is an intervention node")));
        }
        if term.mentions(v) || !seen.insert(v) {
            return Err(inapplicable(format!("`{v}` already appears in the estimand")));
        }
    }
    Ok(())
}

fn pair_names(swig: &Swig, t: usize) -> (String, String) {
    let p = swig.pair(t).expect("valid index");
    (
        swig.variable(p.target).name.clone(),
        swig.variable(p.intervention).name.clone(),
    )
}

fn value_of(term: &Term, var: &str) -> Option<ValueRef> {
    term.conditioner(var)
        .or_else(|| term.dependent(var))
        .and_then(|s| s.value.clone())
}

/// Active interventions of the term whose node is conditioned on.
fn conditioned_active(swig: &Swig, term: &Term) -> Vec<usize> {
    term.regime
        .indices()
        .filter(|&t| term.conditioner(&pair_names(swig, t).1).is_some())
        .collect()
}

/// Conditions on `X_t` at the value of `Xo_t` for every active `t` where `X_t`
/// is absent.
pub(crate) fn insert_targets(b: &mut Builder<'_>, key: &str) -> Result<(), Stop> {
    let term = b.term_of(key)?;
    for t in term.regime.indices() {
        let (x, xo) = pair_names(b.swig, t);
        let Some(v) = term.conditioner(&xo).and_then(|s| s.value.clone()) else {
            continue;
        };
        if !b.term_of(key)?.mentions(&x) {
            b.apply_to(
                key,
                Rule::CiModify {
                    var: x,
                    action: CiAction::Insert { value: v },
                },
            )?;
        }
    }
    Ok(())
}

/// Consistency from the highest active index down, then redundancy for every
/// inactive intervention node left in the term.
pub(crate) fn settle(b: &mut Builder<'_>, key: &str) -> Result<(), Stop> {
    let term = b.term_of(key)?;
    let active: Vec<usize> = term.regime.indices().collect();
    for &t in active.iter().rev() {
        b.apply_to(key, Rule::Consistency { index: t })?;
    }
    for t in 1..=b.swig.num_targets() {
        let term = b.term_of(key)?;
        let (_, xo) = pair_names(b.swig, t);
        if !term.regime.contains(t) && term.mentions(&xo) {
            b.apply_to(key, Rule::Redundancy { index: t })?;
        }
    }
    Ok(())
}

/// Drops interventions after `keep_through` when any are present in the term.
pub(crate) fn try_drop(b: &mut Builder<'_>, key: &str, keep_through: Option<u32>) -> Result<(), Stop> {
    let term = b.term_of(key)?;
    let relevant = later_interventions(b.swig, keep_through)
        .into_iter()
        .any(|(t, node)| term.regime.contains(t) || term.mentions(&b.swig.variable(node).name));
    if relevant {
        b.apply_to(key, Rule::DropLater { keep_through })?;
    }
    Ok(())
}

/// Conditions on copies `Xo_t` of conditioned targets `X_t` whose intervention
/// is inactive, so d-separation sees through the copy.
fn expose_copies(b: &mut Builder<'_>, key: &str) -> Result<(), Stop> {
    for t in 1..=b.swig.num_targets() {
        let term = b.term_of(key)?;
        let (x, xo) = pair_names(b.swig, t);
        if !term.regime.contains(t) && term.conditioner(&x).is_some() && !term.mentions(&xo) {
            b.apply_to(key, Rule::ReverseRedundancy { index: t })?;
        }
    }
    Ok(())
}

fn introduce(b: &mut Builder<'_>, key: &str, vars: &[String]) -> Result<(), Stop> {
    if vars.is_empty() {
        return Ok(());
    }
    let path = b.path_of(key)?;
    let rule = Rule::total_probability(&b.expr, vars);
    b.apply(&path, rule)?;
    Ok(())
}

fn split(b: &mut Builder<'_>, key: &str, blocks: Vec<Vec<String>>) -> Result<(), Stop> {
    let blocks: Vec<Vec<String>> = blocks.into_iter().filter(|b| !b.is_empty()).collect();
    if blocks.len() < 2 {
        return Ok(());
    }
    b.apply_to(key, Rule::Product { blocks })?;
    Ok(())
}

fn singletons(vars: &[String]) -> Vec<Vec<String>> {
    vars.iter().map(|v| vec![v.clone()]).collect()
}

fn backdoor_steps(b: &mut Builder<'_>, z: &[String]) -> Result<(), Stop> {
    let term = b.expr.as_term().expect("starts from a term").clone();
    check_new_vars(b.swig, &term, z)?;
    let deps = names(&term.dependents);
    let key = deps[0].clone();
    introduce(b, &key, z)?;
    split(b, &key, vec![deps.clone(), z.to_vec()])?;
    insert_targets(b, &key)?;
    if let Some(z0) = z.first() {
        try_drop(b, z0, None)?;
    }
    settle(b, &key)?;
    Ok(())
}

fn candidates(swig: &Swig, term: &Term, keep: impl Fn(VarId) -> bool) -> Vec<String> {
    let mut out: Vec<(u32, String)> = swig
        .variables()
        .iter()
        .enumerate()
        .filter(|(i, v)| v.observed && !swig.is_intervention(VarId(*i)) && !term.mentions(&v.name) && keep(VarId(*i)))
        .map(|(_, v)| (v.time, v.name.clone()))
        .collect();
    out.sort();
    out.into_iter().map(|(_, n)| n).collect()
}

/// Subsets of `items` by increasing size, each in input order.
pub(crate) fn subsets(items: &[String], max: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    for k in 1..=max.min(items.len()) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i].clone()).collect());
            let mut i = k;
            while i > 0 && idx[i - 1] == items.len() - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

const MAX_SET_SIZE: usize = 6;

fn search_sets(
    swig: &Swig,
    term: &Term,
    sets: Vec<Vec<String>>,
    name: &str,
    what: &str,
    steps: impl Fn(&mut Builder<'_>, &[String]) -> Result<(), Stop>,
) -> Result<Derivation, IdentError> {
    let mut first: Option<Derivation> = None;
    for set in sets {
        let strategy = Strategy::from_str_lossy(name, &set);
        let d = finish(swig, &strategy, term, run(swig, term, |b| steps(b, &set)))?;
        if d.status.is_identified() {
            return Ok(d);
        }
        first.get_or_insert(d);
    }
    let mut d = first.expect("the empty set is always tried");
    if let Status::NotIdentified { reason, .. } = &mut d.status {
        *reason = format!("no observed {what} set works; smallest attempt: {reason}");
    }
    d.strategy = name.to_string();
    Ok(d)
}

impl Strategy {
    fn from_str_lossy(name: &str, set: &[String]) -> Strategy {
        let set = Some(set.to_vec());
        match name {
            "frontdoor" => Strategy::Frontdoor(set),
            _ => Strategy::Backdoor(set),
        }
    }
}

pub(crate) fn backdoor(
    swig: &Swig,
    term: &Term,
    set: Option<&[String]>,
    strategy: &Strategy,
) -> Result<Derivation, IdentError> {
    if let Some(z) = set {
        return finish(swig, strategy, term, run(swig, term, |b| backdoor_steps(b, z)));
    }
    let g = swig.regime_graph(term.regime)?;
    let nodes: Vec<VarId> = conditioned_active(swig, term)
        .into_iter()
        .map(|t| swig.pair(t).unwrap().intervention)
        .collect();
    let desc = g.descendants(nodes);
    let pool = candidates(swig, term, |v| !desc[v.0] && !swig.is_target(v));
    let sets = subsets(&pool, MAX_SET_SIZE);
    search_sets(swig, term, sets, "backdoor", "adjustment", backdoor_steps)
}

fn frontdoor_steps(b: &mut Builder<'_>, m: &[String]) -> Result<(), Stop> {
    let term = b.expr.as_term().expect("starts from a term").clone();
    let active = conditioned_active(b.swig, &term);
    if active.len() != 1 || term.regime.len() != 1 {
        return Err(inapplicable(
            "front-door needs exactly one active intervention; use sequential_frontdoor",
        ));
    }
    let (x, xo) = pair_names(b.swig, active[0]);
    let v = value_of(&term, &xo).expect("conditioned");
    check_new_vars(b.swig, &term, m)?;
    if m.contains(&x) {
        return Err(inapplicable(format!("`{x}` is the treatment")));
    }
    let deps = names(&term.dependents);
    let key = deps[0].clone();

    introduce(b, &key, m)?;
    split(b, &key, vec![deps.clone(), m.to_vec()])?;

    // outcome term: bring in the treatment and move the intervention onto it
    introduce(b, &key, std::slice::from_ref(&x))?;
    split(b, &key, vec![deps.clone(), vec![x.clone()]])?;
    let d_prime = value_of(&b.term_of(&key)?, &x).expect("introduced");
    b.apply_to(
        &key,
        Rule::CiModify {
            var: xo.clone(),
            action: CiAction::Change { value: d_prime },
        },
    )?;
    settle(b, &key)?;

    // treatment term
    for mj in m.iter().rev() {
        b.apply_to(
            &x,
            Rule::CiModify {
                var: mj.clone(),
                action: CiAction::Delete,
            },
        )?;
    }
    try_drop(b, &x, None)?;

    // mediator term
    if let Some(m0) = m.first() {
        b.apply_to(
            m0,
            Rule::CiModify {
                var: x.clone(),
                action: CiAction::Insert { value: v },
            },
        )?;
        settle(b, m0)?;
    }
    Ok(())
}

pub(crate) fn frontdoor(
    swig: &Swig,
    term: &Term,
    set: Option<&[String]>,
    strategy: &Strategy,
) -> Result<Derivation, IdentError> {
    if let Some(m) = set {
        return finish(swig, strategy, term, run(swig, term, |b| frontdoor_steps(b, m)));
    }
    let active = conditioned_active(swig, term);
    let g = swig.regime_graph(term.regime)?;
    let from = g.descendants(active.iter().map(|&t| swig.pair(t).unwrap().intervention));
    let deps: Vec<VarId> = term
        .dependents
        .iter()
        .map(|s| swig.require(&s.var.name))
        .collect::<Result<_, _>>()?;
    let to = g.ancestors(deps);
    let pool = candidates(swig, term, |v| from[v.0] && to[v.0] && !swig.is_target(v));
    let sets = subsets(&pool, MAX_SET_SIZE);
    search_sets(swig, term, sets, "frontdoor", "mediator", frontdoor_steps)
}

/// Product over the dependents (and `extra` covariates) in reverse
/// topological order; each factor drops later interventions and is
/// identified by inserting the targets.
pub(crate) fn sequential_backdoor<'s>(swig: &'s Swig, term: &Term, extra: &[String]) -> Outcome<'s> {
    run(swig, term, |b| {
        check_new_vars(swig, term, extra)?;
        let deps = names(&term.dependents);
        introduce(b, &deps[0], extra)?;
        let mut all = deps.clone();
        all.extend(extra.iter().cloned());
        let mut order = topo_sorted(swig, &all);
        order.reverse();
        split(b, &deps[0], singletons(&order))?;
        for v in &order {
            let time = swig.variable(swig.require(v).map_err(IdentError::from)?).time;
            try_drop(b, v, Some(time))?;
            insert_targets(b, v)?;
            settle(b, v)?;
        }
        Ok(())
    })
}

/// Introduces all targets and mediators, factorizes in reverse topological
/// order, and identifies the outcome, mediator and target terms separately.
pub(crate) fn sequential_frontdoor<'s>(swig: &'s Swig, term: &Term, mediators: &[String]) -> Outcome<'s> {
    run(swig, term, |b| {
        let active = conditioned_active(swig, term);
        if active.is_empty() {
            return Err(inapplicable("the estimand conditions on no active intervention"));
        }
        let targets: Vec<String> = active.iter().map(|&t| pair_names(swig, t).0).collect();
        let mut intro = targets.clone();
        intro.extend(mediators.iter().cloned());
        check_new_vars(swig, term, &intro)?;
        let intro = topo_sorted(swig, &intro);
        let deps = names(&term.dependents);
        let key = deps[0].clone();
        introduce(b, &key, &intro)?;
        let mut blocks = vec![deps.clone()];
        blocks.extend(intro.iter().rev().map(|v| vec![v.clone()]));
        split(b, &key, blocks)?;

        // outcome: front-door independence moves each intervention onto its target
        for &t in &active {
            let (x, xo) = pair_names(swig, t);
            let vx = value_of(&b.term_of(&key)?, &x).expect("introduced");
            b.apply_to(
                &key,
                Rule::CiModify {
                    var: xo,
                    action: CiAction::Change { value: vx },
                },
            )?;
        }
        settle(b, &key)?;

        // mediators: drop later interventions, reset the targets to the intervened values
        for m in mediators {
            let time = swig.variable(swig.require(m).map_err(IdentError::from)?).time;
            try_drop(b, m, Some(time))?;
            let tm = b.term_of(m)?;
            for t in tm.regime.indices() {
                let (x, xo) = pair_names(swig, t);
                let (vx, vo) = (value_of(&tm, &x), value_of(&tm, &xo));
                if let (Some(vx), Some(vo)) = (vx, vo) {
                    if vx != vo {
                        b.apply_to(
                            m,
                            Rule::CiModify {
                                var: x,
                                action: CiAction::Change { value: vo },
                            },
                        )?;
                    }
                }
            }
            insert_targets(b, m)?;
            settle(b, m)?;
        }

        // targets: drop their own and later interventions, move earlier ones onto the targets
        for x in &targets {
            let time = swig.variable(swig.require(x).map_err(IdentError::from)?).time;
            try_drop(b, x, time.checked_sub(1))?;
            let tx = b.term_of(x)?;
            for t in tx.regime.indices() {
                let (xj, xoj) = pair_names(swig, t);
                if let (Some(vx), Some(vo)) = (value_of(&tx, &xj), value_of(&tx, &xoj)) {
                    if vx != vo {
                        b.apply_to(
                            x,
                            Rule::CiModify {
                                var: xoj,
                                action: CiAction::Change { value: vx },
                            },
                        )?;
                    }
                }
            }
            settle(b, x)?;
        }
        Ok(())
    })
}

/// Splits `swig`'s base on its targets plus `mediators`, interleaved in
/// topological order.
pub(crate) fn combined_swig(swig: &Swig, mediators: &[String]) -> Result<Swig, IdentError> {
    let mut wanted: BTreeSet<&str> = swig
        .pairs()
        .iter()
        .map(|p| swig.variable(p.target).name.as_str())
        .collect();
    for m in mediators {
        let id = swig.require(m)?;
        if swig.is_target(id) || swig.is_intervention(id) {
            return Err(IdentError::StrategyInapplicable(format!(
                "`{m}` is already split"
            )));
        }
        wanted.insert(m.as_str());
    }
    let order: Vec<&str> = swig
        .topological_order()
        .iter()
        .map(|&id| swig.variable(id).name.as_str())
        .filter(|n| wanted.contains(n))
        .collect();
    Ok(to_swig(&swig.base().with_targets(&order)?)?)
}

/// `q_D(Y | Do) = sum_m q_M(Y | Mo=m) q_D(M=m | Do)`, then each factor by
/// its own back-door argument, all in the SWIG split on doses and mediators.
pub(crate) fn mediator_intervention(
    swig: &Swig,
    term: &Term,
    mediators: &[String],
    strategy: &Strategy,
) -> Result<Derivation, IdentError> {
    if mediators.is_empty() {
        // with nothing to intercept the effect, the route needs `Y _||_ Do` outright
        let doses: Vec<String> = conditioned_active(swig, term)
            .into_iter()
            .map(|t| pair_names(swig, t).1)
            .collect();
        let q = CiQuery::new(term.regime, &names(&term.dependents), &doses, &[] as &[String]);
        let separated = doses.is_empty()
            || d_separated(swig, &q).map_err(|e| IdentError::StrategyInapplicable(e.to_string()))?;
        if separated {
            return Err(IdentError::StrategyInapplicable("no mediators to intervene on".into()));
        }
        let outcome = run(swig, term, |_| {
            Err(Stop::Blocked {
                reason: "no observed mediator intercepts the effect of the interventions".into(),
                query: Some(q),
            })
        });
        return finish(swig, strategy, term, outcome);
    }
    let combined = combined_swig(swig, mediators)?;
    let mut start = term.clone();
    start.regime = combined.translate_regime(swig, term.regime)?;
    let cs = &combined;
    let outcome = run(cs, &start, |b| {
        check_new_vars(cs, &start, mediators)?;
        let deps = names(&start.dependents);
        let key = deps[0].clone();
        let doses = conditioned_active(cs, &start);
        let m_idx: Vec<usize> = mediators
            .iter()
            .map(|m| cs.split_index(cs.id(m).unwrap()).unwrap())
            .collect();
        let ms = topo_sorted(cs, mediators);

        introduce(b, &key, &ms)?;
        split(b, &key, vec![deps.clone(), ms.clone()])?;

        // outcome factor: switch to the mediator intervention
        for &k in &m_idx {
            b.apply_to(&key, Rule::ReverseRedundancy { index: k })?;
            b.apply_to(&key, Rule::ReverseConsistency { index: k })?;
        }
        for m in ms.iter().rev() {
            b.apply_to(
                &key,
                Rule::CiModify {
                    var: m.clone(),
                    action: CiAction::Delete,
                },
            )?;
        }
        b.apply_to(&key, Rule::DropInterventions { indices: doses.clone() })?;

        // outcome under the mediator intervention: back-door through the doses
        let ds: Vec<String> = doses.iter().map(|&t| pair_names(cs, t).0).collect();
        let ds = topo_sorted(cs, &ds);
        introduce(b, &key, &ds)?;
        let mut blocks = vec![deps.clone()];
        blocks.extend(ds.iter().rev().map(|d| vec![d.clone()]));
        split(b, &key, blocks)?;
        for d in &ds {
            let time = cs.variable(cs.require(d).map_err(IdentError::from)?).time;
            try_drop(b, d, time.checked_sub(1))?;
            insert_targets(b, d)?;
            settle(b, d)?;
        }
        insert_targets(b, &key)?;
        settle(b, &key)?;

        // mediator law under the dose intervention: sequential back-door
        let rev: Vec<String> = ms.iter().rev().cloned().collect();
        split(b, &ms[0], singletons(&rev))?;
        for m in &rev {
            let time = cs.variable(cs.require(m).map_err(IdentError::from)?).time;
            try_drop(b, m, Some(time))?;
            expose_copies(b, m)?;
            insert_targets(b, m)?;
            settle(b, m)?;
        }
        Ok(())
    });
    finish(cs, strategy, &start, outcome)
}
