//! Regime graphs and conditional-independence queries.
//!
//! Conditional independence "in `q_s`" is d-separation in the regime graph of
//! `s`: the SWIG with the copy edge `X_t -> Xo_t` removed for every active `t`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Term;
use crate::model::{ModelError, Regime, Swig, VarId};

/// Directed graph of one regime over the SWIG's variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegimeGraph {
    regime: Regime,
    parents: Vec<Vec<VarId>>,
    children: Vec<Vec<VarId>>,
}

impl RegimeGraph {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        &self.parents[v.0]
    }

    pub fn children(&self, v: VarId) -> &[VarId] {
        &self.children[v.0]
    }

    pub fn edges(&self) -> Vec<(VarId, VarId)> {
        let mut out = Vec::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                out.push((p, VarId(c)));
            }
        }
        out.sort();
        out
    }

    pub fn has_edge(&self, from: VarId, to: VarId) -> bool {
        self.parents[to.0].contains(&from)
    }

    /// Ancestors of `seeds`, seeds included.
    pub fn ancestors(&self, seeds: impl IntoIterator<Item = VarId>) -> Vec<bool> {
        closure(&self.parents, seeds)
    }

    /// Descendants of `seeds`, seeds included.
    pub fn descendants(&self, seeds: impl IntoIterator<Item = VarId>) -> Vec<bool> {
        closure(&self.children, seeds)
    }

    pub fn is_acyclic(&self) -> bool {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for c in &self.children[v] {
                indeg[c.0] -= 1;
                if indeg[c.0] == 0 {
                    stack.push(c.0);
                }
            }
        }
        seen == n
    }

    /// Nodes reachable from `sources` by an active trail given `given`
    /// (the Bayes-ball "reachable" procedure).
    pub fn reachable(&self, sources: &BTreeSet<VarId>, given: &BTreeSet<VarId>) -> Vec<bool> {
        let n = self.len();
        let in_z = {
            let mut m = vec![false; n];
            for z in given {
                m[z.0] = true;
            }
            m
        };
        let anc_z = self.ancestors(given.iter().copied());

        // visited[v][0]: arrived from a child (moving up); [1]: from a parent (moving down)
        let mut visited = vec![[false; 2]; n];
        let mut reach = vec![false; n];
        let mut queue: Vec<(VarId, usize)> = sources.iter().map(|&s| (s, 0)).collect();
        while let Some((v, dir)) = queue.pop() {
            if visited[v.0][dir] {
                continue;
            }
            visited[v.0][dir] = true;
            if !in_z[v.0] {
                reach[v.0] = true;
            }
            if dir == 0 {
                if !in_z[v.0] {
                    queue.extend(self.parents[v.0].iter().map(|&p| (p, 0)));
                    queue.extend(self.children[v.0].iter().map(|&c| (c, 1)));
                }
            } else {
                if !in_z[v.0] {
                    queue.extend(self.children[v.0].iter().map(|&c| (c, 1)));
                }
                if anc_z[v.0] {
                    queue.extend(self.parents[v.0].iter().map(|&p| (p, 0)));
                }
            }
        }
        reach
    }

    /// Plain d-separation on variable ids.
    pub fn d_separated(
        &self,
        x: &BTreeSet<VarId>,
        y: &BTreeSet<VarId>,
        z: &BTreeSet<VarId>,
    ) -> bool {
        if x.is_empty() || y.is_empty() {
            return true;
        }
        let reach = self.reachable(x, z);
        y.iter().all(|v| !reach[v.0])
    }
}

fn closure(adj: &[Vec<VarId>], seeds: impl IntoIterator<Item = VarId>) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<VarId> = seeds.into_iter().collect();
    while let Some(v) = stack.pop() {
        if !seen[v.0] {
            seen[v.0] = true;
            stack.extend(adj[v.0].iter().copied());
        }
    }
    seen
}

impl Swig {
    /// The SWIG with the copy edges of all active interventions removed.
    pub fn regime_graph(&self, s: Regime) -> Result<RegimeGraph, ModelError> {
        self.check_regime(s)?;
        let n = self.len();
        let mut parents: Vec<Vec<VarId>> =
            (0..n).map(|i| self.parents(VarId(i)).to_vec()).collect();
        for t in s.indices() {
            let pair = self.pair(t).expect("checked regime");
            parents[pair.intervention.0].retain(|&p| p != pair.target);
        }
        let mut children = vec![Vec::new(); n];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p.0].push(VarId(c));
            }
        }
        Ok(RegimeGraph {
            regime: s,
            parents,
            children,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("variable `{0}` appears in more than one side of the query")]
    Overlap(String),
    #[error("empty variable set in query")]
    Empty,
}

/// `x ⫫ y | z` in regime `regime`, by variable name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CiQuery {
    pub regime: Regime,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub z: Vec<String>,
}

impl CiQuery {
    pub fn new<S: AsRef<str>>(regime: Regime, x: &[S], y: &[S], z: &[S]) -> Self {
        let own = |v: &[S]| -> Vec<String> {
            let mut out: Vec<String> = v.iter().map(|s| s.as_ref().to_string()).collect();
            out.sort();
            out.dedup();
            out
        };
        CiQuery {
            regime,
            x: own(x),
            y: own(y),
            z: own(z),
        }
    }

    /// Resolves names to ids and checks the sides are disjoint.
    pub fn resolve(
        &self,
        swig: &Swig,
    ) -> Result<(BTreeSet<VarId>, BTreeSet<VarId>, BTreeSet<VarId>), QueryError> {
        swig.check_regime(self.regime)?;
        let ids = |names: &[String]| -> Result<BTreeSet<VarId>, QueryError> {
            names.iter().map(|n| Ok(swig.require(n)?)).collect()
        };
        let (x, y, z) = (ids(&self.x)?, ids(&self.y)?, ids(&self.z)?);
        if x.is_empty() || y.is_empty() {
            return Err(QueryError::Empty);
        }
        if let Some(v) = x
            .intersection(&y)
            .chain(x.intersection(&z))
            .chain(y.intersection(&z))
            .next()
        {
            return Err(QueryError::Overlap(swig.variable(*v).name.clone()));
        }
        Ok((x, y, z))
    }
}

impl fmt::Display for CiQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} _||_ {}",
            self.regime,
            self.x.join(", "),
            self.y.join(", ")
        )?;
        if !self.z.is_empty() {
            write!(f, " | {}", self.z.join(", "))?;
        }
        Ok(())
    }
}

/// d-separation of `q.x` and `q.y` given `q.z` in the regime graph of `q.regime`.
pub fn d_separated(swig: &Swig, q: &CiQuery) -> Result<bool, QueryError> {
    let (x, y, z) = q.resolve(swig)?;
    let g = swig.regime_graph(q.regime)?;
    Ok(g.d_separated(&x, &y, &z))
}

/// Outcome of checking whether interventions later than a time can be dropped
/// from a term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DropCheck {
    /// Dropping is allowed; carries the independence that licensed removing the
    /// conditioned intervention nodes (absent when none were conditioned on).
    Allowed(Option<CiQuery>),
    /// Some remaining variable descends from a dropped intervention node.
    Descendant {
        variable: String,
        intervention: String,
    },
    /// The dependents are not d-separated from the dropped intervention nodes.
    Dependent(CiQuery),
}

impl DropCheck {
    pub fn is_allowed(&self) -> bool {
        matches!(self, DropCheck::Allowed(_))
    }
}

/// Interventions of `swig` whose time exceeds `keep_through` (all of them when
/// `None`).
pub fn later_interventions(swig: &Swig, keep_through: Option<u32>) -> Vec<(usize, VarId)> {
    swig.pairs()
        .iter()
        .enumerate()
        .filter(|(_, p)| keep_through.is_none_or(|t| swig.variable(p.intervention).time > t))
        .map(|(i, p)| (i + 1, p.intervention))
        .collect()
}

/// Checks whether the intervention nodes later than `keep_through` can be
/// removed from `term`, both from its conditioning set and from its regime.
///
/// Two conditions are required. The dependents must be d-separated from the
/// conditioned later intervention nodes given the remaining conditioners
/// (the collider check). And no remaining variable may descend from an active
/// later intervention node in the regime graph, so that the regime's marginal
/// over the term's variables does not depend on those interventions.
pub fn later_interventions_droppable(
    swig: &Swig,
    term: &Term,
    keep_through: Option<u32>,
) -> Result<DropCheck, QueryError> {
    let indices: Vec<usize> = later_interventions(swig, keep_through)
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    interventions_droppable(swig, term, &indices)
}

/// Same check as [`later_interventions_droppable`] for an arbitrary set of
/// intervention indices.
pub fn interventions_droppable(
    swig: &Swig,
    term: &Term,
    indices: &[usize],
) -> Result<DropCheck, QueryError> {
    let regime = term.regime;
    let g = swig.regime_graph(regime)?;
    let mut later = Vec::with_capacity(indices.len());
    for &t in indices {
        let pair = swig.require_pair(t)?;
        later.push((t, pair.intervention));
    }
    let later_ids: BTreeSet<VarId> = later.iter().map(|&(_, id)| id).collect();

    let mut dependents = BTreeSet::new();
    for s in &term.dependents {
        dependents.insert(swig.require(&s.var.name)?);
    }
    let mut kept = BTreeSet::new();
    let mut dropped = BTreeSet::new();
    for s in &term.conditioners {
        let id = swig.require(&s.var.name)?;
        if later_ids.contains(&id) {
            dropped.insert(id);
        } else {
            kept.insert(id);
        }
    }
    if let Some(&id) = dependents.iter().find(|id| later_ids.contains(id)) {
        return Ok(DropCheck::Descendant {
            variable: swig.variable(id).name.clone(),
            intervention: swig.variable(id).name.clone(),
        });
    }

    for &(t, node) in &later {
        if !regime.contains(t) {
            continue;
        }
        let desc = g.descendants([node]);
        if let Some(&v) = dependents.iter().chain(kept.iter()).find(|v| desc[v.0]) {
            return Ok(DropCheck::Descendant {
                variable: swig.variable(v).name.clone(),
                intervention: swig.variable(node).name.clone(),
            });
        }
    }

    if dropped.is_empty() {
        return Ok(DropCheck::Allowed(None));
    }
    let names = |s: &BTreeSet<VarId>| -> Vec<String> {
        s.iter().map(|&v| swig.variable(v).name.clone()).collect()
    };
    let q = CiQuery::new(regime, &names(&dependents), &names(&dropped), &names(&kept));
    if g.d_separated(&dependents, &dropped, &kept) {
        Ok(DropCheck::Allowed(Some(q)))
    } else {
        Ok(DropCheck::Dependent(q))
    }
}
