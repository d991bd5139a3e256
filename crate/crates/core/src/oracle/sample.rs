use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{eval_with, Cpt, DiscreteModel, Env, OracleError, TermSource};
use crate::expr::ProbExpr;
use crate::model::{Regime, Swig, VarId};

/// Model with every CPT row drawn from a symmetric Dirichlet(`concentration`).
pub fn random_model(swig: &Swig, seed: u64, concentration: f64) -> Result<DiscreteModel, OracleError> {
    let gamma = Gamma::new(concentration, 1.0).map_err(|e| OracleError::InvalidCpt {
        var: "<all>".into(),
        reason: format!("bad concentration {concentration}: {e}"),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cpts = Vec::with_capacity(swig.len());
    for v in 0..swig.len() {
        let id = VarId(v);
        if swig.is_intervention(id) {
            cpts.push(None);
            continue;
        }
        let parents = swig.parents(id).to_vec();
        let nrows: usize = parents.iter().map(|p| swig.variable(*p).levels).product();
        let k = swig.variable(id).levels;
        let rows = (0..nrows)
            .map(|_| {
                let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                let sum: f64 = draws.iter().sum();
                if sum > 0.0 && sum.is_finite() {
                    let mut row: Vec<f64> = draws.iter().map(|g| g / sum).collect();
                    // absorb rounding so rows sum to one within 1e-12
                    let drift = 1.0 - row.iter().sum::<f64>();
                    row[k - 1] += drift;
                    row
                } else {
                    vec![1.0 / k as f64; k]
                }
            })
            .collect();
        cpts.push(Some(Cpt { parents, rows }));
    }
    DiscreteModel::from_cpts(swig.clone(), cpts)
}

/// Samples from a model; one row per draw, one column per SWIG variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<u32>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Ancestral sampling of `n` rows from regime `regime`.
pub fn sample(model: &DiscreteModel, regime: Regime, n: usize, seed: u64) -> Result<Dataset, OracleError> {
    let swig = model.swig();
    swig.check_regime(regime)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = swig.topological_order();
    let mut rows = Vec::with_capacity(n);
    let mut assign = vec![0usize; swig.len()];
    for _ in 0..n {
        for &v in order {
            assign[v.0] = match model.cpt(v) {
                Some(cpt) => {
                    let mut row = 0;
                    for &p in &cpt.parents {
                        row = row * swig.variable(p).levels + assign[p.0];
                    }
                    draw(&mut rng, &cpt.rows[row])
                }
                None => {
                    let t = swig.split_index(v).expect("intervention node");
                    if regime.contains(t) {
                        draw(&mut rng, &model.active_laws[t - 1])
                    } else {
                        assign[swig.pair(t).unwrap().target.0]
                    }
                }
            };
        }
        rows.push(assign.iter().map(|&l| l as u32).collect());
    }
    Ok(Dataset {
        columns: swig.variables().iter().map(|v| v.name.clone()).collect(),
        rows,
    })
}

/// Plug-in value of an observed-data expression.
#[derive(Clone, Debug, PartialEq)]
pub struct PluginEstimate {
    pub value: f64,
    /// Term evaluations whose conditioning stratum had no rows.
    pub empty_strata: usize,
}

struct Empirical<'a> {
    swig: &'a Swig,
    data: &'a Dataset,
    counts: HashMap<Vec<(usize, usize)>, usize>,
    empty: usize,
}

impl Empirical<'_> {
    fn count(&mut self, fixed: &[(VarId, usize)]) -> Result<usize, OracleError> {
        let mut key = Vec::with_capacity(fixed.len());
        for &(v, l) in fixed {
            let name = &self.swig.variable(v).name;
            let col = self.data.column(name).ok_or_else(|| OracleError::MissingColumn(name.clone()))?;
            key.push((col, l));
        }
        key.sort();
        if let Some(&c) = self.counts.get(&key) {
            return Ok(c);
        }
        let c = self
            .data
            .rows
            .iter()
            .filter(|r| key.iter().all(|&(col, l)| r[col] as usize == l))
            .count();
        self.counts.insert(key, c);
        Ok(c)
    }
}

impl TermSource for Empirical<'_> {
    fn swig(&self) -> &Swig {
        self.swig
    }

    fn conditional(
        &mut self,
        regime: Regime,
        dependents: &[(VarId, usize)],
        conditioners: &[(VarId, usize)],
    ) -> Result<f64, OracleError> {
        if !regime.is_observed() {
            return Err(OracleError::NotObservedTerm(regime.to_string()));
        }
        let n_cond = self.count(conditioners)?;
        if n_cond == 0 {
            self.empty += 1;
        }
        let mut all = conditioners.to_vec();
        all.extend_from_slice(dependents);
        let n_joint = self.count(&all)?;
        let k: usize = dependents.iter().map(|(v, _)| self.swig.variable(*v).levels).product();
        Ok((n_joint as f64 + 1.0) / (n_cond as f64 + k as f64))
    }
}

/// Evaluates `e` with each `q0` term replaced by an add-one smoothed empirical
/// conditional frequency from `data`.
pub fn plugin_estimate(
    swig: &Swig,
    e: &ProbExpr,
    data: &Dataset,
    env: &Env,
) -> Result<PluginEstimate, OracleError> {
    if let Some(s) = e.regimes_used().into_iter().find(|s| !s.is_observed()) {
        return Err(OracleError::NotObservedTerm(s.to_string()));
    }
    let mut src = Empirical {
        swig,
        data,
        counts: HashMap::new(),
        empty: 0,
    };
    let value = eval_with(&mut src, e, env)?;
    Ok(PluginEstimate {
        value,
        empty_strata: src.empty,
    })
}
