//! Numeric audit of a derivation: every step must preserve the value of the
//! expression on random models.

use rayon::prelude::*;

use super::{Derivation, IdentError};
use crate::expr::ProbExpr;
use crate::model::Swig;
use crate::oracle::{max_deviation_with, random_model, Evaluator, OracleError};

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub models: usize,
    pub seed: u64,
    pub tol: f64,
    /// Dirichlet concentration for the random CPT rows.
    pub concentration: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            models: 100,
            seed: 0,
            tol: 1e-9,
            concentration: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub index: usize,
    pub rule: String,
    pub max_deviation: f64,
    /// Whether re-applying the rule reproduces the recorded step.
    pub rechecked: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub steps: Vec<StepReport>,
    /// Deviation between the final expression and the estimand itself.
    pub final_deviation: f64,
    pub models_used: usize,
    /// Models skipped because some conditioning event had zero probability.
    pub models_skipped: usize,
    pub chained: bool,
    pub passed: bool,
}

struct ModelResult {
    steps: Vec<f64>,
    final_dev: f64,
}

fn one_model(swig: &Swig, d: &Derivation, seed: u64, concentration: f64) -> Result<Option<ModelResult>, OracleError> {
    let model = random_model(swig, seed, concentration)?;
    let mut ev = Evaluator::new(&model);
    let run = |ev: &mut Evaluator<'_>| -> Result<ModelResult, OracleError> {
        let mut steps = Vec::with_capacity(d.steps.len());
        for s in &d.steps {
            steps.push(max_deviation_with(ev, &s.input, &s.output)?);
        }
        let estimand = ProbExpr::Term(d.estimand.clone());
        let final_dev = max_deviation_with(ev, &estimand, &d.final_expr)?;
        Ok(ModelResult { steps, final_dev })
    };
    match run(&mut ev) {
        Ok(r) => Ok(Some(r)),
        Err(OracleError::ZeroProbability(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Evaluates every step's input and output on `opts.models` random models of
/// the derivation's graph and reports the largest deviation per step.
pub fn verify(d: &Derivation, swig: &Swig, opts: &VerifyOptions) -> Result<VerifyReport, IdentError> {
    let swig = d.swig_for(swig)?;
    let results: Vec<Option<ModelResult>> = (0..opts.models)
        .into_par_iter()
        .map(|i| one_model(&swig, d, opts.seed.wrapping_add(i as u64), opts.concentration))
        .collect::<Result<_, _>>()?;
    let used: Vec<&ModelResult> = results.iter().flatten().collect();
    let skipped = results.len() - used.len();

    let steps: Vec<StepReport> = d
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dev = used.iter().map(|r| r.steps[i]).fold(0.0, f64::max);
            let rechecked = s.recheck(&swig).is_ok();
            StepReport {
                index: i + 1,
                rule: s.rule.name().to_string(),
                max_deviation: dev,
                rechecked,
                passed: rechecked && dev <= opts.tol,
            }
        })
        .collect();
    let final_deviation = used.iter().map(|r| r.final_dev).fold(0.0, f64::max);
    let chained = d.is_chained();
    let passed = chained
        && !used.is_empty()
        && steps.iter().all(|s| s.passed)
        && final_deviation <= opts.tol;
    Ok(VerifyReport {
        steps,
        final_deviation,
        models_used: used.len(),
        models_skipped: skipped,
        chained,
        passed,
    })
}
