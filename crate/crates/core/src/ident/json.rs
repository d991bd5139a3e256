//! Derivation files. Keys are emitted in sorted order; expressions are stored
//! as text in the expression grammar.

use serde_json::{json, Value};

use super::{Derivation, DerivationStep, IdentError, Status};
use crate::expr::{parse_expr, ProbExpr, Term, TermPath};
use crate::model::Swig;

pub fn derivation_to_json(d: &Derivation) -> Value {
    let steps: Vec<Value> = d
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "index": i + 1,
                "rule": s.rule.name(),
                "params": serde_json::to_value(&s.rule).expect("rules serialize"),
                "path": s.path.0,
                "input": s.input.to_string(),
                "output": s.output.to_string(),
                "justification": serde_json::to_value(&s.justification).expect("justifications serialize"),
                "justification_text": s.justification.to_string(),
            })
        })
        .collect();
    let status = match &d.status {
        Status::Identified => json!({ "kind": "identified" }),
        Status::NotIdentified { reason, blocking } => json!({
            "kind": "not_identified",
            "reason": reason,
            "blocking": blocking.as_ref().map(|q| serde_json::to_value(q).expect("queries serialize")),
            "blocking_text": blocking.as_ref().map(|q| q.to_string()),
        }),
    };
    json!({
        "strategy": d.strategy,
        "targets": d.targets,
        "estimand": d.estimand.to_string(),
        "status": status,
        "steps": steps,
        "final": d.final_expr.to_string(),
    })
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, IdentError> {
    v.get(key)
        .ok_or_else(|| IdentError::Format(format!("missing field `{key}`")))
}

fn text<'a>(v: &'a Value, key: &str) -> Result<&'a str, IdentError> {
    field(v, key)?
        .as_str()
        .ok_or_else(|| IdentError::Format(format!("field `{key}` must be a string")))
}

fn typed<T: serde::de::DeserializeOwned>(v: &Value, key: &str) -> Result<T, IdentError> {
    serde_json::from_value(field(v, key)?.clone())
        .map_err(|e| IdentError::Format(format!("field `{key}`: {e}")))
}

fn expr(swig: &Swig, v: &Value, key: &str) -> Result<ProbExpr, IdentError> {
    parse_expr(text(v, key)?, swig).map_err(|e| IdentError::Format(format!("field `{key}`: {e}")))
}

/// Reads a derivation written by [`derivation_to_json`]. `swig` supplies the
/// base graph; the file's `targets` select how it is split.
pub fn derivation_from_json(v: &Value, swig: &Swig) -> Result<Derivation, IdentError> {
    let targets: Vec<String> = typed(v, "targets")?;
    let mut d = Derivation {
        strategy: text(v, "strategy")?.to_string(),
        targets,
        estimand: Term::new(crate::model::Regime::OBSERVED, Vec::new(), Vec::new()),
        steps: Vec::new(),
        final_expr: ProbExpr::Product { factors: Vec::new() },
        status: Status::Identified,
    };
    let split = d.swig_for(swig)?;
    d.estimand = match expr(&split, v, "estimand")? {
        ProbExpr::Term(t) => t,
        _ => return Err(IdentError::Format("the estimand must be a single term".into())),
    };
    d.final_expr = expr(&split, v, "final")?;
    let steps = field(v, "steps")?
        .as_array()
        .ok_or_else(|| IdentError::Format("`steps` must be an array".into()))?;
    for s in steps {
        d.steps.push(DerivationStep {
            rule: typed(s, "params")?,
            path: TermPath(typed(s, "path")?),
            input: expr(&split, s, "input")?,
            output: expr(&split, s, "output")?,
            justification: typed(s, "justification")?,
        });
    }
    let status = field(v, "status")?;
    d.status = match text(status, "kind")? {
        "identified" => Status::Identified,
        "not_identified" => Status::NotIdentified {
            reason: text(status, "reason")?.to_string(),
            blocking: typed(status, "blocking")?,
        },
        other => return Err(IdentError::Format(format!("unknown status `{other}`"))),
    };
    Ok(d)
}
