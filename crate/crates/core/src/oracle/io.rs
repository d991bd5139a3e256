//! Model files: JSON with per-variable levels, parents and CPT rows in
//! row-major parent order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DiscreteModel, OracleError};
use crate::model::{Swig, VarId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFileVariable {
    pub name: String,
    pub levels: usize,
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub variables: Vec<ModelFileVariable>,
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("variable `{0}`: {1}")]
    Mismatch(String, String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl ModelFile {
    pub fn from_model(model: &DiscreteModel) -> ModelFile {
        let swig = model.swig();
        let variables = (0..swig.len())
            .filter_map(|v| {
                let id = VarId(v);
                let cpt = model.cpt(id)?;
                Some(ModelFileVariable {
                    name: swig.variable(id).name.clone(),
                    levels: swig.variable(id).levels,
                    parents: cpt.parents.iter().map(|p| swig.variable(*p).name.clone()).collect(),
                    cpt: cpt.rows.clone(),
                })
            })
            .collect();
        ModelFile { variables }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelFile, ModelFileError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Binds the file to `swig`. Parents may be listed in any order; rows are
    /// permuted into the graph's parent order.
    pub fn into_model(self, swig: &Swig) -> Result<DiscreteModel, ModelFileError> {
        let mut tables: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for var in self.variables {
            let mismatch = |msg: String| ModelFileError::Mismatch(var.name.clone(), msg);
            let id = swig
                .id(&var.name)
                .ok_or_else(|| mismatch("not in the graph".into()))?;
            if swig.is_intervention(id) {
                return Err(mismatch("intervention nodes take no table".into()));
            }
            if var.levels != swig.variable(id).levels {
                return Err(mismatch(format!(
                    "declares {} levels, the graph has {}",
                    var.levels,
                    swig.variable(id).levels
                )));
            }
            let graph_parents = swig.parents(id);
            let mut file_parents = Vec::new();
            for p in &var.parents {
                file_parents.push(swig.id(p).ok_or_else(|| mismatch(format!("unknown parent `{p}`")))?);
            }
            let mut a = file_parents.clone();
            let mut b = graph_parents.to_vec();
            a.sort();
            b.sort();
            if a != b {
                return Err(mismatch("parents differ from the graph".into()));
            }
            let rows = permute_rows(swig, &file_parents, graph_parents, &var.cpt)
                .ok_or_else(|| mismatch("wrong number of rows".into()))?;
            if tables.insert(var.name.clone(), rows).is_some() {
                return Err(mismatch("listed twice".into()));
            }
        }
        Ok(DiscreteModel::new(swig.clone(), tables)?)
    }
}

fn permute_rows(swig: &Swig, from: &[VarId], to: &[VarId], rows: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let levels = |vs: &[VarId]| -> Vec<usize> { vs.iter().map(|v| swig.variable(*v).levels).collect() };
    let n: usize = levels(to).iter().product();
    if rows.len() != n {
        return None;
    }
    let to_levels = levels(to);
    let from_levels = levels(from);
    let mut out = Vec::with_capacity(n);
    for combo in super::odometer(&to_levels) {
        let mut k = 0;
        for (i, v) in from.iter().enumerate() {
            let pos = to.iter().position(|w| w == v)?;
            k = k * from_levels[i] + combo[pos];
        }
        out.push(rows[k].clone());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::to_swig;
    use crate::oracle::random_model;

    #[test]
    fn json_round_trip() {
        let swig = to_swig(&fixtures::figure2(2)).unwrap();
        let m = random_model(&swig, 12, 1.0).unwrap();
        let text = ModelFile::from_model(&m).to_json();
        let back = ModelFile::from_json(&text).unwrap().into_model(&swig).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reordered_parents_are_permuted() {
        let swig = to_swig(&fixtures::figure1()).unwrap();
        let m = random_model(&swig, 2, 1.0).unwrap();
        let mut file = ModelFile::from_model(&m);
        let y = file.variables.iter_mut().find(|v| v.name == "Y1").unwrap();
        assert_eq!(y.parents.len(), 2);
        y.parents.reverse();
        let r = y.cpt.clone();
        y.cpt = vec![r[0].clone(), r[2].clone(), r[1].clone(), r[3].clone()];
        assert_eq!(file.into_model(&swig).unwrap(), m);
    }
}
