//! Graphviz output for regime graphs.

use crate::model::{ModelError, Regime, Swig, VarId};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// The regime graph of `regime` as DOT. Intervention nodes are boxes (doubled
/// when active), unobserved variables are dashed, and copy edges severed by
/// an active intervention are left out.
pub fn to_dot(swig: &Swig, regime: Regime) -> Result<String, ModelError> {
    let g = swig.regime_graph(regime)?;
    let mut out = format!("digraph {} {{\n  rankdir=LR;\n", quote(&format!("{} {}", swig.base().name(), regime)));
    for (i, v) in swig.variables().iter().enumerate() {
        let id = VarId(i);
        let mut attrs = vec![format!("label={}", quote(&v.name))];
        if swig.is_intervention(id) {
            attrs.push("shape=box".into());
            let active = swig.split_index(id).is_some_and(|t| regime.contains(t));
            if active {
                attrs.push("peripheries=2".into());
            }
        } else {
            attrs.push("shape=ellipse".into());
        }
        if !v.observed {
            attrs.push("style=dashed".into());
        }
        out.push_str(&format!("  {} [{}];\n", quote(&v.name), attrs.join(", ")));
    }
    for (a, b) in g.edges() {
        out.push_str(&format!(
            "  {} -> {};\n",
            quote(&swig.variable(a).name),
            quote(&swig.variable(b).name)
        ));
    }
    out.push_str("}\n");
    Ok(out)
}
