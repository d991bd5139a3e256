//! Bundled example graphs.
//!
//! Figures 1 to 3 are reconstructions: their edge lists are fixed here and the
//! test suite checks that every conditional independence the examples rely on
//! holds by d-separation.

use crate::model::{BaseDag, Role, Variable};

fn build(name: &str, vars: Vec<Variable>, edges: &[(&str, &str)], targets: &[&str]) -> BaseDag {
    let mut g = BaseDag::new(name);
    for v in vars {
        g.add_variable(v).expect("fixture variables are unique");
    }
    for (a, b) in edges {
        g.add_edge(a, b).expect("fixture edges are declared");
    }
    for t in targets {
        g.add_target(t).expect("fixture targets are declared");
    }
    g
}

/// Baseline confounder `L`, treatment `D1`, mediator `M1`, outcome `Y1`.
pub fn figure1() -> BaseDag {
    build(
        "figure1",
        vec![
            Variable::new("L", 0, Role::Covariate),
            Variable::new("D1", 1, Role::Target),
            Variable::new("M1", 1, Role::Mediator),
            Variable::new("Y1", 1, Role::Outcome),
        ],
        &[("L", "D1"), ("L", "Y1"), ("D1", "M1"), ("M1", "Y1")],
        &["D1"],
    )
}

/// Figure 1 with the mediator removed and a direct effect `D1 -> Y1`.
pub fn figure1_ablated() -> BaseDag {
    build(
        "figure1_ablated",
        vec![
            Variable::new("L", 0, Role::Covariate),
            Variable::new("D1", 1, Role::Target),
            Variable::new("Y1", 1, Role::Outcome),
        ],
        &[("L", "D1"), ("L", "Y1"), ("D1", "Y1")],
        &["D1"],
    )
}

fn longitudinal(name: &str, n: usize, extra: &[(String, String)], mediator_targets: bool) -> BaseDag {
    assert!(n >= 1, "at least one time point");
    let mut vars = vec![Variable::new("L", 0, Role::Covariate)];
    for t in 1..=n {
        vars.push(Variable::new(format!("D{t}"), t as u32, Role::Target));
        vars.push(Variable::new(format!("M{t}"), t as u32, Role::Mediator));
    }
    let y = format!("Y{n}");
    vars.push(Variable::new(y.clone(), n as u32, Role::Outcome));
    let mut edges: Vec<(String, String)> = vec![("L".into(), y.clone())];
    for t in 1..=n {
        let (d, m) = (format!("D{t}"), format!("M{t}"));
        edges.push(("L".into(), d.clone()));
        if t > 1 {
            let prev = format!("M{}", t - 1);
            edges.push((prev.clone(), d.clone()));
            edges.push((prev, m.clone()));
        }
        edges.push((d, m.clone()));
        edges.push((m, y.clone()));
    }
    edges.extend(extra.iter().cloned());
    let edges: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let targets: Vec<String> = (1..=n)
        .map(|t| if mediator_targets { format!("M{t}") } else { format!("D{t}") })
        .collect();
    let targets: Vec<&str> = targets.iter().map(String::as_str).collect();
    build(name, vars, &edges, &targets)
}

/// Longitudinal graph with `n` doses `D_t`, mediators `M_t`, baseline `L` and
/// final outcome `Y{n}`; the doses are the targets. With `n = 1` this is
/// Figure 1.
pub fn figure2(n: usize) -> BaseDag {
    longitudinal(&format!("figure2_n{n}"), n, &[], false)
}

/// The Figure 2 graph with the mediators as targets.
pub fn figure3(n: usize) -> BaseDag {
    longitudinal(&format!("figure3_n{n}"), n, &[], true)
}

/// Figure 2 plus confounding `L -> M_t` of every mediator, which breaks the
/// mediator route.
pub fn figure2_confounded_mediators(n: usize) -> BaseDag {
    let extra: Vec<(String, String)> = (1..=n).map(|t| ("L".to_string(), format!("M{t}"))).collect();
    longitudinal(&format!("figure2_confounded_n{n}"), n, &extra, false)
}

/// Small graph where a later intervention node and an earlier outcome share a
/// conditioned child `C`, so the later intervention cannot be dropped.
pub fn collider() -> BaseDag {
    build(
        "collider",
        vec![
            Variable::new("L", 0, Role::Covariate),
            Variable::new("D1", 1, Role::Target),
            Variable::new("M1", 1, Role::Mediator),
            Variable::new("D2", 2, Role::Target),
            Variable::new("C", 2, Role::Other),
        ],
        &[("L", "D1"), ("D1", "M1"), ("M1", "C"), ("D2", "C")],
        &["D1", "D2"],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        for g in [figure1(), figure1_ablated(), collider()] {
            assert!(g.validate().is_empty(), "{}", g.name());
        }
        for n in 1..=3 {
            for g in [figure2(n), figure3(n), figure2_confounded_mediators(n)] {
                assert!(g.validate().is_empty(), "{}: {:?}", g.name(), g.validate());
            }
        }
    }

    #[test]
    fn figure2_edge_count() {
        // L->Y, per t: L->D, D->M, M->Y, and two lag edges from t=2 on
        for n in 1..=4 {
            assert_eq!(figure2(n).edges().len(), 1 + 3 * n + 2 * (n - 1));
        }
    }
}
