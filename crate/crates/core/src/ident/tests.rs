use super::*;
use crate::expr::{parse_expr, ValueRef};
use crate::fixtures;
use crate::graph::d_separated;
use crate::model::{BaseDag, Regime};
use crate::oracle::{brute_force_ci, random_model};

fn swig_of(g: &BaseDag) -> Swig {
    to_swig(g).unwrap()
}

fn unobserved_l(mut g: BaseDag) -> BaseDag {
    g.set_observed("L", false).unwrap();
    g
}

fn run(swig: &Swig, outcomes: &[&str], s: &str) -> Derivation {
    let est = Estimand::all_interventions(swig, outcomes).unwrap();
    identify(swig, &est, &s.parse().unwrap()).unwrap()
}

fn expect(swig: &Swig, d: &Derivation, text: &str) {
    assert!(d.status.is_identified(), "{d}");
    let want = parse_expr(text, swig).unwrap();
    assert!(
        d.final_expr.struct_eq(&want),
        "got {}\nwant {}",
        d.final_expr.canonicalize().unwrap(),
        want.canonicalize().unwrap()
    );
}

fn audit(swig: &Swig, d: &Derivation, models: usize) -> VerifyReport {
    let r = verify(
        d,
        swig,
        &VerifyOptions {
            models,
            seed: 7,
            ..VerifyOptions::default()
        },
    )
    .unwrap();
    assert!(r.passed, "{d}\n{r:?}");
    r
}

/// `q0(M_t | M_{<t}, D_{<=t}=d)` for t = 1..n.
fn eq3_factors(n: usize) -> Vec<String> {
    (1..=n)
        .map(|t| {
            let mut cond: Vec<String> = (1..t).map(|j| format!("M{j}=m{j}")).collect();
            cond.extend((1..=t).map(|j| format!("D{j}=d{j}")));
            format!("q0(M{t}=m{t} | {})", cond.join(", "))
        })
        .collect()
}

fn eq4(n: usize) -> String {
    let mut binders = Vec::new();
    let mut factors = eq3_factors(n);
    for t in 1..=n {
        binders.push(format!("m{t}"));
        binders.push(format!("d{t}'"));
        let mut cond: Vec<String> = (1..t).map(|j| format!("D{j}=d{j}'")).collect();
        cond.extend((1..t).map(|j| format!("M{j}=m{j}")));
        if cond.is_empty() {
            factors.push(format!("q0(D{t}=d{t}')"));
        } else {
            factors.push(format!("q0(D{t}=d{t}' | {})", cond.join(", ")));
        }
    }
    let mut y: Vec<String> = (1..=n).map(|j| format!("D{j}=d{j}'")).collect();
    y.extend((1..=n).map(|j| format!("M{j}=m{j}")));
    factors.push(format!("q0(Y{n} | {})", y.join(", ")));
    format!("sum{{{}}} {}", binders.join(","), factors.join(" * "))
}

#[test]
fn backdoor_reproduces_section_3_1() {
    let swig = swig_of(&fixtures::figure1());
    for s in ["backdoor:L", "backdoor"] {
        let d = run(&swig, &["Y1"], s);
        expect(&swig, &d, "sum{l} q0(Y1 | D1=d1, L=l) * q0(L=l)");
        let names: Vec<&str> = d.steps.iter().map(|s| s.rule.name()).collect();
        assert_eq!(
            names,
            ["total_probability", "product", "ci_modify", "drop_later", "consistency", "redundancy"]
        );
        audit(&swig, &d, 100);
    }
}

#[test]
fn frontdoor_reproduces_section_3_2() {
    let swig = swig_of(&unobserved_l(fixtures::figure1()));
    let want = "sum{m,d1'} q0(Y1 | D1=d1', M1=m) * q0(D1=d1') * q0(M1=m | D1=d1)";
    for s in ["frontdoor:M1", "frontdoor", "sequential_frontdoor"] {
        let d = run(&swig, &["Y1"], s);
        expect(&swig, &d, want);
        audit(&swig, &d, 50);
    }
}

#[test]
fn backdoor_without_observed_confounder_is_not_identified() {
    let swig = swig_of(&unobserved_l(fixtures::figure1()));
    let d = run(&swig, &["Y1"], "backdoor");
    match &d.status {
        Status::NotIdentified { blocking, .. } => assert!(blocking.is_some()),
        Status::Identified => panic!("{d}"),
    }
    assert!(d.is_chained());
}

#[test]
fn sequential_backdoor_reproduces_eq3() {
    for n in 1..=3 {
        let swig = swig_of(&fixtures::figure2(n));
        let outcomes: Vec<String> = (1..=n).map(|t| format!("M{t}")).collect();
        let outcomes: Vec<&str> = outcomes.iter().map(String::as_str).collect();
        let est = Estimand::all_interventions(&swig, &outcomes).unwrap();
        let mut est = est;
        for (i, d) in est.dependents.iter_mut().enumerate() {
            d.1 = Some(ValueRef::sym(format!("m{}", i + 1)));
        }
        let d = identify(&swig, &est, &Strategy::SequentialBackdoor(vec![])).unwrap();
        expect(&swig, &d, &eq3_factors(n).join(" * "));
        audit(&swig, &d, 20);
    }
}

#[test]
fn sequential_frontdoor_reproduces_eq4() {
    for n in 1..=3 {
        let swig = swig_of(&fixtures::figure2(n));
        let y = format!("Y{n}");
        let d = run(&swig, &[&y], "sequential_frontdoor");
        expect(&swig, &d, &eq4(n));
        if n <= 2 {
            audit(&swig, &d, 10);
        }
    }
}

#[test]
fn composition_matches_sequential_frontdoor() {
    for n in 1..=3 {
        let doses = swig_of(&fixtures::figure2(n));
        let mediators = swig_of(&fixtures::figure3(n));
        let y = format!("Y{n}");
        let est = Estimand::all_interventions(&doses, &[&y]).unwrap();
        let composed = compose_mediator_intervention(&doses, &mediators, &est).unwrap();
        let seq = run(&doses, &[&y], "sequential_frontdoor");
        assert!(composed.status.is_identified(), "{composed}");
        assert!(composed.final_expr.struct_eq(&seq.final_expr), "n={n}\n{composed}\n{seq}");
        assert_eq!(composed.targets.len(), 2 * n);
        if n <= 2 {
            audit(&doses, &composed, 5);
        }
    }
}

#[test]
fn composition_with_confounded_mediators_is_not_identified() {
    let g = unobserved_l(fixtures::figure2_confounded_mediators(2));
    let doses = swig_of(&g);
    let mediators = swig_of(&g.with_targets(&["M1", "M2"]).unwrap());
    let est = Estimand::all_interventions(&doses, &["Y2"]).unwrap();
    let d = compose_mediator_intervention(&doses, &mediators, &est).unwrap();
    match &d.status {
        Status::NotIdentified { blocking: Some(q), .. } => {
            let split = d.swig_for(&doses).unwrap();
            assert!(!d_separated(&split, q).unwrap());
        }
        other => panic!("{other:?}\n{d}"),
    }
}

#[test]
fn composition_rejects_different_bases() {
    let doses = swig_of(&fixtures::figure2(2));
    let other = swig_of(&fixtures::figure3(3));
    let est = Estimand::all_interventions(&doses, &["Y2"]).unwrap();
    assert!(matches!(
        compose_mediator_intervention(&doses, &other, &est),
        Err(IdentError::StrategyInapplicable(_))
    ));
}

#[test]
fn ablated_graph_blocks_every_strategy() {
    let swig = swig_of(&unobserved_l(fixtures::figure1_ablated()));
    for s in [
        "backdoor",
        "frontdoor",
        "sequential_backdoor",
        "sequential_frontdoor",
        "mediator_intervention",
        "top_down",
        "bottom_up",
    ] {
        let d = run(&swig, &["Y1"], s);
        match &d.status {
            Status::NotIdentified { blocking: Some(q), .. } => {
                assert!(!d_separated(&swig, q).unwrap(), "{s}: {q}");
            }
            other => panic!("{s}: {other:?}\n{d}"),
        }
    }
    let d = run(&swig, &["Y1"], "frontdoor");
    let Status::NotIdentified { blocking: Some(q), .. } = &d.status else { unreachable!() };
    assert_eq!(q.regime, Regime::prefix(1));
    assert_eq!(q.to_string(), "q1: Y1 _||_ Do1 | D1");
    let d = run(&swig, &["Y1"], "mediator_intervention");
    let Status::NotIdentified { blocking: Some(q), .. } = &d.status else { unreachable!() };
    assert_eq!(q.to_string(), "q1: Y1 _||_ Do1");
}

#[test]
fn refused_insert_is_a_real_dependence() {
    let swig = swig_of(&unobserved_l(fixtures::figure1()));
    let e = parse_expr("q1(Y1 | Do1=d1)", &swig).unwrap();
    let rule = Rule::CiModify {
        var: "D1".into(),
        action: CiAction::Insert {
            value: ValueRef::sym("d1"),
        },
    };
    let err = apply(&swig, &e, &crate::expr::TermPath::root(), &rule).unwrap_err();
    let q = err.blocking().unwrap().clone();
    let dependent = (0..10).any(|seed| {
        let m = random_model(&swig, seed, 1.0).unwrap();
        !brute_force_ci(&m, &q, 1e-6).unwrap().independent
    });
    assert!(dependent, "{q}");
}

#[test]
fn refused_drop_is_a_real_dependence() {
    let swig = swig_of(&fixtures::collider());
    let e = parse_expr("q{1,2}(M1 | Do1=d1, Do2=d2, C=c)", &swig).unwrap();
    let err = apply(
        &swig,
        &e,
        &crate::expr::TermPath::root(),
        &Rule::DropLater { keep_through: Some(1) },
    )
    .unwrap_err();
    let q = err.blocking().unwrap().clone();
    assert!(!d_separated(&swig, &q).unwrap());
    let dependent = (0..10).any(|seed| {
        let m = random_model(&swig, seed, 1.0).unwrap();
        !brute_force_ci(&m, &q, 1e-6).unwrap().independent
    });
    assert!(dependent, "{q}");
}

#[test]
fn search_results_verify() {
    let cases: Vec<(BaseDag, &str)> = vec![
        (fixtures::figure1(), "Y1"),
        (unobserved_l(fixtures::figure1()), "Y1"),
        (fixtures::figure2(2), "Y2"),
        (unobserved_l(fixtures::figure2(2)), "Y2"),
    ];
    for (g, y) in cases {
        let swig = swig_of(&g);
        for s in ["top_down", "bottom_up"] {
            let d = run(&swig, &[y], s);
            assert!(d.status.is_identified(), "{} {s}\n{d}", g.name());
            audit(&swig, &d, 5);
        }
    }
}

#[test]
fn search_depth_bounds_the_introduced_set() {
    let swig = swig_of(&unobserved_l(fixtures::figure2(2)));
    assert!(!run(&swig, &["Y2"], "top_down:2").status.is_identified());
    assert!(run(&swig, &["Y2"], "top_down:4").status.is_identified());
}

#[test]
fn steps_recheck_and_chain() {
    let swig = swig_of(&fixtures::figure2(2));
    let d = run(&swig, &["Y2"], "sequential_frontdoor");
    assert!(d.is_chained());
    for s in &d.steps {
        s.recheck(&swig).unwrap();
    }
}

#[test]
fn corrupted_step_is_flagged() {
    let swig = swig_of(&fixtures::figure1());
    let mut d = run(&swig, &["Y1"], "backdoor:L");
    // the licensed insertion of D1 also moves Do1 to a fixed level
    let i = d.steps.iter().position(|s| s.rule.name() == "ci_modify").unwrap();
    let text = d.steps[i].output.to_string().replacen("Do1=d1", "Do1=0", 1);
    d.steps[i].output = parse_expr(&text, &swig).unwrap();
    let r = verify(&d, &swig, &VerifyOptions { models: 20, seed: 1, ..Default::default() }).unwrap();
    assert!(!r.passed);
    assert!(!r.steps[i].passed);
    assert!(r.steps[i].max_deviation > 1e-6);
    assert!(!r.steps[i].rechecked);
    assert!(r.steps.iter().enumerate().all(|(j, s)| j == i || s.max_deviation <= 1e-9));
}

#[test]
fn empty_derivation_checks_the_final_expression() {
    let swig = swig_of(&fixtures::figure1());
    let est = parse_expr("q0(Y1 | D1=d1)", &swig).unwrap();
    let mut d = run(&swig, &["Y1"], "backdoor:L");
    d.estimand = est.as_term().unwrap().clone();
    d.steps.clear();
    d.final_expr = est.clone();
    let r = verify(&d, &swig, &VerifyOptions { models: 5, ..Default::default() }).unwrap();
    assert!(r.passed && r.steps.is_empty());
    d.final_expr = parse_expr("q0(Y1 | D1=0)", &swig).unwrap();
    let r = verify(&d, &swig, &VerifyOptions { models: 5, ..Default::default() }).unwrap();
    assert!(!r.passed && r.final_deviation > 1e-6);
}

#[test]
fn json_round_trip() {
    let doses = swig_of(&fixtures::figure2(2));
    let est = Estimand::all_interventions(&doses, &["Y2"]).unwrap();
    let d = identify(&doses, &est, &Strategy::MediatorIntervention(None)).unwrap();
    let v = derivation_to_json(&d);
    let text = serde_json::to_string_pretty(&v).unwrap();
    let back = derivation_from_json(&serde_json::from_str(&text).unwrap(), &doses).unwrap();
    assert_eq!(back, d);

    let swig = swig_of(&unobserved_l(fixtures::figure1_ablated()));
    let d = run(&swig, &["Y1"], "frontdoor");
    let back = derivation_from_json(&derivation_to_json(&d), &swig).unwrap();
    assert_eq!(back, d);
}

#[test]
fn strategy_syntax_round_trips() {
    for s in [
        "backdoor",
        "backdoor:L",
        "frontdoor:M1,M2",
        "sequential_backdoor",
        "sequential_frontdoor",
        "mediator_intervention:M1",
        "top_down:4",
        "bottom_up:2",
    ] {
        let parsed: Strategy = s.parse().unwrap();
        assert_eq!(parsed.to_string(), s);
    }
    assert!("top_down:0".parse::<Strategy>().is_err());
    assert!("sideways".parse::<Strategy>().is_err());
}

#[test]
fn frontdoor_needs_a_single_intervention() {
    let swig = swig_of(&fixtures::figure2(2));
    let est = Estimand::all_interventions(&swig, &["Y2"]).unwrap();
    assert!(matches!(
        identify(&swig, &est, &Strategy::Frontdoor(Some(vec!["M1".into()]))),
        Err(IdentError::StrategyInapplicable(_))
    ));
}
