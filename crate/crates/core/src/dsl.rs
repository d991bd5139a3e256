//! Text formats for graphs and queries.
//!
//! ```text
//! graph fig1 {
//!   var L @0 role=covariate;
//!   var D1 @1 role=target;
//!   edge L -> D1;
//!   target D1;
//! }
//! ```
//!
//! Queries are `identify q[1](Y1 | do D1=d1)` and
//! `dsep q[1]: Y1 _||_ Do1 | M1, D1`; the leading keyword is optional.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::expr::ValueRef;
use crate::graph::CiQuery;
use crate::lex::{tokenize, Cursor, LexError, Pos, Tok};
use crate::model::{BaseDag, Estimand, Regime, Role, Swig, Variable, Violation, MAX_TARGETS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DslError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.diagnostics.iter().map(|d| d.to_string()).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl std::error::Error for DslError {}

impl From<LexError> for DslError {
    fn from(e: LexError) -> Self {
        DslError {
            diagnostics: vec![Diagnostic {
                pos: e.pos,
                message: e.message,
            }],
        }
    }
}

fn err(pos: Pos, message: impl Into<String>) -> DslError {
    DslError {
        diagnostics: vec![Diagnostic {
            pos,
            message: message.into(),
        }],
    }
}

struct VarDecl {
    pos: Pos,
    var: Variable,
}

/// Parses one graph. Structural problems (cycles, time order, ...) are
/// reported as diagnostics at the declaration that introduces them.
pub fn parse_graph(text: &str) -> Result<BaseDag, DslError> {
    let mut cur = Cursor::new(tokenize(text)?, text);
    if !cur.is_ident("graph") {
        return Err(cur.unexpected("`graph`").into());
    }
    cur.bump();
    let name = cur.expect_ident("graph name")?;
    cur.expect_punct("{")?;

    let mut vars: Vec<VarDecl> = Vec::new();
    let mut edges: Vec<(Pos, String, String)> = Vec::new();
    let mut targets: Vec<(Pos, String, Option<u64>)> = Vec::new();
    while !cur.is_punct("}") {
        let pos = cur.pos();
        let kw = cur.expect_ident("`var`, `edge`, `target` or `}`")?;
        match kw.as_str() {
            "var" => vars.push(var_decl(&mut cur, pos)?),
            "edge" => {
                let mut from = cur.expect_ident("variable name")?;
                cur.expect_punct("->")?;
                loop {
                    let to = cur.expect_ident("variable name")?;
                    edges.push((pos, from, to.clone()));
                    if !cur.eat_punct("->") {
                        break;
                    }
                    from = to;
                }
            }
            "target" => {
                let t = cur.expect_ident("target name")?;
                let mut order = None;
                if cur.is_ident("order") {
                    cur.bump();
                    cur.expect_punct("=")?;
                    order = Some(cur.expect_int("target order")?);
                }
                targets.push((pos, t, order));
            }
            other => return Err(err(pos, format!("unknown declaration `{other}`"))),
        }
        cur.expect_punct(";")?;
    }
    cur.expect_punct("}")?;
    if !cur.is_done() {
        return Err(cur.unexpected("end of input (one graph per file)").into());
    }

    let mut g = BaseDag::new(name);
    let mut decl_pos: HashMap<String, Pos> = HashMap::new();
    for d in vars {
        decl_pos.insert(d.var.name.clone(), d.pos);
        let name = d.var.name.clone();
        g.add_variable(d.var)
            .map_err(|_| err(d.pos, format!("variable `{name}` declared twice")))?;
    }
    let mut edge_pos: BTreeMap<(String, String), Pos> = BTreeMap::new();
    for (pos, a, b) in &edges {
        g.add_edge(a, b).map_err(|e| err(*pos, e.to_string()))?;
        edge_pos.entry((a.clone(), b.clone())).or_insert(*pos);
    }
    if targets.iter().any(|t| t.2.is_some()) && targets.iter().any(|t| t.2.is_none()) {
        let p = targets.iter().find(|t| t.2.is_none()).unwrap().0;
        return Err(err(p, "give every target an order or none"));
    }
    let mut targets = targets;
    targets.sort_by_key(|t| t.2);
    for (pos, t, _) in &targets {
        g.add_target(t).map_err(|e| err(*pos, e.to_string()))?;
    }

    let violations = g.validate();
    if violations.is_empty() {
        return Ok(g);
    }
    let at = |v: &Violation| -> Pos {
        let var = |n: &str| decl_pos.get(n).copied().unwrap_or_default();
        let edge = |a: &str, b: &str| edge_pos.get(&(a.to_string(), b.to_string())).copied().unwrap_or_default();
        match v {
            Violation::Cycle { path } if path.len() >= 2 => edge(&path[0], &path[1]),
            Violation::DuplicateEdge { from, to } | Violation::TimeOrder { parent: from, child: to } => {
                edge(from, to)
            }
            Violation::TargetOrdering { later, .. } => {
                targets.iter().find(|t| &t.1 == later).map_or_else(Pos::default, |t| t.0)
            }
            Violation::InterventionInBase(n) | Violation::ZeroLevels(n) => var(n),
            _ => Pos { line: 1, col: 1 },
        }
    };
    Err(DslError {
        diagnostics: violations
            .iter()
            .map(|v| Diagnostic {
                pos: at(v),
                message: v.to_string(),
            })
            .collect(),
    })
}

fn var_decl(cur: &mut Cursor, pos: Pos) -> Result<VarDecl, DslError> {
    let name = cur.expect_ident("variable name")?;
    let mut var = Variable::new(name, 0, Role::Other);
    if cur.eat_punct("@") {
        let p = cur.pos();
        var.time = u32::try_from(cur.expect_int("time index")?).map_err(|_| err(p, "time index out of range"))?;
    }
    while !cur.is_punct(";") {
        let p = cur.pos();
        let key = cur.expect_ident("an attribute or `;`")?;
        match key.as_str() {
            "unobserved" => var.observed = false,
            "role" => {
                cur.expect_punct("=")?;
                let p = cur.pos();
                let r = cur.expect_ident("role")?;
                var.role = r.parse().map_err(|e: String| err(p, e))?;
            }
            "levels" => {
                cur.expect_punct("=")?;
                var.levels = cur.expect_int("level count")? as usize;
            }
            other => return Err(err(p, format!("unknown attribute `{other}`"))),
        }
    }
    Ok(VarDecl { pos, var })
}

/// Writes `g` in the format read by [`parse_graph`].
pub fn emit_graph(g: &BaseDag) -> String {
    let mut out = format!("graph {} {{\n", g.name());
    for v in g.variables() {
        out.push_str(&format!("  var {} @{} role={}", v.name, v.time, v.role));
        if v.levels != 2 {
            out.push_str(&format!(" levels={}", v.levels));
        }
        if !v.observed {
            out.push_str(" unobserved");
        }
        out.push_str(";\n");
    }
    for &(a, b) in g.edges() {
        out.push_str(&format!("  edge {} -> {};\n", g.variable(a).name, g.variable(b).name));
    }
    for &t in g.targets() {
        out.push_str(&format!("  target {};\n", g.variable(t).name));
    }
    out.push_str("}\n");
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Identify(Estimand),
    Dsep(CiQuery),
}

/// `q[n]`, `q[]`, `q0`, `qn` or `q{1,3}`.
fn regime(cur: &mut Cursor, swig: &Swig) -> Result<Regime, DslError> {
    let pos = cur.pos();
    let word = cur.expect_ident("a regime such as `q[1]`")?;
    let r = if word == "q" && cur.eat_punct("[") {
        let r = if cur.is_punct("]") {
            Regime::OBSERVED
        } else {
            let p = cur.pos();
            let n = cur.expect_int("number of active interventions")? as usize;
            if n > MAX_TARGETS {
                return Err(err(p, format!("regime index {n} out of range")));
            }
            Regime::prefix(n)
        };
        cur.expect_punct("]")?;
        r
    } else if word == "q" && cur.eat_punct("{") {
        let mut r = Regime::OBSERVED;
        while !cur.is_punct("}") {
            let p = cur.pos();
            let i = cur.expect_int("intervention index")? as usize;
            if !(1..=MAX_TARGETS).contains(&i) {
                return Err(err(p, format!("intervention index {i} out of range")));
            }
            r = r.with(i);
            if !cur.eat_punct(",") {
                break;
            }
        }
        cur.expect_punct("}")?;
        r
    } else {
        match word.strip_prefix('q').and_then(|d| d.parse::<usize>().ok()) {
            Some(n) if n <= MAX_TARGETS => Regime::prefix(n),
            _ => return Err(err(pos, format!("expected a regime such as `q[1]`, found `{word}`"))),
        }
    };
    swig.check_regime(r).map_err(|e| err(pos, e.to_string()))?;
    Ok(r)
}

fn known(swig: &Swig, name: &str, pos: Pos) -> Result<(), DslError> {
    swig.id(name)
        .map(|_| ())
        .ok_or_else(|| err(pos, format!("unknown variable `{name}`")))
}

fn value(cur: &mut Cursor) -> Result<ValueRef, DslError> {
    let pos = cur.pos();
    match cur.bump() {
        Some(Tok::Int(i)) => Ok(ValueRef::Level(i as usize)),
        Some(Tok::Ident(s)) => Ok(ValueRef::Sym(s)),
        _ => Err(err(pos, "expected a level or a symbol after `=`")),
    }
}

fn estimand(cur: &mut Cursor, swig: &Swig) -> Result<Estimand, DslError> {
    let start = cur.pos();
    let regime = regime(cur, swig)?;
    cur.expect_punct("(")?;
    let mut dependents = Vec::new();
    loop {
        let pos = cur.pos();
        let name = cur.expect_ident("variable name")?;
        known(swig, &name, pos)?;
        let v = if cur.eat_punct("=") { Some(value(cur)?) } else { None };
        dependents.push((name, v));
        if !cur.eat_punct(",") {
            break;
        }
    }
    let mut conditioners = Vec::new();
    if cur.eat_punct("|") {
        // `do` covers the following targets until a non-target name appears
        let mut in_do = false;
        loop {
            let pos = cur.pos();
            let explicit = cur.is_ident("do") && matches!(cur.peek2(), Some(Tok::Ident(_)));
            if explicit {
                cur.bump();
            }
            let name = cur.expect_ident("variable name")?;
            let target = swig.id(&name).is_some_and(|id| swig.is_target(id));
            in_do = explicit || (in_do && target);
            let is_do = in_do;
            let node = if is_do {
                let id = swig
                    .id(&name)
                    .filter(|&id| swig.is_target(id))
                    .ok_or_else(|| err(pos, format!("`{name}` is not an intervention target")))?;
                swig.variable(swig.pair(swig.split_index(id).unwrap()).unwrap().intervention)
                    .name
                    .clone()
            } else {
                known(swig, &name, pos)?;
                name.clone()
            };
            let v = if cur.eat_punct("=") {
                value(cur)?
            } else if is_do {
                ValueRef::sym(name.to_lowercase())
            } else {
                return Err(err(cur.pos(), format!("conditioner `{name}` needs a value")));
            };
            conditioners.push((node, v));
            if !cur.eat_punct(",") {
                break;
            }
        }
    }
    cur.expect_punct(")")?;
    let est = Estimand {
        regime,
        dependents,
        conditioners,
    };
    est.to_term(swig).map_err(|e| err(start, e.to_string()))?;
    Ok(est)
}

fn names(cur: &mut Cursor, swig: &Swig) -> Result<Vec<String>, DslError> {
    let mut out = Vec::new();
    loop {
        let pos = cur.pos();
        let n = cur.expect_ident("variable name")?;
        known(swig, &n, pos)?;
        out.push(n);
        if !cur.eat_punct(",") {
            break;
        }
    }
    Ok(out)
}

fn ci_query(cur: &mut Cursor, swig: &Swig) -> Result<CiQuery, DslError> {
    let start = cur.pos();
    let regime = regime(cur, swig)?;
    cur.expect_punct(":")?;
    let x = names(cur, swig)?;
    cur.expect_punct("_||_")?;
    let y = names(cur, swig)?;
    let z = if cur.eat_punct("|") { names(cur, swig)? } else { Vec::new() };
    let q = CiQuery::new(regime, &x, &y, &z);
    q.resolve(swig).map_err(|e| err(start, e.to_string()))?;
    Ok(q)
}

/// Parses an `identify` or `dsep` query against `swig`.
pub fn parse_query(text: &str, swig: &Swig) -> Result<Query, DslError> {
    let mut cur = Cursor::new(tokenize(text)?, text);
    let kw = if cur.is_ident("identify") || cur.is_ident("dsep") {
        match cur.bump() {
            Some(Tok::Ident(s)) => Some(s),
            _ => unreachable!(),
        }
    } else {
        None
    };
    // without a keyword, the token after the regime decides
    let q = match kw.as_deref() {
        Some("identify") => Query::Identify(estimand(&mut cur, swig)?),
        Some(_) => Query::Dsep(ci_query(&mut cur, swig)?),
        None => {
            let mut probe = Cursor::new(tokenize(text)?, text);
            regime(&mut probe, swig)?;
            if probe.is_punct(":") {
                Query::Dsep(ci_query(&mut cur, swig)?)
            } else {
                Query::Identify(estimand(&mut cur, swig)?)
            }
        }
    };
    if !cur.is_done() {
        return Err(cur.unexpected("end of query").into());
    }
    Ok(q)
}

/// A regime on its own: `q[2]`, `q2`, `q{1,3}`, or a bare count such as `2`.
pub fn parse_regime(text: &str, swig: &Swig) -> Result<Regime, DslError> {
    let trimmed = text.trim();
    let owned;
    let text = if !trimmed.is_empty() && trimmed.chars().all(|c| c.is_ascii_digit()) {
        owned = format!("q{trimmed}");
        owned.as_str()
    } else {
        text
    };
    let mut cur = Cursor::new(tokenize(text)?, text);
    let r = regime(&mut cur, swig)?;
    if !cur.is_done() {
        return Err(cur.unexpected("end of regime").into());
    }
    Ok(r)
}

pub fn parse_estimand(text: &str, swig: &Swig) -> Result<Estimand, DslError> {
    match parse_query(text, swig)? {
        Query::Identify(e) => Ok(e),
        Query::Dsep(_) => Err(err(Pos { line: 1, col: 1 }, "expected an identify query")),
    }
}

pub fn parse_ci_query(text: &str, swig: &Swig) -> Result<CiQuery, DslError> {
    match parse_query(text, swig)? {
        Query::Dsep(q) => Ok(q),
        Query::Identify(_) => Err(err(Pos { line: 1, col: 1 }, "expected a dsep query")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::d_separated;
    use crate::model::to_swig;

    #[test]
    fn fixtures_round_trip() {
        let mut gs = vec![fixtures::figure1(), fixtures::figure1_ablated(), fixtures::collider()];
        for n in 1..=3 {
            gs.push(fixtures::figure2(n));
            gs.push(fixtures::figure3(n));
        }
        let mut hidden = fixtures::figure1();
        hidden.set_observed("L", false).unwrap();
        gs.push(hidden.with_targets(&["D1"]).unwrap());
        for g in gs {
            let text = emit_graph(&g);
            let back = parse_graph(&text).unwrap();
            assert_eq!(back, g, "{text}");
            assert_eq!(emit_graph(&back), text);
        }
    }

    #[test]
    fn attributes_and_comments() {
        let g = parse_graph(
            "# a comment\ngraph g {\n var A @0 levels=3 unobserved role=covariate;\n var B @1; edge A -> B;\n}",
        )
        .unwrap();
        let a = g.variable(g.id("A").unwrap());
        assert_eq!((a.levels, a.observed, a.role), (3, false, Role::Covariate));
        assert_eq!(g.variable(g.id("B").unwrap()).role, Role::Other);
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn empty_body_is_valid() {
        let g = parse_graph("graph empty { }").unwrap();
        assert!(g.variables().is_empty());
    }

    #[test]
    fn target_order_attribute() {
        let g = parse_graph(
            "graph g { var A @1; var B @2; target B order=2; target A order=1; }",
        )
        .unwrap();
        let names: Vec<&str> = g.targets().iter().map(|&t| g.variable(t).name.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
    }

    #[test]
    fn self_loop_is_a_cycle_at_the_edge() {
        let e = parse_graph("graph g {\n  var A;\n  edge A -> A;\n}").unwrap_err();
        assert_eq!(e.diagnostics.len(), 1);
        assert!(e.diagnostics[0].message.contains("cycle"), "{e}");
        assert_eq!(e.diagnostics[0].pos, Pos { line: 3, col: 3 });
    }

    #[test]
    fn syntax_errors_have_positions() {
        let e = parse_graph("graph g {\n  var A colour=red;\n}").unwrap_err();
        assert_eq!(e.diagnostics[0].pos, Pos { line: 2, col: 9 });
        assert!(e.to_string().contains("unknown attribute `colour`"));
        let e = parse_graph("graph g { edge A -> B; }").unwrap_err();
        assert!(e.to_string().contains("unknown variable"));
        assert!(parse_graph("graph g { var A; } graph h { }").is_err());
        assert!(parse_graph("graph g { var A role=boss; }").is_err());
    }

    #[test]
    fn identify_queries() {
        let swig = to_swig(&fixtures::figure2(2)).unwrap();
        let e = parse_estimand("identify q[2](Y2 | do D1=d1, do D2=d2)", &swig).unwrap();
        assert_eq!(e, Estimand::all_interventions(&swig, &["Y2"]).unwrap());
        let e = parse_estimand("q[2]( Y2 | do D1, do D2 )", &swig).unwrap();
        assert_eq!(e, Estimand::all_interventions(&swig, &["Y2"]).unwrap());
        let e = parse_estimand("q[2](Y2 | do D1=d1, D2=d2)", &swig).unwrap();
        assert_eq!(e, Estimand::all_interventions(&swig, &["Y2"]).unwrap());
        let e = parse_estimand("q[1](Y2 | do D1=d1, L=0)", &swig).unwrap();
        assert_eq!(e.conditioners[1], ("L".to_string(), ValueRef::Level(0)));
        let e = parse_estimand("q2(M1=m1, M2 | Do1=0, do D2=1)", &swig).unwrap();
        assert_eq!(e.dependents.len(), 2);
        assert_eq!(e.conditioners[0], ("Do1".to_string(), ValueRef::Level(0)));
        assert!(parse_estimand("q[3](Y2 | do D1=d1)", &swig).is_err());
        assert!(parse_estimand("q[1](Y2 | do M1=m)", &swig).is_err());
        assert!(parse_estimand("q[1](Z)", &swig).is_err());
    }

    #[test]
    fn regimes() {
        let swig = to_swig(&fixtures::collider()).unwrap();
        assert_eq!(parse_regime("q[2]", &swig).unwrap(), Regime::prefix(2));
        assert_eq!(parse_regime("0", &swig).unwrap(), Regime::OBSERVED);
        assert_eq!(parse_regime("q{2}", &swig).unwrap(), Regime::from_indices([2]));
        assert!(parse_regime("q3", &swig).is_err());
    }

    #[test]
    fn dsep_queries() {
        let swig = to_swig(&fixtures::figure1()).unwrap();
        let q = parse_ci_query("dsep q[1]: Y1 _||_ Do1 | M1, D1", &swig).unwrap();
        assert!(d_separated(&swig, &q).unwrap());
        let q2 = parse_ci_query("q{1}: Y1 _||_ Do1 | D1, M1", &swig).unwrap();
        assert_eq!(q, q2);
        assert!(parse_ci_query("q[1]: Y1 _||_ Y1", &swig).is_err());
        let e = parse_ci_query("q[1]: Y1 _||_ Do9", &swig).unwrap_err();
        assert_eq!(e.diagnostics[0].pos, Pos { line: 1, col: 15 });
    }
}
