use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use swig_ident::dot::to_dot;
use swig_ident::dsl::{parse_ci_query, parse_estimand, parse_graph, parse_regime};
use swig_ident::graph::d_separated;
use swig_ident::ident::{
    compose_mediator_intervention, derivation_from_json, derivation_to_json, identify, verify, Derivation,
    Status, Strategy, VerifyOptions,
};
use swig_ident::model::{to_swig, BaseDag, Swig};
use swig_ident::oracle::{plugin_estimate, random_model, sample, Dataset, Env, ModelFile};

const NOT_IDENTIFIED: u8 = 2;

#[derive(Parser)]
#[command(name = "swig-ident", version, about = "Identification of interventional distributions on SWIGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct GraphArgs {
    /// Graph file in the .swig format.
    graph: PathBuf,
    /// Mark variables as unobserved (comma separated).
    #[arg(long, value_delimiter = ',')]
    unobserved: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Derive an observed-data formula for an interventional query.
    Identify {
        #[command(flatten)]
        graph: GraphArgs,
        /// For example `q[1](Y1 | do D1=d1)`.
        query: String,
        /// backdoor[:Z..], frontdoor[:M..], sequential_backdoor[:L..],
        /// sequential_frontdoor[:M..], mediator_intervention[:M..],
        /// top_down[:depth], bottom_up[:depth].
        #[arg(long, default_value = "top_down")]
        strategy: String,
        /// Compose with an intervention on the targets of this graph, which
        /// must share the base DAG.
        #[arg(long, value_name = "GRAPH")]
        compose_with: Option<PathBuf>,
        /// Print the derivation as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check every step of a derivation numerically on random models.
    Verify {
        #[command(flatten)]
        graph: GraphArgs,
        derivation: PathBuf,
        #[arg(long, default_value_t = 100)]
        models: usize,
        #[arg(long, env = "SWIG_IDENT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Dirichlet concentration of the random CPT rows.
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
    },
    /// Decide a d-separation query such as `q[1]: Y1 _||_ Do1 | M1, D1`.
    Dsep {
        #[command(flatten)]
        graph: GraphArgs,
        query: String,
    },
    /// Sample a dataset as CSV.
    Simulate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, env = "SWIG_IDENT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "q0")]
        regime: String,
        /// Model JSON; a random model drawn with `--seed` when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
    },
    /// Plug-in estimate of an identified derivation's formula from a CSV dataset.
    Estimate {
        #[command(flatten)]
        graph: GraphArgs,
        derivation: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Values for parameters and free variables, `name=level`.
        #[arg(long = "set", value_delimiter = ',')]
        set: Vec<String>,
    },
    /// Render a regime graph in Graphviz DOT.
    Dot {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value = "q0")]
        regime: String,
    },
    /// Write a random model for the graph as JSON.
    Model {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, env = "SWIG_IDENT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_base(args: &GraphArgs) -> Result<BaseDag> {
    let mut g = parse_graph(&read(&args.graph)?).map_err(|e| anyhow!("{}:\n{e}", args.graph.display()))?;
    for v in &args.unobserved {
        g.set_observed(v.trim(), false)?;
    }
    Ok(g)
}

fn load(args: &GraphArgs) -> Result<Swig> {
    Ok(to_swig(&load_base(args)?)?)
}

fn load_derivation(path: &Path, swig: &Swig) -> Result<Derivation> {
    let v: serde_json::Value =
        serde_json::from_str(&read(path)?).with_context(|| format!("{} is not JSON", path.display()))?;
    Ok(derivation_from_json(&v, swig)?)
}

fn cmd_identify(
    graph: &GraphArgs,
    query: &str,
    strategy: &str,
    compose_with: Option<&Path>,
    json: bool,
    out: &mut impl Write,
) -> Result<u8> {
    let swig = load(graph)?;
    let est = parse_estimand(query, &swig).map_err(|e| anyhow!("query:\n{e}"))?;
    let d = match compose_with {
        Some(p) => {
            let mut other = parse_graph(&read(p)?).map_err(|e| anyhow!("{}:\n{e}", p.display()))?;
            for v in &graph.unobserved {
                other.set_observed(v.trim(), false)?;
            }
            compose_mediator_intervention(&swig, &to_swig(&other)?, &est)?
        }
        None => {
            let s: Strategy = strategy.parse().map_err(|e: String| anyhow!(e))?;
            identify(&swig, &est, &s)?
        }
    };
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&derivation_to_json(&d))?)?;
    } else {
        if d.status.is_identified() {
            writeln!(out, "{}\n", d.final_expr.canonicalize()?)?;
        }
        write!(out, "{d}")?;
    }
    Ok(match d.status {
        Status::Identified => 0,
        Status::NotIdentified { .. } => NOT_IDENTIFIED,
    })
}

fn cmd_verify(graph: &GraphArgs, path: &Path, opts: VerifyOptions, out: &mut impl Write) -> Result<u8> {
    let swig = load(graph)?;
    let d = load_derivation(path, &swig)?;
    let r = verify(&d, &swig, &opts)?;
    for s in &r.steps {
        writeln!(
            out,
            "step {:>3}  {:<20} max deviation {:.3e}  {}",
            s.index,
            s.rule,
            s.max_deviation,
            match (s.passed, s.rechecked) {
                (true, _) => "ok",
                (false, false) => "FAIL (side condition does not re-check)",
                (false, true) => "FAIL",
            }
        )?;
    }
    writeln!(out, "final vs estimand: max deviation {:.3e}", r.final_deviation)?;
    writeln!(
        out,
        "models: {} used, {} skipped (zero-probability conditioning)",
        r.models_used, r.models_skipped
    )?;
    if !r.chained {
        writeln!(out, "steps do not chain")?;
    }
    writeln!(out, "{}", if r.passed { "PASS" } else { "FAIL" })?;
    Ok(if r.passed { 0 } else { NOT_IDENTIFIED })
}

fn write_csv(data: &Dataset, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&data.columns)?;
    for row in &data.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<u32>())
            .collect::<Result<Vec<u32>, _>>()
            .with_context(|| format!("row {}: levels must be non-negative integers", i + 2))?;
        rows.push(row);
    }
    Ok(Dataset { columns, rows })
}

fn cmd_estimate(graph: &GraphArgs, path: &Path, data: &Path, set: &[String], out: &mut impl Write) -> Result<u8> {
    let swig = load(graph)?;
    let d = load_derivation(path, &swig)?;
    if !d.status.is_identified() {
        bail!("the derivation is not identified");
    }
    let data = read_csv(data)?;
    let mut env = Env::new();
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("`--set {kv}`: expected name=level"))?;
        let level: usize = v.trim().parse().with_context(|| format!("`--set {kv}`"))?;
        env = if swig.id(k.trim()).is_some() {
            env.var(k.trim(), level)
        } else {
            env.symbol(k.trim(), level)
        };
    }
    let est = plugin_estimate(&swig, &d.final_expr, &data, &env)?;
    writeln!(out, "{}", est.value)?;
    if est.empty_strata > 0 {
        writeln!(io::stderr(), "warning: {} empty strata were smoothed", est.empty_strata)?;
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Identify {
            graph,
            query,
            strategy,
            compose_with,
            json,
        } => cmd_identify(&graph, &query, &strategy, compose_with.as_deref(), json, &mut out),
        Command::Verify {
            graph,
            derivation,
            models,
            seed,
            tol,
            concentration,
        } => {
            let opts = VerifyOptions {
                models,
                seed,
                tol,
                concentration,
            };
            cmd_verify(&graph, &derivation, opts, &mut out)
        }
        Command::Dsep { graph, query } => {
            let swig = load(&graph)?;
            let q = parse_ci_query(&query, &swig).map_err(|e| anyhow!("query:\n{e}"))?;
            writeln!(out, "{}", d_separated(&swig, &q)?)?;
            Ok(0)
        }
        Command::Simulate {
            graph,
            n,
            seed,
            regime,
            model,
            concentration,
        } => {
            let swig = load(&graph)?;
            let regime = parse_regime(&regime, &swig).map_err(|e| anyhow!("regime:\n{e}"))?;
            let m = match model {
                Some(p) => ModelFile::from_json(&read(&p)?)?.into_model(&swig)?,
                None => random_model(&swig, seed, concentration)?,
            };
            write_csv(&sample(&m, regime, n, seed)?, out)?;
            Ok(0)
        }
        Command::Estimate {
            graph,
            derivation,
            data,
            set,
        } => cmd_estimate(&graph, &derivation, &data, &set, &mut out),
        Command::Dot { graph, regime } => {
            let swig = load(&graph)?;
            let regime = parse_regime(&regime, &swig).map_err(|e| anyhow!("regime:\n{e}"))?;
            write!(out, "{}", to_dot(&swig, regime)?)?;
            Ok(0)
        }
        Command::Model {
            graph,
            seed,
            concentration,
        } => {
            let swig = load(&graph)?;
            let m = random_model(&swig, seed, concentration)?;
            writeln!(out, "{}", ModelFile::from_model(&m).to_json())?;
            Ok(0)
        }
    }
}

fn is_broken_pipe(e: &(dyn std::error::Error + 'static)) -> bool {
    e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.chain().any(is_broken_pipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
