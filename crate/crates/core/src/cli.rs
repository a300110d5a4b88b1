//! Command-line front end.
//!
//! Every subcommand resolves a `key=value` map from built-in defaults, an
//! optional `--config` file and its flags (later sources win), rejects unknown
//! keys, runs, and writes one report whose header echoes the resolved map.

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_list, KeyValues};
use crate::error::{Error, Result};
use crate::experiments::{
    run_cutnorm_typicality, run_marginal_structure, run_typicality, variance_decomposition, CutNormRun,
    MarginalStructureRun, SamplingMode, TypicalityRun,
};
use crate::graph::{num_slots, CopyHypergraph, EdgeSlot, Graph, Hypergraph};
use crate::increment::{energy, greedy_increment};
use crate::metrics::{
    closed_walk_trace, cut_norm_exact, cut_norm_heuristic, spectral_cut_bound, SquareMatrix, EXACT_CUT_NORM_MAX_N,
};
use crate::report::{Report, WrittenReport};
use crate::sampler::{tail_probability_report, ChainConfig, ExactConditional, LowerTailEvent, McmcRun};
use crate::variational::{
    eta_threshold, solve_phi, stability_probe, tangent_gap_min, Objective, SolverConfig, VariationalProblem,
    VariationalSolution,
};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LOWERTAIL_OUT";
pub const DEFAULT_OUT: &str = "lowertail-out";

macro_rules! flag_set {
    ($(#[$meta:meta])* $name:ident { $($field:ident, $flag:literal, $key:literal, $help:literal;)* }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args)]
        pub struct $name {
            $(
                #[arg(long = $flag, value_name = "VALUE", help = $help)]
                pub $field: Option<String>,
            )*
        }

        impl $name {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            fn key_values(&self) -> KeyValues {
                let mut kv = KeyValues::new();
                $(if let Some(v) = &self.$field {
                    kv.set($key, v);
                })*
                kv
            }
        }
    };
}

flag_set!(ChainFlags {
    steps, "steps", "steps", "proposals per chain after burn-in";
    burn_in, "burn-in", "burn_in", "burn-in proposals per chain";
    thin, "thin", "thin", "keep one state every VALUE proposals (default C(n,2))";
    chains, "chains", "chains", "independent chains";
    audit_interval, "audit-interval", "audit_interval", "proposals between full recounts";
});

flag_set!(SolverFlags {
    restarts, "restarts", "restarts", "random starts besides the constant start";
    feasibility_tol, "feasibility-tol", "feasibility_tol", "relative constraint tolerance";
    improvement_tol, "improvement-tol", "improvement_tol", "relative improvement counted as progress";
    stall_window, "stall-window", "stall_window", "iterations without progress before stopping";
    eps_num, "eps-num", "eps_num", "distance of the box from 0 and 1";
    mu_initial, "mu-initial", "mu_initial", "initial penalty weight";
    mu_growth, "mu-growth", "mu_growth", "penalty growth factor";
    mu_max, "mu-max", "mu_max", "largest penalty weight";
    max_iterations, "max-iterations", "max_iterations", "iterations per penalty stage";
    kkt_tol, "kkt-tol", "kkt_tol", "stationarity tolerance";
});

flag_set!(ThresholdFlags {
    r, "r", "r", "uniformity e(H)";
    r_max, "r-max", "r_max", "also sweep r = 2..=VALUE";
    tangent_grid, "tangent-grid", "tangent_grid", "grid size of the tangent inequality check";
});

flag_set!(SolveFlags {
    h, "H", "H", "pattern graph: K3, C4, P3 or a graph file";
    n, "n", "n", "number of vertices";
    eta, "eta", "eta", "lower-tail level";
    mode, "mode", "mode", "sparse or finite";
    p, "p", "p", "edge probability (finite mode)";
    hypergraph, "hypergraph", "hypergraph", "general hypergraph file instead of H and n";
});

flag_set!(EventFlags {
    h, "H", "H", "pattern graph of the event";
    n, "n", "n", "number of vertices";
    p, "p", "p", "edge probability";
    eta, "eta", "eta", "lower-tail level";
});

flag_set!(SampleFlags {
    mode, "mode", "mode", "exact or mcmc";
    records, "records", "records", "true to include every retained sample";
});

flag_set!(MarginalFlags {
    mode, "mode", "mode", "exact or mcmc (without W)";
    w, "w", "w", "comma-separated conditioning slots";
    assignment, "assignment", "assignment", "comma-separated 0/1 values for the slots in W";
    w_sizes, "w-sizes", "w_sizes", "comma-separated |W| values for the structure experiment";
    sets_per_size, "sets-per-size", "sets_per_size", "random W per size";
});

flag_set!(IncrementFlags {
    w, "w", "w", "comma-separated conditioning slots";
    terms, "terms", "terms", "true to list every energy term";
    greedy, "greedy", "greedy", "true to run the greedy reconstruction";
    alpha, "alpha", "alpha", "greedy size budget as a fraction of the slots";
    beta, "beta", "beta", "greedy energy target as a fraction of e(H)";
});

flag_set!(CutnormFlags {
    matrix, "matrix", "matrix", "matrix file, one row per line";
    graph, "graph", "graph", "graph file or name; the matrix is A - q(J - I)";
    q, "q", "q", "constant subtracted from the graph";
    method, "method", "method", "all, exact, heuristic or spectral";
    restarts, "restarts", "restarts", "heuristic restarts";
    k, "k", "k", "closed-walk trace Tr((A - qJ)^(2k)) for a graph";
});

flag_set!(TypicalityFlags {
    h_prime, "H-prime", "H_prime", "pattern of the event";
    h, "H", "H", "counted pattern (metric=count) or event pattern (metric=cutnorm)";
    n, "n", "n", "number of vertices";
    p, "p", "p", "edge probability";
    eta, "eta", "eta", "lower-tail level";
    mode, "mode", "mode", "exact or mcmc";
    metric, "metric", "metric", "count or cutnorm";
    eps, "eps", "eps", "comma-separated relative deviation levels";
    ess_floor, "ess-floor", "ess_floor", "ESS below which the run is flagged";
    bins, "bins", "bins", "histogram bins";
    trace_k, "trace-k", "trace_k", "comma-separated k for Tr((A - qJ)^(2k))";
    heuristic_restarts, "heuristic-restarts", "heuristic_restarts", "cut-norm heuristic restarts";
    bootstrap, "bootstrap", "bootstrap", "bootstrap resamples for the median";
});

flag_set!(StabilityFlags {
    h, "H", "H", "pattern graph";
    n, "n", "n", "number of vertices";
    eta, "eta", "eta", "lower-tail level";
    levels, "levels", "levels", "comma-separated entropy excess levels (per slot)";
    samples, "samples", "samples", "perturbations per level";
});

flag_set!(TailFlags {
    h, "H", "H", "pattern graph";
    ns, "ns", "ns", "comma-separated vertex counts";
    p, "p", "p", "edge probability";
    eta, "eta", "eta", "lower-tail level";
    eps, "eps", "eps", "offset of the bracketing levels";
});

flag_set!(VarianceFlags {
    h_prime, "H-prime", "H_prime", "pattern of the event (default H)";
});

#[derive(Debug, Parser)]
#[command(name = "lowertail", version, about = "Lower-tail experiments on random graphs")]
pub struct Cli {
    /// key=value file merged under the flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (default: $LOWERTAIL_OUT, then ./lowertail-out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Root of the threshold equation for e(H) = r.
    Threshold(#[command(flatten)] ThresholdFlags),
    /// Solve the variational problem.
    Solve {
        #[command(flatten)]
        problem: SolveFlags,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Sample the conditioned graph and report marginals.
    Sample {
        #[command(flatten)]
        event: EventFlags,
        #[command(flatten)]
        sample: SampleFlags,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Conditional marginals, q^W for one W, or their distance distribution.
    Marginals {
        #[command(flatten)]
        event: EventFlags,
        #[command(flatten)]
        marginal: MarginalFlags,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Entropy-increment energy and greedy reconstruction.
    Increment {
        #[command(flatten)]
        event: EventFlags,
        #[command(flatten)]
        increment: IncrementFlags,
    },
    /// Cut norm of a matrix or of a graph minus a constant.
    Cutnorm(#[command(flatten)] CutnormFlags),
    /// Concentration of subgraph counts or cut norms under the conditioning.
    Typicality {
        #[command(flatten)]
        run: TypicalityFlags,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Entropy excess versus distance from the constant minimizer.
    Stability(#[command(flatten)] StabilityFlags),
    /// Exact tail probabilities against the variational value.
    Tailprob {
        #[command(flatten)]
        tail: TailFlags,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Split of Var(N_H) into intersecting and disjoint pairs.
    Variance {
        #[command(flatten)]
        event: EventFlags,
        #[command(flatten)]
        variance: VarianceFlags,
    },
}

/// Result of a successful dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub reports: Vec<WrittenReport>,
    /// Human-readable `key=value` summary lines.
    pub lines: Vec<String>,
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                let msg = e.kind().to_string();
                eprintln!("error kind=usage code=2 msg={}", one_line(&msg));
                let _ = e.print();
            }
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            for line in &out.lines {
                println!("{line}");
            }
            for r in &out.reports {
                println!("report={}", r.csv.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error kind={} code={} msg={}", e.kind(), e.exit_code(), one_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Resolves defaults, config file and flags into one map.
fn resolve(cli: &Cli, defaults: &[(&str, &str)], flags: &[KeyValues], allowed: &[&[&str]]) -> Result<KeyValues> {
    let mut kv = KeyValues::new();
    for (k, v) in defaults {
        kv.set(k, v);
    }
    if let Some(path) = &cli.config {
        let file = KeyValues::from_file(path)?;
        let mut keys: Vec<&str> = allowed.iter().flat_map(|a| a.iter().copied()).collect();
        keys.push("seed");
        file.reject_unknown(&keys)?;
        kv.merge(&file);
    }
    for f in flags {
        kv.merge(f);
    }
    if let Some(seed) = cli.seed {
        kv.set("seed", seed);
    }
    if !kv.contains("seed") {
        kv.set("seed", 0);
    }
    Ok(kv)
}

fn req<T: FromStr>(kv: &KeyValues, key: &str) -> Result<T> {
    kv.get_parsed(key)?.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
}

fn opt<T: FromStr>(kv: &KeyValues, key: &str) -> Result<Option<T>> {
    kv.get_parsed(key)
}

fn list<T: FromStr>(kv: &KeyValues, key: &str) -> Result<Option<Vec<T>>> {
    kv.get(key).map(|v| parse_list(key, v)).transpose()
}

fn flag(kv: &KeyValues, key: &str) -> Result<bool> {
    Ok(opt::<bool>(kv, key)?.unwrap_or(false))
}

fn graph(kv: &KeyValues, key: &str) -> Result<Graph> {
    Graph::from_spec(kv.get(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))?)
}

fn event_of(kv: &KeyValues, key: &str) -> Result<LowerTailEvent> {
    LowerTailEvent::new(&graph(kv, key)?, req(kv, "n")?, req(kv, "p")?, req(kv, "eta")?)
}

fn threads(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<Outcome> {
    threads(cli)?;
    let dir = out_dir(cli);
    let (report, lines, extra, failure) = match &cli.command {
        Command::Threshold(f) => cmd_threshold(resolve(
            cli,
            &[("r", "3"), ("tangent_grid", "200")],
            &[f.key_values()],
            &[ThresholdFlags::KEYS],
        )?)?,
        Command::Solve { problem, solver } => cmd_solve(resolve(
            cli,
            &[("H", "K3"), ("mode", "sparse")],
            &[problem.key_values(), solver.key_values()],
            &[SolveFlags::KEYS, SolverFlags::KEYS],
        )?)?,
        Command::Sample { event, sample, chain } => cmd_sample(resolve(
            cli,
            &[("H", "K3"), ("mode", "exact")],
            &[event.key_values(), sample.key_values(), chain.key_values()],
            &[EventFlags::KEYS, SampleFlags::KEYS, ChainFlags::KEYS],
        )?)?,
        Command::Marginals { event, marginal, chain } => cmd_marginals(resolve(
            cli,
            &[("H", "K3"), ("mode", "exact")],
            &[event.key_values(), marginal.key_values(), chain.key_values()],
            &[EventFlags::KEYS, MarginalFlags::KEYS, ChainFlags::KEYS],
        )?)?,
        Command::Increment { event, increment } => cmd_increment(resolve(
            cli,
            &[("H", "K3"), ("alpha", "0.5"), ("beta", "0.05")],
            &[event.key_values(), increment.key_values()],
            &[EventFlags::KEYS, IncrementFlags::KEYS],
        )?)?,
        Command::Cutnorm(f) => cmd_cutnorm(resolve(
            cli,
            &[("method", "all"), ("restarts", "16")],
            &[f.key_values()],
            &[CutnormFlags::KEYS],
        )?)?,
        Command::Typicality { run, chain } => cmd_typicality(resolve(
            cli,
            &[
                ("H_prime", "K3"),
                ("H", "C4"),
                ("mode", "mcmc"),
                ("metric", "count"),
                ("eps", "0.05,0.1,0.2"),
                ("ess_floor", "500"),
                ("bins", "20"),
            ],
            &[run.key_values(), chain.key_values()],
            &[TypicalityFlags::KEYS, ChainFlags::KEYS],
        )?)?,
        Command::Stability(f) => cmd_stability(resolve(
            cli,
            &[
                ("H", "K3"),
                ("n", "12"),
                ("eta", "0.5"),
                ("levels", "1e-8,1e-7,1e-6,1e-5,1e-4,1e-3,1e-2"),
                ("samples", "8"),
            ],
            &[f.key_values()],
            &[StabilityFlags::KEYS],
        )?)?,
        Command::Tailprob { tail, solver } => cmd_tailprob(resolve(
            cli,
            &[("H", "K3"), ("ns", "4,5,6"), ("eps", "0.05")],
            &[tail.key_values(), solver.key_values()],
            &[TailFlags::KEYS, SolverFlags::KEYS],
        )?)?,
        Command::Variance { event, variance } => cmd_variance(resolve(
            cli,
            &[("H", "K3")],
            &[event.key_values(), variance.key_values()],
            &[EventFlags::KEYS, VarianceFlags::KEYS],
        )?)?,
    };
    let written = report.write(&dir)?;
    let mut reports = vec![written];
    for (suffix, body) in extra {
        let path = dir.join(format!("{}.{suffix}", report.file_stem()));
        std::fs::write(&path, body)?;
        reports.push(WrittenReport {
            csv: path.clone(),
            meta: reports[0].meta.clone(),
        });
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(Outcome { reports, lines }),
    }
}

/// Report, summary lines, extra files by suffix, and an error raised after the
/// report is written.
type CmdOutput = (Report, Vec<String>, Vec<(&'static str, String)>, Option<Error>);

fn cmd_threshold(kv: KeyValues) -> Result<CmdOutput> {
    let r: usize = req(&kv, "r")?;
    let grid: usize = req(&kv, "tangent_grid")?;
    let sol = eta_threshold(r)?;
    let gap = tangent_gap_min(sol.eta, r, grid);
    let mut rep = Report::new("threshold", &kv);
    rep.summary("r", r);
    rep.summary("eta", sol.eta);
    rep.summary("residual", sol.residual);
    rep.summary("sign_changes", sol.sign_changes);
    rep.summary("bisection_steps", sol.bisection_steps);
    rep.summary("tangent_gap_min", gap);
    let mut lines = vec![format!("r={r}"), format!("eta={:.10}", sol.eta)];
    if let Some(r_max) = opt::<usize>(&kv, "r_max")? {
        let sec = rep.section("sweep", &["r", "eta", "residual"]);
        for rr in 2..=r_max {
            let s = eta_threshold(rr)?;
            sec.push(vec![rr.into(), s.eta.into(), s.residual.into()]);
            lines.push(format!("sweep r={rr} eta={:.10}", s.eta));
        }
    }
    Ok((rep, lines, Vec::new(), None))
}

fn solution_report(rep: &mut Report, prob: &VariationalProblem, sol: &VariationalSolution, n: Option<usize>) {
    rep.summary("value", sol.value);
    rep.summary("converged", sol.converged);
    rep.summary("feasibility_gap", sol.feasibility_gap);
    rep.summary("multiplier", sol.multiplier);
    rep.summary("projected_gradient_norm", sol.projected_gradient_norm);
    rep.summary("restarts_used", sol.restarts_used);
    rep.summary("iterations", sol.iterations);
    rep.summary("start_index", sol.start_index);
    rep.summary("distance_to_constant", sol.distance_to_constant);
    rep.summary("linf_to_constant", sol.linf_to_constant);
    rep.summary("budget", prob.budget());
    rep.summary("constant_point", prob.constant_point());
    rep.summary("constant_value", prob.constant_value());
    let sec = rep.section("q_star", &["slot", "i", "j", "value"]);
    for (s, &v) in sol.q_star.iter().enumerate() {
        let (i, j) = match n {
            Some(_) => {
                let (a, b) = EdgeSlot(s as u32).pair();
                (a as i64, b as i64)
            }
            None => (-1, -1),
        };
        sec.push(vec![s.into(), i.into(), j.into(), v.into()]);
    }
}

fn cmd_solve(mut kv: KeyValues) -> Result<CmdOutput> {
    let eta: f64 = req(&kv, "eta")?;
    let objective = match kv.get("mode").unwrap_or("sparse") {
        "sparse" => {
            kv.remove("p");
            Objective::SparseLimit
        }
        "finite" => Objective::FiniteP { p: req(&kv, "p")? },
        m => return Err(Error::Config(format!("mode must be sparse or finite, got `{m}`"))),
    };
    let solver = SolverConfig::from_key_values(&kv)?;
    let hyper;
    let copies;
    let (prob, n) = if let Some(path) = kv.get("hypergraph") {
        hyper = Hypergraph::parse_text(&std::fs::read_to_string(path)?)?;
        (VariationalProblem::general(&hyper, objective, eta)?, None)
    } else {
        let n: usize = req(&kv, "n")?;
        copies = CopyHypergraph::enumerate(&graph(&kv, "H")?, n)?;
        let prob = match objective {
            Objective::SparseLimit => VariationalProblem::sparse_limit(&copies, eta)?,
            Objective::FiniteP { p } => VariationalProblem::finite_p(&copies, p, eta)?,
        };
        (prob, Some(n))
    };
    let mut rep = Report::new("solve", &kv);
    match solve_phi(&prob, &solver) {
        Ok(sol) => {
            solution_report(&mut rep, &prob, &sol, n);
            let lines = vec![
                format!("value={}", sol.value),
                format!("converged={}", sol.converged),
                format!("linf_to_constant={:e}", sol.linf_to_constant),
                format!("constant_point={}", prob.constant_point()),
            ];
            Ok((rep, lines, vec![("qstar.txt", sol.q_star_text())], None))
        }
        Err(Error::NotConverged { restarts, best }) => {
            // the best iterate is still an upper bound worth keeping
            solution_report(&mut rep, &prob, &best, n);
            let extra = vec![("qstar.txt", best.q_star_text())];
            Ok((rep, vec![format!("value={}", best.value), "converged=false".into()], extra, Some(Error::NotConverged { restarts, best })))
        }
        Err(e) => Err(e),
    }
}

fn marginal_section(rep: &mut Report, n: usize, values: &[f64], stderr: &[f64]) {
    let sec = rep.section("marginals", &["slot", "i", "j", "value", "stderr"]);
    for s in 0..num_slots(n) {
        let (i, j) = EdgeSlot(s as u32).pair();
        sec.push(vec![s.into(), i.into(), j.into(), values[s].into(), stderr[s].into()]);
    }
}

fn harris_summary(rep: &mut Report, ex: &ExactConditional) -> usize {
    let p = ex.p();
    let m = ex.slots();
    let single = ex.marginals();
    let pair = ex.pair_marginals();
    let tol = 1e-12;
    let mut violations = single.iter().filter(|&&v| v > p + tol).count();
    let mut worst_pair = f64::NEG_INFINITY;
    for s in 0..m {
        for t in s + 1..m {
            let v = pair[s * m + t];
            worst_pair = worst_pair.max(v - p * p);
            if v > p * p + tol {
                violations += 1;
            }
        }
    }
    let worst_single = single.iter().map(|v| v - p).fold(f64::NEG_INFINITY, f64::max);
    rep.summary("harris_max_single_excess", worst_single);
    rep.summary("harris_max_pair_excess", if m > 1 { worst_pair } else { 0.0 });
    rep.summary("harris_violations", violations);
    violations
}

fn cmd_sample(kv: KeyValues) -> Result<CmdOutput> {
    let event = event_of(&kv, "H")?;
    let mode = SamplingMode::parse(kv.get("mode").unwrap_or("exact"))?;
    let mut rep = Report::new("sample", &kv);
    rep.summary("mode", mode.name());
    rep.summary("threshold", event.threshold());
    rep.summary("cap", event.cap());
    rep.summary("total_copies", event.total_copies());
    let mut lines = vec![format!("cap={}", event.cap())];
    match mode {
        SamplingMode::Exact => {
            let ex = ExactConditional::new(&event)?;
            rep.summary("probability", ex.z());
            rep.summary("neg_log_probability", ex.neg_log_probability());
            rep.summary("support", ex.support_len());
            rep.summary("mean_count", ex.expect_count());
            rep.summary("count_variance", ex.count_variance());
            harris_summary(&mut rep, &ex);
            let m = ex.marginals();
            marginal_section(&mut rep, event.n(), &m, &vec![0.0; m.len()]);
            let sec = rep.section("law", &["edges", "count", "probability"]);
            for ((e, c), w) in ex.binned_law() {
                sec.push(vec![e.into(), c.into(), w.into()]);
            }
            lines.push(format!("probability={}", ex.z()));
            lines.push(format!("mean_count={}", ex.expect_count()));
        }
        SamplingMode::Mcmc => {
            let cfg = ChainConfig::from_key_values(&kv)?;
            let records = flag(&kv, "records")?;
            let run = McmcRun::run(&event, &cfg, None, records)?;
            rep.header("thin", cfg.thin_for(event.n()));
            rep.summary("samples", run.samples());
            rep.summary("mean_count", run.mean_count);
            rep.summary("count_stderr", run.count_stderr);
            rep.summary("count_variance", run.count_variance);
            rep.summary("ess", run.ess);
            rep.summary("acceptance_rate", run.acceptance_rate);
            rep.summary("audits_passed", run.audits_passed);
            marginal_section(&mut rep, event.n(), &run.marginals, &run.marginal_stderr);
            let sec = rep.section("law", &["edges", "count", "probability"]);
            for ((e, c), w) in run.binned_law() {
                sec.push(vec![e.into(), c.into(), w.into()]);
            }
            if records {
                let sec = rep.section("samples", &["chain", "step", "mask_hex", "count"]);
                for c in &run.chains {
                    for r in &c.records {
                        sec.push(vec![r.chain.into(), r.step.into(), r.mask_hex.clone().into(), r.count.into()]);
                    }
                }
            }
            lines.push(format!("mean_count={}", run.mean_count));
            lines.push(format!("ess={}", run.ess));
        }
    }
    Ok((rep, lines, Vec::new(), None))
}

fn cmd_marginals(kv: KeyValues) -> Result<CmdOutput> {
    let h = graph(&kv, "H")?;
    let n: usize = req(&kv, "n")?;
    let p: f64 = req(&kv, "p")?;
    let eta: f64 = req(&kv, "eta")?;
    if let Some(sizes) = list::<usize>(&kv, "w_sizes")? {
        let mut run = MarginalStructureRun::new(h, n, p, eta, sizes);
        run.seed = req(&kv, "seed")?;
        if let Some(s) = opt(&kv, "sets_per_size")? {
            run.sets_per_size = s;
        }
        let res = run_marginal_structure(&run)?;
        let lines = res.sizes.iter().map(|s| format!("size={} mean={}", s.size, s.mean)).collect();
        return Ok((res.report(&kv), lines, Vec::new(), None));
    }
    let event = LowerTailEvent::new(&h, n, p, eta)?;
    let mode = SamplingMode::parse(kv.get("mode").unwrap_or("exact"))?;
    let w: Vec<usize> = list(&kv, "w")?.unwrap_or_default();
    let mut rep = Report::new("marginals", &kv);
    if w.is_empty() && mode == SamplingMode::Mcmc {
        let cfg = ChainConfig::from_key_values(&kv)?;
        let run = McmcRun::run(&event, &cfg, None, false)?;
        rep.summary("ess", run.ess);
        rep.summary("acceptance_rate", run.acceptance_rate);
        rep.summary("audits_passed", run.audits_passed);
        marginal_section(&mut rep, n, &run.marginals, &run.marginal_stderr);
        return Ok((rep, vec![format!("samples={}", run.samples())], Vec::new(), None));
    }
    if mode == SamplingMode::Mcmc {
        return Err(Error::Config("conditioning on W requires mode=exact".into()));
    }
    let ex = ExactConditional::new(&event)?;
    let assignment: Vec<bool> = list::<u8>(&kv, "assignment")?
        .unwrap_or_else(|| vec![1; w.len()])
        .into_iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Config("assignment entries must be 0 or 1".into())),
        })
        .collect::<Result<_>>()?;
    let violations = harris_summary(&mut rep, &ex);
    let q = ex.q_w(&w, &assignment)?;
    marginal_section(&mut rep, n, q.as_slice(), &vec![0.0; q.len()]);
    let lines = vec![format!("harris_violations={violations}")];
    Ok((rep, lines, Vec::new(), None))
}

fn cmd_increment(kv: KeyValues) -> Result<CmdOutput> {
    let event = event_of(&kv, "H")?;
    let ex = ExactConditional::new(&event)?;
    let w: Vec<usize> = list(&kv, "w")?.unwrap_or_default();
    let terms = flag(&kv, "terms")?;
    let e = energy(&ex, &w, terms)?;
    let mut rep = Report::new("increment", &kv);
    rep.summary("energy", e.energy);
    rep.summary("lhs_cs", e.lhs_cs);
    rep.summary("rhs_cs", e.rhs_cs);
    rep.summary("bound_holds", e.bound_holds());
    rep.summary("hyperedges_outside_w", e.hyperedges_outside_w);
    rep.summary("assignments", e.assignments);
    let mut lines = vec![format!("energy={}", e.energy), format!("bound_holds={}", e.bound_holds())];
    if let Some(t) = &e.terms {
        let sec = rep.section("terms", &["hyperedge", "b_mask", "b", "weighted_d2"]);
        for term in t {
            sec.push(vec![term.hyperedge.into(), term.b_mask.into(), term.b.into(), term.weighted_d2.into()]);
        }
    }
    if flag(&kv, "greedy")? {
        let g = greedy_increment(&ex, req(&kv, "alpha")?, req(&kv, "beta")?)?;
        rep.summary("greedy_status", g.status.name());
        rep.summary("greedy_target", g.target);
        rep.summary("greedy_max_size", g.max_size);
        let sec = rep.section("greedy", &["step", "slot", "energy"]);
        for (k, &en) in g.trajectory.iter().enumerate() {
            let slot = if k == 0 { -1 } else { g.w[k - 1] as i64 };
            sec.push(vec![k.into(), slot.into(), en.into()]);
        }
        lines.push(format!("greedy_status={}", g.status.name()));
    }
    Ok((rep, lines, Vec::new(), None))
}

fn cmd_cutnorm(kv: KeyValues) -> Result<CmdOutput> {
    let method = kv.get("method").unwrap_or("all").to_string();
    if !["all", "exact", "heuristic", "spectral"].contains(&method.as_str()) {
        return Err(Error::Config(format!("unknown method `{method}`")));
    }
    let restarts: usize = req(&kv, "restarts")?;
    let seed: u64 = req(&kv, "seed")?;
    let (a, g) = match (kv.get("matrix"), kv.get("graph")) {
        (Some(path), None) => (SquareMatrix::parse_text(&std::fs::read_to_string(path)?)?, None),
        (None, Some(spec)) => {
            let g = Graph::from_spec(spec)?;
            let q: f64 = req(&kv, "q")?;
            let dev = crate::metrics::DeviationMatrix::graph_minus_constant(&g, q);
            (dev.matrix().clone(), Some((g, q)))
        }
        _ => return Err(Error::Config("give exactly one of `matrix` and `graph`".into())),
    };
    let mut rep = Report::new("cutnorm", &kv);
    rep.header("cut_norm", "labeled");
    rep.summary("n", a.n());
    let mut lines = Vec::new();
    let all = method == "all";
    if (all && a.n() <= EXACT_CUT_NORM_MAX_N) || method == "exact" {
        let v = cut_norm_exact(&a)?;
        rep.summary("exact", v);
        lines.push(format!("exact={v}"));
    }
    if all || method == "heuristic" {
        let v = cut_norm_heuristic(&a, restarts, seed);
        rep.summary("heuristic", v);
        lines.push(format!("heuristic={v}"));
    }
    if all || method == "spectral" {
        let v = spectral_cut_bound(&a)?;
        rep.summary("spectral", v);
        lines.push(format!("spectral={v}"));
    }
    if let Some(k) = opt::<usize>(&kv, "k")? {
        let (g, q) = g.ok_or_else(|| Error::Config("`k` needs a graph".into()))?;
        let t = closed_walk_trace(&g, q, k)?;
        rep.summary("trace", t.trace);
        rep.summary("adjacency_trace", t.adjacency_trace);
        if let Some(classes) = &t.walk_classes {
            let sec = rep.section("walk_classes", &["vertices", "edges", "canonical_edges", "walks"]);
            for c in classes {
                let edges: Vec<String> = c.canonical_edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                sec.push(vec![c.vertices.into(), c.edges.into(), edges.join(" ").into(), c.walks.into()]);
            }
        }
        lines.push(format!("trace={}", t.trace));
    }
    Ok((rep, lines, Vec::new(), None))
}

fn chain_or_default(kv: &KeyValues, default: ChainConfig) -> Result<ChainConfig> {
    let mut merged = default.to_key_values(0);
    merged.remove("thin");
    merged.merge(kv);
    ChainConfig::from_key_values(&merged)
}

fn cmd_typicality(kv: KeyValues) -> Result<CmdOutput> {
    let n: usize = req(&kv, "n")?;
    let p: f64 = req(&kv, "p")?;
    let eta: f64 = req(&kv, "eta")?;
    let eps: Vec<f64> = list(&kv, "eps")?.unwrap_or_default();
    match kv.get("metric").unwrap_or("count") {
        "count" => {
            let mode = SamplingMode::parse(kv.get("mode").unwrap_or("mcmc"))?;
            let mut run = TypicalityRun::new(graph(&kv, "H_prime")?, graph(&kv, "H")?, n, p, eta, mode);
            run.chain = ChainConfig::from_key_values(&kv)?;
            run.eps = eps;
            run.ess_floor = req(&kv, "ess_floor")?;
            run.bins = req(&kv, "bins")?;
            let res = run_typicality(&run)?;
            let mut lines = vec![
                format!("predicted={}", res.predicted),
                format!("mean={}", res.mean),
                format!("relative_deviation={}", res.relative_deviation),
            ];
            if let Some(ess) = res.ess {
                lines.push(format!("ess={ess}"));
            }
            if !res.reliable {
                lines.push("warning=ess below floor, report flagged unreliable".into());
            }
            if res.below_threshold {
                lines.push("warning=eta at or below the threshold, prediction not covered".into());
            }
            Ok((res.report(&kv), lines, Vec::new(), None))
        }
        "cutnorm" => {
            let mut run = CutNormRun::new(graph(&kv, "H")?, n, p, eta);
            run.chain = chain_or_default(&kv, run.chain.clone())?;
            run.eps = eps;
            if let Some(ks) = list(&kv, "trace_k")? {
                run.trace_ks = ks;
            }
            if let Some(r) = opt(&kv, "heuristic_restarts")? {
                run.heuristic_restarts = r;
            }
            if let Some(b) = opt(&kv, "bootstrap")? {
                run.bootstrap = b;
            }
            let res = run_cutnorm_typicality(&run)?;
            let lines = vec![
                format!("median_over_p={}", res.median),
                format!("median_ci=[{}, {}]", res.median_ci.0, res.median_ci.1),
                format!("spectral_dominates={}", res.spectral_dominates),
            ];
            Ok((res.report(&kv, &run.trace_ks), lines, Vec::new(), None))
        }
        m => Err(Error::Config(format!("metric must be count or cutnorm, got `{m}`"))),
    }
}

fn cmd_stability(kv: KeyValues) -> Result<CmdOutput> {
    let levels: Vec<f64> = list(&kv, "levels")?.unwrap_or_default();
    let res = stability_probe(
        &graph(&kv, "H")?,
        req(&kv, "n")?,
        req(&kv, "eta")?,
        &levels,
        req(&kv, "samples")?,
        req(&kv, "seed")?,
    )?;
    let mut rep = Report::new("stability", &kv);
    rep.summary("constant", res.constant);
    rep.summary("phi", res.phi);
    rep.summary("small_cutoff", res.small_cutoff);
    rep.summary("fitted_exponent", res.fitted_exponent.unwrap_or(f64::NAN));
    rep.summary("guide_exponent", 1.0 / 12.0);
    let sec = rep.section("levels", &["excess_level", "max_cut_distance", "max_small_edge_fraction"]);
    for l in &res.levels {
        sec.push(vec![l.excess_level.into(), l.max_cut_distance.into(), l.max_small_edge_fraction.into()]);
    }
    let sec = rep.section(
        "samples",
        &["excess_level", "family", "achieved_excess", "sigma", "cut_distance", "small_edge_fraction"],
    );
    for s in &res.samples {
        sec.push(vec![
            s.excess_level.into(),
            s.family.name().into(),
            s.achieved_excess.into(),
            s.sigma.into(),
            s.cut_distance.into(),
            s.small_edge_fraction.into(),
        ]);
    }
    let lines = vec![format!("fitted_exponent={}", res.fitted_exponent.unwrap_or(f64::NAN))];
    Ok((rep, lines, Vec::new(), None))
}

fn cmd_tailprob(kv: KeyValues) -> Result<CmdOutput> {
    let ns: Vec<usize> = list(&kv, "ns")?.unwrap_or_default();
    let solver = SolverConfig::from_key_values(&kv)?;
    let rows = tail_probability_report(&graph(&kv, "H")?, &ns, req(&kv, "p")?, req(&kv, "eta")?, req(&kv, "eps")?, &solver)?;
    let mut rep = Report::new("tailprob", &kv);
    let sec = rep.section(
        "rows",
        &["n", "probability", "neg_log_p", "phi", "phi_minus", "phi_plus", "phi_converged", "ratio"],
    );
    let mut lines = Vec::new();
    for r in &rows {
        sec.push(vec![
            r.n.into(),
            r.probability.into(),
            r.neg_log_p.into(),
            r.phi.into(),
            r.phi_minus.into(),
            r.phi_plus.into(),
            r.phi_converged.into(),
            r.ratio.unwrap_or(f64::NAN).into(),
        ]);
        lines.push(format!("n={} neg_log_p={} phi={}", r.n, r.neg_log_p, r.phi));
    }
    Ok((rep, lines, Vec::new(), None))
}

fn cmd_variance(kv: KeyValues) -> Result<CmdOutput> {
    let h = graph(&kv, "H")?;
    let key = if kv.contains("H_prime") { "H_prime" } else { "H" };
    let event = event_of(&kv, key)?;
    let ex = ExactConditional::new(&event)?;
    let d = variance_decomposition(&h, &ex)?;
    let lines = vec![
        format!("variance={}", d.variance),
        format!("split_total={}", d.split_total()),
        format!("split_error={:e}", d.split_error()),
        format!("m2={}/{} m2_union={}/{}", d.m2.0, d.m2.1, d.m2_union.0, d.m2_union.1),
    ];
    Ok((d.report(&kv), lines, Vec::new(), None))
}
