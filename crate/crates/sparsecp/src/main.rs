//! Command-line front end: replayable change-point, graph and
//! degrees-of-freedom experiments with CSV/JSON artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use sparsecp::auht::{select_changepoints, ChangepointConfig, ContrastSpec};
use sparsecp::criteria::{mc_dof, HardThresholdSelector, NoiseModel};
use sparsecp::graph::{
    constrained_ml, feasible_init, nodewise_coefficients, nodewise_select, standardise_columns,
    Criterion, EdgeSelection, LassoSelector, NodewiseConfig, SampleCov,
};
use sparsecp::lasso::SigmaMode;
use sparsecp::simulate::{
    blocks_poisson, evaluate_changepoints, evaluate_edges, geo_graph, oracle_pe_curve, true_pe,
    BlocksSpec, GeoGraphSpec,
};
use sparsecp::treeselect::{best_subtrees, tree_selector, Forest, MassSpec};
use sparsecp::Error;

#[derive(Parser)]
#[command(name = "sparsecp", version, about = "Mirror-corrected Cp model selection experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Change-point detection on a count signal (tree-selected AUHT).
    Changepoints(ChangepointArgs),
    /// Sparse precision-matrix selection and estimation.
    Graph(GraphArgs),
    /// Monte-Carlo degrees-of-freedom table for a selector.
    Mcdof(McdofArgs),
    /// Re-run a previous experiment from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// RNG seed; falls back to SPARSECP_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ChangepointArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input signal CSV (one count per line).
    #[arg(long, conflicts_with = "simulate")]
    input: Option<PathBuf>,
    /// Simulated data-generating process (only `blocks`).
    #[arg(long)]
    simulate: Option<SimulateCp>,
    /// Sample size for the simulated signal.
    #[arg(long, default_value_t = 4000)]
    n: usize,
    /// Number of independent seeded runs.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Monte-Carlo replicates for the degrees of freedom.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Largest subtree size swept (default min(n-1, 200)).
    #[arg(long)]
    kappa_max: Option<usize>,
    /// Matching tolerance (samples) for the ground-truth evaluation.
    #[arg(long, default_value_t = 10)]
    tol: usize,
    /// Contrast exponent q.
    #[arg(long, default_value_t = 2.0)]
    q: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SimulateCp {
    Blocks,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SimulateGraph {
    Geo,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CriterionArg {
    Refined,
    Naive,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SigmaModeArg {
    ResidualDf,
    PaperLiteral,
}

#[derive(Args, Clone)]
struct GraphArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input data-matrix CSV (rows = observations).
    #[arg(long, conflicts_with = "simulate")]
    input: Option<PathBuf>,
    /// Simulated data-generating process (only `geo`).
    #[arg(long)]
    simulate: Option<SimulateGraph>,
    /// Number of variables for the simulated graph.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Number of observations for the simulated graph.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Run the simulation at full scale (m=1000, n=600); untimed.
    #[arg(long, default_value_t = false)]
    full_scale: bool,
    #[arg(long, value_enum, default_value_t = CriterionArg::Refined)]
    criterion: CriterionArg,
    /// Keep only the columns below this variance quantile (e.g. 0.8 drops
    /// the most-variable 20%), then studentise.
    #[arg(long)]
    filter_variance_quantile: Option<f64>,
    /// Oracle bound on every neighbourhood size.
    #[arg(long)]
    max_degree: Option<usize>,
    /// Largest neighbourhood size swept per node.
    #[arg(long, default_value_t = 30)]
    kappa_max: usize,
    /// Nodes sampled for the shared dof table (R).
    #[arg(long, default_value_t = 5)]
    mirror_nodes: usize,
    /// Noise replicates per sampled node (B).
    #[arg(long, default_value_t = 20)]
    mirror_reps: usize,
    #[arg(long, value_enum, default_value_t = SigmaModeArg::ResidualDf)]
    sigma_mode: SigmaModeArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SelectorArg {
    Tree,
    Threshold,
    Lasso,
}

#[derive(Args, Clone)]
struct McdofArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    selector: SelectorArg,
    /// Forest CSV (`node,parent`, 1-based, 0 = root) for the tree selector.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Dimension for the threshold selector, or rows/cols of a generated
    /// lasso design.
    #[arg(long)]
    m: Option<usize>,
    /// Design CSV for the lasso selector (columns rescaled to unit norm).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 50)]
    kappa_max: usize,
}

#[derive(Args, Clone)]
struct ReplayArgs {
    /// Manifest JSON written by a previous run.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the replayed run.
    #[arg(long, default_value = "replay-out")]
    out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    command: String,
    /// Flags of the original invocation, seed resolved, `--out` stripped.
    args: Vec<String>,
    seed: u64,
    version: String,
    wall_time_secs: f64,
    outputs: Vec<String>,
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var("SPARSECP_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn main() {
    let raw: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let code = match run(cli, &raw[1..]) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            3
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli, raw_args: &[String]) -> CliResult<()> {
    match cli.cmd {
        Cmd::Changepoints(args) => {
            let ctx = ManifestCtx::new("changepoints", raw_args, &args.common);
            cmd_changepoints(args, ctx)
        }
        Cmd::Graph(args) => {
            let ctx = ManifestCtx::new("graph", raw_args, &args.common);
            cmd_graph(args, ctx)
        }
        Cmd::Mcdof(args) => {
            let ctx = ManifestCtx::new("mcdof", raw_args, &args.common);
            cmd_mcdof(args, ctx)
        }
        Cmd::Replay(args) => cmd_replay(args),
    }
}

/// Collects output file names and writes the manifest at the end of a run.
struct ManifestCtx {
    command: String,
    args: Vec<String>,
    seed: u64,
    out: PathBuf,
    start: Instant,
    outputs: Vec<String>,
}

impl ManifestCtx {
    fn new(command: &str, raw_args: &[String], common: &CommonArgs) -> Self {
        let seed = resolve_seed(common.seed);
        // Strip the subcommand name and `--out`; pin the seed so the
        // manifest is self-contained even when it came from the env.
        let mut args = Vec::new();
        let mut it = raw_args.iter().skip(1).peekable();
        let mut saw_seed = false;
        while let Some(a) = it.next() {
            if a == "--out" {
                it.next();
                continue;
            }
            if let Some(rest) = a.strip_prefix("--out=") {
                let _ = rest;
                continue;
            }
            if a == "--seed" || a.starts_with("--seed=") {
                saw_seed = true;
            }
            args.push(a.clone());
        }
        if !saw_seed {
            args.push("--seed".into());
            args.push(seed.to_string());
        }
        ManifestCtx {
            command: command.to_string(),
            args,
            seed,
            out: common.out.clone(),
            start: Instant::now(),
            outputs: Vec::new(),
        }
    }

    fn path(&mut self, rel: impl AsRef<str>) -> CliResult<PathBuf> {
        let rel = rel.as_ref();
        let full = self.out.join(rel);
        if let Some(dir) = full.parent() {
            fs::create_dir_all(dir).map_err(Error::from)?;
        }
        self.outputs.push(rel.to_string());
        Ok(full)
    }

    fn finish(self) -> CliResult<()> {
        let manifest = RunManifest {
            command: self.command,
            args: self.args,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: self.start.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        fs::create_dir_all(&self.out).map_err(Error::from)?;
        let f = fs::File::create(self.out.join("manifest.json")).map_err(Error::from)?;
        serde_json::to_writer_pretty(f, &manifest).map_err(Error::from)?;
        Ok(())
    }
}

fn cmd_replay(args: ReplayArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.manifest)
        .map_err(|e| usage(format!("cannot read manifest {}: {e}", args.manifest.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| usage(format!("bad manifest: {e}")))?;
    let mut argv = vec!["sparsecp".to_string(), manifest.command.clone()];
    argv.extend(manifest.args.iter().cloned());
    argv.push("--out".into());
    argv.push(args.out.to_string_lossy().into_owned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| usage(format!("manifest does not parse: {e}")))?;
    run(cli, &argv[1..])
}

// ---------------------------------------------------------------- signals

fn read_signal_csv(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.split(',').next().unwrap().trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue, // header
            Err(e) => return Err(usage(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    if out.is_empty() {
        return Err(usage(format!("{}: no data", path.display())));
    }
    Ok(out)
}

fn read_matrix_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if row.len() != first.len() {
                        return Err(usage(format!(
                            "{}:{}: ragged row ({} vs {} fields)",
                            path.display(),
                            i + 1,
                            row.len(),
                            first.len()
                        )));
                    }
                }
                rows.push(row);
            }
            Err(_) if i == 0 => continue, // header
            Err(e) => return Err(usage(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(usage(format!("{}: no data", path.display())));
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

// ----------------------------------------------------------- changepoints

fn cmd_changepoints(args: ChangepointArgs, mut ctx: ManifestCtx) -> CliResult<()> {
    if args.input.is_none() && args.simulate.is_none() {
        return Err(usage("one of --input or --simulate is required"));
    }
    if args.runs == 0 {
        return Err(usage("--runs must be >= 1"));
    }
    if args.runs > 1 && args.input.is_some() {
        return Err(usage("--runs > 1 requires --simulate"));
    }
    let contrast = ContrastSpec::new(args.q).map_err(CliError::Runtime)?;
    let mut aggregate: Vec<(usize, u64, usize, sparsecp::simulate::ChangepointEval)> = Vec::new();

    for run_idx in 0..args.runs {
        let seed = ctx.seed.wrapping_add(run_idx as u64);
        let prefix = if args.runs > 1 {
            format!("run{run_idx}/")
        } else {
            String::new()
        };
        type SignalWithTruth = (Vec<f64>, Option<(Vec<f64>, Vec<usize>)>);
        let (y, truth): SignalWithTruth = match args.simulate {
            Some(SimulateCp::Blocks) => {
                let spec = BlocksSpec { n: args.n, ..Default::default() };
                let s = blocks_poisson(&spec, seed)?;
                (s.y, Some((s.mu, s.changepoints)))
            }
            None => (read_signal_csv(args.input.as_ref().unwrap())?, None),
        };
        let config = ChangepointConfig {
            kappa_max: args.kappa_max,
            reps: args.reps,
            seed,
        };
        let result = select_changepoints(&y, &contrast, &config)?;
        let n = y.len();

        // Ground-truth curves need the per-size selections again.
        let pe_curves = match &truth {
            Some((mu, _)) => {
                let mut v = vec![0.0; n];
                let mut z = vec![0.0; n];
                let (_, true_details) = result.tree.forward(mu)?;
                for i in 0..n - 1 {
                    let s = result.detail_sigma2[i].sqrt();
                    v[1 + i] = true_details[i] / s;
                    z[1 + i] = result.tree.details()[i] / s;
                }
                let forest = result.tree.forest();
                let kappa_max = config.kappa_max.unwrap_or_else(|| (n - 1).min(200)).min(n);
                let path = best_subtrees(&forest, &z, &MassSpec::Square, kappa_max)?;
                let selector = tree_selector(&forest, MassSpec::Square);
                let oracle = oracle_pe_curve(&selector, &v, kappa_max, 1.0)?;
                let true_curve: Vec<f64> = path
                    .selections
                    .iter()
                    .map(|sel| true_pe(sel, &z, &v))
                    .collect();
                Some((true_curve, oracle))
            }
            None => None,
        };

        let mut w = fs::File::create(ctx.path(format!("{prefix}curve.csv"))?)
            .map_err(Error::from)?;
        if pe_curves.is_some() {
            writeln!(w, "kappa,Lambda,GCV,naiveCp,truePE,oraclePE").map_err(Error::from)?;
        } else {
            writeln!(w, "kappa,Lambda,GCV,naiveCp").map_err(Error::from)?;
        }
        for p in &result.curve {
            match &pe_curves {
                Some((tc, oc)) => {
                    let tp = tc.get(p.kappa).copied().unwrap_or(f64::NAN);
                    let op = oc.get(&p.kappa).copied().unwrap_or(f64::NAN);
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        p.kappa, p.lambda, p.gcv, p.naive_cp, tp, op
                    )
                    .map_err(Error::from)?;
                }
                None => writeln!(w, "{},{},{},{}", p.kappa, p.lambda, p.gcv, p.naive_cp)
                    .map_err(Error::from)?,
            }
        }

        let mut w = fs::File::create(ctx.path(format!("{prefix}reconstruction.csv"))?)
            .map_err(Error::from)?;
        match &truth {
            Some((mu, _)) => {
                writeln!(w, "index,y,mu_hat,mu_true").map_err(Error::from)?;
                for (i, ((yi, mh), mt)) in y.iter().zip(&result.mu_hat).zip(mu).enumerate() {
                    writeln!(w, "{i},{yi},{mh},{mt}").map_err(Error::from)?;
                }
            }
            None => {
                writeln!(w, "index,y,mu_hat").map_err(Error::from)?;
                for (i, (yi, mh)) in y.iter().zip(&result.mu_hat).enumerate() {
                    writeln!(w, "{i},{yi},{mh}").map_err(Error::from)?;
                }
            }
        }

        let w = fs::File::create(ctx.path(format!("{prefix}dof.csv"))?).map_err(Error::from)?;
        result.dof.write_csv(w)?;

        let eval = truth
            .as_ref()
            .map(|(_, cps)| evaluate_changepoints(&result.changepoints, cps, args.tol));
        let summary = serde_json::json!({
            "n": n,
            "seed": seed,
            "kappa_star": result.kappa_star,
            "changepoints": result.changepoints,
            "evaluation": eval,
        });
        let f = fs::File::create(ctx.path(format!("{prefix}changepoints.json"))?)
            .map_err(Error::from)?;
        serde_json::to_writer_pretty(f, &summary).map_err(Error::from)?;

        if let Some(e) = eval {
            aggregate.push((run_idx, seed, result.kappa_star, e));
        }
    }

    if args.runs > 1 {
        let mut w =
            fs::File::create(ctx.path("aggregate.csv")?).map_err(Error::from)?;
        writeln!(w, "run,seed,kappa_star,n_true,matched,missed,false_positives")
            .map_err(Error::from)?;
        for (run_idx, seed, kappa_star, e) in &aggregate {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                run_idx, seed, kappa_star, e.n_true, e.matched.len(), e.missed, e.false_positives
            )
            .map_err(Error::from)?;
        }
        // 2-D histogram of (missed, false positives) as run percentages.
        let total = aggregate.len() as f64;
        let mut hist = [[0usize; 7]; 3];
        for (_, _, _, e) in &aggregate {
            hist[e.missed.min(2)][e.false_positives.min(6)] += 1;
        }
        let mut w = fs::File::create(ctx.path("table1.csv")?).map_err(Error::from)?;
        writeln!(w, "missed,fp0,fp1,fp2,fp3,fp4,fp5,fp6plus").map_err(Error::from)?;
        for (mi, row) in hist.iter().enumerate() {
            let label = if mi < 2 { mi.to_string() } else { "2plus".into() };
            let cells: Vec<String> = row
                .iter()
                .map(|&c| format!("{}", 100.0 * c as f64 / total))
                .collect();
            writeln!(w, "{label},{}", cells.join(",")).map_err(Error::from)?;
        }
    }

    ctx.finish()
}

// ------------------------------------------------------------------ graph

/// Keeps the `ceil(q m)` lowest-variance columns and studentises them.
fn filter_variance(x: &DMatrix<f64>, q: f64) -> CliResult<(DMatrix<f64>, Vec<usize>)> {
    if !(0.0 < q && q <= 1.0) {
        return Err(usage("--filter-variance-quantile must be in (0, 1]"));
    }
    let m = x.ncols();
    let n = x.nrows() as f64;
    let vars: Vec<f64> = (0..m).map(|j| x.column(j).norm_squared() / n).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| vars[a].partial_cmp(&vars[b]).unwrap().then(a.cmp(&b)));
    let keep = ((q * m as f64).ceil() as usize).clamp(1, m);
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();
    Ok((x.select_columns(kept.iter()), kept))
}

fn cmd_graph(args: GraphArgs, mut ctx: ManifestCtx) -> CliResult<()> {
    if args.input.is_none() && args.simulate.is_none() {
        return Err(usage("one of --input or --simulate is required"));
    }
    let (m, n) = if args.full_scale {
        (1000, 600)
    } else {
        (args.m, args.n)
    };
    let (x, truth): (DMatrix<f64>, Option<EdgeSelection>) = match args.simulate {
        Some(SimulateGraph::Geo) => {
            let spec = GeoGraphSpec { m, n, ..Default::default() };
            let g = geo_graph(&spec, ctx.seed)?;
            (g.x, Some(g.edges))
        }
        None => (read_matrix_csv(args.input.as_ref().unwrap())?, None),
    };
    let (x, kept_columns) = match args.filter_variance_quantile {
        Some(q) => {
            let (x, kept) = filter_variance(&x, q)?;
            (x, Some(kept))
        }
        None => (x, None),
    };

    let cfg = NodewiseConfig {
        kappa_max: args.kappa_max,
        mirror_nodes: args.mirror_nodes,
        mirror_reps: args.mirror_reps,
        seed: ctx.seed,
        criterion: match args.criterion {
            CriterionArg::Refined => Criterion::Refined,
            CriterionArg::Naive => Criterion::Naive,
        },
        sigma_mode: match args.sigma_mode {
            SigmaModeArg::ResidualDf => SigmaMode::ResidualDf,
            SigmaModeArg::PaperLiteral => SigmaMode::PaperLiteral,
        },
        max_degree: args.max_degree,
    };
    let (est, magnitudes) = fit_graph(&x, &cfg)?;

    let mut w = fs::File::create(ctx.path("edges.csv")?).map_err(Error::from)?;
    writeln!(w, "i,j,K_ij").map_err(Error::from)?;
    for &(i, j) in &est.pattern.edges {
        writeln!(w, "{},{},{}", i, j, est.k[(i, j)]).map_err(Error::from)?;
    }

    let mut w = fs::File::create(ctx.path("precision.csv")?).map_err(Error::from)?;
    writeln!(w, "i,j,value").map_err(Error::from)?;
    for i in 0..est.k.nrows() {
        for j in i..est.k.ncols() {
            if est.k[(i, j)] != 0.0 {
                writeln!(w, "{},{},{}", i, j, est.k[(i, j)]).map_err(Error::from)?;
            }
        }
    }

    // Null reference: the same pipeline on an independent-noise matrix of
    // the same shape.
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut null_rng = rand_chacha::ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x6e756c6c);
    let x_null: DMatrix<f64> = DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
        rand_distr::StandardNormal.sample(&mut null_rng)
    });
    let (_, null_magnitudes) = fit_graph(&x_null, &cfg)?;

    let mut w = fs::File::create(ctx.path("magnitudes.csv")?).map_err(Error::from)?;
    writeln!(w, "rank,magnitude,source").map_err(Error::from)?;
    for (r, v) in magnitudes.iter().enumerate() {
        writeln!(w, "{},{},fit", r + 1, v).map_err(Error::from)?;
    }
    for (r, v) in null_magnitudes.iter().enumerate() {
        writeln!(w, "{},{},null", r + 1, v).map_err(Error::from)?;
    }

    let spd = est.k.clone().cholesky().is_some();
    let eval = match &truth {
        Some(t) => Some(evaluate_edges(&est.pattern, t)?),
        None => None,
    };
    let summary = serde_json::json!({
        "m": est.pattern.m,
        "n": x.nrows(),
        "n_edges": est.pattern.len(),
        "loglik": est.loglik,
        "iterations": est.iterations,
        "converged": est.converged,
        "spd": spd,
        "kept_columns": kept_columns,
        "evaluation": eval,
    });
    let f = fs::File::create(ctx.path("summary.json")?).map_err(Error::from)?;
    serde_json::to_writer_pretty(f, &summary).map_err(Error::from)?;
    if let Some(e) = eval {
        let f = fs::File::create(ctx.path("evaluation.json")?).map_err(Error::from)?;
        serde_json::to_writer_pretty(f, &e).map_err(Error::from)?;
    }

    ctx.finish()
}

/// Selection, nodewise start, constrained ML; returns the estimate and the
/// sorted magnitudes of its selected off-diagonals.
fn fit_graph(
    x: &DMatrix<f64>,
    cfg: &NodewiseConfig,
) -> CliResult<(sparsecp::graph::PrecisionEstimate, Vec<f64>)> {
    let selection = nodewise_select(x, cfg)?.selection;
    let k_nw = nodewise_coefficients(x, &selection)?;
    let init = feasible_init(&k_nw, &selection);
    let xs = standardise_columns(x)?;
    let cov = SampleCov::from_data(&xs);
    let est = constrained_ml(&cov, &selection, Some(&init), 1e-6, 500)?;
    let mut mags: Vec<f64> = est
        .pattern
        .edges
        .iter()
        .map(|&(i, j)| est.k[(i, j)].abs())
        .collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok((est, mags))
}

// ------------------------------------------------------------------ mcdof

fn cmd_mcdof(args: McdofArgs, mut ctx: ManifestCtx) -> CliResult<()> {
    if args.reps == 0 {
        return Err(usage("--reps must be >= 1"));
    }
    let table = match args.selector {
        SelectorArg::Tree => {
            let path = args
                .forest
                .as_ref()
                .ok_or_else(|| usage("--selector tree requires --forest"))?;
            let f = fs::File::open(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let forest = Forest::read_csv(f)?;
            let selector = tree_selector(&forest, MassSpec::Square);
            mc_dof(&selector, args.kappa_max, args.reps, ctx.seed, &NoiseModel::StdNormal)?
        }
        SelectorArg::Threshold => {
            let m = args.m.ok_or_else(|| usage("--selector threshold requires --m"))?;
            let selector = HardThresholdSelector { m };
            mc_dof(&selector, args.kappa_max, args.reps, ctx.seed, &NoiseModel::StdNormal)?
        }
        SelectorArg::Lasso => {
            let design = match (&args.input, args.m) {
                (Some(path), _) => {
                    let mut x = read_matrix_csv(path)?;
                    for mut col in x.column_iter_mut() {
                        let norm = col.norm();
                        if norm <= 0.0 {
                            return Err(CliError::Runtime(Error::ConstantColumn { column: 0 }));
                        }
                        col /= norm;
                    }
                    x
                }
                (None, Some(m)) => {
                    use rand::SeedableRng;
                    use rand_distr::Distribution;
                    let mut rng =
                        rand_chacha::ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x64657369676e);
                    let mut x: DMatrix<f64> = DMatrix::from_fn(2 * m, m, |_, _| {
                        rand_distr::StandardNormal.sample(&mut rng)
                    });
                    for mut col in x.column_iter_mut() {
                        let norm = col.norm();
                        col /= norm;
                    }
                    x
                }
                (None, None) => {
                    return Err(usage("--selector lasso requires --input or --m"));
                }
            };
            let selector = LassoSelector { design };
            mc_dof(&selector, args.kappa_max, args.reps, ctx.seed, &NoiseModel::StdNormal)?
        }
    };
    let w = fs::File::create(ctx.path("dof.csv")?).map_err(Error::from)?;
    table.write_csv(w)?;
    ctx.finish()
}
