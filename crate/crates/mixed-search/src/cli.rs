//! Command-line orchestration: solve and cache surfaces, export figures'
//! data, simulate, compare against the baseline, and sweep SNR.
//!
//! Every run writes a resolved-configuration echo next to its outputs, so
//! results stay reproducible from the artifacts alone. Flag resolution
//! order: explicit flag, then `--config` file value, then the built-in
//! default (the reference configuration pi = 0.05, c = 0.01, sigma2 = 1,
//! SNR = 3 dB).

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dp::{solve_refinement, solve_scanning, SolverSettings};
use crate::io::{
    bundle_path, canonical_json, export_regions_csv, export_surface_csv, export_trials_csv,
    load_bundle, params_hash, save_bundle, write_json, SurfaceBundle,
};
use crate::model::{DensityPair, ModelParams};
use crate::policy::{extract_regions, MixedPolicy};
use crate::sim::{compare_strategies, run_batch_with_records, sweep_snr};

/// Two-stage quickest-search solver and Monte-Carlo harness.
#[derive(Debug, Parser)]
#[command(name = "mixed-search", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the surfaces and cache them as a hash-keyed bundle.
    Solve(SolveArgs),
    /// Export surface values and decision-region CSVs.
    Regions(SolveArgs),
    /// Simulate the two-stage policy and summarize delay, error, and cost.
    Simulate(SimulateArgs),
    /// Delay comparison against an error-matched single-sequence baseline.
    Compare(CompareArgs),
    /// Solve and simulate at each SNR of a grid; report the cost trend.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelFlags {
    /// Prior probability that any one sequence carries the signal [0.05].
    #[arg(long)]
    pi: Option<f64>,
    /// Cost per observation in the Bayes risk [0.01].
    #[arg(long)]
    c: Option<f64>,
    /// Noise variance [1.0].
    #[arg(long)]
    sigma2: Option<f64>,
    /// Signal power expressed as SNR in dB [3.0].
    #[arg(long, conflicts_with = "p")]
    snr_db: Option<f64>,
    /// Signal power given directly instead of via --snr-db.
    #[arg(long)]
    p: Option<f64>,
    /// Base RNG seed for simulations [7].
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file holding any of the flag values; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Triangular belief-grid resolution M [201].
    #[arg(long)]
    grid_m: Option<usize>,
    /// Quadrature nodes per predictive integral [129].
    #[arg(long)]
    quad_points: Option<usize>,
    /// Value-iteration sup-norm tolerance [1e-7].
    #[arg(long)]
    tol: Option<f64>,
    /// Value-iteration sweep budget [20000].
    #[arg(long)]
    max_iter: Option<u64>,
    /// Half-width of the refinement log-likelihood grid [40].
    #[arg(long)]
    loglr_bound: Option<f64>,
    /// Node count (odd) of the log-likelihood grid [401].
    #[arg(long)]
    loglr_points: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutFlags {
    /// Output directory [./out].
    #[arg(long, env = "MIXED_SEARCH_OUT")]
    out: Option<PathBuf>,
    /// Bundle file to use instead of the hash-derived cache path.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Re-solve even when a matching bundle is already cached.
    #[arg(long)]
    force: bool,
    /// Print the machine-readable JSON report instead of the summary.
    #[arg(long)]
    json: bool,
    /// Cap worker threads for solves and simulations [all cores].
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    out: OutFlags,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    out: OutFlags,
    /// Monte-Carlo trials [10000].
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    out: OutFlags,
    /// Monte-Carlo trials per strategy [10000].
    #[arg(long)]
    trials: Option<u64>,
    /// Trials per baseline-calibration probe [5000].
    #[arg(long)]
    calib_trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    out: OutFlags,
    /// Monte-Carlo trials per SNR point [5000].
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', default_value = "0,2,4,6,8,10")]
    snr: Vec<f64>,
}

/// `--config` file schema: every key optional, same names as the flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    pi: Option<f64>,
    c: Option<f64>,
    sigma2: Option<f64>,
    snr_db: Option<f64>,
    p: Option<f64>,
    seed: Option<u64>,
    grid_m: Option<usize>,
    quad_points: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<u64>,
    loglr_bound: Option<f64>,
    loglr_points: Option<usize>,
    trials: Option<u64>,
    calib_trials: Option<u64>,
    workers: Option<usize>,
}

/// Fully resolved run configuration.
struct Resolved {
    params: ModelParams,
    settings: SolverSettings,
    hash: String,
    out: PathBuf,
    bundle: Option<PathBuf>,
    force: bool,
    json: bool,
    workers: Option<usize>,
    trials: u64,
    calib_trials: u64,
}

/// Echo written beside every command's outputs.
#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'a str,
    params: &'a ModelParams,
    settings: &'a SolverSettings,
    params_hash: &'a str,
    trials: u64,
    calib_trials: u64,
    workers: Option<usize>,
    out_dir: String,
}

fn resolve(
    model: &ModelFlags,
    solver: &SolverFlags,
    out: &OutFlags,
    trials: Option<u64>,
    calib_trials: Option<u64>,
    default_trials: u64,
) -> anyhow::Result<Resolved> {
    let file: FileConfig = match &model.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let pi = model.pi.or(file.pi).unwrap_or(0.05);
    let c = model.c.or(file.c).unwrap_or(0.01);
    let sigma2 = model.sigma2.or(file.sigma2).unwrap_or(1.0);
    let p = model.p.or(file.p);
    let snr_db = model.snr_db.or(file.snr_db);
    if p.is_some() && snr_db.is_some() {
        bail!("give the signal power either as --p or as --snr-db, not both");
    }
    let pair = match p {
        Some(p) => DensityPair::gaussian(sigma2, p)?,
        None => DensityPair::gaussian_snr_db(sigma2, snr_db.unwrap_or(3.0))?,
    };
    let seed = model.seed.or(file.seed).unwrap_or(7);
    let params = ModelParams::new(pi, c, pair, seed)?;

    let mut settings = SolverSettings::default();
    if let Some(v) = solver.grid_m.or(file.grid_m) {
        settings.grid_m = v;
    }
    if let Some(v) = solver.quad_points.or(file.quad_points) {
        settings.quad_points = v;
    }
    if let Some(v) = solver.tol.or(file.tol) {
        settings.tol = v;
    }
    if let Some(v) = solver.max_iter.or(file.max_iter) {
        settings.max_iter = v;
    }
    if let Some(v) = solver.loglr_bound.or(file.loglr_bound) {
        settings.loglr_bound = v;
    }
    if let Some(v) = solver.loglr_points.or(file.loglr_points) {
        settings.loglr_points = v;
    }
    settings.validate()?;

    let hash = params_hash(&params, &settings);
    Ok(Resolved {
        params,
        settings,
        hash,
        out: out.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        bundle: out.bundle.clone(),
        force: out.force,
        json: out.json,
        workers: out.workers.or(file.workers),
        trials: trials.or(file.trials).unwrap_or(default_trials).max(1),
        calib_trials: calib_trials.or(file.calib_trials).unwrap_or(5_000).max(1),
    })
}

/// Size the global worker pool once, before any parallel work runs.
fn init_workers(workers: Option<usize>) {
    if let Some(w) = workers {
        // A second call in the same process is harmless; the pool keeps
        // its first configuration and determinism does not depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
}

fn write_config_echo(r: &Resolved, command: &str) -> anyhow::Result<()> {
    let echo = RunConfig {
        command,
        params: &r.params,
        settings: &r.settings,
        params_hash: &r.hash,
        trials: r.trials,
        calib_trials: r.calib_trials,
        workers: r.workers,
        out_dir: r.out.display().to_string(),
    };
    write_json(&echo, &r.out.join(format!("config_{command}.json")))?;
    Ok(())
}

/// Load the cached bundle if its hash matches, else solve and cache.
/// Returns the bundle, whether it came from cache, its path, and the
/// solve time in seconds (zero on a cache hit).
fn ensure_bundle(r: &Resolved) -> anyhow::Result<(SurfaceBundle, bool, PathBuf, f64)> {
    let path = r.bundle.clone().unwrap_or_else(|| bundle_path(&r.out, &r.hash));
    if !r.force && path.exists() {
        match load_bundle(&path) {
            Ok(bundle) if bundle.params_hash == r.hash => return Ok((bundle, true, path, 0.0)),
            Ok(_) => {}
            Err(e) => eprintln!("warning: ignoring unreadable bundle {}: {e}", path.display()),
        }
    }
    let start = Instant::now();
    let refinement = solve_refinement(&r.params, &r.settings)?;
    let scanning = solve_scanning(&r.params, &r.settings, &refinement)?;
    let regions = extract_regions(&refinement.g, &scanning, r.settings.interp_tol)?;
    let bundle = SurfaceBundle::build(&r.params, &r.settings, &refinement, &scanning, &regions);
    save_bundle(&bundle, &path)?;
    Ok((bundle, false, path, start.elapsed().as_secs_f64()))
}

/// Build the executable policy. The refinement solve always runs (its
/// continuation tables are not cached), while the scanning surfaces and
/// masks come from the bundle when its hash matches.
fn build_policy(r: &Resolved) -> anyhow::Result<(MixedPolicy, SurfaceBundle, bool)> {
    let (bundle, cached, _, _) = ensure_bundle(r)?;
    let refinement = solve_refinement(&r.params, &r.settings)?;
    let policy = MixedPolicy::new(
        r.params.clone(),
        refinement,
        bundle.scanning_solution(),
        bundle.regions(),
    )?;
    Ok((policy, bundle, cached))
}

#[derive(Serialize)]
struct SolveReport {
    params_hash: String,
    bundle: String,
    cached: bool,
    solve_seconds: f64,
    a_s: f64,
    refine_iterations: u64,
    refine_residual: f64,
    scan_iterations: u64,
    scan_residual: f64,
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<()> {
    let r = resolve(&args.model, &args.solver, &args.out, None, None, 10_000)?;
    init_workers(r.workers);
    let (bundle, cached, path, secs) = ensure_bundle(&r)?;
    write_config_echo(&r, "solve")?;
    let report = SolveReport {
        params_hash: r.hash.clone(),
        bundle: path.display().to_string(),
        cached,
        solve_seconds: secs,
        a_s: bundle.a_s,
        refine_iterations: bundle.refine_iterations,
        refine_residual: bundle.refine_residual,
        scan_iterations: bundle.scan_iterations,
        scan_residual: bundle.scan_residual,
    };
    if r.json {
        println!("{}", canonical_json(&report)?);
    } else {
        println!("params hash   {}", report.params_hash);
        if cached {
            println!("bundle        {} (cache hit)", report.bundle);
        } else {
            println!("bundle        {} (solved in {:.1}s)", report.bundle, secs);
        }
        println!(
            "refinement    {} sweeps, residual {:.2e}",
            report.refine_iterations, report.refine_residual
        );
        println!(
            "scanning      {} sweeps, residual {:.2e}",
            report.scan_iterations, report.scan_residual
        );
        println!("a_s           {:.6}", report.a_s);
    }
    Ok(())
}

#[derive(Serialize)]
struct RegionsReport {
    params_hash: String,
    total_nodes: usize,
    stop_nodes: usize,
    switch_nodes: usize,
    files: Vec<String>,
}

fn cmd_regions(args: SolveArgs) -> anyhow::Result<()> {
    let r = resolve(&args.model, &args.solver, &args.out, None, None, 10_000)?;
    init_workers(r.workers);
    let (bundle, _, _, _) = ensure_bundle(&r)?;
    write_config_echo(&r, "regions")?;

    let g = bundle.g_surface();
    let scanning = bundle.scanning_solution();
    let regions = bundle.regions();
    let exports = r.out.join("exports");
    let targets = [
        ("g.csv", &g),
        ("v_s.csv", &scanning.vs),
        ("a_c.csv", &scanning.ac),
    ];
    let mut files = Vec::new();
    for (name, surface) in targets {
        let path = exports.join(name);
        export_surface_csv(surface, &path)?;
        files.push(path.display().to_string());
    }
    let regions_path = exports.join("regions.csv");
    export_regions_csv(&g, &scanning, &regions, &regions_path)?;
    files.push(regions_path.display().to_string());

    let report = RegionsReport {
        params_hash: r.hash.clone(),
        total_nodes: regions.grid.node_count(),
        stop_nodes: regions.stop_count(),
        switch_nodes: regions.switch_count(),
        files,
    };
    if r.json {
        println!("{}", canonical_json(&report)?);
    } else {
        println!(
            "R_tau         {} of {} nodes",
            report.stop_nodes, report.total_nodes
        );
        println!(
            "R_phi         {} of {} nodes",
            report.switch_nodes, report.total_nodes
        );
        for f in &report.files {
            println!("wrote         {f}");
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let r = resolve(&args.model, &args.solver, &args.out, args.trials, None, 10_000)?;
    init_workers(r.workers);
    let (policy, _, _) = build_policy(&r)?;
    write_config_echo(&r, "simulate")?;

    let (summary, records) =
        run_batch_with_records(&policy, r.trials, r.params.rng_seed, None)?;
    export_trials_csv(&records, &r.out.join("exports").join("trials.csv"))?;
    write_json(&summary, &r.out.join("simulate.json"))?;

    if r.json {
        println!("{}", canonical_json(&summary)?);
    } else {
        let prior = policy.prior;
        let vs_prior = policy.scanning.vs.eval(prior.p11(), prior.pmix());
        println!("trials        {}   seed {}", summary.n_trials, summary.seed);
        println!("mean tau1     {:.3} (se {:.3})", summary.mean_tau1, summary.se_tau1);
        println!("mean tau2     {:.3} (se {:.3})", summary.mean_tau2, summary.se_tau2);
        println!("mean delay    {:.3} (se {:.3})", summary.mean_delay, summary.se_delay);
        println!("switches      {:.3} per trial", summary.mean_switches);
        println!("error rate    {:.4} (se {:.4})", summary.error_rate, summary.se_error);
        println!("mean cost     {:.5} (se {:.5})", summary.mean_cost, summary.se_cost);
        println!(
            "V_s(prior)    {:.5}   |cost - V_s| = {:.5}",
            vs_prior,
            (summary.mean_cost - vs_prior).abs()
        );
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let r = resolve(&args.model, &args.solver, &args.out, args.trials, args.calib_trials, 10_000)?;
    init_workers(r.workers);
    let (policy, _, _) = build_policy(&r)?;
    write_config_echo(&r, "compare")?;

    let report = compare_strategies(&policy, r.trials, r.calib_trials, r.params.rng_seed, None)?;
    write_json(&report, &r.out.join("compare.json"))?;

    if r.json {
        println!("{}", canonical_json(&report)?);
    } else {
        if report.uninformative {
            println!("note          observations are uninformative; both strategies guess at the prior");
        }
        println!(
            "mixed         delay {:.3} (se {:.3}), error {:.4}",
            report.mixed.mean_delay, report.mixed.se_delay, report.mixed.error_rate
        );
        println!(
            "baseline      delay {:.3} (se {:.3}), error {:.4}",
            report.baseline.mean_delay, report.baseline.se_delay, report.baseline.error_rate
        );
        if let Some(cal) = &report.calibration {
            println!(
                "calibration   pi_U = {:.5} after {} probes (target error {:.4})",
                cal.stop_threshold,
                cal.steps.len(),
                cal.target_error
            );
        }
        match (report.delay_ratio, report.savings, report.savings_ci) {
            (Some(ratio), Some(savings), Some((lo, hi))) => {
                println!("delay ratio   {ratio:.4}");
                println!("savings       {:.1}% (95% CI {:.1}%..{:.1}%)", 100.0 * savings, 100.0 * lo, 100.0 * hi);
            }
            _ => println!("savings       undefined (baseline recorded zero delay)"),
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    if args.snr.is_empty() {
        bail!("--snr needs at least one value");
    }
    let r = resolve(&args.model, &args.solver, &args.out, args.trials, None, 5_000)?;
    init_workers(r.workers);
    write_config_echo(&r, "sweep")?;

    let report = sweep_snr(&r.params, &r.settings, &args.snr, r.trials, r.params.rng_seed, None)?;
    write_json(&report, &r.out.join("sweep.json"))?;

    let mut csv = String::from("snr_db,mean_cost,mean_delay,error_rate,se_cost\n");
    for point in &report.points {
        if let Some(s) = &point.summary {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                point.snr_db, s.mean_cost, s.mean_delay, s.error_rate, s.se_cost
            ));
        }
    }
    let csv_path = r.out.join("exports").join("sweep.csv");
    if let Some(parent) = csv_path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;

    if r.json {
        println!("{}", canonical_json(&report)?);
    } else {
        for point in &report.points {
            match (&point.summary, &point.error) {
                (Some(s), _) => println!(
                    "snr {:>5.1} dB  cost {:.5} (se {:.5})  delay {:.2}  error {:.4}",
                    point.snr_db, s.mean_cost, s.se_cost, s.mean_delay, s.error_rate
                ),
                (None, Some(e)) => println!("snr {:>5.1} dB  failed: {e}", point.snr_db),
                (None, None) => unreachable!("sweep point with neither summary nor error"),
            }
        }
        match report.cost_slope {
            Some(slope) => println!("cost slope    {slope:.6} per dB"),
            None => println!("cost slope    undefined (fewer than two successful points)"),
        }
    }
    Ok(())
}

/// Dispatch a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Regions(args) => cmd_regions(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}
