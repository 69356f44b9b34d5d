use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use fmra::deconvolution::KernelSpec;
use fmra::estimator::{kotlarski_integrate, population_psi_diag, regularize_psi};
use fmra::grid::SpaceGrid;
use fmra::harness::{
    default_r, fit_loglog_slope, init_thread_pool, preset, read_rows, run_figure, run_pipeline, ExperimentConfig,
    HMode, PointContext, RunOptions, SlopeAxis,
};
use fmra::kotlarski_nd::{
    deconvolve_phi, empirical_joint_cf, phi_on_grid, ray_exp_integral, sample_replicated, ComponentDist, RayMode,
    ReplicatedCf,
};
use fmra::synthetic::{ShiftKind, SignalKind, SignalSpec};

#[derive(Parser)]
#[command(name = "fmra", version, about = "Functional multi-reference alignment by Kotlarski deconvolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover one signal from a simulated sample and write t,estimate,truth.
    Recover(RecoverArgs),
    /// Run a named or file-defined sweep into a results CSV.
    Experiment(ExperimentArgs),
    /// Log-log slopes of mean error per signal and shift.
    Slopes(SlopesArgs),
    /// Density deconvolution from replicated measurements.
    ReplicatedDemo(DemoArgs),
    /// Quick end-to-end checks.
    Selftest,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long, default_value = "f2")]
    signal: SignalKind,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 65536)]
    n: usize,
    #[arg(long, default_value = "zeta1")]
    shift: ShiftKind,
    /// Fixed bandwidth; oracle selection when absent.
    #[arg(long)]
    h: Option<f64>,
    /// Regularization constant; per-signal default when absent.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0 / 32.0)]
    space_rate: f64,
    #[arg(long, default_value_t = 10)]
    padding: usize,
    #[arg(long, default_value_t = 1e-3)]
    threshold_rel: f64,
    #[arg(long, default_value = "sinc")]
    kernel: KernelSpec,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// JSON file with one configuration or an array of them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Only run configurations for this signal.
    #[arg(long)]
    signal: Option<SignalKind>,
    /// Write wall_ms = 0 for byte-reproducible files.
    #[arg(long)]
    zero_wall: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SlopesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "n")]
    x: SlopeAxis,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Scale of the Laplace measurement errors.
    #[arg(long, default_value_t = 0.3)]
    noise_scale: f64,
    #[arg(long, default_value_t = 0.2)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn recover(a: RecoverArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::single("recover", a.signal, a.shift, a.sigma, a.lambda, a.n);
    cfg.r = a.r.unwrap_or_else(|| default_r(a.signal, false));
    cfg.h_mode = a.h.map_or(HMode::Oracle, HMode::Fixed);
    cfg.space_rate = a.space_rate;
    cfg.padding = a.padding;
    cfg.threshold_rel = a.threshold_rel;
    cfg.kernel = a.kernel;
    cfg.base_seed = a.seed;
    cfg.validate()?;
    let point = cfg.points()[0];
    let ctx = PointContext::new(&cfg, &point)?;
    let out = run_pipeline(&cfg, &ctx, a.n, a.seed)?;
    let truth = SignalSpec::new(a.signal);
    let est = &out.recovery.estimate;
    let g = est.grid();
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["t", "estimate", "truth"])?;
    for j in g.window() {
        let t = g.point(j);
        w.serialize((t, est.values()[j], truth.eval(t)))?;
    }
    w.flush()?;
    if let Some(z) = &out.zeros {
        println!("zeros {z:?}");
    }
    println!(
        "h {} error {}",
        out.recovery.bandwidth,
        out.recovery.rel_sup_error.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_configs(a: &ExperimentArgs) -> Result<Vec<ExperimentConfig>> {
    let mut cfgs = match (&a.preset, &a.config) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match serde_json::from_str::<Vec<ExperimentConfig>>(&text) {
                Ok(v) => v,
                Err(_) => vec![serde_json::from_str::<ExperimentConfig>(&text)
                    .with_context(|| format!("parsing {}", path.display()))?],
            }
        }
        (None, None) => bail!("either --preset or --config is required"),
    };
    if let Some(s) = a.signal {
        cfgs.retain(|c| c.signal == s);
    }
    if let Some(seed) = a.base_seed {
        for c in &mut cfgs {
            c.base_seed = seed;
        }
    }
    if cfgs.is_empty() {
        bail!("no configurations selected");
    }
    Ok(cfgs)
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfgs = load_configs(&a)?;
    let opts = RunOptions {
        max_n: a.max_n,
        replicates: a.replicates,
        zero_wall: a.zero_wall,
    };
    let rows = run_figure(&cfgs, &a.out, &opts)?;
    let failed = rows.iter().filter(|r| !r.error.is_finite()).count();
    println!("{} rows written to {} ({failed} failed)", rows.len(), a.out.display());
    Ok(())
}

fn slopes(a: SlopesArgs) -> Result<()> {
    let rows = read_rows(&a.input)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "experiment,signal,shift,slope,intercept")?;
    for f in fit_loglog_slope(&rows, a.x)? {
        writeln!(out, "{},{},{},{},{}", f.experiment, f.signal, f.shift, f.slope, f.intercept)?;
    }
    Ok(())
}

fn demo(a: DemoArgs) -> Result<()> {
    let x0 = ComponentDist::Gaussian { std: 1.0 };
    let noise = ComponentDist::Laplace { scale: a.noise_scale };
    let batch = sample_replicated(a.n, 1, x0, noise, a.seed)?;
    let cf = empirical_joint_cf(&batch);
    let grid = SpaceGrid::new(8.0, 1.0 / 16.0, 4)?;
    let phi = phi_on_grid(&cf, RayMode::Phi0, &grid.freq_grid(), 1.0 / a.h, 0.0)?;
    let dens = deconvolve_phi(&phi, &KernelSpec::Sinc, a.h, &grid)?;
    let truth = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["t", "estimate", "truth"])?;
    let mut err: f64 = 0.0;
    for j in grid.indices_within(4.0) {
        let t = grid.point(j);
        w.serialize((t, dens.values()[j], truth(t)))?;
        err = err.max((dens.values()[j] - truth(t)).abs());
    }
    w.flush()?;
    println!("sup error on [-4, 4]: {err}");
    Ok(())
}

fn selftest() -> Result<bool> {
    let mut ok = true;
    let mut report = |name: &str, pass: bool, detail: String| {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };

    let spec = SignalSpec::new(SignalKind::F2);
    let fg = SpaceGrid::standard().freq_grid();
    let psi = regularize_psi(&population_psi_diag(&spec, &fg), 1.0, 1e-300)?;
    let fe = kotlarski_integrate(&psi, spec.eval_ft(0.0))?;
    let err = fg
        .freqs()
        .iter()
        .zip(fe.spectrum.values())
        .filter(|(w, _)| w.abs() <= 20.0)
        .map(|(&w, v)| (v - spec.eval_ft(w)).norm())
        .fold(0.0, f64::max);
    report("oracle Kotlarski", err < 1e-3, format!("max error {err:.2e}"));

    let mut cfg = ExperimentConfig::single("selftest", SignalKind::F2, ShiftKind::Fixed(0.0), 0.0, 0.1, 64);
    cfg.h_mode = HMode::Fixed(0.035);
    cfg.r = 1.0;
    let point = cfg.points()[0];
    let out = run_pipeline(&cfg, &PointContext::new(&cfg, &point)?, 64, 0)?;
    let e = out.recovery.rel_sup_error.unwrap_or(f64::NAN);
    report("noiseless pipeline", e < 0.05, format!("relative error {e:.4}"));

    let cf = ReplicatedCf {
        dim: 2,
        x0: ComponentDist::Gaussian { std: 1.0 },
        x1: ComponentDist::Gaussian { std: 0.5 },
        x2: ComponentDist::Gaussian { std: 0.5 },
    };
    let v = ray_exp_integral(&cf, RayMode::Phi0, &[1.0, 1.0], &[0.0, 0.0], 256)?;
    let e = (v - Complex64::new((-1.0f64).exp(), 0.0)).norm();
    report("Gaussian ray integral", e < 1e-6, format!("error {e:.2e}"));
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let result = match cli.command {
        Command::Recover(a) => recover(a),
        Command::Experiment(a) => experiment(a),
        Command::Slopes(a) => slopes(a),
        Command::ReplicatedDemo(a) => demo(a),
        Command::Selftest => selftest().and_then(|ok| if ok { Ok(()) } else { bail!("self-test failed") }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
