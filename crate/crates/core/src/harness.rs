//! Seeded Monte Carlo sweeps: configuration, named presets, the end-to-end
//! recovery pipeline per replicate, a resumable ordered CSV sink and log-log
//! slope fits.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deconvolution::{
    default_bandwidth_candidates, oracle_bandwidth_on, recover_signal, relative_sup_error, KernelSpec, RecoveryResult,
};
use crate::error::{Error, Result};
use crate::estimator::{accumulate_generated, check_zero_mass, kotlarski_integrate_band, regularize_psi, FourierEstimate};
use crate::grid::SpaceGrid;
use crate::synthetic::{
    noise_freq_diag, DerivativeMode, Generator, NoiseDiag, NoiseModel, ShiftDistribution, ShiftKind, SignalKind,
    SignalSpec,
};
use crate::vanishing::{detect_zeros, windowed_kotlarski, PowerSpectrumEstimate};

/// Exact CSV header.
pub const CSV_HEADER: &str = "experiment,signal,shift,sigma,lambda,n,rep,h,r,error,seed,wall_ms";

/// `2⁻¹⁰`, the squared standard spacing: a floor of `1/(r√N)` in units of
/// squared sample sums on the standard grid, held fixed when the grid is
/// refined.
pub const DEFAULT_FLOOR_SCALE: f64 = 1.0 / 1024.0;

pub const PRESETS: [&str; 6] = ["fig2", "fig3a", "fig3b", "fig5", "fig6", "fig7"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HMode {
    Oracle,
    Fixed(f64),
}

/// How the sample size of a sweep point is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleRule {
    /// Every value of `n_list`.
    List,
    /// `⌈coef · σ⁴⌉`.
    SigmaFourth { coef: f64 },
    /// `⌈coef · ln(1/λ)⌉`.
    LogInvLambda { coef: f64 },
}

fn default_sample_rule() -> SampleRule {
    SampleRule::List
}

fn default_half_width() -> f64 {
    2.0
}

fn default_band_limit() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub signal: SignalKind,
    pub shift: ShiftKind,
    pub sigma_list: Vec<f64>,
    pub lambda_list: Vec<f64>,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default = "default_sample_rule")]
    pub n_rule: SampleRule,
    pub replicates: usize,
    pub h_mode: HMode,
    pub r: f64,
    pub space_rate: f64,
    pub padding: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    pub threshold_rel: f64,
    /// Half-width of the windows around detected zeros; `None` is two
    /// frequency spacings.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Upper end of zero detection and windowed integration.
    #[serde(default = "default_band_limit")]
    pub band_limit: f64,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Scale of the magnitude floor `floor_scale / (r √N)`; `None` is
    /// [`DEFAULT_FLOOR_SCALE`] on every grid.
    #[serde(default)]
    pub floor_scale: Option<f64>,
    pub base_seed: u64,
}

/// One `(σ, λ, N)` point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigPoint {
    pub sigma: f64,
    pub lambda: f64,
    pub n: usize,
}

impl ExperimentConfig {
    /// A single-point configuration with the defaults of the sample-size
    /// experiments.
    pub fn single(name: &str, signal: SignalKind, shift: ShiftKind, sigma: f64, lambda: f64, n: usize) -> Self {
        Self {
            name: name.to_string(),
            signal,
            shift,
            sigma_list: vec![sigma],
            lambda_list: vec![lambda],
            n_list: vec![n],
            n_rule: SampleRule::List,
            replicates: 1,
            h_mode: HMode::Oracle,
            r: default_r(signal, false),
            space_rate: 1.0 / 32.0,
            padding: 10,
            half_width: 2.0,
            threshold_rel: 1e-3,
            epsilon: None,
            band_limit: 20.0,
            kernel: KernelSpec::Sinc,
            floor_scale: None,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.sigma_list.is_empty() || self.lambda_list.is_empty() {
            return bad("sigma_list and lambda_list must be nonempty".into());
        }
        if self.n_rule == SampleRule::List && self.n_list.is_empty() {
            return bad("n_list must be nonempty".into());
        }
        if self.sigma_list.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return bad("noise levels must be finite and >= 0".into());
        }
        if self.lambda_list.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad("lengthscales must be finite and > 0".into());
        }
        if self.n_list.contains(&0) {
            return bad("sample sizes must be >= 1".into());
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("regularization constant must be > 0, got {}", self.r));
        }
        if let HMode::Fixed(h) = self.h_mode {
            if !(h > 0.0 && h < 1.0) {
                return bad(format!("fixed bandwidth must lie in (0, 1), got {h}"));
            }
        }
        self.kernel.validate()?;
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(self.half_width, self.space_rate, self.padding)
    }

    /// Sweep points in order σ, then λ, then N.
    pub fn points(&self) -> Vec<ConfigPoint> {
        let mut out = Vec::new();
        for &sigma in &self.sigma_list {
            for &lambda in &self.lambda_list {
                let ns = match self.n_rule {
                    SampleRule::List => self.n_list.clone(),
                    SampleRule::SigmaFourth { coef } => vec![ceil_count(coef * sigma.powi(4))],
                    SampleRule::LogInvLambda { coef } => vec![ceil_count(coef * (1.0 / lambda).ln())],
                };
                out.extend(ns.into_iter().map(|n| ConfigPoint { sigma, lambda, n }));
            }
        }
        out
    }

    /// Number of sweep lists with more than one value.
    pub fn multi_valued_lists(&self) -> usize {
        [self.sigma_list.len(), self.lambda_list.len(), self.n_list.len()]
            .iter()
            .filter(|&&l| l > 1)
            .count()
    }
}

fn ceil_count(x: f64) -> usize {
    // guard against 12.000000000000002-style representation error
    let r = x.round();
    if (x - r).abs() < 1e-9 * r.max(1.0) {
        (r as usize).max(1)
    } else {
        (x.ceil() as usize).max(1)
    }
}

/// `0.01` (or `0.001` in the σ/λ sweeps) for Kotlarski-integrable signals,
/// `10⁻⁴` for signals with spectral zeros.
pub fn default_r(signal: SignalKind, sigma_lambda_sweep: bool) -> f64 {
    match (signal.has_vanishing_ft(), sigma_lambda_sweep) {
        (true, _) => 1e-4,
        (false, false) => 1e-2,
        (false, true) => 1e-3,
    }
}

fn log2_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log2(), hi.log2());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp2()).collect()
}

fn log10_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// The configurations of a named study, one per signal (and shift, and
/// bandwidth mode where the study compares them).
pub fn preset(name: &str) -> Result<Vec<ExperimentConfig>> {
    let n_powers: Vec<usize> = (5..=10).map(|k| 1usize << (2 * k)).collect();
    let base = |signal: SignalKind, shift: ShiftKind, sweep: bool| {
        let mut c = ExperimentConfig::single(name, signal, shift, 1.0, 0.1, 1);
        c.replicates = 20;
        c.r = default_r(signal, sweep);
        c
    };
    let mut out = Vec::new();
    match name {
        "fig2" | "fig5" => {
            for shift in [ShiftKind::Zeta1, ShiftKind::Zeta2] {
                for s in SignalKind::BUILTIN {
                    let mut c = base(s, shift, false);
                    c.sigma_list = vec![if name == "fig2" { 1.0 } else { 0.5 }];
                    c.n_list = n_powers.clone();
                    out.push(c);
                }
            }
        }
        "fig3a" => {
            for s in SignalKind::BUILTIN {
                let mut c = base(s, ShiftKind::Zeta1, true);
                c.sigma_list = log2_spaced(0.5, 2.0, 5);
                c.n_list = Vec::new();
                c.n_rule = SampleRule::SigmaFourth { coef: 200.0 };
                out.push(c);
            }
        }
        "fig3b" => {
            for s in SignalKind::BUILTIN {
                let mut c = base(s, ShiftKind::Zeta1, true);
                c.lambda_list = log10_spaced(0.01, 0.1, 5);
                c.n_list = Vec::new();
                c.n_rule = SampleRule::LogInvLambda { coef: 60.0 };
                c.space_rate = 1.0 / 128.0;
                out.push(c);
            }
        }
        "fig6" => {
            for s in SignalKind::BUILTIN {
                let mut c = base(s, ShiftKind::Zeta1, true);
                c.sigma_list = log2_spaced(0.5, 2.0, 5);
                c.n_list = vec![100_000];
                out.push(c);
            }
        }
        "fig7" => {
            for fixed in [false, true] {
                for s in SignalKind::BUILTIN {
                    let mut c = base(s, ShiftKind::Zeta1, false);
                    c.name = if fixed { "fig7-fixed" } else { "fig7-oracle" }.to_string();
                    c.n_list = n_powers.clone();
                    if fixed {
                        c.h_mode = HMode::Fixed(if s.has_vanishing_ft() { 0.05 } else { 0.035 });
                    }
                    out.push(c);
                }
            }
        }
        _ => {
            return Err(Error::UnknownPreset {
                name: name.to_string(),
                available: PRESETS.join(", "),
            })
        }
    }
    Ok(out)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub signal: String,
    pub shift: String,
    pub sigma: f64,
    pub lambda: f64,
    pub n: usize,
    pub rep: usize,
    pub h: f64,
    pub r: f64,
    pub error: f64,
    pub seed: u64,
    pub wall_ms: u64,
}

type RowKey = (String, String, String, u64, u64, usize, usize);

impl ResultRow {
    fn key(&self) -> RowKey {
        (
            self.experiment.clone(),
            self.signal.clone(),
            self.shift.clone(),
            self.sigma.to_bits(),
            self.lambda.to_bits(),
            self.n,
            self.rep,
        )
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one replicate. Signal, shift law and bandwidth mode are left out,
/// so runs that differ only in those see the same noise.
pub fn replicate_seed(cfg: &ExperimentConfig, point: &ConfigPoint, rep: usize) -> u64 {
    [
        point.sigma.to_bits(),
        point.lambda.to_bits(),
        point.n as u64,
        rep as u64,
        cfg.space_rate.to_bits(),
        cfg.padding as u64,
    ]
    .iter()
    .fold(splitmix(cfg.base_seed), |h, &v| splitmix(h ^ v))
}

/// Shared per-point state: grid, generator and noise correction.
pub struct PointContext {
    grid: SpaceGrid,
    generator: Generator,
    noise: NoiseDiag,
}

impl PointContext {
    pub fn new(cfg: &ExperimentConfig, point: &ConfigPoint) -> Result<Self> {
        let grid = cfg.grid()?;
        let model = NoiseModel::new(point.sigma, point.lambda, grid)?;
        let noise = noise_freq_diag(&model, &grid, DerivativeMode::CentralDifference)?;
        let generator = Generator::new(SignalSpec::new(cfg.signal), ShiftDistribution::new(cfg.shift), model);
        Ok(Self { grid, generator, noise })
    }
}

/// Output of the end-to-end pipeline for one sample.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub fourier: FourierEstimate,
    pub recovery: RecoveryResult,
    pub zeros: Option<Vec<f64>>,
}

/// Streams `N` observations, estimates the Fourier transform (windowed
/// around detected zeros for signals whose transform vanishes) and
/// deconvolves at the oracle or fixed bandwidth.
pub fn run_pipeline(cfg: &ExperimentConfig, ctx: &PointContext, n: usize, seed: u64) -> Result<PipelineOutput> {
    let acc = accumulate_generated(&ctx.generator, n, seed, DerivativeMode::CentralDifference)?;
    let c_hat = check_zero_mass(acc.zero_mean())?;
    let psi = acc.finish(&ctx.noise)?;
    let floor_scale = cfg.floor_scale.unwrap_or(DEFAULT_FLOOR_SCALE);
    let psi = regularize_psi(&psi, cfg.r, floor_scale)?;
    let candidates = match cfg.h_mode {
        HMode::Oracle => default_bandwidth_candidates(),
        HMode::Fixed(h) => vec![h],
    };
    let h_min = candidates.iter().copied().fold(f64::INFINITY, f64::min);
    let fg = ctx.grid.freq_grid();
    let (fourier, zeros) = if cfg.signal.has_vanishing_ft() {
        let eps = cfg.epsilon.unwrap_or(2.0 * fg.spacing());
        let ps = PowerSpectrumEstimate::from_psi(&psi);
        let zs = detect_zeros(&ps, cfg.threshold_rel, eps, cfg.band_limit.min(fg.max_freq()))?;
        let locations = zs.locations().to_vec();
        (windowed_kotlarski(&psi, &zs, c_hat)?, Some(locations))
    } else {
        (kotlarski_integrate_band(&psi, c_hat, (1.0 / h_min).min(fg.max_freq()))?, None)
    };
    let truth = SignalSpec::new(cfg.signal);
    let recovery = match cfg.h_mode {
        HMode::Oracle => oracle_bandwidth_on(&fourier, &cfg.kernel, &truth, &candidates, &ctx.grid)?.1,
        HMode::Fixed(h) => {
            let estimate = recover_signal(&fourier, &cfg.kernel, h, &ctx.grid)?;
            let err = relative_sup_error(&estimate, &truth);
            RecoveryResult {
                estimate,
                bandwidth: h,
                rel_sup_error: Some(err),
                params: None,
            }
        }
    };
    Ok(PipelineOutput { fourier, recovery, zeros })
}

fn run_with_context(cfg: &ExperimentConfig, ctx: &Result<PointContext>, point: &ConfigPoint, rep: usize) -> ResultRow {
    let seed = replicate_seed(cfg, point, rep);
    let start = Instant::now();
    let outcome = match ctx {
        Ok(ctx) => run_pipeline(cfg, ctx, point.n, seed),
        Err(e) => Err(Error::InvalidParameter(e.to_string())),
    };
    let (h, error) = match outcome {
        Ok(out) => (out.recovery.bandwidth, out.recovery.rel_sup_error.unwrap_or(f64::NAN)),
        Err(e) => {
            log::warn!(
                "{} {} {} sigma={} lambda={} n={} rep={}: {e}",
                cfg.name, cfg.signal, cfg.shift, point.sigma, point.lambda, point.n, rep
            );
            (f64::NAN, f64::NAN)
        }
    };
    ResultRow {
        experiment: cfg.name.clone(),
        signal: cfg.signal.name().to_string(),
        shift: cfg.shift.name(),
        sigma: point.sigma,
        lambda: point.lambda,
        n: point.n,
        rep,
        h,
        r: cfg.r,
        error,
        seed,
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

/// One replicate at one sweep point. Pipeline failures give `error = NaN`.
pub fn run_recovery(cfg: &ExperimentConfig, point: &ConfigPoint, rep: usize) -> ResultRow {
    run_with_context(cfg, &PointContext::new(cfg, point), point, rep)
}

/// Desk-scale overrides and output options.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Drop sweep points with `N` above this.
    pub max_n: Option<usize>,
    pub replicates: Option<usize>,
    /// Write `wall_ms = 0` so files are byte-comparable.
    pub zero_wall: bool,
}

pub fn apply_overrides(configs: &mut [ExperimentConfig], opts: &RunOptions) -> Result<()> {
    for c in configs.iter_mut() {
        if let Some(r) = opts.replicates {
            c.replicates = r;
        }
        if let Some(m) = opts.max_n {
            c.n_list.retain(|&n| n <= m);
        }
        c.validate()?;
    }
    Ok(())
}

/// Rows of an existing results file.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "{} does not have the expected header {CSV_HEADER}",
            path.display()
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Rows processed in parallel before they are written.
const ROW_BLOCK: usize = 16;

/// Runs every configuration over its sweep and replicates, appending rows to
/// `out` in a fixed order. Rows already present in `out` are skipped, so an
/// interrupted run resumes where it stopped. Returns the rows computed now.
pub fn run_figure(configs: &[ExperimentConfig], out: &Path, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    let mut configs = configs.to_vec();
    apply_overrides(&mut configs, opts)?;
    let done: HashSet<RowKey> = if out.exists() && std::fs::metadata(out)?.len() > 0 {
        read_rows(out)?.iter().map(ResultRow::key).collect()
    } else {
        std::fs::write(out, format!("{CSV_HEADER}\n"))?;
        HashSet::new()
    };
    let file = OpenOptions::new().append(true).open(out)?;
    let mut sink = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let mut computed = Vec::new();
    for cfg in &configs {
        for point in cfg.points() {
            let pending: Vec<usize> = (0..cfg.replicates)
                .filter(|&rep| {
                    let probe = ResultRow {
                        experiment: cfg.name.clone(),
                        signal: cfg.signal.name().to_string(),
                        shift: cfg.shift.name(),
                        sigma: point.sigma,
                        lambda: point.lambda,
                        n: point.n,
                        rep,
                        h: 0.0,
                        r: 0.0,
                        error: 0.0,
                        seed: 0,
                        wall_ms: 0,
                    };
                    !done.contains(&probe.key())
                })
                .collect();
            if pending.is_empty() {
                continue;
            }
            let ctx = PointContext::new(cfg, &point);
            for block in pending.chunks(ROW_BLOCK) {
                let rows: Vec<ResultRow> = block
                    .par_iter()
                    .map(|&rep| {
                        let mut row = run_with_context(cfg, &ctx, &point, rep);
                        if opts.zero_wall {
                            row.wall_ms = 0;
                        }
                        row
                    })
                    .collect();
                for row in &rows {
                    sink.serialize(row)?;
                }
                sink.flush()?;
                computed.extend(rows);
            }
        }
    }
    sink.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(computed)
}

/// Independent variable of a slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeAxis {
    N,
    Sigma,
    Lambda,
}

impl std::str::FromStr for SlopeAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SlopeAxis::N),
            "sigma" => Ok(SlopeAxis::Sigma),
            "lambda" => Ok(SlopeAxis::Lambda),
            _ => Err(Error::InvalidParameter(format!("unknown slope axis '{s}' (n, sigma, lambda)"))),
        }
    }
}

impl SlopeAxis {
    fn of(&self, row: &ResultRow) -> f64 {
        match self {
            SlopeAxis::N => row.n as f64,
            SlopeAxis::Sigma => row.sigma,
            SlopeAxis::Lambda => row.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub experiment: String,
    pub signal: String,
    pub shift: String,
    pub slope: f64,
    pub intercept: f64,
    /// `(x, mean error)` per distinct `x`, ascending.
    pub points: Vec<(f64, f64)>,
}

/// `(experiment, signal, shift)`.
pub type GroupKey = (String, String, String);

/// Mean error over replicates per `(experiment, signal, shift, x)`, ignoring
/// failed (NaN) rows.
pub fn mean_errors(rows: &[ResultRow], axis: SlopeAxis) -> BTreeMap<GroupKey, Vec<(f64, f64)>> {
    let mut acc: BTreeMap<GroupKey, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.error.is_finite()) {
        let x = axis.of(row);
        let e = acc
            .entry((row.experiment.clone(), row.signal.clone(), row.shift.clone()))
            .or_default()
            .entry(x.to_bits())
            .or_insert((0.0, 0));
        e.0 += row.error;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, m)| {
            let mut pts: Vec<(f64, f64)> = m.into_iter().map(|(x, (s, c))| (f64::from_bits(x), s / c as f64)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, pts)
        })
        .collect()
}

/// Least-squares slope of `log₁₀(mean error)` against `log₁₀ x` per group.
pub fn fit_loglog_slope(rows: &[ResultRow], axis: SlopeAxis) -> Result<Vec<SlopeFit>> {
    let mut fits = Vec::new();
    for ((experiment, signal, shift), points) in mean_errors(rows, axis) {
        if points.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "{experiment}/{signal}/{shift}: need at least 3 distinct x values, got {}",
                points.len()
            )));
        }
        if points.iter().any(|&(x, e)| !(x > 0.0) || !(e > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "{experiment}/{signal}/{shift}: x and mean error must be positive for a log-log fit"
            )));
        }
        let lx: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
        let ly: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
        let k = lx.len() as f64;
        let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        fits.push(SlopeFit {
            experiment,
            signal,
            shift,
            slope,
            intercept: my - slope * mx,
            points,
        });
    }
    Ok(fits)
}

/// Rayon pool capped by `FMRA_THREADS` (absent: all cores).
pub fn init_thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("FMRA_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("FMRA_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::InvalidParameter("FMRA_THREADS must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}
