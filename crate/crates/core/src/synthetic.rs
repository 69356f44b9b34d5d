//! Test signals with closed-form Fourier transforms, shift distributions,
//! squared-exponential Gaussian-process noise and observation batches.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{central_difference_slice, CftPlan, SampledField, SpaceGrid};

/// Observations generated per RNG stream.
pub const CHUNK: usize = 1024;

/// RNG for one chunk of observations: the seed selects the key, the chunk
/// index selects the stream, so chunks can be generated in any order.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// `g(x) + g(πx)`, `g` the 2-fold convolution of `1[-1/2, 1/2]`.
    F1,
    /// `g(x) + g(πx)`, `g` the 4-fold convolution of `1[-1/4, 1/4]`.
    F2,
    /// `exp(-20 (x - 0.3)^2) cos(8 (x - 0.3))`.
    F3,
    /// Equal mixture of `N(-0.3, 0.02)` and `N(0.5, 0.02)` densities.
    F4,
    /// The zero function.
    Null,
}

impl SignalKind {
    pub const BUILTIN: [SignalKind; 4] = [SignalKind::F1, SignalKind::F2, SignalKind::F3, SignalKind::F4];

    pub fn name(&self) -> &'static str {
        match self {
            SignalKind::F1 => "f1",
            SignalKind::F2 => "f2",
            SignalKind::F3 => "f3",
            SignalKind::F4 => "f4",
            SignalKind::Null => "null",
        }
    }

    /// Whether the Fourier transform has zeros on the working band.
    pub fn has_vanishing_ft(&self) -> bool {
        matches!(self, SignalKind::F4)
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(SignalKind::F1),
            "f2" => Ok(SignalKind::F2),
            "f3" => Ok(SignalKind::F3),
            "f4" => Ok(SignalKind::F4),
            "null" | "zero" => Ok(SignalKind::Null),
            _ => Err(Error::InvalidParameter(format!("unknown signal '{s}'"))),
        }
    }
}

/// Fourier decay class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    Ordinary(f64),
    Supersmooth,
}

/// `sin(x) / x`.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Irwin–Hall density of the sum of `n` independent `U[0, 1]`.
pub fn irwin_hall(n: u32, u: f64) -> f64 {
    if u <= 0.0 || u >= n as f64 {
        return 0.0;
    }
    let fact: f64 = (1..n).map(|i| i as f64).product();
    let mut s = 0.0;
    for k in 0..=(u.floor() as u32).min(n) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * binomial(n, k) * (u - k as f64).powi(n as i32 - 1);
    }
    s / fact
}

/// `n`-fold convolution of the indicator of an interval of length `w`
/// centred at 0.
fn box_convolution(n: u32, w: f64, x: f64) -> f64 {
    w.powi(n as i32 - 1) * irwin_hall(n, x / w + n as f64 / 2.0)
}

fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn raw_eval(kind: SignalKind, x: f64) -> f64 {
    match kind {
        SignalKind::F1 => box_convolution(2, 1.0, x) + box_convolution(2, 1.0, PI * x),
        SignalKind::F2 => box_convolution(4, 0.5, x) + box_convolution(4, 0.5, PI * x),
        SignalKind::F3 => {
            let u = x - 0.3;
            (-20.0 * u * u).exp() * (8.0 * u).cos()
        }
        SignalKind::F4 => 0.5 * (gaussian_pdf(x, -0.3, 0.02) + gaussian_pdf(x, 0.5, 0.02)),
        SignalKind::Null => 0.0,
    }
}

fn raw_eval_ft(kind: SignalKind, w: f64) -> Complex64 {
    match kind {
        SignalKind::F1 => {
            let a = sinc(w / 2.0).powi(2);
            let b = sinc(w / (2.0 * PI)).powi(2) / PI;
            Complex64::new(a + b, 0.0)
        }
        SignalKind::F2 => {
            let a = (0.5 * sinc(w / 4.0)).powi(4);
            let b = (0.5 * sinc(w / (4.0 * PI))).powi(4) / PI;
            Complex64::new(a + b, 0.0)
        }
        SignalKind::F3 => {
            let amp = 0.5
                * (PI / 20.0).sqrt()
                * ((-(w - 8.0).powi(2) / 80.0).exp() + (-(w + 8.0).powi(2) / 80.0).exp());
            Complex64::from_polar(amp, -0.3 * w)
        }
        SignalKind::F4 => {
            let env = (-0.01 * w * w).exp();
            (Complex64::from_polar(1.0, 0.3 * w) + Complex64::from_polar(1.0, -0.5 * w)) * (0.5 * env)
        }
        SignalKind::Null => Complex64::default(),
    }
}

/// Points used for the sup-norm scan on `[-1, 1]`.
pub const NORMALIZATION_SCAN: usize = 200_001;

fn sup_on_unit_interval(kind: SignalKind) -> f64 {
    let n = NORMALIZATION_SCAN;
    (0..n)
        .map(|i| raw_eval(kind, -1.0 + 2.0 * i as f64 / (n - 1) as f64).abs())
        .fold(0.0, f64::max)
}

fn normalizer(kind: SignalKind) -> f64 {
    static CACHE: [OnceLock<f64>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let idx = match kind {
        SignalKind::F1 => 0,
        SignalKind::F2 => 1,
        SignalKind::F3 => 2,
        SignalKind::F4 => 3,
        SignalKind::Null => return 1.0,
    };
    *CACHE[idx].get_or_init(|| sup_on_unit_interval(kind))
}

/// A test signal, sup-normalized on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    kind: SignalKind,
    normalization: f64,
}

impl SignalSpec {
    pub fn new(kind: SignalKind) -> Self {
        Self {
            kind,
            normalization: normalizer(kind),
        }
    }

    /// The signal before sup-normalization.
    pub fn unnormalized(kind: SignalKind) -> Self {
        Self {
            kind,
            normalization: 1.0,
        }
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn smoothness(&self) -> Smoothness {
        match self.kind {
            SignalKind::F1 => Smoothness::Ordinary(2.0),
            SignalKind::F2 => Smoothness::Ordinary(4.0),
            _ => Smoothness::Supersmooth,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        raw_eval(self.kind, t) / self.normalization
    }

    pub fn eval_ft(&self, omega: f64) -> Complex64 {
        raw_eval_ft(self.kind, omega) / self.normalization
    }

    /// Frequency derivative of [`eval_ft`](Self::eval_ft) by a five-point stencil.
    pub fn eval_ft_derivative(&self, omega: f64) -> Complex64 {
        let h = 1e-3;
        let f = |d: f64| self.eval_ft(omega + d);
        (f(-2.0 * h) - f(-h) * 8.0 + f(h) * 8.0 - f(2.0 * h)) / (12.0 * h)
    }

    pub fn sample(&self, grid: &SpaceGrid) -> SampledField {
        SampledField::from_fn(*grid, |t| self.eval(t)).expect("closed forms are finite")
    }
}

pub fn eval_signal(spec: &SignalSpec, t: f64) -> f64 {
    spec.eval(t)
}

pub fn eval_signal_ft(spec: &SignalSpec, omega: f64) -> Complex64 {
    spec.eval_ft(omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    /// Uniform on `[-1, 1]`.
    Zeta1,
    /// Density proportional to `f1` on `[-1, 1]`.
    Zeta2,
    /// Every shift equals the given value.
    Fixed(f64),
}

impl ShiftKind {
    pub fn name(&self) -> String {
        match self {
            ShiftKind::Zeta1 => "zeta1".into(),
            ShiftKind::Zeta2 => "zeta2".into(),
            ShiftKind::Fixed(s) if *s == 0.0 => "none".into(),
            ShiftKind::Fixed(s) => format!("fixed({s})"),
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ShiftKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase();
        match l.as_str() {
            "zeta1" | "uniform" => Ok(ShiftKind::Zeta1),
            "zeta2" => Ok(ShiftKind::Zeta2),
            "none" | "zero" => Ok(ShiftKind::Fixed(0.0)),
            _ => l
                .strip_prefix("fixed(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|v| v.parse().ok())
                .map(ShiftKind::Fixed)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown shift distribution '{s}'"))),
        }
    }
}

/// Nodes of the tabulated inverse CDF of `zeta2`.
pub const ZETA2_TABLE_NODES: usize = 10_000;

fn triangle_cdf(x: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x <= 0.0 {
        0.5 * (1.0 + x).powi(2)
    } else if x < 1.0 {
        1.0 - 0.5 * (1.0 - x).powi(2)
    } else {
        1.0
    }
}

/// CDF of the density proportional to `f1`.
pub fn zeta2_cdf(x: f64) -> f64 {
    (triangle_cdf(x) + triangle_cdf(PI * x) / PI) / (1.0 + 1.0 / PI)
}

fn zeta2_table() -> Arc<Vec<f64>> {
    static TABLE: OnceLock<Arc<Vec<f64>>> = OnceLock::new();
    TABLE
        .get_or_init(|| {
            let n = ZETA2_TABLE_NODES;
            let table = (0..n)
                .map(|i| {
                    let u = i as f64 / (n - 1) as f64;
                    let (mut lo, mut hi) = (-1.0, 1.0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if zeta2_cdf(mid) < u {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                })
                .collect();
            Arc::new(table)
        })
        .clone()
}

#[derive(Debug, Clone)]
pub struct ShiftDistribution {
    kind: ShiftKind,
    inverse_cdf_table: Option<Arc<Vec<f64>>>,
}

impl ShiftDistribution {
    pub fn new(kind: ShiftKind) -> Self {
        let inverse_cdf_table = matches!(kind, ShiftKind::Zeta2).then(zeta2_table);
        Self {
            kind,
            inverse_cdf_table,
        }
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ShiftKind::Zeta1 => 2.0 * rng.random::<f64>() - 1.0,
            ShiftKind::Zeta2 => {
                let table = self.inverse_cdf_table.as_ref().expect("table built for zeta2");
                let pos = rng.random::<f64>() * (table.len() - 1) as f64;
                let i = (pos.floor() as usize).min(table.len() - 2);
                let frac = pos - i as f64;
                table[i] + frac * (table[i + 1] - table[i])
            }
            ShiftKind::Fixed(s) => s,
        }
    }
}

pub fn sample_shifts<R: Rng + ?Sized>(dist: &ShiftDistribution, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| dist.draw(rng)).collect()
}

/// Squared-exponential Gaussian process on the observation window of a grid.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    sigma: f64,
    lambda: f64,
    grid: SpaceGrid,
    /// Lower Cholesky factor, packed by rows.
    chol: Arc<Vec<f64>>,
    dim: usize,
    jitter: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64, lambda: f64, grid: SpaceGrid) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        let pts = grid.window_points();
        let dim = pts.len();
        let packed_len = dim * (dim + 1) / 2;
        if sigma == 0.0 {
            return Ok(Self {
                sigma,
                lambda,
                grid,
                chol: Arc::new(vec![0.0; packed_len]),
                dim,
                jitter: 0.0,
            });
        }
        let cov = covariance_matrix(sigma, lambda, &pts);
        let s2 = sigma * sigma;
        let mut jitter = 1e-10 * s2;
        loop {
            let mut m = cov.clone();
            for i in 0..dim {
                m[(i, i)] += jitter;
            }
            if let Some(c) = m.cholesky() {
                let l = c.l();
                let mut chol = Vec::with_capacity(packed_len);
                for i in 0..dim {
                    for j in 0..=i {
                        chol.push(l[(i, j)]);
                    }
                }
                return Ok(Self {
                    sigma,
                    lambda,
                    grid,
                    chol: Arc::new(chol),
                    dim,
                    jitter,
                });
            }
            if jitter >= 1e-6 * s2 * (1.0 - 1e-9) {
                return Err(Error::NotPsd { jitter });
            }
            jitter *= 10.0;
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Number of window points the process lives on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self, t: f64, s: f64) -> f64 {
        self.sigma * self.sigma * (-(t - s).powi(2) / (2.0 * self.lambda * self.lambda)).exp()
    }

    /// Dense lower Cholesky factor.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.dim, self.dim);
        let mut k = 0;
        for i in 0..self.dim {
            for j in 0..=i {
                l[(i, j)] = self.chol[k];
                k += 1;
            }
        }
        l
    }

    /// Column `m` of the Cholesky factor.
    pub fn cholesky_column(&self, m: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|i| if i < m { 0.0 } else { self.chol[i * (i + 1) / 2 + m] })
            .collect()
    }

    /// Writes one draw on the window into `out`, consuming `dim` normals.
    pub fn draw_window<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        if self.sigma == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let mut k = 0;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.chol[k..k + i + 1];
            *o = row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum();
            k += i + 1;
        }
    }
}

pub fn covariance_matrix(sigma: f64, lambda: f64, pts: &[f64]) -> DMatrix<f64> {
    let n = pts.len();
    DMatrix::from_fn(n, n, |i, j| {
        sigma * sigma * (-(pts[i] - pts[j]).powi(2) / (2.0 * lambda * lambda)).exp()
    })
}

/// Independent draws, zero outside the observation window.
pub fn sample_noise<R: Rng + ?Sized>(
    model: &NoiseModel,
    grid: &SpaceGrid,
    n: usize,
    rng: &mut R,
) -> Result<Vec<SampledField>> {
    if grid != model.grid() {
        return Err(Error::GridMismatch("noise model was built for a different grid".into()));
    }
    let mut z = vec![0.0; model.dim()];
    let mut w = vec![0.0; model.dim()];
    (0..n)
        .map(|_| {
            model.draw_window(rng, &mut z, &mut w);
            SampledField::from_window(*grid, &w)
        })
        .collect()
}

/// Everything needed to generate observations.
#[derive(Debug, Clone)]
pub struct Generator {
    pub signal: SignalSpec,
    pub shifts: ShiftDistribution,
    pub noise: NoiseModel,
}

impl Generator {
    pub fn new(signal: SignalSpec, shifts: ShiftDistribution, noise: NoiseModel) -> Self {
        Self { signal, shifts, noise }
    }

    pub fn grid(&self) -> &SpaceGrid {
        self.noise.grid()
    }

    /// Fills `count` observations of chunk `chunk` (window values, row-major)
    /// and their shifts.
    pub fn fill_chunk(&self, seed: u64, chunk: u64, shifts: &mut [f64], data: &mut [f64]) {
        let l = self.noise.dim();
        debug_assert_eq!(data.len(), shifts.len() * l);
        let pts = self.grid().window_points();
        let mut rng = chunk_rng(seed, chunk);
        let mut z = vec![0.0; l];
        for (s, row) in shifts.iter_mut().zip(data.chunks_exact_mut(l)) {
            *s = self.shifts.draw(&mut rng);
            self.noise.draw_window(&mut rng, &mut z, row);
            for (v, &t) in row.iter_mut().zip(&pts) {
                *v += self.signal.eval(t - *s);
            }
        }
    }
}

/// `N` observations stored as window samples; zero padding is implicit.
#[derive(Debug, Clone)]
pub struct ObservationBatch {
    grid: SpaceGrid,
    window_len: usize,
    data: Vec<f64>,
    shifts: Vec<f64>,
    seed: u64,
}

impl ObservationBatch {
    pub fn from_windows(grid: SpaceGrid, windows: Vec<Vec<f64>>, shifts: Vec<f64>, seed: u64) -> Result<Self> {
        let window_len = grid.window_len();
        if windows.is_empty() {
            return Err(Error::InvalidParameter("a batch needs at least one observation".into()));
        }
        if windows.len() != shifts.len() {
            return Err(Error::GridMismatch("one shift per observation required".into()));
        }
        let mut data = Vec::with_capacity(windows.len() * window_len);
        for w in &windows {
            if w.len() != window_len {
                return Err(Error::GridMismatch(format!(
                    "observation has {} samples, window has {window_len}",
                    w.len()
                )));
            }
            data.extend_from_slice(w);
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            grid,
            window_len,
            data,
            shifts,
            seed,
        })
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    /// Window samples of observation `n`.
    pub fn window(&self, n: usize) -> &[f64] {
        &self.data[n * self.window_len..(n + 1) * self.window_len]
    }

    /// Row-major window samples of observations `start..end`.
    pub fn windows_range(&self, start: usize, end: usize) -> &[f64] {
        &self.data[start * self.window_len..end * self.window_len]
    }

    pub fn windows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.window_len)
    }

    pub fn field(&self, n: usize) -> SampledField {
        SampledField::from_window(self.grid, self.window(n)).expect("window length checked")
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

pub fn generate_batch(
    spec: &SignalSpec,
    dist: &ShiftDistribution,
    model: &NoiseModel,
    grid: &SpaceGrid,
    n: usize,
    seed: u64,
) -> Result<ObservationBatch> {
    if grid != model.grid() {
        return Err(Error::GridMismatch("noise model was built for a different grid".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("a batch needs at least one observation".into()));
    }
    let gen = Generator::new(*spec, dist.clone(), model.clone());
    let l = grid.window_len();
    let mut data = vec![0.0; n * l];
    let mut shifts = vec![0.0; n];
    data.par_chunks_mut(CHUNK * l)
        .zip(shifts.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (d, s))| gen.fill_chunk(seed, c as u64, s, d));
    Ok(ObservationBatch {
        grid: *grid,
        window_len: l,
        data,
        shifts,
        seed,
    })
}

/// How the frequency derivative of an observation transform is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Central differences on the frequency grid.
    #[default]
    CentralDifference,
    /// Transform of `(-i t) y(t)`.
    Analytic,
}

/// Noise contribution to the diagonal second moment and to its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDiag {
    /// `k_{η^ft}(ω, ω)`, real and nonnegative.
    pub diag: Vec<f64>,
    /// First-argument derivative, matched to the derivative mode.
    pub grad: Vec<Complex64>,
    pub mode: DerivativeMode,
}

/// Diagonal of the covariance of `η^ft` and its first-argument gradient,
/// formed from the transformed Cholesky columns so the quadrature is
/// identical to the one applied to observations.
pub fn noise_freq_diag(model: &NoiseModel, grid: &SpaceGrid, mode: DerivativeMode) -> Result<NoiseDiag> {
    if grid != model.grid() {
        return Err(Error::GridMismatch("noise model was built for a different grid".into()));
    }
    let m = grid.len();
    let mut diag = vec![0.0; m];
    let mut grad = vec![Complex64::default(); m];
    if model.sigma() == 0.0 {
        return Ok(NoiseDiag { diag, grad, mode });
    }
    let plan = CftPlan::new(*grid);
    let h = grid.freq_grid().spacing();
    let mut work = plan.work();
    let mut g = vec![Complex64::default(); m];
    let mut dg = vec![Complex64::default(); m];
    for col in 0..model.dim() {
        let c = model.cholesky_column(col);
        plan.forward_window_into(&c, &mut g, &mut work);
        match mode {
            DerivativeMode::Analytic => plan.moment_window_into(&c, &mut dg, &mut work),
            DerivativeMode::CentralDifference => central_difference_slice(&g, h, &mut dg),
        }
        for k in 0..m {
            diag[k] += g[k].norm_sqr();
            grad[k] += dg[k] * g[k].conj();
        }
    }
    Ok(NoiseDiag { diag, grad, mode })
}

/// `‖f‖∞² / (σ · Ê[sup_t η(t)])` with `Ê` a Monte-Carlo mean over grid maxima.
pub fn estimate_snr(spec: &SignalSpec, model: &NoiseModel, grid: &SpaceGrid, mc_draws: usize, seed: u64) -> Result<f64> {
    if model.sigma() == 0.0 {
        return Err(Error::InvalidParameter("snr is undefined for sigma = 0".into()));
    }
    if mc_draws < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 draws, got {mc_draws}")));
    }
    if grid != model.grid() {
        return Err(Error::GridMismatch("noise model was built for a different grid".into()));
    }
    let sup_f = if spec.kind() == SignalKind::Null { 0.0 } else { 1.0 };
    let mut rng = chunk_rng(seed, 0);
    let mut z = vec![0.0; model.dim()];
    let mut w = vec![0.0; model.dim()];
    let mut total = 0.0;
    for _ in 0..mc_draws {
        model.draw_window(&mut rng, &mut z, &mut w);
        total += w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let mean_sup = total / mc_draws as f64;
    Ok(sup_f * sup_f / (model.sigma() * mean_sup))
}
