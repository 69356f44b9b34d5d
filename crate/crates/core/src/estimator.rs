//! Diagonal second-moment estimation, regularization and the Kotlarski
//! log-derivative integral for the Fourier transform of the signal.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{central_difference_slice, CftPlan, CftWork, FreqGrid, SpaceGrid, Spectrum};
use crate::synthetic::{DerivativeMode, Generator, NoiseDiag, ObservationBatch, SignalSpec, CHUNK};

/// Chunks processed per parallel round before their partial sums are merged.
const ROUND: usize = 64;

/// Running sums of `|y^ft|²`, `∂y^ft · conj(y^ft)` and `y^ft(0)`.
///
/// Only the nonnegative half of the frequency grid (plus the unpaired
/// Nyquist bin) is accumulated; the other half follows from conjugate
/// symmetry of transforms of real data.
#[derive(Debug, Clone)]
pub struct PsiAccumulator {
    plan: CftPlan,
    mode: DerivativeMode,
    count: usize,
    sum_sq: Vec<f64>,
    sum_grad: Vec<Complex64>,
    sum_zero: f64,
}

/// Per-worker scratch for [`PsiAccumulator::add_window`].
#[derive(Debug, Clone)]
pub struct AccumulatorScratch {
    work: CftWork,
    y: Vec<Complex64>,
    dy: Vec<Complex64>,
    y2: Vec<Complex64>,
    dy2: Vec<Complex64>,
}

impl PsiAccumulator {
    pub fn new(grid: SpaceGrid, mode: DerivativeMode) -> Self {
        let m = grid.len();
        Self {
            plan: CftPlan::new(grid),
            mode,
            count: 0,
            sum_sq: vec![0.0; m],
            sum_grad: vec![Complex64::default(); m],
            sum_zero: 0.0,
        }
    }

    fn empty_like(&self) -> Self {
        let m = self.sum_sq.len();
        Self {
            plan: self.plan.clone(),
            mode: self.mode,
            count: 0,
            sum_sq: vec![0.0; m],
            sum_grad: vec![Complex64::default(); m],
            sum_zero: 0.0,
        }
    }

    pub fn scratch(&self) -> AccumulatorScratch {
        let m = self.sum_sq.len();
        AccumulatorScratch {
            work: self.plan.work(),
            y: vec![Complex64::default(); m],
            dy: vec![Complex64::default(); m],
            y2: vec![Complex64::default(); m],
            dy2: vec![Complex64::default(); m],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn grid(&self) -> &SpaceGrid {
        self.plan.grid()
    }

    fn derivative(&self, window: &[f64], y: &[Complex64], dy: &mut [Complex64], work: &mut CftWork) {
        match self.mode {
            DerivativeMode::Analytic => self.plan.moment_window_into(window, dy, work),
            DerivativeMode::CentralDifference => central_difference_slice(y, self.plan.freq_grid().spacing(), dy),
        }
    }

    fn absorb(&mut self, y: &[Complex64], dy: &[Complex64]) {
        let m = self.sum_sq.len();
        let half = m / 2;
        for k in std::iter::once(0).chain(half..m) {
            self.sum_sq[k] += y[k].norm_sqr();
            self.sum_grad[k] += dy[k] * y[k].conj();
        }
        self.sum_zero += y[half].re;
        self.count += 1;
    }

    /// Adds one observation given by its samples on the observation window.
    pub fn add_window(&mut self, window: &[f64], s: &mut AccumulatorScratch) {
        self.plan.forward_window_into(window, &mut s.y, &mut s.work);
        self.derivative(window, &s.y, &mut s.dy, &mut s.work);
        self.absorb(&s.y, &s.dy);
    }

    /// Adds consecutive observations stored row-major, transforming them
    /// two at a time.
    pub fn add_windows(&mut self, data: &[f64], s: &mut AccumulatorScratch) {
        let l = self.plan.grid().window_len();
        let mut rows = data.chunks_exact(l);
        loop {
            match (rows.next(), rows.next()) {
                (Some(a), Some(b)) => {
                    self.plan.forward_window_pair_into(a, b, &mut s.y, &mut s.y2, &mut s.work);
                    match self.mode {
                        DerivativeMode::Analytic => {
                            self.plan.moment_window_pair_into(a, b, &mut s.dy, &mut s.dy2, &mut s.work)
                        }
                        DerivativeMode::CentralDifference => {
                            let h = self.plan.freq_grid().spacing();
                            central_difference_slice(&s.y, h, &mut s.dy);
                            central_difference_slice(&s.y2, h, &mut s.dy2);
                        }
                    }
                    self.absorb(&s.y, &s.dy);
                    self.absorb(&s.y2, &s.dy2);
                }
                (Some(a), None) => {
                    self.add_window(a, s);
                    break;
                }
                _ => break,
            }
        }
    }

    /// Adds the partial sums of `other` (observations appended after ours).
    pub fn merge(&mut self, other: &PsiAccumulator) {
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.sum_grad.iter_mut().zip(&other.sum_grad) {
            *a += b;
        }
        self.sum_zero += other.sum_zero;
        self.count += other.count;
    }

    /// `N⁻¹ Σ y^ft_n(0)`.
    pub fn zero_mean(&self) -> Complex64 {
        Complex64::new(self.sum_zero / self.count.max(1) as f64, 0.0)
    }

    /// Subtracts the noise contribution and returns the unregularized diagonal.
    pub fn finish(&self, noise: &NoiseDiag) -> Result<PsiDiagonal> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("no observations accumulated".into()));
        }
        let m = self.sum_sq.len();
        if noise.diag.len() != m || noise.grad.len() != m {
            return Err(Error::GridMismatch(format!(
                "noise diagonal has {} points, frequency grid has {m}",
                noise.diag.len()
            )));
        }
        if noise.mode != self.mode {
            return Err(Error::GridMismatch(
                "noise gradient was formed with a different derivative mode".into(),
            ));
        }
        let n = self.count as f64;
        let half = m / 2;
        let mut psi_hat = vec![0.0; m];
        let mut grad1 = vec![Complex64::default(); m];
        for k in std::iter::once(0).chain(half..m) {
            psi_hat[k] = self.sum_sq[k] / n - noise.diag[k];
            grad1[k] = self.sum_grad[k] / n - noise.grad[k];
        }
        // |y(-ω)|² = |y(ω)|² and ∂y(-ω)·conj y(-ω) = -conj(∂y(ω)·conj y(ω))
        for k in 1..half {
            let mirror = m - k;
            psi_hat[k] = psi_hat[mirror];
            grad1[k] = -grad1[mirror].conj();
        }
        if let Some(i) = psi_hat.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(PsiDiagonal {
            grid: self.plan.freq_grid(),
            psi_hat,
            psi_tilde: None,
            grad1,
            reg_constant: None,
            floor_scale: None,
            sample_size: self.count,
        })
    }
}

/// Accumulates `n` freshly generated observations chunk by chunk without
/// storing them. The observations are exactly those of
/// [`generate_batch`](crate::synthetic::generate_batch) with the same seed.
pub fn accumulate_generated(gen: &Generator, n: usize, seed: u64, mode: DerivativeMode) -> Result<PsiAccumulator> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    let grid = *gen.grid();
    let l = grid.window_len();
    let total = PsiAccumulator::new(grid, mode);
    let chunks: Vec<usize> = (0..n.div_ceil(CHUNK)).collect();
    let mut total = total;
    for round in chunks.chunks(ROUND) {
        let partials: Vec<PsiAccumulator> = round
            .par_iter()
            .map(|&c| {
                let count = CHUNK.min(n - c * CHUNK);
                let mut shifts = vec![0.0; count];
                let mut data = vec![0.0; count * l];
                gen.fill_chunk(seed, c as u64, &mut shifts, &mut data);
                let mut acc = total.empty_like();
                let mut s = acc.scratch();
                acc.add_windows(&data, &mut s);
                acc
            })
            .collect();
        for p in &partials {
            total.merge(p);
        }
    }
    Ok(total)
}

/// Accumulates a stored batch with the same chunking as
/// [`accumulate_generated`], so both paths give identical sums.
pub fn accumulate_batch(batch: &ObservationBatch, mode: DerivativeMode) -> PsiAccumulator {
    let proto = PsiAccumulator::new(*batch.grid(), mode);
    let chunks: Vec<usize> = (0..batch.len().div_ceil(CHUNK)).collect();
    let mut total = proto.empty_like();
    for round in chunks.chunks(ROUND) {
        let partials: Vec<PsiAccumulator> = round
            .par_iter()
            .map(|&c| {
                let mut acc = proto.empty_like();
                let mut s = acc.scratch();
                let end = ((c + 1) * CHUNK).min(batch.len());
                acc.add_windows(batch.windows_range(c * CHUNK, end), &mut s);
                acc
            })
            .collect();
        for p in &partials {
            total.merge(p);
        }
    }
    total
}

/// `Ψ̂(ω, ω)`, its first-argument gradient and, once regularized, `Ψ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiDiagonal {
    grid: FreqGrid,
    psi_hat: Vec<f64>,
    psi_tilde: Option<Vec<Complex64>>,
    grad1: Vec<Complex64>,
    reg_constant: Option<f64>,
    floor_scale: Option<f64>,
    sample_size: usize,
}

impl PsiDiagonal {
    /// Builds a diagonal from given arrays, e.g. closed-form oracle values.
    pub fn from_parts(grid: FreqGrid, psi_hat: Vec<f64>, grad1: Vec<Complex64>, sample_size: usize) -> Result<Self> {
        if psi_hat.len() != grid.len() || grad1.len() != grid.len() {
            return Err(Error::GridMismatch("diagonal arrays must match the frequency grid".into()));
        }
        if sample_size == 0 {
            return Err(Error::InvalidParameter("sample size must be >= 1".into()));
        }
        if let Some(index) = psi_hat.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(index) = grad1.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            grid,
            psi_hat,
            psi_tilde: None,
            grad1,
            reg_constant: None,
            floor_scale: None,
            sample_size,
        })
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    pub fn psi_hat(&self) -> &[f64] {
        &self.psi_hat
    }

    pub fn psi_tilde(&self) -> Option<&[Complex64]> {
        self.psi_tilde.as_deref()
    }

    pub fn grad1(&self) -> &[Complex64] {
        &self.grad1
    }

    pub fn reg_constant(&self) -> Option<f64> {
        self.reg_constant
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Magnitude floor `floor_scale / (r √N)`, once regularized.
    pub fn floor(&self) -> Option<f64> {
        Some(self.floor_scale? / (self.reg_constant? * (self.sample_size as f64).sqrt()))
    }
}

/// Population diagonal of a noiseless model: `|f^ft|²` and `(f^ft)'·conj(f^ft)`
/// from the closed-form transform.
pub fn population_psi_diag(spec: &SignalSpec, grid: &FreqGrid) -> PsiDiagonal {
    let psi = grid.freqs().into_iter().map(|w| spec.eval_ft(w).norm_sqr()).collect();
    let grad = grid
        .freqs()
        .into_iter()
        .map(|w| spec.eval_ft_derivative(w) * spec.eval_ft(w).conj())
        .collect();
    PsiDiagonal::from_parts(*grid, psi, grad, 1).expect("closed forms are finite")
}

/// Estimates `Ψ̂(ω, ω)` and `∂₁Ψ̂(ω, ω)` from a stored batch.
pub fn estimate_psi_diag(batch: &ObservationBatch, noise: &NoiseDiag) -> Result<PsiDiagonal> {
    if noise.diag.len() != batch.grid().len() {
        return Err(Error::GridMismatch(format!(
            "noise diagonal has {} points, batch grid has {}",
            noise.diag.len(),
            batch.grid().len()
        )));
    }
    accumulate_batch(batch, noise.mode).finish(noise)
}

/// `Ψ̃ = Ψ̂ / (1 ∧ |Ψ̂| / floor)` with `floor = floor_scale / (r √N)`: values
/// below the floor in magnitude are lifted to it, keeping their sign.
///
/// `floor_scale = 1` is the bare formula. The pipeline passes `Δ²`, which
/// expresses the floor in units of raw sample sums (the transform carries a
/// factor `Δ` per observation).
pub fn regularize_psi(psi: &PsiDiagonal, r: f64, floor_scale: f64) -> Result<PsiDiagonal> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("regularization constant must be > 0, got {r}")));
    }
    if !(floor_scale > 0.0 && floor_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("floor scale must be > 0, got {floor_scale}")));
    }
    let floor = floor_scale / (r * (psi.sample_size as f64).sqrt());
    let tilde = psi
        .psi_hat
        .iter()
        .map(|&p| {
            let v = if p.abs() >= floor {
                p
            } else if p < 0.0 {
                -floor
            } else {
                floor
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    let mut out = psi.clone();
    out.psi_tilde = Some(tilde);
    out.reg_constant = Some(r);
    out.floor_scale = Some(floor_scale);
    Ok(out)
}

/// Minimum `|ĉ|` accepted by [`check_zero_mass`].
pub const ZERO_MASS_TOL: f64 = 1e-6;

pub fn check_zero_mass(c_hat: Complex64) -> Result<Complex64> {
    if c_hat.norm() < ZERO_MASS_TOL || !c_hat.re.is_finite() {
        Err(Error::ZeroMass(c_hat.norm()))
    } else {
        Ok(c_hat)
    }
}

/// `ĉ = N⁻¹ Σ y^ft_n(0)`, the estimated `f^ft(0)`.
pub fn rescale_at_zero(batch: &ObservationBatch) -> Result<Complex64> {
    let dt = batch.grid().spacing();
    let total: f64 = batch.windows().map(|w| w.iter().sum::<f64>()).sum();
    check_zero_mass(Complex64::new(dt * total / batch.len() as f64, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Plain Kotlarski integration.
    Plain,
    /// Windowed integration around estimated zeros.
    Windowed,
}

/// Estimated Fourier transform of the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEstimate {
    pub spectrum: Spectrum,
    pub zero_value: Complex64,
    pub method: Method,
}

/// `grad1 / psi_tilde` on the nonnegative half of the grid, index 0 at ω = 0.
pub(crate) fn log_derivative(psi: &PsiDiagonal, last: usize) -> Result<Vec<Complex64>> {
    let tilde = psi.psi_tilde().ok_or_else(|| {
        Error::InvalidParameter("diagonal must be regularized before integration".into())
    })?;
    let z = psi.grid.zero_index();
    (z..=last)
        .map(|k| {
            let g = psi.grad1[k] / tilde[k];
            if g.re.is_finite() && g.im.is_finite() {
                Ok(g)
            } else {
                Err(Error::NonFiniteIntegrand(psi.grid.freq(k)))
            }
        })
        .collect()
}

/// Cumulative trapezoid of `g` from 0. `cell(k)` may replace the increment
/// of cell `[k, k + 1]`; `None` keeps the plain trapezoid value.
pub(crate) fn cumulative_trapezoid(
    g: &[Complex64],
    spacing: f64,
    cell: impl Fn(usize) -> Option<Complex64>,
) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(g.len());
    let mut acc = Complex64::default();
    out.push(acc);
    for k in 0..g.len().saturating_sub(1) {
        acc += cell(k).unwrap_or_else(|| (g[k] + g[k + 1]) * (0.5 * spacing));
        out.push(acc);
    }
    out
}

/// Writes `values` (nonnegative half, index 0 at ω = 0) into a full
/// ascending array and mirrors them by conjugation. Bins without a mirror
/// and bins beyond `values` are 0.
pub(crate) fn conjugate_fill(grid: &FreqGrid, values: &[Complex64]) -> Vec<Complex64> {
    let z = grid.zero_index();
    let mut out = vec![Complex64::default(); grid.len()];
    for (i, v) in values.iter().enumerate() {
        out[z + i] = *v;
        if i > 0 && i <= z {
            out[z - i] = v.conj();
        }
    }
    if let Some(v) = out.first_mut() {
        if grid.mirror(0).is_none() {
            *v = Complex64::default();
        }
    }
    out
}

pub(crate) fn exp_checked(log: &[Complex64], c_hat: Complex64, grid: &FreqGrid) -> Result<Vec<Complex64>> {
    log.iter()
        .enumerate()
        .map(|(i, t)| {
            let v = c_hat * t.exp();
            if v.re.is_finite() && v.im.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteIntegrand(grid.freq(grid.zero_index() + i)))
            }
        })
        .collect()
}

/// `f̂^ft(ω) = ĉ · exp(∫₀^ω grad1 / Ψ̃ dξ)` for ω ≥ 0 by cumulative
/// trapezoid on the frequency grid, extended to ω < 0 by conjugation.
pub fn kotlarski_integrate(psi: &PsiDiagonal, c_hat: Complex64) -> Result<FourierEstimate> {
    let last = psi.grid.len() - 1;
    kotlarski_integrate_to(psi, c_hat, last)
}

/// As [`kotlarski_integrate`] but only up to `band` (inclusive); the estimate
/// is 0 for `|ω| > band`.
pub fn kotlarski_integrate_band(psi: &PsiDiagonal, c_hat: Complex64, band: f64) -> Result<FourierEstimate> {
    let last = psi.grid.last_index_at_most(band);
    kotlarski_integrate_to(psi, c_hat, last)
}

fn kotlarski_integrate_to(psi: &PsiDiagonal, c_hat: Complex64, last: usize) -> Result<FourierEstimate> {
    let g = log_derivative(psi, last)?;
    let log = cumulative_trapezoid(&g, psi.grid.spacing(), |_| None);
    let half = exp_checked(&log, c_hat, &psi.grid)?;
    let values = conjugate_fill(&psi.grid, &half);
    Ok(FourierEstimate {
        spectrum: Spectrum::new(psi.grid, values)?.with_real_input(true),
        zero_value: c_hat,
        method: Method::Plain,
    })
}
