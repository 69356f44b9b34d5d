//! Uniform spatial and frequency grids, and quadrature approximations of the
//! continuous Fourier transform built on a zero-padded FFT.
//!
//! The spatial grid is periodic: `t_j = -B·a + j·Δ` for `j = 0..M` with
//! `M = 2·B·a/Δ`, where `a` is the observation half-width and `B` the padding
//! factor. On a periodic grid the trapezoid rule over `[-B·a, B·a]` collapses
//! to the plain Riemann sum, so
//!
//! ```text
//! F(ω_k) = Δ · Σ_j f(t_j) · exp(-i ω_k t_j),     ω_k = k · 2π / (M Δ)
//! ```
//!
//! is both the trapezoid approximation of `∫ f(t) e^{-iωt} dt` and an exactly
//! invertible DFT. Because `t_0 = -MΔ/2`, the offset phase `exp(-i ω_k t_0)`
//! reduces to `(-1)^k`.
//!
//! Public frequency arrays are always in ascending order with `ω = 0` at index
//! `M / 2`; the FFT ordering stays internal.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform, symmetric, zero-padded spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    half_width: f64,
    spacing: f64,
    padding: usize,
    half_count: usize,
}

impl SpaceGrid {
    /// `half_width` is the observation support half-width, `spacing` is `Δ`
    /// (must divide `half_width`), `padding` is the factor `B`.
    pub fn new(half_width: f64, spacing: f64, padding: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if padding == 0 {
            return Err(Error::InvalidParameter("padding factor must be >= 1".into()));
        }
        let ratio = half_width / spacing;
        let half_count = ratio.round();
        if half_count < 1.0 || (ratio - half_count).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "spacing {spacing} does not divide half_width {half_width}"
            )));
        }
        Ok(Self {
            half_width,
            spacing,
            padding,
            half_count: half_count as usize,
        })
    }

    /// The grid used throughout the experiments: `[-2, 2]`, `Δ = 2^-5`, `B = 10`.
    pub fn standard() -> Self {
        Self::new(2.0, 1.0 / 32.0, 10).expect("standard grid is valid")
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    /// Number of grid points `M`.
    pub fn len(&self) -> usize {
        2 * self.padding * self.half_count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn offset(&self) -> usize {
        self.padding * self.half_count
    }

    /// Index of `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.offset()
    }

    pub fn point(&self, j: usize) -> f64 {
        (j as f64 - self.offset() as f64) * self.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    /// Indices of the observation window `[-half_width, half_width]`.
    ///
    /// With `padding == 1` the right endpoint coincides with the periodic
    /// image of the left one and is not part of the window.
    pub fn window(&self) -> std::ops::Range<usize> {
        let start = self.offset() - self.half_count;
        let end = (self.offset() + self.half_count + 1).min(self.len());
        start..end
    }

    pub fn window_len(&self) -> usize {
        self.window().len()
    }

    pub fn window_points(&self) -> Vec<f64> {
        self.window().map(|j| self.point(j)).collect()
    }

    /// Indices with `|t| <= radius`.
    pub fn indices_within(&self, radius: f64) -> std::ops::Range<usize> {
        let k = ((radius / self.spacing) + 1e-9).floor() as usize;
        let k = k.min(self.offset());
        let start = self.offset() - k;
        let end = (self.offset() + k + 1).min(self.len());
        start..end
    }

    pub fn freq_grid(&self) -> FreqGrid {
        FreqGrid {
            spacing: 2.0 * PI / (self.len() as f64 * self.spacing),
            count: self.len(),
        }
    }
}

/// Frequency grid derived from a [`SpaceGrid`], presented in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqGrid {
    spacing: f64,
    count: usize,
}

impl FreqGrid {
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Index of `ω = 0`.
    pub fn zero_index(&self) -> usize {
        self.count / 2
    }

    /// Nyquist frequency `π / Δ`; the grid covers `[-π/Δ, π/Δ)`.
    pub fn max_freq(&self) -> f64 {
        self.zero_index() as f64 * self.spacing
    }

    pub fn freq(&self, i: usize) -> f64 {
        (i as f64 - self.zero_index() as f64) * self.spacing
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.freq(i)).collect()
    }

    /// Ascending index of the mirror frequency `-ω_i`, if it is on the grid.
    pub fn mirror(&self, i: usize) -> Option<usize> {
        let z = self.zero_index();
        let m = 2 * z;
        if i == 0 || m < i {
            None
        } else {
            Some(m - i)
        }
    }

    /// Largest index `i` with `ω_i <= limit` (at least the zero index).
    pub fn last_index_at_most(&self, limit: f64) -> usize {
        let k = (limit / self.spacing + 1e-9).floor().max(0.0) as usize;
        (self.zero_index() + k).min(self.count - 1)
    }
}

/// Real samples on a [`SpaceGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: SpaceGrid,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpaceGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: SpaceGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    /// Places `window_values` on the observation window and zero-pads the rest.
    pub fn from_window(grid: SpaceGrid, window_values: &[f64]) -> Result<Self> {
        let w = grid.window();
        if window_values.len() != w.len() {
            return Err(Error::GridMismatch(format!(
                "window has {} points, got {} values",
                w.len(),
                window_values.len()
            )));
        }
        let mut values = vec![0.0; grid.len()];
        values[w].copy_from_slice(window_values);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn window_values(&self) -> &[f64] {
        &self.values[self.grid.window()]
    }
}

/// Complex values on a [`FreqGrid`], ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: FreqGrid,
    values: Vec<Complex64>,
    real_input: bool,
}

impl Spectrum {
    pub fn new(grid: FreqGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "spectrum has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            grid,
            values,
            real_input: false,
        })
    }

    pub fn from_fn(grid: FreqGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.freqs().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    /// Marks the spectrum as the transform of a real field.
    pub fn with_real_input(mut self, flag: bool) -> Self {
        self.real_input = flag;
        self
    }

    pub fn is_real_input(&self) -> bool {
        self.real_input
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Value at `ω = 0`.
    pub fn at_zero(&self) -> Complex64 {
        self.values[self.grid.zero_index()]
    }

    /// `max |v(-ω) - conj v(ω)| / max |v|` over mirrored pairs.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.values.len() {
            if let Some(m) = self.grid.mirror(i) {
                worst = worst.max((self.values[m] - self.values[i].conj()).norm());
            }
        }
        worst / scale
    }
}

/// Reusable FFT plan for one [`SpaceGrid`].
#[derive(Clone)]
pub struct CftPlan {
    grid: SpaceGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `Δ·(-1)^k` in ascending order.
    phase: Arc<Vec<f64>>,
}

impl std::fmt::Debug for CftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CftPlan").field("grid", &self.grid).finish()
    }
}

/// Scratch buffers for [`CftPlan`]; one per worker.
#[derive(Debug, Default, Clone)]
pub struct CftWork {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

#[inline]
fn alternating(k: isize) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

impl CftPlan {
    pub fn new(grid: SpaceGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.len();
        let half = (n / 2) as isize;
        let phase = (0..n as isize)
            .map(|i| grid.spacing * alternating(i - half))
            .collect();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            phase: Arc::new(phase),
        }
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn freq_grid(&self) -> FreqGrid {
        self.grid.freq_grid()
    }

    pub fn work(&self) -> CftWork {
        CftWork {
            buf: vec![Complex64::default(); self.grid.len()],
            scratch: vec![
                Complex64::default();
                self.forward
                    .get_inplace_scratch_len()
                    .max(self.inverse.get_inplace_scratch_len())
            ],
        }
    }

    /// Transform of samples supported on `start..start + values.len()`,
    /// optionally weighted by `-i t`, written to `out` in ascending order.
    fn load(&self, start: usize, a: &[f64], b: Option<&[f64]>, moment: bool, work: &mut CftWork) {
        let n = self.grid.len();
        if work.buf.len() != n {
            *work = self.work();
        }
        work.buf.iter_mut().for_each(|v| *v = Complex64::default());
        for (i, &x) in a.iter().enumerate() {
            let j = start + i;
            let y = b.map_or(0.0, |b| b[i]);
            let w = if moment { self.grid.point(j) } else { 1.0 };
            work.buf[j] = Complex64::new(x * w, y * w);
        }
        self.forward
            .process_with_scratch(&mut work.buf, &mut work.scratch);
    }

    /// Reorders FFT output to ascending frequency and applies `Δ·(-1)^k`,
    /// and the factor `-i` for moment transforms.
    fn store(&self, src: impl Fn(usize) -> Complex64, moment: bool, out: &mut [Complex64]) {
        let n = self.grid.len();
        let half = n / 2;
        debug_assert_eq!(out.len(), n);
        let (lo, hi) = out.split_at_mut(half);
        for (i, o) in lo.iter_mut().enumerate() {
            *o = src(i + half) * self.phase[i];
        }
        for (i, o) in hi.iter_mut().enumerate() {
            *o = src(i) * self.phase[half + i];
        }
        if moment {
            out.iter_mut().for_each(|v| *v = Complex64::new(v.im, -v.re));
        }
    }

    /// Transform of samples supported on `start..start + values.len()`,
    /// optionally weighted by `-i t`, written to `out` in ascending order.
    fn forward_segment(
        &self,
        start: usize,
        values: &[f64],
        moment: bool,
        out: &mut [Complex64],
        work: &mut CftWork,
    ) {
        self.load(start, values, None, moment, work);
        let buf = &work.buf;
        self.store(|q| buf[q], moment, out);
    }

    /// Two real transforms from one complex FFT of `a + i b`.
    #[allow(clippy::too_many_arguments)]
    fn forward_segment_pair(
        &self,
        start: usize,
        a: &[f64],
        b: &[f64],
        moment: bool,
        out_a: &mut [Complex64],
        out_b: &mut [Complex64],
        work: &mut CftWork,
    ) {
        let n = self.grid.len();
        self.load(start, a, Some(b), moment, work);
        let buf = &work.buf;
        let mirror = |q: usize| buf[(n - q) % n].conj();
        self.store(|q| (buf[q] + mirror(q)) * 0.5, moment, out_a);
        self.store(
            |q| {
                let d = (buf[q] - mirror(q)) * 0.5;
                Complex64::new(d.im, -d.re)
            },
            moment,
            out_b,
        );
    }

    /// Transforms of two window-supported fields at once.
    pub fn forward_window_pair_into(
        &self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [Complex64],
        out_b: &mut [Complex64],
        work: &mut CftWork,
    ) {
        let start = self.grid.window().start;
        self.forward_segment_pair(start, a, b, false, out_a, out_b, work)
    }

    /// Moment transforms of two window-supported fields at once.
    pub fn moment_window_pair_into(
        &self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [Complex64],
        out_b: &mut [Complex64],
        work: &mut CftWork,
    ) {
        let start = self.grid.window().start;
        self.forward_segment_pair(start, a, b, true, out_a, out_b, work)
    }

    /// Transform of a full-length field.
    pub fn forward_into(&self, values: &[f64], out: &mut [Complex64], work: &mut CftWork) {
        self.forward_segment(0, values, false, out, work)
    }

    /// Transform of a field that vanishes outside the observation window.
    pub fn forward_window_into(
        &self,
        window_values: &[f64],
        out: &mut [Complex64],
        work: &mut CftWork,
    ) {
        let start = self.grid.window().start;
        self.forward_segment(start, window_values, false, out, work)
    }

    /// Transform of `(-i t)·f(t)` for a window-supported field.
    pub fn moment_window_into(
        &self,
        window_values: &[f64],
        out: &mut [Complex64],
        work: &mut CftWork,
    ) {
        let start = self.grid.window().start;
        self.forward_segment(start, window_values, true, out, work)
    }

    pub fn moment_into(&self, values: &[f64], out: &mut [Complex64], work: &mut CftWork) {
        self.forward_segment(0, values, true, out, work)
    }

    /// `(Δω / 2π) Σ_k v_k exp(i ω_k t_j)` for every grid point; returns the
    /// complex result so callers can inspect the imaginary residual.
    pub fn inverse_complex(&self, values: &[Complex64], work: &mut CftWork) -> Vec<Complex64> {
        let n = self.grid.len();
        if work.buf.len() != n {
            *work = self.work();
        }
        let half = n / 2;
        for (i, &v) in values.iter().enumerate() {
            let k = i as isize - half as isize;
            work.buf[(i + half) % n] = v * alternating(k);
        }
        self.inverse
            .process_with_scratch(&mut work.buf, &mut work.scratch);
        let scale = self.grid.freq_grid().spacing / (2.0 * PI);
        work.buf.iter().map(|v| v * scale).collect()
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Quadrature approximation of `∫ f(t) e^{-iωt} dt` on the derived frequency grid.
pub fn forward_cft(field: &SampledField) -> Result<Spectrum> {
    check_finite(field.values())?;
    let plan = CftPlan::new(*field.grid());
    let mut out = vec![Complex64::default(); field.grid().len()];
    plan.forward_into(field.values(), &mut out, &mut plan.work());
    Ok(Spectrum::new(plan.freq_grid(), out)?.with_real_input(true))
}

/// Transform of `(-i t) f(t)`: the exact frequency-derivative of [`forward_cft`].
pub fn moment_weighted_cft(field: &SampledField) -> Result<Spectrum> {
    check_finite(field.values())?;
    let plan = CftPlan::new(*field.grid());
    let mut out = vec![Complex64::default(); field.grid().len()];
    plan.moment_into(field.values(), &mut out, &mut plan.work());
    Spectrum::new(plan.freq_grid(), out)
}

/// Relative imaginary residual tolerated by [`inverse_cft`].
pub const INVERSE_IMAG_TOL: f64 = 1e-8;

/// Quadrature inverse `(2π)^{-1} ∫ e^{iωt} F(ω) dω` onto `target`.
pub fn inverse_cft(spec: &Spectrum, target: &SpaceGrid) -> Result<SampledField> {
    if *spec.grid() != target.freq_grid() {
        return Err(Error::GridMismatch(
            "spectrum grid is not the frequency grid of the target".into(),
        ));
    }
    let plan = CftPlan::new(*target);
    let complex = plan.inverse_complex(spec.values(), &mut plan.work());
    real_part_checked(*target, complex)
}

pub(crate) fn real_part_checked(grid: SpaceGrid, complex: Vec<Complex64>) -> Result<SampledField> {
    let scale = complex.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let worst = complex.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if scale > 0.0 && worst > INVERSE_IMAG_TOL * scale {
        return Err(Error::NotHermitian {
            residual: worst / scale,
        });
    }
    SampledField::new(grid, complex.into_iter().map(|v| v.re).collect())
}

/// Second-order central differences with spacing `h`; one-sided
/// second-order stencils at both ends.
pub fn central_difference_slice<T>(values: &[T], h: f64, out: &mut [T])
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let n = values.len();
    assert!(n >= 3 && out.len() == n);
    let inv = 1.0 / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) * inv;
    }
    out[0] = (values[1] * 4.0 - values[0] * 3.0 - values[2]) * inv;
    out[n - 1] = (values[n - 1] * 3.0 - values[n - 2] * 4.0 + values[n - 3]) * inv;
}

pub fn central_difference(spec: &Spectrum) -> Result<Spectrum> {
    let n = spec.values().len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "central differences need at least 3 points, got {n}"
        )));
    }
    let mut out = vec![Complex64::default(); n];
    central_difference_slice(spec.values(), spec.grid().spacing(), &mut out);
    Spectrum::new(*spec.grid(), out)
}
