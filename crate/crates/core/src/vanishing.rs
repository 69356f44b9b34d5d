//! Recovery when the Fourier transform of the signal has isolated zeros:
//! zero detection on the estimated power spectrum and Kotlarski integration
//! that skips small windows around the zeros and flips sign across them.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimator::{
    conjugate_fill, cumulative_trapezoid, exp_checked, log_derivative, FourierEstimate, Method, PsiDiagonal,
};
use crate::grid::{central_difference_slice, FreqGrid, Spectrum};

/// `P̂(ω) = Re Ψ̂(ω, ω)` and its central-difference derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrumEstimate {
    grid: FreqGrid,
    values: Vec<f64>,
    derivative: Vec<f64>,
}

impl PowerSpectrumEstimate {
    pub fn new(grid: FreqGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch("power spectrum must match the frequency grid".into()));
        }
        if values.len() < 3 {
            return Err(Error::InvalidParameter("power spectrum needs at least 3 points".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut derivative = vec![0.0; values.len()];
        central_difference_slice(&values, grid.spacing(), &mut derivative);
        Ok(Self {
            grid,
            values,
            derivative,
        })
    }

    pub fn from_psi(psi: &PsiDiagonal) -> Self {
        Self::new(*psi.grid(), psi.psi_hat().to_vec()).expect("diagonal is finite")
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivative(&self) -> &[f64] {
        &self.derivative
    }
}

/// Estimated zeros `ξ̂₁ < … < ξ̂_k` in `(0, band_limit]` with half-window `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSet {
    locations: Vec<f64>,
    window: f64,
    threshold: f64,
    band_limit: f64,
}

impl ZeroSet {
    /// Checks ordering, positivity and disjointness of the windows.
    pub fn new(locations: Vec<f64>, window: f64, threshold: f64, band_limit: f64) -> Result<Self> {
        if !(window > 0.0) || !(band_limit > 0.0) {
            return Err(Error::InvalidParameter("window and band limit must be positive".into()));
        }
        for pair in locations.windows(2) {
            if pair[1] - pair[0] <= 2.0 * window {
                return Err(Error::InvalidParameter(format!(
                    "zeros {} and {} are not separated by more than 2ε = {}",
                    pair[0],
                    pair[1],
                    2.0 * window
                )));
            }
        }
        if let Some(&z) = locations.iter().find(|&&z| !(z > 0.0 && z <= band_limit)) {
            return Err(Error::InvalidParameter(format!("zero {z} is outside (0, {band_limit}]")));
        }
        Ok(Self {
            locations,
            window,
            threshold,
            band_limit,
        })
    }

    pub fn empty(window: f64, band_limit: f64) -> Self {
        Self {
            locations: Vec::new(),
            window,
            threshold: 0.0,
            band_limit,
        }
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn band_limit(&self) -> f64 {
        self.band_limit
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// `k̂(ω) = #{ξ̂ ≤ ω}`.
    pub fn count_up_to(&self, omega: f64) -> usize {
        self.locations.iter().take_while(|&&z| z <= omega).count()
    }

    fn windows_fit(&self) -> Result<()> {
        for &z in &self.locations {
            let (lo, hi) = (z - self.window, z + self.window);
            if lo < 0.0 || hi > self.band_limit {
                return Err(Error::WindowOutsideBand {
                    lo,
                    hi,
                    band: self.band_limit,
                });
            }
        }
        Ok(())
    }

    /// Length of `[a, b]` outside every window.
    fn retained(&self, a: f64, b: f64) -> f64 {
        let mut len = b - a;
        for &z in &self.locations {
            let lo = (z - self.window).max(a);
            let hi = (z + self.window).min(b);
            if hi > lo {
                len -= hi - lo;
            }
        }
        len.max(0.0)
    }

    fn inside(&self, w: f64) -> bool {
        self.locations.iter().any(|&z| (w - z).abs() < self.window)
    }
}

/// Zeros of the power spectrum on `(0, band_limit]`: sign changes of `P̂′`,
/// located by linear interpolation, kept where the interpolated `P̂` is below
/// `threshold_rel · max P̂` over `[0, band_limit]`. Candidates within `2ε` of
/// each other are merged into the one with smaller `P̂`; candidates whose
/// window does not fit in `[0, band_limit]` are discarded.
pub fn detect_zeros(ps: &PowerSpectrumEstimate, threshold_rel: f64, epsilon: f64, band_limit: f64) -> Result<ZeroSet> {
    let fg = ps.grid;
    if !(band_limit > 0.0 && band_limit <= fg.max_freq()) {
        return Err(Error::InvalidParameter(format!(
            "band limit {band_limit} must lie in (0, {}]",
            fg.max_freq()
        )));
    }
    if !(threshold_rel > 0.0 && threshold_rel < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relative threshold must lie in (0, 1), got {threshold_rel}"
        )));
    }
    if !(epsilon >= 2.0 * fg.spacing() * (1.0 - 1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "window {epsilon} is narrower than two grid spacings ({})",
            2.0 * fg.spacing()
        )));
    }
    let z = fg.zero_index();
    let last = fg.last_index_at_most(band_limit);
    let p = &ps.values;
    let d = &ps.derivative;
    let peak = p[z..=last].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = threshold_rel * peak;

    let mut kept: Vec<(f64, f64)> = Vec::new();
    for k in z..last {
        if (d[k] < 0.0) == (d[k + 1] < 0.0) {
            continue;
        }
        let frac = d[k] / (d[k] - d[k + 1]);
        let xi = fg.freq(k) + frac * fg.spacing();
        if !(xi > 0.0 && xi <= band_limit) {
            continue;
        }
        let value = p[k] + frac * (p[k + 1] - p[k]);
        if value >= threshold {
            continue;
        }
        match kept.last_mut() {
            Some(prev) if xi - prev.0 <= 2.0 * epsilon => {
                if value < prev.1 {
                    *prev = (xi, value);
                }
            }
            _ => kept.push((xi, value)),
        }
    }
    let locations: Vec<f64> = kept
        .into_iter()
        .map(|(xi, _)| xi)
        .filter(|&xi| {
            let fits = xi - epsilon >= 0.0 && xi + epsilon <= band_limit;
            if !fits {
                log::debug!("dropping zero candidate {xi}: window leaves [0, {band_limit}]");
            }
            fits
        })
        .collect();
    ZeroSet::new(locations, epsilon, threshold, band_limit)
}

/// Kotlarski integration over `[0, ω]` minus the windows `(ξ̂ − ε, ξ̂ + ε)`,
/// with sign `(-1)^{k̂(ω)}`, on `[0, band_limit]`; conjugate-extended to
/// negative frequencies, zero beyond the band, multiplied by `ĉ`.
///
/// A cell cut by a window edge contributes its retained length times the
/// integrand at its endpoint(s) outside the windows. Inside a window the
/// value is held at the left edge and the sign flips at `ξ̂`.
pub fn windowed_kotlarski(psi: &PsiDiagonal, zeros: &ZeroSet, c_hat: Complex64) -> Result<FourierEstimate> {
    zeros.windows_fit()?;
    let fg = psi.grid();
    let band = zeros.band_limit();
    if band > fg.max_freq() {
        return Err(Error::InvalidParameter(format!(
            "band limit {band} exceeds the grid's maximum frequency {}",
            fg.max_freq()
        )));
    }
    let last = fg.last_index_at_most(band);
    let g = log_derivative(psi, last)?;
    let h = fg.spacing();
    let w = |k: usize| k as f64 * h;
    let cell = |k: usize| -> Option<Complex64> {
        let kept = zeros.retained(w(k), w(k + 1));
        if kept >= h * (1.0 - 1e-12) {
            return None;
        }
        if kept <= 0.0 {
            return Some(Complex64::default());
        }
        let (a, b) = (!zeros.inside(w(k)), !zeros.inside(w(k + 1)));
        let mean = match (a, b) {
            (true, true) => (g[k] + g[k + 1]) * 0.5,
            (true, false) => g[k],
            (false, true) => g[k + 1],
            (false, false) => Complex64::default(),
        };
        Some(mean * kept)
    };
    let log = cumulative_trapezoid(&g, h, cell);
    let mut half = exp_checked(&log, c_hat, fg)?;
    for (k, v) in half.iter_mut().enumerate() {
        if zeros.count_up_to(w(k)) % 2 == 1 {
            *v = -*v;
        }
    }
    let values = conjugate_fill(fg, &half);
    Ok(FourierEstimate {
        spectrum: Spectrum::new(*fg, values)?.with_real_input(true),
        zero_value: c_hat,
        method: Method::Windowed,
    })
}
