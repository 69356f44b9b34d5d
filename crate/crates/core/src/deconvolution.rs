//! Deconvolution kernels, band-limited spatial recovery, the relative
//! sup-norm error and oracle bandwidth selection.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FourierEstimate;
use crate::grid::{inverse_cft, SampledField, SpaceGrid, Spectrum};
use crate::synthetic::SignalSpec;

/// Fourier transform `K^ft` of a deconvolution kernel, supported on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// Indicator of `[-1, 1]`.
    #[default]
    Sinc,
    /// `(1 - ω²)^a` on `[-1, 1]`.
    Poly { a: f64 },
    /// 1 on `[-c0, c0]`, smooth transition to 0 at `|ω| = 1`.
    FlatTop { c0: f64, b: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Sinc => Ok(()),
            KernelSpec::Poly { a } if a >= 1.0 => Ok(()),
            KernelSpec::Poly { a } => Err(Error::InvalidParameter(format!(
                "polynomial kernel order must be >= 1, got {a}"
            ))),
            KernelSpec::FlatTop { c0, b } if c0 > 0.0 && c0 < 1.0 && b > 0.0 => Ok(()),
            KernelSpec::FlatTop { c0, b } => Err(Error::InvalidParameter(format!(
                "flat-top kernel needs c0 in (0, 1) and b > 0, got c0 = {c0}, b = {b}"
            ))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Sinc => write!(f, "sinc"),
            KernelSpec::Poly { a } => write!(f, "poly:{a}"),
            KernelSpec::FlatTop { c0, b } => write!(f, "flattop:{c0}:{b}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;
    /// `sinc`, `poly:<a>` or `flattop:<c0>:<b>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad kernel parameter '{t}'")))
        };
        let k = match parts.as_slice() {
            ["sinc"] => KernelSpec::Sinc,
            ["poly", a] => KernelSpec::Poly { a: num(a)? },
            ["flattop", c0, b] => KernelSpec::FlatTop {
                c0: num(c0)?,
                b: num(b)?,
            },
            _ => return Err(Error::InvalidParameter(format!("unknown kernel '{s}'"))),
        };
        k.validate()?;
        Ok(k)
    }
}

pub fn kernel_ft_eval(spec: &KernelSpec, omega: f64) -> Result<f64> {
    spec.validate()?;
    let w = omega.abs();
    Ok(match *spec {
        KernelSpec::Sinc => {
            if w <= 1.0 {
                1.0
            } else {
                0.0
            }
        }
        KernelSpec::Poly { a } => {
            if w <= 1.0 {
                (1.0 - w * w).powf(a)
            } else {
                0.0
            }
        }
        KernelSpec::FlatTop { c0, b } => {
            if w <= c0 {
                1.0
            } else if w < 1.0 {
                (-b * (-b / (w - c0).powi(2)).exp() / (w - 1.0).powi(2)).exp()
            } else {
                0.0
            }
        }
    })
}

/// Run metadata carried with a recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryParams {
    pub r: f64,
    pub n: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub signal: String,
    pub shift: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    /// Estimate on the whole padded grid; the error is measured on `[-1, 1]`.
    pub estimate: SampledField,
    pub bandwidth: f64,
    pub rel_sup_error: Option<f64>,
    pub params: Option<RecoveryParams>,
}

/// `f̂(t) = (2π)⁻¹ ∫ e^{iωt} f̂^ft(ω) K^ft(hω) dω` on `target`.
pub fn recover_signal(fe: &FourierEstimate, spec: &KernelSpec, h: f64, target: &SpaceGrid) -> Result<SampledField> {
    apply_kernel(&fe.spectrum, spec, h, target)
}

pub(crate) fn apply_kernel(spectrum: &Spectrum, spec: &KernelSpec, h: f64, target: &SpaceGrid) -> Result<SampledField> {
    spec.validate()?;
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must lie in (0, 1), got {h}")));
    }
    let fg = target.freq_grid();
    if *spectrum.grid() != fg {
        return Err(Error::GridMismatch(
            "estimate is not on the frequency grid of the target".into(),
        ));
    }
    if 1.0 / h > fg.max_freq() {
        return Err(Error::BandTooWide {
            inv_h: 1.0 / h,
            max_freq: fg.max_freq(),
            required_spacing: std::f64::consts::PI * h,
        });
    }
    let mut values: Vec<Complex64> = spectrum
        .values()
        .iter()
        .zip(fg.freqs())
        .map(|(v, w)| {
            let k = kernel_ft_eval(spec, h * w).expect("validated");
            if k == 0.0 {
                Complex64::default()
            } else {
                v * k
            }
        })
        .collect();
    if fg.mirror(0).is_none() {
        values[0] = Complex64::default();
    }
    inverse_cft(&Spectrum::new(fg, values)?, target)
}

/// `max_{|t| ≤ 1} |est(t) - f(t)|`; `f` is sup-normalized, so this is the
/// relative sup-norm error.
pub fn relative_sup_error(est: &SampledField, truth: &SignalSpec) -> f64 {
    let g = est.grid();
    g.indices_within(1.0)
        .map(|j| (est.values()[j] - truth.eval(g.point(j))).abs())
        .fold(0.0, f64::max)
}

/// 17 log-spaced bandwidths from 0.02 to 0.2.
pub fn default_bandwidth_candidates() -> Vec<f64> {
    log_spaced(0.02, 0.2, 17)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Bandwidth minimizing the error against the true signal; ties go to the
/// larger `h`.
pub fn oracle_bandwidth(
    fe: &FourierEstimate,
    spec: &KernelSpec,
    truth: &SignalSpec,
    candidates: &[f64],
) -> Result<(f64, RecoveryResult)> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no bandwidth candidates".into()));
    }
    let target = spatial_grid_of(fe);
    oracle_bandwidth_on(fe, spec, truth, candidates, &target)
}

/// As [`oracle_bandwidth`] with an explicit spatial grid.
pub fn oracle_bandwidth_on(
    fe: &FourierEstimate,
    spec: &KernelSpec,
    truth: &SignalSpec,
    candidates: &[f64],
    target: &SpaceGrid,
) -> Result<(f64, RecoveryResult)> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no bandwidth candidates".into()));
    }
    let runs: Vec<(f64, SampledField, f64)> = candidates
        .par_iter()
        .map(|&h| {
            let est = recover_signal(fe, spec, h, target)?;
            let err = relative_sup_error(&est, truth);
            Ok((h, est, err))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, run) in runs.iter().enumerate().skip(1) {
        let (b_h, b_err) = (runs[best].0, runs[best].2);
        if run.2 < b_err || (run.2 == b_err && run.0 > b_h) {
            best = i;
        }
    }
    let (h, estimate, err) = runs.into_iter().nth(best).expect("nonempty");
    Ok((
        h,
        RecoveryResult {
            estimate,
            bandwidth: h,
            rel_sup_error: Some(err),
            params: None,
        },
    ))
}

/// A spatial grid whose frequency grid is that of the estimate: observation
/// half-width 2 when the point count allows it, otherwise the unpadded grid
/// with the same points.
pub fn spatial_grid_of(fe: &FourierEstimate) -> SpaceGrid {
    let fg = fe.spectrum.grid();
    let m = fg.len();
    let dt = 2.0 * std::f64::consts::PI / (m as f64 * fg.spacing());
    let half_count = (2.0 / dt).round() as usize;
    if half_count > 0 && (half_count as f64 * dt - 2.0).abs() < 1e-9 && m.is_multiple_of(2 * half_count) {
        if let Ok(g) = SpaceGrid::new(2.0, dt, m / (2 * half_count)) {
            return g;
        }
    }
    SpaceGrid::new(dt * (m / 2) as f64, dt, 1).expect("even point count")
}
