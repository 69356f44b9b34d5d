//! Kotlarski identification from the joint characteristic function of two
//! replicated measurements `Z₁ = X₀ + X₁`, `Z₂ = X₀ + X₂` in any dimension.
//!
//! With `ψ(ω₁, ω₂) = E exp(i ω₁·Z₁ + i ω₂·Z₂)` and independent components,
//!
//! ```text
//! φ₀(ω) = exp(-i ω·E[X₁] + ∫₀¹ ∇₁ψ(0, αω)·ω / ψ(0, αω) dα)
//! φ₁(ω) = exp(-i ω·E[X₀] + ∫₀¹ ∇₁ψ(αω, -αω)·ω / ψ(αω, -αω) dα)
//! ```
//!
//! The integrals are log-derivatives, so no complex logarithm (and no branch
//! tracking) is needed.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deconvolution::{apply_kernel, KernelSpec};
use crate::error::{Error, Result};
use crate::grid::{FreqGrid, SampledField, SpaceGrid, Spectrum};
use crate::synthetic::chunk_rng;

/// Smallest `|ψ|` accepted along a ray.
pub const VANISHING_TOL: f64 = 1e-8;

/// A joint characteristic function `ψ(ω₁, ω₂)` on `ℝᵈ × ℝᵈ`.
pub trait CFEvaluator: Sync {
    fn dimension(&self) -> usize;

    fn eval(&self, w1: &[f64], w2: &[f64]) -> Complex64;

    /// `∇₁ψ`; `None` selects central differences.
    fn grad1(&self, _w1: &[f64], _w2: &[f64]) -> Option<Vec<Complex64>> {
        None
    }
}

/// `∇₁ψ` from the evaluator, or central differences with step
/// `10⁻⁴ (1 + ‖(ω₁, ω₂)‖)`.
pub fn grad1_or_fd(cf: &dyn CFEvaluator, w1: &[f64], w2: &[f64]) -> Vec<Complex64> {
    if let Some(g) = cf.grad1(w1, w2) {
        return g;
    }
    let norm = w1.iter().chain(w2).map(|v| v * v).sum::<f64>().sqrt();
    let h = 1e-4 * (1.0 + norm);
    let mut p = w1.to_vec();
    (0..w1.len())
        .map(|j| {
            p[j] = w1[j] + h;
            let up = cf.eval(&p, w2);
            p[j] = w1[j] - h;
            let down = cf.eval(&p, w2);
            p[j] = w1[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `N` paired measurements in `ℝᵈ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSampleBatch {
    dim: usize,
    z1: Vec<f64>,
    z2: Vec<f64>,
    seed: u64,
}

impl PairedSampleBatch {
    pub fn new(dim: usize, z1: Vec<f64>, z2: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if z1.len() != z2.len() || !z1.len().is_multiple_of(dim) || z1.is_empty() {
            return Err(Error::GridMismatch(
                "paired samples must have matching, nonzero row counts".into(),
            ));
        }
        if let Some(index) = z1.iter().chain(&z2).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dim, z1, z2, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.z1.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.z1.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Distribution of one coordinate of a component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComponentDist {
    Gaussian { std: f64 },
    Laplace { scale: f64 },
    Point { at: f64 },
}

impl ComponentDist {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ComponentDist::Gaussian { std } => std * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ComponentDist::Laplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            ComponentDist::Point { at } => at,
        }
    }

    /// Characteristic function `E e^{iωX}` of one coordinate.
    pub fn cf(&self, w: f64) -> Complex64 {
        match *self {
            ComponentDist::Gaussian { std } => Complex64::new((-0.5 * std * std * w * w).exp(), 0.0),
            ComponentDist::Laplace { scale } => Complex64::new(1.0 / (1.0 + scale * scale * w * w), 0.0),
            ComponentDist::Point { at } => Complex64::from_polar(1.0, w * at),
        }
    }

    /// Derivative of [`cf`](Self::cf).
    pub fn cf_derivative(&self, w: f64) -> Complex64 {
        match *self {
            ComponentDist::Gaussian { std } => self.cf(w) * (-std * std * w),
            ComponentDist::Laplace { scale } => {
                let s2 = scale * scale;
                Complex64::new(-2.0 * s2 * w / (1.0 + s2 * w * w).powi(2), 0.0)
            }
            ComponentDist::Point { at } => self.cf(w) * Complex64::new(0.0, at),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ComponentDist::Point { at } => at,
            _ => 0.0,
        }
    }
}

/// Draws `Z₁ = X₀ + X₁`, `Z₂ = X₀ + X₂` with independent coordinates;
/// `X₁` and `X₂` share the distribution `noise`.
pub fn sample_replicated(n: usize, dim: usize, x0: ComponentDist, noise: ComponentDist, seed: u64) -> Result<PairedSampleBatch> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one pair".into()));
    }
    let mut rng = chunk_rng(seed, 0);
    let mut z1 = Vec::with_capacity(n * dim);
    let mut z2 = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        let x = x0.draw(&mut rng);
        z1.push(x + noise.draw(&mut rng));
        z2.push(x + noise.draw(&mut rng));
    }
    PairedSampleBatch::new(dim, z1, z2, seed)
}

/// `ψ̂(ω₁, ω₂) = N⁻¹ Σ exp(i ω₁·Z_{n,1} + i ω₂·Z_{n,2})` with its exact gradient.
#[derive(Debug, Clone)]
pub struct EmpiricalCf {
    batch: PairedSampleBatch,
}

/// Rows per parallel partial sum.
const CF_BLOCK: usize = 4096;

impl EmpiricalCf {
    fn sums(&self, w1: &[f64], w2: &[f64], with_grad: bool) -> (Complex64, Vec<Complex64>) {
        let d = self.batch.dim;
        let rows = self.batch.len();
        let blocks: Vec<(Complex64, Vec<Complex64>)> = (0..rows.div_ceil(CF_BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut s = Complex64::default();
                let mut g = vec![Complex64::default(); if with_grad { d } else { 0 }];
                for r in b * CF_BLOCK..((b + 1) * CF_BLOCK).min(rows) {
                    let z1 = &self.batch.z1[r * d..(r + 1) * d];
                    let z2 = &self.batch.z2[r * d..(r + 1) * d];
                    let phase: f64 = (0..d).map(|j| w1[j] * z1[j] + w2[j] * z2[j]).sum();
                    let e = Complex64::from_polar(1.0, phase);
                    s += e;
                    for (gj, &zj) in g.iter_mut().zip(z1) {
                        *gj += e * Complex64::new(0.0, zj);
                    }
                }
                (s, g)
            })
            .collect();
        let n = rows as f64;
        let mut s = Complex64::default();
        let mut g = vec![Complex64::default(); if with_grad { d } else { 0 }];
        for (bs, bg) in blocks {
            s += bs;
            for (a, b) in g.iter_mut().zip(bg) {
                *a += b;
            }
        }
        (s / n, g.into_iter().map(|v| v / n).collect())
    }
}

impl CFEvaluator for EmpiricalCf {
    fn dimension(&self) -> usize {
        self.batch.dim
    }

    fn eval(&self, w1: &[f64], w2: &[f64]) -> Complex64 {
        self.sums(w1, w2, false).0
    }

    fn grad1(&self, w1: &[f64], w2: &[f64]) -> Option<Vec<Complex64>> {
        Some(self.sums(w1, w2, true).1)
    }
}

pub fn empirical_joint_cf(batch: &PairedSampleBatch) -> EmpiricalCf {
    EmpiricalCf { batch: batch.clone() }
}

/// Exact joint characteristic function of the replicated model with
/// independent coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ReplicatedCf {
    pub dim: usize,
    pub x0: ComponentDist,
    pub x1: ComponentDist,
    pub x2: ComponentDist,
}

impl CFEvaluator for ReplicatedCf {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn eval(&self, w1: &[f64], w2: &[f64]) -> Complex64 {
        (0..self.dim)
            .map(|j| self.x0.cf(w1[j] + w2[j]) * self.x1.cf(w1[j]) * self.x2.cf(w2[j]))
            .product()
    }

    fn grad1(&self, w1: &[f64], w2: &[f64]) -> Option<Vec<Complex64>> {
        let factors: Vec<Complex64> = (0..self.dim)
            .map(|j| self.x0.cf(w1[j] + w2[j]) * self.x1.cf(w1[j]) * self.x2.cf(w2[j]))
            .collect();
        Some(
            (0..self.dim)
                .map(|j| {
                    let others: Complex64 = (0..self.dim).filter(|&k| k != j).map(|k| factors[k]).product();
                    let d = self.x0.cf_derivative(w1[j] + w2[j]) * self.x1.cf(w1[j]) * self.x2.cf(w2[j])
                        + self.x0.cf(w1[j] + w2[j]) * self.x1.cf_derivative(w1[j]) * self.x2.cf(w2[j]);
                    d * others
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayMode {
    /// Characteristic function of the common component `X₀`.
    Phi0,
    /// Characteristic function of the first error `X₁`.
    Phi1,
}

fn ray_integrand(cf: &dyn CFEvaluator, mode: RayMode, omega: &[f64], alpha: f64) -> Result<Complex64> {
    let a: Vec<f64> = omega.iter().map(|w| alpha * w).collect();
    let zero = vec![0.0; omega.len()];
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    let (w1, w2) = match mode {
        RayMode::Phi0 => (&zero, &a),
        RayMode::Phi1 => (&a, &neg),
    };
    let psi = cf.eval(w1, w2);
    if !(psi.norm() > VANISHING_TOL) {
        return Err(Error::VanishingCf(psi.norm(), alpha));
    }
    let g = grad1_or_fd(cf, w1, w2);
    let dot: Complex64 = g.iter().zip(omega).map(|(gj, wj)| gj * *wj).sum();
    Ok(dot / psi)
}

/// `φ₀(ω)` or `φ₁(ω)` by the trapezoid rule in `α` on `nodes` equispaced
/// points of `[0, 1]`; `mean_vector` is `E[X₁]` for `Phi0` and `E[X₀]` for `Phi1`.
pub fn ray_exp_integral(
    cf: &dyn CFEvaluator,
    mode: RayMode,
    omega: &[f64],
    mean_vector: &[f64],
    nodes: usize,
) -> Result<Complex64> {
    let d = cf.dimension();
    if omega.len() != d || mean_vector.len() != d {
        return Err(Error::GridMismatch(format!(
            "frequency and mean must have dimension {d}"
        )));
    }
    if nodes < 16 {
        return Err(Error::InvalidParameter(format!("need at least 16 nodes, got {nodes}")));
    }
    if omega.iter().all(|&w| w == 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let step = 1.0 / (nodes - 1) as f64;
    let vals: Vec<Complex64> = (0..nodes)
        .map(|j| ray_integrand(cf, mode, omega, j as f64 * step))
        .collect::<Result<_>>()?;
    let mut integral = Complex64::default();
    for j in 0..nodes - 1 {
        integral += (vals[j] + vals[j + 1]) * (0.5 * step);
    }
    let mean: f64 = omega.iter().zip(mean_vector).map(|(w, m)| w * m).sum();
    let out = (integral - Complex64::new(0.0, mean)).exp();
    if out.re.is_finite() && out.im.is_finite() {
        Ok(out)
    } else {
        Err(Error::NonFiniteIntegrand(omega.iter().map(|v| v * v).sum::<f64>().sqrt()))
    }
}

/// One-dimensional `φ` on the nonnegative frequencies of `grid` up to `band`
/// (conjugate-extended, zero beyond the band). Node `j` of the ray to `ω_k`
/// is the grid frequency `ω_j`, so all rays share one cumulative sum.
pub fn phi_on_grid(cf: &dyn CFEvaluator, mode: RayMode, grid: &FreqGrid, band: f64, mean: f64) -> Result<Spectrum> {
    if cf.dimension() != 1 {
        return Err(Error::InvalidParameter("grid evaluation is one-dimensional".into()));
    }
    let z = grid.zero_index();
    let last = grid.last_index_at_most(band);
    let h = grid.spacing();
    // integrand of d/dω log φ at ω_k: ∇₁ψ / ψ along the ray (unit direction)
    let g: Vec<Complex64> = (z..=last)
        .map(|k| ray_integrand(cf, mode, &[1.0], grid.freq(k)))
        .collect::<Result<_>>()?;
    let mut values = vec![Complex64::default(); grid.len()];
    let mut acc = Complex64::default();
    for (i, k) in (z..=last).enumerate() {
        if i > 0 {
            acc += (g[i - 1] + g[i]) * (0.5 * h);
        }
        let w = grid.freq(k);
        let v = (acc - Complex64::new(0.0, w * mean)).exp();
        values[k] = v;
        if i > 0 && i <= z {
            values[z - i] = v.conj();
        }
    }
    Spectrum::new(*grid, values)
}

/// Density estimate from characteristic-function values `E e^{iωX}` on the
/// frequency grid of `target`.
pub fn deconvolve_phi(values: &Spectrum, spec: &KernelSpec, h: f64, target: &SpaceGrid) -> Result<SampledField> {
    // the density's transform uses e^{-iωt}: f^ft(ω) = φ(-ω) = conj φ(ω)
    let reflected: Vec<Complex64> = values.values().iter().map(|v| v.conj()).collect();
    apply_kernel(&Spectrum::new(*values.grid(), reflected)?, spec, h, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian2() -> ReplicatedCf {
        ReplicatedCf {
            dim: 2,
            x0: ComponentDist::Gaussian { std: 1.0 },
            x1: ComponentDist::Gaussian { std: 0.5 },
            x2: ComponentDist::Gaussian { std: 0.5 },
        }
    }

    /// Exact evaluator without a gradient, to exercise the fallback.
    struct NoGrad(ReplicatedCf);
    impl CFEvaluator for NoGrad {
        fn dimension(&self) -> usize {
            self.0.dim
        }
        fn eval(&self, w1: &[f64], w2: &[f64]) -> Complex64 {
            self.0.eval(w1, w2)
        }
    }

    #[test]
    fn exact_evaluator_is_one_at_origin() {
        assert!((gaussian2().eval(&[0.0, 0.0], &[0.0, 0.0]) - 1.0).norm() < 1e-15);
    }

    #[test]
    fn gaussian_phi0_in_two_dimensions() {
        let cf = gaussian2();
        let v = ray_exp_integral(&cf, RayMode::Phi0, &[1.0, 1.0], &[0.0, 0.0], 256).unwrap();
        assert!((v - (-1.0f64).exp()).norm() < 1e-6);
        let fd = ray_exp_integral(&NoGrad(cf), RayMode::Phi0, &[1.0, 1.0], &[0.0, 0.0], 256).unwrap();
        assert!((fd - (-1.0f64).exp()).norm() < 1e-6);
        let p1 = ray_exp_integral(&cf, RayMode::Phi1, &[1.0, -0.5], &[0.0, 0.0], 256).unwrap();
        assert!((p1 - (-0.125 * 1.25f64).exp()).norm() < 1e-6);
        for mode in [RayMode::Phi0, RayMode::Phi1] {
            assert_eq!(ray_exp_integral(&cf, mode, &[0.0, 0.0], &[0.0, 0.0], 16).unwrap(), Complex64::new(1.0, 0.0));
        }
        assert!(ray_exp_integral(&cf, RayMode::Phi0, &[1.0, 1.0], &[0.0, 0.0], 8).is_err());
    }

    #[test]
    fn mean_term_recovers_shifted_components() {
        // X₀ at 0.7, X₁ at 0.4: each ray picks up i ω times the other mean
        let cf = ReplicatedCf {
            dim: 1,
            x0: ComponentDist::Point { at: 0.7 },
            x1: ComponentDist::Point { at: 0.4 },
            x2: ComponentDist::Laplace { scale: 0.3 },
        };
        let w = 1.3;
        let p0 = ray_exp_integral(&cf, RayMode::Phi0, &[w], &[0.4], 256).unwrap();
        assert!((p0 - Complex64::from_polar(1.0, 0.7 * w)).norm() < 1e-6);
        let p1 = ray_exp_integral(&cf, RayMode::Phi1, &[w], &[0.7], 256).unwrap();
        assert!((p1 - Complex64::from_polar(1.0, 0.4 * w)).norm() < 1e-6);
    }

    #[test]
    fn vanishing_cf_is_reported() {
        let cf = ReplicatedCf {
            dim: 1,
            x0: ComponentDist::Gaussian { std: 10.0 },
            x1: ComponentDist::Gaussian { std: 0.1 },
            x2: ComponentDist::Gaussian { std: 0.1 },
        };
        assert!(matches!(
            ray_exp_integral(&cf, RayMode::Phi0, &[3.0], &[0.0], 64),
            Err(Error::VanishingCf(..))
        ));
    }

    #[test]
    fn classical_identity_in_one_dimension() {
        let cf = ReplicatedCf {
            dim: 1,
            x0: ComponentDist::Laplace { scale: 0.8 },
            x1: ComponentDist::Gaussian { std: 0.3 },
            x2: ComponentDist::Gaussian { std: 0.3 },
        };
        let w = 2.5;
        let nodes = 200;
        let ray = ray_exp_integral(&cf, RayMode::Phi0, &[w], &[0.0], nodes).unwrap();
        // same trapezoid written directly in ω' = αω
        let h = w / (nodes - 1) as f64;
        let f = |x: f64| cf.grad1(&[0.0], &[x]).unwrap()[0] / cf.eval(&[0.0], &[x]);
        let mut s = Complex64::default();
        for j in 0..nodes - 1 {
            s += (f(j as f64 * h) + f((j + 1) as f64 * h)) * (0.5 * h);
        }
        assert!((ray - s.exp()).norm() < 1e-8);
    }

    #[test]
    fn node_doubling_converges_at_second_order() {
        let cf = ReplicatedCf {
            dim: 1,
            x0: ComponentDist::Laplace { scale: 0.8 },
            x1: ComponentDist::Gaussian { std: 0.3 },
            x2: ComponentDist::Gaussian { std: 0.3 },
        };
        let w = 2.0;
        let exact = 1.0 / (1.0 + 0.64 * w * w);
        let err = |n: usize| (ray_exp_integral(&cf, RayMode::Phi0, &[w], &[0.0], n).unwrap() - exact).norm();
        for n in [17, 33, 65] {
            let (coarse, fine) = (err(n), err(2 * n - 1));
            assert!(coarse / fine >= 3.5, "{n}: {coarse} / {fine}");
        }
    }

    #[test]
    fn empirical_cf_properties() {
        let one = PairedSampleBatch::new(1, vec![0.0], vec![0.0], 0).unwrap();
        let cf = empirical_joint_cf(&one);
        assert_eq!(cf.eval(&[2.0], &[-1.0]), Complex64::new(1.0, 0.0));

        let b = sample_replicated(100_000, 1, ComponentDist::Gaussian { std: 1.0 }, ComponentDist::Point { at: 0.0 }, 3)
            .unwrap();
        let cf = empirical_joint_cf(&b);
        assert_eq!(cf.eval(&[0.0], &[0.0]), Complex64::new(1.0, 0.0));
        for i in 0..=30 {
            let w = -3.0 + 0.2 * i as f64;
            assert!((cf.eval(&[w], &[0.0]) - (-0.5 * w * w).exp()).norm() < 0.02);
            let a = cf.eval(&[w], &[0.3]);
            let b = cf.eval(&[-w], &[-0.3]);
            assert_eq!(a, b.conj());
            assert!(a.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn empirical_gradient_matches_differences() {
        let b = sample_replicated(2000, 2, ComponentDist::Gaussian { std: 1.0 }, ComponentDist::Laplace { scale: 0.3 }, 9)
            .unwrap();
        let cf = empirical_joint_cf(&b);
        let (w1, w2) = ([0.4, -0.2], [0.1, 0.7]);
        let exact = cf.grad1(&w1, &w2).unwrap();
        struct Plain<'a>(&'a EmpiricalCf);
        impl CFEvaluator for Plain<'_> {
            fn dimension(&self) -> usize {
                self.0.dimension()
            }
            fn eval(&self, a: &[f64], b: &[f64]) -> Complex64 {
                self.0.eval(a, b)
            }
        }
        let fd = grad1_or_fd(&Plain(&cf), &w1, &w2);
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn empirical_phi0_with_laplace_errors() {
        let b = sample_replicated(100_000, 1, ComponentDist::Gaussian { std: 1.0 }, ComponentDist::Laplace { scale: 0.3 }, 21)
            .unwrap();
        let cf = empirical_joint_cf(&b);
        let v = ray_exp_integral(&cf, RayMode::Phi0, &[1.0], &[0.0], 64).unwrap();
        assert!((v - (-0.5f64).exp()).norm() < 0.03);
    }

    #[test]
    fn phi1_matches_diagonal_kotlarski() {
        use crate::estimator::{kotlarski_integrate, population_psi_diag, regularize_psi};
        use crate::synthetic::{SignalKind, SignalSpec};
        // ψ(ω₁, ω₂) = Ψ(ω₁, -ω₂) with Ψ(u, v) = f(u) conj f(v) p(u - v), p the
        // transform of the uniform shift law
        struct Mra(SignalSpec);
        impl CFEvaluator for Mra {
            fn dimension(&self) -> usize {
                1
            }
            fn eval(&self, w1: &[f64], w2: &[f64]) -> Complex64 {
                let (u, v) = (w1[0], -w2[0]);
                let d = u - v;
                let pz = if d.abs() < 1e-12 { 1.0 } else { d.sin() / d };
                self.0.eval_ft(u) * self.0.eval_ft(v).conj() * pz
            }
            fn grad1(&self, w1: &[f64], w2: &[f64]) -> Option<Vec<Complex64>> {
                let (u, v) = (w1[0], -w2[0]);
                let d = u - v;
                let (pz, dpz) = if d.abs() < 1e-6 {
                    (1.0, -d / 3.0)
                } else {
                    (d.sin() / d, (d * d.cos() - d.sin()) / (d * d))
                };
                let fu = self.0.eval_ft(u);
                let fv = self.0.eval_ft(v).conj();
                Some(vec![self.0.eval_ft_derivative(u) * fv * pz + fu * fv * dpz])
            }
        }
        let s = SignalSpec::new(SignalKind::F2);
        let fg = crate::grid::SpaceGrid::standard().freq_grid();
        let psi = regularize_psi(&population_psi_diag(&s, &fg), 1e9, 1e-30).unwrap();
        let alg1 = kotlarski_integrate(&psi, Complex64::new(1.0, 0.0)).unwrap();
        let z = fg.zero_index();
        for k in 15..=127 {
            let w = fg.freq(z + k);
            let ray = ray_exp_integral(&Mra(s), RayMode::Phi1, &[w], &[0.0], k + 1).unwrap();
            assert!((ray - alg1.spectrum.values()[z + k]).norm() < 1e-6, "ω={w}");
            // conjugate symmetry on the exact evaluator
            let neg = ray_exp_integral(&Mra(s), RayMode::Phi1, &[-w], &[0.0], k + 1).unwrap();
            assert!((neg - ray.conj()).norm() < 1e-8);
        }
        // the division form φ₁ = ψ(ω, 0) / φ₀(ω) agrees with the ray on a Gaussian model
        let cf = gaussian2();
        let w = [0.6, -0.4];
        let phi0 = ray_exp_integral(&cf, RayMode::Phi0, &w, &[0.0, 0.0], 128).unwrap();
        let phi1 = ray_exp_integral(&cf, RayMode::Phi1, &w, &[0.0, 0.0], 128).unwrap();
        assert!((cf.eval(&w, &[0.0, 0.0]) / phi0 - phi1).norm() < 1e-8);
    }

    #[test]
    fn phi_on_grid_matches_ray() {
        let cf = ReplicatedCf {
            dim: 1,
            x0: ComponentDist::Laplace { scale: 0.8 },
            x1: ComponentDist::Gaussian { std: 0.3 },
            x2: ComponentDist::Gaussian { std: 0.3 },
        };
        let g = SpaceGrid::new(8.0, 1.0 / 16.0, 4).unwrap();
        let fg = g.freq_grid();
        let spec = phi_on_grid(&cf, RayMode::Phi0, &fg, 5.0, 0.0).unwrap();
        let z = fg.zero_index();
        for k in [15usize, 30, 50] {
            let w = fg.freq(z + k);
            let ray = ray_exp_integral(&cf, RayMode::Phi0, &[w], &[0.0], k + 1).unwrap();
            assert!((ray - spec.values()[z + k]).norm() < 1e-12);
        }
        assert_eq!(spec.conjugate_symmetry_residual(), 0.0);
    }

    #[test]
    fn gaussian_density_from_exact_phi() {
        let g = SpaceGrid::new(8.0, 1.0 / 16.0, 4).unwrap();
        let fg = g.freq_grid();
        let phi = Spectrum::from_fn(fg, |w| Complex64::new((-0.5 * w * w).exp(), 0.0)).unwrap();
        let dens = deconvolve_phi(&phi, &KernelSpec::Sinc, 0.05, &g).unwrap();
        for j in g.indices_within(4.0) {
            let t = g.point(j);
            let exact = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
            assert!((dens.values()[j] - exact).abs() < 1e-2);
        }
        let zero = Spectrum::new(fg, vec![Complex64::default(); fg.len()]).unwrap();
        assert!(deconvolve_phi(&zero, &KernelSpec::Sinc, 0.05, &g).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn point_mass_gives_sinc_ringing() {
        let g = SpaceGrid::new(8.0, 1.0 / 16.0, 4).unwrap();
        let fg = g.freq_grid();
        let h = 0.2;
        let one = Spectrum::from_fn(fg, |_| Complex64::new(1.0, 0.0)).unwrap();
        let dens = deconvolve_phi(&one, &KernelSpec::Sinc, h, &g).unwrap();
        let mass: f64 = dens.values().iter().sum::<f64>() * g.spacing();
        assert!((mass - 1.0).abs() < 1e-9);
        let j0 = g.zero_index();
        // peak (2π)⁻¹ Σ_{|ω|≤1/h} Δω ≈ 1/(πh)
        assert!((dens.values()[j0] - 1.0 / (PI * h)).abs() < 0.05 / (PI * h));
        let t = g.point(j0 + 20);
        assert!((dens.values()[j0 + 20] - (t / h).sin() / (PI * t)).abs() < 0.05);
    }
}
