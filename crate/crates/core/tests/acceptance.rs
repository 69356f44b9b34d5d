//! End-to-end acceptance checks. Each test writes one PASS/FAIL line to
//! stdout (uncaptured) and then asserts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fmra::estimator::{kotlarski_integrate, population_psi_diag, regularize_psi, PsiDiagonal};
use fmra::grid::{forward_cft, inverse_cft, SampledField, SpaceGrid};
use fmra::harness::{
    fit_loglog_slope, mean_errors, preset, replicate_seed, run_figure, run_pipeline, run_recovery, ExperimentConfig,
    HMode, PointContext, ResultRow, RunOptions, SlopeAxis,
};
use fmra::kotlarski_nd::{empirical_joint_cf, ray_exp_integral, sample_replicated, ComponentDist, RayMode, ReplicatedCf};
use fmra::synthetic::{covariance_matrix, sample_noise, NoiseModel, ShiftKind, SignalKind, SignalSpec};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("[{}] criterion {id:>2} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let out = std::io::stdout();
    let mut out = out.lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

const DESK_N: [usize; 3] = [1 << 12, 1 << 14, 1 << 16];
const SMOOTH: [SignalKind; 3] = [SignalKind::F1, SignalKind::F2, SignalKind::F3];

fn temp_csv(tag: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(format!("{tag}.csv"));
    (dir, path)
}

fn run(cfgs: &[ExperimentConfig], tag: &str) -> Vec<ResultRow> {
    let (_dir, path) = temp_csv(tag);
    run_figure(cfgs, &path, &RunOptions::default()).unwrap()
}

/// Mean error per (signal, shift) and x.
fn means(rows: &[ResultRow], axis: SlopeAxis) -> BTreeMap<(String, String), Vec<(f64, f64)>> {
    mean_errors(rows, axis)
        .into_iter()
        .map(|((_, s, z), v)| ((s, z), v))
        .collect()
}

/// FIG2 at desk scale: σ = 1, λ = 0.1, both shift laws, N ∈ {2¹², 2¹⁴, 2¹⁶}, 5 replicates.
fn fig2_desk() -> &'static (Vec<ResultRow>, Duration) {
    static ROWS: OnceLock<(Vec<ResultRow>, Duration)> = OnceLock::new();
    ROWS.get_or_init(|| {
        let start = Instant::now();
        let mut cfgs = preset("fig2").unwrap();
        for c in &mut cfgs {
            c.replicates = 5;
            c.n_list = DESK_N.to_vec();
        }
        (run(&cfgs, "fig2"), start.elapsed())
    })
}

#[test]
fn criterion_01_oracle_kotlarski_exactness() {
    let start = Instant::now();
    let spec = SignalSpec::new(SignalKind::F2);
    let fg = SpaceGrid::standard().freq_grid();
    // floor far below every |f^ft|² on the grid
    let psi = regularize_psi(&population_psi_diag(&spec, &fg), 1.0, 1e-300).unwrap();
    let fe = kotlarski_integrate(&psi, spec.eval_ft(0.0)).unwrap();
    let err = fg
        .freqs()
        .iter()
        .zip(fe.spectrum.values())
        .filter(|(w, _)| w.abs() <= 20.0)
        .map(|(&w, v)| (v - spec.eval_ft(w)).norm())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = err < 1e-3 && elapsed < Duration::from_secs(1);
    report(1, "oracle Kotlarski exactness", pass, &format!("max |error| on |ω|≤20 = {err:.3e} (< 1e-3), {elapsed:.2?} (< 1 s)"));
    assert!(pass);
}

#[test]
fn criterion_02_noiseless_end_to_end() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::single("noiseless", SignalKind::F2, ShiftKind::Fixed(0.0), 0.0, 0.1, 64);
    cfg.h_mode = HMode::Fixed(0.035);
    cfg.r = 1.0;
    let row = run_recovery(&cfg, &cfg.points()[0], 0);
    let elapsed = start.elapsed();
    let pass = row.error < 0.05 && elapsed < Duration::from_secs(5);
    report(2, "noiseless end-to-end", pass, &format!("relative error {:.4} (< 0.05), {elapsed:.2?} (< 5 s)", row.error));
    assert!(pass);
}

#[test]
fn criterion_03_error_decay_in_n() {
    let (rows, elapsed) = fig2_desk();
    let m = means(rows, SlopeAxis::N);
    let mut pass = *elapsed < Duration::from_secs(15 * 60);
    let mut detail = Vec::new();
    for s in SMOOTH {
        let pts = &m[&(s.name().to_string(), "zeta1".to_string())];
        let ok = pts.last().unwrap().1 < pts[0].1;
        pass &= ok;
        detail.push(format!("{s}: {:.3} -> {:.3}", pts[0].1, pts.last().unwrap().1));
    }
    report(3, "error decay in N", pass, &format!("{} ({elapsed:.1?})", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_04_smoothness_ordering_of_slopes() {
    let start = Instant::now();
    let mut cfgs: Vec<ExperimentConfig> = preset("fig5")
        .unwrap()
        .into_iter()
        .filter(|c| c.shift == ShiftKind::Zeta1 && SMOOTH.contains(&c.signal))
        .collect();
    for c in &mut cfgs {
        c.replicates = 5;
        c.n_list = DESK_N.to_vec();
    }
    let rows = run(&cfgs, "fig5");
    let fits = fit_loglog_slope(&rows, SlopeAxis::N).unwrap();
    let slope = |s: SignalKind| fits.iter().find(|f| f.signal == s.name()).unwrap().slope;
    let (s1, s2, s3) = (slope(SignalKind::F1), slope(SignalKind::F2), slope(SignalKind::F3));
    let elapsed = start.elapsed();
    let ordered = s3 <= s2 && s2 <= s1;
    let near = (s1 + 0.2).abs() <= 0.2 && (s2 + 0.39).abs() <= 0.2 && (s3 + 0.43).abs() <= 0.2;
    let pass = ordered && near && elapsed < Duration::from_secs(15 * 60);
    report(
        4,
        "smoothness ordering of slopes",
        pass,
        &format!("slopes f1 {s1:.3} f2 {s2:.3} f3 {s3:.3} (targets -0.2/-0.39/-0.43 ± 0.2), {elapsed:.1?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_sigma_fourth_flatness() {
    let mut cfgs: Vec<ExperimentConfig> =
        preset("fig3a").unwrap().into_iter().filter(|c| SMOOTH.contains(&c.signal)).collect();
    for c in &mut cfgs {
        c.replicates = 5;
        c.sigma_list = vec![0.5, 1.0, 2.0];
    }
    let rows = run(&cfgs, "fig3a");
    let mut pass = true;
    let mut detail = Vec::new();
    for ((s, _), pts) in means(&rows, SlopeAxis::Sigma) {
        let hi = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        let lo = pts.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        pass &= pts.len() == 3 && hi / lo <= 3.0;
        detail.push(format!("{s} ratio {:.2}", hi / lo));
    }
    report(5, "sigma^4 sample-complexity flatness", pass, &format!("{} (<= 3)", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_06_log_lambda_boundedness() {
    let mut cfgs: Vec<ExperimentConfig> =
        preset("fig3b").unwrap().into_iter().filter(|c| SMOOTH.contains(&c.signal)).collect();
    for c in &mut cfgs {
        c.replicates = 5;
        c.lambda_list = vec![0.01, 0.032, 0.1];
    }
    let rows = run(&cfgs, "fig3b");
    let mut pass = true;
    let mut detail = Vec::new();
    for ((s, _), pts) in means(&rows, SlopeAxis::Lambda) {
        let worst = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        pass &= pts.len() == 3 && worst < 1.0;
        detail.push(format!("{s} max mean {worst:.3}"));
    }
    report(6, "log(1/lambda) sample-complexity boundedness", pass, &format!("{} (< 1)", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_07_zero_detection() {
    let truth = [3.927, 11.781, 19.635];
    let mut cfg = ExperimentConfig::single("zeros", SignalKind::F4, ShiftKind::Zeta1, 1.0, 0.1, 100_000);
    cfg.threshold_rel = 1e-3;
    cfg.band_limit = 20.0;
    cfg.h_mode = HMode::Fixed(0.05);
    let point = cfg.points()[0];
    let ctx = PointContext::new(&cfg, &point).unwrap();
    let mut good = 0;
    let mut found = [0usize; 3];
    let mut counts = Vec::new();
    for rep in 0..20 {
        let out = run_pipeline(&cfg, &ctx, point.n, replicate_seed(&cfg, &point, rep)).unwrap();
        let zeros = out.zeros.unwrap();
        counts.push(zeros.len());
        for (i, t) in truth.iter().enumerate() {
            if zeros.iter().any(|z| (z - t).abs() < 0.15) {
                found[i] += 1;
            }
        }
        let located = zeros.len() == 3 && zeros.iter().zip(truth).all(|(z, t)| (z - t).abs() < 0.15);
        if !located {
            continue;
        }
        // Re f̂^ft just outside each window has opposite signs
        let fg = *out.fourier.spectrum.grid();
        let eps = 2.0 * fg.spacing();
        let re = |w: f64| out.fourier.spectrum.values()[fg.zero_index() + (w / fg.spacing()).round() as usize].re;
        let flips = zeros.iter().all(|&z| re(z - eps - fg.spacing()) * re((z + eps + fg.spacing()).min(20.0)) < 0.0);
        if flips {
            good += 1;
        }
    }
    let pass = good >= 18;
    report(
        7,
        "zero detection",
        pass,
        &format!(
            "{good}/20 runs with exactly 3 zeros within 0.15 and sign flips (>= 18); per-zero hit rate {:?}/20; zero counts {counts:?}",
            found
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_shift_agnosticism() {
    let (rows, _) = fig2_desk();
    let m = means(rows, SlopeAxis::N);
    let mut pass = true;
    let mut worst: f64 = 1.0;
    for s in [SignalKind::F1, SignalKind::F2, SignalKind::F3, SignalKind::F4] {
        let a = &m[&(s.name().to_string(), "zeta1".to_string())];
        let b = &m[&(s.name().to_string(), "zeta2".to_string())];
        pass &= a.len() == b.len();
        for (p, q) in a.iter().zip(b) {
            let ratio = p.1 / q.1;
            pass &= p.0 == q.0 && (0.5..=2.0).contains(&ratio);
            if (ratio.ln()).abs() > worst.ln().abs() {
                worst = ratio;
            }
        }
    }
    report(8, "shift-distribution agnosticism", pass, &format!("most extreme zeta1/zeta2 mean-error ratio {worst:.3} (in [0.5, 2])"));
    assert!(pass);
}

#[test]
fn criterion_09_multivariate_kotlarski() {
    let start = Instant::now();
    let exact = ReplicatedCf {
        dim: 2,
        x0: ComponentDist::Gaussian { std: 1.0 },
        x1: ComponentDist::Gaussian { std: 0.5 },
        x2: ComponentDist::Gaussian { std: 0.5 },
    };
    let target = (-1.0f64).exp();
    let e1 = (ray_exp_integral(&exact, RayMode::Phi0, &[1.0, 1.0], &[0.0, 0.0], 256).unwrap() - target).norm();
    let batch = sample_replicated(
        100_000,
        2,
        ComponentDist::Gaussian { std: 1.0 },
        ComponentDist::Laplace { scale: 0.3 },
        2024,
    )
    .unwrap();
    let cf = empirical_joint_cf(&batch);
    let e2 = (ray_exp_integral(&cf, RayMode::Phi0, &[1.0, 1.0], &[0.0, 0.0], 256).unwrap() - target).norm();
    let elapsed = start.elapsed();
    let pass = e1 < 1e-6 && e2 < 0.03 && elapsed < Duration::from_secs(30);
    report(
        9,
        "multivariate Kotlarski",
        pass,
        &format!("exact-CF error {e1:.2e} (< 1e-6), empirical error {e2:.4} (< 0.03), {elapsed:.2?} (< 30 s)"),
    );
    assert!(pass);
}

fn csv_bytes(threads: usize, path: &Path) -> Vec<u8> {
    let mut cfg = ExperimentConfig::single("det", SignalKind::F3, ShiftKind::Zeta2, 1.0, 0.1, 1);
    cfg.n_list = vec![500, 3000];
    cfg.replicates = 3;
    let opts = RunOptions {
        zero_wall: true,
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_figure(&[cfg], path, &opts)).unwrap();
    std::fs::read(path).unwrap()
}

#[test]
fn criterion_10_infrastructure_properties() {
    let g = SpaceGrid::standard();
    let mut checks = Vec::new();

    // round trip
    let f = SignalSpec::new(SignalKind::F2).sample(&g);
    let back = inverse_cft(&forward_cft(&f).unwrap(), &g).unwrap();
    let rt = f.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(("round trip", rt < 1e-10, format!("{rt:.1e}")));

    // shift law for a grid-step shift
    let s = 7.0 * g.spacing();
    let spec = SignalSpec::new(SignalKind::F3);
    let shifted = SampledField::from_fn(g, |t| spec.eval(t - s)).unwrap();
    let (a, b) = (forward_cft(&spec.sample(&g)).unwrap(), forward_cft(&shifted).unwrap());
    let fg = g.freq_grid();
    let sl = fg
        .freqs()
        .iter()
        .enumerate()
        .map(|(i, &w)| (b.values()[i] - a.values()[i] * Complex64::from_polar(1.0, -w * s)).norm())
        .fold(0.0, f64::max);
    checks.push(("shift law", sl < 1e-10, format!("{sl:.1e}")));

    // Parseval
    let space: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.spacing();
    let freq: f64 = forward_cft(&f).unwrap().values().iter().map(|v| v.norm_sqr()).sum::<f64>() * fg.spacing()
        / (2.0 * std::f64::consts::PI);
    let pv = (space - freq).abs() / space;
    checks.push(("Parseval", pv < 1e-10, format!("{pv:.1e}")));

    // empirical covariance of the noise on the window
    let model = NoiseModel::new(1.0, 0.1, g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = sample_noise(&model, &g, 20_000, &mut rng).unwrap();
    let win = g.window();
    let l = win.len();
    let mut emp = vec![0.0; l * l];
    for d in &draws {
        let w = &d.values()[win.clone()];
        for i in 0..l {
            for j in 0..l {
                emp[i * l + j] += w[i] * w[j];
            }
        }
    }
    let cov = covariance_matrix(1.0, 0.1, &g.window_points());
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            num += (emp[i * l + j] / 20_000.0 - cov[(i, j)]).powi(2);
            den += cov[(i, j)].powi(2);
        }
    }
    let fro = (num / den).sqrt();
    checks.push(("GP covariance", fro < 0.05, format!("{fro:.4}")));

    // regularization floor identity
    let vals: Vec<f64> = (0..fg.len()).map(|i| ((i as f64) * 0.37).sin() * 1e-3).collect();
    let psi = PsiDiagonal::from_parts(fg, vals.clone(), vec![Complex64::default(); fg.len()], 400).unwrap();
    let reg = regularize_psi(&psi, 0.5, 1e-3).unwrap();
    let floor = 1e-3 / (0.5 * 20.0);
    let floor_ok = vals.iter().zip(reg.psi_tilde().unwrap()).all(|(&p, t)| {
        let want = if p.abs() >= floor { p } else if p < 0.0 { -floor } else { floor };
        t.re == want && t.im == 0.0
    });
    checks.push(("regularization floor", floor_ok, String::new()));

    // CSV byte-determinism across worker counts
    let dir = tempfile::tempdir().unwrap();
    let one = csv_bytes(1, &dir.path().join("one.csv"));
    let four = csv_bytes(4, &dir.path().join("four.csv"));
    checks.push(("CSV determinism", one == four && one.len() > 100, format!("{} bytes", one.len())));

    let pass = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks
        .iter()
        .map(|(n, ok, d)| format!("{n} {}{}", if *ok { "ok" } else { "FAILED" }, if d.is_empty() { String::new() } else { format!(" ({d})") }))
        .collect();
    report(10, "infrastructure properties", pass, &detail.join("; "));
    assert!(pass);
}
