use num_complex::Complex64;
use proptest::prelude::*;

use fmra::deconvolution::{kernel_ft_eval, recover_signal, KernelSpec};
use fmra::estimator::{kotlarski_integrate_band, regularize_psi, FourierEstimate, Method, PsiDiagonal};
use fmra::grid::{forward_cft, inverse_cft, SampledField, SpaceGrid, Spectrum};

fn small_grid() -> SpaceGrid {
    SpaceGrid::new(2.0, 1.0 / 8.0, 4).unwrap()
}

/// Window values of a random real field.
fn field_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, small_grid().window_len())
}

fn field(v: &[f64]) -> SampledField {
    SampledField::from_window(small_grid(), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip(v in field_values()) {
        let f = field(&v);
        let back = inverse_cft(&forward_cft(&f).unwrap(), f.grid()).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn transform_is_linear(v in field_values(), w in field_values(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let comb: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let (fv, fw, fc) = (forward_cft(&field(&v)).unwrap(), forward_cft(&field(&w)).unwrap(), forward_cft(&field(&comb)).unwrap());
        for i in 0..fc.values().len() {
            let want = fv.values()[i] * a + fw.values()[i] * b;
            prop_assert!((fc.values()[i] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn shift_law_for_grid_shifts(v in field_values(), k in 1usize..12) {
        let g = small_grid();
        let f = field(&v);
        let mut moved = vec![0.0; g.len()];
        moved[k..].copy_from_slice(&f.values()[..g.len() - k]);
        let s = k as f64 * g.spacing();
        let (a, b) = (forward_cft(&f).unwrap(), forward_cft(&SampledField::new(g, moved).unwrap()).unwrap());
        for (i, w) in g.freq_grid().freqs().into_iter().enumerate() {
            prop_assert!((b.values()[i] - a.values()[i] * Complex64::from_polar(1.0, -w * s)).norm() < 1e-10);
        }
    }

    #[test]
    fn parseval(v in field_values()) {
        let g = small_grid();
        let f = field(&v);
        let space: f64 = f.values().iter().map(|x| x * x).sum::<f64>() * g.spacing();
        let freq: f64 = forward_cft(&f).unwrap().values().iter().map(|z| z.norm_sqr()).sum::<f64>()
            * g.freq_grid().spacing() / (2.0 * std::f64::consts::PI);
        prop_assert!((space - freq).abs() <= 1e-10 * space.max(1.0));
    }

    #[test]
    fn real_fields_have_conjugate_symmetric_spectra(v in field_values()) {
        prop_assert!(forward_cft(&field(&v)).unwrap().conjugate_symmetry_residual() < 1e-12);
    }

    #[test]
    fn regularization_floor(vals in prop::collection::vec(-1e-2..1e-2f64, 128), r in 0.01..10.0f64, n in 1usize..100_000) {
        let fg = small_grid().freq_grid();
        assert_eq!(vals.len(), fg.len());
        let psi = PsiDiagonal::from_parts(fg, vals.clone(), vec![Complex64::default(); fg.len()], n).unwrap();
        let reg = regularize_psi(&psi, r, 1.0).unwrap();
        let floor = 1.0 / (r * (n as f64).sqrt());
        prop_assert_eq!(reg.floor(), Some(floor));
        for (&p, t) in vals.iter().zip(reg.psi_tilde().unwrap()) {
            prop_assert!(t.re.abs() >= floor);
            prop_assert!(t.im == 0.0);
            if p.abs() >= floor { prop_assert_eq!(t.re, p); } else { prop_assert_eq!(t.re.signum(), if p < 0.0 { -1.0 } else { 1.0 }); }
        }
    }

    #[test]
    fn band_limited_estimates_vanish_outside_band(
        psi in prop::collection::vec(0.05..2.0f64, 128),
        g_re in prop::collection::vec(-1.0..1.0f64, 128),
        g_im in prop::collection::vec(-1.0..1.0f64, 128),
        band in 1.0..20.0f64,
    ) {
        let fg = small_grid().freq_grid();
        assert_eq!(psi.len(), fg.len());
        let grad: Vec<Complex64> = g_re.iter().zip(&g_im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let d = regularize_psi(&PsiDiagonal::from_parts(fg, psi, grad, 100).unwrap(), 1.0, 1e-6).unwrap();
        let fe = kotlarski_integrate_band(&d, Complex64::new(0.8, 0.0), band).unwrap();
        let vals = fe.spectrum.values();
        for (i, w) in fg.freqs().into_iter().enumerate() {
            if w.abs() > band + 1e-12 { prop_assert_eq!(vals[i], Complex64::default()); }
        }
        prop_assert!(fe.spectrum.conjugate_symmetry_residual() < 1e-12);
        prop_assert_eq!(vals[fg.zero_index()], Complex64::new(0.8, 0.0));
    }

    #[test]
    fn kernels_are_normalized_and_compact(c0 in 0.05..0.9f64, b in 0.1..3.0f64, a in 1.0..6.0f64, w in -3.0..3.0f64) {
        for k in [KernelSpec::Sinc, KernelSpec::Poly { a }, KernelSpec::FlatTop { c0, b }] {
            prop_assert_eq!(kernel_ft_eval(&k, 0.0).unwrap(), 1.0);
            let v = kernel_ft_eval(&k, w).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if w.abs() >= 1.0 { prop_assert_eq!(v, 0.0); }
            prop_assert_eq!(v, kernel_ft_eval(&k, -w).unwrap());
        }
    }

    #[test]
    fn recovered_signals_are_real_and_linear(re in prop::collection::vec(-1.0..1.0f64, 81), h in 0.1..0.9f64, s in -2.0..2.0f64) {
        // conjugate-symmetric spectrum supported near zero
        let g = small_grid();
        let fg = g.freq_grid();
        let z = fg.zero_index();
        let mut vals = vec![Complex64::default(); fg.len()];
        for k in 0..re.len().min(z) {
            vals[z + k] = Complex64::new(re[k], if k == 0 { 0.0 } else { re[re.len() - 1 - k] });
            if k > 0 { vals[z - k] = vals[z + k].conj(); }
        }
        let spec = Spectrum::new(fg, vals.clone()).unwrap();
        let scaled = Spectrum::new(fg, vals.iter().map(|v| v * s).collect()).unwrap();
        let fe = |sp: Spectrum| FourierEstimate { spectrum: sp, zero_value: Complex64::default(), method: Method::Plain };
        let a = recover_signal(&fe(spec), &KernelSpec::Sinc, h, &g).unwrap();
        let b = recover_signal(&fe(scaled), &KernelSpec::Sinc, h, &g).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x * s - y).abs() < 1e-10);
        }
    }
}
