//! Fast spectral and transport paths against the slow reference implementations.

use num_complex::Complex64;
use rte_core::grid::{chord_is_live, relative_l2, AngularField, GridSpec, ScalarField, Support};
use rte_core::oracle::{
    bilinear_rotate, direct_fractional_dft, direct_interpolate, oracle_attenuation, oracle_normal_point, oracle_xray,
    RayMarchSpec,
};
use rte_core::pipeline::Solver;
use rte_core::scene::{make_phantom, PhantomSpec};
use rte_core::spectral::{dilate_and_shift, fractional_dft, rotate, spectral_shift, FractionalDft};
use rte_core::transport::{attenuation_e, CutoffSpec, MediumSpec};

fn signal(len: usize) -> Vec<f64> {
    (0..len).map(|k| (0.37 * k as f64).sin() + 0.5 * (1.3 * k as f64).cos()).collect()
}

#[test]
fn shift_matches_direct_interpolant() {
    let x = signal(48);
    for s in [0.25, -3.7, 11.5] {
        let fast = spectral_shift(&x, s).unwrap();
        for (l, v) in fast.iter().enumerate() {
            let slow = direct_interpolate(&x, l as f64 - s);
            assert!((v - slow).abs() < 1e-11, "s = {s}, l = {l}: {v} vs {slow}");
        }
    }
}

#[test]
fn dilate_and_shift_matches_direct_interpolant() {
    let x = signal(64);
    for (s, h) in [(3.0, 0.8), (-2.5, 1.1), (10.25, 0.5)] {
        let fast = dilate_and_shift(&x, s, h).unwrap();
        assert_eq!(fast.len(), 32);
        for (l, v) in fast.iter().enumerate() {
            let slow = direct_interpolate(&x, s + h * l as f64);
            assert!((v - slow).abs() < 1e-10, "s = {s}, h = {h}, l = {l}: {v} vs {slow}");
        }
    }
}

#[test]
fn fractional_dft_matches_direct_sum() {
    for (n_in, n_out, alpha) in [(17, 17, 0.013), (64, 40, 0.21 / 64.0), (100, 130, -0.37), (256, 256, 1.0 / 256.0)] {
        let x: Vec<Complex64> = (0..n_in).map(|k| Complex64::new((0.1 * k as f64).cos(), (k % 7) as f64)).collect();
        let fast = FractionalDft::new(n_in, n_out, alpha).apply(&x);
        let slow = direct_fractional_dft(&x, n_out, alpha);
        let num: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = slow.iter().map(|b| b.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-9, "n_in {n_in}, n_out {n_out}");
    }
    let x: Vec<Complex64> = (0..32).map(|k| Complex64::new(k as f64, 1.0)).collect();
    assert_eq!(fractional_dft(&x, 0.1).len(), 32);
}

#[test]
fn rotation_converges_to_bilinear_reference() {
    let mut errs = Vec::new();
    for n in [64, 128] {
        let g = GridSpec::new(n, 4).unwrap();
        let f =
            ScalarField::from_fn(g, Support::Square, |x, y| (-((x + 0.1).powi(2) + (y - 0.2).powi(2)) / 0.03).exp());
        let fast = rotate(&f, 1.1).unwrap().field;
        let slow = bilinear_rotate(f.values.view(), 1.1);
        errs.push(relative_l2(fast.values.view(), slow.view()));
    }
    // The bilinear reference is second order: halving s_x quarters the gap.
    assert!(errs[1] < 0.35 * errs[0], "{errs:?}");
    assert!(errs[1] < 5e-3, "{errs:?}");
}

#[test]
fn attenuation_matches_ray_march() {
    let g = GridSpec::new(128, 16).unwrap();
    let sigma = AngularField::from_fn(g, Support::Disk, |x, y, eta| 0.6 + 0.3 * x - 0.2 * y * eta.cos());
    let medium = MediumSpec::new(sigma.clone(), rte_core::transport::ScatteringKernel::None).unwrap();
    let e = attenuation_e(&medium).unwrap();
    let march = RayMarchSpec::for_grid(g);
    let mut worst: f64 = 0.0;
    for i in [0, 3, 7, 12] {
        for (r, c) in [(64, 64), (40, 90), (100, 30), (20, 70)] {
            let x = [g.node(c), g.node(r)];
            let slow = oracle_attenuation(&sigma, x, g.angle(i), &march).unwrap();
            worst = worst.max((e.values[[i, r, c]] - slow).abs());
        }
    }
    assert!(worst < 2e-2, "{worst}");
}

#[test]
fn forward_data_matches_xray_oracle() {
    let g = GridSpec::new(128, 32).unwrap();
    let medium = MediumSpec::constant_absorption(g, 0.7).unwrap();
    let f = make_phantom(&PhantomSpec::spiral_preset(), g).unwrap();
    let data = Solver::new(&medium, &CutoffSpec::full()).unwrap().forward(&f, 0).unwrap().data;
    let march = RayMarchSpec::for_grid(g);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..g.n_d {
        let eta = g.angle(i);
        for j in (0..g.n_x).filter(|&j| chord_is_live(g, j)) {
            let y = g.node(j);
            let a = (1.0 - y * y).sqrt();
            let q = [a * eta.cos() - y * eta.sin(), a * eta.sin() + y * eta.cos()];
            let slow = oracle_xray(&f, &medium.sigma, q, eta, &march).unwrap();
            num += (data.values[[i, j]] - slow).powi(2);
            den += slow * slow;
        }
    }
    let err = (num / den).sqrt();
    assert!(err < 0.03, "{err}");
}

#[test]
fn normal_image_matches_point_oracle_off_centre() {
    let g = GridSpec::new(128, 128).unwrap();
    let f = ScalarField::from_fn(g, Support::Disk, |x, y| (-((x - 0.1).powi(2) + y * y) / 0.05).exp());
    let medium = MediumSpec::vacuum(g);
    let full = CutoffSpec::full();
    let (_, n) = Solver::new(&medium, &full).unwrap().normal(&f, 0, 0).unwrap();
    for (r, c) in [(64, 70), (50, 80), (90, 40)] {
        let x = [g.node(c), g.node(r)];
        let slow = oracle_normal_point(&f, &medium.sigma, &full, x).unwrap();
        let fast = n.image.values[[r, c]];
        assert!((fast - slow).abs() < 0.03 * slow, "({r},{c}): {fast} vs {slow}");
    }
}
