//! Principal symbol of the partial-data normal operator and the visible set.
//!
//! In the plane, the directions orthogonal to a covector `xi` are `+-xi_perp`,
//! so `rho(x, xi) = 2 pi sum_{theta = +-xi_perp} |E(x, theta) chi^#(x, theta)|^2`.
//! `E` is marched directly along `theta` with absorption interpolated between
//! the neighbouring grid directions, so `xi` need not lie on the angular grid.

use std::f64::consts::PI;

use ndarray::{Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{sample_bilinear, GridSpec, ScalarField};
use crate::transport::{cutoff_chi_sharp_at, tau_plus, CutoffSpec, MediumSpec};

/// Mask threshold as a fraction of the full-data vacuum value `4 pi`.
pub const MASK_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct VisibilityMap {
    pub spec: GridSpec,
    pub n_xi: usize,
    /// `rho` indexed `[y, x, k]` for covector angle `k pi / n_xi`.
    pub values: Array3<f64>,
    pub mask: Array3<bool>,
    pub threshold: f64,
}

impl VisibilityMap {
    pub fn xi_angle(&self, k: usize) -> f64 {
        k as f64 * PI / self.n_xi as f64
    }

    /// Number of visible covector angles at each pixel.
    pub fn visible_count(&self, row: usize, col: usize) -> usize {
        self.mask.slice(ndarray::s![row, col, ..]).iter().filter(|&&m| m).count()
    }
}

fn attenuation_along(medium: &MediumSpec, x: [f64; 2], angle: f64) -> Result<f64> {
    let spec = medium.spec();
    let sigma = &medium.sigma;
    let theta = [angle.cos(), angle.sin()];
    let len = tau_plus(x, theta)?;
    let steps = (len / spec.s_x()).ceil() as usize;
    if steps == 0 {
        return Ok(1.0);
    }
    let h = len / steps as f64;
    let t = (angle / spec.delta() - 0.5).rem_euclid(spec.n_d as f64);
    let (i0, w) = (t.floor() as usize % spec.n_d, t - t.floor());
    let i1 = (i0 + 1) % spec.n_d;
    let (a, b) = (sigma.slice(i0), sigma.slice(i1));
    let at = |img: ArrayView2<'_, f64>, s: f64| sample_bilinear(spec, img, x[0] + s * theta[0], x[1] + s * theta[1]);
    let sample = |k: usize| {
        let s = k as f64 * h;
        (1.0 - w) * at(a, s) + w * at(b, s)
    };
    let mut depth = 0.5 * (sample(0) + sample(steps));
    for k in 1..steps {
        depth += sample(k);
    }
    Ok((-depth * h).exp())
}

/// `rho(x, xi)` for the covector at angle `xi_angle`.
pub fn symbol_rho(x: [f64; 2], xi_angle: f64, medium: &MediumSpec, cutoff: &CutoffSpec) -> Result<f64> {
    if x[0].hypot(x[1]) >= 1.0 {
        return Err(Error::Domain(format!("x = {x:?} must lie inside the unit disk")));
    }
    let absorbing = medium.sigma.values.iter().any(|&v| v != 0.0);
    // xi and -xi share the unordered pair {xi_perp, -xi_perp}.
    let xi = xi_angle.rem_euclid(PI);
    let mut rho = 0.0;
    for angle in [xi + 0.5 * PI, xi - 0.5 * PI] {
        let theta = [angle.cos(), angle.sin()];
        let chi = cutoff_chi_sharp_at(cutoff, x, theta)?;
        if chi == 0.0 {
            continue;
        }
        let e = if absorbing { attenuation_along(medium, x, angle)? } else { 1.0 };
        rho += (e * chi).powi(2);
    }
    Ok(2.0 * PI * rho)
}

/// `rho` on every pixel inside the disk for `n_xi` covector angles in `[0, pi)`.
pub fn visibility_map(grid: GridSpec, medium: &MediumSpec, cutoff: &CutoffSpec, n_xi: usize) -> Result<VisibilityMap> {
    grid.check_same(&medium.spec())?;
    cutoff.validate()?;
    if n_xi == 0 {
        return Err(Error::Invalid("n_xi must be positive".into()));
    }
    let n = grid.n_x;
    let nodes = grid.nodes();
    let mut values = Array3::<f64>::zeros((n, n, n_xi));
    values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().try_for_each(|(r, mut plane)| -> Result<()> {
        for c in 0..n {
            let x = [nodes[c], nodes[r]];
            if x[0].hypot(x[1]) >= 1.0 {
                continue;
            }
            for k in 0..n_xi {
                plane[[c, k]] = symbol_rho(x, k as f64 * PI / n_xi as f64, medium, cutoff)?;
            }
        }
        Ok(())
    })?;
    let threshold = MASK_FRACTION * 4.0 * PI;
    let mask = values.mapv(|v| v > threshold);
    Ok(VisibilityMap { spec: grid, n_xi, values, mask, threshold })
}

/// Mean image gradient over a source's edge pixels, split by whether the
/// edge normal is a visible covector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeContrast {
    pub visible_pixels: usize,
    pub invisible_pixels: usize,
    pub visible_mean_gradient: f64,
    pub invisible_mean_gradient: f64,
    /// `visible / invisible`; absent when either class is empty.
    pub ratio: Option<f64>,
}

fn central_gradient(values: ArrayView2<'_, f64>, r: usize, c: usize, s_x: f64) -> [f64; 2] {
    let gx = (values[[r, c + 1]] - values[[r, c - 1]]) / (2.0 * s_x);
    let gy = (values[[r + 1, c]] - values[[r - 1, c]]) / (2.0 * s_x);
    [gx, gy]
}

/// Edge pixels are those where the source's central-difference gradient is at
/// least a quarter of its maximum; the normal direction there is the
/// gradient's.
pub fn edge_contrast(
    source: &ScalarField,
    image: &ScalarField,
    medium: &MediumSpec,
    cutoff: &CutoffSpec,
) -> Result<EdgeContrast> {
    let spec = source.spec;
    spec.check_same(&image.spec)?;
    let n = spec.n_x;
    let s_x = spec.s_x();
    let mut grads = Vec::new();
    for r in 1..n - 1 {
        for c in 1..n - 1 {
            let g = central_gradient(source.values.view(), r, c, s_x);
            grads.push((r, c, g, g[0].hypot(g[1])));
        }
    }
    let peak = grads.iter().map(|g| g.3).fold(0.0, f64::max);
    let threshold = MASK_FRACTION * 4.0 * PI;
    let (mut vis, mut invis) = ((0usize, 0.0), (0usize, 0.0));
    for (r, c, g, mag) in grads {
        if peak == 0.0 || mag < 0.25 * peak {
            continue;
        }
        let x = [spec.node(c), spec.node(r)];
        if x[0].hypot(x[1]) >= 1.0 {
            continue;
        }
        let ig = central_gradient(image.values.view(), r, c, s_x);
        let img_mag = ig[0].hypot(ig[1]);
        if symbol_rho(x, g[1].atan2(g[0]), medium, cutoff)? > threshold {
            vis = (vis.0 + 1, vis.1 + img_mag);
        } else {
            invis = (invis.0 + 1, invis.1 + img_mag);
        }
    }
    let mean = |(k, total): (usize, f64)| if k == 0 { 0.0 } else { total / k as f64 };
    let (vm, im) = (mean(vis), mean(invis));
    let ratio = (vis.0 > 0 && invis.0 > 0 && im > 0.0).then(|| vm / im);
    Ok(EdgeContrast {
        visible_pixels: vis.0,
        invisible_pixels: invis.0,
        visible_mean_gradient: vm,
        invisible_mean_gradient: im,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_data_vacuum_is_four_pi() {
        let g = GridSpec::new(16, 8).unwrap();
        let m = MediumSpec::vacuum(g);
        let map = visibility_map(g, &m, &CutoffSpec::full(), 6).unwrap();
        for ((r, c, _), v) in map.values.indexed_iter() {
            let inside = g.node(r).hypot(g.node(c)) < 1.0;
            let expect = if inside { 4.0 * PI } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cutoff_gives_zero_map() {
        let g = GridSpec::new(16, 8).unwrap();
        let map = visibility_map(g, &MediumSpec::vacuum(g), &CutoffSpec::empty(), 4).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
        assert!(map.mask.iter().all(|&m| !m));
    }

    #[test]
    fn constant_absorption_at_origin() {
        let g = GridSpec::new(128, 16).unwrap();
        let c = 0.5;
        let m = MediumSpec::constant_absorption(g, c).unwrap();
        for xi in [0.0, 0.7, 2.0] {
            let rho = symbol_rho([0.0, 0.0], xi, &m, &CutoffSpec::full()).unwrap();
            let expect = 2.0 * PI * 2.0 * (-2.0 * c).exp();
            assert!((rho - expect).abs() < 0.02 * expect, "{rho} vs {expect}");
        }
    }

    #[test]
    fn rejects_points_outside() {
        let g = GridSpec::new(16, 8).unwrap();
        assert!(matches!(
            symbol_rho([1.0, 0.0], 0.0, &MediumSpec::vacuum(g), &CutoffSpec::full()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn antipodal_symmetry_and_monotone_in_arc() {
        let g = GridSpec::new(32, 16).unwrap();
        let m = crate::scene::example_medium(g).unwrap();
        let small = CutoffSpec { taper_pos: 0.05, ..CutoffSpec::arc(0.0, PI / 3.0) };
        let large = CutoffSpec { taper_pos: 0.05, ..CutoffSpec::arc(-0.5, PI) };
        for &x in &[[0.3, 0.2], [-0.5, 0.1], [0.1, -0.7]] {
            for xi in [0.1, 1.0, 2.5] {
                let a = symbol_rho(x, xi, &m, &small).unwrap();
                assert!((a - symbol_rho(x, xi + PI, &m, &small).unwrap()).abs() <= 1e-12 * a.max(1.0));
                assert!(symbol_rho(x, xi, &m, &large).unwrap() >= a);
                assert!(a >= 0.0);
            }
        }
    }

    #[test]
    fn near_arc_sees_more_than_far_side() {
        let g = GridSpec::new(32, 16).unwrap();
        let m = MediumSpec::vacuum(g);
        let v = CutoffSpec::examples();
        let count = |x: [f64; 2]| {
            (0..64).filter(|&k| symbol_rho(x, k as f64 * PI / 64.0, &m, &v).unwrap() > MASK_FRACTION * 4.0 * PI).count()
        };
        let (near, far) = (count([0.9, 0.2]), count([-0.9, -0.2]));
        assert!(near > 0);
        assert!(far < near, "{far} vs {near}");
    }

    #[test]
    fn edge_contrast_splits_by_visibility() {
        let g = GridSpec::new(64, 8).unwrap();
        let m = MediumSpec::vacuum(g);
        let source = crate::scene::make_phantom(&crate::scene::PhantomSpec::centered_disk(0.5), g).unwrap();
        let full = edge_contrast(&source, &source, &m, &CutoffSpec::full()).unwrap();
        assert!(full.visible_pixels > 0);
        assert_eq!(full.invisible_pixels, 0);
        assert_eq!(full.ratio, None);
        let part = edge_contrast(&source, &source, &m, &CutoffSpec::examples()).unwrap();
        assert!(part.visible_pixels > 0 && part.invisible_pixels > part.visible_pixels);
        assert_eq!(part.visible_pixels + part.invisible_pixels, full.visible_pixels);
    }
}
