//! Slow, independent references for the fast transport pipeline.
//!
//! Nothing here calls into `spectral`, `transport` or `pipeline`: sampling,
//! ray geometry and transforms are all re-derived from their definitions.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AngularField, GridSpec, ScalarField};
use crate::transport::CutoffSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    LeftRiemann,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayMarchSpec {
    pub step: f64,
    pub quadrature: Quadrature,
}

impl RayMarchSpec {
    /// Quarter-cell trapezoid march.
    pub fn for_grid(grid: GridSpec) -> Self {
        Self { step: 0.25 * 2.0 / grid.n_x as f64, quadrature: Quadrature::Trapezoid }
    }

    pub fn validate(&self, grid: GridSpec) -> Result<()> {
        let s_x = 2.0 / grid.n_x as f64;
        if !(self.step > 0.0 && self.step <= s_x) {
            return Err(Error::Invalid(format!("march step {} must lie in (0, {s_x}]", self.step)));
        }
        Ok(())
    }
}

/// Bilinear sample of node values at `(x, y)`; zero beyond the outermost nodes' cells.
fn bilinear(img: ArrayView2<'_, f64>, x: f64, y: f64) -> f64 {
    let n = img.nrows();
    let h = 2.0 / n as f64;
    let u = (x + 1.0) / h - 0.5;
    let v = (y + 1.0) / h - 0.5;
    if !(u > -1.0 && v > -1.0 && u < n as f64 && v < n as f64) {
        return 0.0;
    }
    let (c0, r0) = (u.floor(), v.floor());
    let (a, b) = (u - c0, v - r0);
    let at = |r: f64, c: f64| {
        let (r, c) = (r.clamp(0.0, (n - 1) as f64) as usize, c.clamp(0.0, (n - 1) as f64) as usize);
        img[[r, c]]
    };
    (1.0 - b) * ((1.0 - a) * at(r0, c0) + a * at(r0, c0 + 1.0))
        + b * ((1.0 - a) * at(r0 + 1.0, c0) + a * at(r0 + 1.0, c0 + 1.0))
}

/// Parameters `t_- <= 0 <= t_+` where `x + t theta` crosses the unit circle.
fn chord_params(x: [f64; 2], theta: [f64; 2]) -> Option<(f64, f64)> {
    let b = x[0] * theta[0] + x[1] * theta[1];
    let c = x[0] * x[0] + x[1] * x[1] - 1.0;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    Some((-b - r, -b + r))
}

/// Absorption along direction `angle`, linear between the two nearest grid directions.
fn sigma_at(sigma: &AngularField, angle: f64, p: [f64; 2]) -> f64 {
    let n_d = sigma.values.shape()[0];
    let delta = 2.0 * PI / n_d as f64;
    let t = (angle / delta - 0.5).rem_euclid(n_d as f64);
    let i0 = t.floor() as usize % n_d;
    let i1 = (i0 + 1) % n_d;
    let w = t - t.floor();
    let a = bilinear(sigma.slice(i0), p[0], p[1]);
    if w == 0.0 {
        return a;
    }
    (1.0 - w) * a + w * bilinear(sigma.slice(i1), p[0], p[1])
}

/// `int_{t_-}^{t_+} sigma(x + t theta)` by the march rule; zero for `sigma = 0`.
fn optical_depth(sigma: &AngularField, angle: f64, x: [f64; 2], t0: f64, t1: f64, march: &RayMarchSpec) -> f64 {
    let len = t1 - t0;
    if len <= 0.0 {
        return 0.0;
    }
    let steps = (len / march.step).ceil().max(1.0) as usize;
    let h = len / steps as f64;
    let theta = [angle.cos(), angle.sin()];
    let sample = |k: usize| {
        let t = t0 + k as f64 * h;
        sigma_at(sigma, angle, [x[0] + t * theta[0], x[1] + t * theta[1]])
    };
    let mut acc = 0.0;
    for k in 0..steps {
        acc += match march.quadrature {
            Quadrature::LeftRiemann => sample(k),
            Quadrature::Trapezoid => 0.5 * (sample(k) + sample(k + 1)),
        };
    }
    acc * h
}

/// Attenuation to the boundary `exp(-int_0^{tau_+} sigma(x + t theta) dt)`.
pub fn oracle_attenuation(sigma: &AngularField, x: [f64; 2], angle: f64, march: &RayMarchSpec) -> Result<f64> {
    let theta = [angle.cos(), angle.sin()];
    let (_, t_plus) = chord_params(x, theta).ok_or_else(|| Error::Domain("ray misses the disk".into()))?;
    Ok((-optical_depth(sigma, angle, x, 0.0, t_plus.max(0.0), march)).exp())
}

/// Attenuated ray transform ending at `x`: `int_{tau_-}^0 E(x + t theta) f(x + t theta) dt`,
/// with `E` the attenuation from each point on to the boundary.
pub fn oracle_xray(
    f: &ScalarField,
    sigma: &AngularField,
    x: [f64; 2],
    angle: f64,
    march: &RayMarchSpec,
) -> Result<f64> {
    march.validate(f.spec)?;
    if x[0].hypot(x[1]) > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("x = {x:?} lies outside the unit disk")));
    }
    let theta = [angle.cos(), angle.sin()];
    let Some((t_minus, t_plus)) = chord_params(x, theta) else { return Ok(0.0) };
    let t_plus = t_plus.max(0.0);
    let t_minus = t_minus.min(0.0);
    let len = -t_minus;
    if len <= 0.0 {
        return Ok(0.0);
    }
    let steps = (len / march.step).ceil().max(1.0) as usize;
    let h = len / steps as f64;
    let point = |t: f64| [x[0] + t * theta[0], x[1] + t * theta[1]];

    // Walk from x back to the entry point, growing the depth to the exit as we go.
    let mut depth = optical_depth(sigma, angle, x, 0.0, t_plus, march);
    let mut prev_sigma = sigma_at(sigma, angle, x);
    let mut prev = f64::exp(-depth) * bilinear(f.values.view(), x[0], x[1]);
    let mut acc = 0.0;
    for k in 1..=steps {
        let p = point(-(k as f64) * h);
        let s_here = sigma_at(sigma, angle, p);
        depth += match march.quadrature {
            Quadrature::LeftRiemann => h * s_here,
            Quadrature::Trapezoid => 0.5 * h * (s_here + prev_sigma),
        };
        prev_sigma = s_here;
        let here = f64::exp(-depth) * bilinear(f.values.view(), p[0], p[1]);
        acc += match march.quadrature {
            Quadrature::LeftRiemann => h * here,
            Quadrature::Trapezoid => 0.5 * h * (here + prev),
        };
        prev = here;
    }
    Ok(acc)
}

/// `int_0^a int_0^b dx dy / sqrt(x^2 + y^2)`.
fn inverse_distance_rect(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    a * (b / a).asinh() + b * (a / b).asinh()
}

/// `int_cell dy / |x - y|` for a cell whose closure contains `x`.
fn inverse_distance_cell(x: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let (l, r) = (x[0] - lo[0], hi[0] - x[0]);
    let (d, u) = (x[1] - lo[1], hi[1] - x[1]);
    inverse_distance_rect(l, d)
        + inverse_distance_rect(l, u)
        + inverse_distance_rect(r, d)
        + inverse_distance_rect(r, u)
}

/// `int 2 f(y) / |x - y| dy`: the normal operator of the unattenuated, full-data transform.
///
/// Cells containing `x` are integrated exactly against `1/|x - y|`; every other
/// cell uses its midpoint.
pub fn oracle_normal_point(f: &ScalarField, sigma: &AngularField, cutoff: &CutoffSpec, x: [f64; 2]) -> Result<f64> {
    if sigma.values.iter().any(|&v| v != 0.0) {
        return Err(Error::Unsupported("normal-operator oracle needs sigma = 0".into()));
    }
    if !cutoff.is_full() {
        return Err(Error::Unsupported("normal-operator oracle needs full data".into()));
    }
    let n = f.spec.n_x;
    let h = 2.0 / n as f64;
    let mut acc = 0.0;
    for ((r, c), &v) in f.values.indexed_iter() {
        if v == 0.0 {
            continue;
        }
        let lo = [-1.0 + c as f64 * h, -1.0 + r as f64 * h];
        let hi = [lo[0] + h, lo[1] + h];
        let inside = (lo[0]..=hi[0]).contains(&x[0]) && (lo[1]..=hi[1]).contains(&x[1]);
        acc += if inside {
            2.0 * v * inverse_distance_cell(x, lo, hi)
        } else {
            let mid = [lo[0] + 0.5 * h, lo[1] + 0.5 * h];
            2.0 * v * h * h / (mid[0] - x[0]).hypot(mid[1] - x[1])
        };
    }
    Ok(acc)
}

/// `X(l) = sum_k x(k) exp(-2 pi i alpha k l)` by the definition.
pub fn direct_fractional_dft(x: &[Complex64], n_out: usize, alpha: f64) -> Vec<Complex64> {
    (0..n_out)
        .map(|l| {
            x.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let phase = (alpha * (k * l) as f64).rem_euclid(1.0);
                    v * Complex64::from_polar(1.0, -2.0 * PI * phase)
                })
                .sum()
        })
        .collect()
}

/// Spectral interpolant `sum_l x_l D_L(y - l)` evaluated as an explicit
/// half-integer-frequency Fourier sum.
pub fn direct_interpolate(x: &[f64], y: f64) -> f64 {
    let len = x.len();
    let lf = len as f64;
    let mut acc = 0.0;
    for (l, &v) in x.iter().enumerate() {
        let d = y - l as f64;
        let kernel: f64 = (0..len).map(|k| (2.0 * PI * (k as f64 - lf / 2.0 + 0.5) * d / lf).cos()).sum::<f64>() / lf;
        acc += v * kernel;
    }
    acc
}

/// `out(p) = img(R_angle p)` with bilinear sampling (zero outside).
pub fn bilinear_rotate(img: ArrayView2<'_, f64>, angle: f64) -> Array2<f64> {
    let n = img.nrows();
    let h = 2.0 / n as f64;
    let (s, c) = angle.sin_cos();
    Array2::from_shape_fn((n, n), |(r, col)| {
        let (x, y) = (-1.0 + (col as f64 + 0.5) * h, -1.0 + (r as f64 + 0.5) * h);
        bilinear(img, c * x - s * y, s * x + c * y)
    })
}
