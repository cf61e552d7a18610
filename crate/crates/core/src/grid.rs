//! Discretization of the unit square and the circle of directions.
//!
//! Space is sampled at cell midpoints `-1 + (i + 1/2) s_x`, directions at
//! `eta_i = (i + 1/2) delta`, both zero-based. Image arrays are row-major with
//! the row index running along `y` and the column index along `x`. Angular
//! arrays put the direction index first.

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_x: usize,
    pub n_d: usize,
}

impl GridSpec {
    pub fn new(n_x: usize, n_d: usize) -> Result<Self> {
        if n_x < 2 || !n_x.is_power_of_two() {
            return Err(Error::Grid(format!("n_x = {n_x} must be a power of two >= 2")));
        }
        if n_d < 1 || !n_d.is_power_of_two() {
            return Err(Error::Grid(format!("n_d = {n_d} must be a power of two")));
        }
        Ok(Self { n_x, n_d })
    }

    /// Spatial step on `[-1, 1]`.
    pub fn s_x(&self) -> f64 {
        2.0 / self.n_x as f64
    }

    /// Angular step in radians.
    pub fn delta(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_d as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.s_x()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.node(i)).collect()
    }

    pub fn angle(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.delta()
    }

    pub fn direction(&self, i: usize) -> [f64; 2] {
        let a = self.angle(i);
        [a.cos(), a.sin()]
    }

    /// Continuous index of coordinate `t` (inverse of [`GridSpec::node`]).
    pub fn index_of(&self, t: f64) -> f64 {
        (t + 1.0) / self.s_x() - 0.5
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "grid {}x{}/{} vs {}x{}/{}",
                self.n_x, self.n_x, self.n_d, other.n_x, other.n_x, other.n_d
            )));
        }
        Ok(())
    }
}

/// Whether constructed fields are zeroed outside the closed unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Square,
    Disk,
}

impl Support {
    fn admits(self, x: f64, y: f64) -> bool {
        match self {
            Support::Square => true,
            Support::Disk => x * x + y * y < 1.0,
        }
    }
}

/// Samples of a function on `[-1, 1]^2`, indexed `[y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: Array2::zeros((spec.n_x, spec.n_x)) }
    }

    pub fn from_values(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (spec.n_x, spec.n_x) {
            return Err(Error::Shape(format!("scalar field of shape {:?} on a {} grid", values.dim(), spec.n_x)));
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec, support: Support, f: impl Fn(f64, f64) -> f64) -> Self {
        let nodes = spec.nodes();
        let values = Array2::from_shape_fn((spec.n_x, spec.n_x), |(r, c)| {
            let (x, y) = (nodes[c], nodes[r]);
            if support.admits(x, y) {
                f(x, y)
            } else {
                0.0
            }
        });
        Self { spec, values }
    }

    pub fn mask_to_disk(&mut self) {
        mask_image(self.spec, self.values.view_mut());
    }

    pub fn norm(&self) -> f64 {
        inner_scalar(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Samples of a function on `[-1, 1]^2 x S^1`, indexed `[direction, y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularField {
    pub spec: GridSpec,
    pub values: Array3<f64>,
}

impl AngularField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: Array3::zeros((spec.n_d, spec.n_x, spec.n_x)) }
    }

    pub fn from_values(spec: GridSpec, values: Array3<f64>) -> Result<Self> {
        if values.dim() != (spec.n_d, spec.n_x, spec.n_x) {
            return Err(Error::Shape(format!(
                "angular field of shape {:?} on a {}x{} grid",
                values.dim(),
                spec.n_x,
                spec.n_d
            )));
        }
        Ok(Self { spec, values })
    }

    /// `f(x, y, eta)` sampled at every node and direction.
    pub fn from_fn(spec: GridSpec, support: Support, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let nodes = spec.nodes();
        let values = Array3::from_shape_fn((spec.n_d, spec.n_x, spec.n_x), |(d, r, c)| {
            let (x, y) = (nodes[c], nodes[r]);
            if support.admits(x, y) {
                f(x, y, spec.angle(d))
            } else {
                0.0
            }
        });
        Self { spec, values }
    }

    pub fn slice(&self, d: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), d)
    }

    pub fn add_assign(&mut self, other: &AngularField) -> Result<()> {
        self.spec.check_same(&other.spec)?;
        self.values += &other.values;
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { spec: self.spec, values: &self.values * a }
    }

    pub fn norm(&self) -> f64 {
        inner_angular(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Outgoing boundary samples, indexed `[direction, chord coordinate]`.
///
/// Entry `(i, j)` is the value leaving the disk in direction `eta_i` along the
/// line `x . theta_perp = y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub spec: GridSpec,
    pub values: Array2<f64>,
}

impl BoundaryData {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: Array2::zeros((spec.n_d, spec.n_x)) }
    }

    pub fn from_values(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (spec.n_d, spec.n_x) {
            return Err(Error::Shape(format!(
                "boundary data of shape {:?} on a {}x{} grid",
                values.dim(),
                spec.n_x,
                spec.n_d
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let nodes = spec.nodes();
        let values = Array2::from_shape_fn((spec.n_d, spec.n_x), |(d, j)| {
            if chord_is_live(spec, j) {
                f(spec.angle(d), nodes[j])
            } else {
                0.0
            }
        });
        Self { spec, values }
    }

    pub fn norm(&self) -> f64 {
        inner_boundary(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Chords with `|y| >= 1 - s_x/2` are tangent or miss the disk; they carry no data.
pub fn chord_is_live(spec: GridSpec, j: usize) -> bool {
    spec.node(j).abs() < 1.0 - 0.5 * spec.s_x() - 1e-12
}

pub(crate) fn mask_image(spec: GridSpec, mut img: ArrayViewMut2<'_, f64>) {
    let nodes = spec.nodes();
    for ((r, c), v) in img.indexed_iter_mut() {
        if nodes[c] * nodes[c] + nodes[r] * nodes[r] >= 1.0 {
            *v = 0.0;
        }
    }
}

/// Bilinear interpolation of a node image at `(x, y)`, clamped to the node range.
pub fn sample_bilinear(spec: GridSpec, img: ArrayView2<'_, f64>, x: f64, y: f64) -> f64 {
    let last = (spec.n_x - 1) as f64;
    let fc = spec.index_of(x).clamp(0.0, last);
    let fr = spec.index_of(y).clamp(0.0, last);
    let (c0, r0) = (fc.floor() as usize, fr.floor() as usize);
    let (c1, r1) = ((c0 + 1).min(spec.n_x - 1), (r0 + 1).min(spec.n_x - 1));
    let (tc, tr) = (fc - c0 as f64, fr - r0 as f64);
    let top = img[[r0, c0]] * (1.0 - tc) + img[[r0, c1]] * tc;
    let bottom = img[[r1, c0]] * (1.0 - tc) + img[[r1, c1]] * tc;
    top * (1.0 - tr) + bottom * tr
}

/// Discrete `L^2(D)` pairing `s_x^2 sum a b`.
pub fn inner_scalar(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.spec.check_same(&b.spec)?;
    let s = a.spec.s_x();
    Ok(s * s * dot(a.values.iter(), b.values.iter()))
}

/// Discrete `L^2(D x S^1)` pairing `s_x^2 delta sum a b`.
pub fn inner_angular(a: &AngularField, b: &AngularField) -> Result<f64> {
    a.spec.check_same(&b.spec)?;
    let s = a.spec.s_x();
    Ok(s * s * a.spec.delta() * dot(a.values.iter(), b.values.iter()))
}

/// Discrete pairing on outgoing boundary data, `s_x delta sum a b`.
///
/// The chord coordinate already carries the `|nu . theta|` weight of the
/// boundary measure, so no extra Jacobian appears.
pub fn inner_boundary(a: &BoundaryData, b: &BoundaryData) -> Result<f64> {
    a.spec.check_same(&b.spec)?;
    Ok(a.spec.s_x() * a.spec.delta() * dot(a.values.iter(), b.values.iter()))
}

fn dot<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(x, y)| x * y).sum()
}

/// Relative L^2 distance `|a - b| / |b|` over raw arrays of equal length.
pub fn relative_l2(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    Zip::from(&a).and(&b).for_each(|x, y| {
        num += (x - y) * (x - y);
        den += y * y;
    });
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(n: usize, d: usize) -> GridSpec {
        GridSpec::new(n, d).unwrap()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(GridSpec::new(100, 128).is_err());
        assert!(GridSpec::new(256, 100).is_err());
        assert!(GridSpec::new(256, 128).is_ok());
    }

    #[test]
    fn nodes_are_midpoints() {
        let g = spec(8, 4);
        assert!((g.node(0) + 0.875).abs() < 1e-15);
        assert!((g.node(7) - 0.875).abs() < 1e-15);
        assert!((g.angle(0) - PI / 4.0).abs() < 1e-15);
        assert!((g.index_of(g.node(5)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_pairing_of_square_is_area() {
        let g = spec(256, 4);
        let one = ScalarField::from_fn(g, Support::Square, |_, _| 1.0);
        assert_eq!(inner_scalar(&one, &one).unwrap(), 4.0);
        let zero = ScalarField::zeros(g);
        assert_eq!(inner_scalar(&one, &zero).unwrap(), 0.0);
    }

    #[test]
    fn scalar_pairing_of_disk_is_pi() {
        let g = spec(256, 4);
        let disk = ScalarField::from_fn(g, Support::Disk, |_, _| 1.0);
        // Oracle: count interior midpoints directly.
        let s = g.s_x();
        let mut count = 0usize;
        for r in 0..256 {
            for c in 0..256 {
                let (x, y) = (g.node(c), g.node(r));
                if x * x + y * y < 1.0 {
                    count += 1;
                }
            }
        }
        let area = count as f64 * s * s;
        let ip = inner_scalar(&disk, &disk).unwrap();
        assert_eq!(ip, area);
        assert!((ip - PI).abs() < 0.02);
    }

    #[test]
    fn angular_pairings() {
        let g = spec(256, 8);
        let one = AngularField::from_fn(g, Support::Square, |_, _, _| 1.0);
        assert!((inner_angular(&one, &one).unwrap() - 8.0 * PI).abs() < 1e-10);
        let disk = AngularField::from_fn(g, Support::Disk, |_, _, _| 1.0);
        assert!((inner_angular(&disk, &disk).unwrap() - 2.0 * PI * PI).abs() < 0.15);
        assert_eq!(inner_angular(&one, &AngularField::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn boundary_pairings() {
        let g = spec(256, 128);
        let strip = BoundaryData::from_values(g, Array2::ones((128, 256))).unwrap();
        assert!((inner_boundary(&strip, &strip).unwrap() - 4.0 * PI).abs() < 0.01);
        let mut single = BoundaryData::zeros(g);
        single.values[[3, 17]] = 2.5;
        let expect = g.s_x() * g.delta() * 6.25;
        assert!((inner_boundary(&single, &single).unwrap() - expect).abs() < 1e-15);
        assert_eq!(inner_boundary(&strip, &BoundaryData::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_specs_are_shape_errors() {
        let a = ScalarField::zeros(spec(8, 4));
        let b = ScalarField::zeros(spec(16, 4));
        assert!(matches!(inner_scalar(&a, &b), Err(Error::Shape(_))));
        let a = AngularField::zeros(spec(8, 4));
        let b = AngularField::zeros(spec(8, 8));
        assert!(matches!(inner_angular(&a, &b), Err(Error::Shape(_))));
        let a = BoundaryData::zeros(spec(8, 4));
        let b = BoundaryData::zeros(spec(8, 8));
        assert!(matches!(inner_boundary(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn disk_support_zeroes_outside() {
        let g = spec(32, 4);
        let f = ScalarField::from_fn(g, Support::Disk, |_, _| 3.0);
        assert_eq!(f.values[[0, 0]], 0.0);
        assert_eq!(f.values[[16, 16]], 3.0);
    }
}
