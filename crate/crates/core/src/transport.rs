//! Per-direction transport kernels.
//!
//! Every direction `eta_i` is handled in its own rotated frame, where the
//! transport derivative `theta . grad` becomes `d/dx` and the outflow edge of
//! the square is its last column. A field `g(., eta_i)` enters the frame via
//! [`RotationPlan`] at `eta_i`, is swept along rows with explicit Euler, and
//! leaves via the plan at `-eta_i`.
//!
//! Swept solutions are constant along rays outside the disk, so before a
//! rotated-frame image is rotated back it is multiplied by a smooth radial
//! halo (1 on the disk, 0 beyond radius `1 + HALO_WIDTH`). Everything that
//! consumes the result (scattering, attenuation, the source pairing) is
//! supported in the disk.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayViewMut2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{chord_is_live, sample_bilinear, AngularField, BoundaryData, GridSpec, ScalarField};
use crate::spectral::RotationPlan;

/// Radial width of the smooth falloff applied outside the unit disk.
pub const HALO_WIDTH: f64 = 0.125;

/// Scattering kernel `k(x, theta_out, theta_in)`.
#[derive(Debug, Clone)]
pub enum ScatteringKernel {
    None,
    /// `spatial(x) * angular[out, in]`.
    Separable {
        spatial: ScalarField,
        angular: Array2<f64>,
    },
    /// Full table indexed `[y, x, out, in]`.
    Dense(Array4<f64>),
}

impl ScatteringKernel {
    /// Separable kernel whose angular part depends only on `theta_out . theta_in`.
    pub fn from_phase(spatial: ScalarField, phase: impl Fn(f64) -> f64) -> Self {
        let spec = spatial.spec;
        let angular =
            Array2::from_shape_fn((spec.n_d, spec.n_d), |(i, j)| phase((spec.angle(i) - spec.angle(j)).cos()));
        ScatteringKernel::Separable { spatial, angular }
    }

    /// `k` at node `(row, col)` for outgoing direction `out` and incoming `inc`.
    pub fn eval(&self, row: usize, col: usize, out: usize, inc: usize) -> f64 {
        match self {
            ScatteringKernel::None => 0.0,
            ScatteringKernel::Separable { spatial, angular } => spatial.values[[row, col]] * angular[[out, inc]],
            ScatteringKernel::Dense(t) => t[[row, col, out, inc]],
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ScatteringKernel::None)
    }

    fn validate(&self, spec: GridSpec) -> Result<()> {
        fn nonneg<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
            it.all(|v| v.is_finite() && *v >= 0.0)
        }
        match self {
            ScatteringKernel::None => Ok(()),
            ScatteringKernel::Separable { spatial, angular } => {
                spatial.spec.check_same(&spec)?;
                if angular.dim() != (spec.n_d, spec.n_d) {
                    return Err(Error::Shape(format!("angular kernel {:?}", angular.dim())));
                }
                if !nonneg(spatial.values.iter()) || !nonneg(angular.iter()) {
                    return Err(Error::Invalid("scattering kernel must be finite and >= 0".into()));
                }
                check_disk_support(spec, spatial.values.view(), "scattering kernel")
            }
            ScatteringKernel::Dense(t) => {
                if t.dim() != (spec.n_x, spec.n_x, spec.n_d, spec.n_d) {
                    return Err(Error::Shape(format!("dense kernel {:?}", t.dim())));
                }
                if !nonneg(t.iter()) {
                    return Err(Error::Invalid("scattering kernel must be finite and >= 0".into()));
                }
                let nodes = spec.nodes();
                for ((r, c, _, _), v) in t.indexed_iter() {
                    if *v != 0.0 && nodes[r].powi(2) + nodes[c].powi(2) >= 1.0 {
                        return Err(Error::Invalid("scattering kernel leaves the unit disk".into()));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Absorption and scattering of the medium.
#[derive(Debug, Clone)]
pub struct MediumSpec {
    pub sigma: AngularField,
    pub kernel: ScatteringKernel,
}

impl MediumSpec {
    pub fn new(sigma: AngularField, kernel: ScatteringKernel) -> Result<Self> {
        let spec = sigma.spec;
        if !sigma.values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::Invalid("absorption must be finite and >= 0".into()));
        }
        for d in 0..spec.n_d {
            check_disk_support(spec, sigma.slice(d), "absorption")?;
        }
        let worst = spec.s_x() * sigma.max().max(0.0);
        if worst >= 1.0 {
            return Err(Error::Unstable(worst));
        }
        kernel.validate(spec)?;
        Ok(Self { sigma, kernel })
    }

    /// No absorption, no scattering.
    pub fn vacuum(spec: GridSpec) -> Self {
        Self { sigma: AngularField::zeros(spec), kernel: ScatteringKernel::None }
    }

    /// `sigma = c` on the open disk, no scattering.
    pub fn constant_absorption(spec: GridSpec, c: f64) -> Result<Self> {
        let sigma = AngularField::from_fn(spec, crate::grid::Support::Disk, |_, _, _| c);
        Self::new(sigma, ScatteringKernel::None)
    }

    pub fn spec(&self) -> GridSpec {
        self.sigma.spec
    }
}

fn check_disk_support(spec: GridSpec, img: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    let nodes = spec.nodes();
    for ((r, c), v) in img.indexed_iter() {
        if *v != 0.0 && nodes[r].powi(2) + nodes[c].powi(2) >= 1.0 {
            return Err(Error::Invalid(format!("{what} is not supported in the unit disk")));
        }
    }
    Ok(())
}

/// Smooth cutoff on the outgoing boundary `{(boundary point, theta) : nu . theta > 0}`.
///
/// The value factors into a taper in the boundary position angle over
/// `[arc_start, arc_end]` and a taper in `nu . theta`. Both tapers are
/// `sin^2` ramps of the stated widths; a width of zero means a sharp edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub arc_start: f64,
    pub arc_end: f64,
    pub taper_pos: f64,
    pub taper_dir: f64,
    #[serde(default = "default_true")]
    pub outward_only: bool,
}

fn default_true() -> bool {
    true
}

impl CutoffSpec {
    /// Arc `[start, end]` with the default tapers (5% of the arc, 0.1 in `nu . theta`).
    pub fn arc(arc_start: f64, arc_end: f64) -> Self {
        Self {
            arc_start,
            arc_end,
            taper_pos: 0.05 * (arc_end - arc_start).max(0.0),
            taper_dir: 0.1,
            outward_only: true,
        }
    }

    /// Measurements on the whole outgoing boundary.
    pub fn full() -> Self {
        Self { arc_start: 0.0, arc_end: 2.0 * PI, taper_pos: 0.0, taper_dir: 0.0, outward_only: true }
    }

    /// No measurements at all.
    pub fn empty() -> Self {
        Self { arc_start: 0.0, arc_end: 0.0, taper_pos: 0.0, taper_dir: 0.0, outward_only: true }
    }

    /// The arc `arg(boundary point) in [0, pi/3]` used for the worked examples.
    pub fn examples() -> Self {
        Self::arc(0.0, PI / 3.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.arc_start, self.arc_end, self.taper_pos, self.taper_dir].iter().all(|v| v.is_finite());
        if !ok || self.taper_pos < 0.0 || self.taper_dir < 0.0 {
            return Err(Error::Invalid(format!("bad cutoff {self:?}")));
        }
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        self.arc_end - self.arc_start >= 2.0 * PI && self.taper_dir == 0.0
    }

    fn position_factor(&self, angle: f64) -> f64 {
        let len = self.arc_end - self.arc_start;
        if len <= 0.0 {
            return 0.0;
        }
        if len >= 2.0 * PI {
            return 1.0;
        }
        let t = (angle - self.arc_start).rem_euclid(2.0 * PI);
        if t > len {
            return 0.0;
        }
        if self.taper_pos == 0.0 {
            return 1.0;
        }
        ramp(t / self.taper_pos) * ramp((len - t) / self.taper_pos)
    }

    fn direction_factor(&self, nu_dot_theta: f64) -> f64 {
        let d = if self.outward_only { nu_dot_theta } else { nu_dot_theta.abs() };
        if d <= 1e-12 {
            return 0.0;
        }
        if self.taper_dir == 0.0 {
            return 1.0;
        }
        ramp(d / self.taper_dir)
    }
}

fn ramp(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        (FRAC_PI_2 * u).sin().powi(2)
    }
}

/// `chi_V` at the boundary point with polar angle `boundary_angle` for direction `eta`.
pub fn cutoff_chi(spec: &CutoffSpec, boundary_angle: f64, eta: f64) -> f64 {
    let nu_dot_theta = (eta - boundary_angle).cos();
    spec.position_factor(boundary_angle) * spec.direction_factor(nu_dot_theta)
}

/// `chi_V` at a boundary point given in coordinates.
fn cutoff_at_point(spec: &CutoffSpec, p: [f64; 2], theta: [f64; 2]) -> f64 {
    let angle = p[1].atan2(p[0]);
    spec.position_factor(angle) * spec.direction_factor(p[0] * theta[0] + p[1] * theta[1])
}

/// Distance from `x` along `theta` to the unit circle.
pub fn tau_plus(x: [f64; 2], theta: [f64; 2]) -> Result<f64> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("point ({}, {}) lies outside the unit disk", x[0], x[1])));
    }
    let b = x[0] * theta[0] + x[1] * theta[1];
    Ok(-b + (b * b + (1.0 - r2).max(0.0)).sqrt())
}

/// `chi_V^#(x, theta) = chi_V(x + tau_+(x, theta) theta, theta)`.
pub fn cutoff_chi_sharp_at(spec: &CutoffSpec, x: [f64; 2], theta: [f64; 2]) -> Result<f64> {
    let t = tau_plus(x, theta)?;
    let exit = [x[0] + t * theta[0], x[1] + t * theta[1]];
    Ok(cutoff_at_point(spec, exit, theta))
}

/// `chi_V^#` tabulated on the grid (zero outside the disk).
pub fn cutoff_chi_sharp(spec: &CutoffSpec, grid: GridSpec) -> AngularField {
    AngularField::from_fn(grid, crate::grid::Support::Disk, |x, y, eta| {
        cutoff_chi_sharp_at(spec, [x, y], [eta.cos(), eta.sin()]).unwrap_or(0.0)
    })
}

/// `chi_V` on the chord parametrisation of [`BoundaryData`]: entry `(i, j)`
/// belongs to the exit point `sqrt(1 - y_j^2) theta_i + y_j theta_i_perp`.
pub fn boundary_cutoff(spec: &CutoffSpec, grid: GridSpec) -> BoundaryData {
    BoundaryData::from_fn(grid, |eta, y| {
        let c = (1.0 - y * y).sqrt();
        let (s_eta, c_eta) = eta.sin_cos();
        let p = [c * c_eta - y * s_eta, c * s_eta + y * c_eta];
        cutoff_at_point(spec, p, [c_eta, s_eta])
    })
}

/// Explicit Euler for `du/dx + sigma u = g` along each row, `u(x_0) = 0`.
pub fn sweep_forward(g: ArrayView2<'_, f64>, sigma: ArrayView2<'_, f64>, s_x: f64) -> Result<Array2<f64>> {
    let mut u = Array2::zeros(g.dim());
    sweep_forward_into(g, sigma, s_x, u.view_mut())?;
    Ok(u)
}

fn check_sweep(g: ArrayView2<'_, f64>, sigma: ArrayView2<'_, f64>, s_x: f64) -> Result<()> {
    if g.dim() != sigma.dim() {
        return Err(Error::Shape(format!("sweep source {:?} vs absorption {:?}", g.dim(), sigma.dim())));
    }
    let worst = s_x * sigma.iter().copied().fold(0.0, f64::max);
    if worst >= 1.0 {
        return Err(Error::Unstable(worst));
    }
    Ok(())
}

fn sweep_forward_into(
    g: ArrayView2<'_, f64>,
    sigma: ArrayView2<'_, f64>,
    s_x: f64,
    mut u: ArrayViewMut2<'_, f64>,
) -> Result<()> {
    check_sweep(g, sigma, s_x)?;
    let n = g.ncols();
    for ((gr, sr), mut ur) in g.outer_iter().zip(sigma.outer_iter()).zip(u.outer_iter_mut()) {
        ur[0] = 0.0;
        for j in 1..n {
            ur[j] = ur[j - 1] + s_x * (gr[j - 1] - sr[j - 1] * ur[j - 1]);
        }
    }
    Ok(())
}

/// Exact transpose of [`sweep_forward`]: `-dw/dx + sigma w = v`, `w(x_last) = 0`.
pub fn sweep_backward(v: ArrayView2<'_, f64>, sigma: ArrayView2<'_, f64>, s_x: f64) -> Result<Array2<f64>> {
    let mut w = Array2::zeros(v.dim());
    sweep_backward_into(v, sigma, s_x, w.view_mut())?;
    Ok(w)
}

fn sweep_backward_into(
    v: ArrayView2<'_, f64>,
    sigma: ArrayView2<'_, f64>,
    s_x: f64,
    mut w: ArrayViewMut2<'_, f64>,
) -> Result<()> {
    check_sweep(v, sigma, s_x)?;
    let n = v.ncols();
    for ((vr, sr), mut wr) in v.outer_iter().zip(sigma.outer_iter()).zip(w.outer_iter_mut()) {
        wr[n - 1] = 0.0;
        for j in (0..n - 1).rev() {
            wr[j] = wr[j + 1] + s_x * (vr[j + 1] - sr[j + 1] * wr[j + 1]);
        }
    }
    Ok(())
}

/// Radial falloff `1` on the disk, `cos^2` to `0` at `1 + HALO_WIDTH`.
pub fn halo(spec: GridSpec) -> Array2<f64> {
    let nodes = spec.nodes();
    Array2::from_shape_fn((spec.n_x, spec.n_x), |(r, c)| {
        let rho = (nodes[r].powi(2) + nodes[c].powi(2)).sqrt();
        if rho <= 1.0 {
            1.0
        } else if rho >= 1.0 + HALO_WIDTH {
            0.0
        } else {
            (FRAC_PI_2 * (rho - 1.0) / HALO_WIDTH).cos().powi(2)
        }
    })
}

/// Precomputed per-direction rotation plans, rotated absorption and attenuation.
pub struct Propagator {
    spec: GridSpec,
    into_frame: Vec<RotationPlan>,
    out_of_frame: Vec<RotationPlan>,
    sigma_rot: Vec<Array2<f64>>,
    atten: AngularField,
    halo: Array2<f64>,
}

impl Propagator {
    pub fn new(medium: &MediumSpec) -> Result<Self> {
        let spec = medium.spec();
        let n = spec.n_x;
        let s_x = spec.s_x();
        let plans: Vec<(RotationPlan, RotationPlan)> = (0..spec.n_d)
            .map(|i| {
                let eta = spec.angle(i);
                Ok((RotationPlan::new(n, eta)?, RotationPlan::new(n, -eta)?))
            })
            .collect::<Result<_>>()?;
        let (into_frame, out_of_frame): (Vec<_>, Vec<_>) = plans.into_iter().unzip();
        let sigma_rot: Vec<Array2<f64>> =
            (0..spec.n_d).into_par_iter().map(|i| into_frame[i].apply(medium.sigma.slice(i))).collect();
        let halo = halo(spec);
        let mut atten = AngularField::zeros(spec);
        if medium.sigma.values.iter().any(|&v| v != 0.0) {
            atten.values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut dst)| {
                // Rotate the deficit E - 1, which vanishes downstream of the disk.
                let mut deficit = Array2::zeros((n, n));
                for (sr, mut er) in sigma_rot[i].outer_iter().zip(deficit.outer_iter_mut()) {
                    let mut acc = 0.0;
                    for j in (0..n).rev() {
                        er[j] = (-s_x * acc).exp() - 1.0;
                        acc += sr[j];
                    }
                }
                deficit *= &halo;
                out_of_frame[i].apply_into(deficit.view(), dst.view_mut());
            });
        }
        atten.values.mapv_inplace(|v| v + 1.0);
        Ok(Self { spec, into_frame, out_of_frame, sigma_rot, atten, halo })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn rotate_into_frame(&self, i: usize, img: ArrayView2<'_, f64>) -> Array2<f64> {
        self.into_frame[i].apply(img)
    }

    fn leave_frame(&self, i: usize, mut img: Array2<f64>, out: ArrayViewMut2<'_, f64>) {
        img *= &self.halo;
        self.out_of_frame[i].apply_into(img.view(), out);
    }

    /// `T1^{-1}` applied to `source(i)` for every direction; also returns the
    /// outflow-edge column of each rotated-frame solution.
    fn solve<'a, F>(&self, source: F) -> Result<(AngularField, BoundaryData)>
    where
        F: Fn(usize) -> ArrayView2<'a, f64> + Sync,
    {
        let spec = self.spec;
        let mut u = AngularField::zeros(spec);
        let mut exit = BoundaryData::zeros(spec);
        let last = spec.n_x - 1;
        u.values
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(exit.values.axis_iter_mut(Axis(0)).into_par_iter())
            .enumerate()
            .try_for_each(|(i, (dst, mut edge))| -> Result<()> {
                let g_rot = self.into_frame[i].apply(source(i));
                let u_rot = sweep_forward(g_rot.view(), self.sigma_rot[i].view(), spec.s_x())?;
                for (j, e) in edge.iter_mut().enumerate() {
                    *e = if chord_is_live(spec, j) { u_rot[[j, last]] } else { 0.0 };
                }
                self.leave_frame(i, u_rot, dst);
                Ok(())
            })?;
        Ok((u, exit))
    }

    /// `T1^{-1} g` together with the exiting boundary values.
    pub fn apply_t1_inv(&self, g: &AngularField) -> Result<(AngularField, BoundaryData)> {
        self.spec.check_same(&g.spec)?;
        self.solve(|i| g.slice(i))
    }

    /// `T1^{-1} J f`.
    pub fn apply_t1_inv_isotropic(&self, f: &ScalarField) -> Result<(AngularField, BoundaryData)> {
        self.spec.check_same(&f.spec)?;
        self.solve(|_| f.values.view())
    }

    /// `[T1^{-1}]^* v`: rotate, transposed sweep, rotate back.
    pub fn apply_t1_inv_adjoint(&self, v: &AngularField) -> Result<AngularField> {
        self.spec.check_same(&v.spec)?;
        let spec = self.spec;
        let mut w = AngularField::zeros(spec);
        w.values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().try_for_each(|(i, dst)| -> Result<()> {
            let v_rot = self.into_frame[i].apply(v.slice(i));
            let w_rot = sweep_backward(v_rot.view(), self.sigma_rot[i].view(), spec.s_x())?;
            self.leave_frame(i, w_rot, dst);
            Ok(())
        })?;
        Ok(w)
    }

    /// Spreads each boundary row back along its rays by linear interpolation
    /// in the chord coordinate `y = x . theta_perp`, optionally weighted by `E`.
    pub fn lift_boundary(&self, b: &BoundaryData, attenuate: bool) -> Result<AngularField> {
        self.spec.check_same(&b.spec)?;
        let spec = self.spec;
        let nodes = spec.nodes();
        let mut out = AngularField::zeros(spec);
        if spec.n_x < 4 {
            return Ok(out);
        }
        out.values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut dst)| {
            let row = b.values.row(i);
            let (s_eta, c_eta) = spec.angle(i).sin_cos();
            for ((r, c), v) in dst.indexed_iter_mut() {
                // Outermost chords are dead; rays beyond the last live chord reuse it.
                let t = spec.index_of(-nodes[c] * s_eta + nodes[r] * c_eta).clamp(1.0, (spec.n_x - 2) as f64);
                let j = (t.floor() as usize).min(spec.n_x - 3);
                let w = t - j as f64;
                let mut lifted = (1.0 - w) * row[j] + w * row[j + 1];
                lifted *= self.halo[[r, c]];
                if attenuate {
                    lifted *= self.atten.values[[i, r, c]];
                }
                *v = lifted;
            }
        });
        Ok(out)
    }

    /// Value of `u` where each chord leaves the disk, read bilinearly one cell
    /// upstream of the exit point (the rotated frame ends at the exit itself).
    pub fn restrict_boundary(&self, u: &AngularField) -> Result<BoundaryData> {
        self.spec.check_same(&u.spec)?;
        let spec = self.spec;
        let mut out = BoundaryData::zeros(spec);
        out.values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            let (s_eta, c_eta) = spec.angle(i).sin_cos();
            let img = u.slice(i);
            for (j, v) in row.iter_mut().enumerate() {
                if chord_is_live(spec, j) {
                    let y = spec.node(j);
                    let a = (1.0 - y * y).sqrt() - spec.s_x();
                    *v = sample_bilinear(spec, img, a * c_eta - y * s_eta, a * s_eta + y * c_eta);
                }
            }
        });
        Ok(out)
    }

    /// `E(x, theta)` in the fixed frame; reads 1 beyond the halo.
    pub fn attenuation(&self) -> &AngularField {
        &self.atten
    }
}

/// `T1^{-1} g` on its own (plans are rebuilt on each call).
pub fn apply_t1_inv(g: &AngularField, medium: &MediumSpec) -> Result<AngularField> {
    Ok(Propagator::new(medium)?.apply_t1_inv(g)?.0)
}

pub fn apply_t1_inv_adjoint(v: &AngularField, medium: &MediumSpec) -> Result<AngularField> {
    Propagator::new(medium)?.apply_t1_inv_adjoint(v)
}

pub fn attenuation_e(medium: &MediumSpec) -> Result<AngularField> {
    Ok(Propagator::new(medium)?.attenuation().clone())
}

/// Broadcasts boundary values back along rays (no attenuation, no cutoff).
pub fn extend_boundary(b: &BoundaryData) -> Result<AngularField> {
    Propagator::new(&MediumSpec::vacuum(b.spec))?.lift_boundary(b, false)
}

pub fn restrict_boundary(u: &AngularField) -> Result<BoundaryData> {
    Propagator::new(&MediumSpec::vacuum(u.spec))?.restrict_boundary(u)
}

fn apply_angular(u: &AngularField, kernel: &ScatteringKernel, transpose: bool) -> Result<AngularField> {
    let spec = u.spec;
    let delta = spec.delta();
    let npix = spec.n_x * spec.n_x;
    match kernel {
        ScatteringKernel::None => Ok(AngularField::zeros(spec)),
        ScatteringKernel::Separable { spatial, angular } => {
            spatial.spec.check_same(&spec)?;
            let mat = if transpose { angular.t().to_owned() } else { angular.clone() };
            let flat_in =
                u.values.view().into_shape_with_order((spec.n_d, npix)).map_err(|e| Error::Shape(e.to_string()))?;
            let mut flat_out = Array2::<f64>::zeros((spec.n_d, npix));
            general_mat_mul(delta, &mat, &flat_in, 0.0, &mut flat_out);
            let weight = spatial.values.view().into_shape_with_order(npix).map_err(|e| Error::Shape(e.to_string()))?;
            for mut row in flat_out.outer_iter_mut() {
                Zip::from(&mut row).and(&weight).for_each(|o, &k| *o *= k);
            }
            let values = flat_out
                .into_shape_with_order((spec.n_d, spec.n_x, spec.n_x))
                .map_err(|e| Error::Shape(e.to_string()))?;
            AngularField::from_values(spec, values)
        }
        ScatteringKernel::Dense(table) => {
            let mut out = AngularField::zeros(spec);
            for r in 0..spec.n_x {
                for c in 0..spec.n_x {
                    let k = table.slice(ndarray::s![r, c, .., ..]);
                    let col: Array1<f64> = u.values.slice(ndarray::s![.., r, c]).to_owned();
                    let prod = if transpose { k.t().dot(&col) } else { k.dot(&col) };
                    out.values.slice_mut(ndarray::s![.., r, c]).assign(&(prod * delta));
                }
            }
            Ok(out)
        }
    }
}

/// `K_delta u(x, eta_i) = delta sum_j k(x, eta_i, eta_j) u(x, eta_j)`.
pub fn apply_k(u: &AngularField, medium: &MediumSpec) -> Result<AngularField> {
    u.spec.check_same(&medium.spec())?;
    apply_angular(u, &medium.kernel, false)
}

/// `K_delta^* v(x, eta_i) = delta sum_j k(x, eta_j, eta_i) v(x, eta_j)`.
pub fn apply_k_adjoint(v: &AngularField, medium: &MediumSpec) -> Result<AngularField> {
    v.spec.check_same(&medium.spec())?;
    apply_angular(v, &medium.kernel, true)
}

/// `J f(x, theta) = f(x)`.
pub fn extend_j(f: &ScalarField) -> AngularField {
    let spec = f.spec;
    let values = f.values.broadcast((spec.n_d, spec.n_x, spec.n_x)).expect("broadcast").to_owned();
    AngularField { spec, values }
}

/// `J^* g = delta sum_i g(., eta_i)`, summed in direction order.
pub fn collapse_j_adjoint(g: &AngularField) -> ScalarField {
    let spec = g.spec;
    let mut acc = Array2::zeros((spec.n_x, spec.n_x));
    for slice in g.values.outer_iter() {
        acc += &slice;
    }
    acc *= spec.delta();
    ScalarField { spec, values: acc }
}
