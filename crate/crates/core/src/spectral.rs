//! Band-limited shifts, dilations and rotations of sampled images.
//!
//! A length-`L` vector (`L` even) is identified with its periodic spectral
//! interpolant `x~(y) = sum_l x_l D_L(y - l)`, whose frequencies are the
//! half-integer multiples `omega_k = 2 pi (k - L/2 + 1/2) / L`. Shifting and
//! dilating a vector means sampling this interpolant at new positions, which
//! is done with one FFT followed by either an inverse FFT (pure shift) or a
//! chirp-z fractional DFT (shift plus change of step).
//!
//! Rotations reduce the angle to `[-pi/4, pi/4)` with exact quarter turns and
//! then apply two 1-D resampling passes: each column is sheared and dilated in
//! `y`, then each row is sheared and dilated in `x`. Every pass pads the line
//! with zeros to twice its length first.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Energy outside the disk above this fraction of the total flags a rotation input.
pub const SUPPORT_LEAK_TOLERANCE: f64 = 1e-6;

/// `D_m(y) = sin(pi y) / (m sin(pi y / m))` for even `m`, with the removable
/// singularities filled in (`+1` at `y = 0 mod 2m`, `-1` at `y = m mod 2m`).
pub fn dirichlet_kernel(m: usize, y: f64) -> f64 {
    let mf = m as f64;
    let period = 2.0 * mf;
    let r = y - period * (y / period).round();
    if r == 0.0 {
        return 1.0;
    }
    if r.abs() == mf {
        return -1.0;
    }
    (PI * r).sin() / (mf * (PI * r / mf).sin())
}

fn fft_pair(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
}

/// Spectrum of the interpolant: `X_k = sum_j x_j exp(-i omega_k j)`.
#[derive(Clone)]
struct Spectrum {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    demodulate: Vec<Complex64>,
    omega: Vec<f64>,
}

impl Spectrum {
    fn new(len: usize) -> Self {
        let (forward, _) = fft_pair(len);
        let omega0 = lowest_frequency(len);
        let demodulate = (0..len).map(|j| Complex64::from_polar(1.0, -omega0 * j as f64)).collect();
        let omega = (0..len).map(|k| omega0 + 2.0 * PI * k as f64 / len as f64).collect();
        Self { len, forward, demodulate, omega }
    }

    fn transform(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().zip(&self.demodulate).map(|(&v, &w)| w * v).collect();
        self.forward.process(&mut buf);
        buf
    }
}

fn lowest_frequency(len: usize) -> f64 {
    2.0 * PI * (0.5 - len as f64 / 2.0) / len as f64
}

fn check_even(len: usize) -> Result<()> {
    if len == 0 || !len.is_multiple_of(2) {
        return Err(Error::Shape(format!("spectral interpolation needs an even length, got {len}")));
    }
    Ok(())
}

/// Reusable plan for [`spectral_shift`] at a fixed length.
#[derive(Clone)]
pub struct ShiftPlan {
    spectrum: Spectrum,
    inverse: Arc<dyn Fft<f64>>,
}

impl ShiftPlan {
    pub fn new(len: usize) -> Result<Self> {
        check_even(len)?;
        let (_, inverse) = fft_pair(len);
        Ok(Self { spectrum: Spectrum::new(len), inverse })
    }

    pub fn apply(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        let len = self.spectrum.len;
        if x.len() != len {
            return Err(Error::Shape(format!("shift plan for {len}, got {}", x.len())));
        }
        let mut buf = self.spectrum.transform(x);
        for (v, &w) in buf.iter_mut().zip(&self.spectrum.omega) {
            *v *= Complex64::from_polar(1.0, -w * s);
        }
        self.inverse.process(&mut buf);
        let omega0 = lowest_frequency(len);
        let scale = 1.0 / len as f64;
        Ok(buf.iter().enumerate().map(|(l, v)| (v * Complex64::from_polar(scale, omega0 * l as f64)).re).collect())
    }
}

/// Samples `x~(l - s)` for `l = 0..len`, i.e. the vector translated by `s` grid units.
pub fn spectral_shift(x: &[f64], s: f64) -> Result<Vec<f64>> {
    ShiftPlan::new(x.len())?.apply(x, s)
}

/// Smallest `2^a 3^b` that is at least `n`.
fn smooth_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut three = 1;
    while three < best {
        let mut m = three;
        while m < n {
            m *= 2;
        }
        best = best.min(m);
        three *= 3;
    }
    best
}

/// `X(l) = sum_k x(k) exp(-2 pi i alpha k l)` for `l = 0..n_out`, via Bluestein's
/// chirp factorisation `kl = (k^2 + l^2 - (l - k)^2) / 2`.
#[derive(Clone)]
pub struct FractionalDft {
    n_in: usize,
    n_out: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FractionalDft {
    pub fn new(n_in: usize, n_out: usize, alpha: f64) -> Self {
        let size = smooth_size(n_in + n_out - 1);
        let (forward, inverse) = fft_pair(size);
        let chirp = |n: usize| {
            // Reduce alpha * n^2 mod 2 before scaling by pi to keep the phase small.
            let t = (alpha * (n * n) as f64).rem_euclid(2.0);
            Complex64::from_polar(1.0, PI * t)
        };
        let pre: Vec<_> = (0..n_in).map(|k| chirp(k).conj()).collect();
        let post: Vec<_> = (0..n_out).map(|l| chirp(l).conj() / size as f64).collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); size];
        for (n, slot) in kernel.iter_mut().enumerate().take(n_out) {
            *slot = chirp(n);
        }
        for n in 1..n_in {
            kernel[size - n] = chirp(n);
        }
        forward.process(&mut kernel);
        Self { n_in, n_out, pre, post, kernel, forward, inverse }
    }

    fn size(&self) -> usize {
        self.kernel.len()
    }

    fn scratch_len(&self) -> usize {
        self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())
    }

    /// Core transform: `buf[..n_in]` holds the input on entry (the rest is
    /// ignored) and `buf[..n_out]` the output on exit.
    fn run(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        for (b, &p) in buf.iter_mut().zip(&self.pre) {
            *b *= p;
        }
        buf[self.n_in..].fill(Complex64::new(0.0, 0.0));
        self.forward.process_with_scratch(buf, scratch);
        for (b, &k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.inverse.process_with_scratch(buf, scratch);
        for (b, &p) in buf.iter_mut().zip(&self.post) {
            *b *= p;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n_in, "fractional DFT input length");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size()];
        buf[..self.n_in].copy_from_slice(x);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len()];
        self.run(&mut buf, &mut scratch);
        buf.truncate(self.n_out);
        buf
    }
}

/// N-point fractional DFT with coefficient `alpha` (same number of outputs as inputs).
pub fn fractional_dft(x: &[Complex64], alpha: f64) -> Vec<Complex64> {
    FractionalDft::new(x.len(), x.len(), alpha).apply(x)
}

/// Multiplies `buf[k]` by `exp(i (omega0 + 2 pi k / len) s)` using a rotation
/// recurrence that is re-anchored every 32 entries.
fn apply_linear_phase(buf: &mut [Complex64], omega0: f64, s: f64) {
    let len = buf.len() as f64;
    let step = Complex64::from_polar(1.0, 2.0 * PI * s / len);
    for (block, chunk) in buf.chunks_mut(32).enumerate() {
        let k0 = (block * 32) as f64;
        let mut ph = Complex64::from_polar(1.0, (omega0 + 2.0 * PI * k0 / len) * s);
        for v in chunk {
            *v *= ph;
            ph *= step;
        }
    }
}

/// Buffers reused across [`Resampler`] calls.
pub struct ResampleScratch {
    spectrum: Vec<Complex64>,
    zoom: Vec<Complex64>,
    fft: Vec<Complex64>,
}

/// Samples of the spectral interpolant of a length-`2m` vector at the `m`
/// points `s + h l`, `l = 0..m`. Plans are tied to `(len, h)`; the offset
/// varies per call.
#[derive(Clone)]
pub struct Resampler {
    spectrum: Spectrum,
    zoom: FractionalDft,
    remodulate: Vec<Complex64>,
}

impl Resampler {
    pub fn new(len: usize, h: f64) -> Result<Self> {
        check_even(len)?;
        let zoom = FractionalDft::new(len, len / 2, -h / len as f64);
        let omega0 = lowest_frequency(len);
        let remodulate = (0..len / 2).map(|l| Complex64::from_polar(1.0 / len as f64, omega0 * h * l as f64)).collect();
        Ok(Self { spectrum: Spectrum::new(len), zoom, remodulate })
    }

    pub fn input_len(&self) -> usize {
        self.spectrum.len
    }

    pub fn scratch(&self) -> ResampleScratch {
        let fft_len = self.zoom.scratch_len().max(self.spectrum.forward.get_inplace_scratch_len());
        ResampleScratch {
            spectrum: vec![Complex64::new(0.0, 0.0); self.spectrum.len],
            zoom: vec![Complex64::new(0.0, 0.0); self.zoom.size()],
            fft: vec![Complex64::new(0.0, 0.0); fft_len],
        }
    }

    pub fn apply(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let mut ws = self.scratch();
        self.apply_with(x, s, out, &mut ws);
    }

    pub fn apply_with(&self, x: &[f64], s: f64, out: &mut [f64], ws: &mut ResampleScratch) {
        let len = self.spectrum.len;
        debug_assert_eq!(x.len(), len);
        debug_assert_eq!(out.len(), len / 2);
        for ((b, &v), &w) in ws.spectrum.iter_mut().zip(x).zip(&self.spectrum.demodulate) {
            *b = w * v;
        }
        let fft_scratch = &mut ws.fft[..self.spectrum.forward.get_inplace_scratch_len()];
        self.spectrum.forward.process_with_scratch(&mut ws.spectrum, fft_scratch);
        apply_linear_phase(&mut ws.spectrum, lowest_frequency(len), s);
        ws.zoom[..len].copy_from_slice(&ws.spectrum);
        self.zoom.run(&mut ws.zoom, &mut ws.fft);
        for ((o, z), r) in out.iter_mut().zip(&ws.zoom).zip(&self.remodulate) {
            *o = (z * r).re;
        }
    }
}

/// Resamples a length-`2m` vector at `s + h l`, `l = 0..m` (a dilation by `h`
/// composed with a shift by `s`).
pub fn dilate_and_shift(x: &[f64], s: f64, h: f64) -> Result<Vec<f64>> {
    let r = Resampler::new(x.len(), h)?;
    let mut out = vec![0.0; x.len() / 2];
    r.apply(x, s, &mut out);
    Ok(out)
}

/// Vertical shear `(x, y) -> (x, y - alpha x)` of an image already padded to
/// `2n` rows by `n` columns: column `c` becomes the old column sampled at
/// `y + alpha x_c`.
pub fn shear_y(padded: ArrayView2<'_, f64>, alpha: f64) -> Result<Array2<f64>> {
    let (rows, cols) = padded.dim();
    if rows != 2 * cols {
        return Err(Error::Shape(format!("shear_y expects a {}x{} padded image, got {rows}x{cols}", 2 * cols, cols)));
    }
    let spec = GridSpec { n_x: cols, n_d: 1 };
    let plan = ShiftPlan::new(rows)?;
    let mut out = Array2::zeros((rows, cols));
    for (c, col) in padded.axis_iter(Axis(1)).enumerate() {
        let shift = -alpha * spec.node(c) / spec.s_x();
        let line: Vec<f64> = col.iter().copied().collect();
        let shifted = plan.apply(&line, shift)?;
        out.column_mut(c).iter_mut().zip(shifted).for_each(|(o, v)| *o = v);
    }
    Ok(out)
}

/// Precomputed rotation `img -> img o R_eta` on an `n x n` midpoint grid.
///
/// The output at node `p` is the input's band-limited interpolant at `R_eta p`,
/// where `R_eta` is the counterclockwise rotation by `eta`.
#[derive(Clone)]
pub struct RotationPlan {
    n: usize,
    pub angle: f64,
    pub quarter_turns: u8,
    pub residual: f64,
    passes: Option<(Resampler, Resampler)>,
}

impl RotationPlan {
    pub fn new(n: usize, angle: f64) -> Result<Self> {
        check_even(n)?;
        let turns = ((angle + FRAC_PI_4) / FRAC_PI_2).floor();
        let mut residual = angle - turns * FRAC_PI_2;
        if residual.abs() < 1e-14 {
            residual = 0.0;
        }
        let quarter_turns = turns.rem_euclid(4.0) as u8;
        let passes = if residual == 0.0 {
            None
        } else {
            let c = residual.cos();
            Some((Resampler::new(2 * n, 1.0 / c)?, Resampler::new(2 * n, c)?))
        };
        Ok(Self { n, angle, quarter_turns, residual, passes })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Shear/dilation coefficients `(tan, cos, -sin, 1/cos)` of the residual angle.
    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        let (s, c) = self.residual.sin_cos();
        (s / c, c, -s, 1.0 / c)
    }

    pub fn apply(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        self.apply_into(input, out.view_mut());
        out
    }

    pub fn apply_into(&self, input: ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
        let n = self.n;
        assert_eq!(input.dim(), (n, n), "rotation plan size");
        let turned = quarter_turn(input, self.quarter_turns);
        let Some((pass_y, pass_x)) = &self.passes else {
            out.assign(&turned);
            return;
        };
        let spec = GridSpec { n_x: n, n_d: 1 };
        let s_x = spec.s_x();
        let (sin, cos) = self.residual.sin_cos();
        let tan = sin / cos;
        let pad = n / 2;
        let mut line = vec![0.0; 2 * n];
        let mut res = vec![0.0; n];
        let mut ws_y = pass_y.scratch();
        let mut ws_x = pass_x.scratch();

        // Pass 1: G(x, y) = img(x, x tan + y / cos), column by column.
        let mut stage = Array2::<f64>::zeros((n, n));
        for c in 0..n {
            let col = turned.column(c);
            if col.iter().all(|&v| v == 0.0) {
                continue;
            }
            line.iter_mut().for_each(|v| *v = 0.0);
            line[pad..pad + n].iter_mut().zip(col).for_each(|(l, &v)| *l = v);
            let start = (spec.node(c) * tan + 1.0 - 1.0 / cos) / s_x + 0.5 / cos - 0.5;
            pass_y.apply_with(&line, start + pad as f64, &mut res, &mut ws_y);
            stage.column_mut(c).iter_mut().zip(&res).for_each(|(o, &v)| *o = v);
        }

        // Pass 2: F(x, y) = G(x cos - y sin, y), row by row.
        for r in 0..n {
            let row = stage.row(r);
            let mut dst = out.row_mut(r);
            if row.iter().all(|&v| v == 0.0) {
                dst.fill(0.0);
                continue;
            }
            line.iter_mut().for_each(|v| *v = 0.0);
            line[pad..pad + n].iter_mut().zip(row).for_each(|(l, &v)| *l = v);
            let start = (1.0 - cos - spec.node(r) * sin) / s_x + 0.5 * cos - 0.5;
            pass_x.apply_with(&line, start + pad as f64, &mut res, &mut ws_x);
            dst.iter_mut().zip(&res).for_each(|(o, &v)| *o = v);
        }
    }
}

/// Exact rotation by `turns` quarter turns: `out(p) = img(R_{turns pi/2} p)`.
pub fn quarter_turn(img: ArrayView2<'_, f64>, turns: u8) -> Array2<f64> {
    let n = img.nrows();
    let last = n - 1;
    match turns % 4 {
        0 => img.to_owned(),
        1 => Array2::from_shape_fn((n, n), |(r, c)| img[[c, last - r]]),
        2 => Array2::from_shape_fn((n, n), |(r, c)| img[[last - r, last - c]]),
        _ => Array2::from_shape_fn((n, n), |(r, c)| img[[last - c, r]]),
    }
}

/// Result of [`rotate`]: the rotated samples plus a support diagnostic.
#[derive(Debug, Clone)]
pub struct Rotated {
    pub field: ScalarField,
    /// Fraction of the input energy lying outside the unit disk.
    pub outside_energy: f64,
}

impl Rotated {
    pub fn support_warning(&self) -> bool {
        self.outside_energy > SUPPORT_LEAK_TOLERANCE
    }
}

/// Samples of `p -> img(R_eta p)` on the same grid.
pub fn rotate(img: &ScalarField, angle: f64) -> Result<Rotated> {
    let plan = RotationPlan::new(img.spec.n_x, angle)?;
    let values = plan.apply(img.values.view());
    Ok(Rotated { field: ScalarField { spec: img.spec, values }, outside_energy: outside_energy(img) })
}

fn outside_energy(img: &ScalarField) -> f64 {
    let nodes = img.spec.nodes();
    let (mut out, mut total) = (0.0, 0.0);
    for ((r, c), v) in img.values.indexed_iter() {
        let e = v * v;
        total += e;
        if nodes[r] * nodes[r] + nodes[c] * nodes[c] >= 1.0 {
            out += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        out / total
    }
}
