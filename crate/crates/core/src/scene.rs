//! Phantoms, example media, the Henyey-Greenstein phase function and the noise model.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{chord_is_live, AngularField, BoundaryData, GridSpec, ScalarField, Support};
use crate::transport::{MediumSpec, ScatteringKernel};

/// Identifier of the generator behind [`add_noise`].
pub const NOISE_ALGORITHM: &str = "ChaCha8Rng/StandardNormal";

/// Anisotropy of the example medium.
pub const EXAMPLE_ANISOTROPY: f64 = 0.85;

/// `(1 / 2 pi) (1 - g^2) / (1 + g^2 - 2 g cos phi)`.
pub fn henyey_greenstein(cos_phi: f64, g: f64) -> Result<f64> {
    if g.is_nan() || g.abs() >= 1.0 {
        return Err(Error::Domain(format!("anisotropy g = {g} must satisfy |g| < 1")));
    }
    if !(-1.0..=1.0).contains(&cos_phi) {
        return Err(Error::Domain(format!("cos(phi) = {cos_phi} outside [-1, 1]")));
    }
    Ok((1.0 - g * g) / (2.0 * PI * (1.0 + g * g - 2.0 * g * cos_phi)))
}

/// `sigma = 0.5 (0.05 + cos^2(xy)) sin^2(eta)` and
/// `k = (0.05 + sin^2(xy)) * HG_{0.85}(theta . theta')`, both cut to the disk.
pub fn example_medium(grid: GridSpec) -> Result<MediumSpec> {
    let sigma = AngularField::from_fn(grid, Support::Disk, |x, y, eta| {
        0.5 * (0.05 + (x * y).cos().powi(2)) * eta.sin().powi(2)
    });
    let spatial = ScalarField::from_fn(grid, Support::Disk, |x, y| 0.05 + (x * y).sin().powi(2));
    let kernel = ScatteringKernel::from_phase(spatial, |c| {
        henyey_greenstein(c.clamp(-1.0, 1.0), EXAMPLE_ANISOTROPY).expect("|g| < 1")
    });
    MediumSpec::new(sigma, kernel)
}

/// Named media used by the command line and the examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum MediumPreset {
    Vacuum,
    Absorbing { sigma: f64 },
    Example,
}

impl MediumPreset {
    pub fn build(&self, grid: GridSpec) -> Result<MediumSpec> {
        match *self {
            MediumPreset::Vacuum => Ok(MediumSpec::vacuum(grid)),
            MediumPreset::Absorbing { sigma } => MediumSpec::constant_absorption(grid, sigma),
            MediumPreset::Example => example_medium(grid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Indicators of ellipses with semi-axes `r` (x) and `r0` (y).
    DiskBumps,
    /// Indicators of rectangles with half-widths `r` (x) and `r0` (y).
    RectBumps,
    /// Caps `A sqrt(1 - (x-x0)^2/r^2 - (y-y0)^2/r0^2)`.
    SpiralBumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomElement {
    pub center: [f64; 2],
    pub r: f64,
    /// Second semi-axis; equal to `r` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    pub height: f64,
}

impl PhantomElement {
    pub fn circle(center: [f64; 2], r: f64, height: f64) -> Self {
        Self { center, r, r0: None, height }
    }

    fn semi_axes(&self) -> (f64, f64) {
        (self.r, self.r0.unwrap_or(self.r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub elements: Vec<PhantomElement>,
}

/// Heights of the spiral preset, innermost first.
pub const SPIRAL_HEIGHTS: [f64; 6] = [0.5, 1.0, 0.3, 0.3, 0.4, 0.3];
/// Radii of the spiral preset, innermost first.
pub const SPIRAL_RADII: [f64; 6] = [0.2, 0.15, 0.1, 0.1, 0.07, 0.03];

impl PhantomSpec {
    /// One indicator disk of height 1.
    pub fn centered_disk(radius: f64) -> Self {
        Self { kind: PhantomKind::DiskBumps, elements: vec![PhantomElement::circle([0.0, 0.0], radius, 1.0)] }
    }

    /// Four circular bumps of height 1.
    pub fn disk_preset() -> Self {
        let elements = [([-0.35, 0.3], 0.2), ([0.3, 0.35], 0.15), ([0.1, -0.4], 0.25), ([-0.45, -0.25], 0.1)]
            .into_iter()
            .map(|(c, r)| PhantomElement::circle(c, r, 1.0))
            .collect();
        Self { kind: PhantomKind::DiskBumps, elements }
    }

    /// Three rectangles of height 1.
    pub fn rect_preset() -> Self {
        let elements = vec![
            PhantomElement { center: [-0.3, 0.25], r: 0.2, r0: Some(0.1), height: 1.0 },
            PhantomElement { center: [0.3, 0.2], r: 0.1, r0: Some(0.25), height: 1.0 },
            PhantomElement { center: [0.0, -0.4], r: 0.3, r0: Some(0.12), height: 1.0 },
        ];
        Self { kind: PhantomKind::RectBumps, elements }
    }

    /// Six caps with heights [`SPIRAL_HEIGHTS`] and radii [`SPIRAL_RADII`],
    /// centred on the spiral `rho = 0.12 phi` at `phi = pi/2 + 1.2 k`.
    pub fn spiral_preset() -> Self {
        let elements = SPIRAL_HEIGHTS
            .iter()
            .zip(SPIRAL_RADII)
            .enumerate()
            .map(|(k, (&a, r))| {
                let phi = PI / 2.0 + 1.2 * k as f64;
                let rho = 0.12 * phi;
                PhantomElement::circle([rho * phi.cos(), rho * phi.sin()], r, a)
            })
            .collect();
        Self { kind: PhantomKind::SpiralBumps, elements }
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, e) in self.elements.iter().enumerate() {
            let (a, b) = e.semi_axes();
            if !(e.height.is_finite() && e.center.iter().all(|v| v.is_finite())) || !(a > 0.0 && b > 0.0) {
                return Err(Error::Invalid(format!("phantom element {idx}: {e:?}")));
            }
            let reach = match self.kind {
                PhantomKind::RectBumps => (e.center[0].abs() + a).hypot(e.center[1].abs() + b),
                PhantomKind::DiskBumps | PhantomKind::SpiralBumps => e.center[0].hypot(e.center[1]) + a.max(b),
            };
            if reach > 1.0 {
                return Err(Error::Domain(format!("phantom element {idx} leaves the unit disk (reach {reach:.3})")));
            }
        }
        Ok(())
    }

    fn profile(&self, e: &PhantomElement, x: f64, y: f64) -> f64 {
        let (a, b) = e.semi_axes();
        let (dx, dy) = (x - e.center[0], y - e.center[1]);
        match self.kind {
            PhantomKind::DiskBumps => {
                if (dx / a).powi(2) + (dy / b).powi(2) < 1.0 {
                    e.height
                } else {
                    0.0
                }
            }
            PhantomKind::RectBumps => {
                if dx.abs() < a && dy.abs() < b {
                    e.height
                } else {
                    0.0
                }
            }
            PhantomKind::SpiralBumps => e.height * (1.0 - (dx / a).powi(2) - (dy / b).powi(2)).max(0.0).sqrt(),
        }
    }
}

pub fn make_phantom(spec: &PhantomSpec, grid: GridSpec) -> Result<ScalarField> {
    spec.validate()?;
    Ok(ScalarField::from_fn(grid, Support::Disk, |x, y| spec.elements.iter().map(|e| spec.profile(e, x, y)).sum()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mu: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Invalid(format!("noise fraction mu = {} must be >= 0", self.mu)));
        }
        Ok(())
    }
}

/// Row `i` of the data (direction `eta_i`) becomes `v + mu ||v|| w / ||w||`
/// with `w` standard normal on the live chords. Rows are processed in order
/// and every row draws its `w`, so the stream does not depend on the data.
pub fn add_noise(b: &BoundaryData, spec: &NoiseSpec) -> Result<BoundaryData> {
    spec.validate()?;
    let grid = b.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = b.values.clone();
    let mut w = vec![0.0; grid.n_x];
    for mut row in out.outer_iter_mut() {
        for (j, wj) in w.iter_mut().enumerate() {
            let draw: f64 = StandardNormal.sample(&mut rng);
            *wj = if chord_is_live(grid, j) { draw } else { 0.0 };
        }
        let v_norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w_norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if spec.mu == 0.0 || v_norm == 0.0 || w_norm == 0.0 {
            continue;
        }
        let scale = spec.mu * v_norm / w_norm;
        row.iter_mut().zip(&w).for_each(|(v, wj)| *v += scale * wj);
    }
    BoundaryData::from_values(grid, out)
}

/// Difference between noisy and clean data, row by row: `||noisy_i - clean_i|| / ||clean_i||`.
pub fn row_noise_ratios(clean: &BoundaryData, noisy: &BoundaryData) -> Vec<f64> {
    let diff: Array2<f64> = &noisy.values - &clean.values;
    diff.outer_iter()
        .zip(clean.values.outer_iter())
        .map(|(d, c)| {
            let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.iter().map(|v| v * v).sum::<f64>().sqrt() / cn
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::CutoffSpec;

    #[test]
    fn hg_values() {
        for c in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert!((henyey_greenstein(c, 0.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        }
        let v = henyey_greenstein(1.0, 0.85).unwrap();
        assert!((v - 0.2775 / 0.0225 / (2.0 * PI)).abs() < 1e-12);
        assert!((v - 1.96285).abs() < 1e-4);
        assert!(matches!(henyey_greenstein(0.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(henyey_greenstein(0.5, -1.2), Err(Error::Domain(_))));
        assert!(henyey_greenstein(-1.0, 0.85).unwrap() > 0.0);
    }

    #[test]
    fn hg_quadrature_is_normalised() {
        let grid = GridSpec::new(2, 128).unwrap();
        for i in [0, 17, 64] {
            let total: f64 =
                (0..128).map(|j| henyey_greenstein((grid.angle(i) - grid.angle(j)).cos(), 0.85).unwrap()).sum::<f64>()
                    * grid.delta();
            assert!((total - 1.0).abs() < 1e-3, "{total}");
        }
    }

    #[test]
    fn example_medium_values() {
        let grid = GridSpec::new(16, 8).unwrap();
        let s = |x: f64, y: f64, eta: f64| 0.5 * (0.05 + (x * y).cos().powi(2)) * eta.sin().powi(2);
        assert!((s(0.0, 0.0, PI / 2.0) - 0.525).abs() < 1e-15);
        assert_eq!(s(0.3, -0.2, 0.0), 0.0);
        let m = example_medium(grid).unwrap();
        assert!(m.sigma.max() <= 0.525);
        let ScatteringKernel::Separable { spatial, angular } = &m.kernel else { panic!("separable kernel expected") };
        let (x, y) = (grid.node(7), grid.node(8));
        assert!((spatial.values[[8, 7]] - (0.05 + (x * y).sin().powi(2))).abs() < 1e-15);
        // The 1/(2 pi) lives in the phase function, so k at the origin is 0.05 / (2 pi) times the HG ratio.
        let ratio = (1.0 - 0.85f64.powi(2)) / (1.0 + 0.85f64.powi(2) - 1.7);
        assert!(
            (spatial.values[[8, 7]] * angular[[3, 3]] - (0.05 + (x * y).sin().powi(2)) * ratio / (2.0 * PI)).abs()
                < 1e-12
        );
        for n in [8, 16, 256] {
            assert!(example_medium(GridSpec::new(n, 8).unwrap()).is_ok());
        }
    }

    #[test]
    fn phantom_values() {
        let grid = GridSpec::new(64, 4).unwrap();
        let spec = PhantomSpec {
            kind: PhantomKind::SpiralBumps,
            elements: vec![PhantomElement::circle([grid.node(40), grid.node(30)], 0.2, 0.7)],
        };
        let f = make_phantom(&spec, grid).unwrap();
        assert!((f.values[[30, 40]] - 0.7).abs() < 1e-15);
        assert_eq!(f.values[[5, 5]], 0.0);

        let spiral = PhantomSpec::spiral_preset();
        let heights: Vec<f64> = spiral.elements.iter().map(|e| e.height).collect();
        let radii: Vec<f64> = spiral.elements.iter().map(|e| e.r).collect();
        assert_eq!(heights, SPIRAL_HEIGHTS);
        assert_eq!(radii, SPIRAL_RADII);
        for p in [spiral, PhantomSpec::disk_preset(), PhantomSpec::rect_preset(), PhantomSpec::centered_disk(0.5)] {
            let f = make_phantom(&p, grid).unwrap();
            let bound: f64 = p.elements.iter().map(|e| e.height).sum();
            assert!(f.values.iter().all(|&v| (0.0..=bound).contains(&v)));
            assert!(f.norm() > 0.0);
        }
    }

    #[test]
    fn escaping_phantom_is_rejected() {
        let grid = GridSpec::new(16, 4).unwrap();
        let bad =
            PhantomSpec { kind: PhantomKind::DiskBumps, elements: vec![PhantomElement::circle([0.8, 0.0], 0.3, 1.0)] };
        assert!(matches!(make_phantom(&bad, grid), Err(Error::Domain(_))));
        let bad = PhantomSpec {
            kind: PhantomKind::RectBumps,
            elements: vec![PhantomElement { center: [0.6, 0.6], r: 0.2, r0: Some(0.2), height: 1.0 }],
        };
        assert!(make_phantom(&bad, grid).is_err());
    }

    #[test]
    fn noise_scales_each_row() {
        let grid = GridSpec::new(32, 16).unwrap();
        let chi = crate::transport::boundary_cutoff(&CutoffSpec::examples(), grid);
        let b = BoundaryData::from_fn(grid, |eta, y| (1.0 + eta) * (1.0 - y * y));
        let b = BoundaryData { spec: grid, values: &b.values * &chi.values };
        let spec = NoiseSpec { mu: 0.5, seed: 7 };
        let noisy = add_noise(&b, &spec).unwrap();
        for (i, ratio) in row_noise_ratios(&b, &noisy).into_iter().enumerate() {
            let clean_norm = b.values.row(i).iter().map(|v| v * v).sum::<f64>();
            if clean_norm == 0.0 {
                assert!(noisy.values.row(i).iter().all(|&v| v == 0.0));
            } else {
                assert!((ratio - 0.5).abs() < 1e-12);
            }
        }
        let again = add_noise(&b, &spec).unwrap();
        assert!(noisy.values.iter().zip(again.values.iter()).all(|(a, c)| a.to_bits() == c.to_bits()));
        assert_eq!(add_noise(&b, &NoiseSpec { mu: 0.0, seed: 7 }).unwrap(), b);
        assert_ne!(add_noise(&b, &NoiseSpec { mu: 0.5, seed: 8 }).unwrap(), noisy);
        assert!(add_noise(&b, &NoiseSpec { mu: -0.1, seed: 1 }).is_err());
    }
}
