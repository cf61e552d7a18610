//! End-to-end runs: phantom, forward, noise, normal image, visibility, manifest.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use ndarray::{s, Array2};
use rte_core::grid::{chord_is_live, AngularField, BoundaryData, GridSpec, ScalarField};
use rte_core::pipeline::{ForwardResult, NormalResult, Solver};
use rte_core::rawio::{self, write_json};
use rte_core::scene::{add_noise, make_phantom, NOISE_ALGORITHM};
use rte_core::transport::{collapse_j_adjoint, CutoffSpec};
use rte_core::visibility::{edge_contrast, visibility_map, EdgeContrast, VisibilityMap};
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputConfig, Truncation, SCHEMA_VERSION};
use crate::render::{render_array_pgm, render_pgm};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub name: String,
    pub file: String,
    pub kind: String,
    pub shape: Vec<usize>,
    pub min: f64,
    pub max: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

/// Output directory plus the list of files written so far.
pub struct Outputs {
    dir: PathBuf,
    pgm: bool,
    pub artifacts: Vec<Artifact>,
}

impl Outputs {
    pub fn create(config: &OutputConfig) -> Result<Self> {
        let dir = config.directory.clone();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, pgm: config.pgm(), artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, meta: rawio::Sidecar, images: Vec<String>) -> PathBuf {
        let file = format!("{name}.raw");
        self.artifacts.push(Artifact {
            name: name.to_string(),
            file: file.clone(),
            kind: meta.kind,
            shape: meta.shape,
            min: meta.min,
            max: meta.max,
            images,
        });
        self.dir.join(file)
    }

    fn image(&self, name: &str, values: ndarray::ArrayView2<'_, f64>, flip_y: bool) -> Result<Vec<String>> {
        if !self.pgm {
            return Ok(Vec::new());
        }
        let file = format!("{name}.pgm");
        render_array_pgm(values, &self.dir.join(&file), flip_y)?;
        Ok(vec![file])
    }

    pub fn scalar(&mut self, name: &str, field: &ScalarField) -> Result<PathBuf> {
        let meta = rawio::save_scalar(field, &self.dir.join(format!("{name}.raw")))?;
        let images = if self.pgm {
            let file = format!("{name}.pgm");
            render_pgm(field, &self.dir.join(&file))?;
            vec![file]
        } else {
            Vec::new()
        };
        Ok(self.record(name, meta, images))
    }

    /// Rotated-frame data `[direction, chord]`, plus its polar resampling as `<name>_polar`.
    pub fn boundary(&mut self, name: &str, data: &BoundaryData) -> Result<PathBuf> {
        let meta = rawio::save_boundary(data, &self.dir.join(format!("{name}.raw")))?;
        let images = self.image(name, data.values.view(), false)?;
        let path = self.record(name, meta, images);

        let polar = polar_boundary(data);
        let polar_name = format!("{name}_polar");
        let meta = rawio::write_raw(
            &self.dir.join(format!("{polar_name}.raw")),
            "boundary_polar",
            data.spec,
            &[polar.nrows(), polar.ncols()],
            polar.iter(),
        )?;
        let images = self.image(&polar_name, polar.view(), false)?;
        self.record(&polar_name, meta, images);
        Ok(path)
    }

    /// `rho` values plus one image per covector angle.
    pub fn visibility(&mut self, name: &str, map: &VisibilityMap) -> Result<PathBuf> {
        let meta = rawio::save_visibility(map, &self.dir.join(format!("{name}.raw")))?;
        let mut images = Vec::new();
        for k in 0..map.n_xi {
            let plane = map.values.slice(s![.., .., k]);
            images.extend(self.image(&format!("{name}_xi{k:02}"), plane, true)?);
        }
        Ok(self.record(name, meta, images))
    }
}

/// `(1 / 2 pi) J^* u`, the mean of `u` over directions.
pub fn angular_average(u: &AngularField) -> ScalarField {
    let mut f = collapse_j_adjoint(u);
    f.values /= 2.0 * PI;
    f
}

/// Resamples data onto `[boundary angle phi_p, direction eta_i]`, with
/// `phi_p = (p + 1/2) 2 pi / n_x`. The exit point `(cos phi, sin phi)` lies on
/// chord `y = sin(phi - eta)`; incoming pairs are zero.
pub fn polar_boundary(b: &BoundaryData) -> Array2<f64> {
    let spec = b.spec;
    let n = spec.n_x;
    let live: Vec<usize> = (0..n).filter(|&j| chord_is_live(spec, j)).collect();
    let (lo, hi) = match (live.first(), live.last()) {
        (Some(&lo), Some(&hi)) => (lo as f64, hi as f64),
        _ => return Array2::zeros((n, spec.n_d)),
    };
    Array2::from_shape_fn((n, spec.n_d), |(p, i)| {
        let phi = (p as f64 + 0.5) * 2.0 * PI / n as f64;
        let rel = phi - spec.angle(i);
        if rel.cos() <= 0.0 {
            return 0.0;
        }
        let t = ((rel.sin() + 1.0) / spec.s_x() - 0.5).clamp(lo, hi);
        let j = (t.floor() as usize).min(n - 2);
        let w = t - j as f64;
        (1.0 - w) * b.values[[i, j]] + w * b.values[[i, j + 1]]
    })
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct Timings(pub BTreeMap<String, f64>);

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().with_context(|| format!("stage {stage}"))?;
        self.0.insert(stage.to_string(), start.elapsed().as_secs_f64());
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub n_x: usize,
    pub n_d: usize,
    pub s_x: f64,
    pub delta: f64,
}

impl From<GridSpec> for GridInfo {
    fn from(g: GridSpec) -> Self {
        Self { n_x: g.n_x, n_d: g.n_d, s_x: g.s_x(), delta: g.delta() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub term_norms: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub decay_ratios: Vec<f64>,
}

impl From<&ForwardResult> for SeriesReport {
    fn from(r: &ForwardResult) -> Self {
        Self { term_norms: r.term_norms.clone(), decay_ratios: r.decay_ratios() }
    }
}

impl From<&NormalResult> for SeriesReport {
    fn from(r: &NormalResult) -> Self {
        Self { term_norms: r.term_norms.clone(), decay_ratios: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    /// The resolved configuration; `rte run --config manifest.json` repeats the run.
    pub config: ExperimentConfig,
    pub grid: GridInfo,
    pub noise_algorithm: String,
    pub forward: SeriesReport,
    pub adjoint: SeriesReport,
    pub visibility_threshold: f64,
    pub edge_contrast: EdgeContrast,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_contrast_full_data: Option<EdgeContrast>,
    pub artifacts: Vec<Artifact>,
    pub timings_seconds: Timings,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the forward artifacts: angular average, exit data and cutoff data.
pub fn write_forward(out: &mut Outputs, fwd: &ForwardResult) -> Result<()> {
    out.scalar("average", &angular_average(&fwd.u_total))?;
    out.boundary("data_full", &fwd.exit)?;
    out.boundary("data", &fwd.data)?;
    Ok(())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    config.validate()?;
    let grid = config.grid_spec()?;
    let mut clock = Timings::default();
    let mut out = Outputs::create(&config.outputs)?;
    let Truncation { m1, m2 } = config.truncation;

    let medium = clock.time("medium", || config.build_medium())?;
    let phantom = clock.time("phantom", || Ok(make_phantom(&config.phantom.spec()?, grid)?))?;
    out.scalar("phantom", &phantom)?;

    let solver = clock.time("setup", || Ok(Solver::new(&medium, &config.cutoff)?))?;
    let fwd = clock.time("forward", || Ok(solver.forward(&phantom, m1)?))?;
    write_forward(&mut out, &fwd)?;

    let measured = if config.noise.mu > 0.0 {
        let noisy = clock.time("noise", || Ok(add_noise(&fwd.data, &config.noise)?))?;
        out.boundary("noisy", &noisy)?;
        noisy
    } else {
        fwd.data.clone()
    };
    let normal = clock.time("adjoint", || Ok(solver.adjoint(&measured, m2)?))?;
    out.scalar("normal", &normal.image)?;
    drop(solver);

    let map =
        clock.time("visibility", || Ok(visibility_map(grid, &medium, &config.cutoff, config.visibility.n_xi)?))?;
    out.visibility("visibility", &map)?;
    let contrast = edge_contrast(&phantom, &normal.image, &medium, &config.cutoff)?;

    let full_contrast = if config.visibility.calibrate_full_data {
        let full = CutoffSpec::full();
        let image = clock.time("full_data", || {
            let s = Solver::new(&medium, &full)?;
            let f = s.forward(&phantom, m1)?;
            Ok(s.adjoint(&f.data, m2)?.image)
        })?;
        Some(edge_contrast(&phantom, &image, &medium, &full)?)
    } else {
        None
    };

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        grid: grid.into(),
        noise_algorithm: NOISE_ALGORITHM.to_string(),
        forward: (&fwd).into(),
        adjoint: (&normal).into(),
        visibility_threshold: map.threshold,
        edge_contrast: contrast,
        edge_contrast_full_data: full_contrast,
        artifacts: out.artifacts.clone(),
        timings_seconds: clock,
    };
    write_json(&out.dir().join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_constant_is_constant_on_outgoing_pairs() {
        let g = GridSpec::new(16, 8).unwrap();
        let b = BoundaryData::from_fn(g, |_, _| 2.0);
        let p = polar_boundary(&b);
        assert_eq!(p.dim(), (16, 8));
        for ((pi, i), &v) in p.indexed_iter() {
            let phi = (pi as f64 + 0.5) * 2.0 * PI / 16.0;
            if (phi - g.angle(i)).cos() > 0.0 {
                assert_eq!(v, 2.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn polar_reads_the_right_chord() {
        let g = GridSpec::new(32, 4).unwrap();
        let b = BoundaryData::from_fn(g, |_, y| y);
        let p = polar_boundary(&b);
        let phi = (3.0 + 0.5) * 2.0 * PI / 32.0;
        let expect = (phi - g.angle(0)).sin();
        assert!((p[[3, 0]] - expect).abs() < 1e-12);
    }

    #[test]
    fn average_of_isotropic_field_is_itself() {
        let g = GridSpec::new(8, 16).unwrap();
        let u = AngularField::from_fn(g, rte_core::grid::Support::Square, |x, y, _| x + y);
        let avg = angular_average(&u);
        for ((r, c), v) in avg.values.indexed_iter() {
            assert!((v - (g.node(c) + g.node(r))).abs() < 1e-12);
        }
    }
}
