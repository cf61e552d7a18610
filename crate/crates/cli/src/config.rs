//! Experiment configuration: one JSON document, optionally overridden by flags.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rte_core::grid::{AngularField, GridSpec};
use rte_core::rawio;
use rte_core::scene::{self, MediumPreset, NoiseSpec, PhantomSpec};
use rte_core::transport::{CutoffSpec, MediumSpec, ScatteringKernel};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_x: usize,
    pub n_d: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_x: 256, n_d: 128 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum MediumConfig {
    Vacuum,
    Absorbing {
        sigma: f64,
    },
    #[default]
    Example,
    /// Absorption from a raw scalar or angular field; optional scattering as
    /// a raw scalar strength times a Henyey-Greenstein phase.
    Files {
        sigma: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scattering: Option<PathBuf>,
        #[serde(default = "default_anisotropy")]
        anisotropy: f64,
    },
}

fn default_anisotropy() -> f64 {
    scene::EXAMPLE_ANISOTROPY
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomPreset {
    Disk,
    Rect,
    Spiral,
    CenteredDisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhantomConfig {
    Preset {
        preset: PhantomPreset,
        /// Radius of `centered_disk`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    Custom(PhantomSpec),
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig::Preset { preset: PhantomPreset::Disk, radius: None }
    }
}

impl PhantomConfig {
    pub fn spec(&self) -> Result<PhantomSpec> {
        Ok(match self {
            PhantomConfig::Preset { preset, radius } => {
                if radius.is_some() && *preset != PhantomPreset::CenteredDisk {
                    bail!("phantom.radius: only meaningful for the centered_disk preset");
                }
                match preset {
                    PhantomPreset::Disk => PhantomSpec::disk_preset(),
                    PhantomPreset::Rect => PhantomSpec::rect_preset(),
                    PhantomPreset::Spiral => PhantomSpec::spiral_preset(),
                    PhantomPreset::CenteredDisk => PhantomSpec::centered_disk(radius.unwrap_or(0.5)),
                }
            }
            PhantomConfig::Custom(spec) => spec.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub m1: usize,
    pub m2: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { m1: rte_core::pipeline::DEFAULT_M1, m2: rte_core::pipeline::DEFAULT_M2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityConfig {
    pub n_xi: usize,
    /// Also run with full data and record its edge contrast.
    #[serde(default)]
    pub calibrate_full_data: bool,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        Self { n_xi: 8, calibrate_full_data: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Pgm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub images: Vec<ImageFormat>,
}

fn default_formats() -> Vec<ImageFormat> {
    vec![ImageFormat::Pgm]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), images: default_formats() }
    }
}

impl OutputConfig {
    pub fn pgm(&self) -> bool {
        self.images.contains(&ImageFormat::Pgm)
    }
}

fn default_cutoff() -> CutoffSpec {
    CutoffSpec::examples()
}

fn default_noise() -> NoiseSpec {
    NoiseSpec { mu: 0.5, seed: 0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub phantom: PhantomConfig,
    #[serde(default = "default_cutoff")]
    pub cutoff: CutoffSpec,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub visibility: VisibilityConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            grid: GridConfig::default(),
            medium: MediumConfig::default(),
            phantom: PhantomConfig::default(),
            cutoff: default_cutoff(),
            truncation: Truncation::default(),
            noise: default_noise(),
            visibility: VisibilityConfig::default(),
            outputs: OutputConfig::default(),
        }
    }
}

/// Flags that override individual config fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nd: Option<usize>,
    #[arg(long)]
    pub m1: Option<usize>,
    #[arg(long)]
    pub m2: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start of the measured boundary arc, radians.
    #[arg(long, allow_hyphen_values = true)]
    pub arc_start: Option<f64>,
    /// End of the measured boundary arc, radians.
    #[arg(long, allow_hyphen_values = true)]
    pub arc_end: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads a config, or the `config` section of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("artifacts").is_some() {
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
        }
        let config: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("{path}: {}", e.into_inner())
        })?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.nx {
            self.grid.n_x = v;
        }
        if let Some(v) = o.nd {
            self.grid.n_d = v;
        }
        if let Some(v) = o.m1 {
            self.truncation.m1 = v;
        }
        if let Some(v) = o.m2 {
            self.truncation.m2 = v;
        }
        if let Some(v) = o.mu {
            self.noise.mu = v;
        }
        if let Some(v) = o.seed {
            self.noise.seed = v;
        }
        if o.arc_start.is_some() || o.arc_end.is_some() {
            let start = o.arc_start.unwrap_or(self.cutoff.arc_start);
            let end = o.arc_end.unwrap_or(self.cutoff.arc_end);
            // Position taper follows the arc; the direction taper is kept.
            self.cutoff = CutoffSpec {
                taper_dir: self.cutoff.taper_dir,
                outward_only: self.cutoff.outward_only,
                ..CutoffSpec::arc(start, end)
            };
        }
        if let Some(dir) = &o.out {
            self.outputs.directory = dir.clone();
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n_x, self.grid.n_d).map_err(|e| anyhow::anyhow!("grid: {e}"))
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version: expected {SCHEMA_VERSION}, found {}", self.schema_version);
        }
        self.grid_spec()?;
        match &self.medium {
            MediumConfig::Absorbing { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                bail!("medium.sigma: must be finite and >= 0, found {sigma}")
            }
            MediumConfig::Files { sigma, scattering, anisotropy } => {
                if !sigma.exists() {
                    bail!("medium.sigma: file {} does not exist", sigma.display());
                }
                if let Some(p) = scattering.as_ref().filter(|p| !p.exists()) {
                    bail!("medium.scattering: file {} does not exist", p.display());
                }
                if anisotropy.is_nan() || anisotropy.abs() >= 1.0 {
                    bail!("medium.anisotropy: must satisfy |g| < 1, found {anisotropy}");
                }
            }
            _ => {}
        }
        self.phantom.spec()?.validate().map_err(|e| anyhow::anyhow!("phantom: {e}"))?;
        self.cutoff.validate().map_err(|e| anyhow::anyhow!("cutoff: {e}"))?;
        if self.cutoff.arc_end - self.cutoff.arc_start > 4.0 * PI {
            bail!("cutoff: arc longer than 4 pi is almost certainly a units mistake (degrees?)");
        }
        self.noise.validate().map_err(|e| anyhow::anyhow!("noise.mu: {e}"))?;
        if self.visibility.n_xi == 0 {
            bail!("visibility.n_xi: must be positive");
        }
        if self.outputs.directory.as_os_str().is_empty() {
            bail!("outputs.directory: must not be empty");
        }
        Ok(())
    }

    pub fn build_medium(&self) -> Result<MediumSpec> {
        let grid = self.grid_spec()?;
        let medium = match &self.medium {
            MediumConfig::Vacuum => MediumPreset::Vacuum.build(grid),
            MediumConfig::Absorbing { sigma } => MediumPreset::Absorbing { sigma: *sigma }.build(grid),
            MediumConfig::Example => MediumPreset::Example.build(grid),
            MediumConfig::Files { sigma, scattering, anisotropy } => {
                return medium_from_files(grid, sigma, scattering.as_deref(), *anisotropy);
            }
        };
        medium.map_err(|e| anyhow::anyhow!("medium: {e}"))
    }
}

fn medium_from_files(grid: GridSpec, sigma: &Path, scattering: Option<&Path>, g: f64) -> Result<MediumSpec> {
    let (meta, _) = rawio::read_raw(sigma).with_context(|| "medium.sigma")?;
    let sigma_field = match meta.kind.as_str() {
        "angular" => rawio::load_angular(sigma)?,
        "scalar" => {
            let s = rawio::load_scalar(sigma)?;
            let mut a = AngularField::zeros(s.spec);
            for mut plane in a.values.outer_iter_mut() {
                plane.assign(&s.values);
            }
            a
        }
        other => bail!("medium.sigma: expected a scalar or angular field, found {other}"),
    };
    if sigma_field.spec != grid {
        bail!("medium.sigma: field grid {:?} differs from grid {:?}", sigma_field.spec, grid);
    }
    let kernel = match scattering {
        None => ScatteringKernel::None,
        Some(p) => {
            let spatial = rawio::load_scalar(p).with_context(|| "medium.scattering")?;
            if spatial.spec != grid {
                bail!("medium.scattering: field grid {:?} differs from grid {:?}", spatial.spec, grid);
            }
            ScatteringKernel::from_phase(spatial, |c| {
                scene::henyey_greenstein(c.clamp(-1.0, 1.0), g).expect("anisotropy validated")
            })
        }
    };
    MediumSpec::new(sigma_field, kernel).map_err(|e| anyhow::anyhow!("medium: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert_eq!((c.grid.n_x, c.grid.n_d, c.truncation.m1, c.truncation.m2), (256, 128, 8, 2));
        c.validate().unwrap();
    }

    #[test]
    fn minimal_document_takes_defaults() {
        let c = ExperimentConfig::from_json(r#"{"schema_version": 1}"#).unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_json(r#"{"schema_version": 1, "grid": {"n_x": "big", "n_d": 4}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("grid.n_x"), "{err}");
        let mut c = ExperimentConfig::default();
        c.noise.mu = -1.0;
        assert!(c.validate().unwrap_err().to_string().starts_with("noise.mu"));
        let mut c = ExperimentConfig::default();
        c.grid.n_x = 100;
        assert!(c.validate().unwrap_err().to_string().starts_with("grid"));
        let c = ExperimentConfig {
            medium: MediumConfig::Files { sigma: "/nonexistent.raw".into(), scattering: None, anisotropy: 0.5 },
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().starts_with("medium.sigma"));
    }

    #[test]
    fn overrides_apply() {
        let mut c = ExperimentConfig::default();
        c.apply(&Overrides {
            nx: Some(32),
            m2: Some(0),
            mu: Some(0.0),
            arc_start: Some(-1.0),
            arc_end: Some(1.0),
            out: Some("x".into()),
            ..Default::default()
        });
        assert_eq!(c.grid.n_x, 32);
        assert_eq!(c.truncation.m2, 0);
        assert_eq!(c.noise.mu, 0.0);
        assert_eq!((c.cutoff.arc_start, c.cutoff.arc_end), (-1.0, 1.0));
        assert!((c.cutoff.taper_pos - 0.1).abs() < 1e-15);
        assert_eq!(c.outputs.directory, PathBuf::from("x"));
    }

    #[test]
    fn custom_phantom_parses() {
        let c = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "phantom": {"kind": "rect_bumps",
                "elements": [{"center": [0.1, 0.0], "r": 0.2, "r0": 0.1, "height": 2.0}]}}"#,
        )
        .unwrap();
        let spec = c.phantom.spec().unwrap();
        assert_eq!(spec.elements[0].r0, Some(0.1));
    }
}
