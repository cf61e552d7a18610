//! Raw field files: little-endian `f64` in row-major order, plus `<file>.json`
//! describing `{kind, n_x, n_d, shape, min, max}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AngularField, BoundaryData, GridSpec, ScalarField};
use crate::visibility::VisibilityMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: String,
    pub n_x: usize,
    pub n_d: usize,
    pub shape: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

impl Sidecar {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.n_x, self.n_d)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Writes `data` and its sidecar; returns the sidecar.
pub fn write_raw<'a>(
    path: &Path,
    kind: &str,
    spec: GridSpec,
    shape: &[usize],
    data: impl IntoIterator<Item = &'a f64>,
) -> Result<Sidecar> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let (mut min, mut max, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for &v in data {
        out.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
        min = min.min(v);
        max = max.max(v);
        count += 1;
    }
    out.flush().map_err(io_err(path))?;
    if count != shape.iter().product::<usize>() {
        return Err(Error::Shape(format!("{count} values for shape {shape:?}")));
    }
    if count == 0 {
        (min, max) = (0.0, 0.0);
    }
    let meta = Sidecar { kind: kind.to_string(), n_x: spec.n_x, n_d: spec.n_d, shape: shape.to_vec(), min, max };
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

pub fn read_raw(path: &Path) -> Result<(Sidecar, Vec<f64>)> {
    let meta: Sidecar = read_json(&sidecar_path(path))?;
    let file = File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(io_err(path))?;
    let expected = meta.shape.iter().product::<usize>();
    if bytes.len() != 8 * expected {
        return Err(Error::Shape(format!(
            "{}: {} bytes, expected {} for shape {:?}",
            path.display(),
            bytes.len(),
            8 * expected,
            meta.shape
        )));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((meta, values))
}

fn check_kind(meta: &Sidecar, kind: &str) -> Result<()> {
    if meta.kind != kind {
        return Err(Error::Invalid(format!("expected a {kind} field, found {}", meta.kind)));
    }
    Ok(())
}

fn reshape<Sh, D>(shape: Sh, values: Vec<f64>) -> Result<ndarray::Array<f64, D>>
where
    D: ndarray::Dimension,
    Sh: ndarray::ShapeBuilder<Dim = D>,
{
    ndarray::Array::from_shape_vec(shape, values).map_err(|e| Error::Shape(e.to_string()))
}

pub fn save_scalar(field: &ScalarField, path: &Path) -> Result<Sidecar> {
    let n = field.spec.n_x;
    write_raw(path, "scalar", field.spec, &[n, n], field.values.iter())
}

pub fn load_scalar(path: &Path) -> Result<ScalarField> {
    let (meta, values) = read_raw(path)?;
    check_kind(&meta, "scalar")?;
    let spec = meta.spec()?;
    let values: Array2<f64> = reshape((spec.n_x, spec.n_x), values)?;
    ScalarField::from_values(spec, values)
}

pub fn save_angular(field: &AngularField, path: &Path) -> Result<Sidecar> {
    let GridSpec { n_x, n_d } = field.spec;
    write_raw(path, "angular", field.spec, &[n_d, n_x, n_x], field.values.iter())
}

pub fn load_angular(path: &Path) -> Result<AngularField> {
    let (meta, values) = read_raw(path)?;
    check_kind(&meta, "angular")?;
    let spec = meta.spec()?;
    let values: Array3<f64> = reshape((spec.n_d, spec.n_x, spec.n_x), values)?;
    AngularField::from_values(spec, values)
}

pub fn save_boundary(field: &BoundaryData, path: &Path) -> Result<Sidecar> {
    let GridSpec { n_x, n_d } = field.spec;
    write_raw(path, "boundary", field.spec, &[n_d, n_x], field.values.iter())
}

pub fn load_boundary(path: &Path) -> Result<BoundaryData> {
    let (meta, values) = read_raw(path)?;
    check_kind(&meta, "boundary")?;
    let spec = meta.spec()?;
    let values: Array2<f64> = reshape((spec.n_d, spec.n_x), values)?;
    BoundaryData::from_values(spec, values)
}

/// `rho` values `[y, x, k]`; the mask is recomputed from the threshold on load.
pub fn save_visibility(map: &VisibilityMap, path: &Path) -> Result<Sidecar> {
    let n = map.spec.n_x;
    write_raw(path, "visibility", map.spec, &[n, n, map.n_xi], map.values.iter())
}

pub fn load_visibility(path: &Path) -> Result<VisibilityMap> {
    let (meta, values) = read_raw(path)?;
    check_kind(&meta, "visibility")?;
    let spec = meta.spec()?;
    if meta.shape.len() != 3 {
        return Err(Error::Shape(format!("visibility shape {:?}", meta.shape)));
    }
    let n_xi = meta.shape[2];
    let values: Array3<f64> = reshape((spec.n_x, spec.n_x, n_xi), values)?;
    let threshold = crate::visibility::MASK_FRACTION * 4.0 * std::f64::consts::PI;
    let mask = values.mapv(|v| v > threshold);
    Ok(VisibilityMap { spec, n_xi, values, mask, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Support;

    #[test]
    fn round_trips_are_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(8, 4).unwrap();
        let f = ScalarField::from_fn(g, Support::Square, |x, y| x.sin() * y + 1e-300);
        let p = dir.path().join("f.raw");
        let meta = save_scalar(&f, &p).unwrap();
        assert_eq!(meta.shape, vec![8, 8]);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 8 * 64);
        assert_eq!(load_scalar(&p).unwrap(), f);

        let a = AngularField::from_fn(g, Support::Disk, |x, y, e| x + y * e);
        let p = dir.path().join("a.raw");
        save_angular(&a, &p).unwrap();
        assert_eq!(load_angular(&p).unwrap(), a);

        let b = BoundaryData::from_fn(g, |e, y| e - y);
        let p = dir.path().join("b.raw");
        save_boundary(&b, &p).unwrap();
        assert_eq!(load_boundary(&p).unwrap(), b);
        assert!(load_scalar(&p).is_err());
    }

    #[test]
    fn layout_is_little_endian_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(2, 2).unwrap();
        let f = ScalarField::from_values(g, ndarray::array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let p = dir.path().join("f.raw");
        let meta = save_scalar(&f, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[8..16], &2.0f64.to_le_bytes());
        assert_eq!((meta.min, meta.max), (1.0, 4.0));
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(side["kind"], "scalar");
        assert_eq!(side["n_d"], 2);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(4, 2).unwrap();
        let p = dir.path().join("f.raw");
        save_scalar(&ScalarField::zeros(g), &p).unwrap();
        std::fs::write(&p, [0u8; 12]).unwrap();
        assert!(matches!(load_scalar(&p), Err(Error::Shape(_))));
        assert!(matches!(load_scalar(&dir.path().join("missing.raw")), Err(Error::Json { .. } | Error::Io { .. })));
    }
}
