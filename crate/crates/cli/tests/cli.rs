use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use rte_cli::config::ExperimentConfig;
use rte_cli::render::render_array_pgm;
use rte_cli::{render_pgm, run_experiment};
use rte_core::grid::{GridSpec, ScalarField};
use rte_core::rawio;
use rte_core::transport::CutoffSpec;

fn rte(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rte")).args(args).output().expect("spawn rte")
}

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.grid.n_x = 32;
    c.grid.n_d = 16;
    c.truncation.m1 = 2;
    c.truncation.m2 = 1;
    c.visibility.n_xi = 4;
    c.outputs.directory = dir.to_path_buf();
    c
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn manifest_without_volatile(dir: &Path) -> serde_json::Value {
    let mut m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m.as_object_mut().unwrap().remove("timings_seconds");
    m["config"]["outputs"].as_object_mut().unwrap().remove("directory");
    m
}

#[test]
fn empty_arc_without_noise_gives_zero_image() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config(tmp.path());
    c.cutoff = CutoffSpec::empty();
    c.noise.mu = 0.0;
    run_experiment(&c).unwrap();
    let image = rawio::load_scalar(&tmp.path().join("normal.raw")).unwrap();
    assert!(image.values.iter().all(|&v| v == 0.0));
    assert!(!tmp.path().join("noisy.raw").exists());
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&small_config(a.path())).unwrap();
    run_experiment(&small_config(b.path())).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
    assert_eq!(manifest_without_volatile(a.path()), manifest_without_volatile(b.path()));
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c = small_config(a.path());
    c.noise.seed = 99;
    c.cutoff = CutoffSpec::arc(1.0, 2.5);
    run_experiment(&c).unwrap();
    let manifest = a.path().join("manifest.json");
    let out = rte(&["run", "--config", manifest.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn every_array_has_a_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&small_config(tmp.path())).unwrap();
    let names: Vec<&str> = manifest.artifacts.iter().map(|a| a.name.as_str()).collect();
    for expected in ["phantom", "average", "data_full", "data", "data_polar", "noisy", "normal", "visibility"] {
        assert!(names.contains(&expected), "missing {expected}");
    }
    for a in &manifest.artifacts {
        assert!(rawio::sidecar_path(&tmp.path().join(&a.file)).exists());
        for img in &a.images {
            assert!(rawio::sidecar_path(&tmp.path().join(img)).exists());
        }
    }
    assert_eq!(manifest.forward.term_norms.len(), 3);
    assert_eq!(manifest.adjoint.term_norms.len(), 2);
}

#[test]
fn subcommands_chain_to_the_same_image() {
    let tmp = tempfile::tempdir().unwrap();
    let whole = tmp.path().join("whole");
    let c = small_config(&whole);
    run_experiment(&c).unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(&config, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    let cfg = config.to_str().unwrap();
    let step = |dir: &str| tmp.path().join(dir).to_str().unwrap().to_string();
    let p = |dir: &str, file: &str| tmp.path().join(dir).join(file).to_str().unwrap().to_string();

    for args in [
        vec!["phantom", "--config", cfg, "--out", &step("a")],
        vec!["forward", "--config", cfg, "--phantom", &p("a", "phantom.raw"), "--out", &step("b")],
        vec!["noise", "--config", cfg, "--data", &p("b", "data.raw"), "--out", &step("c")],
        vec!["normal", "--config", cfg, "--data", &p("c", "noisy.raw"), "--out", &step("d")],
        vec!["visibility", "--config", cfg, "--out", &step("e")],
    ] {
        let out = rte(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |path: PathBuf| std::fs::read(path).unwrap();
    assert_eq!(read(tmp.path().join("d/normal.raw")), read(whole.join("normal.raw")));
    assert_eq!(read(tmp.path().join("e/visibility.raw")), read(whole.join("visibility.raw")));
    assert_eq!(read(tmp.path().join("b/data_full.raw")), read(whole.join("data_full.raw")));
}

#[test]
fn input_file_sets_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(rte(&["phantom", "--nx", "16", "--nd", "8", "--out", out]).status.success());
    let phantom = tmp.path().join("phantom.raw");
    let res = rte(&["forward", "--m1", "0", "--phantom", phantom.to_str().unwrap(), "--out", out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let data = rawio::load_boundary(&tmp.path().join("data.raw")).unwrap();
    assert_eq!(data.spec, GridSpec::new(16, 8).unwrap());
}

#[test]
fn nan_source_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let g = GridSpec::new(16, 8).unwrap();
    let mut f = ScalarField::zeros(g);
    f.values[[8, 8]] = f64::NAN;
    let path = tmp.path().join("bad.raw");
    rawio::save_scalar(&f, &path).unwrap();
    let out = rte(&["forward", "--phantom", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.json");
    std::fs::write(&path, r#"{"schema_version": 1, "noise": {"mu": -0.5, "seed": 1}}"#).unwrap();
    let out = rte(&["run", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise.mu"));

    std::fs::write(&path, r#"{"schema_version": 1, "truncation": {"m1": 2, "m3": 1}}"#).unwrap();
    let out = rte(&["run", "--config", path.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncation"));
}

#[test]
fn verify_passes_on_a_small_grid() {
    let out = rte(&["verify", "--nx", "64", "--nd", "32"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{table}");
    assert_eq!(table.lines().filter(|l| l.ends_with("PASS")).count(), 7);
}

#[test]
fn pgm_has_field_dimensions_and_scaled_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let g = GridSpec::new(8, 4).unwrap();
    let values = Array2::from_shape_fn((8, 8), |(r, c)| (r * 8 + c) as f64 / 63.0);
    let field = ScalarField::from_values(g, values.clone()).unwrap();
    let path = tmp.path().join("f.pgm");
    let meta = render_pgm(&field, &path).unwrap();
    assert_eq!((meta.min, meta.max), (0.0, 1.0));
    let img = image::open(&path).unwrap().into_luma8();
    assert_eq!(img.dimensions(), (8, 8));
    // The first image row is the top of the field (largest y).
    for (x, y, p) in img.enumerate_pixels() {
        let v = values[[7 - y as usize, x as usize]];
        assert_eq!(p.0[0], (255.0 * v).round() as u8);
    }
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(rawio::sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(side["max"], 1.0);

    let flat = tmp.path().join("flat.pgm");
    render_array_pgm(Array2::from_elem((3, 5), 2.5).view(), &flat, false).unwrap();
    let img = image::open(&flat).unwrap().into_luma8();
    assert_eq!(img.dimensions(), (5, 3));
    assert!(img.pixels().all(|p| p.0[0] == 0));
}

#[test]
fn missing_input_reports_path() {
    let out = rte(&["noise", "--data", "/nonexistent/data.raw"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/data.raw"));
}
