//! Fast paths checked against the slow oracles, as a pass/fail table.

use anyhow::Result;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rte_core::grid::{
    chord_is_live, inner_boundary, inner_scalar, relative_l2, AngularField, BoundaryData, GridSpec, ScalarField,
    Support,
};
use rte_core::oracle::{bilinear_rotate, direct_fractional_dft, oracle_normal_point, oracle_xray, RayMarchSpec};
use rte_core::pipeline::Solver;
use rte_core::scene::{example_medium, make_phantom, PhantomSpec};
use rte_core::spectral::{rotate, FractionalDft};
use rte_core::transport::{sweep_backward, sweep_forward, CutoffSpec, MediumSpec};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn sweep_transpose(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (rows, cols) = (rng.random_range(2..12), rng.random_range(2..40));
        let s_x = 2.0 / cols as f64;
        let mut draw = |lo: f64, hi: f64| Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi));
        let (g, v) = (draw(-1.0, 1.0), draw(-1.0, 1.0));
        let sigma = draw(0.0, 0.9 / s_x);
        let lhs = (&sweep_forward(g.view(), sigma.view(), s_x)? * &v).sum();
        let rhs = (&g * &sweep_backward(v.view(), sigma.view(), s_x)?).sum();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Ok(worst)
}

fn fractional_dft(n: usize) -> f64 {
    let x: Vec<Complex64> = (0..n).map(|k| Complex64::new((0.3 * k as f64).sin(), (0.11 * k as f64).cos())).collect();
    let alpha = 0.37 / n as f64;
    let fast = FractionalDft::new(n, n, alpha).apply(&x);
    let slow = direct_fractional_dft(&x, n, alpha);
    let num: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = slow.iter().map(|b| b.norm_sqr()).sum();
    (num / den).sqrt()
}

fn rotation_vs_bilinear(grid: GridSpec) -> Result<f64> {
    let f = ScalarField::from_fn(grid, Support::Square, |x, y| (-((x - 0.2).powi(2) + (y + 0.1).powi(2)) / 0.02).exp());
    let fast = rotate(&f, 0.4)?.field;
    let slow = bilinear_rotate(f.values.view(), 0.4);
    Ok(relative_l2(fast.values.view(), slow.view()))
}

/// Forward data at every live chord compared with the oracle at the chord's exit point.
fn data_vs_oracle(data: &BoundaryData, f: &ScalarField, sigma: &AngularField) -> Result<f64> {
    let grid = data.spec;
    let march = RayMarchSpec::for_grid(grid);
    let (mut fast, mut slow) = (Vec::new(), Vec::new());
    for i in 0..grid.n_d {
        let eta = grid.angle(i);
        let (c, s) = (eta.cos(), eta.sin());
        for j in (0..grid.n_x).filter(|&j| chord_is_live(grid, j)) {
            let y = grid.node(j);
            let a = (1.0 - y * y).sqrt();
            let q = [a * c - y * s, a * s + y * c];
            fast.push(data.values[[i, j]]);
            slow.push(oracle_xray(f, sigma, q, eta, &march)?);
        }
    }
    Ok(relative(&fast, &slow))
}

fn centre_value(img: &ScalarField) -> f64 {
    let m = img.spec.n_x / 2;
    0.25 * (img.values[[m - 1, m - 1]] + img.values[[m - 1, m]] + img.values[[m, m - 1]] + img.values[[m, m]])
}

/// Runs every check on `grid`.
pub fn run_checks(grid: GridSpec) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checks = vec![
        Check { name: "sweep transpose (20 instances)", error: sweep_transpose(&mut rng)?, tolerance: 1e-12 },
        Check { name: "fractional DFT vs direct sum", error: fractional_dft(grid.n_x), tolerance: 1e-9 },
        // Bilinear sampling is second order, so the reference itself is only
        // good to O(s_x^2).
        Check {
            name: "spectral vs bilinear rotation",
            error: rotation_vs_bilinear(grid)?,
            tolerance: 20.0 * grid.s_x().powi(2),
        },
    ];

    let disk = make_phantom(&PhantomSpec::centered_disk(0.5), grid)?;
    let vacuum = MediumSpec::vacuum(grid);
    let full = CutoffSpec::full();
    let solver = Solver::new(&vacuum, &full)?;
    let (fwd, normal) = solver.normal(&disk, 0, 0)?;
    let chord = BoundaryData::from_fn(grid, |_, y| 2.0 * (0.25 - y * y).max(0.0).sqrt());
    let (mut fast, mut exact) = (Vec::new(), Vec::new());
    for i in 0..grid.n_d {
        for j in (0..grid.n_x).filter(|&j| chord_is_live(grid, j)) {
            fast.push(fwd.data.values[[i, j]]);
            exact.push(chord.values[[i, j]]);
        }
    }
    checks.push(Check { name: "x-ray data vs analytic chord", error: relative(&fast, &exact), tolerance: 0.03 });
    let point = oracle_normal_point(&disk, &vacuum.sigma, &full, [0.0, 0.0])?;
    checks.push(Check {
        name: "normal image at origin vs oracle",
        error: (centre_value(&normal.image) - point).abs() / point,
        tolerance: 0.05,
    });
    drop(solver);

    let absorbing = MediumSpec::constant_absorption(grid, 0.5)?;
    let spiral = make_phantom(&PhantomSpec::spiral_preset(), grid)?;
    let data = Solver::new(&absorbing, &full)?.forward(&spiral, 0)?.data;
    checks.push(Check {
        name: "attenuated data vs ray-march oracle",
        error: data_vs_oracle(&data, &spiral, &absorbing.sigma)?,
        tolerance: 0.03,
    });

    let medium = example_medium(grid)?;
    let solver = Solver::new(&medium, &CutoffSpec::examples())?;
    let f = ScalarField::from_fn(grid, Support::Disk, |x, y| (-((x - 0.2).powi(2) + y * y) / 0.05).exp());
    let b = BoundaryData::from_fn(grid, |eta, y| (1.0 + (eta - 0.3).cos()) * (1.0 - y * y).powi(2));
    let lhs = inner_boundary(&solver.forward(&f, 2)?.data, &b)?;
    let rhs = inner_scalar(&f, &solver.adjoint(&b, 2)?.image)?;
    checks.push(Check {
        name: "adjoint pairing, example medium",
        error: (lhs - rhs).abs() / (f.norm() * b.norm()),
        tolerance: 2e-2,
    });
    Ok(checks)
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = format!("{:<width$}  {:>10}  {:>10}  result\n", "check", "error", "tolerance");
    for c in checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        out += &format!("{:<width$}  {:>10.3e}  {:>10.1e}  {verdict}\n", c.name, c.error, c.tolerance);
    }
    out
}
