//! Truncated Neumann series for the partial-data map `X_V` and its normal operator.

use crate::error::{Error, Result};
use crate::grid::{AngularField, BoundaryData, ScalarField};
use crate::transport::{
    apply_k, apply_k_adjoint, boundary_cutoff, collapse_j_adjoint, CutoffSpec, MediumSpec, Propagator,
};

pub const DEFAULT_M1: usize = 8;
pub const DEFAULT_M2: usize = 2;

#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// `u_0 .. u_m1`.
    pub u_terms: Vec<AngularField>,
    pub u_total: AngularField,
    /// Outgoing boundary values of `u_total` before the cutoff.
    pub exit: BoundaryData,
    /// `chi_V * exit`.
    pub data: BoundaryData,
    pub term_norms: Vec<f64>,
}

impl ForwardResult {
    /// `||u_{j+1}|| / ||u_j||` for consecutive terms.
    pub fn decay_ratios(&self) -> Vec<f64> {
        self.term_norms.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NormalResult {
    /// `v_0 .. v_m2`.
    pub v_terms: Vec<AngularField>,
    pub image: ScalarField,
    pub term_norms: Vec<f64>,
}

fn ensure_finite(ok: bool, what: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A medium and cutoff with all per-direction plans built once.
pub struct Solver<'a> {
    medium: &'a MediumSpec,
    propagator: Propagator,
    chi: BoundaryData,
}

impl<'a> Solver<'a> {
    pub fn new(medium: &'a MediumSpec, cutoff: &CutoffSpec) -> Result<Self> {
        cutoff.validate()?;
        let propagator = Propagator::new(medium)?;
        let chi = boundary_cutoff(cutoff, medium.spec());
        Ok(Self { medium, propagator, chi })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    /// `chi_V` on the chord grid.
    pub fn cutoff(&self) -> &BoundaryData {
        &self.chi
    }

    pub fn forward(&self, f: &ScalarField, m1: usize) -> Result<ForwardResult> {
        let spec = self.medium.spec();
        spec.check_same(&f.spec)?;
        ensure_finite(f.is_finite(), "source")?;
        let (u0, mut exit) = self.propagator.apply_t1_inv_isotropic(f)?;
        let mut u_terms = vec![u0];
        for _ in 0..m1 {
            if self.medium.kernel.is_none() {
                // K = 0: every scattered term vanishes identically.
                u_terms.push(AngularField::zeros(spec));
                continue;
            }
            let prev = u_terms.last().expect("u_0 present");
            let (u, edge) = self.propagator.apply_t1_inv(&apply_k(prev, self.medium)?)?;
            exit.values += &edge.values;
            u_terms.push(u);
        }
        let mut u_total = AngularField::zeros(spec);
        for u in &u_terms {
            u_total.add_assign(u)?;
        }
        let term_norms: Vec<f64> = u_terms.iter().map(AngularField::norm).collect();
        ensure_finite(u_total.is_finite() && exit.is_finite(), "forward solve")?;
        let data = BoundaryData { spec, values: &exit.values * &self.chi.values };
        Ok(ForwardResult { u_terms, u_total, exit, data, term_norms })
    }

    pub fn adjoint(&self, b: &BoundaryData, m2: usize) -> Result<NormalResult> {
        let spec = self.medium.spec();
        spec.check_same(&b.spec)?;
        ensure_finite(b.is_finite(), "boundary data")?;
        let weighted = BoundaryData { spec, values: &b.values * &self.chi.values };
        let mut v_terms = vec![self.propagator.lift_boundary(&weighted, true)?];
        for _ in 0..m2 {
            if self.medium.kernel.is_none() {
                v_terms.push(AngularField::zeros(spec));
                continue;
            }
            let prev = v_terms.last().expect("v_0 present");
            let v = self.propagator.apply_t1_inv_adjoint(&apply_k_adjoint(prev, self.medium)?)?;
            v_terms.push(v);
        }
        let mut total = AngularField::zeros(spec);
        for v in &v_terms {
            total.add_assign(v)?;
        }
        let mut image = collapse_j_adjoint(&total);
        image.mask_to_disk();
        ensure_finite(image.is_finite(), "adjoint solve")?;
        let term_norms = v_terms.iter().map(AngularField::norm).collect();
        Ok(NormalResult { v_terms, image, term_norms })
    }

    pub fn normal(&self, f: &ScalarField, m1: usize, m2: usize) -> Result<(ForwardResult, NormalResult)> {
        let fwd = self.forward(f, m1)?;
        let normal = self.adjoint(&fwd.data, m2)?;
        Ok((fwd, normal))
    }
}

pub fn forward_xv(f: &ScalarField, medium: &MediumSpec, cutoff: &CutoffSpec, m1: usize) -> Result<ForwardResult> {
    Solver::new(medium, cutoff)?.forward(f, m1)
}

pub fn adjoint_xv(b: &BoundaryData, medium: &MediumSpec, cutoff: &CutoffSpec, m2: usize) -> Result<NormalResult> {
    Solver::new(medium, cutoff)?.adjoint(b, m2)
}

/// `X_V^* X_V f` with both series truncated; also returns the forward pass.
pub fn normal_operator(
    f: &ScalarField,
    medium: &MediumSpec,
    cutoff: &CutoffSpec,
    m1: usize,
    m2: usize,
) -> Result<(ForwardResult, NormalResult)> {
    Solver::new(medium, cutoff)?.normal(f, m1, m2)
}
