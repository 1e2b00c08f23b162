use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use super::{Branch, BranchPoint, RescaledState};
use crate::error::{Error, Result};
use crate::evolution::energy;
use crate::fields::{Grid, SpinorField, TraceOrder};
use crate::graph::{MetricGraph, StarSpec};
use crate::operators::{assemble_dirac, HermitianOperator, PhysParams};

/// Scaling between rescaled and physical variables at `eps > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
}

impl ScalingParams {
    /// `lambda = sqrt(eps)`, `alpha = eps^{1/(p-2)}`,
    /// `beta = eps^{p/(2p-4)}`, `omega = m - eps`.
    pub fn new(eps: f64, p: f64, m: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!(
                "back-scaling needs eps > 0, got {eps}"
            )));
        }
        if !(p > 2.0) {
            return Err(Error::Parameter(format!("need p > 2, got {p}")));
        }
        Ok(Self {
            lambda: eps.sqrt(),
            alpha: eps.powf(1.0 / (p - 2.0)),
            beta: eps.powf(p / (2.0 * p - 4.0)),
            omega: m - eps,
        })
    }
}

fn check_params(state: &RescaledState, params: &PhysParams) -> Result<ScalingParams> {
    params.validate()?;
    if params.c != 1.0 {
        return Err(Error::Parameter(format!(
            "back-scaling is implemented for c = 1 only, got c = {}",
            params.c
        )));
    }
    if (params.m - state.spec.m).abs() > 1e-15 * params.m {
        return Err(Error::Parameter(format!(
            "mass {} differs from the rescaled problem's {}",
            params.m, state.spec.m
        )));
    }
    ScalingParams::new(state.eps, state.spec.p, state.spec.m)
}

/// Bound state on the image grid (`h / sqrt(eps)`, `L / sqrt(eps)`), where
/// nodal values map over without interpolation. Returns `(psi, omega)`.
pub fn scale_to_physical(state: &RescaledState, params: &PhysParams) -> Result<(SpinorField, f64)> {
    let sp = check_params(state, params)?;
    let rg = state.grid();
    let g0 = rg.edge(0);
    let l = g0.length() / sp.lambda;
    let h = g0.h / sp.lambda;
    let graph = MetricGraph::star(&StarSpec::new(state.spec.n, l))?;
    let grid = Arc::new(Grid::new(
        graph,
        rg.edge_grids()
            .iter()
            .map(|g| crate::fields::EdgeGrid { h, ..*g })
            .collect(),
    )?);
    let mut data = vec![Complex64::new(0.0, 0.0); grid.spinor_len()];
    for (e, g) in grid.edge_grids().iter().enumerate() {
        for j in 0..=g.cells {
            data[grid.phi_index(e, j)] = Complex64::new(sp.alpha * state.u(e, j), 0.0);
        }
        for j in 0..g.cells {
            data[grid.chi_index(e, j)] = Complex64::new(0.0, -sp.beta * state.w(e, j));
        }
    }
    Ok((SpinorField::from_vec(grid, data)?, sp.omega))
}

/// Cubic Lagrange interpolation of equispaced samples `f[k]` at positions
/// `(k + offset) h`; zero beyond `limit`.
fn cubic(f: &[f64], h: f64, offset: f64, limit: f64, x: f64) -> f64 {
    if x > limit + 1e-12 * limit.max(1.0) {
        return 0.0;
    }
    let t = x / h - offset;
    let n = f.len();
    let base = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut s = 0.0;
    for a in 0..4 {
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                l *= (t - (base + b) as f64) / (a as f64 - b as f64);
            }
        }
        s += l * f[base + a];
    }
    s
}

/// Bound state sampled on an arbitrary grid over the same star, with cubic
/// interpolation of the rescaled profiles.
pub fn scale_to_grid(
    state: &RescaledState,
    params: &PhysParams,
    grid: &Arc<Grid>,
) -> Result<(SpinorField, f64)> {
    let sp = check_params(state, params)?;
    if grid.graph().require_star()? != state.spec.n {
        return Err(Error::InvalidTopology("target grid is a different star".into()));
    }
    let rg = state.grid();
    let mut profiles = Vec::new();
    for (e, g) in rg.edge_grids().iter().enumerate() {
        let u: Vec<f64> = (0..=g.cells).map(|j| state.u(e, j)).collect();
        let w: Vec<f64> = (0..g.cells).map(|j| state.w(e, j)).collect();
        profiles.push((u, w, g.h, g.length()));
    }
    let prof = &profiles;
    let psi = SpinorField::from_fn(
        grid.clone(),
        |e, x| {
            let (u, _, h, l) = &prof[e];
            Complex64::new(sp.alpha * cubic(u, *h, 0.0, *l, sp.lambda * x), 0.0)
        },
        |e, x| {
            let (_, w, h, l) = &prof[e];
            Complex64::new(0.0, -sp.beta * cubic(w, *h, 0.5, *l, sp.lambda * x))
        },
    );
    Ok((psi, sp.omega))
}

/// Sup-norm of the discrete stationary residual `D psi - omega psi -
/// |psi|^{p-2} psi` over all unknowns, together with the oriented vertex
/// trace sums of the second component.
pub fn nlde_residual(psi: &SpinorField, omega: f64, params: &PhysParams, p: f64) -> Result<f64> {
    let a = assemble_dirac(psi.grid(), *params)?;
    let dpsi = a.apply(psi.as_slice())?;
    let g = psi.grid().nonlinear_coefficients(psi.as_slice(), p);
    let mut worst = 0.0f64;
    for ((d, z), gi) in dpsi.iter().zip(psi.as_slice()).zip(&g) {
        worst = worst.max((d - z * omega - z * *gi).norm());
    }
    for v in psi.vertex_residuals(TraceOrder::Second) {
        worst = worst.max(v.kirchhoff_sum.norm());
    }
    Ok(worst)
}

/// `E(psi) - (omega/2) ||psi||^2` with the focusing energy.
pub fn action_value(psi: &SpinorField, omega: f64, a: &HermitianOperator, p: f64) -> Result<f64> {
    Ok(energy(psi, a, p, 1.0)? - 0.5 * omega * psi.mass())
}

/// One line of the branch table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchRow {
    pub eps: f64,
    pub omega: f64,
    pub sup_u: f64,
    pub sup_w: f64,
    pub l2_physical_mass: f64,
    pub action: f64,
    pub newton_iters: usize,
    pub min_singular_value: f64,
}

impl BranchRow {
    /// Physical columns come from the image-grid bound state; they are NaN
    /// where no bound state is defined (`eps <= 0`).
    pub fn from_point(pt: &BranchPoint) -> Result<Self> {
        let st = &pt.state;
        let (mass, action) = if pt.eps > 0.0 {
            let params = PhysParams::new(st.spec.m, 1.0)?;
            let (psi, omega) = scale_to_physical(st, &params)?;
            let a = assemble_dirac(psi.grid(), params)?;
            (psi.mass(), action_value(&psi, omega, &a, st.spec.p)?)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(Self {
            eps: pt.eps,
            omega: st.spec.m - pt.eps,
            sup_u: st.sup_u(),
            sup_w: st.sup_w(),
            l2_physical_mass: mass,
            action,
            newton_iters: pt.newton_iters,
            min_singular_value: pt.min_singular_value,
        })
    }
}

/// Writes `eps,omega,sup_u,sup_w,l2_physical_mass,action,newton_iters,min_singular_value`.
pub fn write_branch_csv<W: Write>(branch: &Branch, mut w: W) -> Result<Vec<BranchRow>> {
    writeln!(
        w,
        "eps,omega,sup_u,sup_w,l2_physical_mass,action,newton_iters,min_singular_value"
    )?;
    let mut rows = Vec::new();
    for pt in &branch.points {
        let r = BranchRow::from_point(pt)?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.eps,
            r.omega,
            r.sup_u,
            r.sup_w,
            r.l2_physical_mass,
            r.action,
            r.newton_iters,
            r.min_singular_value
        )?;
        rows.push(r);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::standing::{newton_solve, seed_state, SolitonSpec};

    #[test]
    fn scaling_constants() {
        let s = ScalingParams::new(0.01, 4.0, 1.0).unwrap();
        assert!((s.lambda - 0.1).abs() < 1e-15);
        assert!((s.alpha - 0.1).abs() < 1e-15);
        assert!((s.beta - 0.01).abs() < 1e-15);
        let s = ScalingParams::new(0.04, 6.0, 1.0).unwrap();
        assert!((s.lambda - 0.2).abs() < 1e-15);
        assert!((s.alpha - 0.04f64.powf(0.25)).abs() < 1e-15);
        assert!((s.beta - 0.04f64.powf(0.75)).abs() < 1e-15);
        assert!(ScalingParams::new(0.0, 4.0, 1.0).is_err());
        assert!(ScalingParams::new(-0.1, 4.0, 1.0).is_err());
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let f: Vec<f64> = (0..10).map(|k| {
            let x = 0.3 * k as f64;
            x * x * x - 2.0 * x + 1.0
        }).collect();
        for x in [0.0, 0.1, 1.37, 2.65, 2.7] {
            let exact = x * x * x - 2.0 * x + 1.0;
            assert!((cubic(&f, 0.3, 0.0, 2.7, x) - exact).abs() < 1e-12);
        }
        assert_eq!(cubic(&f, 0.3, 0.0, 2.7, 3.0), 0.0);
    }

    #[test]
    fn image_grid_state_is_a_discrete_bound_state() {
        let spec = SolitonSpec::new(4.0, 0.5, 3, 0.0).unwrap();
        let seed = seed_state(&spec, 0.1, None).unwrap();
        let (st, _) = newton_solve(&seed, 0.05, 1e-12, 25).unwrap();
        let params = PhysParams::new(0.5, 1.0).unwrap();
        let (psi, omega) = scale_to_physical(&st, &params).unwrap();
        assert!((omega - 0.45).abs() < 1e-15);
        let a = assemble_dirac(psi.grid(), params).unwrap();
        let apsi = a.apply(psi.as_slice()).unwrap();
        let g = psi.grid().nonlinear_coefficients(psi.as_slice(), 4.0);
        let worst = apsi
            .iter()
            .zip(psi.as_slice())
            .zip(&g)
            .map(|((d, z), gi)| (d - z * omega - z * *gi).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-11, "{worst}");
        assert!(nlde_residual(&psi, omega, &params, 4.0).unwrap() < 1e-3);
        assert!(scale_to_physical(&st, &PhysParams::new(0.5, 2.0).unwrap()).is_err());
    }

    #[test]
    fn residual_detects_noise() {
        let spec = SolitonSpec::new(4.0, 0.5, 3, 0.0).unwrap();
        let seed = seed_state(&spec, 0.1, None).unwrap();
        let (st, _) = newton_solve(&seed, 0.05, 1e-12, 25).unwrap();
        let params = PhysParams::new(0.5, 1.0).unwrap();
        let (mut psi, omega) = scale_to_physical(&st, &params).unwrap();
        let clean = nlde_residual(&psi, omega, &params, 4.0).unwrap();
        for (k, z) in psi.as_mut_slice().iter_mut().enumerate() {
            *z += Complex64::new(1e-3 * ((k * 31) % 7) as f64 / 7.0, 0.0);
        }
        let noisy = nlde_residual(&psi, omega, &params, 4.0).unwrap();
        assert!(noisy >= 1e-4 && noisy > 10.0 * clean, "{clean} {noisy}");
        let zero = SpinorField::zeros(psi.grid().clone());
        assert_eq!(nlde_residual(&zero, omega, &params, 4.0).unwrap(), 0.0);
    }
}
