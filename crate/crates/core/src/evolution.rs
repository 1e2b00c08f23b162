//! Strang-split time integration of `i psi_t = D psi - sign |psi|^{p-2} psi`.
//!
//! The nonlinear substep is the exact flow of the discrete pointwise
//! problem (a phase rotation that keeps every modulus), the linear substep is
//! Crank-Nicolson. Mass is conserved up to solver round-off and the discrete
//! energy to `O(dt^2)`.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::SpinorField;
use crate::operators::{HermitianOperator, ShiftedSolver};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub p: f64,
    pub linear_solver_rtol: f64,
    pub blowup_factor: f64,
    /// `+1` focusing, `-1` defocusing.
    pub sign: f64,
    /// Record every `output_every` steps (the final step is always recorded).
    pub output_every: usize,
    /// Accumulate the Duhamel residual alongside the run.
    pub track_duhamel: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            p: 4.0,
            linear_solver_rtol: 1e-12,
            blowup_factor: 1e3,
            sign: 1.0,
            output_every: 1,
            track_duhamel: false,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::Parameter(format!(
                "t_end = {} must be at least dt = {}",
                self.t_end, self.dt
            )));
        }
        if !(self.p > 2.0) {
            return Err(Error::Parameter(format!("need p > 2, got {}", self.p)));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::Parameter(format!("sign must be +1 or -1, got {}", self.sign)));
        }
        if !(self.linear_solver_rtol > 0.0) || !(self.blowup_factor > 1.0) {
            return Err(Error::Parameter(
                "linear_solver_rtol must be positive and blowup_factor above 1".into(),
            ));
        }
        if self.output_every == 0 {
            return Err(Error::Parameter("output_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    pub psi: SpinorField,
    pub mass: f64,
    pub energy: f64,
    pub graph_norm: f64,
    pub duhamel_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    BlowupFlagged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EvolutionState>,
    pub termination: Termination,
    pub dt: f64,
}

impl Trajectory {
    pub fn last(&self) -> &EvolutionState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Largest `|mass(t) / mass(0) - 1|`.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.states[0].mass;
        if m0 == 0.0 {
            return self.states.iter().map(|s| s.mass).fold(0.0, f64::max);
        }
        self.states
            .iter()
            .map(|s| (s.mass / m0 - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|E(t) - E(0)|`.
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.states[0].energy;
        self.states
            .iter()
            .map(|s| (s.energy - e0).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `t,mass,energy,graph_norm,duhamel_residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mass,energy,graph_norm,duhamel_residual")?;
        for s in &self.states {
            match s.duhamel_residual {
                Some(d) => writeln!(w, "{},{},{},{},{}", s.t, s.mass, s.energy, s.graph_norm, d)?,
                None => writeln!(w, "{},{},{},{},", s.t, s.mass, s.energy, s.graph_norm)?,
            }
        }
        Ok(())
    }
}

/// Failed run together with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("evolution failed at t = {t}: {source}")]
pub struct EvolutionFailure {
    pub t: f64,
    #[source]
    pub source: Error,
    pub partial: Trajectory,
}

fn check_operator(psi: &SpinorField, a: &HermitianOperator) -> Result<()> {
    if a.dim() != psi.as_slice().len() || a.grid().spinor_len() != psi.grid().spinor_len() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: psi.as_slice().len(),
        });
    }
    Ok(())
}

/// Exact flow of `i psi_t = -sign g(|psi|) psi` over time `tau`:
/// `psi_i -> exp(i sign tau g_i) psi_i`, where `g_i` is the discrete
/// `|psi|^{p-2}` seen by unknown `i`.
pub fn nonlinear_phase_step(psi: &SpinorField, tau: f64, p: f64, sign: f64) -> Result<SpinorField> {
    if !(p > 2.0) {
        return Err(Error::Parameter(format!("need p > 2, got {p}")));
    }
    let g = psi.grid().nonlinear_coefficients(psi.as_slice(), p);
    let data = psi
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(z, gi)| z * Complex64::from_polar(1.0, sign * tau * gi))
        .collect();
    SpinorField::from_vec(psi.grid().clone(), data)
}

/// Crank-Nicolson propagator `(I + i dt/2 A)^{-1} (I - i dt/2 A)` with a
/// factorization reused across steps.
pub struct CrankNicolson {
    dt: f64,
    rtol: f64,
    solver: Option<ShiftedSolver>,
}

impl CrankNicolson {
    pub fn new(a: &HermitianOperator, dt: f64, rtol: f64) -> Result<Self> {
        let solver = if dt == 0.0 {
            None
        } else {
            Some(a.factor_shifted(Complex64::new(0.0, 2.0 / dt))?)
        };
        Ok(Self { dt, rtol, solver })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `psi+ = -psi + 2 (I + i dt/2 A)^{-1} psi`.
    pub fn apply(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        let Some(solver) = &self.solver else {
            return Ok(psi.to_vec());
        };
        // (I + i a A) = i a (A - z) with z = i / a
        let ia = Complex64::new(0.0, 0.5 * self.dt);
        let y = solver.solve_tol(psi, self.rtol)?;
        Ok(psi.iter().zip(&y).map(|(p, y)| -p + y * (2.0 / ia)).collect())
    }
}

pub fn linear_cn_step(psi: &SpinorField, dt: f64, a: &HermitianOperator, rtol: f64) -> Result<SpinorField> {
    check_operator(psi, a)?;
    let cn = CrankNicolson::new(a, dt, rtol)?;
    SpinorField::from_vec(psi.grid().clone(), cn.apply(psi.as_slice())?)
}

fn strang_with(cn: &CrankNicolson, psi: &SpinorField, p: f64, sign: f64) -> Result<SpinorField> {
    let half = nonlinear_phase_step(psi, 0.5 * cn.dt(), p, sign)?;
    let lin = SpinorField::from_vec(psi.grid().clone(), cn.apply(half.as_slice())?)?;
    nonlinear_phase_step(&lin, 0.5 * cn.dt(), p, sign)
}

/// Half nonlinear phase, full Crank-Nicolson step, half nonlinear phase.
pub fn strang_step(
    psi: &SpinorField,
    dt: f64,
    a: &HermitianOperator,
    p: f64,
    sign: f64,
    rtol: f64,
) -> Result<SpinorField> {
    check_operator(psi, a)?;
    let cn = CrankNicolson::new(a, dt, rtol)?;
    strang_with(&cn, psi, p, sign)
}

/// `1/2 <psi, A psi> - (sign/p) int |psi|^p`.
pub fn energy(psi: &SpinorField, a: &HermitianOperator, p: f64, sign: f64) -> Result<f64> {
    check_operator(psi, a)?;
    let quad = a.quadratic_form(psi.as_slice())?.re;
    Ok(0.5 * quad - sign / p * psi.lp_power_integral(p)?)
}

/// `||psi|| + ||A psi||`.
pub fn graph_norm(psi: &SpinorField, a: &HermitianOperator) -> Result<f64> {
    check_operator(psi, a)?;
    let apsi = SpinorField::from_vec(psi.grid().clone(), a.apply(psi.as_slice())?)?;
    Ok(psi.l2_norm() + apsi.l2_norm())
}

fn nonlinear_term(psi: &SpinorField, p: f64, sign: f64) -> Vec<Complex64> {
    let g = psi.grid().nonlinear_coefficients(psi.as_slice(), p);
    psi.as_slice().iter().zip(&g).map(|(z, gi)| z * (sign * gi)).collect()
}

/// Running Duhamel check: `R = psi_n - U^n psi_0 - i I_n` with
/// `I_{n+1} = U (I_n + dt/2 N_n) + dt/2 N_{n+1}` (trapezoid in time, `U`
/// the Crank-Nicolson propagator).
struct DuhamelTracker {
    free: Vec<Complex64>,
    integral: Vec<Complex64>,
    last_n: Vec<Complex64>,
}

impl DuhamelTracker {
    fn new(psi0: &SpinorField, p: f64, sign: f64) -> Self {
        Self {
            free: psi0.as_slice().to_vec(),
            integral: vec![Complex64::new(0.0, 0.0); psi0.as_slice().len()],
            last_n: nonlinear_term(psi0, p, sign),
        }
    }

    fn step(&mut self, cn: &CrankNicolson, psi: &SpinorField, p: f64, sign: f64) -> Result<f64> {
        let hdt = 0.5 * cn.dt();
        self.free = cn.apply(&self.free)?;
        let tmp: Vec<Complex64> = self
            .integral
            .iter()
            .zip(&self.last_n)
            .map(|(i, n)| i + n * hdt)
            .collect();
        let propagated = cn.apply(&tmp)?;
        let n_new = nonlinear_term(psi, p, sign);
        self.integral = propagated.iter().zip(&n_new).map(|(a, n)| a + n * hdt).collect();
        self.last_n = n_new;
        let r: Vec<Complex64> = psi
            .as_slice()
            .iter()
            .zip(&self.free)
            .zip(&self.integral)
            .map(|((s, f), i)| s - f - Complex64::i() * i)
            .collect();
        Ok(SpinorField::from_vec(psi.grid().clone(), r)?.l2_norm())
    }
}

fn record(
    t: f64,
    psi: &SpinorField,
    a: &HermitianOperator,
    cfg: &EvolutionConfig,
    duhamel: Option<f64>,
) -> Result<EvolutionState> {
    Ok(EvolutionState {
        t,
        psi: psi.clone(),
        mass: psi.mass(),
        energy: energy(psi, a, cfg.p, cfg.sign)?,
        graph_norm: graph_norm(psi, a)?,
        duhamel_residual: duhamel,
    })
}

/// Runs the Strang integrator from `psi0` to `t_end`, stopping early when the
/// graph norm exceeds `blowup_factor` times its initial value.
pub fn evolve(
    psi0: &SpinorField,
    a: &HermitianOperator,
    cfg: &EvolutionConfig,
) -> std::result::Result<Trajectory, EvolutionFailure> {
    let fail = |t: f64, source: Error, states: Vec<EvolutionState>| EvolutionFailure {
        t,
        source,
        partial: Trajectory {
            states,
            termination: Termination::Completed,
            dt: cfg.dt,
        },
    };
    if let Err(e) = cfg.validate().and_then(|_| check_operator(psi0, a)) {
        return Err(fail(0.0, e, Vec::new()));
    }
    let cn = match CrankNicolson::new(a, cfg.dt, cfg.linear_solver_rtol) {
        Ok(cn) => cn,
        Err(e) => return Err(fail(0.0, e, Vec::new())),
    };
    let mut tracker = cfg.track_duhamel.then(|| DuhamelTracker::new(psi0, cfg.p, cfg.sign));
    let first = match record(0.0, psi0, a, cfg, cfg.track_duhamel.then_some(0.0)) {
        Ok(s) => s,
        Err(e) => return Err(fail(0.0, e, Vec::new())),
    };
    let threshold = cfg.blowup_factor * first.graph_norm;
    let mut states = vec![first];
    let mut psi = psi0.clone();
    let steps = cfg.steps();
    for n in 1..=steps {
        let t = n as f64 * cfg.dt;
        let res = (|| -> Result<(SpinorField, Option<f64>)> {
            let next = strang_with(&cn, &psi, cfg.p, cfg.sign)?;
            let d = match tracker.as_mut() {
                Some(tr) => Some(tr.step(&cn, &next, cfg.p, cfg.sign)?),
                None => None,
            };
            Ok((next, d))
        })();
        let (next, d) = match res {
            Ok(v) => v,
            Err(e) => return Err(fail(t, e, states)),
        };
        psi = next;
        let due = n % cfg.output_every == 0 || n == steps;
        let gn = match graph_norm(&psi, a) {
            Ok(g) => g,
            Err(e) => return Err(fail(t, e, states)),
        };
        let blown = !(gn <= threshold) && threshold > 0.0;
        if due || blown {
            match record(t, &psi, a, cfg, d) {
                Ok(s) => states.push(s),
                Err(e) => return Err(fail(t, e, states)),
            }
        }
        if blown {
            return Ok(Trajectory {
                states,
                termination: Termination::BlowupFlagged,
                dt: cfg.dt,
            });
        }
    }
    Ok(Trajectory {
        states,
        termination: Termination::Completed,
        dt: cfg.dt,
    })
}

/// Duhamel residual at time `t` recomputed from a trajectory recorded at
/// every step.
pub fn duhamel_residual(
    traj: &Trajectory,
    a: &HermitianOperator,
    p: f64,
    sign: f64,
    t: f64,
) -> Result<f64> {
    let dt = traj.dt;
    let states = &traj.states;
    if states.len() < 2 {
        return if states.is_empty() || t == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Resolution("trajectory has a single record".into()))
        };
    }
    for (k, s) in states.iter().enumerate() {
        if (s.t - k as f64 * dt).abs() > 1e-9 * dt.max(s.t) {
            return Err(Error::Resolution(
                "Duhamel quadrature needs a record at every step".into(),
            ));
        }
    }
    let n = (t / dt).round() as usize;
    if (n as f64 * dt - t).abs() > 1e-9 * dt.max(t) || n >= states.len() {
        return Err(Error::Resolution(format!("no record at t = {t}")));
    }
    let cn = CrankNicolson::new(a, dt, 1e-13)?;
    let mut tr = DuhamelTracker::new(&states[0].psi, p, sign);
    let mut r = 0.0;
    for s in &states[1..=n] {
        r = tr.step(&cn, &s.psi, p, sign)?;
    }
    Ok(r)
}

/// Shared grid handle of a trajectory.
pub fn trajectory_grid(traj: &Trajectory) -> Option<&Arc<crate::fields::Grid>> {
    traj.states.first().map(|s| s.psi.grid())
}
