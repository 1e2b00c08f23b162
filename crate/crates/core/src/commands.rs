//! The batch commands behind the `nlde` binary. Each validates its
//! configuration before touching the output directory and reports an exit
//! code: 0 ok, 2 configuration, 3 blow-up flagged, 4 solver failure,
//! 5 partial branch.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::config::{Command, InitialData, RunConfig};
use crate::error::{Error, Result};
use crate::evolution::{evolve, Termination, Trajectory};
use crate::fields::{Grid, NodeKind, SpinorField};
use crate::graph::MetricGraph;
use crate::operators::{assemble_dirac, PhysParams};
use crate::resolvent::{
    apply_kernel, identity_residual, nonrel_sweep, propagator_check, resdecomp_check, write_kernel_dump,
    KernelSample, KernelVariant, ResolventQuery,
};
use crate::standing::{continue_branch, scale_to_physical, seed_state, write_branch_csv, Branch};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_PARTIAL: i32 = 5;

/// What a command did.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub message: Option<String>,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
    verbose: bool,
}

impl Out {
    fn new(dir: &Path, verbose: bool) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            verbose,
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.log(&format!("wrote {}", path.display()));
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.into()))?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    fn finish(self, code: i32, message: Option<String>) -> Outcome {
        Outcome {
            code,
            files: self.files,
            message,
        }
    }
}

fn config_failure(e: Error) -> Outcome {
    Outcome {
        code: EXIT_CONFIG,
        files: Vec::new(),
        message: Some(e.to_string()),
    }
}

/// Runs `cmd`, writing into `cfg.output_dir`.
pub fn run(cmd: Command, cfg: &RunConfig, verbose: bool) -> Outcome {
    if let Err(e) = cfg.validate(cmd) {
        return config_failure(e);
    }
    let mut out = match Out::new(&cfg.output_dir, verbose) {
        Ok(o) => o,
        Err(e) => return config_failure(e),
    };
    let result = match cmd {
        Command::Soliton => soliton(cfg, &mut out),
        Command::Evolve => evolve_cmd(cfg, &mut out),
        Command::Branch => branch(cfg, &mut out),
        Command::Nonrel => nonrel(cfg, &mut out),
        Command::ResolventCheck => resolvent_check(cfg, &mut out),
    };
    match result {
        Ok((code, msg)) => out.finish(code, msg),
        Err(e) => out.finish(EXIT_SOLVER, Some(e.to_string())),
    }
}

type Step = Result<(i32, Option<String>)>;

fn star_grid(cfg: &RunConfig) -> Result<Arc<Grid>> {
    let graph = MetricGraph::star(&cfg.star())?;
    Ok(Arc::new(Grid::uniform(graph, cfg.graph.length, cfg.graph.h)?))
}

#[derive(Serialize)]
struct SolitonConstants {
    p: f64,
    m: f64,
    n: usize,
    a: f64,
    c_p: f64,
    gamma_p: f64,
    delta: f64,
}

fn soliton(cfg: &RunConfig, out: &mut Out) -> Step {
    let spec = cfg.soliton_spec()?;
    let grid = star_grid(cfg)?;
    let mut rows = Vec::new();
    for (e, g) in grid.edge_grids().iter().enumerate() {
        for j in 0..=g.cells {
            let x = grid.position(NodeKind::Integer, e, j);
            rows.push((e, x, spec.eval(e, x)?, spec.eval_derivative(e, x)?));
        }
    }
    out.write("soliton_profile.csv", |w| {
        writeln!(w, "edge_id,x,u,u_prime")?;
        for (e, x, u, du) in &rows {
            writeln!(w, "{e},{x},{u},{du}")?;
        }
        Ok(())
    })?;
    out.json(
        "soliton_constants.json",
        &SolitonConstants {
            p: spec.p,
            m: spec.m,
            n: spec.n,
            a: spec.a,
            c_p: spec.c_p(),
            gamma_p: spec.gamma_p(),
            delta: spec.delta(),
        },
    )?;
    Ok((EXIT_OK, None))
}

#[derive(Serialize)]
struct EvolveSummary {
    termination: &'static str,
    steps: usize,
    final_t: f64,
    records: usize,
    max_relative_mass_drift: f64,
    max_energy_drift: f64,
    omega: Option<f64>,
    /// `||Psi(T) - e^{-i omega T} psi|| / ||psi||` for standing-wave data.
    standing_wave_error: Option<f64>,
    error: Option<String>,
}

fn initial_data(cfg: &RunConfig, out: &Out) -> Result<(SpinorField, Option<f64>)> {
    let e = &cfg.evolution;
    match e.initial {
        InitialData::Zero => Ok((SpinorField::zeros(star_grid(cfg)?), None)),
        InitialData::Gaussian => {
            let (a, x0, w) = (e.amplitude, e.center, e.width);
            let psi = SpinorField::from_fn(
                star_grid(cfg)?,
                |_, x| Complex64::new(a * (-((x - x0) / w).powi(2)).exp(), 0.0),
                |_, _| Complex64::new(0.0, 0.0),
            );
            Ok((psi, None))
        }
        InitialData::StandingWave => {
            let spec = cfg.soliton_spec()?;
            let seed = seed_state(&spec, cfg.graph.h * e.eps.sqrt(), None)?;
            let step = cfg.branch.eps_step.min(e.eps);
            let b = continue_branch(&seed, e.eps, step, cfg.branch.tol).map_err(|f| f.source)?;
            let last = b.points.last().expect("branch has its seed");
            out.log(&format!(
                "standing wave at eps = {} (residual {:e})",
                last.eps, last.residual
            ));
            let (psi, omega) = scale_to_physical(&last.state, &PhysParams::new(cfg.physics.m, 1.0)?)?;
            Ok((psi, Some(omega)))
        }
    }
}

fn evolve_summary(traj: &Trajectory, steps: usize, psi0: &SpinorField, omega: Option<f64>) -> EvolveSummary {
    let last = traj.last();
    let sw = omega.map(|w| {
        let ph = Complex64::from_polar(1.0, -w * last.t);
        let d: Vec<Complex64> = last
            .psi
            .as_slice()
            .iter()
            .zip(psi0.as_slice())
            .map(|(a, b)| a - ph * b)
            .collect();
        SpinorField::from_vec(psi0.grid().clone(), d)
            .map(|f| f.l2_norm() / psi0.l2_norm())
            .unwrap_or(f64::NAN)
    });
    EvolveSummary {
        termination: match traj.termination {
            Termination::Completed => "completed",
            Termination::BlowupFlagged => "blowup_flagged",
        },
        steps,
        final_t: last.t,
        records: traj.states.len(),
        max_relative_mass_drift: traj.max_relative_mass_drift(),
        max_energy_drift: traj.max_energy_drift(),
        omega,
        standing_wave_error: sw,
        error: None,
    }
}

fn evolve_cmd(cfg: &RunConfig, out: &mut Out) -> Step {
    let (psi0, omega) = initial_data(cfg, out)?;
    let a = assemble_dirac(psi0.grid(), PhysParams::new(cfg.physics.m, cfg.physics.c)?)?;
    let ecfg = cfg.evolution_config();
    out.log(&format!("evolving {} unknowns for {} steps", psi0.grid().spinor_len(), ecfg.steps()));
    out.write("snapshot_initial.csv", |w| psi0.write_csv(w))?;
    let (traj, code, err) = match evolve(&psi0, &a, &ecfg) {
        Ok(t) => {
            let code = match t.termination {
                Termination::Completed => EXIT_OK,
                Termination::BlowupFlagged => EXIT_BLOWUP,
            };
            (t, code, None)
        }
        Err(f) => (f.partial, EXIT_SOLVER, Some(format!("solver failed at t = {}: {}", f.t, f.source))),
    };
    out.write("trajectory.csv", |w| traj.write_csv(w))?;
    if !traj.states.is_empty() {
        out.write("snapshot_final.csv", |w| traj.last().psi.write_csv(w))?;
        let mut s = evolve_summary(&traj, ecfg.steps(), &psi0, omega);
        s.error = err.clone();
        out.json("evolve_summary.json", &s)?;
    }
    let msg = match code {
        EXIT_BLOWUP => Some(format!("blow-up flagged at t = {}", traj.last().t)),
        _ => err,
    };
    Ok((code, msg))
}

#[derive(Serialize)]
struct BranchSummary {
    reached_eps_max: bool,
    eps_max: f64,
    final_eps: f64,
    points: usize,
    residuals: Vec<f64>,
    max_residual: f64,
    error: Option<String>,
}

fn branch(cfg: &RunConfig, out: &mut Out) -> Step {
    let spec = cfg.soliton_spec()?;
    let b = &cfg.branch;
    let seed = seed_state(&spec, cfg.graph.h, b.truncation)?;
    out.log(&format!("continuing on {} unknowns", seed.grid().spinor_len()));
    let (branch, err): (Branch, Option<String>) = match continue_branch(&seed, b.eps_max, b.eps_step, b.tol) {
        Ok(br) => (br, None),
        Err(f) => {
            let msg = f.to_string();
            (f.partial, Some(msg))
        }
    };
    out.write("branch.csv", |w| write_branch_csv(&branch, w).map(|_| ()))?;
    if let Some(last) = branch.points.last() {
        if last.eps > 0.0 {
            let (psi, _) = scale_to_physical(&last.state, &PhysParams::new(spec.m, 1.0)?)?;
            out.write("profile_final.csv", |w| psi.write_csv(w))?;
        }
    }
    let residuals: Vec<f64> = branch.points.iter().map(|p| p.residual).collect();
    out.json(
        "branch_summary.json",
        &BranchSummary {
            reached_eps_max: err.is_none(),
            eps_max: b.eps_max,
            final_eps: branch.points.last().map_or(f64::NAN, |p| p.eps),
            points: branch.points.len(),
            max_residual: residuals.iter().cloned().fold(0.0, f64::max),
            residuals,
            error: err.clone(),
        },
    )?;
    Ok(if err.is_some() { (EXIT_PARTIAL, err) } else { (EXIT_OK, None) })
}

#[derive(Serialize)]
struct LimitSummary {
    renormalization: &'static str,
    limit: &'static str,
    slope: f64,
    monotone: bool,
    norms: Vec<f64>,
}

#[derive(Serialize)]
struct NonrelSummary {
    m: f64,
    k_re: f64,
    k_im: f64,
    h: f64,
    length: f64,
    c_list: Vec<f64>,
    limits: Vec<LimitSummary>,
    /// Second renormalization against `P- (L - k)^-1` (wrong sign of the
    /// Laplacian); does not converge.
    flipped_sign_slope: f64,
    flipped_sign_norms: Vec<f64>,
    propagator_t: f64,
    propagator_dt: f64,
    propagator_differences: Vec<f64>,
}

fn nonrel(cfg: &RunConfig, out: &mut Out) -> Step {
    let grid = star_grid(cfg)?;
    let s = &cfg.sweep;
    let m = cfg.physics.m;
    out.log(&format!("sweeping c over {:?}", s.c_list));
    let sweep = nonrel_sweep(&grid, m, cfg.sweep_k(), &s.c_list)?;
    let psi = SpinorField::from_fn(
        grid.clone(),
        |_, x| Complex64::new((-(x - 3.0).powi(2)).exp(), 0.0),
        |_, _| Complex64::new(0.0, 0.0),
    );
    let prop = propagator_check(&psi, m, &s.c_list, s.t, s.dt)?;
    out.write("nonrel_sweep.csv", |w| sweep.write_csv(w))?;
    let col = |f: fn(&crate::resolvent::SweepRow) -> f64| sweep.rows.iter().map(f).collect::<Vec<_>>();
    out.json(
        "nonrel_summary.json",
        &NonrelSummary {
            m,
            k_re: s.k_re,
            k_im: s.k_im,
            h: cfg.graph.h,
            length: cfg.graph.length,
            c_list: s.c_list.clone(),
            limits: vec![
                LimitSummary {
                    renormalization: "minus",
                    limit: "P+ (-Delta/2m - k)^-1",
                    slope: sweep.slope_minus,
                    monotone: sweep.monotone_minus(),
                    norms: col(|r| r.norm_minus),
                },
                LimitSummary {
                    renormalization: "plus",
                    limit: "-P- (-Delta~/2m + k)^-1",
                    slope: sweep.slope_plus,
                    monotone: sweep.monotone_plus(),
                    norms: col(|r| r.norm_plus),
                },
            ],
            flipped_sign_slope: sweep.slope_plus_flipped,
            flipped_sign_norms: col(|r| r.norm_plus_flipped),
            propagator_t: s.t,
            propagator_dt: s.dt,
            propagator_differences: prop.iter().map(|r| r.difference).collect(),
        },
    )?;
    Ok((EXIT_OK, None))
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ResolventReport {
    k_re: f64,
    k_im: f64,
    m: f64,
    h: f64,
    length: f64,
    kernel: &'static str,
    lambda_re: f64,
    lambda_im: f64,
    continuity_gap: f64,
    chi_sum: f64,
    /// Lower-sign factorization with the inner inverse `(L - k + beta)^-1`.
    resdecomp_lower_flipped: f64,
    checks: Vec<Check>,
    pass: bool,
}

/// Smooth test data vanishing at the vertex, different on each edge.
pub fn resolvent_test_data(grid: &Arc<Grid>) -> SpinorField {
    SpinorField::from_fn(
        grid.clone(),
        |e, x| Complex64::new(x * x * (-(x - 2.0).powi(2)).exp() * (1.0 + 0.2 * e as f64), 0.0),
        |e, x| x * (-(x - 1.5).powi(2)).exp() * Complex64::new(0.5, -0.3 * e as f64),
    )
}

fn resolvent_check(cfg: &RunConfig, out: &mut Out) -> Step {
    let r = &cfg.resolvent;
    let grid = star_grid(cfg)?;
    let k = cfg.resolvent_k();
    let q = ResolventQuery::new(k, cfg.physics.m)?;
    let params = PhysParams::new(cfg.physics.m, 1.0)?;
    let variant = if r.debug_corrupt_kernel {
        KernelVariant::PRINTED_READING
    } else {
        KernelVariant::Derived
    };
    let psi = resolvent_test_data(&grid);
    let d = assemble_dirac(&grid, params)?;
    let solved = SpinorField::from_vec(grid.clone(), d.shifted_solve(k, psi.as_slice())?)?;
    let app = apply_kernel(&psi, &q, variant)?;
    let diff: Vec<Complex64> = solved
        .as_slice()
        .iter()
        .zip(app.field.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let cross = SpinorField::from_vec(grid.clone(), diff)?.l2_norm() / solved.l2_norm();
    let ident = identity_residual(&d, k, &app.field, &psi)?;
    let rd = resdecomp_check(&grid, params, k, r.num_samples, cfg.rng_seed)?;

    let check = |name, value: f64, tolerance| Check {
        name,
        value,
        tolerance,
        pass: value <= tolerance,
    };
    let checks = vec![
        check("kernel_vs_shifted_solve", cross, r.crosscheck_tol),
        check("resolvent_identity", ident, r.identity_tol),
        check("resdecomp_upper", rd.upper, r.resdecomp_tol),
        check("resdecomp_lower", rd.lower, r.resdecomp_tol),
    ];
    let pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        out.log(&format!(
            "{} {}: {:e} (tol {:e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        ));
    }

    let samples: Vec<KernelSample> = [0.0, 0.5, 2.0]
        .iter()
        .flat_map(|&x| {
            [0.0, 1.0].iter().flat_map(move |&y| {
                (0..3).flat_map(move |e| (0..3).map(move |f| KernelSample { x, e, y, f }))
            })
        })
        .collect();
    out.write("kernel_samples.csv", |w| write_kernel_dump(&samples, &q, variant, w))?;
    out.json(
        "resolvent_report.json",
        &ResolventReport {
            k_re: k.re,
            k_im: k.im,
            m: cfg.physics.m,
            h: cfg.graph.h,
            length: cfg.graph.length,
            kernel: if r.debug_corrupt_kernel { "printed_reading" } else { "derived" },
            lambda_re: q.lambda.re,
            lambda_im: q.lambda.im,
            continuity_gap: app.continuity_gap,
            chi_sum: app.chi_sum,
            resdecomp_lower_flipped: rd.lower_flipped,
            checks,
            pass,
        },
    )?;
    Ok(if pass {
        (EXIT_OK, None)
    } else {
        (EXIT_SOLVER, Some("resolvent checks failed".into()))
    })
}
