//! Python bindings: the CLI commands plus a few closed-form and solver entry
//! points.

use std::path::PathBuf;

use nlde_graph::commands;
use nlde_graph::config::{Command, RunConfig};
use nlde_graph::resolvent::{self, KernelVariant, ResolventQuery};
use nlde_graph::standing::{continue_branch, seed_state, SolitonSpec};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: nlde_graph::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_command(name: &str) -> PyResult<Command> {
    Ok(match name {
        "soliton" => Command::Soliton,
        "evolve" => Command::Evolve,
        "branch" => Command::Branch,
        "nonrel" => Command::Nonrel,
        "resolvent-check" | "resolvent_check" => Command::ResolventCheck,
        _ => return Err(PyValueError::new_err(format!("unknown command {name:?}"))),
    })
}

/// Runs a CLI command with a TOML configuration string. Returns
/// `(exit_code, files, message)`.
#[pyfunction]
#[pyo3(signature = (command, config = "", out_dir = None, seed = None))]
fn run(
    command: &str,
    config: &str,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<(i32, Vec<PathBuf>, Option<String>)> {
    let cmd = parse_command(command)?;
    let mut cfg = RunConfig::from_toml(config).map_err(value_err)?;
    if let Some(o) = out_dir {
        cfg.output_dir = o;
    }
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let out = commands::run(cmd, &cfg, false);
    Ok((out.code, out.files, out.message))
}

/// `(c_p, gamma_p, delta)` of the star soliton family.
#[pyfunction]
#[pyo3(signature = (p, m, n = 3, a = 0.0))]
fn soliton_constants(p: f64, m: f64, n: usize, a: f64) -> PyResult<(f64, f64, f64)> {
    let s = SolitonSpec::new(p, m, n, a).map_err(value_err)?;
    Ok((s.c_p(), s.gamma_p(), s.delta()))
}

/// Soliton profile on edge `edge` at the points `xs`.
#[pyfunction]
#[pyo3(signature = (p, m, edge, xs, n = 3, a = 0.0))]
fn soliton_profile(p: f64, m: f64, edge: usize, xs: Vec<f64>, n: usize, a: f64) -> PyResult<Vec<f64>> {
    let s = SolitonSpec::new(p, m, n, a).map_err(value_err)?;
    xs.iter().map(|&x| s.eval(edge, x).map_err(value_err)).collect()
}

/// `lambda` with `lambda^2 = k^2 - m^2` and positive imaginary part.
#[pyfunction]
fn lambda_of_k(k: Complex64, m: f64) -> PyResult<Complex64> {
    resolvent::lambda_of_k(k, m).map_err(value_err)
}

/// 2x2 block `(e, f)` of the closed-form 3-star resolvent kernel at `(x, y)`.
#[pyfunction]
fn kernel(x: f64, e: usize, y: f64, f: usize, k: Complex64, m: f64) -> PyResult<[[Complex64; 2]; 2]> {
    let q = ResolventQuery::new(k, m).map_err(value_err)?;
    let b = resolvent::star3_kernel(x, e, y, f, &q, KernelVariant::Derived).map_err(value_err)?;
    Ok([[b[(0, 0)], b[(0, 1)]], [b[(1, 0)], b[(1, 1)]]])
}

/// Continues the standing-wave branch from the soliton seed. Returns
/// `(eps, newton_iters, residual, min_singular_value, sup_u)` per point.
#[pyfunction]
#[pyo3(signature = (p = 4.0, m = 1.0, n = 3, h = 0.05, eps_max = 0.1, eps_step = 0.01, tol = 1e-11))]
fn branch(
    p: f64,
    m: f64,
    n: usize,
    h: f64,
    eps_max: f64,
    eps_step: f64,
    tol: f64,
) -> PyResult<Vec<(f64, usize, f64, f64, f64)>> {
    let spec = SolitonSpec::new(p, m, n, 0.0).map_err(value_err)?;
    let seed = seed_state(&spec, h, None).map_err(value_err)?;
    let br = continue_branch(&seed, eps_max, eps_step, tol).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(br
        .points
        .iter()
        .map(|pt| (pt.eps, pt.newton_iters, pt.residual, pt.min_singular_value, pt.state.sup_u()))
        .collect())
}

#[pymodule]
fn nlde_graph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(soliton_constants, m)?)?;
    m.add_function(wrap_pyfunction!(soliton_profile, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_of_k, m)?)?;
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(branch, m)?)?;
    Ok(())
}
