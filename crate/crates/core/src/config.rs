//! Run configuration read from TOML. Every section has defaults; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::graph::StarSpec;
use crate::operators::PhysParams;
use crate::resolvent::lambda_of_k;
use crate::standing::SolitonSpec;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    /// Number of half-lines.
    pub n: usize,
    /// Truncation length of each half-line.
    pub length: f64,
    pub h: f64,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            n: 3,
            length: 20.0,
            h: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub m: f64,
    pub c: f64,
    pub p: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { m: 1.0, c: 1.0, p: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolitonSection {
    /// Shift of the even-N family.
    pub a: f64,
}

impl Default for SolitonSection {
    fn default() -> Self {
        Self { a: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    Gaussian,
    StandingWave,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub dt: f64,
    pub t_end: f64,
    pub output_every: usize,
    /// `+1` focusing, `-1` defocusing.
    pub sign: f64,
    pub blowup_factor: f64,
    pub linear_solver_rtol: f64,
    pub track_duhamel: bool,
    pub initial: InitialData,
    /// Gaussian data `amplitude * exp(-((x - center)/width)^2)` in the first
    /// component.
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    /// Branch parameter of standing-wave data (`omega = m - eps`).
    pub eps: f64,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let e = EvolutionConfig::default();
        Self {
            dt: e.dt,
            t_end: e.t_end,
            output_every: 10,
            sign: e.sign,
            blowup_factor: e.blowup_factor,
            linear_solver_rtol: e.linear_solver_rtol,
            track_duhamel: false,
            initial: InitialData::Gaussian,
            amplitude: 1.0,
            center: 3.0,
            width: 1.0,
            eps: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchSection {
    pub eps_max: f64,
    pub eps_step: f64,
    /// Newton tolerance on the sup-norm residual.
    pub tol: f64,
    /// Rescaled truncation; defaults to `30/delta` rounded up to the grid.
    pub truncation: Option<f64>,
}

impl Default for BranchSection {
    fn default() -> Self {
        Self {
            eps_max: 0.1,
            eps_step: 0.01,
            tol: 1e-11,
            truncation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub c_list: Vec<f64>,
    pub k_re: f64,
    pub k_im: f64,
    /// Propagator comparison window.
    pub t: f64,
    pub dt: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            c_list: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            k_re: 0.0,
            k_im: 1.0,
            t: 0.5,
            dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventSection {
    pub k_re: f64,
    pub k_im: f64,
    pub num_samples: usize,
    /// Relative L2 tolerance of kernel application against the linear solve.
    pub crosscheck_tol: f64,
    /// Relative L2 tolerance of `(D - k) R psi = psi`.
    pub identity_tol: f64,
    pub resdecomp_tol: f64,
    /// Use the three-matrix kernel with the `-i` reading of the `B2` scalar
    /// (negative control).
    pub debug_corrupt_kernel: bool,
}

impl Default for ResolventSection {
    fn default() -> Self {
        Self {
            k_re: 1.0,
            k_im: 0.5,
            num_samples: 4,
            crosscheck_tol: 1e-3,
            identity_tol: 1e-2,
            resdecomp_tol: 1e-6,
            debug_corrupt_kernel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub rng_seed: u64,
    pub graph: GraphSection,
    pub physics: PhysicsSection,
    pub soliton: SolitonSection,
    pub evolution: EvolutionSection,
    pub branch: BranchSection,
    pub sweep: SweepSection,
    pub resolvent: ResolventSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            rng_seed: 0,
            graph: GraphSection::default(),
            physics: PhysicsSection::default(),
            soliton: SolitonSection::default(),
            evolution: EvolutionSection::default(),
            branch: BranchSection::default(),
            sweep: SweepSection::default(),
            resolvent: ResolventSection::default(),
        }
    }
}

/// Subcommand whose inputs are validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Soliton,
    Evolve,
    Branch,
    Nonrel,
    ResolventCheck,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn star(&self) -> StarSpec {
        StarSpec::new(self.graph.n, self.graph.length)
    }

    pub fn soliton_spec(&self) -> Result<SolitonSpec> {
        SolitonSpec::new(self.physics.p, self.physics.m, self.graph.n, self.soliton.a)
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        let e = &self.evolution;
        EvolutionConfig {
            dt: e.dt,
            t_end: e.t_end,
            p: self.physics.p,
            linear_solver_rtol: e.linear_solver_rtol,
            blowup_factor: e.blowup_factor,
            sign: e.sign,
            output_every: e.output_every,
            track_duhamel: e.track_duhamel,
        }
    }

    pub fn sweep_k(&self) -> Complex64 {
        Complex64::new(self.sweep.k_re, self.sweep.k_im)
    }

    pub fn resolvent_k(&self) -> Complex64 {
        Complex64::new(self.resolvent.k_re, self.resolvent.k_im)
    }

    fn require_unit_c(&self, what: &str) -> Result<()> {
        if self.physics.c != 1.0 {
            return Err(Error::Config(format!("{what} is available for c = 1 only, got c = {}", self.physics.c)));
        }
        Ok(())
    }

    /// Checks everything the command will use, before any output is written.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.star().validate().map_err(cfg)?;
        positive("graph.h", self.graph.h)?;
        let cells = self.graph.length / self.graph.h;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) || cells.round() < 4.0 {
            return Err(Error::Config(format!(
                "graph.length = {} must be a multiple (at least 4) of graph.h = {}",
                self.graph.length, self.graph.h
            )));
        }
        PhysParams::new(self.physics.m, self.physics.c).map_err(cfg)?;
        if !(self.physics.p > 2.0 && self.physics.p.is_finite()) {
            return Err(Error::Config(format!("physics.p must exceed 2, got {}", self.physics.p)));
        }
        match cmd {
            Command::Soliton => {
                self.soliton_spec().map_err(cfg)?;
            }
            Command::Evolve => {
                self.evolution_config().validate().map_err(cfg)?;
                let e = &self.evolution;
                match e.initial {
                    InitialData::Zero => {}
                    InitialData::Gaussian => {
                        positive("evolution.width", e.width)?;
                        if !e.amplitude.is_finite() || !e.center.is_finite() {
                            return Err(Error::Config("gaussian amplitude and center must be finite".into()));
                        }
                    }
                    InitialData::StandingWave => {
                        self.require_unit_c("standing-wave data")?;
                        self.soliton_spec().map_err(cfg)?;
                        positive("evolution.eps", e.eps)?;
                        if e.eps >= self.physics.m {
                            return Err(Error::Config(format!(
                                "evolution.eps = {} must stay below m = {}",
                                e.eps, self.physics.m
                            )));
                        }
                    }
                }
            }
            Command::Branch => {
                self.soliton_spec().map_err(cfg)?;
                self.require_unit_c("the branch table")?;
                let b = &self.branch;
                positive("branch.eps_step", b.eps_step)?;
                positive("branch.tol", b.tol)?;
                if !(b.eps_max >= 0.0 && b.eps_max < self.physics.m) {
                    return Err(Error::Config(format!(
                        "branch.eps_max must lie in [0, m), got {}",
                        b.eps_max
                    )));
                }
                if let Some(l) = b.truncation {
                    positive("branch.truncation", l)?;
                }
            }
            Command::Nonrel => {
                let s = &self.sweep;
                if s.c_list.len() < 4 {
                    return Err(Error::Config(format!("sweep.c_list needs at least 4 values, got {}", s.c_list.len())));
                }
                if s.c_list.iter().any(|c| !(*c > 0.0 && c.is_finite())) || s.c_list.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("sweep.c_list must be positive and increasing".into()));
                }
                if s.k_im == 0.0 || !s.k_re.is_finite() || !s.k_im.is_finite() {
                    return Err(Error::Config(format!("sweep k = {} must lie off the real axis", self.sweep_k())));
                }
                positive("sweep.dt", s.dt)?;
                if !(s.t >= 0.0 && s.t.is_finite()) {
                    return Err(Error::Config(format!("sweep.t must be nonnegative, got {}", s.t)));
                }
            }
            Command::ResolventCheck => {
                self.require_unit_c("the closed-form resolvent")?;
                if self.graph.n != 3 {
                    return Err(Error::Config(format!("the closed-form resolvent needs n = 3, got {}", self.graph.n)));
                }
                let r = &self.resolvent;
                lambda_of_k(self.resolvent_k(), self.physics.m).map_err(cfg)?;
                if r.k_im == 0.0 {
                    return Err(Error::Config("the factorization check needs k off the real axis".into()));
                }
                if r.num_samples == 0 {
                    return Err(Error::Config("resolvent.num_samples must be at least 1".into()));
                }
                positive("resolvent.crosscheck_tol", r.crosscheck_tol)?;
                positive("resolvent.identity_tol", r.identity_tol)?;
                positive("resolvent.resdecomp_tol", r.resdecomp_tol)?;
            }
        }
        Ok(())
    }
}
