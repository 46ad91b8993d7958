//! Flat-text run configuration: parsing with line-accurate errors,
//! canonical emission (parse-emit round trips), fingerprinting, and
//! assembly of a runnable setup.
//!
//! Schema: `[section]` headers with `key = value` lines, `#` comments.
//! Sections and keys are documented in the README; unknown keys are
//! rejected.

use crate::coupled::{InitialData, RunOptions, RunTrace};
use crate::error::{Error, Result};
use crate::fields::{build_spaces, Resolution, Spaces};
use crate::params::{
    cutoff_schedule, rouse_matrix_with, validate_params, CutoffSchedule, ForceSpec,
    PhysicalParams, PotentialSpec,
};

/// Initial-velocity preset.
#[derive(Debug, Clone, PartialEq)]
pub enum U0Spec {
    Zero,
    TaylorGreen { amplitude: f64 },
    Mode { kx: i32, ky: i32, amplitude: f64 },
}

/// Initial-density preset.
#[derive(Debug, Clone, PartialEq)]
pub enum Psi0Spec {
    Equilibrium,
    /// Squared perturbation `(1 + eta phi_k)^2 / (1 + eta^2)` with
    /// `eta(x) = amplitude cos(2 pi m.x)`; nonnegative and exactly mass-one.
    /// `q_index` selects a non-constant mode of the first spring's basis.
    Squared {
        q_index: usize,
        mode_x: i32,
        mode_y: i32,
        amplitude: f64,
    },
    /// Raw q-basis mode perturbation `1 + amplitude cos(2 pi m.x) phi_k(q)`.
    Mode {
        q_index: usize,
        mode_x: i32,
        mode_y: i32,
        amplitude: f64,
    },
    /// Density coefficients from a checkpoint file.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub physical: PhysicalParams,
    pub potential: PotentialSpec,
    pub cutoff_l: f64,
    pub c0: f64,
    pub delta: f64,
    /// Explicit time step; disables the dt-L link (refinement studies only).
    pub dt_override: Option<f64>,
    pub resolution: Resolution,
    pub u0: U0Spec,
    pub psi0: Psi0Spec,
    pub cadence: usize,
    pub directory: String,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            physical: PhysicalParams::default(),
            potential: PotentialSpec::default(),
            cutoff_l: 10.0,
            c0: 0.5,
            delta: 1e-4,
            dt_override: None,
            resolution: Resolution {
                x_modes: 32,
                q_degree: 8,
            },
            u0: U0Spec::Zero,
            psi0: Psi0Spec::Equilibrium,
            cadence: 1,
            directory: ".".into(),
            seed: 1,
        }
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Config {
        line,
        message: format!("key `{key}`: expected a number, got `{v}`"),
    })
}

fn parse_int<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config {
        line,
        message: format!("key `{key}`: expected an integer, got `{v}`"),
    })
}

/// Parses the flat key-value format; unknown sections or keys are errors
/// with their line number.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            match section.as_str() {
                "physical" | "chain" | "cutoff" | "resolution" | "initial" | "output" | "rng" => {}
                other => {
                    return Err(Error::Config {
                        line: line_no,
                        message: format!("unknown section `[{other}]`"),
                    });
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        match (section.as_str(), key) {
            ("physical", "nu") => cfg.physical.nu = parse_f64(line_no, key, value)?,
            ("physical", "k") => cfg.physical.k = parse_f64(line_no, key, value)?,
            ("physical", "lambda") => cfg.physical.lambda = parse_f64(line_no, key, value)?,
            ("physical", "epsilon") => cfg.physical.epsilon = parse_f64(line_no, key, value)?,
            ("physical", "springs") => cfg.physical.springs = parse_int(line_no, key, value)?,
            ("physical", "dim") => cfg.physical.dim = parse_int(line_no, key, value)?,
            ("physical", "t_final") => cfg.physical.t_final = parse_f64(line_no, key, value)?,
            ("physical", "body_force") => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                cfg.physical.body_force = match parts.as_slice() {
                    ["zero"] => ForceSpec::Zero,
                    ["taylor_green", a, w] => ForceSpec::TaylorGreen {
                        amplitude: parse_f64(line_no, key, a)?,
                        omega: parse_f64(line_no, key, w)?,
                    },
                    ["time_ramp", a] => ForceSpec::TimeRamp {
                        amplitude: parse_f64(line_no, key, a)?,
                    },
                    _ => {
                        return Err(Error::Config {
                            line: line_no,
                            message: format!("unknown body_force spec `{value}`"),
                        });
                    }
                };
            }
            ("chain", "theta") => cfg.potential.theta = parse_f64(line_no, key, value)?,
            ("chain", "s_inf") => cfg.potential.s_inf = parse_f64(line_no, key, value)?,
            ("cutoff", "cutoff_l") => cfg.cutoff_l = parse_f64(line_no, key, value)?,
            ("cutoff", "c0") => cfg.c0 = parse_f64(line_no, key, value)?,
            ("cutoff", "delta") => cfg.delta = parse_f64(line_no, key, value)?,
            ("cutoff", "dt_override") => {
                cfg.dt_override = Some(parse_f64(line_no, key, value)?);
            }
            ("resolution", "x_modes") => cfg.resolution.x_modes = parse_int(line_no, key, value)?,
            ("resolution", "q_degree") => cfg.resolution.q_degree = parse_int(line_no, key, value)?,
            ("initial", "u0") => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                cfg.u0 = match parts.as_slice() {
                    ["zero"] => U0Spec::Zero,
                    ["taylor_green", a] => U0Spec::TaylorGreen {
                        amplitude: parse_f64(line_no, key, a)?,
                    },
                    ["mode", kx, ky, a] => U0Spec::Mode {
                        kx: parse_int(line_no, key, kx)?,
                        ky: parse_int(line_no, key, ky)?,
                        amplitude: parse_f64(line_no, key, a)?,
                    },
                    _ => {
                        return Err(Error::Config {
                            line: line_no,
                            message: format!("unknown u0 spec `{value}`"),
                        });
                    }
                };
            }
            ("initial", "psi0") => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                cfg.psi0 = match parts.as_slice() {
                    ["equilibrium"] => Psi0Spec::Equilibrium,
                    ["squared", q, mx, my, a] => Psi0Spec::Squared {
                        q_index: parse_int(line_no, key, q)?,
                        mode_x: parse_int(line_no, key, mx)?,
                        mode_y: parse_int(line_no, key, my)?,
                        amplitude: parse_f64(line_no, key, a)?,
                    },
                    ["mode", q, mx, my, a] => Psi0Spec::Mode {
                        q_index: parse_int(line_no, key, q)?,
                        mode_x: parse_int(line_no, key, mx)?,
                        mode_y: parse_int(line_no, key, my)?,
                        amplitude: parse_f64(line_no, key, a)?,
                    },
                    ["file", path] => Psi0Spec::File {
                        path: (*path).to_string(),
                    },
                    _ => {
                        return Err(Error::Config {
                            line: line_no,
                            message: format!("unknown psi0 spec `{value}`"),
                        });
                    }
                };
            }
            ("output", "cadence") => cfg.cadence = parse_int(line_no, key, value)?,
            ("output", "directory") => cfg.directory = value.to_string(),
            ("rng", "seed") => cfg.seed = parse_int(line_no, key, value)?,
            (sec, key) => {
                return Err(Error::Config {
                    line: line_no,
                    message: if sec.is_empty() {
                        format!("key `{key}` appears before any section")
                    } else {
                        format!("unknown key `{key}` in section `[{sec}]`")
                    },
                });
            }
        }
    }
    validate_config(&cfg)?;
    Ok(cfg)
}

fn validate_config(cfg: &RunConfig) -> Result<()> {
    cfg.physical.validate()?;
    cfg.potential.validate()?;
    if !(cfg.cutoff_l > 1.0) {
        return Err(Error::invalid("cutoff_l", "cut-off level must exceed 1"));
    }
    if !(cfg.c0 > 0.0) {
        return Err(Error::invalid("c0", "link constant must be > 0"));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::invalid("delta", "delta must lie in (0,1)"));
    }
    if cfg.cadence == 0 {
        return Err(Error::invalid("cadence", "cadence must be >= 1"));
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips.
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:e}")
    }
}

/// Canonical emission; `parse(emit(c)) == c`.
pub fn emit_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    s.push_str("[physical]\n");
    s.push_str(&format!("nu = {}\n", fmt_f64(cfg.physical.nu)));
    s.push_str(&format!("k = {}\n", fmt_f64(cfg.physical.k)));
    s.push_str(&format!("lambda = {}\n", fmt_f64(cfg.physical.lambda)));
    s.push_str(&format!("epsilon = {}\n", fmt_f64(cfg.physical.epsilon)));
    s.push_str(&format!("springs = {}\n", cfg.physical.springs));
    s.push_str(&format!("dim = {}\n", cfg.physical.dim));
    s.push_str(&format!("t_final = {}\n", fmt_f64(cfg.physical.t_final)));
    match &cfg.physical.body_force {
        ForceSpec::Zero => s.push_str("body_force = zero\n"),
        ForceSpec::TaylorGreen { amplitude, omega } => s.push_str(&format!(
            "body_force = taylor_green {} {}\n",
            fmt_f64(*amplitude),
            fmt_f64(*omega)
        )),
        ForceSpec::TimeRamp { amplitude } => {
            s.push_str(&format!("body_force = time_ramp {}\n", fmt_f64(*amplitude)))
        }
    }
    s.push_str("\n[chain]\n");
    s.push_str(&format!("theta = {}\n", fmt_f64(cfg.potential.theta)));
    s.push_str(&format!("s_inf = {}\n", fmt_f64(cfg.potential.s_inf)));
    s.push_str("\n[cutoff]\n");
    s.push_str(&format!("cutoff_l = {}\n", fmt_f64(cfg.cutoff_l)));
    s.push_str(&format!("c0 = {}\n", fmt_f64(cfg.c0)));
    s.push_str(&format!("delta = {}\n", fmt_f64(cfg.delta)));
    if let Some(dt) = cfg.dt_override {
        s.push_str(&format!("dt_override = {}\n", fmt_f64(dt)));
    }
    s.push_str("\n[resolution]\n");
    s.push_str(&format!("x_modes = {}\n", cfg.resolution.x_modes));
    s.push_str(&format!("q_degree = {}\n", cfg.resolution.q_degree));
    s.push_str("\n[initial]\n");
    match &cfg.u0 {
        U0Spec::Zero => s.push_str("u0 = zero\n"),
        U0Spec::TaylorGreen { amplitude } => {
            s.push_str(&format!("u0 = taylor_green {}\n", fmt_f64(*amplitude)))
        }
        U0Spec::Mode { kx, ky, amplitude } => {
            s.push_str(&format!("u0 = mode {} {} {}\n", kx, ky, fmt_f64(*amplitude)))
        }
    }
    match &cfg.psi0 {
        Psi0Spec::Equilibrium => s.push_str("psi0 = equilibrium\n"),
        Psi0Spec::Squared {
            q_index,
            mode_x,
            mode_y,
            amplitude,
        } => s.push_str(&format!(
            "psi0 = squared {} {} {} {}\n",
            q_index,
            mode_x,
            mode_y,
            fmt_f64(*amplitude)
        )),
        Psi0Spec::Mode {
            q_index,
            mode_x,
            mode_y,
            amplitude,
        } => s.push_str(&format!(
            "psi0 = mode {} {} {} {}\n",
            q_index,
            mode_x,
            mode_y,
            fmt_f64(*amplitude)
        )),
        Psi0Spec::File { path } => s.push_str(&format!("psi0 = file {path}\n")),
    }
    s.push_str("\n[output]\n");
    s.push_str(&format!("cadence = {}\n", cfg.cadence));
    s.push_str(&format!("directory = {}\n", cfg.directory));
    s.push_str("\n[rng]\n");
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s
}

/// FNV-1a hash of the canonical emission, as a hex string.
pub fn fingerprint(cfg: &RunConfig) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in emit_config(cfg).bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

impl RunConfig {
    pub fn schedule(&self) -> Result<CutoffSchedule> {
        match self.dt_override {
            Some(dt) => {
                let mut s = CutoffSchedule::with_explicit_dt(self.cutoff_l, dt, self.physical.t_final)?;
                s.delta = self.delta;
                Ok(s)
            }
            None => {
                let mut s = cutoff_schedule(self.cutoff_l, self.c0, self.physical.t_final)?;
                s.delta = self.delta;
                Ok(s)
            }
        }
    }

    /// Builds the discretization and initial data this config describes.
    pub fn assemble(&self) -> Result<(Spaces, InitialData)> {
        let chain = rouse_matrix_with(self.physical.springs, self.potential)?;
        let params = validate_params(self.physical.clone(), chain)?;
        let spaces = build_spaces(params, self.resolution)?;
        let u0 = match &self.u0 {
            U0Spec::Zero => spaces.xs.zero_vector(),
            U0Spec::TaylorGreen { amplitude } => spaces.xs.taylor_green(*amplitude),
            U0Spec::Mode { kx, ky, amplitude } => spaces.xs.solenoidal_mode(*kx, *ky, *amplitude),
        };
        let psi0 = crate::scenarios::build_initial_density(&spaces, &self.psi0)?;
        Ok((spaces, InitialData { u0, psi0 }))
    }

    /// Default run options for this configuration: failure checkpoints go
    /// to the configured output directory.
    pub fn default_run_options(&self) -> RunOptions {
        RunOptions {
            config_fingerprint: fingerprint(self),
            failure_checkpoint: Some(
                std::path::Path::new(&self.directory).join("last_good_state.ckpt"),
            ),
            ..RunOptions::default()
        }
    }

    /// Full run from this configuration.
    pub fn run(&self) -> Result<RunTrace> {
        self.run_with(self.default_run_options())
    }

    /// Full run with explicit run options (checkpoint cadence and paths).
    pub fn run_with(&self, opts: RunOptions) -> Result<RunTrace> {
        let (spaces, init) = self.assemble()?;
        let schedule = self.schedule()?;
        crate::coupled::run(&spaces, &init, &schedule, &self.physical.body_force, &opts)
    }
}
