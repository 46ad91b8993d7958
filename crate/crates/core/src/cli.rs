//! Command-line front end: `run`, `audit`, `scenario`, `selftest`.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 solver errors,
//! 4 audit failures. `POLYKINETIC_THREADS` caps worker parallelism.

use crate::config::{parse_config, RunConfig};
use crate::coupled::RunTrace;
use crate::diagnostics::decay_fit;
use crate::error::{Error, Result};
use crate::scenarios::{preset, preset_names, run_selftest};
use crate::trace_io;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
struct CliFlags {
    output_dir: PathBuf,
    cadence: Option<usize>,
    checkpoint_every: usize,
    log_level: u8,
}

impl Default for CliFlags {
    fn default() -> Self {
        CliFlags {
            output_dir: PathBuf::from("."),
            cadence: None,
            checkpoint_every: 0,
            log_level: 1,
        }
    }
}

fn parse_flags(args: &[String]) -> Result<(Vec<String>, CliFlags)> {
    let mut flags = CliFlags::default();
    let mut positional = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let take_value = |i: &mut usize| -> Result<String> {
            *i += 1;
            args.get(*i).cloned().ok_or_else(|| Error::Config {
                line: 0,
                message: format!("flag `{a}` needs a value"),
            })
        };
        match a.as_str() {
            "--output-dir" => flags.output_dir = PathBuf::from(take_value(&mut i)?),
            "--cadence" => {
                flags.cadence = Some(take_value(&mut i)?.parse().map_err(|_| Error::Config {
                    line: 0,
                    message: "--cadence needs a positive integer".into(),
                })?)
            }
            "--checkpoint-every" => {
                flags.checkpoint_every = take_value(&mut i)?.parse().map_err(|_| Error::Config {
                    line: 0,
                    message: "--checkpoint-every needs an integer".into(),
                })?
            }
            "--log-level" => {
                let v = take_value(&mut i)?;
                flags.log_level = match v.as_str() {
                    "quiet" => 0,
                    "info" => 1,
                    "debug" => 2,
                    other => {
                        return Err(Error::Config {
                            line: 0,
                            message: format!("unknown log level `{other}`"),
                        });
                    }
                };
            }
            other if other.starts_with("--") => {
                return Err(Error::Config {
                    line: 0,
                    message: format!("unknown flag `{other}`"),
                });
            }
            _ => positional.push(a.clone()),
        }
        i += 1;
    }
    Ok((positional, flags))
}

fn init_threads() {
    if let Ok(v) = std::env::var("POLYKINETIC_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn write_outputs(cfg: &RunConfig, trace: &RunTrace, flags: &CliFlags, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&flags.output_dir)?;
    let cadence = flags.cadence.unwrap_or(cfg.cadence).max(1);
    let csv_path = flags.output_dir.join(format!("{stem}_trace.csv"));
    if cadence == 1 {
        trace_io::write_trace_csv(trace, &csv_path)?;
    } else {
        let mut thinned = trace.clone();
        thinned.records = trace
            .records
            .iter()
            .enumerate()
            .filter(|(i, _)| (i + 1) % cadence == 0 || i + 1 == trace.records.len())
            .map(|(_, r)| r.clone())
            .collect();
        trace_io::write_trace_csv(&thinned, &csv_path)?;
    }
    Ok(csv_path)
}

fn summarize(trace: &RunTrace, log_level: u8) {
    if log_level == 0 {
        return;
    }
    let last = trace.records.last();
    eprintln!(
        "run complete: {} steps, dt = {:.6e}, L = {}, gamma0 = {:.6}",
        trace.meta.steps, trace.meta.dt, trace.meta.cutoff, trace.meta.gamma0
    );
    eprintln!("domain: {}", trace.meta.domain_note);
    if let Some(r) = last {
        eprintln!(
            "final: t = {:.4}, free energy = {:.6e}, mass in [{:.12}, {:.12}]",
            r.t, r.free_energy, r.mass_min, r.mass_max
        );
        let min_slack = trace
            .records
            .iter()
            .map(|r| r.energy_budget_slack)
            .fold(f64::INFINITY, f64::min);
        eprintln!("min energy-budget slack = {min_slack:.3e}");
    }
    if let Ok(rate) = decay_fit(1.0, &trace.records) {
        eprintln!("fitted decay rate of |u|^2 + 2k RE = {rate:.4}");
    }
}

fn cmd_run(path: &str, flags: &CliFlags) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        line: 0,
        message: format!("cannot read `{path}`: {e}"),
    })?;
    let mut cfg = parse_config(&text)?;
    cfg.directory = flags.output_dir.to_string_lossy().into_owned();
    std::fs::create_dir_all(&flags.output_dir)?;
    let mut opts = cfg.default_run_options();
    if flags.checkpoint_every > 0 {
        opts.checkpoint_every = flags.checkpoint_every;
        opts.checkpoint_dir = Some(flags.output_dir.clone());
    }
    let trace = cfg.run_with(opts)?;
    let stem = Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let csv = write_outputs(&cfg, &trace, flags, &stem)?;
    if flags.checkpoint_every > 0 {
        let ckpt = flags.output_dir.join(format!("{stem}_final.ckpt"));
        let (spaces, _) = cfg.assemble()?;
        trace_io::write_checkpoint(&ckpt, &spaces, &trace.final_state, &trace.meta.config_fingerprint)?;
        if flags.log_level > 0 {
            eprintln!("checkpoint written to {}", ckpt.display());
        }
    }
    summarize(&trace, flags.log_level);
    if flags.log_level > 0 {
        eprintln!("trace written to {}", csv.display());
    }
    Ok(())
}

fn cmd_audit(path: &str) -> Result<()> {
    let p = Path::new(path);
    let report = if p.extension().map(|e| e == "csv").unwrap_or(false) {
        let text = std::fs::read_to_string(p)?;
        trace_io::audit_csv_text(&text)?
    } else {
        trace_io::audit_checkpoint(p)?
    };
    println!("audited {} row(s)", report.rows);
    if report.ok() {
        println!("all audited inequalities hold");
        Ok(())
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        Err(Error::Audit(format!("{} violation(s)", report.violations.len())))
    }
}

fn cmd_scenario(name: &str, flags: &CliFlags) -> Result<()> {
    let mut cfg = preset(name).ok_or_else(|| Error::Config {
        line: 0,
        message: format!(
            "unknown scenario `{name}`; available: {}",
            preset_names().join(", ")
        ),
    })?;
    cfg.directory = flags.output_dir.to_string_lossy().into_owned();
    if flags.log_level > 0 {
        eprintln!("scenario `{name}`:");
        eprintln!("{}", crate::config::emit_config(&cfg));
    }
    let trace = cfg.run()?;
    write_outputs(&cfg, &trace, flags, name)?;
    summarize(&trace, flags.log_level);
    if flags.log_level > 0 {
        eprintln!(
            "trace written to {}",
            flags.output_dir.join(format!("{name}_trace.csv")).display()
        );
    }
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let lines = run_selftest()?;
    for l in lines {
        println!("selftest: {l}");
    }
    println!("selftest: all invariants hold");
    Ok(())
}

fn usage() -> String {
    format!(
        "usage: polykinetic <command> [flags]\n\
         commands:\n\
         \x20 run <config-file>     integrate the configured system, write the trace CSV\n\
         \x20 audit <file>          re-check inequalities in a trace CSV or checkpoint\n\
         \x20 scenario <name>       run a named preset ({})\n\
         \x20 selftest              run the invariant suite\n\
         flags: --output-dir DIR --cadence N --checkpoint-every N --log-level quiet|info|debug\n\
         env:   POLYKINETIC_THREADS caps worker parallelism\n",
        preset_names().join(", ")
    )
}

/// CLI entry point; returns the process exit code.
pub fn cli_main(argv: Vec<String>) -> i32 {
    init_threads();
    let args: Vec<String> = argv.into_iter().skip(1).collect();
    let (positional, flags) = match parse_flags(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if positional.is_empty() {
        eprint!("{}", usage());
        return 2;
    }
    let result = match positional[0].as_str() {
        "run" => match positional.get(1) {
            Some(path) => cmd_run(path, &flags),
            None => Err(Error::Config {
                line: 0,
                message: "run needs a config file".into(),
            }),
        },
        "audit" => match positional.get(1) {
            Some(path) => cmd_audit(path),
            None => Err(Error::Config {
                line: 0,
                message: "audit needs a file".into(),
            }),
        },
        "scenario" => match positional.get(1) {
            Some(name) => cmd_scenario(name, &flags),
            None => Err(Error::Config {
                line: 0,
                message: "scenario needs a preset name".into(),
            }),
        },
        "selftest" => cmd_selftest(),
        other => Err(Error::Config {
            line: 0,
            message: format!("unknown command `{other}`\n{}", usage()),
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
