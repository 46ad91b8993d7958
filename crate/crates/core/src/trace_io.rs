//! Trace CSV emission, binary checkpoints and the audit entry points for
//! both. CSV rows carry 17 significant digits so every audit is
//! reproducible from the file alone; files are byte-deterministic.

use crate::coupled::{RunTrace, State};
use crate::error::{Error, Result};
use crate::fields::Spaces;
use std::io::{Read, Write};
use std::path::Path;

pub const CSV_COLUMNS: usize = 13;
const CSV_HEADER: &str = "t,kinetic_energy,relative_entropy,fisher_x,fisher_q,free_energy,mass_min,mass_max,psi_min,cutoff_active_fraction,energy_budget_slack,ck_gap,ls_gap";

/// Renders the per-step table; one row per recorded step.
pub fn trace_csv_string(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        let row = [
            r.t,
            r.kinetic_energy,
            r.relative_entropy,
            r.fisher_x,
            r.fisher_q,
            r.free_energy,
            r.mass_min,
            r.mass_max,
            r.psi_min,
            r.cutoff_active_fraction,
            r.energy_budget_slack,
            r.ck_gap,
            r.ls_gap,
        ];
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_trace_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(trace_csv_string(trace).as_bytes())?;
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PKCHKP1\n";

/// Self-describing binary checkpoint: header (fingerprint, resolutions,
/// step index, time), then coefficient arrays as little-endian f64.
pub fn write_checkpoint(path: &Path, spaces: &Spaces, state: &State, fingerprint: &str) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let fp = fingerprint.as_bytes();
    buf.extend_from_slice(&(fp.len() as u32).to_le_bytes());
    buf.extend_from_slice(fp);
    for v in [
        spaces.resolution.x_modes as u32,
        spaces.resolution.q_degree as u32,
        spaces.qs.springs as u32,
        spaces.qs.n_q as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(state.step_index as u64).to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    for c in 0..2 {
        for z in &state.u.spec[c] {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    for v in &state.psi.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Raw checkpoint payload.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub x_modes: usize,
    pub q_degree: usize,
    pub springs: usize,
    pub n_q: usize,
    pub step_index: u64,
    pub t: f64,
    pub u_spec: [Vec<(f64, f64)>; 2],
    pub psi_data: Vec<f64>,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > data.len() {
            return Err(Error::Audit("checkpoint truncated".into()));
        }
        let s = &data[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != CHECKPOINT_MAGIC {
        return Err(Error::Audit("not a checkpoint file (bad magic)".into()));
    }
    let fp_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let fingerprint = String::from_utf8(take(&mut pos, fp_len)?.to_vec())
        .map_err(|_| Error::Audit("checkpoint fingerprint is not UTF-8".into()))?;
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };
    let x_modes = read_u32(&mut pos)? as usize;
    let q_degree = read_u32(&mut pos)? as usize;
    let springs = read_u32(&mut pos)? as usize;
    let n_q = read_u32(&mut pos)? as usize;
    let step_index = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let t = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let nx = x_modes * x_modes;
    let read_f64 = |pos: &mut usize| -> Result<f64> {
        Ok(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
    };
    let mut u_spec: [Vec<(f64, f64)>; 2] = [Vec::with_capacity(nx), Vec::with_capacity(nx)];
    for c in 0..2 {
        for _ in 0..nx {
            let re = read_f64(&mut pos)?;
            let im = read_f64(&mut pos)?;
            u_spec[c].push((re, im));
        }
    }
    let mut psi_data = Vec::with_capacity(nx * n_q);
    for _ in 0..nx * n_q {
        psi_data.push(read_f64(&mut pos)?);
    }
    if pos != data.len() {
        return Err(Error::Audit("checkpoint has trailing bytes".into()));
    }
    Ok(Checkpoint {
        fingerprint,
        x_modes,
        q_degree,
        springs,
        n_q,
        step_index,
        t,
        u_spec,
        psi_data,
    })
}

/// Outcome of auditing a trace CSV or checkpoint.
#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub rows: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks every inequality that is decidable from the CSV alone.
pub fn audit_csv_text(text: &str) -> Result<AuditReport> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Audit("empty trace file".into()))?;
    if header != CSV_HEADER {
        return Err(Error::Audit("unexpected trace header".into()));
    }
    let mut report = AuditReport::default();
    let mut prev_t = f64::NEG_INFINITY;
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|_| Error::Audit(format!("row {}: bad number", i + 1))))
            .collect::<Result<_>>()?;
        if vals.len() != CSV_COLUMNS {
            report
                .violations
                .push(format!("row {}: {} columns, expected {CSV_COLUMNS}", i + 1, vals.len()));
            continue;
        }
        report.rows += 1;
        let [t, ke, re, _fx, _fq, fe, mass_min, mass_max, _psi_min, cut, slack, ck, ls] =
            <[f64; 13]>::try_from(vals.as_slice()).unwrap();
        if !vals.iter().all(|v| v.is_finite()) {
            report.violations.push(format!("row {}: non-finite entry", i + 1));
        }
        if t <= prev_t {
            report.violations.push(format!("row {}: time stamps not increasing", i + 1));
        }
        prev_t = t;
        // The universal invariant is marginal in [0, 1]; equality with 1
        // holds exactly while the cut-off never bites.
        if mass_min < -1e-6 || mass_max > 1.0 + 1e-6 || mass_min > mass_max + 1e-12 {
            report.violations.push(format!(
                "row {}: marginal out of bounds [{mass_min}, {mass_max}]",
                i + 1
            ));
        }
        if slack < -1e-9 {
            report
                .violations
                .push(format!("row {}: energy budget slack {slack}", i + 1));
        }
        if ck < -1e-9 {
            report.violations.push(format!("row {}: ck gap {ck}", i + 1));
        }
        if ls < -1e-9 {
            report.violations.push(format!("row {}: ls gap {ls}", i + 1));
        }
        if !(0.0..=1.0 + 1e-12).contains(&cut) {
            report
                .violations
                .push(format!("row {}: cutoff fraction {cut}", i + 1));
        }
        if fe < -1e-12 || ke < -1e-12 || re < -1e-12 {
            report.violations.push(format!("row {}: negative energy entry", i + 1));
        }
        if fe + 1e-12 < ke {
            report
                .violations
                .push(format!("row {}: free energy below kinetic part", i + 1));
        }
    }
    if report.rows == 0 {
        report.violations.push("trace has no data rows".into());
    }
    Ok(report)
}

/// Structural and invariant checks on a checkpoint file.
pub fn audit_checkpoint(path: &Path) -> Result<AuditReport> {
    let cp = read_checkpoint(path)?;
    let mut report = AuditReport { rows: 1, violations: Vec::new() };
    if !cp.psi_data.iter().all(|v| v.is_finite()) {
        report.violations.push("non-finite density coefficients".into());
    }
    for c in 0..2 {
        if !cp.u_spec[c].iter().all(|(a, b)| a.is_finite() && b.is_finite()) {
            report.violations.push("non-finite velocity coefficients".into());
        }
    }
    // Marginal per x-node (coefficient of the constant basis function);
    // the invariant set bounds it by [0, 1].
    let nx = cp.x_modes * cp.x_modes;
    for x in 0..nx {
        let zeta = cp.psi_data[x * cp.n_q];
        if !(-1e-6..=1.0 + 1e-6).contains(&zeta) {
            report
                .violations
                .push(format!("x-node {x}: marginal {zeta} outside [0, 1]"));
            break;
        }
    }
    // Divergence of the stored velocity on a freshly built grid.
    let xs = crate::xspace::XSpace::new(cp.x_modes)?;
    let u = [
        cp.u_spec[0]
            .iter()
            .map(|&(re, im)| rustfft::num_complex::Complex64::new(re, im))
            .collect::<Vec<_>>(),
        cp.u_spec[1]
            .iter()
            .map(|&(re, im)| rustfft::num_complex::Complex64::new(re, im))
            .collect::<Vec<_>>(),
    ];
    let div = xs.spec_max(&xs.divergence(&u));
    if div > 1e-10 {
        report.violations.push(format!("velocity divergence {div}"));
    }
    Ok(report)
}
