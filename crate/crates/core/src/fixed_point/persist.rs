//! Solution directories.
//!
//! ```text
//! <dir>/n_star/          state flow
//! <dir>/q_star/          joint flow
//! <dir>/policy.csv       feedback matrix
//! <dir>/certificate.txt  key = value lines
//! <dir>/trace.csv        # iter,gap,epsilon,residual
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EquilibriumCertificate, MfgSolution, TraceRow};
use crate::best_response::FeedbackPolicy;
use crate::error::{MfgError, Result};
use crate::measures::{read_flow, write_flow};

pub fn write_solution(dir: &Path, sol: &MfgSolution) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_flow(&dir.join("n_star"), &sol.n_star)?;
    write_flow(&dir.join("q_star"), &sol.q_star)?;
    sol.policy.write(&dir.join("policy.csv"))?;
    let c = &sol.certificate;
    let mut text = String::new();
    let _ = writeln!(text, "epsilon = {}", c.epsilon);
    let _ = writeln!(text, "consistency_gap = {}", c.consistency_gap);
    let _ = writeln!(text, "fp_residual_max = {}", c.fp_residual_max);
    let _ = writeln!(text, "residual_tol = {}", c.residual_tol);
    let _ = writeln!(text, "iterations = {}", c.iterations);
    let _ = writeln!(text, "converged = {}", c.converged);
    let _ = writeln!(text, "valid = {}", c.valid);
    fs::write(dir.join("certificate.txt"), text)?;
    let mut trace = String::from("# iter,gap,epsilon,residual\n");
    for r in &c.trace {
        let _ = writeln!(trace, "{},{},{},{}", r.iter, r.gap, r.epsilon, r.residual);
    }
    fs::write(dir.join("trace.csv"), trace)?;
    Ok(())
}

pub fn read_solution(dir: &Path) -> Result<MfgSolution> {
    if !dir.is_dir() {
        return Err(MfgError::MissingInput(format!("solution directory {} not found", dir.display())));
    }
    let n_star = read_flow(&dir.join("n_star"))?;
    let q_star = read_flow(&dir.join("q_star"))?;
    let policy = FeedbackPolicy::read(&dir.join("policy.csv"))?;
    let text = fs::read_to_string(dir.join("certificate.txt"))?;
    let mut kv = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| MfgError::Parse(format!("certificate line `{line}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
        let raw = kv.get(key).ok_or_else(|| MfgError::Parse(format!("certificate lacks `{key}`")))?;
        raw.parse().map_err(|_| MfgError::Parse(format!("bad value `{raw}` for `{key}`")))
    }
    let trace_text = fs::read_to_string(dir.join("trace.csv"))?;
    let mut trace = Vec::new();
    for line in trace_text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(MfgError::Parse(format!("trace row `{line}`")));
        }
        let f = |s: &str| s.trim().parse::<f64>().map_err(|_| MfgError::Parse(format!("bad number `{s}`")));
        trace.push(TraceRow {
            iter: cols[0].trim().parse().map_err(|_| MfgError::Parse(format!("bad index `{}`", cols[0])))?,
            gap: f(cols[1])?,
            epsilon: f(cols[2])?,
            residual: f(cols[3])?,
        });
    }
    let certificate = EquilibriumCertificate {
        epsilon: get(&kv, "epsilon")?,
        consistency_gap: get(&kv, "consistency_gap")?,
        fp_residual_max: get(&kv, "fp_residual_max")?,
        residual_tol: get(&kv, "residual_tol")?,
        iterations: get(&kv, "iterations")?,
        trace,
        converged: get(&kv, "converged")?,
        valid: get(&kv, "valid")?,
    };
    if certificate.trace.len() != certificate.iterations {
        return Err(MfgError::Parse("trace length differs from the iteration count".into()));
    }
    Ok(MfgSolution { n_star, q_star, certificate, policy })
}
