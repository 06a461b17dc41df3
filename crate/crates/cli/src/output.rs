//! Output artifact writers and the draws-file reader.
//!
//! All artifacts are CSV with fixed column orders:
//! - draws:   `chain,iteration,parameter,value`
//! - summary: `parameter,mean,q05,q95,rhat,flag`
//! - smooth:  `patient_id,day,outcome,post_mean,q05,q95`
//! - report:  `parameter` then `<model>_mean,<model>_q05,<model>_q95,<model>_flag`
//!   per model, with `*` / `+` / `#` marking a dynamic-model, first-baseline,
//!   or second-baseline interval that excludes zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mdlm::baselines::ComparisonReport;
use mdlm::sampler::{Chain, ChainSet, ParamSummary};

use crate::ingest::write_text;
use crate::CliError;

pub fn write_draws(path: &Path, chains: &ChainSet) -> Result<(), CliError> {
    let mut text = String::from("chain,iteration,parameter,value\n");
    for (c, chain) in chains.chains.iter().enumerate() {
        let n = chain.draws.first().map_or(0, Vec::len);
        for iter in 0..n {
            for (p, name) in chains.param_names.iter().enumerate() {
                let _ = writeln!(text, "{c},{iter},{name},{}", chain.draws[p][iter]);
            }
        }
    }
    write_text(path, &text)
}

pub fn write_summary(path: &Path, summaries: &[ParamSummary]) -> Result<(), CliError> {
    let mut text = String::from("parameter,mean,q05,q95,rhat,flag\n");
    for s in summaries {
        let flag = if s.excludes_zero { "*" } else { "" };
        let rhat = if s.rhat.is_nan() {
            "fixed".to_string()
        } else {
            format!("{:.4}", s.rhat)
        };
        let _ = writeln!(
            text,
            "{},{},{},{},{rhat},{flag}",
            s.name, s.mean, s.lower, s.upper
        );
    }
    write_text(path, &text)
}

/// Per-patient daily smoothing output rows.
pub struct SmoothRow {
    pub patient_id: String,
    pub day: usize,
    pub outcome: String,
    pub post_mean: f64,
    pub q05: f64,
    pub q95: f64,
}

pub fn write_smooth(path: &Path, rows: &[SmoothRow]) -> Result<(), CliError> {
    let mut text = String::from("patient_id,day,outcome,post_mean,q05,q95\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            r.patient_id, r.day, r.outcome, r.post_mean, r.q05, r.q95
        );
    }
    write_text(path, &text)
}

const MODEL_FLAGS: [&str; 3] = ["*", "+", "#"];

pub fn write_report(path: &Path, report: &ComparisonReport) -> Result<(), CliError> {
    let mut header = String::from("parameter");
    for label in &report.model_labels {
        let _ = write!(
            header,
            ",{label}_mean,{label}_q05,{label}_q95,{label}_flag"
        );
    }
    let mut text = header;
    text.push('\n');
    for (row, label) in report.row_labels.iter().enumerate() {
        let _ = write!(text, "{label}");
        for (m, cells) in report.cells.iter().enumerate() {
            match &cells[row] {
                Some(cell) => {
                    let flag = if cell.significant {
                        MODEL_FLAGS.get(m).copied().unwrap_or("*")
                    } else {
                        ""
                    };
                    let _ = write!(text, ",{},{},{},{flag}", cell.mean, cell.lower, cell.upper);
                }
                None => {
                    let _ = write!(text, ",,,,");
                }
            }
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// Reads a draws file back into a `ChainSet`. Parameters pinned during the
/// original run reappear as constant columns and are re-marked as fixed so
/// diagnostics skip them.
pub fn read_draws(path: &Path) -> Result<ChainSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "chain,iteration,parameter,value" => {}
        _ => {
            return Err(CliError::Validation(format!(
                "{}: expected header `chain,iteration,parameter,value`",
                path.display()
            )))
        }
    }
    let mut param_names: Vec<String> = Vec::new();
    let mut chains: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CliError::Validation(format!(
                "{}:{line_no}: expected 4 fields",
                path.display()
            )));
        }
        let chain: usize = parts[0].trim().parse().map_err(|_| {
            CliError::Validation(format!("{}:{line_no}: bad chain index", path.display()))
        })?;
        let name = parts[2].trim();
        let value: f64 = parts[3].trim().parse().map_err(|_| {
            CliError::Validation(format!("{}:{line_no}: bad value", path.display()))
        })?;
        let p = match param_names.iter().position(|n| n == name) {
            Some(p) => p,
            None => {
                param_names.push(name.to_string());
                param_names.len() - 1
            }
        };
        let entry = chains.entry(chain).or_default();
        if entry.len() <= p {
            entry.resize(p + 1, Vec::new());
        }
        entry[p].push(value);
    }
    if chains.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no draws found",
            path.display()
        )));
    }
    let n_params = param_names.len();
    let mut first_len = None;
    let mut out_chains = Vec::new();
    for (chain_idx, mut draws) in chains {
        draws.resize(n_params, Vec::new());
        let len = draws[0].len();
        if draws.iter().any(|d| d.len() != len) {
            return Err(CliError::Validation(format!(
                "{}: chain {chain_idx} is ragged across parameters",
                path.display()
            )));
        }
        match first_len {
            None => first_len = Some(len),
            Some(l) if l != len => {
                return Err(CliError::Validation(format!(
                    "{}: chains have unequal lengths",
                    path.display()
                )))
            }
            _ => {}
        }
        out_chains.push(Chain {
            draws,
            accept: Vec::new(),
            proposal_scales: Vec::new(),
            imputation_index: None,
        });
    }
    let fixed_mask: Vec<bool> = (0..n_params)
        .map(|p| {
            out_chains.iter().all(|c| {
                c.draws[p]
                    .windows(2)
                    .all(|w| w[0] == w[1])
            }) && out_chains
                .windows(2)
                .all(|w| w[0].draws[p].first() == w[1].draws[p].first())
        })
        .collect();
    Ok(ChainSet {
        param_names,
        chains: out_chains,
        warmup: 0,
        seed: 0,
        fixed_mask,
    })
}
