//! CSV ingestion and emission.
//!
//! Three input files describe a cohort:
//! - adherence: `patient_id,day,adherent` with adherent in {0, 1, NA}, one
//!   row per tracked day, days 1..=T contiguous per patient;
//! - outcomes: optional manifest line `# outcomes: name1,name2` pinning the
//!   outcome-index order, then `patient_id,day,outcome_name,value` with
//!   repeated (patient, day, outcome) rows kept as replicates;
//! - baseline: `patient_id,<covariate columns>`; the intercept column is
//!   prepended automatically.
//!
//! Days are 1-based in every file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mdlm::{DynamicCovariates, ModelDims, Observation, PatientRecord};

use crate::CliError;

#[derive(Debug)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub dims: ModelDims,
    pub outcome_names: Vec<String>,
    #[allow(dead_code)]
    pub baseline_names: Vec<String>,
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn malformed(path: &Path, line: usize, msg: &str) -> CliError {
    CliError::Validation(format!("{}:{line}: {msg}", path.display()))
}

struct AdherenceData {
    /// patient -> (day -> Option<+1/-1>), insertion-ordered by first row
    per_patient: BTreeMap<String, BTreeMap<usize, Option<f64>>>,
    order: Vec<String>,
}

fn read_adherence(path: &Path) -> Result<AdherenceData, CliError> {
    let text = read_file(path)?;
    let mut per_patient: BTreeMap<String, BTreeMap<usize, Option<f64>>> = BTreeMap::new();
    let mut order = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "patient_id,day,adherent" => {}
        _ => return Err(malformed(path, 1, "expected header `patient_id,day,adherent`")),
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(malformed(path, line_no, "expected 3 fields"));
        }
        let id = parts[0].trim().to_string();
        let day: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| malformed(path, line_no, "day must be a positive integer"))?;
        if day == 0 {
            return Err(malformed(path, line_no, "day numbering starts at 1"));
        }
        let value = match parts[2].trim() {
            "NA" | "na" | "" => None,
            "1" => Some(1.0),
            "0" => Some(-1.0),
            other => {
                return Err(malformed(
                    path,
                    line_no,
                    &format!("adherent must be 0, 1, or NA (got `{other}`)"),
                ))
            }
        };
        if !per_patient.contains_key(&id) {
            order.push(id.clone());
        }
        let days = per_patient.entry(id).or_default();
        if days.insert(day, value).is_some() {
            return Err(malformed(path, line_no, "duplicate adherence day"));
        }
    }
    // contiguity: each patient's days must be exactly 1..=T
    for (id, days) in &per_patient {
        let t = *days.keys().max().unwrap();
        if days.len() != t {
            return Err(CliError::Validation(format!(
                "{}: patient `{id}` has {} adherence rows but max day {t} (inconsistent horizon)",
                path.display(),
                days.len()
            )));
        }
    }
    Ok(AdherenceData { per_patient, order })
}

struct OutcomeData {
    names: Vec<String>,
    /// patient -> observation triples (0-based outcome index)
    per_patient: BTreeMap<String, Vec<Observation>>,
}

fn read_outcomes(path: &Path) -> Result<OutcomeData, CliError> {
    let text = read_file(path)?;
    let mut names: Vec<String> = Vec::new();
    let mut pinned = false;
    let mut per_patient: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();
    if let Some((_, first)) = lines.peek() {
        if let Some(rest) = first.trim().strip_prefix("# outcomes:") {
            names = rest.split(',').map(|s| s.trim().to_string()).collect();
            names.retain(|n| !n.is_empty());
            pinned = true;
            lines.next();
        }
    }
    match lines.next() {
        Some((_, header)) if header.trim() == "patient_id,day,outcome_name,value" => {}
        _ => {
            return Err(malformed(
                path,
                1,
                "expected header `patient_id,day,outcome_name,value`",
            ))
        }
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(malformed(path, line_no, "expected 4 fields"));
        }
        let id = parts[0].trim().to_string();
        let day: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| malformed(path, line_no, "day must be a positive integer"))?;
        let name = parts[2].trim().to_string();
        let value: f64 = parts[3]
            .trim()
            .parse()
            .map_err(|_| malformed(path, line_no, "value must be numeric"))?;
        let outcome = match names.iter().position(|n| *n == name) {
            Some(k) => k,
            None if !pinned => {
                names.push(name);
                names.len() - 1
            }
            None => {
                return Err(malformed(
                    path,
                    line_no,
                    &format!("outcome `{name}` is not in the manifest header"),
                ))
            }
        };
        per_patient.entry(id).or_default().push(Observation {
            day,
            outcome,
            value,
        });
    }
    if names.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no outcomes found",
            path.display()
        )));
    }
    Ok(OutcomeData { names, per_patient })
}

struct BaselineData {
    names: Vec<String>,
    per_patient: BTreeMap<String, Vec<f64>>,
}

fn read_baseline(path: &Path) -> Result<BaselineData, CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim().to_string(),
        None => return Err(malformed(path, 1, "empty baseline file")),
    };
    let mut cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if cols.first().map(String::as_str) != Some("patient_id") {
        return Err(malformed(path, 1, "first column must be `patient_id`"));
    }
    cols.remove(0);
    let mut per_patient = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cols.len() + 1 {
            return Err(malformed(
                path,
                line_no,
                &format!("expected {} fields", cols.len() + 1),
            ));
        }
        let id = parts[0].trim().to_string();
        let mut x = Vec::with_capacity(cols.len() + 1);
        x.push(1.0); // intercept
        for field in &parts[1..] {
            x.push(
                field
                    .trim()
                    .parse()
                    .map_err(|_| malformed(path, line_no, "covariate must be numeric"))?,
            );
        }
        if per_patient.insert(id, x).is_some() {
            return Err(malformed(path, line_no, "duplicate patient row"));
        }
    }
    Ok(BaselineData {
        names: cols,
        per_patient,
    })
}

/// Reads the three cohort files into validated-shape records. Patients are
/// ordered by first appearance in the adherence file.
pub fn ingest(
    adherence_path: &Path,
    outcomes_path: &Path,
    baseline_path: &Path,
) -> Result<Cohort, CliError> {
    let adherence = read_adherence(adherence_path)?;
    let mut outcomes = read_outcomes(outcomes_path)?;
    let baseline = read_baseline(baseline_path)?;

    for id in outcomes.per_patient.keys() {
        if !adherence.per_patient.contains_key(id) {
            return Err(CliError::Validation(format!(
                "patient `{id}` has outcomes but no adherence rows"
            )));
        }
    }

    let mut records = Vec::with_capacity(adherence.order.len());
    for id in &adherence.order {
        let days = &adherence.per_patient[id];
        let horizon = days.len();
        let values: Vec<Option<f64>> = (1..=horizon).map(|d| days[&d]).collect();
        let dynamic = DynamicCovariates::new(horizon, 1, values)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let x = baseline.per_patient.get(id).cloned().ok_or_else(|| {
            CliError::Validation(format!("patient `{id}` missing from baseline file"))
        })?;
        let observations = outcomes.per_patient.remove(id).unwrap_or_default();
        records.push(PatientRecord::new(id.clone(), dynamic, x, observations));
    }

    let dims = ModelDims::new(outcomes.names.len(), baseline.names.len() + 1, 1);
    Ok(Cohort {
        records,
        dims,
        outcome_names: outcomes.names,
        baseline_names: baseline.names,
    })
}

/// Reads only the adherence file (for the impute command).
pub fn ingest_adherence_only(path: &Path) -> Result<Vec<PatientRecord>, CliError> {
    let adherence = read_adherence(path)?;
    let mut records = Vec::with_capacity(adherence.order.len());
    for id in &adherence.order {
        let days = &adherence.per_patient[id];
        let horizon = days.len();
        let values: Vec<Option<f64>> = (1..=horizon).map(|d| days[&d]).collect();
        let dynamic = DynamicCovariates::new(horizon, 1, values)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        records.push(PatientRecord::new(id.clone(), dynamic, vec![1.0], vec![]));
    }
    Ok(records)
}

/// Writes a cohort back to the three-file format. `ingest` of the emitted
/// files reproduces the cohort exactly.
pub fn emit(
    cohort_records: &[PatientRecord],
    outcome_names: &[String],
    baseline_names: &[String],
    dir: &Path,
) -> Result<(), CliError> {
    let mut adherence = String::from("patient_id,day,adherent\n");
    for rec in cohort_records {
        for day in 1..=rec.horizon {
            let field = match rec.dynamic.get(day, 0) {
                Some(v) if v > 0.0 => "1".to_string(),
                Some(_) => "0".to_string(),
                None => "NA".to_string(),
            };
            let _ = writeln!(adherence, "{},{day},{field}", rec.id);
        }
    }
    write_text(&dir.join("adherence.csv"), &adherence)?;

    let mut outcomes = format!("# outcomes: {}\n", outcome_names.join(","));
    outcomes.push_str("patient_id,day,outcome_name,value\n");
    for rec in cohort_records {
        for obs in &rec.observations {
            let _ = writeln!(
                outcomes,
                "{},{},{},{}",
                rec.id, obs.day, outcome_names[obs.outcome], obs.value
            );
        }
    }
    write_text(&dir.join("outcomes.csv"), &outcomes)?;

    let mut baseline = format!("patient_id,{}\n", baseline_names.join(","));
    for rec in cohort_records {
        let fields: Vec<String> = rec.baseline[1..].iter().map(|v| v.to_string()).collect();
        let _ = writeln!(baseline, "{},{}", rec.id, fields.join(","));
    }
    write_text(&dir.join("baseline.csv"), &baseline)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}
