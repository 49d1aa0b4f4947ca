use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensa_core::{DesignKind, DesignMatrix, Matrix, OutputMatrix};

use crate::config::Study;
use crate::error::CliError;

/// Metadata written next to every CSV artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Upstream files by role, with their sha256.
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Sidecar {
    pub fn new(study: &Study, stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            config_hash: study.hash.clone(),
            seed: study.seed,
            inputs: BTreeMap::new(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> Result<Self, CliError> {
        self.inputs.insert(role.to_string(), sha_file(path)?);
        Ok(self)
    }

    pub fn meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn sha_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn write_sidecar(csv: &Path, side: &Sidecar) -> Result<(), CliError> {
    write_json(&sidecar_path(csv), side)
}

/// Load the sidecar of `csv` and check it belongs to the current config and
/// that every recorded upstream file is unchanged.
pub fn checked_sidecar(csv: &Path, study: &Study, upstream: &[(&str, &Path)]) -> Result<Sidecar, CliError> {
    if !csv.exists() {
        return Err(CliError::Data(format!(
            "{} is missing; run the earlier stage first",
            csv.display()
        )));
    }
    let sp = sidecar_path(csv);
    let text = fs::read_to_string(&sp)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", sp.display())))?;
    let side: Sidecar = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", sp.display())))?;
    if side.config_hash != study.hash {
        return Err(CliError::Stale(format!(
            "{} was produced under a different config; re-run `{}`",
            csv.display(),
            side.stage
        )));
    }
    for (role, path) in upstream {
        let now = sha_file(path)?;
        match side.inputs.get(*role) {
            Some(h) if *h == now => {}
            _ => {
                return Err(CliError::Stale(format!(
                    "{} is out of date with {}; re-run `{}`",
                    csv.display(),
                    path.display(),
                    side.stage
                )))
            }
        }
    }
    Ok(side)
}

/// Shortest representation that parses back to the same value.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

pub fn parse_f64(s: &str, path: &Path) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Data(format!("{}: `{s}` is not a number", path.display())))
}

/// Mapped columns named after the parameters, then `unit:<name>` columns.
pub fn write_design(path: &Path, names: &[String], d: &DesignMatrix) -> Result<(), CliError> {
    let mut header = names.to_vec();
    header.extend(names.iter().map(|n| format!("unit:{n}")));
    let rows: Vec<Vec<String>> = (0..d.nrows())
        .map(|i| {
            d.mapped
                .row(i)
                .iter()
                .chain(d.unit.row(i))
                .map(|v| fmt(*v))
                .collect()
        })
        .collect();
    write_csv_rows(path, &header, &rows)
}

pub fn read_design(path: &Path, names: &[String], kind: DesignKind, seed: u64) -> Result<DesignMatrix, CliError> {
    let (header, rows) = read_csv_rows(path)?;
    let k = names.len();
    if header.len() != 2 * k || header[..k] != *names {
        return Err(CliError::Data(format!(
            "{}: columns do not match the configured parameters",
            path.display()
        )));
    }
    let mut mapped = Matrix::zeros(rows.len(), k);
    let mut unit = Matrix::zeros(rows.len(), k);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..k {
            mapped.set(i, j, parse_f64(&r[j], path)?);
            unit.set(i, j, parse_f64(&r[k + j], path)?);
        }
    }
    Ok(DesignMatrix {
        unit,
        mapped,
        kind,
        seed,
    })
}

/// Output values plus a trailing `valid` column of 0/1.
pub fn write_outputs(path: &Path, o: &OutputMatrix) -> Result<(), CliError> {
    let mut header = o.output_names.clone();
    header.push("valid".into());
    let rows: Vec<Vec<String>> = (0..o.nrows())
        .map(|i| {
            let mut r: Vec<String> = o.values.row(i).iter().map(|v| fmt(*v)).collect();
            r.push(if o.valid[i] { "1" } else { "0" }.into());
            r
        })
        .collect();
    write_csv_rows(path, &header, &rows)
}

pub fn read_outputs(path: &Path) -> Result<OutputMatrix, CliError> {
    let (header, rows) = read_csv_rows(path)?;
    if header.last().map(String::as_str) != Some("valid") || header.len() < 2 {
        return Err(CliError::Data(format!("{}: missing `valid` column", path.display())));
    }
    let m = header.len() - 1;
    let mut values = Matrix::zeros(rows.len(), m);
    let mut valid = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        for j in 0..m {
            values.set(i, j, parse_f64(&r[j], path)?);
        }
        valid.push(r[m].trim() == "1");
    }
    Ok(OutputMatrix::with_mask(values, header[..m].to_vec(), valid)?)
}
