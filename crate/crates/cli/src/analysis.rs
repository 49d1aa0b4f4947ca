use std::path::Path;

use sensa_core::morris::elementary_effects;
use sensa_core::regress::{fit_gpr, fit_random_forest, fit_regression_tree, ols_src, RegTree};
use sensa_core::sobol::{sobol_indices, SobolConfig};
use sensa_core::stats::spearman;
use sensa_core::{vars, DesignMatrix, Method, OutputMatrix, SensitivityResult};

use crate::config::{OutputSel, Study};
use crate::error::CliError;
use crate::files::{fmt, parse_f64, read_csv_rows, write_csv_rows};

/// Design used by a config-level method name.
pub fn design_kind(method: &str) -> &'static str {
    match method {
        "morris" => "morris",
        "sobol" => "sobol",
        "vars" => "vars",
        _ => "lhs",
    }
}

/// Design kinds needed by the configured methods, in a fixed order.
pub fn needed_kinds(study: &Study) -> Vec<&'static str> {
    let used: Vec<&str> = study.cfg.methods.iter().map(|m| design_kind(m)).collect();
    ["lhs", "morris", "sobol", "vars"]
        .into_iter()
        .filter(|k| used.contains(k))
        .collect()
}

/// Apply output filters, then the optional log transform; returns the
/// prepared matrix and the analysed column.
pub fn prepare(study: &Study, out: &OutputMatrix, sel: &OutputSel) -> Result<(OutputMatrix, usize), CliError> {
    let col = |name: &str| {
        out.output_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Data(format!("outputs have no column `{name}`")))
    };
    let mut bounds = Vec::new();
    for f in &study.cfg.filters {
        bounds.push((col(&f.output)?, f.min, f.max));
    }
    let (mut o, rejected) = out.filter(|row| {
        bounds.iter().all(|&(j, lo, hi)| {
            let v = row[j];
            lo.is_none_or(|l| v >= l) && hi.is_none_or(|h| v <= h)
        })
    });
    if rejected > 0 {
        log::warn!("{rejected} rows rejected by output filters");
    }
    let j = col(&sel.name)?;
    if sel.log {
        o = o.log_column(j)?.0;
    }
    Ok((o, j))
}

/// Everything one method produced for one output.
pub struct MethodOutput {
    pub results: Vec<SensitivityResult>,
    pub tree: Option<RegTree>,
}

pub fn run_method(study: &Study, method: &str, design: &DesignMatrix, out: &OutputMatrix, col: usize) -> Result<MethodOutput, CliError> {
    let one = |r| MethodOutput {
        results: vec![r],
        tree: None,
    };
    let two = |(a, b)| MethodOutput {
        results: vec![a, b],
        tree: None,
    };
    Ok(match method {
        "morris" => one(elementary_effects(design, out, col)?.to_result()?),
        "sobol" => {
            let cfg = SobolConfig {
                boot_reps: study.cfg.options.boot_reps,
                seed: study.seed,
                conf_level: study.cfg.options.conf_level,
                ..SobolConfig::default()
            };
            two(sobol_indices(design, out, col, &cfg)?.to_results()?)
        }
        "vars" => one(vars::analyze(design, out, col)?.to_result()?),
        "ols" => one(ols_src(design, out, col, study.cfg.options.ols_quadratic)?.to_result()?),
        "tree" => {
            let t = fit_regression_tree(design, out, col, &study.tree_config())?;
            MethodOutput {
                results: vec![t.to_result()?],
                tree: Some(t),
            }
        }
        "forest" => two(fit_random_forest(design, out, col, &study.forest_config())?.to_results()?),
        "gpr" => two(fit_gpr(design, out, col, &study.gpr_config())?.to_results()?),
        other => return Err(CliError::Config(format!("unknown method `{other}`"))),
    })
}

/// Per-parameter columns: raw, scaled, optional interval bounds, then every
/// extra of length K. Extras of other lengths are returned for the sidecar.
pub fn write_result(path: &Path, params: &[String], r: &SensitivityResult) -> Result<serde_json::Value, CliError> {
    let k = params.len();
    let mut header = vec!["param".to_string(), "raw".into(), "scaled".into()];
    let mut cols: Vec<&[f64]> = vec![&r.raw, &r.scaled];
    let (lo, hi): (Vec<f64>, Vec<f64>) = r.ci.iter().flatten().copied().unzip();
    if r.ci.is_some() {
        header.extend(["ci_low".to_string(), "ci_high".into()]);
        cols.push(&lo);
        cols.push(&hi);
    }
    let mut other = serde_json::Map::new();
    for (name, v) in &r.extra {
        if v.len() == k {
            header.push(name.clone());
            cols.push(v);
        } else {
            other.insert(name.clone(), serde_json::json!(v));
        }
    }
    let rows: Vec<Vec<String>> = (0..k)
        .map(|i| {
            let mut row = vec![params[i].clone()];
            row.extend(cols.iter().map(|c| fmt(c[i])));
            row
        })
        .collect();
    write_csv_rows(path, &header, &rows)?;
    Ok(serde_json::Value::Object(other))
}

/// Parameter names and named numeric columns of a result CSV.
pub struct ResultTable {
    pub params: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ResultTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let (header, rows) = read_csv_rows(path)?;
        if header.first().map(String::as_str) != Some("param") {
            return Err(CliError::Data(format!("{}: missing `param` column", path.display())));
        }
        let params = rows.iter().map(|r| r[0].clone()).collect();
        let mut columns = Vec::new();
        for (j, name) in header.iter().enumerate().skip(1) {
            let v = rows.iter().map(|r| parse_f64(&r[j], path)).collect::<Result<_, _>>()?;
            columns.push((name.clone(), v));
        }
        Ok(Self { params, columns })
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Leaf assignment of every valid row with its inputs and observed output.
pub fn write_tree_leaves(path: &Path, params: &[String], tree: &RegTree, design: &DesignMatrix, out: &OutputMatrix, col: usize) -> Result<(), CliError> {
    let mut header = vec!["row".to_string(), "leaf_id".into(), "fitted".into(), "observed".into()];
    header.extend(params.iter().cloned());
    let rows: Vec<Vec<String>> = tree
        .leaf_table
        .iter()
        .map(|l| {
            let mut r = vec![
                l.row.to_string(),
                l.leaf_id.to_string(),
                fmt(l.fitted),
                fmt(out.values.get(l.row, col)),
            ];
            r.extend(design.mapped.row(l.row).iter().map(|v| fmt(*v)));
            r
        })
        .collect();
    write_csv_rows(path, &header, &rows)
}

/// Rank 1 for the most important parameter, ties averaged.
pub fn ranks(scaled: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = scaled.iter().map(|v| -v).collect();
    sensa_core::stats::average_ranks(&neg)
}

/// One ladder rung: re-run `method` on a prefix of the design.
pub struct Rung {
    pub fraction: f64,
    pub rows: usize,
    pub measure: Method,
    pub scaled: Vec<f64>,
    pub spearman_vs_full: Option<f64>,
}

pub fn ladder(study: &Study, method: &str, design: &DesignMatrix, out: &OutputMatrix, col: usize, full: &[SensitivityResult]) -> Result<Vec<Rung>, CliError> {
    let mut rungs = Vec::new();
    for &f in &study.cfg.options.ladder {
        let (rows, kind) = design.ladder_rows(f)?;
        let d = design.select(&rows, kind);
        let o = out.select_rows(&rows);
        let res = run_method(study, method, &d, &o, col)?;
        for (r, whole) in res.results.iter().zip(full) {
            rungs.push(Rung {
                fraction: f,
                rows: rows.len(),
                measure: r.method,
                scaled: r.scaled.clone(),
                spearman_vs_full: spearman(&r.scaled, &whole.scaled),
            });
        }
    }
    Ok(rungs)
}

pub fn write_ladder(path: &Path, params: &[String], rungs: &[Rung]) -> Result<(), CliError> {
    let mut header = vec![
        "fraction".to_string(),
        "rows".into(),
        "measure".into(),
        "spearman_vs_full".into(),
    ];
    header.extend(params.iter().map(|p| format!("rank:{p}")));
    let rows: Vec<Vec<String>> = rungs
        .iter()
        .map(|r| {
            let mut row = vec![
                fmt(r.fraction),
                r.rows.to_string(),
                r.measure.to_string(),
                r.spearman_vs_full.map(fmt).unwrap_or_else(|| "NA".into()),
            ];
            row.extend(ranks(&r.scaled).into_iter().map(fmt));
            row
        })
        .collect();
    write_csv_rows(path, &header, &rows)
}
