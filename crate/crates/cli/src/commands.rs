use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde_json::json;

use sensa_core::compare::{kendalls_w, pairwise, RankingTable};
use sensa_core::sampling::{lhs_maximin, morris_oat, sobol_blocks, vars_stars, LhsConfig, MorrisDesignConfig, SobolBlockConfig, VarsStarConfig};
use sensa_core::{DesignKind, DesignMatrix, Method, OutputMatrix};

use crate::analysis::{design_kind, ladder, needed_kinds, prepare, ranks, run_method, write_ladder, write_result, write_tree_leaves, ResultTable};
use crate::config::{OutputSel, Study};
use crate::error::CliError;
use crate::files::{checked_sidecar, fmt, read_design, read_outputs, sha_file, write_csv_rows, write_design, write_json, write_outputs, write_sidecar, Sidecar};
use crate::target::{evaluate, gr6j_dates};

/// File-system friendly form of an output name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn design_path(study: &Study, kind: &str) -> PathBuf {
    study.dir.join("design").join(format!("{kind}.csv"))
}

pub fn outputs_path(study: &Study, kind: &str) -> PathBuf {
    study.dir.join("outputs").join(format!("{kind}.csv"))
}

pub fn result_path(study: &Study, output: &str, m: Method) -> PathBuf {
    study.dir.join("results").join(slug(output)).join(format!("{m}.csv"))
}

pub fn compare_dir(study: &Study, output: &str) -> PathBuf {
    study.dir.join("compare").join(slug(output))
}

fn build_design(study: &Study, kind: &str) -> Result<DesignMatrix, CliError> {
    let d = &study.cfg.design;
    let (space, seed) = (&study.space, study.seed);
    Ok(match kind {
        "lhs" => lhs_maximin(
            space,
            &LhsConfig {
                n: d.lhs_n,
                seed,
                maximin_sweeps: d.lhs_sweeps,
            },
        )?,
        "morris" => morris_oat(space, &MorrisDesignConfig::new(d.morris_r, d.morris_levels), seed)?,
        "sobol" => sobol_blocks(
            space,
            &SobolBlockConfig {
                base_n: d.sobol_base_n,
                sampler: d.sobol_sampler,
            },
            seed,
        )?,
        "vars" => vars_stars(
            space,
            &VarsStarConfig {
                centers: d.vars_centers,
                h: d.vars_h,
            },
            seed,
        )?,
        _ => unreachable!("design kinds are fixed"),
    })
}

pub fn sample(study: &Study) -> Result<(), CliError> {
    for kind in needed_kinds(study) {
        let d = build_design(study, kind)?;
        let path = design_path(study, kind);
        write_design(&path, &study.space.names(), &d)?;
        let meta = json!({ "kind": d.kind, "params": study.space.params() });
        write_sidecar(&path, &Sidecar::new(study, "sample").meta(meta))?;
        log::info!("{kind} design: {} rows -> {}", d.nrows(), path.display());
    }
    Ok(())
}

/// Design of `kind` after checking it belongs to this config.
pub fn load_design(study: &Study, kind: &str) -> Result<DesignMatrix, CliError> {
    let path = design_path(study, kind);
    let side = checked_sidecar(&path, study, &[])?;
    let dk: DesignKind = serde_json::from_value(side.meta["kind"].clone())
        .map_err(|e| CliError::Data(format!("design sidecar: {e}")))?;
    read_design(&path, &study.space.names(), dk, side.seed)
}

pub fn run(study: &Study, jobs: Option<usize>) -> Result<(), CliError> {
    for kind in needed_kinds(study) {
        let design = load_design(study, kind)?;
        let out = evaluate(study, &design, jobs)?;
        let path = outputs_path(study, kind);
        write_outputs(&path, &out)?;
        let valid = out.valid.iter().filter(|v| **v).count();
        let side = Sidecar::new(study, "run")
            .input("design", &design_path(study, kind))?
            .meta(json!({ "rows": out.nrows(), "valid": valid }));
        write_sidecar(&path, &side)?;
        log::info!("{kind}: {valid}/{} valid runs", out.nrows());
    }
    Ok(())
}

fn load_outputs(study: &Study, kind: &str) -> Result<OutputMatrix, CliError> {
    let path = outputs_path(study, kind);
    checked_sidecar(&path, study, &[("design", &design_path(study, kind))])?;
    read_outputs(&path)
}

/// Run every method on one output and write its result files under `dir`.
fn analyze_output(study: &Study, sel: &OutputSel, dir: &Path, inputs: &BTreeMap<&str, (DesignMatrix, OutputMatrix, Vec<(String, PathBuf)>)>, with_ladder: bool) -> Result<(), CliError> {
    let params = study.space.names();
    let mut rungs = Vec::new();
    for method in &study.cfg.methods {
        let (design, out, upstream) = &inputs[design_kind(method)];
        let (o, col) = prepare(study, out, sel)?;
        let res = run_method(study, method, design, &o, col)?;
        for r in &res.results {
            let path = dir.join(format!("{}.csv", r.method));
            let extra = write_result(&path, &params, r)?;
            let mut side = Sidecar::new(study, "analyze").meta(json!({
                "method": r.method,
                "output": sel.name,
                "log": sel.log,
                "valid_rows": o.valid.iter().filter(|v| **v).count(),
                "extra": extra,
            }));
            for (role, p) in upstream {
                side = side.input(role, p)?;
            }
            write_sidecar(&path, &side)?;
        }
        if let Some(tree) = &res.tree {
            write_tree_leaves(&dir.join("tree_leaves.csv"), &params, tree, design, &o, col)?;
        }
        if with_ladder && !study.cfg.options.ladder.is_empty() {
            rungs.extend(ladder(study, method, design, &o, col, &res.results)?);
        }
    }
    if !rungs.is_empty() {
        write_ladder(&dir.join("ladder.csv"), &params, &rungs)?;
    }
    Ok(())
}

pub fn analyze(study: &Study) -> Result<(), CliError> {
    let mut inputs = BTreeMap::new();
    for kind in needed_kinds(study) {
        let d = load_design(study, kind)?;
        let o = load_outputs(study, kind)?;
        let upstream = vec![
            ("design".to_string(), design_path(study, kind)),
            ("outputs".to_string(), outputs_path(study, kind)),
        ];
        inputs.insert(kind, (d, o, upstream));
    }
    for sel in &study.cfg.outputs {
        let dir = study.dir.join("results").join(slug(&sel.name));
        analyze_output(study, sel, &dir, &inputs, true)?;
    }
    Ok(())
}

fn read_checked_result(study: &Study, path: &Path) -> Result<ResultTable, CliError> {
    let side = checked_sidecar(path, study, &[])?;
    for (role, h) in &side.inputs {
        let kind = path_kind(study, &side, role);
        if let Some(p) = kind {
            if sha_file(&p)? != *h {
                return Err(CliError::Stale(format!(
                    "{} is out of date with {}; re-run `analyze`",
                    path.display(),
                    p.display()
                )));
            }
        }
    }
    ResultTable::read(path)
}

/// Upstream path recorded in a result sidecar.
fn path_kind(study: &Study, side: &Sidecar, role: &str) -> Option<PathBuf> {
    let method: Method = serde_json::from_value(side.meta["method"].clone()).ok()?;
    let kind = design_kind(crate::config::method_family(method));
    match role {
        "design" => Some(design_path(study, kind)),
        "outputs" => Some(outputs_path(study, kind)),
        _ => None,
    }
}

fn ranking_table(study: &Study, output: &str) -> Result<(RankingTable, Vec<PathBuf>), CliError> {
    let mut cols = Vec::new();
    let mut names = Vec::new();
    let mut files = Vec::new();
    for m in study.compare_measures() {
        let path = result_path(study, output, m);
        let t = read_checked_result(study, &path)?;
        if t.params != study.space.names() {
            return Err(CliError::Data(format!("{}: parameter names differ from the config", path.display())));
        }
        cols.push(t.get("scaled").unwrap_or_default().to_vec());
        names.push(m.to_string());
        files.push(path);
    }
    if cols.is_empty() {
        return Err(CliError::Config("no configured method produces a comparable measure".into()));
    }
    Ok((RankingTable::from_columns(study.space.names(), names, &cols)?, files))
}

pub fn compare(study: &Study) -> Result<(), CliError> {
    for sel in &study.cfg.outputs {
        let (table, files) = ranking_table(study, &sel.name)?;
        let dir = compare_dir(study, &sel.name);
        let mut side = Sidecar::new(study, "compare");
        for f in &files {
            let role = f.file_name().unwrap().to_string_lossy().into_owned();
            side = side.input(&role, f)?;
        }
        let table_path = dir.join("table.csv");
        fs::create_dir_all(&dir)?;
        table.write_csv(fs::File::create(&table_path)?)?;
        write_sidecar(&table_path, &side)?;

        let rank_rows = matrix_rows(&table.params, table.ranks.nrows(), |i| table.ranks.row(i).to_vec());
        write_csv_rows(&dir.join("ranks.csv"), &with_param(&table.methods), &rank_rows)?;

        if table.methods.len() >= 2 {
            let w = kendalls_w(&table)?;
            write_json(&dir.join("concordance.json"), &w)?;
            let corr = pairwise(&table, study.cfg.options.correlation)?;
            let rows = matrix_rows(&table.methods, corr.len(), |i| {
                corr[i].iter().map(|v| v.unwrap_or(f64::NAN)).collect()
            });
            write_csv_rows(&dir.join("correlation.csv"), &with_name("method", &table.methods), &rows)?;
            log::info!("{}: Kendall's W = {:.3} over {} measures", sel.name, w.w, table.methods.len());
        } else {
            log::warn!("{}: one measure only, concordance skipped", sel.name);
        }
    }
    Ok(())
}

fn with_param(cols: &[String]) -> Vec<String> {
    with_name("param", cols)
}

fn with_name(first: &str, cols: &[String]) -> Vec<String> {
    let mut h = vec![first.to_string()];
    h.extend(cols.iter().cloned());
    h
}

fn matrix_rows<F: Fn(usize) -> Vec<f64>>(labels: &[String], n: usize, row: F) -> Vec<Vec<String>> {
    (0..n)
        .map(|i| {
            let mut r = vec![labels[i].clone()];
            r.extend(row(i).into_iter().map(fmt));
            r
        })
        .collect()
}

fn fixed2(v: f64) -> String {
    format!("{v:.2}")
}

pub fn report(study: &Study) -> Result<(), CliError> {
    let params = study.space.names();
    let root = study.dir.join("report");
    let mut summary = String::new();
    writeln!(summary, "# Sensitivity summary\n").unwrap();
    writeln!(summary, "Parameters: {}. Seed: {}.\n", params.join(", "), study.seed).unwrap();
    let mut written = Vec::new();
    for sel in &study.cfg.outputs {
        let dir = root.join(slug(&sel.name));
        let cdir = compare_dir(study, &sel.name);
        let table_path = cdir.join("table.csv");
        checked_sidecar(&table_path, study, &[])?;
        let table = RankingTable::read_csv(fs::File::open(&table_path)?)?;

        let rows = matrix_rows(&params, params.len(), |i| table.scaled.row(i).to_vec());
        let rows: Vec<Vec<String>> = rows
            .into_iter()
            .map(|r| {
                let mut it = r.into_iter();
                let mut out = vec![it.next().unwrap()];
                out.extend(it.map(|v| fixed2(v.parse().unwrap())));
                out
            })
            .collect();
        let p = dir.join("importance_table.csv");
        write_csv_rows(&p, &with_param(&table.methods), &rows)?;
        written.push(p);

        let rank_rows = matrix_rows(&params, params.len(), |i| table.ranks.row(i).to_vec());
        let p = dir.join("rank_heat.csv");
        write_csv_rows(&p, &with_param(&table.methods), &rank_rows)?;
        written.push(p);

        if study.has("morris") {
            let t = read_checked_result(study, &result_path(study, &sel.name, Method::MorrisDgsm))?;
            let cols = ["mu_star", "sigma", "raw"];
            let rows = matrix_rows(&params, params.len(), |i| {
                cols.iter().map(|c| t.get(c).map_or(f64::NAN, |v| v[i])).collect()
            });
            let p = dir.join("morris_scatter.csv");
            let header = vec!["param".into(), "mu_star".into(), "sigma".into(), "dgsm".into()];
            write_csv_rows(&p, &header, &rows)?;
            written.push(p);
        }

        if study.has("sobol") {
            let s1 = read_checked_result(study, &result_path(study, &sel.name, Method::SobolS1))?;
            let t = read_checked_result(study, &result_path(study, &sel.name, Method::SobolT))?;
            let cut = |m: Method| -> Result<f64, CliError> {
                let side = checked_sidecar(&result_path(study, &sel.name, m), study, &[])?;
                Ok(side.meta["extra"]["dummy_cutoff"][0].as_f64().unwrap_or(f64::NAN))
            };
            let (c1, ct) = (cut(Method::SobolS1)?, cut(Method::SobolT)?);
            let get = |r: &ResultTable, c: &str, i: usize| r.get(c).map_or(f64::NAN, |v| v[i]);
            let rows = matrix_rows(&params, params.len(), |i| {
                vec![
                    get(&s1, "raw", i),
                    get(&s1, "ci_low", i),
                    get(&s1, "ci_high", i),
                    get(&t, "raw", i),
                    get(&t, "ci_low", i),
                    get(&t, "ci_high", i),
                    c1,
                    ct,
                ]
            });
            let header: Vec<String> = ["param", "s1", "s1_low", "s1_high", "t", "t_low", "t_high", "dummy_s1", "dummy_t"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let p = dir.join("sobol_bars.csv");
            write_csv_rows(&p, &header, &rows)?;
            written.push(p);
        }

        writeln!(summary, "## {}{}\n", sel.name, if sel.log { " (log)" } else { "" }).unwrap();
        writeln!(summary, "| param | {} |", table.methods.join(" | ")).unwrap();
        writeln!(summary, "|---|{}", "---|".repeat(table.methods.len())).unwrap();
        for (i, p) in params.iter().enumerate() {
            let cells: Vec<String> = table.scaled.row(i).iter().map(|v| fixed2(*v)).collect();
            writeln!(summary, "| {p} | {} |", cells.join(" | ")).unwrap();
        }
        writeln!(summary).unwrap();
        for (j, m) in table.methods.iter().enumerate() {
            let top = ranks(&table.column(j))
                .iter()
                .position(|r| *r <= 1.0)
                .map(|i| params[i].clone())
                .unwrap_or_else(|| "tie".into());
            writeln!(summary, "- {m}: top parameter {top}").unwrap();
        }

        let conc = cdir.join("concordance.json");
        if conc.exists() {
            let w: sensa_core::compare::KendallW = serde_json::from_str(&fs::read_to_string(&conc)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", conc.display())))?;
            let rows = vec![
                vec!["kendall_w".to_string(), fmt(w.w)],
                vec!["chi_sq".into(), fmt(w.chi_sq)],
                vec!["dof".into(), w.dof.to_string()],
                vec!["p_value".into(), fmt(w.p_value)],
            ];
            let p = dir.join("concordance.csv");
            write_csv_rows(&p, &["statistic".to_string(), "value".into()], &rows)?;
            written.push(p);
            let p = dir.join("correlation.csv");
            fs::copy(cdir.join("correlation.csv"), &p)?;
            written.push(p);
            writeln!(summary, "\nKendall's W = {:.3} (p = {:.3e}).", w.w, w.p_value).unwrap();
        }

        let leaves = study.dir.join("results").join(slug(&sel.name)).join("tree_leaves.csv");
        if study.has("tree") && leaves.exists() {
            let p = dir.join("tree_leaves.csv");
            fs::copy(&leaves, &p)?;
            written.push(p);
        }
        writeln!(summary).unwrap();
    }
    let p = root.join("summary.md");
    fs::create_dir_all(&root)?;
    fs::write(&p, summary)?;
    written.push(p);
    let manifest: BTreeMap<String, String> = written
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(&root).unwrap_or(p).to_string_lossy().replace('\\', "/");
            Ok((rel, sha_file(p)?))
        })
        .collect::<Result<_, CliError>>()?;
    let mut side = Sidecar::new(study, "report");
    side.meta = json!({ "files": manifest });
    write_json(&root.join("manifest.json"), &side)?;
    Ok(())
}

/// Analyse each requested day separately and export date x parameter
/// matrices of the scaled measures.
pub fn tvsa(study: &Study, dates: &[NaiveDate]) -> Result<(), CliError> {
    if dates.is_empty() {
        return Err(CliError::Config("tvsa needs at least one --date".into()));
    }
    let mut per_kind = BTreeMap::new();
    for kind in needed_kinds(study) {
        let d = load_design(study, kind)?;
        let outs = gr6j_dates(study, &d, dates)?;
        per_kind.insert(kind, (d, outs));
    }
    let root = study.dir.join("tvsa");
    let params = study.space.names();
    for (t, date) in dates.iter().enumerate() {
        let inputs: BTreeMap<&str, (DesignMatrix, OutputMatrix, Vec<(String, PathBuf)>)> = per_kind
            .iter()
            .map(|(k, (d, outs))| {
                let up = vec![("design".to_string(), design_path(study, k))];
                (*k, (d.clone(), outs[t].clone(), up))
            })
            .collect();
        for sel in &study.cfg.outputs {
            let dir = root.join(date.to_string()).join(slug(&sel.name));
            analyze_output(study, sel, &dir, &inputs, false)?;
        }
    }
    for sel in &study.cfg.outputs {
        let measures: Vec<Method> = Method::ALL
            .into_iter()
            .filter(|m| study.has(crate::config::method_family(*m)))
            .collect();
        for m in measures {
            let mut rows = Vec::new();
            for date in dates {
                let p = root.join(date.to_string()).join(slug(&sel.name)).join(format!("{m}.csv"));
                let t = ResultTable::read(&p)?;
                let mut r = vec![date.to_string()];
                r.extend(t.get("scaled").unwrap_or_default().iter().map(|v| fmt(*v)));
                rows.push(r);
            }
            let p = root.join(format!("{}_{m}.csv", slug(&sel.name)));
            write_csv_rows(&p, &with_name("date", &params), &rows)?;
        }
    }
    Ok(())
}
