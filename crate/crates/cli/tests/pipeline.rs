use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sensa(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensa"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("study.toml");
    fs::write(&p, body).unwrap();
    p
}

const LINEAR: &str = r#"
seed = 3
report_dir = "out"
methods = ["morris", "sobol", "vars", "ols", "tree", "forest", "gpr"]

[target]
type = "builtin"
function = { name = "linear", weights = [2.0, 1.0, 0.0] }

[[outputs]]
name = "y"

[design]
lhs_n = 120
morris_r = 20
sobol_base_n = 256
vars_centers = 20

[options]
boot_reps = 50
forest_trees = 50
ladder = [0.5]
"#;

fn full(cfg: &Path) {
    for s in ["sample", "run", "analyze", "compare", "report"] {
        ok(&sensa(&[s], cfg));
    }
}

fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn linear_target_ranks_first_parameter_first_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), LINEAR);
    full(&cfg);
    let ranks = table(&tmp.path().join("out/compare/y/ranks.csv"));
    assert_eq!(ranks[0].len(), 9);
    for col in 1..ranks[0].len() {
        if ranks[0][col] == "gpr_inv_range" {
            // no residual left after the linear trend: every range sits at
            // the bound and the measure ties
            assert!(ranks[1..].iter().all(|r| r[col] == "2"), "{ranks:?}");
            continue;
        }
        assert_eq!(ranks[1][col], "1", "{} {:?}", ranks[0][col], ranks[1]);
    }
    for f in ["importance_table.csv", "morris_scatter.csv", "sobol_bars.csv", "rank_heat.csv", "concordance.csv", "correlation.csv", "tree_leaves.csv"] {
        assert!(tmp.path().join("out/report/y").join(f).exists(), "{f}");
    }
    assert!(tmp.path().join("out/report/summary.md").exists());
    let ladder = table(&tmp.path().join("out/results/y/ladder.csv"));
    assert_eq!(ladder[0][0], "fraction");
    assert_eq!(ladder.len(), 1 + 10);
}

#[test]
fn repeated_analyze_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), LINEAR);
    full(&cfg);
    let dir = tmp.path().join("out/results/y");
    let before: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let b = fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    ok(&sensa(&["analyze"], &cfg));
    for (p, b) in before {
        assert_eq!(fs::read(&p).unwrap(), b, "{}", p.display());
    }
}

#[test]
fn stale_and_missing_inputs_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), LINEAR);
    assert_eq!(sensa(&["run"], &cfg).status.code(), Some(3));
    ok(&sensa(&["sample"], &cfg));
    ok(&sensa(&["run"], &cfg));
    // a different seed makes every stored artifact stale
    let o = sensa(&["analyze", "--seed", "4"], &cfg);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stale"));
    // regenerating one design leaves its outputs behind
    let bigger = LINEAR.replace("lhs_n = 120", "lhs_n = 121");
    fs::write(&cfg, &bigger).unwrap();
    ok(&sensa(&["sample"], &cfg));
    fs::write(&cfg, LINEAR).unwrap();
    ok(&sensa(&["sample"], &cfg));
    ok(&sensa(&["analyze"], &cfg));
    let design = tmp.path().join("out/design/lhs.csv");
    let mut text = fs::read_to_string(&design).unwrap();
    text = text.replacen('\n', "\n ", 1);
    fs::write(&design, text).unwrap();
    assert_eq!(sensa(&["analyze"], &cfg).status.code(), Some(3));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = LINEAR.replace("\"gpr\"]", "\"gpr\", \"fast\"]");
    assert_eq!(sensa(&["sample"], &config(tmp.path(), &unknown)).status.code(), Some(2));
    let no_seed = LINEAR.replace("seed = 3", "");
    assert_eq!(sensa(&["sample"], &config(tmp.path(), &no_seed)).status.code(), Some(2));
    ok(&sensa(&["sample", "--seed", "9"], &config(tmp.path(), &no_seed)));
    let no_methods = LINEAR.replace("methods = [\"morris\", \"sobol\", \"vars\", \"ols\", \"tree\", \"forest\", \"gpr\"]", "methods = []");
    assert_eq!(sensa(&["sample"], &config(tmp.path(), &no_methods)).status.code(), Some(2));
    let bad_output = LINEAR.replace("name = \"y\"", "name = \"z\"");
    assert_eq!(sensa(&["sample"], &config(tmp.path(), &bad_output)).status.code(), Some(2));
    assert_eq!(sensa(&["sample"], &config(tmp.path(), "seed = ")).status.code(), Some(2));
    assert_eq!(sensa(&["sample"], &tmp.path().join("absent.toml")).status.code(), Some(2));
}

const GR6J: &str = r#"
seed = 8
report_dir = "out"
methods = ["sobol"]

[target]
type = "gr6j"
date = "2001-06-15"
synthetic = { start = "2000-01-01", days = 730, seed = 2 }
kge = { start = "2001-03-01", end = "2001-03-31", reference = [350.0, -0.3, 90.0, 1.7, 0.2, 5.0] }

[[outputs]]
name = "PR"

[[outputs]]
name = "KGE"

[design]
sobol_base_n = 512

[options]
boot_reps = 50
"#;

#[test]
fn gr6j_production_output_is_driven_by_x1_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), GR6J);
    full(&cfg);
    let t = table(&tmp.path().join("out/compare/PR/table.csv"));
    let x1: f64 = t[1][1].parse().unwrap();
    assert!(x1 > 0.99, "{t:?}");
    let imp = table(&tmp.path().join("out/report/PR/importance_table.csv"));
    assert_eq!(imp[1], vec!["x1", "1.00"]);
    // KGE column exists and was analysed
    assert!(tmp.path().join("out/results/KGE/sobol_t.csv").exists());
}

#[test]
fn tvsa_single_date_matches_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), GR6J);
    for s in ["sample", "run", "analyze"] {
        ok(&sensa(&[s], &cfg));
    }
    ok(&sensa(&["tvsa", "--date", "2001-06-15"], &cfg));
    for m in ["sobol_s1", "sobol_t"] {
        let a = fs::read(tmp.path().join(format!("out/results/PR/{m}.csv"))).unwrap();
        let b = fs::read(tmp.path().join(format!("out/tvsa/2001-06-15/PR/{m}.csv"))).unwrap();
        assert_eq!(a, b, "{m}");
    }
    ok(&sensa(&["tvsa", "--date", "2001-02-01,2001-05-01", "--date", "2001-08-01"], &cfg));
    let m = table(&tmp.path().join("out/tvsa/PR_sobol_t.csv"));
    assert_eq!(m.len(), 4);
    assert_eq!(m[0], vec!["date", "x1", "x2", "x3", "x4", "x5", "x6"]);
    assert_eq!(sensa(&["tvsa", "--date", "2003-01-01"], &cfg).status.code(), Some(2));
    // inside the spin-up
    assert_eq!(sensa(&["tvsa", "--date", "2000-02-01"], &cfg).status.code(), Some(2));
}

#[test]
fn tvsa_rejects_non_time_series_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), LINEAR);
    ok(&sensa(&["sample"], &cfg));
    assert_eq!(sensa(&["tvsa", "--date", "2001-01-01"], &cfg).status.code(), Some(2));
}

#[test]
fn log_transform_and_filters_mask_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
seed = 1
report_dir = "out"
methods = ["ols"]

[target]
type = "builtin"
function = { name = "linear", weights = [1.0, -1.0] }

[[outputs]]
name = "y"
log = true

[[filters]]
output = "y"
max = 0.5

[design]
lhs_n = 200
"#;
    let cfg = config(tmp.path(), body);
    for s in ["sample", "run", "analyze"] {
        ok(&sensa(&[s], &cfg));
    }
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/results/y/reg_src.json")).unwrap()).unwrap();
    let valid = side["meta"]["valid_rows"].as_u64().unwrap();
    // y = x1 - x2 is positive on half the square; the filter keeps y <= 0.5
    assert!(valid > 50 && valid < 100, "{valid}");
}
