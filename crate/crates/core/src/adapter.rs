//! Runs an external simulator over the rows of a design.
//!
//! The child receives a two-line CSV on stdin (a header with the parameter
//! names, then one row of values) and must print a two-line CSV with the
//! output names and one row of values. In batch mode the whole design is
//! sent at once and one output row per design row is expected. Failed rows
//! (nonzero exit, timeout, unparsable output) are masked.

use std::io::{ErrorKind, Read, Write};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{DesignMatrix, Matrix, OutputMatrix, ParameterSpace};

/// Environment variable carrying the 0-based design row of a run.
pub const ROW_INDEX_ENV: &str = "SENSA_ROW_INDEX";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorSpec {
    /// Executable followed by fixed arguments.
    pub command: Vec<String>,
    pub param_order: Vec<String>,
    pub output_names: Vec<String>,
    pub timeout_sec: f64,
    pub max_parallel: usize,
    /// Send every row in one invocation instead of one process per row.
    #[serde(default)]
    pub per_batch: bool,
    /// Fraction of failed rows that aborts the batch.
    #[serde(default = "default_fail_fraction")]
    pub max_fail_fraction: f64,
}

fn default_fail_fraction() -> f64 {
    0.5
}

impl SimulatorSpec {
    pub fn new(command: Vec<String>, param_order: Vec<String>, output_names: Vec<String>) -> Self {
        Self {
            command,
            param_order,
            output_names,
            timeout_sec: 60.0,
            max_parallel: 1,
            per_batch: false,
            max_fail_fraction: default_fail_fraction(),
        }
    }

    fn column_map(&self, space: &ParameterSpace) -> Result<Vec<usize>> {
        if self.command.is_empty() {
            return Err(Error::Config("simulator command is empty".into()));
        }
        if self.max_parallel == 0 {
            return Err(Error::Config("max_parallel must be at least 1".into()));
        }
        if !(self.timeout_sec > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.output_names.is_empty() {
            return Err(Error::Config("no output names declared".into()));
        }
        let mut sorted_a = self.param_order.clone();
        let mut sorted_b = space.names();
        sorted_a.sort();
        sorted_b.sort();
        if sorted_a != sorted_b {
            return Err(Error::Config(format!(
                "parameter order {:?} does not match the space {:?}",
                self.param_order,
                space.names()
            )));
        }
        Ok(self
            .param_order
            .iter()
            .map(|n| space.index_of(n).expect("checked above"))
            .collect())
    }
}

enum RunError {
    Setup(String),
    Failed(String),
}

struct ChildOutput {
    stdout: String,
}

fn spawn_and_wait(spec: &SimulatorSpec, input: String, row: Option<usize>) -> std::result::Result<ChildOutput, RunError> {
    let mut cmd = Command::new(&spec.command[0]);
    cmd.args(&spec.command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(r) = row {
        cmd.env(ROW_INDEX_ENV, r.to_string());
    }
    // own process group, so a timeout also stops anything the child spawned
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
    let mut child: Child = cmd.spawn().map_err(|e| match e.kind() {
        ErrorKind::NotFound | ErrorKind::PermissionDenied => {
            RunError::Setup(format!("cannot start {}: {e}", spec.command[0]))
        }
        _ => RunError::Failed(format!("spawn failed: {e}")),
    })?;
    let mut stdin = child.stdin.take().expect("piped");
    let writer = thread::spawn(move || {
        // a child that exits without reading its input is not an error here
        let _ = stdin.write_all(input.as_bytes());
    });
    let mut out = child.stdout.take().expect("piped");
    let mut err = child.stderr.take().expect("piped");
    let out_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = out.read_to_string(&mut s);
        s
    });
    let err_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = err.read_to_string(&mut s);
        s
    });
    let deadline = Instant::now() + Duration::from_secs_f64(spec.timeout_sec);
    let status = loop {
        match child.try_wait() {
            Ok(Some(st)) => break Some(st),
            Ok(None) if Instant::now() >= deadline => {
                kill_tree(&mut child);
                let _ = child.wait();
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(RunError::Failed(format!("wait failed: {e}"))),
        }
    };
    let _ = writer.join();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    match status {
        None => Err(RunError::Failed(format!("timed out after {} s", spec.timeout_sec))),
        Some(st) if !st.success() => Err(RunError::Failed(format!(
            "exited with {st}: {}",
            stderr.lines().last().unwrap_or("")
        ))),
        Some(_) => Ok(ChildOutput { stdout }),
    }
}

fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    if let Ok(pid) = libc::pid_t::try_from(child.id()) {
        // SAFETY: plain syscall on the group created for this child
        unsafe {
            libc::killpg(pid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

fn format_input(spec: &SimulatorSpec, cols: &[usize], mapped: &Matrix, rows: &[usize]) -> String {
    let mut s = spec.param_order.join(",");
    s.push('\n');
    for &i in rows {
        let r = mapped.row(i);
        let vals: Vec<String> = cols.iter().map(|&c| format!("{}", r[c])).collect();
        s.push_str(&vals.join(","));
        s.push('\n');
    }
    s
}

/// Parses the child's CSV; each returned row is `None` when its values do
/// not parse.
fn parse_output(spec: &SimulatorSpec, text: &str, expected_rows: usize) -> std::result::Result<Vec<Option<Vec<f64>>>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| format!("bad header: {e}"))?.clone();
    let pos: Vec<usize> = spec
        .output_names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| format!("output {n} missing from header"))
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format!("bad row: {e}"))?;
        let vals: Option<Vec<f64>> = pos.iter().map(|&p| rec.get(p).and_then(|v| v.parse().ok())).collect();
        rows.push(vals);
    }
    if rows.len() != expected_rows {
        return Err(format!("expected {expected_rows} output rows, got {}", rows.len()));
    }
    Ok(rows)
}

fn run_row(spec: &SimulatorSpec, cols: &[usize], mapped: &Matrix, i: usize) -> std::result::Result<Vec<f64>, RunError> {
    let out = spawn_and_wait(spec, format_input(spec, cols, mapped, &[i]), Some(i))?;
    let mut rows = parse_output(spec, &out.stdout, 1).map_err(RunError::Failed)?;
    rows.pop()
        .flatten()
        .ok_or_else(|| RunError::Failed("unparsable output values".into()))
}

/// Runs the simulator on every design row. Row order of the result follows
/// the design whatever the scheduling.
pub fn run_batch(spec: &SimulatorSpec, space: &ParameterSpace, design: &DesignMatrix) -> Result<OutputMatrix> {
    let cols = spec.column_map(space)?;
    if design.mapped.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("design contains non-finite values".into()));
    }
    let n = design.nrows();
    let p = spec.output_names.len();
    let results: Vec<std::result::Result<Vec<f64>, RunError>> = if spec.per_batch {
        let all: Vec<usize> = (0..n).collect();
        match spawn_and_wait(spec, format_input(spec, &cols, &design.mapped, &all), None) {
            Ok(out) => match parse_output(spec, &out.stdout, n) {
                Ok(rows) => rows
                    .into_iter()
                    .map(|r| r.ok_or_else(|| RunError::Failed("unparsable output values".into())))
                    .collect(),
                Err(e) => (0..n).map(|_| Err(RunError::Failed(e.clone()))).collect(),
            },
            Err(RunError::Setup(e)) => return Err(Error::Setup(e)),
            Err(RunError::Failed(e)) => (0..n).map(|_| Err(RunError::Failed(e.clone()))).collect(),
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.max_parallel)
            .build()
            .map_err(|e| Error::Setup(e.to_string()))?;
        pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| run_row(spec, &cols, &design.mapped, i))
                .collect()
        })
    };
    let mut values = Matrix::zeros(n, p);
    let mut valid = vec![true; n];
    let mut failed = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.row_mut(i).copy_from_slice(&v),
            Err(RunError::Setup(e)) => return Err(Error::Setup(e)),
            Err(RunError::Failed(e)) => {
                log::warn!("row {i} failed: {e}");
                values.row_mut(i).fill(f64::NAN);
                valid[i] = false;
                failed += 1;
            }
        }
    }
    if n > 0 && failed as f64 >= spec.max_fail_fraction * n as f64 {
        return Err(Error::BatchQuality { failed, total: n });
    }
    OutputMatrix::with_mask(values, spec.output_names.clone(), valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{lhs_maximin, LhsConfig};
    use std::os::unix::fs::PermissionsExt;
    use std::path::PathBuf;

    fn script(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
        let p: PathBuf = dir.path().join(name);
        std::fs::write(&p, format!("#!/bin/sh\n{body}")).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p.to_string_lossy().into_owned()
    }

    fn setup(n: usize) -> (ParameterSpace, DesignMatrix) {
        let space = ParameterSpace::new(vec![
            crate::space::ParameterDef::new("a", 0.0, 10.0).unwrap(),
            crate::space::ParameterDef::new("b", -1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let d = lhs_maximin(&space, &LhsConfig::new(n, 3)).unwrap();
        (space, d)
    }

    const ECHO: &str = "read h\nread v\necho y,z\necho \"$v\"\n";

    fn spec(cmd: String, outs: &[&str]) -> SimulatorSpec {
        SimulatorSpec::new(
            vec![cmd],
            vec!["a".into(), "b".into()],
            outs.iter().map(|s| s.to_string()).collect(),
        )
    }

    #[test]
    fn echo_returns_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let (space, d) = setup(12);
        let mut s = spec(script(&dir, "echo.sh", ECHO), &["y", "z"]);
        s.max_parallel = 4;
        let out = run_batch(&s, &space, &d).unwrap();
        assert_eq!(out.column(0).unwrap(), d.mapped.column(0));
        assert_eq!(out.column(1).unwrap(), d.mapped.column(1));
        // reordered parameters are honoured
        s.param_order = vec!["b".into(), "a".into()];
        let out = run_batch(&s, &space, &d).unwrap();
        assert_eq!(out.column(0).unwrap(), d.mapped.column(1));
    }

    #[test]
    fn failing_row_is_masked() {
        let dir = tempfile::tempdir().unwrap();
        let (space, d) = setup(10);
        let body = format!("[ \"${ROW_INDEX_ENV}\" = 7 ] && exit 3\n{ECHO}");
        let mut s = spec(script(&dir, "fail7.sh", &body), &["y"]);
        s.max_parallel = 3;
        let out = run_batch(&s, &space, &d).unwrap();
        let expect: Vec<bool> = (0..10).map(|i| i != 7).collect();
        assert_eq!(out.valid, expect);
        assert!(out.values.get(7, 0).is_nan());
    }

    #[test]
    fn timeout_and_garbage_are_masked() {
        let dir = tempfile::tempdir().unwrap();
        let (space, d) = setup(6);
        let body = format!(
            "[ \"${ROW_INDEX_ENV}\" = 2 ] && sleep 5\n[ \"${ROW_INDEX_ENV}\" = 4 ] && {{ echo y; echo oops; exit 0; }}\n{ECHO}"
        );
        let mut s = spec(script(&dir, "slow.sh", &body), &["y"]);
        s.timeout_sec = 0.3;
        s.max_parallel = 6;
        let t = Instant::now();
        let out = run_batch(&s, &space, &d).unwrap();
        assert!(t.elapsed() < Duration::from_secs(4));
        assert_eq!(out.valid, vec![true, true, false, true, false, true]);
    }

    #[test]
    fn majority_failure_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let (space, d) = setup(4);
        let body = format!("[ \"${ROW_INDEX_ENV}\" -lt 2 ] && exit 1\n{ECHO}");
        let s = spec(script(&dir, "half.sh", &body), &["y"]);
        assert!(matches!(
            run_batch(&s, &space, &d),
            Err(Error::BatchQuality { failed: 2, total: 4 })
        ));
    }

    #[test]
    fn missing_executable_is_setup_error() {
        let (space, d) = setup(3);
        let s = spec("/nonexistent/simulator".into(), &["y"]);
        assert!(matches!(run_batch(&s, &space, &d), Err(Error::Setup(_))));
        let mut bad = spec("/bin/true".into(), &["y"]);
        bad.param_order = vec!["a".into()];
        assert!(matches!(run_batch(&bad, &space, &d), Err(Error::Config(_))));
    }

    #[test]
    fn per_batch_mode() {
        let dir = tempfile::tempdir().unwrap();
        let (space, d) = setup(5);
        let mut s = spec(script(&dir, "cat.sh", "read h\necho y,z\ncat\n"), &["y", "z"]);
        s.per_batch = true;
        let out = run_batch(&s, &space, &d).unwrap();
        assert_eq!(out.column(1).unwrap(), d.mapped.column(1));
        assert!(out.valid.iter().all(|v| *v));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let dir = tempfile::tempdir().unwrap();
        let (space, d) = setup(16);
        let body = format!("[ \"${ROW_INDEX_ENV}\" = 5 ] && exit 1\n{ECHO}");
        let mut s = spec(script(&dir, "e.sh", &body), &["y", "z"]);
        let a = run_batch(&s, &space, &d).unwrap();
        s.max_parallel = 8;
        let b = run_batch(&s, &space, &d).unwrap();
        assert_eq!(a.valid, b.valid);
        assert_eq!(
            a.values.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
