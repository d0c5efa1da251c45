//! Subprocess learner. The child reads JSONL on stdin:
//! one `{"type":"meta","n_classes":C,"n_features":q}` line, then
//! `{"type":"train","x":[..],"y":c,"w":w}` lines, then
//! `{"type":"predict","x":[..]}` lines; it must print one
//! `{"probs":[..]}` line per predict row on stdout and exit 0.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{GarsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub timeout_secs: f64,
}

#[derive(Deserialize)]
struct ProbLine {
    probs: Vec<f64>,
}

pub fn external_fit_predict(
    cmd: &ExternalCommand,
    x: &DMatrix<f64>,
    y: &[usize],
    w: Option<&[f64]>,
    n_classes: usize,
    predict_x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut input = String::new();
    input.push_str(&json!({"type": "meta", "n_classes": n_classes, "n_features": x.ncols()}).to_string());
    input.push('\n');
    let row = |m: &DMatrix<f64>, i: usize| -> Vec<f64> { (0..m.ncols()).map(|j| m[(i, j)]).collect() };
    for i in 0..x.nrows() {
        let wi = w.map_or(1.0, |w| w[i]);
        input.push_str(&json!({"type": "train", "x": row(x, i), "y": y[i], "w": wi}).to_string());
        input.push('\n');
    }
    for i in 0..predict_x.nrows() {
        input.push_str(&json!({"type": "predict", "x": row(predict_x, i)}).to_string());
        input.push('\n');
    }

    let mut child = Command::new(&cmd.program)
        .args(&cmd.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| GarsError::Learner(format!("cannot start `{}`: {e}", cmd.program)))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = std::thread::spawn(move || {
        // a child that exits early closes the pipe; that surfaces as its exit status
        let _ = stdin.write_all(input.as_bytes());
    });
    let stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        BufReader::new(stdout).lines().collect::<std::io::Result<Vec<String>>>()
    });

    let deadline = Instant::now() + Duration::from_secs_f64(cmd.timeout_secs.max(0.0));
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break s;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(GarsError::Learner(format!("`{}` timed out after {}s", cmd.program, cmd.timeout_secs)));
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let _ = writer.join();
    let lines = reader.join().map_err(|_| GarsError::Learner("stdout reader panicked".into()))??;
    if !status.success() {
        let mut err = String::new();
        if let Some(mut s) = child.stderr.take() {
            let _ = std::io::Read::read_to_string(&mut s, &mut err);
        }
        return Err(GarsError::Learner(format!("`{}` exited with {status}: {}", cmd.program, err.trim())));
    }
    let rows: Vec<Vec<f64>> = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<ProbLine>(l).map(|p| p.probs))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| GarsError::Learner(format!("bad output line: {e}")))?;
    if rows.len() != predict_x.nrows() || rows.iter().any(|r| r.len() != n_classes) {
        return Err(GarsError::Learner(format!(
            "expected {} probability vectors of length {n_classes}, got {}",
            predict_x.nrows(),
            rows.len()
        )));
    }
    let mut out = DMatrix::zeros(rows.len(), n_classes);
    for (i, r) in rows.iter().enumerate() {
        let s: f64 = r.iter().sum();
        if r.iter().any(|v| !v.is_finite() || *v < 0.0) || !(s > 0.0) {
            return Err(GarsError::Learner(format!("invalid probability vector on line {}", i + 1)));
        }
        for (c, v) in r.iter().enumerate() {
            out[(i, c)] = v / s;
        }
    }
    Ok(out)
}
