//! JSONL dataset and policy files. The first line is a meta header, every
//! following non-blank line is one context.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GarsError, Result};
use crate::model::{CategoryScheme, ItemSet, JudgeEntry, LabeledPair, PiMatrix, PreferenceDataset};

#[derive(Debug, Serialize, Deserialize)]
struct Weights {
    w1: Vec<f64>,
    w2: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Meta {
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "C")]
        c: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Weights>,
    },
    Row {
        context: Vec<f64>,
        #[serde(default)]
        pairs: Vec<LabeledPair>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        judge: Option<Vec<JudgeEntry>>,
    },
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<PreferenceDataset> {
    let f = File::open(path.as_ref())?;
    read_dataset(BufReader::new(f))
}

pub fn read_dataset(reader: impl BufRead) -> Result<PreferenceDataset> {
    let mut meta: Option<(ItemSet, CategoryScheme)> = None;
    let mut contexts = Vec::new();
    let mut selections = Vec::new();
    let mut judge = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| GarsError::Parse { line: lineno, msg: e.to_string() })?;
        match parsed {
            Line::Meta { k, c, weights } => {
                if meta.is_some() {
                    return Err(GarsError::Parse { line: lineno, msg: "second meta line".into() });
                }
                let items = ItemSet::new(k).map_err(|e| GarsError::Parse { line: lineno, msg: e.to_string() })?;
                let scheme = match weights {
                    Some(w) => CategoryScheme::new(w.w1, w.w2),
                    None => CategoryScheme::default_for(c),
                }
                .map_err(|e| GarsError::Parse { line: lineno, msg: e.to_string() })?;
                if scheme.c() != c {
                    return Err(GarsError::Parse { line: lineno, msg: format!("weights have length {} but C={c}", scheme.c()) });
                }
                meta = Some((items, scheme));
            }
            Line::Row { context, pairs, judge: j } => {
                if meta.is_none() {
                    return Err(GarsError::Parse { line: lineno, msg: "row before meta line".into() });
                }
                contexts.push(context);
                selections.push(pairs);
                judge.push(j.unwrap_or_default());
            }
        }
    }
    let (items, scheme) = meta.ok_or(GarsError::Parse { line: 1, msg: "missing meta line".into() })?;
    // validation errors are reported against the file line of the row
    PreferenceDataset::new(items, scheme, contexts, selections, judge).map_err(|e| match e {
        GarsError::Schema(msg) => GarsError::Schema(annotate_row(&msg)),
        other => other,
    })
}

fn annotate_row(msg: &str) -> String {
    // "row i: ..." -> "line i+2 (row i): ..."
    msg.strip_prefix("row ")
        .and_then(|rest| rest.split_once(':'))
        .and_then(|(i, tail)| i.parse::<usize>().ok().map(|i| format!("line {} (row {i}):{tail}", i + 2)))
        .unwrap_or_else(|| msg.to_string())
}

pub fn save_dataset(ds: &PreferenceDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_dataset(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &PreferenceDataset, w: &mut impl Write) -> Result<()> {
    let meta = Line::Meta {
        k: ds.k(),
        c: ds.c(),
        weights: Some(Weights { w1: ds.scheme().w1.clone(), w2: ds.scheme().w2.clone() }),
    };
    writeln!(w, "{}", to_json(&meta)?)?;
    for i in 0..ds.n() {
        let judge = ds.judge(i);
        let row = Line::Row {
            context: ds.context(i).to_vec(),
            pairs: ds.selections(i).to_vec(),
            judge: if judge.is_empty() { None } else { Some(judge.to_vec()) },
        };
        writeln!(w, "{}", to_json(&row)?)?;
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| GarsError::InvalidInput(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum PolicyLine {
    Meta {
        #[serde(rename = "K")]
        k: usize,
        mode: String,
    },
    Policy {
        row: usize,
        /// K x K matrix, row-major. For one-pair mode only j<k entries are used.
        pi: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pi0: Option<f64>,
    },
}

/// Per-context selection probabilities as written to and read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub k: usize,
    pub mode: String,
    pub rows: Vec<Vec<f64>>,
    pub pi0: Vec<Option<f64>>,
}

pub fn save_policy(policy: &PolicyFile, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "{}", to_json(&PolicyLine::Meta { k: policy.k, mode: policy.mode.clone() })?)?;
    for (i, r) in policy.rows.iter().enumerate() {
        let pi = r.chunks(policy.k).map(|c| c.to_vec()).collect();
        writeln!(w, "{}", to_json(&PolicyLine::Policy { row: i, pi, pi0: policy.pi0[i] })?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<PolicyFile> {
    let f = BufReader::new(File::open(path.as_ref())?);
    let mut out: Option<PolicyFile> = None;
    for (idx, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PolicyLine =
            serde_json::from_str(&line).map_err(|e| GarsError::Parse { line: idx + 1, msg: e.to_string() })?;
        match parsed {
            PolicyLine::Meta { k, mode } => out = Some(PolicyFile { k, mode, rows: Vec::new(), pi0: Vec::new() }),
            PolicyLine::Policy { pi, pi0, .. } => {
                let p = out.as_mut().ok_or(GarsError::Parse { line: idx + 1, msg: "policy before meta".into() })?;
                if pi.len() != p.k || pi.iter().any(|r| r.len() != p.k) {
                    return Err(GarsError::Parse { line: idx + 1, msg: "policy matrix has wrong shape".into() });
                }
                p.rows.push(pi.concat());
                p.pi0.push(pi0);
            }
        }
    }
    out.ok_or(GarsError::Parse { line: 1, msg: "missing meta line".into() })
}

impl PolicyFile {
    pub fn from_pi(mode: &str, pis: &[PiMatrix]) -> Self {
        let k = pis.first().map_or(0, |p| p.k());
        PolicyFile {
            k,
            mode: mode.to_string(),
            rows: pis.iter().map(|p| p.as_slice().to_vec()).collect(),
            pi0: vec![None; pis.len()],
        }
    }
}
