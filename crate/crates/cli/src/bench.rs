//! Benchmark runner: every problem in a suite directory, every requested method,
//! each run in a child process with a wall-clock timeout.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{Context as _, Result};
use serde::Serialize;
use tllreach::io::{self, ReachResultJson};

use crate::MethodArg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Timeout,
    CostAbort,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub file: String,
    pub size: String,
    pub method: String,
    pub status: RunStatus,
    pub wall_ms: f64,
    pub nodes: Option<u64>,
    pub lp_calls: Option<u64>,
    /// Product of box widths per step, for planar problems.
    pub areas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeSummary {
    pub size: String,
    pub method: String,
    pub runs: usize,
    pub completed: usize,
    pub median_wall_ms: Option<f64>,
    pub median_final_area: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub timeout_s: f64,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SizeSummary>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn suite_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading suite directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn run_one(exe: &Path, file: &Path, method: MethodArg, timeout: Duration, scratch: &Path) -> Result<RunRecord> {
    let problem = io::load_problem(file)?;
    let c = &problem.controller;
    let size = format!("N{}_M{}", c.num_functions(), c.num_groups());
    let out = scratch.join("result.json");
    let _ = std::fs::remove_file(&out);
    let start = Instant::now();
    let mut child = Command::new(exe)
        .arg("reach")
        .arg("--problem")
        .arg(file)
        .arg("--method")
        .arg(method.name())
        .arg("--out")
        .arg(&out)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .context("spawning reach")?;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(Duration::from_millis(5));
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let mut rec = RunRecord {
        file: file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        size,
        method: method.name().to_string(),
        status: RunStatus::Error,
        wall_ms: elapsed,
        nodes: None,
        lp_calls: None,
        areas: None,
    };
    let Some(status) = status else {
        rec.status = RunStatus::Timeout;
        return Ok(rec);
    };
    match status.code() {
        Some(2) => rec.status = RunStatus::CostAbort,
        Some(0) => {
            let result: ReachResultJson = io::read_json(&out)?;
            rec.status = RunStatus::Ok;
            rec.wall_ms = result.stats.wall_ms.unwrap_or(elapsed);
            rec.nodes = Some(result.stats.nodes);
            rec.lp_calls = Some(result.stats.lp_calls);
            if problem.system.state_dim() == 2 {
                rec.areas = Some(result.boxes.iter().map(|b| b.volume()).collect());
            }
        }
        _ => {}
    }
    Ok(rec)
}

pub fn run(suite: &Path, methods: &[MethodArg], timeout: Duration) -> Result<BenchReport> {
    let exe = std::env::current_exe().context("locating the tll-reach executable")?;
    let scratch = tempfile::tempdir().context("creating a scratch directory")?;
    let mut runs = Vec::new();
    for file in suite_files(suite)? {
        for &m in methods {
            let rec = run_one(&exe, &file, m, timeout, scratch.path())?;
            tracing::info!(file = %rec.file, method = %rec.method, status = ?rec.status, wall_ms = rec.wall_ms, "bench run");
            runs.push(rec);
        }
    }
    let mut keys: Vec<(String, String)> = runs.iter().map(|r| (r.size.clone(), r.method.clone())).collect();
    keys.sort_by(|a, b| size_order(&a.0).cmp(&size_order(&b.0)).then(a.cmp(b)));
    keys.dedup();
    let summary = keys
        .into_iter()
        .map(|(size, method)| {
            let group: Vec<&RunRecord> = runs.iter().filter(|r| r.size == size && r.method == method).collect();
            let done: Vec<&&RunRecord> = group.iter().filter(|r| r.status == RunStatus::Ok).collect();
            SizeSummary {
                runs: group.len(),
                completed: done.len(),
                median_wall_ms: median(done.iter().map(|r| r.wall_ms).collect()),
                median_final_area: median(
                    done.iter()
                        .filter_map(|r| r.areas.as_ref().and_then(|a| a.last().copied()))
                        .collect(),
                ),
                size,
                method,
            }
        })
        .collect();
    Ok(BenchReport {
        timeout_s: timeout.as_secs_f64(),
        runs,
        summary,
    })
}

/// Sort sizes like `N8_M8` numerically rather than lexically.
fn size_order(size: &str) -> Vec<u64> {
    size.split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect()
}
