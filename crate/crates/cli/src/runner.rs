//! Experiment execution: one child process per run, then aggregation.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rsmote::metrics::{aggregate_seeds, Evaluator};
use rsmote::network::save_checkpoint;
use rsmote::oracles::reference_grid;
use rsmote::pde::Reference;
use rsmote::trainer::{read_records_csv, run_algorithm1_with, RecordWriter, TrainRecord};
use serde::Serialize;

use crate::config::{ExperimentConfig, RunSettings};

pub const RECORDS_FILE: &str = "records.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "run.log";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Trains one run in this process and writes its records and checkpoint
/// into `dir`, which must already hold the run's `config.toml`.
pub fn execute_run(dir: &Path) -> Result<()> {
    let spec = RunSettings::load(dir)?;
    let problem = spec.problem()?;
    let evaluator = Evaluator::for_problem(&problem)?;
    let mut writer = RecordWriter::create(&dir.join(RECORDS_FILE))?;
    let outcome = run_algorithm1_with(
        &problem,
        problem.net_config(),
        &spec.sampler,
        &spec.schedule,
        &evaluator,
        &mut |record| {
            let mut record = record.clone();
            if !spec.memory_probe {
                record.peak_mem_bytes = None;
            }
            println!(
                "iter {:>3}  error {:.4e}  loss {:.4e}  {:.1}s",
                record.iter,
                record.l2_rel_err,
                record.interior_loss + record.boundary_loss,
                record.wall_s
            );
            writer.append(&record)
        },
    )?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &outcome.net, spec.schedule.seed)?;
    match outcome.aborted {
        Some(why) => bail!("training aborted at {why}"),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub jobs: usize,
    pub memory_probe: bool,
    /// Binary that implements the hidden `run-one` subcommand.
    pub exe: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSettings,
    pub dir: PathBuf,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub problem: String,
    pub sampler: String,
    pub n_interior: usize,
    /// `NA` when no seed finished.
    pub mean_error: String,
    pub std_error: String,
    pub peak_memory_bytes: String,
    pub n_seeds: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunResult>,
    pub rows: Vec<SummaryRow>,
    pub table: String,
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

fn spawn_run(exe: &Path, dir: &Path) -> Result<(), String> {
    let log = File::create(dir.join(LOG_FILE)).map_err(|e| format!("cannot create log: {e}"))?;
    let err = log.try_clone().map_err(|e| e.to_string())?;
    let status = Command::new(exe)
        .arg("run-one")
        .arg("--run-dir")
        .arg(dir)
        .stdin(Stdio::null())
        .stdout(log)
        .stderr(err)
        .status()
        .map_err(|e| format!("cannot start {}: {e}", exe.display()))?;
    if status.success() {
        return Ok(());
    }
    let text = fs::read_to_string(dir.join(LOG_FILE)).unwrap_or_default();
    let last = text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("no output");
    Err(format!("{status}: {last}"))
}

fn prepare_run_dir(dir: &Path, spec: &RunSettings) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for stale in [RECORDS_FILE, CHECKPOINT_FILE, "checkpoint.json", LOG_FILE] {
        match fs::remove_file(dir.join(stale)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
    }
    fs::write(dir.join(RunSettings::FILE), spec.to_toml())?;
    Ok(())
}

/// Runs the full sampler × n_interior × seed matrix, `jobs` processes at a
/// time, then aggregates per (sampler, n_interior). Failed runs are reported
/// and excluded from aggregation; the remaining runs still execute.
pub fn run_experiments(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    let problem = rsmote::pde::PdeProblem::<f64>::by_name(cfg.problem, cfg.dim)?;
    if let Reference::Oracle(solver) = problem.reference() {
        // built once here rather than concurrently by every child
        reference_grid(solver).with_context(|| format!("building {solver} reference"))?;
    }
    fs::create_dir_all(&opts.out)?;
    let mut resolved = cfg.clone();
    resolved.out = opts.out.clone();
    fs::write(opts.out.join("experiment.toml"), resolved.to_toml())?;

    let specs = cfg.runs(opts.memory_probe);
    let total = specs.len();
    let mut slots = Vec::with_capacity(total);
    for spec in specs {
        let dir = opts.out.join(spec.relative_dir());
        prepare_run_dir(&dir, &spec)?;
        slots.push(Mutex::new(RunResult { spec, dir, error: None }));
    }

    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..opts.jobs.max(1).min(total) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(slot) = slots.get(i) else { break };
                let dir = slot.lock().unwrap().dir.clone();
                let start = Instant::now();
                let result = spawn_run(&opts.exe, &dir);
                let k = done.fetch_add(1, Ordering::SeqCst) + 1;
                let rel = dir.strip_prefix(&opts.out).unwrap_or(&dir).display().to_string();
                match &result {
                    Ok(()) => eprintln!("[{k}/{total}] {rel} ok ({:.1}s)", start.elapsed().as_secs_f64()),
                    Err(e) => eprintln!("[{k}/{total}] {rel} FAILED: {e}"),
                }
                slot.lock().unwrap().error = result.err();
            });
        }
    });
    let runs: Vec<RunResult> = slots.into_iter().map(|m| m.into_inner().unwrap()).collect();

    let rows = summarize(cfg, &runs)?;
    let table = render_table(&rows);
    write_summary_csv(&opts.out.join(SUMMARY_CSV), &rows)?;
    fs::write(opts.out.join(SUMMARY_TXT), &table)?;
    Ok(ExperimentReport { runs, rows, table })
}

fn summarize(cfg: &ExperimentConfig, runs: &[RunResult]) -> Result<Vec<SummaryRow>> {
    let label = cfg.problem_label();
    let mut rows = Vec::new();
    for sampler in &cfg.samplers {
        for &n in &cfg.n_interior {
            let group: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.spec.sampler == *sampler && r.spec.schedule.n_interior == n)
                .collect();
            let mut finished: Vec<Vec<TrainRecord>> = Vec::new();
            for r in group.iter().filter(|r| r.error.is_none()) {
                let records = read_records_csv(&r.dir.join(RECORDS_FILE))
                    .with_context(|| format!("reading records of {}", r.dir.display()))?;
                if !records.is_empty() {
                    finished.push(records);
                }
            }
            let n_failed = group.len() - finished.len();
            let row = if finished.is_empty() {
                SummaryRow {
                    problem: label.clone(),
                    sampler: sampler.label(),
                    n_interior: n,
                    mean_error: "NA".into(),
                    std_error: "NA".into(),
                    peak_memory_bytes: "NA".into(),
                    n_seeds: 0,
                    n_failed,
                }
            } else {
                let s = aggregate_seeds(&label, &sampler.label(), n, &finished)?;
                SummaryRow {
                    problem: s.problem,
                    sampler: s.sampler,
                    n_interior: n,
                    mean_error: s.mean_error.to_string(),
                    std_error: s.std_error.to_string(),
                    peak_memory_bytes: s.peak_memory_bytes.map_or("NA".into(), |b| b.to_string()),
                    n_seeds: s.n_seeds,
                    n_failed,
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).map(str::to_string).ok_or_else(|| anyhow!("short summary row"));
        out.push(SummaryRow {
            problem: get(0)?,
            sampler: get(1)?,
            n_interior: get(2)?.parse()?,
            mean_error: get(3)?,
            std_error: get(4)?,
            peak_memory_bytes: get(5)?,
            n_seeds: get(6)?.parse()?,
            n_failed: get(7)?.parse()?,
        });
    }
    Ok(out)
}

fn sci(s: &str) -> String {
    s.parse::<f64>().map_or_else(|_| s.to_string(), |v| format!("{v:.3e}"))
}

fn megabytes(s: &str) -> String {
    s.parse::<f64>().map_or_else(|_| s.to_string(), |v| format!("{:.1}", v / (1u64 << 20) as f64))
}

/// Fixed-width text table of the summary rows.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let header = ["problem", "sampler", "n", "L2 rel. error", "peak MB", "seeds", "failed"];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.problem.clone(),
                r.sampler.clone(),
                r.n_interior.to_string(),
                format!("{} ± {}", sci(&r.mean_error), sci(&r.std_error)),
                megabytes(&r.peak_memory_bytes),
                r.n_seeds.to_string(),
                r.n_failed.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> =
            cells.iter().zip(widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in &body {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_and_formats() {
        let rows = vec![
            SummaryRow {
                problem: "allen_cahn".into(),
                sampler: "RSmote".into(),
                n_interior: 2000,
                mean_error: "0.0039".into(),
                std_error: "0.0009".into(),
                peak_memory_bytes: (3u64 << 20).to_string(),
                n_seeds: 5,
                n_failed: 0,
            },
            SummaryRow {
                problem: "allen_cahn".into(),
                sampler: "RAD-50000".into(),
                n_interior: 2000,
                mean_error: "NA".into(),
                std_error: "NA".into(),
                peak_memory_bytes: "NA".into(),
                n_seeds: 0,
                n_failed: 5,
            },
        ];
        let t = render_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].contains("3.900e-3 ± 9.000e-4") && lines[2].contains("3.0"));
        assert!(lines[3].contains("NA ± NA"));
        let col = lines[0].find("sampler").unwrap();
        assert_eq!(lines[3].find("RAD-50000"), Some(col));
    }
}
