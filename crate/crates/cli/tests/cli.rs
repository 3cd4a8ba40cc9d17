use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsmote::metrics::mean_std;
use rsmote::pde::PdeProblem;
use rsmote::trainer::read_records_csv;
use rsmote_cli::plot::{emit_plots, field_grid, write_field_plots};
use rsmote_cli::runner::read_summary_csv;
use rsmote_cli::{run_experiments, ExperimentConfig, RunOptions};
use tempfile::TempDir;

const EXE: &str = env!("CARGO_BIN_EXE_rsmote");

fn tiny_config(out: &Path, sizes: &str, samplers: &str) -> String {
    format!(
        r#"
problem = "laplace"
n_interior = {sizes}
seeds = [0, 1]
out = "{}"

[schedule]
sampling_iters = 3
adam_steps_per_iter = 4
lbfgs_steps_per_iter = 4
n_boundary = 30
{samplers}"#,
        out.display()
    )
}

const RSMOTE: &str = "\n[[sampler]]\nmethod = \"rsmote\"\n";

fn rsmote(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(EXE);
    cmd.args(args);
    if let Some(c) = cache {
        cmd.env("PINN_ORACLE_CACHE", c);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path
}

fn files_named(root: &Path, name: &str) -> Vec<PathBuf> {
    walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_name() == name)
        .map(|e| e.into_path())
        .collect()
}

#[test]
fn run_writes_per_seed_records_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &tiny_config(&out, "[60]", RSMOTE));

    let first = rsmote(&["run", "--config", cfg.to_str().unwrap()], None);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(files_named(&out, "records.csv").len(), 2);
    assert_eq!(files_named(&out, "summary.csv").len(), 1);
    for seed in [0, 1] {
        let dir = out.join(format!("runs/laplace/RSmote/n60/seed{seed}"));
        let mut names: Vec<String> =
            fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(names, ["checkpoint.bin", "checkpoint.json", "config.toml", "records.csv", "run.log"]);
        assert_eq!(read_records_csv(&dir.join("records.csv")).unwrap().len(), 3);
    }
    let table = String::from_utf8_lossy(&first.stdout);
    assert!(table.contains("RSmote") && table.contains("L2 rel. error"), "{table}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows = read_summary_csv(&out.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].n_seeds, rows[0].n_failed), (2, 0));
    assert_ne!(rows[0].peak_memory_bytes, "NA");

    let again = rsmote(&["run", "--config", cfg.to_str().unwrap()], None);
    assert!(again.status.success());
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap(), summary);

    let other = tmp.path().join("other");
    let unprobed = rsmote(
        &["run", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap(), "--jobs", "2", "--no-memory-probe"],
        None,
    );
    assert!(unprobed.status.success());
    let rows2 = read_summary_csv(&other.join("summary.csv")).unwrap();
    assert_eq!(rows2[0].peak_memory_bytes, "NA");
    assert_eq!(rows2[0].mean_error, rows[0].mean_error);
}

#[test]
fn unknown_sampler_exits_2_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(&tmp.path().join("o"), "[60]", "\n[[sampler]]\nmethod = \"foo\"\n"));
    let out = rsmote(&["run", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sampler[0].method") && err.contains("foo"), "{err}");
    assert!(!tmp.path().join("o").exists());

    let missing = rsmote(&["run", "--config", "/nonexistent/exp.toml"], None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn partial_failure_completes_other_runs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = ExperimentConfig::from_toml(&tiny_config(&out, "[60]", RSMOTE), "t").unwrap();
    // a wrapper that kills seed 1 and forwards everything else
    let wrapper = tmp.path().join("flaky.sh");
    fs::write(&wrapper, format!("#!/bin/sh\ncase \"$3\" in *seed1) echo boom >&2; exit 9;; esac\nexec {EXE} \"$@\"\n")).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&wrapper, fs::Permissions::from_mode(0o755)).unwrap();
    }
    let opts = RunOptions { out: out.clone(), jobs: 1, memory_probe: false, exe: wrapper };
    let report = run_experiments(&cfg, &opts).unwrap();
    let failed: Vec<_> = report.failures().collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].error.as_deref().unwrap().contains("boom"));
    assert_eq!((report.rows[0].n_seeds, report.rows[0].n_failed), (1, 1));
    assert!(out.join("runs/laplace/RSmote/n60/seed0/records.csv").exists());
}

#[test]
fn plots_follow_groups_and_record_std() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let samplers = format!("{RSMOTE}\n[[sampler]]\nmethod = \"uniform\"\n");
    let cfg = write_config(tmp.path(), &tiny_config(&out, "[50, 70]", &samplers));
    assert!(rsmote(&["run", "--config", cfg.to_str().unwrap(), "--jobs", "3"], None).status.success());

    let plot = rsmote(&["plot", "--config", cfg.to_str().unwrap()], None);
    assert!(plot.status.success(), "{}", String::from_utf8_lossy(&plot.stderr));
    let plots = out.join("plots");
    let svgs: Vec<_> = fs::read_dir(&plots)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "svg"))
        .collect();
    assert_eq!(svgs.len(), 2, "one loss-curve file per (problem, size) group");
    assert!(plots.join("field_laplace_Uniform_n70_seed0_abs_diff.png").exists());

    // band half-width against std recomputed from the per-seed records
    let mut rdr = csv::Reader::from_path(plots.join("loss_laplace_n50.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let seeds: Vec<_> = (0..2)
        .map(|s| read_records_csv(&out.join(format!("runs/laplace/RSmote/n50/seed{s}/records.csv"))).unwrap())
        .collect();
    let mut checked = 0;
    for row in rows.iter().filter(|r| &r[0] == "RSmote") {
        let it: usize = row[1].parse().unwrap();
        let losses: Vec<f64> = seeds.iter().map(|r| r[it].interior_loss + r[it].boundary_loss).collect();
        let (mean, std) = mean_std(&losses).unwrap();
        let (m, s): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        assert!((m - mean).abs() <= 1e-12 * mean.abs() && (s - std).abs() <= 1e-12 * (std.abs() + 1e-300), "iter {it}");
        checked += 1;
    }
    assert_eq!(checked, 3);

    // a run without records is skipped with a warning
    fs::remove_file(out.join("runs/laplace/Uniform/n70/seed1/records.csv")).unwrap();
    let report = emit_plots(&out).unwrap();
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("seed1"));
}

#[test]
fn exact_solution_heatmap_difference_vanishes() {
    let p = PdeProblem::<f64>::laplace();
    let exact = p.exact_solution().unwrap();
    let g = field_grid(&p, &exact, 256).unwrap();
    assert_eq!(g.abs_diff.dim(), (256, 256));
    assert!(g.abs_diff.iter().all(|v| *v < 1e-8));
    let tmp = TempDir::new().unwrap();
    let files = write_field_plots(tmp.path(), "exact", &g).unwrap();
    assert_eq!(files.len(), 4);
    let img = image::open(tmp.path().join("exact_reference.png")).unwrap();
    assert_eq!((img.width(), img.height()), (256, 256));
}

#[test]
fn list_problems_prints_registry() {
    let out = rsmote(&["list-problems"], None);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["laplace", "burgers", "allen_cahn", "elliptic", "reaction_diffusion"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn oracles_build_hit_and_rebuild_after_corruption() {
    let cache = TempDir::new().unwrap();
    let c = Some(cache.path());
    let first = rsmote(&["oracles"], c);
    let text = String::from_utf8_lossy(&first.stdout).to_string();
    assert!(first.status.success(), "{text}{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(text.matches(": built, valid").count(), 2, "{text}");
    for solver in ["burgers_cole_hopf", "allen_cahn_mol"] {
        assert!(cache.path().join(format!("{solver}-validation.json")).exists());
    }

    let second = rsmote(&["oracles"], c);
    let text = String::from_utf8_lossy(&second.stdout).to_string();
    assert!(second.status.success());
    assert_eq!(text.matches(": cache hit, valid, stored report").count(), 2, "{text}");

    let bin = cache.path().join("burgers_cole_hopf-512.bin");
    let mut bytes = fs::read(&bin).unwrap();
    bytes[100] ^= 0xff;
    fs::write(&bin, bytes).unwrap();
    let third = rsmote(&["oracles", "--solver", "burgers_cole_hopf"], c);
    let text = String::from_utf8_lossy(&third.stdout).to_string();
    assert!(third.status.success(), "{text}");
    assert!(text.contains("burgers_cole_hopf: rebuilt (cache was corrupt), valid"), "{text}");
    assert!(!text.contains("allen_cahn_mol"));

    let bad = rsmote(&["oracles", "--solver", "nope"], c);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
            assert!(!cfg.runs(true).is_empty());
            n += 1;
        }
    }
    assert!(n >= 4);
}
