//! Loss-curve and solution-field plots from finished run directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use plotters::prelude::*;
use rsmote::metrics::mean_std;
use rsmote::network::{load_checkpoint, FieldModel, Mlp};
use rsmote::oracles::reference_values;
use rsmote::pde::{PdeProblem, Reference};
use rsmote::trainer::{read_records_csv, TrainRecord};
use serde::Serialize;
use walkdir::WalkDir;

use crate::config::RunSettings;
use crate::runner::{CHECKPOINT_FILE, RECORDS_FILE};

pub const FIELD_RESOLUTION: usize = 256;

/// A finished run found below an output root.
#[derive(Debug, Clone)]
pub struct FoundRun {
    pub spec: RunSettings,
    pub dir: PathBuf,
    pub records: Vec<TrainRecord>,
}

/// Every run directory with a readable config and records; the rest are
/// returned as warnings.
pub fn discover_runs(root: &Path) -> Result<(Vec<FoundRun>, Vec<String>)> {
    let runs_dir = root.join("runs");
    if !runs_dir.is_dir() {
        bail!("no runs directory under {}", root.display());
    }
    let mut found = Vec::new();
    let mut warnings = Vec::new();
    let mut dirs: Vec<PathBuf> = WalkDir::new(&runs_dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name() == RunSettings::FILE)
        .filter_map(|e| e.path().parent().map(Path::to_path_buf))
        .collect();
    dirs.sort();
    for dir in dirs {
        let spec = match RunSettings::load(&dir) {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!("skipping {}: {e}", dir.display()));
                continue;
            }
        };
        match read_records_csv(&dir.join(RECORDS_FILE)) {
            Ok(records) if !records.is_empty() => found.push(FoundRun { spec, dir, records }),
            Ok(_) => warnings.push(format!("skipping {}: no records", dir.display())),
            Err(e) => warnings.push(format!("skipping {}: {e}", dir.display())),
        }
    }
    Ok((found, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub sampler: String,
    pub iter: usize,
    pub mean_loss: f64,
    /// Sample standard deviation across seeds; the band is `mean ± std_loss`.
    pub std_loss: f64,
    pub n_seeds: usize,
}

/// Mean and std of the total loss per iteration over the seeds of one
/// sampler, truncated to the shortest run.
pub fn loss_curve(sampler: &str, runs: &[&FoundRun]) -> Result<Vec<CurvePoint>> {
    let len = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let losses: Vec<f64> = runs.iter().map(|r| r.records[i].interior_loss + r.records[i].boundary_loss).collect();
            let (mean_loss, std_loss) = mean_std(&losses)?;
            Ok(CurvePoint { sampler: sampler.into(), iter: runs[0].records[i].iter, mean_loss, std_loss, n_seeds: runs.len() })
        })
        .collect()
}

fn draw_loss_svg(path: &Path, title: &str, curves: &[Vec<CurvePoint>]) -> Result<()> {
    let points = curves.iter().flatten();
    let positive = |v: f64| v.is_finite() && v > 0.0;
    let max_iter = curves.iter().flatten().map(|p| p.iter).max().unwrap_or(0).max(1);
    let hi = points.clone().map(|p| p.mean_loss + p.std_loss).filter(|v| positive(*v)).fold(f64::MIN_POSITIVE, f64::max);
    let lo = points.map(|p| p.mean_loss).filter(|v| positive(*v)).fold(hi, f64::min);
    // log axis: the lower band edge is clipped where mean - std ≤ 0
    let (ylo, yhi) = (lo / 10.0, hi * 2.0);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0f64..max_iter as f64, (ylo..yhi).log_scale())?;
    chart.configure_mesh().x_desc("sampling iteration").y_desc("training loss").draw()?;
    for (k, curve) in curves.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let band: Vec<(f64, f64)> = curve
            .iter()
            .map(|p| (p.iter as f64, (p.mean_loss + p.std_loss).max(ylo)))
            .chain(curve.iter().rev().map(|p| (p.iter as f64, (p.mean_loss - p.std_loss).max(ylo))))
            .collect();
        chart.draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))?;
        let label = curve.first().map(|p| p.sampler.clone()).unwrap_or_default();
        chart
            .draw_series(LineSeries::new(curve.iter().map(|p| (p.iter as f64, p.mean_loss.max(ylo))), color.stroke_width(2)))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

/// Predicted, reference and absolute-difference values on a square grid
/// spanning the first two coordinates of the domain box.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Indexed `[iy, ix]`.
    pub predicted: Array2<f64>,
    pub reference: Array2<f64>,
    pub abs_diff: Array2<f64>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn field_grid<M: FieldModel<f64> + ?Sized>(problem: &PdeProblem<f64>, model: &M, resolution: usize) -> Result<FieldGrid> {
    let dom = problem.domain();
    if dom.coord_dim() != 2 || resolution < 2 {
        bail!("field plots need a two-coordinate problem and resolution ≥ 2");
    }
    let xs = linspace(dom.lower()[0], dom.upper()[0], resolution);
    let ys = linspace(dom.lower()[1], dom.upper()[1], resolution);
    let pts = Array2::from_shape_fn((resolution * resolution, 2), |(k, c)| {
        if c == 0 {
            xs[k % resolution]
        } else {
            ys[k / resolution]
        }
    });
    let pred = model.values(pts.view())?;
    let reference: Vec<f64> = match problem.reference() {
        Reference::Exact(f) => pts.rows().into_iter().map(|r| f.eval(&r.to_vec())).collect(),
        Reference::Oracle(solver) => {
            let x: Vec<f64> = pts.column(0).to_vec();
            let t: Vec<f64> = pts.column(1).to_vec();
            reference_values(solver, &x, &t)?
        }
    };
    let shape = (resolution, resolution);
    let predicted = Array2::from_shape_vec(shape, pred.to_vec())?;
    let reference = Array2::from_shape_vec(shape, reference)?;
    let abs_diff = (&predicted - &reference).mapv(f64::abs);
    Ok(FieldGrid { xs, ys, predicted, reference, abs_diff })
}

/// Viridis image with `[iy, ix]` mapped so that larger y is at the top.
fn write_heatmap(path: &Path, values: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let (ny, nx) = values.dim();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = image::RgbImage::from_fn(nx as u32, ny as u32, |x, y| {
        let v = values[[ny - 1 - y as usize, x as usize]];
        let c = colorous::VIRIDIS.eval_continuous(((v - lo) / span).clamp(0.0, 1.0));
        image::Rgb([c.r, c.g, c.b])
    });
    img.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_field_csv(path: &Path, g: &FieldGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "predicted", "reference", "abs_diff"])?;
    for (iy, y) in g.ys.iter().enumerate() {
        for (ix, x) in g.xs.iter().enumerate() {
            let cells = [*x, *y, g.predicted[[iy, ix]], g.reference[[iy, ix]], g.abs_diff[[iy, ix]]];
            w.write_record(cells.iter().map(f64::to_string))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>_{predicted,reference,abs_diff}.png` and `<stem>.csv`.
pub fn write_field_plots(dir: &Path, stem: &str, g: &FieldGrid) -> Result<Vec<PathBuf>> {
    let both = g.predicted.iter().chain(g.reference.iter());
    let lo = both.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = both.copied().fold(f64::NEG_INFINITY, f64::max);
    let dmax = g.abs_diff.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::new();
    for (name, values, a, b) in
        [("predicted", &g.predicted, lo, hi), ("reference", &g.reference, lo, hi), ("abs_diff", &g.abs_diff, 0.0, dmax)]
    {
        let path = dir.join(format!("{stem}_{name}.png"));
        write_heatmap(&path, values, a, b)?;
        out.push(path);
    }
    let csv = dir.join(format!("{stem}.csv"));
    write_field_csv(&csv, g)?;
    out.push(csv);
    Ok(out)
}

#[derive(Debug, Default)]
pub struct PlotReport {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Loss curves per (problem, n_interior) group and, for two-coordinate
/// problems, field plots per (problem, sampler, n_interior) from the
/// lowest-seed checkpoint. Output goes to `<root>/plots`.
pub fn emit_plots(root: &Path) -> Result<PlotReport> {
    let (runs, warnings) = discover_runs(root)?;
    let mut report = PlotReport { files: Vec::new(), warnings };
    let plots = root.join("plots");
    fs::create_dir_all(&plots)?;

    let mut groups: BTreeMap<(String, usize), BTreeMap<String, Vec<&FoundRun>>> = BTreeMap::new();
    for run in &runs {
        groups
            .entry((run.spec.problem_label(), run.spec.schedule.n_interior))
            .or_default()
            .entry(run.spec.sampler.label())
            .or_default()
            .push(run);
    }

    for ((problem, n), by_sampler) in &groups {
        let stem = format!("loss_{problem}_n{n}");
        let curves: Vec<Vec<CurvePoint>> =
            by_sampler.iter().map(|(s, rs)| loss_curve(s, rs)).collect::<Result<_>>()?;
        let csv_path = plots.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        curves.iter().flatten().try_for_each(|p| w.serialize(p))?;
        w.flush()?;
        let svg = plots.join(format!("{stem}.svg"));
        draw_loss_svg(&svg, &format!("{problem}, n = {n}"), &curves)?;
        report.files.extend([svg, csv_path]);

        for (sampler, rs) in by_sampler {
            let first = rs.iter().min_by_key(|r| r.spec.schedule.seed).expect("non-empty group");
            let problem_def = first.spec.problem()?;
            if problem_def.domain().coord_dim() != 2 {
                continue;
            }
            let net: Mlp<f64> = match load_checkpoint(&first.dir.join(CHECKPOINT_FILE)) {
                Ok((net, _)) => net,
                Err(e) => {
                    report.warnings.push(format!("no field plot for {}: {e}", first.dir.display()));
                    continue;
                }
            };
            let grid = field_grid(&problem_def, &net, FIELD_RESOLUTION)?;
            let stem = format!("field_{problem}_{sampler}_n{n}_seed{}", first.spec.schedule.seed);
            report.files.extend(write_field_plots(&plots, &stem, &grid)?);
        }
    }
    Ok(report)
}
