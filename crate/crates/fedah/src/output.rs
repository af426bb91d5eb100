//! CSV and SVG renderings of finished runs. Everything is rendered to memory
//! first; [`write_all`] then puts the files on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fedah_core::{Method, MetricsLog};

use crate::error::{Cleanup, CliError, Result};

/// One finished `(method, seed)` experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub log: MetricsLog,
}

impl RunResult {
    pub fn dir_name(&self) -> String {
        format!("{}_seed{}", self.method, self.seed)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Runtime(format!("encoding csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Runtime(format!("encoding csv: {e}")))
}

pub const ROUNDS_HEADER: [&str; 7] = [
    "round",
    "method",
    "seed",
    "mean_accuracy",
    "mean_train_loss",
    "n_sampled",
    "params_transmitted_cumulative",
];

/// Every round; `mean_accuracy` is empty for rounds without an evaluation.
pub fn rounds_csv(run: &RunResult) -> Result<Vec<u8>> {
    csv_bytes(
        &ROUNDS_HEADER,
        run.log.rounds.iter().map(|r| {
            [
                r.round.to_string(),
                run.method.to_string(),
                run.seed.to_string(),
                opt(r.eval.as_ref().map(|e| e.mean_accuracy)),
                opt(r.mean_train_loss),
                r.sampled.len().to_string(),
                r.params_transmitted_cumulative.to_string(),
            ]
        }),
    )
}

/// Per-client test accuracy at every evaluated round.
pub fn clients_csv(run: &RunResult) -> Result<Vec<u8>> {
    csv_bytes(
        &["round", "client_id", "test_accuracy"],
        run.log.evaluations().flat_map(|(r, e)| {
            e.client_accuracies
                .iter()
                .enumerate()
                .map(move |(id, acc)| [r.round.to_string(), id.to_string(), acc.to_string()])
        }),
    )
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub const SUMMARY_HEADER: [&str; 6] = [
    "method",
    "n_seeds",
    "best_mean_accuracy_mean",
    "best_mean_accuracy_std",
    "per_client_best_mean",
    "per_client_best_std",
];

fn by_method(runs: &[RunResult]) -> BTreeMap<&'static str, Vec<&RunResult>> {
    let mut groups: BTreeMap<&'static str, Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.method.as_str()).or_default().push(r);
    }
    groups
}

/// One row per method: best mean accuracy over seeds as mean and std, and
/// the same for the per-client best accuracies.
pub fn summary_csv(runs: &[RunResult]) -> Result<Vec<u8>> {
    csv_bytes(
        &SUMMARY_HEADER,
        by_method(runs).into_iter().map(|(method, group)| {
            let best: Vec<f64> = group.iter().map(|r| r.log.best_mean_accuracy).collect();
            let per_client: Vec<f64> = group.iter().map(|r| r.log.mean_per_client_best()).collect();
            let (bm, bs) = mean_std(&best);
            let (pm, ps) = mean_std(&per_client);
            [
                method.to_string(),
                group.len().to_string(),
                bm.to_string(),
                bs.to_string(),
                pm.to_string(),
                ps.to_string(),
            ]
        }),
    )
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Mean accuracy against round, averaged over seeds, one line per method.
pub fn curves_svg(runs: &[RunResult]) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 420.0, 60.0, 140.0, 20.0, 45.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max_round = runs
        .iter()
        .flat_map(|r| r.log.rounds.last().map(|x| x.round))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = |round: f64| left + plot_w * round / max_round;
    let y = |acc: f64| top + plot_h * (1.0 - acc);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..=5 {
        let acc = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{yy:.1}" x2="{xr:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{tx}" y="{ty:.1}" text-anchor="end">{acc:.1}</text>"##,
            yy = y(acc),
            xr = left + plot_w,
            tx = left - 6.0,
            ty = y(acc) + 4.0,
        );
    }
    for i in 0..=4 {
        let round = (max_round * i as f64 / 4.0).round();
        let _ = writeln!(
            s,
            r#"<text x="{xx:.1}" y="{ty:.1}" text-anchor="middle">{round}</text>"#,
            xx = x(round),
            ty = top + plot_h + 16.0,
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{cx:.1}" y="{by:.1}" text-anchor="middle">round</text><text transform="translate(16 {cy:.1}) rotate(-90)" text-anchor="middle">mean test accuracy</text>"#,
        cx = left + plot_w / 2.0,
        by = h - 8.0,
        cy = top + plot_h / 2.0,
    );
    for (i, (method, group)) in by_method(runs).into_iter().enumerate() {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in group {
            for (round, acc) in r.log.accuracy_curve() {
                let e = sums.entry(round).or_insert((0.0, 0));
                e.0 += acc;
                e.1 += 1;
            }
        }
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = sums
            .iter()
            .map(|(&round, &(sum, n))| format!("{:.1},{:.1}", x(round as f64), y(sum / n as f64)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 16.0 + 18.0 * i as f64;
        let lx = left + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{lx2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">{method}</text>"#,
            lx2 = lx + 20.0,
            tx = lx + 26.0,
            ty = ly + 4.0,
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Files to write, relative to the output directory, in write order.
pub fn render(runs: &[RunResult], plot: bool) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut sorted: Vec<&RunResult> = runs.iter().collect();
    sorted.sort_by(|a, b| (a.method.as_str(), a.seed).cmp(&(b.method.as_str(), b.seed)));
    let mut files = Vec::new();
    for run in sorted {
        let dir = Path::new("runs").join(run.dir_name());
        files.push((dir.join("rounds.csv"), rounds_csv(run)?));
        files.push((dir.join("clients.csv"), clients_csv(run)?));
    }
    files.push((PathBuf::from("summary.csv"), summary_csv(runs)?));
    if plot {
        files.push((PathBuf::from("curves.svg"), curves_svg(runs).into_bytes()));
    }
    Ok(files)
}

fn create_dirs(dir: &Path, cleanup: &mut Cleanup) -> Result<()> {
    let mut missing = Vec::new();
    let mut cur = Some(dir);
    while let Some(d) = cur {
        if d.as_os_str().is_empty() || d.exists() {
            break;
        }
        missing.push(d.to_path_buf());
        cur = d.parent();
    }
    for d in missing.into_iter().rev() {
        fs::create_dir(&d).map_err(|e| CliError::write(&d, e))?;
        cleanup.dir(d);
    }
    Ok(())
}

/// Writes `files` under `out`. On any failure, files and directories created
/// by this call are removed again.
pub fn write_all(out: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut cleanup = Cleanup::default();
    create_dirs(out, &mut cleanup)?;
    for (rel, bytes) in files {
        let path = out.join(rel);
        if let Some(parent) = path.parent() {
            create_dirs(parent, &mut cleanup)?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::write(&path, e))?;
        cleanup.file(path);
    }
    cleanup.keep();
    Ok(())
}
