use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::repeat::{repeatability_report, RepeatabilityReport};
use super::summary::{MetricSummary, SummaryTable};
use super::svg::{boxplot_svg, repeatability_svg};
use super::{io_err, write_records, BenchError, EvaluationRecord};

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn display(s: &MetricSummary) -> String {
    match (s.mean, s.std) {
        (Some(m), Some(sd)) => {
            let star = if s.significant == Some(true) { "*" } else { "" };
            format!("{m:.2} ({sd:.2}){star}")
        }
        _ => String::new(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, BenchError> {
    csv::Writer::from_path(path).map_err(|e| BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_row(w: &mut csv::Writer<std::fs::File>, path: &Path, row: &[String]) -> Result<(), BenchError> {
    w.write_record(row).map_err(|e| BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One row per (dataset, sequence, region, method). Means and stds keep full
/// precision; the `_display` columns round to two decimals with `*` marking
/// significance. Significance columns are omitted when no group compares
/// two or more methods.
pub fn write_summary(path: impl AsRef<Path>, table: &SummaryTable) -> Result<(), BenchError> {
    let path = path.as_ref();
    let mut header: Vec<String> = ["dataset", "sequence", "region", "method"].map(String::from).to_vec();
    for m in ["dice", "hd95"] {
        header.extend(["n", "missing", "mean", "std", "best"].map(|c| format!("{m}_{c}")));
        if table.has_significance {
            header.push(format!("{m}_significant"));
        }
        header.push(format!("{m}_display"));
    }
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, &header)?;
    for r in &table.rows {
        let mut row = vec![r.dataset.clone(), r.sequence.clone(), r.region.clone(), r.method.clone()];
        for s in [&r.dice, &r.hd95] {
            row.extend([
                s.n.to_string(),
                s.n_missing.to_string(),
                opt(s.mean),
                opt(s.std),
                s.best.to_string(),
            ]);
            if table.has_significance {
                row.push(s.significant.map_or(String::new(), |b| b.to_string()));
            }
            row.push(display(s));
        }
        write_row(&mut w, path, &row)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_friedman(path: impl AsRef<Path>, reports: &[RepeatabilityReport]) -> Result<(), BenchError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let header = [
        "dataset",
        "region",
        "method",
        "measure",
        "sequences",
        "n_subjects",
        "n_dropped",
        "chi2",
        "p_value",
    ];
    write_row(&mut w, path, &header.map(String::from))?;
    for rep in reports {
        for f in &rep.friedman {
            write_row(
                &mut w,
                path,
                &[
                    rep.dataset.clone(),
                    f.region.clone(),
                    f.method.clone(),
                    f.measure.to_string(),
                    rep.sequences.join(";"),
                    f.n_subjects.to_string(),
                    f.n_dropped.to_string(),
                    opt(f.result.map(|r| r.statistic)),
                    opt(f.result.map(|r| r.p_value)),
                ],
            )?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `records.csv`, `summary.csv`, `friedman.csv`, one box plot per
/// (metric, dataset) and one repeatability chart per dataset with several
/// sequences. Returns the paths written.
pub fn emit_reports(
    records: &[EvaluationRecord],
    summary: &SummaryTable,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, BenchError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();

    let p = out_dir.join("records.csv");
    write_records(&p, records)?;
    written.push(p);
    let p = out_dir.join("summary.csv");
    write_summary(&p, summary)?;
    written.push(p);
    let reports = repeatability_report(records)?;
    let p = out_dir.join("friedman.csv");
    write_friedman(&p, &reports)?;
    written.push(p);

    let datasets: BTreeSet<&str> = records.iter().map(|r| r.dataset.as_str()).collect();
    for dataset in datasets {
        for metric in ["dice", "hd95"] {
            if let Some(svg) = boxplot_svg(dataset, metric, records) {
                let p = out_dir.join(format!("boxplot_{metric}_{}.svg", file_safe(dataset)));
                std::fs::write(&p, svg).map_err(io_err(&p))?;
                written.push(p);
            }
        }
    }
    for rep in &reports {
        if let Some(svg) = repeatability_svg(rep) {
            let p = out_dir.join(format!("repeatability_{}.svg", file_safe(&rep.dataset)));
            std::fs::write(&p, svg).map_err(io_err(&p))?;
            written.push(p);
        }
    }
    Ok(written)
}
