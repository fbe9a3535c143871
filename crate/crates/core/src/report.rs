//! Comparison tables and figure data for several generators evaluated against
//! the same real dataset.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Column;
use crate::dispatch::Comparison;
use crate::metrics::{
    BinnedFeature, CountMatrix, FidelityReport, Histogram, JSD_FEATURES, VARIATION_FEATURES,
};
use crate::{Error, Result};

fn table<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header.iter().map(AsRef::as_ref))?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// One column per labelled report, one row per metric.
pub fn global_table(reports: &[FidelityReport], labels: &[String]) -> Result<String> {
    let header: Vec<&str> = std::iter::once("metric")
        .chain(labels.iter().map(String::as_str))
        .collect();
    type Getter = fn(&FidelityReport) -> f64;
    let metrics: [(&str, Getter); 6] = [
        ("precision", |r| r.prdc.precision),
        ("recall", |r| r.prdc.recall),
        ("density", |r| r.prdc.density),
        ("coverage", |r| r.prdc.coverage),
        ("wasserstein", |r| r.wasserstein_mean),
        ("mmd", |r| r.mmd.value),
    ];
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|(name, get)| {
            std::iter::once(name.to_string())
                .chain(reports.iter().map(|r| fmt(get(r))))
                .collect()
        })
        .collect();
    table(&header, &rows)
}

/// Mean, std, min and max per column: the real data first as `RAW`, then
/// each generator.
pub fn marginal_table(reports: &[FidelityReport], labels: &[String]) -> Result<String> {
    let header: Vec<&str> = ["statistic", "source"]
        .into_iter()
        .chain(Column::ALL.iter().map(|c| c.name()))
        .collect();
    let mut rows = Vec::new();
    type Pick = fn(&crate::metrics::MarginalStats) -> f64;
    let stats: [(&str, Pick); 4] = [
        ("mean", |s| s.mean),
        ("std", |s| s.std),
        ("min", |s| s.min),
        ("max", |s| s.max),
    ];
    for (stat, pick) in stats {
        let mut row = vec![stat.to_string(), "RAW".to_string()];
        row.extend(reports[0].marginal_real.iter().map(|s| fmt(pick(s))));
        rows.push(row);
        for (r, label) in reports.iter().zip(labels) {
            let mut row = vec![stat.to_string(), label.clone()];
            row.extend(r.marginal_fake.iter().map(|s| fmt(pick(s))));
            rows.push(row);
        }
    }
    table(&header, &rows)
}

/// JSD (bits x 100) per feature.
pub fn jsd_table(reports: &[FidelityReport], labels: &[String]) -> Result<String> {
    let header: Vec<&str> = std::iter::once("feature")
        .chain(labels.iter().map(String::as_str))
        .collect();
    let rows: Vec<Vec<String>> = JSD_FEATURES
        .iter()
        .filter(|f| reports.iter().all(|r| r.jsd.contains_key(f)))
        .map(|f| {
            std::iter::once(f.name().to_string())
                .chain(reports.iter().map(|r| fmt(r.jsd[f])))
                .collect()
        })
        .collect();
    table(&header, &rows)
}

/// `% min` and `% max` variation per feature.
pub fn variation_table(reports: &[FidelityReport], labels: &[String]) -> Result<String> {
    let header: Vec<&str> = std::iter::once("row")
        .chain(labels.iter().map(String::as_str))
        .collect();
    let mut rows = Vec::new();
    for f in VARIATION_FEATURES
        .iter()
        .filter(|f| reports.iter().all(|r| r.variation.contains_key(f)))
    {
        rows.push(
            std::iter::once(format!("% min {f}"))
                .chain(reports.iter().map(|r| fmt(r.variation[f].0)))
                .collect(),
        );
        rows.push(
            std::iter::once(format!("% max {f}"))
                .chain(reports.iter().map(|r| fmt(r.variation[f].1)))
                .collect(),
        );
    }
    table(&header, &rows)
}

/// Counts per bin: the real data then each generator, over `bins`.
fn counts_table(
    bins: &[i64],
    real: &Histogram,
    fakes: &[&Histogram],
    labels: &[String],
    bin_name: &str,
) -> Result<String> {
    let header: Vec<&str> = [bin_name, "real"]
        .into_iter()
        .chain(labels.iter().map(String::as_str))
        .collect();
    let rows: Vec<Vec<String>> = bins
        .iter()
        .map(|b| {
            let get = |h: &Histogram| h.counts.get(b).copied().unwrap_or(0).to_string();
            [b.to_string(), get(real)]
                .into_iter()
                .chain(fakes.iter().map(|h| get(h)))
                .collect()
        })
        .collect();
    table(&header, &rows)
}

/// Month counts, always 12 rows.
pub fn month_figure(reports: &[FidelityReport], labels: &[String]) -> Result<String> {
    let bins: Vec<i64> = (1..=12).collect();
    let fakes: Vec<&Histogram> = reports
        .iter()
        .map(|r| &r.histograms_fake[&BinnedFeature::Month])
        .collect();
    counts_table(
        &bins,
        &reports[0].histograms_real[&BinnedFeature::Month],
        &fakes,
        labels,
        "month",
    )
}

/// Day-of-year counts, each source sorted in descending order independently.
pub fn day_figure(reports: &[FidelityReport], labels: &[String]) -> Result<String> {
    let mut columns: Vec<Vec<u64>> = vec![sorted_counts(
        &reports[0].histograms_real[&BinnedFeature::Day],
    )];
    columns.extend(
        reports
            .iter()
            .map(|r| sorted_counts(&r.histograms_fake[&BinnedFeature::Day])),
    );
    let len = columns.iter().map(Vec::len).max().unwrap_or(0);
    let header: Vec<&str> = ["rank", "real"]
        .into_iter()
        .chain(labels.iter().map(String::as_str))
        .collect();
    let rows: Vec<Vec<String>> = (0..len)
        .map(|i| {
            std::iter::once((i + 1).to_string())
                .chain(
                    columns
                        .iter()
                        .map(|c| c.get(i).copied().unwrap_or(0).to_string()),
                )
                .collect()
        })
        .collect();
    table(&header, &rows)
}

fn sorted_counts(h: &Histogram) -> Vec<u64> {
    h.sorted_descending().into_iter().map(|(_, c)| c).collect()
}

/// Area counts over the union of observed zone ids, or `None` without areas.
pub fn area_figure(reports: &[FidelityReport], labels: &[String]) -> Result<Option<String>> {
    let area = BinnedFeature::Area;
    if !reports
        .iter()
        .all(|r| r.histograms_fake.contains_key(&area))
    {
        return Ok(None);
    }
    let real = &reports[0].histograms_real[&area];
    let mut bins: Vec<i64> = real.counts.keys().copied().collect();
    for r in reports {
        bins.extend(r.histograms_fake[&area].counts.keys());
    }
    bins.sort_unstable();
    bins.dedup();
    let fakes: Vec<&Histogram> = reports.iter().map(|r| &r.histograms_fake[&area]).collect();
    counts_table(&bins, real, &fakes, labels, "area").map(Some)
}

pub fn cooccurrence_csv(m: &CountMatrix) -> Result<String> {
    let header: Vec<String> = std::iter::once(format!("{}\\{}", m.row_feature, m.col_feature))
        .chain(m.cols.iter().map(i64::to_string))
        .collect();
    let rows: Vec<Vec<String>> = m
        .rows
        .iter()
        .zip(&m.counts)
        .map(|(r, counts)| {
            std::iter::once(r.to_string())
                .chain(counts.iter().map(u64::to_string))
                .collect()
        })
        .collect();
    table(&header, &rows)
}

const PALETTE: [&str; 8] = [
    "#000000", "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
];

/// Line chart of several series over a shared x axis.
pub fn svg_lines(title: &str, xs: &[f64], series: &[(String, Vec<f64>)], log_y: bool) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let tf = |v: f64| if log_y { (v.max(1.0)).log10() } else { v };
    let ys = series.iter().flat_map(|(_, v)| v.iter().map(|&y| tf(y)));
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    let (ymin, ymax) = if log_y {
        (ymin.min(0.0), ymax.max(1.0))
    } else {
        (ymin.min(0.0), ymax.max(ymin + 1.0))
    };
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |x: f64| pad + (x - xmin) / xspan * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (tf(y) - ymin) / (ymax - ymin) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad
    );
    let top = if log_y {
        format!("1e{ymax:.1}")
    } else {
        format!("{ymax:.0}")
    };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{top}</text>"#,
        pad - 4.0,
        pad + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xmin}</text>"#,
        pad,
        h - pad + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xmax}</text>"#,
        w - pad,
        h - pad + 16.0
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">{name}</text>"#,
            w - pad - 100.0,
            pad + 14.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

fn check(reports: &[FidelityReport], labels: &[String]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::arg("no reports to emit"));
    }
    if reports.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} reports but {} labels",
            reports.len(),
            labels.len()
        )));
    }
    if reports
        .iter()
        .any(|r| r.marginal_real != reports[0].marginal_real || r.real_rows != reports[0].real_rows)
    {
        return Err(Error::arg(
            "reports were computed against different real data",
        ));
    }
    Ok(())
}

/// Writes every table, figure CSV and chart into `dir`; returns the paths.
pub fn emit_report(
    reports: &[FidelityReport],
    labels: &[String],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    check(reports, labels)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write(
        dir,
        "table_global.csv",
        &global_table(reports, labels)?,
        &mut written,
    )?;
    write(
        dir,
        "table_marginals.csv",
        &marginal_table(reports, labels)?,
        &mut written,
    )?;
    write(
        dir,
        "table_jsd.csv",
        &jsd_table(reports, labels)?,
        &mut written,
    )?;
    write(
        dir,
        "table_variation.csv",
        &variation_table(reports, labels)?,
        &mut written,
    )?;
    write(
        dir,
        "figure_month_counts.csv",
        &month_figure(reports, labels)?,
        &mut written,
    )?;
    write(
        dir,
        "figure_day_counts.csv",
        &day_figure(reports, labels)?,
        &mut written,
    )?;
    if let Some(area) = area_figure(reports, labels)? {
        write(dir, "figure_area_counts.csv", &area, &mut written)?;
    }
    write(
        dir,
        "cooccurrence_real.csv",
        &cooccurrence_csv(&reports[0].cooccurrence_real)?,
        &mut written,
    )?;
    for (r, label) in reports.iter().zip(labels) {
        write(
            dir,
            &format!("cooccurrence_{label}.csv"),
            &cooccurrence_csv(&r.cooccurrence_fake)?,
            &mut written,
        )?;
    }

    let month_series = |f: BinnedFeature| {
        let get = |h: &Histogram| {
            (1..=12)
                .map(|m| h.counts.get(&m).copied().unwrap_or(0) as f64)
                .collect::<Vec<_>>()
        };
        let mut v = vec![("real".to_string(), get(&reports[0].histograms_real[&f]))];
        v.extend(
            reports
                .iter()
                .zip(labels)
                .map(|(r, l)| (l.clone(), get(&r.histograms_fake[&f]))),
        );
        v
    };
    let months: Vec<f64> = (1..=12).map(f64::from).collect();
    write(
        dir,
        "figure_month_counts.svg",
        &svg_lines(
            "Interventions by month",
            &months,
            &month_series(BinnedFeature::Month),
            false,
        ),
        &mut written,
    )?;
    let mut days = vec![(
        "real".to_string(),
        to_f64(&sorted_counts(
            &reports[0].histograms_real[&BinnedFeature::Day],
        )),
    )];
    days.extend(reports.iter().zip(labels).map(|(r, l)| {
        (
            l.clone(),
            to_f64(&sorted_counts(&r.histograms_fake[&BinnedFeature::Day])),
        )
    }));
    let len = days.iter().map(|d| d.1.len()).max().unwrap_or(0);
    for d in &mut days {
        d.1.resize(len, 0.0);
    }
    let ranks: Vec<f64> = (1..=len).map(|i| i as f64).collect();
    write(
        dir,
        "figure_day_counts.svg",
        &svg_lines("Interventions per day, descending", &ranks, &days, false),
        &mut written,
    )?;
    Ok(written)
}

fn to_f64(v: &[u64]) -> Vec<f64> {
    v.iter().map(|&c| c as f64).collect()
}

/// Dispatch comparison CSV and a per-type chart, log-scaled on request.
pub fn emit_dispatch_report(
    comparison: &Comparison,
    labels: [&str; 2],
    log_y: bool,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut csv = Vec::new();
    comparison.write_csv(&mut csv)?;
    write(
        dir,
        "dispatch_comparison.csv",
        &String::from_utf8(csv).expect("utf-8"),
        &mut written,
    )?;
    let totals: Vec<_> = comparison
        .rows
        .iter()
        .filter(|r| r.quantity.starts_with("total:"))
        .collect();
    let xs: Vec<f64> = (1..=totals.len()).map(|i| i as f64).collect();
    let series = vec![
        (labels[0].to_string(), totals.iter().map(|r| r.a).collect()),
        (labels[1].to_string(), totals.iter().map(|r| r.b).collect()),
    ];
    let names: Vec<&str> = totals
        .iter()
        .map(|r| r.quantity.trim_start_matches("total:"))
        .collect();
    let title = format!("Vehicles sent by type: {}", names.join(", "));
    write(
        dir,
        "dispatch_totals.svg",
        &svg_lines(&title, &xs, &series, log_y),
        &mut written,
    )?;
    Ok(written)
}
