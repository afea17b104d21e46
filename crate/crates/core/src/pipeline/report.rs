//! Report bundle: summary tables, confusion matrix, box plots, rank
//! statistics and an HTML index. Output is a pure function of the records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::LightingSpec;
use super::run::{read_records, write_atomic, RunLedger};
use crate::analysis::{
    confusion_matrix, kruskal_dunn, labels_from_records, summarize, AnalysisError, ConfusionMatrix, Correction,
    EvalRecord, GroundTruthLabel, Metric, StatsResult, Summary,
};
use crate::colorimetry::ItaClass;
use crate::error::{Error, Result};
use crate::extraction::{MaskSource, Method};

/// Grouping axis for tables, plots and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factor {
    Method,
    Lighting,
    /// Ground-truth ITA class of the image.
    Class,
    Recolor,
    /// Method × lighting cells as composite groups.
    MethodLighting,
}

impl Factor {
    pub const ALL: [Factor; 5] = [
        Factor::Method,
        Factor::Lighting,
        Factor::Class,
        Factor::Recolor,
        Factor::MethodLighting,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Factor::Method => "method",
            Factor::Lighting => "lighting",
            Factor::Class => "class",
            Factor::Recolor => "recolor",
            Factor::MethodLighting => "method_lighting",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Factor::Method => "extraction method",
            Factor::Lighting => "lighting",
            Factor::Class => "ground-truth ITA class",
            Factor::Recolor => "recoloring strategy",
            Factor::MethodLighting => "method × lighting (composite cells)",
        }
    }
}

fn method_order(m: Method) -> usize {
    Method::ALL.iter().position(|x| *x == m).unwrap_or(usize::MAX)
}

fn lighting_order(s: &str) -> usize {
    s.parse::<LightingSpec>().map(|l| l as usize).unwrap_or(usize::MAX)
}

/// Sort key and display label of `r` along `factor`.
fn group_key(factor: Factor, r: &EvalRecord, labels: &BTreeMap<String, GroundTruthLabel>) -> (usize, String) {
    match factor {
        Factor::Method => (method_order(r.method), r.method.label().to_string()),
        Factor::Lighting => (lighting_order(&r.lighting), r.lighting.clone()),
        Factor::Class => {
            let c = labels[&r.image_id].class;
            (c.index(), c.label().to_string())
        }
        Factor::Recolor => (r.recolor as usize, r.recolor.key().to_string()),
        Factor::MethodLighting => (
            method_order(r.method) * 16 + lighting_order(&r.lighting).min(15),
            format!("{} × {}", r.method.label(), r.lighting),
        ),
    }
}

/// Metric values per group, in display order.
pub fn grouped(
    records: &[EvalRecord],
    labels: &BTreeMap<String, GroundTruthLabel>,
    factor: Factor,
    metric: Metric,
) -> Vec<(String, Vec<f64>)> {
    let mut map: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        map.entry(group_key(factor, r, labels)).or_default().push(metric.of(r));
    }
    map.into_iter().map(|((_, label), v)| (label, v)).collect()
}

pub fn summary_table(
    records: &[EvalRecord],
    labels: &BTreeMap<String, GroundTruthLabel>,
    factor: Factor,
    metric: Metric,
) -> Vec<(String, Summary)> {
    grouped(records, labels, factor, metric)
        .into_iter()
        .map(|(g, v)| {
            let s = summarize(&v).expect("non-empty group");
            (g, s)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TestEntry {
    pub metric: Metric,
    pub factor: Factor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<StatsResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub config_hash: String,
    pub records: usize,
    pub correction: Correction,
    /// The composite factor runs Kruskal-Wallis over method × lighting
    /// cells; it is not a two-way interaction test.
    pub interaction_construction: &'static str,
    /// Images whose MMM-family reference used the artifact-defined chroma
    /// gate instead of landmarks.
    pub chroma_fallback_images: Vec<String>,
    pub tests: Vec<TestEntry>,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub confusion: ConfusionMatrix,
    pub labels: BTreeMap<String, GroundTruthLabel>,
    pub stats: StatsReport,
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn csv_bytes<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| Error::Internal(format!("report CSV: {e}"));
    w.write_record(header).map_err(internal)?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(internal)?;
    }
    w.into_inner().map_err(|e| Error::Internal(format!("report CSV: {e}")))
}

fn summary_csv(
    hash: &str,
    records: &[EvalRecord],
    labels: &BTreeMap<String, GroundTruthLabel>,
    factor: Factor,
) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        for (g, s) in summary_table(records, labels, factor, metric) {
            rows.push(vec![
                hash.to_string(),
                metric.key().to_string(),
                g,
                s.n.to_string(),
                fmt_num(s.min),
                fmt_num(s.q1),
                fmt_num(s.median),
                fmt_num(s.q3),
                fmt_num(s.max),
                fmt_num(s.mean),
            ]);
        }
    }
    csv_bytes(
        &["config_hash", "metric", factor.key(), "n", "min", "q1", "median", "q3", "max", "mean"],
        &rows,
    )
}

fn confusion_csv(hash: &str, m: &ConfusionMatrix) -> Result<Vec<u8>> {
    let mut header = vec!["config_hash", "truth"];
    header.extend(ItaClass::ALL.iter().map(|c| c.label()));
    let rows: Vec<Vec<String>> = ItaClass::ALL
        .iter()
        .map(|t| {
            let mut row = vec![hash.to_string(), t.label().to_string()];
            row.extend(m.counts[t.index()].iter().map(|v| v.to_string()));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

fn svg_open(out: &mut String, w: u32, h: u32, hash: &str, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<!-- config_hash: {hash} -->");
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2,
        esc(title)
    );
}

/// 6×6 heatmap, rows = ground truth, columns = rendered class.
pub fn confusion_svg(hash: &str, m: &ConfusionMatrix) -> String {
    let cell = 56.0;
    let (x0, y0) = (90.0, 60.0);
    let size = (x0 + 6.0 * cell + 30.0) as u32;
    let mut s = String::new();
    svg_open(&mut s, size, size + 20, hash, "ITA class: ground truth (rows) vs render (columns)");
    let max = m.counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    for t in ItaClass::ALL {
        let y = y0 + t.index() as f64 * cell;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            y + cell / 2.0 + 4.0,
            t.label()
        );
        for r in ItaClass::ALL {
            let x = x0 + r.index() as f64 * cell;
            let v = m.counts[t.index()][r.index()];
            let f = v as f64 / max;
            let shade = |hi: f64, lo: f64| (hi + (lo - hi) * f).round() as u8;
            let (cr, cg, cb) = (shade(247.0, 8.0), shade(251.0, 48.0), shade(255.0, 107.0));
            let ink = if f > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="#{cr:02x}{cg:02x}{cb:02x}" stroke="#999"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}">{v}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for r in ItaClass::ALL {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + r.index() as f64 * cell + cell / 2.0,
            y0 - 8.0,
            r.label()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">rendered class</text>"#,
        x0 + 3.0 * cell,
        y0 + 6.0 * cell + 24.0
    );
    s.push_str("</svg>\n");
    s
}

/// Box plot: box = interquartile range, bar = median, whiskers = min/max.
pub fn boxplot_svg(hash: &str, title: &str, y_label: &str, groups: &[(String, Summary)]) -> String {
    let slot = 90.0;
    let (left, top, plot_h) = (70.0, 40.0, 260.0);
    let width = (left + slot * groups.len().max(1) as f64 + 20.0) as u32;
    let height = (top + plot_h + 70.0) as u32;
    let mut s = String::new();
    svg_open(&mut s, width, height, hash, title);
    let ymax = groups.iter().map(|(_, g)| g.max).fold(0.0f64, f64::max).max(1e-9) * 1.05;
    let y = |v: f64| top + plot_h * (1.0 - v / ymax);
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="#333"/>"##,
        top + plot_h
    );
    for k in 0..=4 {
        let v = ymax * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{left}" y2="{:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"##,
            left - 4.0,
            y(v),
            y(v),
            left - 6.0,
            y(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        esc(y_label)
    );
    for (i, (name, g)) in groups.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let half = slot * 0.3;
        let _ = writeln!(
            s,
            r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#333"/>"##,
            y(g.max),
            y(g.min)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="#333"/>"##,
            cx - half,
            y(g.q3),
            2.0 * half,
            (y(g.q1) - y(g.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#08306b" stroke-width="2"/>"##,
            cx - half,
            y(g.median),
            cx + half,
            y(g.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="10">n={}</text>"#,
            top + plot_h + 18.0,
            esc(name),
            top + plot_h + 32.0,
            g.n
        );
    }
    s.push_str("</svg>\n");
    s
}

fn run_tests(
    records: &[EvalRecord],
    labels: &BTreeMap<String, GroundTruthLabel>,
    correction: Correction,
) -> Vec<TestEntry> {
    let mut out = Vec::new();
    for metric in Metric::ALL {
        for factor in Factor::ALL {
            let groups = grouped(records, labels, factor, metric);
            let names: Vec<String> = groups.iter().map(|(g, _)| g.clone()).collect();
            let values: Vec<Vec<f64>> = groups.into_iter().map(|(_, v)| v).collect();
            let (result, skipped) = match kruskal_dunn(&names, &values, correction) {
                Ok(mut r) => {
                    r.test = format!("kruskal-wallis {} by {}", metric.key(), factor.key());
                    (Some(r), None)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(TestEntry {
                metric,
                factor,
                result,
                skipped,
            });
        }
    }
    out
}

fn dunn_csv(hash: &str, r: &StatsResult) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = r
        .posthoc
        .iter()
        .map(|c| {
            vec![
                hash.to_string(),
                c.group_a.clone(),
                c.group_b.clone(),
                format!("{:.9}", c.z),
                format!("{:.9e}", c.p_raw),
                format!("{:.9e}", c.p_adjusted),
                r.correction.key().to_string(),
            ]
        })
        .collect();
    csv_bytes(
        &["config_hash", "group_a", "group_b", "z", "p_raw", "p_adjusted", "correction"],
        &rows,
    )
}

fn labels_csv(hash: &str, labels: &BTreeMap<String, GroundTruthLabel>) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = labels
        .values()
        .map(|l| {
            vec![
                hash.to_string(),
                l.image_id.clone(),
                l.class.label().to_string(),
                serde_json::to_value(l.resolution)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                l.voters.to_string(),
            ]
        })
        .collect();
    csv_bytes(&["config_hash", "image_id", "class", "resolution", "voters"], &rows)
}

fn html_summary(
    out: &mut String,
    records: &[EvalRecord],
    labels: &BTreeMap<String, GroundTruthLabel>,
    factor: Factor,
) {
    let _ = writeln!(out, "<h3>By {}</h3>", esc(factor.title()));
    let _ = writeln!(
        out,
        "<table><tr><th>group</th><th>n</th><th>median ΔE</th><th>IQR ΔE</th><th>median ITA error</th><th>IQR ITA error</th></tr>"
    );
    let de = summary_table(records, labels, factor, Metric::DeltaE);
    let ita = summary_table(records, labels, factor, Metric::ItaError);
    for ((g, a), (_, b)) in de.iter().zip(&ita) {
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{:.2}</td><td>{:.2}–{:.2}</td><td>{:.2}</td><td>{:.2}–{:.2}</td></tr>",
            esc(g),
            a.n,
            a.median,
            a.q1,
            a.q3,
            b.median,
            b.q1,
            b.q3
        );
    }
    out.push_str("</table>\n");
}

fn index_html(
    hash: &str,
    records: &[EvalRecord],
    labels: &BTreeMap<String, GroundTruthLabel>,
    stats: &StatsReport,
    ledger: Option<&RunLedger>,
    files: &[String],
) -> String {
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>tonebench report</title>\n");
    h.push_str("<style>body{font-family:sans-serif;margin:2em;max-width:70em}table{border-collapse:collapse;margin:0.5em 0 1.5em}td,th{border:1px solid #ccc;padding:3px 8px;text-align:right}th{background:#eef}img{max-width:100%}</style>\n");
    h.push_str("</head><body>\n<h1>Skin-tone fidelity report</h1>\n");
    let _ = writeln!(h, "<p>config hash <code>{hash}</code>; {} records.</p>", records.len());
    if let Some(l) = ledger {
        let t = &l.totals;
        let _ = writeln!(
            h,
            "<p>Ledger: {} cells over {} images; {} ok, {} skipped, {} errors.</p>",
            t.cells, l.images, t.ok, t.skipped, t.error
        );
    }
    if !stats.chroma_fallback_images.is_empty() {
        let _ = writeln!(
            h,
            "<p><strong>Chroma fallback:</strong> no landmarks for {}; their MMM-family references use the artifact-defined Lab gate.</p>",
            esc(&stats.chroma_fallback_images.join(", "))
        );
    }
    h.push_str("<p>Rendering uses an analytic proxy surface, so only directions and orderings of errors are meaningful, not absolute magnitudes.</p>\n");
    h.push_str("<h2>Medians</h2>\n");
    for f in [Factor::Method, Factor::Class, Factor::Lighting, Factor::Recolor] {
        html_summary(&mut h, records, labels, f);
    }
    h.push_str("<h2>Kruskal-Wallis</h2>\n");
    let _ = writeln!(
        h,
        "<p>Dunn post hoc with {} correction. Composite factor: {}.</p>",
        stats.correction, stats.interaction_construction
    );
    h.push_str("<table><tr><th>metric</th><th>factor</th><th>groups</th><th>H</th><th>df</th><th>p</th></tr>\n");
    for t in &stats.tests {
        match &t.result {
            Some(r) => {
                let _ = writeln!(
                    h,
                    "<tr><td>{}</td><td>{}</td><td>{}</td><td>{:.3}</td><td>{}</td><td>{:.3e}</td></tr>",
                    t.metric.key(),
                    t.factor.key(),
                    r.groups.len(),
                    r.h,
                    r.df,
                    r.p
                );
            }
            None => {
                let _ = writeln!(
                    h,
                    "<tr><td>{}</td><td>{}</td><td colspan=\"4\">skipped: {}</td></tr>",
                    t.metric.key(),
                    t.factor.key(),
                    esc(t.skipped.as_deref().unwrap_or(""))
                );
            }
        }
    }
    h.push_str("</table>\n<h2>Confusion matrix</h2>\n<img src=\"confusion.svg\" alt=\"confusion matrix\">\n");
    h.push_str("<h2>Distributions</h2>\n");
    for f in files.iter().filter(|f| f.starts_with("boxplot_")) {
        let _ = writeln!(h, "<p><img src=\"{0}\" alt=\"{0}\"></p>", esc(f));
    }
    let gt_ties = labels.values().filter(|l| l.resolution != crate::analysis::LabelResolution::Majority).count();
    let _ = writeln!(
        h,
        "<p>Ground truth: majority vote of per-method classes; {gt_ties} of {} images resolved by tie-break (see labels.csv).</p>",
        labels.len()
    );
    h.push_str("<h2>Files</h2>\n<ul>\n");
    for f in files {
        let _ = writeln!(h, "<li><a href=\"{0}\">{0}</a></li>", esc(f));
    }
    h.push_str("</ul>\n</body></html>\n");
    h
}

fn chroma_fallback_images(records: &[EvalRecord]) -> Vec<String> {
    let ids: std::collections::BTreeSet<&str> = records
        .iter()
        .filter(|r| r.ref_mask == Some(MaskSource::ChromaFallback))
        .map(|r| r.image_id.as_str())
        .collect();
    ids.into_iter().map(str::to_string).collect()
}

/// Builds the bundle from in-memory records.
pub fn write_report(
    records: &[EvalRecord],
    config_hash: &str,
    ledger: Option<&RunLedger>,
    dir: &Path,
    correction: Correction,
) -> Result<ReportBundle> {
    if records.is_empty() {
        return Err(AnalysisError::NoRecords.into());
    }
    let labels = labels_from_records(records)?;
    let confusion = confusion_matrix(records, &labels)?;
    let tests = run_tests(records, &labels, correction);
    let stats = StatsReport {
        config_hash: config_hash.to_string(),
        records: records.len(),
        correction,
        interaction_construction: "kruskal-wallis over method x lighting composite cells",
        chroma_fallback_images: chroma_fallback_images(records),
        tests,
    };

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for f in [Factor::Method, Factor::Class, Factor::Lighting, Factor::Recolor, Factor::MethodLighting] {
        files.push((format!("summary_by_{}.csv", f.key()), summary_csv(config_hash, records, &labels, f)?));
    }
    files.push(("labels.csv".into(), labels_csv(config_hash, &labels)?));
    files.push(("confusion.csv".into(), confusion_csv(config_hash, &confusion)?));
    files.push(("confusion.svg".into(), confusion_svg(config_hash, &confusion).into_bytes()));
    for metric in Metric::ALL {
        for f in [Factor::Method, Factor::Class, Factor::Lighting] {
            let table = summary_table(records, &labels, f, metric);
            let title = format!("{} by {}", metric.label(), f.title());
            files.push((
                format!("boxplot_{}_by_{}.svg", metric.key(), f.key()),
                boxplot_svg(config_hash, &title, metric.label(), &table).into_bytes(),
            ));
        }
    }
    for t in &stats.tests {
        if let Some(r) = &t.result {
            files.push((format!("dunn_{}_by_{}.csv", t.metric.key(), t.factor.key()), dunn_csv(config_hash, r)?));
        }
    }
    let mut stats_json = serde_json::to_vec_pretty(&stats).map_err(|e| Error::Internal(e.to_string()))?;
    stats_json.push(b'\n');
    files.push(("stats.json".into(), stats_json));
    let names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    files.push((
        "index.html".into(),
        index_html(config_hash, records, &labels, &stats, ledger, &names).into_bytes(),
    ));

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        paths.push(p);
    }
    Ok(ReportBundle {
        dir: dir.to_path_buf(),
        files: paths,
        confusion,
        labels,
        stats,
    })
}

/// Reads `records.csv` (and optionally `ledger.json`) and writes the bundle.
pub fn report(
    records_path: &Path,
    ledger_path: Option<&Path>,
    dir: &Path,
    correction: Correction,
) -> Result<ReportBundle> {
    let (records, hash) = read_records(records_path)?;
    let ledger = match ledger_path {
        Some(p) if p.is_file() => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(serde_json::from_str::<RunLedger>(&text).map_err(|e| Error::format(p.display().to_string(), e))?)
        }
        _ => None,
    };
    let hash = hash
        .or_else(|| ledger.as_ref().map(|l| l.config_hash.clone()))
        .unwrap_or_else(|| "unknown".into());
    write_report(&records, &hash, ledger.as_ref(), dir, correction)
}
