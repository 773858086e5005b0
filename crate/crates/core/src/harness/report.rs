//! Aggregation of metric CSVs into per-setting averages, plus SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{config_err, Error, Result};
use crate::metrics::sorted_sum;

/// Higher-is-better metric columns.
pub const POSITIVE: [&str; 6] = ["s_alpha", "f_beta_w", "f_beta", "e_phi_mean", "e_phi_max", "f_mean"];
/// Lower-is-better metric columns.
pub const NEGATIVE: [&str; 1] = ["mae"];

/// Columns that name the group a row belongs to, in order of preference.
pub const GROUP_KEYS: [&str; 2] = ["setting", "variant"];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub source: String,
    pub header: Vec<String>,
    /// Rows with their 1-based line numbers.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let header: Vec<String> = match lines.next() {
            Some((_, h)) => h.split(',').map(|s| s.trim().to_string()).collect(),
            None => return Err(Error::Parse { line: 1, msg: format!("{source}: empty CSV") }),
        };
        let rows = lines
            .map(|(i, l)| {
                let fields: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
                if fields.len() != header.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("{source}: {} fields, header has {}", fields.len(), header.len()),
                    });
                }
                Ok((i + 1, fields))
            })
            .collect::<Result<_>>()?;
        Ok(Self { source: source.to_string(), header, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn number(&self, line: usize, row: &[String], col: usize) -> Result<f64> {
        let raw = &row[col];
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("{}: column {} is not a number: {raw:?}", self.source, self.header[col]),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse { line, msg: format!("{}: non-finite {}", self.source, self.header[col]) });
        }
        Ok(v)
    }

    fn is_train_log(&self) -> bool {
        self.column("step").is_some() && self.column("loss").is_some()
    }
}

fn mean(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    Some(sorted_sum(&mut v) / n)
}

/// Mean of every positive and every negative metric cell, `(P, N)`.
pub fn positive_negative(cells: &[(&str, f64)]) -> (Option<f64>, Option<f64>) {
    let pick = |set: &[&str]| cells.iter().filter(|(k, _)| set.contains(k)).map(|&(_, v)| v).collect();
    (mean(pick(&POSITIVE)), mean(pick(&NEGATIVE)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub key: String,
    pub rows: usize,
    /// Column means in canonical metric order, for the metrics present.
    pub means: Vec<(String, f64)>,
    pub p: Option<f64>,
    pub n: Option<f64>,
}

/// One metric value of one row.
type Cell = (&'static str, f64);

/// Group metric rows by `setting` (or `variant`) and average them. Groups
/// come out sorted by key; the result does not depend on row order.
pub fn summarize(tables: &[Table]) -> Result<Vec<GroupSummary>> {
    let mut groups: BTreeMap<String, (usize, Vec<Cell>)> = BTreeMap::new();
    for t in tables.iter().filter(|t| !t.is_train_log()) {
        let key_col = GROUP_KEYS
            .iter()
            .find_map(|k| t.column(k))
            .ok_or_else(|| config_err!("{}: no setting or variant column", t.source))?;
        let metric_cols: Vec<(&'static str, usize)> = POSITIVE
            .iter()
            .chain(&NEGATIVE)
            .filter_map(|&m| t.column(m).map(|c| (m, c)))
            .collect();
        if metric_cols.is_empty() {
            return Err(config_err!("{}: no metric columns", t.source));
        }
        for (line, row) in &t.rows {
            let entry = groups.entry(row[key_col].clone()).or_default();
            entry.0 += 1;
            for &(m, c) in &metric_cols {
                entry.1.push((m, t.number(*line, row, c)?));
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|(key, (rows, cells))| {
            let means = POSITIVE
                .iter()
                .chain(&NEGATIVE)
                .filter_map(|&m| {
                    mean(cells.iter().filter(|(k, _)| *k == m).map(|&(_, v)| v).collect()).map(|v| (m.to_string(), v))
                })
                .collect();
            let (p, n) = positive_negative(&cells);
            GroupSummary { key, rows, means, p, n }
        })
        .collect())
}

pub fn summary_csv(groups: &[GroupSummary]) -> String {
    let metrics: Vec<&str> = POSITIVE
        .iter()
        .chain(&NEGATIVE)
        .copied()
        .filter(|m| groups.iter().any(|g| g.means.iter().any(|(k, _)| k == m)))
        .collect();
    let mut out = String::from("group,rows");
    for m in &metrics {
        write!(out, ",{m}").expect("writing to a String");
    }
    out.push_str(",P,N\n");
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    for g in groups {
        write!(out, "{},{}", g.key, g.rows).expect("writing to a String");
        for m in &metrics {
            let v = g.means.iter().find(|(k, _)| k == m).map(|&(_, v)| v);
            write!(out, ",{}", fmt(v)).expect("writing to a String");
        }
        writeln!(out, ",{},{}", fmt(g.p), fmt(g.n)).expect("writing to a String");
    }
    out
}

const W: f64 = 480.0;
const H: f64 = 300.0;
const PAD: f64 = 48.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        escape(title),
        H - PAD,
        W - PAD / 2.0,
        H - PAD,
        H - PAD
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Paired bars of P and N per group, each on its own `[0, max]` scale.
pub fn pn_bar_svg(groups: &[GroupSummary]) -> String {
    let mut out = svg_open("P (blue) and N (orange) per group");
    let n = groups.len().max(1) as f64;
    let slot = (W - 1.5 * PAD) / n;
    let plot_h = H - 2.0 * PAD;
    let pmax = groups.iter().filter_map(|g| g.p).fold(0.0, f64::max).max(1e-12);
    let nmax = groups.iter().filter_map(|g| g.n).fold(0.0, f64::max).max(1e-12);
    for (i, g) in groups.iter().enumerate() {
        let x = PAD + i as f64 * slot + slot * 0.1;
        let bw = slot * 0.35;
        for (j, (v, max, colour)) in [(g.p, pmax, "#4477aa"), (g.n, nmax, "#ee7733")].into_iter().enumerate() {
            let Some(v) = v else { continue };
            let h = plot_h * v / max;
            let bx = x + j as f64 * bw;
            writeln!(
                out,
                "<rect x=\"{bx:.1}\" y=\"{:.1}\" width=\"{bw:.1}\" height=\"{h:.1}\" fill=\"{colour}\"><title>{v:.4}</title></rect>",
                H - PAD - h
            )
            .expect("writing to a String");
        }
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            x + bw,
            H - PAD + 14.0,
            escape(&g.key)
        )
        .expect("writing to a String");
    }
    out.push_str("</svg>\n");
    out
}

/// Polyline of `(x, y)` points scaled to the plot area.
pub fn line_svg(title: &str, points: &[(f64, f64)]) -> String {
    let mut out = svg_open(title);
    if points.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let (x0, x1) = points.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = points.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let sx = (W - 1.5 * PAD) / (x1 - x0).max(1e-12);
    let sy = (H - 2.0 * PAD) / (y1 - y0).max(1e-12);
    let path: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.1},{:.1}", PAD + (x - x0) * sx, H - PAD - (y - y0) * sy))
        .collect();
    writeln!(out, "<polyline fill=\"none\" stroke=\"#4477aa\" points=\"{}\"/>", path.join(" ")).expect("writing to a String");
    writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y1:.4}</text>", PAD - 4.0, PAD + 4.0).expect("writing to a String");
    writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y0:.4}</text>", PAD - 4.0, H - PAD).expect("writing to a String");
    writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{x1}</text>", W - PAD / 2.0, H - PAD + 14.0).expect("writing to a String");
    out.push_str("</svg>\n");
    out
}

/// Last two path components, so plots do not depend on the output root.
fn short_label(path: &Path) -> String {
    let parts: Vec<_> = path.components().rev().take(2).collect();
    parts.iter().rev().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Read every input, write `summary.csv` and `pn.svg`, and a loss plot for
/// each training log. Returns the written paths.
pub fn report(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(config_err!("report needs at least one CSV input"));
    }
    let tables = inputs.iter().map(|p| Table::load(p)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, text: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if tables.iter().any(|t| !t.is_train_log()) {
        let groups = summarize(&tables)?;
        write("summary.csv".into(), summary_csv(&groups))?;
        write("pn.svg".into(), pn_bar_svg(&groups))?;
    }
    for (k, t) in tables.iter().enumerate().filter(|(_, t)| t.is_train_log()) {
        let (sc, lc) = (t.column("step").expect("train log"), t.column("loss").expect("train log"));
        let points = t
            .rows
            .iter()
            .map(|(line, row)| Ok((t.number(*line, row, sc)?, t.number(*line, row, lc)?)))
            .collect::<Result<Vec<_>>>()?;
        write(format!("loss_{k}.svg"), line_svg(&format!("training loss: {}", short_label(&inputs[k])), &points))?;
    }
    Ok(written)
}
