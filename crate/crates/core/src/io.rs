//! Plot-ready CSV and JSON files, and the run manifest written next to them.
//!
//! Column and key names below are part of the file contract. Floats are
//! written with the shortest decimal that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::RealizationSummary;
use crate::error::{Error, Result};
use crate::rng::RNG_ALGORITHM;
use crate::stats::extreme::BlockMaximaSeries;
use crate::stats::histogram::Histogram;
use crate::stats::threshold::EventSet;
use crate::sweep::DisorderCurve;
use crate::walk::SpaceTimeRecord;

pub const FORMAT_VERSION: u32 = 1;
pub const RECORD_HEADER: [&str; 3] = ["t", "n", "P"];
pub const HISTOGRAM_HEADER: [&str; 4] = ["bin_lo", "bin_hi", "count", "density"];
pub const EVENTS_HEADER: [&str; 5] = ["t", "n", "P", "p_th", "multiplier"];
pub const BLOCK_MAXIMA_HEADER: [&str; 3] = ["t", "realization", "P_max"];

/// Shortest round-trip decimal (`1e-7` style below 1e-5).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn format_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Writes through a temporary file in the destination directory and renames
/// it into place. On any error the temporary is deleted and `path` is left
/// untouched.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header).map_err(|e| io_err(path, e))?;
        for row in rows {
            out.write_record(&row).map_err(|e| io_err(path, e))?;
        }
        out.flush().map_err(|e| io_err(path, e))
    })
}

struct CsvRows {
    path: String,
    reader: csv::Reader<File>,
}

impl CsvRows {
    fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| io_err(path, e))?;
        let found = reader.headers().map_err(|e| io_err(path, e))?;
        if found.iter().ne(header.iter().copied()) {
            return Err(format_err(
                path,
                1,
                format!("expected header {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        Ok(Self {
            path: path.display().to_string(),
            reader,
        })
    }

    /// Visits each data row with its 1-based line number.
    fn each(mut self, mut f: impl FnMut(usize, &csv::StringRecord) -> Result<()>) -> Result<()> {
        let path = std::mem::take(&mut self.path);
        for (i, row) in self.reader.records().enumerate() {
            let row = row.map_err(|e| Error::Io {
                path: path.clone(),
                message: e.to_string(),
            })?;
            f(i + 2, &row)?;
        }
        Ok(())
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, row: &csv::StringRecord, col: usize) -> Result<T> {
    let raw = row.get(col).unwrap_or("");
    raw.parse()
        .map_err(|_| format_err(path, line, format!("column {} has unparsable value {raw:?}", col + 1)))
}

pub fn write_record_csv(path: &Path, record: &SpaceTimeRecord) -> Result<()> {
    let sites = record.sites();
    let rows = record.values().iter().enumerate().map(move |(i, &p)| {
        vec![(i / sites + 1).to_string(), (i % sites).to_string(), fmt_f64(p)]
    });
    write_csv(path, &RECORD_HEADER, rows)
}

/// Rows must be in `t`-major order with `t` starting at 1.
pub fn read_record_csv(path: &Path) -> Result<SpaceTimeRecord> {
    let mut values = Vec::new();
    let mut sites = 0usize;
    let mut expect = (1usize, 0usize);
    CsvRows::open(path, &RECORD_HEADER)?.each(|line, row| {
        let t: usize = field(path, line, row, 0)?;
        let n: usize = field(path, line, row, 1)?;
        if sites == 0 && t == 2 && n == 0 {
            sites = expect.1;
            expect = (2, 0);
        }
        if (t, n) != expect {
            return Err(format_err(path, line, format!("expected t={}, n={}, found t={t}, n={n}", expect.0, expect.1)));
        }
        values.push(field(path, line, row, 2)?);
        expect = if sites != 0 && n + 1 == sites { (t + 1, 0) } else { (t, n + 1) };
        Ok(())
    })?;
    if sites == 0 {
        sites = values.len();
    }
    if sites == 0 || values.len() % sites != 0 {
        return Err(format_err(path, 0, "record is empty or has a partial final row"));
    }
    SpaceTimeRecord::from_values(sites, values.len() / sites, values)
}

/// Underflow and overflow are the first and last rows, with edges at
/// `-inf` and `+inf` and zero density.
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let edges = hist.edges();
    let density = hist.density();
    let mut rows = Vec::with_capacity(hist.bins() + 2);
    rows.push(vec![fmt_f64(f64::NEG_INFINITY), fmt_f64(edges[0]), hist.underflow().to_string(), fmt_f64(0.0)]);
    for (i, (&c, &d)) in hist.counts().iter().zip(&density).enumerate() {
        rows.push(vec![fmt_f64(edges[i]), fmt_f64(edges[i + 1]), c.to_string(), fmt_f64(d)]);
    }
    rows.push(vec![fmt_f64(edges[hist.bins()]), fmt_f64(f64::INFINITY), hist.overflow().to_string(), fmt_f64(0.0)]);
    write_csv(path, &HISTOGRAM_HEADER, rows)
}

pub fn read_histogram_csv(path: &Path) -> Result<Histogram> {
    let mut edges = Vec::new();
    let mut counts = Vec::new();
    let (mut under, mut over) = (0u64, 0u64);
    CsvRows::open(path, &HISTOGRAM_HEADER)?.each(|line, row| {
        let lo: f64 = field(path, line, row, 0)?;
        let hi: f64 = field(path, line, row, 1)?;
        let count: u64 = field(path, line, row, 2)?;
        if lo == f64::NEG_INFINITY {
            under = count;
        } else if hi == f64::INFINITY {
            over = count;
        } else {
            if edges.is_empty() {
                edges.push(lo);
            } else if edges.last() != Some(&lo) {
                return Err(format_err(path, line, "bins are not contiguous"));
            }
            edges.push(hi);
            counts.push(count);
        }
        Ok(())
    })?;
    Histogram::from_parts(edges, counts, under, over)
}

fn event_row(set: &EventSet, prefix: Option<usize>) -> impl Iterator<Item = Vec<String>> + '_ {
    set.events.iter().map(move |e| {
        let mut row = Vec::with_capacity(6);
        if let Some(r) = prefix {
            row.push(r.to_string());
        }
        row.extend([
            e.t.to_string(),
            e.n.to_string(),
            fmt_f64(e.p),
            fmt_f64(set.p_th),
            fmt_f64(set.multiplier),
        ]);
        row
    })
}

pub fn write_events_csv(path: &Path, events: &EventSet) -> Result<()> {
    write_csv(path, &EVENTS_HEADER, event_row(events, None))
}

/// Ensemble variant with a leading `realization` column.
pub fn write_ensemble_events_csv(path: &Path, sets: &[(usize, &EventSet)]) -> Result<()> {
    let mut header = vec!["realization"];
    header.extend(EVENTS_HEADER);
    write_csv(path, &header, sets.iter().flat_map(|&(r, s)| event_row(s, Some(r))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub realization: Option<usize>,
    pub t: usize,
    pub n: usize,
    pub p: f64,
    pub p_th: f64,
    pub multiplier: f64,
}

/// Reads either events layout.
pub fn read_events_csv(path: &Path) -> Result<Vec<EventRow>> {
    let mut with_realization = vec!["realization"];
    with_realization.extend(EVENTS_HEADER);
    let (rows, off) = match CsvRows::open(path, &EVENTS_HEADER) {
        Ok(r) => (r, 0),
        Err(_) => (CsvRows::open(path, &with_realization)?, 1),
    };
    let mut out = Vec::new();
    rows.each(|line, row| {
        out.push(EventRow {
            realization: if off == 1 { Some(field(path, line, row, 0)?) } else { None },
            t: field(path, line, row, off)?,
            n: field(path, line, row, off + 1)?,
            p: field(path, line, row, off + 2)?,
            p_th: field(path, line, row, off + 3)?,
            multiplier: field(path, line, row, off + 4)?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// `realizations` labels each block of `steps_per_realization` values; when
/// `None` the blocks are numbered from 0.
pub fn write_block_maxima_csv(path: &Path, series: &BlockMaximaSeries, realizations: Option<&[usize]>) -> Result<()> {
    let steps = series.steps_per_realization.max(1);
    if let Some(labels) = realizations {
        if labels.len() != series.realizations() {
            return Err(crate::error::invalid(
                "realizations",
                format!("{} labels for {} realizations", labels.len(), series.realizations()),
            ));
        }
    }
    let rows = series.values.iter().enumerate().map(|(i, &p)| {
        let block = i / steps;
        let label = realizations.map_or(block, |l| l[block]);
        vec![(i % steps + 1).to_string(), label.to_string(), fmt_f64(p)]
    });
    write_csv(path, &BLOCK_MAXIMA_HEADER, rows)
}

/// Rows must be grouped by realization with `t` running `1..=T` in each.
pub fn read_block_maxima_csv(path: &Path) -> Result<BlockMaximaSeries> {
    let mut values = Vec::new();
    let mut steps = 0usize;
    let mut prev: Option<(usize, usize)> = None;
    CsvRows::open(path, &BLOCK_MAXIMA_HEADER)?.each(|line, row| {
        let t: usize = field(path, line, row, 0)?;
        let r: usize = field(path, line, row, 1)?;
        let ok = match prev {
            None => t == 1,
            Some((pt, pr)) if pr == r => t == pt + 1 && (steps == 0 || t <= steps),
            Some((pt, _)) => {
                if steps == 0 {
                    steps = pt;
                }
                t == 1 && pt == steps
            }
        };
        if !ok {
            return Err(format_err(path, line, format!("unexpected t={t} for realization {r}")));
        }
        prev = Some((t, r));
        values.push(field(path, line, row, 2)?);
        Ok(())
    })?;
    match prev {
        None => Err(format_err(path, 0, "no block maxima")),
        Some((t, _)) => {
            if steps == 0 {
                steps = t;
            }
            if t != steps {
                return Err(format_err(path, 0, "last realization is incomplete"));
            }
            Ok(BlockMaximaSeries::new(values, steps))
        }
    }
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "realization",
    "seed",
    "p_th",
    "event_count",
    "event_fraction",
    "cluster_count",
    "max_p",
    "peak_t",
    "peak_n",
    "exceedances",
];

/// `exceedances` holds `m:count` pairs separated by `;`.
pub fn write_summaries_csv(path: &Path, summaries: &[RealizationSummary]) -> Result<()> {
    let rows = summaries.iter().map(|s| {
        vec![
            s.index.to_string(),
            s.seed.to_string(),
            fmt_f64(s.p_th),
            s.event_count.to_string(),
            fmt_f64(s.event_fraction),
            s.cluster_count.to_string(),
            fmt_f64(s.max_p),
            s.peak_t.to_string(),
            s.peak_n.to_string(),
            s.extra_counts
                .iter()
                .map(|e| format!("{}:{}", fmt_f64(e.multiplier), e.count))
                .collect::<Vec<_>>()
                .join(";"),
        ]
    });
    write_csv(path, &SUMMARY_HEADER, rows)
}

/// One row per grid point. Extra threshold levels get a
/// `fraction_m<multiplier>` column each.
pub fn write_curve_csv(path: &Path, curves: &[DisorderCurve]) -> Result<()> {
    let levels: Vec<f64> = curves
        .first()
        .and_then(|c| c.points.first())
        .map(|p| p.levels.iter().map(|l| l.0).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = ["sites", "steps", "w", "multiplier", "fraction", "stderr", "mean_events", "mean_clusters"]
        .map(String::from)
        .to_vec();
    header.extend(levels.iter().map(|m| format!("fraction_m{}", fmt_f64(*m))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for c in curves {
        for p in &c.points {
            let mut row = vec![
                c.sites.to_string(),
                c.steps.to_string(),
                fmt_f64(p.w),
                fmt_f64(c.multiplier),
                fmt_f64(p.fraction),
                fmt_f64(p.stderr),
                fmt_f64(p.mean_events),
                fmt_f64(p.mean_clusters),
            ];
            for m in &levels {
                let v = p.levels.iter().find(|l| l.0 == *m).map_or(f64::NAN, |l| l.1);
                row.push(fmt_f64(v));
            }
            rows.push(row);
        }
    }
    write_csv(path, &header, rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.line(), e.to_string()))
}

/// Conventions a run depends on that are not parameters of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumptions {
    /// The initial state at `t = 0` is never part of a record.
    pub excludes_initial_state: bool,
    pub top_count_rule: String,
    pub event_rule: String,
    pub disorder_convention: String,
    pub seed_derivation: String,
    pub multiplier: f64,
    pub top_fraction: f64,
    pub epsilon: Option<f64>,
}

impl Assumptions {
    pub fn new(multiplier: f64, top_fraction: f64, epsilon: Option<f64>) -> Self {
        Self {
            excludes_initial_state: true,
            top_count_rule: "k = ceil(f * M), products within 1e-9 of an integer round to it".into(),
            event_rule: "P > m * p_th, strict, counted per cell".into(),
            disorder_convention: "phase = 2 pi nu, nu ~ U[-W, W] per coin component and site, up drawn first".into(),
            seed_derivation: "realization seed = splitmix64(master + (index + 1) * 0x9e3779b97f4a7c15)".into(),
            multiplier,
            top_fraction,
            epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub format_version: u32,
    pub rng: String,
    pub timestamp: String,
    pub command: String,
    /// Resolved settings, readable back as a config file.
    pub config: serde_json::Value,
    pub assumptions: Assumptions,
    /// Per-realization thresholds, inline or as a path to the summaries file.
    pub p_th: PthRecord,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PthRecord {
    Inline(Vec<f64>),
    File(String),
    None,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, assumptions: Assumptions) -> Self {
        Self {
            artifact: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            format_version: FORMAT_VERSION,
            rng: RNG_ALGORITHM.into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            command: command.into(),
            config,
            assumptions,
            p_th: PthRecord::None,
            outputs: Vec::new(),
        }
    }
}
