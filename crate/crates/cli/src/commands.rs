use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use roguewalk::ensemble::{run_ensemble, run_realization, Execution, RealizationSummary};
use roguewalk::io::{self, Assumptions, PthRecord, RunManifest};
use roguewalk::selfcheck;
use roguewalk::stats::extreme::{
    compare_families, fit_gumbel_with, BlockMaximaSeries, FamilyComparison, GumbelFit, GumbelMethod,
    LeastSquaresOptions,
};
use roguewalk::stats::histogram::{BinSpec, Histogram};
use roguewalk::stats::threshold::ThresholdResult;
use roguewalk::sweep::{
    analyze_sizes, estimate_wc, estimate_wmax, sweep_disorder, sweep_sizes, DisorderCurve, SweepResult, WcEntry,
    WmaxEstimate,
};

use crate::settings::{Mode, Settings};

struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

fn manifest(command: &str, settings: &Settings, epsilon: Option<f64>) -> Result<RunManifest> {
    let config = serde_json::to_value(settings)?;
    Ok(RunManifest::new(
        command,
        config,
        Assumptions::new(settings.multiplier, settings.top_fraction, epsilon),
    ))
}

fn finish(out: &mut Output, mut m: RunManifest) -> Result<RunManifest> {
    let path = out.path("manifest.json");
    m.outputs = out.written.clone();
    io::write_json(&path, &m)?;
    Ok(m)
}

fn progress(label: &'static str) -> impl Fn(usize, usize) + Sync {
    move |done, total| {
        if total >= 10 && done % (total / 10) == 0 || done == total {
            eprintln!("{label}: {done}/{total} realizations");
        }
    }
}

#[derive(Serialize)]
struct EvolveSummary<'a> {
    manifest: &'a RunManifest,
    steps: usize,
    mask_seed: u64,
    threshold: ThresholdResult,
    #[serde(flatten)]
    summary: &'a RealizationSummary,
    skewness: f64,
}

pub fn evolve(settings: &Settings) -> Result<()> {
    let cfg = settings.run_config(Mode::Evolve);
    let run = run_realization(&cfg, 0)?;
    let record = run.record.expect("record requested");
    let events = run.events.expect("events requested");
    let maxima = run.block_maxima.expect("block maxima requested");
    let mut out = Output::create(&settings.out_dir)?;
    io::write_record_csv(&out.path("record.csv"), &record)?;
    io::write_events_csv(&out.path("events.csv"), &events)?;
    io::write_block_maxima_csv(&out.path("block_maxima.csv"), &maxima, None)?;
    let mut hist = Histogram::new(&BinSpec::up_to_max(settings.bins, record.values())?)?;
    hist.extend_from_slice(record.values());
    io::write_histogram_csv(&out.path("histogram.csv"), &hist)?;

    let mut m = manifest("evolve", settings, None)?;
    m.p_th = PthRecord::Inline(vec![run.summary.p_th]);
    let threshold = ThresholdResult {
        p_th: run.summary.p_th,
        top_fraction: cfg.top_fraction,
        cells_used: record.values().len(),
        top_count: roguewalk::stats::threshold::top_count(record.values().len(), cfg.top_fraction),
    };
    let doc = EvolveSummary {
        manifest: &m,
        steps: record.steps(),
        mask_seed: run.summary.seed,
        threshold,
        summary: &run.summary,
        skewness: run.moments.skewness(),
    };
    io::write_json(&out.path("summary.json"), &doc)?;
    finish(&mut out, m)?;
    eprintln!(
        "evolve: N = {}, T = {}, p_th = {:.6e}, {} events",
        record.sites(),
        record.steps(),
        run.summary.p_th,
        run.summary.event_count
    );
    Ok(())
}

#[derive(Serialize)]
struct EnsembleSummary<'a> {
    manifest: &'a RunManifest,
    sites: usize,
    steps: usize,
    disorder: f64,
    realizations: usize,
    mean_event_fraction: f64,
    event_fraction_stderr: f64,
    mean_event_count: f64,
    mean_cluster_count: f64,
    mean_p_th: f64,
    extra_fractions: &'a [(f64, f64)],
    cell_mean: f64,
    cell_variance: f64,
    cell_skewness: f64,
}

pub fn ensemble(settings: &Settings) -> Result<()> {
    let cfg = settings.run_config(Mode::Ensemble);
    let report = progress("ensemble");
    let exec = Execution {
        workers: settings.workers,
        progress: Some(&report),
    };
    let res = run_ensemble(&cfg, exec)?;
    let mut out = Output::create(&settings.out_dir)?;
    if let Some(h) = &res.histogram {
        io::write_histogram_csv(&out.path("histogram.csv"), h)?;
    }
    if let Some(h) = &res.scaled_histogram {
        io::write_histogram_csv(&out.path("scaled_histogram.csv"), h)?;
    }
    if let Some(bm) = &res.block_maxima {
        io::write_block_maxima_csv(&out.path("block_maxima.csv"), bm, None)?;
    }
    io::write_summaries_csv(&out.path("summaries.csv"), &res.summaries)?;
    if settings.events {
        let sets: Vec<(usize, &_)> = res.events.iter().enumerate().collect();
        io::write_ensemble_events_csv(&out.path("events.csv"), &sets)?;
    }
    for (index, values) in &res.records {
        let record = roguewalk::walk::SpaceTimeRecord::from_values(cfg.sites, res.steps, values.clone())?;
        io::write_record_csv(&out.path(&format!("record_{index}.csv")), &record)?;
    }
    let mut m = manifest("ensemble", settings, None)?;
    m.p_th = PthRecord::File("summaries.csv".into());
    let doc = EnsembleSummary {
        manifest: &m,
        sites: cfg.sites,
        steps: res.steps,
        disorder: cfg.disorder,
        realizations: cfg.realizations,
        mean_event_fraction: res.mean_event_fraction,
        event_fraction_stderr: res.event_fraction_stderr,
        mean_event_count: res.mean_event_count,
        mean_cluster_count: res.mean_cluster_count,
        mean_p_th: res.mean_p_th,
        extra_fractions: &res.extra_fractions,
        cell_mean: res.moments.mean(),
        cell_variance: res.moments.variance(),
        cell_skewness: res.moments.skewness(),
    };
    io::write_json(&out.path("ensemble.json"), &doc)?;
    finish(&mut out, m)?;
    eprintln!(
        "ensemble: event fraction {:.4e} +- {:.1e} over {} realizations",
        res.mean_event_fraction, res.event_fraction_stderr, cfg.realizations
    );
    Ok(())
}

/// Estimates for one disorder curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAnalysis {
    pub curve: DisorderCurve,
    pub w_max: Option<WmaxEstimate>,
    pub w_c: Vec<WcEntry>,
    pub notices: Vec<String>,
}

fn analyze_curve(curve: DisorderCurve, epsilon: f64, levels: &[f64]) -> CurveAnalysis {
    let mut notices = Vec::new();
    let w_max = estimate_wmax(&curve)
        .map_err(|e| notices.push(format!("W_max not estimated: {e}")))
        .ok();
    let w_c = levels
        .iter()
        .map(|&m| WcEntry {
            multiplier: m,
            estimate: estimate_wc(&curve, epsilon, m)
                .map_err(|e| notices.push(format!("W_c(m = {m}) not estimated: {e}")))
                .ok(),
        })
        .collect();
    CurveAnalysis {
        curve,
        w_max,
        w_c,
        notices,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepBody {
    Sizes(SweepResult),
    Single(CurveAnalysis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub body: SweepBody,
}

pub fn sweep(settings: &Settings) -> Result<()> {
    let sc = settings.sweep_config();
    let exec = Execution {
        workers: settings.workers,
        progress: None,
    };
    let (body, curves) = if settings.sizes.is_some() {
        let res = sweep_sizes(&sc, exec)?;
        let curves: Vec<DisorderCurve> = res.sizes.iter().map(|s| s.curve.clone()).collect();
        (SweepBody::Sizes(res), curves)
    } else {
        let mut template = settings.run_config(Mode::Sweep);
        template.outputs = roguewalk::ensemble::Outputs::summaries_only();
        let extra: Vec<f64> = sc.wc_levels.iter().copied().filter(|&m| m != sc.multiplier).collect();
        let curve = sweep_disorder(&template, &sc.w_grid, &extra, exec)?;
        let analysis = analyze_curve(curve.clone(), sc.epsilon, &sc.wc_levels);
        (SweepBody::Single(analysis), vec![curve])
    };
    let mut out = Output::create(&settings.out_dir)?;
    io::write_curve_csv(&out.path("curves.csv"), &curves)?;
    let m = manifest("sweep", settings, Some(settings.epsilon))?;
    let notices = match &body {
        SweepBody::Sizes(r) => r.notices.clone(),
        SweepBody::Single(a) => a.notices.clone(),
    };
    let path = out.path("sweep.json");
    let mut doc = SweepDocument { manifest: m, body };
    doc.manifest.outputs = out.written.clone();
    io::write_json(&path, &doc)?;
    finish(&mut out, doc.manifest)?;
    for c in &curves {
        let peak = c.points.iter().map(|p| p.fraction).fold(0.0, f64::max);
        eprintln!("sweep: N = {}, {} grid points, peak event fraction {peak:.3e}", c.sites, c.points.len());
    }
    for n in notices {
        eprintln!("sweep: {n}");
    }
    if let SweepBody::Sizes(r) = &doc.body {
        if let Some(f) = &r.w_max_fit {
            eprintln!("sweep: W_max ~ N^{:.3} (+- {:.3})", f.exponent, f.exponent_stderr);
        }
        if let Some(f) = r.w_c_fit(sc.multiplier) {
            eprintln!("sweep: W_c ~ N^{:.3} (+- {:.3})", f.exponent, f.exponent_stderr);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitMethod {
    Mle,
    Ls,
    Both,
}

#[derive(Serialize)]
struct GumbelDocument {
    manifest: RunManifest,
    source: String,
    samples: usize,
    mle: Option<GumbelFit>,
    least_squares: Option<GumbelFit>,
    families: Option<FamilyComparison>,
}

#[derive(Serialize)]
struct RefitDocument {
    manifest: RunManifest,
    source: String,
    #[serde(flatten)]
    body: SweepBody,
}

pub struct FitArgs<'a> {
    pub block_maxima: Option<&'a Path>,
    pub sweep: Option<&'a Path>,
    pub method: FitMethod,
}

pub fn fit(settings: &Settings, args: FitArgs<'_>) -> Result<()> {
    let mut out = Output::create(&settings.out_dir)?;
    match (args.block_maxima, args.sweep) {
        (Some(path), None) => {
            let series: BlockMaximaSeries = io::read_block_maxima_csv(path)?;
            let mle = matches!(args.method, FitMethod::Mle | FitMethod::Both)
                .then(|| fit_gumbel_with(&series, GumbelMethod::Mle))
                .transpose()?;
            let ls = matches!(args.method, FitMethod::Ls | FitMethod::Both)
                .then(|| fit_gumbel_with(&series, GumbelMethod::LogDensityLeastSquares(LeastSquaresOptions { bins: settings.bins })))
                .transpose()?;
            let families = compare_families(&series, 1.0)?;
            let doc = GumbelDocument {
                manifest: manifest("fit", settings, None)?,
                source: path.display().to_string(),
                samples: series.len(),
                mle,
                least_squares: ls,
                families: Some(families),
            };
            let path = out.path("fit.json");
            io::write_json(&path, &doc)?;
            if let Some(f) = &doc.least_squares {
                eprintln!("fit: least squares a = {:.3}, b = {:.3}", f.a, f.b);
            }
            if let Some(f) = &doc.mle {
                eprintln!("fit: MLE a = {:.3}, b = {:.3}", f.a, f.b);
            }
            if let Some(c) = &doc.families {
                eprintln!("fit: best family {:?}", c.best);
            }
            finish(&mut out, doc.manifest)?;
        }
        (None, Some(path)) => {
            let stored: SweepDocument = io::read_json(path)?;
            let body = match stored.body {
                SweepBody::Sizes(r) => {
                    let mut cfg = r.config.clone();
                    cfg.epsilon = settings.epsilon;
                    let curves = r.sizes.into_iter().map(|s| s.curve).collect();
                    SweepBody::Sizes(analyze_sizes(cfg, curves)?)
                }
                SweepBody::Single(a) => {
                    let levels: Vec<f64> = a.w_c.iter().map(|w| w.multiplier).collect();
                    SweepBody::Single(analyze_curve(a.curve, settings.epsilon, &levels))
                }
            };
            let doc = RefitDocument {
                manifest: manifest("fit", settings, Some(settings.epsilon))?,
                source: path.display().to_string(),
                body,
            };
            let path = out.path("fit.json");
            io::write_json(&path, &doc)?;
            finish(&mut out, doc.manifest)?;
        }
        _ => bail!("fit needs exactly one of --block-maxima or --sweep"),
    }
    Ok(())
}

/// Returns whether every check passed.
pub fn selfcheck(out_dir: Option<&Path>) -> Result<bool> {
    let checks = selfcheck::run_all();
    for c in &checks {
        println!("{} {:28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        io::write_json(&dir.join("selfcheck.json"), &checks)?;
    }
    Ok(checks.iter().all(|c| c.passed))
}
