//! Deterministic Monte Carlo over disorder realizations.
//!
//! Realization `i` uses the seed `realization_seed(master_seed, i)` and
//! nothing else from its environment; results are merged in index order, so
//! an [`EnsembleResult`] depends only on its [`RunConfig`].

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::realization_seed;
use crate::stats::extreme::{block_maxima, BlockMaximaSeries};
use crate::stats::histogram::{BinSpec, Histogram};
use crate::stats::threshold::{count_exceedances, detect_events, threshold_of_values, EventSet, ThresholdResult};
use crate::walk::{evolve_into, PhaseMask, SpaceTimeRecord, WalkerState};

pub const DEFAULT_BINS: usize = 200;
/// Upper edge of the default raw-P histogram in units of the mean `1/N`.
pub const DEFAULT_HIST_MAX_OVER_MEAN: f64 = 40.0;
/// Upper edge of the default `P / p_th` histogram.
pub const DEFAULT_SCALED_HIST_MAX: f64 = 10.0;
pub const FIXED_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsRule {
    Fixed(usize),
    /// `T = 10 N`.
    TenTimesSites,
}

impl StepsRule {
    pub fn steps(&self, sites: usize) -> usize {
        match *self {
            StepsRule::Fixed(t) => t,
            StepsRule::TenTimesSites => 10 * sites,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub histogram: bool,
    pub events: bool,
    pub block_maxima: bool,
    /// Realization indices whose full records are kept.
    pub record_dump: Vec<usize>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            histogram: true,
            events: false,
            block_maxima: true,
            record_dump: Vec::new(),
        }
    }
}

impl Outputs {
    pub fn summaries_only() -> Self {
        Self {
            histogram: false,
            events: false,
            block_maxima: false,
            record_dump: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sites: usize,
    pub steps: StepsRule,
    pub disorder: f64,
    pub realizations: usize,
    pub master_seed: u64,
    pub multiplier: f64,
    /// Further multipliers counted alongside `multiplier`.
    pub extra_multipliers: Vec<f64>,
    pub top_fraction: f64,
    pub outputs: Outputs,
    /// Raw-P histogram bins; `None` means `DEFAULT_BINS` over
    /// `[0, DEFAULT_HIST_MAX_OVER_MEAN / N)`.
    pub histogram_bins: Option<BinSpec>,
    /// `P / p_th` histogram bins; `None` means `DEFAULT_BINS` over
    /// `[0, DEFAULT_SCALED_HIST_MAX)`.
    pub scaled_histogram_bins: Option<BinSpec>,
}

impl RunConfig {
    pub fn new(sites: usize, disorder: f64, realizations: usize, master_seed: u64) -> Self {
        Self {
            sites,
            steps: StepsRule::Fixed(FIXED_STEPS),
            disorder,
            realizations,
            master_seed,
            multiplier: 2.0,
            extra_multipliers: Vec::new(),
            top_fraction: 1.0 / 3.0,
            outputs: Outputs::default(),
            histogram_bins: None,
            scaled_histogram_bins: None,
        }
    }

    pub fn with_steps(mut self, steps: StepsRule) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_outputs(mut self, outputs: Outputs) -> Self {
        self.outputs = outputs;
        self
    }

    pub fn step_count(&self) -> usize {
        self.steps.steps(self.sites)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(invalid("sites", format!("N must be >= 2, got {}", self.sites)));
        }
        if self.step_count() < 1 {
            return Err(invalid("steps", "T must be >= 1"));
        }
        if self.realizations < 1 {
            return Err(invalid("realizations", "R must be >= 1"));
        }
        if !(self.disorder >= 0.0) || !self.disorder.is_finite() {
            return Err(invalid("disorder", format!("W must be >= 0, got {}", self.disorder)));
        }
        for &m in std::iter::once(&self.multiplier).chain(&self.extra_multipliers) {
            if !(m >= 1.0) || !m.is_finite() {
                return Err(invalid("multiplier", format!("m must be >= 1, got {m}")));
            }
        }
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            return Err(invalid(
                "top-fraction",
                format!("must lie in (0, 1), got {}", self.top_fraction),
            ));
        }
        if let Some(&i) = self.outputs.record_dump.iter().find(|&&i| i >= self.realizations) {
            return Err(invalid(
                "dump-records",
                format!("index {i} outside 0..{}", self.realizations),
            ));
        }
        self.raw_bins().edges()?;
        self.scaled_bins().edges()?;
        Ok(())
    }

    pub fn raw_bins(&self) -> BinSpec {
        self.histogram_bins.clone().unwrap_or(BinSpec::Uniform {
            bins: DEFAULT_BINS,
            lo: 0.0,
            hi: DEFAULT_HIST_MAX_OVER_MEAN / self.sites as f64,
        })
    }

    pub fn scaled_bins(&self) -> BinSpec {
        self.scaled_histogram_bins.clone().unwrap_or(BinSpec::Uniform {
            bins: DEFAULT_BINS,
            lo: 0.0,
            hi: DEFAULT_SCALED_HIST_MAX,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub multiplier: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationSummary {
    pub index: usize,
    pub seed: u64,
    pub p_th: f64,
    pub event_count: usize,
    pub event_fraction: f64,
    pub cluster_count: usize,
    /// Counts for `extra_multipliers`, in order.
    pub extra_counts: Vec<Exceedance>,
    pub max_p: f64,
    pub peak_t: usize,
    pub peak_n: usize,
}

/// Raw sums of `P - 1/N` over all cells, for pooled moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMoments {
    pub count: u64,
    pub shift: f64,
    pub sum1: f64,
    pub sum2: f64,
    pub sum3: f64,
}

impl CellMoments {
    fn of(values: &[f64], shift: f64) -> Self {
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for &p in values {
            let d = p - shift;
            s1 += d;
            s2 += d * d;
            s3 += d * d * d;
        }
        Self {
            count: values.len() as u64,
            shift,
            sum1: s1,
            sum2: s2,
            sum3: s3,
        }
    }

    fn merge(&mut self, other: &CellMoments) {
        if self.count == 0 {
            self.shift = other.shift;
        }
        self.count += other.count;
        self.sum1 += other.sum1;
        self.sum2 += other.sum2;
        self.sum3 += other.sum3;
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.sum1 / self.count as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.count as f64;
        let m1 = self.sum1 / n;
        self.sum2 / n - m1 * m1
    }

    pub fn skewness(&self) -> f64 {
        let n = self.count as f64;
        let m1 = self.sum1 / n;
        let m2 = self.sum2 / n - m1 * m1;
        let m3 = self.sum3 / n - 3.0 * m1 * (self.sum2 / n) + 2.0 * m1 * m1 * m1;
        m3 / m2.powf(1.5)
    }
}

/// Everything one realization contributes.
#[derive(Debug, Clone)]
pub struct RealizationOutput {
    pub summary: RealizationSummary,
    pub moments: CellMoments,
    pub histogram: Option<Histogram>,
    pub scaled_histogram: Option<Histogram>,
    pub block_maxima: Option<BlockMaximaSeries>,
    pub events: Option<EventSet>,
    pub record: Option<SpaceTimeRecord>,
}

/// Reusable buffers of one worker.
#[derive(Default)]
pub struct Workspace {
    record: Vec<f64>,
    select: Vec<f64>,
}

pub fn run_realization(config: &RunConfig, index: usize) -> Result<RealizationOutput> {
    run_realization_in(config, index, &mut Workspace::default())
}

pub fn run_realization_in(config: &RunConfig, index: usize, ws: &mut Workspace) -> Result<RealizationOutput> {
    if index >= config.realizations {
        return Err(invalid(
            "index",
            format!("realization {index} outside 0..{}", config.realizations),
        ));
    }
    let sites = config.sites;
    let steps = config.step_count();
    let seed = realization_seed(config.master_seed, index as u64);
    let mask = PhaseMask::sample(sites, config.disorder, seed)?;
    let mut state = WalkerState::new_uniform(sites)?;
    let record = evolve_into(&mut state, &mask, steps, std::mem::take(&mut ws.record), |_, _| {})?;
    let cells = record.values();
    let threshold: ThresholdResult = threshold_of_values(cells, config.top_fraction, &mut ws.select)?;
    let events = detect_events(&record, &threshold, config.multiplier)?;
    let extra_counts = config
        .extra_multipliers
        .iter()
        .map(|&m| Exceedance {
            multiplier: m,
            count: count_exceedances(cells, m * threshold.p_th),
        })
        .collect();
    let (peak, max_p) = cells
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let summary = RealizationSummary {
        index,
        seed,
        p_th: threshold.p_th,
        event_count: events.len(),
        event_fraction: events.fraction(),
        cluster_count: events.cluster_count(),
        extra_counts,
        max_p,
        peak_t: peak / sites + 1,
        peak_n: peak % sites,
    };
    let moments = CellMoments::of(cells, 1.0 / sites as f64);
    let (histogram, scaled_histogram) = if config.outputs.histogram {
        let mut raw = Histogram::new(&config.raw_bins())?;
        raw.extend_from_slice(cells);
        let mut scaled = Histogram::new(&config.scaled_bins())?;
        scaled.extend_scaled(cells, 1.0 / threshold.p_th);
        (Some(raw), Some(scaled))
    } else {
        (None, None)
    };
    let block_maxima = config.outputs.block_maxima.then(|| block_maxima(&record));
    let events = config.outputs.events.then_some(events);
    let record = if config.outputs.record_dump.contains(&index) {
        Some(record)
    } else {
        ws.record = record.into_values();
        None
    };
    Ok(RealizationOutput {
        summary,
        moments,
        histogram,
        scaled_histogram,
        block_maxima,
        events,
        record,
    })
}

/// Execution knobs that never change results.
#[derive(Clone, Copy, Default)]
pub struct Execution<'a> {
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

impl<'a> Execution<'a> {
    pub fn workers(workers: usize) -> Self {
        Self {
            workers: Some(workers),
            progress: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config: RunConfig,
    pub steps: usize,
    pub summaries: Vec<RealizationSummary>,
    pub moments: CellMoments,
    pub histogram: Option<Histogram>,
    pub scaled_histogram: Option<Histogram>,
    pub block_maxima: Option<BlockMaximaSeries>,
    pub events: Vec<EventSet>,
    pub records: Vec<(usize, Vec<f64>)>,
    pub mean_event_fraction: f64,
    /// Standard error across realizations (sample standard deviation over
    /// `sqrt(R)`); zero when `R = 1`.
    pub event_fraction_stderr: f64,
    pub mean_event_count: f64,
    pub mean_cluster_count: f64,
    pub mean_p_th: f64,
    /// Mean fraction for each of `extra_multipliers`.
    pub extra_fractions: Vec<(f64, f64)>,
}

impl EnsembleResult {
    pub fn skewness(&self) -> f64 {
        self.moments.skewness()
    }
}

pub fn run_ensemble(config: &RunConfig, exec: Execution<'_>) -> Result<EnsembleResult> {
    config.validate()?;
    let total = config.realizations;
    let done = AtomicUsize::new(0);
    let work = || -> Result<Vec<RealizationOutput>> {
        (0..total)
            .into_par_iter()
            .map_init(Workspace::default, |ws, i| {
                let out = run_realization_in(config, i, ws).map_err(|e| Error::Realization {
                    index: i,
                    source: Box::new(e),
                });
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(cb) = exec.progress {
                    cb(finished, total);
                }
                out
            })
            .collect()
    };
    let outputs = match exec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    merge(config, outputs)
}

fn merge(config: &RunConfig, outputs: Vec<RealizationOutput>) -> Result<EnsembleResult> {
    let r = outputs.len() as f64;
    let mut moments = CellMoments::default();
    let mut histogram = config.outputs.histogram.then(|| Histogram::new(&config.raw_bins())).transpose()?;
    let mut scaled = config.outputs.histogram.then(|| Histogram::new(&config.scaled_bins())).transpose()?;
    let mut maxima = config.outputs.block_maxima.then(BlockMaximaSeries::default);
    let mut events = Vec::new();
    let mut records = Vec::new();
    let mut summaries = Vec::with_capacity(outputs.len());
    for out in outputs {
        moments.merge(&out.moments);
        if let (Some(acc), Some(h)) = (histogram.as_mut(), out.histogram.as_ref()) {
            acc.merge(h)?;
        }
        if let (Some(acc), Some(h)) = (scaled.as_mut(), out.scaled_histogram.as_ref()) {
            acc.merge(h)?;
        }
        if let (Some(acc), Some(bm)) = (maxima.as_mut(), out.block_maxima.as_ref()) {
            acc.append(bm);
        }
        events.extend(out.events);
        if let Some(rec) = out.record {
            records.push((out.summary.index, rec.into_values()));
        }
        summaries.push(out.summary);
    }
    let fractions: Vec<f64> = summaries.iter().map(|s| s.event_fraction).collect();
    let mean_event_fraction = fractions.iter().sum::<f64>() / r;
    let event_fraction_stderr = if summaries.len() > 1 {
        let var = fractions.iter().map(|f| (f - mean_event_fraction).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        0.0
    };
    let cells = (config.sites * config.step_count()) as f64;
    let extra_fractions = config
        .extra_multipliers
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let f = summaries.iter().map(|s| s.extra_counts[k].count as f64 / cells).sum::<f64>() / r;
            (m, f)
        })
        .collect();
    Ok(EnsembleResult {
        config: config.clone(),
        steps: config.step_count(),
        mean_event_fraction,
        event_fraction_stderr,
        mean_event_count: summaries.iter().map(|s| s.event_count as f64).sum::<f64>() / r,
        mean_cluster_count: summaries.iter().map(|s| s.cluster_count as f64).sum::<f64>() / r,
        mean_p_th: summaries.iter().map(|s| s.p_th).sum::<f64>() / r,
        extra_fractions,
        summaries,
        moments,
        histogram,
        scaled_histogram: scaled,
        block_maxima: maxima,
        events,
        records,
    })
}
