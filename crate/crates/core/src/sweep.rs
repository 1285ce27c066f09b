//! Disorder and system-size sweeps, and the `W_max` / `W_c` estimators.

use serde::{Deserialize, Serialize};

use crate::ensemble::{run_ensemble, Execution, Outputs, RunConfig, StepsRule};
use crate::error::{invalid, Error, Result};
use crate::stats::scaling::{fit_power_law, PowerLawFit};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_GRID_POINTS: usize = 20;
pub const DEFAULT_WC_LEVELS: [f64; 3] = [2.0, 2.5, 3.0];

/// `points` values log-spaced over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || !hi.is_finite() {
        return Err(invalid("w-grid", format!("need 0 < lo < hi, got {lo}:{hi}")));
    }
    match points {
        0 => Err(invalid("w-grid", "need at least one point")),
        1 => Ok(vec![lo]),
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            Ok((0..points)
                .map(|i| match i {
                    0 => lo,
                    i if i == points - 1 => hi,
                    i => (a + (b - a) * i as f64 / (points - 1) as f64).exp(),
                })
                .collect())
        }
    }
}

pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 1.0, DEFAULT_GRID_POINTS).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub w: f64,
    /// Mean event fraction at the primary multiplier.
    pub fraction: f64,
    pub stderr: f64,
    pub mean_events: f64,
    pub mean_clusters: f64,
    /// `(multiplier, mean fraction)` for further threshold levels.
    pub levels: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderCurve {
    pub sites: usize,
    pub steps: usize,
    pub realizations: usize,
    pub multiplier: f64,
    pub points: Vec<CurvePoint>,
}

impl DisorderCurve {
    /// Curve from bare `(W, fraction)` pairs.
    pub fn from_pairs(sites: usize, pairs: &[(f64, f64)]) -> Self {
        Self {
            sites,
            steps: 0,
            realizations: 0,
            multiplier: 2.0,
            points: pairs
                .iter()
                .map(|&(w, fraction)| CurvePoint {
                    w,
                    fraction,
                    stderr: 0.0,
                    mean_events: 0.0,
                    mean_clusters: 0.0,
                    levels: vec![(2.0, fraction)],
                })
                .collect(),
        }
    }

    /// `(W, fraction)` at `multiplier`, which must be the primary multiplier
    /// or one of the recorded levels.
    pub fn series(&self, multiplier: f64) -> Result<Vec<(f64, f64)>> {
        self.points
            .iter()
            .map(|p| {
                if multiplier == self.multiplier {
                    return Ok((p.w, p.fraction));
                }
                p.levels
                    .iter()
                    .find(|(m, _)| *m == multiplier)
                    .map(|&(_, f)| (p.w, f))
                    .ok_or_else(|| invalid("multiplier", format!("curve has no level m = {multiplier}")))
            })
            .collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("w-grid", "grid is empty"));
    }
    if grid.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(invalid("w-grid", "disorder values must be finite and >= 0"));
    }
    if grid.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(invalid("w-grid", "grid must be strictly ascending"));
    }
    Ok(())
}

/// Event-fraction curve over `grid`. Every grid point reuses the template's
/// master seed, so the uniform draws behind the phases are common to all W.
pub fn sweep_disorder(template: &RunConfig, grid: &[f64], levels: &[f64], exec: Execution<'_>) -> Result<DisorderCurve> {
    check_grid(grid)?;
    let mut points = Vec::with_capacity(grid.len());
    for &w in grid {
        let cfg = RunConfig {
            disorder: w,
            extra_multipliers: levels.to_vec(),
            outputs: Outputs::summaries_only(),
            ..template.clone()
        };
        let res = run_ensemble(&cfg, exec)?;
        points.push(CurvePoint {
            w,
            fraction: res.mean_event_fraction,
            stderr: res.event_fraction_stderr,
            mean_events: res.mean_event_count,
            mean_clusters: res.mean_cluster_count,
            levels: res.extra_fractions,
        });
    }
    Ok(DisorderCurve {
        sites: template.sites,
        steps: template.step_count(),
        realizations: template.realizations,
        multiplier: template.multiplier,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WmaxEstimate {
    pub w_max: f64,
    /// Shift of the vertex when each of the three peak points moves by its
    /// standard error, added in quadrature.
    pub uncertainty: f64,
    pub peak_index: usize,
    pub peak_fraction: f64,
}

/// Parabola vertex through three points, `None` when not concave.
fn vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if !(curv < 0.0) {
        return None;
    }
    // y = y0 + d1 (x - x0) + curv (x - x0)(x - x1)
    Some(0.5 * (x[0] + x[1]) - d1 / (2.0 * curv))
}

/// Grid argmax refined by a parabola through the peak and its two
/// neighbours in `(ln W, fraction)`.
pub fn estimate_wmax(curve: &DisorderCurve) -> Result<WmaxEstimate> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(invalid("curve", format!("W_max needs at least 3 points, got {}", pts.len())));
    }
    let peak = pts
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.fraction > pts[best].fraction { i } else { best });
    if peak == 0 || peak == pts.len() - 1 {
        return Err(Error::EndpointMaximum { w: pts[peak].w });
    }
    if pts[peak - 1].w <= 0.0 {
        return Err(invalid("curve", "W_max interpolation needs W > 0 around the peak"));
    }
    let x = [pts[peak - 1].w.ln(), pts[peak].w.ln(), pts[peak + 1].w.ln()];
    let y = [pts[peak - 1].fraction, pts[peak].fraction, pts[peak + 1].fraction];
    let lx = vertex(x, y).unwrap_or(x[1]).clamp(x[0], x[2]);
    let mut var = 0.0;
    for k in 0..3 {
        let se = pts[peak - 1 + k].stderr;
        if se > 0.0 {
            let mut yp = y;
            yp[k] += se;
            let shifted = vertex(x, yp).unwrap_or(x[1]).clamp(x[0], x[2]);
            var += (shifted.exp() - lx.exp()).powi(2);
        }
    }
    Ok(WmaxEstimate {
        w_max: lx.exp(),
        uncertainty: var.sqrt(),
        peak_index: peak,
        peak_fraction: pts[peak].fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcEstimate {
    pub w_c: f64,
    pub epsilon: f64,
    pub multiplier: f64,
    /// Bracketing grid points.
    pub lower: f64,
    pub upper: f64,
}

/// First crossing of `epsilon` by the fraction at `multiplier`, linearly
/// interpolated against `ln W` between the bracketing grid points.
pub fn estimate_wc(curve: &DisorderCurve, epsilon: f64, multiplier: f64) -> Result<WcEstimate> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", format!("must be > 0, got {epsilon}")));
    }
    let series = curve.series(multiplier)?;
    let first = series
        .iter()
        .position(|&(_, f)| f >= epsilon)
        .ok_or(Error::ThresholdNotReached { epsilon })?;
    if first == 0 {
        return Err(invalid(
            "curve",
            format!("curve starts at or above epsilon = {epsilon}; extend the grid downwards"),
        ));
    }
    let (w0, f0) = series[first - 1];
    let (w1, f1) = series[first];
    if !(w0 > 0.0) {
        return Err(invalid("curve", "W_c interpolation needs W > 0"));
    }
    let s = (epsilon - f0) / (f1 - f0);
    let w_c = (w0.ln() + s * (w1.ln() - w0.ln())).exp();
    Ok(WcEstimate {
        w_c: w_c.clamp(w0, w1),
        epsilon,
        multiplier,
        lower: w0,
        upper: w1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub w_grid: Vec<f64>,
    pub realizations: usize,
    pub steps: StepsRule,
    pub master_seed: u64,
    pub multiplier: f64,
    pub top_fraction: f64,
    pub epsilon: f64,
    /// Multipliers for which `W_c` is estimated.
    pub wc_levels: Vec<f64>,
}

impl SweepConfig {
    pub fn new(sizes: Vec<usize>, realizations: usize, master_seed: u64) -> Self {
        Self {
            sizes,
            w_grid: default_grid(),
            realizations,
            steps: StepsRule::TenTimesSites,
            master_seed,
            multiplier: 2.0,
            top_fraction: 1.0 / 3.0,
            epsilon: DEFAULT_EPSILON,
            wc_levels: DEFAULT_WC_LEVELS.to_vec(),
        }
    }

    fn template(&self, sites: usize) -> RunConfig {
        RunConfig {
            steps: self.steps,
            multiplier: self.multiplier,
            top_fraction: self.top_fraction,
            outputs: Outputs::summaries_only(),
            ..RunConfig::new(sites, 0.0, self.realizations, self.master_seed)
        }
    }

    fn extra_levels(&self) -> Vec<f64> {
        self.wc_levels.iter().copied().filter(|&m| m != self.multiplier).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return Err(invalid(
                "sizes",
                format!("a size sweep needs at least 3 sizes, got {}", self.sizes.len()),
            ));
        }
        check_grid(&self.w_grid)?;
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        for &n in &self.sizes {
            let mut t = self.template(n);
            t.extra_multipliers = self.extra_levels();
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcEntry {
    pub multiplier: f64,
    pub estimate: Option<WcEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub sites: usize,
    pub steps: usize,
    pub curve: DisorderCurve,
    pub w_max: Option<WmaxEstimate>,
    pub w_c: Vec<WcEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    pub multiplier: f64,
    pub fit: Option<PowerLawFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub sizes: Vec<SizeResult>,
    /// `W_max(N)` power law; `None` when any size lacked an estimate.
    pub w_max_fit: Option<PowerLawFit>,
    /// `W_c(N)` power law per threshold level.
    pub w_c_fits: Vec<LevelFit>,
    pub notices: Vec<String>,
}

impl SweepResult {
    pub fn w_c_fit(&self, multiplier: f64) -> Option<&PowerLawFit> {
        self.w_c_fits
            .iter()
            .find(|l| l.multiplier == multiplier)
            .and_then(|l| l.fit.as_ref())
    }
}

/// Re-derive estimates and fits from stored curves.
pub fn analyze_sizes(config: SweepConfig, curves: Vec<DisorderCurve>) -> Result<SweepResult> {
    if curves.len() < 3 {
        return Err(invalid(
            "sizes",
            format!("a size sweep needs at least 3 sizes, got {}", curves.len()),
        ));
    }
    let mut notices = Vec::new();
    let mut sizes = Vec::with_capacity(curves.len());
    for curve in curves {
        let w_max = match estimate_wmax(&curve) {
            Ok(e) => Some(e),
            Err(e) => {
                notices.push(format!("N = {}: W_max not estimated: {e}", curve.sites));
                None
            }
        };
        let w_c = config
            .wc_levels
            .iter()
            .map(|&m| {
                let estimate = match estimate_wc(&curve, config.epsilon, m) {
                    Ok(e) => Some(e),
                    Err(e) => {
                        notices.push(format!("N = {}: W_c(m = {m}) not estimated: {e}", curve.sites));
                        None
                    }
                };
                WcEntry { multiplier: m, estimate }
            })
            .collect();
        sizes.push(SizeResult {
            sites: curve.sites,
            steps: curve.steps,
            curve,
            w_max,
            w_c,
        });
    }
    let w_max_points: Option<Vec<(f64, f64)>> =
        sizes.iter().map(|s| s.w_max.map(|e| (s.sites as f64, e.w_max))).collect();
    let w_max_fit = match w_max_points {
        Some(p) => Some(fit_power_law(&p)?),
        None => {
            notices.push("W_max scaling fit skipped: estimate missing for some size".into());
            None
        }
    };
    let w_c_fits = config
        .wc_levels
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let pts: Option<Vec<(f64, f64)>> = sizes
                .iter()
                .map(|s| s.w_c[k].estimate.map(|e| (s.sites as f64, e.w_c)))
                .collect();
            let fit = match pts {
                Some(p) => fit_power_law(&p).ok(),
                None => {
                    notices.push(format!("W_c(m = {m}) scaling fit skipped: estimate missing for some size"));
                    None
                }
            };
            LevelFit { multiplier: m, fit }
        })
        .collect();
    Ok(SweepResult {
        config,
        sizes,
        w_max_fit,
        w_c_fits,
        notices,
    })
}

/// One disorder sweep per size with `T` from the steps rule, then the
/// `W_max(N)` and `W_c(N)` power laws.
pub fn sweep_sizes(config: &SweepConfig, exec: Execution<'_>) -> Result<SweepResult> {
    config.validate()?;
    let levels = config.extra_levels();
    let curves = config
        .sizes
        .iter()
        .map(|&n| sweep_disorder(&config.template(n), &config.w_grid, &levels, exec))
        .collect::<Result<Vec<_>>>()?;
    analyze_sizes(config.clone(), curves)
}
