//! Per-step maxima and extreme-value fits.
//!
//! Gumbel density in the `(a, b)` form used for plotting is
//! `y(x) ∝ exp(-a x - b exp(-a x))`, i.e. location `mu = ln(b) / a` and scale
//! `beta = 1 / a`.

use serde::{Deserialize, Serialize};

use super::histogram::{BinSpec, Histogram};
use super::moments::neumaier_sum;
use crate::error::{invalid, Error, Result};
use crate::walk::SpaceTimeRecord;

pub const MIN_FIT_SAMPLES: usize = 100;
pub const DEFAULT_FIT_BINS: usize = 200;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MLE_MAX_ITER: usize = 200;

/// `max_n P_n(t)` for every step of every realization, realization-major.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockMaximaSeries {
    pub values: Vec<f64>,
    /// Steps contributed by each realization; 0 when unknown.
    pub steps_per_realization: usize,
}

impl BlockMaximaSeries {
    pub fn new(values: Vec<f64>, steps_per_realization: usize) -> Self {
        Self {
            values,
            steps_per_realization,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn realizations(&self) -> usize {
        if self.steps_per_realization == 0 {
            0
        } else {
            self.values.len() / self.steps_per_realization
        }
    }

    /// Append another realization's maxima.
    pub fn append(&mut self, other: &BlockMaximaSeries) {
        if self.values.is_empty() {
            self.steps_per_realization = other.steps_per_realization;
        } else if self.steps_per_realization != other.steps_per_realization {
            self.steps_per_realization = 0;
        }
        self.values.extend_from_slice(&other.values);
    }
}

pub fn block_maxima(record: &SpaceTimeRecord) -> BlockMaximaSeries {
    let values = record
        .rows()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    BlockMaximaSeries::new(values, record.steps())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresOptions {
    /// Equal-width bins spanning the sample range.
    pub bins: usize,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_FIT_BINS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GumbelMethod {
    #[default]
    Mle,
    LogDensityLeastSquares(LeastSquaresOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GumbelFit {
    pub method: GumbelMethod,
    pub mu: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    /// Asymptotic standard errors of `mu` and `beta` under the Gumbel model.
    pub mu_stderr: f64,
    pub beta_stderr: f64,
    pub log_likelihood: f64,
    /// RMS residual of the fitted log-density against the populated bins of
    /// a `DEFAULT_FIT_BINS` (or the least-squares bin count) histogram.
    pub log_density_rms: f64,
    pub samples: usize,
}

impl GumbelFit {
    fn from_location_scale(method: GumbelMethod, mu: f64, beta: f64, xs: &[f64], bins: usize) -> Result<Self> {
        let n = xs.len() as f64;
        let a = 1.0 / beta;
        let b = (mu / beta).exp();
        let (centers, logs) = log_density_points(xs, bins)?;
        let norm = -beta.ln();
        let rms = (centers
            .iter()
            .zip(&logs)
            .map(|(&x, &y)| {
                let z = (x - mu) / beta;
                (y - (norm - z - (-z).exp())).powi(2)
            })
            .sum::<f64>()
            / centers.len() as f64)
            .sqrt();
        Ok(Self {
            method,
            mu,
            beta,
            a,
            b,
            mu_stderr: beta * ((1.0 + 6.0 * (1.0 - EULER_GAMMA).powi(2) / std::f64::consts::PI.powi(2)) / n).sqrt(),
            beta_stderr: beta * (6.0 / (std::f64::consts::PI.powi(2) * n)).sqrt(),
            log_likelihood: gumbel_log_likelihood(xs.iter().copied(), mu, beta),
            log_density_rms: rms,
            samples: xs.len(),
        })
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.beta;
        -self.beta.ln() - z - (-z).exp()
    }
}

pub fn fit_gumbel(series: &BlockMaximaSeries) -> Result<GumbelFit> {
    fit_gumbel_with(series, GumbelMethod::Mle)
}

pub fn fit_gumbel_with(series: &BlockMaximaSeries, method: GumbelMethod) -> Result<GumbelFit> {
    let xs = &series.values[..];
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(invalid(
            "series",
            format!("Gumbel fit needs at least {MIN_FIT_SAMPLES} samples, got {}", xs.len()),
        ));
    }
    match method {
        GumbelMethod::Mle => {
            let (mu, beta) = gumbel_mle(xs, |x| x)?;
            GumbelFit::from_location_scale(method, mu, beta, xs, DEFAULT_FIT_BINS)
        }
        GumbelMethod::LogDensityLeastSquares(opts) => {
            let (_, beta0) = gumbel_mle(xs, |x| x)?;
            let (a, b) = fit_log_density(xs, opts.bins, 1.0 / beta0)?;
            GumbelFit::from_location_scale(method, b.ln() / a, 1.0 / a, xs, opts.bins)
        }
    }
}

/// Gumbel log-likelihood `sum(-ln beta - z - exp(-z))`.
pub fn gumbel_log_likelihood<I: IntoIterator<Item = f64>>(xs: I, mu: f64, beta: f64) -> f64 {
    let lb = beta.ln();
    neumaier_sum(xs.into_iter().map(|x| {
        let z = (x - mu) / beta;
        -lb - z - (-z).exp()
    }))
}

/// Maximum-likelihood `(mu, beta)` of `transform(x)` over the sample.
///
/// The scale solves `beta - mean(x) + sum(x w) / sum(w) = 0` with
/// `w = exp(-x / beta)`; the left side increases strictly in `beta`, so a
/// safeguarded Newton iteration inside a sign-change bracket converges to the
/// unique root. Location follows as `mu = -beta ln(mean(exp(-x / beta)))`.
pub fn gumbel_mle<F: Fn(f64) -> f64 + Copy>(xs: &[f64], transform: F) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::Degenerate("Gumbel fit needs at least two samples".into()));
    }
    let n = xs.len() as f64;
    let mut bad = None;
    let mean = neumaier_sum(xs.iter().map(|&x| {
        let v = transform(x);
        if !v.is_finite() {
            bad = Some(x);
        }
        v
    })) / n;
    if let Some(x) = bad {
        return Err(invalid("series", format!("value {x} is outside the family's support")));
    }
    let var = neumaier_sum(xs.iter().map(|&x| (transform(x) - mean).powi(2))) / n;
    let dmin = xs.iter().map(|&x| transform(x) - mean).fold(f64::INFINITY, f64::min);
    if !(var > 0.0) || var.sqrt() <= 1e-12 * mean.abs() {
        return Err(Error::Degenerate("Gumbel fit of a constant series".into()));
    }
    // g(beta) = beta + <d>_w, g'(beta) = 1 + Var_w(d) / beta^2, d = x - mean
    let eval = |beta: f64| {
        let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
        for &x in xs {
            let d = transform(x) - mean;
            let w = (-(d - dmin) / beta).exp();
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
        }
        let m1 = s1 / s0;
        let m2 = s2 / s0;
        (beta + m1, 1.0 + (m2 - m1 * m1).max(0.0) / (beta * beta), s0)
    };
    let sd = var.sqrt();
    let mut lo = 1e-6 * sd;
    let mut hi = sd * 6f64.sqrt() / std::f64::consts::PI;
    let mut guard = 0;
    while eval(hi).0 <= 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NoConvergence { method: "Gumbel MLE bracket", iterations: guard });
        }
    }
    if eval(lo).0 >= 0.0 {
        return Err(Error::Degenerate("Gumbel MLE bracket has no sign change".into()));
    }
    let mut beta = hi;
    for _ in 0..MLE_MAX_ITER {
        let (g, dg, _) = eval(beta);
        if g > 0.0 {
            hi = beta;
        } else {
            lo = beta;
        }
        let mut next = beta - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let converged = (next - beta).abs() <= 1e-13 * beta || (hi - lo) <= 1e-14 * hi;
        beta = next;
        if converged {
            let (_, _, s0) = eval(beta);
            let mu = mean + dmin - beta * (s0 / n).ln();
            return Ok((mu, beta));
        }
    }
    Err(Error::NoConvergence {
        method: "Gumbel MLE",
        iterations: MLE_MAX_ITER,
    })
}

/// Centers and log-densities of the populated bins of an equal-width
/// histogram spanning the sample.
fn log_density_points(xs: &[f64], bins: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("histogram of a constant series".into()));
    }
    let pad = (hi - lo) * 1e-9;
    let mut h = Histogram::new(&BinSpec::Uniform { bins, lo, hi: hi + pad })?;
    h.extend_from_slice(xs);
    let density = h.density();
    let (centers, logs) = density
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0.0)
        .map(|(i, &d)| (h.center(i), d.ln()))
        .unzip();
    Ok((centers, logs))
}

/// Least squares of `ln y = c - a x - b exp(-a x)` over populated bins.
///
/// For fixed `a` the model is linear in `(c, b)`, so the residual is profiled
/// over `a` alone: a log-spaced scan around `a_guess` followed by
/// golden-section refinement.
fn fit_log_density(xs: &[f64], bins: usize, a_guess: f64) -> Result<(f64, f64)> {
    let (centers, logs) = log_density_points(xs, bins)?;
    if centers.len() < 4 {
        return Err(Error::Degenerate(format!(
            "only {} populated bins for a least-squares fit",
            centers.len()
        )));
    }
    let x0 = centers.iter().sum::<f64>() / centers.len() as f64;
    // returns (sse, c, b) with b expressed at the original origin
    let profile = |a: f64| -> (f64, f64, f64) {
        let u: Vec<f64> = centers.iter().map(|&x| (-a * (x - x0)).exp()).collect();
        let z: Vec<f64> = centers.iter().zip(&logs).map(|(&x, &y)| y + a * (x - x0)).collect();
        let k = u.len() as f64;
        let mu_ = u.iter().sum::<f64>() / k;
        let mz = z.iter().sum::<f64>() / k;
        let suu: f64 = u.iter().map(|v| (v - mu_).powi(2)).sum();
        let suz: f64 = u.iter().zip(&z).map(|(v, w)| (v - mu_) * (w - mz)).sum();
        let slope = if suu > 0.0 { suz / suu } else { 0.0 };
        let c = mz - slope * mu_;
        let sse: f64 = u.iter().zip(&z).map(|(v, w)| (w - c - slope * v).powi(2)).sum();
        // z = c - b' u with b' = b exp(-a x0)
        (sse, c, -slope * (a * x0).exp())
    };
    let ln_lo = (a_guess / 20.0).ln();
    let ln_hi = (a_guess * 20.0).ln();
    let grid = 400;
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..=grid {
        let la = ln_lo + (ln_hi - ln_lo) * i as f64 / grid as f64;
        let (sse, _, b) = profile(la.exp());
        if b > 0.0 && sse < best.0 {
            best = (sse, i);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Degenerate("no positive-b least-squares solution".into()));
    }
    let step = (ln_hi - ln_lo) / grid as f64;
    let centre = ln_lo + step * best.1 as f64;
    let (mut l, mut r) = (centre - step, centre + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |la: f64| {
        let (sse, _, b) = profile(la.exp());
        if b > 0.0 {
            sse
        } else {
            f64::INFINITY
        }
    };
    let mut c1 = r - phi * (r - l);
    let mut c2 = l + phi * (r - l);
    let (mut f1, mut f2) = (f(c1), f(c2));
    for _ in 0..200 {
        if (r - l).abs() < 1e-13 {
            break;
        }
        if f1 < f2 {
            r = c2;
            c2 = c1;
            f2 = f1;
            c1 = r - phi * (r - l);
            f1 = f(c1);
        } else {
            l = c1;
            c1 = c2;
            f1 = f2;
            c2 = l + phi * (r - l);
            f2 = f(c2);
        }
    }
    let a = (0.5 * (l + r)).exp();
    let (_, _, b) = profile(a);
    if !(b > 0.0) || !a.is_finite() {
        return Err(Error::Degenerate("least-squares Gumbel fit produced b <= 0".into()));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gumbel,
    Frechet,
    Weibull,
}

/// Two-parameter fit of one extreme-value family.
///
/// `Frechet`: `F = exp(-(x/scale)^-shape)` on `x > 0` (lower endpoint 0).
/// `Weibull`: `F = exp(-((endpoint - x)/scale)^shape)` on `x < endpoint`.
/// `Gumbel`: `shape` is unused (0), `location`/`scale` are `mu`/`beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit {
    pub family: Family,
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyComparison {
    pub fits: Vec<FamilyFit>,
    pub best: Family,
    /// Upper endpoint used for the Weibull family.
    pub weibull_endpoint: f64,
}

impl FamilyComparison {
    pub fn get(&self, family: Family) -> Option<&FamilyFit> {
        self.fits.iter().find(|f| f.family == family)
    }
}

/// Maximum-likelihood fits of the three limiting families with two
/// parameters each, so log-likelihoods compare directly.
///
/// Each family is a Gumbel law of a transformed variable: `ln x` for
/// Fréchet and `-ln(endpoint - x)` for Weibull, with the Jacobian added to
/// the log-likelihood. With block maxima of probabilities the support bounds
/// are `0` and `endpoint = 1`.
pub fn compare_families(series: &BlockMaximaSeries, weibull_endpoint: f64) -> Result<FamilyComparison> {
    let xs = &series.values[..];
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(invalid(
            "series",
            format!("family comparison needs at least {MIN_FIT_SAMPLES} samples, got {}", xs.len()),
        ));
    }
    let (mu, beta) = gumbel_mle(xs, |x| x)?;
    let gumbel = FamilyFit {
        family: Family::Gumbel,
        location: mu,
        scale: beta,
        shape: 0.0,
        log_likelihood: gumbel_log_likelihood(xs.iter().copied(), mu, beta),
    };
    let frechet = transformed_fit(xs, Family::Frechet, |x| x > 0.0, f64::ln, |x| x.ln(), |mu, beta| {
        (0.0, mu.exp(), 1.0 / beta)
    })?;
    let w = weibull_endpoint;
    let weibull = transformed_fit(
        xs,
        Family::Weibull,
        move |x| x < w,
        move |x| -(w - x).ln(),
        move |x| (w - x).ln(),
        move |mu, beta| (w, (-mu).exp(), 1.0 / beta),
    )?;
    let fits = vec![gumbel, frechet, weibull];
    let best = fits
        .iter()
        .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
        .map(|f| f.family)
        .unwrap();
    Ok(FamilyComparison {
        fits,
        best,
        weibull_endpoint,
    })
}

/// Gumbel fit of `transform(x)`; log-likelihood gains `-sum(log_jacobian)`.
/// A sample outside the support scores `-inf`.
fn transformed_fit<S, T, J, P>(
    xs: &[f64],
    family: Family,
    supported: S,
    transform: T,
    log_jacobian: J,
    params: P,
) -> Result<FamilyFit>
where
    S: Fn(f64) -> bool,
    T: Fn(f64) -> f64 + Copy,
    J: Fn(f64) -> f64,
    P: Fn(f64, f64) -> (f64, f64, f64),
{
    if !xs.iter().all(|&x| supported(x)) {
        return Ok(FamilyFit {
            family,
            location: f64::NAN,
            scale: f64::NAN,
            shape: f64::NAN,
            log_likelihood: f64::NEG_INFINITY,
        });
    }
    let (mu, beta) = gumbel_mle(xs, transform)?;
    let (location, scale, shape) = params(mu, beta);
    Ok(FamilyFit {
        family,
        location,
        scale,
        shape,
        log_likelihood: gumbel_log_likelihood(xs.iter().map(|&x| transform(x)), mu, beta)
            - neumaier_sum(xs.iter().map(|&x| log_jacobian(x))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::UniformStream;

    fn gumbel_sample(n: usize, mu: f64, beta: f64, seed: u64) -> Vec<f64> {
        let mut rng = UniformStream::new(seed);
        (0..n).map(|_| mu - beta * (-rng.next_open_unit().ln()).ln()).collect()
    }

    #[test]
    fn block_maxima_take_row_maxima() {
        let r = SpaceTimeRecord::from_rows(&[vec![0.1, 0.3, 0.6], vec![0.2, 0.75, 0.05]]).unwrap();
        let bm = block_maxima(&r);
        assert_eq!(bm.values, vec![0.6, 0.75]);
        assert_eq!(bm.steps_per_realization, 2);
    }

    #[test]
    fn mle_recovers_synthetic_parameters() {
        let xs = gumbel_sample(100_000, 0.02, 0.005, 5);
        let fit = fit_gumbel(&BlockMaximaSeries::new(xs, 0)).unwrap();
        assert!((fit.mu / 0.02 - 1.0).abs() < 0.02, "mu {}", fit.mu);
        assert!((fit.beta / 0.005 - 1.0).abs() < 0.02, "beta {}", fit.beta);
    }

    #[test]
    fn mle_is_a_stationary_point_of_the_likelihood() {
        let xs = gumbel_sample(5_000, 1.0, 0.3, 9);
        let (mu, beta) = gumbel_mle(&xs, |x| x).unwrap();
        let ll = |m: f64, b: f64| gumbel_log_likelihood(xs.iter().copied(), m, b);
        let h = 1e-5;
        let dmu = (ll(mu + h, beta) - ll(mu - h, beta)) / (2.0 * h);
        let dbeta = (ll(mu, beta + h) - ll(mu, beta - h)) / (2.0 * h);
        assert!(dmu.abs() < 1e-3 && dbeta.abs() < 1e-3, "{dmu} {dbeta}");
        for (dm, db) in [(0.01, 0.0), (-0.01, 0.0), (0.0, 0.01), (0.0, -0.01)] {
            assert!(ll(mu + dm, beta + db) < ll(mu, beta));
        }
    }

    #[test]
    fn reparameterization_is_consistent() {
        let xs = gumbel_sample(2_000, 0.03, 0.004, 1);
        for method in [
            GumbelMethod::Mle,
            GumbelMethod::LogDensityLeastSquares(LeastSquaresOptions { bins: 60 }),
        ] {
            let fit = fit_gumbel_with(&BlockMaximaSeries::new(xs.clone(), 0), method).unwrap();
            assert!((fit.a * fit.beta - 1.0).abs() < 1e-10);
            let b = (fit.mu / fit.beta).exp();
            assert!(((fit.b - b) / b).abs() < 1e-10);
        }
    }

    #[test]
    fn least_squares_recovers_synthetic_parameters() {
        let xs = gumbel_sample(400_000, 0.025, 0.0054, 3);
        let fit = fit_gumbel_with(
            &BlockMaximaSeries::new(xs, 0),
            GumbelMethod::LogDensityLeastSquares(LeastSquaresOptions { bins: 100 }),
        )
        .unwrap();
        assert!((fit.beta / 0.0054 - 1.0).abs() < 0.05, "beta {}", fit.beta);
        assert!((fit.mu / 0.025 - 1.0).abs() < 0.05, "mu {}", fit.mu);
    }

    #[test]
    fn constant_or_short_series_is_rejected() {
        assert!(matches!(
            fit_gumbel(&BlockMaximaSeries::new(vec![0.01; 500], 0)),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_gumbel(&BlockMaximaSeries::new(vec![0.01, 0.02], 0)).is_err());
    }

    #[test]
    fn family_comparison_picks_the_generating_law() {
        let g = gumbel_sample(50_000, 0.3, 0.05, 21);
        let cmp = compare_families(&BlockMaximaSeries::new(g.clone(), 0), 1.0).unwrap();
        assert_eq!(cmp.best, Family::Gumbel);

        // Fréchet: ln x is Gumbel
        let f: Vec<f64> = gumbel_sample(50_000, -1.0, 0.4, 22).iter().map(|v| v.exp()).collect();
        let cmp = compare_families(&BlockMaximaSeries::new(f, 0), 1e9).unwrap();
        assert_eq!(cmp.best, Family::Frechet);

        // reversed Weibull with endpoint 1
        let w: Vec<f64> = gumbel_sample(50_000, 0.5, 0.4, 23).iter().map(|v| 1.0 - (-v).exp()).collect();
        let cmp = compare_families(&BlockMaximaSeries::new(w, 0), 1.0).unwrap();
        assert_eq!(cmp.best, Family::Weibull);
    }
}
