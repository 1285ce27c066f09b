//! Quick oracle and invariant checks runnable from an installed binary.

use serde::Serialize;

use crate::ensemble::{run_ensemble, Execution, RunConfig, StepsRule};
use crate::rng::{splitmix64, UniformStream};
use crate::stats::extreme::{block_maxima, fit_gumbel, BlockMaximaSeries};
use crate::stats::threshold::{detect_events, significant_threshold, top_count};
use crate::walk::{dense_step_operator, evolve, PhaseMask, SpaceTimeRecord, WalkerState};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<String, String>) -> Check {
    match run() {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e2s(e: crate::Error) -> String {
    e.to_string()
}

fn unitarity() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let mask = PhaseMask::sample(100, 0.5, seed).map_err(e2s)?;
        let mut s = WalkerState::new_uniform(100).map_err(e2s)?;
        evolve(&mut s, &mask, 1000, |_, row| {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        })
        .map_err(e2s)?;
    }
    ensure(worst < 1e-10, format!("max norm deviation {worst:.2e}"))
}

fn dense_oracle() -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut rng = UniformStream::new(11);
    for n in 2..=8 {
        for trial in 0..20u64 {
            let mask = PhaseMask::sample(n, rng.next_unit(), trial * 100 + n as u64).map_err(e2s)?;
            let op = dense_step_operator(&mask).map_err(e2s)?;
            worst = worst.max(op.unitarity_error());
            let mut v: Vec<num_complex::Complex64> = (0..2 * n)
                .map(|_| num_complex::Complex64::new(rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0)))
                .collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.iter_mut().for_each(|z| *z /= norm);
            let down = v.split_off(n);
            let mut s = WalkerState::from_amplitudes(v, down).map_err(e2s)?;
            let expect = op.apply(&s.to_vector());
            s.step(&mask).map_err(e2s)?;
            for (a, b) in s.to_vector().iter().zip(&expect) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    ensure(worst < 1e-12, format!("max deviation {worst:.2e}"))
}

fn fixed_point() -> Result<String, String> {
    let n = 50;
    let mask = PhaseMask::sample(n, 0.0, 1).map_err(e2s)?;
    let mut s = WalkerState::new_uniform(n).map_err(e2s)?;
    let rec = evolve(&mut s, &mask, 500, |_, _| {}).map_err(e2s)?;
    let dev = rec.values().iter().map(|&p| (p - 1.0 / n as f64).abs()).fold(0.0, f64::max);
    let th = significant_threshold(&rec, 1.0 / 3.0).map_err(e2s)?;
    let events = detect_events(&rec, &th, 2.0).map_err(e2s)?;
    ensure(dev < 1e-12 && events.is_empty(), format!("max |P - 1/N| {dev:.2e}, {} events", events.len()))
}

fn threshold_brute_force() -> Result<String, String> {
    let mut rng = UniformStream::new(5);
    for trial in 0..50 {
        let sites = 2 + trial % 7;
        let steps = 1 + trial % 5;
        let values: Vec<f64> = (0..sites * steps).map(|_| rng.next_unit()).collect();
        let rec = SpaceTimeRecord::from_values(sites, steps, values.clone()).map_err(e2s)?;
        let got = significant_threshold(&rec, 1.0 / 3.0).map_err(e2s)?;
        let mut sorted = values;
        sorted.sort_by(|a, b| b.total_cmp(a));
        let k = top_count(sorted.len(), 1.0 / 3.0);
        let want = sorted[..k].iter().sum::<f64>() / k as f64;
        if (got.p_th - want).abs() > 1e-15 * want {
            return Err(format!("trial {trial}: {} vs {want}", got.p_th));
        }
    }
    Ok("50 random records".into())
}

fn gumbel_recovery() -> Result<String, String> {
    let (mu, beta) = (0.02, 0.005);
    let mut rng = UniformStream::new(3);
    let xs: Vec<f64> = (0..100_000).map(|_| mu - beta * (-rng.next_open_unit().ln()).ln()).collect();
    let fit = fit_gumbel(&BlockMaximaSeries::new(xs, 0)).map_err(e2s)?;
    let (em, eb) = ((fit.mu / mu - 1.0).abs(), (fit.beta / beta - 1.0).abs());
    ensure(em < 0.02 && eb < 0.02, format!("mu {:.5}, beta {:.6}", fit.mu, fit.beta))
}

fn block_maxima_fixed_point() -> Result<String, String> {
    let mask = PhaseMask::sample(20, 0.0, 0).map_err(e2s)?;
    let mut s = WalkerState::new_uniform(20).map_err(e2s)?;
    let rec = evolve(&mut s, &mask, 100, |_, _| {}).map_err(e2s)?;
    let bm = block_maxima(&rec);
    let dev = bm.values.iter().map(|&m| (m - 0.05).abs()).fold(0.0, f64::max);
    ensure(dev < 1e-12, format!("max |P_max - 1/N| {dev:.2e}"))
}

fn determinism() -> Result<String, String> {
    let cfg = RunConfig::new(20, 0.2, 8, 99).with_steps(StepsRule::Fixed(100));
    let a = run_ensemble(&cfg, Execution::workers(1)).map_err(e2s)?;
    let b = run_ensemble(&cfg, Execution::workers(3)).map_err(e2s)?;
    let (ja, jb) = (serde_json::to_vec(&a).map_err(|e| e.to_string())?, serde_json::to_vec(&b).map_err(|e| e.to_string())?);
    ensure(ja == jb, format!("{} result bytes", ja.len()))
}

fn rng_reference() -> Result<String, String> {
    let got = splitmix64(0x9e37_79b9_7f4a_7c15);
    ensure(got == 0xe220_a839_7b1d_cdaf, format!("{got:#018x}"))
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        check("rng-reference", rng_reference),
        check("unitarity", unitarity),
        check("dense-oracle", dense_oracle),
        check("zero-disorder-fixed-point", fixed_point),
        check("block-maxima-fixed-point", block_maxima_fixed_point),
        check("threshold-brute-force", threshold_brute_force),
        check("gumbel-recovery", gumbel_recovery),
        check("worker-determinism", determinism),
    ]
}
