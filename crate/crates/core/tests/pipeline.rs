use roguewalk::ensemble::{run_ensemble, run_realization, Execution, Outputs, RunConfig, StepsRule};
use roguewalk::io;
use roguewalk::rng::realization_seed;
use roguewalk::stats::extreme::{block_maxima, fit_gumbel, BlockMaximaSeries};
use roguewalk::stats::histogram::Histogram;
use roguewalk::stats::threshold::{detect_events, significant_threshold};
use roguewalk::sweep::{sweep_disorder, DisorderCurve};
use roguewalk::walk::SpaceTimeRecord;

fn config(realizations: usize) -> RunConfig {
    let mut cfg = RunConfig::new(24, 0.25, realizations, 17).with_steps(StepsRule::Fixed(240));
    cfg.extra_multipliers = vec![2.5];
    cfg.outputs = Outputs {
        histogram: true,
        events: true,
        block_maxima: true,
        record_dump: (0..realizations).collect(),
    };
    cfg
}

#[test]
fn streamed_ensemble_matches_recomputation_from_records() {
    let cfg = config(9);
    let res = run_ensemble(&cfg, Execution::workers(3)).unwrap();
    assert_eq!(res.records.len(), 9);
    let mut hist = Histogram::new(&cfg.raw_bins()).unwrap();
    let mut maxima = BlockMaximaSeries::new(Vec::new(), res.steps);
    for ((index, values), summary) in res.records.iter().zip(&res.summaries) {
        assert_eq!(*index, summary.index);
        let rec = SpaceTimeRecord::from_values(cfg.sites, res.steps, values.clone()).unwrap();
        hist.extend_from_slice(rec.values());
        maxima.append(&block_maxima(&rec));
        let th = significant_threshold(&rec, cfg.top_fraction).unwrap();
        assert_eq!(th.p_th, summary.p_th);
        let events = detect_events(&rec, &th, cfg.multiplier).unwrap();
        assert_eq!(events.len(), summary.event_count);
        assert_eq!(&events, &res.events[*index]);
    }
    assert_eq!(&hist, res.histogram.as_ref().unwrap());
    assert_eq!(&maxima, res.block_maxima.as_ref().unwrap());
    assert_eq!(hist.total(), (cfg.realizations * cfg.sites * res.steps) as u64);
}

#[test]
fn realizations_do_not_depend_on_their_neighbours() {
    let small = run_ensemble(&config(3), Execution::default()).unwrap();
    let big = run_ensemble(&config(7), Execution::workers(2)).unwrap();
    assert_eq!(small.summaries[..], big.summaries[..3]);
    let alone = run_realization(&config(7), 5).unwrap();
    assert_eq!(alone.summary, big.summaries[5]);
    assert_eq!(alone.summary.seed, realization_seed(17, 5));
}

#[test]
fn stored_block_maxima_refit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(4);
    cfg.outputs.record_dump.clear();
    let res = run_ensemble(&cfg, Execution::default()).unwrap();
    let series = res.block_maxima.unwrap();
    let path = dir.path().join("block_maxima.csv");
    io::write_block_maxima_csv(&path, &series, None).unwrap();
    let back = io::read_block_maxima_csv(&path).unwrap();
    assert_eq!(back, series);
    assert_eq!(fit_gumbel(&back).unwrap(), fit_gumbel(&series).unwrap());
}

#[test]
fn sweep_points_are_ensemble_means() {
    let template = RunConfig::new(20, 0.0, 5, 3).with_steps(StepsRule::Fixed(200));
    let grid = [0.0, 0.05, 0.2, 0.8];
    let curve = sweep_disorder(&template, &grid, &[3.0], Execution::default()).unwrap();
    assert_eq!(curve.points[0].fraction, 0.0);
    for p in &curve.points {
        let mut cfg = template.clone();
        cfg.disorder = p.w;
        cfg.extra_multipliers = vec![3.0];
        cfg.outputs = Outputs::summaries_only();
        let res = run_ensemble(&cfg, Execution::default()).unwrap();
        assert_eq!(p.fraction, res.mean_event_fraction);
        assert_eq!(p.levels, res.extra_fractions);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.json");
    io::write_json(&path, &curve).unwrap();
    assert_eq!(io::read_json::<DisorderCurve>(&path).unwrap(), curve);
}

#[test]
fn bad_configs_fail_before_running() {
    let mut cfg = config(2);
    cfg.top_fraction = 0.0;
    assert!(run_ensemble(&cfg, Execution::default()).is_err());
    let mut cfg = config(2);
    cfg.outputs.record_dump = vec![5];
    assert!(run_ensemble(&cfg, Execution::default()).is_err());
    assert!(run_realization(&config(2), 2).is_err());
}
