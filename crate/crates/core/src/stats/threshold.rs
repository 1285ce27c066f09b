//! Significant-amplitude threshold and rogue-event detection.

use serde::{Deserialize, Serialize};

use super::moments::exact_sum;
use crate::error::{invalid, Error, Result};
use crate::walk::SpaceTimeRecord;

pub const DEFAULT_TOP_FRACTION: f64 = 1.0 / 3.0;
pub const DEFAULT_MULTIPLIER: f64 = 2.0;

/// `p_th`: mean of the largest `k = ceil(top_fraction * M)` of the `M`
/// record cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub p_th: f64,
    pub top_fraction: f64,
    pub cells_used: usize,
    pub top_count: usize,
}

/// Number of cells averaged for a record of `cells` cells.
///
/// `ceil(f * M)`, except that a product within 1e-9 of an integer is taken as
/// that integer, so `1/3 * 3j` gives `j` despite the rounding of `1/3`.
pub fn top_count(cells: usize, top_fraction: f64) -> usize {
    let x = top_fraction * cells as f64;
    let near = x.round();
    let k = if (x - near).abs() <= 1e-9 * near.max(1.0) {
        near
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, cells)
}

fn check_fraction(top_fraction: f64) -> Result<()> {
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(invalid(
            "top-fraction",
            format!("must lie in (0, 1), got {top_fraction}"),
        ));
    }
    Ok(())
}

pub fn significant_threshold(record: &SpaceTimeRecord, top_fraction: f64) -> Result<ThresholdResult> {
    let mut scratch = Vec::new();
    threshold_of_values(record.values(), top_fraction, &mut scratch)
}

/// Threshold over raw cell values, selecting in `scratch` (reused between
/// calls to avoid reallocating).
pub fn threshold_of_values(values: &[f64], top_fraction: f64, scratch: &mut Vec<f64>) -> Result<ThresholdResult> {
    check_fraction(top_fraction)?;
    if values.is_empty() {
        return Err(Error::Empty("space-time record"));
    }
    let cells = values.len();
    let k = top_count(cells, top_fraction);
    scratch.clear();
    scratch.extend_from_slice(values);
    let split = cells - k;
    scratch.select_nth_unstable_by(split, f64::total_cmp);
    let p_th = exact_sum(scratch[split..].iter().copied()) / k as f64;
    Ok(ThresholdResult {
        p_th,
        top_fraction,
        cells_used: cells,
        top_count: k,
    })
}

/// One space-time cell above the rogue limit. `t` counts steps from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: usize,
    pub n: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub multiplier: f64,
    pub p_th: f64,
    pub events: Vec<Event>,
    pub total_cells: usize,
    pub sites: usize,
}

impl EventSet {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn limit(&self) -> f64 {
        self.multiplier * self.p_th
    }

    pub fn fraction(&self) -> f64 {
        self.events.len() as f64 / self.total_cells as f64
    }

    /// Groups of events connected through 4-neighbour adjacency in `(t, n)`,
    /// periodic in `n`. Events must be in `(t, n)` order, as produced by
    /// [`detect_events`].
    pub fn cluster_count(&self) -> usize {
        let ev = &self.events;
        let mut parent: Vec<usize> = (0..ev.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        fn union(parent: &mut [usize], i: usize, j: usize) {
            let (a, b) = (find(parent, i), find(parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        // [start, end) of the current and previous rows
        let mut prev_row: Option<(usize, usize, usize)> = None;
        let mut start = 0;
        while start < ev.len() {
            let t = ev[start].t;
            let mut end = start;
            while end < ev.len() && ev[end].t == t {
                end += 1;
            }
            for i in start + 1..end {
                if ev[i].n == ev[i - 1].n + 1 {
                    union(&mut parent, i, i - 1);
                }
            }
            if end - start > 1 && ev[start].n == 0 && ev[end - 1].n + 1 == self.sites {
                union(&mut parent, start, end - 1);
            }
            if let Some((pt, ps, pe)) = prev_row {
                if pt + 1 == t {
                    for i in start..end {
                        if let Ok(j) = ev[ps..pe].binary_search_by(|e| e.n.cmp(&ev[i].n)) {
                            union(&mut parent, i, ps + j);
                        }
                    }
                }
            }
            prev_row = Some((t, start, end));
            start = end;
        }
        (0..parent.len()).filter(|&i| find(&mut parent, i) == i).count()
    }
}

fn check_multiplier(multiplier: f64) -> Result<()> {
    if !(multiplier >= 1.0) || !multiplier.is_finite() {
        return Err(invalid("multiplier", format!("m must be >= 1, got {multiplier}")));
    }
    Ok(())
}

/// All cells with `P > multiplier * p_th`, in `(t, n)` order.
pub fn detect_events(record: &SpaceTimeRecord, threshold: &ThresholdResult, multiplier: f64) -> Result<EventSet> {
    check_multiplier(multiplier)?;
    let limit = multiplier * threshold.p_th;
    let events = record
        .rows()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(move |(_, &p)| p > limit)
                .map(move |(n, &p)| Event { t: i + 1, n, p })
        })
        .collect();
    Ok(EventSet {
        multiplier,
        p_th: threshold.p_th,
        events,
        total_cells: record.values().len(),
        sites: record.sites(),
    })
}

/// Number of cells strictly above `limit`.
pub fn count_exceedances(values: &[f64], limit: f64) -> usize {
    values.iter().filter(|&&p| p > limit).count()
}
