use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSpec {
    /// `bins` equal-width bins over `[lo, hi)`.
    Uniform { bins: usize, lo: f64, hi: f64 },
    /// Explicit strictly ascending edges.
    Edges(Vec<f64>),
}

impl BinSpec {
    /// `bins` uniform bins from 0 up to and including the largest value.
    pub fn up_to_max(bins: usize, values: &[f64]) -> Result<Self> {
        let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
        Ok(BinSpec::Uniform {
            bins,
            lo: 0.0,
            hi: max.next_up(),
        })
    }

    pub fn edges(&self) -> Result<Vec<f64>> {
        let edges = match self {
            BinSpec::Uniform { bins, lo, hi } => {
                if *bins == 0 {
                    return Err(invalid("bins", "need at least one bin"));
                }
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(invalid("bins", format!("range [{lo}, {hi}) is empty or not finite")));
                }
                let width = (hi - lo) / *bins as f64;
                let mut e: Vec<f64> = (0..*bins).map(|i| lo + i as f64 * width).collect();
                e.push(*hi);
                e
            }
            BinSpec::Edges(e) => e.clone(),
        };
        if edges.len() < 2 {
            return Err(invalid("bins", "need at least two edges"));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(invalid("bins", "edges must be finite and strictly increasing"));
        }
        Ok(edges)
    }
}

/// Fixed-bin counting histogram with explicit under/overflow.
///
/// Bins are half-open `[e_i, e_{i+1})`. Values below the first edge go to
/// `underflow`; values at or above the last edge, and NaN, go to `overflow`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
    #[serde(skip)]
    uniform: Option<(f64, f64)>,
}

impl PartialEq for Histogram {
    fn eq(&self, other: &Self) -> bool {
        self.edges == other.edges
            && self.counts == other.counts
            && self.underflow == other.underflow
            && self.overflow == other.overflow
    }
}

impl Histogram {
    pub fn new(spec: &BinSpec) -> Result<Self> {
        let edges = spec.edges()?;
        let uniform = match spec {
            BinSpec::Uniform { bins, lo, hi } => Some((*lo, *bins as f64 / (hi - lo))),
            BinSpec::Edges(_) => None,
        };
        Ok(Self {
            counts: vec![0; edges.len() - 1],
            edges,
            underflow: 0,
            overflow: 0,
            uniform,
        })
    }

    /// Rebuild from stored bins (edges.len() == counts.len() + 1).
    pub fn from_parts(edges: Vec<f64>, counts: Vec<u64>, underflow: u64, overflow: u64) -> Result<Self> {
        let spec = BinSpec::Edges(edges);
        let edges = spec.edges()?;
        if counts.len() + 1 != edges.len() {
            return Err(invalid(
                "bins",
                format!("{} edges cannot bound {} counts", edges.len(), counts.len()),
            ));
        }
        Ok(Self {
            edges,
            counts,
            underflow,
            overflow,
            uniform: None,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    fn bin_of(&self, x: f64) -> Option<usize> {
        locate(&self.edges, self.uniform, x)
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        match self.bin_of(x) {
            Some(i) => self.counts[i] += 1,
            None if x < self.edges[0] => self.underflow += 1,
            None => self.overflow += 1,
        }
    }

    pub fn extend_from_slice(&mut self, xs: &[f64]) {
        self.extend_scaled(xs, 1.0);
    }

    /// Push every value scaled by `factor`.
    pub fn extend_scaled(&mut self, xs: &[f64], factor: f64) {
        let Some((lo, inv_width)) = self.uniform else {
            for &x in xs {
                self.push(x * factor);
            }
            return;
        };
        let last = self.counts.len();
        let top = last as f64;
        let edges = &self.edges[..last + 1];
        let counts = &mut self.counts[..last];
        for &x in xs {
            let x = x * factor;
            let guess = (x - lo) * inv_width;
            if guess >= 0.0 && guess < top {
                let i = guess as usize;
                // the computed index can be off by one against the stored edges
                if x >= edges[i] && x < edges[i + 1] {
                    counts[i] += 1;
                    continue;
                }
            }
            match locate(edges, self.uniform, x) {
                Some(i) => counts[i] += 1,
                None if x < edges[0] => self.underflow += 1,
                None => self.overflow += 1,
            }
        }
    }

    /// Add another histogram with identical edges.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(invalid("bins", "cannot merge histograms with different edges"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// All values pushed, including under/overflow.
    pub fn total(&self) -> u64 {
        self.in_range() + self.underflow + self.overflow
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Count density normalized over the in-range mass. All zeros when the
    /// histogram is empty.
    pub fn density(&self) -> Vec<f64> {
        let total = self.in_range();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 / (total as f64 * self.width(i)))
            .collect()
    }

    /// Index of the most populated bin (first on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }
}

fn locate(edges: &[f64], uniform: Option<(f64, f64)>, x: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if let Some((lo, inv_width)) = uniform {
        let guess = (x - lo) * inv_width;
        // also rejects NaN
        if !(guess >= 0.0 && guess < last as f64 + 1.0) {
            return None;
        }
        // truncation is floor here; pull the guess onto the stored edges
        let mut i = (guess as usize).min(last - 1);
        while i > 0 && x < edges[i] {
            i -= 1;
        }
        while i + 1 < last && x >= edges[i + 1] {
            i += 1;
        }
        (x >= edges[i] && x < edges[i + 1]).then_some(i)
    } else {
        let i = edges.partition_point(|&e| e <= x);
        (i >= 1 && i <= last).then(|| i - 1)
    }
}
