//! Coined walk on a ring with a static random phase gate.
//!
//! One step applies, in order, the phase gate `D`, the Hadamard coin on every
//! site, and the conditional shift (up-amplitude one site to the right,
//! down-amplitude one site to the left, periodic).

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::rng::UniformStream;

/// Largest ring handled by [`dense_step_operator`].
pub const DENSE_MAX_SITES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

/// 2x2 coin acting on (up, down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinMatrix {
    pub entries: [[Complex64; 2]; 2],
}

impl CoinMatrix {
    pub const HADAMARD: CoinMatrix = CoinMatrix {
        entries: [
            [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0)],
            [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(-FRAC_1_SQRT_2, 0.0)],
        ],
    };

    /// Largest entry of |C^dagger C - I|.
    pub fn unitarity_error(&self) -> f64 {
        let c = &self.entries;
        let mut err: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    s += c[k][i].conj() * c[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((s - target).norm());
            }
        }
        err
    }
}

/// Static phases `F(c, n) = 2 pi nu`, one independent draw `nu ~ U[-W, W]`
/// per (coin component, site).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    phases: Vec<(f64, f64)>,
    phasors: Phasors,
    disorder_width: f64,
    seed: u64,
}

impl PhaseMask {
    /// Draws `2N` phases. For each site the up phase is drawn before the
    /// down phase.
    pub fn sample(sites: usize, disorder_width: f64, seed: u64) -> Result<Self> {
        check_sites(sites)?;
        if !(disorder_width >= 0.0) || !disorder_width.is_finite() {
            return Err(invalid("disorder", format!("W must be >= 0 and finite, got {disorder_width}")));
        }
        let mut rng = UniformStream::new(seed);
        let scale = TAU * disorder_width;
        let mut draw = || {
            if disorder_width == 0.0 {
                0.0
            } else {
                scale * rng.next_range(-1.0, 1.0)
            }
        };
        let phases = (0..sites).map(|_| (draw(), draw())).collect();
        Ok(Self::build(phases, disorder_width, seed))
    }

    /// Mask from explicit phases. The recorded width is the smallest `W`
    /// covering them.
    pub fn from_phases(phases: Vec<(f64, f64)>) -> Result<Self> {
        check_sites(phases.len())?;
        if phases.iter().any(|&(u, d)| !u.is_finite() || !d.is_finite()) {
            return Err(invalid("phases", "phases must be finite"));
        }
        let w = phases
            .iter()
            .fold(0.0f64, |m, &(u, d)| m.max(u.abs()).max(d.abs()))
            / TAU;
        Ok(Self::build(phases, w, 0))
    }

    fn build(phases: Vec<(f64, f64)>, disorder_width: f64, seed: u64) -> Self {
        let phasors = Phasors {
            up_re: phases.iter().map(|p| p.0.cos()).collect(),
            up_im: phases.iter().map(|p| p.0.sin()).collect(),
            down_re: phases.iter().map(|p| p.1.cos()).collect(),
            down_im: phases.iter().map(|p| p.1.sin()).collect(),
        };
        Self {
            phases,
            phasors,
            disorder_width,
            seed,
        }
    }

    pub fn sites(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[(f64, f64)] {
        &self.phases
    }

    pub fn disorder_width(&self) -> f64 {
        self.disorder_width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Phasors {
    up_re: Vec<f64>,
    up_im: Vec<f64>,
    down_re: Vec<f64>,
    down_im: Vec<f64>,
}

/// Split real/imaginary storage of one coin component.
#[derive(Debug, Clone, PartialEq)]
struct Component {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Component {
    fn from_complex(z: &[Complex64]) -> Self {
        Self {
            re: z.iter().map(|c| c.re).collect(),
            im: z.iter().map(|c| c.im).collect(),
        }
    }

    fn get(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    fn norm(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum()
    }
}

/// Spinor amplitudes on the ring.
///
/// The shift is never performed as data movement. Logical up-amplitude
/// `a_n(t)` lives in slot `(n - t) mod N` and `b_n(t)` in slot `(n + t) mod N`;
/// with that layout every step is an in-place per-slot update.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerState {
    up: Component,
    down: Component,
    time: u64,
}

impl WalkerState {
    /// `(1/sqrt(2N)) sum_n (|up, n> + i |down, n>)`.
    pub fn new_uniform(sites: usize) -> Result<Self> {
        check_sites(sites)?;
        let amp = 1.0 / (2.0 * sites as f64).sqrt();
        Ok(Self {
            up: Component {
                re: vec![amp; sites],
                im: vec![0.0; sites],
            },
            down: Component {
                re: vec![0.0; sites],
                im: vec![amp; sites],
            },
            time: 0,
        })
    }

    pub fn new_localized(sites: usize, site: usize, spin: Spin) -> Result<Self> {
        check_sites(sites)?;
        if site >= sites {
            return Err(invalid("site", format!("site {site} outside 0..{sites}")));
        }
        let mut up = vec![Complex64::new(0.0, 0.0); sites];
        let mut down = up.clone();
        match spin {
            Spin::Up => up[site] = Complex64::new(1.0, 0.0),
            Spin::Down => down[site] = Complex64::new(1.0, 0.0),
        }
        Self::from_amplitudes(up, down)
    }

    /// State at `t = 0` from logical amplitudes. Must be normalized to 1e-10.
    pub fn from_amplitudes(up: Vec<Complex64>, down: Vec<Complex64>) -> Result<Self> {
        check_sites(up.len())?;
        if up.len() != down.len() {
            return Err(invalid(
                "amplitudes",
                format!("up has {} entries, down has {}", up.len(), down.len()),
            ));
        }
        let state = Self {
            up: Component::from_complex(&up),
            down: Component::from_complex(&down),
            time: 0,
        };
        let dev = (state.norm() - 1.0).abs();
        if !(dev < 1e-10) {
            return Err(invalid("amplitudes", format!("norm deviates from 1 by {dev:e}")));
        }
        Ok(state)
    }

    pub fn sites(&self) -> usize {
        self.up.re.len()
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    fn offset(&self) -> usize {
        (self.time % self.sites() as u64) as usize
    }

    /// `(a_n, b_n)` at logical site `n`.
    pub fn amplitude(&self, n: usize) -> (Complex64, Complex64) {
        let len = self.sites();
        let r = self.offset();
        (self.up.get((n + len - r) % len), self.down.get((n + r) % len))
    }

    /// Logical amplitudes `(a_0..a_{N-1}, b_0..b_{N-1})`.
    pub fn amplitudes(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        (0..self.sites()).map(|n| self.amplitude(n)).unzip()
    }

    /// Logical state as one vector, up block first.
    pub fn to_vector(&self) -> Vec<Complex64> {
        let (mut a, b) = self.amplitudes();
        a.extend(b);
        a
    }

    pub fn norm(&self) -> f64 {
        self.up.norm() + self.down.norm()
    }

    /// `P_n = |a_n|^2 + |b_n|^2` into `out` (length N).
    pub fn occupation_into(&self, out: &mut [f64]) {
        let len = self.sites();
        assert_eq!(out.len(), len);
        let r = self.offset();
        for (lo, hi) in segments(len, &[r]) {
            let ia = (lo + len - r) % len;
            add_norms(&mut out[lo..hi], &self.up, ia, true);
        }
        for (lo, hi) in segments(len, &[len - r]) {
            let ib = (lo + r) % len;
            add_norms(&mut out[lo..hi], &self.down, ib, false);
        }
    }

    pub fn occupation(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.sites()];
        self.occupation_into(&mut out);
        out
    }

    /// One application of `S (C x I) D`.
    pub fn step(&mut self, mask: &PhaseMask) -> Result<()> {
        self.advance(mask)?;
        self.time += 1;
        Ok(())
    }

    /// Step and write the new occupation row into `row`.
    pub fn step_with_occupation(&mut self, mask: &PhaseMask, row: &mut [f64]) -> Result<()> {
        if row.len() != self.sites() {
            return Err(invalid("row", format!("row has {} entries, ring has {}", row.len(), self.sites())));
        }
        self.step(mask)?;
        self.occupation_into(row);
        Ok(())
    }

    fn advance(&mut self, mask: &PhaseMask) -> Result<()> {
        let len = self.sites();
        if mask.sites() != len {
            return Err(Error::DimensionMismatch {
                state: len,
                mask: mask.sites(),
            });
        }
        let r = self.offset();
        let ph = &mask.phasors;
        for (lo, hi) in segments(len, &[r, len - r]) {
            let m = hi - lo;
            let ia = (lo + len - r) % len;
            let ib = (lo + r) % len;
            kernel(
                &mut self.up.re[ia..ia + m],
                &mut self.up.im[ia..ia + m],
                &mut self.down.re[ib..ib + m],
                &mut self.down.im[ib..ib + m],
                [&ph.up_re[lo..hi], &ph.up_im[lo..hi], &ph.down_re[lo..hi], &ph.down_im[lo..hi]],
            );
        }
        Ok(())
    }
}

/// Phase gate, Hadamard mix, written back to the slots read. The shift is
/// implicit in the slot layout.
#[inline(always)]
fn kernel(ar: &mut [f64], ai: &mut [f64], br: &mut [f64], bi: &mut [f64], phasors: [&[f64]; 4]) {
    let m = ar.len();
    let (ai, br, bi) = (&mut ai[..m], &mut br[..m], &mut bi[..m]);
    let [cu, su, cd, sd] = phasors;
    let (cu, su, cd, sd) = (&cu[..m], &su[..m], &cd[..m], &sd[..m]);
    for i in 0..m {
        let xr = ar[i] * cu[i] - ai[i] * su[i];
        let xi = ar[i] * su[i] + ai[i] * cu[i];
        let yr = br[i] * cd[i] - bi[i] * sd[i];
        let yi = br[i] * sd[i] + bi[i] * cd[i];
        ar[i] = (xr + yr) * FRAC_1_SQRT_2;
        ai[i] = (xi + yi) * FRAC_1_SQRT_2;
        br[i] = (xr - yr) * FRAC_1_SQRT_2;
        bi[i] = (xi - yi) * FRAC_1_SQRT_2;
    }
}

#[inline(always)]
fn add_norms(out: &mut [f64], c: &Component, from: usize, overwrite: bool) {
    let m = out.len();
    let re = &c.re[from..from + m];
    let im = &c.im[from..from + m];
    if overwrite {
        for ((p, r), i) in out.iter_mut().zip(re).zip(im) {
            *p = r * r + i * i;
        }
    } else {
        for ((p, r), i) in out.iter_mut().zip(re).zip(im) {
            *p += r * r + i * i;
        }
    }
}

/// Splits `0..len` at every cut so that indices offset by a fixed amount
/// stay contiguous inside each piece.
fn segments(len: usize, cuts: &[usize]) -> impl Iterator<Item = (usize, usize)> {
    let mut points = [len; 6];
    points[0] = 0;
    for (p, &c) in points[2..].iter_mut().zip(cuts) {
        *p = c % len;
    }
    points.sort_unstable();
    (0..points.len() - 1)
        .map(move |i| (points[i], points[i + 1]))
        .filter(|(lo, hi)| lo < hi)
}

/// Occupation probabilities `P_n(t)` for `t = 1..=T`; the prepared state at
/// `t = 0` is not part of the record.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeRecord {
    sites: usize,
    steps: usize,
    values: Vec<f64>,
}

impl SpaceTimeRecord {
    /// Row-major `steps x sites` values.
    pub fn from_values(sites: usize, steps: usize, values: Vec<f64>) -> Result<Self> {
        if sites == 0 || steps == 0 {
            return Err(Error::Empty("space-time record"));
        }
        if values.len() != sites * steps {
            return Err(invalid(
                "values",
                format!("expected {} cells, got {}", sites * steps, values.len()),
            ));
        }
        Ok(Self { sites, steps, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let steps = rows.len();
        let sites = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != sites) {
            return Err(invalid("rows", "rows have unequal lengths"));
        }
        Self::from_values(sites, steps, rows.concat())
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row `i` holds time step `t = i + 1`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.sites..(i + 1) * self.sites]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.sites)
    }

    pub fn get(&self, t: usize, n: usize) -> f64 {
        self.values[(t - 1) * self.sites + n]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            sites: self.sites,
            steps: self.steps,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Evolve `steps` times, handing each new row `(t, P_n(t))` to `sink`, and
/// return the full record.
pub fn evolve<F>(state: &mut WalkerState, mask: &PhaseMask, steps: usize, sink: F) -> Result<SpaceTimeRecord>
where
    F: FnMut(u64, &[f64]),
{
    evolve_into(state, mask, steps, Vec::new(), sink)
}

/// [`evolve`] writing into a recycled buffer (see
/// [`SpaceTimeRecord::into_values`]), so repeated runs do not fault in fresh
/// pages for every record.
pub fn evolve_into<F>(
    state: &mut WalkerState,
    mask: &PhaseMask,
    steps: usize,
    mut buffer: Vec<f64>,
    mut sink: F,
) -> Result<SpaceTimeRecord>
where
    F: FnMut(u64, &[f64]),
{
    if steps == 0 {
        return Err(invalid("steps", "T must be >= 1"));
    }
    let sites = state.sites();
    buffer.resize(sites * steps, 0.0);
    for row in buffer.chunks_exact_mut(sites) {
        state.step_with_occupation(mask, row)?;
        sink(state.time(), row);
    }
    SpaceTimeRecord::from_values(sites, steps, buffer)
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn mul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let d = self.dim;
        let mut out = DenseMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let l = self.get(i, k);
                if l == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += l * rhs.get(k, j);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn adjoint(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    /// Largest entry of |U^dagger U - I|.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.adjoint().mul(self);
        let mut err: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((g.get(i, j) - target).norm());
            }
        }
        err
    }
}

/// Explicit `S (C x I) D` on the basis `|up, n> -> n`, `|down, n> -> N + n`,
/// built as a product of three dense matrices.
pub fn dense_step_operator(mask: &PhaseMask) -> Result<DenseMatrix> {
    let n = mask.sites();
    if n > DENSE_MAX_SITES {
        return Err(invalid(
            "sites",
            format!("dense operator limited to {DENSE_MAX_SITES} sites, got {n}"),
        ));
    }
    let dim = 2 * n;
    let mut phase = DenseMatrix::zeros(dim);
    for (site, &(u, d)) in mask.phases().iter().enumerate() {
        phase.set(site, site, Complex64::from_polar(1.0, u));
        phase.set(n + site, n + site, Complex64::from_polar(1.0, d));
    }
    let c = CoinMatrix::HADAMARD.entries;
    let mut coin = DenseMatrix::zeros(dim);
    for site in 0..n {
        coin.set(site, site, c[0][0]);
        coin.set(site, n + site, c[0][1]);
        coin.set(n + site, site, c[1][0]);
        coin.set(n + site, n + site, c[1][1]);
    }
    let one = Complex64::new(1.0, 0.0);
    let mut shift = DenseMatrix::zeros(dim);
    for site in 0..n {
        shift.set((site + 1) % n, site, one);
        shift.set(n + (site + n - 1) % n, n + site, one);
    }
    Ok(shift.mul(&coin).mul(&phase))
}

fn check_sites(sites: usize) -> Result<()> {
    if sites < 2 {
        return Err(invalid("sites", format!("N must be >= 2, got {sites}")));
    }
    Ok(())
}
