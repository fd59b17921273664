//! Random-walk Feynman-Kac representation of the discrete semigroup.
//!
//! Writing `K = I - M / (3 m^2)` as `(1/3)` times a matrix of factors
//! `1 - E(a) / m^2`, every entry of `K^theta` is a sum over lazy walk paths
//! of length `theta` weighted `3^{-theta}` times the product of the factors
//! along the path. Paths leaving `{0, ..., n}` contribute nothing. With a
//! Robin spike the `(0, 0)` entry becomes `(2/3)(1 - (1 - w_n)/2 - D(0)/(2m^2))`,
//! which is the reflected chain `T` holding at zero with probability `2/3`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::EnsembleSample;
use crate::error::{invalid, Error, Result};
use crate::randomness::{RngStream, SeedSpec};
use crate::semigroup::{theta, Boundary, SemigroupQuery};
use crate::stats::{allocate, combine_strata, Welford};
use crate::tridiag::{check_pair, GridFunction};

pub use crate::stats::McEstimate;

/// Limit on `(n + 1) * 3^theta` for exhaustive enumeration.
pub const ENUMERATION_GUARD: f64 = 1e8;
/// Largest `theta` accepted by [`TrinomialTable::build`].
pub const MAX_TABLE_THETA: usize = 1_000_000;
/// Largest table actually materialised (`theta^2 / 2` entries).
pub const MAX_TABLE_ENTRIES: usize = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    LazyS,
    ReflectedT,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticePath {
    pub start: i64,
    pub steps: Vec<i8>,
    pub kind: ChainKind,
}

impl LatticePath {
    pub fn new(start: i64, steps: Vec<i8>, kind: ChainKind) -> Result<Self> {
        let p = Self { start, steps, kind };
        if !p.is_valid() {
            return Err(invalid("path", "steps outside {-1, 0, 1} or reflected path below 0"));
        }
        Ok(p)
    }

    /// Path through the given positions.
    pub fn from_positions(positions: &[i64], kind: ChainKind) -> Result<Self> {
        let start = *positions.first().ok_or_else(|| invalid("path", "empty"))?;
        let steps = positions
            .windows(2)
            .map(|w| i8::try_from(w[1] - w[0]).map_err(|_| invalid("path", "jump larger than 1")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(start, steps, kind)
    }

    pub fn theta(&self) -> usize {
        self.steps.len()
    }

    /// All `theta + 1` positions.
    pub fn positions(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut x = self.start;
        out.push(x);
        for &s in &self.steps {
            x += s as i64;
            out.push(x);
        }
        out
    }

    pub fn end(&self) -> i64 {
        self.start + self.steps.iter().map(|&s| s as i64).sum::<i64>()
    }

    pub fn is_valid(&self) -> bool {
        if self.steps.iter().any(|s| !(-1..=1).contains(s)) {
            return false;
        }
        match self.kind {
            ChainKind::LazyS => true,
            ChainKind::ReflectedT => self.positions().iter().all(|&x| x >= 0),
        }
    }

    /// Number of zero-to-zero steps.
    pub fn zero_holds(&self) -> usize {
        let pos = self.positions();
        pos.windows(2).filter(|w| w[0] == 0 && w[1] == 0).count()
    }
}

pub fn sample_lazy_path(x0: i64, theta: usize, stream: &mut RngStream) -> LatticePath {
    let steps = (0..theta).map(|_| stream.below(3) as i8 - 1).collect();
    LatticePath { start: x0, steps, kind: ChainKind::LazyS }
}

/// One step of the reflected chain from `x`.
#[inline]
pub(crate) fn reflected_step(x: i64, stream: &mut RngStream) -> i8 {
    let r = stream.below(3) as i8;
    if x == 0 {
        // Hold with probability 2/3, up with 1/3.
        (r == 2) as i8
    } else {
        r - 1
    }
}

pub fn sample_reflected_path(x0: i64, theta: usize, stream: &mut RngStream) -> Result<LatticePath> {
    if x0 < 0 {
        return Err(invalid("x0", "reflected chain starts at a nonnegative site"));
    }
    let mut x = x0;
    let steps = (0..theta)
        .map(|_| {
            let s = reflected_step(x, stream);
            x += s as i64;
            s
        })
        .collect();
    Ok(LatticePath { start: x0, steps, kind: ChainKind::ReflectedT })
}

/// Directed edge counts `Lambda^{(a,b)}_theta`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeOccupation {
    pub counts: BTreeMap<(i64, i64), u64>,
    pub total_steps: u64,
}

impl EdgeOccupation {
    pub fn get(&self, a: i64, b: i64) -> u64 {
        self.counts.get(&(a, b)).copied().unwrap_or(0)
    }

    /// Steps leaving `a`: `#{u < theta : S(u) = a}`.
    pub fn vertex(&self, a: i64) -> u64 {
        (-1..=1).map(|d| self.get(a, a + d)).sum()
    }
}

pub fn edge_occupation(path: &LatticePath) -> EdgeOccupation {
    let mut occ = EdgeOccupation { total_steps: path.theta() as u64, ..Default::default() };
    for w in path.positions().windows(2) {
        *occ.counts.entry((w[0], w[1])).or_insert(0) += 1;
    }
    occ
}

/// `log N(u, k)`, the number of lazy paths of length `u` with displacement
/// `k`, for `0 <= u <= theta`.
#[derive(Debug, Clone)]
pub struct TrinomialTable {
    rows: Vec<Vec<f64>>,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl TrinomialTable {
    pub fn build(theta: usize) -> Result<Self> {
        if theta > MAX_TABLE_THETA {
            return Err(invalid("theta", format!("{theta} exceeds {MAX_TABLE_THETA}")));
        }
        let entries = (theta + 1) * (theta + 2) / 2;
        if entries > MAX_TABLE_ENTRIES {
            return Err(Error::GuardExceeded { size: entries as f64, guard: MAX_TABLE_ENTRIES as f64 });
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(theta + 1);
        rows.push(vec![0.0]);
        for u in 1..=theta {
            let prev = &rows[u - 1];
            let get = |k: i64| -> f64 {
                let k = k.unsigned_abs() as usize;
                prev.get(k).copied().unwrap_or(f64::NEG_INFINITY)
            };
            let row = (0..=u as i64)
                .map(|k| log_add(log_add(get(k - 1), get(k)), get(k + 1)))
                .collect();
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn theta(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn log_count(&self, u: usize, k: i64) -> f64 {
        self.rows[u].get(k.unsigned_abs() as usize).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn count(&self, u: usize, k: i64) -> f64 {
        self.log_count(u, k).exp()
    }

    /// `P[S^0(u) = 0] = N(u, 0) / 3^u`.
    pub fn return_probability(&self, u: usize) -> f64 {
        (self.log_count(u, 0) - u as f64 * 3f64.ln()).exp()
    }
}

/// Lazy walk from `x0` conditioned on `S(theta) = x0`.
pub fn sample_lazy_bridge(x0: i64, theta: usize, table: &TrinomialTable, stream: &mut RngStream) -> Result<LatticePath> {
    check_table(table, theta)?;
    let mut x = x0;
    let steps = (0..theta)
        .map(|u| {
            let s = bridge_step(table, theta - u, x0 - x, stream);
            x += s as i64;
            s
        })
        .collect();
    Ok(LatticePath { start: x0, steps, kind: ChainKind::LazyS })
}

fn check_table(table: &TrinomialTable, theta: usize) -> Result<()> {
    if table.theta() < theta {
        return Err(invalid("table", format!("covers theta <= {}, need {theta}", table.theta())));
    }
    Ok(())
}

/// Step with `remaining` steps left and displacement `need` still to make.
#[inline]
fn bridge_step(table: &TrinomialTable, remaining: usize, need: i64, stream: &mut RngStream) -> i8 {
    let base = table.log_count(remaining, need);
    let p_down = (table.log_count(remaining - 1, need + 1) - base).exp();
    let p_stay = (table.log_count(remaining - 1, need) - base).exp();
    let r = stream.uniform();
    if r < p_down {
        -1
    } else if r < p_down + p_stay {
        0
    } else {
        1
    }
}

/// Log-magnitude and sign of every path factor of one sample.
#[derive(Debug, Clone)]
pub struct FkWeights {
    n: usize,
    /// `1 - D(a)/m^2`, or the Robin factor at `a = 0`.
    hold: Vec<f64>,
    /// `1 - U(a)/m^2`, edge `a -> a + 1`.
    up: Vec<f64>,
    /// `1 - L(a)/m^2`, edge `a + 1 -> a`.
    down: Vec<f64>,
    log_hold: Vec<(f64, bool)>,
    log_up: Vec<(f64, bool)>,
    log_down: Vec<(f64, bool)>,
}

fn log_sign(x: f64) -> (f64, bool) {
    (x.abs().ln(), x < 0.0)
}

impl FkWeights {
    pub fn new(s: &EnsembleSample, boundary: Boundary) -> Result<Self> {
        let m2 = s.m_n * s.m_n;
        let mut hold: Vec<f64> = (0..=s.n).map(|a| 1.0 - s.d(a) / m2).collect();
        if boundary == Boundary::Robin {
            if s.spiked_matrix.is_none() {
                return Err(invalid("boundary", "robin boundary needs a spiked ensemble"));
            }
            hold[0] = 1.0 - (1.0 - s.w_n) / 2.0 - s.d(0) / (2.0 * m2);
        }
        let up: Vec<f64> = (0..s.n).map(|a| 1.0 - s.u(a) / m2).collect();
        let down: Vec<f64> = (0..s.n).map(|a| 1.0 - s.l(a) / m2).collect();
        Ok(Self {
            n: s.n,
            log_hold: hold.iter().map(|&x| log_sign(x)).collect(),
            log_up: up.iter().map(|&x| log_sign(x)).collect(),
            log_down: down.iter().map(|&x| log_sign(x)).collect(),
            hold,
            up,
            down,
        })
    }

    #[inline]
    fn edge_log(&self, from: i64, to: i64) -> (f64, bool) {
        match to - from {
            0 => self.log_hold[from as usize],
            1 => self.log_up[from as usize],
            _ => self.log_down[to as usize],
        }
    }

    #[inline]
    fn edge(&self, from: i64, to: i64) -> f64 {
        match to - from {
            0 => self.hold[from as usize],
            1 => self.up[from as usize],
            _ => self.down[to as usize],
        }
    }

    #[inline]
    fn inside(&self, x: i64) -> bool {
        x >= 0 && x <= self.n as i64
    }

    /// Product of factors along `path`, zero on exit, in log-abs form.
    pub fn evaluate(&self, path: &LatticePath) -> f64 {
        let mut acc = LogProduct::default();
        let pos = path.positions();
        if !self.inside(pos[0]) {
            return 0.0;
        }
        for w in pos.windows(2) {
            if !self.inside(w[1]) {
                return 0.0;
            }
            acc.push(self.edge_log(w[0], w[1]));
        }
        acc.value()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct LogProduct {
    log: f64,
    negative: bool,
}

impl LogProduct {
    #[inline]
    fn push(&mut self, (l, neg): (f64, bool)) {
        self.log += l;
        self.negative ^= neg;
    }

    #[inline]
    fn value(self) -> f64 {
        let v = self.log.exp();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

fn check_theta(s: &EnsembleSample, q: &SemigroupQuery, path: &LatticePath) -> Result<()> {
    let th = theta(s.m_n, q)? as usize;
    if th != path.theta() {
        return Err(invalid("path", format!("length {} differs from theta {th}", path.theta())));
    }
    Ok(())
}

/// Dirichlet functional of a lazy-walk path.
pub fn fk_functional(s: &EnsembleSample, path: &LatticePath, q: &SemigroupQuery) -> Result<f64> {
    if path.kind != ChainKind::LazyS {
        return Err(invalid("path", "expected a lazy walk path"));
    }
    check_theta(s, q, path)?;
    Ok(FkWeights::new(s, Boundary::Dirichlet)?.evaluate(path))
}

/// Robin functional of a reflected-chain path.
pub fn fk_functional_spiked(s: &EnsembleSample, path: &LatticePath, q: &SemigroupQuery) -> Result<f64> {
    if path.kind != ChainKind::ReflectedT {
        return Err(invalid("path", "expected a reflected chain path"));
    }
    check_theta(s, q, path)?;
    Ok(FkWeights::new(s, Boundary::Robin)?.evaluate(path))
}

/// `sum over paths of length theta from x` of `weight * F * g(end)` by
/// depth-first enumeration with direct products.
fn enumerate_from(w: &FkWeights, boundary: Boundary, x: i64, left: usize, g: &[f64]) -> f64 {
    if left == 0 {
        return g[x as usize];
    }
    let mut total = 0.0;
    for d in -1..=1 {
        let y = x + d;
        if !w.inside(y) {
            continue;
        }
        let mut factor = w.edge(x, y);
        if boundary == Boundary::Robin && x == 0 {
            match d {
                // The reflected chain never steps down from zero.
                -1 => continue,
                // Holding at zero has probability 2/3 = 2 * (1/3).
                0 => factor *= 2.0,
                _ => {}
            }
        }
        if factor != 0.0 {
            total += factor * enumerate_from(w, boundary, y, left - 1, g);
        }
    }
    total
}

/// `<f, K_n(t) g>` as an exact sum over all `3^theta` paths from every site.
pub fn exhaustive_pairing(s: &EnsembleSample, q: &SemigroupQuery, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_pair(f, g)?;
    let th = theta(s.m_n, q)? as usize;
    let size = (s.n + 1) as f64 * 3f64.powi(th as i32);
    if size > ENUMERATION_GUARD {
        return Err(Error::GuardExceeded { size, guard: ENUMERATION_GUARD });
    }
    let w = FkWeights::new(s, q.boundary)?;
    let scale = 3f64.powi(-(th as i32));
    let total: f64 = (0..=s.n)
        .filter(|&a| f.cells()[a] != 0.0)
        .map(|a| f.cells()[a] * scale * enumerate_from(&w, q.boundary, a as i64, th, g.cells()))
        .sum();
    Ok(s.m_n * total)
}

/// Per-site Monte Carlo with `counts[a]` paths from site `a`; the site
/// sum is exact.
fn stratified_run<F>(site_weights: &[f64], counts: &[usize], seed: &SeedSpec, draw: F) -> McEstimate
where
    F: Fn(usize, &mut RngStream) -> f64 + Sync,
{
    let strata: Vec<(f64, Welford)> = (0..site_weights.len())
        .into_par_iter()
        .map(|a| {
            let mut acc = Welford::default();
            if counts[a] > 0 {
                let mut stream = seed.stream(a as u64);
                for _ in 0..counts[a] {
                    acc.push(draw(a, &mut stream));
                }
            }
            (site_weights[a], acc)
        })
        .collect();
    combine_strata(&strata, seed)
}

/// Lazy walk from `a`, returning `F * g(end)`.
fn lazy_draw(w: &FkWeights, a: i64, th: usize, g: &[f64], stream: &mut RngStream) -> f64 {
    let mut acc = LogProduct::default();
    let mut x = a;
    for _ in 0..th {
        let y = x + stream.below(3) as i64 - 1;
        if !w.inside(y) {
            return 0.0;
        }
        acc.push(w.edge_log(x, y));
        x = y;
    }
    acc.value() * g[x as usize]
}

fn reflected_draw(w: &FkWeights, a: i64, th: usize, g: &[f64], stream: &mut RngStream) -> f64 {
    let mut acc = LogProduct::default();
    let mut x = a;
    for _ in 0..th {
        let y = x + reflected_step(x, stream) as i64;
        if !w.inside(y) {
            return 0.0;
        }
        acc.push(w.edge_log(x, y));
        x = y;
    }
    acc.value() * g[x as usize]
}

fn bridge_draw(w: &FkWeights, table: &TrinomialTable, a: i64, th: usize, stream: &mut RngStream) -> f64 {
    let mut acc = LogProduct::default();
    let mut x = a;
    for u in 0..th {
        let y = x + bridge_step(table, th - u, a - x, stream) as i64;
        if !w.inside(y) {
            return 0.0;
        }
        acc.push(w.edge_log(x, y));
        x = y;
    }
    acc.value()
}

fn pairing_setup(
    s: &EnsembleSample,
    q: &SemigroupQuery,
    f: &GridFunction,
    g: &GridFunction,
    n_replicas: usize,
) -> Result<Option<(usize, Vec<f64>, Vec<usize>)>> {
    check_pair(f, g)?;
    if f.len() != s.n + 1 {
        return Err(Error::DimensionMismatch { expected: s.n + 1, got: f.len() });
    }
    if n_replicas < 2 {
        return Err(invalid("n_replicas", "need at least 2"));
    }
    let th = theta(s.m_n, q)? as usize;
    if f.is_zero() || g.is_zero() {
        return Ok(None);
    }
    let weights: Vec<f64> = f.cells().iter().map(|c| s.m_n * c).collect();
    let counts = allocate(&weights, n_replicas)?;
    Ok(Some((th, weights, counts)))
}

/// Stratified Monte Carlo estimate of `<f, K_n(t) g>`. Robin queries are
/// routed to [`mc_pairing_spiked`].
pub fn mc_pairing(
    s: &EnsembleSample,
    q: &SemigroupQuery,
    f: &GridFunction,
    g: &GridFunction,
    n_replicas: usize,
    seed: &SeedSpec,
) -> Result<McEstimate> {
    if q.boundary == Boundary::Robin {
        return mc_pairing_spiked(s, q, f, g, n_replicas, seed);
    }
    let Some((th, weights, counts)) = pairing_setup(s, q, f, g, n_replicas)? else {
        return Ok(McEstimate::exact(0.0, seed));
    };
    let w = FkWeights::new(s, Boundary::Dirichlet)?;
    let gc = g.cells();
    Ok(stratified_run(&weights, &counts, seed, |a, st| lazy_draw(&w, a as i64, th, gc, st)))
}

/// As [`mc_pairing`] with reflected-chain paths and the Robin functional.
pub fn mc_pairing_spiked(
    s: &EnsembleSample,
    q: &SemigroupQuery,
    f: &GridFunction,
    g: &GridFunction,
    n_replicas: usize,
    seed: &SeedSpec,
) -> Result<McEstimate> {
    let w = FkWeights::new(s, Boundary::Robin)?;
    let Some((th, weights, counts)) = pairing_setup(s, q, f, g, n_replicas)? else {
        return Ok(McEstimate::exact(0.0, seed));
    };
    let gc = g.cells();
    Ok(stratified_run(&weights, &counts, seed, |a, st| reflected_draw(&w, a as i64, th, gc, st)))
}

/// Monte Carlo `Tr K_n(t) = P[S^0(theta) = 0] sum_a E^{a,a}[F]` with the
/// return probability exact and bridges sampled per site.
pub fn mc_trace(s: &EnsembleSample, q: &SemigroupQuery, n_replicas: usize, seed: &SeedSpec) -> Result<McEstimate> {
    if q.boundary == Boundary::Robin {
        return Err(Error::Unsupported("Robin traces need reflected bridges, which are not provided".into()));
    }
    let th = theta(s.m_n, q)? as usize;
    if th == 0 {
        return Ok(McEstimate::exact((s.n + 1) as f64, seed));
    }
    let table = TrinomialTable::build(th)?;
    let p0 = table.return_probability(th);
    let weights = vec![p0; s.n + 1];
    let counts = allocate(&weights, n_replicas)?;
    let w = FkWeights::new(s, Boundary::Dirichlet)?;
    Ok(stratified_run(&weights, &counts, seed, |a, st| bridge_draw(&w, &table, a as i64, th, st)))
}
