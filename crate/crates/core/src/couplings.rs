//! Couplings between the lazy walk `S` and the reflected chain `T`, and the
//! experiments that measure how fast occupation statistics converge.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::randomness::{map_replicas, RngStream, SeedSpec};
use crate::spectra::ks_one_sample;
use crate::stats::{linear_fit, Welford};
use crate::walk_fk::{reflected_step, sample_lazy_path, ChainKind, LatticePath};

/// Largest `theta` accepted by [`fiber_check`].
pub const MAX_FIBER_THETA: usize = 14;

/// Discrete Skorokhod map `Gamma(A)(u) = A(u) + max_{s <= u} (-A(s))_+`.
pub fn skorokhod_map_discrete(path: &LatticePath) -> LatticePath {
    let mut pushed = 0i64;
    let mut prev = None;
    let mut steps = Vec::with_capacity(path.theta());
    let mut start = 0;
    for a in path.positions() {
        pushed = pushed.max(-a);
        let g = a + pushed;
        match prev {
            None => start = g,
            Some(p) => steps.push((g - p) as i8),
        }
        prev = Some(g);
    }
    LatticePath { start, steps, kind: ChainKind::ReflectedT }
}

fn check_nonnegative(a: &LatticePath) -> Result<()> {
    if a.positions().iter().any(|&x| x < 0) || a.steps.iter().any(|s| !(-1..=1).contains(s)) {
        return Err(invalid("path", "expected a nonnegative path with steps in {-1, 0, 1}"));
    }
    Ok(())
}

/// Size of the fiber `Gamma^{-1}(A)`, `2^{H_0(A)}`.
pub fn count_preimages(a: &LatticePath) -> Result<u128> {
    check_nonnegative(a)?;
    let h0 = a.zero_holds();
    if h0 >= 128 {
        return Err(invalid("path", format!("{h0} zero holds overflow the preimage count")));
    }
    Ok(1u128 << h0)
}

/// Uniform draw from `Gamma^{-1}(A)`: every zero hold independently becomes
/// a 0 or -1 increment.
pub fn sample_preimage(a: &LatticePath, stream: &mut RngStream) -> Result<LatticePath> {
    check_nonnegative(a)?;
    let pos = a.positions();
    let steps = a
        .steps
        .iter()
        .enumerate()
        .map(|(u, &s)| if pos[u] == 0 && s == 0 && stream.coin() { -1 } else { s })
        .collect();
    Ok(LatticePath { start: a.start, steps, kind: ChainKind::LazyS })
}

/// Every lazy path of length `theta` from 0, in lexicographic step order.
pub fn all_lazy_paths(theta: usize) -> Result<Vec<LatticePath>> {
    if theta > MAX_FIBER_THETA {
        return Err(invalid("theta", format!("enumeration limited to theta <= {MAX_FIBER_THETA}")));
    }
    let total = 3usize.pow(theta as u32);
    Ok((0..total)
        .map(|mut code| {
            let mut steps = vec![0i8; theta];
            for s in steps.iter_mut().rev() {
                *s = (code % 3) as i8 - 1;
                code /= 3;
            }
            LatticePath { start: 0, steps, kind: ChainKind::LazyS }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberReport {
    pub theta: usize,
    /// Distinct images, i.e. `|C_+|`.
    pub images: usize,
    /// `sum_{A in C_+} 2^{H_0(A)}`; equals `3^theta` when exact.
    pub preimage_total: u128,
    /// Images whose enumerated fiber size differs from `2^{H_0}`.
    pub mismatches: usize,
    /// Nonnegative paths missed by the map.
    pub unreached: usize,
}

impl FiberReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches == 0 && self.unreached == 0 && self.preimage_total == 3u128.pow(self.theta as u32)
    }
}

/// Exhaustive fiber check of `Gamma` on all lazy paths of length `theta`.
pub fn fiber_check(theta: usize) -> Result<FiberReport> {
    let paths = all_lazy_paths(theta)?;
    let mut fibers: HashMap<Vec<i8>, u128> = HashMap::new();
    for p in &paths {
        *fibers.entry(skorokhod_map_discrete(p).steps).or_insert(0) += 1;
    }
    let mut mismatches = 0;
    let mut preimage_total = 0;
    for (steps, &n) in &fibers {
        let a = LatticePath { start: 0, steps: steps.clone(), kind: ChainKind::ReflectedT };
        let want = count_preimages(&a)?;
        preimage_total += want;
        if want != n {
            mismatches += 1;
        }
    }
    let unreached = paths
        .iter()
        .filter(|p| p.positions().iter().all(|&x| x >= 0) && !fibers.contains_key(&p.steps))
        .count();
    Ok(FiberReport { theta, images: fibers.len(), preimage_total, mismatches, unreached })
}

/// Lazy path `S` with `T(u) = |S(rho(u))|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeChange {
    pub s: LatticePath,
    pub rho: Vec<usize>,
    /// Zero holds of `T` that are real holds of `S`.
    pub kept_zero_holds: usize,
}

struct Builder {
    x: i64,
    steps: Vec<i8>,
    rho: Vec<usize>,
    kept: usize,
}

impl Builder {
    fn new(x0: i64) -> Self {
        Self { x: x0, steps: Vec::new(), rho: vec![0], kept: 0 }
    }

    /// Absorb one step `dt` of `T` taken from `|x|`.
    fn push(&mut self, dt: i8, stream: &mut RngStream) {
        let s = if self.x == 0 {
            match dt {
                0 => {
                    // A real hold of S with probability 1/4, otherwise skipped.
                    if stream.below(4) == 0 {
                        self.kept += 1;
                        Some(0)
                    } else {
                        None
                    }
                }
                _ => Some(if stream.coin() { 1 } else { -1 }),
            }
        } else {
            Some(self.x.signum() as i8 * dt)
        };
        if let Some(s) = s {
            self.x += s as i64;
            self.steps.push(s);
        }
        self.rho.push(self.steps.len());
    }
}

/// Invert the zero-hold skipping rule: given a reflected path `T`, build a
/// lazy path `S` and time change `rho` with `T = |S o rho|`.
pub fn time_change_couple(t_path: &LatticePath, stream: &mut RngStream) -> Result<TimeChange> {
    check_nonnegative(t_path)?;
    let mut b = Builder::new(t_path.start);
    for &dt in &t_path.steps {
        b.push(dt, stream);
    }
    Ok(TimeChange {
        s: LatticePath { start: t_path.start, steps: b.steps, kind: ChainKind::LazyS },
        rho: b.rho,
        kept_zero_holds: b.kept,
    })
}

/// Run the reflected chain from `x0` and couple it until `S` has exactly
/// `theta_s` steps. Returns `(T, coupling)`.
pub fn sample_time_change_pair(x0: i64, theta_s: usize, stream: &mut RngStream) -> Result<(LatticePath, TimeChange)> {
    if x0 < 0 {
        return Err(invalid("x0", "reflected chain starts at a nonnegative site"));
    }
    let mut b = Builder::new(x0);
    let mut t_steps = Vec::new();
    let mut t = x0;
    while b.steps.len() < theta_s {
        let dt = reflected_step(t, stream);
        t += dt as i64;
        t_steps.push(dt);
        b.push(dt, stream);
    }
    let t_path = LatticePath { start: x0, steps: t_steps, kind: ChainKind::ReflectedT };
    let tc = TimeChange {
        s: LatticePath { start: x0, steps: b.steps, kind: ChainKind::LazyS },
        rho: b.rho,
        kept_zero_holds: b.kept,
    };
    Ok((t_path, tc))
}

/// Drop the zero increments. Returns the simple walk and the number removed.
pub fn remove_self_edges(path: &LatticePath) -> (LatticePath, usize) {
    let steps: Vec<i8> = path.steps.iter().copied().filter(|&s| s != 0).collect();
    let h = path.theta() - steps.len();
    (LatticePath { start: path.start, steps, kind: path.kind }, h)
}

/// `sup_{u <= theta, |a-b| <= 1} |Lambda^{(a,b)}_u - Lambda^a_u / 3|` for one
/// path, unnormalised.
pub fn occupation_split_sup(path: &LatticePath) -> f64 {
    let theta = path.theta() as i64;
    let off = theta - path.start;
    let width = (2 * theta + 1) as usize;
    let mut vertex = vec![0u32; width];
    let mut edge = vec![[0u32; 3]; width];
    let mut x = path.start;
    let mut sup: f64 = 0.0;
    for &s in &path.steps {
        let i = (x + off) as usize;
        vertex[i] += 1;
        edge[i][(s + 1) as usize] += 1;
        let third = vertex[i] as f64 / 3.0;
        for e in edge[i] {
            sup = sup.max((e as f64 - third).abs());
        }
        x += s as i64;
    }
    sup
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub m_n: f64,
    pub error: f64,
    pub stderr: f64,
}

/// Log-log least-squares fit of mean error against `m_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

impl RateFit {
    pub fn from_points(points: Vec<RatePoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(invalid("m_list", "rate fits need at least four grid points"));
        }
        if points.iter().any(|p| !(p.m_n > 0.0 && p.error > 0.0)) {
            return Err(invalid("points", "log-log fit needs positive m_n and error"));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.m_n.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
        let (slope, intercept, slope_stderr) = linear_fit(&xs, &ys)?;
        if !slope.is_finite() {
            return Err(invalid("points", "non-finite slope"));
        }
        Ok(Self { points, slope, intercept, slope_stderr })
    }
}

fn check_grid(m_list: &[usize], t: f64, reps: usize) -> Result<()> {
    if m_list.len() < 4 {
        return Err(invalid("m_list", "need at least four values of m_n"));
    }
    if m_list.iter().any(|&m| m == 0) {
        return Err(invalid("m_list", "m_n must be positive"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", "must be positive and finite"));
    }
    if reps < 2 {
        return Err(invalid("reps", "need at least two replicas"));
    }
    Ok(())
}

fn steps_for(m: usize, t: f64) -> usize {
    ((m * m) as f64 * t).floor() as usize
}

/// Mean normalised occupation-split error on each `m_n`, with a log-log fit.
pub fn occupation_split_experiment(m_list: &[usize], t: f64, reps: usize, seed: &SeedSpec) -> Result<RateFit> {
    check_grid(m_list, t, reps)?;
    let points = m_list
        .iter()
        .map(|&m| {
            let theta = steps_for(m, t);
            let sub = seed.child(&format!("m{m}"));
            let errs = map_replicas(&sub, 0..reps as u64, |_, s| {
                occupation_split_sup(&sample_lazy_path(0, theta, s)) / m as f64
            });
            let mut acc = Welford::default();
            errs.iter().for_each(|&e| acc.push(e));
            RatePoint { m_n: m as f64, error: acc.mean(), stderr: acc.stderr() }
        })
        .collect();
    RateFit::from_points(points)
}

/// CDF of `2 |N(0, 2t/3)|`.
pub fn boundary_lt_limit_cdf(t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let sd = (2.0 * t / 3.0).sqrt();
    statrs::function::erf::erf(x / (2.0 * sd * std::f64::consts::SQRT_2))
}

/// Mean of `2 |N(0, 2t/3)|`, `4 sqrt(t / (3 pi))`.
pub fn boundary_lt_limit_mean(t: f64) -> f64 {
    4.0 * (t / (3.0 * std::f64::consts::PI)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLtRow {
    pub m_n: usize,
    pub theta: usize,
    pub samples: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub mean: f64,
    pub mean_stderr: f64,
    /// 99th percentile of `sup_u |Lambda^{(0,0)}_u - 2 max(-S)_+| / sqrt(m_n)`.
    pub pathwise_p99: f64,
    /// `pathwise_p99 / log(m_n)^{3/4}`.
    pub pathwise_ratio: f64,
}

/// One coupled draw: `(Lambda^{(0,0)}_theta(Gamma S), sup_u |Lambda^{(0,0)}_u - 2 max_{s<=u}(-S)_+|)`.
fn boundary_lt_draw(theta: usize, stream: &mut RngStream) -> (u64, u64) {
    let mut s = 0i64;
    let mut pushed = 0i64;
    let mut holds = 0u64;
    let mut dev = 0u64;
    for _ in 0..theta {
        let t_before = s + pushed;
        s += stream.below(3) as i64 - 1;
        pushed = pushed.max(-s);
        if t_before == 0 && s + pushed == 0 {
            holds += 1;
        }
        dev = dev.max(holds.abs_diff(2 * pushed as u64));
    }
    (holds, dev)
}

/// Law of the normalised boundary hold count `Lambda^{(0,0)}_theta(T^0) / m_n`
/// against its limit, with `T = Gamma(S)`.
pub fn boundary_lt_experiment(m_list: &[usize], t: f64, reps: usize, seed: &SeedSpec) -> Result<Vec<BoundaryLtRow>> {
    if m_list.is_empty() || m_list.iter().any(|&m| m == 0) {
        return Err(invalid("m_list", "need positive values of m_n"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", "must be positive and finite"));
    }
    m_list
        .iter()
        .map(|&m| {
            let theta = steps_for(m, t);
            let sub = seed.child(&format!("m{m}"));
            let draws = map_replicas(&sub, 0..reps as u64, |_, s| boundary_lt_draw(theta, s));
            let mf = m as f64;
            let xs: Vec<f64> = draws.iter().map(|d| d.0 as f64 / mf).collect();
            let (ks_statistic, ks_p_value) = ks_one_sample(&xs, |x| boundary_lt_limit_cdf(t, x))?;
            let mut acc = Welford::default();
            xs.iter().for_each(|&x| acc.push(x));
            let mut devs: Vec<f64> = draws.iter().map(|d| d.1 as f64 / mf.sqrt()).collect();
            devs.sort_by(f64::total_cmp);
            let idx = ((0.99 * devs.len() as f64).ceil() as usize).clamp(1, devs.len()) - 1;
            let pathwise_p99 = devs[idx];
            let lg = mf.ln().max(1.0);
            Ok(BoundaryLtRow {
                m_n: m,
                theta,
                samples: reps,
                ks_statistic,
                ks_p_value,
                mean: acc.mean(),
                mean_stderr: acc.stderr(),
                pathwise_p99,
                pathwise_ratio: pathwise_p99 / lg.powf(0.75),
            })
        })
        .collect()
}

/// Probability of a reflected path from its start under the T-chain.
pub fn reflected_path_probability(a: &LatticePath) -> f64 {
    let pos = a.positions();
    pos.windows(2)
        .map(|w| match (w[0], w[1] - w[0]) {
            (0, 0) => 2.0 / 3.0,
            (0, 1) => 1.0 / 3.0,
            (0, _) => 0.0,
            _ => 1.0 / 3.0,
        })
        .product()
}
