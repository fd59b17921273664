//! Monte Carlo estimators for the continuum Feynman-Kac kernels
//!
//! ```text
//! K(t; x, y)   = p_t(x - y) E^{x,y}[1{tau_0 > t} exp(-<L_t(B), Q'>)]
//! K^w(t; x, y) = (p_t(x - y) + p_t(x + y)) E^{x,y}[exp(-<L_t(X), Q'> - w L0_t(X))]
//! ```
//!
//! with `Q' = V + W'`, `W` a Brownian motion of variance `sigma^2`, `B` a
//! Brownian bridge and `X` a reflected Brownian bridge. Paths live on a time
//! grid of step `ds`; local times are binned on the same spatial grid of
//! width `h` that carries the white-noise increments, so
//! `<L, Q'> = sum_j L_j (V(y_j) h + dW_j)` with `y_j` the cell midpoint.
//! `L0` is the boundary local time `occupation([0, h)) / (2h)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::randomness::{RngStream, SeedSpec};
use crate::semigroup::Boundary;
use crate::stats::{McEstimate, Welford};

/// `sqrt(2 pi)`.
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Heat kernel `exp(-z^2 / 2t) / sqrt(2 pi t)`.
pub fn heat_kernel(t: f64, z: f64) -> f64 {
    (-z * z / (2.0 * t)).exp() / (SQRT_2PI * t.sqrt())
}

#[derive(Clone)]
pub enum Potential {
    /// `V(x) = x / 2`.
    Airy,
    Zero,
    Linear { slope: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Potential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Airy => 0.5 * x,
            Self::Zero => 0.0,
            Self::Linear { slope } => slope * x,
            Self::Custom(f) => f(x),
        }
    }
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Airy => write!(f, "Airy"),
            Self::Zero => write!(f, "Zero"),
            Self::Linear { slope } => write!(f, "Linear({slope})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// `Q' = V + W'` with `Var W(1) = sigma2`.
#[derive(Debug, Clone)]
pub struct ContinuumModel {
    pub sigma2: f64,
    pub potential: Potential,
}

impl ContinuumModel {
    /// `V(x) = x/2`, `sigma^2 = 1/beta`.
    pub fn airy(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self { sigma2: 1.0 / beta, potential: Potential::Airy })
    }

    /// No potential and no noise.
    pub fn free() -> Self {
        Self { sigma2: 0.0, potential: Potential::Zero }
    }
}

/// Discretisation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    /// Time step of the path grid.
    pub ds: f64,
    /// Width of the local-time bins and noise cells.
    pub h: f64,
}

impl Numerics {
    pub fn default_for(t: f64) -> Self {
        Self { ds: 1e-3 * t, h: 0.02 }
    }

    fn validate(&self, t: f64) -> Result<()> {
        if !(self.ds > 0.0 && self.ds <= t) {
            return Err(invalid("ds", format!("need 0 < ds <= t, got {}", self.ds)));
        }
        if !(self.h > 0.0) {
            return Err(invalid("h", format!("must be positive, got {}", self.h)));
        }
        Ok(())
    }
}

/// Padding added above the largest endpoint when sizing a noise field.
pub fn field_padding(t: f64) -> f64 {
    6.0 * t.sqrt() + 5.0
}

/// White-noise increments on the cells `[jh, (j+1)h)` of `[0, y_max)`.
#[derive(Debug, Clone)]
pub struct NoiseField {
    pub h: f64,
    pub y_max: f64,
    pub sigma2: f64,
    pub increments: Vec<f64>,
    /// `V` at the cell midpoints.
    pub potential: Vec<f64>,
}

impl NoiseField {
    pub fn sample(model: &ContinuumModel, h: f64, y_max: f64, stream: &mut RngStream) -> Result<Self> {
        if !(h > 0.0) || !(y_max > 0.0) {
            return Err(invalid("h", "grid step and extent must be positive"));
        }
        if !(model.sigma2 >= 0.0) {
            return Err(invalid("sigma2", "must be nonnegative"));
        }
        let len = (y_max / h).ceil() as usize;
        let sd = (model.sigma2 * h).sqrt();
        let increments = (0..len)
            .map(|_| if sd == 0.0 { 0.0 } else { sd * stream.standard_normal() })
            .collect();
        let potential = (0..len).map(|j| model.potential.eval((j as f64 + 0.5) * h)).collect();
        Ok(Self { h, y_max, sigma2: model.sigma2, increments, potential })
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// SHA-256 of the increments, identifying the field a weight used.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for x in &self.increments {
            hasher.update(x.to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `V(y_j) + dW_j / h` for the cell holding `y`.
    #[inline]
    fn rate(&self, y: f64) -> Result<f64> {
        let k = (y / self.h).floor();
        if k < 0.0 || k as usize >= self.len() {
            return Err(Error::FieldTooShort { level: y, extent: self.len() as f64 * self.h });
        }
        let k = k as usize;
        Ok(self.potential[k] + self.increments[k] / self.h)
    }
}

/// Values of a path on `s_i = i ds`, `0 <= i <= K`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownPath {
    pub ds: f64,
    pub values: Vec<f64>,
    pub horizon: f64,
    /// Quadratic variation per unit time.
    pub variance_rate: f64,
}

impl BrownPath {
    pub fn start(&self) -> f64 {
        self.values[0]
    }

    pub fn end(&self) -> f64 {
        *self.values.last().expect("paths have at least two points")
    }

    /// Trapezoidal time weight of grid point `i`.
    #[inline]
    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.values.len() {
            0.5 * self.ds
        } else {
            self.ds
        }
    }
}

fn grid_steps(t: f64, ds: f64) -> Result<(usize, f64)> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    if !(ds > 0.0 && ds <= t * (1.0 + 1e-12)) {
        return Err(invalid("ds", format!("need 0 < ds <= t, got {ds}")));
    }
    let k = ((t / ds).round() as usize).max(1);
    Ok((k, t / k as f64))
}

/// Standard Brownian bridge from `x` at time 0 to `y` at time `t`.
pub fn sample_bridge(x: f64, y: f64, t: f64, ds: f64, stream: &mut RngStream) -> Result<BrownPath> {
    let (k, ds) = grid_steps(t, ds)?;
    let mut values = Vec::with_capacity(k + 1);
    values.push(x);
    let mut v = x;
    for i in 1..k {
        let rem = t - (i - 1) as f64 * ds;
        let mean = v + (y - v) * ds / rem;
        let var = ds * (rem - ds) / rem;
        v = mean + var.max(0.0).sqrt() * stream.standard_normal();
        values.push(v);
    }
    values.push(y);
    Ok(BrownPath { ds, values, horizon: t, variance_rate: 1.0 })
}

/// Standard Brownian motion from `x` over `[0, t]`.
pub fn sample_brownian(x: f64, t: f64, ds: f64, stream: &mut RngStream) -> Result<BrownPath> {
    let (k, ds) = grid_steps(t, ds)?;
    let sd = ds.sqrt();
    let mut values = Vec::with_capacity(k + 1);
    let mut v = x;
    values.push(v);
    for _ in 0..k {
        v += sd * stream.standard_normal();
        values.push(v);
    }
    Ok(BrownPath { ds, values, horizon: t, variance_rate: 1.0 })
}

/// Probability that the continuous path interpolating the grid values by
/// Brownian bridges stays positive.
pub fn survival_probability(path: &BrownPath) -> f64 {
    let scale = 2.0 / (path.variance_rate * path.ds);
    let mut log_p = 0.0;
    for w in path.values.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a <= 0.0 || b <= 0.0 {
            return 0.0;
        }
        log_p += (-(-scale * a * b).exp()).ln_1p();
    }
    log_p.exp()
}

/// Randomised survival indicator with the exact sub-grid crossing law.
pub fn survival_weight(path: &BrownPath, stream: &mut RngStream) -> f64 {
    let p = survival_probability(path);
    if p > 0.0 && stream.uniform() < p {
        1.0
    } else {
        0.0
    }
}

/// Binned occupation density: bin `j` covers `[origin + jh, origin + (j+1)h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeProfile {
    pub h: f64,
    pub origin: f64,
    pub values: Vec<f64>,
}

impl LocalTimeProfile {
    /// Left edge of bin `j`.
    pub fn level(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.h
    }

    /// `sum values * h`, equal to the time horizon.
    pub fn total_time(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.h
    }

    /// Density of the bin holding `y`, zero outside the profile.
    pub fn at(&self, y: f64) -> f64 {
        let j = ((y - self.origin) / self.h).floor();
        if j < 0.0 {
            return 0.0;
        }
        self.values.get(j as usize).copied().unwrap_or(0.0)
    }
}

/// Local time with bins aligned to multiples of `h`.
pub fn local_time(path: &BrownPath, h: f64) -> Result<LocalTimeProfile> {
    local_time_shifted(path, h, 0.0)
}

/// Local time with bin edges at `offset + jh`, `j` any integer.
pub fn local_time_shifted(path: &BrownPath, h: f64, offset: f64) -> Result<LocalTimeProfile> {
    if !(h > 0.0) {
        return Err(invalid("h", "must be positive"));
    }
    let lo = path.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = path.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = ((lo - offset) / h).floor() as i64;
    let last = ((hi - offset) / h).floor() as i64;
    let mut values = vec![0.0; (last - first + 1) as usize];
    for (i, &v) in path.values.iter().enumerate() {
        let j = ((v - offset) / h).floor() as i64 - first;
        values[j as usize] += path.weight(i) / h;
    }
    Ok(LocalTimeProfile { h, origin: offset + first as f64 * h, values })
}

/// Skorokhod reflection `Z + sup_{s' <= s} (-Z(s'))_+` and the boundary
/// local time `sup (-Z)_+ / sigma^2`.
pub fn reflect_and_boundary_lt(path: &BrownPath) -> (BrownPath, f64) {
    let mut running = 0.0f64;
    let values = path
        .values
        .iter()
        .map(|&z| {
            running = running.max(-z);
            z + running
        })
        .collect();
    let reflected = BrownPath { values, ..path.clone() };
    (reflected, running / path.variance_rate)
}

/// `occupation([0, h)) / (2h)` of a nonnegative path.
pub fn boundary_lt_occupation(path: &BrownPath, h: f64) -> f64 {
    let occ: f64 = path
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| (0.0..h).contains(&v))
        .map(|(i, _)| path.weight(i))
        .sum();
    occ / (2.0 * h)
}

/// `exp(-sum_j L_j (V_j h + dW_j) - w L0)`.
pub fn fk_weight(noise: &NoiseField, lt: &LocalTimeProfile, boundary_lt: f64, w: f64) -> Result<f64> {
    if (lt.h - noise.h).abs() > 1e-12 * noise.h {
        return Err(invalid("h", "local time bins must match the noise grid"));
    }
    let shift = lt.origin / noise.h;
    if (shift - shift.round()).abs() > 1e-9 {
        return Err(invalid("origin", "local time bins must align with the noise cells"));
    }
    let shift = shift.round() as i64;
    let mut exponent = 0.0;
    for (j, &l) in lt.values.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let k = shift + j as i64;
        if k < 0 || k as usize >= noise.len() {
            return Err(Error::FieldTooShort { level: lt.level(j), extent: noise.len() as f64 * noise.h });
        }
        let k = k as usize;
        exponent += l * (noise.potential[k] * noise.h + noise.increments[k]);
    }
    Ok((-exponent - w * boundary_lt).exp())
}

/// `sum_i weight_i (V + dW/h)(path_i)`, the same exponent as [`fk_weight`]
/// without materialising the profile.
fn path_exponent(noise: &NoiseField, path: &BrownPath) -> Result<f64> {
    let mut e = 0.0;
    for (i, &v) in path.values.iter().enumerate() {
        e += path.weight(i) * noise.rate(v)?;
    }
    Ok(e)
}

fn check_common(t: f64, numerics: &Numerics, n_replicas: usize) -> Result<()> {
    numerics.validate(t)?;
    if n_replicas < 2 {
        return Err(invalid("n_replicas", "need at least 2"));
    }
    Ok(())
}

/// Replica `i`'s noise field.
pub fn replica_field(model: &ContinuumModel, numerics: &Numerics, y_max: f64, stream: &mut RngStream) -> Result<NoiseField> {
    NoiseField::sample(model, numerics.h, y_max, stream)
}

fn mc_mean<F>(n_replicas: usize, seed: &SeedSpec, prefactor: f64, draw: F) -> Result<McEstimate>
where
    F: Fn(&mut RngStream) -> Result<f64> + Sync,
{
    let xs = (0..n_replicas as u64)
        .into_par_iter()
        .map(|i| draw(&mut seed.stream(i)))
        .collect::<Result<Vec<f64>>>()?;
    let acc = xs.iter().fold(Welford::default(), |mut w, &x| {
        w.push(x);
        w
    });
    Ok(McEstimate {
        mean: prefactor * acc.mean(),
        stderr: prefactor.abs() * acc.stderr(),
        n_replicas,
        seed: seed.clone(),
    })
}

/// Dirichlet weight of a bridge `x -> y`, with the exact survival
/// probability in place of the survival indicator.
fn sas_draw(model: &ContinuumModel, numerics: &Numerics, t: f64, x: f64, y: f64, stream: &mut RngStream) -> Result<f64> {
    let field = replica_field(model, numerics, x.max(y) + field_padding(t), stream)?;
    let path = sample_bridge(x, y, t, numerics.ds, stream)?;
    let p = survival_probability(&path);
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(p * (-path_exponent(&field, &path)?).exp())
}

/// Estimate of `K(t; x, y)`.
pub fn sas_kernel(
    t: f64,
    x: f64,
    y: f64,
    model: &ContinuumModel,
    numerics: &Numerics,
    n_replicas: usize,
    seed: &SeedSpec,
) -> Result<McEstimate> {
    check_common(t, numerics, n_replicas)?;
    if x < 0.0 || y < 0.0 {
        return Err(invalid("x", "kernel arguments must be nonnegative"));
    }
    mc_mean(n_replicas, seed, heat_kernel(t, x - y), |st| sas_draw(model, numerics, t, x, y, st))
}

/// Reflected bridge `x -> y`: a free bridge to `+y` or `-y`, chosen with
/// probabilities proportional to `p_t(x - y)` and `p_t(x + y)`, then `|.|`.
pub fn sample_reflected_bridge(x: f64, y: f64, t: f64, ds: f64, stream: &mut RngStream) -> Result<BrownPath> {
    let (direct, mirror) = (heat_kernel(t, x - y), heat_kernel(t, x + y));
    let target = if stream.uniform() * (direct + mirror) < direct { y } else { -y };
    let mut path = sample_bridge(x, target, t, ds, stream)?;
    path.values.iter_mut().for_each(|v| *v = v.abs());
    Ok(path)
}

fn robin_draw(
    model: &ContinuumModel,
    numerics: &Numerics,
    t: f64,
    x: f64,
    y: f64,
    w: f64,
    stream: &mut RngStream,
) -> Result<f64> {
    let field = replica_field(model, numerics, x.max(y) + field_padding(t), stream)?;
    let path = sample_reflected_bridge(x, y, t, numerics.ds, stream)?;
    let l0 = boundary_lt_occupation(&path, numerics.h);
    Ok((-path_exponent(&field, &path)? - w * l0).exp())
}

/// Estimate of `K^w(t; x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn robin_kernel(
    t: f64,
    x: f64,
    y: f64,
    model: &ContinuumModel,
    w: f64,
    numerics: &Numerics,
    n_replicas: usize,
    seed: &SeedSpec,
) -> Result<McEstimate> {
    check_common(t, numerics, n_replicas)?;
    if x < 0.0 || y < 0.0 {
        return Err(invalid("x", "kernel arguments must be nonnegative"));
    }
    let prefactor = heat_kernel(t, x - y) + heat_kernel(t, x + y);
    mc_mean(n_replicas, seed, prefactor, |st| robin_draw(model, numerics, t, x, y, w, st))
}

/// Piecewise-constant sampling density proportional to `|f|` on a grid of
/// `[0, x_max)`.
struct CellSampler {
    width: f64,
    peak: f64,
    cdf: Vec<f64>,
    density: Vec<f64>,
}

impl CellSampler {
    fn new(f: &dyn Fn(f64) -> f64, x_max: f64, cells: usize) -> Self {
        let width = x_max / cells as f64;
        // Midpoint magnitude plus a small floor so no cell with mass is missed.
        let raw: Vec<f64> = (0..cells)
            .map(|j| {
                let (a, m, b) = (j as f64 * width, (j as f64 + 0.5) * width, (j as f64 + 1.0) * width);
                f(a).abs().max(f(m).abs()).max(f(b).abs())
            })
            .collect();
        let peak = raw.iter().copied().fold(0.0, f64::max);
        let masses: Vec<f64> = raw.iter().map(|r| (r + 1e-6 * peak) * width).collect();
        let total: f64 = masses.iter().sum();
        let mut cdf = Vec::with_capacity(cells);
        let mut acc = 0.0;
        for m in &masses {
            acc += m / total;
            cdf.push(acc);
        }
        let density = masses.iter().map(|m| m / total / width).collect();
        Self { width, peak, cdf, density }
    }

    /// `(x, q(x))`.
    fn draw(&self, stream: &mut RngStream) -> (f64, f64) {
        let u = stream.uniform();
        let j = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let x = (j as f64 + stream.uniform()) * self.width;
        (x, self.density[j])
    }
}

/// Estimate of `<f, K(t) g>` (or `<f, K^w(t) g>` for a Robin boundary) by
/// importance-sampling the start `x` from `|f|` on `[0, x_max)` and running a
/// Brownian motion (reflected for Robin) to time `t`.
#[allow(clippy::too_many_arguments)]
pub fn continuum_pairing(
    t: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    g: &(dyn Fn(f64) -> f64 + Sync),
    x_max: f64,
    model: &ContinuumModel,
    boundary: Boundary,
    w: f64,
    numerics: &Numerics,
    n_replicas: usize,
    seed: &SeedSpec,
) -> Result<McEstimate> {
    check_common(t, numerics, n_replicas)?;
    if !(x_max > 0.0) {
        return Err(invalid("x_max", "must be positive"));
    }
    let sampler = CellSampler::new(&f, x_max, 4096);
    if sampler.peak == 0.0 {
        return Ok(McEstimate::exact(0.0, seed));
    }
    mc_mean(n_replicas, seed, 1.0, |st| {
        let (x, q) = sampler.draw(st);
        let fx = f(x);
        if fx == 0.0 {
            return Ok(0.0);
        }
        let mut path = sample_brownian(x, t, numerics.ds, st)?;
        let (survive, l0) = match boundary {
            Boundary::Dirichlet => (survival_probability(&path), 0.0),
            Boundary::Robin => {
                path.values.iter_mut().for_each(|v| *v = v.abs());
                (1.0, boundary_lt_occupation(&path, numerics.h))
            }
        };
        let gy = g(path.end());
        if survive == 0.0 || gy == 0.0 {
            return Ok(0.0);
        }
        let top = path.values.iter().copied().fold(0.0, f64::max);
        let field = replica_field(model, numerics, top.max(x) + numerics.h, st)?;
        Ok(fx / q * survive * gy * (-path_exponent(&field, &path)? - w * l0).exp())
    })
}

/// Estimate of `Tr K(t) = int_0^inf K(t; x, x) dx`. Starts are drawn from
/// the density `(t/2) exp(-t x / 2)`, which matches the decay of the
/// diagonal under `V(x) = x/2`, so no truncation is needed.
pub fn continuum_trace(t: f64, model: &ContinuumModel, numerics: &Numerics, n_replicas: usize, seed: &SeedSpec) -> Result<McEstimate> {
    check_common(t, numerics, n_replicas)?;
    let rate = 0.5 * t;
    mc_mean(n_replicas, seed, heat_kernel(t, 0.0), |st| {
        let x = -(1.0 - st.uniform()).ln() / rate;
        let q = rate * (-rate * x).exp();
        Ok(sas_draw(model, numerics, t, x, x, st)? / q)
    })
}
