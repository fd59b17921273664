//! Monte Carlo summaries.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::randomness::SeedSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_replicas: usize,
    pub seed: SeedSpec,
}

impl McEstimate {
    pub fn exact(value: f64, seed: &SeedSpec) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            n_replicas: 0,
            seed: seed.clone(),
        }
    }

    /// Plain sample mean and `sd / sqrt(N)`.
    pub fn from_samples(xs: &[f64], seed: &SeedSpec) -> Self {
        let acc = xs.iter().fold(Welford::default(), |mut w, &x| {
            w.push(x);
            w
        });
        Self {
            mean: acc.mean(),
            stderr: acc.stderr(),
            n_replicas: xs.len(),
            seed: seed.clone(),
        }
    }

    /// `|mean - target| <= k * stderr`.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Split `total` replicas across strata: two each, the rest by largest
/// remainder in proportion to `|weight|`. Zero-weight strata get none.
pub fn allocate(weights: &[f64], total: usize) -> Result<Vec<usize>> {
    let active = weights.iter().filter(|w| **w != 0.0).count();
    if total < 2 * active {
        return Err(invalid(
            "n_replicas",
            format!("{total} replicas cannot cover {active} strata with two each"),
        ));
    }
    let mut counts: Vec<usize> = weights.iter().map(|w| if *w != 0.0 { 2 } else { 0 }).collect();
    let spare = total - 2 * active;
    let norm: f64 = weights.iter().map(|w| w.abs()).sum();
    if spare == 0 || norm == 0.0 {
        return Ok(counts);
    }
    let shares: Vec<f64> = weights.iter().map(|w| spare as f64 * w.abs() / norm).collect();
    let mut given = 0;
    for (c, s) in counts.iter_mut().zip(&shares) {
        let whole = s.floor() as usize;
        *c += whole;
        given += whole;
    }
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] != 0.0).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (shares[i] - shares[i].floor(), shares[j] - shares[j].floor());
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().take(spare.saturating_sub(given)) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Combine per-stratum summaries into `sum_s w_s mean_s` with standard
/// error `sqrt(sum_s w_s^2 var_s / N_s)`.
pub fn combine_strata(strata: &[(f64, Welford)], seed: &SeedSpec) -> McEstimate {
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut n = 0;
    for (w, acc) in strata {
        if acc.count() == 0 {
            continue;
        }
        mean += w * acc.mean();
        var += w * w * acc.variance() / acc.count() as f64;
        n += acc.count() as usize;
    }
    McEstimate {
        mean,
        stderr: var.sqrt(),
        n_replicas: n,
        seed: seed.clone(),
    }
}

/// Pearson chi-square statistic of observed counts against expected
/// counts, with `cells - 1` degrees of freedom and its upper-tail p-value.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> Result<(f64, usize, f64)> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(invalid("observed", "need matching count vectors with at least two cells"));
    }
    if expected.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("expected", "every expected count must be positive"));
    }
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = observed.len() - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| invalid("df", e.to_string()))?;
    Ok((stat, df, 1.0 - dist.cdf(stat)))
}

/// Least-squares line `y = intercept + slope x` with the slope's standard
/// error.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(invalid("points", "need at least three (x, y) pairs"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "x values are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    Ok((slope, intercept, se))
}
