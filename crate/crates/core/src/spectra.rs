//! Extreme eigenvalues of tridiagonal matrices by Sturm-count bisection,
//! symmetrization of sign-consistent non-symmetric tridiagonals, and a
//! two-sample Kolmogorov-Smirnov test.

use serde::{Deserialize, Serialize};

use crate::ensembles::{sample, EnsembleKind, EnsembleSample, ModelParams};
use crate::error::{invalid, Error, Result};
use crate::randomness::{map_replicas, SeedSpec};
use crate::tridiag::TridiagonalMatrix;

/// Diagonally similar symmetric matrix: same diagonal, off-diagonal
/// `sign(upper) sqrt(upper * lower)`.
pub fn symmetrize_matrix(m: &TridiagonalMatrix) -> Result<TridiagonalMatrix> {
    if m.is_symmetric() {
        return Ok(m.clone());
    }
    let off = m
        .upper()
        .iter()
        .zip(m.lower())
        .enumerate()
        .map(|(index, (&u, &l))| {
            let product = u * l;
            if product > 0.0 {
                Ok(u.signum() * product.sqrt())
            } else {
                Err(Error::NotSymmetrizable { index, product })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    TridiagonalMatrix::symmetric(m.diag().to_vec(), off)
}

pub fn symmetrize(s: &EnsembleSample) -> Result<TridiagonalMatrix> {
    symmetrize_matrix(&s.matrix)
}

/// Row-disc enclosure `[lo, hi]` of the real spectrum.
pub fn gershgorin_interval(m: &TridiagonalMatrix) -> (f64, f64) {
    let n = m.size();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..n {
        let mut r = 0.0;
        if a + 1 < n {
            r += m.upper()[a].abs();
        }
        if a > 0 {
            r += m.lower()[a - 1].abs();
        }
        lo = lo.min(m.diag()[a] - r);
        hi = hi.max(m.diag()[a] + r);
    }
    (lo, hi)
}

/// Symmetric tridiagonal held as diagonal plus squared off-diagonal.
struct Sturm<'a> {
    diag: &'a [f64],
    off2: Vec<f64>,
    pivmin: f64,
}

impl<'a> Sturm<'a> {
    fn new(m: &'a TridiagonalMatrix) -> Self {
        let off2: Vec<f64> = m.upper().iter().map(|u| u * u).collect();
        let max_off2 = off2.iter().copied().fold(1.0, f64::max);
        Self {
            diag: m.diag(),
            off2,
            pivmin: f64::MIN_POSITIVE * max_off2,
        }
    }

    /// Number of eigenvalues strictly below `x` (negative pivots of the
    /// `LDL^T` factorization of `M - x I`).
    fn count(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < self.pivmin {
            q = -self.pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            q = self.diag[i] - x - self.off2[i - 1] / q;
            if q.abs() < self.pivmin {
                q = -self.pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }
}

/// Number of eigenvalues of the symmetric matrix `m` below `x`.
pub fn inertia_count(m: &TridiagonalMatrix, x: f64) -> Result<usize> {
    require_symmetric(m)?;
    Ok(Sturm::new(m).count(x))
}

fn require_symmetric(m: &TridiagonalMatrix) -> Result<()> {
    if m.is_symmetric() {
        Ok(())
    } else {
        Err(invalid("matrix", "must be symmetric; symmetrize it first"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Smallest,
    Largest,
}

/// Eigenvalue with ascending index `j` (0-based), bracketed in `[lo, hi]`.
fn bisect(sturm: &Sturm, j: usize, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut count_lo = sturm.count(lo);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = sturm.count(mid);
        debug_assert!(c >= count_lo, "inertia count decreased");
        if c > j {
            hi = mid;
        } else {
            lo = mid;
            count_lo = c;
        }
    }
    0.5 * (lo + hi)
}

/// The `k` smallest or largest eigenvalues of a symmetric tridiagonal,
/// sorted ascending.
pub fn eigs_extreme(m: &TridiagonalMatrix, k: usize, which: Which) -> Result<Vec<f64>> {
    require_symmetric(m)?;
    let size = m.size();
    if k > size {
        return Err(invalid("k", format!("{k} exceeds matrix size {size}")));
    }
    let indices: Vec<usize> = match which {
        Which::Smallest => (0..k).collect(),
        Which::Largest => (size - k..size).collect(),
    };
    eigs_by_index(m, &indices)
}

/// Eigenvalues at the given ascending indices.
pub fn eigs_by_index(m: &TridiagonalMatrix, indices: &[usize]) -> Result<Vec<f64>> {
    require_symmetric(m)?;
    let (g_lo, g_hi) = gershgorin_interval(m);
    let scale = g_lo.abs().max(g_hi.abs()).max(f64::MIN_POSITIVE);
    let tol = 4.0 * f64::EPSILON * scale;
    let lo = g_lo - tol;
    let hi = g_hi + tol;
    let sturm = Sturm::new(m);
    let mut out = Vec::with_capacity(indices.len());
    let mut floor = lo;
    for &j in indices {
        if j >= m.size() {
            return Err(invalid("index", format!("{j} out of range")));
        }
        // Ascending indices let each bracket start at the previous root.
        let start = floor.max(lo).min(hi);
        let start = if sturm.count(start) > j { lo } else { start };
        let x = bisect(&sturm, j, start, hi, tol);
        floor = x - tol;
        out.push(x);
    }
    Ok(out)
}

/// All eigenvalues within `[lo, hi)`, ascending.
pub fn eigs_in_range(m: &TridiagonalMatrix, lo: f64, hi: f64) -> Result<Vec<f64>> {
    require_symmetric(m)?;
    let sturm = Sturm::new(m);
    let (a, b) = (sturm.count(lo), sturm.count(hi));
    eigs_by_index(m, &(a..b).collect::<Vec<_>>())
}

/// Per-replica `k` smallest eigenvalues, each halved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSample {
    pub kind: EnsembleKind,
    pub n: usize,
    pub beta: f64,
    pub k: usize,
    pub values: Vec<Vec<f64>>,
}

impl EdgeSample {
    /// Column `j` across replicas.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }
}

pub fn edge_statistics(params: &ModelParams, k: usize, reps: usize, seed: &SeedSpec) -> Result<EdgeSample> {
    params.validate()?;
    let rows = map_replicas(seed, 0..reps as u64, |_, stream| -> Result<Vec<f64>> {
        let s = sample(params, stream)?;
        let sym = symmetrize(&s)?;
        let eigs = eigs_extreme(&sym, k, Which::Smallest)?;
        Ok(eigs.into_iter().map(|x| 0.5 * x).collect())
    });
    let values = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EdgeSample {
        kind: params.kind,
        n: params.n,
        beta: params.beta,
        k,
        values,
    })
}

/// Minimum sample size accepted by [`ks_two_sample`].
pub const KS_MIN_SAMPLES: usize = 50;

/// Kolmogorov tail `Q(x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * x * x).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    for xs in [a, b] {
        if xs.len() < KS_MIN_SAMPLES {
            return Err(Error::SampleTooSmall { got: xs.len(), need: KS_MIN_SAMPLES });
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "ks_two_sample" });
        }
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let en = (n1 * n2 / (n1 + n2)).sqrt();
    Ok((d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)))
}

/// One-sample KS statistic against a continuous CDF, with asymptotic
/// p-value.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if xs.len() < KS_MIN_SAMPLES {
        return Err(Error::SampleTooSmall { got: xs.len(), need: KS_MIN_SAMPLES });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "ks_one_sample" });
    }
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let en = n.sqrt();
    Ok((d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)))
}
