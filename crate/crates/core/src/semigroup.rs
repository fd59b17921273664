//! The discrete semigroup `K_n(t) = (I - M / (3 m_n^2))^theta`, with
//! `theta = floor(m_n^2 * 3t / 2)`, and its pairings and traces.

use serde::{Deserialize, Serialize};

use crate::ensembles::EnsembleSample;
use crate::error::{invalid, Error, Result};
use crate::spectra::{eigs_in_range, symmetrize_matrix};
use crate::tridiag::{weighted_dot, GridFunction, TridiagonalMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    #[default]
    Floor,
    FloorPlusOne,
    FloorMinusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Dirichlet,
    Robin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupQuery {
    pub t: f64,
    #[serde(default)]
    pub parity: Parity,
    #[serde(default)]
    pub boundary: Boundary,
}

impl SemigroupQuery {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            parity: Parity::Floor,
            boundary: Boundary::Dirichlet,
        }
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }
}

/// Number of matrix powers for time `t`.
pub fn theta(m_n: f64, q: &SemigroupQuery) -> Result<u64> {
    if !(q.t > 0.0) || !q.t.is_finite() {
        return Err(invalid("t", format!("must be positive, got {}", q.t)));
    }
    let base = (m_n * m_n * 1.5 * q.t).floor() as i64;
    let adjusted = match q.parity {
        Parity::Floor => base,
        Parity::FloorPlusOne => base + 1,
        Parity::FloorMinusOne => base - 1,
    };
    if adjusted < 0 {
        return Err(invalid("parity", format!("theta would be {adjusted}")));
    }
    Ok(adjusted as u64)
}

/// The matrix selected by the query's boundary condition.
pub fn boundary_matrix<'a>(s: &'a EnsembleSample, q: &SemigroupQuery) -> Result<&'a TridiagonalMatrix> {
    match q.boundary {
        Boundary::Dirichlet => Ok(&s.matrix),
        Boundary::Robin => s
            .spiked_matrix
            .as_ref()
            .ok_or_else(|| invalid("boundary", "robin boundary needs a spiked ensemble")),
    }
}

/// `I - M / (3 m_n^2)`.
pub fn step_operator(m: &TridiagonalMatrix, m_n: f64) -> TridiagonalMatrix {
    m.affine(1.0, -1.0 / (3.0 * m_n * m_n))
}

/// `<f, K_n(t) g>`.
pub fn pairing(s: &EnsembleSample, q: &SemigroupQuery, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    let m = boundary_matrix(s, q)?;
    let th = theta(s.m_n, q)?;
    let v = step_operator(m, s.m_n).power_apply(1.0, g.cells(), th)?;
    weighted_dot(f, &v)
}

fn reject_robin(q: &SemigroupQuery) -> Result<()> {
    if q.boundary == Boundary::Robin {
        return Err(Error::Unsupported(
            "traces of the Robin semigroup are not available; the limiting trace is only conjectured".into(),
        ));
    }
    Ok(())
}

/// `Tr K_n(t)` by banded powering.
pub fn trace(s: &EnsembleSample, q: &SemigroupQuery) -> Result<f64> {
    reject_robin(q)?;
    let th = theta(s.m_n, q)?;
    step_operator(&s.matrix, s.m_n).power_trace(1.0, th)
}

/// `Tr K_n(t)` as `sum_j (1 - lambda_j / (3 m_n^2))^theta` over the
/// eigenvalues of `M`. Eigenvalues whose terms cannot reach `1e-17` in
/// total are skipped, so this agrees with [`trace`] to roundoff at a cost
/// of a few dozen bisections instead of `O(n theta^2)`.
pub fn trace_spectral(s: &EnsembleSample, q: &SemigroupQuery) -> Result<f64> {
    reject_robin(q)?;
    let th = theta(s.m_n, q)?;
    spectral_power_trace(&s.matrix, s.m_n, th)
}

pub fn spectral_power_trace(m: &TridiagonalMatrix, m_n: f64, theta: u64) -> Result<f64> {
    let size = m.size();
    if theta == 0 {
        return Ok(size as f64);
    }
    let sym = symmetrize_matrix(m)?;
    let c = 3.0 * m_n * m_n;
    // Any eigenvalue with |1 - lambda / c| < r contributes below 1e-17 / size.
    let r = ((1e-17 / size as f64).ln() / theta as f64).exp();
    let (lo, hi) = (c * (1.0 - r), c * (1.0 + r));
    let mut eigs = eigs_in_range(&sym, f64::NEG_INFINITY, lo)?;
    eigs.extend(eigs_in_range(&sym, hi, f64::INFINITY)?);
    let th = i32::try_from(theta).map_err(|_| invalid("theta", "too large"))?;
    let tr: f64 = eigs.iter().map(|l| (1.0 - l / c).powi(th)).sum();
    if !tr.is_finite() {
        return Err(Error::NonFinite { context: "spectral_power_trace" });
    }
    Ok(tr)
}
