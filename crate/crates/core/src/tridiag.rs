//! Tridiagonal and banded linear algebra.
//!
//! Matrices are indexed `M(a, b)` for `0 <= a, b <= n`. A [`TridiagonalMatrix`]
//! stores `diag[a] = M(a, a)`, `upper[a] = M(a, a + 1)` and
//! `lower[a] = M(a + 1, a)`.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::randomness::ordered_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    diag: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(diag: Vec<f64>, upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid("diag", "matrix must have at least one row"));
        }
        let off = diag.len() - 1;
        if upper.len() != off {
            return Err(Error::DimensionMismatch { expected: off, got: upper.len() });
        }
        if lower.len() != off {
            return Err(Error::DimensionMismatch { expected: off, got: lower.len() });
        }
        if diag.iter().chain(&upper).chain(&lower).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "tridiagonal entries" });
        }
        Ok(Self { diag, upper, lower })
    }

    pub fn symmetric(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        Self::new(diag, off.clone(), off)
    }

    pub fn identity(size: usize) -> Self {
        Self {
            diag: vec![1.0; size],
            upper: vec![0.0; size.saturating_sub(1)],
            lower: vec![0.0; size.saturating_sub(1)],
        }
    }

    /// Number of rows, `n + 1`.
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.diag[a]
        } else if b == a + 1 {
            self.upper[a]
        } else if a == b + 1 {
            self.lower[b]
        } else {
            0.0
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.upper == self.lower
    }

    /// `c * I + s * self`, the affine map used by the semigroup powers.
    pub fn affine(&self, shift: f64, scale: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|d| shift + scale * d).collect(),
            upper: self.upper.iter().map(|u| scale * u).collect(),
            lower: self.lower.iter().map(|l| scale * l).collect(),
        }
    }

    pub fn with_diag_entry(&self, index: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.diag[index] = value;
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let n1 = self.size();
        if v.len() != n1 {
            return Err(Error::DimensionMismatch { expected: n1, got: v.len() });
        }
        for a in 0..n1 {
            let mut acc = self.diag[a] * v[a];
            if a + 1 < n1 {
                acc += self.upper[a] * v[a + 1];
            }
            if a > 0 {
                acc += self.lower[a - 1] * v[a - 1];
            }
            out[a] = acc;
        }
        Ok(())
    }

    /// `(scale * M)^theta v` by `theta` successive products.
    pub fn power_apply(&self, scale: f64, v: &[f64], theta: u64) -> Result<Vec<f64>> {
        let n1 = self.size();
        if v.len() != n1 {
            return Err(Error::DimensionMismatch { expected: n1, got: v.len() });
        }
        let scaled = self.affine(0.0, scale);
        let mut cur = v.to_vec();
        let mut next = vec![0.0; n1];
        for step in 0..theta {
            scaled.matvec_into(&cur, &mut next)?;
            std::mem::swap(&mut cur, &mut next);
            if step % 64 == 63 && cur.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { context: "power_apply" });
            }
        }
        if cur.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "power_apply" });
        }
        Ok(cur)
    }

    /// `Tr (scale * M)^theta` by banded accumulation `B <- B (scale M)`.
    pub fn power_trace(&self, scale: f64, theta: u64) -> Result<f64> {
        let scaled = self.affine(0.0, scale);
        let mut acc = BandedMatrix::identity(self.size());
        for _ in 0..theta {
            acc = acc.mul_tridiagonal(&scaled);
        }
        let tr = acc.trace();
        if !tr.is_finite() {
            return Err(Error::NonFinite { context: "power_trace" });
        }
        Ok(tr)
    }

    /// Three-column CSV (`diag,upper,lower`); the last row has empty
    /// off-diagonal cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "diag,upper,lower")?;
        for a in 0..self.size() {
            if a + 1 < self.size() {
                writeln!(w, "{},{},{}", self.diag[a], self.upper[a], self.lower[a])?;
            } else {
                writeln!(w, "{},,", self.diag[a])?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut diag = Vec::new();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| invalid("csv", format!("bad number `{s}`: {e}")))
        };
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| invalid("csv", e.to_string()))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(invalid("csv", format!("line {}: expected 3 columns", i + 1)));
            }
            diag.push(parse(cols[0])?);
            if !cols[1].trim().is_empty() {
                upper.push(parse(cols[1])?);
                lower.push(parse(cols[2])?);
            }
        }
        Self::new(diag, upper, lower)
    }
}

/// Square matrix with entries confined to `|a - b| <= bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    size: usize,
    bandwidth: usize,
    // Row-major, `2 * bandwidth + 1` slots per row; slot `k` holds column
    // `a + k - bandwidth`.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(size: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(size.saturating_sub(1));
        Self {
            size,
            bandwidth,
            data: vec![0.0; size * (2 * bandwidth + 1)],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, 0);
        m.data.iter_mut().for_each(|x| *x = 1.0);
        m
    }

    pub fn from_fn(size: usize, bandwidth: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(size, bandwidth);
        for a in 0..size {
            for b in m.row_range(a) {
                let v = f(a, b);
                m.set(a, b, v);
            }
        }
        m
    }

    pub fn from_tridiagonal(t: &TridiagonalMatrix) -> Self {
        Self::from_fn(t.size(), 1, |a, b| t.get(a, b))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn row_range(&self, a: usize) -> std::ops::Range<usize> {
        a.saturating_sub(self.bandwidth)..(a + self.bandwidth + 1).min(self.size)
    }

    #[inline]
    fn slot(&self, a: usize, b: usize) -> usize {
        a * (2 * self.bandwidth + 1) + (b + self.bandwidth - a)
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        if a.abs_diff(b) > self.bandwidth || a >= self.size || b >= self.size {
            0.0
        } else {
            self.data[self.slot(a, b)]
        }
    }

    /// Panics when `(a, b)` lies outside the band.
    pub fn set(&mut self, a: usize, b: usize, value: f64) {
        assert!(a.abs_diff(b) <= self.bandwidth, "({a}, {b}) outside bandwidth {}", self.bandwidth);
        let k = self.slot(a, b);
        self.data[k] = value;
    }

    /// `self * t`; the result has bandwidth `min(bandwidth + 1, n)`.
    pub fn mul_tridiagonal(&self, t: &TridiagonalMatrix) -> Self {
        assert_eq!(self.size, t.size());
        let mut out = Self::zeros(self.size, self.bandwidth + 1);
        let (d, up, lo) = (t.diag(), t.upper(), t.lower());
        for a in 0..self.size {
            for c in out.row_range(a) {
                // (B T)(a, c) = B(a, c-1) T(c-1, c) + B(a, c) T(c, c) + B(a, c+1) T(c+1, c)
                let mut acc = self.get(a, c) * d[c];
                if c > 0 {
                    acc += self.get(a, c - 1) * up[c - 1];
                }
                if c + 1 < self.size {
                    acc += self.get(a, c + 1) * lo[c];
                }
                out.set(a, c, acc);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        ordered_sum((0..self.size).map(|a| self.get(a, a)))
    }
}

/// A function on `R_+` represented by its exact integrals over the cells
/// `[a / m_n, (a + 1) / m_n)`, `0 <= a <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    m_n: f64,
    cells: Vec<f64>,
}

impl GridFunction {
    pub fn new(m_n: f64, cells: Vec<f64>) -> Result<Self> {
        if !(m_n > 0.0) || !m_n.is_finite() {
            return Err(invalid("m_n", format!("must be positive, got {m_n}")));
        }
        if cells.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "grid function cells" });
        }
        Ok(Self { m_n, cells })
    }

    pub fn zeros(m_n: f64, size: usize) -> Self {
        Self { m_n, cells: vec![0.0; size] }
    }

    pub fn m_n(&self) -> f64 {
        self.m_n
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell `index` set to `1 / m_n`, i.e. the indicator of that cell.
    pub fn indicator(m_n: f64, size: usize, index: usize) -> Self {
        let mut cells = vec![0.0; size];
        cells[index] = 1.0 / m_n;
        Self { m_n, cells }
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|&c| c == 0.0)
    }
}

/// `m_n * sum_{a,b} (int f)_a P(a, b) (int g)_b`.
pub fn bilinear(f: &GridFunction, p: &BandedMatrix, g: &GridFunction) -> Result<f64> {
    check_pair(f, g)?;
    if p.size() != f.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), got: p.size() });
    }
    let terms = (0..f.len()).map(|a| {
        let row: f64 = p.row_range(a).map(|b| p.get(a, b) * g.cells[b]).sum();
        f.cells[a] * row
    });
    Ok(f.m_n * ordered_sum(terms))
}

/// `m_n * sum_a (int f)_a v(a)`, the pairing of `f` with a vector already
/// in the embedded cell representation.
pub fn weighted_dot(f: &GridFunction, v: &[f64]) -> Result<f64> {
    if v.len() != f.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), got: v.len() });
    }
    Ok(f.m_n * ordered_sum(f.cells.iter().zip(v).map(|(a, b)| a * b)))
}

pub(crate) fn check_pair(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), got: g.len() });
    }
    if (f.m_n - g.m_n).abs() > 1e-12 * f.m_n {
        return Err(invalid("m_n", format!("grid scales differ: {} vs {}", f.m_n, g.m_n)));
    }
    Ok(())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cell integrals of `f` on `[a / m_n, (a + 1) / m_n)`, `0 <= a <= n`, by a
/// `quadrature_points`-point Gauss-Legendre rule per cell.
pub fn cell_averages(
    f: impl Fn(f64) -> f64,
    m_n: f64,
    n: usize,
    quadrature_points: usize,
) -> Result<GridFunction> {
    if quadrature_points == 0 {
        return Err(invalid("quadrature_points", "must be >= 1"));
    }
    let (nodes, weights) = gauss_legendre(quadrature_points);
    let half = 0.5 / m_n;
    let cells = (0..=n)
        .map(|a| {
            let mid = (a as f64 + 0.5) / m_n;
            half * ordered_sum(nodes.iter().zip(&weights).map(|(x, w)| w * f(mid + half * x)))
        })
        .collect();
    GridFunction::new(m_n, cells)
}
