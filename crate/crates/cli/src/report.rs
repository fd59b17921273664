//! Result rows and the convergence report.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Matrix,
    Walk,
    Continuum,
}

/// One estimate. `reference` is the exact matrix value a walk row targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub family: Family,
    pub quantity: String,
    pub n: Option<usize>,
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub reference: Option<f64>,
}

pub fn write_rows<W: Write>(w: W, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(CliError::runtime)?;
    }
    out.flush().map_err(CliError::runtime)?;
    Ok(())
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<ResultRow>, CliError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(|e| CliError::Config(format!("malformed result file: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub family: Family,
    pub quantity: String,
    pub t: f64,
    pub n: usize,
    pub value: f64,
    pub target: f64,
    pub gap: f64,
    /// Three combined standard errors.
    pub band: f64,
    /// `None` for rows that are informational only.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<GapRow>,
    /// Per `(quantity, t)`: whether the matrix gaps decrease in `n`.
    pub monotone: Vec<(String, f64, bool)>,
    /// Per `(quantity, t)`: whether the largest-`n` gap is below the smallest-`n` gap.
    pub shrinking: Vec<(String, f64, bool)>,
    pub pass: bool,
}

fn band(a: f64, b: f64) -> f64 {
    3.0 * (a * a + b * b).sqrt()
}

/// Compare matrix rows with the continuum row of the same `(quantity, t)`
/// and walk rows with their exact references. The gating checks are: the
/// largest-`n` matrix row lies within three combined standard errors of the
/// continuum value, its gap is below the smallest-`n` gap, and every walk
/// row is within three standard errors of its reference.
pub fn report_convergence(rows: &[ResultRow]) -> Result<Report, CliError> {
    type Key = (String, u64);
    let mut groups: BTreeMap<Key, (Vec<&ResultRow>, Vec<&ResultRow>, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.quantity.clone(), r.t.to_bits())).or_default();
        match r.family {
            Family::Matrix => g.0.push(r),
            Family::Walk => g.1.push(r),
            Family::Continuum => g.2.push(r),
        }
    }
    if groups.is_empty() {
        return Err(CliError::Config("no result rows to report".into()));
    }
    let mut out = Vec::new();
    let mut monotone = Vec::new();
    let mut shrinking = Vec::new();
    let mut pass = true;
    for ((quantity, tb), (mut matrix, walk, cont)) in groups {
        let t = f64::from_bits(tb);
        let missing = |what: &str| CliError::Config(format!("{quantity} at t={t}: {what}"));
        if cont.len() != 1 {
            return Err(missing("need exactly one continuum row"));
        }
        matrix.sort_by_key(|r| r.n);
        if matrix.len() < 3 || matrix.iter().any(|r| r.n.is_none()) {
            return Err(missing("need matrix rows for at least three values of n"));
        }
        let c = cont[0];
        let gaps: Vec<f64> = matrix.iter().map(|r| (r.value - c.value).abs()).collect();
        for (i, r) in matrix.iter().enumerate() {
            let b = band(r.stderr, c.stderr);
            let gating = i + 1 == matrix.len();
            let ok = gaps[i] <= b;
            if gating {
                pass &= ok;
            }
            out.push(GapRow {
                family: Family::Matrix,
                quantity: quantity.clone(),
                t,
                n: r.n.unwrap_or(0),
                value: r.value,
                target: c.value,
                gap: gaps[i],
                band: b,
                pass: gating.then_some(ok),
            });
        }
        let shrinks = gaps[gaps.len() - 1] < gaps[0];
        pass &= shrinks;
        shrinking.push((quantity.clone(), t, shrinks));
        monotone.push((quantity.clone(), t, gaps.windows(2).all(|w| w[1] <= w[0])));
        for r in walk {
            let reference = r.reference.ok_or_else(|| missing("walk row without a reference value"))?;
            let gap = (r.value - reference).abs();
            let b = 3.0 * r.stderr;
            pass &= gap <= b;
            out.push(GapRow {
                family: Family::Walk,
                quantity: quantity.clone(),
                t,
                n: r.n.unwrap_or(0),
                value: r.value,
                target: reference,
                gap,
                band: b,
                pass: Some(gap <= b),
            });
        }
    }
    Ok(Report { rows: out, monotone, shrinking, pass })
}

impl Report {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<10} {:<8} {:>5} {:>6} {:>12} {:>12} {:>10} {:>10}  {}\n",
            "family", "quantity", "t", "n", "value", "target", "gap", "3sigma", "status"
        );
        for r in &self.rows {
            let status = match r.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "-",
            };
            let family = match r.family {
                Family::Matrix => "matrix",
                Family::Walk => "walk",
                Family::Continuum => "continuum",
            };
            s += &format!(
                "{:<10} {:<8} {:>5} {:>6} {:>12.6} {:>12.6} {:>10.6} {:>10.6}  {}\n",
                family, r.quantity, r.t, r.n, r.value, r.target, r.gap, r.band, status
            );
        }
        for (q, t, ok) in &self.shrinking {
            s += &format!("{q} t={t}: gap at largest n below gap at smallest n: {}\n", if *ok { "PASS" } else { "FAIL" });
        }
        for (q, t, ok) in &self.monotone {
            s += &format!("{q} t={t}: gaps monotone in n (informational): {}\n", if *ok { "yes" } else { "no" });
        }
        s += &format!("overall: {}\n", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}
