//! Ghost-region volume of cubic domain decompositions.
//!
//! A node runs `t = c³` threads. Pure message passing gives every thread its
//! own cube of edge `d` and its own ghost shell of thickness `g`; the hybrid
//! scheme gives the node one cube of edge `cd` with a single shell.

use std::fmt::Write as _;

use crate::error::{ReaxError, Result};

/// Header of the ratio table.
pub const RATIO_HEADER: &str = "t,d_over_g,ratio_mpi,ratio_hybrid";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionSpec {
    pub n: u64,
    pub c: u64,
    pub d: f64,
    pub g: f64,
}

/// Integer cube root of `t`, if `t` is a perfect cube.
pub fn exact_cube_root(t: u64) -> Option<u64> {
    let mut c = (t as f64).cbrt().round() as u64;
    // correct rounding at large t
    while c * c * c > t {
        c -= 1;
    }
    while (c + 1) * (c + 1) * (c + 1) <= t {
        c += 1;
    }
    (c * c * c == t).then_some(c)
}

impl DecompositionSpec {
    /// `t` must be a perfect cube.
    pub fn new(n: u64, t: u64, d: f64, g: f64) -> Result<Self> {
        if n == 0 {
            return Err(ReaxError::InvalidParameter("node count must be at least 1".into()));
        }
        if !(d > 0.0) || !(g >= 0.0) {
            return Err(ReaxError::InvalidParameter(format!("need d > 0 and g >= 0, got d={d}, g={g}")));
        }
        let c = exact_cube_root(t)
            .filter(|&c| c >= 1)
            .ok_or_else(|| ReaxError::InvalidParameter(format!("threads per node {t} is not a positive perfect cube")))?;
        Ok(DecompositionSpec { n, c, d, g })
    }

    pub fn t(&self) -> u64 {
        self.c.pow(3)
    }

    /// Domain volume per process, `d³`.
    pub fn v(&self) -> f64 {
        self.d.powi(3)
    }
}

/// `n ((cd + cg)³ - (cd)³)`
pub fn ghost_volume_mpi(spec: &DecompositionSpec) -> f64 {
    let (c, d, g) = (spec.c as f64, spec.d, spec.g);
    spec.n as f64 * ((c * d + c * g).powi(3) - (c * d).powi(3))
}

/// `n ((cd + g)³ - (cd)³)`
pub fn ghost_volume_hybrid(spec: &DecompositionSpec) -> f64 {
    let (c, d, g) = (spec.c as f64, spec.d, spec.g);
    spec.n as f64 * ((c * d + g).powi(3) - (c * d).powi(3))
}

/// Ghost-to-domain ratios for one table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub t: f64,
    pub d_over_g: f64,
    pub ratio_mpi: f64,
    pub ratio_hybrid: f64,
}

/// Ratios with `g = 1`, `d = d/g`. Thread counts need not be cubes here:
/// `c = t^(1/3)` is taken as a real number.
pub fn ratio_row(d_over_g: f64, t: f64) -> RatioRow {
    let d = d_over_g;
    let c = t.cbrt();
    let cd = c * d;
    RatioRow {
        t,
        d_over_g,
        ratio_mpi: ((d + 1.0).powi(3) - d.powi(3)) / d.powi(3),
        ratio_hybrid: ((cd + 1.0).powi(3) - cd.powi(3)) / cd.powi(3),
    }
}

/// One row per `(t, d/g)`, `t` outermost.
pub fn ratio_table(d_over_g: &[f64], t: &[f64]) -> Result<Vec<RatioRow>> {
    if d_over_g.is_empty() || t.is_empty() {
        return Err(ReaxError::InvalidParameter("ratio table needs at least one d/g and one t".into()));
    }
    if let Some(bad) = d_over_g.iter().chain(t).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(ReaxError::InvalidParameter(format!("d/g and t must be positive, got {bad}")));
    }
    Ok(t.iter()
        .flat_map(|&t| d_over_g.iter().map(move |&dg| ratio_row(dg, t)))
        .collect())
}

pub fn format_ratio_table(rows: &[RatioRow]) -> String {
    let mut out = String::from(RATIO_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.t, r.d_over_g, r.ratio_mpi, r.ratio_hybrid);
    }
    out
}
