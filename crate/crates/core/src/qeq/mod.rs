//! Charge equilibration.
//!
//! Minimizing `Σ χ_i q_i + ½ Σ_ij H_ij q_i q_j` subject to `Σq = Q_net`
//! reduces to two systems with the same matrix, `H s = -χ` and `H t = -1`,
//! after which `q = s - μ t`.

mod matrix;
mod solver;

use std::collections::VecDeque;
use std::str::FromStr;

pub use matrix::{build_qeq_matrix, spmv_half, SparseHalfMatrix, SpmvWorkspace};
pub use solver::{cg_dual, cg_single, charges_from_st, dot, CgReport, DualSolution};

use crate::error::{ReaxError, Result};
use crate::forcefield::ForceField;
use crate::parallel::Runtime;

/// Header of the per-step solver diagnostics CSV.
pub const DIAGNOSTICS_HEADER: &str = "step,iterations_s,iterations_t,residual_s,residual_t";

/// How initial guesses are formed from previous solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extrapolation {
    /// Reuse the previous solution.
    Constant,
    /// `2x₋₁ - x₋₂`
    #[default]
    Linear,
    /// `3x₋₁ - 3x₋₂ + x₋₃`
    Quadratic,
}

impl FromStr for Extrapolation {
    type Err = ReaxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Extrapolation::Constant),
            "linear" => Ok(Extrapolation::Linear),
            "quadratic" => Ok(Extrapolation::Quadratic),
            other => Err(ReaxError::Config(format!(
                "qeq.extrapolation must be constant|linear|quadratic, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QeqConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub extrapolation: Extrapolation,
}

impl Default for QeqConfig {
    fn default() -> Self {
        QeqConfig {
            tol: 1e-6,
            max_iter: 200,
            extrapolation: Extrapolation::Linear,
        }
    }
}

/// Previous solutions, newest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QeqHistory {
    pub s: VecDeque<Vec<f64>>,
    pub t: VecDeque<Vec<f64>>,
}

impl QeqHistory {
    const DEPTH: usize = 3;

    pub fn push(&mut self, s: Vec<f64>, t: Vec<f64>) {
        self.s.push_front(s);
        self.t.push_front(t);
        self.s.truncate(Self::DEPTH);
        self.t.truncate(Self::DEPTH);
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.t.clear();
    }
}

fn extrapolate(hist: &VecDeque<Vec<f64>>, order: Extrapolation) -> Vec<f64> {
    let x1 = &hist[0];
    match (order, hist.len()) {
        (Extrapolation::Constant, _) | (_, 1) => x1.clone(),
        (Extrapolation::Linear, _) | (Extrapolation::Quadratic, 2) => {
            x1.iter().zip(&hist[1]).map(|(a, b)| 2.0 * a - b).collect()
        }
        (Extrapolation::Quadratic, _) => x1
            .iter()
            .zip(&hist[1])
            .zip(&hist[2])
            .map(|((a, b), c)| 3.0 * a - 3.0 * b + c)
            .collect(),
    }
}

/// Initial guesses from history, falling back to the diagonal solution
/// `s = -χ/η`, `t = -1/η` when there is none (or the atom count changed).
pub fn extrapolate_guess(
    history: &QeqHistory,
    chi: &[f64],
    eta: &[f64],
    order: Extrapolation,
) -> (Vec<f64>, Vec<f64>) {
    let n = chi.len();
    if history.is_empty() || history.s[0].len() != n {
        return (
            chi.iter().zip(eta).map(|(c, e)| -c / e).collect(),
            eta.iter().map(|e| -1.0 / e).collect(),
        );
    }
    (extrapolate(&history.s, order), extrapolate(&history.t, order))
}

/// Polarization energy `Σ χ_i q_i + ½ η_i q_i²`. Together with the Coulomb
/// term this is the energy QEq minimizes.
pub fn polarization_energy(chi: &[f64], eta: &[f64], q: &[f64]) -> f64 {
    chi.iter()
        .zip(eta)
        .zip(q)
        .map(|((c, e), q)| c * q + 0.5 * e * q * q)
        .sum()
}

/// Per-atom `χ` and `η` in kcal/mol units.
pub fn chi_eta(types: &[usize], ff: &ForceField) -> (Vec<f64>, Vec<f64>) {
    types
        .iter()
        .map(|&t| (ff.types[t].chi, ff.types[t].eta))
        .unzip()
}

/// Stateful solver that carries solution history between steps.
#[derive(Debug)]
pub struct QeqSolver {
    pub config: QeqConfig,
    pub history: QeqHistory,
    workspace: SpmvWorkspace,
}

/// Outcome of one charge update.
#[derive(Debug, Clone, PartialEq)]
pub struct QeqOutcome {
    pub charges: Vec<f64>,
    pub report: CgReport,
    pub e_pol: f64,
}

impl QeqSolver {
    pub fn new(config: QeqConfig, threads: usize) -> Self {
        QeqSolver {
            config,
            history: QeqHistory::default(),
            workspace: SpmvWorkspace::new(threads),
        }
    }

    pub fn solve(
        &mut self,
        h: &SparseHalfMatrix,
        chi: &[f64],
        q_net: f64,
        runtime: &Runtime,
    ) -> Result<QeqOutcome> {
        let (s0, t0) = extrapolate_guess(&self.history, chi, &h.diag, self.config.extrapolation);
        let sol = cg_dual(
            h,
            chi,
            s0,
            t0,
            self.config.tol,
            self.config.max_iter,
            runtime,
            &mut self.workspace,
        )?;
        let charges = charges_from_st(&sol.s, &sol.t, q_net)?;
        let e_pol = polarization_energy(chi, &h.diag, &charges);
        self.history.push(sol.s, sol.t);
        Ok(QeqOutcome {
            charges,
            report: sol.report,
            e_pol,
        })
    }
}

/// One diagnostics CSV row.
pub fn diagnostics_row(step: u64, r: &CgReport) -> String {
    format!(
        "{step},{},{},{:.6e},{:.6e}",
        r.iterations_s, r.iterations_t, r.residual_s, r.residual_t
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_guess_is_diagonal_solve() {
        let (s, t) = extrapolate_guess(&QeqHistory::default(), &[2.0, 3.0], &[4.0, 6.0], Extrapolation::Linear);
        assert_eq!(s, vec![-0.5, -0.5]);
        assert_eq!(t, vec![-0.25, -1.0 / 6.0]);
    }

    #[test]
    fn extrapolation_orders() {
        let mut h = QeqHistory::default();
        h.push(vec![1.0], vec![1.0]);
        let g = |h: &QeqHistory, o| extrapolate_guess(h, &[0.0], &[1.0], o).0[0];
        assert_eq!(g(&h, Extrapolation::Linear), 1.0);
        h.push(vec![1.0], vec![1.0]);
        assert_eq!(g(&h, Extrapolation::Linear), 1.0);
        h.push(vec![3.0], vec![3.0]);
        assert_eq!(g(&h, Extrapolation::Linear), 5.0);
        assert_eq!(g(&h, Extrapolation::Constant), 3.0);
        // 1, 1, 3 -> 3*3 - 3*1 + 1
        assert_eq!(g(&h, Extrapolation::Quadratic), 7.0);
        h.push(vec![9.0], vec![9.0]);
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn parses_extrapolation() {
        assert_eq!("quadratic".parse::<Extrapolation>().unwrap(), Extrapolation::Quadratic);
        assert!("cubic".parse::<Extrapolation>().is_err());
    }

    #[test]
    fn diagnostics_format() {
        let r = CgReport {
            iterations_s: 4,
            iterations_t: 3,
            residual_s: 1e-7,
            residual_t: 2e-7,
            ..Default::default()
        };
        assert_eq!(diagnostics_row(10, &r), "10,4,3,1.000000e-7,2.000000e-7");
    }
}
