//! Jacobi-preconditioned conjugate gradient for `H s = -χ` and `H t = -1`,
//! iterated together so each pass over `H` serves both systems.

use super::matrix::{SparseHalfMatrix, SpmvWorkspace};
use crate::error::{ReaxError, Result};
use crate::parallel::{Runtime, SchedulePolicy};

/// Convergence record of one solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CgReport {
    pub iterations_s: usize,
    pub iterations_t: usize,
    /// True relative residuals `‖b - Hx‖ / ‖b‖` at exit.
    pub residual_s: f64,
    pub residual_t: f64,
    /// Preconditioned residual `rᵀ M⁻¹ r` after each iteration, starting
    /// with the initial residual.
    pub history_s: Vec<f64>,
    pub history_t: Vec<f64>,
}

/// Solutions with their convergence record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualSolution {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub report: CgReport,
}

/// `Σ a_i b_i` with one partial per static block, combined in block order,
/// so the value is reproducible at a fixed thread count.
pub fn dot(a: &[f64], b: &[f64], runtime: &Runtime) -> f64 {
    let threads = runtime.threads();
    let parts: Vec<std::sync::Mutex<f64>> = (0..threads).map(|_| std::sync::Mutex::new(0.0)).collect();
    runtime.for_chunks_with(a.len(), &SchedulePolicy::static_blocks(), |tid, r| {
        let s: f64 = a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum();
        *parts[tid].lock().unwrap() += s;
    });
    parts.into_iter().map(|p| p.into_inner().unwrap()).sum()
}

struct System {
    x: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    rz: f64,
    b_norm: f64,
    iterations: usize,
    history: Vec<f64>,
    done: bool,
}

impl System {
    fn start(b: &[f64], x: Vec<f64>, hx: &[f64], inv_diag: &[f64], runtime: &Runtime) -> Self {
        let n = b.len();
        let mut r = vec![0.0; n];
        runtime.fill_slice(&mut r, |i| b[i] - hx[i]);
        let mut z = vec![0.0; n];
        runtime.fill_slice(&mut z, |i| r[i] * inv_diag[i]);
        let rz = dot(&r, &z, runtime);
        System {
            p: z.clone(),
            x,
            r,
            z,
            rz,
            b_norm: dot(b, b, runtime).sqrt(),
            iterations: 0,
            history: vec![rz],
            done: false,
        }
    }

    fn relative(&self, runtime: &Runtime) -> f64 {
        let rn = dot(&self.r, &self.r, runtime).sqrt();
        if self.b_norm > 0.0 {
            rn / self.b_norm
        } else {
            rn
        }
    }

    fn step(&mut self, q: &[f64], inv_diag: &[f64], runtime: &Runtime) {
        let pq = dot(&self.p, q, runtime);
        let alpha = self.rz / pq;
        let n = self.x.len();
        let (p, r) = (&self.p, &mut self.r);
        let x = &mut self.x;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let r = &self.r;
        runtime.fill_slice(&mut self.z, |i| r[i] * inv_diag[i]);
        let rz_new = dot(&self.r, &self.z, runtime);
        let beta = rz_new / self.rz;
        let z = &self.z;
        for i in 0..n {
            self.p[i] = z[i] + beta * self.p[i];
        }
        self.rz = rz_new;
        self.iterations += 1;
        self.history.push(rz_new);
    }
}

/// Solves `H s = -χ` and `H t = -1` from initial guesses `s0`, `t0`.
///
/// Each iteration performs one shared multiply `H [p_s, p_t]`; a system that
/// has converged stops updating while the other continues. Convergence is
/// the relative residual `‖r‖/‖b‖ ≤ tol` for each system. At exit the true
/// residual is recomputed; if rounding has pushed it above `tol` the
/// iteration restarts from it.
pub fn cg_dual(
    h: &SparseHalfMatrix,
    chi: &[f64],
    s0: Vec<f64>,
    t0: Vec<f64>,
    tol: f64,
    max_iter: usize,
    runtime: &Runtime,
    workspace: &mut SpmvWorkspace,
) -> Result<DualSolution> {
    let n = h.dim();
    for len in [chi.len(), s0.len(), t0.len()] {
        if len != n {
            return Err(ReaxError::DimensionMismatch { expected: n, got: len });
        }
    }
    if !(tol > 0.0) {
        return Err(ReaxError::InvalidParameter(format!("qeq tolerance must be positive, got {tol}")));
    }
    let b_s: Vec<f64> = chi.iter().map(|c| -c).collect();
    let b_t = vec![-1.0; n];
    let inv_diag: Vec<f64> = h.diag.iter().map(|d| 1.0 / d).collect();

    let [hs, ht] = workspace.multiply(h, [&s0, &t0], runtime)?;
    let mut s = System::start(&b_s, s0, &hs, &inv_diag, runtime);
    let mut t = System::start(&b_t, t0, &ht, &inv_diag, runtime);
    let (mut hist_s, mut hist_t) = (Vec::new(), Vec::new());
    let (mut iter_s, mut iter_t) = (0, 0);

    let mut total = 0;
    loop {
        s.done = s.relative(runtime) <= tol;
        t.done = t.relative(runtime) <= tol;
        while !(s.done && t.done) && total < max_iter {
            let [qs, qt] = workspace.multiply(h, [&s.p, &t.p], runtime)?;
            if !s.done {
                s.step(&qs, &inv_diag, runtime);
                s.done = s.relative(runtime) <= tol;
            }
            if !t.done {
                t.step(&qt, &inv_diag, runtime);
                t.done = t.relative(runtime) <= tol;
            }
            total += 1;
        }
        // true residuals
        let [hs, ht] = workspace.multiply(h, [&s.x, &t.x], runtime)?;
        iter_s += s.iterations;
        iter_t += t.iterations;
        hist_s.extend_from_slice(&s.history);
        hist_t.extend_from_slice(&t.history);
        let s_next = System::start(&b_s, std::mem::take(&mut s.x), &hs, &inv_diag, runtime);
        let t_next = System::start(&b_t, std::mem::take(&mut t.x), &ht, &inv_diag, runtime);
        s = s_next;
        t = t_next;
        let (rs, rt) = (s.relative(runtime), t.relative(runtime));
        if rs <= tol && rt <= tol {
            return Ok(DualSolution {
                s: s.x,
                t: t.x,
                report: CgReport {
                    iterations_s: iter_s,
                    iterations_t: iter_t,
                    residual_s: rs,
                    residual_t: rt,
                    history_s: hist_s,
                    history_t: hist_t,
                },
            });
        }
        if total >= max_iter {
            return Err(ReaxError::NonConvergence {
                iterations: total,
                residual_s: rs,
                residual_t: rt,
            });
        }
        s.history.clear();
        t.history.clear();
    }
}

/// Single-system preconditioned CG, used to cross-check [`cg_dual`].
pub fn cg_single(
    h: &SparseHalfMatrix,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
    runtime: &Runtime,
) -> Result<(Vec<f64>, usize)> {
    let mut ws = SpmvWorkspace::new(runtime.threads());
    let inv_diag: Vec<f64> = h.diag.iter().map(|d| 1.0 / d).collect();
    let [hx] = ws.multiply(h, [&x0], runtime)?;
    let mut sys = System::start(b, x0, &hx, &inv_diag, runtime);
    while sys.relative(runtime) > tol {
        if sys.iterations >= max_iter {
            let r = sys.relative(runtime);
            return Err(ReaxError::NonConvergence {
                iterations: sys.iterations,
                residual_s: r,
                residual_t: r,
            });
        }
        let [q] = ws.multiply(h, [&sys.p], runtime)?;
        sys.step(&q, &inv_diag, runtime);
    }
    Ok((sys.x, sys.iterations))
}

/// `q = s - μ t` with `μ = (Σs - Q_net) / Σt`, so `Σq = Q_net`.
pub fn charges_from_st(s: &[f64], t: &[f64], q_net: f64) -> Result<Vec<f64>> {
    let sum_t: f64 = t.iter().sum();
    if sum_t == 0.0 || !sum_t.is_finite() {
        return Err(ReaxError::SingularChargeConstraint);
    }
    let mu = (s.iter().sum::<f64>() - q_net) / sum_t;
    Ok(s.iter().zip(t).map(|(si, ti)| si - mu * ti).collect())
}
