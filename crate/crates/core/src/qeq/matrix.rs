//! Symmetric QEq kernel stored as its strict upper triangle plus diagonal,
//! and the multiply that uses the symmetry.

use std::sync::Mutex;

use crate::bonded::shielded;
use crate::error::{ReaxError, Result};
use crate::forcefield::ForceField;
use crate::neighbor::HalfNeighborList;
use crate::parallel::{exclusive_prefix_sum, Runtime, SharedSlice};

/// Row `i` holds the nonzero `H_ij` with `j > i`, columns ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseHalfMatrix {
    pub offsets: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
    pub diag: Vec<f64>,
}

impl SparseHalfMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Stored off-diagonal entries.
    pub fn nnz_upper(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// Builds from a diagonal and `(i, j, value)` triplets with `i != j`;
    /// each unordered pair may appear once. Zero values are dropped.
    pub fn from_triplets(diag: Vec<f64>, triplets: &[(usize, usize, f64)]) -> Self {
        let n = diag.len();
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i != j && i < n && j < n, "bad triplet ({i}, {j})");
            if v != 0.0 {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                rows[a].push((b as u32, v));
            }
        }
        let mut offsets = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        SparseHalfMatrix {
            offsets,
            cols,
            vals,
            diag,
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = self.diag[i];
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[i * n + j as usize] = v;
                m[j as usize * n + i] = v;
            }
        }
        m
    }
}

/// `H_ij = C T(r) (r³ + γ_ij⁻³)^{-1/3}` over the neighbor pairs, `H_ii = η_i`.
/// Rows are sized by a counting pass and prefix sum, then filled in
/// parallel.
pub fn build_qeq_matrix(
    nbrs: &HalfNeighborList,
    types: &[usize],
    ff: &ForceField,
    runtime: &Runtime,
) -> SparseHalfMatrix {
    let n = nbrs.n_atoms();
    let cutoff = ff.taper.cutoff;
    let mut counts = vec![0usize; n];
    runtime.fill_slice(&mut counts, |i| nbrs.row(i).iter().filter(|e| e.r < cutoff).count());
    let offsets = exclusive_prefix_sum(&counts);
    let mut cols = vec![0u32; offsets[n]];
    let mut vals = vec![0.0; offsets[n]];
    {
        let (oc, ov) = (SharedSlice::new(&mut cols), SharedSlice::new(&mut vals));
        let offsets = &offsets;
        runtime.for_chunks(n, |_, rows| {
            for i in rows {
                // SAFETY: rows of distinct atoms are disjoint.
                let (c, v) = unsafe {
                    (
                        oc.slice_mut(offsets[i]..offsets[i + 1]),
                        ov.slice_mut(offsets[i]..offsets[i + 1]),
                    )
                };
                let mut w = 0;
                for e in nbrs.row(i).iter().filter(|e| e.r < cutoff) {
                    let j = e.j as usize;
                    let shield = ff.mixed(types[i], types[j]).shield;
                    c[w] = e.j;
                    v[w] = ff.coulomb * ff.taper.value(e.r) * shielded(e.r, shield).0;
                    w += 1;
                }
            }
        });
    }
    let mut diag = vec![0.0; n];
    runtime.fill_slice(&mut diag, |i| ff.types[types[i]].eta);
    SparseHalfMatrix {
        offsets,
        cols,
        vals,
        diag,
    }
}

/// Per-thread partial result vectors reused across multiplies.
#[derive(Debug)]
pub struct SpmvWorkspace {
    partials: Vec<Mutex<Vec<f64>>>,
}

impl SpmvWorkspace {
    pub fn new(threads: usize) -> Self {
        SpmvWorkspace {
            partials: (0..threads.max(1)).map(|_| Mutex::new(Vec::new())).collect(),
        }
    }

    /// `k` interleaved products `y_m = H x_m` in one pass over `H`. Each
    /// stored `(i, j)` contributes to rows `i` and `j`; thread partials are
    /// summed in ascending thread order.
    pub fn multiply<const K: usize>(
        &mut self,
        h: &SparseHalfMatrix,
        xs: [&[f64]; K],
        runtime: &Runtime,
    ) -> Result<[Vec<f64>; K]> {
        let n = h.dim();
        for x in xs {
            if x.len() != n {
                return Err(ReaxError::DimensionMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
        }
        if self.partials.len() < runtime.threads() {
            *self = SpmvWorkspace::new(runtime.threads());
        }
        let partials = &self.partials;
        let used = runtime.threads();
        runtime.pool().run(|tid| {
            let mut p = partials[tid].lock().unwrap();
            p.clear();
            p.resize(n * K, 0.0);
        });
        runtime.for_chunks(n, |tid, rows| {
            let mut p = partials[tid].lock().unwrap();
            for i in rows {
                let (cols, vals) = h.row(i);
                let mut acc = [0.0; K];
                for m in 0..K {
                    acc[m] = h.diag[i] * xs[m][i];
                }
                for (&j, &v) in cols.iter().zip(vals) {
                    let j = j as usize;
                    for m in 0..K {
                        acc[m] += v * xs[m][j];
                        p[j * K + m] += v * xs[m][i];
                    }
                }
                for m in 0..K {
                    p[i * K + m] += acc[m];
                }
            }
        });
        let views: Vec<_> = partials[..used].iter().map(|p| p.lock().unwrap()).collect();
        let mut out: [Vec<f64>; K] = std::array::from_fn(|_| vec![0.0; n]);
        for (m, y) in out.iter_mut().enumerate() {
            runtime.fill_slice(y, |i| views.iter().map(|p| p[i * K + m]).sum());
        }
        Ok(out)
    }
}

/// `y = H x` using the half storage.
pub fn spmv_half(h: &SparseHalfMatrix, x: &[f64], runtime: &Runtime) -> Result<Vec<f64>> {
    let [y] = SpmvWorkspace::new(runtime.threads()).multiply(h, [x], runtime)?;
    Ok(y)
}
