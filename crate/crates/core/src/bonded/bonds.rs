//! Full symmetric bond list, bond-order correction, and the bond and
//! over-coordination energies.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

use super::{sigmoid, softplus};
use crate::error::{ReaxError, Result};
use crate::forcefield::{ForceField, PairParams};
use crate::geometry::Vec3;
use crate::neighbor::HalfNeighborList;
use crate::parallel::{exclusive_prefix_sum, EnergyTerm, PrivatizedAccumulator, Runtime, SharedSlice};

pub const DEFAULT_BOND_CAPACITY: usize = 32;

/// Directed bond `i → j` stored in row `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondEntry {
    pub j: u32,
    /// Index of the mirror entry `j → i`.
    pub sym_index: u32,
    pub r: f64,
    /// `x_j - x_i`, minimum image.
    pub d: Vec3,
    pub bo_raw: f64,
    /// `dBO_raw/dr`
    pub dbo_raw: f64,
    /// Corrected bond order, identical bits in both directions.
    pub bo: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BondList {
    pub offsets: Vec<usize>,
    pub entries: Vec<BondEntry>,
    /// Over-coordination `Δ_i = Σ_j BO_raw(i,j) - Val_i`.
    pub delta: Vec<f64>,
    /// Correction factor `f_i = exp(-λ softplus_k(Δ_i))`.
    pub fcorr: Vec<f64>,
    /// Per-atom slot capacity used by the build.
    pub capacity: usize,
}

impl BondList {
    pub fn n_atoms(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[BondEntry] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn row_start(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Entry index of `i → j`, if bonded.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i)
            .binary_search_by_key(&(j as u32), |e| e.j)
            .ok()
            .map(|k| self.offsets[i] + k)
    }

    /// Undirected bonds `(i, j, BO)` with `i < j`.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_atoms()).flat_map(move |i| {
            self.row(i)
                .iter()
                .filter(move |e| e.j as usize > i)
                .map(move |e| (i, e.j as usize, e.bo))
        })
    }
}

/// Shifted raw bond order at distance `r` and its radial derivative.
/// `shift` is the unshifted value at the bond cutoff.
#[inline]
pub fn raw_bond_order(p: &PairParams, shift: f64, r: f64) -> (f64, f64) {
    let x = (r / p.r0).powf(p.p_bo2);
    let e = (p.p_bo1 * x).exp();
    (e - shift, e * p.p_bo1 * p.p_bo2 * x / r)
}

#[inline]
fn pair_of(ff: &ForceField, ti: usize, tj: usize) -> (&PairParams, f64) {
    let (a, b) = if ti <= tj { (ti, tj) } else { (tj, ti) };
    (ff.pair(a, b), ff.mixed(a, b).bo_shift)
}

/// Builds the bond list from the neighbor list with a fixed per-atom slot
/// capacity.
///
/// One pass over the half list finds bonded pairs and reserves a slot in
/// the rows of both atoms. The reservation is a single atomic increment of
/// the row length; everything else happens outside it. Rows are then
/// compacted to CSR, sorted by neighbor index so the result does not depend
/// on thread interleaving. Bond orders are left uncorrected; call
/// [`correct_bond_orders`] next.
pub fn build_bond_list(
    nbrs: &HalfNeighborList,
    types: &[usize],
    ff: &ForceField,
    runtime: &Runtime,
    capacity: usize,
) -> Result<BondList> {
    let n = nbrs.n_atoms();
    let counters: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(0)).collect();
    let overflow = AtomicUsize::new(usize::MAX);
    // (neighbor, source half-list entry)
    let mut slots = vec![(0u32, 0u32); n * capacity];
    {
        let out = SharedSlice::new(&mut slots);
        runtime.for_chunks(n, |_, rows| {
            for i in rows {
                let base = nbrs.offsets[i];
                for (k, e) in nbrs.row(i).iter().enumerate() {
                    if e.r > ff.r_bond {
                        continue;
                    }
                    let j = e.j as usize;
                    let (p, shift) = pair_of(ff, types[i], types[j]);
                    if raw_bond_order(p, shift, e.r).0 < p.bo_cut {
                        continue;
                    }
                    let src = (base + k) as u32;
                    for (a, b) in [(i, j), (j, i)] {
                        let slot = counters[a].fetch_add(1, Ordering::Relaxed) as usize;
                        if slot < capacity {
                            // SAFETY: the slot index was reserved by this thread alone.
                            unsafe { out.write(a * capacity + slot, (b as u32, src)) };
                        } else {
                            overflow.fetch_min(a, Ordering::Relaxed);
                        }
                    }
                }
            }
        });
    }
    let atom = overflow.into_inner();
    if atom != usize::MAX {
        return Err(ReaxError::BondCapacity { atom, capacity });
    }

    let counts: Vec<usize> = counters.into_iter().map(|c| c.into_inner() as usize).collect();
    let offsets = exclusive_prefix_sum(&counts);
    let blank = BondEntry {
        j: 0,
        sym_index: 0,
        r: 0.0,
        d: [0.0; 3],
        bo_raw: 0.0,
        dbo_raw: 0.0,
        bo: 0.0,
    };
    let mut entries = vec![blank; offsets[n]];
    {
        let out = SharedSlice::new(&mut entries);
        let (offsets, slots) = (&offsets, &mut slots);
        let slots = SharedSlice::new(slots);
        runtime.for_chunks(n, |_, rows| {
            for i in rows {
                // SAFETY: each atom owns its slot block and its CSR row.
                let mine = unsafe { slots.slice_mut(i * capacity..i * capacity + counts[i]) };
                mine.sort_unstable_by_key(|s| s.0);
                let row = unsafe { out.slice_mut(offsets[i]..offsets[i + 1]) };
                for (dst, &(j, src)) in row.iter_mut().zip(mine.iter()) {
                    let ne = &nbrs.entries[src as usize];
                    let jj = j as usize;
                    let d = if i < jj { ne.d } else { [-ne.d[0], -ne.d[1], -ne.d[2]] };
                    let (p, shift) = pair_of(ff, types[i], types[jj]);
                    let (bo_raw, dbo_raw) = raw_bond_order(p, shift, ne.r);
                    *dst = BondEntry {
                        j,
                        sym_index: 0,
                        r: ne.r,
                        d,
                        bo_raw,
                        dbo_raw,
                        bo: bo_raw,
                    };
                }
            }
        });
    }

    let mut list = BondList {
        offsets,
        entries,
        delta: vec![0.0; n],
        fcorr: vec![1.0; n],
        capacity,
    };
    let sym: Vec<u32> = {
        let mut sym = vec![0u32; list.entries.len()];
        let l = &list;
        let out = SharedSlice::new(&mut sym);
        runtime.for_chunks(n, |_, rows| {
            for i in rows {
                for (k, e) in l.row(i).iter().enumerate() {
                    let mirror = l.find(e.j as usize, i).expect("bond list is symmetric");
                    // SAFETY: entry indices of distinct rows are disjoint.
                    unsafe { out.write(l.offsets[i] + k, mirror as u32) };
                }
            }
        });
        sym
    };
    for (e, s) in list.entries.iter_mut().zip(sym) {
        e.sym_index = s;
    }
    Ok(list)
}

/// [`build_bond_list`] that doubles `capacity` and rebuilds on overflow.
/// `capacity` keeps the size that worked.
pub fn build_bond_list_growing(
    nbrs: &HalfNeighborList,
    types: &[usize],
    ff: &ForceField,
    runtime: &Runtime,
    capacity: &mut usize,
) -> Result<BondList> {
    loop {
        match build_bond_list(nbrs, types, ff, runtime, *capacity) {
            Err(ReaxError::BondCapacity { .. }) if *capacity < nbrs.n_atoms().max(1) => {
                *capacity *= 2;
            }
            other => return other,
        }
    }
}

/// Computes `Δ`, the correction factors and the corrected bond orders
/// `BO = BO_raw f_i f_j`. The product is always formed with the lower atom
/// index first so both directions hold the same bits.
pub fn correct_bond_orders(bonds: &mut BondList, types: &[usize], ff: &ForceField, runtime: &Runtime) {
    let n = bonds.n_atoms();
    let (lambda, k) = (ff.lambda, ff.softplus_k);
    let mut delta = std::mem::take(&mut bonds.delta);
    let mut fcorr = std::mem::take(&mut bonds.fcorr);
    delta.resize(n, 0.0);
    fcorr.resize(n, 1.0);
    {
        let b = &*bonds;
        runtime.fill_slice(&mut delta, |i| {
            b.row(i).iter().map(|e| e.bo_raw).sum::<f64>() - ff.types[types[i]].valence
        });
        let delta = &delta;
        runtime.fill_slice(&mut fcorr, |i| (-lambda * softplus(delta[i], k)).exp());
    }
    {
        let offsets = &bonds.offsets;
        let f = &fcorr;
        let out = SharedSlice::new(&mut bonds.entries);
        runtime.for_chunks(n, |_, rows| {
            let span = offsets[rows.start]..offsets[rows.end];
            let base = span.start;
            // SAFETY: row spans of disjoint atom ranges are disjoint.
            let seg = unsafe { out.slice_mut(span) };
            for i in rows {
                for e in &mut seg[offsets[i] - base..offsets[i + 1] - base] {
                    let j = e.j as usize;
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    e.bo = e.bo_raw * f[a] * f[b];
                }
            }
        });
    }
    bonds.delta = delta;
    bonds.fcorr = fcorr;
}

/// `E_bond = -Σ_{i<j} De BO(i,j)` and `E_over = Σ_i p_over softplus_k(Δ_i)`.
/// Records `dE/dBO` and `dE/dΔ`; forces follow in [`aggregate_bond_forces`].
pub fn energy_forces_bonded(
    bonds: &BondList,
    types: &[usize],
    ff: &ForceField,
    acc: &PrivatizedAccumulator,
    runtime: &Runtime,
) {
    runtime.for_chunks(bonds.n_atoms(), |tid, rows| {
        let mut local = acc.local(tid);
        let (mut e_bond, mut e_over) = (0.0, 0.0);
        for i in rows {
            let di = bonds.delta[i];
            e_over += ff.p_over * softplus(di, ff.softplus_k);
            local.delta_derivs[i] += ff.p_over * sigmoid(di, ff.softplus_k);
            let base = bonds.offsets[i];
            for (k, e) in bonds.row(i).iter().enumerate() {
                let j = e.j as usize;
                if j <= i {
                    continue;
                }
                let de = ff.pair(types[i], types[j]).de;
                e_bond -= de * e.bo;
                local.bond_derivs[base + k] -= de;
            }
        }
        local.energy.add(EnergyTerm::Bond, e_bond);
        local.energy.add(EnergyTerm::Over, e_over);
    });
}

/// Converts the accumulated `dE/dBO` and `dE/dΔ` into pair forces.
///
/// With `BO = BO_raw f_i f_j`, `f_i = f(Δ_i)` and `Δ_i = Σ_j BO_raw(i,j) - Val_i`,
/// the total derivative with respect to one raw bond order is
/// `dE/dBO · f_i f_j + dE/dΔ_i + dE/dΔ_j`, where `dE/dΔ` already includes
/// the path through `f`.
pub fn aggregate_bond_forces(
    bonds: &BondList,
    ff: &ForceField,
    acc: &mut PrivatizedAccumulator,
    runtime: &Runtime,
) {
    let n = bonds.n_atoms();
    let mut cdbo = vec![0.0; bonds.n_entries()];
    let mut ddelta = vec![0.0; n];
    acc.reduce_derivs(runtime, &mut cdbo, &mut ddelta);

    let (lambda, k) = (ff.lambda, ff.softplus_k);
    let mut de_ddelta = vec![0.0; n];
    runtime.fill_slice(&mut de_ddelta, |i| {
        let base = bonds.offsets[i];
        let mut de_df = 0.0;
        for (m, e) in bonds.row(i).iter().enumerate() {
            let total = cdbo[base + m] + cdbo[e.sym_index as usize];
            de_df += total * e.bo_raw * bonds.fcorr[e.j as usize];
        }
        let df_ddelta = -lambda * bonds.fcorr[i] * sigmoid(bonds.delta[i], k);
        ddelta[i] + de_df * df_ddelta
    });

    let acc = &*acc;
    runtime.for_chunks(n, |tid, rows| {
        let mut local = acc.local(tid);
        for i in rows {
            let base = bonds.offsets[i];
            for (m, e) in bonds.row(i).iter().enumerate() {
                let j = e.j as usize;
                if j <= i {
                    continue;
                }
                let total = cdbo[base + m] + cdbo[e.sym_index as usize];
                let de_draw = total * bonds.fcorr[i] * bonds.fcorr[j] + de_ddelta[i] + de_ddelta[j];
                local.add_pair(i, j, e.d, e.r, de_draw * e.dbo_raw);
            }
        }
    });
}
