//! Hydrogen-bond list and energy.
//!
//! A hydrogen whose corrected bond order to an acceptor-role heavy atom `X`
//! reaches `hbond.donor_bo` is a donor; every other acceptor-role atom `Z`
//! within `hbond.cutoff` of it forms an `X-H···Z` entry.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

use super::{cos_and_grads, ramp, BondList};
use crate::error::{ReaxError, Result};
use crate::forcefield::{ForceField, HBondRole};
use crate::geometry::Vec3;
use crate::neighbor::HalfNeighborList;
use crate::parallel::{exclusive_prefix_sum, EnergyTerm, PrivatizedAccumulator, Runtime, SharedSlice};

pub const DEFAULT_HBOND_CAPACITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HBond {
    /// Donor heavy atom.
    pub x: u32,
    /// Acceptor.
    pub z: u32,
    /// Bond-list entry `H → X`.
    pub e_hx: u32,
    /// `|x_Z - x_H|`
    pub r: f64,
    /// `x_Z - x_H`, minimum image.
    pub d: Vec3,
}

/// Hydrogen-bond entries grouped by hydrogen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HBondList {
    pub offsets: Vec<usize>,
    pub entries: Vec<HBond>,
    pub capacity: usize,
}

impl HBondList {
    pub fn n_atoms(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn row(&self, h: usize) -> &[HBond] {
        &self.entries[self.offsets[h]..self.offsets[h + 1]]
    }

    /// Hydrogens with at least one entry.
    pub fn donors(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_atoms()).filter(|&h| !self.row(h).is_empty())
    }
}

/// Bond entries of `h` that qualify as donor bonds.
fn donor_bonds<'a>(
    bonds: &'a BondList,
    types: &'a [usize],
    ff: &'a ForceField,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> + 'a {
    let is_h = ff.types[types[h]].hbond == HBondRole::DonorH;
    let base = bonds.row_start(h);
    bonds
        .row(h)
        .iter()
        .enumerate()
        .filter(move |(_, e)| {
            is_h && e.bo >= ff.hbond.donor_bo
                && ff.types[types[e.j as usize]].hbond == HBondRole::Acceptor
        })
        .map(move |(m, e)| (base + m, e.j as usize))
}

/// One pass over the half list; each candidate reserves its slot in the
/// hydrogen's row by a single atomic increment, then rows are compacted and
/// sorted by `(z, x)`.
pub fn build_hbond_list(
    nbrs: &HalfNeighborList,
    bonds: &BondList,
    types: &[usize],
    ff: &ForceField,
    runtime: &Runtime,
    capacity: usize,
) -> Result<HBondList> {
    let n = nbrs.n_atoms();
    let cutoff = ff.hbond.cutoff;
    let counters: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(0)).collect();
    let overflow = AtomicUsize::new(usize::MAX);
    let blank = HBond {
        x: 0,
        z: 0,
        e_hx: 0,
        r: 0.0,
        d: [0.0; 3],
    };
    let has_h = types
        .iter()
        .any(|&t| ff.types[t].hbond == HBondRole::DonorH);
    let mut slots = if has_h { vec![blank; n * capacity] } else { Vec::new() };
    if has_h {
        let out = SharedSlice::new(&mut slots);
        let push = |h: usize, z: usize, r: f64, d: Vec3| {
            for (e, x) in donor_bonds(bonds, types, ff, h) {
                if x == z {
                    continue;
                }
                let slot = counters[h].fetch_add(1, Ordering::Relaxed) as usize;
                if slot < capacity {
                    let entry = HBond {
                        x: x as u32,
                        z: z as u32,
                        e_hx: e as u32,
                        r,
                        d,
                    };
                    // SAFETY: the slot was reserved by this thread alone.
                    unsafe { out.write(h * capacity + slot, entry) };
                } else {
                    overflow.fetch_min(h, Ordering::Relaxed);
                }
            }
        };
        runtime.for_chunks(n, |_, rows| {
            for i in rows {
                let ri = ff.types[types[i]].hbond;
                for e in nbrs.row(i) {
                    if e.r > cutoff {
                        continue;
                    }
                    let j = e.j as usize;
                    let rj = ff.types[types[j]].hbond;
                    if ri == HBondRole::DonorH && rj == HBondRole::Acceptor {
                        push(i, j, e.r, e.d);
                    } else if rj == HBondRole::DonorH && ri == HBondRole::Acceptor {
                        push(j, i, e.r, [-e.d[0], -e.d[1], -e.d[2]]);
                    }
                }
            }
        });
    }
    let atom = overflow.into_inner();
    if atom != usize::MAX {
        return Err(ReaxError::HBondCapacity { atom, capacity });
    }

    let counts: Vec<usize> = counters.into_iter().map(|c| c.into_inner() as usize).collect();
    let offsets = exclusive_prefix_sum(&counts);
    let mut entries = vec![blank; offsets[n]];
    {
        let out = SharedSlice::new(&mut entries);
        let src = SharedSlice::new(&mut slots);
        let offsets = &offsets;
        runtime.for_chunks(n, |_, rows| {
            for h in rows {
                if counts[h] == 0 {
                    continue;
                }
                // SAFETY: every hydrogen owns its slot block and CSR row.
                let mine = unsafe { src.slice_mut(h * capacity..h * capacity + counts[h]) };
                mine.sort_unstable_by_key(|e| (e.z, e.x));
                let row = unsafe { out.slice_mut(offsets[h]..offsets[h + 1]) };
                row.copy_from_slice(mine);
            }
        });
    }
    Ok(HBondList {
        offsets,
        entries,
        capacity,
    })
}

/// [`build_hbond_list`] that doubles `capacity` on overflow.
pub fn build_hbond_list_growing(
    nbrs: &HalfNeighborList,
    bonds: &BondList,
    types: &[usize],
    ff: &ForceField,
    runtime: &Runtime,
    capacity: &mut usize,
) -> Result<HBondList> {
    loop {
        match build_hbond_list(nbrs, bonds, types, ff, runtime, *capacity) {
            Err(ReaxError::HBondCapacity { .. }) if *capacity < 4 * nbrs.n_atoms().max(1) => {
                *capacity *= 2;
            }
            other => return other,
        }
    }
}

/// Closes the interaction out over the last `width` Å before `cutoff` with
/// the septic switch, so energy and force reach zero smoothly.
#[inline]
fn switch(r: f64, cutoff: f64, width: f64) -> (f64, f64) {
    let lo = cutoff - width;
    if r <= lo {
        return (1.0, 0.0);
    }
    if r >= cutoff {
        return (0.0, 0.0);
    }
    let x = (r - lo) / width;
    let x3 = x * x * x;
    let s = 1.0 + x3 * x * (-35.0 + x * (84.0 + x * (-70.0 + 20.0 * x)));
    let ds = x3 * (-140.0 + x * (420.0 + x * (-420.0 + 140.0 * x)));
    (s, ds / width)
}

/// `E = Σ p_hb g(BO_XH) R(r) S(r) sin⁴(θ/2)` with
/// `R(r) = exp(-(r/r_hb + r_hb/r - 2))`, `θ` the X-H···Z angle at H, and
/// `g` the quadratic onset above the donor threshold.
pub fn energy_forces_hbond(
    hbonds: &HBondList,
    bonds: &BondList,
    ff: &ForceField,
    acc: &PrivatizedAccumulator,
    runtime: &Runtime,
) -> Result<()> {
    let p = ff.hbond;
    if p.p_hb == 0.0 {
        return Ok(());
    }
    runtime.try_for_chunks(hbonds.n_atoms(), |tid, rows| {
        let mut local = acc.local(tid);
        let mut energy = 0.0;
        for h in rows {
            for hb in hbonds.row(h) {
                let bond = &bonds.entries[hb.e_hx as usize];
                let (x, z) = (hb.x as usize, hb.z as usize);
                let (c, gu, gv) = cos_and_grads(bond.d, hb.d)
                    .ok_or(ReaxError::DegenerateAngle { i: x, j: h, k: z })?;
                let (g, dg) = ramp(bond.bo, p.donor_bo);
                let r = hb.r;
                let rad = (-(r / p.r_hb + p.r_hb / r - 2.0)).exp();
                let drad = -rad * (1.0 / p.r_hb - p.r_hb / (r * r));
                let (sw, dsw) = switch(r, p.cutoff, p.switch_width);
                let half = 0.5 * (1.0 - c);
                let ang = half * half;

                energy += p.p_hb * g * rad * sw * ang;
                local.bond_derivs[hb.e_hx as usize] += p.p_hb * dg * rad * sw * ang;

                let de_dc = -p.p_hb * g * rad * sw * half;
                let fx = [-de_dc * gu[0], -de_dc * gu[1], -de_dc * gu[2]];
                let fz = [-de_dc * gv[0], -de_dc * gv[1], -de_dc * gv[2]];
                local.add_force(x, fx);
                local.add_force(z, fz);
                local.add_force(h, [-fx[0] - fz[0], -fx[1] - fz[1], -fx[2] - fz[2]]);
                local.add_virial(bond.d, fx);
                local.add_virial(hb.d, fz);

                let de_dr = p.p_hb * g * ang * (drad * sw + rad * dsw);
                local.add_pair(h, z, hb.d, r, de_dr);
            }
        }
        local.energy.add(EnergyTerm::HBond, energy);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bonded::{build_bond_list, correct_bond_orders, DEFAULT_BOND_CAPACITY};
    use crate::fixtures;
    use crate::geometry::{norm, SimBox};
    use crate::neighbor::{build_cell_grid, build_half_neighbor_list};
    use crate::parallel::SchedulePolicy;
    use crate::system::SystemState;

    fn build(s: &SystemState, b: &SimBox, ff: &ForceField, rt: &Runtime) -> (BondList, HBondList) {
        let g = build_cell_grid(s, b, ff.r_nonb).unwrap();
        let nb = build_half_neighbor_list(s, b, &g, ff.r_nonb, rt);
        let mut bl = build_bond_list(&nb, &s.types, ff, rt, DEFAULT_BOND_CAPACITY).unwrap();
        correct_bond_orders(&mut bl, &s.types, ff, rt);
        let hl = build_hbond_list(&nb, &bl, &s.types, ff, rt, DEFAULT_HBOND_CAPACITY).unwrap();
        (bl, hl)
    }

    #[test]
    fn switch_is_smooth() {
        assert_eq!(switch(4.0, 6.0, 1.5), (1.0, 0.0));
        assert_eq!(switch(6.0, 6.0, 1.5), (0.0, 0.0));
        assert!((switch(5.25, 6.0, 1.5).0 - 0.5).abs() < 1e-12);
        let h = 1e-6;
        for r in [4.6, 5.0, 5.9] {
            let fd = (switch(r + h, 6.0, 1.5).0 - switch(r - h, 6.0, 1.5).0) / (2.0 * h);
            assert!((fd - switch(r, 6.0, 1.5).1).abs() < 1e-7);
        }
    }

    #[test]
    fn dimer_has_single_donor_entry_within_short_cutoff() {
        let mut ff = ForceField::chon();
        ff.hbond.cutoff = 2.5;
        ff.finalize().unwrap();
        let (s, b) = fixtures::water_dimer(&ff, 2.8);
        let (_, hl) = build(&s, &b, &ff, &Runtime::serial());
        assert_eq!(hl.len(), 1);
        let e = hl.entries[0];
        assert_eq!((hl.donors().next(), e.x, e.z), (Some(1), 0, 3));
        assert!((e.r - (2.8 - fixtures::WATER_OH)).abs() < 1e-12);
    }

    #[test]
    fn dimer_matches_brute_force_scan_at_default_cutoff() {
        let ff = ForceField::chon();
        let (s, b) = fixtures::water_dimer(&ff, 2.8);
        let (bl, hl) = build(&s, &b, &ff, &Runtime::new(2, SchedulePolicy::dynamic(1)));
        let mut expect = Vec::new();
        for h in 0..s.len() {
            for (e, x) in donor_bonds(&bl, &s.types, &ff, h) {
                for z in 0..s.len() {
                    let d = b.delta(s.positions[h], s.positions[z]);
                    if z != x
                        && ff.types[s.types[z]].hbond == HBondRole::Acceptor
                        && norm(d) <= ff.hbond.cutoff
                    {
                        expect.push((h, x, z, e));
                    }
                }
            }
        }
        expect.sort_by_key(|&(h, x, z, _)| (h, z, x));
        let got: Vec<_> = (0..s.len())
            .flat_map(|h| hl.row(h).iter().map(move |e| (h, e.x as usize, e.z as usize, e.e_hx as usize)))
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn no_hydrogen_means_empty_list() {
        let ff = ForceField::chon();
        let (s, b) = fixtures::zigzag_chain(&ff, "O", 5, 1.3);
        let (_, hl) = build(&s, &b, &ff, &Runtime::serial());
        assert!(hl.is_empty());
    }

    #[test]
    fn acceptor_beyond_cutoff_is_excluded() {
        let ff = ForceField::chon();
        let (s, b) = fixtures::water_dimer(&ff, 6.0 + fixtures::WATER_OH + 0.01);
        let (_, hl) = build(&s, &b, &ff, &Runtime::serial());
        assert!(hl.row(1).iter().all(|e| e.z != 3));
    }

    #[test]
    fn linear_hbond_at_reference_distance() {
        let ff = ForceField::chon();
        let (s, b) = fixtures::water_dimer(&ff, ff.hbond.r_hb + fixtures::WATER_OH);
        let rt = Runtime::serial();
        let (bl, hl) = build(&s, &b, &ff, &rt);
        let only: Vec<HBond> = hl.row(1).iter().copied().filter(|e| e.z == 3).collect();
        assert_eq!(only.len(), 1);
        let single = HBondList {
            offsets: {
                let mut o = vec![0; s.len() + 1];
                for v in o.iter_mut().skip(2) {
                    *v = 1;
                }
                o
            },
            entries: only.clone(),
            capacity: 1,
        };
        let mut acc = PrivatizedAccumulator::new(1, s.len());
        acc.zero(&rt, bl.n_entries());
        energy_forces_hbond(&single, &bl, &ff, &acc, &rt).unwrap();
        let bo = bl.entries[only[0].e_hx as usize].bo;
        let expect = ff.hbond.p_hb * ramp(bo, ff.hbond.donor_bo).0;
        let got = acc.local(0).energy.get(EnergyTerm::HBond);
        assert!((got - expect).abs() < 1e-12 * expect.abs(), "{got} vs {expect}");
    }
}
