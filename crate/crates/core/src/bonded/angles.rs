//! Valence angles: list construction by count / prefix sum / fill, and the
//! angle energy.

use super::{cos_and_grads, ramp, BondList};
use crate::error::{ReaxError, Result};
use crate::forcefield::ForceField;
use crate::parallel::{exclusive_prefix_sum, EnergyTerm, PrivatizedAccumulator, Runtime, SharedSlice};

/// Triplet `i - j - k` centered on `j`, with `i < k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Angle {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    /// Bond-list entries `j → i` and `j → k`.
    pub e_ji: u32,
    pub e_jk: u32,
}

/// Angles grouped by central atom.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AngleList {
    pub offsets: Vec<usize>,
    pub angles: Vec<Angle>,
}

impl AngleList {
    pub fn n_atoms(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Angles centered on `j`.
    pub fn owned(&self, j: usize) -> &[Angle] {
        &self.angles[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn count(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }
}

/// Counts the qualifying angles of every atom without storing them, turns
/// the counts into disjoint output segments by prefix sum, then fills the
/// segments in parallel.
pub fn build_angle_list(bonds: &BondList, ff: &ForceField, runtime: &Runtime) -> AngleList {
    let n = bonds.n_atoms();
    let thb = ff.thb_cut;
    let mut counts = vec![0usize; n];
    runtime.fill_slice(&mut counts, |j| {
        let q = bonds.row(j).iter().filter(|e| e.bo >= thb).count();
        q * q.saturating_sub(1) / 2
    });
    let offsets = exclusive_prefix_sum(&counts);
    let blank = Angle {
        i: 0,
        j: 0,
        k: 0,
        e_ji: 0,
        e_jk: 0,
    };
    let mut angles = vec![blank; offsets[n]];
    {
        let out = SharedSlice::new(&mut angles);
        let offsets = &offsets;
        runtime.for_chunks(n, |_, centers| {
            let mut strong = Vec::new();
            for j in centers {
                // SAFETY: each center owns its own segment.
                let seg = unsafe { out.slice_mut(offsets[j]..offsets[j + 1]) };
                if seg.is_empty() {
                    continue;
                }
                let base = bonds.row_start(j);
                strong.clear();
                strong.extend(
                    bonds
                        .row(j)
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| e.bo >= thb)
                        .map(|(m, e)| (e.j, (base + m) as u32)),
                );
                let mut w = 0;
                for a in 0..strong.len() {
                    for b in a + 1..strong.len() {
                        seg[w] = Angle {
                            i: strong[a].0,
                            j: j as u32,
                            k: strong[b].0,
                            e_ji: strong[a].1,
                            e_jk: strong[b].1,
                        };
                        w += 1;
                    }
                }
            }
        });
    }
    AngleList { offsets, angles }
}

/// `E = Σ k g(BO_ji) g(BO_jk) (cos θ - cos θ0)²` with the angle parameters of
/// the central atom type.
pub fn energy_forces_angles(
    angles: &AngleList,
    bonds: &BondList,
    types: &[usize],
    ff: &ForceField,
    acc: &PrivatizedAccumulator,
    runtime: &Runtime,
) -> Result<()> {
    let thb = ff.thb_cut;
    runtime.try_for_chunks(angles.n_atoms(), |tid, centers| {
        let mut local = acc.local(tid);
        let mut energy = 0.0;
        for j in centers {
            let params = ff.angles[types[j]];
            if params.k == 0.0 {
                continue;
            }
            let cos0 = params.theta0.cos();
            for a in angles.owned(j) {
                let (bi, bk) = (&bonds.entries[a.e_ji as usize], &bonds.entries[a.e_jk as usize]);
                let (u, v) = (bi.d, bk.d);
                let (c, gu, gv) = cos_and_grads(u, v).ok_or(ReaxError::DegenerateAngle {
                    i: a.i as usize,
                    j,
                    k: a.k as usize,
                })?;
                let (g1, dg1) = ramp(bi.bo, thb);
                let (g2, dg2) = ramp(bk.bo, thb);
                let dc = c - cos0;
                energy += params.k * g1 * g2 * dc * dc;
                local.bond_derivs[a.e_ji as usize] += params.k * dg1 * g2 * dc * dc;
                local.bond_derivs[a.e_jk as usize] += params.k * g1 * dg2 * dc * dc;

                let de_dc = 2.0 * params.k * g1 * g2 * dc;
                let fi = [-de_dc * gu[0], -de_dc * gu[1], -de_dc * gu[2]];
                let fk = [-de_dc * gv[0], -de_dc * gv[1], -de_dc * gv[2]];
                let (i, k) = (a.i as usize, a.k as usize);
                local.add_force(i, fi);
                local.add_force(k, fk);
                local.add_force(j, [-fi[0] - fk[0], -fi[1] - fk[1], -fi[2] - fk[2]]);
                local.add_virial(u, fi);
                local.add_virial(v, fk);
            }
        }
        local.energy.add(EnergyTerm::Angle, energy);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bonded::{build_bond_list, correct_bond_orders, DEFAULT_BOND_CAPACITY};
    use crate::fixtures;
    use crate::geometry::SimBox;
    use crate::neighbor::{build_cell_grid, build_half_neighbor_list};
    use crate::parallel::SchedulePolicy;
    use crate::system::SystemState;
    use std::collections::BTreeSet;

    fn bonds_for(s: &SystemState, b: &SimBox, ff: &ForceField, rt: &Runtime) -> BondList {
        let g = build_cell_grid(s, b, ff.r_nonb).unwrap();
        let nb = build_half_neighbor_list(s, b, &g, ff.r_nonb, rt);
        let mut bl = build_bond_list(&nb, &s.types, ff, rt, DEFAULT_BOND_CAPACITY).unwrap();
        correct_bond_orders(&mut bl, &s.types, ff, rt);
        bl
    }

    fn brute(bonds: &BondList, thb: f64) -> BTreeSet<(u32, u32, u32)> {
        let n = bonds.n_atoms();
        let strong = |a: usize, b: usize| bonds.find(a, b).is_some_and(|e| bonds.entries[e].bo >= thb);
        let mut out = BTreeSet::new();
        for j in 0..n {
            for i in 0..n {
                for k in i + 1..n {
                    if i != j && k != j && strong(j, i) && strong(j, k) {
                        out.insert((i as u32, j as u32, k as u32));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn linear_chain_has_one_angle() {
        let ff = ForceField::chon();
        let (s, b) = fixtures::zigzag_chain(&ff, "C", 3, 1.45);
        let rt = Runtime::serial();
        let al = build_angle_list(&bonds_for(&s, &b, &ff, &rt), &ff, &rt);
        assert_eq!(al.len(), 1);
        assert_eq!((al.angles[0].i, al.angles[0].j, al.angles[0].k), (0, 1, 2));
    }

    #[test]
    fn matches_brute_force_on_random_systems() {
        let ff = ForceField::chon();
        let rt = Runtime::new(3, SchedulePolicy::dynamic(2));
        for seed in 0..15 {
            let (s, b) = fixtures::random_cluster(&ff, 60, 100 + seed);
            let bl = bonds_for(&s, &b, &ff, &rt);
            let al = build_angle_list(&bl, &ff, &rt);
            let got: BTreeSet<_> = al.angles.iter().map(|a| (a.i, a.j, a.k)).collect();
            assert_eq!(got.len(), al.len());
            assert_eq!(got, brute(&bl, ff.thb_cut));
            for j in 0..al.n_atoms() {
                let q = bl.row(j).iter().filter(|e| e.bo >= ff.thb_cut).count();
                assert_eq!(al.count(j), q * q.saturating_sub(1) / 2);
            }
            assert_eq!(*al.offsets.last().unwrap(), al.len());
        }
    }

    #[test]
    fn zero_energy_at_rest_angle() {
        let mut ff = ForceField::chon();
        let c = ff.type_index("C").unwrap();
        ff.angles[c].theta0 = 130f64.to_radians();
        let t = 130f64.to_radians();
        let pos = vec![[11.4, 10.0, 10.0], [10.0, 10.0, 10.0], [10.0 + 1.4 * t.cos(), 10.0 + 1.4 * t.sin(), 10.0]];
        let s = SystemState::new(vec![c; 3], pos);
        let b = SimBox::new([30.0; 3], [false; 3]).unwrap();
        let rt = Runtime::serial();
        let bl = bonds_for(&s, &b, &ff, &rt);
        let al = build_angle_list(&bl, &ff, &rt);
        let mut acc = PrivatizedAccumulator::new(1, 3);
        acc.zero(&rt, bl.n_entries());
        energy_forces_angles(&al, &bl, &s.types, &ff, &acc, &rt).unwrap();
        let l = acc.local(0);
        assert!(l.energy.get(EnergyTerm::Angle).abs() < 1e-20);
        assert!(l.forces.iter().flatten().all(|f| f.abs() < 1e-12));
    }
}
