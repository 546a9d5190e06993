//! Torsions generated from pairs of angles that share a central bond.

use super::{ramp, BondList};
use crate::forcefield::ForceField;
use crate::geometry::{cross, dot, norm2, Vec3};
use crate::parallel::{exclusive_prefix_sum, EnergyTerm, PrivatizedAccumulator, Runtime, SharedSlice};

/// Dihedral `i - j - k - l` about the bond `j - k`, with `j < k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Torsion {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub l: u32,
    /// Bond-list entries `j → i`, `j → k` and `k → l`.
    pub e_ji: u32,
    pub e_jk: u32,
    pub e_kl: u32,
}

/// Torsions grouped by the lower atom `j` of their central bond.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TorsionList {
    pub offsets: Vec<usize>,
    pub torsions: Vec<Torsion>,
}

impl TorsionList {
    pub fn n_atoms(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.torsions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.torsions.is_empty()
    }

    pub fn owned(&self, j: usize) -> &[Torsion] {
        &self.torsions[self.offsets[j]..self.offsets[j + 1]]
    }
}

/// Visits every torsion owned by `j`. An angle `(i, j, k)` exists iff both
/// bonds of `j` are at or above the angle threshold, so the torsions about
/// `j - k` pair each angle at `j` that contains `k` with each angle at `k`
/// that contains `j`.
fn for_each_owned(bonds: &BondList, thb: f64, j: usize, mut visit: impl FnMut(Torsion)) {
    let jb = bonds.row_start(j);
    for (mk, ek) in bonds.row(j).iter().enumerate() {
        let k = ek.j as usize;
        if k <= j || ek.bo < thb {
            continue;
        }
        let kb = bonds.row_start(k);
        for (mi, ei) in bonds.row(j).iter().enumerate() {
            if ei.j as usize == k || ei.bo < thb {
                continue;
            }
            for (ml, el) in bonds.row(k).iter().enumerate() {
                if el.j as usize == j || el.bo < thb || el.j == ei.j {
                    continue;
                }
                visit(Torsion {
                    i: ei.j,
                    j: j as u32,
                    k: k as u32,
                    l: el.j,
                    e_ji: (jb + mi) as u32,
                    e_jk: (jb + mk) as u32,
                    e_kl: (kb + ml) as u32,
                });
            }
        }
    }
}

pub fn build_torsion_list(bonds: &BondList, ff: &ForceField, runtime: &Runtime) -> TorsionList {
    let n = bonds.n_atoms();
    let thb = ff.thb_cut;
    let mut counts = vec![0usize; n];
    runtime.fill_slice(&mut counts, |j| {
        let mut c = 0;
        for_each_owned(bonds, thb, j, |_| c += 1);
        c
    });
    let offsets = exclusive_prefix_sum(&counts);
    let blank = Torsion {
        i: 0,
        j: 0,
        k: 0,
        l: 0,
        e_ji: 0,
        e_jk: 0,
        e_kl: 0,
    };
    let mut torsions = vec![blank; offsets[n]];
    {
        let out = SharedSlice::new(&mut torsions);
        let offsets = &offsets;
        runtime.for_chunks(n, |_, owners| {
            for j in owners {
                // SAFETY: each owner writes only its own segment.
                let seg = unsafe { out.slice_mut(offsets[j]..offsets[j + 1]) };
                let mut w = 0;
                for_each_owned(bonds, thb, j, |t| {
                    seg[w] = t;
                    w += 1;
                });
            }
        });
    }
    TorsionList { offsets, torsions }
}

/// Torsion shape factor `W = sin²θ1 sin²θ2 (1 + cos 3φ)/2` and its gradients
/// with respect to the three bond vectors. The sin² damping makes `W` and its
/// gradient vanish smoothly as either bond angle approaches 0 or 180°, where
/// the dihedral is undefined. Returns `None` when the geometry is so close to
/// collinear that `W` is below rounding.
pub(crate) fn torsion_factor(b1: Vec3, b2: Vec3, b3: Vec3) -> Option<(f64, [Vec3; 3])> {
    let a = cross(b1, b2);
    let b = cross(b2, b3);
    let (aa, bb, p) = (norm2(a), norm2(b), dot(a, b));
    let s = (aa * bb).sqrt();
    let (n1, n2, n3) = (norm2(b1), norm2(b2), norm2(b3));
    if s <= 1e-14 * n1 * n2 * n3 || n2 == 0.0 {
        return None;
    }
    // W = Q / (2D), Q = s² (1 + cos3φ) with cos φ = P/s, D = n1 n2² n3
    let q = aa * bb + 4.0 * p * p * p / s - 3.0 * p * s;
    let d = n1 * n2 * n2 * n3;
    let w = q / (2.0 * d);

    let cs = -4.0 * p * p * p / (s * s) - 3.0 * p;
    let dq_da = bb + cs * bb / (2.0 * s);
    let dq_db = aa + cs * aa / (2.0 * s);
    let dq_dp = 12.0 * p * p / s - 3.0 * s;
    let inv = 1.0 / (2.0 * d);

    let ga1 = cross(b2, a);
    let ga2 = cross(a, b1);
    let gb2 = cross(b3, b);
    let gb3 = cross(b, b2);
    let gp1 = cross(b2, b);
    let bxb1 = cross(b, b1);
    let b3xa = cross(b3, a);
    let gp3 = cross(a, b2);

    let mut g = [[0.0; 3]; 3];
    for c in 0..3 {
        let dq1 = dq_da * 2.0 * ga1[c] + dq_dp * gp1[c];
        let dq2 = dq_da * 2.0 * ga2[c] + dq_db * 2.0 * gb2[c] + dq_dp * (bxb1[c] + b3xa[c]);
        let dq3 = dq_db * 2.0 * gb3[c] + dq_dp * gp3[c];
        g[0][c] = inv * dq1 - w * 2.0 * b1[c] / n1;
        g[1][c] = inv * dq2 - w * 2.0 * 2.0 * b2[c] / n2;
        g[2][c] = inv * dq3 - w * 2.0 * b3[c] / n3;
    }
    Some((w, g))
}

/// `E = Σ k_φ g(BO_ij) g(BO_jk) g(BO_kl) W(i, j, k, l)`.
pub fn energy_forces_torsions(
    torsions: &TorsionList,
    bonds: &BondList,
    ff: &ForceField,
    acc: &PrivatizedAccumulator,
    runtime: &Runtime,
) {
    let k_phi = ff.torsion.k;
    if k_phi == 0.0 {
        return;
    }
    let thb = ff.thb_cut;
    runtime.for_chunks(torsions.n_atoms(), |tid, owners| {
        let mut local = acc.local(tid);
        let mut energy = 0.0;
        for j in owners {
            for t in torsions.owned(j) {
                let (eji, ejk, ekl) = (
                    &bonds.entries[t.e_ji as usize],
                    &bonds.entries[t.e_jk as usize],
                    &bonds.entries[t.e_kl as usize],
                );
                let b1 = [-eji.d[0], -eji.d[1], -eji.d[2]];
                let Some((w, g)) = torsion_factor(b1, ejk.d, ekl.d) else {
                    continue;
                };
                let (g1, dg1) = ramp(eji.bo, thb);
                let (g2, dg2) = ramp(ejk.bo, thb);
                let (g3, dg3) = ramp(ekl.bo, thb);
                let gg = g1 * g2 * g3;
                energy += k_phi * gg * w;
                local.bond_derivs[t.e_ji as usize] += k_phi * dg1 * g2 * g3 * w;
                local.bond_derivs[t.e_jk as usize] += k_phi * g1 * dg2 * g3 * w;
                local.bond_derivs[t.e_kl as usize] += k_phi * g1 * g2 * dg3 * w;

                let s = -k_phi * gg;
                let mut f = [[0.0; 3]; 4];
                for c in 0..3 {
                    f[0][c] = -s * g[0][c];
                    f[1][c] = s * (g[0][c] - g[1][c]);
                    f[2][c] = s * (g[1][c] - g[2][c]);
                    f[3][c] = s * g[2][c];
                }
                let (i, k, l) = (t.i as usize, t.k as usize, t.l as usize);
                local.add_force(i, f[0]);
                local.add_force(j, f[1]);
                local.add_force(k, f[2]);
                local.add_force(l, f[3]);
                // positions relative to j
                local.add_virial(eji.d, f[0]);
                local.add_virial(ejk.d, f[2]);
                let xl = [ejk.d[0] + ekl.d[0], ejk.d[1] + ekl.d[1], ejk.d[2] + ekl.d[2]];
                local.add_virial(xl, f[3]);
            }
        }
        local.energy.add(EnergyTerm::Torsion, energy);
    });
}
