//! Tapered Morse van der Waals and shielded Coulomb over the half list.

use crate::forcefield::ForceField;
use crate::neighbor::HalfNeighborList;
use crate::parallel::{EnergyTerm, PrivatizedAccumulator, Runtime};

/// Shielded Coulomb kernel `(r³ + γ_ij⁻³)^{-1/3}` and its radial derivative.
#[inline]
pub(crate) fn shielded(r: f64, shield: f64) -> (f64, f64) {
    let base = r * r * r + shield;
    let v = base.cbrt().recip();
    (v, -r * r * v / base)
}

/// Each stored pair is visited once and its force applied to both atoms.
pub fn energy_forces_nonbonded(
    nbrs: &HalfNeighborList,
    types: &[usize],
    charges: &[f64],
    ff: &ForceField,
    acc: &PrivatizedAccumulator,
    runtime: &Runtime,
) {
    runtime.for_chunks(nbrs.n_atoms(), |tid, rows| {
        let mut local = acc.local(tid);
        let (mut e_vdw, mut e_coul) = (0.0, 0.0);
        for i in rows {
            let (ti, qi) = (types[i], charges[i]);
            for e in nbrs.row(i) {
                let j = e.j as usize;
                let m = ff.mixed(ti, types[j]);
                let (t, dt) = ff.taper.eval(e.r);
                if t == 0.0 && dt == 0.0 {
                    continue;
                }
                let x = e.r - m.vdw_radius;
                let e1 = (-m.vdw_alpha * x).exp();
                let morse = m.vdw_depth * (e1 * e1 - 2.0 * e1);
                let dmorse = 2.0 * m.vdw_depth * m.vdw_alpha * (e1 - e1 * e1);
                e_vdw += morse * t;
                let mut de_dr = dmorse * t + morse * dt;

                let qq = qi * charges[j];
                if qq != 0.0 {
                    let (k, dk) = shielded(e.r, m.shield);
                    let c = ff.coulomb * qq;
                    e_coul += c * k * t;
                    de_dr += c * (dk * t + k * dt);
                }
                local.add_pair(i, j, e.d, e.r, de_dr);
            }
        }
        local.energy.add(EnergyTerm::Vdw, e_vdw);
        local.energy.add(EnergyTerm::Coulomb, e_coul);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SimBox;
    use crate::neighbor::{build_cell_grid, build_half_neighbor_list};
    use crate::system::SystemState;

    fn pair_energy(ff: &ForceField, types: [usize; 2], q: [f64; 2], r: f64) -> (f64, f64) {
        let mut s = SystemState::new(types.to_vec(), vec![[5.0, 5.0, 5.0], [5.0 + r, 5.0, 5.0]]);
        s.charges = q.to_vec();
        let b = SimBox::new([30.0; 3], [false; 3]).unwrap();
        let rt = Runtime::serial();
        let g = build_cell_grid(&s, &b, ff.r_nonb).unwrap();
        let nb = build_half_neighbor_list(&s, &b, &g, ff.r_nonb, &rt);
        let mut acc = PrivatizedAccumulator::new(1, 2);
        acc.zero(&rt, 0);
        energy_forces_nonbonded(&nb, &s.types, &s.charges, ff, &acc, &rt);
        let e = acc.reduce_energies();
        (e.get(EnergyTerm::Vdw), e.get(EnergyTerm::Coulomb))
    }

    #[test]
    fn neutral_pair_has_no_coulomb() {
        let ff = ForceField::chon();
        let (_, ec) = pair_energy(&ff, [0, 1], [0.0, 0.7], 3.0);
        assert_eq!(ec, 0.0);
    }

    #[test]
    fn vdw_at_radius_is_tapered_well_depth() {
        let ff = ForceField::chon();
        let o = ff.type_index("O").unwrap();
        let m = *ff.mixed(o, o);
        let (ev, _) = pair_energy(&ff, [o, o], [0.0, 0.0], m.vdw_radius);
        let expect = -m.vdw_depth * ff.taper.value(m.vdw_radius);
        assert!((ev - expect).abs() < 1e-14);
    }

    #[test]
    fn coulomb_matches_hand_evaluation() {
        let ff = ForceField::chon();
        let (o, h) = (ff.type_index("O").unwrap(), ff.type_index("H").unwrap());
        let r = 2.5;
        let (_, ec) = pair_energy(&ff, [o, h], [-0.8, 0.4], r);
        let g = (ff.types[o].gamma * ff.types[h].gamma).sqrt();
        let expect = ff.coulomb * -0.32 * (r.powi(3) + g.powi(-3)).powf(-1.0 / 3.0) * ff.taper.value(r);
        assert!((ec - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn shielded_derivative() {
        let h = 1e-6;
        for r in [0.1, 1.0, 4.0] {
            let fd = (shielded(r + h, 8.0).0 - shielded(r - h, 8.0).0) / (2.0 * h);
            assert!((fd - shielded(r, 8.0).1).abs() < 1e-8);
        }
    }
}
