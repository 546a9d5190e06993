//! Bond orders, the bond-derived interaction lists, and every potential
//! energy term with its analytic forces.
//!
//! Kernels write geometric forces straight into the thread-private force
//! buffers. Terms that depend on corrected bond orders also record `dE/dBO`
//! per bond entry and `dE/dΔ` per atom; [`aggregate_bond_forces`] turns those
//! into forces by the chain rule through the bond-order correction.

mod angles;
mod bonds;
mod hbonds;
mod nonbonded;
mod torsions;

pub use angles::{build_angle_list, energy_forces_angles, Angle, AngleList};
pub use bonds::{
    aggregate_bond_forces, build_bond_list, build_bond_list_growing, correct_bond_orders,
    energy_forces_bonded, raw_bond_order, BondEntry, BondList, DEFAULT_BOND_CAPACITY,
};
pub use hbonds::{
    build_hbond_list, build_hbond_list_growing, energy_forces_hbond, HBond, HBondList,
    DEFAULT_HBOND_CAPACITY,
};
pub use nonbonded::energy_forces_nonbonded;
pub(crate) use nonbonded::shielded;
pub use torsions::{build_torsion_list, energy_forces_torsions, Torsion, TorsionList};

/// Quadratic onset `g(b) = ((b - t)/(1 - t))²` above threshold `t`, zero
/// below. Returns the value and its derivative.
#[inline]
pub fn ramp(b: f64, threshold: f64) -> (f64, f64) {
    if b <= threshold {
        return (0.0, 0.0);
    }
    let w = 1.0 - threshold;
    let x = (b - threshold) / w;
    (x * x, 2.0 * x / w)
}

/// `ln(1 + e^{kx}) / k`, evaluated without overflow.
#[inline]
pub fn softplus(x: f64, k: f64) -> f64 {
    let z = k * x;
    if z > 0.0 {
        (z + (-z).exp().ln_1p()) / k
    } else {
        z.exp().ln_1p() / k
    }
}

/// Derivative of [`softplus`]: the logistic function `σ(kx)`.
#[inline]
pub fn sigmoid(x: f64, k: f64) -> f64 {
    let z = k * x;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cosine of the angle between `u` and `v` plus its gradients with respect
/// to each vector. `None` if either vector is shorter than 1e-8 Å.
#[inline]
pub(crate) fn cos_and_grads(
    u: crate::geometry::Vec3,
    v: crate::geometry::Vec3,
) -> Option<(f64, crate::geometry::Vec3, crate::geometry::Vec3)> {
    use crate::geometry::{dot, norm};
    let (lu, lv) = (norm(u), norm(v));
    if lu < 1e-8 || lv < 1e-8 {
        return None;
    }
    let inv = 1.0 / (lu * lv);
    let c = dot(u, v) * inv;
    let (au, av) = (c / (lu * lu), c / (lv * lv));
    let gu = [v[0] * inv - au * u[0], v[1] * inv - au * u[1], v[2] * inv - au * u[2]];
    let gv = [u[0] * inv - av * v[0], u[1] * inv - av * v[1], u[2] * inv - av * v[2]];
    Some((c, gu, gv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_c1_at_threshold() {
        assert_eq!(ramp(0.1, 0.1), (0.0, 0.0));
        let (g, dg) = ramp(0.1 + 1e-9, 0.1);
        assert!(g < 1e-17 && dg < 1e-8);
        assert_eq!(ramp(1.0, 0.1).0, 1.0);
    }

    #[test]
    fn softplus_limits_and_derivative() {
        assert!((softplus(0.0, 10.0) - 2f64.ln() / 10.0).abs() < 1e-15);
        assert!((softplus(100.0, 10.0) - 100.0).abs() < 1e-12);
        assert!(softplus(-100.0, 10.0) < 1e-300);
        for x in [-0.7, -0.05, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (softplus(x + h, 10.0) - softplus(x - h, 10.0)) / (2.0 * h);
            assert!((fd - sigmoid(x, 10.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn cos_grads_match_finite_difference() {
        let u = [1.0, 0.2, -0.3];
        let v = [-0.4, 1.1, 0.5];
        let (_, gu, gv) = cos_and_grads(u, v).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let (mut up, mut um) = (u, u);
            up[c] += h;
            um[c] -= h;
            let fd = (cos_and_grads(up, v).unwrap().0 - cos_and_grads(um, v).unwrap().0) / (2.0 * h);
            assert!((fd - gu[c]).abs() < 1e-8);
            let (mut vp, mut vm) = (v, v);
            vp[c] += h;
            vm[c] -= h;
            let fd = (cos_and_grads(u, vp).unwrap().0 - cos_and_grads(u, vm).unwrap().0) / (2.0 * h);
            assert!((fd - gv[c]).abs() < 1e-8);
        }
        assert!(cos_and_grads([0.0; 3], v).is_none());
    }
}
