//! Thread-private force, energy and virial buffers with a deterministic
//! reduction (ascending thread index).

use std::sync::{Mutex, MutexGuard};

use super::Runtime;
use crate::geometry::{add_assign, outer, Vec3};

/// Potential-energy terms tallied by the force kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnergyTerm {
    Bond,
    Over,
    Angle,
    Torsion,
    HBond,
    Vdw,
    Coulomb,
}

impl EnergyTerm {
    pub const COUNT: usize = 7;
    pub const ALL: [EnergyTerm; Self::COUNT] = [
        EnergyTerm::Bond,
        EnergyTerm::Over,
        EnergyTerm::Angle,
        EnergyTerm::Torsion,
        EnergyTerm::HBond,
        EnergyTerm::Vdw,
        EnergyTerm::Coulomb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnergyTerm::Bond => "e_bond",
            EnergyTerm::Over => "e_over",
            EnergyTerm::Angle => "e_angle",
            EnergyTerm::Torsion => "e_tor",
            EnergyTerm::HBond => "e_hb",
            EnergyTerm::Vdw => "e_vdw",
            EnergyTerm::Coulomb => "e_coul",
        }
    }
}

/// Per-term energy totals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyTally(pub [f64; EnergyTerm::COUNT]);

impl EnergyTally {
    #[inline]
    pub fn get(&self, term: EnergyTerm) -> f64 {
        self.0[term as usize]
    }

    #[inline]
    pub fn add(&mut self, term: EnergyTerm, value: f64) {
        self.0[term as usize] += value;
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// One thread's private buffers.
#[derive(Debug, Default, Clone)]
pub struct ThreadBuffers {
    pub forces: Vec<Vec3>,
    /// dE/dBO per bond-list entry (corrected bond order).
    pub bond_derivs: Vec<f64>,
    /// dE/dΔ per atom from terms that depend on Δ directly.
    pub delta_derivs: Vec<f64>,
    pub energy: EnergyTally,
    pub virial: [[f64; 3]; 3],
}

impl ThreadBuffers {
    fn zero(&mut self, n_atoms: usize, n_bonds: usize) {
        self.forces.clear();
        self.forces.resize(n_atoms, [0.0; 3]);
        self.bond_derivs.clear();
        self.bond_derivs.resize(n_bonds, 0.0);
        self.delta_derivs.clear();
        self.delta_derivs.resize(n_atoms, 0.0);
        self.energy = EnergyTally::default();
        self.virial = [[0.0; 3]; 3];
    }

    /// Central pair force from `dE/dr` where `d` points from `i` to `j`.
    #[inline]
    pub fn add_pair(&mut self, i: usize, j: usize, d: Vec3, r: f64, de_dr: f64) {
        let s = de_dr / r;
        let f = [d[0] * s, d[1] * s, d[2] * s];
        add_assign(&mut self.forces[i], f);
        crate::geometry::sub_assign(&mut self.forces[j], f);
        // W = Σ r_ij ⊗ F_j with F_j = -f
        self.add_virial(d, [-f[0], -f[1], -f[2]]);
    }

    #[inline]
    pub fn add_force(&mut self, i: usize, f: Vec3) {
        add_assign(&mut self.forces[i], f);
    }

    /// Adds `rel ⊗ f` to the virial, `rel` being the atom position relative
    /// to a reference atom of the same interaction.
    #[inline]
    pub fn add_virial(&mut self, rel: Vec3, f: Vec3) {
        let o = outer(rel, f);
        for r in 0..3 {
            for c in 0..3 {
                self.virial[r][c] += o[r][c];
            }
        }
    }
}

#[repr(align(128))]
#[derive(Debug, Default)]
struct Padded(Mutex<ThreadBuffers>);

/// Per-thread accumulation buffers, allocated once and reused every step.
#[derive(Debug)]
pub struct PrivatizedAccumulator {
    locals: Vec<Padded>,
    n_atoms: usize,
    n_bonds: usize,
}

impl PrivatizedAccumulator {
    pub fn new(threads: usize, n_atoms: usize) -> Self {
        let mut acc = PrivatizedAccumulator {
            locals: (0..threads.max(1)).map(|_| Padded::default()).collect(),
            n_atoms,
            n_bonds: 0,
        };
        for l in &mut acc.locals {
            l.0.get_mut().unwrap().zero(n_atoms, 0);
        }
        acc
    }

    pub fn threads(&self) -> usize {
        self.locals.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Clears every buffer, sizing bond derivatives for `n_bonds` entries.
    /// Each thread clears its own buffer.
    pub fn zero(&mut self, runtime: &Runtime, n_bonds: usize) {
        self.n_bonds = n_bonds;
        let (n_atoms, n_bonds) = (self.n_atoms, self.n_bonds);
        if runtime.threads() == self.threads() {
            let locals = &self.locals;
            runtime.pool().run(|tid| {
                locals[tid].0.lock().unwrap().zero(n_atoms, n_bonds);
            });
        } else {
            for l in &mut self.locals {
                l.0.get_mut().unwrap().zero(n_atoms, n_bonds);
            }
        }
    }

    /// Locks the buffers of thread `tid`. Only that thread should call this
    /// during a kernel phase, so the lock is never contended.
    #[inline]
    pub fn local(&self, tid: usize) -> MutexGuard<'_, ThreadBuffers> {
        self.locals[tid].0.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn views(&mut self) -> Vec<&ThreadBuffers> {
        self.locals
            .iter_mut()
            .map(|l| &*l.0.get_mut().unwrap_or_else(|e| e.into_inner()))
            .collect()
    }

    /// `out[i] = Σ_t buf[t].forces[i]`, summed in ascending `t`, parallel
    /// over atoms.
    pub fn reduce_forces(&mut self, runtime: &Runtime, out: &mut [Vec3]) {
        assert_eq!(out.len(), self.n_atoms);
        let views = self.views();
        runtime.fill_slice(out, |i| {
            let mut f = [0.0; 3];
            for v in &views {
                add_assign(&mut f, v.forces[i]);
            }
            f
        });
    }

    /// Reduces the bond-order and Δ derivative buffers.
    pub fn reduce_derivs(&mut self, runtime: &Runtime, bonds: &mut [f64], deltas: &mut [f64]) {
        let views = self.views();
        runtime.fill_slice(bonds, |e| views.iter().map(|v| v.bond_derivs[e]).sum());
        runtime.fill_slice(deltas, |i| views.iter().map(|v| v.delta_derivs[i]).sum());
    }

    /// Energy totals, summed in ascending thread order.
    pub fn reduce_energies(&mut self) -> EnergyTally {
        let mut out = EnergyTally::default();
        for v in self.views() {
            for (o, e) in out.0.iter_mut().zip(v.energy.0) {
                *o += e;
            }
        }
        out
    }

    pub fn reduce_virial(&mut self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for v in self.views() {
            for r in 0..3 {
                for c in 0..3 {
                    out[r][c] += v.virial[r][c];
                }
            }
        }
        out
    }
}

/// Reduces thread-private buffers into global forces and energy totals.
pub fn reduce_privatized(
    acc: &mut PrivatizedAccumulator,
    runtime: &Runtime,
) -> (Vec<Vec3>, EnergyTally) {
    let mut forces = vec![[0.0; 3]; acc.n_atoms()];
    acc.reduce_forces(runtime, &mut forces);
    (forces, acc.reduce_energies())
}
