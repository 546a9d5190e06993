//! Force kernels as trait objects, selected by name.

use std::collections::BTreeMap;

use crate::bonded::{
    build_angle_list, build_torsion_list, energy_forces_angles, energy_forces_bonded,
    energy_forces_hbond, energy_forces_nonbonded, energy_forces_torsions, AngleList, BondList,
    HBondList, TorsionList,
};
use crate::error::{ReaxError, Result};
use crate::forcefield::ForceField;
use crate::neighbor::HalfNeighborList;
use crate::parallel::{PrivatizedAccumulator, Runtime};

/// Everything a kernel may read during one force evaluation.
pub struct KernelContext<'a> {
    pub types: &'a [usize],
    pub charges: &'a [f64],
    pub ff: &'a ForceField,
    pub nbrs: &'a HalfNeighborList,
    /// Corrected bond orders.
    pub bonds: &'a BondList,
    pub hbonds: &'a HBondList,
    pub runtime: &'a Runtime,
}

/// One energy term. Kernels add forces, energies and `dE/dBO`, `dE/dΔ`
/// into the thread-private buffers; the engine turns the bond-order
/// derivatives into forces afterwards.
pub trait ForceKernel: Send {
    fn name(&self) -> &'static str;

    /// Timing row this kernel is charged to.
    fn perf_bucket(&self) -> &'static str;

    fn compute(&mut self, ctx: &KernelContext<'_>, acc: &PrivatizedAccumulator) -> Result<()>;

    /// Interactions handled in the last call, for diagnostics.
    fn interactions(&self) -> usize {
        0
    }
}

/// Bond energy and over-coordination.
#[derive(Debug, Default)]
pub struct BondsKernel {
    count: usize,
}

impl ForceKernel for BondsKernel {
    fn name(&self) -> &'static str {
        "bonds"
    }

    fn perf_bucket(&self) -> &'static str {
        "bond-orders"
    }

    fn compute(&mut self, ctx: &KernelContext<'_>, acc: &PrivatizedAccumulator) -> Result<()> {
        energy_forces_bonded(ctx.bonds, ctx.types, ctx.ff, acc, ctx.runtime);
        self.count = ctx.bonds.n_entries() / 2;
        Ok(())
    }

    fn interactions(&self) -> usize {
        self.count
    }
}

/// Valence angles; owns its list, rebuilt every call.
#[derive(Debug, Default)]
pub struct AnglesKernel {
    pub list: AngleList,
}

impl ForceKernel for AnglesKernel {
    fn name(&self) -> &'static str {
        "angles"
    }

    fn perf_bucket(&self) -> &'static str {
        "3-body"
    }

    fn compute(&mut self, ctx: &KernelContext<'_>, acc: &PrivatizedAccumulator) -> Result<()> {
        self.list = build_angle_list(ctx.bonds, ctx.ff, ctx.runtime);
        energy_forces_angles(&self.list, ctx.bonds, ctx.types, ctx.ff, acc, ctx.runtime)
    }

    fn interactions(&self) -> usize {
        self.list.len()
    }
}

#[derive(Debug, Default)]
pub struct TorsionsKernel {
    pub list: TorsionList,
}

impl ForceKernel for TorsionsKernel {
    fn name(&self) -> &'static str {
        "torsions"
    }

    fn perf_bucket(&self) -> &'static str {
        "4-body"
    }

    fn compute(&mut self, ctx: &KernelContext<'_>, acc: &PrivatizedAccumulator) -> Result<()> {
        self.list = build_torsion_list(ctx.bonds, ctx.ff, ctx.runtime);
        energy_forces_torsions(&self.list, ctx.bonds, ctx.ff, acc, ctx.runtime);
        Ok(())
    }

    fn interactions(&self) -> usize {
        self.list.len()
    }
}

#[derive(Debug, Default)]
pub struct HBondsKernel {
    count: usize,
}

impl ForceKernel for HBondsKernel {
    fn name(&self) -> &'static str {
        "hbonds"
    }

    fn perf_bucket(&self) -> &'static str {
        "3-body"
    }

    fn compute(&mut self, ctx: &KernelContext<'_>, acc: &PrivatizedAccumulator) -> Result<()> {
        self.count = ctx.hbonds.len();
        energy_forces_hbond(ctx.hbonds, ctx.bonds, ctx.ff, acc, ctx.runtime)
    }

    fn interactions(&self) -> usize {
        self.count
    }
}

/// van der Waals and Coulomb over the half neighbor list.
#[derive(Debug, Default)]
pub struct NonbondedKernel {
    count: usize,
}

impl ForceKernel for NonbondedKernel {
    fn name(&self) -> &'static str {
        "nonbonded"
    }

    fn perf_bucket(&self) -> &'static str {
        "nonbonded"
    }

    fn compute(&mut self, ctx: &KernelContext<'_>, acc: &PrivatizedAccumulator) -> Result<()> {
        energy_forces_nonbonded(ctx.nbrs, ctx.types, ctx.charges, ctx.ff, acc, ctx.runtime);
        self.count = ctx.nbrs.n_pairs();
        Ok(())
    }

    fn interactions(&self) -> usize {
        self.count
    }
}

type Factory = fn() -> Box<dyn ForceKernel>;

/// Name → kernel constructor.
#[derive(Debug, Clone)]
pub struct KernelRegistry {
    entries: BTreeMap<&'static str, Factory>,
}

impl KernelRegistry {
    /// Evaluation order of the built-in kernels.
    pub const DEFAULT_ORDER: [&'static str; 5] = ["bonds", "angles", "torsions", "hbonds", "nonbonded"];

    pub fn empty() -> Self {
        KernelRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("bonds", || Box::new(BondsKernel::default()));
        r.register("angles", || Box::new(AnglesKernel::default()));
        r.register("torsions", || Box::new(TorsionsKernel::default()));
        r.register("hbonds", || Box::new(HBondsKernel::default()));
        r.register("nonbonded", || Box::new(NonbondedKernel::default()));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.entries.insert(name, factory);
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn ForceKernel>> {
        self.entries
            .get(name)
            .map(|f| f())
            .ok_or_else(|| ReaxError::UnknownStrategy {
                kind: "kernel",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    /// Instantiates `names` in the given order.
    pub fn create_all<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Box<dyn ForceKernel>>> {
        names.iter().map(|n| self.create(n.as_ref())).collect()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

impl Default for KernelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
