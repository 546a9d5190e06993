//! One force evaluation: lists, charges, kernels, bond-order chain rule and
//! the final reduction, each step charged to its timing row.

use std::time::Instant;

use crate::bonded::{
    aggregate_bond_forces, build_bond_list_growing, build_hbond_list_growing, correct_bond_orders,
    BondList, HBondList, DEFAULT_BOND_CAPACITY, DEFAULT_HBOND_CAPACITY,
};
use crate::error::{ReaxError, Result};
use crate::forcefield::ForceField;
use crate::geometry::SimBox;
use crate::kernels::{ForceKernel, KernelContext, KernelRegistry};
use crate::neighbor::{build_cell_grid, build_half_neighbor_list, needs_rebuild, HalfNeighborList};
use crate::parallel::{EnergyTally, PerfCounters, PrivatizedAccumulator, Runtime};
use crate::qeq::{build_qeq_matrix, chi_eta, polarization_energy, CgReport, QeqConfig, QeqSolver};
use crate::system::SystemState;

/// Where the charges come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChargeMode {
    /// Use `state.charges` as given.
    Fixed,
    /// Re-equilibrate before every force evaluation.
    Qeq(QeqConfig),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub kernels: Vec<String>,
    pub charges: ChargeMode,
    pub reneighbor_every: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            kernels: KernelRegistry::DEFAULT_ORDER.iter().map(|s| s.to_string()).collect(),
            charges: ChargeMode::Qeq(QeqConfig::default()),
            reneighbor_every: 10,
        }
    }
}

/// Result of one evaluation. Forces are written to `state.forces`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub energy: EnergyTally,
    /// Charge self-energy `Σ χq + ½ηq²`.
    pub e_pol: f64,
    /// `Σ r ⊗ F` over all interactions, kcal/mol.
    pub virial: [[f64; 3]; 3],
    pub qeq: Option<CgReport>,
}

impl Evaluation {
    pub fn potential(&self) -> f64 {
        self.energy.total() + self.e_pol
    }
}

pub struct ForceEngine {
    pub ff: ForceField,
    pub sim_box: SimBox,
    runtime: Runtime,
    kernels: Vec<Box<dyn ForceKernel>>,
    acc: PrivatizedAccumulator,
    nbrs: Option<HalfNeighborList>,
    bonds: BondList,
    hbonds: HBondList,
    bond_capacity: usize,
    hbond_capacity: usize,
    qeq: Option<QeqSolver>,
    pub reneighbor_every: u64,
    pub perf: PerfCounters,
}

impl std::fmt::Debug for ForceEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForceEngine")
            .field("kernels", &self.kernel_names())
            .field("threads", &self.runtime.threads())
            .field("reneighbor_every", &self.reneighbor_every)
            .finish_non_exhaustive()
    }
}

impl ForceEngine {
    pub fn new(ff: ForceField, sim_box: SimBox, runtime: Runtime, config: &EngineConfig) -> Result<Self> {
        Self::with_registry(ff, sim_box, runtime, config, &KernelRegistry::builtin())
    }

    pub fn with_registry(
        ff: ForceField,
        sim_box: SimBox,
        runtime: Runtime,
        config: &EngineConfig,
        registry: &KernelRegistry,
    ) -> Result<Self> {
        if config.reneighbor_every == 0 {
            return Err(ReaxError::InvalidParameter("reneighbor_every must be at least 1".into()));
        }
        sim_box.check_cutoff(ff.r_nonb)?;
        let kernels = registry.create_all(&config.kernels)?;
        let qeq = match config.charges {
            ChargeMode::Fixed => None,
            ChargeMode::Qeq(c) => Some(QeqSolver::new(c, runtime.threads())),
        };
        Ok(ForceEngine {
            acc: PrivatizedAccumulator::new(runtime.threads(), 0),
            ff,
            sim_box,
            runtime,
            kernels,
            nbrs: None,
            bonds: BondList::default(),
            hbonds: HBondList::default(),
            bond_capacity: DEFAULT_BOND_CAPACITY,
            hbond_capacity: DEFAULT_HBOND_CAPACITY,
            qeq,
            reneighbor_every: config.reneighbor_every,
            perf: PerfCounters::new(),
        })
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn kernel_names(&self) -> Vec<&'static str> {
        self.kernels.iter().map(|k| k.name()).collect()
    }

    /// `(name, interactions)` from the last evaluation.
    pub fn kernel_counts(&self) -> Vec<(&'static str, usize)> {
        self.kernels.iter().map(|k| (k.name(), k.interactions())).collect()
    }

    /// Bond list of the last evaluation.
    pub fn bonds(&self) -> &BondList {
        &self.bonds
    }

    pub fn hbonds(&self) -> &HBondList {
        &self.hbonds
    }

    pub fn neighbors(&self) -> Option<&HalfNeighborList> {
        self.nbrs.as_ref()
    }

    /// Forgets the neighbor list and charge history, e.g. after atoms were
    /// moved by hand.
    pub fn reset(&mut self) {
        self.nbrs = None;
        if let Some(q) = &mut self.qeq {
            q.history.clear();
        }
    }

    /// Rebuilds (on cadence) or refreshes the neighbor list.
    pub fn update_neighbors(&mut self, state: &SystemState) -> Result<()> {
        let start = Instant::now();
        let stale = match &self.nbrs {
            None => true,
            Some(nb) => nb.n_atoms() != state.len() || needs_rebuild(state.step, self.reneighbor_every),
        };
        if stale {
            let grid = build_cell_grid(state, &self.sim_box, self.ff.r_nonb)?;
            let mut nb = build_half_neighbor_list(state, &self.sim_box, &grid, self.ff.r_nonb, &self.runtime);
            nb.built_at = state.step;
            self.nbrs = Some(nb);
        } else if let Some(nb) = &mut self.nbrs {
            nb.refresh(state, &self.sim_box, &self.runtime);
        }
        self.perf.record("write-lists", start.elapsed());
        Ok(())
    }

    /// Full evaluation. Charges are updated in `state` first when QEq is on;
    /// forces are then computed at those charges.
    pub fn evaluate(&mut self, state: &mut SystemState) -> Result<Evaluation> {
        self.update_neighbors(state)?;
        let nbrs = self.nbrs.as_ref().expect("neighbor list present");
        let rt = &self.runtime;
        let ff = &self.ff;

        let mut report = None;
        let e_pol = if let Some(solver) = &mut self.qeq {
            let start = Instant::now();
            let h = build_qeq_matrix(nbrs, &state.types, ff, rt);
            let (chi, _) = chi_eta(&state.types, ff);
            let out = solver.solve(&h, &chi, state.q_net, rt)?;
            state.charges = out.charges;
            report = Some(out.report);
            self.perf.record("qeq", start.elapsed());
            out.e_pol
        } else if self.kernels.iter().any(|k| k.name() == "nonbonded") {
            let (chi, eta) = chi_eta(&state.types, ff);
            polarization_energy(&chi, &eta, &state.charges)
        } else {
            0.0
        };

        let start = Instant::now();
        self.bonds = build_bond_list_growing(nbrs, &state.types, ff, rt, &mut self.bond_capacity)?;
        if self.acc.n_atoms() != state.len() {
            self.acc = PrivatizedAccumulator::new(rt.threads(), state.len());
        }
        self.acc.zero(rt, self.bonds.n_entries());
        self.perf.record("init-forces", start.elapsed());

        let start = Instant::now();
        correct_bond_orders(&mut self.bonds, &state.types, ff, rt);
        self.perf.record("bond-orders", start.elapsed());

        let start = Instant::now();
        self.hbonds = build_hbond_list_growing(nbrs, &self.bonds, &state.types, ff, rt, &mut self.hbond_capacity)?;
        self.perf.record("init-forces", start.elapsed());

        let ctx = KernelContext {
            types: &state.types,
            charges: &state.charges,
            ff,
            nbrs,
            bonds: &self.bonds,
            hbonds: &self.hbonds,
            runtime: rt,
        };
        for k in &mut self.kernels {
            let start = Instant::now();
            k.compute(&ctx, &self.acc)?;
            self.perf.record(k.perf_bucket(), start.elapsed());
        }

        let start = Instant::now();
        aggregate_bond_forces(&self.bonds, ff, &mut self.acc, rt);
        state.forces.resize(state.len(), [0.0; 3]);
        self.acc.reduce_forces(rt, &mut state.forces);
        let energy = self.acc.reduce_energies();
        let virial = self.acc.reduce_virial();
        self.perf.record("aggregate-forces", start.elapsed());

        let eval = Evaluation {
            energy,
            e_pol,
            virial,
            qeq: report,
        };
        if !eval.potential().is_finite() || state.forces.iter().flatten().any(|f| !f.is_finite()) {
            return Err(ReaxError::NonFiniteEnergy { step: state.step });
        }
        Ok(eval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parallel::SchedulePolicy;

    fn fixed(kernels: &[&str]) -> EngineConfig {
        EngineConfig {
            kernels: kernels.iter().map(|s| s.to_string()).collect(),
            charges: ChargeMode::Fixed,
            reneighbor_every: 1,
        }
    }

    #[test]
    fn net_force_vanishes() {
        let ff = ForceField::chon();
        let (mut s, b) = fixtures::water_box(&ff, 40, 20.0, 2.8, 7);
        let mut e = ForceEngine::new(ff, b, Runtime::serial(), &EngineConfig::default()).unwrap();
        let ev = e.evaluate(&mut s).unwrap();
        assert!(ev.potential().is_finite());
        let mut net = [0.0; 3];
        for f in &s.forces {
            for d in 0..3 {
                net[d] += f[d];
            }
        }
        assert!(net.iter().all(|x| x.abs() < 1e-8), "{net:?}");
        assert!(s.charges.iter().sum::<f64>().abs() < 1e-10);
        assert!(e.perf.seconds("qeq") > 0.0);
    }

    #[test]
    fn kernel_subset_only_tallies_its_terms() {
        let ff = ForceField::chon();
        let (mut s, b) = fixtures::water_box(&ff, 40, 20.0, 2.8, 3);
        let mut e = ForceEngine::new(ff, b, Runtime::serial(), &fixed(&["angles"])).unwrap();
        let ev = e.evaluate(&mut s).unwrap();
        use crate::parallel::EnergyTerm::*;
        assert!(ev.energy.get(Angle) != 0.0);
        for t in [Bond, Over, Torsion, HBond, Vdw, Coulomb] {
            assert_eq!(ev.energy.get(t), 0.0);
        }
        assert_eq!(ev.e_pol, 0.0);
    }

    #[test]
    fn threaded_matches_serial() {
        // Charges fixed so only summation order differs between runs.
        let ff = ForceField::chon();
        let (mut s0, b) = fixtures::water_box(&ff, 60, 20.0, 2.8, 11);
        let mut qeq = ForceEngine::new(ff.clone(), b, Runtime::serial(), &EngineConfig::default()).unwrap();
        qeq.evaluate(&mut s0).unwrap();
        let cfg = fixed(&KernelRegistry::DEFAULT_ORDER);
        let mut serial = ForceEngine::new(ff.clone(), b, Runtime::serial(), &cfg).unwrap();
        let mut a = s0.clone();
        let ea = serial.evaluate(&mut a).unwrap();
        for name in ["static", "cyclic", "dynamic"] {
            let rt = Runtime::new(3, SchedulePolicy::by_name(name, 7).unwrap());
            let mut threaded = ForceEngine::new(ff.clone(), b, rt, &cfg).unwrap();
            let mut c = s0.clone();
            let ec = threaded.evaluate(&mut c).unwrap();
            assert!((ea.potential() - ec.potential()).abs() < 1e-10 * ea.potential().abs().max(1.0));
            for (x, y) in a.forces.iter().flatten().zip(c.forces.iter().flatten()) {
                assert!((x - y).abs() < 1e-9, "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn zero_reneighbor_interval_rejected() {
        let ff = ForceField::chon();
        let (_, b) = fixtures::water_dimer(&ff, 2.9);
        let mut c = fixed(&["bonds"]);
        c.reneighbor_every = 0;
        assert!(ForceEngine::new(ff, b, Runtime::serial(), &c).is_err());
    }
}
