//! Energy conservation of the velocity-Verlet driver.

use reax_core::engine::{EngineConfig, ForceEngine};
use reax_core::fixtures;
use reax_core::md::{maxwell_boltzmann, Outputs, Simulation};
use reax_core::parallel::Runtime;
use reax_core::ForceField;

fn run(mut s: reax_core::SystemState, b: reax_core::SimBox, temp: f64, steps: u64) -> reax_core::md::RunSummary {
    let ff = ForceField::chon();
    let masses: Vec<f64> = s.types.iter().map(|&t| ff.types[t].mass).collect();
    maxwell_boltzmann(&mut s, &masses, temp, 2024).unwrap();
    let e = ForceEngine::new(ff, b, Runtime::serial(), &EngineConfig::default()).unwrap();
    let mut sim = Simulation::new(e, s, 0.1, None).unwrap();
    sim.run(steps, &mut Outputs::default()).unwrap()
}

#[test]
fn water216_conserves_energy() {
    let ff = ForceField::chon();
    let (s, b) = fixtures::water216(&ff);
    let sum = run(s, b, 300.0, 1000);
    assert!(sum.max_relative_deviation() < 1e-4);
}

#[test]
fn stretched_dimer_conserves_energy() {
    let ff = ForceField::chon();
    // starts away from the bond minimum, so it vibrates
    let (s, b) = fixtures::zigzag_chain(&ff, "C", 2, 1.6);
    let sum = run(s, b, 0.0, 1000);
    let r = sum.records.iter().map(|r| r.potential());
    let swing = r.clone().fold(f64::MIN, f64::max) - r.fold(f64::MAX, f64::min);
    assert!(swing > 1e-3, "dimer did not move");
    assert!(sum.relative_drift().abs() < 1e-5, "drift {:e}", sum.relative_drift());
}
