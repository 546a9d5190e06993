//! Velocity-Verlet NVE driver with in-situ species analysis.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::engine::{Evaluation, ForceEngine};
use crate::error::{ReaxError, Result};
use crate::parallel::{EnergyTally, EnergyTerm};
use crate::qeq::{diagnostics_row, DIAGNOSTICS_HEADER};
use crate::species::{SpeciesAnalyzer, WindowReport, SUMMARY_HEADER};
use crate::system::SystemState;

/// Force/mass in kcal/mol/Å/amu to Å/fs².
pub const ACCEL_CONV: f64 = 4.184e-4;
/// Boltzmann constant, kcal/mol/K.
pub const BOLTZMANN: f64 = 0.0019872041;

pub const ENERGY_HEADER: &str = "step,e_bond,e_over,e_angle,e_tor,e_hb,e_vdw,e_coul,e_pol,ke,total";

/// Draws velocities from the Maxwell-Boltzmann distribution at
/// `temperature` and removes the center-of-mass momentum.
pub fn maxwell_boltzmann(state: &mut SystemState, masses: &[f64], temperature: f64, seed: u64) -> Result<()> {
    if !(temperature >= 0.0) {
        return Err(ReaxError::InvalidParameter(format!("temperature must be >= 0, got {temperature}")));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for (v, &m) in state.velocities.iter_mut().zip(masses) {
        let sigma = (BOLTZMANN * temperature / m * ACCEL_CONV).sqrt();
        for c in v.iter_mut() {
            *c = sigma * unit.sample(&mut rng);
        }
    }
    remove_com_momentum(state, masses);
    Ok(())
}

pub fn remove_com_momentum(state: &mut SystemState, masses: &[f64]) {
    let total: f64 = masses.iter().sum();
    if total == 0.0 {
        return;
    }
    let mut p = [0.0; 3];
    for (v, &m) in state.velocities.iter().zip(masses) {
        for d in 0..3 {
            p[d] += m * v[d];
        }
    }
    for v in &mut state.velocities {
        for d in 0..3 {
            v[d] -= p[d] / total;
        }
    }
}

/// kcal/mol
pub fn kinetic_energy(state: &SystemState, masses: &[f64]) -> f64 {
    let s: f64 = state
        .velocities
        .iter()
        .zip(masses)
        .map(|(v, m)| m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
        .sum();
    0.5 * s / ACCEL_CONV
}

/// Instantaneous temperature with the momentum constraint removed.
pub fn temperature(ke: f64, n_atoms: usize) -> f64 {
    let dof = (3 * n_atoms).saturating_sub(3).max(1) as f64;
    2.0 * ke / (dof * BOLTZMANN)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyRecord {
    pub step: u64,
    pub terms: EnergyTally,
    pub e_pol: f64,
    pub ke: f64,
}

impl EnergyRecord {
    pub fn potential(&self) -> f64 {
        self.terms.total() + self.e_pol
    }

    pub fn total(&self) -> f64 {
        self.potential() + self.ke
    }

    pub fn csv_row(&self) -> String {
        let mut row = self.step.to_string();
        for t in EnergyTerm::ALL {
            row.push_str(&format!(",{:.10e}", self.terms.get(t)));
        }
        row.push_str(&format!(",{:.10e},{:.10e},{:.10e}", self.e_pol, self.ke, self.total()));
        row
    }
}

/// A named text sink. The name is reported in I/O errors.
pub struct Sink {
    pub name: PathBuf,
    pub out: Box<dyn Write>,
}

impl Sink {
    pub fn new(name: impl Into<PathBuf>, out: Box<dyn Write>) -> Self {
        Sink { name: name.into(), out }
    }

    pub fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| ReaxError::io(&self.name, e))
    }

    pub fn raw(&mut self, s: &str) -> Result<()> {
        self.out.write_all(s.as_bytes()).map_err(|e| ReaxError::io(&self.name, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| ReaxError::io(&self.name, e))
    }
}

/// Optional outputs of a run.
#[derive(Default)]
pub struct Outputs {
    pub energy: Option<Sink>,
    pub species: Option<Sink>,
    pub snapshots: Option<Sink>,
    pub qeq: Option<Sink>,
}

impl Outputs {
    fn headers(&mut self) -> Result<()> {
        if let Some(s) = &mut self.energy {
            s.line(ENERGY_HEADER)?;
        }
        if let Some(s) = &mut self.species {
            s.line(SUMMARY_HEADER)?;
        }
        if let Some(s) = &mut self.qeq {
            s.line(DIAGNOSTICS_HEADER)?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        for s in [&mut self.energy, &mut self.species, &mut self.snapshots, &mut self.qeq]
            .into_iter()
            .flatten()
        {
            s.flush()?;
        }
        Ok(())
    }
}

/// Summary of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub records: Vec<EnergyRecord>,
    pub windows: Vec<WindowReport>,
    pub wall_seconds: f64,
}

impl RunSummary {
    /// `|E_last - E_first| / |E_first|` of the total energy.
    pub fn relative_drift(&self) -> f64 {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => (b.total() - a.total()).abs() / a.total().abs().max(f64::MIN_POSITIVE),
            _ => 0.0,
        }
    }

    /// Largest deviation from the initial total energy, relative to it.
    pub fn max_relative_deviation(&self) -> f64 {
        let Some(first) = self.records.first() else {
            return 0.0;
        };
        let e0 = first.total();
        self.records
            .iter()
            .map(|r| (r.total() - e0).abs() / e0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

pub struct Simulation {
    pub engine: ForceEngine,
    pub state: SystemState,
    pub masses: Vec<f64>,
    /// fs
    pub dt: f64,
    pub species: Option<SpeciesAnalyzer>,
    elements: Vec<String>,
    last: Option<Evaluation>,
}

impl Simulation {
    pub fn new(engine: ForceEngine, state: SystemState, dt: f64, species: Option<SpeciesAnalyzer>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(ReaxError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let masses = state.types.iter().map(|&t| engine.ff.types[t].mass).collect();
        let elements = state.elements(&engine.ff).into_iter().map(String::from).collect();
        Ok(Simulation {
            engine,
            state,
            masses,
            dt,
            species,
            elements,
            last: None,
        })
    }

    fn record(&self, eval: &Evaluation) -> EnergyRecord {
        EnergyRecord {
            step: self.state.step,
            terms: eval.energy,
            e_pol: eval.e_pol,
            ke: kinetic_energy(&self.state, &self.masses),
        }
    }

    fn evaluate(&mut self) -> Result<Evaluation> {
        let eval = self.engine.evaluate(&mut self.state)?;
        self.last = Some(eval.clone());
        Ok(eval)
    }

    fn kick(&mut self) {
        let h = 0.5 * self.dt * ACCEL_CONV;
        for ((v, f), m) in self.state.velocities.iter_mut().zip(&self.state.forces).zip(&self.masses) {
            let s = h / m;
            for d in 0..3 {
                v[d] += s * f[d];
            }
        }
    }

    /// Evaluation behind the current forces.
    pub fn last_evaluation(&self) -> Option<&Evaluation> {
        self.last.as_ref()
    }

    /// Forces at the current positions, evaluating if needed.
    pub fn prepare(&mut self) -> Result<EnergyRecord> {
        let eval = match &self.last {
            Some(e) => e.clone(),
            None => self.evaluate()?,
        };
        Ok(self.record(&eval))
    }

    /// One velocity-Verlet step.
    pub fn step(&mut self) -> Result<EnergyRecord> {
        self.prepare()?;
        self.kick();
        let dt = self.dt;
        let sim_box = self.engine.sim_box;
        for (x, v) in self.state.positions.iter_mut().zip(&self.state.velocities) {
            for d in 0..3 {
                x[d] += dt * v[d];
            }
            *x = sim_box.wrap(*x);
        }
        self.state.step += 1;
        let eval = self.evaluate()?;
        self.kick();
        Ok(self.record(&eval))
    }

    fn analyze_species(&mut self, outputs: &mut Outputs) -> Result<Option<WindowReport>> {
        let Some(analyzer) = &mut self.species else {
            return Ok(None);
        };
        let start = Instant::now();
        let el: Vec<&str> = self.elements.iter().map(String::as_str).collect();
        let report = analyzer.on_step(self.state.step, self.engine.bonds(), &el);
        if let Some(r) = &report {
            if let Some(s) = &mut outputs.species {
                s.line(&r.line)?;
            }
            if let Some(s) = &mut outputs.snapshots {
                s.raw(&r.snapshot.format(&el))?;
            }
        }
        self.engine.perf.record("species", start.elapsed());
        Ok(report)
    }

    /// Runs `steps` steps, writing step 0 first. With `steps = 0` only the
    /// initial evaluation is reported.
    pub fn run(&mut self, steps: u64, outputs: &mut Outputs) -> Result<RunSummary> {
        let start = Instant::now();
        outputs.headers()?;
        let first = self.prepare()?;
        let mut records = vec![first];
        let mut windows = Vec::new();
        self.write_step(outputs, &first)?;
        for _ in 0..steps {
            let rec = self.step()?;
            self.write_step(outputs, &rec)?;
            records.push(rec);
            if let Some(w) = self.analyze_species(outputs)? {
                windows.push(w);
            }
        }
        outputs.flush()?;
        Ok(RunSummary {
            records,
            windows,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn write_step(&mut self, outputs: &mut Outputs, rec: &EnergyRecord) -> Result<()> {
        let start = Instant::now();
        if let Some(s) = &mut outputs.energy {
            s.line(&rec.csv_row())?;
        }
        if let (Some(s), Some(r)) = (&mut outputs.qeq, self.last.as_ref().and_then(|e| e.qeq.as_ref())) {
            s.line(&diagnostics_row(rec.step, r))?;
        }
        self.engine.perf.record("other", start.elapsed());
        Ok(())
    }
}
