//! Run configuration: `key = value` lines, `#` comments.
//!
//! ```text
//! system = water.xyz            # or fixture:water216, fixture:dimer
//! system.replicate = 2,2,2
//! forcefield = chon.ff          # built-in parameters when omitted
//! steps = 1000
//! dt = 0.1
//! threads = 4
//! schedule.mode = dynamic
//! species.threshold.H-O = 0.4
//! output.energy = energy.csv
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::engine::{ChargeMode, EngineConfig, ForceEngine};
use crate::error::{ReaxError, Result};
use crate::fixtures;
use crate::forcefield::ForceField;
use crate::geometry::SimBox;
use crate::kernels::KernelRegistry;
use crate::md::{maxwell_boltzmann, Outputs, Simulation, Sink};
use crate::parallel::{Runtime, SchedulePolicy, DEFAULT_CHUNK};
use crate::qeq::{Extrapolation, QeqConfig};
use crate::species::{SpeciesAnalyzer, SpeciesConfig, Thresholds};
use crate::system::{load_system, replicate, SystemState, DEFAULT_MAX_ATOMS};

/// Where the initial configuration comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSource {
    File(PathBuf),
    /// Built-in fixture by name.
    Fixture(String),
}

pub const FIXTURES: [&str; 3] = ["water216", "dimer", "water-dimer"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemSource,
    pub replicate: [usize; 3],
    pub forcefield: Option<PathBuf>,
    pub steps: u64,
    /// fs
    pub dt: f64,
    pub reneighbor_every: u64,
    pub qeq_enabled: bool,
    pub qeq: QeqConfig,
    pub schedule: String,
    pub chunk: usize,
    pub threads: usize,
    pub max_threads: usize,
    pub kernels: Vec<String>,
    pub species_enabled: bool,
    pub species: SpeciesConfig,
    pub seed: u64,
    /// K
    pub temperature: f64,
    pub energy_out: Option<PathBuf>,
    pub species_out: Option<PathBuf>,
    pub snapshots_out: Option<PathBuf>,
    pub perf_out: Option<PathBuf>,
    pub qeq_out: Option<PathBuf>,
    base: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: SystemSource::Fixture("water216".into()),
            replicate: [1, 1, 1],
            forcefield: None,
            steps: 0,
            dt: 0.1,
            reneighbor_every: 10,
            qeq_enabled: true,
            qeq: QeqConfig::default(),
            schedule: "dynamic".into(),
            chunk: DEFAULT_CHUNK,
            threads: 1,
            max_threads: 256,
            kernels: KernelRegistry::DEFAULT_ORDER.iter().map(|s| s.to_string()).collect(),
            species_enabled: true,
            species: SpeciesConfig::default(),
            seed: 1,
            temperature: 300.0,
            energy_out: None,
            species_out: None,
            snapshots_out: None,
            perf_out: None,
            qeq_out: None,
            base: PathBuf::from("."),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| ReaxError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ReaxError::Config(format!("{key}: expected true/false, got '{value}'"))),
    }
}

/// Empty value or `none` disables an output.
fn parse_out(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Relative paths are resolved against `base`.
    pub fn with_base(base: impl Into<PathBuf>) -> Self {
        RunConfig {
            base: base.into(),
            ..Self::default()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ReaxError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn parse(text: &str, origin: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = Self::with_base(base);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ReaxError::Malformed {
                path: origin.to_string(),
                line: n + 1,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| ReaxError::Malformed {
                path: origin.to_string(),
                line: n + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    fn resolve(&self, p: PathBuf) -> PathBuf {
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    /// Applies one setting. Used for both file lines and command-line
    /// overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "system" => {
                self.system = match value.strip_prefix("fixture:") {
                    Some(name) if FIXTURES.contains(&name) => SystemSource::Fixture(name.to_string()),
                    Some(name) => {
                        return Err(ReaxError::UnknownStrategy {
                            kind: "fixture",
                            name: name.to_string(),
                            available: FIXTURES.join(", "),
                        })
                    }
                    None => SystemSource::File(self.resolve(value.into())),
                }
            }
            "system.replicate" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(ReaxError::Config(format!("system.replicate needs nx,ny,nz, got '{value}'")));
                }
                for (slot, p) in self.replicate.iter_mut().zip(parts) {
                    *slot = parse_num(key, p)?;
                }
            }
            "forcefield" => self.forcefield = parse_out(value).map(|p| self.resolve(p)),
            "steps" => self.steps = parse_num(key, value)?,
            "dt" => self.dt = parse_num(key, value)?,
            "reneighbor_every" => self.reneighbor_every = parse_num(key, value)?,
            "qeq.enabled" => self.qeq_enabled = parse_bool(key, value)?,
            "qeq.tol" => self.qeq.tol = parse_num(key, value)?,
            "qeq.max_iter" => self.qeq.max_iter = parse_num(key, value)?,
            "qeq.extrapolation" => self.qeq.extrapolation = value.parse::<Extrapolation>()?,
            "schedule.mode" => self.schedule = value.to_string(),
            "schedule.chunk" => self.chunk = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            "max_threads" => self.max_threads = parse_num(key, value)?,
            "kernels" => {
                self.kernels = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "species.enabled" => self.species_enabled = parse_bool(key, value)?,
            "species.nevery" => self.species.nevery = parse_num(key, value)?,
            "species.nfreq" => self.species.nfreq = parse_num(key, value)?,
            "species.threshold" => {
                let v: f64 = parse_num(key, value)?;
                // validates; pair overrides set earlier are kept
                Thresholds::new(v)?;
                self.species.thresholds.default = v;
            }
            "seed" => self.seed = parse_num(key, value)?,
            "temperature" => self.temperature = parse_num(key, value)?,
            "output.energy" => self.energy_out = parse_out(value).map(|p| self.resolve(p)),
            "output.species" => self.species_out = parse_out(value).map(|p| self.resolve(p)),
            "output.snapshots" => self.snapshots_out = parse_out(value).map(|p| self.resolve(p)),
            "output.perf" => self.perf_out = parse_out(value).map(|p| self.resolve(p)),
            "output.qeq" => self.qeq_out = parse_out(value).map(|p| self.resolve(p)),
            _ => {
                if let Some(pair) = key.strip_prefix("species.threshold.") {
                    let (a, b) = pair
                        .split_once('-')
                        .ok_or_else(|| ReaxError::Config(format!("{key}: expected species.threshold.A-B")))?;
                    let v: f64 = parse_num(key, value)?;
                    self.species.thresholds.set_pair(a, b, v)?;
                } else {
                    return Err(ReaxError::Config(format!("unknown key '{key}'")));
                }
            }
        }
        Ok(())
    }

    /// Checks ranges and that input files exist.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(ReaxError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.reneighbor_every == 0 {
            return Err(ReaxError::Config("reneighbor_every must be at least 1".into()));
        }
        if !(self.qeq.tol > 0.0) || self.qeq.max_iter == 0 {
            return Err(ReaxError::Config("qeq.tol must be positive and qeq.max_iter at least 1".into()));
        }
        if self.threads == 0 || self.threads > self.max_threads {
            return Err(ReaxError::Config(format!(
                "threads must lie in 1..={}, got {}",
                self.max_threads, self.threads
            )));
        }
        if self.chunk == 0 {
            return Err(ReaxError::Config("schedule.chunk must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ReaxError::Config("temperature must be >= 0".into()));
        }
        self.species.validate()?;
        for p in [self.forcefield.as_ref(), match &self.system {
            SystemSource::File(p) => Some(p),
            SystemSource::Fixture(_) => None,
        }]
        .into_iter()
        .flatten()
        {
            if !p.is_file() {
                return Err(ReaxError::Config(format!("{}: no such file", p.display())));
            }
        }
        Ok(())
    }

    pub fn load_forcefield(&self) -> Result<ForceField> {
        match &self.forcefield {
            Some(p) => ForceField::load(p),
            None => Ok(ForceField::chon()),
        }
    }

    pub fn load_system(&self, ff: &ForceField) -> Result<(SystemState, SimBox)> {
        let (s, b) = match &self.system {
            SystemSource::File(p) => load_system(p, ff)?,
            SystemSource::Fixture(name) => match name.as_str() {
                "water216" => fixtures::water216(ff),
                _ => fixtures::water_dimer(ff, 2.9),
            },
        };
        if self.replicate == [1, 1, 1] {
            Ok((s, b))
        } else {
            replicate(&s, &b, self.replicate, DEFAULT_MAX_ATOMS)
        }
    }

    pub fn runtime(&self) -> Result<Runtime> {
        Ok(Runtime::new(self.threads, SchedulePolicy::by_name(&self.schedule, self.chunk)?))
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            kernels: self.kernels.clone(),
            charges: if self.qeq_enabled {
                ChargeMode::Qeq(self.qeq)
            } else {
                ChargeMode::Fixed
            },
            reneighbor_every: self.reneighbor_every,
        }
    }

    /// Validated simulation with initial velocities drawn from `seed`.
    pub fn build_simulation(&self) -> Result<Simulation> {
        self.validate()?;
        let ff = self.load_forcefield()?;
        let (mut state, sim_box) = self.load_system(&ff)?;
        let masses: Vec<f64> = state.types.iter().map(|&t| ff.types[t].mass).collect();
        if self.temperature > 0.0 {
            maxwell_boltzmann(&mut state, &masses, self.temperature, self.seed)?;
        }
        let species = if self.species_enabled {
            Some(SpeciesAnalyzer::new(self.species.clone(), state.len())?)
        } else {
            None
        };
        let engine = ForceEngine::new(ff, sim_box, self.runtime()?, &self.engine_config())?;
        Simulation::new(engine, state, self.dt, species)
    }

    /// Opens the configured output files.
    pub fn open_outputs(&self) -> Result<Outputs> {
        let open = |p: &Option<PathBuf>| -> Result<Option<Sink>> {
            p.as_ref()
                .map(|p| {
                    let f = File::create(p).map_err(|e| ReaxError::io(p, e))?;
                    Ok(Sink::new(p, Box::new(BufWriter::new(f))))
                })
                .transpose()
        };
        Ok(Outputs {
            energy: open(&self.energy_out)?,
            species: if self.species_enabled { open(&self.species_out)? } else { None },
            snapshots: if self.species_enabled { open(&self.snapshots_out)? } else { None },
            qeq: if self.qeq_enabled { open(&self.qeq_out)? } else { None },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.dt, 0.1);
        assert_eq!(c.reneighbor_every, 10);
        assert_eq!(c.qeq.tol, 1e-6);
        assert_eq!(c.chunk, 20);
        assert_eq!(c.species.nevery, 10);
        assert_eq!(c.species.nfreq, 1000);
        assert_eq!(c.species.thresholds.default, 0.3);
        c.validate().unwrap();
    }

    #[test]
    fn parses_keys_and_comments() {
        let text = "steps = 50 # short\nthreads=2\nschedule.mode = static\nspecies.threshold.O-H = 0.4\n\
                    species.threshold = 0.25\nkernels = bonds, nonbonded\noutput.energy = e.csv\nsystem.replicate = 1,2,1\n";
        let c = RunConfig::parse(text, "cfg", "/tmp/run").unwrap();
        assert_eq!(c.steps, 50);
        assert_eq!(c.threads, 2);
        assert_eq!(c.schedule, "static");
        assert_eq!(c.species.thresholds.get("H", "O"), 0.4);
        assert_eq!(c.species.thresholds.get("C", "O"), 0.25);
        assert_eq!(c.kernels, vec!["bonds", "nonbonded"]);
        assert_eq!(c.energy_out, Some(PathBuf::from("/tmp/run/e.csv")));
        assert_eq!(c.replicate, [1, 2, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["steps = -1", "bogus = 1", "novalue", "dt = fast", "system = fixture:argon", "species.threshold = -0.1"] {
            assert!(RunConfig::parse(text, "cfg", ".").is_err(), "{text}");
        }
        let mut c = RunConfig::default();
        c.threads = 1000;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("system", "/definitely/missing.xyz").unwrap();
        assert!(c.validate().is_err());
    }
}
