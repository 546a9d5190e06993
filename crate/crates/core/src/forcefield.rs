//! Force-field parameters and the `section.key = value` parameter file.
//!
//! Energies are kcal/mol, lengths Å, charges e. Electronegativity and
//! hardness are written in eV in the file and converted once at load.
//!
//! ```text
//! global.r_nonb = 10.0
//! atom.O.mass = 15.999
//! atom.O.chi = 8.5          # eV
//! pair.H-O.r0 = 1.0
//! angle.O.theta0 = 104.5    # degrees
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{ReaxError, Result};

/// kcal/mol per eV.
pub const EV_TO_KCAL: f64 = 23.0609;
/// Coulomb constant in kcal·Å/(mol·e²).
pub const COULOMB: f64 = 332.0638;

/// Role of an atom type in hydrogen bonding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HBondRole {
    None,
    /// Hydrogen that can be donated.
    DonorH,
    /// Heavy atom that accepts hydrogen bonds. Such atoms also act as the
    /// covalent partner `X` of a donated hydrogen.
    Acceptor,
}

impl std::str::FromStr for HBondRole {
    type Err = ReaxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(HBondRole::None),
            "donor-h" | "donor" => Ok(HBondRole::DonorH),
            "acceptor" => Ok(HBondRole::Acceptor),
            other => Err(ReaxError::InvalidParameter(format!(
                "hbond role must be none|donor-h|acceptor, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomType {
    pub element: String,
    /// amu
    pub mass: f64,
    pub valence: f64,
    /// Electronegativity, kcal/mol/e.
    pub chi: f64,
    /// Hardness, kcal/mol/e².
    pub eta: f64,
    /// Coulomb shielding, 1/Å.
    pub gamma: f64,
    pub vdw_depth: f64,
    pub vdw_alpha: f64,
    pub vdw_radius: f64,
    pub hbond: HBondRole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairParams {
    pub r0: f64,
    pub p_bo1: f64,
    pub p_bo2: f64,
    pub de: f64,
    pub bo_cut: f64,
}

impl PairParams {
    fn validate(&self, a: &str, b: &str) -> Result<()> {
        let bad = |what: &str| {
            Err(ReaxError::InvalidParameter(format!(
                "pair {a}-{b}: {what}"
            )))
        };
        if !(self.p_bo1 < 0.0) {
            return bad("p_bo1 must be negative");
        }
        if !(self.p_bo2 >= 1.0) {
            return bad("p_bo2 must be >= 1");
        }
        if !(self.r0 > 0.0) {
            return bad("r0 must be positive");
        }
        if !(self.bo_cut > 0.0 && self.bo_cut < 1.0) {
            return bad("bo_cut must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Valence-angle parameters for one central atom type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleParams {
    /// kcal/mol
    pub k: f64,
    /// radians
    pub theta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorsionParams {
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HBondParams {
    pub p_hb: f64,
    pub r_hb: f64,
    pub cutoff: f64,
    /// Width of the smooth switch that closes out the interaction at `cutoff`.
    pub switch_width: f64,
    /// Minimum corrected bond order for an `X-H` donor bond.
    pub donor_bo: f64,
}

/// Septic switching polynomial `T(r)` with `T(0)=1`, `T(R)=0` and vanishing
/// first three derivatives at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taper {
    /// Coefficients of `r^0..r^7`.
    pub coeffs: [f64; 8],
    pub cutoff: f64,
}

impl Taper {
    pub fn new(cutoff: f64) -> Self {
        let r = cutoff;
        let mut coeffs = [0.0; 8];
        coeffs[0] = 1.0;
        coeffs[4] = -35.0 / r.powi(4);
        coeffs[5] = 84.0 / r.powi(5);
        coeffs[6] = -70.0 / r.powi(6);
        coeffs[7] = 20.0 / r.powi(7);
        Taper { coeffs, cutoff }
    }

    /// Value and derivative at `r`.
    #[inline]
    pub fn eval(&self, r: f64) -> (f64, f64) {
        if r >= self.cutoff {
            return (0.0, 0.0);
        }
        let c = &self.coeffs;
        let mut v = c[7];
        let mut d = 7.0 * c[7];
        for p in (0..7).rev() {
            v = v * r + c[p];
            if p > 0 {
                d = d * r + p as f64 * c[p];
            }
        }
        (v, d)
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    pub types: Vec<AtomType>,
    /// Row-major `ntypes × ntypes`, symmetric.
    pub pairs: Vec<PairParams>,
    /// Per central atom type.
    pub angles: Vec<AngleParams>,
    pub thb_cut: f64,
    pub torsion: TorsionParams,
    pub hbond: HBondParams,
    pub r_nonb: f64,
    pub r_bond: f64,
    pub taper: Taper,
    pub p_over: f64,
    pub lambda: f64,
    pub softplus_k: f64,
    pub coulomb: f64,
    mixed: Vec<MixedPair>,
}

/// Pre-combined per-pair nonbonded constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedPair {
    pub vdw_depth: f64,
    pub vdw_alpha: f64,
    pub vdw_radius: f64,
    /// `γ_ij^{-3}` with `γ_ij = sqrt(γ_i γ_j)`.
    pub shield: f64,
    /// Shift that makes the raw bond order vanish at the bond cutoff.
    pub bo_shift: f64,
}

impl ForceField {
    pub fn ntypes(&self) -> usize {
        self.types.len()
    }

    pub fn type_index(&self, element: &str) -> Option<usize> {
        self.types.iter().position(|t| t.element == element)
    }

    #[inline]
    pub fn pair(&self, a: usize, b: usize) -> &PairParams {
        &self.pairs[a * self.types.len() + b]
    }

    #[inline]
    pub fn mixed(&self, a: usize, b: usize) -> &MixedPair {
        &self.mixed[a * self.types.len() + b]
    }

    /// Parses a parameter file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ReaxError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses parameter text; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let raw = RawParams::parse(text, origin)?;
        raw.build()
    }

    /// Rebuilds derived tables after parameters are edited in place.
    pub fn finalize(&mut self) -> Result<()> {
        if self.r_bond > self.r_nonb {
            return Err(ReaxError::BondCutoffExceedsNonbonded {
                r_bond: self.r_bond,
                r_nonb: self.r_nonb,
            });
        }
        if self.hbond.cutoff > self.r_nonb {
            return Err(ReaxError::InvalidParameter(format!(
                "hbond cutoff {} exceeds nonbonded cutoff {}",
                self.hbond.cutoff, self.r_nonb
            )));
        }
        if !(self.thb_cut > 0.0 && self.thb_cut < 1.0) {
            return Err(ReaxError::InvalidParameter(
                "angle.thb_cut must lie in (0, 1)".into(),
            ));
        }
        if !(self.hbond.switch_width > 0.0 && self.hbond.switch_width <= self.hbond.cutoff) {
            return Err(ReaxError::InvalidParameter(
                "hbond.switch_width must lie in (0, cutoff]".into(),
            ));
        }
        for t in &self.types {
            let bad = |what: &str| {
                Err(ReaxError::InvalidParameter(format!(
                    "atom type {}: {what}",
                    t.element
                )))
            };
            if !(t.eta > 0.0) {
                return bad("eta must be positive");
            }
            if !(t.gamma > 0.0) {
                return bad("gamma must be positive");
            }
            if !(t.vdw_depth >= 0.0) {
                return bad("vdw_depth must be non-negative");
            }
            if !(t.valence > 0.0) {
                return bad("valence must be positive");
            }
            if !(t.mass > 0.0) {
                return bad("mass must be positive");
            }
        }
        let n = self.types.len();
        for a in 0..n {
            for b in 0..n {
                if self.pairs[a * n + b] != self.pairs[b * n + a] {
                    return Err(ReaxError::InvalidParameter(format!(
                        "pair table not symmetric for {}-{}",
                        self.types[a].element, self.types[b].element
                    )));
                }
                self.pairs[a * n + b].validate(&self.types[a].element, &self.types[b].element)?;
            }
        }
        self.taper = Taper::new(self.r_nonb);
        self.mixed = (0..n * n)
            .map(|ab| {
                let (a, b) = (ab / n, ab % n);
                let (ta, tb) = (&self.types[a], &self.types[b]);
                let p = &self.pairs[ab];
                let gamma = (ta.gamma * tb.gamma).sqrt();
                MixedPair {
                    vdw_depth: (ta.vdw_depth * tb.vdw_depth).sqrt(),
                    vdw_alpha: (ta.vdw_alpha * tb.vdw_alpha).sqrt(),
                    vdw_radius: (ta.vdw_radius * tb.vdw_radius).sqrt(),
                    shield: gamma.powi(-3),
                    bo_shift: (p.p_bo1 * (self.r_bond / p.r0).powf(p.p_bo2)).exp(),
                }
            })
            .collect();
        Ok(())
    }
}

/// Flat key/value view of a parameter file before validation.
struct RawParams {
    values: BTreeMap<String, (String, usize)>,
    origin: String,
}

impl RawParams {
    fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ReaxError::Malformed {
                    path: origin.to_string(),
                    line: lineno,
                    msg: format!("expected 'key = value', got '{content}'"),
                });
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ReaxError::Malformed {
                    path: origin.to_string(),
                    line: lineno,
                    msg: "empty key".into(),
                });
            }
            values.insert(key, (value.trim().to_string(), lineno));
        }
        Ok(RawParams {
            values,
            origin: origin.to_string(),
        })
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<f64>().map(Some).map_err(|_| ReaxError::Malformed {
                path: self.origin.clone(),
                line: *line,
                msg: format!("'{key}' is not a number: '{v}'"),
            }),
        }
    }

    fn or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    fn type_key(&self, element: &str, key: &str) -> Result<f64> {
        self.number(&format!("atom.{element}.{key}"))?
            .ok_or_else(|| ReaxError::MissingTypeKey {
                element: element.to_string(),
                key: key.to_string(),
            })
    }

    fn elements(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for key in self.values.keys() {
            if let Some(rest) = key.strip_prefix("atom.") {
                if let Some((el, _)) = rest.split_once('.') {
                    if !out.iter().any(|e| e == el) {
                        out.push(el.to_string());
                    }
                }
            }
        }
        out
    }

    /// Looks up a pair key under either ordering; both present must agree.
    fn pair_key(&self, a: &str, b: &str, key: &str, default: Option<f64>) -> Result<f64> {
        let ab = self.number(&format!("pair.{a}-{b}.{key}"))?;
        let ba = self.number(&format!("pair.{b}-{a}.{key}"))?;
        match (ab, ba) {
            (Some(x), Some(y)) if x != y => Err(ReaxError::ConflictingPair {
                a: a.to_string(),
                b: b.to_string(),
                key: key.to_string(),
                first: x,
                second: y,
            }),
            (Some(x), _) | (None, Some(x)) => Ok(x),
            (None, None) => default.ok_or_else(|| ReaxError::MissingKey {
                key: format!("pair.{a}-{b}.{key}"),
            }),
        }
    }

    fn build(&self) -> Result<ForceField> {
        let elements = self.elements();
        if elements.is_empty() {
            return Err(ReaxError::MissingKey {
                key: "atom.<element>.*".into(),
            });
        }
        let mut types = Vec::with_capacity(elements.len());
        for el in &elements {
            let hbond = match self.values.get(&format!("atom.{el}.hbond")) {
                Some((v, _)) => v.parse()?,
                None => HBondRole::None,
            };
            types.push(AtomType {
                element: el.clone(),
                mass: self.type_key(el, "mass")?,
                valence: self.type_key(el, "valence")?,
                chi: self.type_key(el, "chi")? * EV_TO_KCAL,
                eta: self.type_key(el, "eta")? * EV_TO_KCAL,
                gamma: self.type_key(el, "gamma")?,
                vdw_depth: self.type_key(el, "vdw_depth")?,
                vdw_alpha: self.type_key(el, "vdw_alpha")?,
                vdw_radius: self.type_key(el, "vdw_radius")?,
                hbond,
            });
        }

        let default_bo_cut = self.or("global.bo_cut", 1e-4)?;
        let n = types.len();
        let mut pairs = Vec::with_capacity(n * n);
        for a in &elements {
            for b in &elements {
                pairs.push(PairParams {
                    r0: self.pair_key(a, b, "r0", None)?,
                    p_bo1: self.pair_key(a, b, "p_bo1", None)?,
                    p_bo2: self.pair_key(a, b, "p_bo2", None)?,
                    de: self.pair_key(a, b, "de", None)?,
                    bo_cut: self.pair_key(a, b, "bo_cut", Some(default_bo_cut))?,
                });
            }
        }

        let k_default = self.or("angle.k", 0.0)?;
        let theta_default = self.or("angle.theta0", 109.47)?;
        let angles = elements
            .iter()
            .map(|el| {
                Ok(AngleParams {
                    k: self.or(&format!("angle.{el}.k"), k_default)?,
                    theta0: self
                        .or(&format!("angle.{el}.theta0"), theta_default)?
                        .to_radians(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let r_nonb = self.or("global.r_nonb", 10.0)?;
        let mut ff = ForceField {
            types,
            pairs,
            angles,
            thb_cut: self.or("angle.thb_cut", 0.1)?,
            torsion: TorsionParams {
                k: self.or("torsion.k", 0.0)?,
            },
            hbond: HBondParams {
                p_hb: self.or("hbond.p_hb", 0.0)?,
                r_hb: self.or("hbond.r_hb", 2.0)?,
                cutoff: self.or("hbond.cutoff", 6.0)?,
                switch_width: self.or("hbond.switch_width", 1.5)?,
                donor_bo: self.or("hbond.donor_bo", 0.3)?,
            },
            r_nonb,
            r_bond: self.or("global.r_bond", 5.0)?,
            taper: Taper::new(r_nonb),
            p_over: self.or("global.p_over", 50.0)?,
            lambda: self.or("global.lambda", 0.5)?,
            softplus_k: self.or("global.softplus_k", 10.0)?,
            coulomb: self.or("global.coulomb", COULOMB)?,
            mixed: Vec::new(),
        };
        ff.finalize()?;
        Ok(ff)
    }
}

/// Parameter set for C/H/N/O used by the fixtures, tests and benchmarks.
pub const CHON_FF: &str = include_str!("../data/chon.ff");

impl ForceField {
    /// The bundled C/H/N/O parameter set.
    pub fn chon() -> Self {
        Self::parse(CHON_FF, "chon.ff").expect("bundled parameter file is valid")
    }
}
