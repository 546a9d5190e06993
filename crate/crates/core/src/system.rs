//! Per-atom simulation state and the extended-XYZ-style system file.
//!
//! ```text
//! 3
//! box 20 20 20 pbc 1 1 1
//! O 0.0 0.0 0.0
//! H 0.96 0.0 0.0 0.41
//! H -0.24 0.93 0.0 0.41 0.001 0.0 0.0
//! ```
//!
//! Per-atom columns are `element x y z [q] [vx vy vz]`; seven columns mean
//! velocities without a charge.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ReaxError, Result};
use crate::forcefield::ForceField;
use crate::geometry::{SimBox, Vec3};

/// Atom count ceiling for [`replicate`] unless the caller chooses otherwise.
pub const DEFAULT_MAX_ATOMS: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub types: Vec<usize>,
    /// Å
    pub positions: Vec<Vec3>,
    /// Å/fs
    pub velocities: Vec<Vec3>,
    /// e
    pub charges: Vec<f64>,
    /// kcal/mol/Å
    pub forces: Vec<Vec3>,
    pub q_net: f64,
    pub step: u64,
}

impl SystemState {
    pub fn new(types: Vec<usize>, positions: Vec<Vec3>) -> Self {
        let n = types.len();
        assert_eq!(n, positions.len(), "types and positions differ in length");
        SystemState {
            types,
            positions,
            velocities: vec![[0.0; 3]; n],
            charges: vec![0.0; n],
            forces: vec![[0.0; 3]; n],
            q_net: 0.0,
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Atom count per type index.
    pub fn type_counts(&self, ntypes: usize) -> Vec<usize> {
        let mut counts = vec![0; ntypes];
        for &t in &self.types {
            counts[t] += 1;
        }
        counts
    }

    pub fn elements<'a>(&self, ff: &'a ForceField) -> Vec<&'a str> {
        self.types
            .iter()
            .map(|&t| ff.types[t].element.as_str())
            .collect()
    }
}

/// Reads a system file, resolving elements against `ff`.
pub fn load_system(path: impl AsRef<Path>, ff: &ForceField) -> Result<(SystemState, SimBox)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ReaxError::io(path, e))?;
    parse_system(&text, &path.display().to_string(), ff)
}

pub fn parse_system(text: &str, origin: &str, ff: &ForceField) -> Result<(SystemState, SimBox)> {
    let malformed = |line: usize, msg: String| ReaxError::Malformed {
        path: origin.to_string(),
        line,
        msg,
    };
    let number = |tok: &str, line: usize| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| malformed(line, format!("'{tok}' is not a number")))
    };

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, count_line) = lines.next().ok_or_else(|| ReaxError::NoAtoms {
        path: origin.to_string(),
    })?;
    let count: usize = count_line
        .trim()
        .parse()
        .map_err(|_| malformed(1, format!("expected atom count, got '{}'", count_line.trim())))?;

    let Some((box_no, box_line)) = lines.next() else {
        return Err(ReaxError::MissingBox {
            path: origin.to_string(),
        });
    };
    let toks: Vec<&str> = box_line.split_whitespace().collect();
    if toks.first() != Some(&"box") {
        return Err(ReaxError::MissingBox {
            path: origin.to_string(),
        });
    }
    if toks.len() != 4 && toks.len() != 8 {
        return Err(malformed(
            box_no,
            "expected 'box Lx Ly Lz [pbc px py pz]'".into(),
        ));
    }
    let lengths = [
        number(toks[1], box_no)?,
        number(toks[2], box_no)?,
        number(toks[3], box_no)?,
    ];
    let mut periodic = [true; 3];
    if toks.len() == 8 {
        if toks[4] != "pbc" {
            return Err(malformed(box_no, format!("expected 'pbc', got '{}'", toks[4])));
        }
        for axis in 0..3 {
            periodic[axis] = match toks[5 + axis] {
                "1" => true,
                "0" => false,
                other => return Err(malformed(box_no, format!("pbc flag must be 0 or 1, got '{other}'"))),
            };
        }
    }
    let sim_box = SimBox::new(lengths, periodic)
        .map_err(|e| malformed(box_no, e.to_string()))?;

    if count == 0 {
        return Err(ReaxError::NoAtoms {
            path: origin.to_string(),
        });
    }

    let mut types = Vec::with_capacity(count);
    let mut positions = Vec::with_capacity(count);
    let mut charges = Vec::with_capacity(count);
    let mut velocities = Vec::with_capacity(count);
    for (line_no, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if types.len() == count {
            return Err(malformed(line_no, format!("more than {count} atom lines")));
        }
        if !matches!(toks.len(), 4 | 5 | 7 | 8) {
            return Err(malformed(
                line_no,
                format!("expected 'element x y z [q] [vx vy vz]', got {} columns", toks.len()),
            ));
        }
        let t = ff.type_index(toks[0]).ok_or_else(|| ReaxError::UnknownElement {
            path: origin.to_string(),
            line: line_no,
            element: toks[0].to_string(),
        })?;
        let nums = toks[1..]
            .iter()
            .map(|tok| number(tok, line_no))
            .collect::<Result<Vec<f64>>>()?;
        types.push(t);
        positions.push([nums[0], nums[1], nums[2]]);
        let (q, v) = match nums.len() {
            3 => (0.0, [0.0; 3]),
            4 => (nums[3], [0.0; 3]),
            6 => (0.0, [nums[3], nums[4], nums[5]]),
            _ => (nums[3], [nums[4], nums[5], nums[6]]),
        };
        charges.push(q);
        velocities.push(v);
    }
    if types.is_empty() {
        return Err(ReaxError::NoAtoms {
            path: origin.to_string(),
        });
    }
    if types.len() != count {
        return Err(malformed(
            1,
            format!("header declares {count} atoms but {} were read", types.len()),
        ));
    }

    let mut state = SystemState::new(types, positions);
    state.charges = charges;
    state.velocities = velocities;
    Ok((state, sim_box))
}

/// Renders a system in the same format [`parse_system`] reads, with full
/// round-trip precision.
pub fn format_system(state: &SystemState, sim_box: &SimBox, ff: &ForceField) -> String {
    let mut out = String::new();
    let flag = |p: bool| if p { 1 } else { 0 };
    let _ = writeln!(out, "{}", state.len());
    let [lx, ly, lz] = sim_box.lengths;
    let [px, py, pz] = sim_box.periodic;
    let _ = writeln!(
        out,
        "box {lx} {ly} {lz} pbc {} {} {}",
        flag(px),
        flag(py),
        flag(pz)
    );
    for i in 0..state.len() {
        let [x, y, z] = state.positions[i];
        let [vx, vy, vz] = state.velocities[i];
        let _ = writeln!(
            out,
            "{} {x} {y} {z} {} {vx} {vy} {vz}",
            ff.types[state.types[i]].element,
            state.charges[i]
        );
    }
    out
}

pub fn write_system(
    path: impl AsRef<Path>,
    state: &SystemState,
    sim_box: &SimBox,
    ff: &ForceField,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_system(state, sim_box, ff)).map_err(|e| ReaxError::io(path, e))
}

/// Tiles a periodic cell `counts[0] × counts[1] × counts[2]` times.
pub fn replicate(
    state: &SystemState,
    sim_box: &SimBox,
    counts: [usize; 3],
    max_atoms: usize,
) -> Result<(SystemState, SimBox)> {
    if counts.iter().any(|&c| c == 0) {
        return Err(ReaxError::InvalidParameter(format!(
            "replication counts must be positive, got {counts:?}"
        )));
    }
    for axis in 0..3 {
        if counts[axis] > 1 && !sim_box.periodic[axis] {
            return Err(ReaxError::InvalidParameter(format!(
                "cannot replicate along non-periodic axis {axis}"
            )));
        }
    }
    let copies = counts[0]
        .checked_mul(counts[1])
        .and_then(|c| c.checked_mul(counts[2]));
    let total = copies.and_then(|c| c.checked_mul(state.len()));
    let total = match total {
        Some(t) if t <= max_atoms => t,
        _ => {
            return Err(ReaxError::AtomCountOverflow {
                requested: total.unwrap_or(usize::MAX),
                max: max_atoms,
            })
        }
    };

    let l = sim_box.lengths;
    let mut out = SystemState {
        types: Vec::with_capacity(total),
        positions: Vec::with_capacity(total),
        velocities: Vec::with_capacity(total),
        charges: Vec::with_capacity(total),
        forces: vec![[0.0; 3]; total],
        q_net: state.q_net * (total / state.len().max(1)) as f64,
        step: state.step,
    };
    for ix in 0..counts[0] {
        for iy in 0..counts[1] {
            for iz in 0..counts[2] {
                let shift = [ix as f64 * l[0], iy as f64 * l[1], iz as f64 * l[2]];
                for i in 0..state.len() {
                    let p = state.positions[i];
                    out.types.push(state.types[i]);
                    out.positions
                        .push([p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]);
                    out.velocities.push(state.velocities[i]);
                    out.charges.push(state.charges[i]);
                }
            }
        }
    }
    let new_box = SimBox::new(
        [
            l[0] * counts[0] as f64,
            l[1] * counts[1] as f64,
            l[2] * counts[2] as f64,
        ],
        sim_box.periodic,
    )?;
    Ok((out, new_box))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ff() -> ForceField {
        ForceField::chon()
    }

    const WATER: &str = "3\nbox 20 20 20\nO 0 0 0\nH 0.96 0 0\nH -0.24 0.93 0\n";

    #[test]
    fn parses_water() {
        let ff = ff();
        let (s, b) = parse_system(WATER, "mem", &ff).unwrap();
        assert_eq!(s.len(), 3);
        let els = s.elements(&ff);
        assert_eq!(els, ["O", "H", "H"]);
        assert_eq!(b.lengths, [20.0; 3]);
        assert_eq!(b.periodic, [true; 3]);
        assert_eq!(s.velocities[2], [0.0; 3]);
    }

    #[test]
    fn box_header_matches() {
        let text = "1\nbox 66.4 75.9 69.9 pbc 1 1 0\nC 1 2 3\n";
        let (_, b) = parse_system(text, "mem", &ff()).unwrap();
        assert_eq!(b.lengths, [66.4, 75.9, 69.9]);
        assert_eq!(b.periodic, [true, true, false]);
    }

    #[test]
    fn optional_columns() {
        let text = "3\nbox 20 20 20\nO 0 0 0 -0.8\nH 1 0 0 0.4 0.1 0.2 0.3\nH 2 0 0 0.5 0.6 0.7\n";
        let (s, _) = parse_system(text, "mem", &ff()).unwrap();
        assert_eq!(s.charges, [-0.8, 0.4, 0.0]);
        assert_eq!(s.velocities[1], [0.1, 0.2, 0.3]);
        assert_eq!(s.velocities[2], [0.5, 0.6, 0.7]);
    }

    #[test]
    fn empty_atom_section() {
        let err = parse_system("0\nbox 10 10 10\n", "mem", &ff()).unwrap_err();
        assert!(err.to_string().contains("no atoms"));
        let err = parse_system("2\nbox 10 10 10\n", "mem", &ff()).unwrap_err();
        assert!(err.to_string().contains("no atoms"));
    }

    #[test]
    fn error_paths() {
        let ff = ff();
        assert!(matches!(
            parse_system("1\nbox 10 10 10\nXx 0 0 0\n", "mem", &ff),
            Err(ReaxError::UnknownElement { line: 3, .. })
        ));
        assert!(matches!(
            parse_system("1\nO 0 0 0\n", "mem", &ff),
            Err(ReaxError::MissingBox { .. })
        ));
        assert!(matches!(
            parse_system("2\nbox 10 10 10\nO 0 0 0\nH 0 zero 0\n", "mem", &ff),
            Err(ReaxError::Malformed { line: 4, .. })
        ));
    }

    #[test]
    fn write_then_read_round_trips() {
        let ff = ff();
        let (mut s, b) = parse_system(WATER, "mem", &ff).unwrap();
        s.positions[1] = [0.1 + 0.2, 1.0 / 3.0, -7.123456789012345];
        s.charges[0] = -0.8123456789;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.xyz");
        write_system(&path, &s, &b, &ff).unwrap();
        let (back, b2) = load_system(&path, &ff).unwrap();
        assert_eq!(b, b2);
        for i in 0..s.len() {
            for c in 0..3 {
                assert!((back.positions[i][c] - s.positions[i][c]).abs() <= 1e-12);
            }
        }
        assert_eq!(back.charges, s.charges);
    }

    #[test]
    fn replicate_identity_and_doubling() {
        let ff = ff();
        let (s, b) = parse_system("2\nbox 4 5 6\nO 0 0 0\nH 1 1 1\n", "mem", &ff).unwrap();
        let (same, same_box) = replicate(&s, &b, [1, 1, 1], DEFAULT_MAX_ATOMS).unwrap();
        assert_eq!(same.positions, s.positions);
        assert_eq!(same_box, b);

        let (big, big_box) = replicate(&s, &b, [2, 2, 2], DEFAULT_MAX_ATOMS).unwrap();
        assert_eq!(big.len(), 16);
        assert_eq!(big_box.lengths, [8.0, 10.0, 12.0]);
        assert!(big.positions.contains(&[5.0, 6.0, 7.0]));
        let counts = big.type_counts(ff.ntypes());
        let base = s.type_counts(ff.ntypes());
        for t in 0..ff.ntypes() {
            assert_eq!(counts[t], base[t] * 8);
        }
    }

    #[test]
    fn replicate_guards() {
        let ff = ff();
        let (s, b) = parse_system("2\nbox 4 5 6\nO 0 0 0\nH 1 1 1\n", "mem", &ff).unwrap();
        assert!(matches!(
            replicate(&s, &b, [10, 10, 10], 1000),
            Err(ReaxError::AtomCountOverflow { requested: 2000, max: 1000 })
        ));
        assert!(replicate(&s, &b, [0, 1, 1], 1000).is_err());
        let open = SimBox::new([4.0, 5.0, 6.0], [true, true, false]).unwrap();
        assert!(replicate(&s, &open, [1, 1, 2], 1000).is_err());
    }
}
