//! Molecular species analysis over time-averaged bond orders.
//!
//! Bond orders are sampled every `nevery` steps and averaged over windows of
//! `nfreq` steps. At the end of a window, pairs whose average exceeds the
//! threshold for their element pair are linked, atoms are labeled by the
//! smallest global ID in their component, labels are renumbered `1..M`, and
//! molecules are counted by elemental formula.
//!
//! Snapshot file format, one block per window, atom IDs 1-based:
//!
//! ```text
//! snapshot step=1000 atoms=3 samples=100 nevery=10 nfreq=1000
//! atom 1 O
//! atom 2 H
//! atom 3 H
//! bond 1 2 0.93
//! bond 1 3 0.91
//! end
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::bonded::BondList;
use crate::error::{ReaxError, Result};

/// Default bond-order threshold for linking two atoms.
pub const DEFAULT_THRESHOLD: f64 = 0.3;

/// Header line of the species summary file.
pub const SUMMARY_HEADER: &str = "# step  num_molecules  species...";

/// Running bond-order sums over one averaging window.
#[derive(Debug, Clone, PartialEq)]
pub struct BondSnapshot {
    pub step: u64,
    pub n_atoms: usize,
    pub samples: u64,
    pub nevery: u64,
    pub nfreq: u64,
    /// `(i, j)` with `i < j`, 0-based.
    sums: BTreeMap<(u32, u32), f64>,
}

impl BondSnapshot {
    pub fn new(n_atoms: usize, nevery: u64, nfreq: u64) -> Self {
        BondSnapshot {
            step: 0,
            n_atoms,
            samples: 0,
            nevery,
            nfreq,
            sums: BTreeMap::new(),
        }
    }

    /// Samples per window.
    pub fn nrepeat(&self) -> u64 {
        self.nfreq / self.nevery.max(1)
    }

    /// Adds the corrected bond orders of every `i < j` bond.
    pub fn accumulate(&mut self, bonds: &BondList, step: u64) {
        for (i, j, bo) in bonds.bonds() {
            if i < j && bo > 0.0 {
                *self.sums.entry((i as u32, j as u32)).or_insert(0.0) += bo;
            }
        }
        self.samples += 1;
        self.step = step;
    }

    /// Adds one explicit sample, `(i, j, bo)` 0-based.
    pub fn accumulate_pairs(&mut self, pairs: &[(usize, usize, f64)], step: u64) {
        for &(i, j, bo) in pairs {
            let key = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
            *self.sums.entry(key).or_insert(0.0) += bo;
        }
        self.samples += 1;
        self.step = step;
    }

    /// `(i, j, sum / samples)` in ascending pair order.
    pub fn averages(&self) -> Vec<(usize, usize, f64)> {
        let n = self.samples.max(1) as f64;
        self.sums
            .iter()
            .map(|(&(i, j), &s)| (i as usize, j as usize, s / n))
            .collect()
    }

    pub fn clear(&mut self) {
        self.sums.clear();
        self.samples = 0;
    }

    /// One snapshot block; averages are written with round-trip precision.
    pub fn format(&self, elements: &[&str]) -> String {
        let mut out = format!(
            "snapshot step={} atoms={} samples={} nevery={} nfreq={}\n",
            self.step, self.n_atoms, self.samples, self.nevery, self.nfreq
        );
        for (i, e) in elements.iter().enumerate() {
            let _ = writeln!(out, "atom {} {}", i + 1, e);
        }
        for (i, j, bo) in self.averages() {
            let _ = writeln!(out, "bond {} {} {}", i + 1, j + 1, bo);
        }
        out.push_str("end\n");
        out
    }
}

/// One snapshot read back from a file: averaged bonds and elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSnapshot {
    pub step: u64,
    pub elements: Vec<String>,
    pub bonds: Vec<(usize, usize, f64)>,
}

/// Parses every snapshot block in `text`.
pub fn parse_snapshots(text: &str, origin: &str) -> Result<Vec<ParsedSnapshot>> {
    let bad = |line: usize, msg: String| ReaxError::Malformed {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut out = Vec::new();
    let mut cur: Option<(ParsedSnapshot, usize)> = None;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace();
        let head = words.next().unwrap_or_default();
        match (head, cur.as_mut()) {
            ("snapshot", None) => {
                let mut step = None;
                let mut atoms = None;
                for w in words {
                    let (k, v) = w.split_once('=').ok_or_else(|| bad(ln, format!("expected key=value, got '{w}'")))?;
                    let num = |v: &str| v.parse::<u64>().map_err(|_| bad(ln, format!("bad {k} '{v}'")));
                    match k {
                        "step" => step = Some(num(v)?),
                        "atoms" => atoms = Some(num(v)? as usize),
                        _ => {}
                    }
                }
                let step = step.ok_or_else(|| bad(ln, "snapshot without step".into()))?;
                let atoms = atoms.ok_or_else(|| bad(ln, "snapshot without atoms".into()))?;
                cur = Some((
                    ParsedSnapshot {
                        step,
                        elements: vec![String::new(); atoms],
                        bonds: Vec::new(),
                    },
                    ln,
                ));
            }
            ("atom", Some((snap, _))) => {
                let id: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| bad(ln, "atom line needs an id".into()))?;
                let el = words.next().ok_or_else(|| bad(ln, "atom line needs an element".into()))?;
                if id == 0 || id > snap.elements.len() {
                    return Err(bad(ln, format!("atom id {id} out of range")));
                }
                snap.elements[id - 1] = el.to_string();
            }
            ("bond", Some((snap, _))) => {
                let f: Vec<&str> = words.collect();
                if f.len() != 3 {
                    return Err(bad(ln, "bond line needs 'i j bo'".into()));
                }
                let n = snap.elements.len();
                let id = |s: &str| match s.parse::<usize>() {
                    Ok(v) if v >= 1 && v <= n => Ok(v - 1),
                    _ => Err(bad(ln, format!("bad atom id '{s}'"))),
                };
                let (i, j) = (id(f[0])?, id(f[1])?);
                let bo: f64 = f[2].parse().map_err(|_| bad(ln, format!("bad bond order '{}'", f[2])))?;
                if i == j || !bo.is_finite() {
                    return Err(bad(ln, "invalid bond".into()));
                }
                snap.bonds.push((i.min(j), i.max(j), bo));
            }
            ("end", Some(_)) => {
                let (snap, start) = cur.take().unwrap();
                if let Some(i) = snap.elements.iter().position(|e| e.is_empty()) {
                    return Err(bad(start, format!("atom {} missing", i + 1)));
                }
                out.push(snap);
            }
            (other, _) => return Err(bad(ln, format!("unexpected '{other}'"))),
        }
    }
    if let Some((_, start)) = cur {
        return Err(bad(start, "snapshot not terminated by 'end'".into()));
    }
    Ok(out)
}

/// Bond-order thresholds per element pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub default: f64,
    overrides: BTreeMap<(String, String), f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            default: DEFAULT_THRESHOLD,
            overrides: BTreeMap::new(),
        }
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn check_threshold(what: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(ReaxError::Config(format!("{what} must be a non-negative number, got {v}")));
    }
    Ok(())
}

impl Thresholds {
    pub fn new(default: f64) -> Result<Self> {
        check_threshold("species.threshold", default)?;
        Ok(Thresholds {
            default,
            overrides: BTreeMap::new(),
        })
    }

    pub fn set_pair(&mut self, a: &str, b: &str, value: f64) -> Result<()> {
        check_threshold(&format!("species.threshold.{a}-{b}"), value)?;
        self.overrides.insert(pair_key(a, b), value);
        Ok(())
    }

    pub fn get(&self, a: &str, b: &str) -> f64 {
        self.overrides.get(&pair_key(a, b)).copied().unwrap_or(self.default)
    }
}

/// Edges whose averaged bond order is strictly greater than the threshold of
/// their element pair.
pub fn threshold_bonds(
    averages: &[(usize, usize, f64)],
    elements: &[&str],
    thresholds: &Thresholds,
) -> Vec<(usize, usize)> {
    averages
        .iter()
        .filter(|&&(i, j, bo)| bo > thresholds.get(elements[i], elements[j]))
        .map(|&(i, j, _)| (i, j))
        .collect()
}

/// Labels each atom with the smallest 1-based global ID in its connected
/// component by relaxing every edge to the smaller label until nothing
/// changes.
pub fn assign_molecule_ids(edges: &[(usize, usize)], n: usize) -> Vec<u32> {
    let mut id: Vec<u32> = (1..=n as u32).collect();
    let mut sweeps = 0;
    loop {
        let mut changed = false;
        for &(i, j) in edges {
            let m = id[i].min(id[j]);
            if id[i] != m || id[j] != m {
                id[i] = m;
                id[j] = m;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        sweeps += 1;
        assert!(sweeps <= n, "label propagation did not converge in {n} sweeps");
    }
    id
}

/// Molecule IDs `1..=m` per atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoleculeAssignment {
    pub ids: Vec<u32>,
    pub m: usize,
}

/// Molecule counts keyed by formula.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeciesTable {
    pub counts: BTreeMap<String, usize>,
}

impl SpeciesTable {
    pub fn molecules(&self) -> usize {
        self.counts.values().sum()
    }

    /// Species sorted by descending count, then formula.
    pub fn sorted(&self) -> Vec<(&str, usize)> {
        let mut v: Vec<_> = self.counts.iter().map(|(f, &c)| (f.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

/// Hill-order formula: with carbon present, C then H then the rest
/// alphabetically; otherwise everything alphabetically. Counts of one are
/// omitted.
pub fn hill_formula(counts: &BTreeMap<&str, usize>) -> String {
    let mut out = String::new();
    let mut push = |el: &str, c: usize| {
        out.push_str(el);
        if c > 1 {
            let _ = write!(out, "{c}");
        }
    };
    if let Some(&c) = counts.get("C") {
        push("C", c);
        if let Some(&h) = counts.get("H") {
            push("H", h);
        }
        for (el, &c) in counts {
            if *el != "C" && *el != "H" {
                push(el, c);
            }
        }
    } else {
        for (el, &c) in counts {
            push(el, c);
        }
    }
    out
}

/// Renumbers labels densely in ascending order and counts molecules by
/// formula.
pub fn renumber_and_classify(labels: &[u32], elements: &[&str]) -> (SpeciesTable, MoleculeAssignment) {
    let mut distinct: Vec<u32> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let dense: HashMap<u32, u32> = distinct
        .iter()
        .enumerate()
        .map(|(k, &l)| (l, k as u32 + 1))
        .collect();
    let ids: Vec<u32> = labels.iter().map(|l| dense[l]).collect();
    let m = distinct.len();
    let mut members: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); m];
    for (a, &id) in ids.iter().enumerate() {
        *members[id as usize - 1].entry(elements[a]).or_insert(0) += 1;
    }
    let mut table = SpeciesTable::default();
    for counts in &members {
        *table.counts.entry(hill_formula(counts)).or_insert(0) += 1;
    }
    (table, MoleculeAssignment { ids, m })
}

/// `step  M  formula count  formula count ...`; an empty table gives
/// `step  0`.
pub fn summary_line(table: &SpeciesTable, step: u64) -> String {
    let mut line = format!("{step}  {}", table.molecules());
    for (f, c) in table.sorted() {
        let _ = write!(line, "  {f} {c}");
    }
    line
}

/// Full analysis of one averaged snapshot.
pub fn analyze(
    averages: &[(usize, usize, f64)],
    elements: &[&str],
    thresholds: &Thresholds,
) -> (SpeciesTable, MoleculeAssignment) {
    let edges = threshold_bonds(averages, elements, thresholds);
    let labels = assign_molecule_ids(&edges, elements.len());
    renumber_and_classify(&labels, elements)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesConfig {
    pub nevery: u64,
    pub nfreq: u64,
    pub thresholds: Thresholds,
}

impl Default for SpeciesConfig {
    fn default() -> Self {
        SpeciesConfig {
            nevery: 10,
            nfreq: 1000,
            thresholds: Thresholds::default(),
        }
    }
}

impl SpeciesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nevery == 0 || self.nfreq == 0 || self.nfreq % self.nevery != 0 {
            return Err(ReaxError::Config(format!(
                "species.nfreq ({}) must be a positive multiple of species.nevery ({})",
                self.nfreq, self.nevery
            )));
        }
        Ok(())
    }
}

/// Output of a completed window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub snapshot: BondSnapshot,
    pub table: SpeciesTable,
    pub line: String,
}

/// In-situ analysis driven from the MD loop. Samples are taken at positive
/// multiples of `nevery`; a window closes at each multiple of `nfreq`.
#[derive(Debug, Clone)]
pub struct SpeciesAnalyzer {
    pub config: SpeciesConfig,
    snapshot: BondSnapshot,
}

impl SpeciesAnalyzer {
    pub fn new(config: SpeciesConfig, n_atoms: usize) -> Result<Self> {
        config.validate()?;
        let snapshot = BondSnapshot::new(n_atoms, config.nevery, config.nfreq);
        Ok(SpeciesAnalyzer { config, snapshot })
    }

    pub fn wants_sample(&self, step: u64) -> bool {
        step > 0 && step % self.config.nevery == 0
    }

    pub fn on_step(&mut self, step: u64, bonds: &BondList, elements: &[&str]) -> Option<WindowReport> {
        if !self.wants_sample(step) {
            return None;
        }
        self.snapshot.accumulate(bonds, step);
        if step % self.config.nfreq != 0 {
            return None;
        }
        let (table, _) = analyze(&self.snapshot.averages(), elements, &self.config.thresholds);
        let line = summary_line(&table, step);
        let snapshot = self.snapshot.clone();
        self.snapshot.clear();
        Some(WindowReport { snapshot, table, line })
    }
}

/// Offline path: species summary lines for parsed snapshots.
pub fn summarize_snapshots(snaps: &[ParsedSnapshot], thresholds: &Thresholds) -> Vec<String> {
    snaps
        .iter()
        .map(|s| {
            let el: Vec<&str> = s.elements.iter().map(String::as_str).collect();
            let (table, _) = analyze(&s.bonds, &el, thresholds);
            summary_line(&table, s.step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(edges: &[(usize, usize)], el: &[&str]) -> SpeciesTable {
        renumber_and_classify(&assign_molecule_ids(edges, el.len()), el).0
    }

    #[test]
    fn window_average() {
        let mut s = BondSnapshot::new(2, 10, 100);
        for k in 0..10 {
            let pairs = if k % 2 == 0 { vec![(0, 1, 0.6)] } else { vec![] };
            s.accumulate_pairs(&pairs, k * 10);
        }
        assert!((s.averages()[0].2 - 0.3).abs() < 1e-15);
        assert_eq!(s.nrepeat(), 10);
    }

    #[test]
    fn threshold_is_strict() {
        let el = ["O", "H", "H"];
        let t = Thresholds::default();
        assert!(threshold_bonds(&[(0, 1, 0.3)], &el, &t).is_empty());
        assert_eq!(threshold_bonds(&[(0, 1, 0.31)], &el, &t), vec![(0, 1)]);
    }

    #[test]
    fn pair_override() {
        let el = ["O", "H", "C"];
        let mut t = Thresholds::default();
        t.set_pair("O", "H", 0.4).unwrap();
        let avg = [(0, 1, 0.35), (0, 2, 0.35)];
        assert_eq!(threshold_bonds(&avg, &el, &t), vec![(0, 2)]);
        assert!(t.set_pair("C", "H", -0.1).is_err());
        assert!(Thresholds::new(-1.0).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(assign_molecule_ids(&[], 3), vec![1, 2, 3]);
        assert_eq!(assign_molecule_ids(&[(1, 2), (0, 1)], 3), vec![1, 1, 1]);
        // the minimum can sit anywhere in a long chain
        let chain: Vec<_> = (0..9).rev().map(|i| (i, i + 1)).collect();
        assert!(assign_molecule_ids(&chain, 10).iter().all(|&l| l == 1));
    }

    #[test]
    fn water_and_hydroxide() {
        let el = ["O", "H", "H", "O", "H"];
        let t = table(&[(0, 1), (0, 2), (3, 4)], &el);
        assert_eq!(t.counts.get("H2O"), Some(&1));
        assert_eq!(t.counts.get("HO"), Some(&1));
        let t = table(&[(0, 1), (0, 2), (3, 4), (3, 1)], &["O", "H", "H", "O", "H"]);
        assert_eq!(t.counts.get("H3O2"), Some(&1));
    }

    #[test]
    fn two_waters_summary() {
        let el = ["O", "H", "H", "O", "H", "H"];
        let t = table(&[(0, 1), (0, 2), (3, 4), (3, 5)], &el);
        assert_eq!(summary_line(&t, 1000), "1000  2  H2O 2");
        assert_eq!(summary_line(&SpeciesTable::default(), 5), "5  0");
    }

    #[test]
    fn hill_order() {
        let f = |pairs: &[(&'static str, usize)]| hill_formula(&pairs.iter().copied().collect());
        assert_eq!(f(&[("O", 12), ("N", 4), ("H", 8), ("C", 5)]), "C5H8N4O12");
        assert_eq!(f(&[("O", 1), ("H", 2)]), "H2O");
        assert_eq!(f(&[("C", 1), ("O", 2)]), "CO2");
        assert_eq!(f(&[("N", 1), ("H", 3)]), "H3N");
    }

    #[test]
    fn isomers_share_a_species() {
        // ring and chain of six carbons with the same hydrogen count
        let mut el = vec!["C"; 6];
        el.extend(["H"; 12]);
        let ring: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).chain((0..12).map(|h| (h / 2, 6 + h))).collect();
        let chain: Vec<_> = (0..5).map(|i| (i, i + 1)).chain((0..12).map(|h| (h / 2, 6 + h))).collect();
        assert_eq!(table(&ring, &el), table(&chain, &el));
        assert_eq!(table(&ring, &el).counts.get("C6H12"), Some(&1));
    }

    #[test]
    fn summary_sorting() {
        let mut t = SpeciesTable::default();
        t.counts.insert("HO".into(), 1);
        t.counts.insert("H2O".into(), 3);
        t.counts.insert("H2".into(), 1);
        assert_eq!(summary_line(&t, 10), "10  5  H2O 3  H2 1  HO 1");
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = BondSnapshot::new(3, 10, 20);
        s.accumulate_pairs(&[(0, 1, 0.9123456789), (2, 0, 0.1)], 10);
        s.accumulate_pairs(&[(0, 1, 0.7)], 20);
        let text = s.format(&["O", "H", "H"]);
        let parsed = parse_snapshots(&text, "mem").unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].step, 20);
        assert_eq!(parsed[0].bonds, s.averages());
        assert_eq!(parsed[0].elements, vec!["O", "H", "H"]);
    }

    #[test]
    fn malformed_snapshots() {
        for text in [
            "bond 1 2 0.5\n",
            "snapshot step=1 atoms=2\natom 1 O\natom 2 H\nbond 1 3 0.5\nend\n",
            "snapshot step=1 atoms=2\natom 1 O\nend\n",
            "snapshot step=1 atoms=1\natom 1 O\n",
            "snapshot atoms=1\natom 1 O\nend\n",
            "snapshot step=1 atoms=2\natom 1 O\natom 2 H\nbond 1 2 x\nend\n",
        ] {
            assert!(matches!(parse_snapshots(text, "f"), Err(ReaxError::Malformed { .. })), "{text}");
        }
    }

    #[test]
    fn cadence() {
        let cfg = SpeciesConfig::default();
        let mut a = SpeciesAnalyzer::new(cfg, 2).unwrap();
        let bonds = BondList::default();
        let mut reports = 0;
        for step in 0..=2000 {
            if let Some(r) = a.on_step(step, &bonds, &["H", "H"]) {
                assert_eq!(r.snapshot.samples, 100);
                reports += 1;
            }
        }
        assert_eq!(reports, 2);
        let bad = SpeciesConfig {
            nevery: 7,
            ..SpeciesConfig::default()
        };
        assert!(SpeciesAnalyzer::new(bad, 2).is_err());
    }

    proptest::proptest! {
        #[test]
        fn census_ignores_edge_order(
            n in 1usize..40,
            raw in proptest::collection::vec((0usize..40, 0usize..40), 0..60),
            seed in 0u64..1000,
        ) {
            let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let el: Vec<&str> = (0..n).map(|i| ["C", "H", "O", "N"][i % 4]).collect();
            let mut shuffled: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| if seed % 2 == 0 { (b, a) } else { (a, b) }).collect();
            let k = shuffled.len().max(1);
            shuffled.rotate_left(seed as usize % k);
            let a = table(&edges, &el);
            let b = table(&shuffled, &el);
            proptest::prop_assert_eq!(summary_line(&a, 0), summary_line(&b, 0));
            proptest::prop_assert!(a.molecules() >= 1 && a.molecules() <= n);
        }
    }
}
