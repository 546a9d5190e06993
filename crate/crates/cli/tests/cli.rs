use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reax-kit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const TWO_WATERS: &str = "snapshot step=1000 atoms=6 samples=100 nevery=10 nfreq=1000
atom 1 O
atom 2 H
atom 3 H
atom 4 O
atom 5 H
atom 6 H
bond 1 2 0.95
bond 1 3 0.93
bond 4 5 0.91
bond 4 6 0.97
bond 2 4 0.05
end
";

#[test]
fn ghostmodel_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&kit(&["ghostmodel", "--dg", "2", "--t", "1,64"], dir.path()));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "t,d_over_g,ratio_mpi,ratio_hybrid");
    assert_eq!(lines[1], "1,2,2.375000,2.375000");
    let f: Vec<f64> = lines[2].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(f[2], 2.375);
    assert!((f[3] - 217.0 / 512.0).abs() < 1e-6);
}

#[test]
fn ghostmodel_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["ghostmodel", "--dg", "2", "--t"],
        vec!["ghostmodel", "--dg", "2"],
        vec!["ghostmodel", "--dg", "two", "--t", "1"],
    ] {
        let out = kit(&args, dir.path());
        assert!(!out.status.success(), "{args:?} should fail");
    }
}

#[test]
fn species_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("w.snap");
    fs::write(&snap, TWO_WATERS).unwrap();
    let out = ok(&kit(&["species", "w.snap"], dir.path()));
    assert_eq!(out, "# step  num_molecules  species...\n1000  2  H2O 2\n");

    // nothing above threshold: every atom is its own molecule
    let out = ok(&kit(&["species", "w.snap", "--threshold", "0.99"], dir.path()));
    assert_eq!(out.lines().nth(1), Some("1000  6  H 4  O 2"));

    let out = ok(&kit(&["species", "w.snap", "--pair", "H-O=0.94"], dir.path()));
    assert_eq!(out.lines().nth(1), Some("1000  4  H 2  HO 2"));
}

#[test]
fn species_rejects_malformed_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.snap"), "snapshot step=1 atoms=2\natom 1 O\nbond 1 2 x\nend\n").unwrap();
    let out = kit(&["species", "bad.snap"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.snap"));
}

fn write_config(dir: &Path, extra: &str) {
    let text = format!(
        "system = fixture:water216\nsteps = 20\ntemperature = 300\nseed = 7\n\
         species.nevery = 5\nspecies.nfreq = 10\n\
         output.energy = energy.csv\noutput.species = species.txt\noutput.snapshots = snap.txt\n\
         output.perf = perf.csv\noutput.qeq = qeq.csv\n{extra}"
    );
    fs::write(dir.join("run.cfg"), text).unwrap();
}

#[test]
fn run_writes_outputs_and_offline_species_matches() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    ok(&kit(&["run", "run.cfg"], dir.path()));
    let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let lines: Vec<&str> = energy.lines().collect();
    assert_eq!(lines[0], "step,e_bond,e_over,e_angle,e_tor,e_hb,e_vdw,e_coul,e_pol,ke,total");
    assert_eq!(lines.len(), 22);
    let perf = fs::read_to_string(dir.path().join("perf.csv")).unwrap();
    assert!(perf.starts_with("kernel,seconds,percent\n"));
    assert!(perf.contains("\nspecies,"));
    let qeq = fs::read_to_string(dir.path().join("qeq.csv")).unwrap();
    assert_eq!(qeq.lines().count(), 22);

    let in_situ = fs::read_to_string(dir.path().join("species.txt")).unwrap();
    assert_eq!(in_situ.lines().count(), 3);
    let offline = ok(&kit(&["species", "snap.txt"], dir.path()));
    assert_eq!(in_situ, offline);
}

#[test]
fn zero_steps_is_single_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "");
    ok(&kit(&["run", "run.cfg", "--steps", "0"], dir.path()));
    let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 2);
    assert!(energy.lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn static_schedule_runs_are_identical() {
    let runs: Vec<String> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            write_config(dir.path(), "");
            ok(&kit(&["run", "run.cfg", "--threads", "2", "--schedule", "static"], dir.path()));
            fs::read_to_string(dir.path().join("energy.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn run_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.cfg"), "system = missing.xyz\n").unwrap();
    assert!(!kit(&["run", "a.cfg"], dir.path()).status.success());
    fs::write(dir.path().join("b.cfg"), "dt = 0\n").unwrap();
    assert!(!kit(&["run", "b.cfg"], dir.path()).status.success());
    assert!(!kit(&["run", "--schedule", "guided"], dir.path()).status.success());
}

#[test]
fn bench_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&kit(&["bench", "--steps", "2", "--threads", "1", "--chunk", "20"], dir.path()));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("threads,chunk,steps_per_sec,write-lists,"));
    assert!(lines[1].starts_with("1,20,"));

    let out = ok(&kit(&["bench", "--steps", "1", "--threads", "1,2", "--chunk", "10,20,25,50"], dir.path()));
    assert_eq!(out.lines().count(), 9);

    let out = kit(&["bench", "--steps", "1", "--threads", "4", "--set", "max_threads=2"], dir.path());
    assert!(!out.status.success());
}
