//! Deterministic test and benchmark systems.

use rand::{rngs::StdRng, Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::forcefield::ForceField;
use crate::geometry::{add, norm, scale, sub, SimBox, Vec3};
use crate::system::SystemState;

/// O–H length and H–O–H angle of the water geometry used by the fixtures.
pub const WATER_OH: f64 = 0.96;
pub const WATER_ANGLE_DEG: f64 = 104.5;

fn type_of(ff: &ForceField, el: &str) -> usize {
    ff.type_index(el)
        .unwrap_or_else(|| panic!("force field has no element '{el}'"))
}

/// `n` atoms of random C/H/N/O types at liquid-like density (0.06 Å⁻³)
/// in an open box, no two closer than 0.9 Å. Dense enough that most atoms
/// are bonded and angles and torsions are plentiful.
pub fn random_cluster(ff: &ForceField, n: usize, seed: u64) -> (SystemState, SimBox) {
    let side = (n as f64 / 0.06).cbrt();
    random_system(ff, n, seed, [side; 3], [false; 3], 0.9)
}

/// `n` atoms of random types placed uniformly in a box with the given
/// periodicity, rejecting positions closer than `min_dist` to an earlier
/// atom.
pub fn random_system(
    ff: &ForceField,
    n: usize,
    seed: u64,
    lengths: Vec3,
    periodic: [bool; 3],
    min_dist: f64,
) -> (SystemState, SimBox) {
    let sim_box = SimBox::new(lengths, periodic).expect("fixture box is valid");
    let mut rng = StdRng::seed_from_u64(seed);
    let mut positions: Vec<Vec3> = Vec::with_capacity(n);
    let mut types = Vec::with_capacity(n);
    let mut tries = 0usize;
    while positions.len() < n {
        tries += 1;
        assert!(tries < 1_000_000, "cannot place {n} atoms at min distance {min_dist}");
        let p = [
            rng.random::<f64>() * lengths[0],
            rng.random::<f64>() * lengths[1],
            rng.random::<f64>() * lengths[2],
        ];
        if positions
            .iter()
            .any(|q| norm(sim_box.delta(*q, p)) < min_dist)
        {
            continue;
        }
        positions.push(p);
        types.push(rng.random_range(0..ff.ntypes()));
    }
    (SystemState::new(types, positions), sim_box)
}

/// Rotation matrix for a uniformly random orientation.
fn random_rotation(rng: &mut StdRng) -> [[f64; 3]; 3] {
    let mut q: [f64; 4] = [0.0; 4];
    for c in &mut q {
        *c = StandardNormal.sample(rng);
    }
    let l = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|c| c / l);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn rotate(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Water in its local frame: O at the origin, H atoms in the xy plane.
pub fn water_frame() -> [Vec3; 3] {
    let half = (WATER_ANGLE_DEG / 2.0).to_radians();
    [
        [0.0; 3],
        [WATER_OH * half.cos(), WATER_OH * half.sin(), 0.0],
        [WATER_OH * half.cos(), -WATER_OH * half.sin(), 0.0],
    ]
}

/// Randomly placed and oriented waters in a periodic box, oxygens at least
/// `min_oo` Å apart.
pub fn water_box(ff: &ForceField, n_waters: usize, side: f64, min_oo: f64, seed: u64) -> (SystemState, SimBox) {
    let (o, h) = (type_of(ff, "O"), type_of(ff, "H"));
    let sim_box = SimBox::periodic([side; 3]).expect("fixture box is valid");
    let mut rng = StdRng::seed_from_u64(seed);
    let mut oxygens: Vec<Vec3> = Vec::with_capacity(n_waters);
    let mut types = Vec::with_capacity(3 * n_waters);
    let mut positions = Vec::with_capacity(3 * n_waters);
    let frame = water_frame();
    let mut tries = 0usize;
    while oxygens.len() < n_waters {
        tries += 1;
        assert!(tries < 1_000_000, "cannot place {n_waters} waters");
        let c = [
            rng.random::<f64>() * side,
            rng.random::<f64>() * side,
            rng.random::<f64>() * side,
        ];
        if oxygens.iter().any(|q| norm(sim_box.delta(*q, c)) < min_oo) {
            continue;
        }
        oxygens.push(c);
        let m = random_rotation(&mut rng);
        for (k, atom) in frame.iter().enumerate() {
            positions.push(sim_box.wrap(add(c, rotate(&m, *atom))));
            types.push(if k == 0 { o } else { h });
        }
    }
    (SystemState::new(types, positions), sim_box)
}

/// The 216-atom (72 water) periodic fixture used for energy conservation
/// runs: a 20 Å box, the smallest that admits the 10 Å nonbonded cutoff.
pub fn water216(ff: &ForceField) -> (SystemState, SimBox) {
    water_box(ff, 72, 20.0, 3.0, 216)
}

/// Two waters in an open box with a linear hydrogen bond: the donor's first
/// H points straight at the acceptor oxygen `oo` Å away, and the acceptor's
/// hydrogens point away from the donor.
pub fn water_dimer(ff: &ForceField, oo: f64) -> (SystemState, SimBox) {
    let (o, h) = (type_of(ff, "O"), type_of(ff, "H"));
    let half = (WATER_ANGLE_DEG / 2.0).to_radians();
    let theta = WATER_ANGLE_DEG.to_radians();
    let c = [10.0, 10.0, 10.0];
    let donor = [
        c,
        add(c, [WATER_OH, 0.0, 0.0]),
        add(c, [WATER_OH * theta.cos(), WATER_OH * theta.sin(), 0.0]),
    ];
    let a = add(c, [oo, 0.0, 0.0]);
    let acceptor = [
        a,
        add(a, [WATER_OH * half.cos(), 0.0, WATER_OH * half.sin()]),
        add(a, [WATER_OH * half.cos(), 0.0, -WATER_OH * half.sin()]),
    ];
    let positions: Vec<Vec3> = donor.into_iter().chain(acceptor).collect();
    let types = vec![o, h, h, o, h, h];
    (
        SystemState::new(types, positions),
        SimBox::new([30.0; 3], [false; 3]).expect("fixture box is valid"),
    )
}

/// Places the cell of `state` on an `n × n × n` lattice and returns the
/// smallest periodic replica with at least `min_atoms` atoms.
pub fn replicated(
    state: &SystemState,
    sim_box: &SimBox,
    min_atoms: usize,
) -> (SystemState, SimBox) {
    let mut k = 1;
    while state.len() * k * k * k < min_atoms {
        k += 1;
    }
    crate::system::replicate(state, sim_box, [k, k, k], crate::system::DEFAULT_MAX_ATOMS)
        .expect("replication within limits")
}

/// Planar zigzag chain of `n` atoms of one element, bonds `spacing` Å long
/// at 120° so that only nearest neighbors are strongly bonded.
pub fn zigzag_chain(ff: &ForceField, element: &str, n: usize, spacing: f64) -> (SystemState, SimBox) {
    let t = type_of(ff, element);
    let half = 60f64.to_radians();
    let mut positions = Vec::with_capacity(n);
    let start = [10.0, 10.0, 10.0];
    for i in 0..n {
        let x = i as f64 * spacing * half.sin();
        let y = if i % 2 == 0 { 0.0 } else { spacing * half.cos() };
        positions.push(add(start, [x, y, 0.0]));
    }
    let side = (n as f64 * spacing + 20.0).max(30.0);
    (
        SystemState::new(vec![t; n], positions),
        SimBox::new([side, 30.0, 30.0], [false; 3]).expect("fixture box is valid"),
    )
}

/// Rigidly moves every atom by `shift`.
pub fn translate(state: &mut SystemState, shift: Vec3) {
    for p in &mut state.positions {
        *p = add(*p, shift);
    }
}

/// Rotates every atom about `center` by a random rotation from `seed`.
pub fn rotate_about(state: &mut SystemState, center: Vec3, seed: u64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let m = random_rotation(&mut rng);
    for p in &mut state.positions {
        *p = add(center, rotate(&m, sub(*p, center)));
    }
}

/// Mean of all positions.
pub fn centroid(state: &SystemState) -> Vec3 {
    let mut c = [0.0; 3];
    for p in &state.positions {
        c = add(c, *p);
    }
    scale(c, 1.0 / state.len().max(1) as f64)
}
