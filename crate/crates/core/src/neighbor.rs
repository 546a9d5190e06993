//! Cell lists and half-stored neighbor lists in CSR form, with cached pair
//! distances and displacement vectors.

use crate::error::{ReaxError, Result};
use crate::geometry::{norm, SimBox, Vec3};
use crate::parallel::{exclusive_prefix_sum, Runtime, SharedSlice};
use crate::system::SystemState;

/// Atoms binned into cells at least one cutoff wide.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub dims: [usize; 3],
    pub side: Vec3,
    /// CSR offsets into `cell_atoms`, one row per cell.
    pub cell_start: Vec<usize>,
    pub cell_atoms: Vec<u32>,
    pub atom_cell: Vec<u32>,
    /// Distinct neighboring cells (self included) per cell, CSR.
    stencil_start: Vec<usize>,
    stencil: Vec<u32>,
}

impl CellGrid {
    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell(&self, c: usize) -> &[u32] {
        &self.cell_atoms[self.cell_start[c]..self.cell_start[c + 1]]
    }

    pub fn stencil(&self, c: usize) -> &[u32] {
        &self.stencil[self.stencil_start[c]..self.stencil_start[c + 1]]
    }

    fn flat(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }
}

pub fn build_cell_grid(state: &SystemState, sim_box: &SimBox, r_nonb: f64) -> Result<CellGrid> {
    let mut dims = [1usize; 3];
    let mut side = [0.0; 3];
    for axis in 0..3 {
        let l = sim_box.lengths[axis];
        if sim_box.periodic[axis] && l < r_nonb {
            return Err(ReaxError::BoxTooSmall {
                axis,
                length: l,
                required: r_nonb,
            });
        }
        dims[axis] = ((l / r_nonb).floor() as usize).max(1);
        side[axis] = l / dims[axis] as f64;
    }
    let n_cells = dims[0] * dims[1] * dims[2];

    let mut grid = CellGrid {
        dims,
        side,
        cell_start: Vec::new(),
        cell_atoms: Vec::new(),
        atom_cell: Vec::with_capacity(state.len()),
        stencil_start: Vec::new(),
        stencil: Vec::new(),
    };

    let mut counts = vec![0usize; n_cells];
    for p in &state.positions {
        let w = sim_box.wrap(*p);
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let k = (w[axis] / side[axis]).floor();
            idx[axis] = if k < 0.0 { 0 } else { (k as usize).min(dims[axis] - 1) };
        }
        let c = grid.flat(idx);
        grid.atom_cell.push(c as u32);
        counts[c] += 1;
    }
    grid.cell_start = exclusive_prefix_sum(&counts);
    let mut fill = grid.cell_start.clone();
    grid.cell_atoms = vec![0; state.len()];
    for (i, &c) in grid.atom_cell.iter().enumerate() {
        grid.cell_atoms[fill[c as usize]] = i as u32;
        fill[c as usize] += 1;
    }

    grid.stencil_start.push(0);
    for cx in 0..dims[0] {
        for cy in 0..dims[1] {
            for cz in 0..dims[2] {
                let mut near = Vec::with_capacity(27);
                for ox in -1i64..=1 {
                    for oy in -1i64..=1 {
                        for oz in -1i64..=1 {
                            let raw = [cx as i64 + ox, cy as i64 + oy, cz as i64 + oz];
                            let mut idx = [0usize; 3];
                            let mut inside = true;
                            for axis in 0..3 {
                                let d = dims[axis] as i64;
                                if sim_box.periodic[axis] {
                                    idx[axis] = raw[axis].rem_euclid(d) as usize;
                                } else if raw[axis] < 0 || raw[axis] >= d {
                                    inside = false;
                                } else {
                                    idx[axis] = raw[axis] as usize;
                                }
                            }
                            if inside {
                                near.push(grid.flat(idx) as u32);
                            }
                        }
                    }
                }
                near.sort_unstable();
                near.dedup();
                grid.stencil.extend_from_slice(&near);
                grid.stencil_start.push(grid.stencil.len());
            }
        }
    }
    Ok(grid)
}

/// One stored pair `i → j` (with `i < j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub j: u32,
    /// Å
    pub r: f64,
    /// Minimum-image displacement `x_j - x_i`, Å.
    pub d: Vec3,
}

/// Each pair within the cutoff stored once, in the row of its lower index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HalfNeighborList {
    pub offsets: Vec<usize>,
    pub entries: Vec<NeighborEntry>,
    /// Step at which pair membership was last rebuilt.
    pub built_at: u64,
    pub cutoff: f64,
}

impl HalfNeighborList {
    pub fn n_atoms(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn n_pairs(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[NeighborEntry] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    /// All stored `(i, j)` pairs in row order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_atoms()).flat_map(move |i| self.row(i).iter().map(move |e| (i, e.j as usize)))
    }

    /// Recomputes cached distances for the stored pairs at the current
    /// positions without changing membership.
    pub fn refresh(&mut self, state: &SystemState, sim_box: &SimBox, runtime: &Runtime) {
        let offsets = &self.offsets;
        let entries = SharedSlice::new(&mut self.entries);
        runtime.for_chunks(state.len(), |_, rows| {
            let span = offsets[rows.start]..offsets[rows.end];
            // SAFETY: row ranges from the scheduler are disjoint, hence so
            // are the entry spans they cover.
            let seg = unsafe { entries.slice_mut(span) };
            let mut k = 0;
            for i in rows {
                let xi = state.positions[i];
                for _ in offsets[i]..offsets[i + 1] {
                    let e = &mut seg[k];
                    e.d = sim_box.delta(xi, state.positions[e.j as usize]);
                    e.r = norm(e.d);
                    k += 1;
                }
            }
        });
    }
}

/// Visits every `j > i` within `cutoff` of atom `i`, in cell-stencil order.
#[inline]
fn scan_row(
    i: usize,
    state: &SystemState,
    sim_box: &SimBox,
    grid: &CellGrid,
    cutoff: f64,
    mut visit: impl FnMut(usize, f64, Vec3),
) {
    let xi = state.positions[i];
    let c = grid.atom_cell[i] as usize;
    for &nc in grid.stencil(c) {
        for &j in grid.cell(nc as usize) {
            let j = j as usize;
            if j <= i {
                continue;
            }
            let d = sim_box.delta(xi, state.positions[j]);
            let r = norm(d);
            if r <= cutoff {
                visit(j, r, d);
            }
        }
    }
}

/// Two-pass build (count, prefix sum, fill), parallel over cells; rows are
/// sorted by `j` so the result is independent of thread count.
pub fn build_half_neighbor_list(
    state: &SystemState,
    sim_box: &SimBox,
    grid: &CellGrid,
    cutoff: f64,
    runtime: &Runtime,
) -> HalfNeighborList {
    let n = state.len();
    let mut counts = vec![0usize; n];
    {
        let out = SharedSlice::new(&mut counts);
        runtime.for_chunks(grid.n_cells(), |_, cells| {
            for c in cells {
                for &i in grid.cell(c) {
                    let mut k = 0;
                    scan_row(i as usize, state, sim_box, grid, cutoff, |_, _, _| k += 1);
                    // SAFETY: each atom sits in exactly one cell.
                    unsafe { out.write(i as usize, k) };
                }
            }
        });
    }
    let offsets = exclusive_prefix_sum(&counts);
    let blank = NeighborEntry {
        j: 0,
        r: 0.0,
        d: [0.0; 3],
    };
    let mut entries = vec![blank; offsets[n]];
    {
        let out = SharedSlice::new(&mut entries);
        let offsets = &offsets;
        runtime.for_chunks(grid.n_cells(), |_, cells| {
            for c in cells {
                for &i in grid.cell(c) {
                    let i = i as usize;
                    // SAFETY: row segments of distinct atoms are disjoint.
                    let row = unsafe { out.slice_mut(offsets[i]..offsets[i + 1]) };
                    let mut k = 0;
                    scan_row(i, state, sim_box, grid, cutoff, |j, r, d| {
                        row[k] = NeighborEntry { j: j as u32, r, d };
                        k += 1;
                    });
                    row.sort_unstable_by_key(|e| e.j);
                }
            }
        });
    }
    HalfNeighborList {
        offsets,
        entries,
        built_at: state.step,
        cutoff,
    }
}

/// True on steps where pair membership is rebuilt.
pub fn needs_rebuild(step: u64, reneighbor_every: u64) -> bool {
    assert!(reneighbor_every >= 1, "reneighbor_every must be at least 1");
    step % reneighbor_every == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel::SchedulePolicy;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn state_at(positions: Vec<Vec3>) -> SystemState {
        SystemState::new(vec![0; positions.len()], positions)
    }

    fn brute(state: &SystemState, b: &SimBox, cutoff: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..state.len() {
            for j in i + 1..state.len() {
                let d = b.min_image(crate::geometry::sub(state.positions[j], state.positions[i]));
                if norm(d) <= cutoff {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn grid_dimensions() {
        let b = SimBox::periodic([30.0; 3]).unwrap();
        let g = build_cell_grid(&state_at(vec![[1.0, 2.0, 3.0]]), &b, 10.0).unwrap();
        assert_eq!(g.dims, [3, 3, 3]);
        let occupied = (0..g.n_cells()).filter(|&c| !g.cell(c).is_empty()).count();
        assert_eq!(occupied, 1);
    }

    #[test]
    fn grid_conserves_atoms() {
        let mut rng = StdRng::seed_from_u64(1);
        let b = SimBox::periodic([31.0, 45.0, 22.0]).unwrap();
        let pos = (0..1000)
            .map(|_| [rng.random_range(-40.0..80.0), rng.random::<f64>() * 45.0, rng.random::<f64>() * 22.0])
            .collect();
        let g = build_cell_grid(&state_at(pos), &b, 10.0).unwrap();
        let total: usize = (0..g.n_cells()).map(|c| g.cell(c).len()).sum();
        assert_eq!(total, 1000);
    }

    #[test]
    fn grid_rejects_tiny_periodic_box() {
        let b = SimBox::periodic([9.0, 30.0, 30.0]).unwrap();
        assert!(build_cell_grid(&state_at(vec![[0.0; 3]]), &b, 10.0).is_err());
        let open = SimBox::new([9.0, 30.0, 30.0], [false, true, true]).unwrap();
        assert!(build_cell_grid(&state_at(vec![[0.0; 3]]), &open, 10.0).is_ok());
    }

    #[test]
    fn cutoff_edges() {
        let b = SimBox::periodic([40.0; 3]).unwrap();
        let rt = Runtime::serial();
        for (sep, expect) in [(9.9, 1), (10.1, 0)] {
            let s = state_at(vec![[5.0, 5.0, 5.0], [5.0 + sep, 5.0, 5.0]]);
            let g = build_cell_grid(&s, &b, 10.0).unwrap();
            let l = build_half_neighbor_list(&s, &b, &g, 10.0, &rt);
            assert_eq!(l.n_pairs(), expect, "sep {sep}");
        }
    }

    #[test]
    fn matches_brute_force_and_is_thread_invariant() {
        let mut rng = StdRng::seed_from_u64(2);
        let serial = Runtime::serial();
        let par = Runtime::new(4, SchedulePolicy::dynamic(3));
        for trial in 0..20 {
            let periodic = [trial % 2 == 0, true, trial % 3 != 0];
            let b = SimBox::new([24.0, 21.0, 35.0], periodic).unwrap();
            let pos = (0..64)
                .map(|_| [rng.random::<f64>() * 24.0, rng.random::<f64>() * 21.0, rng.random::<f64>() * 35.0])
                .collect();
            let s = state_at(pos);
            let g = build_cell_grid(&s, &b, 10.0).unwrap();
            let a = build_half_neighbor_list(&s, &b, &g, 10.0, &serial);
            let p = build_half_neighbor_list(&s, &b, &g, 10.0, &par);
            assert_eq!(a, p);
            assert_eq!(a.pairs().collect::<Vec<_>>(), brute(&s, &b, 10.0));
            for i in 0..s.len() {
                for e in a.row(i) {
                    assert!((e.r - norm(e.d)).abs() <= 1e-12);
                    assert!(e.r <= 10.0);
                }
            }
            assert!(a.offsets.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn refresh_tracks_motion() {
        let b = SimBox::periodic([30.0; 3]).unwrap();
        let rt = Runtime::new(2, SchedulePolicy::dynamic(1));
        let mut s = state_at(vec![[1.0, 1.0, 1.0], [29.0, 1.0, 1.0], [5.0, 5.0, 5.0]]);
        let g = build_cell_grid(&s, &b, 10.0).unwrap();
        let mut l = build_half_neighbor_list(&s, &b, &g, 10.0, &rt);
        s.positions[1] = [28.5, 1.0, 1.0];
        l.refresh(&s, &b, &rt);
        let e = l.row(0).iter().find(|e| e.j == 1).unwrap();
        assert!((e.r - 2.5).abs() < 1e-12);
        assert_eq!(e.d, [-2.5, 0.0, 0.0]);
    }

    #[test]
    fn rebuild_cadence() {
        assert!(needs_rebuild(0, 10));
        assert!(!needs_rebuild(5, 10));
        assert!(needs_rebuild(10, 10));
        assert!(needs_rebuild(7, 1));
    }
}
