//! Raster-scan relaxation for the additive distances.
//!
//! In 2D a pass runs four quadrant sweeps; each pixel is relaxed from the
//! half of its neighbors that precede it in scan order. In 3D a pass runs six
//! plane sweeps (forward and backward along each axis) and each voxel is
//! relaxed from its neighbors in the previous plane.

use serde::{Deserialize, Serialize};

use super::step_cost;
use crate::error::{Error, Result};
use crate::grid::{Connectivity, GridShape, Offset, Stencil};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Upper bound on full passes over all sweep directions.
    pub max_passes: usize,
    /// Stop once no voxel improved by more than this in a pass.
    pub convergence_tol: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            max_passes: 4,
            convergence_tol: 0.0,
        }
    }
}

impl RasterConfig {
    /// Iterate until nothing changes.
    pub fn fixed_point() -> Self {
        Self {
            max_passes: usize::MAX,
            convergence_tol: 0.0,
        }
    }

    pub fn with_passes(max_passes: usize) -> Self {
        Self {
            max_passes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_passes == 0 {
            return Err(Error::InvalidConfig("max_passes must be ≥ 1".into()));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "convergence tolerance {} must be ≥ 0",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// One directional sweep: loop nesting, per-level scan order and the
/// neighbors already visited when a voxel is reached.
struct Sweep {
    /// Grid axis iterated at each loop level, outermost first.
    axes: [usize; 3],
    orders: [Vec<usize>; 3],
    causal: Vec<Causal>,
}

/// A causal neighbor with its flat index offset.
#[derive(Clone, Copy, Debug)]
struct Causal {
    delta: [isize; 3],
    flat: isize,
    step: f64,
    /// `step_cost` with equal intensities.
    spatial: f64,
}

/// Quadrant scan directions for 2D, per axis: +1 ascending, -1 descending.
fn quadrant_directions() -> [[isize; 3]; 4] {
    [[1, 1, 1], [-1, -1, 1], [1, -1, 1], [-1, 1, 1]]
}

/// Offsets to neighbors visited earlier than the current voxel in a
/// row-major scan running along `dir`.
fn scan_causal(offsets: &[Offset], dir: [isize; 3]) -> Vec<Offset> {
    offsets
        .iter()
        .copied()
        .filter(|off| {
            (0..3)
                .map(|a| dir[a] * off.delta[a])
                .find(|&d| d != 0)
                .is_some_and(|d| d < 0)
        })
        .collect()
}

/// Offsets into the previous plane of a sweep along `axis` in direction `dir`.
fn plane_causal(offsets: &[Offset], axis: usize, dir: isize) -> Vec<Offset> {
    offsets
        .iter()
        .copied()
        .filter(|off| off.delta[axis] == -dir)
        .collect()
}

fn axis_order(len: usize, dir: isize) -> Vec<usize> {
    if dir > 0 {
        (0..len).collect()
    } else {
        (0..len).rev().collect()
    }
}

fn plan(stencil: &Stencil, ndim: usize, mix: f64) -> Vec<Sweep> {
    let dims = stencil.dims;
    let strides = [(dims[1] * dims[2]) as isize, dims[2] as isize, 1];
    let flatten = |offs: Vec<Offset>| -> Vec<Causal> {
        offs.into_iter()
            .map(|off| Causal {
                delta: off.delta,
                flat: (0..3).map(|a| off.delta[a] * strides[a]).sum(),
                step: off.step,
                spatial: step_cost(0.0, 0.0, off.step, mix),
            })
            .collect()
    };
    if ndim == 2 {
        return quadrant_directions()
            .into_iter()
            .map(|dir| Sweep {
                axes: [0, 1, 2],
                orders: [
                    axis_order(dims[0], dir[0]),
                    axis_order(dims[1], dir[1]),
                    axis_order(dims[2], dir[2]),
                ],
                causal: flatten(scan_causal(&stencil.offsets, dir)),
            })
            .collect();
    }
    let mut sweeps = Vec::with_capacity(6);
    for axis in 0..3 {
        let rest: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for dir in [1, -1] {
            sweeps.push(Sweep {
                axes: [axis, rest[0], rest[1]],
                orders: [
                    axis_order(dims[axis], dir),
                    axis_order(dims[rest[0]], 1),
                    axis_order(dims[rest[1]], 1),
                ],
                causal: flatten(plane_causal(&stencil.offsets, axis, dir)),
            });
        }
    }
    sweeps
}

pub(super) fn sweep(
    shape: &GridShape,
    intensities: &[f64],
    sources: &[usize],
    connectivity: Connectivity,
    mix: f64,
    cfg: &RasterConfig,
) -> Vec<f64> {
    let stencil = Stencil::new(shape, connectivity);
    let dims = stencil.dims;
    let strides = [dims[1] * dims[2], dims[2], 1];
    let mut dist = vec![f64::INFINITY; shape.len()];
    for &s in sources {
        dist[s] = 0.0;
    }
    let sweeps = plan(&stencil, shape.ndim(), mix);

    for _ in 0..cfg.max_passes {
        let mut max_change = 0.0f64;
        for Sweep { axes, orders, causal } in &sweeps {
            let [a0, a1, a2] = *axes;
            let moves = [0, 1, 2].map(|level| causal.iter().any(|off| off.delta[axes[level]] != 0));
            // Interior along a loop level: every causal neighbor is in bounds.
            let inside = |level: usize, x: usize| !moves[level] || (x > 0 && x + 1 < dims[axes[level]]);
            for &p0 in &orders[0] {
                for &p1 in &orders[1] {
                    let outer_inside = inside(0, p0) && inside(1, p1);
                    let base = p0 * strides[a0] + p1 * strides[a1];
                    for &p2 in &orders[2] {
                        let i = base + p2 * strides[a2];
                        let here = intensities[i];
                        let mut best = dist[i];
                        if outer_inside && inside(2, p2) {
                            for off in causal {
                                let j = (i as isize + off.flat) as usize;
                                let candidate = dist[j]
                                    + (mix * (intensities[j] - here).abs() + off.spatial);
                                if candidate < best {
                                    best = candidate;
                                }
                            }
                        } else {
                            let mut coord = [0; 3];
                            coord[a0] = p0;
                            coord[a1] = p1;
                            coord[a2] = p2;
                            for off in causal {
                                if let Some(j) = stencil.shift(coord, off.delta) {
                                    let candidate =
                                        dist[j] + step_cost(intensities[j], here, off.step, mix);
                                    if candidate < best {
                                        best = candidate;
                                    }
                                }
                            }
                        }
                        if best < dist[i] {
                            max_change = max_change.max(dist[i] - best);
                            dist[i] = best;
                        }
                    }
                }
            }
        }
        if max_change <= cfg.convergence_tol {
            break;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrant_halves_partition_the_stencil() {
        let shape = GridShape::unit(&[3, 3]).unwrap();
        let stencil = Stencil::new(&shape, Connectivity::Full);
        for dir in quadrant_directions() {
            let fwd = scan_causal(&stencil.offsets, dir);
            let bwd = scan_causal(&stencil.offsets, [-dir[0], -dir[1], -dir[2]]);
            assert_eq!(fwd.len(), 4);
            assert_eq!(bwd.len(), 4);
        }
    }

    #[test]
    fn plane_sweeps_cover_each_offset_once_per_moving_axis() {
        let shape = GridShape::unit(&[3, 4, 5]).unwrap();
        for (conn, per_plane) in [(Connectivity::Full, 9), (Connectivity::FacesOnly, 1)] {
            let stencil = Stencil::new(&shape, conn);
            let sweeps = plan(&stencil, 3, 0.5);
            assert_eq!(sweeps.len(), 6);
            for sw in &sweeps {
                assert_eq!(sw.causal.len(), per_plane);
            }
            for off in &stencil.offsets {
                let hits = sweeps
                    .iter()
                    .flat_map(|sw| &sw.causal)
                    .filter(|c| c.delta == off.delta)
                    .count();
                let moving = off.delta.iter().filter(|&&d| d != 0).count();
                assert_eq!(hits, moving, "{:?}", off.delta);
            }
        }
    }

    #[test]
    fn flat_offsets_match_shift() {
        let shape = GridShape::unit(&[4, 5, 6]).unwrap();
        let stencil = Stencil::new(&shape, Connectivity::Full);
        let centre = [2, 2, 3];
        let i = (2 * 5 + 2) * 6 + 3;
        for sw in plan(&stencil, 3, 0.5) {
            for c in &sw.causal {
                let j = stencil.shift(centre, c.delta).unwrap();
                assert_eq!(j as isize, i as isize + c.flat);
            }
        }
    }

    #[test]
    fn sweep_counts() {
        let flat = GridShape::unit(&[3, 3]).unwrap();
        let vol = GridShape::unit(&[3, 3, 3]).unwrap();
        assert_eq!(plan(&Stencil::new(&flat, Connectivity::Full), 2, 0.5).len(), 4);
        assert_eq!(plan(&Stencil::new(&vol, Connectivity::Full), 3, 0.5).len(), 6);
    }

    #[test]
    fn zero_passes_rejected() {
        assert!(RasterConfig::with_passes(0).validate().is_err());
        assert!(RasterConfig {
            max_passes: 1,
            convergence_tol: -1.0
        }
        .validate()
        .is_err());
    }
}
