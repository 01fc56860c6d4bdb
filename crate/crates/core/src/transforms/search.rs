use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::step_cost;
use crate::grid::{Connectivity, GridShape, Stencil};

/// Min-heap entry ordered by cost, then index.
#[derive(Clone, Copy, Debug)]
struct Frontier {
    cost: f64,
    index: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

pub(super) fn shortest_paths(
    shape: &GridShape,
    intensities: &[f64],
    sources: &[usize],
    connectivity: Connectivity,
    mix: f64,
) -> Vec<f64> {
    let stencil = Stencil::new(shape, connectivity);
    let mut dist = vec![f64::INFINITY; shape.len()];
    let mut settled = vec![false; shape.len()];
    let mut heap = BinaryHeap::with_capacity(sources.len() * 4);
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Frontier { cost: 0.0, index: s });
    }
    while let Some(Frontier { cost, index }) = heap.pop() {
        if settled[index] {
            continue;
        }
        settled[index] = true;
        let here = intensities[index];
        stencil.for_each_neighbor(shape.coord3(index), |j, step| {
            if settled[j] {
                return;
            }
            let candidate = cost + step_cost(here, intensities[j], step, mix);
            if candidate < dist[j] {
                dist[j] = candidate;
                heap.push(Frontier {
                    cost: candidate,
                    index: j,
                });
            }
        });
    }
    dist
}

#[derive(Clone, Copy, Debug)]
struct BarrierState {
    cost: f64,
    index: usize,
    high: f64,
    low: f64,
}

impl PartialEq for BarrierState {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for BarrierState {}

impl PartialOrd for BarrierState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BarrierState {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
            .then_with(|| other.high.total_cmp(&self.high))
            .then_with(|| self.low.total_cmp(&other.low))
    }
}

/// Best-first propagation of path intervals `(max I, min I)` with priority
/// `max - min`. Each voxel keeps the first interval that settles it.
pub(super) fn minimum_barrier(
    shape: &GridShape,
    intensities: &[f64],
    sources: &[usize],
    connectivity: Connectivity,
) -> Vec<f64> {
    let stencil = Stencil::new(shape, connectivity);
    let mut best = vec![f64::INFINITY; shape.len()];
    let mut settled = vec![false; shape.len()];
    let mut heap = BinaryHeap::with_capacity(sources.len() * 4);
    for &s in sources {
        best[s] = 0.0;
        heap.push(BarrierState {
            cost: 0.0,
            index: s,
            high: intensities[s],
            low: intensities[s],
        });
    }
    while let Some(state) = heap.pop() {
        if settled[state.index] {
            continue;
        }
        settled[state.index] = true;
        stencil.for_each_neighbor(shape.coord3(state.index), |j, _| {
            if settled[j] {
                return;
            }
            let high = state.high.max(intensities[j]);
            let low = state.low.min(intensities[j]);
            let cost = high - low;
            if cost < best[j] {
                best[j] = cost;
                heap.push(BarrierState {
                    cost,
                    index: j,
                    high,
                    low,
                });
            }
        });
    }
    best
}
