//! Frontier extraction and observable-frontier utilities.

use crate::geometry::{Cell, Point};
use crate::gridmap::{Occupancy, PartialMap};

/// Known-free cells with at least one unknown 4-neighbour, in row-major order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrontierSet {
    cells: Vec<Cell>,
}

impl FrontierSet {
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.cells
            .binary_search_by_key(&(cell.row, cell.col), |c| (c.row, c.col))
            .is_ok()
    }
}

pub fn is_frontier(partial: &PartialMap, cell: Cell) -> bool {
    partial.get(cell) == Occupancy::Free
        && cell
            .neighbors4()
            .iter()
            .any(|&n| partial.contains(n) && partial.get(n) == Occupancy::Unknown)
}

pub fn detect_frontiers(partial: &PartialMap) -> FrontierSet {
    let cells = (0..partial.cells().len())
        .map(|i| partial.cell_at(i))
        .filter(|&c| is_frontier(partial, c))
        .collect();
    FrontierSet { cells }
}

/// True iff every cell touched by segment `a -> b` is known free.
pub fn line_of_sight(partial: &PartialMap, a: Point, b: Point) -> bool {
    partial.segment_known_free(a, b)
}

/// Number of frontier cells within `range` of `node` (center to center) and
/// in line of sight of it.
pub fn node_utility(partial: &PartialMap, frontiers: &FrontierSet, node: Point, range: f64) -> u32 {
    visible_frontiers(partial, frontiers, node, range).count() as u32
}

/// Indices (into [`FrontierSet::cells`]) of the frontier cells counted by
/// [`node_utility`].
pub fn visible_frontiers<'a>(
    partial: &'a PartialMap,
    frontiers: &'a FrontierSet,
    node: Point,
    range: f64,
) -> impl Iterator<Item = usize> + 'a {
    let range_sq = range * range + 1e-9;
    let r = range.ceil() as i32;
    let row = node.y.floor() as i32;
    let lo = frontiers.cells.partition_point(|c| c.row < row - r);
    let hi = frontiers.cells.partition_point(|c| c.row <= row + r);
    (lo..hi).filter(move |&i| {
        let c = frontiers.cells[i].center();
        c.distance_sq(node) <= range_sq && line_of_sight(partial, node, c)
    })
}

/// Utilities for many nodes. Inactive nodes (not in known free space) get 0.
pub fn utilities(
    partial: &PartialMap,
    frontiers: &FrontierSet,
    nodes: &[Point],
    range: f64,
) -> Vec<u32> {
    nodes
        .iter()
        .map(|&p| {
            if partial.is_known_free(p.cell()) {
                node_utility(partial, frontiers, p, range)
            } else {
                0
            }
        })
        .collect()
}

/// Recomputes utilities only for nodes that a change confined to `changed`
/// (inclusive cell bounding box, `(min, max)`) can affect: nodes within
/// `range + 2` cells of the box. Frontier membership changes at most one cell
/// away from a newly classified cell, and a line of sight can only open
/// through a newly classified cell lying within `range` of the node.
pub fn update_utilities(
    utilities: &mut [u32],
    partial: &PartialMap,
    frontiers: &FrontierSet,
    nodes: &[Point],
    range: f64,
    changed: (Cell, Cell),
) {
    let (lo, hi) = changed;
    let margin = range + 2.0;
    for (u, &p) in utilities.iter_mut().zip(nodes) {
        let dx = (lo.col as f64 - p.x)
            .max(p.x - (hi.col + 1) as f64)
            .max(0.0);
        let dy = (lo.row as f64 - p.y)
            .max(p.y - (hi.row + 1) as f64)
            .max(0.0);
        if dx * dx + dy * dy > margin * margin {
            continue;
        }
        *u = if partial.is_known_free(p.cell()) {
            node_utility(partial, frontiers, p, range)
        } else {
            0
        };
    }
}
