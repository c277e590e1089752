//! Planar primitives shared by the grid, the roadmap and the planners.
//!
//! Cell `(col, row)` covers the closed square `[col, col+1] x [row, row+1]`;
//! its center is `(col + 0.5, row + 0.5)`. The origin is the top-left corner
//! and rows grow downwards.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: i32,
    pub row: i32,
}

impl Cell {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }

    pub fn center(self) -> Point {
        Point::new(self.col as f64 + 0.5, self.row as f64 + 0.5)
    }

    /// The 4-connected neighbours, in (up, left, right, down) order.
    pub fn neighbors4(self) -> [Cell; 4] {
        [
            Cell::new(self.col, self.row - 1),
            Cell::new(self.col - 1, self.row),
            Cell::new(self.col + 1, self.row),
            Cell::new(self.col, self.row + 1),
        ]
    }

    /// The 8-connected neighbours in row-major order.
    pub fn neighbors8(self) -> [Cell; 8] {
        let (c, r) = (self.col, self.row);
        [
            Cell::new(c - 1, r - 1),
            Cell::new(c, r - 1),
            Cell::new(c + 1, r - 1),
            Cell::new(c - 1, r),
            Cell::new(c + 1, r),
            Cell::new(c - 1, r + 1),
            Cell::new(c, r + 1),
            Cell::new(c + 1, r + 1),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn cell(self) -> Cell {
        Cell::new(self.x.floor() as i32, self.y.floor() as i32)
    }

    pub fn distance(self, other: Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// Walks every cell the segment `origin + t * dir`, `t in [0, t_max]`, touches,
/// in order of first contact.
///
/// Cells are closed squares, so a segment passing exactly through a grid corner
/// touches the two side cells as well as the diagonal one. The side cells are
/// reported first, ordered by `(row, col)`. Cells outside any map are reported
/// too; bounds are the caller's business.
///
/// Returns `true` when the walk reached `t_max` without the visitor breaking.
pub fn walk_segment<F>(origin: Point, dir: (f64, f64), t_max: f64, mut visit: F) -> bool
where
    F: FnMut(Cell) -> ControlFlow<()>,
{
    let (dx, dy) = dir;
    let mut cx = origin.x.floor() as i32;
    let mut cy = origin.y.floor() as i32;
    let sx = if dx > 0.0 { 1 } else { -1 };
    let sy = if dy > 0.0 { 1 } else { -1 };

    if visit(Cell::new(cx, cy)).is_break() {
        return false;
    }
    loop {
        let tx = crossing(origin.x, dx, cx);
        let ty = crossing(origin.y, dy, cy);
        let t = tx.min(ty);
        if !(t <= t_max) {
            return true;
        }
        if tx < ty {
            cx += sx;
        } else if ty < tx {
            cy += sy;
        } else {
            let a = Cell::new(cx + sx, cy);
            let b = Cell::new(cx, cy + sy);
            let (first, second) = if (a.row, a.col) <= (b.row, b.col) {
                (a, b)
            } else {
                (b, a)
            };
            if visit(first).is_break() || visit(second).is_break() {
                return false;
            }
            cx += sx;
            cy += sy;
        }
        if visit(Cell::new(cx, cy)).is_break() {
            return false;
        }
    }
}

/// Parameter at which the ray leaves cell index `c` along one axis.
#[inline]
fn crossing(o: f64, d: f64, c: i32) -> f64 {
    if d > 0.0 {
        ((c + 1) as f64 - o) / d
    } else if d < 0.0 {
        (c as f64 - o) / d
    } else {
        f64::INFINITY
    }
}

/// Walks the cells touched by the straight segment `a -> b`.
pub fn walk_between<F>(a: Point, b: Point, visit: F) -> bool
where
    F: FnMut(Cell) -> ControlFlow<()>,
{
    walk_segment(a, (b.x - a.x, b.y - a.y), 1.0, visit)
}

/// All cells touched by the segment `a -> b`, in traversal order.
pub fn segment_cells(a: Point, b: Point) -> Vec<Cell> {
    let mut out = Vec::new();
    walk_between(a, b, |c| {
        out.push(c);
        ControlFlow::Continue(())
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_segment_visits_single_cell() {
        let p = Point::new(3.5, 4.5);
        assert_eq!(segment_cells(p, p), vec![Cell::new(3, 4)]);
    }

    #[test]
    fn diagonal_through_corner_reports_side_cells() {
        let cells = segment_cells(Point::new(0.5, 0.5), Point::new(1.5, 1.5));
        assert_eq!(
            cells,
            vec![
                Cell::new(0, 0),
                Cell::new(1, 0),
                Cell::new(0, 1),
                Cell::new(1, 1)
            ]
        );
    }

    #[test]
    fn horizontal_segment_stays_in_row() {
        let cells = segment_cells(Point::new(0.5, 2.5), Point::new(4.5, 2.5));
        assert_eq!(cells.len(), 5);
        assert!(cells.iter().all(|c| c.row == 2));
    }

    #[test]
    fn reverse_walk_touches_same_cells() {
        let a = Point::new(0.5, 0.5);
        let b = Point::new(7.5, 3.5);
        let mut fwd = segment_cells(a, b);
        let mut back = segment_cells(b, a);
        fwd.sort();
        back.sort();
        assert_eq!(fwd, back);
    }
}
