//! Ground-truth environments, the robot's partial occupancy map, the
//! raycasting sensor and map updates along robot motion.

mod generator;
mod io;

pub use generator::{count_rooms, generate_dungeon, GenParams, MapGenConfig, Tier, TierParams};

use std::collections::VecDeque;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{walk_between, walk_segment, Cell, Point};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("point ({x}, {y}) is outside the {width}x{height} map")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("ray origin ({x}, {y}) lies inside an obstacle")]
    OriginInObstacle { x: f64, y: f64 },
    #[error("map dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("segment ({0:?}) -> ({1:?}) crosses a cell that is not known free")]
    SegmentBlocked(Point, Point),
    #[error("map generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },
    #[error("grid file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Terrain {
    Free,
    Obstacle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Occupancy {
    Unknown,
    Free,
    Occupied,
}

/// Immutable ground truth. Built once, shared freely between environments.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthMap {
    width: usize,
    height: usize,
    cells: Vec<Terrain>,
    start: Cell,
    closure: Vec<bool>,
    explorable_count: usize,
    room_labels: Option<Vec<u16>>,
}

impl GroundTruthMap {
    /// Builds a map and its explorable closure: free cells 8-reachable from
    /// `start` plus the obstacle cells 8-adjacent to that region.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<Terrain>,
        start: Cell,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(GridError::InvalidConfig(format!(
                "{} cells for a {width}x{height} map",
                cells.len()
            )));
        }
        let mut map = Self {
            width,
            height,
            cells,
            start,
            closure: Vec::new(),
            explorable_count: 0,
            room_labels: None,
        };
        let p = start.center();
        if !map.contains(start) {
            return Err(map.out_of_bounds(p));
        }
        if map.terrain(start) != Terrain::Free {
            return Err(GridError::OriginInObstacle { x: p.x, y: p.y });
        }
        map.compute_closure();
        Ok(map)
    }

    /// Same terrain with a different start cell (closure recomputed).
    pub fn with_start(&self, start: Cell) -> Result<Self, GridError> {
        let mut map = Self::new(self.width, self.height, self.cells.clone(), start)?;
        map.room_labels = self.room_labels.clone();
        Ok(map)
    }

    pub(crate) fn with_room_labels(mut self, labels: Vec<u16>) -> Self {
        debug_assert_eq!(labels.len(), self.cells.len());
        self.room_labels = Some(labels);
        self
    }

    fn compute_closure(&mut self) {
        let reach = self.reachable_free(self.start);
        let mut closure = reach.clone();
        for (i, &r) in reach.iter().enumerate() {
            if !r {
                continue;
            }
            for n in self.cell_at(i).neighbors8() {
                if let Some(j) = self.index(n) {
                    if self.cells[j] == Terrain::Obstacle {
                        closure[j] = true;
                    }
                }
            }
        }
        self.explorable_count = closure.iter().filter(|&&c| c).count();
        self.closure = closure;
    }

    /// Free cells 8-reachable from `from`.
    pub fn reachable_free(&self, from: Cell) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        let Some(s) = self.index(from) else {
            return seen;
        };
        if self.cells[s] != Terrain::Free {
            return seen;
        }
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(i) = queue.pop_front() {
            for n in self.cell_at(i).neighbors8() {
                if let Some(j) = self.index(n) {
                    if !seen[j] && self.cells[j] == Terrain::Free {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        seen
    }

    /// Number of 8-connected components of free cells.
    pub fn free_component_count(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut count = 0;
        for i in 0..self.cells.len() {
            if seen[i] || self.cells[i] != Terrain::Free {
                continue;
            }
            count += 1;
            let comp = self.reachable_free(self.cell_at(i));
            for (s, c) in seen.iter_mut().zip(comp) {
                *s |= c;
            }
        }
        count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn explorable_count(&self) -> usize {
        self.explorable_count
    }

    pub fn in_closure(&self, cell: Cell) -> bool {
        self.index(cell).is_some_and(|i| self.closure[i])
    }

    /// Per-cell room ids emitted by the generator (0 = not a room cell).
    pub fn room_labels(&self) -> Option<&[u16]> {
        self.room_labels.as_deref()
    }

    pub fn terrain(&self, cell: Cell) -> Terrain {
        self.index(cell)
            .map(|i| self.cells[i])
            .unwrap_or(Terrain::Obstacle)
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.terrain(cell) == Terrain::Free
    }

    pub fn cells(&self) -> &[Terrain] {
        &self.cells
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col >= 0
            && cell.row >= 0
            && (cell.col as usize) < self.width
            && (cell.row as usize) < self.height
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.contains(cell)
            .then(|| cell.row as usize * self.width + cell.col as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    fn out_of_bounds(&self, p: Point) -> GridError {
        GridError::OutOfBounds {
            x: p.x,
            y: p.y,
            width: self.width,
            height: self.height,
        }
    }

    fn check_origin(&self, origin: Point) -> Result<(), GridError> {
        let in_bounds = origin.x >= 0.0
            && origin.y >= 0.0
            && origin.x < self.width as f64
            && origin.y < self.height as f64;
        if !in_bounds {
            return Err(self.out_of_bounds(origin));
        }
        if !self.is_free(origin.cell()) {
            return Err(GridError::OriginInObstacle {
                x: origin.x,
                y: origin.y,
            });
        }
        Ok(())
    }
}

/// How a ray ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitKind {
    Obstacle,
    MaxRange,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayTrace {
    /// In-bounds cells in traversal order; an obstacle hit is the last one.
    pub cells: Vec<Cell>,
    pub hit: HitKind,
}

/// Casts a ray from `origin` at `angle` (radians, measured from +x towards +y)
/// up to `range` cells.
pub fn raycast(
    truth: &GroundTruthMap,
    origin: Point,
    angle: f64,
    range: f64,
) -> Result<RayTrace, GridError> {
    let mut cells = Vec::new();
    let hit = cast_with(truth, origin, angle, range, |c, _| cells.push(c))?;
    Ok(RayTrace { cells, hit })
}

/// Non-allocating raycast; `visit` receives each in-bounds cell and whether it
/// is an obstacle.
pub fn cast_with<F>(
    truth: &GroundTruthMap,
    origin: Point,
    angle: f64,
    range: f64,
    mut visit: F,
) -> Result<HitKind, GridError>
where
    F: FnMut(Cell, bool),
{
    truth.check_origin(origin)?;
    let mut hit = HitKind::MaxRange;
    let dir = (angle.cos(), angle.sin());
    walk_segment(origin, dir, range.max(0.0), |c| {
        let Some(i) = truth.index(c) else {
            hit = HitKind::Boundary;
            return ControlFlow::Break(());
        };
        let blocked = truth.cells[i] == Terrain::Obstacle;
        visit(c, blocked);
        if blocked {
            hit = HitKind::Obstacle;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    Ok(hit)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Sensing radius in cells.
    pub range: f64,
    pub ray_count: usize,
    /// Maximum travel between two sweeps during motion, in cells.
    pub update_stride: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range: 80.0,
            ray_count: 360,
            update_stride: 5.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.range > 0.0) || self.ray_count < 4 || !(self.update_stride > 0.0) {
            return Err(GridError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// The robot's occupancy grid. Cells only ever move out of `Unknown`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialMap {
    width: usize,
    height: usize,
    cells: Vec<Occupancy>,
    known: usize,
}

impl PartialMap {
    pub fn unknown(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![Occupancy::Unknown; width * height],
            known: 0,
        }
    }

    pub fn for_truth(truth: &GroundTruthMap) -> Self {
        Self::unknown(truth.width, truth.height)
    }

    /// A partial map with the given row-major occupancy.
    pub fn from_cells(width: usize, height: usize, cells: Vec<Occupancy>) -> Self {
        let known = cells.iter().filter(|&&c| c != Occupancy::Unknown).count();
        Self {
            width,
            height,
            cells,
            known,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn known_count(&self) -> usize {
        self.known
    }

    pub fn cells(&self) -> &[Occupancy] {
        &self.cells
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col >= 0
            && cell.row >= 0
            && (cell.col as usize) < self.width
            && (cell.row as usize) < self.height
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.contains(cell)
            .then(|| cell.row as usize * self.width + cell.col as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    /// Out-of-bounds cells read as `Unknown`.
    pub fn get(&self, cell: Cell) -> Occupancy {
        self.index(cell)
            .map(|i| self.cells[i])
            .unwrap_or(Occupancy::Unknown)
    }

    pub fn is_known_free(&self, cell: Cell) -> bool {
        self.get(cell) == Occupancy::Free
    }

    /// Classifies an unknown cell from ground truth; returns whether it was new.
    fn classify(&mut self, index: usize, terrain: Terrain) -> bool {
        if self.cells[index] != Occupancy::Unknown {
            return false;
        }
        self.cells[index] = match terrain {
            Terrain::Free => Occupancy::Free,
            Terrain::Obstacle => Occupancy::Occupied,
        };
        self.known += 1;
        true
    }

    /// True iff every cell touched by segment `a -> b` is known free.
    pub fn segment_known_free(&self, a: Point, b: Point) -> bool {
        walk_between(a, b, |c| {
            if self.is_known_free(c) {
                ControlFlow::Continue(())
            } else {
                ControlFlow::Break(())
            }
        })
    }

    /// Marks every cell of the explorable closure as sensed (test and tooling helper).
    pub fn reveal_closure(&mut self, truth: &GroundTruthMap) {
        for i in 0..self.cells.len() {
            if truth.closure[i] {
                self.classify(i, truth.cells[i]);
            }
        }
    }

    /// Marks every cell as sensed.
    pub fn reveal_all(&mut self, truth: &GroundTruthMap) {
        for i in 0..self.cells.len() {
            self.classify(i, truth.cells[i]);
        }
    }

    #[cfg(test)]
    pub(crate) fn set_cell(&mut self, cell: Cell, terrain: Terrain) -> bool {
        match self.index(cell) {
            Some(i) => self.classify(i, terrain),
            None => false,
        }
    }
}

fn check_dims(partial: &PartialMap, truth: &GroundTruthMap) -> Result<(), GridError> {
    if partial.width != truth.width || partial.height != truth.height {
        return Err(GridError::DimensionMismatch(
            partial.width,
            partial.height,
            truth.width,
            truth.height,
        ));
    }
    Ok(())
}

/// One 360 degree sweep at `pose`. Cells whose center lies within the sensor
/// range and that some ray reaches are classified from ground truth. Returns
/// the number of cells that left `Unknown`.
pub fn sense_and_update(
    partial: &mut PartialMap,
    truth: &GroundTruthMap,
    pose: Point,
    sensor: &SensorConfig,
) -> Result<usize, GridError> {
    check_dims(partial, truth)?;
    sensor.validate()?;
    truth.check_origin(pose)?;
    let range_sq = sensor.range * sensor.range + 1e-9;
    let step = std::f64::consts::TAU / sensor.ray_count as f64;
    let mut newly = 0;
    for k in 0..sensor.ray_count {
        let angle = step * k as f64;
        cast_with(truth, pose, angle, sensor.range, |c, _| {
            if c.center().distance_sq(pose) <= range_sq {
                let i = c.row as usize * truth.width + c.col as usize;
                if partial.classify(i, truth.cells[i]) {
                    newly += 1;
                }
            }
        })?;
    }
    Ok(newly)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraversalReport {
    pub length: f64,
    pub sweeps: usize,
    pub newly_classified: usize,
}

/// Sweep positions along `from -> to`: equally spaced, at most `stride`
/// apart, both endpoints included.
pub fn sweep_points(from: Point, to: Point, stride: f64) -> Vec<Point> {
    let length = from.distance(to);
    let n = (length / stride - 1e-9).ceil().max(0.0) as usize;
    if n == 0 {
        return vec![from];
    }
    (0..=n)
        .map(|i| from.lerp(to, i as f64 / n as f64))
        .collect()
}

/// Moves along a straight, known-free segment and senses every
/// `update_stride` cells, endpoints included.
pub fn traverse_and_sense(
    partial: &mut PartialMap,
    truth: &GroundTruthMap,
    from: Point,
    to: Point,
    sensor: &SensorConfig,
) -> Result<TraversalReport, GridError> {
    check_dims(partial, truth)?;
    sensor.validate()?;
    if !partial.segment_known_free(from, to) {
        return Err(GridError::SegmentBlocked(from, to));
    }
    let points = sweep_points(from, to, sensor.update_stride);
    let mut newly = 0;
    for &p in &points {
        newly += sense_and_update(partial, truth, p, sensor)?;
    }
    Ok(TraversalReport {
        length: from.distance(to),
        sweeps: points.len(),
        newly_classified: newly,
    })
}

/// Fraction of the explorable closure that is known.
pub fn exploration_rate(partial: &PartialMap, truth: &GroundTruthMap) -> Result<f64, GridError> {
    check_dims(partial, truth)?;
    if truth.explorable_count == 0 {
        return Ok(0.0);
    }
    let known = partial
        .cells
        .iter()
        .zip(&truth.closure)
        .filter(|(&c, &inside)| inside && c != Occupancy::Unknown)
        .count();
    Ok(known as f64 / truth.explorable_count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn open_map(w: usize, h: usize) -> GroundTruthMap {
        GroundTruthMap::new(w, h, vec![Terrain::Free; w * h], Cell::new(0, 0)).unwrap()
    }

    fn map_from(rows: &[&str]) -> GroundTruthMap {
        let h = rows.len();
        let w = rows[0].len();
        let mut cells = Vec::new();
        let mut start = None;
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                cells.push(if ch == '#' {
                    Terrain::Obstacle
                } else {
                    Terrain::Free
                });
                if ch == 'S' {
                    start = Some(Cell::new(c as i32, r as i32));
                }
            }
        }
        GroundTruthMap::new(w, h, cells, start.unwrap_or(Cell::new(0, 0))).unwrap()
    }

    #[test]
    fn empty_map_ray_hits_max_range() {
        let m = open_map(100, 100);
        for k in 0..36 {
            let angle = k as f64 * 10f64.to_radians();
            let r = raycast(&m, Point::new(50.5, 50.5), angle, 10.0).unwrap();
            assert_eq!(r.hit, HitKind::MaxRange);
        }
    }

    #[test]
    fn ray_stops_at_obstacle_cell() {
        let mut cells = vec![Terrain::Free; 25];
        cells[2 * 5 + 2] = Terrain::Obstacle;
        let m = GroundTruthMap::new(5, 5, cells, Cell::new(0, 0)).unwrap();
        let angle = (2.0f64).atan2(2.0);
        let r = raycast(&m, Point::new(0.5, 0.5), angle, 10.0).unwrap();
        assert_eq!(r.hit, HitKind::Obstacle);
        assert_eq!(*r.cells.last().unwrap(), Cell::new(2, 2));
    }

    #[test]
    fn zero_range_ray_is_origin_only() {
        let m = open_map(10, 10);
        let r = raycast(&m, Point::new(4.5, 4.5), 1.0, 0.0).unwrap();
        assert_eq!(r.cells, vec![Cell::new(4, 4)]);
        assert_eq!(r.hit, HitKind::MaxRange);
    }

    #[test]
    fn ray_leaving_map_reports_boundary() {
        let m = open_map(10, 10);
        let r = raycast(&m, Point::new(4.5, 4.5), 0.0, 50.0).unwrap();
        assert_eq!(r.hit, HitKind::Boundary);
        assert_eq!(*r.cells.last().unwrap(), Cell::new(9, 4));
    }

    #[test]
    fn raycast_preconditions() {
        let m = map_from(&["S.#", "..."]);
        assert!(matches!(
            raycast(&m, Point::new(2.5, 0.5), 0.0, 3.0),
            Err(GridError::OriginInObstacle { .. })
        ));
        assert!(matches!(
            raycast(&m, Point::new(-1.0, 0.5), 0.0, 3.0),
            Err(GridError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn closure_excludes_unreachable_pocket() {
        let m = map_from(&[
            "S..#...", //
            "...#.#.", //
            "...#...", //
        ]);
        // reachable: 9 free cells, bounding obstacles: the 3 in column 3.
        assert_eq!(m.explorable_count(), 12);
        assert!(!m.in_closure(Cell::new(4, 0)));
        assert!(!m.in_closure(Cell::new(5, 1)));
    }

    #[test]
    fn fully_known_map_classifies_nothing() {
        let m = open_map(20, 20);
        let mut p = PartialMap::for_truth(&m);
        p.reveal_all(&m);
        let s = SensorConfig {
            range: 8.0,
            ray_count: 64,
            update_stride: 2.0,
        };
        assert_eq!(
            sense_and_update(&mut p, &m, Point::new(10.5, 10.5), &s).unwrap(),
            0
        );
    }

    #[test]
    fn second_sweep_at_same_pose_is_idempotent() {
        let m = map_from(&[
            "S.........", //
            "...##.....", //
            "...##.....", //
            "..........", //
        ]);
        let mut p = PartialMap::for_truth(&m);
        let s = SensorConfig {
            range: 6.0,
            ray_count: 256,
            update_stride: 1.0,
        };
        let first = sense_and_update(&mut p, &m, Point::new(0.5, 0.5), &s).unwrap();
        assert!(first > 0);
        assert_eq!(
            sense_and_update(&mut p, &m, Point::new(0.5, 0.5), &s).unwrap(),
            0
        );
    }

    #[test]
    fn sweep_point_counts() {
        let a = Point::new(0.5, 0.5);
        assert_eq!(sweep_points(a, a, 8.0).len(), 1);
        assert_eq!(sweep_points(a, Point::new(64.5, 0.5), 8.0).len(), 9);
        assert_eq!(sweep_points(a, Point::new(65.5, 0.5), 8.0).len(), 10);
    }

    #[test]
    fn degenerate_traversal() {
        let m = open_map(20, 20);
        let mut p = PartialMap::for_truth(&m);
        let s = SensorConfig {
            range: 5.0,
            ray_count: 64,
            update_stride: 2.0,
        };
        let at = Point::new(10.5, 10.5);
        sense_and_update(&mut p, &m, at, &s).unwrap();
        let rep = traverse_and_sense(&mut p, &m, at, at, &s).unwrap();
        assert_eq!(rep.length, 0.0);
        assert_eq!(rep.sweeps, 1);
    }

    #[test]
    fn traversal_through_unknown_is_rejected() {
        let m = open_map(20, 20);
        let mut p = PartialMap::for_truth(&m);
        let err = traverse_and_sense(
            &mut p,
            &m,
            Point::new(1.5, 1.5),
            Point::new(10.5, 1.5),
            &SensorConfig::default(),
        );
        assert!(matches!(err, Err(GridError::SegmentBlocked(..))));
    }

    #[test]
    fn exploration_rate_counts_closure_cells() {
        // An 8x4 reachable block inside its obstacle frame gives a 10x6 = 60
        // cell closure; the pocket below the frame is unreachable.
        let m = map_from(&[
            "##########",
            "#S.......#",
            "#........#",
            "#........#",
            "#........#",
            "##########",
            "#..#...#.#",
            "#.##..##.#",
            "#..#...#.#",
            "##########",
        ]);
        assert_eq!(m.explorable_count(), 60);
        let mut p = PartialMap::for_truth(&m);
        assert_eq!(exploration_rate(&p, &m).unwrap(), 0.0);
        let closure: Vec<Cell> = (0..100)
            .map(|i| m.cell_at(i))
            .filter(|&c| m.in_closure(c))
            .collect();
        assert_eq!(closure.len(), 60);
        for c in closure.iter().take(30) {
            p.set_cell(*c, m.terrain(*c));
        }
        // known cells outside the closure do not count
        p.set_cell(Cell::new(1, 6), Terrain::Free);
        assert_eq!(exploration_rate(&p, &m).unwrap(), 0.5);
        p.reveal_closure(&m);
        assert_eq!(exploration_rate(&p, &m).unwrap(), 1.0);
        let other = PartialMap::unknown(5, 5);
        assert!(exploration_rate(&other, &m).is_err());
    }
}
