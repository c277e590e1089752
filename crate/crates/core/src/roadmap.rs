//! Fixed viewpoint lattice, the collision-free graph over known free space,
//! node feature augmentation and shortest paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontier::line_of_sight;
use crate::geometry::{Cell, Point};
use crate::gridmap::PartialMap;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("cannot lay out {count} lattice points on a {width}x{height} map: {reason}")]
    Lattice {
        count: usize,
        width: usize,
        height: usize,
        reason: String,
    },
    #[error("node {0} is not active")]
    Inactive(usize),
    #[error("node index {0} out of range")]
    OutOfRange(usize),
}

/// Regular grid of candidate viewpoints covering the map with equal margins.
/// Each point sits at the center of the cell containing the ideal grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeLattice {
    pub width: usize,
    pub height: usize,
    pub rows: usize,
    pub cols: usize,
    points: Vec<Point>,
}

impl NodeLattice {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn cell(&self, i: usize) -> Cell {
        self.points[i].cell()
    }

    /// Mean spacing between adjacent points along x and y.
    pub fn spacing(&self) -> (f64, f64) {
        (
            self.width as f64 / self.cols as f64,
            self.height as f64 / self.rows as f64,
        )
    }
}

/// Picks the most square `rows x cols` factorization of `count`; ties put
/// the larger factor along the longer map side.
fn factorize(count: usize, width: usize, height: usize) -> Option<(usize, usize)> {
    (1..=count)
        .filter(|r| count % r == 0)
        .map(|r| (r, count / r))
        .filter(|&(r, c)| r >= 2 && c >= 2 && r <= height && c <= width)
        .min_by_key(|&(r, c)| {
            let wrong_way = (r > c) != (height > width) && r != c;
            (r.abs_diff(c), wrong_way)
        })
}

pub fn build_lattice(width: usize, height: usize, count: usize) -> Result<NodeLattice, GraphError> {
    let (rows, cols) = factorize(count, width, height).ok_or_else(|| GraphError::Lattice {
        count,
        width,
        height,
        reason: "no rows x cols factorization with both sides >= 2 fits the map".into(),
    })?;
    let sx = width as f64 / cols as f64;
    let sy = height as f64 / rows as f64;
    let points = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            Point::new((c as f64 + 0.5) * sx, (r as f64 + 0.5) * sy)
                .cell()
                .center()
        })
        .collect();
    Ok(NodeLattice {
        width,
        height,
        rows,
        cols,
        points,
    })
}

/// Undirected roadmap over the active lattice points. Indices are lattice
/// indices; inactive nodes have no edges.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionFreeGraph {
    active: Vec<bool>,
    adjacency: Vec<Vec<usize>>,
    k: usize,
}

impl CollisionFreeGraph {
    pub fn is_active(&self, i: usize) -> bool {
        self.active.get(i).copied().unwrap_or(false)
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Sorted neighbour list.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|n| n.binary_search(&b).is_ok())
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Connected components over active nodes; returns a component id per
    /// lattice index (`usize::MAX` for inactive nodes) and the count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut comp = vec![usize::MAX; self.active.len()];
        let mut n = 0;
        for s in self.active_nodes() {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = n;
            while let Some(v) = stack.pop() {
                for &w in &self.adjacency[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = n;
                        stack.push(w);
                    }
                }
            }
            n += 1;
        }
        (comp, n)
    }
}

/// The `k` nearest active nodes to `i` (Euclidean, ties by index).
pub fn k_nearest(lattice: &NodeLattice, active: &[usize], i: usize, k: usize) -> Vec<usize> {
    let p = lattice.point(i);
    let mut cand: Vec<(f64, usize)> = active
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| (p.distance_sq(lattice.point(j)), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cand.len() > k {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Active nodes are lattice points in known-free cells. Each proposes edges
/// to its `k` nearest active neighbours; an edge survives if its segment only
/// touches known-free cells, and the result is the union of both directions.
pub fn rebuild_graph(partial: &PartialMap, lattice: &NodeLattice, k: usize) -> CollisionFreeGraph {
    let n = lattice.len();
    let active: Vec<bool> = (0..n)
        .map(|i| partial.is_known_free(lattice.cell(i)))
        .collect();
    let active_ids: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &i in &active_ids {
        for j in k_nearest(lattice, &active_ids, i, k) {
            if adjacency[i].contains(&j) {
                continue;
            }
            if line_of_sight(partial, lattice.point(i), lattice.point(j)) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    CollisionFreeGraph {
        active,
        adjacency,
        k,
    }
}

/// How raw utilities are mapped into `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityScale {
    /// Divide by `max(1, max utility over active nodes)`.
    CurrentMax,
    /// Divide by a fixed cap and clamp.
    Fixed(f64),
}

/// The agent's observation graph: active nodes only, renumbered densely in
/// lattice order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedGraph {
    /// Lattice index of each dense node.
    pub node_ids: Vec<usize>,
    /// `(x, y, utility, visited)`, each in `[0, 1]`.
    pub features: Vec<[f32; 4]>,
    /// CSR row offsets into `targets` (length `len() + 1`).
    pub offsets: Vec<u32>,
    /// Dense neighbour indices, sorted within each row.
    pub targets: Vec<u32>,
    /// Dense index of the robot's node.
    pub current: u32,
}

impl AugmentedGraph {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn dense_index(&self, lattice_index: usize) -> Option<usize> {
        self.node_ids.binary_search(&lattice_index).ok()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn current_neighbors(&self) -> &[u32] {
        self.neighbors(self.current as usize)
    }
}

pub fn augment(
    graph: &CollisionFreeGraph,
    lattice: &NodeLattice,
    utilities: &[u32],
    visited: &[bool],
    current: usize,
    scale: UtilityScale,
) -> Result<AugmentedGraph, GraphError> {
    if current >= graph.len() {
        return Err(GraphError::OutOfRange(current));
    }
    if !graph.is_active(current) {
        return Err(GraphError::Inactive(current));
    }
    let node_ids: Vec<usize> = graph.active_nodes().collect();
    let norm = match scale {
        UtilityScale::CurrentMax => node_ids
            .iter()
            .map(|&i| utilities[i])
            .max()
            .unwrap_or(0)
            .max(1) as f64,
        UtilityScale::Fixed(cap) => cap.max(1e-12),
    };
    let (w, h) = (lattice.width as f64, lattice.height as f64);
    let features = node_ids
        .iter()
        .map(|&i| {
            let p = lattice.point(i);
            [
                (p.x / w) as f32,
                (p.y / h) as f32,
                (utilities[i] as f64 / norm).min(1.0) as f32,
                if visited[i] { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    let dense = |j: usize| node_ids.binary_search(&j).expect("neighbours are active") as u32;
    let mut offsets = Vec::with_capacity(node_ids.len() + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for &i in &node_ids {
        targets.extend(graph.neighbors(i).iter().map(|&j| dense(j)));
        offsets.push(targets.len() as u32);
    }
    let current = dense(current);
    Ok(AugmentedGraph {
        node_ids,
        features,
        offsets,
        targets,
        current,
    })
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    dist: f64,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest paths over the graph with Euclidean edge weights.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pred: Vec<usize>,
}

impl ShortestPaths {
    pub fn reachable(&self, b: usize) -> bool {
        self.dist.get(b).is_some_and(|d| d.is_finite())
    }

    /// Node sequence `source ..= b`, or `None` when unreachable.
    pub fn path_to(&self, b: usize) -> Option<Vec<usize>> {
        if !self.reachable(b) {
            return None;
        }
        let mut path = vec![b];
        let mut v = b;
        while v != self.source {
            v = self.pred[v];
            path.push(v);
        }
        path.reverse();
        Some(path)
    }

    /// Second node on the path to `b` (the first edge to execute).
    pub fn first_step(&self, b: usize) -> Option<usize> {
        self.path_to(b).and_then(|p| p.get(1).copied())
    }
}

/// Dijkstra from `source`. Pops ties in node-index order and only relaxes on
/// strict improvement, so the result is deterministic.
pub fn dijkstra(graph: &CollisionFreeGraph, lattice: &NodeLattice, source: usize) -> ShortestPaths {
    let n = graph.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    if graph.is_active(source) {
        dist[source] = 0.0;
        let mut heap = BinaryHeap::from([Queued {
            dist: 0.0,
            node: source,
        }]);
        while let Some(Queued { dist: d, node: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            let pv = lattice.point(v);
            for &w in graph.neighbors(v) {
                let nd = d + pv.distance(lattice.point(w));
                if nd < dist[w] {
                    dist[w] = nd;
                    pred[w] = v;
                    heap.push(Queued { dist: nd, node: w });
                }
            }
        }
    }
    ShortestPaths { source, dist, pred }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PathResult {
    Found { path: Vec<usize>, length: f64 },
    Unreachable,
}

/// Executed viewpoint sequence (lattice indices) and its length in cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub viewpoints: Vec<usize>,
    pub length: f64,
}

impl Trajectory {
    pub fn start(node: usize) -> Self {
        Self {
            viewpoints: vec![node],
            length: 0.0,
        }
    }

    pub fn push(&mut self, lattice: &NodeLattice, node: usize) {
        if let Some(&last) = self.viewpoints.last() {
            self.length += lattice.point(last).distance(lattice.point(node));
        }
        self.viewpoints.push(node);
    }
}

pub fn shortest_path(
    graph: &CollisionFreeGraph,
    lattice: &NodeLattice,
    a: usize,
    b: usize,
) -> Result<PathResult, GraphError> {
    for v in [a, b] {
        if v >= graph.len() {
            return Err(GraphError::OutOfRange(v));
        }
        if !graph.is_active(v) {
            return Err(GraphError::Inactive(v));
        }
    }
    let sp = dijkstra(graph, lattice, a);
    Ok(match sp.path_to(b) {
        Some(path) => PathResult::Found {
            path,
            length: sp.dist[b],
        },
        None => PathResult::Unreachable,
    })
}

/// Builds a graph from explicit edges (tests and tooling).
pub fn graph_from_edges(
    n: usize,
    active: &[usize],
    edges: &[(usize, usize)],
    k: usize,
) -> CollisionFreeGraph {
    let mut act = vec![false; n];
    for &i in active {
        act[i] = true;
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    for l in &mut adjacency {
        l.sort_unstable();
        l.dedup();
    }
    CollisionFreeGraph {
        active: act,
        adjacency,
        k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::{GroundTruthMap, PartialMap, Terrain};

    #[test]
    fn full_scale_lattice_is_thirty_by_thirty() {
        let l = build_lattice(640, 480, 900).unwrap();
        assert_eq!((l.rows, l.cols), (30, 30));
        let (sx, sy) = l.spacing();
        assert!((sx - 21.333).abs() < 1e-2 && (sy - 16.0).abs() < 1e-9);
        assert_eq!(l, build_lattice(640, 480, 900).unwrap());
    }

    #[test]
    fn four_points_sit_at_quarter_centers() {
        let l = build_lattice(100, 100, 4).unwrap();
        let pts: Vec<(f64, f64)> = l.points().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(
            pts,
            vec![(25.5, 25.5), (75.5, 25.5), (25.5, 75.5), (75.5, 75.5)]
        );
    }

    #[test]
    fn unfactorable_counts_are_rejected() {
        assert!(build_lattice(100, 100, 7).is_err());
        assert!(build_lattice(100, 100, 0).is_err());
        assert!(build_lattice(3, 3, 16).is_err());
        let l = build_lattice(320, 240, 12).unwrap();
        assert_eq!((l.rows, l.cols), (3, 4));
    }

    #[test]
    fn unknown_map_gives_empty_graph() {
        let l = build_lattice(40, 40, 16).unwrap();
        let g = rebuild_graph(&PartialMap::unknown(40, 40), &l, 5);
        assert_eq!(g.active_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn augment_normalizes_utilities_by_current_max() {
        let l = build_lattice(40, 40, 4).unwrap();
        let g4 = graph_from_edges(4, &[0, 1, 2], &[(0, 1), (1, 2)], 2);
        let a = augment(
            &g4,
            &l,
            &[2, 8, 4, 0],
            &[true, false, false, false],
            1,
            UtilityScale::CurrentMax,
        )
        .unwrap();
        let u: Vec<f32> = a.features.iter().map(|f| f[2]).collect();
        assert_eq!(u, vec![0.25, 1.0, 0.5]);
        assert_eq!(a.features[0][3], 1.0);
        assert_eq!(a.current, 1);
        let zero = augment(&g4, &l, &[0; 4], &[false; 4], 0, UtilityScale::CurrentMax).unwrap();
        assert!(zero.features.iter().all(|f| f[2] == 0.0));
        assert_eq!(
            augment(&g4, &l, &[0; 4], &[false; 4], 3, UtilityScale::CurrentMax),
            Err(GraphError::Inactive(3))
        );
    }

    #[test]
    fn corner_lattice_points_normalize_below_one() {
        let l = build_lattice(640, 480, 900).unwrap();
        let truth =
            GroundTruthMap::new(640, 480, vec![Terrain::Free; 640 * 480], Cell::new(0, 0)).unwrap();
        let mut p = PartialMap::for_truth(&truth);
        p.reveal_all(&truth);
        let g = rebuild_graph(&p, &l, 20);
        let last = l.len() - 1;
        let a = augment(
            &g,
            &l,
            &vec![0; l.len()],
            &vec![false; l.len()],
            last,
            UtilityScale::CurrentMax,
        )
        .unwrap();
        for f in &a.features {
            assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    /// Exhaustive enumeration of simple paths.
    fn brute_shortest(g: &CollisionFreeGraph, l: &NodeLattice, a: usize, b: usize) -> Option<f64> {
        fn go(
            g: &CollisionFreeGraph,
            l: &NodeLattice,
            v: usize,
            b: usize,
            seen: &mut Vec<bool>,
            acc: f64,
            best: &mut Option<f64>,
        ) {
            if v == b {
                if best.map_or(true, |x| acc < x) {
                    *best = Some(acc);
                }
                return;
            }
            for &w in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    go(
                        g,
                        l,
                        w,
                        b,
                        seen,
                        acc + l.point(v).distance(l.point(w)),
                        best,
                    );
                    seen[w] = false;
                }
            }
        }
        let mut seen = vec![false; g.len()];
        seen[a] = true;
        let mut best = None;
        go(g, l, a, b, &mut seen, 0.0, &mut best);
        best
    }

    #[test]
    fn shortest_path_prefers_two_hop_shortcut() {
        // lattice 3x3 over 30x30: points at 5.5, 15.5, 25.5
        let l = build_lattice(30, 30, 9).unwrap();
        // 0 -> 8 directly via a long detour 0-6-8 versus 0-4-8 (diagonal)
        let g = graph_from_edges(
            9,
            &[0, 2, 4, 6, 8],
            &[(0, 6), (6, 8), (0, 4), (4, 8), (0, 2), (2, 8)],
            4,
        );
        let PathResult::Found { path, length } = shortest_path(&g, &l, 0, 8).unwrap() else {
            panic!("reachable")
        };
        assert_eq!(path, vec![0, 4, 8]);
        assert!((length - brute_shortest(&g, &l, 0, 8).unwrap()).abs() < 1e-12);
        assert_eq!(
            shortest_path(&g, &l, 4, 4).unwrap(),
            PathResult::Found {
                path: vec![4],
                length: 0.0
            }
        );
    }

    #[test]
    fn disconnected_nodes_are_unreachable() {
        let l = build_lattice(30, 30, 9).unwrap();
        let g = graph_from_edges(9, &[0, 1, 7, 8], &[(0, 1), (7, 8)], 2);
        assert_eq!(
            shortest_path(&g, &l, 0, 8).unwrap(),
            PathResult::Unreachable
        );
        assert_eq!(g.components().1, 2);
        assert!(shortest_path(&g, &l, 0, 4).is_err());
    }

    #[test]
    fn two_rooms_without_known_corridor_stay_separate() {
        let rows = [
            "####################",
            "#.......#..........#",
            "#.......#..........#",
            "#.......#..........#",
            "#..................#",
            "#.......#..........#",
            "#.......#..........#",
            "#.......#..........#",
            "#.......#..........#",
            "####################",
        ];
        let text = format!("ARIADNE-GRID v1 20 10 1 1\n{}\n", rows.join("\n"));
        let truth = GroundTruthMap::from_grid_str(&text).unwrap();
        let mut p = PartialMap::for_truth(&truth);
        p.reveal_all(&truth);
        // hide the doorway
        let mut cells = p.cells().to_vec();
        cells[4 * 20 + 8] = crate::gridmap::Occupancy::Unknown;
        let p = PartialMap::from_cells(20, 10, cells);
        let l = build_lattice(20, 10, 8).unwrap();
        let g = rebuild_graph(&p, &l, 6);
        assert!(g.components().1 >= 2);
    }

    #[test]
    fn open_known_map_edges_pass_exhaustive_cell_check() {
        let truth =
            GroundTruthMap::new(120, 90, vec![Terrain::Free; 120 * 90], Cell::new(3, 3)).unwrap();
        let mut p = PartialMap::for_truth(&truth);
        p.reveal_all(&truth);
        let l = build_lattice(120, 90, 36).unwrap();
        let g = rebuild_graph(&p, &l, 8);
        assert_eq!(g.active_count(), 36);
        for i in 0..l.len() {
            // without obstacles every k-nearest candidate survives
            for j in k_nearest(&l, &(0..36).collect::<Vec<_>>(), i, 8) {
                assert!(g.has_edge(i, j));
            }
            for &j in g.neighbors(i) {
                let cells = crate::geometry::segment_cells(l.point(i), l.point(j));
                assert!(cells
                    .iter()
                    .all(|&c| p.get(c) == crate::gridmap::Occupancy::Free));
            }
        }
    }

    #[test]
    fn trajectory_accumulates_segment_lengths() {
        let l = build_lattice(30, 30, 9).unwrap();
        let mut t = Trajectory::start(0);
        t.push(&l, 1);
        t.push(&l, 4);
        assert_eq!(t.viewpoints, vec![0, 1, 4]);
        assert!((t.length - 20.0).abs() < 1e-12);
    }

    #[test]
    fn dense_adjacency_mirrors_graph() {
        let l = build_lattice(40, 40, 4).unwrap();
        let g = graph_from_edges(4, &[0, 2, 3], &[(0, 3), (2, 3)], 2);
        let a = augment(&g, &l, &[0; 4], &[false; 4], 3, UtilityScale::CurrentMax).unwrap();
        assert_eq!(a.node_ids, vec![0, 2, 3]);
        assert_eq!(a.neighbors(0), &[2]);
        assert_eq!(a.neighbors(1), &[2]);
        assert_eq!(a.current_neighbors(), &[0, 1]);
    }

    mod props {
        use super::*;
        use crate::gridmap::{generate_dungeon, MapGenConfig, Tier};
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn shortest_paths_obey_triangle_inequality(
                edges in proptest::collection::vec((0usize..16, 0usize..16), 0..40),
            ) {
                let l = build_lattice(40, 40, 16).unwrap();
                let edges: Vec<(usize, usize)> = edges.into_iter().filter(|(x, y)| x != y).collect();
                let g = graph_from_edges(16, &(0..16).collect::<Vec<_>>(), &edges, 15);
                let all: Vec<ShortestPaths> = (0..16).map(|s| dijkstra(&g, &l, s)).collect();
                for a in 0..16 {
                    for b in 0..16 {
                        prop_assert!((all[a].dist[b] - all[b].dist[a]).abs() < 1e-9 || all[a].dist[b] == all[b].dist[a]);
                        for c in 0..16 {
                            prop_assert!(all[a].dist[c] <= all[a].dist[b] + all[b].dist[c] + 1e-9);
                        }
                    }
                }
            }

            #[test]
            fn rebuilt_graph_invariants(seed in 0u64..10_000, reveal in 0.0f64..1.0) {
                let truth = generate_dungeon(&MapGenConfig::new(seed, Tier::Medium, 320, 240)).unwrap();
                let mut p = PartialMap::for_truth(&truth);
                p.reveal_all(&truth);
                // hide a vertical band so part of the graph is inactive
                let cut = (reveal * 320.0) as usize;
                let mut cells = p.cells().to_vec();
                for r in 0..240 {
                    for c in cut..320 {
                        cells[r * 320 + c] = crate::gridmap::Occupancy::Unknown;
                    }
                }
                let p = PartialMap::from_cells(320, 240, cells);
                let l = build_lattice(320, 240, 225).unwrap();
                let k = 10;
                let g = rebuild_graph(&p, &l, k);
                let active: Vec<usize> = g.active_nodes().collect();
                for i in 0..l.len() {
                    prop_assert_eq!(g.is_active(i), p.is_known_free(l.cell(i)));
                    let nb = g.neighbors(i);
                    prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
                    for &j in nb {
                        prop_assert!(j != i);
                        prop_assert!(g.is_active(i) && g.is_active(j));
                        prop_assert!(g.has_edge(j, i));
                        prop_assert!(line_of_sight(&p, l.point(i), l.point(j)));
                        // every edge was proposed by one of its endpoints
                        prop_assert!(
                            k_nearest(&l, &active, i, k).contains(&j)
                                || k_nearest(&l, &active, j, k).contains(&i)
                        );
                    }
                }
            }

            #[test]
            fn dijkstra_matches_exhaustive_search(
                edges in proptest::collection::vec((0usize..9, 0usize..9), 0..14),
                a in 0usize..9,
                b in 0usize..9,
            ) {
                let l = build_lattice(30, 30, 9).unwrap();
                let edges: Vec<(usize, usize)> = edges.into_iter().filter(|(x, y)| x != y).collect();
                let g = graph_from_edges(9, &(0..9).collect::<Vec<_>>(), &edges, 8);
                match (shortest_path(&g, &l, a, b).unwrap(), brute_shortest(&g, &l, a, b)) {
                    (PathResult::Found { path, length }, Some(best)) => {
                        prop_assert!((length - best).abs() < 1e-9);
                        prop_assert_eq!(path[0], a);
                        prop_assert_eq!(*path.last().unwrap(), b);
                        let walked: f64 = path.windows(2).map(|w| {
                            assert!(g.has_edge(w[0], w[1]));
                            l.point(w[0]).distance(l.point(w[1]))
                        }).sum();
                        prop_assert!((walked - length).abs() < 1e-9);
                    }
                    (PathResult::Unreachable, None) => {}
                    (r, o) => prop_assert!(false, "dijkstra {:?} vs oracle {:?}", r, o),
                }
            }
        }
    }
}
