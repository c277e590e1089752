//! Random dungeon generator: rectangular rooms placed by rejection sampling,
//! joined by L-shaped corridors along a spanning tree plus optional loops,
//! with small rectangular pillars for clutter.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridError, GroundTruthMap, Terrain};
use crate::geometry::Cell;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Easy,
    Medium,
    Complex,
    Random,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Easy => "easy",
            Tier::Medium => "medium",
            Tier::Complex => "complex",
            Tier::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Tier> {
        match s {
            "easy" => Some(Tier::Easy),
            "medium" => Some(Tier::Medium),
            "complex" => Some(Tier::Complex),
            "random" => Some(Tier::Random),
            _ => None,
        }
    }
}

/// Inclusive ranges for one tier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierParams {
    pub rooms: (usize, usize),
    pub room_width: (usize, usize),
    pub room_height: (usize, usize),
    pub extra_loops: (usize, usize),
    pub pillars_per_room: (usize, usize),
}

/// Generator parameters. `GenParams::for_dims` is the versioned default set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub version: u32,
    /// Obstacle border kept around the map edge.
    pub border: usize,
    /// Minimum wall thickness between two rooms.
    pub room_gap: usize,
    pub corridor_width: (usize, usize),
    pub pillar_size: (usize, usize),
    /// Free space kept between a pillar and any room wall or other pillar.
    pub pillar_clearance: usize,
    pub easy: TierParams,
    pub medium: TierParams,
    pub complex: TierParams,
    pub max_attempts: usize,
}

impl GenParams {
    pub const VERSION: u32 = 1;

    /// Defaults scaled to the map size (reference size 640x480). Corridor
    /// widths are absolute: they must exceed the roadmap spacing, which the
    /// presets keep near 21x16 cells at every scale.
    pub fn for_dims(width: usize, height: usize) -> Self {
        let s = (width as f64 / 640.0).min(height as f64 / 480.0);
        let sc = |v: f64| ((v * s).round() as usize).max(1);
        Self {
            version: Self::VERSION,
            border: 2,
            room_gap: 6,
            corridor_width: (24, 32),
            pillar_size: (sc(12.0).max(4), sc(28.0).max(6)),
            pillar_clearance: 24,
            easy: TierParams {
                rooms: (1, 1),
                room_width: (width * 6 / 10, width * 9 / 10),
                room_height: (height * 6 / 10, height * 9 / 10),
                extra_loops: (0, 0),
                pillars_per_room: (1, 4),
            },
            medium: TierParams {
                rooms: (2, 4),
                room_width: (sc(110.0), sc(220.0)),
                room_height: (sc(90.0), sc(180.0)),
                extra_loops: (0, 0),
                pillars_per_room: (0, 1),
            },
            complex: TierParams {
                rooms: (5, 7),
                room_width: (sc(84.0), sc(160.0)),
                room_height: (sc(72.0), sc(128.0)),
                extra_loops: (1, 2),
                pillars_per_room: (0, 1),
            },
            max_attempts: 200,
        }
    }

    fn tier(&self, tier: Tier) -> &TierParams {
        match tier {
            Tier::Easy => &self.easy,
            Tier::Medium => &self.medium,
            Tier::Complex | Tier::Random => &self.complex,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapGenConfig {
    pub seed: u64,
    pub tier: Tier,
    pub width: usize,
    pub height: usize,
    pub params: GenParams,
}

impl MapGenConfig {
    pub fn new(seed: u64, tier: Tier, width: usize, height: usize) -> Self {
        Self {
            seed,
            tier,
            width,
            height,
            params: GenParams::for_dims(width, height),
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let p = &self.params;
        let bad = |m: &str| Err(GridError::InvalidConfig(m.to_string()));
        if self.width < 16 || self.height < 16 {
            return bad("map must be at least 16x16");
        }
        if p.corridor_width.0 == 0 || p.corridor_width.0 > p.corridor_width.1 {
            return bad("corridor width range");
        }
        if p.pillar_size.0 == 0 || p.pillar_size.0 > p.pillar_size.1 {
            return bad("pillar size range");
        }
        for t in [&p.easy, &p.medium, &p.complex] {
            if t.rooms.0 == 0
                || t.rooms.0 > t.rooms.1
                || t.room_width.0 == 0
                || t.room_width.0 > t.room_width.1
                || t.room_height.0 == 0
                || t.room_height.0 > t.room_height.1
                || t.extra_loops.0 > t.extra_loops.1
                || t.pillars_per_room.0 > t.pillars_per_room.1
            {
                return bad("tier ranges must be non-empty and ordered");
            }
            if t.room_width.0 + 2 * p.border > self.width
                || t.room_height.0 + 2 * p.border > self.height
            {
                return bad("rooms cannot fit the map");
            }
        }
        if p.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

impl Rect {
    fn overlaps_inflated(&self, other: &Rect, gap: usize) -> bool {
        let (ax0, ay0) = (self.x as i64 - gap as i64, self.y as i64 - gap as i64);
        let (ax1, ay1) = (
            (self.x + self.w + gap) as i64,
            (self.y + self.h + gap) as i64,
        );
        let (bx0, by0) = (other.x as i64, other.y as i64);
        let (bx1, by1) = ((other.x + other.w) as i64, (other.y + other.h) as i64);
        ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
    }

    fn center(&self) -> (usize, usize) {
        (self.x + self.w / 2, self.y + self.h / 2)
    }
}

struct Canvas {
    width: usize,
    height: usize,
    cells: Vec<Terrain>,
    labels: Vec<u16>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![Terrain::Obstacle; width * height],
            labels: vec![0; width * height],
        }
    }

    fn fill(&mut self, r: Rect, terrain: Terrain, label: Option<u16>) {
        for y in r.y..(r.y + r.h).min(self.height) {
            for x in r.x..(r.x + r.w).min(self.width) {
                let i = y * self.width + x;
                self.cells[i] = terrain;
                if let Some(l) = label {
                    self.labels[i] = l;
                }
            }
        }
    }
}

fn pick(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    rng.gen_range(range.0..=range.1)
}

/// Generates a ground-truth map whose free space is a single 8-connected
/// component. Identical configurations give bit-identical maps.
pub fn generate_dungeon(cfg: &MapGenConfig) -> Result<GroundTruthMap, GridError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tier = match cfg.tier {
        Tier::Random => [Tier::Easy, Tier::Medium, Tier::Complex][rng.gen_range(0..3)],
        t => t,
    };
    let mut last_reason = String::new();
    for _ in 0..cfg.params.max_attempts {
        match try_generate(cfg, tier, &mut rng) {
            Ok(map) => return Ok(map),
            Err(reason) => last_reason = reason,
        }
    }
    Err(GridError::Generation {
        attempts: cfg.params.max_attempts,
        reason: last_reason,
    })
}

fn try_generate(
    cfg: &MapGenConfig,
    tier: Tier,
    rng: &mut ChaCha8Rng,
) -> Result<GroundTruthMap, String> {
    let p = &cfg.params;
    let tp = p.tier(tier);
    let (w, h) = (cfg.width, cfg.height);
    let inner_w = w - 2 * p.border;
    let inner_h = h - 2 * p.border;

    let n_rooms = pick(rng, tp.rooms);
    let mut rooms: Vec<Rect> = Vec::with_capacity(n_rooms);
    'rooms: for _ in 0..n_rooms {
        for _ in 0..500 {
            let rw = pick(rng, tp.room_width).min(inner_w);
            let rh = pick(rng, tp.room_height).min(inner_h);
            let x = p.border + rng.gen_range(0..=inner_w - rw);
            let y = p.border + rng.gen_range(0..=inner_h - rh);
            let r = Rect { x, y, w: rw, h: rh };
            if rooms.iter().all(|o| !r.overlaps_inflated(o, p.room_gap)) {
                rooms.push(r);
                continue 'rooms;
            }
        }
        return Err(format!("could not place {n_rooms} rooms"));
    }

    let mut canvas = Canvas::new(w, h);
    for (i, r) in rooms.iter().enumerate() {
        canvas.fill(*r, Terrain::Free, Some(i as u16 + 1));
    }

    // spanning tree: each room joins its nearest predecessor
    let mut links: Vec<(usize, usize)> = Vec::new();
    for i in 1..rooms.len() {
        let (cx, cy) = rooms[i].center();
        let j = (0..i)
            .min_by_key(|&j| {
                let (ox, oy) = rooms[j].center();
                let dx = cx as i64 - ox as i64;
                let dy = cy as i64 - oy as i64;
                (dx * dx + dy * dy, j)
            })
            .expect("i >= 1");
        links.push((j, i));
    }
    if rooms.len() > 2 {
        let loops = pick(rng, tp.extra_loops);
        let mut candidates: Vec<(usize, usize)> = (0..rooms.len())
            .flat_map(|a| (a + 1..rooms.len()).map(move |b| (a, b)))
            .filter(|&(a, b)| !links.contains(&(a, b)) && !links.contains(&(b, a)))
            .collect();
        candidates.shuffle(rng);
        links.extend(candidates.into_iter().take(loops));
    }
    for &(a, b) in &links {
        carve_corridor(&mut canvas, rng, rooms[a], rooms[b], p);
    }

    for r in &rooms {
        let count = pick(rng, tp.pillars_per_room);
        place_pillars(&mut canvas, rng, *r, count, p);
    }

    let free: Vec<usize> = (0..w * h)
        .filter(|&i| canvas.cells[i] == Terrain::Free)
        .collect();
    let &start = free.choose(rng).ok_or("no free cell")?;
    let start = Cell::new((start % w) as i32, (start / w) as i32);
    let map = GroundTruthMap::new(w, h, canvas.cells, start)
        .map_err(|e| e.to_string())?
        .with_room_labels(canvas.labels);
    if map.free_component_count() != 1 {
        return Err("free space is not connected".into());
    }
    Ok(map)
}

fn carve_corridor(canvas: &mut Canvas, rng: &mut ChaCha8Rng, a: Rect, b: Rect, p: &GenParams) {
    let cw = pick(rng, p.corridor_width);
    let jitter = |rng: &mut ChaCha8Rng, r: Rect| {
        let jx = r.w / 4;
        let jy = r.h / 4;
        let (cx, cy) = r.center();
        (
            cx - jx + rng.gen_range(0..=2 * jx),
            cy - jy + rng.gen_range(0..=2 * jy),
        )
    };
    let (ax, ay) = jitter(rng, a);
    let (bx, by) = jitter(rng, b);
    let lo = p.border;
    let hi_x = canvas.width - p.border;
    let hi_y = canvas.height - p.border;
    let strip_h = |canvas: &mut Canvas, y: usize, x0: usize, x1: usize| {
        let y0 = y.saturating_sub(cw / 2).clamp(lo, hi_y - cw.min(hi_y - lo));
        let x0 = x0.saturating_sub(cw / 2).max(lo);
        let x1 = (x1 + cw - cw / 2).min(hi_x);
        canvas.fill(
            Rect {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: cw.min(hi_y - y0),
            },
            Terrain::Free,
            None,
        );
    };
    let strip_v = |canvas: &mut Canvas, x: usize, y0: usize, y1: usize| {
        let x0 = x.saturating_sub(cw / 2).clamp(lo, hi_x - cw.min(hi_x - lo));
        let y0 = y0.saturating_sub(cw / 2).max(lo);
        let y1 = (y1 + cw - cw / 2).min(hi_y);
        canvas.fill(
            Rect {
                x: x0,
                y: y0,
                w: cw.min(hi_x - x0),
                h: y1 - y0,
            },
            Terrain::Free,
            None,
        );
    };
    if rng.gen_bool(0.5) {
        strip_h(canvas, ay, ax.min(bx), ax.max(bx));
        strip_v(canvas, bx, ay.min(by), ay.max(by));
    } else {
        strip_v(canvas, ax, ay.min(by), ay.max(by));
        strip_h(canvas, by, ax.min(bx), ax.max(bx));
    }
}

fn place_pillars(
    canvas: &mut Canvas,
    rng: &mut ChaCha8Rng,
    room: Rect,
    count: usize,
    p: &GenParams,
) {
    let c = p.pillar_clearance;
    let mut placed: Vec<Rect> = Vec::new();
    for _ in 0..count {
        for _ in 0..50 {
            let pw = pick(rng, p.pillar_size);
            let ph = pick(rng, p.pillar_size);
            if room.w < pw + 2 * c || room.h < ph + 2 * c {
                break;
            }
            let x = room.x + c + rng.gen_range(0..=room.w - pw - 2 * c);
            let y = room.y + c + rng.gen_range(0..=room.h - ph - 2 * c);
            let r = Rect { x, y, w: pw, h: ph };
            if placed.iter().all(|o| !r.overlaps_inflated(o, c)) {
                canvas.fill(r, Terrain::Obstacle, Some(0));
                placed.push(r);
                break;
            }
        }
    }
}

/// Counts 8-connected components of room-labelled cells (`None` for maps
/// without room labels, e.g. ones read from a file).
pub fn count_rooms(map: &GroundTruthMap) -> Option<usize> {
    let labels = map.room_labels()?;
    let mut seen = vec![false; labels.len()];
    let mut count = 0;
    for s in 0..labels.len() {
        if seen[s] || labels[s] == 0 {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            let c = map.cell_at(i);
            for n in c.neighbors8() {
                if let Some(j) = map.index(n) {
                    if !seen[j] && labels[j] != 0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    Some(count)
}
