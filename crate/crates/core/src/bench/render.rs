use std::sync::Arc;

use image::{Rgb, RgbImage};

use super::BenchError;
use crate::explore_env::{EnvConfig, ExploreEnv, ReplayRecord};
use crate::geometry::Point;
use crate::gridmap::{GroundTruthMap, Occupancy};

const UNKNOWN: Rgb<u8> = Rgb([128, 128, 128]);
const FREE: Rgb<u8> = Rgb([255, 255, 255]);
const OCCUPIED: Rgb<u8> = Rgb([0, 0, 0]);
const FRONTIER: Rgb<u8> = Rgb([220, 0, 0]);
const EDGE: Rgb<u8> = Rgb([170, 200, 230]);
const START: Rgb<u8> = Rgb([0, 170, 0]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Pixels per grid cell.
    pub scale: u32,
    /// Draw the final collision-free graph under the trajectory.
    pub draw_graph: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            scale: 2,
            draw_graph: true,
        }
    }
}

pub struct Rendered {
    pub image: RgbImage,
    /// Executed graph edges.
    pub segments: usize,
    pub length: f64,
    pub rate: f64,
}

/// Trajectory colour at fraction `t` of the episode: blue early, orange late.
fn time_colour(t: f64) -> Rgb<u8> {
    let (a, b) = ([20.0, 60.0, 230.0], [255.0, 140.0, 0.0]);
    Rgb(std::array::from_fn(|i| {
        (a[i] + (b[i] - a[i]) * t).round() as u8
    }))
}

fn line(img: &mut RgbImage, a: Point, b: Point, scale: f64, c: Rgb<u8>) {
    let (ax, ay, bx, by) = (a.x * scale, a.y * scale, b.x * scale, b.y * scale);
    let steps = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = ((ax + (bx - ax) * t).floor(), (ay + (by - ay) * t).floor());
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

fn dot(img: &mut RgbImage, p: Point, scale: f64, radius: i64, c: Rgb<u8>) {
    let (cx, cy) = ((p.x * scale) as i64, (p.y * scale) as i64);
    for y in cy - radius..=cy + radius {
        for x in cx - radius..=cx + radius {
            if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                img.put_pixel(x as u32, y as u32, c);
            }
        }
    }
}

/// Re-executes a replay log on `truth` and draws the final partial map,
/// frontiers, graph and the trajectory coloured by time. An empty log draws
/// the initial state. Refuses logs that do not reproduce (wrong map,
/// configuration or tampered rows).
pub fn render_episode(
    cfg: &EnvConfig,
    truth: Arc<GroundTruthMap>,
    log: &[ReplayRecord],
    opts: &RenderOptions,
) -> Result<Rendered, BenchError> {
    if opts.scale == 0 {
        return Err(BenchError::Validation("render scale must be >= 1".into()));
    }
    let (mut env, _) = ExploreEnv::from_truth(cfg, truth)?;
    env.set_step_budget(cfg.step_budget.max(log.len()));
    if let Some(first) = log.first() {
        if first.node != env.current() {
            return Err(BenchError::Validation(format!(
                "replay starts at node {}, the map starts at {}",
                first.node,
                env.current()
            )));
        }
    }
    for (i, rec) in log.iter().enumerate().skip(1) {
        if env.is_done() {
            return Err(BenchError::Validation(format!(
                "episode ended before replay row {i}"
            )));
        }
        env.step_to(rec.node)
            .map_err(|e| BenchError::Validation(format!("replay row {i}: {e}")))?;
        let length = env.trajectory().length;
        if (length - rec.length).abs() > 1e-6 || (env.rate() - rec.rate).abs() > 1e-9 {
            return Err(BenchError::Validation(format!(
                "replay diverges at row {i}: length {length} vs {}, rate {} vs {}",
                rec.length,
                env.rate(),
                rec.rate
            )));
        }
    }

    let s = opts.scale;
    let sf = s as f64;
    let partial = env.partial();
    let mut img = RgbImage::new(partial.width() as u32 * s, partial.height() as u32 * s);
    for (i, occ) in partial.cells().iter().enumerate() {
        let c = partial.cell_at(i);
        let colour = match occ {
            Occupancy::Unknown => UNKNOWN,
            Occupancy::Free => FREE,
            Occupancy::Occupied => OCCUPIED,
        };
        for dy in 0..s {
            for dx in 0..s {
                img.put_pixel(c.col as u32 * s + dx, c.row as u32 * s + dy, colour);
            }
        }
    }
    for &f in env.frontiers().cells() {
        for dy in 0..s {
            for dx in 0..s {
                img.put_pixel(f.col as u32 * s + dx, f.row as u32 * s + dy, FRONTIER);
            }
        }
    }
    let lattice = env.lattice();
    if opts.draw_graph {
        let g = env.graph();
        for a in g.active_nodes() {
            for &b in g.neighbors(a) {
                if a < b {
                    line(&mut img, lattice.point(a), lattice.point(b), sf, EDGE);
                }
            }
        }
    }
    let vps = &env.trajectory().viewpoints;
    let segments = vps.len() - 1;
    for (i, w) in vps.windows(2).enumerate() {
        let t = if segments > 1 {
            i as f64 / (segments - 1) as f64
        } else {
            0.0
        };
        // two pixels wide so the path stands out from the graph edges
        for off in [0.0, 1.0 / sf] {
            let shift = |p: Point| Point::new(p.x + off, p.y + off);
            line(
                &mut img,
                shift(lattice.point(w[0])),
                shift(lattice.point(w[1])),
                sf,
                time_colour(t),
            );
        }
    }
    dot(&mut img, lattice.point(vps[0]), sf, s as i64, START);
    Ok(Rendered {
        image: img,
        segments,
        length: env.trajectory().length,
        rate: env.rate(),
    })
}
