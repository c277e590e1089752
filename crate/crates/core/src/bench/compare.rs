use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::evaluate::EvalRow;
use super::BenchError;
use crate::explore_env::ReplayRecord;

/// Table column order; planners not listed follow alphabetically.
pub const COLUMN_ORDER: [&str; 8] = [
    "nearest",
    "utility:1",
    "utility:10",
    "utility:25",
    "nbv:10",
    "coverage",
    "learned",
    "random",
];

/// Length differences below this count as ties.
const TIE_EPS: f64 = 1e-6;

/// One-sided paired t-test of `H1: mean(other − reference) > 0`, i.e. the
/// reference planner travels less.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub std_diff: f64,
    pub t: f64,
    pub p_one_sided: f64,
}

pub fn paired_t_test(reference: &[f64], other: &[f64]) -> PairedTest {
    assert_eq!(reference.len(), other.len(), "paired samples");
    let d: Vec<f64> = other.iter().zip(reference).map(|(o, r)| o - r).collect();
    let n = d.len();
    let (mean, std) = mean_std(&d);
    if n < 2 {
        return PairedTest {
            n,
            mean_diff: mean,
            std_diff: std,
            t: f64::NAN,
            p_one_sided: f64::NAN,
        };
    }
    if std == 0.0 {
        let (t, p) = match mean.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (f64::NAN, 0.5),
        };
        return PairedTest {
            n,
            mean_diff: mean,
            std_diff: std,
            t,
            p_one_sided: p,
        };
    }
    let t = mean / (std / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2");
    PairedTest {
        n,
        mean_diff: mean,
        std_diff: std,
        t,
        p_one_sided: 1.0 - dist.cdf(t),
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlannerSummary {
    pub planner: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub completed: usize,
    pub mean_decisions: f64,
    /// Scenarios where the reference was strictly shorter / tied / longer.
    pub reference_wins: usize,
    pub ties: usize,
    pub reference_losses: usize,
    /// Absent for the reference itself.
    pub test: Option<PairedTest>,
}

/// Per-set and pooled summaries for every planner.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub reference: String,
    pub planners: Vec<String>,
    /// `(set name or "all", summaries in `planners` order)`.
    pub groups: Vec<(String, Vec<PlannerSummary>)>,
}

pub fn read_eval_rows(path: &Path) -> Result<Vec<EvalRow>, BenchError> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for r in rd.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

fn column_rank(p: &str) -> (usize, String) {
    (
        COLUMN_ORDER
            .iter()
            .position(|&c| c == p)
            .unwrap_or(COLUMN_ORDER.len()),
        p.to_string(),
    )
}

/// Summarizes evaluation rows against `reference` (default: `learned` when
/// present, else the first planner in column order). Every planner must
/// cover exactly the same scenarios.
pub fn compare(rows: &[EvalRow], reference: Option<&str>) -> Result<Comparison, BenchError> {
    let mut by_planner: BTreeMap<&str, BTreeMap<(&str, usize), &EvalRow>> = BTreeMap::new();
    for r in rows {
        let slot = by_planner.entry(&r.planner).or_default();
        if slot.insert((&r.set, r.scenario), r).is_some() {
            return Err(BenchError::Validation(format!(
                "{} has two rows for {}/{:03}",
                r.planner, r.set, r.scenario
            )));
        }
    }
    if by_planner.is_empty() {
        return Err(BenchError::Validation("no evaluation rows".into()));
    }
    let mut planners: Vec<String> = by_planner.keys().map(|s| s.to_string()).collect();
    planners.sort_by_key(|p| column_rank(p));
    let keys: Vec<(&str, usize)> = by_planner[planners[0].as_str()].keys().copied().collect();
    for p in &planners[1..] {
        let other: Vec<(&str, usize)> = by_planner[p.as_str()].keys().copied().collect();
        if other != keys {
            let a: BTreeSet<_> = keys.iter().collect();
            let b: BTreeSet<_> = other.iter().collect();
            let only = a.symmetric_difference(&b).next().expect("lists differ");
            return Err(BenchError::Validation(format!(
                "{} and {p} were evaluated on different scenarios (e.g. {}/{:03})",
                planners[0], only.0, only.1
            )));
        }
        for k in &keys {
            if by_planner[planners[0].as_str()][k].seed != by_planner[p.as_str()][k].seed {
                return Err(BenchError::Validation(format!(
                    "seed mismatch on {}/{:03}",
                    k.0, k.1
                )));
            }
        }
    }
    let reference = match reference {
        Some(r) if by_planner.contains_key(r) => r.to_string(),
        Some(r) => {
            return Err(BenchError::Validation(format!(
                "reference planner {r:?} has no rows"
            )))
        }
        None if by_planner.contains_key("learned") => "learned".into(),
        None => planners[0].clone(),
    };

    let mut set_names: Vec<&str> = keys.iter().map(|k| k.0).collect();
    set_names.dedup();
    let mut groups: Vec<(String, Vec<(&str, usize)>)> = set_names
        .iter()
        .map(|&s| {
            (
                s.to_string(),
                keys.iter().copied().filter(|k| k.0 == s).collect(),
            )
        })
        .collect();
    if groups.len() > 1 {
        groups.push(("all".into(), keys.clone()));
    }

    let groups = groups
        .into_iter()
        .map(|(name, ks)| {
            let lengths =
                |p: &str| -> Vec<f64> { ks.iter().map(|k| by_planner[p][k].length).collect() };
            let ref_len = lengths(&reference);
            let summaries = planners
                .iter()
                .map(|p| {
                    let len = lengths(p);
                    let (mean, std) = mean_std(&len);
                    let rows: Vec<&EvalRow> =
                        ks.iter().map(|k| by_planner[p.as_str()][k]).collect();
                    let (mut wins, mut ties, mut losses) = (0, 0, 0);
                    for (r, o) in ref_len.iter().zip(&len) {
                        if (r - o).abs() <= TIE_EPS {
                            ties += 1;
                        } else if r < o {
                            wins += 1;
                        } else {
                            losses += 1;
                        }
                    }
                    PlannerSummary {
                        planner: p.clone(),
                        n: len.len(),
                        mean,
                        std,
                        completed: rows.iter().filter(|r| r.completed).count(),
                        mean_decisions: rows.iter().map(|r| r.decisions as f64).sum::<f64>()
                            / rows.len() as f64,
                        reference_wins: wins,
                        ties,
                        reference_losses: losses,
                        test: (*p != reference).then(|| paired_t_test(&ref_len, &len)),
                    }
                })
                .collect();
            (name, summaries)
        })
        .collect();
    Ok(Comparison {
        reference,
        planners,
        groups,
    })
}

impl Comparison {
    pub fn group(&self, name: &str) -> Option<&[PlannerSummary]> {
        self.groups
            .iter()
            .find(|g| g.0 == name)
            .map(|g| g.1.as_slice())
    }

    /// Mean ± std trajectory length per set, then the reference's record
    /// against each planner.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| set | {} |", self.planners.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(self.planners.len()));
        for (name, sums) in &self.groups {
            let cells: Vec<String> = sums
                .iter()
                .map(|p| format!("{:.1} ± {:.1}", p.mean, p.std))
                .collect();
            let _ = writeln!(s, "| {name} | {} |", cells.join(" | "));
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "| set | vs | {} shorter | ties | longer | mean diff | t | p (one-sided) | completed |",
            self.reference
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
        for (name, sums) in &self.groups {
            for p in sums {
                let Some(t) = &p.test else { continue };
                let _ = writeln!(
                    s,
                    "| {name} | {} | {} | {} | {} | {:.2} | {:.3} | {:.4} | {}/{} |",
                    p.planner,
                    p.reference_wins,
                    p.ties,
                    p.reference_losses,
                    t.mean_diff,
                    t.t,
                    t.p_one_sided,
                    p.completed,
                    p.n
                );
            }
        }
        s
    }
}

/// Distinct, colour-blind-friendly-ish palette indexed by column.
pub fn palette(i: usize) -> Rgb<u8> {
    const P: [[u8; 3]; 10] = [
        [0, 114, 178],
        [230, 159, 0],
        [0, 158, 115],
        [204, 121, 167],
        [86, 180, 233],
        [213, 94, 0],
        [200, 30, 30],
        [120, 120, 120],
        [240, 228, 66],
        [0, 0, 0],
    ];
    Rgb(P[i % P.len()])
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a.0 + (b.0 - a.0) * t).round();
        let y = (a.1 + (b.1 - a.1) * t).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, c: Rgb<u8>) {
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

/// Bar chart of mean length per planner (in `planners` order, coloured by
/// [`palette`]) with ±std whiskers, for one comparison group.
pub fn write_bar_plot(cmp: &Comparison, group: &str, path: &Path) -> Result<(), BenchError> {
    let sums = cmp
        .group(group)
        .ok_or_else(|| BenchError::Validation(format!("no group {group:?}")))?;
    let (w, h, margin) = (80 * sums.len() as u32 + 40, 400u32, 20u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let top = sums
        .iter()
        .map(|p| p.mean + p.std)
        .fold(0.0, f64::max)
        .max(1e-9);
    let scale = (h - 2 * margin) as f64 / top;
    let base = (h - margin) as f64;
    for (i, p) in sums.iter().enumerate() {
        let x0 = margin + 80 * i as u32 + 10;
        let y = (base - p.mean * scale).max(0.0) as u32;
        fill_rect(&mut img, x0, y, x0 + 60, h - margin, palette(i));
        let cx = x0 as f64 + 30.0;
        let (lo, hi) = (
            base - (p.mean - p.std).max(0.0) * scale,
            base - (p.mean + p.std) * scale,
        );
        draw_line(&mut img, (cx, lo), (cx, hi), Rgb([0, 0, 0]));
        draw_line(&mut img, (cx - 8.0, hi), (cx + 8.0, hi), Rgb([0, 0, 0]));
    }
    draw_line(
        &mut img,
        (margin as f64, base),
        ((w - margin) as f64, base),
        Rgb([0, 0, 0]),
    );
    img.save(path)?;
    Ok(())
}

/// Mean exploration rate as a function of travelled distance, sampled at
/// `bins + 1` evenly spaced distances up to the longest episode. An episode
/// keeps its final rate after it ends.
pub fn rate_curve(logs: &[Vec<ReplayRecord>], max_distance: f64, bins: usize) -> Vec<(f64, f64)> {
    (0..=bins)
        .map(|j| {
            let d = max_distance * j as f64 / bins as f64;
            let sum: f64 = logs
                .iter()
                .map(|log| {
                    log.iter()
                        .take_while(|r| r.length <= d + 1e-9)
                        .last()
                        .map_or(0.0, |r| r.rate)
                })
                .sum();
            (d, sum / logs.len().max(1) as f64)
        })
        .collect()
}

/// Line plot of rate-vs-distance curves, one colour per curve.
pub fn write_rate_plot(
    curves: &[(String, Vec<(f64, f64)>)],
    path: &Path,
) -> Result<(), BenchError> {
    let (w, h, m) = (640u32, 400u32, 20.0);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let max_d = curves
        .iter()
        .flat_map(|c| c.1.iter().map(|p| p.0))
        .fold(0.0, f64::max)
        .max(1e-9);
    let px = |(d, r): (f64, f64)| {
        (
            m + d / max_d * (w as f64 - 2.0 * m),
            h as f64 - m - r * (h as f64 - 2.0 * m),
        )
    };
    draw_line(&mut img, px((0.0, 0.0)), px((max_d, 0.0)), Rgb([0, 0, 0]));
    draw_line(&mut img, px((0.0, 0.0)), px((0.0, 1.0)), Rgb([0, 0, 0]));
    for (i, (_, pts)) in curves.iter().enumerate() {
        for win in pts.windows(2) {
            draw_line(&mut img, px(win[0]), px(win[1]), palette(i));
        }
    }
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(set: &str, scenario: usize, planner: &str, length: f64) -> EvalRow {
        EvalRow {
            set: set.into(),
            scenario,
            planner: planner.into(),
            seed: 1000 + scenario as u64,
            length,
            completed: true,
            decisions: 10,
            rate: 1.0,
            obs_ms: None,
            infer_ms: None,
        }
    }

    #[test]
    fn t_test_matches_reference_values() {
        // reference values computed with an independent statistics package
        let t = paired_t_test(&[5.0; 5], &[6.0, 7.0, 8.0, 9.0, 10.0]);
        assert!((t.t - 4.242640687119285).abs() < 1e-12);
        assert!((t.p_one_sided - 0.0066177997818413475).abs() < 1e-9);
        let a = [10.0, 12.0, 9.0, 15.0, 11.0, 13.0];
        let b = [11.0, 12.5, 10.0, 14.0, 13.0, 15.5];
        let t = paired_t_test(&a, &b);
        assert!((t.t - 2.0).abs() < 1e-12);
        assert!((t.mean_diff - 1.0).abs() < 1e-12);
        assert!((t.std_diff - 1.224744871391589).abs() < 1e-12);
        assert!((t.p_one_sided - 0.05096973941492914).abs() < 1e-9);
        assert_eq!(paired_t_test(&[1.0, 2.0], &[2.0, 3.0]).p_one_sided, 0.0);
    }

    #[test]
    fn comparison_counts_wins_ties_and_orders_columns() {
        let mut rows = Vec::new();
        for (i, (l, n)) in [(10.0, 12.0), (10.0, 10.0), (15.0, 11.0), (9.0, 20.0)]
            .into_iter()
            .enumerate()
        {
            rows.push(row("medium", i, "nearest", n));
            rows.push(row("medium", i, "learned", l));
        }
        let c = compare(&rows, None).unwrap();
        assert_eq!(c.reference, "learned");
        assert_eq!(c.planners, ["nearest", "learned"]);
        let g = c.group("medium").unwrap();
        assert_eq!(
            (g[0].reference_wins, g[0].ties, g[0].reference_losses),
            (2, 1, 1)
        );
        assert!((g[0].mean - 13.25).abs() < 1e-12);
        assert!(g[1].test.is_none() && g[0].test.is_some());
        assert!(c.to_markdown().contains("| medium | 13.2 ± "));
        assert!(c.group("all").is_none());
    }

    #[test]
    fn mismatched_scenarios_are_refused() {
        let rows = vec![
            row("easy", 0, "nearest", 1.0),
            row("easy", 1, "learned", 1.0),
        ];
        assert!(matches!(
            compare(&rows, None),
            Err(BenchError::Validation(_))
        ));
        let dup = vec![
            row("easy", 0, "nearest", 1.0),
            row("easy", 0, "nearest", 2.0),
        ];
        assert!(matches!(
            compare(&dup, None),
            Err(BenchError::Validation(_))
        ));
        let ok = vec![row("easy", 0, "nearest", 1.0)];
        assert!(compare(&ok, Some("learned")).is_err());
    }

    #[test]
    fn rate_curve_holds_final_rate() {
        let rec = |length: f64, rate: f64| ReplayRecord {
            version: 1,
            step: 0,
            node: 0,
            x: 0.0,
            y: 0.0,
            r_o: 0.0,
            r_c: 0.0,
            r_f: 0.0,
            reward: 0.0,
            rate,
            length,
        };
        let logs = vec![
            vec![rec(0.0, 0.2), rec(5.0, 0.6), rec(10.0, 1.0)],
            vec![rec(0.0, 0.4), rec(20.0, 0.8)],
        ];
        let c = rate_curve(&logs, 20.0, 4);
        let want = [
            (0.0, 0.3),
            (5.0, 0.5),
            (10.0, 0.7),
            (15.0, 0.7),
            (20.0, 0.9),
        ];
        for (g, w) in c.iter().zip(want) {
            assert!(
                (g.0 - w.0).abs() < 1e-12 && (g.1 - w.1).abs() < 1e-12,
                "{g:?} vs {w:?}"
            );
        }
    }
}
