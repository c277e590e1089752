use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use explore_core::bench::{
    compare, evaluate, gen_test_sets, palette, rate_curve, read_eval_rows, render_episode,
    replay_path, write_bar_plot, write_rate_plot, BenchError, EvalConfig, EvalPlanner,
    RenderOptions, Scale, TestSetSpec, TestSets, SET_NAMES,
};
use explore_core::explore_env::read_replay_log;
use explore_core::neural::{load_checkpoint, CheckpointError};
use explore_core::sac_trainer::{train, TrainConfig, TrainError};

#[derive(Parser, Debug)]
#[command(
    name = "explore",
    version,
    about = "Graph-based exploration: maps, training, evaluation and reports"
)]
struct Cli {
    /// TOML training configuration (train; gen-maps checks its seeds against it).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Problem size preset.
    #[arg(long, global = true, value_enum)]
    scale: Option<ScaleArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Full => Scale::Full,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the four fixed test sets and their manifest.
    GenMaps {
        /// Scenarios per set.
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
    },
    /// Train the policy with discrete soft actor-critic.
    Train {
        /// Override the number of episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print a progress line every this many episodes (0: never).
        #[arg(long, default_value_t = 50)]
        log_every: u64,
    },
    /// Run planners on test sets and write per-episode rows to `<out>/eval.csv`.
    Eval {
        /// Test-set directory (contains manifest.json).
        #[arg(long)]
        sets: PathBuf,
        /// Comma-separated set names.
        #[arg(long, value_delimiter = ',', default_values_t = SET_NAMES.map(String::from))]
        set: Vec<String>,
        /// Comma-separated planners: nearest, utility:<λ>, nbv[:<λ>], coverage, learned, random.
        #[arg(long, value_delimiter = ',', required = true)]
        planners: Vec<String>,
        /// Policy checkpoint for the learned planner.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Decision budget per episode.
        #[arg(long, default_value_t = 1024)]
        budget: usize,
        /// Only the first N scenarios of each set.
        #[arg(long)]
        limit: Option<usize>,
        /// Record per-decision timing (run with RAYON_NUM_THREADS=1 for clean numbers).
        #[arg(long)]
        timing: bool,
        /// Also write replay logs under `<out>/replays`.
        #[arg(long)]
        replays: bool,
    },
    /// Summarize evaluation CSVs: table, win counts, paired tests, plots.
    Compare {
        /// Evaluation CSV files (rows are concatenated).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Planner the others are tested against (default: learned, if present).
        #[arg(long)]
        reference: Option<String>,
        /// Replay directory for exploration-rate curves.
        #[arg(long)]
        replays: Option<PathBuf>,
    },
    /// Draw one episode from its replay log.
    Render {
        #[arg(long)]
        sets: PathBuf,
        #[arg(long)]
        set: String,
        #[arg(long)]
        scenario: usize,
        /// Replay log CSV (omit to draw the initial state).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Pixels per cell.
        #[arg(long, default_value_t = 2)]
        px: u32,
        #[arg(long)]
        no_graph: bool,
    },
    /// Print a checkpoint's metadata and tensor shapes.
    InspectCkpt { path: PathBuf },
}

/// A usage problem detected by the CLI itself.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

/// 2 for validation errors (bad input, refused data), 3 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>()
            || matches!(
                cause.downcast_ref::<BenchError>(),
                Some(BenchError::Validation(_))
            )
            || matches!(
                cause.downcast_ref::<TrainError>(),
                Some(TrainError::Config(_))
            )
            || matches!(
                cause.downcast_ref::<CheckpointError>(),
                Some(
                    CheckpointError::BadMagic
                        | CheckpointError::Manifest(_)
                        | CheckpointError::Missing(_)
                        | CheckpointError::Shape(_)
                )
            )
        {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let scale: Option<Scale> = cli.scale.map(Into::into);
    match cli.command {
        Command::GenMaps { scenarios } => {
            let scale = scale.unwrap_or(Scale::Desk);
            let train_cfg = match &cli.config {
                Some(p) => {
                    TrainConfig::load(p).with_context(|| format!("reading {}", p.display()))?
                }
                None => scale.train_config(),
            };
            let spec = TestSetSpec {
                scenarios,
                ..TestSetSpec::new(cli.seed.unwrap_or(0), scale)
            };
            fs::create_dir_all(&cli.out)?;
            let m = gen_test_sets(&spec, &cli.out, Some(&train_cfg))?;
            println!(
                "{} sets x {scenarios} scenarios -> {}",
                m.sets.len(),
                cli.out.display()
            );
            println!("manifest sha256 {}", m.hash());
        }
        Command::Train {
            episodes,
            resume,
            log_every,
        } => {
            let mut cfg = match &cli.config {
                Some(p) => {
                    TrainConfig::load(p).with_context(|| format!("reading {}", p.display()))?
                }
                None => scale.unwrap_or(Scale::Desk).train_config(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            let s = train(&cfg, &cli.out, resume.as_deref(), |r| {
                if log_every > 0 && r.episode % log_every == 0 {
                    eprintln!(
                        "episode {:>6}  updates {:>7}  reward {:>8.2}  length {:>7.1}  rate {:.3}  alpha {}",
                        r.episode,
                        r.updates,
                        r.reward,
                        r.length,
                        r.rate,
                        r.alpha.map_or("-".into(), |a| format!("{a:.4}"))
                    );
                }
            })?;
            println!(
                "{} episodes ({} failed), {} updates in {:.0} s -> {}",
                s.episodes,
                s.failed_episodes,
                s.updates,
                s.wall_s,
                s.checkpoint.display()
            );
        }
        Command::Eval {
            sets,
            set,
            planners,
            checkpoint,
            budget,
            limit,
            timing,
            replays,
        } => {
            let ts = TestSets::open(&sets)?;
            if let Some(s) = scale {
                if s != ts.manifest.scale {
                    bail!(invalid(format!(
                        "--scale {} but the test sets were generated at {}",
                        s.name(),
                        ts.manifest.scale.name()
                    )));
                }
            }
            let planners = planners
                .iter()
                .map(|p| EvalPlanner::parse(p).map_err(invalid))
                .collect::<Result<Vec<_>>>()?;
            let cfg = EvalConfig {
                checkpoint,
                budget,
                timing,
                replay_dir: replays.then(|| cli.out.join("replays")),
                limit,
                ..EvalConfig::new(set, planners)
            };
            fs::create_dir_all(&cli.out)?;
            let csv = cli.out.join("eval.csv");
            let rows = evaluate(&ts, &cfg, &csv, |r| {
                eprintln!(
                    "{}/{:03} {:<12} length {:>8.1} completed {}",
                    r.set, r.scenario, r.planner, r.length, r.completed
                )
            })?;
            println!("{} episodes -> {}", rows.len(), csv.display());
        }
        Command::Compare {
            inputs,
            reference,
            replays,
        } => {
            let mut rows = Vec::new();
            for p in &inputs {
                rows.extend(read_eval_rows(p).with_context(|| format!("reading {}", p.display()))?);
            }
            let cmp = compare(&rows, reference.as_deref())?;
            fs::create_dir_all(&cli.out)?;
            let md = cmp.to_markdown();
            fs::write(cli.out.join("summary.md"), &md)?;
            fs::write(
                cli.out.join("summary.json"),
                serde_json::to_string_pretty(&cmp)?,
            )?;
            let mut legend = String::from("colour\tplanner\n");
            for (i, p) in cmp.planners.iter().enumerate() {
                let c = palette(i).0;
                legend.push_str(&format!("#{:02x}{:02x}{:02x}\t{p}\n", c[0], c[1], c[2]));
            }
            fs::write(cli.out.join("legend.tsv"), legend)?;
            for (group, _) in &cmp.groups {
                write_bar_plot(&cmp, group, &cli.out.join(format!("bars_{group}.png")))?;
            }
            if let Some(dir) = replays {
                write_rate_curves(&rows, &cmp.planners, &dir, &cli.out)?;
            }
            print!("{md}");
        }
        Command::Render {
            sets,
            set,
            scenario,
            log,
            px,
            no_graph,
        } => {
            let ts = TestSets::open(&sets)?;
            let entry = ts
                .manifest
                .set(&set)?
                .scenarios
                .iter()
                .find(|e| e.id == scenario)
                .ok_or_else(|| invalid(format!("set {set} has no scenario {scenario}")))?;
            let truth = ts.load_map(entry)?;
            let records = match &log {
                Some(p) => read_replay_log(
                    fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
                )
                .map_err(|e| invalid(format!("{}: {e}", p.display())))?,
                None => Vec::new(),
            };
            let opts = RenderOptions {
                scale: px,
                draw_graph: !no_graph,
            };
            let r = render_episode(&ts.manifest.scale.env_config(), truth, &records, &opts)?;
            fs::create_dir_all(&cli.out)?;
            let path = cli.out.join(format!("{set}_{scenario:03}.png"));
            r.image.save(&path)?;
            println!(
                "{} segments, length {:.1}, rate {:.4} -> {}",
                r.segments,
                r.length,
                r.rate,
                path.display()
            );
        }
        Command::InspectCkpt { path } => {
            let ckpt = load_checkpoint(&path)?;
            println!("{}", serde_json::to_string_pretty(&ckpt.meta)?);
            let mut groups: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
            for (name, m) in &ckpt.tensors {
                let g = groups
                    .entry(name.split('/').next().unwrap_or(""))
                    .or_default();
                g.0 += 1;
                g.1 += m.rows() * m.cols();
                println!("{name:<48} {:>5} x {:<5}", m.rows(), m.cols());
            }
            for (g, (n, scalars)) in groups {
                println!("{g:<24} {n:>4} tensors {scalars:>10} scalars");
            }
        }
    }
    Ok(())
}

/// One exploration-rate-vs-distance plot per set from the replay logs of
/// every planner that has them.
fn write_rate_curves(
    rows: &[explore_core::bench::EvalRow],
    planners: &[String],
    dir: &Path,
    out: &Path,
) -> Result<()> {
    let mut sets: Vec<&str> = rows.iter().map(|r| r.set.as_str()).collect();
    sets.sort_unstable();
    sets.dedup();
    for set in sets {
        let mut curves = Vec::new();
        let mut logs_by_planner = Vec::new();
        for p in planners {
            let mut logs = Vec::new();
            for r in rows.iter().filter(|r| r.set == set && &r.planner == p) {
                let path = replay_path(dir, set, r.scenario, p);
                match fs::File::open(&path) {
                    Ok(f) => logs.push(read_replay_log(f)?),
                    Err(_) => {
                        logs.clear();
                        break;
                    }
                }
            }
            logs_by_planner.push((p.clone(), logs));
        }
        // the random floor can wander for tens of thousands of cells; it
        // does not set the axis unless it is all there is
        let axis = |skip_random: bool| {
            logs_by_planner
                .iter()
                .filter(|(p, _)| !(skip_random && p == "random"))
                .flat_map(|(_, ls)| ls.iter().filter_map(|l| l.last().map(|r| r.length)))
                .fold(0.0, f64::max)
        };
        let max_d = match axis(true) {
            d if d > 0.0 => d,
            _ => axis(false),
        };
        for (p, logs) in logs_by_planner {
            // keep the palette index aligned with the legend even when a planner has no logs
            curves.push((
                p,
                if logs.is_empty() {
                    Vec::new()
                } else {
                    rate_curve(&logs, max_d, 100)
                },
            ));
        }
        write_rate_plot(&curves, &out.join(format!("rate_{set}.png")))?;
        let mut tsv = String::from("planner\tdistance\trate\n");
        for (p, pts) in &curves {
            for (d, r) in pts {
                tsv.push_str(&format!("{p}\t{d:.3}\t{r:.6}\n"));
            }
        }
        fs::write(out.join(format!("rate_{set}.tsv")), tsv)?;
    }
    Ok(())
}
