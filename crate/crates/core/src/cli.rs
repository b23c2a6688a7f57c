//! `probe-arena` command line: train, replay, plot, eval.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime error
//! during training or evaluation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::opponent_zoo::OpponentClass;
use crate::orchestrator::{
    evaluate, parse_metrics_csv, run_experiment_with, BayesOracle, ExperimentConfig, LabelPassThrough, LoadedRun,
    Phase, RoundMetrics, TrajectoryPredictor,
};
use crate::rollout::{episode_rng, rollout_episode, EnvSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Caps rayon's worker count when set.
pub const THREADS_ENV: &str = "PROBE_ARENA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "probe-arena", version, about = "Train and inspect probing agents for opponent identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment described by a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// No per-round progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Roll one episode and print every frame with the classifier's top guess.
    Replay {
        /// Checkpoint directory holding classifier.ckpt and policy.ckpt.
        #[arg(long)]
        ckpt: PathBuf,
        /// Opponent class id (0-8) or name.
        #[arg(long = "class")]
        class: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Episode length; defaults to the checkpoint's.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Draw classifier loss and mean reward curves from metrics.csv as SVG.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confusion matrix on fresh held-out episodes.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PredictorKind::Classifier)]
        predictor: PredictorKind,
        /// Directory that receives eval/confusion.csv. Defaults to the run
        /// directory when the checkpoint lives under `<run>/checkpoints/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorKind {
    /// The checkpointed LSTM classifier.
    Classifier,
    /// Exact Bayes posterior under the true opponent models.
    Bayes,
    /// Returns the true label; a stand-in for a perfect classifier.
    Label,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Format { .. } | Error::Io { .. } | Error::Unsupported(_) => EXIT_USAGE,
        Error::Training(_) | Error::Evidence(_) | Error::Sequencing(_) | Error::Dimension(_) => EXIT_RUNTIME,
    }
}

/// Applies [`THREADS_ENV`] to rayon's global pool.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}: expected a positive integer, got {value:?}")))?;
    // a second initialisation in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// writing its report to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match init_threads().and_then(|()| dispatch(cli.command, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train { config, out: dir, seed, quiet } => cmd_train(&config, &dir, seed, quiet, out),
        Command::Replay { ckpt, class, seed, steps } => cmd_replay(&ckpt, &class, seed, steps, out),
        Command::Plot { metrics, out: svg } => cmd_plot(&metrics, &svg, out),
        Command::Eval {
            ckpt,
            episodes,
            seed,
            predictor,
            out: dir,
        } => cmd_eval(&ckpt, episodes, seed, predictor, dir.as_deref(), out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_train(config: &Path, dir: &Path, seed: Option<u64>, quiet: bool, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(config).map_err(|e| Error::io(config, e))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", config.display())),
        other => other,
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rounds = cfg.rounds;
    let every = (rounds / 10).max(1);
    let outcome = run_experiment_with(cfg, Some(dir), config.parent(), |m| {
        if !quiet && ((m.round + 1) % every == 0 || m.round + 1 == rounds) {
            eprintln!(
                "round {}/{} {} loss {:.4} acc {:.3} reward {:.4}",
                m.round + 1,
                rounds,
                m.phase,
                m.classifier_loss,
                m.classifier_acc,
                m.mean_reward
            );
        }
    })?;
    let mut report = format!("rounds {}\n", outcome.history.len());
    if let Some(m) = outcome.history.last() {
        writeln!(report, "final classifier_loss {:.6} classifier_acc {:.4}", m.classifier_loss, m.classifier_acc)
            .expect("write to string");
    }
    writeln!(report, "run directory {}", dir.display()).expect("write to string");
    emit(out, &report)
}

pub fn cmd_replay(ckpt: &Path, class: &str, seed: u64, steps: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let run = LoadedRun::load(ckpt)?;
    let class: OpponentClass = class.parse()?;
    let env = EnvSpec::new(
        (*run.env.map).clone(),
        steps.unwrap_or(run.env.episode_length),
        run.env.primary_weight,
    )?;
    let mut rng = episode_rng(seed, 0);
    let record = rollout_episode(&env, run.behavior_policy(), class, &mut rng)?;
    let posterior = run.classifier.classify(&record.trajectory)?;
    let mut text = format!("replay class={} seed={seed} steps={}\n", class.name(), env.episode_length);
    for (t, (state, row)) in record.trajectory.states.iter().zip(&posterior.rows).enumerate() {
        writeln!(text, "step {t}").expect("write to string");
        if t > 0 {
            writeln!(text, "move {}", record.trajectory.actions[t - 1].name()).expect("write to string");
        }
        text.push_str(&state.render());
        if !text.ends_with('\n') {
            text.push('\n');
        }
        let top = crate::classifier::ClassPosterior::argmax(row);
        let name = OpponentClass::from_id(top).map(|c| c.name()).unwrap_or_default();
        writeln!(text, "top1 {name} p={:.4}", row[top]).expect("write to string");
    }
    emit(out, &text)
}

pub fn cmd_plot(metrics: &Path, svg: &Path, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(metrics).map_err(|e| Error::io(metrics, e))?;
    let rows = parse_metrics_csv(&text).map_err(|e| match e {
        Error::Format { what, detail } => Error::Format {
            what,
            detail: format!("{}: {detail}", metrics.display()),
        },
        other => other,
    })?;
    if let Some(parent) = svg.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(svg, render_svg(&rows)).map_err(|e| Error::io(svg, e))?;
    emit(out, &format!("wrote {}\n", svg.display()))
}

/// Where `eval` puts its output when `--out` is not given.
pub fn default_eval_root(ckpt: &Path) -> PathBuf {
    let parent = ckpt.parent();
    match parent {
        Some(p) if p.file_name().is_some_and(|n| n == "checkpoints") => {
            p.parent().map(Path::to_path_buf).unwrap_or_default()
        }
        _ => ckpt.to_path_buf(),
    }
}

pub fn cmd_eval(
    ckpt: &Path,
    episodes: usize,
    seed: u64,
    predictor: PredictorKind,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let run = LoadedRun::load(ckpt)?;
    let oracle = BayesOracle {
        primary_weight: run.env.primary_weight,
    };
    let p: &dyn TrajectoryPredictor = match predictor {
        PredictorKind::Classifier => &run.classifier,
        PredictorKind::Bayes => &oracle,
        PredictorKind::Label => &LabelPassThrough,
    };
    let report = evaluate(p, run.behavior_policy(), &run.env, &run.classes, episodes, seed)?;
    let root = out_dir.map(Path::to_path_buf).unwrap_or_else(|| default_eval_root(ckpt));
    let dir = root.join("eval");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("confusion.csv");
    fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    let mut text = format!("episodes {}\noverall_accuracy {:.4}\n", report.total(), report.overall_accuracy());
    for &c in &report.class_set {
        if let Some(acc) = report.class_accuracy(c) {
            writeln!(text, "class {} accuracy {acc:.4}", c.name()).expect("write to string");
        }
    }
    writeln!(text, "confusion {}", path.display()).expect("write to string");
    emit(out, &text)
}

const SVG_WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const PANEL_GAP: f64 = 50.0;

/// Two stacked panels: classifier loss over CLASSIFIER rounds and mean
/// reward over AGENT rounds, sharing the round axis.
pub fn render_svg(rows: &[RoundMetrics]) -> String {
    let loss: Vec<(f64, f64)> = rows
        .iter()
        .filter(|m| m.phase == Phase::Classifier)
        .map(|m| (m.round as f64, m.classifier_loss))
        .collect();
    let reward: Vec<(f64, f64)> = rows
        .iter()
        .filter(|m| m.phase == Phase::Agent)
        .map(|m| (m.round as f64, m.mean_reward))
        .collect();
    let first = rows.iter().map(|m| m.round).min().unwrap_or(0) as f64;
    let last = rows.iter().map(|m| m.round).max().unwrap_or(0) as f64;
    let x_range = (first, if last > first { last } else { first + 1.0 });
    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP + 40.0;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{height}" viewBox="0 0 {SVG_WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    )
    .expect("write to string");
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let panels = [("classifier loss", &loss, "#1f77b4"), ("mean reward", &reward, "#d62728")];
    for (i, (title, points, color)) in panels.into_iter().enumerate() {
        let top = MARGIN_TOP + i as f64 * (PANEL_HEIGHT + PANEL_GAP);
        panel(&mut svg, title, points, color, top, x_range);
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round</text>"#,
        MARGIN_LEFT + (SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / 2.0,
        height - 8.0
    )
    .expect("write to string");
    svg.push_str("</svg>\n");
    svg
}

fn panel(svg: &mut String, title: &str, points: &[(f64, f64)], color: &str, top: f64, x_range: (f64, f64)) {
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let (mut lo, mut hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    } else if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let sx = |x: f64| MARGIN_LEFT + (x - x_range.0) / (x_range.1 - x_range.0) * plot_w;
    let sy = |y: f64| top + PANEL_HEIGHT - (y - lo) / (hi - lo) * PANEL_HEIGHT;
    let w = |svg: &mut String, s: String| svg.push_str(&s);

    w(svg, format!(
        "<rect x=\"{MARGIN_LEFT:.2}\" y=\"{top:.2}\" width=\"{plot_w:.2}\" height=\"{PANEL_HEIGHT:.2}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    w(svg, format!("<text x=\"{MARGIN_LEFT:.2}\" y=\"{:.2}\">{title}</text>\n", top - 8.0));
    for (value, y) in [(hi, top + 4.0), (lo, top + PANEL_HEIGHT)] {
        w(svg, format!(
            "<text x=\"{:.2}\" y=\"{y:.2}\" text-anchor=\"end\">{value:.4}</text>\n",
            MARGIN_LEFT - 6.0
        ));
    }
    let bottom = top + PANEL_HEIGHT + 16.0;
    w(svg, format!("<text x=\"{MARGIN_LEFT:.2}\" y=\"{bottom:.2}\" text-anchor=\"middle\">{}</text>\n", x_range.0));
    w(svg, format!(
        "<text x=\"{:.2}\" y=\"{bottom:.2}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w,
        x_range.1
    ));
    let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    w(svg, format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    ));
}
