//! Command-line front end: `simulate`, `collect`, `train`, `eval`, `ablate`, `plot`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::harness::{
    ablation_csv, ablation_suite, collect, evaluate, load_dataset, rollout, run_episode, save_episode, train,
    write_dataset, write_loss_csv, AblationConfig, ExpertAgent, SensorKind, TaskId, METRICS_CSV_HEADER,
};
use crate::policy::{load_checkpoint, save_checkpoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "omnidp", version, about = "Panoramic point-cloud policy lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode (expert, or a policy with --checkpoint) and report the outcome.
    Simulate(Common),
    /// Record expert demonstrations into --out.
    Collect(Common),
    /// Behavior-clone a policy from the episodes in --in.
    Train(Common),
    /// Score a checkpoint over --trials seeded rollouts.
    Eval(Common),
    /// Train and score the full, no-omni and no-tap variants.
    Ablate(Common),
    /// Render a metrics or loss CSV (--in) as SVG (--out).
    Plot(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskId>,
    #[arg(long)]
    sensor: Option<SensorKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

impl Common {
    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(s) = self.sensor {
            cfg.sensor = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.eval_seed = s;
        }
        if let Some(n) = self.trials {
            if n == 0 {
                bail!("--trials must be >= 1");
            }
            cfg.eval_trials = n;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        let dir = self.out.as_deref().context("--out DIR is required")?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        Command::Simulate(c) => simulate(&c, out),
        Command::Collect(c) => collect_cmd(&c, out),
        Command::Train(c) => train_cmd(&c, out),
        Command::Eval(c) => eval_cmd(&c, out),
        Command::Ablate(c) => ablate_cmd(&c, out),
        Command::Plot(c) => plot_cmd(&c, out),
    }
}

fn simulate(c: &Common, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = c.run_config()?;
    let task = cfg.task_spec();
    let settings = cfg.sensor_settings();
    let (episode, outcome) = match &c.checkpoint {
        Some(p) => {
            let policy = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
            rollout(&policy, &task, cfg.sensor, &settings, cfg.seed)?
        }
        None => {
            let inst = task.generate(cfg.seed)?;
            let mut agent = ExpertAgent::new(cfg.expert_config(), 1);
            run_episode(&task, &inst, cfg.seed, cfg.sensor, &settings, &mut agent)?
        }
    };
    writeln!(
        out,
        "{} {} seed {}: success {} collision {} steps {}",
        cfg.task, cfg.sensor, cfg.seed, outcome.success, outcome.collision, outcome.steps
    )?;
    if c.out.is_some() {
        let path = c.out_dir()?.join("episode.odpe");
        save_episode(&episode, &path)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}

fn collect_cmd(c: &Common, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = c.run_config()?;
    let dir = c.out_dir()?;
    let (episodes, report) = collect(&cfg.collect_config())?;
    let paths = write_dataset(dir, &episodes)?;
    fs::write(dir.join("collect_report.txt"), format!("{report}\n"))?;
    writeln!(out, "{} {}: {report}; {} files in {}", cfg.task, cfg.sensor, paths.len(), dir.display())?;
    Ok(())
}

fn train_cmd(c: &Common, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = c.run_config()?;
    let data = c
        .input
        .clone()
        .or_else(|| cfg.dataset.clone())
        .context("--in DATASET_DIR (or `dataset` in the config) is required")?;
    let dir = c.out_dir()?;
    let episodes = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
    if episodes.is_empty() {
        bail!("no episode files in {}", data.display());
    }
    let trained = train(&cfg.train_config(), &episodes)?;
    let ckpt = dir.join("policy.odpw");
    save_checkpoint(&trained.policy, &ckpt)?;
    write_loss_csv(&dir.join("loss.csv"), &trained.losses)?;
    let last = trained.losses.last().copied().unwrap_or(f64::NAN);
    writeln!(
        out,
        "trained on {} episodes for {} steps (final loss {last:.6}); wrote {}",
        episodes.len(),
        trained.losses.len(),
        ckpt.display()
    )?;
    Ok(())
}

fn eval_cmd(c: &Common, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = c.run_config()?;
    let path = c.checkpoint.as_deref().context("--checkpoint PATH is required")?;
    let policy = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    let m = evaluate(&policy, &cfg.task_spec(), cfg.sensor, &cfg.sensor_settings(), cfg.eval_trials, cfg.eval_seed)?;
    let label = format!("{}/{}", cfg.task, cfg.sensor);
    writeln!(out, "{label}: {m}")?;
    if c.out.is_some() {
        let csv = format!("{METRICS_CSV_HEADER}\n{}\n", m.csv_row(&label));
        fs::write(c.out_dir()?.join("metrics.csv"), csv)?;
    }
    Ok(())
}

fn ablate_cmd(c: &Common, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = c.run_config()?;
    let dir = c.out_dir()?;
    let acfg = AblationConfig {
        task: cfg.task_spec(),
        settings: cfg.sensor_settings(),
        expert: cfg.expert_config(),
        train: cfg.train_config(),
        episodes: cfg.episodes,
        collect_seed: cfg.seed,
        trials: cfg.eval_trials,
        eval_seed: cfg.eval_seed,
    };
    let rows = ablation_suite(&acfg)?;
    let csv = ablation_csv(&rows);
    fs::write(dir.join("ablation.csv"), &csv)?;
    write!(out, "{csv}")?;
    Ok(())
}

fn plot_cmd(c: &Common, out: &mut dyn Write) -> anyhow::Result<()> {
    let input = c.input.as_deref().context("--in CSV is required")?;
    let target = c.out.as_deref().context("--out SVG is required")?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let (svg, table) = crate::plot::plot_csv(&text).with_context(|| format!("in {}", input.display()))?;
    if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(target, svg)?;
    write!(out, "{table}")?;
    Ok(())
}
