use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use dynabs::config::{Phase, PhaseWeights, Variant};
use dynabs::domains::problem_by_name;
use dynabs::exact::{evaluate_policy_exact, solve_exact};
use dynabs::experiment::{run_experiment_on, ExperimentSpec};
use dynabs::phase_loop::PolicySnapshot;
use dynabs::simulator::Mode;

const EXACT_TOL: f64 = 1e-8;

/// Plans in factored MDPs over a dynamically refined partition of the state
/// space, and runs seeded experiments.
#[derive(Debug, Parser)]
#[command(name = "dynabs", version)]
struct Args {
    /// Problem: 3doors, 1key, 3keys, shuttlebot, 10x10, robot4:K,
    /// tireworld:sample:N, tireworld:FILE or file:FILE.
    #[arg(long)]
    problem: Option<String>,
    /// Experiment file (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_p: Option<f64>,
    /// Probability the estimated future policy leaves the current action.
    #[arg(long)]
    replanning: Option<f64>,
    #[arg(long)]
    n_sweeps: Option<usize>,
    #[arg(long)]
    value_only_sweeps: Option<usize>,
    #[arg(long)]
    refine_threshold: Option<f64>,
    #[arg(long)]
    coarsen_threshold: Option<f64>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Phases to run besides policy-value (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    enable: Vec<Phase>,
    /// Phase weight as PHASE=W (repeatable); applied after --enable.
    #[arg(long, value_parser = parse_weight)]
    weight: Vec<(Phase, f64)>,
    /// Phase budget in precursor mode.
    #[arg(long)]
    phases: Option<usize>,
    /// Phases between world steps in recurrent mode.
    #[arg(long)]
    phases_per_step: Option<usize>,
    /// World step limit in recurrent mode.
    #[arg(long)]
    steps: Option<usize>,
    /// Keep stepping after the goal is reached.
    #[arg(long)]
    no_stop_at_goal: bool,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<u64>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate final policies exactly when |S| is at most this (0 disables).
    #[arg(long)]
    exact_limit: Option<u64>,
    #[arg(long, env = "DYNABS_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Write each seed's final snapshot into the output directory.
    #[arg(long)]
    snapshots: bool,
    /// Print the optimal value of the initial state and exit.
    #[arg(long)]
    eval_exact: bool,
    /// Evaluate a saved snapshot exactly and exit.
    #[arg(long)]
    evaluate_snapshot: Option<PathBuf>,
    /// Write the merged experiment file and exit.
    #[arg(long)]
    save_config: Option<PathBuf>,
    /// List the built-in problems and exit.
    #[arg(long)]
    list_problems: bool,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn parse_weight(s: &str) -> Result<(Phase, f64), String> {
    let (p, w) = s.split_once('=').ok_or("expected PHASE=WEIGHT")?;
    let p: Phase = p.parse().map_err(|e| format!("{e}"))?;
    let w: f64 = w.parse().map_err(|_| format!("bad weight `{w}`"))?;
    Ok((p, w))
}

impl Args {
    /// The file's spec (or the defaults) with every given flag applied.
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentSpec::default(),
        };
        if let Some(p) = &self.problem {
            spec.problem = p.clone();
        }
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        let c = &mut spec.planner;
        macro_rules! set {
            ($($flag:ident => $field:expr),*) => {$( if let Some(v) = self.$flag { $field = v; } )*};
        }
        set!(gamma_p => c.gamma_p, replanning => c.replanning, n_sweeps => c.n_sweeps,
             value_only_sweeps => c.value_only_sweeps, variant => c.variant);
        if self.gamma.is_some() {
            c.gamma = self.gamma;
        }
        if self.refine_threshold.is_some() {
            c.refine_threshold = self.refine_threshold;
        }
        if self.coarsen_threshold.is_some() {
            c.coarsen_threshold = self.coarsen_threshold;
        }
        if !self.enable.is_empty() {
            let mut phases = vec![Phase::PolicyValue];
            phases.extend(&self.enable);
            c.phase_weights = PhaseWeights::only(&phases);
        }
        for &(p, w) in &self.weight {
            *c.phase_weights.get_mut(p) = w;
        }
        set!(phases => spec.phase_budget, phases_per_step => spec.phases_per_step, steps => spec.step_limit,
             exact_limit => spec.exact_limit);
        if self.no_stop_at_goal {
            spec.stop_at_goal = false;
        }
        if self.seeds.is_some() || self.seed.is_some() {
            let count = self.seeds.unwrap_or(spec.seeds.len() as u64);
            let base = self.seed.or(spec.seeds.first().copied()).unwrap_or(0);
            spec.seeds = (base..base + count).collect();
        }
        if self.out_dir.is_some() {
            spec.out_dir = self.out_dir.clone();
        }
        if self.snapshots {
            spec.write_snapshots = true;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(args: Args) -> Result<()> {
    let mut out = std::io::stdout().lock();
    if args.list_problems {
        for p in ["3doors", "1key", "3keys", "shuttlebot", "10x10", "robot4:K", "tireworld:sample:N", "tireworld:FILE", "file:FILE"] {
            writeln!(out, "{p}")?;
        }
        return Ok(());
    }
    let spec = args.spec()?;
    if let Some(path) = &args.save_config {
        std::fs::write(path, spec.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    }
    let problem = std::sync::Arc::new(problem_by_name(&spec.problem)?);
    let gamma = spec.planner.gamma.unwrap_or(problem.gamma_default);
    let s0 = &problem.initial_state;
    if args.eval_exact {
        let sol = solve_exact(&problem, gamma, EXACT_TOL)?;
        writeln!(out, "problem {} |S|={} gamma={gamma}", problem.name, problem.space.size())?;
        writeln!(out, "V*(s0) = {:.4}", sol.values[problem.space.index_of(s0)])?;
        return Ok(());
    }
    if let Some(path) = &args.evaluate_snapshot {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let snap = PolicySnapshot::from_text(&text, &problem.space, &problem.model)?;
        let ev = evaluate_policy_exact(&problem, |s| snap.action_for(s).unwrap_or(0), gamma, EXACT_TOL)?;
        writeln!(out, "snapshot {} |W|={} gamma={gamma}", snap.seq, snap.len())?;
        writeln!(out, "estimate V(s0) = {:.4}", snap.value_for(s0)?)?;
        writeln!(out, "exact V(s0) = {:.4}", ev.values[problem.space.index_of(s0)])?;
        return Ok(());
    }
    write!(out, "{}", spec.header())?;
    out.flush()?;
    let result = run_experiment_on(&spec, problem)?;
    result.write_summary(&mut out)?;
    for f in &result.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
