//! Multi-seed experiments: per-seed traces and a summary table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{Phase, PlannerConfig};
use crate::domains::problem_by_name;
use crate::error::{PlanError, Result};
use crate::exact::ExplicitMdp;
use crate::model::ProblemInstance;
use crate::simulator::{run_precursor, run_recurrent, Mode, RunConfig, RunTrace};

/// Largest state space evaluated exactly by default.
pub const DEFAULT_EXACT_LIMIT: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ExperimentSpec {
    /// Problem selector, as accepted by [`problem_by_name`].
    pub problem: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub phase_budget: usize,
    pub phases_per_step: usize,
    pub step_limit: usize,
    pub stop_at_goal: bool,
    /// Evaluate final policies exactly when |S| is at most this.
    pub exact_limit: u64,
    /// Also write each seed's final snapshot.
    pub write_snapshots: bool,
    pub out_dir: Option<PathBuf>,
    pub planner: PlannerConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let run = RunConfig::default();
        ExperimentSpec {
            problem: "3doors".into(),
            mode: run.mode,
            seeds: vec![0],
            phase_budget: run.phase_budget,
            phases_per_step: run.phases_per_step,
            step_limit: run.step_limit,
            stop_at_goal: run.stop_at_goal,
            exact_limit: DEFAULT_EXACT_LIMIT,
            write_snapshots: false,
            out_dir: None,
            planner: PlannerConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PlanError::Config(format!("experiment file: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PlanError::Config(format!("experiment file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            mode: self.mode,
            phase_budget: self.phase_budget,
            phases_per_step: self.phases_per_step,
            step_limit: self.step_limit,
            seed,
            stop_at_goal: self.stop_at_goal,
            planner: self.planner.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(PlanError::Config("no seeds given".into()));
        }
        self.run_config(0).validate()
    }

    /// Lines describing every setting, for the head of a run's output.
    pub fn header(&self) -> String {
        let c = &self.planner;
        let weights: Vec<String> = Phase::ALL.iter().map(|&p| format!("{p}={}", c.phase_weights.get(p))).collect();
        let thr = |t: Option<f64>| t.map_or("1/(4|W|)".to_string(), |t| t.to_string());
        format!(
            "# problem={} mode={} seeds={:?}\n\
             # phases={} phases-per-step={} step-limit={} stop-at-goal={}\n\
             # gamma={} gamma-p={} replanning={} n-sweeps={} value-only-sweeps={} variant={}\n\
             # refine-threshold={} coarsen-threshold={} weights: {}\n",
            self.problem,
            self.mode,
            self.seeds,
            self.phase_budget,
            self.phases_per_step,
            self.step_limit,
            self.stop_at_goal,
            c.gamma.map_or("problem default".to_string(), |g| g.to_string()),
            c.gamma_p,
            c.replanning,
            c.n_sweeps,
            c.value_only_sweeps,
            c.variant,
            thr(c.refine_threshold),
            thr(c.coarsen_threshold),
            weights.join(" ")
        )
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_worldview: usize,
    pub peak_worldview: usize,
    pub estimate: f64,
    pub exact: Option<f64>,
    pub goal_reached: Option<bool>,
    pub steps: usize,
    pub total_reward: f64,
    pub phase_counts: [u64; 5],
}

impl SeedSummary {
    pub const CSV_HEADER: &'static str = "seed,final_worldview_size,peak_worldview_size,estimate_s0,exact_s0,goal_reached,steps,total_reward,policy_value,policy_refine,proximity_calc,proximity_refine,proximity_coarsen";

    pub fn csv_line(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_default();
        let c = self.phase_counts;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.final_worldview,
            self.peak_worldview,
            self.estimate,
            opt(self.exact.map(|v| v.to_string())),
            opt(self.goal_reached.map(|g| g.to_string())),
            self.steps,
            self.total_reward,
            c[0],
            c[1],
            c[2],
            c[3],
            c[4]
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summaries: Vec<SeedSummary>,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

impl ExperimentResult {
    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", SeedSummary::CSV_HEADER)?;
        for s in &self.summaries {
            writeln!(out, "{}", s.csv_line())?;
        }
        Ok(())
    }
}

/// Summary of a recurrent trace, recomputed from its rows.
pub fn summarize_trace(
    seed: u64,
    problem: &ProblemInstance,
    trace: &RunTrace,
    exact: Option<f64>,
) -> Result<SeedSummary> {
    Ok(SeedSummary {
        seed,
        final_worldview: trace.final_snapshot.len(),
        peak_worldview: trace.peak_worldview,
        estimate: trace.final_snapshot.value_for(&problem.initial_state)?,
        exact,
        goal_reached: Some(trace.goal_reached()),
        steps: trace.rows.len(),
        total_reward: trace.total_reward(),
        phase_counts: trace.phase_counts,
    })
}

/// Runs every seed, writing `trace-<seed>.csv` (recurrent mode),
/// `snapshot-<seed>.txt` when asked, and `summary.csv` into `out_dir` when
/// one is set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let problem = Arc::new(problem_by_name(&spec.problem)?);
    run_experiment_on(spec, problem)
}

pub fn run_experiment_on(spec: &ExperimentSpec, problem: Arc<ProblemInstance>) -> Result<ExperimentResult> {
    spec.validate()?;
    let mdp = if problem.space.size() <= spec.exact_limit as u128 { Some(ExplicitMdp::build(&problem)?) } else { None };
    if let Some(dir) = &spec.out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for &seed in &spec.seeds {
        let cfg = spec.run_config(seed);
        let (summary, snapshot) = match spec.mode {
            Mode::Precursor => {
                let r = run_precursor(problem.clone(), &cfg, mdp.as_ref())?;
                let s = SeedSummary {
                    seed,
                    final_worldview: r.worldview_size,
                    peak_worldview: r.worldview_size,
                    estimate: r.estimate,
                    exact: r.exact,
                    goal_reached: None,
                    steps: 0,
                    total_reward: 0.0,
                    phase_counts: r.phase_counts,
                };
                (s, r.snapshot)
            }
            Mode::Recurrent => {
                let trace = run_recurrent(problem.clone(), &cfg)?;
                let exact = match &mdp {
                    Some(mdp) => Some(exact_value(&problem, mdp, &trace, &cfg)?),
                    None => None,
                };
                if let Some(dir) = &spec.out_dir {
                    let path = dir.join(format!("trace-{seed}.csv"));
                    trace.write_csv(&problem, std::io::BufWriter::new(fs::File::create(&path)?))?;
                    files.push(path);
                }
                (summarize_trace(seed, &problem, &trace, exact)?, trace.final_snapshot)
            }
        };
        log::info!("seed {seed}: {}", summary.csv_line());
        if let (Some(dir), true) = (&spec.out_dir, spec.write_snapshots) {
            let path = dir.join(format!("snapshot-{seed}.txt"));
            fs::write(&path, snapshot.to_text(&problem.space, &problem.model))?;
            files.push(path);
        }
        summaries.push(summary);
    }
    let mut result = ExperimentResult { summaries, files };
    if let Some(dir) = &spec.out_dir {
        let path = dir.join("summary.csv");
        let mut f = fs::File::create(&path)?;
        f.write_all(spec.header().as_bytes())?;
        result.write_summary(&mut f)?;
        result.files.push(path);
    }
    Ok(result)
}

fn exact_value(problem: &ProblemInstance, mdp: &ExplicitMdp, trace: &RunTrace, cfg: &RunConfig) -> Result<f64> {
    let gamma = cfg.planner.gamma.unwrap_or(problem.gamma_default);
    let snap = &trace.final_snapshot;
    let ev = crate::exact::evaluate_on(mdp, problem, |s| snap.action_for(s).unwrap_or(0), gamma, 1e-8)?;
    Ok(ev.values[problem.space.index_of(&problem.initial_state)])
}
