//! The world and the executive: samples true transitions, acts on the latest
//! policy snapshot and records traces.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PlannerConfig;
use crate::error::{PlanError, Result};
use crate::exact::{evaluate_on, ExplicitMdp};
use crate::model::{ActionModel, ProblemInstance};
use crate::phase_loop::{Mailbox, PhaseLoop, PolicySnapshot, SnapshotCell};
use crate::space::SpecificState;

/// Stream ids for the two generators derived from a run seed.
const WORLD_STREAM: u64 = 0;
const PLANNER_STREAM: u64 = 1;

/// Tolerance of the exact evaluation of a final snapshot.
const EVAL_TOL: f64 = 1e-8;

/// How planning and acting interleave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Plan from the initial state for the whole budget, then stop.
    #[default]
    Precursor,
    /// Alternate a fixed number of phases with one world step.
    Recurrent,
}

impl FromStr for Mode {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precursor" => Ok(Mode::Precursor),
            "recurrent" => Ok(Mode::Recurrent),
            _ => Err(PlanError::Config(format!("unknown mode `{s}` (expected precursor or recurrent)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Precursor => "precursor",
            Mode::Recurrent => "recurrent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct RunConfig {
    pub mode: Mode,
    /// Phases run in precursor mode.
    pub phase_budget: usize,
    /// Phases between world steps in recurrent mode.
    pub phases_per_step: usize,
    /// World steps in recurrent mode.
    pub step_limit: usize,
    pub seed: u64,
    /// End a recurrent run on entering a goal state.
    pub stop_at_goal: bool,
    pub planner: PlannerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Precursor,
            phase_budget: 1000,
            phases_per_step: 20,
            step_limit: 500,
            seed: 0,
            stop_at_goal: true,
            planner: PlannerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Precursor if self.phase_budget == 0 => {
                return Err(PlanError::Config("phase budget must be positive".into()))
            }
            Mode::Recurrent if self.phases_per_step == 0 || self.step_limit == 0 => {
                return Err(PlanError::Config("phases per step and step limit must be positive".into()))
            }
            _ => {}
        }
        self.planner.validate()
    }

    /// Independent world and planner generators for this run's seed.
    pub fn rngs(&self) -> (ChaCha8Rng, ChaCha8Rng) {
        let mut world = ChaCha8Rng::seed_from_u64(self.seed);
        world.set_stream(WORLD_STREAM);
        let mut planner = ChaCha8Rng::seed_from_u64(self.seed);
        planner.set_stream(PLANNER_STREAM);
        (world, planner)
    }
}

/// Samples one transition. The reward is that of the pre-step state.
pub fn step_world<R: Rng>(model: &ActionModel, s: &SpecificState, a: usize, rng: &mut R) -> Result<(SpecificState, f64)> {
    let reward = model.reward_of_state(s);
    let mut dist = model.transition_distribution(a, s)?;
    let next = if dist.len() == 1 {
        dist.pop().unwrap().0
    } else {
        let w = WeightedIndex::new(dist.iter().map(|e| e.1))
            .map_err(|e| PlanError::Config(format!("transition distribution: {e}")))?;
        dist.swap_remove(w.sample(rng)).0
    };
    Ok((next, reward))
}

/// Discounted return of following `snapshot` from `s` for `steps` steps.
pub fn rollout<R: Rng>(
    problem: &ProblemInstance,
    snapshot: &PolicySnapshot,
    s: &SpecificState,
    gamma: f64,
    steps: usize,
    rng: &mut R,
) -> Result<f64> {
    let (mut s, mut total, mut disc) = (s.clone(), 0.0, 1.0);
    for _ in 0..steps {
        let a = snapshot.action_for(&s)?;
        let (next, r) = step_world(&problem.model, &s, a, rng)?;
        total += disc * r;
        disc *= gamma;
        s = next;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct PrecursorResult {
    pub snapshot: Arc<PolicySnapshot>,
    pub worldview_size: usize,
    /// The planner's own value at the initial state.
    pub estimate: f64,
    /// Exact value of the final policy at the initial state, when requested.
    pub exact: Option<f64>,
    pub phase_counts: [u64; 5],
}

/// Plans with the current state pinned to the initial state. Passing `mdp`
/// evaluates the final policy exactly on it.
pub fn run_precursor(problem: Arc<ProblemInstance>, cfg: &RunConfig, mdp: Option<&ExplicitMdp>) -> Result<PrecursorResult> {
    cfg.validate()?;
    let (_, prng) = cfg.rngs();
    let mut lp = PhaseLoop::new(problem.clone(), cfg.planner.clone(), prng)?;
    let s0 = problem.initial_state.clone();
    lp.run_phases(cfg.phase_budget, || s0.clone(), |_, _| {})?;
    let snapshot = lp.latest().clone();
    let estimate = snapshot.value_for(&s0)?;
    let exact = match mdp {
        Some(mdp) => {
            let gamma = lp.planner().gamma();
            let ev = evaluate_on(mdp, &problem, |s| snapshot.action_for(s).unwrap_or(0), gamma, EVAL_TOL)?;
            Some(ev.values[problem.space.index_of(&s0)])
        }
        None => None,
    };
    Ok(PrecursorResult {
        worldview_size: snapshot.len(),
        snapshot,
        estimate,
        exact,
        phase_counts: lp.phase_counts(),
    })
}

/// One world step of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub state: SpecificState,
    pub action: usize,
    pub reward: f64,
    pub worldview_size: usize,
    pub snapshot_seq: u64,
    pub phases_total: u64,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Step at which a goal state was entered.
    pub goal_step: Option<usize>,
    pub final_state: SpecificState,
    pub peak_worldview: usize,
    pub final_snapshot: Arc<PolicySnapshot>,
    pub phase_counts: [u64; 5],
}

impl RunTrace {
    pub fn goal_reached(&self) -> bool {
        self.goal_step.is_some()
    }

    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    pub fn discounted_reward(&self, gamma: f64) -> f64 {
        self.rows.iter().rev().fold(0.0, |acc, r| r.reward + gamma * acc)
    }

    pub fn worldview_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().map(|r| r.worldview_size)
    }

    pub const CSV_HEADER: &'static str = "step,x_state,action,reward,worldview_size,snapshot_seq,phases_total";

    pub fn write_csv<W: Write>(&self, problem: &ProblemInstance, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                problem.space.format_state(&r.state),
                problem.model.action_name(r.action),
                r.reward,
                r.worldview_size,
                r.snapshot_seq,
                r.phases_total
            )?;
        }
        Ok(())
    }
}

/// Tracks the agent between steps; shared by both recurrent drivers.
struct Executive<'a> {
    problem: &'a ProblemInstance,
    cfg: &'a RunConfig,
    world: ChaCha8Rng,
    s: SpecificState,
    rows: Vec<TraceRow>,
    goal_step: Option<usize>,
    peak: usize,
}

impl<'a> Executive<'a> {
    fn new(problem: &'a ProblemInstance, cfg: &'a RunConfig, world: ChaCha8Rng) -> Self {
        let goal_step = problem.is_goal(&problem.initial_state).then_some(0);
        Executive { problem, cfg, world, s: problem.initial_state.clone(), rows: Vec::new(), goal_step, peak: 0 }
    }

    fn done(&self) -> bool {
        self.rows.len() >= self.cfg.step_limit || (self.cfg.stop_at_goal && self.goal_step.is_some())
    }

    /// Acts on `snap` for one step and returns the new state.
    fn act(&mut self, snap: &PolicySnapshot) -> Result<SpecificState> {
        let a = snap.action_for(&self.s)?;
        let (next, reward) = step_world(&self.problem.model, &self.s, a, &mut self.world)?;
        let step = self.rows.len();
        self.peak = self.peak.max(snap.len());
        self.rows.push(TraceRow {
            step,
            state: std::mem::replace(&mut self.s, next),
            action: a,
            reward,
            worldview_size: snap.len(),
            snapshot_seq: snap.seq,
            phases_total: snap.phases,
        });
        if self.goal_step.is_none() && self.problem.is_goal(&self.s) {
            self.goal_step = Some(step + 1);
        }
        Ok(self.s.clone())
    }

    fn finish(self, final_snapshot: Arc<PolicySnapshot>, phase_counts: [u64; 5]) -> RunTrace {
        RunTrace {
            rows: self.rows,
            goal_step: self.goal_step,
            final_state: self.s,
            peak_worldview: self.peak.max(final_snapshot.len()),
            final_snapshot,
            phase_counts,
        }
    }
}

/// Alternates `phases_per_step` phases with one world step, on one thread.
/// Deterministic in the run seed.
pub fn run_recurrent(problem: Arc<ProblemInstance>, cfg: &RunConfig) -> Result<RunTrace> {
    run_recurrent_with(problem, cfg, |_, _| {})
}

/// As [`run_recurrent`], calling `observe` with each trace row as it is made.
pub fn run_recurrent_with(
    problem: Arc<ProblemInstance>,
    cfg: &RunConfig,
    mut observe: impl FnMut(&TraceRow, &PolicySnapshot),
) -> Result<RunTrace> {
    cfg.validate()?;
    let (world, prng) = cfg.rngs();
    let mut lp = PhaseLoop::new(problem.clone(), cfg.planner.clone(), prng)?;
    let mut ex = Executive::new(&problem, cfg, world);
    while !ex.done() {
        let s = ex.s.clone();
        lp.run_phases(cfg.phases_per_step, || s.clone(), |_, _| {})?;
        let snap = lp.latest().clone();
        ex.act(&snap)?;
        observe(ex.rows.last().unwrap(), &snap);
    }
    let last = lp.latest().clone();
    Ok(ex.finish(last, lp.phase_counts()))
}

/// Runs the planner on its own thread, talking to the executive only through
/// the snapshot cell and the current-state mailbox. Each world step waits
/// until `phases_per_step` more phases have been published. The
/// interleaving, and so the trace, is not deterministic.
pub fn run_recurrent_concurrent(problem: Arc<ProblemInstance>, cfg: &RunConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let (world, prng) = cfg.rngs();
    let lp = PhaseLoop::new(problem.clone(), cfg.planner.clone(), prng)?;
    let cell = SnapshotCell::new(lp.latest().clone());
    let mailbox = Mailbox::new(problem.initial_state.clone());
    let stop = AtomicBool::new(false);
    let mut ex = Executive::new(&problem, cfg, world);

    std::thread::scope(|scope| {
        let planner = scope.spawn(|| -> Result<PhaseLoop> {
            let mut lp = lp;
            while !stop.load(Ordering::Acquire) {
                lp.run_phases(1, || mailbox.read(), |snap, _| cell.publish(snap.clone()))?;
            }
            Ok(lp)
        });
        let mut acted = Ok(());
        let mut target = 0u64;
        while !ex.done() {
            target += cfg.phases_per_step as u64;
            let snap = loop {
                let snap = cell.latest();
                if snap.phases >= target || planner.is_finished() {
                    break snap;
                }
                std::thread::yield_now();
            };
            if planner.is_finished() && snap.phases < target {
                break;
            }
            match ex.act(&snap) {
                Ok(s) => mailbox.post(s),
                Err(e) => {
                    acted = Err(e);
                    break;
                }
            }
        }
        stop.store(true, Ordering::Release);
        let lp = planner.join().expect("planner thread panicked")?;
        acted?;
        let counts = lp.phase_counts();
        Ok(ex.finish(cell.latest(), counts))
    })
}

/// Runs in the mode the configuration selects. Precursor results are
/// reported as a trace of length zero.
pub fn run(problem: Arc<ProblemInstance>, cfg: &RunConfig) -> Result<RunTrace> {
    match cfg.mode {
        Mode::Recurrent => run_recurrent(problem, cfg),
        Mode::Precursor => {
            let r = run_precursor(problem.clone(), cfg, None)?;
            Ok(RunTrace {
                rows: Vec::new(),
                goal_step: None,
                final_state: problem.initial_state.clone(),
                peak_worldview: r.worldview_size,
                final_snapshot: r.snapshot,
                phase_counts: r.phase_counts,
            })
        }
    }
}
