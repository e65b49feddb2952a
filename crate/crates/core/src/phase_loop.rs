//! The planner loop: stochastic choice among the phases, with a policy
//! snapshot after each one.

use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::ChaCha8Rng;

use crate::config::{Phase, PlannerConfig};
use crate::error::{ModelError, PlanError, Result};
use crate::model::{ActionModel, ProblemInstance};
use crate::planner::Planner;
use crate::proximity::ProximityReport;
use crate::space::{FactoredSpace, SpecificState};
use crate::worldview::{Pattern, StateId, Worldview, ABSTRACT};

/// Immutable copy of the worldview and policy at one point of the loop.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub seq: u64,
    pub phases: u64,
    worldview: Worldview,
    policy: Vec<u32>,
    values: Vec<f64>,
}

impl PolicySnapshot {
    pub fn capture(planner: &Planner, seq: u64, phases: u64) -> Self {
        let wv = planner.worldview().detached();
        let mut policy = vec![0; wv.id_bound()];
        let mut values = vec![0.0; wv.id_bound()];
        for id in wv.ids() {
            policy[id as usize] = planner.tables().policy[id as usize];
            values[id as usize] = planner.tables().value[id as usize];
        }
        PolicySnapshot { seq, phases, worldview: wv, policy, values }
    }

    pub fn worldview(&self) -> &Worldview {
        &self.worldview
    }

    pub fn len(&self) -> usize {
        self.worldview.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worldview.is_empty()
    }

    fn locate(&self, s: &SpecificState) -> Result<StateId> {
        Ok(self.worldview.locate(s)?)
    }

    pub fn action_for(&self, s: &SpecificState) -> Result<usize> {
        Ok(self.policy[self.locate(s)? as usize] as usize)
    }

    pub fn value_for(&self, s: &SpecificState) -> Result<f64> {
        Ok(self.values[self.locate(s)? as usize])
    }

    /// Text form: a header line, then one line per state with a label or `*`
    /// per dimension, the action name and the value.
    pub fn to_text(&self, space: &FactoredSpace, model: &ActionModel) -> String {
        let mut out = format!("snapshot {} {} {}\n", self.seq, self.phases, self.worldview.len());
        for id in self.worldview.sorted_ids() {
            let pat = self.worldview.pattern(id);
            for (d, &v) in pat.values().iter().enumerate() {
                let label = if v == ABSTRACT { "*" } else { &space.dim(d).values()[v as usize] };
                let _ = write!(out, "{label} ");
            }
            let _ = writeln!(
                out,
                "| {} {:e}",
                model.action_name(self.policy[id as usize] as usize),
                self.values[id as usize]
            );
        }
        out
    }

    pub fn from_text(text: &str, space: &FactoredSpace, model: &ActionModel) -> Result<Self> {
        let err = |line: usize, msg: &str| PlanError::Model(ModelError::Parse { line, msg: msg.to_string() });
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty snapshot"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "snapshot" {
            return Err(err(1, "expected `snapshot <seq> <phases> <states>`"));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| err(1, "bad number in header"));
        let (seq, phases, count) = (num(h[1])?, num(h[2])?, num(h[3])?);
        let mut patterns = Vec::new();
        let mut acts = Vec::new();
        for (i, line) in lines {
            let (lhs, rhs) = line.split_once('|').ok_or_else(|| err(i + 1, "missing `|`"))?;
            let labels: Vec<&str> = lhs.split_whitespace().collect();
            if labels.len() != space.dim_count() {
                return Err(err(i + 1, "wrong number of dimensions"));
            }
            let mut vals = Vec::with_capacity(labels.len());
            for (d, l) in labels.iter().enumerate() {
                vals.push(if *l == "*" {
                    ABSTRACT
                } else {
                    space.dim(d).value_index(l).ok_or_else(|| err(i + 1, &format!("unknown value `{l}`")))?
                });
            }
            let mut r = rhs.split_whitespace();
            let a = r.next().ok_or_else(|| err(i + 1, "missing action"))?;
            let a = model.action_index(a).map_err(|_| err(i + 1, &format!("unknown action `{a}`")))?;
            let v: f64 = r.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(i + 1, "missing value"))?;
            patterns.push(Pattern::new(vals));
            acts.push((a as u32, v));
        }
        if patterns.len() as u64 != count {
            return Err(err(1, "state count does not match header"));
        }
        let wv = Worldview::from_patterns(space, patterns);
        if let Some(v) = wv.check_partition().first() {
            return Err(PlanError::Config(format!("snapshot is not a partition: {v:?}")));
        }
        // from_patterns assigns ids in insertion order.
        let (policy, values) = acts.into_iter().unzip();
        Ok(PolicySnapshot { seq, phases, worldview: wv, policy, values })
    }
}

/// Single-value slot holding the agent's latest state.
#[derive(Debug)]
pub struct Mailbox(Mutex<SpecificState>);

impl Mailbox {
    pub fn new(s: SpecificState) -> Self {
        Mailbox(Mutex::new(s))
    }

    pub fn post(&self, s: SpecificState) {
        *self.0.lock().expect("mailbox poisoned") = s;
    }

    pub fn read(&self) -> SpecificState {
        self.0.lock().expect("mailbox poisoned").clone()
    }
}

/// Holds the latest snapshot; readers always see a complete one.
#[derive(Debug)]
pub struct SnapshotCell(Mutex<Arc<PolicySnapshot>>);

impl SnapshotCell {
    pub fn new(s: Arc<PolicySnapshot>) -> Self {
        SnapshotCell(Mutex::new(s))
    }

    pub fn publish(&self, s: Arc<PolicySnapshot>) {
        *self.0.lock().expect("snapshot cell poisoned") = s;
    }

    pub fn latest(&self) -> Arc<PolicySnapshot> {
        self.0.lock().expect("snapshot cell poisoned").clone()
    }
}

/// Outcome of one loop iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub worldview_size: usize,
    /// Refinements, merges or policy changes made by the phase.
    pub changes: usize,
    /// Set when the phase solved for proximity.
    pub proximity: Option<ProximityReport>,
}

/// Draws phases by weight.
#[derive(Debug, Clone)]
pub struct PhaseSampler {
    dist: WeightedIndex<f64>,
}

impl PhaseSampler {
    pub fn new(config: &PlannerConfig) -> Result<Self> {
        let dist = WeightedIndex::new(config.phase_weights.as_array())
            .map_err(|e| PlanError::Config(format!("phase weights: {e}")))?;
        Ok(PhaseSampler { dist })
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Phase {
        Phase::ALL[self.dist.sample(rng)]
    }
}

/// Planner plus loop state.
#[derive(Debug, Clone)]
pub struct PhaseLoop {
    planner: Planner,
    rng: ChaCha8Rng,
    sampler: PhaseSampler,
    seq: u64,
    phases: u64,
    counts: [u64; 5],
    latest: Arc<PolicySnapshot>,
}

impl PhaseLoop {
    /// Initial abstraction and tables, one policy and value phase, and
    /// snapshot 0.
    pub fn new(problem: Arc<ProblemInstance>, config: PlannerConfig, rng: ChaCha8Rng) -> Result<Self> {
        Self::from_planner(Planner::new(problem, config)?, rng)
    }

    pub fn from_planner(planner: Planner, rng: ChaCha8Rng) -> Result<Self> {
        let sampler = PhaseSampler::new(planner.config())?;
        let latest = Arc::new(PolicySnapshot::capture(&planner, 0, 0));
        Ok(PhaseLoop { planner, rng, sampler, seq: 0, phases: 0, counts: [0; 5], latest })
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn planner_mut(&mut self) -> &mut Planner {
        &mut self.planner
    }

    pub fn latest(&self) -> &Arc<PolicySnapshot> {
        &self.latest
    }

    pub fn phases_total(&self) -> u64 {
        self.phases
    }

    /// Executions per phase, in [`Phase::ALL`] order.
    pub fn phase_counts(&self) -> [u64; 5] {
        self.counts
    }

    fn ensure_proximity(&mut self, s_cur: &SpecificState) -> Result<Option<ProximityReport>> {
        if self.planner.proximity_is_fresh(s_cur) {
            return Ok(None);
        }
        let r = self.planner.compute_proximity(s_cur)?;
        log::trace!("proximity: {} iterations, sum {}", r.iterations, r.sum);
        Ok(Some(r))
    }

    /// Runs one phase for the agent at `s_cur`.
    pub fn execute(&mut self, phase: Phase, s_cur: &SpecificState) -> Result<PhaseRecord> {
        let mut proximity = None;
        let changes = match phase {
            Phase::PolicyValue => self.planner.policy_value_phase(),
            Phase::PolicyRefine => self.planner.policy_based_refinement(&mut self.rng)?,
            Phase::ProximityCalc => {
                proximity = Some(self.planner.compute_proximity(s_cur)?);
                0
            }
            Phase::ProximityRefine => {
                proximity = self.ensure_proximity(s_cur)?;
                let (_, n) = self.planner.proximity_based_refinement(&mut self.rng)?;
                let k = self.planner.config().value_only_sweeps;
                self.planner.value_only_phase(k);
                n
            }
            Phase::ProximityCoarsen => {
                proximity = self.ensure_proximity(s_cur)?;
                self.planner.proximity_based_coarsening(&mut self.rng)?
            }
        };
        self.counts[Phase::ALL.iter().position(|&p| p == phase).unwrap()] += 1;
        self.phases += 1;
        Ok(PhaseRecord { phase, worldview_size: self.planner.worldview().len(), changes, proximity })
    }

    /// Runs `budget` loop iterations. Each draws a phase, executes it, reads
    /// the current state from `source` and emits a snapshot to `sink`.
    pub fn run_phases(
        &mut self,
        budget: usize,
        mut source: impl FnMut() -> SpecificState,
        mut sink: impl FnMut(&Arc<PolicySnapshot>, &PhaseRecord),
    ) -> Result<()> {
        let mut s_cur = source();
        for _ in 0..budget {
            let phase = self.sampler.draw(&mut self.rng);
            let start = Instant::now();
            let record = self.execute(phase, &s_cur)?;
            s_cur = source();
            self.seq += 1;
            self.latest = Arc::new(PolicySnapshot::capture(&self.planner, self.seq, self.phases));
            if log::log_enabled!(log::Level::Debug) {
                let s0 = &self.planner.problem().initial_state;
                log::debug!(
                    "phase {} {}: |W|={} {:?} V(s0)={:.4}",
                    self.seq,
                    phase,
                    record.worldview_size,
                    start.elapsed(),
                    self.planner.value_of(s0).unwrap_or(f64::NAN)
                );
            }
            sink(&self.latest, &record);
        }
        Ok(())
    }
}
