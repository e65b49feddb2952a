//! End-to-end checks, one line per criterion. Run with
//! `cargo test -p dynabs --test acceptance`; set `ONLY=4,7` to run a subset
//! (criterion 7 collects sums from 4 to 6, so it needs them too).

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynabs::abstraction::{coarsening_groups, select_initial_abstraction};
use dynabs::config::{Phase, PhaseWeights, PlannerConfig, Variant};
use dynabs::domains::{build_grid_problem, build_robot4, build_tireworld, GridVariant, RoadGraph};
use dynabs::exact::{evaluate_on, solve_exact, ExplicitMdp};
use dynabs::phase_loop::PhaseLoop;
use dynabs::planner::Planner;
use dynabs::simulator::{run_recurrent, Mode, RunConfig};
use dynabs::worldview::{abstract_transition, Pattern, PlannerTables, Worldview, ABSTRACT, DEFAULT_WORLDVIEW_CAP};
use dynabs::{Dimension, FactoredSpace, ProblemInstance};

const LONG: f64 = 0.99999;
const SHORT: f64 = 0.95;
const EXACT_TOL: f64 = 1e-9;
const SEEDS: u64 = 10;
const PHASES: usize = 1000;
/// Refinement threshold for the combined-refinement runs on 3Keys; the
/// proportional default over-refines there (see README).
const COMBINED_THRESHOLD: f64 = 1e-10;
const RECURRENT_RUNS: u64 = 20;
const RECURRENT_STEPS: usize = 300;
const PHASES_PER_STEP: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

#[derive(Default)]
struct Ctx {
    /// Proximity sums from every solve during criteria 4 to 6.
    proximity_sums: Vec<f64>,
    /// Worldviews reached in criteria 5 and 6, for the transition check.
    worldviews: Vec<(Arc<ProblemInstance>, Worldview)>,
}

fn grid(v: GridVariant) -> Arc<ProblemInstance> {
    Arc::new(build_grid_problem(v).unwrap())
}

fn s0_index(p: &ProblemInstance) -> usize {
    p.space.index_of(&p.initial_state)
}

fn c1_exact(_: &mut Ctx) -> Outcome {
    let cases = [
        (GridVariant::ThreeDoors, LONG, -27.50),
        (GridVariant::ThreeDoors, SHORT, -14.63),
        (GridVariant::OneKey, LONG, -79.47),
        (GridVariant::OneKey, SHORT, -19.59),
        (GridVariant::ThreeKeys, LONG, -61.98),
        (GridVariant::ThreeKeys, SHORT, -18.99),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (v, gamma, want) in cases {
        let p = grid(v);
        let t = Instant::now();
        let got = solve_exact(&p, gamma, EXACT_TOL).unwrap().values[s0_index(&p)];
        let dt = t.elapsed();
        pass &= (got - want).abs() <= 0.01 && dt <= Duration::from_secs(300);
        parts.push(format!("{}@{gamma} {got:.3} ({:.1}s)", v.name(), dt.as_secs_f64()));
    }
    Outcome::new(pass, parts.join(", "))
}

fn c2_sizes(_: &mut Ctx) -> Outcome {
    let mut rows: Vec<(String, usize, u128, usize, u128)> = Vec::new();
    for (v, dims, size) in [
        (GridVariant::ThreeDoors, 6, 1600),
        (GridVariant::OneKey, 7, 6400),
        (GridVariant::ThreeKeys, 9, 12800),
        (GridVariant::Shuttlebot, 7, 4800),
        (GridVariant::TenByTen, 8, 160_000),
    ] {
        let p = build_grid_problem(v).unwrap();
        rows.push((v.name().into(), p.space.dim_count(), p.space.size(), dims, size));
    }
    for k in [10usize, 15, 20, 25] {
        let p = build_robot4(k).unwrap();
        rows.push((format!("robot4-{k}"), p.space.dim_count(), p.space.size(), k + 1, (k as u128) << k));
    }
    for n in [5usize, 8, 19] {
        let p = build_tireworld(&RoadGraph::sample(n)).unwrap();
        rows.push((format!("tireworld-{n}"), p.space.dim_count(), p.space.size(), 2 * n + 2, 1u128 << (2 * n + 2)));
    }
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| (r.1, r.2) != (r.3, r.4))
        .map(|r| format!("{}: {} dims / {} states, want {} / {}", r.0, r.1, r.2, r.3, r.4))
        .collect();
    if bad.is_empty() {
        Outcome::new(true, format!("{} problems match", rows.len()))
    } else {
        Outcome::new(false, bad.join("; "))
    }
}

fn c3_initial(_: &mut Ctx) -> Outcome {
    let doors = grid(GridVariant::ThreeDoors);
    let keys = grid(GridVariant::ThreeKeys);
    let size = |p: &ProblemInstance, r, n| select_initial_abstraction(p, r, n, DEFAULT_WORLDVIEW_CAP).unwrap().len();
    let got = [size(&doors, true, false), size(&doors, true, true), size(&keys, true, true), size(&doors, false, false)];
    Outcome::new(got == [200, 212, 224, 1], format!("3doors reward {} both {}, 3keys both {}, none {}", got[0], got[1], got[2], got[3]))
}

fn c4_ostrich(ctx: &mut Ctx) -> Outcome {
    let p = grid(GridVariant::ThreeDoors);
    let mdp = ExplicitMdp::build(&p).unwrap();
    let config = PlannerConfig { gamma: Some(LONG), variant: Variant::Simple, ..Default::default() };
    let mut pl = Planner::new(p.clone(), config).unwrap();
    let mut last = f64::NAN;
    for _ in 0..20_000 {
        pl.policy_value_phase();
        let v = pl.value_of(&p.initial_state).unwrap();
        if (v - last).abs() < 1e-9 {
            break;
        }
        last = v;
    }
    let estimate = pl.value_of(&p.initial_state).unwrap();
    let exact = evaluate_on(&mdp, &p, |s| pl.action_of(s).unwrap(), LONG, EXACT_TOL).unwrap().values[s0_index(&p)];
    ctx.proximity_sums.push(pl.compute_proximity(&p.initial_state).unwrap().sum);
    let pass = (exact + 100_000.0).abs() <= 0.5 && (estimate + 19.0).abs() <= 1.0;
    Outcome::new(pass, format!("exact {exact:.3}, estimate {estimate:.4}"))
}

/// Pre-cursor runs from s0; returns `(|W|, exact V(s0))` per seed.
fn precursor_runs(
    ctx: &mut Ctx,
    p: &Arc<ProblemInstance>,
    config: &PlannerConfig,
    mdp: &ExplicitMdp,
) -> Vec<(usize, f64)> {
    let s0 = p.initial_state.clone();
    let mut out = Vec::new();
    for seed in 0..SEEDS {
        let mut lp = PhaseLoop::new(p.clone(), config.clone(), ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut sums = Vec::new();
        lp.run_phases(PHASES, || s0.clone(), |_, r| sums.extend(r.proximity.map(|x| x.sum))).unwrap();
        ctx.proximity_sums.extend(sums);
        let snap = lp.latest().clone();
        let exact = evaluate_on(mdp, p, |s| snap.action_for(s).unwrap(), config.gamma.unwrap(), EXACT_TOL).unwrap();
        out.push((snap.len(), exact.values[s0_index(p)]));
        if seed < 2 {
            ctx.worldviews.push((p.clone(), snap.worldview().clone()));
        }
    }
    out
}

fn describe(runs: &[(usize, f64)]) -> String {
    let sizes: Vec<String> = runs.iter().map(|r| r.0.to_string()).collect();
    let values: Vec<String> = runs.iter().map(|r| format!("{:.2}", r.1)).collect();
    format!("|W| [{}], exact [{}]", sizes.join(" "), values.join(" "))
}

fn c5_policy_refine(ctx: &mut Ctx) -> Outcome {
    let p = grid(GridVariant::ThreeDoors);
    let mdp = ExplicitMdp::build(&p).unwrap();
    let config = PlannerConfig {
        gamma: Some(LONG),
        phase_weights: PhaseWeights::only(&[Phase::PolicyValue, Phase::PolicyRefine]),
        ..Default::default()
    };
    let runs = precursor_runs(ctx, &p, &config, &mdp);
    let pass = runs.iter().all(|&(w, v)| (v + 27.50).abs() <= 0.01 && (215..=240).contains(&w));
    Outcome::new(pass, describe(&runs))
}

fn c6_combined(ctx: &mut Ctx) -> Outcome {
    let p = grid(GridVariant::ThreeKeys);
    let mdp = ExplicitMdp::build(&p).unwrap();
    let config = PlannerConfig {
        gamma: Some(LONG),
        refine_threshold: Some(COMBINED_THRESHOLD),
        phase_weights: PhaseWeights::only(&[Phase::PolicyValue, Phase::PolicyRefine, Phase::ProximityCalc, Phase::ProximityRefine]),
        ..Default::default()
    };
    let runs = precursor_runs(ctx, &p, &config, &mdp);
    let good = runs.iter().filter(|r| r.1 >= -70.0).count();
    Outcome::new(good >= 5, format!("{good}/{SEEDS} at least -70; {}", describe(&runs)))
}

fn two_state_chain() -> ProblemInstance {
    use dynabs::{ActionModel, Assignment, TransitionRule};
    let sp = FactoredSpace::new(vec![Dimension::numeric("s", 2)]).unwrap();
    let a = |v| Assignment::new(vec![(0, v)]).unwrap();
    let model =
        ActionModel::new(&sp, vec![("go".into(), vec![TransitionRule::deterministic(a(0), a(1))])], vec![], -1.0).unwrap();
    ProblemInstance::new("chain", sp, model, dynabs::SpecificState::new(vec![0]), 0.9, None).unwrap()
}

fn c7_proximity(ctx: &mut Ctx) -> Outcome {
    let worst = ctx.proximity_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let p = two_state_chain();
    let s0 = p.initial_state.clone();
    let wv = Worldview::fully_concrete(&p.space);
    let config = PlannerConfig { replanning: 0.0, ..Default::default() };
    let mut pl = Planner::with_worldview(Arc::new(p), config, wv).unwrap();
    pl.compute_proximity(&s0).unwrap();
    let (a, b) = (pl.tables().proximity[0], pl.tables().proximity[1]);
    let chain_ok = (a - 0.05).abs() <= 1e-10 && (b - 0.95).abs() <= 1e-10;
    let sums_ok = !ctx.proximity_sums.is_empty() && worst <= 1e-9;
    Outcome::new(
        sums_ok && chain_ok,
        format!("{} solves, worst |sum-1| {worst:.1e}; chain P = ({a:.12}, {b:.12})", ctx.proximity_sums.len()),
    )
}

fn c8_gridlock(_: &mut Ctx) -> Outcome {
    let sp = FactoredSpace::new((0..3).map(|i| Dimension::numeric(format!("b{i}"), 2)).collect()).unwrap();
    let x = ABSTRACT;
    let pats = [[0, 0, 0], [0, x, 1], [x, 1, 0], [1, 1, 1], [1, 0, x]];
    let wv = Worldview::from_patterns(&sp, pats.iter().map(|p| Pattern::new(p.to_vec())).collect());
    let mut t = PlannerTables::default();
    t.ensure(wv.id_bound());
    for id in wv.sorted_ids() {
        t.set(id, 0, 0.0, 0.2);
    }
    let partition_ok = wv.check_partition().is_empty();
    let groups = coarsening_groups(&wv, &t, 1.0).len();
    Outcome::new(partition_ok && groups == 0, format!("{} states, {groups} merge groups", wv.len()))
}

/// Largest difference between `abstract_transition` and the average over
/// the specific states of each worldview state.
fn transition_error(p: &ProblemInstance, wv: &Worldview) -> f64 {
    let n = p.space.size() as usize;
    let members: Vec<Vec<usize>> = {
        let mut m = vec![Vec::new(); wv.id_bound()];
        for i in 0..n {
            m[wv.locate(&p.space.state_at(i)).unwrap() as usize].push(i);
        }
        m
    };
    let mut worst: f64 = 0.0;
    for id in wv.sorted_ids() {
        let states = &members[id as usize];
        for a in 0..p.model.action_count() {
            let mut brute: BTreeMap<u32, f64> = BTreeMap::new();
            for &i in states {
                for (s2, q) in p.model.transition_distribution(a, &p.space.state_at(i)).unwrap() {
                    *brute.entry(wv.locate(&s2).unwrap()).or_default() += q / states.len() as f64;
                }
            }
            for (w2, q) in abstract_transition(wv, &p.model, id, a) {
                worst = worst.max((brute.remove(&w2).unwrap_or(0.0) - q).abs());
            }
            worst = worst.max(brute.values().fold(0.0, |m, q| m.max(q.abs())));
        }
    }
    worst
}

fn random_worldview(p: &ProblemInstance, splits: usize, rng: &mut ChaCha8Rng) -> Worldview {
    let mut wv = Worldview::singleton(&p.space);
    for _ in 0..splits {
        let ids = wv.sorted_ids();
        let id = ids[rng.gen_range(0..ids.len())];
        let dims: Vec<usize> = wv.pattern(id).abstract_dims().collect();
        if !dims.is_empty() {
            wv.split(id, dims[rng.gen_range(0..dims.len())]).unwrap();
        }
    }
    wv
}

fn c9_oracle(ctx: &mut Ctx) -> Outcome {
    let p = grid(GridVariant::ThreeDoors);
    let mut fix_worst: f64 = 0.0;
    let mut fix_ok = true;
    for gamma in [SHORT, LONG] {
        let exact = solve_exact(&p, gamma, 1e-10).unwrap();
        let config = PlannerConfig { gamma: Some(gamma), ..Default::default() };
        let mut pl = Planner::with_worldview(p.clone(), config, Worldview::fully_concrete(&p.space)).unwrap();
        pl.converge(1e-10, 100_000);
        let tol = 1e-6 / (1.0 - gamma);
        let err = (0..exact.values.len())
            .map(|i| (pl.value_of(&p.space.state_at(i)).unwrap() - exact.values[i]).abs())
            .fold(0.0, f64::max);
        fix_ok &= err <= tol;
        fix_worst = fix_worst.max(err * (1.0 - gamma));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cases: Vec<(Arc<ProblemInstance>, Worldview)> = Vec::new();
    for v in [GridVariant::ThreeDoors, GridVariant::OneKey, GridVariant::Shuttlebot] {
        let q = grid(v);
        let config = PlannerConfig::default();
        cases.push((q.clone(), select_initial_abstraction(&q, config.reward_step, config.nexus_step, DEFAULT_WORLDVIEW_CAP).unwrap()));
        for splits in [5, 40, 150] {
            let wv = random_worldview(&q, splits, &mut rng);
            cases.push((q.clone(), wv));
        }
    }
    cases.extend(ctx.worldviews.iter().filter(|(q, _)| q.space.size() <= 10_000).cloned());
    let worst = cases.iter().map(|(q, wv)| transition_error(q, wv)).fold(0.0, f64::max);
    Outcome::new(
        fix_ok && worst <= 1e-9,
        format!("fixpoint error (1-gamma)*max {fix_worst:.1e}; transitions on {} worldviews, worst {worst:.1e}", cases.len()),
    )
}

fn recurrent_config(seed: u64, phases: &[Phase], threshold: Option<f64>) -> RunConfig {
    RunConfig {
        mode: Mode::Recurrent,
        phases_per_step: PHASES_PER_STEP,
        step_limit: RECURRENT_STEPS,
        seed,
        planner: PlannerConfig {
            gamma: Some(LONG),
            refine_threshold: threshold,
            phase_weights: PhaseWeights::only(phases),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn monotone(sizes: &[usize]) -> bool {
    sizes.windows(2).all(|w| w[0] <= w[1])
}

fn c10_recurrent(_: &mut Ctx) -> Outcome {
    let p = grid(GridVariant::ThreeKeys);
    let both = [Phase::PolicyValue, Phase::PolicyRefine, Phase::ProximityCalc, Phase::ProximityRefine];
    let mut goals = 0;
    let mut all_monotone = true;
    let mut steps = Vec::new();
    for seed in 0..RECURRENT_RUNS {
        let trace = run_recurrent(p.clone(), &recurrent_config(seed, &both, Some(COMBINED_THRESHOLD))).unwrap();
        let sizes: Vec<usize> = trace.worldview_sizes().collect();
        all_monotone &= monotone(&sizes);
        goals += trace.goal_reached() as usize;
        steps.push(trace.goal_step.map_or("-".to_string(), |s| s.to_string()));
    }
    let with_coarsening = [
        Phase::PolicyValue,
        Phase::PolicyRefine,
        Phase::ProximityCalc,
        Phase::ProximityRefine,
        Phase::ProximityCoarsen,
    ];
    let mut non_monotone = 0;
    let coarse_runs = 3;
    for seed in 0..coarse_runs {
        let mut cfg = recurrent_config(seed, &with_coarsening, None);
        cfg.phases_per_step = 20;
        cfg.step_limit = 30;
        let trace = run_recurrent(p.clone(), &cfg).unwrap();
        let sizes: Vec<usize> = trace.worldview_sizes().collect();
        non_monotone += !monotone(&sizes) as usize;
    }
    Outcome::new(
        goals >= 17 && all_monotone && non_monotone == coarse_runs as usize,
        format!(
            "{goals}/{RECURRENT_RUNS} reached the goal (steps [{}]), monotone without coarsening: {all_monotone}, \
             non-monotone with coarsening: {non_monotone}/{coarse_runs}",
            steps.join(" ")
        ),
    )
}

fn c11_robot(_: &mut Ctx) -> Outcome {
    let p = Arc::new(build_robot4(15).unwrap());
    let limit = (p.space.size() / 100) as usize;
    let both = [Phase::PolicyValue, Phase::PolicyRefine, Phase::ProximityCalc, Phase::ProximityRefine];
    let mut good = 0;
    let mut peaks = Vec::new();
    for seed in 0..SEEDS {
        let mut cfg = recurrent_config(seed, &both, None);
        cfg.planner.gamma = None;
        let trace = run_recurrent(p.clone(), &cfg).unwrap();
        good += (trace.goal_reached() && trace.peak_worldview <= limit) as usize;
        peaks.push(trace.peak_worldview.to_string());
    }
    Outcome::new(good >= 8, format!("{good}/{SEEDS} reached the goal within |W| <= {limit}; peaks [{}]", peaks.join(" ")))
}

type Criterion = fn(&mut Ctx) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(usize, &str, Criterion); 11] = [
        (1, "exact optimal values", c1_exact),
        (2, "space sizes", c2_sizes),
        (3, "initial abstraction sizes", c3_initial),
        (4, "ostrich effect", c4_ostrich),
        (5, "policy-based refinement on 3doors", c5_policy_refine),
        (6, "combined refinement on 3keys", c6_combined),
        (7, "proximity normalization", c7_proximity),
        (8, "coarsening gridlock", c8_gridlock),
        (9, "oracle equivalence", c9_oracle),
        (10, "recurrent 3keys", c10_recurrent),
        (11, "recurrent robot4-15", c11_robot),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut ctx = Ctx::default();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let out = check(&mut ctx);
        failed += !out.pass as usize;
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {verdict} {name} [{:.1}s]: {}", t.elapsed().as_secs_f64(), out.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
