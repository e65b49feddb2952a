//! The grid navigation family: 3Doors, 1Key, 3Keys, shuttlebot and 10x10.
//!
//! The 10x10 grid has a horizontal wall between rows 2 and 3 with door 1 at
//! column 2 and door 2 at column 7, and a vertical wall between columns 4 and
//! 5 below that wall, with door 3 in row 9. The agent starts at (0,0) with
//! all doors closed; the goal is (7,7) without damage.

use crate::error::ModelError;
use crate::model::{ActionModel, ProblemInstance, RewardRule, TransitionRule};
use crate::space::{Assignment, Dimension, FactoredSpace, SpecificState, Value};

const CLOSED: Value = 0;
const OPEN: Value = 1;
const NO: Value = 0;
const YES: Value = 1;
const SIDE: Value = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridVariant {
    ThreeDoors,
    OneKey,
    ThreeKeys,
    Shuttlebot,
    TenByTen,
}

impl GridVariant {
    pub fn name(self) -> &'static str {
        match self {
            GridVariant::ThreeDoors => "3doors",
            GridVariant::OneKey => "1key",
            GridVariant::ThreeKeys => "3keys",
            GridVariant::Shuttlebot => "shuttlebot",
            GridVariant::TenByTen => "10x10",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3doors" => Some(GridVariant::ThreeDoors),
            "1key" => Some(GridVariant::OneKey),
            "3keys" => Some(GridVariant::ThreeKeys),
            "shuttlebot" => Some(GridVariant::Shuttlebot),
            "10x10" => Some(GridVariant::TenByTen),
            _ => None,
        }
    }
}

/// Tunable constants of the grid family.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub move_prob: f64,
    pub open_prob: f64,
    /// Pickup locations of keys 1, 2 and 3.
    pub keys: [(Value, Value); 3],
    /// The two shuttlebot depots: load at the first, unload at the second.
    pub depots: [(Value, Value); 2],
    pub gamma: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { move_prob: 0.8, open_prob: 0.1, keys: [(9, 0), (0, 9), (7, 0)], depots: [(1, 0), (7, 7)], gamma: 0.95 }
    }
}

/// A door and the two cells on either side of it.
struct Door {
    dim: usize,
    cells: [(Value, Value); 2],
}

struct Dims {
    x: usize,
    y: usize,
    doors: [usize; 3],
    dmg: usize,
    dmg_levels: Value,
    /// 3Keys: one binary dimension per key.
    keys: Option<[usize; 3]>,
    /// 1Key: one dimension naming the held key (0 = none).
    held: Option<usize>,
    loaded: Option<usize>,
    tiles: Option<(usize, usize)>,
}

fn a(pairs: &[(usize, Value)]) -> Assignment {
    Assignment::new(pairs.to_vec()).expect("distinct dimensions")
}

fn with(base: &[(usize, Value)], extra: &[(usize, Value)]) -> Assignment {
    let mut v = base.to_vec();
    v.extend_from_slice(extra);
    a(&v)
}

pub fn build_grid_problem(variant: GridVariant) -> Result<ProblemInstance, ModelError> {
    build_grid_problem_with(variant, &GridOptions::default())
}

pub fn build_grid_problem_with(variant: GridVariant, opts: &GridOptions) -> Result<ProblemInstance, ModelError> {
    let mut dims = vec![
        Dimension::numeric("x", SIDE as usize),
        Dimension::numeric("y", SIDE as usize),
        Dimension::binary("d1", "closed", "open"),
        Dimension::binary("d2", "closed", "open"),
        Dimension::binary("d3", "closed", "open"),
    ];
    let mut d = Dims {
        x: 0,
        y: 1,
        doors: [2, 3, 4],
        dmg: 5,
        dmg_levels: 2,
        keys: None,
        held: None,
        loaded: None,
        tiles: None,
    };
    if variant == GridVariant::Shuttlebot {
        dims.push(Dimension::new("dmg", vec!["no".into(), "dented".into(), "broken".into()]));
        d.dmg_levels = 3;
    } else {
        dims.push(Dimension::binary("dmg", "no", "yes"));
    }
    match variant {
        GridVariant::ThreeDoors => {}
        GridVariant::ThreeKeys => {
            for k in ["k1", "k2", "k3"] {
                dims.push(Dimension::binary(k, "no", "yes"));
            }
            d.keys = Some([6, 7, 8]);
        }
        GridVariant::OneKey => {
            dims.push(Dimension::new("key", vec!["none".into(), "k1".into(), "k2".into(), "k3".into()]));
            d.held = Some(6);
        }
        GridVariant::Shuttlebot => {
            dims.push(Dimension::binary("loaded", "no", "yes"));
            d.loaded = Some(6);
        }
        GridVariant::TenByTen => {
            dims.push(Dimension::numeric("xx", SIDE as usize));
            dims.push(Dimension::numeric("yy", SIDE as usize));
            d.tiles = Some((6, 7));
        }
    }
    let space = FactoredSpace::new(dims)?;
    let doors = [
        Door { dim: d.doors[0], cells: [(2, 2), (2, 3)] },
        Door { dim: d.doors[1], cells: [(7, 2), (7, 3)] },
        Door { dim: d.doors[2], cells: [(4, 9), (5, 9)] },
    ];

    let mv = opts.move_prob;
    let (x, y) = (d.x, d.y);
    let mut prefix: Vec<TransitionRule> = Vec::new();
    if let Some(l) = d.loaded {
        let [(ax, ay), (bx, by)] = opts.depots;
        prefix.push(TransitionRule::deterministic(a(&[(x, ax), (y, ay), (l, NO)]), a(&[(l, YES)])));
        prefix.push(TransitionRule::deterministic(a(&[(x, bx), (y, by), (l, YES)]), a(&[(l, NO)])));
    }
    // Guards that cause damage expand to one rule per damage level.
    let damage = |guard: &[(usize, Value)]| -> Vec<TransitionRule> {
        if d.dmg_levels == 2 {
            return vec![TransitionRule::deterministic(a(guard), a(&[(d.dmg, YES)]))];
        }
        let mut out = Vec::new();
        for lvl in 0..d.dmg_levels - 1 {
            out.push(TransitionRule::deterministic(with(guard, &[(d.dmg, lvl)]), a(&[(d.dmg, lvl + 1)])));
        }
        out.push(TransitionRule::deterministic(a(guard), Assignment::empty()));
        out
    };

    let stay = prefix.clone();

    // South: through doors 1 and 2, walls at row 2 and the bottom edge.
    let mut south = prefix.clone();
    for door in &doors[..2] {
        let (cx, cy) = door.cells[0];
        south.push(TransitionRule::new(a(&[(x, cx), (y, cy), (door.dim, OPEN)]), mv, a(&[(y, cy + 1)])));
    }
    south.extend(damage(&[(y, 2)]));
    if let Some((_, yy)) = d.tiles {
        for t in 0..SIDE - 1 {
            south.push(TransitionRule::new(a(&[(x, 0), (y, 9), (yy, t)]), mv, a(&[(y, 0), (yy, t + 1)])));
        }
    }
    south.extend(damage(&[(y, 9)]));
    for v in 0..SIDE - 1 {
        south.push(TransitionRule::new(a(&[(y, v)]), mv, a(&[(y, v + 1)])));
    }

    let mut north = prefix.clone();
    for door in &doors[..2] {
        let (cx, cy) = door.cells[1];
        north.push(TransitionRule::new(a(&[(x, cx), (y, cy), (door.dim, OPEN)]), mv, a(&[(y, cy - 1)])));
    }
    if let Some((_, yy)) = d.tiles {
        for t in 1..SIDE {
            north.push(TransitionRule::new(a(&[(x, 0), (y, 0), (yy, t)]), mv, a(&[(y, 9), (yy, t - 1)])));
        }
    }
    north.extend(damage(&[(y, 0)]));
    north.extend(damage(&[(y, 3)]));
    for v in 1..SIDE {
        north.push(TransitionRule::new(a(&[(y, v)]), mv, a(&[(y, v - 1)])));
    }

    let mut east = prefix.clone();
    for row in 0..3 {
        east.push(TransitionRule::new(a(&[(x, 4), (y, row)]), mv, a(&[(x, 5)])));
    }
    east.push(TransitionRule::new(a(&[(x, 4), (y, 9), (doors[2].dim, OPEN)]), mv, a(&[(x, 5)])));
    east.extend(damage(&[(x, 4)]));
    if let Some((xx, _)) = d.tiles {
        for t in 0..SIDE - 1 {
            east.push(TransitionRule::new(a(&[(x, 9), (y, 0), (xx, t)]), mv, a(&[(x, 0), (xx, t + 1)])));
        }
    }
    east.extend(damage(&[(x, 9)]));
    for v in 0..SIDE - 1 {
        east.push(TransitionRule::new(a(&[(x, v)]), mv, a(&[(x, v + 1)])));
    }

    let mut west = prefix.clone();
    for row in 0..3 {
        west.push(TransitionRule::new(a(&[(x, 5), (y, row)]), mv, a(&[(x, 4)])));
    }
    west.push(TransitionRule::new(a(&[(x, 5), (y, 9), (doors[2].dim, OPEN)]), mv, a(&[(x, 4)])));
    west.extend(damage(&[(x, 5)]));
    if let Some((xx, _)) = d.tiles {
        for t in 1..SIDE {
            west.push(TransitionRule::new(a(&[(x, 0), (y, 0), (xx, t)]), mv, a(&[(x, 9), (xx, t - 1)])));
        }
    }
    west.extend(damage(&[(x, 0)]));
    for v in 1..SIDE {
        west.push(TransitionRule::new(a(&[(x, v)]), mv, a(&[(x, v - 1)])));
    }

    // Open: a closed door next to the agent opens with some probability,
    // provided the matching key is held; at a door cell otherwise nothing
    // happens, and anywhere else the attempt causes damage.
    let mut open = prefix.clone();
    for (i, door) in doors.iter().enumerate() {
        for &(cx, cy) in &door.cells {
            let mut guard = vec![(x, cx), (y, cy), (door.dim, CLOSED)];
            if let Some(k) = d.keys {
                guard.push((k[i], YES));
            }
            if let Some(h) = d.held {
                guard.push((h, i as Value + 1));
            }
            open.push(TransitionRule::new(a(&guard), opts.open_prob, a(&[(door.dim, OPEN)])));
            open.push(TransitionRule::deterministic(a(&[(x, cx), (y, cy)]), Assignment::empty()));
        }
    }
    open.extend(damage(&[]));

    let mut actions: Vec<(String, Vec<TransitionRule>)> = vec![
        ("stay".into(), stay),
        ("south".into(), south),
        ("north".into(), north),
        ("east".into(), east),
        ("west".into(), west),
        ("open".into(), open),
    ];
    if d.keys.is_some() || d.held.is_some() {
        let mut pickup = prefix.clone();
        for (i, &(kx, ky)) in opts.keys.iter().enumerate() {
            let effect = match (d.keys, d.held) {
                (Some(k), _) => a(&[(k[i], YES)]),
                (None, Some(h)) => a(&[(h, i as Value + 1)]),
                _ => unreachable!(),
            };
            pickup.push(TransitionRule::deterministic(a(&[(x, kx), (y, ky)]), effect));
        }
        actions.push(("pickup".into(), pickup));
    }

    let mut goal_pairs = vec![(x, 7), (y, 7)];
    if let Some((xx, yy)) = d.tiles {
        goal_pairs.extend([(xx, SIDE - 1), (yy, SIDE - 1)]);
    }
    let (reward_rules, goal) = match d.loaded {
        Some(l) => {
            let [(ax, ay), (bx, by)] = opts.depots;
            (
                vec![
                    RewardRule { guard: a(&[(d.dmg, 2)]), reward: -1.0 },
                    RewardRule { guard: a(&[(x, ax), (y, ay), (l, NO)]), reward: 1.0 },
                    RewardRule { guard: a(&[(x, bx), (y, by), (l, YES)]), reward: 1.0 },
                ],
                None,
            )
        }
        None => (
            vec![
                RewardRule { guard: a(&[(d.dmg, YES)]), reward: -2.0 },
                RewardRule { guard: a(&goal_pairs), reward: 0.0 },
            ],
            Some(with(&goal_pairs, &[(d.dmg, NO)])),
        ),
    };
    let default_reward = if d.loaded.is_some() { 0.0 } else { -1.0 };
    let model = ActionModel::new(&space, actions, reward_rules, default_reward)?;
    let initial = SpecificState::new(vec![0; space.dim_count()]);
    ProblemInstance::new(variant.name(), space, model, initial, opts.gamma, goal)
}
