//! A cycle of `k` rooms, each with a light that must be on to leave it.

use crate::error::ModelError;
use crate::model::{ActionModel, ProblemInstance, RewardRule, TransitionRule};
use crate::space::{Assignment, Dimension, FactoredSpace, SpecificState, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Robot4Options {
    /// Chance that `forward` succeeds from a lit room.
    pub forward_prob: f64,
    /// Chance that a light switch takes effect.
    pub switch_prob: f64,
    pub gamma: f64,
}

impl Default for Robot4Options {
    fn default() -> Self {
        Robot4Options { forward_prob: 0.8, switch_prob: 1.0, gamma: 0.99999 }
    }
}

pub fn build_robot4(k: usize) -> Result<ProblemInstance, ModelError> {
    build_robot4_with(k, &Robot4Options::default())
}

pub fn build_robot4_with(k: usize, opts: &Robot4Options) -> Result<ProblemInstance, ModelError> {
    if k < 2 {
        return Err(ModelError::DegenerateDimension("room".into()));
    }
    let mut dims = vec![Dimension::numeric("room", k)];
    for r in 0..k {
        dims.push(Dimension::binary(format!("light{r}"), "off", "on"));
    }
    let space = FactoredSpace::new(dims)?;
    let a = |p: &[(usize, Value)]| Assignment::new(p.to_vec()).expect("distinct dimensions");
    let light = |r: usize| 1 + r;
    let mut forward = Vec::with_capacity(k);
    let mut on = Vec::with_capacity(k);
    let mut off = Vec::with_capacity(k);
    for r in 0..k {
        let rv = r as Value;
        let next = ((r + 1) % k) as Value;
        forward.push(TransitionRule::new(a(&[(0, rv), (light(r), 1)]), opts.forward_prob, a(&[(0, next)])));
        on.push(TransitionRule::new(a(&[(0, rv)]), opts.switch_prob, a(&[(light(r), 1)])));
        off.push(TransitionRule::new(a(&[(0, rv)]), opts.switch_prob, a(&[(light(r), 0)])));
    }
    let last = (k - 1) as Value;
    let model = ActionModel::new(
        &space,
        vec![("stay".into(), vec![]), ("forward".into(), forward), ("light-on".into(), on), ("light-off".into(), off)],
        vec![RewardRule { guard: a(&[(0, last)]), reward: 0.0 }],
        -1.0,
    )?;
    let initial = SpecificState::new(vec![0; k + 1]);
    ProblemInstance::new(format!("robot4-{k}"), space, model, initial, opts.gamma, Some(a(&[(0, last)])))
}
