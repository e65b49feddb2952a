//! Plain-text problem files.
//!
//! ```text
//! problem demo
//! gamma 0.95
//! dim pos 0 1 2
//! dim lit off on
//! action stay
//! action right
//! rule pos=0 lit=on : 0.8 -> pos=1
//! rule pos=1 : 0.5 -> pos=2 | 0.25 -> pos=2 lit=off
//! reward -1
//! rule pos=2 : 0
//! initial pos=0 lit=off
//! goal pos=2
//! ```
//!
//! Dimensions come first. Each `rule` line belongs to the most recent
//! `action` or `reward` header; the first matching rule applies. Outcome
//! mass below one leaves the state unchanged. Actions keep their file order,
//! so the first action is the default.

use crate::error::ModelError;
use crate::model::{ActionModel, ProblemInstance, RewardRule, TransitionRule};
use crate::space::{Assignment, Dimension, FactoredSpace};

fn err(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse { line, msg: msg.into() }
}

fn num(line: usize, tok: &str) -> Result<f64, ModelError> {
    tok.parse::<f64>().map_err(|_| err(line, format!("expected a number, got `{tok}`")))
}

fn assignment(space: &FactoredSpace, line: usize, text: &str) -> Result<Assignment, ModelError> {
    space.parse_assignment(text).map_err(|e| match e {
        ModelError::Parse { msg, .. } => err(line, msg),
        other => err(line, other.to_string()),
    })
}

enum Block {
    None,
    Action(usize),
    Reward,
}

pub fn parse_problem(text: &str) -> Result<ProblemInstance, ModelError> {
    let mut name = String::from("problem");
    let mut gamma = 0.95;
    let mut dims: Vec<Dimension> = Vec::new();
    let mut space: Option<FactoredSpace> = None;
    let mut actions: Vec<(String, Vec<TransitionRule>)> = Vec::new();
    let mut reward_rules = Vec::new();
    let mut reward_default: Option<f64> = None;
    let mut initial = None;
    let mut goal = None;
    let mut block = Block::None;

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (kw, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        if kw == "dim" {
            if space.is_some() {
                return Err(err(ln, "dimensions must precede everything else"));
            }
            let mut toks = rest.split_whitespace();
            let dname = toks.next().ok_or_else(|| err(ln, "dimension needs a name"))?;
            dims.push(Dimension::new(dname, toks.map(str::to_string).collect()));
            continue;
        }
        match kw {
            "problem" => {
                name = rest.to_string();
                continue;
            }
            "gamma" => {
                gamma = num(ln, rest)?;
                continue;
            }
            _ => {}
        }
        if space.is_none() {
            space = Some(FactoredSpace::new(std::mem::take(&mut dims)).map_err(|e| err(ln, e.to_string()))?);
        }
        let sp = space.as_ref().expect("built above");
        match kw {
            "action" => {
                if rest.is_empty() || rest.contains(char::is_whitespace) {
                    return Err(err(ln, "action needs a single-word name"));
                }
                actions.push((rest.to_string(), Vec::new()));
                block = Block::Action(actions.len() - 1);
            }
            "reward" => {
                if reward_default.is_some() {
                    return Err(err(ln, "second reward block"));
                }
                reward_default = Some(num(ln, rest)?);
                block = Block::Reward;
            }
            "rule" => {
                let (guard, body) = rest.split_once(':').ok_or_else(|| err(ln, "rule needs `guard : body`"))?;
                let guard = assignment(sp, ln, guard)?;
                match block {
                    Block::None => return Err(err(ln, "rule outside an action or reward block")),
                    Block::Reward => reward_rules.push(RewardRule { guard, reward: num(ln, body.trim())? }),
                    Block::Action(a) => {
                        let mut outcomes = Vec::new();
                        for part in body.split('|') {
                            let (p, eff) =
                                part.split_once("->").ok_or_else(|| err(ln, "outcome needs `p -> effect`"))?;
                            outcomes.push((num(ln, p.trim())?, assignment(sp, ln, eff)?));
                        }
                        actions[a].1.push(TransitionRule { guard, outcomes });
                    }
                }
            }
            "initial" => {
                let a = assignment(sp, ln, rest)?;
                if a.len() != sp.dim_count() {
                    return Err(err(ln, "initial state must assign every dimension"));
                }
                initial = Some(crate::space::SpecificState::new(a.iter().map(|p| p.1).collect()));
            }
            "goal" => goal = Some(assignment(sp, ln, rest)?),
            other => return Err(err(ln, format!("unknown keyword `{other}`"))),
        }
    }
    let space = match space {
        Some(s) => s,
        None => FactoredSpace::new(dims)?,
    };
    let model = ActionModel::new(&space, actions, reward_rules, reward_default.unwrap_or(0.0))?;
    let initial = initial.ok_or_else(|| err(0, "missing initial state"))?;
    ProblemInstance::new(name, space, model, initial, gamma, goal)
}

pub fn write_problem(p: &ProblemInstance) -> String {
    let sp = &p.space;
    let mut out = String::new();
    out.push_str(&format!("problem {}\n", p.name));
    out.push_str(&format!("gamma {}\n", p.gamma_default));
    for d in sp.dims() {
        out.push_str(&format!("dim {} {}\n", d.name(), d.values().join(" ")));
    }
    for a in 0..p.model.action_count() {
        out.push_str(&format!("action {}\n", p.model.action_name(a)));
        for r in p.model.rules(a) {
            let body: Vec<String> =
                r.outcomes.iter().map(|(q, eff)| format!("{q} -> {}", sp.format_assignment(eff))).collect();
            out.push_str(&format!("rule {} : {}\n", sp.format_assignment(&r.guard), body.join(" | ")));
        }
    }
    out.push_str(&format!("reward {}\n", p.model.reward_default()));
    for r in p.model.reward_rules() {
        out.push_str(&format!("rule {} : {}\n", sp.format_assignment(&r.guard), r.reward));
    }
    out.push_str(&format!("initial {}\n", sp.format_assignment(&full(&p.initial_state))));
    if let Some(g) = &p.goal {
        out.push_str(&format!("goal {}\n", sp.format_assignment(g)));
    }
    out
}

fn full(s: &crate::space::SpecificState) -> Assignment {
    Assignment::new(s.values().iter().enumerate().map(|(d, &v)| (d, v)).collect()).expect("distinct dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_grid_problem, build_robot4, build_tireworld, GridVariant, RoadGraph};

    fn same(a: &ProblemInstance, b: &ProblemInstance) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.space, b.space);
        assert_eq!(a.initial_state, b.initial_state);
        assert_eq!(a.gamma_default, b.gamma_default);
        assert_eq!(a.goal, b.goal);
        assert_eq!(a.model.action_names(), b.model.action_names());
        for i in 0..a.model.action_count() {
            assert_eq!(a.model.rules(i), b.model.rules(i));
            assert_eq!(a.model.tree(i), b.model.tree(i));
        }
        assert_eq!(a.model.reward_rules(), b.model.reward_rules());
        assert_eq!(a.model.reward_default(), b.model.reward_default());
    }

    #[test]
    fn builtins_roundtrip() {
        let mut all: Vec<ProblemInstance> = [
            GridVariant::ThreeDoors,
            GridVariant::OneKey,
            GridVariant::ThreeKeys,
            GridVariant::Shuttlebot,
            GridVariant::TenByTen,
        ]
        .into_iter()
        .map(|v| build_grid_problem(v).unwrap())
        .collect();
        all.push(build_robot4(6).unwrap());
        all.push(build_tireworld(&RoadGraph::sample(5)).unwrap());
        for p in &all {
            let text = write_problem(p);
            let q = parse_problem(&text).unwrap();
            same(p, &q);
            assert_eq!(write_problem(&q), text);
        }
    }

    #[test]
    fn doc_example_parses() {
        let text = "problem demo\ngamma 0.95\ndim pos 0 1 2\ndim lit off on\naction stay\naction right\n\
                    rule pos=0 lit=on : 0.8 -> pos=1\nrule pos=1 : 0.5 -> pos=2 | 0.25 -> pos=2 lit=off\n\
                    reward -1\nrule pos=2 : 0\ninitial pos=0 lit=off\ngoal pos=2\n";
        let p = parse_problem(text).unwrap();
        assert_eq!(p.model.action_count(), 2);
        assert_eq!(p.model.rules(1)[1].outcomes.len(), 2);
        assert_eq!(p.model.reward_of_state(&p.initial_state), -1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_problem("dim a 0 1\naction go\nrule a=3 : 1 -> a=0\ninitial a=0\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 3, .. }), "{e:?}");
        let e = parse_problem("dim a 0 1\nrule a=1 : 1 -> a=0\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 2, .. }));
        let e = parse_problem("dim a 0 1\naction go\nfrobnicate\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 3, .. }));
        assert!(parse_problem("dim a 0 1\naction go\n").is_err());
    }
}
