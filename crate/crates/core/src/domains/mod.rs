//! Built-in problem generators.

mod grid;
mod robot4;
mod tireworld;

pub use grid::{build_grid_problem, build_grid_problem_with, GridOptions, GridVariant};
pub use robot4::{build_robot4, build_robot4_with, Robot4Options};
pub use tireworld::{build_tireworld, build_tireworld_with, RoadGraph, TireOptions};

use crate::error::{PlanError, Result};
use crate::model::ProblemInstance;

/// Builds a problem from a selector such as `3doors`, `robot4:15`,
/// `tireworld:roads.txt`, `tireworld:sample:5` or `file:problem.txt`.
pub fn problem_by_name(selector: &str) -> Result<ProblemInstance> {
    if let Some(v) = GridVariant::parse(selector) {
        return Ok(build_grid_problem(v)?);
    }
    if let Some(k) = selector.strip_prefix("robot4:").or_else(|| selector.strip_prefix("robot4-")) {
        let k: usize = k.parse().map_err(|_| PlanError::Config(format!("bad room count in `{selector}`")))?;
        return Ok(build_robot4(k)?);
    }
    if let Some(path) = selector.strip_prefix("file:") {
        return Ok(crate::format::parse_problem(&std::fs::read_to_string(path)?)?);
    }
    if let Some(rest) = selector.strip_prefix("tireworld:") {
        let graph = match rest.strip_prefix("sample:") {
            Some(n) => {
                let n: usize = n.parse().map_err(|_| PlanError::Config(format!("bad location count in `{selector}`")))?;
                RoadGraph::sample(n)
            }
            None => RoadGraph::parse(&std::fs::read_to_string(rest)?)?,
        };
        if !graph.goal_reachable() {
            log::warn!("goal is not reachable from the initial location");
        }
        return Ok(build_tireworld(&graph)?);
    }
    Err(PlanError::Config(format!("unknown problem `{selector}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selectors() {
        assert_eq!(problem_by_name("3doors").unwrap().space.size(), 1600);
        assert_eq!(problem_by_name("3Keys").unwrap().space.size(), 12800);
        assert_eq!(problem_by_name("robot4:10").unwrap().space.size(), 10240);
        assert_eq!(problem_by_name("tireworld:sample:5").unwrap().space.dim_count(), 12);
        assert!(problem_by_name("factory").is_err());
        assert!(problem_by_name("robot4:x").is_err());
        assert!(problem_by_name("tireworld:/nonexistent/file").is_err());
        assert!(problem_by_name("file:/nonexistent/file").is_err());
    }
}
