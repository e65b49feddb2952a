use super::StateId;

/// Policy, value and proximity per worldview state, indexed by [`StateId`].
/// Slots of ids not currently in the worldview hold stale data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlannerTables {
    pub policy: Vec<u32>,
    pub value: Vec<f64>,
    pub proximity: Vec<f64>,
}

impl PlannerTables {
    /// Grows every table to at least `len` slots.
    pub fn ensure(&mut self, len: usize) {
        if self.policy.len() < len {
            self.policy.resize(len, 0);
            self.value.resize(len, 0.0);
            self.proximity.resize(len, 0.0);
        }
    }

    pub fn get(&self, id: StateId) -> (u32, f64, f64) {
        let i = id as usize;
        (self.policy[i], self.value[i], self.proximity[i])
    }

    pub fn set(&mut self, id: StateId, policy: u32, value: f64, proximity: f64) {
        let i = id as usize;
        self.policy[i] = policy;
        self.value[i] = value;
        self.proximity[i] = proximity;
    }

    pub fn action(&self, id: StateId) -> usize {
        self.policy[id as usize] as usize
    }
}
