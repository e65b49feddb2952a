//! Factored state spaces: named dimensions with finite value sets.

use std::collections::HashMap;
use std::fmt;

use crate::error::ModelError;

/// Index of a value within its dimension.
pub type Value = u16;

/// Largest number of values a dimension may declare.
pub const MAX_DIM_VALUES: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dimension {
    name: String,
    values: Vec<String>,
}

impl Dimension {
    pub fn new<S: Into<String>>(name: S, values: Vec<String>) -> Self {
        Dimension { name: name.into(), values }
    }

    /// Dimension whose values are the decimal numbers `0..n`.
    pub fn numeric<S: Into<String>>(name: S, n: usize) -> Self {
        Dimension::new(name, (0..n).map(|v| v.to_string()).collect())
    }

    /// Dimension with the two values `false`/`true` (in that order) under custom labels.
    pub fn binary<S: Into<String>>(name: S, off: &str, on: &str) -> Self {
        Dimension::new(name, vec![off.to_string(), on.to_string()])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_index(&self, label: &str) -> Option<Value> {
        self.values.iter().position(|v| v == label).map(|i| i as Value)
    }
}

/// Cartesian product of dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoredSpace {
    dims: Vec<Dimension>,
    by_name: HashMap<String, usize>,
    size: u128,
}

impl FactoredSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, ModelError> {
        let mut by_name = HashMap::with_capacity(dims.len());
        let mut size: u128 = 1;
        for (i, d) in dims.iter().enumerate() {
            if d.len() < 2 {
                return Err(ModelError::DegenerateDimension(d.name.clone()));
            }
            if d.len() > MAX_DIM_VALUES {
                return Err(ModelError::DimensionTooLarge(d.name.clone()));
            }
            for (j, v) in d.values.iter().enumerate() {
                if d.values[..j].contains(v) {
                    return Err(ModelError::DuplicateValue { dim: d.name.clone(), value: v.clone() });
                }
            }
            if by_name.insert(d.name.clone(), i).is_some() {
                return Err(ModelError::DuplicateDimension(d.name.clone()));
            }
            size = size.checked_mul(d.len() as u128).ok_or(ModelError::SpaceTooLarge)?;
        }
        Ok(FactoredSpace { dims, by_name, size })
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self, d: usize) -> &Dimension {
        &self.dims[d]
    }

    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }

    /// Number of values of dimension `d`.
    pub fn width(&self, d: usize) -> usize {
        self.dims[d].len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.dims.iter().map(Dimension::len).collect()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Exact number of specific states, the product of all dimension widths.
    pub fn size(&self) -> u128 {
        self.size
    }

    /// Resolves `dim` and `value` labels into indices.
    pub fn resolve(&self, dim: &str, value: &str) -> Result<(usize, Value), ModelError> {
        let d = self.dim_index(dim).ok_or_else(|| ModelError::UnknownDimension(dim.to_string()))?;
        let v = self.dims[d].value_index(value).ok_or_else(|| ModelError::UnknownValue {
            dim: dim.to_string(),
            value: value.to_string(),
        })?;
        Ok((d, v))
    }

    pub fn check_state(&self, s: &SpecificState) -> Result<(), ModelError> {
        if s.0.len() != self.dims.len() {
            return Err(ModelError::StateArity { expected: self.dims.len(), got: s.0.len() });
        }
        for (d, &v) in s.0.iter().enumerate() {
            if v as usize >= self.dims[d].len() {
                return Err(ModelError::ValueOutOfRange { dim: self.dims[d].name.clone(), value: v as usize });
            }
        }
        Ok(())
    }

    pub fn check_assignment(&self, a: &Assignment) -> Result<(), ModelError> {
        for &(d, v) in a.iter() {
            if d >= self.dims.len() {
                return Err(ModelError::UnknownDimension(format!("#{d}")));
            }
            if v as usize >= self.dims[d].len() {
                return Err(ModelError::ValueOutOfRange { dim: self.dims[d].name.clone(), value: v as usize });
            }
        }
        Ok(())
    }

    /// Mixed-radix index of `s`, last dimension fastest. Only meaningful when
    /// the space fits in `usize`.
    pub fn index_of(&self, s: &SpecificState) -> usize {
        let mut idx = 0usize;
        for (d, &v) in s.0.iter().enumerate() {
            idx = idx * self.dims[d].len() + v as usize;
        }
        idx
    }

    /// Inverse of [`FactoredSpace::index_of`].
    pub fn state_at(&self, mut idx: usize) -> SpecificState {
        let mut vals = vec![0 as Value; self.dims.len()];
        for d in (0..self.dims.len()).rev() {
            let w = self.dims[d].len();
            vals[d] = (idx % w) as Value;
            idx /= w;
        }
        SpecificState(vals.into_boxed_slice())
    }

    /// Renders a state as `dim=value;dim=value;...`.
    pub fn format_state(&self, s: &SpecificState) -> String {
        s.0.iter()
            .enumerate()
            .map(|(d, &v)| format!("{}={}", self.dims[d].name, self.dims[d].values[v as usize]))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Renders a partial assignment as `dim=value dim=value`.
    pub fn format_assignment(&self, a: &Assignment) -> String {
        a.iter()
            .map(|&(d, v)| format!("{}={}", self.dims[d].name, self.dims[d].values[v as usize]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses whitespace-, comma- or semicolon-separated `dim=value` tokens.
    pub fn parse_assignment(&self, text: &str) -> Result<Assignment, ModelError> {
        let mut pairs = Vec::new();
        for tok in text.split(|c: char| c.is_whitespace() || c == ',' || c == ';') {
            if tok.is_empty() {
                continue;
            }
            let (k, v) = tok.split_once('=').ok_or_else(|| ModelError::Parse {
                line: 0,
                msg: format!("expected dim=value, got `{tok}`"),
            })?;
            pairs.push(self.resolve(k, v)?);
        }
        Assignment::new(pairs)
    }

    /// Parses a complete assignment into a specific state.
    pub fn parse_state(&self, text: &str) -> Result<SpecificState, ModelError> {
        let a = self.parse_assignment(text)?;
        if a.len() != self.dims.len() {
            return Err(ModelError::StateArity { expected: self.dims.len(), got: a.len() });
        }
        Ok(SpecificState(a.iter().map(|&(_, v)| v).collect()))
    }
}

/// One value per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpecificState(pub Box<[Value]>);

impl SpecificState {
    pub fn new(values: Vec<Value>) -> Self {
        SpecificState(values.into_boxed_slice())
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn get(&self, d: usize) -> Value {
        self.0[d]
    }

    pub fn matches(&self, a: &Assignment) -> bool {
        a.iter().all(|&(d, v)| self.0[d] == v)
    }

    /// Copy of `self` with every pair of `effect` written over it.
    pub fn apply(&self, effect: &Assignment) -> SpecificState {
        let mut out = self.clone();
        for &(d, v) in effect.iter() {
            out.0[d] = v;
        }
        out
    }
}

/// Partial assignment of values to dimensions, sorted by dimension.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(Vec<(usize, Value)>);

impl Assignment {
    /// Builds an assignment; a dimension may appear at most once.
    pub fn new(mut pairs: Vec<(usize, Value)>) -> Result<Self, ModelError> {
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::InvalidRule {
                    index: 0,
                    reason: format!("dimension #{} assigned twice", w[0].0),
                });
            }
        }
        Ok(Assignment(pairs))
    }

    pub fn empty() -> Self {
        Assignment(Vec::new())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, (usize, Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, d: usize) -> Option<Value> {
        self.0.iter().find(|p| p.0 == d).map(|p| p.1)
    }

    pub fn dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|p| p.0)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(d, v)| format!("#{d}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}
