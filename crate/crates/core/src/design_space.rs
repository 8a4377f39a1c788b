//! Declarative design spaces and the `.dse` description language.
//!
//! A design space is an ordered list of named parameters, each with an
//! ordered, non-empty list of value literals. The text form is line
//! oriented:
//!
//! ```text
//! # L2 cache sweep
//! meta workload = mm_blocked
//! param l2_size  : 128KiB, 256KiB, 512KiB, 1MiB, 2MiB
//! param l2_assoc : 2, 4, 8, 16, 32
//! ```
//!
//! Parameter and value order are document order, and enumeration is
//! lexicographic over that order.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while parsing or constructing a design space.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("parameter `{name}` lists value `{value}` more than once")]
    DuplicateValue { name: String, value: String },
    #[error("parameter `{0}` has no values")]
    EmptyValues(String),
    #[error("invalid parameter name `{0}`")]
    InvalidName(String),
    #[error("invalid value literal `{0}`")]
    InvalidValue(String),
    #[error("design space has no parameters")]
    NoParams,
}

/// A single value literal: a size string (`256KiB`), an integer, or a bare
/// symbol (`LRURP`). The literal text is kept verbatim; it is what keys and
/// simulator command lines use.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(String);

impl Value {
    pub fn new(text: impl Into<String>) -> Result<Self, SpaceError> {
        let text = text.into();
        if is_valid_literal(&text) {
            Ok(Value(text))
        } else {
            Err(SpaceError::InvalidValue(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_int(&self) -> Option<i64> {
        self.0.parse().ok()
    }

    /// Interprets the literal as a byte count. Plain integers are bytes;
    /// `KiB`, `MiB` and `GiB` suffixes are 1024-based.
    pub fn size_bytes(&self) -> Option<u64> {
        parse_size_bytes(&self.0)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Converts a size literal such as `"256KiB"` or `"1MiB"` to bytes.
pub fn parse_size_bytes(text: &str) -> Option<u64> {
    const SUFFIXES: [(&str, u64); 4] = [
        ("GiB", 1 << 30),
        ("MiB", 1 << 20),
        ("KiB", 1 << 10),
        ("B", 1),
    ];
    for (suffix, scale) in SUFFIXES {
        if let Some(number) = text.strip_suffix(suffix) {
            return number.parse::<u64>().ok()?.checked_mul(scale);
        }
    }
    text.parse().ok()
}

fn is_valid_literal(text: &str) -> bool {
    !text.is_empty()
        && text
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '+'))
}

fn is_identifier(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDef {
    name: String,
    values: Vec<Value>,
}

impl ParamDef {
    pub fn new(name: impl Into<String>, values: Vec<Value>) -> Result<Self, SpaceError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(SpaceError::InvalidName(name));
        }
        if values.is_empty() {
            return Err(SpaceError::EmptyValues(name));
        }
        for (i, v) in values.iter().enumerate() {
            if values[..i].contains(v) {
                return Err(SpaceError::DuplicateValue {
                    name,
                    value: v.to_string(),
                });
            }
        }
        Ok(ParamDef { name, values })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn contains(&self, value: &Value) -> bool {
        self.values.contains(value)
    }
}

/// The full parameter domain. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    params: Vec<ParamDef>,
    metadata: Vec<(String, String)>,
}

impl DesignSpace {
    pub fn new(params: Vec<ParamDef>) -> Result<Self, SpaceError> {
        Self::with_metadata(params, Vec::new())
    }

    pub fn with_metadata(
        params: Vec<ParamDef>,
        metadata: Vec<(String, String)>,
    ) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::NoParams);
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateParam(p.name.clone()));
            }
        }
        Ok(DesignSpace { params, metadata })
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamDef> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    /// Number of distinct configurations, saturating at `u128::MAX`.
    pub fn cardinality(&self) -> u128 {
        self.params
            .iter()
            .fold(1u128, |acc, p| acc.saturating_mul(p.values.len() as u128))
    }

    /// Checks a set against this space. Violations are returned as data.
    pub fn validate(&self, set: &ParametersSet) -> Vec<Violation> {
        let mut violations = Vec::new();
        for p in &self.params {
            match set.get(&p.name) {
                None => violations.push(Violation::MissingParam(p.name.clone())),
                Some(v) if !p.contains(v) => violations.push(Violation::OutOfDomain {
                    param: p.name.clone(),
                    value: v.to_string(),
                }),
                Some(_) => {}
            }
        }
        for name in set.assignments.keys() {
            if self.param(name).is_none() {
                violations.push(Violation::ExtraParam(name.clone()));
            }
        }
        violations
    }

    pub fn is_valid(&self, set: &ParametersSet) -> bool {
        self.validate(set).is_empty()
    }

    /// Lexicographic enumeration in (parameter order, value order).
    pub fn enumerate(&self) -> Enumerate<'_> {
        Enumerate {
            space: self,
            digits: Some(vec![0; self.params.len()]),
        }
    }

    /// Draws one set, each value chosen independently and uniformly.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> ParametersSet {
        let assignments = self
            .params
            .iter()
            .map(|p| {
                let i = rng.random_range(0..p.values.len());
                (p.name.clone(), p.values[i].clone())
            })
            .collect();
        ParametersSet { assignments }
    }

    /// Deterministic single draw for a given seed.
    pub fn sample_uniform(&self, seed: u64) -> ParametersSet {
        self.sample_with(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Serializes back to the `.dse` text form.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("meta {k} = {v}\n"));
        }
        for p in &self.params {
            let values: Vec<&str> = p.values.iter().map(Value::as_str).collect();
            out.push_str(&format!("param {} : {}\n", p.name, values.join(", ")));
        }
        out
    }
}

impl std::str::FromStr for DesignSpace {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_space(s)
    }
}

/// Parses a `.dse` document.
pub fn parse_space(text: &str) -> Result<DesignSpace, SpaceError> {
    let mut params: Vec<ParamDef> = Vec::new();
    let mut metadata = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let syntax = |message: String| SpaceError::Syntax {
            line: line_no,
            message,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (directive, rest) = line
            .split_once(char::is_whitespace)
            .unwrap_or((line, ""));
        match directive {
            "param" => {
                let (name, values) = rest
                    .split_once(':')
                    .ok_or_else(|| syntax("expected `param <name> : <values>`".into()))?;
                let name = name.trim();
                if !is_identifier(name) {
                    return Err(syntax(format!("invalid parameter name `{name}`")));
                }
                if params.iter().any(|p| p.name == name) {
                    return Err(SpaceError::DuplicateParam(name.to_string()));
                }
                let values = values.trim();
                if values.is_empty() {
                    return Err(SpaceError::EmptyValues(name.to_string()));
                }
                let values = values
                    .split(',')
                    .map(|v| {
                        let v = v.trim();
                        Value::new(v).map_err(|_| syntax(format!("invalid value literal `{v}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                params.push(ParamDef::new(name, values)?);
            }
            "meta" => {
                let (key, value) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax("expected `meta <key> = <value>`".into()))?;
                let key = key.trim();
                if !is_identifier(key) {
                    return Err(syntax(format!("invalid metadata key `{key}`")));
                }
                metadata.push((key.to_string(), value.trim().to_string()));
            }
            other => return Err(syntax(format!("unknown directive `{other}`"))),
        }
    }

    DesignSpace::with_metadata(params, metadata)
}

/// One concrete configuration: a value for every parameter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParametersSet {
    assignments: BTreeMap<String, Value>,
}

impl ParametersSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) -> Option<Value> {
        self.assignments.insert(name.into(), value)
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.assignments.get(name)
    }

    pub fn assignments(&self) -> &BTreeMap<String, Value> {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// `name=value` pairs sorted by name and joined with `;`.
    pub fn canonical_key(&self) -> String {
        self.assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl<K: Into<String>> FromIterator<(K, Value)> for ParametersSet {
    fn from_iter<I: IntoIterator<Item = (K, Value)>>(iter: I) -> Self {
        ParametersSet {
            assignments: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// The configurations generated in one GEN step. Slot 0 is the baseline
/// slot when baseline preservation is on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParametersBatch {
    pub sets: Vec<ParametersSet>,
}

impl ParametersBatch {
    pub fn new(sets: Vec<ParametersSet>) -> Self {
        ParametersBatch { sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingParam(String),
    ExtraParam(String),
    OutOfDomain { param: String, value: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingParam(p) => write!(f, "missing parameter `{p}`"),
            Violation::ExtraParam(p) => write!(f, "unknown parameter `{p}`"),
            Violation::OutOfDomain { param, value } => {
                write!(f, "value `{value}` is not allowed for `{param}`")
            }
        }
    }
}

/// Odometer-style iterator over all configurations of a space.
pub struct Enumerate<'a> {
    space: &'a DesignSpace,
    digits: Option<Vec<usize>>,
}

impl Iterator for Enumerate<'_> {
    type Item = ParametersSet;

    fn next(&mut self) -> Option<ParametersSet> {
        let digits = self.digits.as_mut()?;
        let set = self
            .space
            .params
            .iter()
            .zip(digits.iter())
            .map(|(p, &i)| (p.name.clone(), p.values[i].clone()))
            .collect();

        let mut exhausted = true;
        for (pos, p) in self.space.params.iter().enumerate().rev() {
            digits[pos] += 1;
            if digits[pos] < p.values.len() {
                exhausted = false;
                break;
            }
            digits[pos] = 0;
        }
        if exhausted {
            self.digits = None;
        }
        Some(set)
    }
}

/// Most simulations a single batch may run at once.
pub const MAX_CONCURRENCY: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MissionError {
    #[error("invalid cost range [{lo}, {hi}]: need 0 <= lo < hi")]
    CostRange { lo: f64, hi: f64 },
    #[error("concurrency must be in 1..={MAX_CONCURRENCY}, got {0}")]
    Concurrency(usize),
}

/// Closed cost interval `[lo, hi]` in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct CostRange {
    lo: f64,
    hi: f64,
}

impl CostRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self, MissionError> {
        if lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi {
            Ok(CostRange { lo, hi })
        } else {
            Err(MissionError::CostRange { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, cost: f64) -> bool {
        self.lo <= cost && cost <= self.hi
    }
}

impl TryFrom<(f64, f64)> for CostRange {
    type Error = MissionError;

    fn try_from((lo, hi): (f64, f64)) -> Result<Self, Self::Error> {
        CostRange::new(lo, hi)
    }
}

impl From<CostRange> for (f64, f64) {
    fn from(r: CostRange) -> Self {
        (r.lo, r.hi)
    }
}

impl fmt::Display for CostRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

impl std::str::FromStr for CostRange {
    type Err = String;

    /// Parses `LO:HI`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
        let lo: f64 = lo.trim().parse().map_err(|e| format!("bad LO `{lo}`: {e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("bad HI `{hi}`: {e}"))?;
        CostRange::new(lo, hi).map_err(|e| e.to_string())
    }
}

/// What one DSE session is asked to achieve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub goal_description: String,
    pub range: CostRange,
    concurrency: usize,
    pub rr_enabled: bool,
    pub bp_enabled: bool,
    pub perf_metric_key: String,
    pub cost_metric_key: String,
}

impl Mission {
    pub fn new(range: CostRange, concurrency: usize) -> Result<Self, MissionError> {
        if !(1..=MAX_CONCURRENCY).contains(&concurrency) {
            return Err(MissionError::Concurrency(concurrency));
        }
        Ok(Mission {
            goal_description: format!(
                "Find the design point with the highest l2_hit_rate whose total_power lies in the cost range {range} W."
            ),
            range,
            concurrency,
            rr_enabled: true,
            bp_enabled: true,
            perf_metric_key: "l2_hit_rate".into(),
            cost_metric_key: "total_power".into(),
        })
    }

    pub fn with_strategies(mut self, rr: bool, bp: bool) -> Self {
        self.rr_enabled = rr;
        self.bp_enabled = bp;
        self
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }
}
