//! Restart policies and the run loop that executes them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::cnf::Formula;
use crate::probsat::{ProbSat, SolverConfig};
use crate::rng::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum RestartError {
    #[error("Luby index must be at least 1")]
    ZeroIndex,
    #[error("invalid restart policy `{0}` (expected none, fixed:<t> or luby:<a>)")]
    Parse(String),
    #[error("policy `{0}` is relative to the variable count, which is unknown here")]
    NeedsVarCount(String),
    #[error("restart cutoff must be at least 1")]
    ZeroCutoff,
}

/// `t_i` of the Luby sequence (1-based): `2^{k-1}` if `i = 2^k - 1`, otherwise
/// `t_{i - 2^{k-1} + 1}` with `k` the smallest integer such that `2^k - 1 >= i`.
pub fn luby_term(i: u64) -> Result<u64, RestartError> {
    if i == 0 {
        return Err(RestartError::ZeroIndex);
    }
    let mut i = i;
    loop {
        // smallest k with 2^k - 1 >= i
        let k = 64 - i.leading_zeros() as u64;
        let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        if full == i {
            return Ok(1u64 << (k - 1));
        }
        i = i - (1u64 << (k - 1)) + 1;
    }
}

/// Restart times `a * t_i` for `i = 1, 2, ...`.
#[derive(Debug, Clone)]
pub struct LubySchedule {
    a: u64,
    i: u64,
}

impl LubySchedule {
    pub fn new(a: u64) -> Self {
        LubySchedule { a, i: 0 }
    }
}

impl Iterator for LubySchedule {
    type Item = u64;
    fn next(&mut self) -> Option<u64> {
        self.i += 1;
        Some(self.a.saturating_mul(luby_term(self.i).unwrap()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartPolicy {
    NoRestart,
    FixedCutoff { t: u64 },
    Luby { a: u64 },
}

impl RestartPolicy {
    pub fn validate(&self) -> Result<(), RestartError> {
        match *self {
            RestartPolicy::FixedCutoff { t: 0 } | RestartPolicy::Luby { a: 0 } => {
                Err(RestartError::ZeroCutoff)
            }
            _ => Ok(()),
        }
    }

    /// Parses `none`, `fixed:<t>` or `luby:<a>`, where the number may also be
    /// written `<c>n` to mean `c * num_vars`.
    pub fn parse_with_vars(s: &str, num_vars: Option<u32>) -> Result<Self, RestartError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(RestartPolicy::NoRestart);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| RestartError::Parse(s.into()))?;
        let value = if let Some(c) = arg.strip_suffix('n') {
            let c: u64 = c.parse().map_err(|_| RestartError::Parse(s.into()))?;
            let n = num_vars.ok_or_else(|| RestartError::NeedsVarCount(s.into()))?;
            c * n as u64
        } else {
            parse_count(arg).ok_or_else(|| RestartError::Parse(s.into()))?
        };
        let p = match kind.to_ascii_lowercase().as_str() {
            "fixed" => RestartPolicy::FixedCutoff { t: value },
            "luby" => RestartPolicy::Luby { a: value },
            _ => return Err(RestartError::Parse(s.into())),
        };
        p.validate()?;
        Ok(p)
    }

    /// Per-try budgets before truncation.
    fn schedule(&self) -> Box<dyn Iterator<Item = u64>> {
        match *self {
            RestartPolicy::NoRestart => Box::new(std::iter::repeat(u64::MAX)),
            RestartPolicy::FixedCutoff { t } => Box::new(std::iter::repeat(t)),
            RestartPolicy::Luby { a } => Box::new(LubySchedule::new(a)),
        }
    }
}

// accepts plain integers and float notation such as 1e5
fn parse_count(s: &str) -> Option<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    let v: f64 = s.parse().ok()?;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 1.8e19).then_some(v as u64)
}

impl fmt::Display for RestartPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RestartPolicy::NoRestart => write!(f, "none"),
            RestartPolicy::FixedCutoff { t } => write!(f, "fixed:{t}"),
            RestartPolicy::Luby { a } => write!(f, "luby:{a}"),
        }
    }
}

impl FromStr for RestartPolicy {
    type Err = RestartError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RestartPolicy::parse_with_vars(s, None)
    }
}

impl Serialize for RestartPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RestartPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartedRunOutcome {
    pub solved: bool,
    pub total_flips: u64,
    pub restarts: u64,
    pub per_try_flips: Vec<u64>,
}

/// Runs tries with the policy's budgets until solved or `total_budget` flips
/// are spent. Try `j` uses seed `derive_seed(cfg.seed, j)`.
pub fn run_with_policy(
    f: &Formula,
    cfg: &SolverConfig,
    policy: RestartPolicy,
    total_budget: u64,
) -> RestartedRunOutcome {
    let mut solver = ProbSat::new(f);
    run_with_policy_on(&mut solver, cfg, policy, total_budget)
}

/// As [`run_with_policy`], reusing an existing solver.
pub fn run_with_policy_on(
    solver: &mut ProbSat<'_>,
    cfg: &SolverConfig,
    policy: RestartPolicy,
    total_budget: u64,
) -> RestartedRunOutcome {
    let mut per_try = Vec::new();
    let mut total = 0u64;
    let mut solved = false;
    for (j, budget) in policy.schedule().enumerate() {
        if total >= total_budget {
            break;
        }
        let budget = budget.max(1).min(total_budget - total);
        let try_cfg = SolverConfig {
            max_flips: budget,
            seed: derive_seed(cfg.seed, j as u64),
            ..*cfg
        };
        let out = solver.run(&try_cfg);
        per_try.push(out.flips);
        total += out.flips;
        if out.solved {
            solved = true;
            break;
        }
    }
    RestartedRunOutcome {
        solved,
        total_flips: total,
        restarts: per_try.len().saturating_sub(1) as u64,
        per_try_flips: per_try,
    }
}
