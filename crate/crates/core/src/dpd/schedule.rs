use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid step schedule {0:?}; expected const:a, pow:K,p or harm:K")]
pub struct ScheduleParseError(pub String);

/// Step-size sequence `α^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StepSchedule {
    /// `α^t = α`
    Constant(f64),
    /// `α^t = K / (t + 1)^p`
    Power { k: f64, p: f64 },
    /// `α^t = K / (t + 1)`
    Harmonic(f64),
}

impl StepSchedule {
    pub fn step(&self, t: u64) -> f64 {
        let t1 = t as f64 + 1.0;
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::Power { k, p } => k / t1.powf(p),
            StepSchedule::Harmonic(k) => k / t1,
        }
    }

    /// Same schedule with every step multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            StepSchedule::Constant(a) => StepSchedule::Constant(a * factor),
            StepSchedule::Power { k, p } => StepSchedule::Power { k: k * factor, p },
            StepSchedule::Harmonic(k) => StepSchedule::Harmonic(k * factor),
        }
    }

    /// Square-summable but not summable.
    pub fn is_diminishing(&self) -> bool {
        match *self {
            StepSchedule::Constant(_) => false,
            StepSchedule::Power { p, .. } => p > 0.5 && p <= 1.0,
            StepSchedule::Harmonic(_) => true,
        }
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::Constant(a) => write!(f, "const:{a}"),
            StepSchedule::Power { k, p } => write!(f, "pow:{k},{p}"),
            StepSchedule::Harmonic(k) => write!(f, "harm:{k}"),
        }
    }
}

impl FromStr for StepSchedule {
    type Err = ScheduleParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ScheduleParseError(s.to_string());
        let (kind, args) = s.split_once(':').ok_or_else(err)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err())?;
        if nums.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(err());
        }
        match (kind.trim(), nums.as_slice()) {
            ("const", [a]) if *a > 0.0 => Ok(StepSchedule::Constant(*a)),
            ("pow", [k, p]) if *k > 0.0 => Ok(StepSchedule::Power { k: *k, p: *p }),
            ("harm", [k]) if *k > 0.0 => Ok(StepSchedule::Harmonic(*k)),
            _ => Err(err()),
        }
    }
}

impl TryFrom<String> for StepSchedule {
    type Error = ScheduleParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StepSchedule> for String {
    fn from(s: StepSchedule) -> Self {
        s.to_string()
    }
}
