use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::DyadicCoord;

pub type Field2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Field1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Space,
    Time,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Space => "space",
            Axis::Time => "time",
        })
    }
}

/// A line `x = position` (`Axis::Space`) or `t = position` (`Axis::Time`)
/// on which the load blows up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularLine {
    pub axis: Axis,
    pub position: DyadicCoord,
}

#[derive(Clone)]
pub struct ExactSolution {
    pub u: Field2,
    pub sigma: Field2,
}

/// Data of one heat problem on `(0,1) x (0,1)` with homogeneous lateral
/// boundary values.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub f: Field2,
    pub u0: Field1,
    /// Loads with a singular line are integrated with graded rules; the line
    /// must lie on cell edges.
    pub singular: Option<SingularLine>,
    /// `f` as a function of (coordinate along the singular line, signed
    /// distance to it). Graded rules sample it without forming `x - position`,
    /// which underflows to zero next to the line on fine cells.
    pub f_offset: Option<Field2>,
    /// Lines across which `f` jumps; quadrature splits cells there.
    pub f_jumps_t: Vec<DyadicCoord>,
    pub f_jumps_x: Vec<DyadicCoord>,
    pub u0_jumps: Vec<DyadicCoord>,
    /// False when `f` is not square integrable; oscillation terms are then
    /// finite only because quadrature never samples the singular line.
    pub f_square_integrable: bool,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("singular", &self.singular)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("alpha = {0} outside the supported range [-0.75, 0]")]
    AlphaOutOfRange(f64),
    #[error("unknown experiment {0}; expected 1, 2, 3 or 4")]
    UnknownExperiment(u32),
}

impl Problem {
    pub fn zero() -> Problem {
        Problem {
            name: "zero".into(),
            f: Arc::new(|_, _| 0.0),
            u0: Arc::new(|_| 0.0),
            singular: None,
            f_offset: None,
            f_jumps_t: Vec::new(),
            f_jumps_x: Vec::new(),
            u0_jumps: Vec::new(),
            f_square_integrable: true,
            exact: Some(ExactSolution { u: Arc::new(|_, _| 0.0), sigma: Arc::new(|_, _| 0.0) }),
        }
    }

    pub fn with_data(name: &str, f: Field2, u0: Field1) -> Problem {
        Problem { name: name.into(), f, u0, exact: None, ..Problem::zero() }
    }
}

/// Smooth solution `u = t^2 x (1 - x)`.
pub fn experiment1() -> Problem {
    Problem {
        name: "experiment1".into(),
        f: Arc::new(|t, x| 2.0 * t * x * (1.0 - x) + 2.0 * t * t),
        exact: Some(ExactSolution {
            u: Arc::new(|t, x| t * t * x * (1.0 - x)),
            sigma: Arc::new(|t, x| -t * t * (1.0 - 2.0 * x)),
        }),
        ..Problem::zero()
    }
}

/// Checkerboard load `(-1)^(floor(4t) + floor(4x))`.
pub fn experiment2() -> Problem {
    let quarters: Vec<DyadicCoord> = (1..4).map(|k| DyadicCoord::new(k, 2)).collect();
    Problem {
        name: "experiment2".into(),
        f: Arc::new(|t, x| {
            let k = (4.0 * t).floor() as i64 + (4.0 * x).floor() as i64;
            if k % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }),
        f_jumps_t: quarters.clone(),
        f_jumps_x: quarters,
        exact: None,
        ..Problem::zero()
    }
}

/// No load, initial data jumping from -1 to 1 at `x = 1/2`.
pub fn experiment3() -> Problem {
    Problem {
        name: "experiment3".into(),
        u0: Arc::new(|x| if x < 0.5 { -1.0 } else { 1.0 }),
        u0_jumps: vec![DyadicCoord::new(1, 1)],
        exact: None,
        ..Problem::zero()
    }
}

/// Load `|x - 1/2|^alpha` or `|t - 1/2|^alpha`.
pub fn experiment4(alpha: f64, axis: Axis) -> Result<Problem, ProblemError> {
    if !(-0.75..=0.0).contains(&alpha) {
        return Err(ProblemError::AlphaOutOfRange(alpha));
    }
    let f: Field2 = if alpha == 0.0 {
        Arc::new(|_, _| 1.0)
    } else {
        match axis {
            Axis::Space => Arc::new(move |_, x: f64| (x - 0.5).abs().powf(alpha)),
            Axis::Time => Arc::new(move |t: f64, _| (t - 0.5).abs().powf(alpha)),
        }
    };
    Ok(Problem {
        name: format!("experiment4_{axis}_{alpha}"),
        f,
        singular: (alpha < 0.0).then_some(SingularLine { axis, position: DyadicCoord::new(1, 1) }),
        f_offset: (alpha < 0.0).then(|| Arc::new(move |_: f64, d: f64| d.abs().powf(alpha)) as Field2),
        f_square_integrable: alpha > -0.5,
        exact: None,
        ..Problem::zero()
    })
}

pub fn experiment(number: u32, alpha: f64, axis: Axis) -> Result<Problem, ProblemError> {
    match number {
        1 => Ok(experiment1()),
        2 => Ok(experiment2()),
        3 => Ok(experiment3()),
        4 => experiment4(alpha, axis),
        n => Err(ProblemError::UnknownExperiment(n)),
    }
}
