//! Longitudinal braking kinematics for the false-positive stop scenario.
//!
//! An AGV cruising in a corridor brakes when its detector reports a ghost
//! object; a rear agent following it reacts to the AGV's braking after its
//! own reaction time. [`simulate_fp_braking`] produces the trace the
//! false-positive formula is evaluated on, and [`min_safe_rear_gap`] is the
//! closed-form boundary between collision and no collision.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Column, ParameterEnv, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("frame rate must be > 0, got {0}")]
    NonPositiveFrameRate(f64),
    #[error("deceleration must be > 0, got {0}")]
    NonPositiveDecel(f64),
    #[error("{field} must be >= 0 and finite, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("simulation step must be > 0, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon {horizon} s ends before both agents stop at {needed} s")]
    HorizonTooShort { horizon: f64, needed: f64 },
    #[error("scenario field {field} references parameter {param}, which is not bound")]
    UnboundParam { field: &'static str, param: String },
}

fn non_negative(field: &'static str, value: f64) -> Result<f64, KinematicsError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(KinematicsError::Negative { field, value })
    }
}

/// Worst-case perception latency: one full frame plus processing.
pub fn reaction_time(frame_rate: f64, t_proc: f64) -> Result<f64, KinematicsError> {
    if !(frame_rate > 0.0) {
        return Err(KinematicsError::NonPositiveFrameRate(frame_rate));
    }
    Ok(1.0 / frame_rate + non_negative("t_proc", t_proc)?)
}

/// Distance covered while reacting at constant speed and then braking to rest.
pub fn stopping_distance(v0: f64, t_react: f64, decel: f64) -> Result<f64, KinematicsError> {
    if !(decel > 0.0) {
        return Err(KinematicsError::NonPositiveDecel(decel));
    }
    let v0 = non_negative("v0", v0)?;
    let t_react = non_negative("t_react", t_react)?;
    Ok(v0 * t_react + v0 * v0 / (2.0 * decel))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    /// Initial speed, m/s.
    pub v0: f64,
    /// Braking deceleration, m/s^2.
    pub decel: f64,
    /// Reaction time, s.
    #[serde(default)]
    pub t_react: f64,
}

impl AgentParams {
    pub fn new(v0: f64, decel: f64, t_react: f64) -> Result<Self, KinematicsError> {
        let p = Self { v0, decel, t_react };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        non_negative("v0", self.v0)?;
        non_negative("t_react", self.t_react)?;
        if !(self.decel > 0.0 && self.decel.is_finite()) {
            return Err(KinematicsError::NonPositiveDecel(self.decel));
        }
        Ok(())
    }

    fn braking_duration(&self) -> f64 {
        self.v0 / self.decel
    }
}

/// Smallest initial gap at which the rear agent, reacting `rear.t_react`
/// after the AGV starts braking and then braking at `rear.decel`, comes to
/// rest at or behind the AGV's stopping point.
///
/// This is the exact collision boundary whenever the rear agent is never
/// slower than the AGV during the manoeuvre (`rear.v0 >= agv.v0` and
/// `rear.decel <= agv.decel`); otherwise the closest approach can occur
/// before both have stopped.
pub fn min_safe_rear_gap(rear: &AgentParams, agv: &AgentParams) -> f64 {
    let rear_travel = rear.v0 * rear.t_react + rear.v0 * rear.v0 / (2.0 * rear.decel);
    let agv_travel = agv.v0 * agv.v0 / (2.0 * agv.decel);
    (rear_travel - agv_travel).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Fusion reports the same ghost object as the detector.
    #[default]
    MirrorFp,
    Never,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpScenario {
    pub agv: AgentParams,
    pub rear: AgentParams,
    /// Initial AGV to rear-agent gap, m.
    pub gap0: f64,
    /// Detector frame rate, Hz.
    pub frame_rate: f64,
    /// Processing latency after a frame, s.
    pub t_proc: f64,
    /// Time of the false positive, s.
    pub t_fp: f64,
    /// Simulation step, s.
    pub dt: f64,
    /// Simulated span, s.
    pub horizon: f64,
    #[serde(default)]
    pub fusion: FusionMode,
}

impl FpScenario {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        self.agv.validate()?;
        self.rear.validate()?;
        non_negative("gap0", self.gap0)?;
        non_negative("t_fp", self.t_fp)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(KinematicsError::NonPositiveStep(self.dt));
        }
        let needed = self.t_fp + self.braking_window()?;
        if !(self.horizon >= needed) {
            return Err(KinematicsError::HorizonTooShort {
                horizon: self.horizon,
                needed,
            });
        }
        Ok(())
    }

    /// Time from the AGV starting to brake (after perception latency).
    pub fn agv_brake_time(&self) -> Result<f64, KinematicsError> {
        Ok(self.t_fp + reaction_time(self.frame_rate, self.t_proc)?)
    }

    /// Time from the false positive until both agents are at rest: the
    /// longest window in which a rear-end impact can happen.
    pub fn braking_window(&self) -> Result<f64, KinematicsError> {
        let rt = reaction_time(self.frame_rate, self.t_proc)?;
        Ok(rt + self.agv.braking_duration().max(self.rear.t_react + self.rear.braking_duration()))
    }
}

const EPS: f64 = 1e-9;

/// Explicit-Euler simulation of the scenario at step `dt` over `[0, horizon]`.
///
/// The AGV cruises until `t_fp + reaction_time`, then brakes to rest. The
/// rear agent perceives the braking at once and brakes after its reaction
/// time. The AGV's own `t_react` is not used: its latency comes from the
/// frame rate. Columns: `d_agv_rear` (gap, floored at 0 and held there
/// after a collision), `fp_ml` (true for one frame from `t_fp`),
/// `detected_fusion`, `v_agv`, `v_rear`.
pub fn simulate_fp_braking(s: &FpScenario) -> Result<Trace, KinematicsError> {
    s.validate()?;
    let frame = 1.0 / s.frame_rate;
    let agv_brake = s.agv_brake_time()?;
    let rear_brake = agv_brake + s.rear.t_react;
    let n = (s.horizon / s.dt + EPS).floor() as usize + 1;

    let mut gap_col = Vec::with_capacity(n);
    let mut fp_col = Vec::with_capacity(n);
    let mut fusion_col = Vec::with_capacity(n);
    let mut va_col = Vec::with_capacity(n);
    let mut vr_col = Vec::with_capacity(n);

    let (mut gap, mut va, mut vr) = (s.gap0, s.agv.v0, s.rear.v0);
    let mut collided = gap <= 0.0;
    for k in 0..n {
        let t = k as f64 * s.dt;
        let fp = t >= s.t_fp - EPS && t < s.t_fp + frame - EPS;
        gap_col.push(if collided { 0.0 } else { gap });
        fp_col.push(fp);
        fusion_col.push(match s.fusion {
            FusionMode::MirrorFp => fp,
            FusionMode::Never => false,
            FusionMode::Always => true,
        });
        va_col.push(va);
        vr_col.push(vr);

        let aa = if t >= agv_brake - EPS { s.agv.decel } else { 0.0 };
        let ar = if t >= rear_brake - EPS { s.rear.decel } else { 0.0 };
        if !collided {
            gap += (va - vr) * s.dt;
            if gap <= 0.0 {
                gap = 0.0;
                collided = true;
            }
        }
        va = (va - aa * s.dt).max(0.0);
        vr = (vr - ar * s.dt).max(0.0);
    }

    let columns = BTreeMap::from([
        ("d_agv_rear".to_string(), Column::Num(gap_col)),
        ("fp_ml".to_string(), Column::Bool(fp_col)),
        ("detected_fusion".to_string(), Column::Bool(fusion_col)),
        ("v_agv".to_string(), Column::Num(va_col)),
        ("v_rear".to_string(), Column::Num(vr_col)),
    ]);
    Ok(Trace::new(0.0, s.dt, columns).expect("simulation produces a well-formed trace"))
}

/// Scenario field that is either a literal or linked to a case parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioValue {
    Value(f64),
    Param {
        param: String,
    },
}

impl ScenarioValue {
    fn resolve(&self, field: &'static str, env: &ParameterEnv) -> Result<f64, KinematicsError> {
        match self {
            ScenarioValue::Value(v) => Ok(*v),
            ScenarioValue::Param { param } => env.get(param).ok_or_else(|| KinematicsError::UnboundParam {
                field,
                param: param.clone(),
            }),
        }
    }

    fn param(&self) -> Option<&str> {
        match self {
            ScenarioValue::Param { param } => Some(param),
            ScenarioValue::Value(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub v0: ScenarioValue,
    pub decel: ScenarioValue,
    #[serde(default = "zero")]
    pub t_react: ScenarioValue,
}

fn zero() -> ScenarioValue {
    ScenarioValue::Value(0.0)
}

/// Scenario file: the scenario fields in SI units (m, s, m/s, m/s^2, Hz),
/// each a number or `{param: name}` resolved against the case parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub agv: AgentSpec,
    pub rear: AgentSpec,
    pub gap0: ScenarioValue,
    pub frame_rate: ScenarioValue,
    pub t_proc: ScenarioValue,
    pub t_fp: ScenarioValue,
    pub dt: ScenarioValue,
    pub horizon: ScenarioValue,
    #[serde(default)]
    pub fusion: FusionMode,
}

impl ScenarioSpec {
    pub fn resolve(&self, env: &ParameterEnv) -> Result<FpScenario, KinematicsError> {
        let agent = |a: &AgentSpec, which: (&'static str, &'static str, &'static str)| -> Result<AgentParams, KinematicsError> {
            Ok(AgentParams {
                v0: a.v0.resolve(which.0, env)?,
                decel: a.decel.resolve(which.1, env)?,
                t_react: a.t_react.resolve(which.2, env)?,
            })
        };
        let s = FpScenario {
            agv: agent(&self.agv, ("agv.v0", "agv.decel", "agv.t_react"))?,
            rear: agent(&self.rear, ("rear.v0", "rear.decel", "rear.t_react"))?,
            gap0: self.gap0.resolve("gap0", env)?,
            frame_rate: self.frame_rate.resolve("frame_rate", env)?,
            t_proc: self.t_proc.resolve("t_proc", env)?,
            t_fp: self.t_fp.resolve("t_fp", env)?,
            dt: self.dt.resolve("dt", env)?,
            horizon: self.horizon.resolve("horizon", env)?,
            fusion: self.fusion,
        };
        s.validate()?;
        Ok(s)
    }

    /// Case parameters the scenario is linked to.
    pub fn linked_params(&self) -> BTreeSet<String> {
        [
            &self.agv.v0,
            &self.agv.decel,
            &self.agv.t_react,
            &self.rear.v0,
            &self.rear.decel,
            &self.rear.t_react,
            &self.gap0,
            &self.frame_rate,
            &self.t_proc,
            &self.t_fp,
            &self.dt,
            &self.horizon,
        ]
        .into_iter()
        .filter_map(|v| v.param().map(str::to_string))
        .collect()
    }
}

impl From<&FpScenario> for ScenarioSpec {
    fn from(s: &FpScenario) -> Self {
        let v = ScenarioValue::Value;
        let agent = |a: &AgentParams| AgentSpec {
            v0: v(a.v0),
            decel: v(a.decel),
            t_react: v(a.t_react),
        };
        Self {
            agv: agent(&s.agv),
            rear: agent(&s.rear),
            gap0: v(s.gap0),
            frame_rate: v(s.frame_rate),
            t_proc: v(s.t_proc),
            t_fp: v(s.t_fp),
            dt: v(s.dt),
            horizon: v(s.horizon),
            fusion: s.fusion,
        }
    }
}
