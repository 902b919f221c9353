//! One-step follower updates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Vehicle and simulation constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// m/s²
    pub a_max: f64,
    /// m/s
    pub v_max: f64,
    /// Comfortable deceleration, m/s².
    pub b: f64,
    /// m
    pub length: f64,
    /// s
    pub t_react: f64,
    pub eps_uncertainty: f64,
    /// s
    pub dt: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            a_max: 2.6,
            v_max: 55.55,
            b: 4.5,
            length: 5.0,
            t_react: 1.0,
            eps_uncertainty: 0.0,
            dt: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [self.a_max, self.v_max, self.b, self.length, self.t_react, self.dt];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.eps_uncertainty >= 0.0) {
            return Err(Error::config(format!("invalid vehicle parameters {self:?}")));
        }
        Ok(())
    }
}

/// Follower model and its coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum CarFollowingModel {
    Krauss,
    Gm { c: f64 },
    Ghr { k1: f64, k2: f64, k3: f64 },
}

impl CarFollowingModel {
    pub const GM_DEFAULT: CarFollowingModel = CarFollowingModel::Gm { c: 0.368 };
    pub const GHR_DEFAULT: CarFollowingModel = CarFollowingModel::Ghr {
        k1: 1.2,
        k2: 1.0,
        k3: 1.1,
    };

    pub fn name(&self) -> &'static str {
        match self {
            CarFollowingModel::Krauss => "krauss",
            CarFollowingModel::Gm { .. } => "gm",
            CarFollowingModel::Ghr { .. } => "ghr",
        }
    }

    /// Feature columns emitted for this model, in CSV order.
    pub fn feature_names(&self) -> [&'static str; 4] {
        match self {
            CarFollowingModel::Ghr { .. } => ["v_f", "v_l", "s_f_lag", "dv_lag"],
            _ => ["v_f", "v_l", "s_f", "ds"],
        }
    }
}

impl fmt::Display for CarFollowingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CarFollowingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "krauss" => Ok(CarFollowingModel::Krauss),
            "gm" => Ok(CarFollowingModel::GM_DEFAULT),
            "ghr" => Ok(CarFollowingModel::GHR_DEFAULT),
            other => Err(Error::config(format!("unknown model `{other}` (expected krauss, gm or ghr)"))),
        }
    }
}

/// Krauss safe-speed rule. `v_l` and `s_f` are the leader speed and gap at
/// the current step.
pub fn step_krauss(v_f: f64, v_l: f64, s_f: f64, p: &VehicleParams) -> f64 {
    let v_safe = v_l + (s_f - v_l * p.dt) / ((v_f + v_l) / (2.0 * p.b) + p.t_react);
    let v_des = (v_f + p.a_max * p.dt).min(v_safe).min(p.v_max);
    (v_des - p.eps_uncertainty * p.a_max).max(0.0)
}

pub fn step_gm(v_f: f64, v_l: f64, c: f64, p: &VehicleParams) -> f64 {
    (v_f + c * (v_l - v_f)).clamp(0.0, p.v_max)
}

/// `dv_lag` and `s_f_lag` are the speed difference and gap one step back.
pub fn step_ghr(v_f: f64, dv_lag: f64, s_f_lag: f64, k: (f64, f64, f64), p: &VehicleParams) -> f64 {
    let (k1, k2, k3) = k;
    (v_f + k1 * v_f.powf(k2) * dv_lag / s_f_lag.powf(k3)).clamp(0.0, p.v_max)
}
