use serde::{Deserialize, Serialize};

use super::q_tilde;
use crate::error::Result;
use crate::kinetics::{rhs_full, ModelParams, Trajectory};

/// `pi(t) = q(t) - q̃(s(t))` alongside `dq/dt` at each output time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSeries {
    pub times: Vec<f64>,
    pub pi: Vec<f64>,
    pub q_dot: Vec<f64>,
}

pub fn perturbation(traj: &Trajectory, p: &ModelParams) -> Result<PerturbationSeries> {
    let mut pi = Vec::with_capacity(traj.states.len());
    let mut q_dot = Vec::with_capacity(traj.states.len());
    for x in &traj.states {
        pi.push(x.q - q_tilde(x.s.max(0.0), p)?);
        q_dot.push(rhs_full(x, p).q);
    }
    Ok(PerturbationSeries {
        times: traj.times.clone(),
        pi,
        q_dot,
    })
}

/// Tally of `sign(dq/dt) = -sign(pi)` over interior output points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignIdentityReport {
    pub interior_points: usize,
    pub matched: usize,
    /// Points where `|pi| <= tol`, so the sign is not resolved.
    pub near_zero: usize,
    pub violated: usize,
}

impl SignIdentityReport {
    pub fn matched_fraction(&self) -> f64 {
        if self.interior_points == 0 {
            1.0
        } else {
            self.matched as f64 / self.interior_points as f64
        }
    }
}

pub fn sign_identity(series: &PerturbationSeries, tol: f64) -> SignIdentityReport {
    let n = series.pi.len();
    let mut report = SignIdentityReport {
        interior_points: n.saturating_sub(2),
        matched: 0,
        near_zero: 0,
        violated: 0,
    };
    for i in 1..n.saturating_sub(1) {
        let (pi, qd) = (series.pi[i], series.q_dot[i]);
        if pi.abs() <= tol {
            report.near_zero += 1;
        } else if qd.signum() == -pi.signum() && qd != 0.0 {
            report.matched += 1;
        } else {
            report.violated += 1;
        }
    }
    report
}
