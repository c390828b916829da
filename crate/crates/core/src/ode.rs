//! Mean-field ODE of regularized Q-learning and its comparison systems.
//!
//! In shifted coordinates `y = theta - theta_e` the three systems are
//!
//! ```text
//! upper:    y' = (-(1+eta) C + gamma X^T D P Pi_{X y} X) y
//! original: y' = f(theta_e + y)
//! lower:    y' = (-(1+eta) C + gamma X^T D P Pi_{X theta_e} X) y
//! ```
//!
//! and every right-hand side is continuous and piecewise linear.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bellman::OperatorSet;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg;

/// `f(theta) = b - (A_{pi(theta)} + eta C) theta`.
pub fn field_original(theta: &DVector<f64>, eta: f64, ops: &OperatorSet) -> DVector<f64> {
    ops.residual_vector(theta, eta)
}

/// `f_inf(theta) = (-(1+eta) C + gamma X^T D P Pi_{X theta} X) theta`, the
/// limit of `f(c theta)/c`.
pub fn field_limiting(theta: &DVector<f64>, eta: f64, ops: &OperatorSet) -> DVector<f64> {
    let (_, backup) = ops.greedy_backup(theta);
    backup - (1.0 + eta) * (&ops.c * theta)
}

/// Upper comparison field; the same switching-linear map as [`field_limiting`].
pub fn field_upper(y: &DVector<f64>, eta: f64, ops: &OperatorSet) -> DVector<f64> {
    field_limiting(y, eta, ops)
}

/// Lower comparison field, linear with the policy frozen at `greedy(X theta_e)`.
pub fn field_lower(y: &DVector<f64>, eta: f64, ops: &OperatorSet, theta_e: &DVector<f64>) -> DVector<f64> {
    lower_matrix(eta, ops, theta_e) * y
}

pub fn lower_matrix(eta: f64, ops: &OperatorSet, theta_e: &DVector<f64>) -> DMatrix<f64> {
    ops.gamma_term(&ops.greedy(theta_e)) - (1.0 + eta) * &ops.c
}

/// The original field in shifted coordinates.
pub fn field_original_shifted(y: &DVector<f64>, eta: f64, ops: &OperatorSet, theta_e: &DVector<f64>) -> DVector<f64> {
    field_original(&(theta_e + y), eta, ops)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeKind {
    Original,
    Limiting,
    Upper,
    Lower,
}

impl OdeKind {
    pub fn name(self) -> &'static str {
        match self {
            OdeKind::Original => "original",
            OdeKind::Limiting => "limiting",
            OdeKind::Upper => "upper",
            OdeKind::Lower => "lower",
        }
    }
}

/// One of the four systems, bound to its operators. Original, upper and
/// lower live in shifted coordinates; limiting is unshifted (its
/// equilibrium is the origin anyway).
pub struct OdeSystem<'a> {
    pub kind: OdeKind,
    pub eta: f64,
    ops: &'a OperatorSet,
    theta_e: DVector<f64>,
    lower: Option<DMatrix<f64>>,
}

impl<'a> OdeSystem<'a> {
    pub fn new(kind: OdeKind, eta: f64, ops: &'a OperatorSet, theta_e: DVector<f64>) -> Self {
        let lower = (kind == OdeKind::Lower).then(|| lower_matrix(eta, ops, &theta_e));
        Self { kind, eta, ops, theta_e, lower }
    }

    pub fn theta_e(&self) -> &DVector<f64> {
        &self.theta_e
    }

    /// Equilibrium in this system's coordinates: always the origin.
    pub fn equilibrium(&self) -> DVector<f64> {
        DVector::zeros(self.theta_e.len())
    }

    pub fn field(&self, y: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            OdeKind::Original => field_original_shifted(y, self.eta, self.ops, &self.theta_e),
            OdeKind::Limiting => field_limiting(y, self.eta, self.ops),
            OdeKind::Upper => field_upper(y, self.eta, self.ops),
            OdeKind::Lower => self.lower.as_ref().map(|m| m * y).unwrap_or_else(|| y.clone()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

/// Classical fixed-step RK4 from `t = 0` to `t_end`. The step is adjusted to
/// `t_end / ceil(t_end / dt)` so the grid ends exactly at `t_end`; every
/// step is recorded.
pub fn integrate<F>(field: F, y0: &DVector<f64>, t_end: f64, dt: f64) -> Result<Trajectory>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Precondition(format!("need dt > 0 and finite t_end >= 0 (dt = {dt}, t_end = {t_end})")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
    };
    let mut y = y0.clone();
    traj.times.push(0.0);
    traj.states.push(y.clone());
    for k in 1..=steps {
        let k1 = field(&y);
        let k2 = field(&(&y + &k1 * (h / 2.0)));
        let k3 = field(&(&y + &k2 * (h / 2.0)));
        let k4 = field(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t = k as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationBlowUp { time: t });
        }
        traj.times.push(t);
        traj.states.push(y.clone());
    }
    Ok(traj)
}

/// Largest step the stability heuristic `dt <= 0.1 / L` allows.
pub fn stable_step(dt: f64, lipschitz: f64) -> f64 {
    if lipschitz > 0.0 {
        dt.min(0.1 / lipschitz)
    } else {
        dt
    }
}

#[derive(Clone, Debug)]
pub struct SandwichReport {
    /// `max_t max_i max(lower_i - original_i, original_i - upper_i, 0)`.
    pub max_violation: f64,
    pub violation_time: f64,
    /// `|y(t_end)|_inf` for upper, original, lower.
    pub terminal_upper: f64,
    pub terminal_original: f64,
    pub terminal_lower: f64,
    pub upper: Trajectory,
    pub original: Trajectory,
    pub lower: Trajectory,
}

/// Integrates upper, original and lower systems on one grid and measures
/// how far the componentwise ordering `lower <= original <= upper` is
/// violated. Initial states are shifted coordinates and must satisfy
/// `y0_lower < y0 < y0_upper` strictly.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_check(
    ops: &OperatorSet,
    eta: f64,
    theta_e: &DVector<f64>,
    y0_upper: &DVector<f64>,
    y0: &DVector<f64>,
    y0_lower: &DVector<f64>,
    t_end: f64,
    dt: f64,
    exec: Exec,
) -> Result<SandwichReport> {
    let ordered = y0_lower.iter().zip(y0.iter()).all(|(l, o)| l < o)
        && y0.iter().zip(y0_upper.iter()).all(|(o, u)| o < u);
    if !ordered {
        return Err(Error::Precondition(
            "initial states must satisfy y0_lower < y0 < y0_upper componentwise".into(),
        ));
    }
    let lipschitz = crate::eta::lipschitz_constant(ops, eta);
    if dt > stable_step(dt, lipschitz) {
        return Err(Error::Precondition(format!("dt = {dt} exceeds 0.1 / L = {}", 0.1 / lipschitz)));
    }
    let upper = OdeSystem::new(OdeKind::Upper, eta, ops, theta_e.clone());
    let original = OdeSystem::new(OdeKind::Original, eta, ops, theta_e.clone());
    let lower = OdeSystem::new(OdeKind::Lower, eta, ops, theta_e.clone());
    let (upper_traj, (orig_traj, lower_traj)) = exec.join(
        || integrate(|y| upper.field(y), y0_upper, t_end, dt),
        || {
            exec.join(
                || integrate(|y| original.field(y), y0, t_end, dt),
                || integrate(|y| lower.field(y), y0_lower, t_end, dt),
            )
        },
    );
    let (upper_traj, orig_traj, lower_traj) = (upper_traj?, orig_traj?, lower_traj?);

    let mut max_violation = 0.0f64;
    let mut violation_time = 0.0;
    for k in 0..orig_traj.states.len() {
        let (u, o, l) = (&upper_traj.states[k], &orig_traj.states[k], &lower_traj.states[k]);
        for i in 0..o.len() {
            let v = (l[i] - o[i]).max(o[i] - u[i]);
            if v > max_violation {
                max_violation = v;
                violation_time = orig_traj.times[k];
            }
        }
    }
    let norm = |t: &Trajectory| t.last().map_or(0.0, linalg::vec_inf_norm);
    Ok(SandwichReport {
        max_violation,
        violation_time,
        terminal_upper: norm(&upper_traj),
        terminal_original: norm(&orig_traj),
        terminal_lower: norm(&lower_traj),
        upper: upper_traj,
        original: orig_traj,
        lower: lower_traj,
    })
}
