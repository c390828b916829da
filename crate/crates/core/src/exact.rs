//! Tabular ground truth: optimal `Q*` by value iteration, `Q^pi` by a dense
//! solve, and the `R_max / (1 - gamma)` bound on `|Q*|_inf`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{DetPolicy, Mdp};

/// Q-values over flat (action-major) state-action pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub values: Vec<f64>,
}

impl QTable {
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Tabular Bellman optimality operator
/// `(TQ)(s, a) = R_a(s) + gamma * sum_s' P_a(s, s') max_a' Q(s', a')`.
pub fn bellman_optimality(mdp: &Mdp, q: &DVector<f64>) -> DVector<f64> {
    let n = mdp.num_states();
    let v = DVector::from_fn(n, |s, _| {
        (0..mdp.num_actions())
            .map(|a| q[a * n + s])
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let mut out = mdp.reward_vector();
    out += mdp.gamma() * (mdp.stacked_transition() * v);
    out
}

/// Value iteration from `Q = 0` until `|Q_{k+1} - Q_k|_inf <= tol (1-gamma)/gamma`.
pub fn optimal_q(mdp: &Mdp, tol: f64) -> QTable {
    optimal_q_from(mdp, tol, DVector::zeros(mdp.num_pairs()))
}

pub fn optimal_q_from(mdp: &Mdp, tol: f64, start: DVector<f64>) -> QTable {
    let gamma = mdp.gamma();
    let stop = if gamma > 0.0 { tol * (1.0 - gamma) / gamma } else { tol };
    let p = mdp.stacked_transition();
    let r = mdp.reward_vector();
    let n = mdp.num_states();
    let mut q = start;
    loop {
        let v = DVector::from_fn(n, |s, _| {
            (0..mdp.num_actions()).map(|a| q[a * n + s]).fold(f64::NEG_INFINITY, f64::max)
        });
        let next = &r + gamma * (&p * v);
        let delta = linalg::vec_inf_norm(&(&next - &q));
        q = next;
        // Once the increment stops shrinking it is pure rounding noise.
        if delta <= stop || delta <= 4.0 * f64::EPSILON * linalg::vec_inf_norm(&q) {
            break;
        }
    }
    QTable { values: q.iter().copied().collect() }
}

/// Solves `(I - gamma P^pi) Q = R` exactly.
pub fn policy_q(mdp: &Mdp, policy: &DetPolicy) -> Result<QTable> {
    let pairs = mdp.num_pairs();
    let system = DMatrix::identity(pairs, pairs) - mdp.gamma() * mdp.policy_transition(policy);
    let r = mdp.reward_vector();
    let q = linalg::solve(&system, &r)?;
    let residual = linalg::vec_inf_norm(&(&r - &system * &q));
    if residual > 1e-10 * linalg::vec_inf_norm(&r).max(1.0) {
        return Err(Error::Singular(format!("policy evaluation residual {residual:e}")));
    }
    Ok(QTable { values: q.iter().copied().collect() })
}

/// `R_max / (1 - gamma)`.
pub fn q_bound(mdp: &Mdp) -> f64 {
    mdp.r_max() / (1.0 - mdp.gamma())
}
