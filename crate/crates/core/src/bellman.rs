//! The regularized projected Bellman equation
//!
//! ```text
//! b - (A_pi + eta C) theta = 0,   pi = greedy(X theta)
//! C = X^T D X,  b = X^T D R,  A_pi = C - gamma X^T D P Pi_pi X
//! ```
//!
//! and three independent ways to solve it: fixed-point iteration of
//! `T_eta`, the deterministic recursion `theta += alpha (b - (A_pi + eta C) theta)`,
//! and exhaustive enumeration of deterministic policies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::exact::QTable;
use crate::linalg;
use crate::mdp::{self, DetPolicy, FeatureMap, Mdp};

/// Largest feature dimension the dense solvers accept.
pub const MAX_FEATURE_DIM: usize = 64;
/// Deterministic iteration gives up once `|theta|_inf` exceeds this.
pub const DIVERGENCE_GUARD: f64 = 1e9;

/// Greedy policy of a flat Q-vector; ties go to the lowest action index.
pub fn greedy_policy(q: &DVector<f64>, num_states: usize) -> DetPolicy {
    let num_actions = q.len() / num_states;
    DetPolicy(
        (0..num_states)
            .map(|s| {
                let mut best = 0;
                for a in 1..num_actions {
                    if q[a * num_states + s] > q[best * num_states + s] {
                        best = a;
                    }
                }
                best
            })
            .collect(),
    )
}

/// Every matrix of the projected Bellman equation for one (MDP, X) pair.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    x: DMatrix<f64>,
    /// `C = X^T D X`.
    pub c: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
    /// `b = X^T D R`.
    pub b: DVector<f64>,
    /// `X^T D P` with P the stacked |S||A| x |S| transition matrix.
    pub xdp: DMatrix<f64>,
    /// `Gamma = X (X^T D X)^{-1} X^T D`.
    pub proj: DMatrix<f64>,
}

impl OperatorSet {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn greedy(&self, theta: &DVector<f64>) -> DetPolicy {
        greedy_policy(&(&self.x * theta), self.num_states)
    }

    /// `gamma X^T D P Pi_pi X`.
    pub fn gamma_term(&self, policy: &DetPolicy) -> DMatrix<f64> {
        self.gamma * &self.xdp * policy.selector(self.num_actions) * &self.x
    }

    /// `A_pi = C - gamma X^T D P Pi_pi X`.
    pub fn a_matrix(&self, policy: &DetPolicy) -> DMatrix<f64> {
        &self.c - self.gamma_term(policy)
    }

    /// `(A_pi + eta C)`.
    pub fn regularized_matrix(&self, policy: &DetPolicy, eta: f64) -> DMatrix<f64> {
        (1.0 + eta) * &self.c - self.gamma_term(policy)
    }

    /// `gamma X^T D P max_a (X theta)(., a)` together with the greedy policy;
    /// equals `gamma_term(greedy(X theta)) theta` without forming the matrix.
    pub fn greedy_backup(&self, theta: &DVector<f64>) -> (DetPolicy, DVector<f64>) {
        let q = &self.x * theta;
        let policy = greedy_policy(&q, self.num_states);
        let v = DVector::from_fn(self.num_states, |s, _| q[policy.action(s) * self.num_states + s]);
        (policy, self.gamma * (&self.xdp * v))
    }

    /// `b - (A_pi + eta C) theta` at the greedy policy of `theta`.
    pub fn residual_vector(&self, theta: &DVector<f64>, eta: f64) -> DVector<f64> {
        let (_, backup) = self.greedy_backup(theta);
        &self.b - (1.0 + eta) * (&self.c * theta) + backup
    }

    /// `gamma |Gamma|_inf`, the gain in the bias bound.
    pub fn projection_gain(&self) -> f64 {
        self.gamma * linalg::inf_norm(&self.proj)
    }
}

/// Builds the operators; fails when an assumption is violated, `h` exceeds
/// [`MAX_FEATURE_DIM`] or `C` is numerically singular.
pub fn build_operators(mdp: &Mdp, fmap: &FeatureMap) -> Result<OperatorSet> {
    mdp::validate(mdp, fmap).into_result()?;
    if fmap.dim() > MAX_FEATURE_DIM {
        return Err(Error::InvalidInput(format!(
            "feature dimension {} exceeds {MAX_FEATURE_DIM}",
            fmap.dim()
        )));
    }
    let x = fmap.matrix().clone();
    let xtd = x.transpose() * mdp.d_matrix();
    let c = &xtd * &x;
    let c_inv = linalg::inverse(&c)?;
    let b = &xtd * mdp.reward_vector();
    let xdp = &xtd * mdp.stacked_transition();
    let proj = &x * &c_inv * &xtd;
    Ok(OperatorSet {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        gamma: mdp.gamma(),
        x,
        c,
        c_inv,
        b,
        xdp,
        proj,
    })
}

/// `T_eta(theta) = (1/(1+eta)) C^{-1} (b + gamma X^T D P Pi_{X theta} X theta)`.
pub fn t_eta(theta: &DVector<f64>, eta: f64, ops: &OperatorSet) -> DVector<f64> {
    let (_, backup) = ops.greedy_backup(theta);
    (&ops.c_inv * (&ops.b + backup)) / (1.0 + eta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPoint,
    DeterministicIter,
    PolicyEnum,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub theta_e: Vec<f64>,
    pub greedy: DetPolicy,
    /// `|b - (A_pi + eta C) theta_e|_inf` at the greedy policy.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

impl Solution {
    fn new(ops: &OperatorSet, eta: f64, theta: DVector<f64>, iterations: usize, method: SolveMethod) -> Self {
        let residual = linalg::vec_inf_norm(&ops.residual_vector(&theta, eta));
        Self {
            greedy: ops.greedy(&theta),
            theta_e: theta.iter().copied().collect(),
            residual,
            iterations,
            method,
        }
    }

    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_e)
    }
}

/// Iterates `theta <- T_eta(theta)` from zero until the increment is at most `tol`.
pub fn solve_fixed_point(ops: &OperatorSet, eta: f64, tol: f64, max_iter: usize) -> Result<Solution> {
    let mut theta = DVector::zeros(ops.dim());
    let mut increment = f64::INFINITY;
    for k in 1..=max_iter {
        let next = t_eta(&theta, eta, ops);
        increment = linalg::vec_inf_norm(&(&next - &theta));
        theta = next;
        if !increment.is_finite() {
            break;
        }
        if increment <= tol {
            return Ok(Solution::new(ops, eta, theta, k, SolveMethod::FixedPoint));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_increment: increment,
        last_iterate: theta.iter().copied().collect(),
    })
}

/// Runs `theta <- theta + step (b - (A_{pi(theta)} + eta C) theta)` from zero
/// until the increment is at most `tol`.
pub fn solve_deterministic_iter(
    ops: &OperatorSet,
    eta: f64,
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Solution> {
    if step <= 0.0 {
        return Err(Error::Precondition(format!("step size must be positive, got {step}")));
    }
    let mut theta = DVector::zeros(ops.dim());
    let mut increment = f64::INFINITY;
    for k in 1..=max_iter {
        let delta = step * ops.residual_vector(&theta, eta);
        increment = linalg::vec_inf_norm(&delta);
        theta += delta;
        let norm = linalg::vec_inf_norm(&theta);
        if !(norm <= DIVERGENCE_GUARD) {
            return Err(Error::Divergence { iteration: k, norm });
        }
        if increment <= tol {
            return Ok(Solution::new(ops, eta, theta, k, SolveMethod::DeterministicIter));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_increment: increment,
        last_iterate: theta.iter().copied().collect(),
    })
}

/// One branch of [`solve_policy_enum`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyBranch {
    pub policy: DetPolicy,
    /// `None` when `A_pi + eta C` is singular.
    pub theta: Option<Vec<f64>>,
    /// `greedy(X theta) == policy`.
    pub consistent: bool,
}

impl PolicyBranch {
    pub fn singular(&self) -> bool {
        self.theta.is_none()
    }
}

/// Solves `(A_pi + eta C) theta = b` for every deterministic policy. The
/// consistent branches are exactly the solutions of the regularized equation.
pub fn solve_policy_enum(ops: &OperatorSet, eta: f64, exec: Exec) -> Result<Vec<PolicyBranch>> {
    let policies = DetPolicy::enumerate(ops.num_states, ops.num_actions)?;
    Ok(exec.map(policies.len(), |i| {
        let policy = policies[i].clone();
        match linalg::solve(&ops.regularized_matrix(&policy, eta), &ops.b) {
            Ok(theta) => PolicyBranch {
                consistent: ops.greedy(&theta) == policy,
                theta: Some(theta.iter().copied().collect()),
                policy,
            },
            Err(_) => PolicyBranch { policy, theta: None, consistent: false },
        }
    }))
}

/// The unique consistent enumeration branch, if there is exactly one
/// distinct consistent solution.
pub fn unique_consistent(branches: &[PolicyBranch]) -> Option<Vec<f64>> {
    let mut found: Option<&Vec<f64>> = None;
    for b in branches.iter().filter(|b| b.consistent) {
        let theta = b.theta.as_ref()?;
        match found {
            None => found = Some(theta),
            Some(prev) => {
                let same = prev.iter().zip(theta).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()));
                if !same {
                    return None;
                }
            }
        }
    }
    found.cloned()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub bound: f64,
    pub actual: f64,
    /// `gamma |Gamma|_inf`.
    pub gamma_gain: f64,
}

/// Bias bound on `|X theta_e - Q*|_inf`:
/// `(|Q* - Gamma Q*|_inf + eta R_max/(1-gamma)) / (1 + eta - gamma |Gamma|_inf)`.
pub fn error_bound(
    ops: &OperatorSet,
    eta: f64,
    r_max: f64,
    q_star: &QTable,
    theta_e: &DVector<f64>,
) -> Result<ErrorBound> {
    let gamma_gain = ops.projection_gain();
    let threshold = gamma_gain - 1.0;
    if eta <= threshold {
        return Err(Error::Precondition(format!(
            "eta = {eta} must exceed gamma |Gamma|_inf - 1 = {threshold}"
        )));
    }
    let q = q_star.as_vector();
    let denom = 1.0 + eta - gamma_gain;
    let projection_error = linalg::vec_inf_norm(&(&q - &ops.proj * &q));
    let bound = projection_error / denom + eta / denom * r_max / (1.0 - ops.gamma);
    let actual = linalg::vec_inf_norm(&(&ops.x * theta_e - q));
    Ok(ErrorBound { bound, actual, gamma_gain })
}
