//! Thresholds on the regularization weight `eta` and the constants the
//! convergence argument needs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bellman::OperatorSet;
use crate::error::Result;
use crate::exec::Exec;
use crate::linalg;
use crate::mdp::{DetPolicy, Mdp};

/// Convergence tolerance of the Jacobi sweeps in [`min_sym_eig`].
pub const JACOBI_TOL: f64 = 1e-10;

/// Existence/uniqueness threshold `|(X^T D X)^{-1}|_inf X_max^2 - 1`.
pub fn contraction_threshold(ops: &OperatorSet) -> f64 {
    let x = ops.features();
    let x_max = linalg::inf_norm(x).max(linalg::inf_norm(&x.transpose()));
    linalg::inf_norm(&ops.c_inv) * x_max * x_max - 1.0
}

/// `gamma |C^{-1}|_inf |X^T|_inf |X|_inf - 1`: above it the modulus
/// `gamma |C^{-1}| |X^T| |X| / (1 + eta)` of `T_eta` drops below one.
pub fn contraction_threshold_modulus(ops: &OperatorSet) -> f64 {
    let x = ops.features();
    ops.gamma() * linalg::inf_norm(&ops.c_inv) * linalg::inf_norm(&x.transpose()) * linalg::inf_norm(x) - 1.0
}

/// Gerschgorin threshold
/// `max_{s,a} gamma (d^T P e_s) / (2 d(s,a)) - (2 - gamma)/2`.
///
/// Column `(s, a)` of `P^pi` is column `s` of the stacked transition matrix
/// when `pi(s) = a` and zero otherwise, so the maximum over deterministic
/// policies is attained by any policy with `pi(s) = a` and no enumeration
/// is needed.
pub fn gersh_threshold(mdp: &Mdp) -> f64 {
    let gamma = mdp.gamma();
    let inflow = mdp.stacked_transition().transpose() * mdp.dist();
    let d = mdp.dist();
    let mut worst = f64::NEG_INFINITY;
    for a in 0..mdp.num_actions() {
        for s in 0..mdp.num_states() {
            let flat = mdp.index(s, a).flat;
            worst = worst.max(gamma * inflow[s] / (2.0 * d[flat]));
        }
    }
    worst - (2.0 - gamma) / 2.0
}

/// `M^pi = D((1 + eta) I - gamma P^pi)`.
pub fn m_matrix(mdp: &Mdp, policy: &DetPolicy, eta: f64) -> DMatrix<f64> {
    let n = mdp.num_pairs();
    mdp.d_matrix() * ((1.0 + eta) * DMatrix::identity(n, n) - mdp.gamma() * mdp.policy_transition(policy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEigen {
    pub policy: DetPolicy,
    /// Smallest eigenvalue of `(M^pi + M^pi^T)/2`.
    pub min_eig: f64,
    /// Lower end of the Gerschgorin discs of the same matrix.
    pub gersh_lower: f64,
}

/// `lambda_min((M^pi + M^pi^T)/2)` for every deterministic policy.
pub fn min_sym_eig(mdp: &Mdp, eta: f64, exec: Exec) -> Result<Vec<PolicyEigen>> {
    let policies = mdp.enumerate_policies()?;
    Ok(exec.map(policies.len(), |i| {
        let m = m_matrix(mdp, &policies[i], eta);
        let sym = (&m + m.transpose()) * 0.5;
        PolicyEigen {
            policy: policies[i].clone(),
            min_eig: linalg::jacobi_eigenvalues(&sym, JACOBI_TOL)[0],
            gersh_lower: linalg::gershgorin_lower_bound(&sym),
        }
    }))
}

/// `(1 + eta) |X^T D X|_inf + gamma |X^T D P|_inf |X|_inf`.
pub fn lipschitz_constant(ops: &OperatorSet, eta: f64) -> f64 {
    (1.0 + eta) * linalg::inf_norm(&ops.c)
        + ops.gamma() * linalg::inf_norm(&ops.xdp) * linalg::inf_norm(ops.features())
}

/// `C_0 = max(12 X_max^2 R_max^2, 12 gamma X_max^4 + 4 eta^2 X_max^2)`.
pub fn noise_c0(x_max: f64, r_max: f64, gamma: f64, eta: f64) -> f64 {
    let x2 = x_max * x_max;
    (12.0 * x2 * r_max * r_max).max(12.0 * gamma * x2 * x2 + 4.0 * eta * eta * x2)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaReport {
    pub eta_contraction: f64,
    pub eta_contraction_modulus: f64,
    pub eta_gersh: f64,
    /// `gamma |Gamma|_inf - 1`.
    pub eta_bias: f64,
    pub eta: Option<f64>,
    pub lipschitz_l: Option<f64>,
    pub noise_c0: Option<f64>,
    /// Present when `eta` is given and the policy set is enumerable.
    pub min_eig_sym: Option<Vec<PolicyEigen>>,
}

pub fn report(mdp: &Mdp, ops: &OperatorSet, eta: Option<f64>, exec: Exec) -> EtaReport {
    let x_max = {
        let x = ops.features();
        linalg::inf_norm(x).max(linalg::inf_norm(&x.transpose()))
    };
    EtaReport {
        eta_contraction: contraction_threshold(ops),
        eta_contraction_modulus: contraction_threshold_modulus(ops),
        eta_gersh: gersh_threshold(mdp),
        eta_bias: ops.projection_gain() - 1.0,
        eta,
        lipschitz_l: eta.map(|e| lipschitz_constant(ops, e)),
        noise_c0: eta.map(|e| noise_c0(x_max, mdp.r_max(), mdp.gamma(), e)),
        min_eig_sym: eta.and_then(|e| min_sym_eig(mdp, e, exec).ok()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::build_operators;
    use crate::envs;
    use crate::mdp::FeatureMap;
    use nalgebra::DVector;

    fn tabular(n_states: usize, n_actions: usize) -> (Mdp, FeatureMap) {
        let n = n_states * n_actions;
        let p = DMatrix::from_fn(n_states, n_states, |i, j| if j == (i + 1) % n_states { 1.0 } else { 0.0 });
        let mdp = Mdp::new(
            vec![p; n_actions],
            vec![DVector::from_element(n_states, 1.0); n_actions],
            0.9,
            DVector::from_element(n, 1.0 / n as f64),
        )
        .unwrap();
        (mdp, FeatureMap::new(DMatrix::identity(n, n)).unwrap())
    }

    #[test]
    fn example1_contraction_threshold() {
        let env = envs::example1();
        let ops = build_operators(&env.mdp, &env.features).unwrap();
        // |C^{-1}|_inf = 1/0.00005 = 20000, X_max = 0.21.
        assert!((contraction_threshold(&ops) - 881.0).abs() < 1e-6);
    }

    #[test]
    fn tabular_contraction_threshold() {
        let (mdp, fmap) = tabular(3, 2);
        let ops = build_operators(&mdp, &fmap).unwrap();
        assert!((contraction_threshold(&ops) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn contraction_threshold_is_scale_invariant() {
        let env = envs::example1();
        let base = contraction_threshold(&build_operators(&env.mdp, &env.features).unwrap());
        for c in [0.1, 3.0, 250.0] {
            let ops = build_operators(&env.mdp, &env.features.scaled(c)).unwrap();
            assert!((contraction_threshold(&ops) - base).abs() < 1e-6 * base.abs());
        }
    }

    #[test]
    fn gersh_thresholds_of_builtin_instances() {
        assert!((gersh_threshold(&envs::example1().mdp) - 0.7325).abs() < 1e-12);
        assert!((gersh_threshold(&envs::ode_mdp().mdp) - 0.60875).abs() < 1e-12);
    }

    #[test]
    fn single_pair_gersh_threshold() {
        for gamma in [0.0, 0.5, 0.99] {
            let mdp = Mdp::new(
                vec![DMatrix::identity(1, 1)],
                vec![DVector::zeros(1)],
                gamma,
                DVector::from_element(1, 1.0),
            )
            .unwrap();
            assert!((gersh_threshold(&mdp) - (gamma - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn min_sym_eig_regimes() {
        let mdp = envs::example1().mdp;
        assert!(min_sym_eig(&mdp, 1.98, Exec::Sequential).unwrap().iter().all(|p| p.min_eig > 0.0));
        let big = min_sym_eig(&mdp, 1e6, Exec::Sequential).unwrap();
        for p in &big {
            assert!(p.min_eig > 1e6 / 6.0 - 10.0);
        }
        let neg = min_sym_eig(&mdp, -1.0, Exec::Parallel).unwrap();
        assert!(neg.iter().any(|p| p.min_eig <= 0.0));
    }

    #[test]
    fn min_sym_eig_guard() {
        let (mdp, _) = tabular(13, 2);
        assert!(min_sym_eig(&mdp, 1.0, Exec::Sequential).is_err());
    }

    #[test]
    fn lipschitz_tabular_and_monotone() {
        let (mdp, fmap) = tabular(2, 2);
        let ops = build_operators(&mdp, &fmap).unwrap();
        assert!((lipschitz_constant(&ops, 0.0) - 1.9 / 4.0).abs() < 1e-12);
        let env = envs::example1();
        let ops = build_operators(&env.mdp, &env.features).unwrap();
        let l = lipschitz_constant(&ops, 1.98);
        assert!(l.is_finite() && l > 0.0);
        assert!(lipschitz_constant(&ops, 2.5) > l);
    }

    #[test]
    fn noise_c0_branches() {
        assert_eq!(noise_c0(0.5, 0.0, 0.9, 0.0), 12.0 * 0.9 * 0.0625);
        assert_eq!(noise_c0(1.0, 1.0, 1.0 - 1e-16, 0.0), 12.0);
        let ex1 = noise_c0(0.21, 2.0, 0.99, 1.98);
        let expected = (12.0f64 * 0.0441 * 4.0).max(12.0 * 0.99 * 0.0441 * 0.0441 + 4.0 * 1.98 * 1.98 * 0.0441);
        assert!((ex1 - expected).abs() < 1e-12);
    }
}
