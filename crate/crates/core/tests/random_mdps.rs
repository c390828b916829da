//! Invariants checked on randomly generated MDPs with disjoint-support
//! features (non-negative, orthogonal columns, full column rank).

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use regq_core::bellman::{self, OperatorSet};
use regq_core::mdp::{self, DetPolicy, FeatureMap, Mdp};
use regq_core::{eta, exact, linalg, Exec};

#[derive(Debug, Clone)]
struct Instance {
    mdp: Mdp,
    fmap: FeatureMap,
}

impl Instance {
    fn ops(&self) -> OperatorSet {
        bellman::build_operators(&self.mdp, &self.fmap).unwrap()
    }
}

fn stochastic(raw: &[f64], n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::from_row_slice(n, n, raw);
    for mut row in p.row_iter_mut() {
        let total: f64 = row.sum();
        row /= total;
    }
    p
}

prop_compose! {
    fn instance()((n, m, h) in (2usize..4, 1usize..3).prop_flat_map(|(n, m)| (Just(n), Just(m), 1..=(n * m).min(3))))
        (raw_p in prop::collection::vec(0.05f64..1.0, n * n * m),
         raw_r in prop::collection::vec(-1.0f64..1.0, n * m),
         raw_d in prop::collection::vec(0.1f64..1.0, n * m),
         weights in prop::collection::vec(0.2f64..1.5, n * m),
         owner in prop::collection::vec(0usize..h, n * m),
         gamma in 0.5f64..0.95,
         n in Just(n), m in Just(m), h in Just(h))
        -> Instance
    {
        let transitions = (0..m).map(|a| stochastic(&raw_p[a * n * n..(a + 1) * n * n], n)).collect();
        let rewards = (0..m).map(|a| DVector::from_column_slice(&raw_r[a * n..(a + 1) * n])).collect();
        let total: f64 = raw_d.iter().sum();
        let dist = DVector::from_iterator(n * m, raw_d.iter().map(|d| d / total));
        // Every column owns at least row `col`, so the rank is h.
        let pairs = n * m;
        let x = DMatrix::from_fn(pairs, h, |r, c| {
            let col = if r < h { r } else { owner[r] };
            if col == c { weights[r] } else { 0.0 }
        });
        let mdp = Mdp::new(transitions, rewards, gamma, dist).unwrap();
        let fmap = FeatureMap::new(x).unwrap();
        Instance { mdp, fmap }
    }
}

fn all_policies(ops: &OperatorSet) -> Vec<DetPolicy> {
    DetPolicy::enumerate(ops.num_states(), ops.num_actions()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_instances_satisfy_assumptions(inst in instance()) {
        let report = mdp::validate(&inst.mdp, &inst.fmap);
        prop_assert!(report.passed(), "{report}");
    }

    #[test]
    fn gersh_threshold_is_sound(inst in instance(), margin in 1e-3f64..1.0) {
        let threshold = eta::gersh_threshold(&inst.mdp);
        for p in eta::min_sym_eig(&inst.mdp, threshold + margin, Exec::Sequential).unwrap() {
            prop_assert!(p.min_eig > 0.0, "policy {:?}: {}", p.policy, p.min_eig);
        }
    }

    #[test]
    fn regularized_map_contracts_above_threshold(
        inst in instance(),
        a in prop::collection::vec(-50.0f64..50.0, 3),
        b in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        let ops = inst.ops();
        let h = ops.dim();
        let eta_c = eta::contraction_threshold(&ops).max(0.0) + 0.5;
        let t1 = DVector::from_column_slice(&a[..h]);
        let t2 = DVector::from_column_slice(&b[..h]);
        let gap = linalg::vec_inf_norm(&(&t1 - &t2));
        prop_assume!(gap > 1e-9);
        let image = linalg::vec_inf_norm(&(bellman::t_eta(&t1, eta_c, &ops) - bellman::t_eta(&t2, eta_c, &ops)));
        prop_assert!(image <= ops.gamma() * gap * (1.0 + 1e-12) + 1e-12, "ratio {}", image / gap);
    }

    #[test]
    fn solvers_agree_above_contraction_threshold(inst in instance()) {
        let ops = inst.ops();
        let eta_c = eta::contraction_threshold(&ops).max(0.0) + 0.5;
        let fixed = bellman::solve_fixed_point(&ops, eta_c, 1e-12, 1_000_000).unwrap();
        let branches = bellman::solve_policy_enum(&ops, eta_c, Exec::Sequential).unwrap();
        let unique = bellman::unique_consistent(&branches).expect("one consistent branch");
        for (x, y) in fixed.theta_e.iter().zip(&unique) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()), "{:?} vs {:?}", fixed.theta_e, unique);
        }
        prop_assert!(fixed.residual <= 1e-9);
    }

    #[test]
    fn error_bound_holds(inst in instance(), extra in 0.01f64..5.0) {
        let ops = inst.ops();
        let eta_c = eta::contraction_threshold(&ops).max(ops.projection_gain() - 1.0).max(0.0) + extra;
        let q_star = exact::optimal_q(&inst.mdp, 1e-12);
        let theta_e = bellman::solve_fixed_point(&ops, eta_c, 1e-12, 1_000_000).unwrap().theta();
        let b = bellman::error_bound(&ops, eta_c, inst.mdp.r_max(), &q_star, &theta_e).unwrap();
        prop_assert!(b.actual <= b.bound * (1.0 + 1e-9) + 1e-9, "{b:?}");
    }

    #[test]
    fn consistent_branches_zero_the_residual(inst in instance(), eta_v in 0.0f64..3.0) {
        let ops = inst.ops();
        for branch in bellman::solve_policy_enum(&ops, eta_v, Exec::Sequential).unwrap() {
            let Some(theta) = branch.theta else { continue };
            let theta = DVector::from_vec(theta);
            prop_assert_eq!(branch.consistent, ops.greedy(&theta) == branch.policy);
            if branch.consistent {
                let r = linalg::vec_inf_norm(&ops.residual_vector(&theta, eta_v));
                prop_assert!(r <= 1e-8 * (1.0 + linalg::vec_inf_norm(&theta)), "residual {r}");
            }
        }
    }

    #[test]
    fn parallel_enumeration_matches_sequential(inst in instance(), eta_v in 0.0f64..3.0) {
        let ops = inst.ops();
        let seq = bellman::solve_policy_enum(&ops, eta_v, Exec::Sequential).unwrap();
        let par = bellman::solve_policy_enum(&ops, eta_v, Exec::Parallel).unwrap();
        prop_assert_eq!(seq.len(), all_policies(&ops).len());
        for (s, p) in seq.iter().zip(&par) {
            prop_assert_eq!(&s.policy, &p.policy);
            prop_assert_eq!(&s.theta, &p.theta);
        }
    }
}
