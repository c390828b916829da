//! Finite MDPs, linear feature maps and the standing assumptions.
//!
//! State-action pairs are flattened action-major: `flat = a * |S| + s`
//! (0-based), i.e. the Kronecker ordering `e_a ⊗ e_s`. Every vector indexed
//! by state-action pairs in this crate (rewards, `d`, Q-values, rows of `X`)
//! uses this order.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Row sums and the sampling distribution must hit 1 within this.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Relative pivot tolerance for the full-column-rank check.
pub const RANK_TOL: f64 = 1e-10;
/// Column inner products below this count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;
/// Deterministic policy sets larger than this are never enumerated.
pub const ENUMERATION_LIMIT: usize = 4096;

/// A state-action pair together with its flat index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SaIndex {
    pub state: usize,
    pub action: usize,
    pub flat: usize,
}

impl SaIndex {
    pub fn new(state: usize, action: usize, num_states: usize) -> Self {
        Self { state, action, flat: action * num_states + state }
    }

    pub fn from_flat(flat: usize, num_states: usize) -> Self {
        Self { state: flat % num_states, action: flat / num_states, flat }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// `transitions[a]` is the row-stochastic |S|x|S| matrix of action `a`.
    transitions: Vec<DMatrix<f64>>,
    /// `rewards[a][s] = R_a(s)`.
    rewards: Vec<DVector<f64>>,
    gamma: f64,
    /// Sampling distribution over flat state-action pairs.
    dist: DVector<f64>,
}

impl Mdp {
    /// Builds an MDP, checking shapes, finiteness, `0 <= gamma < 1`,
    /// row-stochastic transitions and that `dist` sums to one.
    ///
    /// Positivity of `dist` is an assumption, not a structural invariant; it
    /// is reported by [`validate`].
    pub fn new(
        transitions: Vec<DMatrix<f64>>,
        rewards: Vec<DVector<f64>>,
        gamma: f64,
        dist: DVector<f64>,
    ) -> Result<Self> {
        let num_actions = transitions.len();
        if num_actions == 0 {
            return Err(Error::InvalidInput("at least one action is required".into()));
        }
        let num_states = transitions[0].nrows();
        if num_states == 0 {
            return Err(Error::InvalidInput("at least one state is required".into()));
        }
        if rewards.len() != num_actions {
            return Err(Error::InvalidInput(format!(
                "{} reward vectors for {} actions",
                rewards.len(),
                num_actions
            )));
        }
        for (a, p) in transitions.iter().enumerate() {
            if p.shape() != (num_states, num_states) {
                return Err(Error::InvalidInput(format!(
                    "transition matrix of action {a} is {:?}, expected {num_states}x{num_states}",
                    p.shape()
                )));
            }
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "transition matrix of action {a} has a negative or non-finite entry"
                )));
            }
            for (s, row) in p.row_iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidInput(format!(
                        "row {s} of action {a} sums to {sum}"
                    )));
                }
            }
        }
        for (a, r) in rewards.iter().enumerate() {
            if r.len() != num_states || r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "reward vector of action {a} must be {num_states} finite values"
                )));
            }
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!("discount {gamma} outside [0, 1)")));
        }
        if dist.len() != num_states * num_actions || dist.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "dist must hold {} non-negative finite values",
                num_states * num_actions
            )));
        }
        if (dist.sum() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidInput(format!("dist sums to {}", dist.sum())));
        }
        Ok(Self { num_states, num_actions, transitions, rewards, gamma, dist })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dist(&self) -> &DVector<f64> {
        &self.dist
    }

    pub fn transition(&self, action: usize) -> &DMatrix<f64> {
        &self.transitions[action]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[action][state]
    }

    pub fn index(&self, state: usize, action: usize) -> SaIndex {
        SaIndex::new(state, action, self.num_states)
    }

    /// `D = diag(d)`.
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.dist)
    }

    /// Rewards as one flat vector `R`.
    pub fn reward_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.num_pairs(), |flat, _| {
            let idx = SaIndex::from_flat(flat, self.num_states);
            self.rewards[idx.action][idx.state]
        })
    }

    /// `R_max = |R|_inf`.
    pub fn r_max(&self) -> f64 {
        linalg::vec_inf_norm(&self.reward_vector())
    }

    /// The |S||A| x |S| matrix whose row `flat(s, a)` is row `s` of `P_a`.
    pub fn stacked_transition(&self) -> DMatrix<f64> {
        let n = self.num_states;
        DMatrix::from_fn(self.num_pairs(), n, |flat, next| {
            let idx = SaIndex::from_flat(flat, n);
            self.transitions[idx.action][(idx.state, next)]
        })
    }

    /// `P^pi = P Pi_pi`, the |S||A| x |S||A| pair-to-pair transition matrix
    /// under `policy`.
    pub fn policy_transition(&self, policy: &DetPolicy) -> DMatrix<f64> {
        &self.stacked_transition() * policy.selector(self.num_actions)
    }

    /// Number of deterministic policies, `|A|^|S|`, saturating.
    pub fn policy_count(&self) -> u128 {
        (self.num_actions as u128).saturating_pow(self.num_states as u32)
    }

    pub fn enumerate_policies(&self) -> Result<Vec<DetPolicy>> {
        DetPolicy::enumerate(self.num_states, self.num_actions)
    }
}

/// The feature matrix `X` (|S||A| x h), rows in action-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    x: DMatrix<f64>,
    // Column `flat` is row `flat` of X, contiguous for the per-sample updates.
    xt: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput("feature matrix is empty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature matrix has a non-finite entry".into()));
        }
        Ok(Self { xt: x.transpose(), x })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn num_pairs(&self) -> usize {
        self.x.nrows()
    }

    /// `X_max = max(|X|_inf, |X^T|_inf)`.
    pub fn x_max(&self) -> f64 {
        linalg::inf_norm(&self.x).max(linalg::inf_norm(&self.x.transpose()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let x = &self.x * factor;
        Self { xt: x.transpose(), x }
    }

    /// Row `flat` of X.
    pub fn row(&self, flat: usize) -> nalgebra::DVectorView<'_, f64> {
        self.xt.column(flat)
    }

    /// `x(s, a)`, the feature vector of a state-action pair.
    pub fn feature_row(&self, state: usize, action: usize, num_states: usize) -> Result<DVector<f64>> {
        let flat = action * num_states + state;
        if state >= num_states || flat >= self.num_pairs() {
            return Err(Error::InvalidInput(format!(
                "pair (s={state}, a={action}) is out of range for {} rows",
                self.num_pairs()
            )));
        }
        Ok(self.x.row(flat).transpose())
    }

    /// `x(flat)^T theta`.
    #[inline]
    pub fn dot(&self, flat: usize, theta: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for (x, t) in self.xt.column(flat).iter().zip(theta.iter()) {
            acc += x * t;
        }
        acc
    }

    /// Q-values `X theta`.
    pub fn q_values(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.x * theta
    }
}

/// A deterministic policy: one action per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetPolicy(pub Vec<usize>);

impl DetPolicy {
    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    /// The |S| x |S||A| selector `Pi_pi`: row `s` has a one at `flat(s, pi(s))`.
    pub fn selector(&self, num_actions: usize) -> DMatrix<f64> {
        let n = self.0.len();
        let mut m = DMatrix::zeros(n, n * num_actions);
        for (s, &a) in self.0.iter().enumerate() {
            m[(s, a * n + s)] = 1.0;
        }
        m
    }

    /// All `|A|^|S|` deterministic policies in lexicographic order, state 0
    /// most significant.
    pub fn enumerate(num_states: usize, num_actions: usize) -> Result<Vec<DetPolicy>> {
        let count = (num_actions as u128).saturating_pow(num_states as u32);
        if count > ENUMERATION_LIMIT as u128 {
            return Err(Error::EnumerationTooLarge { count, limit: ENUMERATION_LIMIT });
        }
        let count = count as usize;
        Ok((0..count)
            .map(|mut code| {
                let mut actions = vec![0; num_states];
                for s in (0..num_states).rev() {
                    actions[s] = code % num_actions;
                    code /= num_actions;
                }
                DetPolicy(actions)
            })
            .collect())
    }
}

impl fmt::Display for DetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// One line of a [`ValidationReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

pub const CHECK_DIMENSIONS: &str = "dimensions";
pub const CHECK_POSITIVE_DIST: &str = "positive_visit_distribution";
pub const CHECK_NONNEGATIVE: &str = "nonnegative_features";
pub const CHECK_FULL_RANK: &str = "full_column_rank";
pub const CHECK_ORTHOGONAL: &str = "orthogonal_columns";
pub const CHECK_BOUNDED: &str = "bounded_features";

/// Checks the standing assumptions: positive visit distribution, and a
/// non-negative, full-column-rank feature matrix with orthogonal columns and
/// finite `X_max`. Never fails; failures are listed in the report.
pub fn validate(mdp: &Mdp, fmap: &FeatureMap) -> ValidationReport {
    let mut checks = Vec::new();
    let dims_ok = fmap.num_pairs() == mdp.num_pairs();
    checks.push(AssumptionCheck {
        name: CHECK_DIMENSIONS.into(),
        passed: dims_ok,
        detail: format!("X has {} rows, |S||A| = {}", fmap.num_pairs(), mdp.num_pairs()),
    });

    let min_d = mdp.dist.iter().copied().fold(f64::INFINITY, f64::min);
    let argmin = mdp.dist.iter().position(|&v| v == min_d).unwrap_or(0);
    checks.push(AssumptionCheck {
        name: CHECK_POSITIVE_DIST.into(),
        passed: min_d > 0.0,
        detail: format!("min d = {min_d:e} at flat index {argmin}"),
    });

    let x = fmap.matrix();
    let min_x = x.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(AssumptionCheck {
        name: CHECK_NONNEGATIVE.into(),
        passed: min_x >= 0.0,
        detail: format!("min entry = {min_x:e}"),
    });

    let rank = linalg::rank(x, RANK_TOL);
    checks.push(AssumptionCheck {
        name: CHECK_FULL_RANK.into(),
        passed: rank == fmap.dim(),
        detail: format!("rank {rank} of {} columns", fmap.dim()),
    });

    let gram = x.transpose() * x;
    let (mut worst, mut worst_pair) = (0.0f64, (0, 0));
    for i in 0..gram.nrows() {
        for j in (i + 1)..gram.ncols() {
            if gram[(i, j)].abs() > worst {
                worst = gram[(i, j)].abs();
                worst_pair = (i, j);
            }
        }
    }
    checks.push(AssumptionCheck {
        name: CHECK_ORTHOGONAL.into(),
        passed: worst <= ORTHOGONALITY_TOL,
        detail: format!("max |<x_i, x_j>| = {worst:e} at columns {worst_pair:?}"),
    });

    let x_max = fmap.x_max();
    checks.push(AssumptionCheck {
        name: CHECK_BOUNDED.into(),
        passed: x_max.is_finite(),
        detail: format!("X_max = {x_max}"),
    });

    ValidationReport { checks }
}

/// JSON document carrying an MDP and its features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    /// Flat, action-major.
    pub dist: Vec<f64>,
    /// One |S|x|S| row-major (nested) matrix per action.
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    /// |S||A| rows of length h.
    pub features: Vec<Vec<f64>>,
}

impl MdpDocument {
    pub fn from_parts(mdp: &Mdp, fmap: &FeatureMap) -> Self {
        let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        Self {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            gamma: mdp.gamma,
            dist: mdp.dist.iter().copied().collect(),
            transitions: mdp.transitions.iter().map(to_rows).collect(),
            rewards: mdp.rewards.iter().map(|r| r.iter().copied().collect()).collect(),
            features: to_rows(fmap.matrix()),
        }
    }

    pub fn into_parts(self) -> Result<(Mdp, FeatureMap)> {
        let all_finite = self.dist.iter().all(|v| v.is_finite())
            && self.transitions.iter().flatten().flatten().all(|v| v.is_finite())
            && self.rewards.iter().flatten().all(|v| v.is_finite())
            && self.features.iter().flatten().all(|v| v.is_finite())
            && self.gamma.is_finite();
        if !all_finite {
            return Err(Error::InvalidInput("document contains NaN or infinite numbers".into()));
        }
        let (n, m) = (self.num_states, self.num_actions);
        if self.transitions.len() != m {
            return Err(Error::InvalidInput(format!(
                "{} transition matrices for num_actions = {m}",
                self.transitions.len()
            )));
        }
        let matrix = |rows: &[Vec<f64>], r: usize, c: usize, what: &str| -> Result<DMatrix<f64>> {
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(Error::InvalidInput(format!("{what} must be {r}x{c}")));
            }
            Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
        };
        let transitions = self
            .transitions
            .iter()
            .enumerate()
            .map(|(a, p)| matrix(p, n, n, &format!("transitions[{a}]")))
            .collect::<Result<Vec<_>>>()?;
        let rewards = self.rewards.iter().map(|r| DVector::from_vec(r.clone())).collect();
        let h = self.features.first().map_or(0, Vec::len);
        let x = matrix(&self.features, n * m, h, "features")?;
        let mdp = Mdp::new(transitions, rewards, self.gamma, DVector::from_vec(self.dist))?;
        Ok((mdp, FeatureMap::new(x)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;

    fn identity_mdp(n: usize, m: usize) -> Mdp {
        let pairs = n * m;
        Mdp::new(
            vec![DMatrix::identity(n, n); m],
            vec![DVector::zeros(n); m],
            0.9,
            DVector::from_element(pairs, 1.0 / pairs as f64),
        )
        .unwrap()
    }

    #[test]
    fn example1_stacked_rows() {
        let env = envs::example1();
        let p = env.mdp.stacked_transition();
        let row = |s, a| -> Vec<f64> { p.row(env.mdp.index(s, a).flat).iter().copied().collect() };
        assert_eq!(row(0, 0), vec![0.0, 1.0, 0.0]);
        assert_eq!(row(0, 1), vec![0.0, 0.0, 1.0]);
        for r in p.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_transitions_stack_to_unit_rows() {
        let mdp = identity_mdp(3, 2);
        let p = mdp.stacked_transition();
        for flat in 0..6 {
            let idx = SaIndex::from_flat(flat, 3);
            for s in 0..3 {
                assert_eq!(p[(flat, s)], if s == idx.state { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn example1_feature_rows() {
        let env = envs::example1();
        let f = |s, a| env.features.feature_row(s, a, 3).unwrap();
        assert_eq!(f(0, 0).as_slice(), &[0.01, 0.0]);
        assert_eq!(f(0, 1).as_slice(), &[0.0, 0.01]);
        assert!(env.features.feature_row(3, 0, 3).is_err());
        assert!(env.features.feature_row(0, 2, 3).is_err());
    }

    #[test]
    fn tabular_feature_rows_are_unit_vectors() {
        let fmap = FeatureMap::new(DMatrix::identity(6, 6)).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                let row = fmap.feature_row(s, a, 3).unwrap();
                let flat = SaIndex::new(s, a, 3).flat;
                assert_eq!(row, DVector::from_fn(6, |i, _| if i == flat { 1.0 } else { 0.0 }));
            }
        }
    }

    #[test]
    fn validate_example1_passes() {
        let env = envs::example1();
        let report = validate(&env.mdp, &env.features);
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn validate_flags_zero_visit_probability() {
        let env = envs::example1();
        let mut d = env.mdp.dist().clone();
        d[0] = 0.0;
        d[1] += 1.0 / 6.0;
        let mdp = Mdp::new(
            (0..2).map(|a| env.mdp.transition(a).clone()).collect(),
            (0..2).map(|a| DVector::from_fn(3, |s, _| env.mdp.reward(s, a))).collect(),
            0.99,
            d,
        )
        .unwrap();
        let report = validate(&mdp, &env.features);
        assert!(!report.check(CHECK_POSITIVE_DIST).unwrap().passed);
        assert!(report.check(CHECK_FULL_RANK).unwrap().passed);
        assert!(matches!(report.into_result(), Err(Error::Validation(_))));
    }

    #[test]
    fn validate_flags_duplicated_column() {
        let env = envs::example1();
        let x = env.features.matrix();
        let dup = DMatrix::from_fn(6, 3, |i, j| x[(i, j.min(1))]);
        let report = validate(&env.mdp, &FeatureMap::new(dup).unwrap());
        assert!(!report.check(CHECK_FULL_RANK).unwrap().passed);
    }

    #[test]
    fn mdp_rejects_bad_structure() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.0, 1.0]);
        let r = Mdp::new(vec![p], vec![DVector::zeros(2)], 0.5, DVector::from_vec(vec![0.5, 0.5]));
        assert!(r.is_err());
        let ok = DMatrix::identity(2, 2);
        let r = Mdp::new(vec![ok], vec![DVector::zeros(2)], 1.0, DVector::from_vec(vec![0.5, 0.5]));
        assert!(r.is_err(), "gamma = 1 must be rejected");
    }

    #[test]
    fn policy_transitions_are_stochastic_for_every_policy() {
        let env = envs::example1();
        for pi in env.mdp.enumerate_policies().unwrap() {
            let pp = env.mdp.policy_transition(&pi);
            assert_eq!(pp.shape(), (6, 6));
            for row in pp.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn enumeration_is_guarded() {
        assert!(matches!(
            DetPolicy::enumerate(13, 2),
            Err(Error::EnumerationTooLarge { .. })
        ));
        assert_eq!(DetPolicy::enumerate(12, 2).unwrap().len(), 4096);
        let all = DetPolicy::enumerate(2, 3).unwrap();
        assert_eq!(all.len(), 9);
        assert_eq!(all[5], DetPolicy(vec![1, 2]));
    }

    #[test]
    fn document_rejects_non_finite_and_misshapen() {
        let env = envs::example1();
        let mut doc = MdpDocument::from_parts(&env.mdp, &env.features);
        doc.features[0][0] = f64::NAN;
        assert!(doc.into_parts().is_err());
        let mut doc = MdpDocument::from_parts(&env.mdp, &env.features);
        doc.features.pop();
        assert!(doc.into_parts().is_err());
        assert!(serde_json::from_str::<MdpDocument>("{\"num_states\": NaN}").is_err());
    }

    proptest::proptest! {
        #[test]
        fn flat_index_round_trips(n in 1usize..20, m in 1usize..6, s in 0usize..20, a in 0usize..6) {
            let (s, a) = (s % n, a % m);
            let idx = SaIndex::new(s, a, n);
            proptest::prop_assert!(idx.flat < n * m);
            proptest::prop_assert_eq!(SaIndex::from_flat(idx.flat, n), idx);
        }

        #[test]
        fn document_round_trips(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n, m, h) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
            let stoch = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut p = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() + 0.01);
                for mut row in p.row_iter_mut() {
                    let s = row.sum();
                    row /= s;
                    let fix = 1.0 - row.sum();
                    row[0] += fix;
                }
                p
            };
            let transitions: Vec<_> = (0..m).map(|_| stoch(&mut rng)).collect();
            let rewards = (0..m).map(|_| DVector::from_fn(n, |_, _| rng.random::<f64>())).collect();
            let mdp = Mdp::new(transitions, rewards, 0.9, DVector::from_element(n * m, 1.0 / (n * m) as f64));
            proptest::prop_assume!(mdp.is_ok());
            let mdp = mdp.unwrap();
            let fmap = FeatureMap::new(DMatrix::from_fn(n * m, h, |_, _| rng.random::<f64>())).unwrap();
            let doc = MdpDocument::from_parts(&mdp, &fmap);
            let text = serde_json::to_string(&doc).unwrap();
            let (mdp2, fmap2) = serde_json::from_str::<MdpDocument>(&text).unwrap().into_parts().unwrap();
            proptest::prop_assert_eq!(mdp, mdp2);
            proptest::prop_assert_eq!(fmap, fmap2);
        }
    }
}
