//! Stochastic learners and the sample streams that feed them.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, EpisodeRule, StartRule};
use crate::mdp::{FeatureMap, Mdp};

/// `|theta|_inf` above which an agent is flagged as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `alpha0 / (1 + k / tau)^power`, Robbins-Monro for `power` in (0.5, 1].
    RobbinsMonro { alpha0: f64, tau: f64, power: f64 },
}

impl StepSchedule {
    #[inline]
    pub fn alpha(&self, k: u64) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::RobbinsMonro { alpha0, tau, power } => alpha0 / (1.0 + k as f64 / tau).powf(power),
        }
    }

    pub fn is_robbins_monro(&self) -> bool {
        match *self {
            StepSchedule::Constant { .. } => false,
            StepSchedule::RobbinsMonro { alpha0, tau, power } => alpha0 > 0.0 && tau > 0.0 && power > 0.5 && power <= 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Regq,
    Qlearn,
    Qtarget,
    Ggq,
    Cql,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [AgentKind::Regq, AgentKind::Qlearn, AgentKind::Qtarget, AgentKind::Ggq, AgentKind::Cql];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Regq => "regq",
            AgentKind::Qlearn => "qlearn",
            AgentKind::Qtarget => "qtarget",
            AgentKind::Ggq => "ggq",
            AgentKind::Cql => "cql",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-agent hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub kind: AgentKind,
    /// Regularization weight (regq, qtarget).
    pub eta: f64,
    pub schedule: StepSchedule,
    /// Secondary rate: target tracking (qtarget), `w` (ggq), slow `u` (cql).
    pub aux_rate: f64,
    /// Target refresh period in steps (qtarget).
    pub target_period: u64,
}

impl AgentParams {
    /// Rates used in the counterexample experiments.
    pub fn defaults(kind: AgentKind) -> Self {
        let constant = |alpha| StepSchedule::Constant { alpha };
        match kind {
            AgentKind::Regq => Self { kind, eta: 2.0, schedule: constant(0.25), aux_rate: 0.0, target_period: 1 },
            AgentKind::Qlearn => Self { kind, eta: 0.0, schedule: constant(0.25), aux_rate: 0.0, target_period: 1 },
            AgentKind::Qtarget => Self { kind, eta: 2.0, schedule: constant(0.25), aux_rate: 0.05, target_period: 1 },
            AgentKind::Ggq => Self { kind, eta: 0.0, schedule: constant(0.05), aux_rate: 0.01, target_period: 1 },
            AgentKind::Cql => Self { kind, eta: 0.0, schedule: constant(0.25), aux_rate: 0.05, target_period: 1 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Inverse-CDF draw from a discrete distribution.
fn draw<R: Rng + ?Sized>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn transition<R: Rng + ?Sized>(mdp: &Mdp, rng: &mut R, state: usize, action: usize, noise: f64) -> Sample {
    let p = mdp.transition(action);
    let next_state = draw(rng, p.row(state).iter().copied());
    let mut reward = mdp.reward(state, action);
    if noise > 0.0 {
        reward += rng.random_range(-noise..=noise);
    }
    Sample { state, action, reward, next_state }
}

/// `(s, a) ~ d`, `s' ~ P_a(s, .)`, `r = R_a(s)` plus uniform noise in
/// `[-noise, noise]` when `noise > 0`.
pub fn sample_iid<R: Rng + ?Sized>(mdp: &Mdp, rng: &mut R, noise: f64) -> Sample {
    let flat = draw(rng, mdp.dist().iter().copied());
    let n = mdp.num_states();
    transition(mdp, rng, flat % n, flat / n, noise)
}

/// On-policy stream following the environment's behavior policy, start rule
/// and episode rule. Every transition bootstraps; an episode boundary only
/// decides where the next transition starts.
#[derive(Clone, Debug)]
pub struct TrajectorySampler {
    state: usize,
    steps_in_episode: usize,
    episodes: u64,
}

impl TrajectorySampler {
    pub fn new<R: Rng + ?Sized>(env: &EnvSpec, rng: &mut R) -> Self {
        Self { state: start_state(env, rng), steps_in_episode: 0, episodes: 0 }
    }

    /// Episodes completed so far.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn next<R: Rng + ?Sized>(&mut self, env: &EnvSpec, rng: &mut R, noise: f64) -> Sample {
        let action = draw(rng, env.behavior.row(self.state).iter().copied());
        let sample = transition(&env.mdp, rng, self.state, action, noise);
        self.steps_in_episode += 1;
        let done = match env.episode {
            EpisodeRule::None => false,
            EpisodeRule::FixedLength { length } => self.steps_in_episode >= length,
            EpisodeRule::TerminateProb { state, prob } => sample.next_state == state && rng.random::<f64>() < prob,
        };
        if done {
            self.episodes += 1;
            self.steps_in_episode = 0;
            self.state = start_state(env, rng);
        } else {
            self.state = sample.next_state;
        }
        sample
    }
}

fn start_state<R: Rng + ?Sized>(env: &EnvSpec, rng: &mut R) -> usize {
    match env.start {
        StartRule::Fixed { state } => state,
        StartRule::Uniform => rng.random_range(0..env.mdp.num_states()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub theta: DVector<f64>,
    /// qtarget: target copy; ggq: `w`; cql: fast `v`.
    pub aux: Option<DVector<f64>>,
    pub step_count: u64,
    pub rng_seed: u64,
    pub diverged: bool,
}

impl AgentState {
    pub fn new(kind: AgentKind, theta: DVector<f64>, rng_seed: u64) -> Self {
        let aux = match kind {
            AgentKind::Regq | AgentKind::Qlearn => None,
            AgentKind::Qtarget | AgentKind::Cql => Some(theta.clone()),
            AgentKind::Ggq => Some(DVector::zeros(theta.len())),
        };
        Self { theta, aux, step_count: 0, rng_seed, diverged: false }
    }
}

/// `max_a' x(s', a')^T theta` and the maximizing action (lowest on ties).
#[inline]
fn greedy_next(fmap: &FeatureMap, theta: &DVector<f64>, next_state: usize, num_states: usize, num_actions: usize) -> (f64, usize) {
    let mut best = fmap.dot(next_state, theta);
    let mut arg = 0;
    for a in 1..num_actions {
        let v = fmap.dot(a * num_states + next_state, theta);
        if v > best {
            best = v;
            arg = a;
        }
    }
    (best, arg)
}

/// Accepts `candidate` unless it is non-finite; sets the divergence flag
/// once `|theta|_inf` passes [`DIVERGENCE_THRESHOLD`].
fn commit(state: &mut AgentState, candidate: DVector<f64>, aux: Option<DVector<f64>>) {
    let finite = candidate.iter().all(|v| v.is_finite()) && aux.as_ref().is_none_or(|w| w.iter().all(|v| v.is_finite()));
    state.step_count += 1;
    if !finite {
        state.diverged = true;
        return;
    }
    if candidate.iter().any(|v| v.abs() > DIVERGENCE_THRESHOLD) {
        state.diverged = true;
    }
    state.theta = candidate;
    if aux.is_some() {
        state.aux = aux;
    }
}

/// Per-step context shared by every update rule.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub fmap: &'a FeatureMap,
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
}

impl<'a> StepContext<'a> {
    pub fn new(mdp: &Mdp, fmap: &'a FeatureMap) -> Self {
        Self { fmap, num_states: mdp.num_states(), num_actions: mdp.num_actions(), gamma: mdp.gamma() }
    }

    fn flat(&self, s: &Sample) -> usize {
        s.action * self.num_states + s.state
    }

    /// `delta = r + gamma max_a' x(s',a')^T theta - x(s,a)^T theta` and `x(s,a)^T theta`.
    fn td(&self, theta: &DVector<f64>, bootstrap: &DVector<f64>, s: &Sample) -> (f64, f64) {
        let q = self.fmap.dot(self.flat(s), theta);
        let (next, _) = greedy_next(self.fmap, bootstrap, s.next_state, self.num_states, self.num_actions);
        (s.reward + self.gamma * next - q, q)
    }
}

/// Regularized update direction `(delta - eta x^T theta) x` (no step size).
pub fn regq_direction(ctx: &StepContext, theta: &DVector<f64>, sample: &Sample, eta: f64) -> DVector<f64> {
    let (delta, q) = ctx.td(theta, theta, sample);
    let coef = delta - eta * q;
    ctx.fmap.row(ctx.flat(sample)) * coef
}

/// `theta += alpha (delta - eta x^T theta) x`.
pub fn regq_step(ctx: &StepContext, state: &mut AgentState, sample: &Sample, eta: f64, schedule: &StepSchedule) {
    if state.diverged {
        return;
    }
    let alpha = schedule.alpha(state.step_count);
    let (delta, q) = ctx.td(&state.theta, &state.theta, sample);
    let coef = delta - eta * q;
    let x = ctx.fmap.row(ctx.flat(sample));
    let mut next = state.theta.clone();
    for (t, xi) in next.iter_mut().zip(x.iter()) {
        *t += alpha * (coef * xi);
    }
    commit(state, next, None);
}

/// Plain linear Q-learning: `theta += alpha delta x`.
pub fn qlearn_step(ctx: &StepContext, state: &mut AgentState, sample: &Sample, schedule: &StepSchedule) {
    if state.diverged {
        return;
    }
    let alpha = schedule.alpha(state.step_count);
    let (delta, _) = ctx.td(&state.theta, &state.theta, sample);
    let x = ctx.fmap.row(ctx.flat(sample));
    let mut next = state.theta.clone();
    for (t, xi) in next.iter_mut().zip(x.iter()) {
        *t += alpha * (delta * xi);
    }
    commit(state, next, None);
}

/// Target-network Q-learning with a proximal pull towards the target:
/// `theta += alpha (delta_bar x - eta (theta - theta_bar))`, where
/// `delta_bar` bootstraps from `theta_bar`. Every `target_period` steps the
/// target moves `theta_bar += aux_rate (theta - theta_bar)` (a copy when
/// `aux_rate >= 1`).
pub fn qtarget_step(ctx: &StepContext, state: &mut AgentState, sample: &Sample, params: &AgentParams) {
    if state.diverged {
        return;
    }
    let mut target = state.aux.clone().unwrap_or_else(|| state.theta.clone());
    if state.step_count.is_multiple_of(params.target_period.max(1)) {
        if params.aux_rate >= 1.0 {
            target.copy_from(&state.theta);
        } else {
            target += (&state.theta - &target) * params.aux_rate;
        }
    }
    let alpha = params.schedule.alpha(state.step_count);
    let q = ctx.fmap.dot(ctx.flat(sample), &state.theta);
    let (next_v, _) = greedy_next(ctx.fmap, &target, sample.next_state, ctx.num_states, ctx.num_actions);
    let delta = sample.reward + ctx.gamma * next_v - q;
    let x = ctx.fmap.row(ctx.flat(sample));
    let mut next = state.theta.clone();
    for i in 0..next.len() {
        next[i] += alpha * (delta * x[i] - params.eta * (state.theta[i] - target[i]));
    }
    commit(state, next, Some(target));
}

/// Greedy-GQ: `theta += alpha (delta x - gamma (w^T x) x')` with `x'` the
/// feature of the greedy successor pair, and `w += beta (delta - w^T x) x`.
pub fn ggq_step(ctx: &StepContext, state: &mut AgentState, sample: &Sample, params: &AgentParams) {
    if state.diverged {
        return;
    }
    let w = state.aux.clone().unwrap_or_else(|| DVector::zeros(state.theta.len()));
    let alpha = params.schedule.alpha(state.step_count);
    let flat = ctx.flat(sample);
    let q = ctx.fmap.dot(flat, &state.theta);
    let (next_v, next_a) = greedy_next(ctx.fmap, &state.theta, sample.next_state, ctx.num_states, ctx.num_actions);
    let delta = sample.reward + ctx.gamma * next_v - q;
    let x = ctx.fmap.row(flat);
    let x_next = ctx.fmap.row(next_a * ctx.num_states + sample.next_state);
    let wx = ctx.fmap.dot(flat, &w);
    let mut next = state.theta.clone();
    for i in 0..next.len() {
        next[i] += alpha * (delta * x[i] - ctx.gamma * wx * x_next[i]);
    }
    let w_next = &w + x * (params.aux_rate * (delta - wx));
    commit(state, next, Some(w_next));
}

/// Coupled Q-learning. The fast iterate `v` does TD towards the greedy value
/// under the slow iterate `u` (reported as `theta`); `u` tracks `v` on the
/// sampled pair:
///
/// ```text
/// v += alpha (r + gamma max_a' x(s',a')^T u - x^T v) x
/// u += beta (x^T v - x^T u) x
/// ```
pub fn cql_step(ctx: &StepContext, state: &mut AgentState, sample: &Sample, params: &AgentParams) {
    if state.diverged {
        return;
    }
    let v = state.aux.clone().unwrap_or_else(|| state.theta.clone());
    let alpha = params.schedule.alpha(state.step_count);
    let flat = ctx.flat(sample);
    let (next_u, _) = greedy_next(ctx.fmap, &state.theta, sample.next_state, ctx.num_states, ctx.num_actions);
    let xv = ctx.fmap.dot(flat, &v);
    let xu = ctx.fmap.dot(flat, &state.theta);
    let x = ctx.fmap.row(flat);
    let v_next = &v + x * (alpha * (sample.reward + ctx.gamma * next_u - xv));
    let u_next = &state.theta + x * (params.aux_rate * (xv - xu));
    commit(state, u_next, Some(v_next));
}

/// Dispatches to the update rule of `params.kind`.
pub fn agent_step(ctx: &StepContext, state: &mut AgentState, sample: &Sample, params: &AgentParams) {
    match params.kind {
        AgentKind::Regq => regq_step(ctx, state, sample, params.eta, &params.schedule),
        AgentKind::Qlearn => qlearn_step(ctx, state, sample, &params.schedule),
        AgentKind::Qtarget => qtarget_step(ctx, state, sample, params),
        AgentKind::Ggq => ggq_step(ctx, state, sample, params),
        AgentKind::Cql => cql_step(ctx, state, sample, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn robbins_monro_schedule() {
        let s = StepSchedule::RobbinsMonro { alpha0: 0.5, tau: 1e3, power: 0.8 };
        assert_eq!(s.alpha(0), 0.5);
        assert!((s.alpha(1000) - 0.5 / 2f64.powf(0.8)).abs() < 1e-15);
        assert!(s.is_robbins_monro());
        assert!(!StepSchedule::RobbinsMonro { alpha0: 0.5, tau: 1e3, power: 0.5 }.is_robbins_monro());
        assert!(!StepSchedule::Constant { alpha: 0.1 }.is_robbins_monro());
    }

    #[test]
    fn concentrated_distribution_always_hits_that_pair() {
        let env = envs::example1();
        let mut d = DVector::from_element(6, 1e-300);
        d[4] = 1.0 - 5e-300;
        let mdp = Mdp::new(
            (0..2).map(|a| env.mdp.transition(a).clone()).collect(),
            (0..2).map(|a| DVector::from_fn(3, |s, _| env.mdp.reward(s, a))).collect(),
            0.99,
            d,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = sample_iid(&mdp, &mut rng, 0.0);
            assert_eq!((s.state, s.action), (1, 1));
        }
    }

    #[test]
    fn iid_frequencies_example1() {
        let env = envs::example1();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let s = sample_iid(&env.mdp, &mut rng, 0.0);
            counts[s.action * 3 + s.state] += 1;
            assert_eq!(s.reward, env.mdp.reward(s.state, s.action));
        }
        let p = 1.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn reward_noise_is_bounded() {
        let env = envs::ode_mdp();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = sample_iid(&env.mdp, &mut rng, 0.5);
            assert!((s.reward - 1.0).abs() <= 0.5);
        }
    }

    #[test]
    fn theta_two_theta_episodes() {
        let env = envs::theta_two_theta();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sampler = TrajectorySampler::new(&env, &mut rng);
        for k in 0..100 {
            let a = sampler.next(&env, &mut rng, 0.0);
            let b = sampler.next(&env, &mut rng, 0.0);
            assert_eq!((a.state, a.next_state), (0, 1));
            assert_eq!((b.state, b.next_state), (1, 1));
            assert_eq!(sampler.episodes(), k + 1);
        }
    }

    #[test]
    fn baird_behavior_and_termination() {
        let env = envs::baird();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sampler = TrajectorySampler::new(&env, &mut rng);
        let n = 1_000_000u64;
        let mut dash = 0u64;
        let mut arrivals = 0u64;
        for _ in 0..n {
            let s = sampler.next(&env, &mut rng, 0.0);
            if s.action == envs::BAIRD_DASH {
                dash += 1;
                assert!(s.next_state < 6);
            } else {
                assert_eq!(s.next_state, 6);
            }
            if s.next_state == 6 {
                arrivals += 1;
            }
        }
        let p = 5.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((dash as f64 - n as f64 * p).abs() <= 3.0 * sigma);
        // Each arrival at the hub ends the episode with probability 1/100.
        let expected = arrivals as f64 * 0.01;
        let sd = (arrivals as f64 * 0.01 * 0.99).sqrt();
        assert!((sampler.episodes() as f64 - expected).abs() <= 3.0 * sd);
    }

    fn tabular_env() -> (Mdp, FeatureMap) {
        let env = envs::example1();
        (env.mdp, FeatureMap::new(DMatrix::identity(6, 6)).unwrap())
    }

    #[test]
    fn zero_theta_zero_reward_is_fixed() {
        let env = envs::theta_two_theta();
        let ctx = StepContext::new(&env.mdp, &env.features);
        let mut st = AgentState::new(AgentKind::Regq, DVector::zeros(1), 0);
        let sample = Sample { state: 0, action: 0, reward: 0.0, next_state: 1 };
        regq_step(&ctx, &mut st, &sample, 2.0, &StepSchedule::Constant { alpha: 0.25 });
        assert_eq!(st.theta[0], 0.0);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn tabular_regq_is_tabular_q_learning() {
        let (mdp, fmap) = tabular_env();
        let ctx = StepContext::new(&mdp, &fmap);
        let schedule = StepSchedule::Constant { alpha: 0.3 };
        let mut st = AgentState::new(AgentKind::Regq, DVector::zeros(6), 0);
        let mut q = [0.0f64; 6];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            let s = sample_iid(&mdp, &mut rng, 0.0);
            regq_step(&ctx, &mut st, &s, 0.0, &schedule);
            let next = q[s.next_state].max(q[3 + s.next_state]);
            let i = s.action * 3 + s.state;
            let delta = s.reward + 0.99 * next - q[i];
            q[i] += 0.3 * delta;
        }
        for i in 0..6 {
            assert_eq!(st.theta[i], q[i]);
        }
    }

    fn run(env: &EnvSpec, params: &AgentParams, steps: usize, seed: u64) -> AgentState {
        let fmap = env.features_for(params.kind);
        let ctx = StepContext::new(&env.mdp, &fmap);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = TrajectorySampler::new(env, &mut rng);
        let mut st = AgentState::new(params.kind, env.init_theta.clone(), seed);
        for _ in 0..steps {
            let s = sampler.next(env, &mut rng, 0.0);
            agent_step(&ctx, &mut st, &s, params);
        }
        st
    }

    #[test]
    fn regq_with_zero_eta_matches_qlearn_bitwise() {
        let env = envs::baird();
        let mut regq = AgentParams::defaults(AgentKind::Regq);
        regq.eta = 0.0;
        let q = AgentParams::defaults(AgentKind::Qlearn);
        let a = run(&env, &regq, 3000, 7);
        let b = run(&env, &q, 3000, 7);
        assert_eq!(a.theta.as_slice(), b.theta.as_slice());
    }

    #[test]
    fn qtarget_with_unit_period_and_zero_eta_is_qlearn() {
        let env = envs::baird();
        let mut params = AgentParams::defaults(AgentKind::Qtarget);
        params.eta = 0.0;
        params.aux_rate = 1.0;
        params.target_period = 1;
        let a = run(&env, &params, 3000, 8);
        let b = run(&env, &AgentParams::defaults(AgentKind::Qlearn), 3000, 8);
        assert_eq!(a.theta.as_slice(), b.theta.as_slice());
    }

    #[test]
    fn ggq_with_frozen_zero_w_is_qlearn() {
        let env = envs::baird();
        let mut params = AgentParams::defaults(AgentKind::Ggq);
        params.aux_rate = 0.0;
        params.schedule = StepSchedule::Constant { alpha: 0.25 };
        let a = run(&env, &params, 3000, 9);
        let b = run(&env, &AgentParams::defaults(AgentKind::Qlearn), 3000, 9);
        assert_eq!(a.theta.as_slice(), b.theta.as_slice());
    }

    #[test]
    fn qlearn_diverges_and_regq_contracts_on_theta_two_theta() {
        let env = envs::theta_two_theta();
        let q = run(&env, &AgentParams::defaults(AgentKind::Qlearn), 100_000, 1);
        assert!(q.diverged);
        let r = run(&env, &AgentParams::defaults(AgentKind::Regq), 100_000, 1);
        assert!(!r.diverged);
        assert!(r.theta[0].abs() < 1e-12);
    }

    #[test]
    fn baselines_stay_finite_on_theta_two_theta() {
        let env = envs::theta_two_theta();
        for kind in [AgentKind::Qtarget, AgentKind::Ggq, AgentKind::Cql] {
            let st = run(&env, &AgentParams::defaults(kind), 20_000, 3);
            assert!(st.theta.iter().all(|v| v.is_finite()), "{kind}");
        }
    }

    #[test]
    fn diverged_state_is_frozen() {
        let env = envs::theta_two_theta();
        let ctx = StepContext::new(&env.mdp, &env.features);
        let mut st = AgentState::new(AgentKind::Qlearn, DVector::from_element(1, 2e6), 0);
        let s = Sample { state: 0, action: 0, reward: 0.0, next_state: 1 };
        qlearn_step(&ctx, &mut st, &s, &StepSchedule::Constant { alpha: 0.25 });
        assert!(st.diverged);
        let frozen = st.theta.clone();
        qlearn_step(&ctx, &mut st, &s, &StepSchedule::Constant { alpha: 0.25 });
        assert_eq!(st.theta, frozen);
        let mut nan = AgentState::new(AgentKind::Qlearn, DVector::from_element(1, 1.0), 0);
        qlearn_step(&ctx, &mut nan, &Sample { reward: f64::INFINITY, ..s }, &StepSchedule::Constant { alpha: 0.25 });
        assert!(nan.diverged && nan.theta[0] == 1.0);
    }
}
