//! The four built-in instances plus loading arbitrary instances from JSON.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::error::{Error, Result};
use crate::mdp::{FeatureMap, Mdp, MdpDocument};

/// When an on-policy stream restarts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeRule {
    None,
    /// Every episode emits exactly `length` transitions.
    FixedLength { length: usize },
    /// After landing in `state`, the episode ends with probability `prob`.
    TerminateProb { state: usize, prob: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartRule {
    Fixed { state: usize },
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `(s, a) ~ d` independently at every step.
    Iid,
    /// Follow the behavior policy along episodes.
    Trajectory,
}

#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub name: String,
    pub mdp: Mdp,
    pub features: FeatureMap,
    pub episode: EpisodeRule,
    pub start: StartRule,
    /// `|S| x |A|`, rows sum to one.
    pub behavior: DMatrix<f64>,
    pub sampling: SamplingMode,
    pub init_theta: DVector<f64>,
    /// Extra feature scaling applied for specific agents.
    pub scale_overrides: Vec<(AgentKind, f64)>,
}

impl EnvSpec {
    pub fn feature_scale(&self, agent: AgentKind) -> f64 {
        self.scale_overrides
            .iter()
            .find(|(k, _)| *k == agent)
            .map_or(1.0, |(_, s)| *s)
    }

    /// Features as seen by `agent`.
    pub fn features_for(&self, agent: AgentKind) -> FeatureMap {
        let scale = self.feature_scale(agent);
        if scale == 1.0 {
            self.features.clone()
        } else {
            self.features.scaled(scale)
        }
    }

    pub fn document(&self) -> MdpDocument {
        MdpDocument::from_parts(&self.mdp, &self.features)
    }

    fn check(self) -> Self {
        let n = self.mdp.num_states();
        assert_eq!(self.behavior.shape(), (n, self.mdp.num_actions()));
        assert_eq!(self.init_theta.len(), self.features.dim());
        assert_eq!(self.features.num_pairs(), self.mdp.num_pairs());
        self
    }

    /// Wraps a loaded instance: i.i.d. sampling, uniform behavior, zero start.
    pub fn from_document(name: &str, doc: MdpDocument) -> Result<Self> {
        let (mdp, features) = doc.into_parts()?;
        let (n, m) = (mdp.num_states(), mdp.num_actions());
        let h = features.dim();
        Ok(EnvSpec {
            name: name.to_string(),
            episode: EpisodeRule::None,
            start: StartRule::Uniform,
            behavior: DMatrix::from_element(n, m, 1.0 / m as f64),
            sampling: SamplingMode::Iid,
            init_theta: DVector::zeros(h),
            scale_overrides: Vec::new(),
            mdp,
            features,
        }
        .check())
    }
}

/// Resolves `theta2theta`, `baird`, `example1`, `ode-mdp` or `file:<path>`.
pub fn by_name(name: &str) -> Result<EnvSpec> {
    match name {
        "theta2theta" => Ok(theta_two_theta()),
        "baird" => Ok(baird()),
        "example1" => Ok(example1()),
        "ode-mdp" => Ok(ode_mdp()),
        other => match other.strip_prefix("file:") {
            Some(path) => EnvSpec::from_document(other, MdpDocument::load(Path::new(path))?),
            None => Err(Error::InvalidInput(format!(
                "unknown environment '{other}' (expected theta2theta, baird, example1, ode-mdp or file:<path>)"
            ))),
        },
    }
}

pub const BUILTIN: [&str; 4] = ["theta2theta", "baird", "example1", "ode-mdp"];

/// Two states, one action, features 1 and 2: state 0 moves to the absorbing
/// state 1, rewards are zero.
pub fn theta_two_theta() -> EnvSpec {
    let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
    let mdp = Mdp::new(vec![p], vec![DVector::zeros(2)], 0.99, DVector::from_element(2, 0.5)).unwrap();
    EnvSpec {
        name: "theta2theta".into(),
        mdp,
        features: FeatureMap::new(DMatrix::from_column_slice(2, 1, &[1.0, 2.0])).unwrap(),
        episode: EpisodeRule::FixedLength { length: 2 },
        start: StartRule::Fixed { state: 0 },
        behavior: DMatrix::from_element(2, 1, 1.0),
        sampling: SamplingMode::Trajectory,
        init_theta: DVector::from_element(1, 1.0),
        scale_overrides: vec![(AgentKind::Cql, 0.5)],
    }
    .check()
}

pub const BAIRD_DASH: usize = 0;
pub const BAIRD_SOLID: usize = 1;

/// Seven-state star with actions dash (uniform over states 0..=5) and solid
/// (to state 6). The solid action carries the classic star features
/// `2 e_i + e_7` (and `e_6 + 2 e_7` at the hub); dash gets one indicator
/// per state, 15 features in total. Everything is scaled by `1/sqrt(5)`.
///
/// With 14 state-action pairs and 15 features the matrix cannot have full
/// column rank, so this instance is only usable by the learners.
pub fn baird() -> EnvSpec {
    let n = 7;
    let dash = DMatrix::from_fn(n, n, |_, j| if j < 6 { 1.0 / 6.0 } else { 0.0 });
    let solid = DMatrix::from_fn(n, n, |_, j| if j == 6 { 1.0 } else { 0.0 });
    let mdp = Mdp::new(
        vec![dash, solid],
        vec![DVector::zeros(n); 2],
        0.99,
        DVector::from_element(2 * n, 1.0 / (2 * n) as f64),
    )
    .unwrap();
    let mut x = DMatrix::zeros(2 * n, 15);
    for s in 0..n {
        x[(BAIRD_DASH * n + s, 8 + s)] = 1.0;
        let row = BAIRD_SOLID * n + s;
        if s < 6 {
            x[(row, s)] = 2.0;
            x[(row, 7)] = 1.0;
        } else {
            x[(row, 6)] = 1.0;
            x[(row, 7)] = 2.0;
        }
    }
    let mut init = DVector::from_element(15, 1.0);
    init[6] = 2.0;
    let mut behavior = DMatrix::zeros(n, 2);
    for s in 0..n {
        behavior[(s, BAIRD_DASH)] = 5.0 / 6.0;
        behavior[(s, BAIRD_SOLID)] = 1.0 / 6.0;
    }
    EnvSpec {
        name: "baird".into(),
        mdp,
        features: FeatureMap::new(x / 5f64.sqrt()).unwrap(),
        episode: EpisodeRule::TerminateProb { state: 6, prob: 0.01 },
        start: StartRule::Uniform,
        behavior,
        sampling: SamplingMode::Trajectory,
        init_theta: init,
        scale_overrides: Vec::new(),
    }
    .check()
}

/// Three states, two actions, two features; no solution of the
/// unregularized equation exists.
pub fn example1() -> EnvSpec {
    let p1 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.25, 0.25, 0.5, 0.25, 0.5, 0.25]);
    let p2 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.25, 0.25, 0.5, 0.25, 0.5, 0.25]);
    let r1 = DVector::from_vec(vec![-2.0, 0.0, 0.0]);
    let r2 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let mdp = Mdp::new(vec![p1, p2], vec![r1, r2], 0.99, DVector::from_element(6, 1.0 / 6.0)).unwrap();
    #[rustfmt::skip]
    let x = DMatrix::from_row_slice(6, 2, &[
        0.01, 0.0,
        0.1, 0.0,
        0.0, 0.01,
        0.0, 0.01,
        0.1, 0.0,
        0.0, 0.01,
    ]);
    EnvSpec {
        name: "example1".into(),
        mdp,
        features: FeatureMap::new(x).unwrap(),
        episode: EpisodeRule::None,
        start: StartRule::Uniform,
        behavior: DMatrix::from_element(3, 2, 0.5),
        sampling: SamplingMode::Iid,
        init_theta: DVector::zeros(2),
        scale_overrides: Vec::new(),
    }
    .check()
}

/// Two states, two actions, unit rewards, uniform `d`.
pub fn ode_mdp() -> EnvSpec {
    let p1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 0.0]);
    let p2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.75]);
    let mdp = Mdp::new(
        vec![p1, p2],
        vec![DVector::from_element(2, 1.0); 2],
        0.99,
        DVector::from_element(4, 0.25),
    )
    .unwrap();
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0]);
    EnvSpec {
        name: "ode-mdp".into(),
        mdp,
        features: FeatureMap::new(x).unwrap(),
        episode: EpisodeRule::None,
        start: StartRule::Uniform,
        behavior: DMatrix::from_element(2, 2, 0.5),
        sampling: SamplingMode::Iid,
        init_theta: DVector::zeros(2),
        scale_overrides: Vec::new(),
    }
    .check()
}
