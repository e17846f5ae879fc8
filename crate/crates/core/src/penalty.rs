//! The exact-penalty problem
//!
//! `L(x) = Σ_i f_i(x_i) + (K/2) Σ_i Σ_{j ∈ N_i} ‖x_i − x_j‖₁,   x_i ∈ Ω_i`
//!
//! and the choice of `K`. When `K > n·c`, with `c` a Lipschitz constant of every
//! `f_i` on its set, minimizers of `L` are exactly the consensus minimizers of
//! `Σ f_i`. The double sum visits each undirected edge twice, so each edge
//! contributes `K‖x_i − x_j‖₁`.

use serde::{Deserialize, Serialize};

use crate::network::NetworkGraph;
use crate::objectives::Objective;
use crate::sets::ConvexSet;
use crate::{Error, Result, Vector};

pub const DEFAULT_GAMMA: f64 = 1.05;

/// Per-agent floor on `K` when every objective is constant.
const PENALTY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltySpec {
    /// `K = gamma · n · c`.
    Auto { gamma: f64 },
    Fixed(f64),
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec::Auto { gamma: DEFAULT_GAMMA }
    }
}

/// `K = γ·n·c`, floored at `1e-6·n` so the consensus term never vanishes.
pub fn choose_penalty(n: usize, c: f64, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::Config(format!("penalty safety factor must exceed 1, got {gamma}")));
    }
    Ok((gamma * n as f64 * c).max(PENALTY_FLOOR * n as f64))
}

#[derive(Debug, Clone)]
pub struct Problem {
    graph: NetworkGraph,
    objectives: Vec<Objective>,
    sets: Vec<ConvexSet>,
    dim: usize,
    penalty: f64,
    lipschitz: f64,
    beta: f64,
    certified: bool,
}

impl Problem {
    pub fn new(
        graph: NetworkGraph,
        objectives: Vec<Objective>,
        sets: Vec<ConvexSet>,
        penalty: PenaltySpec,
    ) -> Result<Self> {
        let n = graph.n();
        if objectives.len() != n || sets.len() != n {
            return Err(Error::Config(format!(
                "graph has {n} agents but {} objectives and {} sets were given",
                objectives.len(),
                sets.len()
            )));
        }
        if !graph.is_connected() {
            return Err(Error::Config("communication graph is not connected".into()));
        }
        let dim = sets.first().map(ConvexSet::dim).unwrap_or(0);
        for (i, (obj, set)) in objectives.iter().zip(&sets).enumerate() {
            if obj.dim() != dim || set.dim() != dim {
                return Err(Error::Config(format!(
                    "agent {i} has objective dimension {} and set dimension {}, expected {dim}",
                    obj.dim(),
                    set.dim()
                )));
            }
        }
        let lipschitz = objectives
            .iter()
            .zip(&sets)
            .map(|(f, s)| f.lipschitz_bound(s))
            .fold(0.0, f64::max);
        let beta = objectives
            .iter()
            .map(Objective::strong_convexity_modulus)
            .fold(f64::INFINITY, f64::min);
        let k = match penalty {
            PenaltySpec::Auto { gamma } => choose_penalty(n, lipschitz, gamma)?,
            PenaltySpec::Fixed(k) => {
                if !(k.is_finite() && k >= 0.0) {
                    return Err(Error::Config(format!("penalty factor must be nonnegative, got {k}")));
                }
                k
            }
        };
        let certified = k > n as f64 * lipschitz;
        Ok(Problem { graph, objectives, sets, dim, penalty: k, lipschitz, beta, certified })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn sets(&self) -> &[ConvexSet] {
        &self.sets
    }

    /// The penalty factor `K`.
    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// Network Lipschitz constant `c = max_i c_i`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Smallest strong-convexity modulus over the agents.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Whether `K > n·c`, the condition under which the penalty is exact.
    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub fn check_states(&self, xs: &[Vector]) -> Result<()> {
        if xs.len() != self.n() {
            return Err(Error::Domain(format!("expected {} agent states, got {}", self.n(), xs.len())));
        }
        if let Some((i, x)) = xs.iter().enumerate().find(|(_, x)| x.len() != self.dim) {
            return Err(Error::Domain(format!(
                "agent {i} state has dimension {}, expected {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `L(x)`.
    pub fn penalized_value(&self, xs: &[Vector]) -> Result<f64> {
        self.check_states(xs)?;
        let f: f64 = self.objectives.iter().zip(xs).map(|(obj, x)| obj.value(x)).sum();
        Ok(f + self.penalty * penalty_h(&self.graph, xs))
    }

    /// `Σ_i f_i(x)` at a single common point.
    pub fn centralized_value(&self, x: &Vector) -> f64 {
        self.objectives.iter().map(|obj| obj.value(x)).sum()
    }
}

/// `d(x) = Σ_k ‖x_k − x̄‖₂`.
pub fn consensus_distance(xs: &[Vector]) -> f64 {
    let Some(first) = xs.first() else { return 0.0 };
    let mut mean = Vector::zeros(first.len());
    for x in xs {
        mean += x;
    }
    mean /= xs.len() as f64;
    xs.iter().map(|x| (x - &mean).norm()).sum()
}

/// `h(x) = ½ Σ_i Σ_{j ∈ N_i} ‖x_i − x_j‖₁`.
pub fn penalty_h(graph: &NetworkGraph, xs: &[Vector]) -> f64 {
    let double: f64 = (0..graph.n())
        .flat_map(|i| graph.neighbors(i).iter().map(move |&j| (i, j)))
        .map(|(i, j)| (&xs[i] - &xs[j]).abs().sum())
        .sum();
    0.5 * double
}
