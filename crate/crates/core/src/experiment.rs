//! Experiment configs (JSON) and the two reference instance families.
//!
//! Example 1: four agents on a star, `f_i(x) = ‖x − a_i‖₁ + b_iᵀx` on balls
//! `‖x − c_i‖ ≤ d_i` in four dimensions.
//! Example 2: thirty agents on a cycle, `f_i(x) = ½xᵀP_ix + q_iᵀx + r_i‖x‖₁`
//! on boxes `l_i ≤ x ≤ u_i` in ten dimensions.
//!
//! Coefficient distributions are fixed here and written into every config's
//! `provenance` block.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dynamics::IntegratorConfig;
use crate::network::{build_topology, NetworkGraph, Topology};
use crate::objectives::Objective;
use crate::oracle::interior_point;
use crate::penalty::{PenaltySpec, Problem};
use crate::sets::ConvexSet;
use crate::{Error, Matrix, Result, Vector};

const GENERATION_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Example {
    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Example::One),
            2 => Ok(Example::Two),
            _ => Err(Error::Config(format!("unknown example {k}; expected 1 or 2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<Topology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<NetworkGraph> {
        match (&self.topology, &self.edges) {
            (Some(t), None) => build_topology(t, self.n),
            (None, Some(e)) => NetworkGraph::connected_from_edges(self.n, e),
            _ => Err(Error::Config("network needs exactly one of `topology` and `edges`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Materialized from a generator at load time.
    Generated { example: Example, seed: u64 },
    Explicit {
        network: NetworkSpec,
        objectives: Vec<Objective>,
        sets: Vec<ConvexSet>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// One uniform draw per agent from its own set.
    RandomFeasible { seed: u64 },
    Explicit { states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    #[default]
    Oracle,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub init: InitSpec,
    #[serde(default)]
    pub reference: ReferenceMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub seed: u64,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

/// CLI-level overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub max_steps: Option<usize>,
    pub gamma: Option<f64>,
    pub output: Option<PathBuf>,
}

/// A config resolved into a problem and initial states.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: Problem,
    pub x0: Vec<Vector>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A seed override reseeds the generator, the initial state and the run.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
            if let ProblemSpec::Generated { seed: s, .. } = &mut self.problem {
                *s = seed;
            }
            if let InitSpec::RandomFeasible { seed: s } = &mut self.init {
                *s = seed;
            }
        }
        if let Some(alpha) = o.alpha {
            self.integrator.alpha = alpha;
        }
        if let Some(steps) = o.max_steps {
            self.integrator.max_steps = steps;
        }
        if let Some(gamma) = o.gamma {
            self.penalty = PenaltySpec::Auto { gamma };
        }
        if let Some(out) = &o.output {
            self.output = Some(out.clone());
        }
        self.validate()
    }

    /// Replaces a generated problem by its explicit coefficients.
    pub fn materialize(&self) -> Result<ExperimentConfig> {
        match &self.problem {
            ProblemSpec::Explicit { .. } => Ok(self.clone()),
            ProblemSpec::Generated { example, seed } => {
                let generated = generate(*example, *seed)?;
                let mut out = self.clone();
                out.problem = generated.problem;
                if out.provenance.is_null() {
                    out.provenance = generated.provenance;
                }
                Ok(out)
            }
        }
    }

    /// Resolves the problem and initial states; catches every config error.
    pub fn build(&self) -> Result<Instance> {
        self.integrator.validate()?;
        let cfg = self.materialize()?;
        let ProblemSpec::Explicit { network, objectives, sets } = cfg.problem else {
            unreachable!("materialize returns explicit problems");
        };
        let graph = network.build()?;
        let problem = Problem::new(graph, objectives, sets, self.penalty)?;
        let x0 = match &self.init {
            InitSpec::RandomFeasible { seed } => random_feasible(problem.sets(), *seed),
            InitSpec::Explicit { states } => {
                let xs: Vec<Vector> = states.iter().map(|s| Vector::from_column_slice(s)).collect();
                problem.check_states(&xs).map_err(|e| Error::Config(format!("initial states: {e}")))?;
                xs
            }
        };
        Ok(Instance { problem, x0 })
    }

    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }
}

pub fn random_feasible(sets: &[ConvexSet], seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sets.iter().map(|s| s.sample_point(&mut rng)).collect()
}

struct Generated {
    problem: ProblemSpec,
    provenance: serde_json::Value,
}

fn generate(example: Example, seed: u64) -> Result<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_RETRIES {
        let g = match example {
            Example::One => draw_example1(&mut rng, seed)?,
            Example::Two => draw_example2(&mut rng, seed)?,
        };
        let ProblemSpec::Explicit { sets, .. } = &g.problem else { unreachable!() };
        if interior_point(sets).is_ok() {
            return Ok(g);
        }
    }
    Err(Error::Generation(format!(
        "no instance with a common interior in {GENERATION_RETRIES} draws"
    )))
}

fn uniform(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_iterator(m, (0..m).map(|_| rng.gen_range(lo..hi)))
}

fn draw_example1(rng: &mut ChaCha8Rng, seed: u64) -> Result<Generated> {
    let (n, m) = (4, 4);
    let mut objectives = Vec::with_capacity(n);
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let a = uniform(rng, m, -1.0, 1.0);
        let b = uniform(rng, m, -1.0, 1.0);
        let c = uniform(rng, m, -0.5, 0.5);
        let d = rng.gen_range(2.0..3.0);
        objectives.push(Objective::l1_linear(a, b)?);
        sets.push(ConvexSet::new_ball(c, d)?);
    }
    Ok(Generated {
        problem: ProblemSpec::Explicit {
            network: NetworkSpec { n, topology: Some(Topology::Star), edges: None },
            objectives,
            sets,
        },
        provenance: json!({
            "example": 1,
            "generator_seed": seed,
            "rng": "ChaCha8",
            "objective": "f_i(x) = |x - a_i|_1 + b_i^T x",
            "set": "ball |x - c_i| <= d_i",
            "a_i": "uniform [-1, 1]^4",
            "b_i": "uniform [-1, 1]^4",
            "c_i": "uniform [-0.5, 0.5]^4",
            "d_i": "uniform [2, 3]",
            "network": "star, hub 0, n = 4",
        }),
    })
}

fn draw_example2(rng: &mut ChaCha8Rng, seed: u64) -> Result<Generated> {
    let (n, m) = (30, 10);
    let mut objectives = Vec::with_capacity(n);
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let a = Matrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let p = a.transpose() * &a + Matrix::identity(m, m);
        let p = (&p + p.transpose()) * 0.5;
        let q = uniform(rng, m, -1.0, 1.0);
        let r = rng.gen_range(0.0..1.0);
        let l = uniform(rng, m, -2.0, -1.0);
        let u = uniform(rng, m, 1.0, 2.0);
        objectives.push(Objective::quad_l1(p, q, r)?);
        sets.push(ConvexSet::new_box(l, u)?);
    }
    Ok(Generated {
        problem: ProblemSpec::Explicit {
            network: NetworkSpec { n, topology: Some(Topology::Cycle), edges: None },
            objectives,
            sets,
        },
        provenance: json!({
            "example": 2,
            "generator_seed": seed,
            "rng": "ChaCha8",
            "objective": "f_i(x) = 0.5 x^T P_i x + q_i^T x + r_i |x|_1",
            "set": "box l_i <= x <= u_i",
            "P_i": "A_i^T A_i + I, A_i entries uniform [-1, 1]",
            "q_i": "uniform [-1, 1]^10",
            "r_i": "uniform [0, 1]",
            "l_i": "uniform [-2, -1]^10",
            "u_i": "uniform [1, 2]^10",
            "network": "cycle, n = 30",
        }),
    })
}

fn example_config(example: Example, seed: u64, record_every: usize) -> Result<ExperimentConfig> {
    let g = generate(example, seed)?;
    Ok(ExperimentConfig {
        problem: g.problem,
        penalty: PenaltySpec::default(),
        integrator: IntegratorConfig { record_every, ..IntegratorConfig::default() },
        init: InitSpec::RandomFeasible { seed },
        reference: ReferenceMode::Oracle,
        output: None,
        seed,
        provenance: g.provenance,
    })
}

pub fn generate_example1(seed: u64) -> Result<ExperimentConfig> {
    example_config(Example::One, seed, 50)
}

pub fn generate_example2(seed: u64) -> Result<ExperimentConfig> {
    example_config(Example::Two, seed, 1)
}

pub fn generate_example(example: Example, seed: u64) -> Result<ExperimentConfig> {
    match example {
        Example::One => generate_example1(seed),
        Example::Two => generate_example2(seed),
    }
}
