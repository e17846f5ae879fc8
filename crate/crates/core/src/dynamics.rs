//! The distributed projected subgradient flow
//!
//! `ẋ_i ∈ P_{T_{Ω_i}(x_i)}[ −∂f_i(x_i) − K Σ_{j ∈ N_i} Sgn(x_i − x_j) ]`
//!
//! and two fixed-step discretizations of it.
//!
//! [`Scheme::Explicit`] is the plain Euler step: every agent evaluates the
//! right-hand side with the dead-zone sign selection, moves by `α` along it and
//! re-projects onto its set. With a sign term of size `K·deg_i` this chatters
//! around consensus with amplitude of order `αK`.
//!
//! [`Scheme::ForwardBackward`] takes the smooth part of each `f_i` explicitly
//! and every set-valued part (the l1 term of `f_i`, the edge signs and the set
//! constraint) at the end of the step, so the sign selection satisfies
//! `ξ_ij ∈ Sgn(x_i' − x_j')`. The implicit part is an l1-regularized
//! projection, solved by projected ascent on one dual variable per edge. Each
//! ascent round only exchanges values between neighbours. Fixed points of
//! this step are exactly the optimality points of the penalized problem, so
//! the iterates reach consensus instead of chattering.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{consensus_error, lyapunov_v, ResidualSolver, RunRecord, Sample};
use crate::objectives::sign_select;
use crate::penalty::{consensus_distance, Problem};
use crate::prox::prox_shifted_l1;
use crate::{Error, Result, Vector};

/// Consecutive recorded points below `stop_tol` needed to stop a run.
pub const STOP_PATIENCE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Explicit,
    #[default]
    ForwardBackward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Step size `α`.
    pub alpha: f64,
    pub max_steps: usize,
    /// Optimality residual below which a recorded point counts as converged.
    pub stop_tol: f64,
    pub record_every: usize,
    pub scheme: Scheme,
    /// Tolerance of the per-step edge dual loop (forward-backward only).
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            alpha: 1e-3,
            max_steps: 200_000,
            stop_tol: 1e-6,
            record_every: 1,
            scheme: Scheme::ForwardBackward,
            inner_tol: 1e-12,
            inner_max_iters: 200_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.alpha)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Config(format!("stop_tol must be nonnegative, got {}", self.stop_tol)));
        }
        if !(self.inner_tol > 0.0) || self.inner_max_iters == 0 {
            return Err(Error::Config("inner loop needs a positive tolerance and iteration budget".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Vector,
    /// Displacement of the last step divided by `α`.
    pub last_velocity: Vector,
}

/// Right-hand side of agent `i` with the dead-zone sign selection.
///
/// Only agent `i`'s objective and set and its neighbours' states are read.
pub fn velocity(i: usize, xs: &[Vector], p: &Problem) -> Result<Vector> {
    let x = &xs[i];
    let mut raw = -p.objectives()[i].subgradient(x);
    for &j in p.graph().neighbors(i) {
        raw -= sign_select(&(x - &xs[j])) * p.penalty();
    }
    p.sets()[i]
        .tangent_project(x, &raw)
        .map_err(|e| Error::Domain(format!("agent {i}: {e}")))
}

/// One synchronous explicit Euler step: all velocities come from the
/// pre-step states, then every agent moves and re-projects onto its set.
pub fn euler_step(xs: &[Vector], p: &Problem, alpha: f64) -> Result<Vec<Vector>> {
    p.check_states(xs)?;
    let velocities = (0..xs.len()).map(|i| velocity(i, xs, p)).collect::<Result<Vec<_>>>()?;
    Ok(xs
        .iter()
        .zip(velocities)
        .zip(p.sets())
        .map(|((x, v), set)| set.project(&(x + v * alpha)))
        .collect())
}

/// Edge sign selections `ξ_e ∈ [−1, 1]^m`, one per edge in
/// [`NetworkGraph::edges`](crate::network::NetworkGraph::edges) order, oriented
/// from the lower to the higher node index.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSigns(pub Vec<Vector>);

impl EdgeSigns {
    pub fn zeros(p: &Problem) -> Self {
        EdgeSigns(vec![Vector::zeros(p.dim()); p.graph().edges().len()])
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub states: Vec<Vector>,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

/// One forward-backward step. `signs` carries the edge selections between
/// steps and is updated in place.
pub fn forward_backward_step(
    xs: &[Vector],
    p: &Problem,
    alpha: f64,
    signs: &mut EdgeSigns,
    inner_tol: f64,
    inner_max_iters: usize,
) -> Result<StepOutcome> {
    p.check_states(xs)?;
    let n = p.n();
    let edges = p.graph().edges();
    let forward: Vec<Vector> = xs
        .iter()
        .zip(p.objectives())
        .map(|(x, f)| x - f.smooth_gradient(x) * alpha)
        .collect();
    let l1: Vec<(Vector, f64)> = p.objectives().iter().map(|f| f.l1_term()).collect();
    let resolve = |i: usize, z: &Vector| prox_shifted_l1(&p.sets()[i], z, &l1[i].0, alpha * l1[i].1);

    let coupling = alpha * p.penalty();
    if coupling == 0.0 || edges.is_empty() {
        let states = (0..n).map(|i| resolve(i, &forward[i])).collect();
        return Ok(StepOutcome { states, inner_iterations: 0, inner_converged: true });
    }
    // Accelerated projected ascent on the edge duals with gradient restarts. The
    // dual gradient is Lipschitz with the largest Laplacian eigenvalue <= 2·max degree.
    let ascent = 1.0 / (2.0 * p.graph().max_degree() as f64);
    let m = p.dim();
    let mut lookahead = signs.0.clone();
    let mut next = signs.0.clone();
    let mut shifted = forward.clone();
    let mut states: Vec<Vector> = forward.clone();
    let mut momentum = 1.0f64;
    for iter in 1..=inner_max_iters {
        for (dst, src) in shifted.iter_mut().zip(&forward) {
            dst.copy_from(src);
        }
        for (&(i, j), z) in edges.iter().zip(&lookahead) {
            shifted[i].axpy(-coupling, z, 1.0);
            shifted[j].axpy(coupling, z, 1.0);
        }
        for (i, st) in states.iter_mut().enumerate() {
            *st = resolve(i, &shifted[i]);
        }
        let mut change = 0.0f64;
        let mut agreement = 0.0;
        for (e, &(i, j)) in edges.iter().enumerate() {
            for k in 0..m {
                let z = lookahead[e][k];
                let step = (z + ascent * (states[i][k] - states[j][k]) / coupling).clamp(-1.0, 1.0);
                change = change.max((step - z).abs() * coupling / ascent);
                agreement += (step - z) * (step - signs.0[e][k]);
                next[e][k] = step;
            }
        }
        if change <= inner_tol {
            std::mem::swap(&mut signs.0, &mut next);
            return Ok(StepOutcome { states, inner_iterations: iter, inner_converged: true });
        }
        let beta = if agreement < 0.0 {
            momentum = 1.0;
            0.0
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let b = (momentum - 1.0) / t_next;
            momentum = t_next;
            b
        };
        for ((z, nx), old) in lookahead.iter_mut().zip(&next).zip(&signs.0) {
            for k in 0..m {
                z[k] = (nx[k] + beta * (nx[k] - old[k])).clamp(-1.0, 1.0);
            }
        }
        std::mem::swap(&mut signs.0, &mut next);
    }
    Ok(StepOutcome { states, inner_iterations: inner_max_iters, inner_converged: false })
}

/// Integrate from `x0` until the optimality residual stays below `stop_tol` for
/// [`STOP_PATIENCE`] consecutive recorded points, or `max_steps` is reached.
///
/// `reference`, when given, is the consensus optimum used for `V`. `seed` is
/// stored in the record for provenance; the integration itself is deterministic.
pub fn run(
    p: &Problem,
    x0: &[Vector],
    cfg: &IntegratorConfig,
    seed: u64,
    reference: Option<&Vector>,
) -> Result<RunRecord> {
    cfg.validate()?;
    p.check_states(x0)?;
    if let Some(r) = reference {
        if r.len() != p.dim() {
            return Err(Error::Domain("reference point has the wrong dimension".into()));
        }
    }
    let mut xs: Vec<Vector> = x0
        .iter()
        .zip(p.sets())
        .enumerate()
        .map(|(i, (x, set))| {
            if set.contains(x, 0.0) {
                x.clone()
            } else {
                warn!("initial state of agent {i} is infeasible; projecting onto its set");
                set.project(x)
            }
        })
        .collect();
    let reference: Option<Vec<Vector>> = reference.map(|r| vec![r.clone(); p.n()]);

    let mut record = RunRecord::new(p, cfg, seed, reference.is_some());
    let mut signs = EdgeSigns::zeros(p);
    let mut residual_solver = ResidualSolver::new(p);
    let mut below = 0usize;
    let mut last_recorded = None;
    let mut velocities = vec![Vector::zeros(p.dim()); p.n()];

    let mut push = |record: &mut RunRecord, step: usize, xs: &[Vector], signs: Option<&EdgeSigns>| -> Result<f64> {
        if let Some(s) = signs {
            residual_solver.warm_start_from_signs(s);
        }
        let residual = residual_solver.evaluate(xs)?;
        record.push(Sample {
            step,
            time: step as f64 * cfg.alpha,
            states: xs,
            l_value: p.penalized_value(xs)?,
            v_value: reference.as_ref().map(|r| lyapunov_v(xs, r)),
            consensus: consensus_error(xs),
            disagreement: consensus_distance(xs),
            residual,
        });
        Ok(residual)
    };

    for step in 0..=cfg.max_steps {
        if step % cfg.record_every == 0 {
            let residual = push(
                &mut record,
                step,
                &xs,
                (cfg.scheme == Scheme::ForwardBackward && step > 0).then_some(&signs),
            )?;
            last_recorded = Some(step);
            if residual < cfg.stop_tol {
                below += 1;
                if below >= STOP_PATIENCE {
                    record.converged = true;
                    break;
                }
            } else {
                below = 0;
            }
        }
        if step == cfg.max_steps {
            break;
        }
        let next = match cfg.scheme {
            Scheme::Explicit => euler_step(&xs, p, cfg.alpha)?,
            Scheme::ForwardBackward => {
                let out = forward_backward_step(&xs, p, cfg.alpha, &mut signs, cfg.inner_tol, cfg.inner_max_iters)?;
                record.max_inner_iterations = record.max_inner_iterations.max(out.inner_iterations);
                record.total_inner_iterations += out.inner_iterations as u64;
                if !out.inner_converged {
                    record.inner_failures += 1;
                }
                out.states
            }
        };
        if let Some(i) = next.iter().position(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical {
                step: step + 1,
                message: format!("agent {i} state is not finite"),
            });
        }
        for ((v, new), old) in velocities.iter_mut().zip(&next).zip(&xs) {
            *v = (new - old) / cfg.alpha;
        }
        xs = next;
        record.steps_taken = step + 1;
    }
    if last_recorded != Some(record.steps_taken) {
        let last = record.steps_taken;
        push(&mut record, last, &xs, (cfg.scheme == Scheme::ForwardBackward).then_some(&signs))?;
    }
    record.final_agents = xs
        .into_iter()
        .zip(velocities)
        .map(|(x, last_velocity)| AgentState { x, last_velocity })
        .collect();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, NetworkGraph, Topology};
    use crate::objectives::Objective;
    use crate::penalty::PenaltySpec;
    use crate::sets::ConvexSet;
    use crate::Matrix;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn interval(lo: f64, hi: f64) -> ConvexSet {
        ConvexSet::new_box(v(&[lo]), v(&[hi])).unwrap()
    }

    fn half_square(center: f64) -> Objective {
        Objective::quad_l1(Matrix::from_element(1, 1, 1.0), v(&[-center]), 0.0).unwrap()
    }

    fn single_agent(obj: Objective, set: ConvexSet) -> Problem {
        // one agent: a graph with a single node is connected and has no edges
        let g = NetworkGraph::from_edges(1, &[]).unwrap();
        Problem::new(g, vec![obj], vec![set], PenaltySpec::Fixed(0.0)).unwrap()
    }

    /// `|x − 100| + x`, constant on any set below 100, with zero subgradient there.
    fn constant() -> Objective {
        Objective::l1_linear(v(&[100.0]), v(&[1.0])).unwrap()
    }

    fn consensus_pair(k: f64) -> Problem {
        let g = build_topology(&Topology::Cycle, 2).unwrap();
        Problem::new(g, vec![constant(), constant()], vec![interval(-1.0, 1.0); 2], PenaltySpec::Fixed(k)).unwrap()
    }

    #[test]
    fn velocity_examples() {
        let p = single_agent(half_square(0.0), interval(0.0, 2.0));
        assert_eq!(velocity(0, &[v(&[1.0])], &p).unwrap(), v(&[-1.0]));
        assert_eq!(velocity(0, &[v(&[0.0])], &p).unwrap(), v(&[0.0]));

        let pair = consensus_pair(1.0);
        assert_eq!(velocity(0, &[v(&[0.5]), v(&[-0.5])], &pair).unwrap()[0], -1.0);
    }

    #[test]
    fn velocity_rejects_infeasible_state() {
        let p = single_agent(half_square(0.0), interval(0.0, 2.0));
        assert!(matches!(velocity(0, &[v(&[3.0])], &p), Err(Error::Domain(_))));
    }

    #[test]
    fn euler_step_examples() {
        let p = single_agent(half_square(0.0), interval(0.0, 2.0));
        let next = euler_step(&[v(&[1.0])], &p, 0.1).unwrap();
        assert!((next[0][0] - 0.9).abs() < 1e-15);

        let pair = consensus_pair(1.0);
        let next = euler_step(&[v(&[0.5]), v(&[-0.5])], &pair, 0.1).unwrap();
        assert!((next[0][0] - 0.4).abs() < 1e-12);
        assert!((next[1][0] + 0.4).abs() < 1e-12);

        let uphill = Objective::l1_linear(v(&[-10.0]), v(&[-2.0])).unwrap(); // f = |x + 10| − 2x = −x + 10 on [0, 2]
        let p = single_agent(uphill, interval(0.0, 2.0));
        assert_eq!(euler_step(&[v(&[2.0])], &p, 0.1).unwrap()[0], v(&[2.0]));
    }

    #[test]
    fn forward_backward_matches_explicit_away_from_kinks() {
        let p = single_agent(half_square(0.0), interval(0.0, 2.0));
        let mut signs = EdgeSigns::zeros(&p);
        let out = forward_backward_step(&[v(&[1.0])], &p, 0.1, &mut signs, 1e-12, 100).unwrap();
        assert!((out.states[0][0] - 0.9).abs() < 1e-15);

        let pair = consensus_pair(1.0);
        let mut signs = EdgeSigns::zeros(&pair);
        let out = forward_backward_step(&[v(&[0.5]), v(&[-0.5])], &pair, 0.1, &mut signs, 1e-13, 10_000).unwrap();
        assert!(out.inner_converged);
        assert!((out.states[0][0] - 0.4).abs() < 1e-12);
        assert!((out.states[1][0] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn forward_backward_lands_on_consensus_instead_of_overshooting() {
        let pair = consensus_pair(1.0);
        let xs = [v(&[0.05]), v(&[-0.05])];
        let explicit = euler_step(&xs, &pair, 0.1).unwrap();
        assert!((explicit[0][0] + 0.05).abs() < 1e-12, "explicit overshoots to the mirror image");
        let mut signs = EdgeSigns::zeros(&pair);
        let out = forward_backward_step(&xs, &pair, 0.1, &mut signs, 1e-14, 100_000).unwrap();
        assert!((out.states[0][0] - out.states[1][0]).abs() < 1e-13);
        assert!(signs.0[0][0].abs() < 1.0);
    }

    #[test]
    fn stationary_at_consensus_with_constant_objectives() {
        let pair = consensus_pair(3.0);
        let xs = vec![v(&[0.25]); 2];
        let cfg = IntegratorConfig { max_steps: 50, stop_tol: 0.0, ..Default::default() };
        for scheme in [Scheme::Explicit, Scheme::ForwardBackward] {
            let rec = run(&pair, &xs, &IntegratorConfig { scheme, ..cfg.clone() }, 0, None).unwrap();
            for agent in &rec.final_agents {
                assert!((agent.x[0] - 0.25).abs() < 1e-12);
                assert!(agent.last_velocity.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn run_projects_infeasible_start_and_reports_numerical_failure() {
        let p = single_agent(half_square(0.0), interval(0.0, 2.0));
        let cfg = IntegratorConfig { max_steps: 10, ..Default::default() };
        let rec = run(&p, &[v(&[5.0])], &cfg, 0, None).unwrap();
        assert_eq!(rec.states[0][0], v(&[2.0]));

        let bad = IntegratorConfig { alpha: 0.0, ..Default::default() };
        assert!(matches!(run(&p, &[v(&[1.0])], &bad, 0, None), Err(Error::Config(_))));
        assert!(matches!(run(&p, &[v(&[1.0, 2.0])], &cfg, 0, None), Err(Error::Domain(_))));
    }

    #[test]
    fn stop_rule_needs_patience() {
        let p = single_agent(half_square(0.0), interval(0.0, 2.0));
        let cfg = IntegratorConfig { max_steps: 1_000, stop_tol: 1e-6, ..Default::default() };
        let rec = run(&p, &[v(&[0.0])], &cfg, 0, None).unwrap();
        assert!(rec.converged);
        assert_eq!(rec.steps_taken, STOP_PATIENCE - 1);
    }
}
