//! Run records and the quantities that certify convergence.
//!
//! - `V = ½ Σ_i ‖x_i − x*‖²` against a reference optimum.
//! - `W = L(x) − L(x*)`, nonnegative along feasible trajectories when the
//!   penalty is exact.
//! - The optimality residual: how far `0` is from the projected right-hand
//!   side of the flow, minimized over every admissible sign selection.
//! - A log-linear fit of `V` over a window of the trajectory.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentState, EdgeSigns, IntegratorConfig, Scheme};
use crate::objectives::SIGN_TOL;
use crate::penalty::Problem;
use crate::sets::{project_onto_tangent, ActiveFace};
use crate::{Error, Result, Vector};

/// Default fit window, as fractions of the recorded trajectory.
pub const DEFAULT_RATE_WINDOW: (f64, f64) = (0.1, 0.6);

pub const CSV_HEADER: &str = "step,time,L,V,consensus,residual";

/// One recorded point of a trajectory.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub step: usize,
    pub time: f64,
    pub states: &'a [Vector],
    pub l_value: f64,
    pub v_value: Option<f64>,
    pub consensus: f64,
    pub disagreement: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<Vector>>,
    pub l_values: Vec<f64>,
    /// Present when the run had a reference optimum.
    pub v_values: Option<Vec<f64>>,
    /// Largest pairwise distance between agents.
    pub consensus: Vec<f64>,
    /// `Σ_k ‖x_k − x̄‖`.
    pub disagreement: Vec<f64>,
    pub residuals: Vec<f64>,
    pub penalty: f64,
    pub alpha: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub converged: bool,
    pub steps_taken: usize,
    pub max_inner_iterations: usize,
    pub total_inner_iterations: u64,
    /// Steps whose edge dual loop hit its iteration budget.
    pub inner_failures: usize,
    pub final_agents: Vec<AgentState>,
}

impl RunRecord {
    pub fn new(p: &Problem, cfg: &IntegratorConfig, seed: u64, with_reference: bool) -> Self {
        RunRecord {
            steps: Vec::new(),
            times: Vec::new(),
            states: Vec::new(),
            l_values: Vec::new(),
            v_values: with_reference.then(Vec::new),
            consensus: Vec::new(),
            disagreement: Vec::new(),
            residuals: Vec::new(),
            penalty: p.penalty(),
            alpha: cfg.alpha,
            seed,
            scheme: cfg.scheme,
            converged: false,
            steps_taken: 0,
            max_inner_iterations: 0,
            total_inner_iterations: 0,
            inner_failures: 0,
            final_agents: Vec::new(),
        }
    }

    pub fn push(&mut self, s: Sample<'_>) {
        self.steps.push(s.step);
        self.times.push(s.time);
        self.states.push(s.states.to_vec());
        self.l_values.push(s.l_value);
        if let (Some(vs), Some(v)) = (self.v_values.as_mut(), s.v_value) {
            vs.push(v);
        }
        self.consensus.push(s.consensus);
        self.disagreement.push(s.disagreement);
        self.residuals.push(s.residual);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_states(&self) -> &[Vector] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_consensus(&self) -> f64 {
        self.consensus.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }

    /// `W(t) = L(x(t)) − L*` for every recorded point.
    pub fn gaps(&self, optimal_value: f64) -> Vec<f64> {
        self.l_values.iter().map(|l| l - optimal_value).collect()
    }

    /// One row per recorded point; `V` is left empty without a reference.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for k in 0..self.len() {
            let v = self.v_values.as_ref().map(|vs| vs[k].to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.steps[k], self.times[k], self.l_values[k], v, self.consensus[k], self.residuals[k]
            )?;
        }
        Ok(())
    }
}

/// `V = ½ Σ_i ‖x_i − x_i*‖²`.
pub fn lyapunov_v(xs: &[Vector], reference: &[Vector]) -> f64 {
    assert_eq!(xs.len(), reference.len(), "state and reference have different agent counts");
    0.5 * xs.iter().zip(reference).map(|(x, r)| (x - r).norm_squared()).sum::<f64>()
}

/// Largest pairwise Euclidean distance between agent states.
pub fn consensus_error(xs: &[Vector]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            worst = worst.max((a - b).norm());
        }
    }
    worst
}

/// Optimality residual of `xs` for the penalized problem.
pub fn optimality_residual(xs: &[Vector], p: &Problem) -> Result<f64> {
    ResidualSolver::new(p).evaluate(xs)
}

/// Minimizes `½ Σ_i ‖P_{T_i}(−∇s_i − η_i − K Σ_j ξ_ij)‖²` over admissible
/// selections and reports `max_i ‖P_{T_i}(·)‖` at the best point found.
///
/// `η_i` ranges over the subdifferential of agent `i`'s l1 term and
/// `ξ_ij = −ξ_ji` over `Sgn(x_i − x_j)`; coordinates within [`SIGN_TOL`] of a
/// kink are free. Any admissible selection gives an upper bound, so a small
/// residual certifies near-optimality. The problem is solved by accelerated
/// projected gradient with function-value restarts; the edge selections of the
/// previous call (or of a forward-backward step) seed the next call.
#[derive(Debug, Clone)]
pub struct ResidualSolver<'p> {
    p: &'p Problem,
    warm: Option<Vec<Vector>>,
    pub max_iters: usize,
    /// Stop once the residual is at most this.
    pub target: f64,
}

struct Layout {
    faces: Vec<ActiveFace>,
    base: Vec<Vector>,
    eta_lo: Vec<Vector>,
    eta_hi: Vec<Vector>,
    mu_lo: Vec<Vector>,
    mu_hi: Vec<Vector>,
}

impl<'p> ResidualSolver<'p> {
    pub fn new(p: &'p Problem) -> Self {
        ResidualSolver { p, warm: None, max_iters: 20_000, target: 1e-12 }
    }

    pub fn warm_start_from_signs(&mut self, signs: &EdgeSigns) {
        self.warm = Some(signs.0.clone());
    }

    pub fn evaluate(&mut self, xs: &[Vector]) -> Result<f64> {
        let p = self.p;
        p.check_states(xs)?;
        let k = p.penalty();
        let layout = self.layout(xs)?;
        let edges = p.graph().edges();

        let mut eta: Vec<Vector> = layout
            .eta_lo
            .iter()
            .zip(&layout.eta_hi)
            .map(|(lo, hi)| (lo + hi) * 0.5)
            .collect();
        let mut mu: Vec<Vector> = match &self.warm {
            Some(w) if w.len() == edges.len() => w.iter().map(|xi| xi * k).collect(),
            _ => vec![Vector::zeros(p.dim()); edges.len()],
        };
        clamp_all(&mut mu, &layout.mu_lo, &layout.mu_hi);

        let (mut phi, mut best, mut r) = self.objective(&layout, &eta, &mu);
        let mut best_mu = mu.clone();
        let lipschitz = 1.0 + 2.0 * p.graph().max_degree() as f64;
        let (mut y_eta, mut y_mu) = (eta.clone(), mu.clone());
        let mut momentum = 1.0f64;
        let mut checkpoint = best;

        for iter in 1..=self.max_iters {
            if best <= self.target {
                break;
            }
            let (_, _, ry) = self.objective(&layout, &y_eta, &y_mu);
            let mut next_eta = y_eta.clone();
            for (e, ri) in next_eta.iter_mut().zip(&ry) {
                *e += ri / lipschitz;
            }
            let mut next_mu = y_mu.clone();
            for (m, &(i, j)) in next_mu.iter_mut().zip(edges) {
                *m += (&ry[i] - &ry[j]) / lipschitz;
            }
            clamp_all(&mut next_eta, &layout.eta_lo, &layout.eta_hi);
            clamp_all(&mut next_mu, &layout.mu_lo, &layout.mu_hi);
            let (next_phi, next_max, next_r) = self.objective(&layout, &next_eta, &next_mu);
            if next_max < best {
                best = next_max;
                best_mu.clone_from(&next_mu);
            }
            if next_phi > phi {
                momentum = 1.0;
                y_eta.clone_from(&next_eta);
                y_mu.clone_from(&next_mu);
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let beta = (momentum - 1.0) / t_next;
                y_eta = next_eta.iter().zip(&eta).map(|(a, b)| a + (a - b) * beta).collect();
                y_mu = next_mu.iter().zip(&mu).map(|(a, b)| a + (a - b) * beta).collect();
                momentum = t_next;
            }
            eta = next_eta;
            mu = next_mu;
            phi = next_phi;
            r = next_r;
            // give up once 100 iterations bring less than 1% improvement
            if iter % 100 == 0 {
                if best > 0.99 * checkpoint {
                    break;
                }
                checkpoint = best;
            }
        }
        let _ = r;
        self.warm = Some(if k > 0.0 { best_mu.iter().map(|m| m / k).collect() } else { best_mu });
        Ok(best)
    }

    fn layout(&self, xs: &[Vector]) -> Result<Layout> {
        let p = self.p;
        let k = p.penalty();
        let m = p.dim();
        let mut faces = Vec::with_capacity(xs.len());
        let mut base = Vec::with_capacity(xs.len());
        let mut eta_lo = Vec::with_capacity(xs.len());
        let mut eta_hi = Vec::with_capacity(xs.len());
        for (i, (x, (obj, set))) in xs.iter().zip(p.objectives().iter().zip(p.sets())).enumerate() {
            faces.push(set.active_face(x).map_err(|e| Error::Domain(format!("agent {i}: {e}")))?);
            base.push(-obj.smooth_gradient(x));
            let (shift, weight) = obj.l1_term();
            let mut lo = Vector::zeros(m);
            let mut hi = Vector::zeros(m);
            for c in 0..m {
                let u = x[c] - shift[c];
                if u.abs() <= SIGN_TOL {
                    lo[c] = -weight;
                    hi[c] = weight;
                } else {
                    lo[c] = weight * u.signum();
                    hi[c] = lo[c];
                }
            }
            eta_lo.push(lo);
            eta_hi.push(hi);
        }
        let mut mu_lo = Vec::new();
        let mut mu_hi = Vec::new();
        for &(i, j) in p.graph().edges() {
            let mut lo = Vector::zeros(m);
            let mut hi = Vector::zeros(m);
            for c in 0..m {
                let u = xs[i][c] - xs[j][c];
                if u.abs() <= SIGN_TOL {
                    lo[c] = -k;
                    hi[c] = k;
                } else {
                    lo[c] = k * u.signum();
                    hi[c] = lo[c];
                }
            }
            mu_lo.push(lo);
            mu_hi.push(hi);
        }
        Ok(Layout { faces, base, eta_lo, eta_hi, mu_lo, mu_hi })
    }

    /// Returns `(½ Σ‖r_i‖², max_i ‖r_i‖, r)` with `r_i` the projected right-hand side.
    fn objective(&self, layout: &Layout, eta: &[Vector], mu: &[Vector]) -> (f64, f64, Vec<Vector>) {
        let mut w: Vec<Vector> = layout.base.iter().zip(eta).map(|(b, e)| b - e).collect();
        for (m, &(i, j)) in mu.iter().zip(self.p.graph().edges()) {
            w[i] -= m;
            w[j] += m;
        }
        let r: Vec<Vector> = w.iter().zip(&layout.faces).map(|(wi, f)| project_onto_tangent(f, wi)).collect();
        let mut phi = 0.0;
        let mut worst = 0.0f64;
        for ri in &r {
            let sq = ri.norm_squared();
            phi += 0.5 * sq;
            worst = worst.max(sq.sqrt());
        }
        (phi, worst, r)
    }
}

fn clamp_all(vs: &mut [Vector], lo: &[Vector], hi: &[Vector]) {
    for ((v, l), h) in vs.iter_mut().zip(lo).zip(hi) {
        for c in 0..v.len() {
            v[c] = v[c].clamp(l[c], h[c]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Half-open index range of the recorded points used.
    pub window: (usize, usize),
}

/// Least-squares fit of `log V` against time over `window` (fractions of the
/// record). The window is cut at the first nonpositive `V`.
pub fn fit_exponential_rate(record: &RunRecord, window: (f64, f64)) -> Result<RateFit> {
    let values = record
        .v_values
        .as_ref()
        .ok_or_else(|| Error::Diagnostic("run has no Lyapunov values (no reference point)".into()))?;
    fit_log_linear(&record.times, values, window)
}

pub fn fit_log_linear(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::Diagnostic(format!("invalid fit window ({lo}, {hi})")));
    }
    let n = times.len().min(values.len());
    let start = (lo * n as f64).floor() as usize;
    let mut end = ((hi * n as f64).floor() as usize).min(n);
    if let Some(cut) = values[start.min(end)..end].iter().position(|v| !(*v > 0.0)) {
        end = start + cut;
    }
    if end < start + 2 {
        return Err(Error::Diagnostic(format!(
            "fit window [{start}, {end}) has fewer than two positive values"
        )));
    }
    let t = &times[start..end];
    let y: Vec<f64> = values[start..end].iter().map(|v| v.ln()).collect();
    let count = t.len() as f64;
    let t_mean = t.iter().sum::<f64>() / count;
    let y_mean = y.iter().sum::<f64>() / count;
    let stt: f64 = t.iter().map(|ti| (ti - t_mean).powi(2)).sum();
    let sty: f64 = t.iter().zip(&y).map(|(ti, yi)| (ti - t_mean) * (yi - y_mean)).sum();
    let syy: f64 = y.iter().map(|yi| (yi - y_mean).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::Diagnostic("fit window has a single distinct time".into()));
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = t.iter().zip(&y).map(|(ti, yi)| (yi - intercept - slope * ti).powi(2)).sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit { slope, intercept, r_squared, window: (start, end) })
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

    fn shifted_square(center: f64) -> Objective {
        Objective::quad_l1(Matrix::from_element(1, 1, 1.0), v(&[-center]), 0.0).unwrap()
    }

    fn single(obj: Objective, lo: f64, hi: f64) -> Problem {
        let g = NetworkGraph::from_edges(1, &[]).unwrap();
        let set = ConvexSet::new_box(v(&[lo]), v(&[hi])).unwrap();
        Problem::new(g, vec![obj], vec![set], PenaltySpec::Fixed(0.0)).unwrap()
    }

    #[test]
    fn lyapunov_examples() {
        let x = vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])];
        assert_eq!(lyapunov_v(&x, &x), 0.0);
        assert_eq!(lyapunov_v(&[v(&[3.0])], &[v(&[1.0])]), 2.0);
        assert_eq!(lyapunov_v(&[v(&[1.0]), v(&[1.0])], &[v(&[0.0]), v(&[0.0])]), 1.0);
    }

    #[test]
    fn consensus_error_examples() {
        assert_eq!(consensus_error(&vec![v(&[2.0, 1.0]); 4]), 0.0);
        assert_eq!(consensus_error(&[v(&[0.0]), v(&[3.0])]), 3.0);
        assert_eq!(consensus_error(&[v(&[0.0]), v(&[1.0]), v(&[5.0])]), 5.0);
    }

    #[test]
    fn residual_examples() {
        let p = single(shifted_square(0.0), 0.0, 2.0);
        assert_eq!(optimality_residual(&[v(&[0.0])], &p).unwrap(), 0.0);
        let p = single(shifted_square(3.0), 0.0, 2.0);
        assert_eq!(optimality_residual(&[v(&[2.0])], &p).unwrap(), 0.0);
        assert!((optimality_residual(&[v(&[1.0])], &p).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(optimality_residual(&[v(&[3.0])], &p), Err(Error::Domain(_))));
    }

    #[test]
    fn residual_uses_l1_kink_subdifferential() {
        // f = |x| on [-1, 1]: minimum at the kink
        let obj = Objective::l1_linear(v(&[0.0]), v(&[0.0])).unwrap();
        let p = single(obj, -1.0, 1.0);
        assert_eq!(optimality_residual(&[v(&[0.0])], &p).unwrap(), 0.0);
        assert_eq!(optimality_residual(&[v(&[0.5])], &p).unwrap(), 1.0);
    }

    #[test]
    fn consensus_alone_is_not_optimality() {
        // f_1 = ½(x−1)², f_2 = ½(x+1)², optimum 0. The pair agrees at 0.5 but is not optimal.
        let g = build_topology(&Topology::Cycle, 2).unwrap();
        let set = ConvexSet::new_box(v(&[-5.0]), v(&[5.0])).unwrap();
        let p = Problem::new(
            g,
            vec![shifted_square(1.0), shifted_square(-1.0)],
            vec![set.clone(), set],
            PenaltySpec::default(),
        )
        .unwrap();
        let off = optimality_residual(&[v(&[0.5]), v(&[0.5])], &p).unwrap();
        assert!((off - 0.5).abs() < 1e-9, "residual {off}");
        let at = optimality_residual(&[v(&[0.0]), v(&[0.0])], &p).unwrap();
        assert!(at <= 1e-12);
    }

    #[test]
    fn rate_fit_recovers_exact_exponential() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_log_linear(&times, &values, DEFAULT_RATE_WINDOW).unwrap();
        assert!((fit.slope + 2.0).abs() <= 2e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.window, (20, 120));

        let flat = vec![3.0; 200];
        let fit = fit_log_linear(&times, &flat, DEFAULT_RATE_WINDOW).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn rate_fit_shrinks_to_positive_prefix() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let mut values: Vec<f64> = times.iter().map(|t| (-0.1 * t).exp()).collect();
        for v in values.iter_mut().skip(30) {
            *v = 0.0;
        }
        let fit = fit_log_linear(&times, &values, DEFAULT_RATE_WINDOW).unwrap();
        assert_eq!(fit.window, (10, 30));
        assert!((fit.slope + 0.1).abs() < 1e-9);

        for v in values.iter_mut().skip(10) {
            *v = 0.0;
        }
        assert!(matches!(fit_log_linear(&times, &values, DEFAULT_RATE_WINDOW), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn csv_layout() {
        let p = single(shifted_square(0.0), 0.0, 2.0);
        let cfg = IntegratorConfig::default();
        let mut rec = RunRecord::new(&p, &cfg, 7, false);
        let xs = [v(&[1.0])];
        rec.push(Sample {
            step: 0,
            time: 0.0,
            states: &xs,
            l_value: 0.5,
            v_value: None,
            consensus: 0.0,
            disagreement: 0.0,
            residual: 1.0,
        });
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,time,L,V,consensus,residual\n0,0,0.5,,0,1\n");
    }
}
