//! Centralized reference solver for `min Σ_i f_i(x)` over `∩_i Ω_i`.
//!
//! The general route runs projected subgradient descent with diminishing steps
//! and then polishes with consensus ADMM, where each block update is the exact
//! proximal map of `f_i + ι_{Ω_i}`. Problems made only of quadratic objectives
//! on boxes are solved directly by accelerated proximal gradient on the summed
//! objective over the intersected box.

use serde::{Deserialize, Serialize};

use crate::objectives::Objective;
use crate::prox::prox_shifted_l1;
use crate::sets::ConvexSet;
use crate::{Error, Matrix, Result, Vector};

/// Default target accuracy of [`solve_centralized`].
pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_PROJECTION_CYCLES: usize = 100_000;
/// Margin by which sets are shrunk when looking for a common interior point.
pub const INTERIOR_MARGIN: f64 = 1e-6;
/// Accuracy to which the returned point lies in every set.
const FEASIBILITY_TOL: f64 = 1e-12;
const SUBGRADIENT_MAX_ITERS: usize = 1_000_000;
const SUBGRADIENT_WINDOW: usize = 1000;
const ADMM_MAX_ITERS: usize = 200_000;
const FISTA_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Accelerated proximal gradient on the summed objective over a box.
    BoxFista,
    /// Projected subgradient warm start, consensus ADMM polish.
    SubgradientAdmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub method: OracleMethod,
    /// Final fixed-point residual of the method; small means converged.
    pub achieved_tolerance: f64,
}

impl OracleSolution {
    pub fn x_star(&self) -> Vector {
        Vector::from_column_slice(&self.x_star)
    }
}

/// Cyclic projections onto each set until a full cycle moves the point by less
/// than `tol` and the point is within `tol` of every set.
pub fn intersection_project(sets: &[ConvexSet], x: &Vector, tol: f64) -> Result<Vector> {
    check_dims(sets, x.len())?;
    let mut y = x.clone();
    for _ in 0..MAX_PROJECTION_CYCLES {
        let start = y.clone();
        for s in sets {
            y = s.project(&y);
        }
        if (&y - &start).norm() < tol && sets.iter().all(|s| s.normal_residual(&y) <= tol) {
            return Ok(y);
        }
    }
    Err(Error::Infeasible(format!(
        "alternating projections did not settle within {MAX_PROJECTION_CYCLES} cycles"
    )))
}

/// A point of `∩ int(Ω_i)`: the intersection of the sets shrunk by
/// [`INTERIOR_MARGIN`].
pub fn interior_point(sets: &[ConvexSet]) -> Result<Vector> {
    let dim = sets.first().map(ConvexSet::dim).ok_or_else(|| Error::Config("no sets given".into()))?;
    let shrunk: Option<Vec<ConvexSet>> = sets.iter().map(|s| s.shrunk(INTERIOR_MARGIN)).collect();
    let shrunk = shrunk.ok_or_else(|| Error::Infeasible("a set has empty interior".into()))?;
    intersection_project(&shrunk, &Vector::zeros(dim), FEASIBILITY_TOL)
        .map_err(|_| Error::Infeasible("the sets have no common interior point".into()))
}

pub fn solve_centralized(objectives: &[Objective], sets: &[ConvexSet], tol: f64) -> Result<OracleSolution> {
    solve_centralized_from(objectives, sets, tol, None)
}

/// As [`solve_centralized`], starting from the projection of `start` onto the
/// intersection instead of a common interior point.
pub fn solve_centralized_from(
    objectives: &[Objective],
    sets: &[ConvexSet],
    tol: f64,
    start: Option<&Vector>,
) -> Result<OracleSolution> {
    if objectives.is_empty() || objectives.len() != sets.len() {
        return Err(Error::Config(format!(
            "{} objectives and {} sets given",
            objectives.len(),
            sets.len()
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!("oracle tolerance must be positive, got {tol}")));
    }
    let dim = objectives[0].dim();
    check_dims(sets, dim)?;
    if let Some(i) = objectives.iter().position(|o| o.dim() != dim) {
        return Err(Error::Config(format!("objective {i} has dimension {}, expected {dim}", objectives[i].dim())));
    }
    let interior = interior_point(sets)?;
    let start = match start {
        Some(x) if x.len() == dim => intersection_project(sets, x, FEASIBILITY_TOL)?,
        Some(x) => return Err(Error::Config(format!("start has dimension {}, expected {dim}", x.len()))),
        None => interior,
    };

    let (x, method, achieved) = match box_quadratic(objectives, sets) {
        Some((p, q, r, lower, upper)) => {
            let (x, achieved) = fista_box(&p, &q, r, &lower, &upper, &start, tol);
            (x, OracleMethod::BoxFista, achieved)
        }
        None => {
            let warm = projected_subgradient(objectives, sets, &start, tol)?;
            let (x, achieved) = consensus_admm(objectives, sets, &warm, tol)?;
            (x, OracleMethod::SubgradientAdmm, achieved)
        }
    };
    let x = intersection_project(sets, &x, FEASIBILITY_TOL)?;
    let f_star = objectives.iter().map(|f| f.value(&x)).sum();
    Ok(OracleSolution { x_star: x.iter().copied().collect(), f_star, method, achieved_tolerance: achieved })
}

fn check_dims(sets: &[ConvexSet], dim: usize) -> Result<()> {
    match sets.iter().position(|s| s.dim() != dim) {
        Some(i) => Err(Error::Config(format!("set {i} has dimension {}, expected {dim}", sets[i].dim()))),
        None => Ok(()),
    }
}

type BoxQuadratic = (Matrix, Vector, f64, Vector, Vector);

/// Summed data `(ΣP, Σq, Σr, l, u)` when every objective is quadratic and
/// every set a box.
fn box_quadratic(objectives: &[Objective], sets: &[ConvexSet]) -> Option<BoxQuadratic> {
    let m = objectives[0].dim();
    let mut p = Matrix::zeros(m, m);
    let mut q = Vector::zeros(m);
    let mut r = 0.0;
    for obj in objectives {
        let Objective::QuadL1(o) = obj else { return None };
        p += o.p();
        q += o.q();
        r += o.r();
    }
    let mut lower = Vector::from_element(m, f64::NEG_INFINITY);
    let mut upper = Vector::from_element(m, f64::INFINITY);
    for set in sets {
        let ConvexSet::Box(b) = set else { return None };
        lower = lower.zip_map(b.lower(), f64::max);
        upper = upper.zip_map(b.upper(), f64::min);
    }
    Some((p, q, r, lower, upper))
}

fn fista_box(p: &Matrix, q: &Vector, r: f64, lower: &Vector, upper: &Vector, start: &Vector, tol: f64) -> (Vector, f64) {
    let eig = p.clone().symmetric_eigenvalues();
    let lip = eig.max();
    let mu = eig.min().max(0.0);
    let step = 1.0 / lip;
    let momentum = if mu > 0.0 { (lip.sqrt() - mu.sqrt()) / (lip.sqrt() + mu.sqrt()) } else { 0.0 };
    let prox = |z: &Vector| -> Vector {
        Vector::from_iterator(
            z.len(),
            (0..z.len()).map(|k| crate::prox::soft_threshold(z[k], step * r).clamp(lower[k], upper[k])),
        )
    };
    let mut x = start.clone();
    let mut y = x.clone();
    let mut moved = f64::INFINITY;
    let stop = (tol * 1e-6).max(1e-15);
    for _ in 0..FISTA_MAX_ITERS {
        let next = prox(&(&y - (p * &y + q) * step));
        moved = (&next - &x).norm();
        y = &next + (&next - &x) * momentum;
        x = next;
        if moved <= stop * (1.0 + x.norm()) {
            break;
        }
    }
    (x, moved / step)
}

fn total_value(objectives: &[Objective], x: &Vector) -> f64 {
    objectives.iter().map(|f| f.value(x)).sum()
}

/// Diminishing-step projected subgradient descent, returning the best iterate.
/// Stops once the best value improves by less than `tol` over a window of
/// iterations.
fn projected_subgradient(objectives: &[Objective], sets: &[ConvexSet], start: &Vector, tol: f64) -> Result<Vector> {
    let diameter = sets.iter().map(|s| 2.0 * s.max_norm()).fold(f64::INFINITY, f64::min);
    let mut x = start.clone();
    let mut best = x.clone();
    let mut best_value = total_value(objectives, &x);
    let mut window_value = best_value;
    for k in 1..=SUBGRADIENT_MAX_ITERS {
        let g: Vector = objectives.iter().map(|f| f.subgradient(&x)).fold(Vector::zeros(x.len()), |a, b| a + b);
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        let step = diameter / (gn * (k as f64).sqrt());
        x = intersection_project(sets, &(&x - g * step), FEASIBILITY_TOL)?;
        let value = total_value(objectives, &x);
        if value < best_value {
            best_value = value;
            best.clone_from(&x);
        }
        if k % SUBGRADIENT_WINDOW == 0 {
            if window_value - best_value < tol {
                break;
            }
            window_value = best_value;
        }
    }
    Ok(best)
}

/// `argmin_{x ∈ Ω} f(x) + (ρ/2)‖x − v‖²`.
fn block_prox(f: &Objective, set: &ConvexSet, v: &Vector, rho: f64) -> Vector {
    match f {
        Objective::L1Linear(o) => prox_shifted_l1(set, &(v - o.b() / rho), o.a(), 1.0 / rho),
        Objective::QuadL1(o) => {
            let lip = f.smooth_lipschitz() + rho;
            let mu = f.strong_convexity_modulus() + rho;
            let step = 1.0 / lip;
            let momentum = (lip.sqrt() - mu.sqrt()) / (lip.sqrt() + mu.sqrt());
            let zero = Vector::zeros(v.len());
            let mut x = set.project(v);
            let mut y = x.clone();
            for _ in 0..100_000 {
                let grad = o.p() * &y + o.q() + (&y - v) * rho;
                let next = prox_shifted_l1(set, &(&y - grad * step), &zero, step * o.r());
                let moved = (&next - &x).norm();
                y = &next + (&next - &x) * momentum;
                x = next;
                if moved <= 1e-15 * (1.0 + x.norm()) {
                    break;
                }
            }
            x
        }
    }
}

/// Consensus ADMM on `Σ_i (f_i + ι_{Ω_i})(x_i)` subject to `x_i = z`. Returns
/// `z` and the final max of primal and dual residuals.
fn consensus_admm(objectives: &[Objective], sets: &[ConvexSet], start: &Vector, tol: f64) -> Result<(Vector, f64)> {
    let n = objectives.len();
    let rho = 1.0;
    let target = (tol * 1e-3).max(1e-13);
    let mut z = start.clone();
    let mut u = vec![Vector::zeros(z.len()); n];
    let mut xs = vec![z.clone(); n];
    let mut residual = f64::INFINITY;
    for _ in 0..ADMM_MAX_ITERS {
        for i in 0..n {
            xs[i] = block_prox(&objectives[i], &sets[i], &(&z - &u[i]), rho);
        }
        let mut z_next = Vector::zeros(z.len());
        for (x, ui) in xs.iter().zip(&u) {
            z_next += x + ui;
        }
        z_next /= n as f64;
        let mut primal = 0.0;
        for (x, ui) in xs.iter().zip(u.iter_mut()) {
            let gap = x - &z_next;
            primal += gap.norm_squared();
            *ui += gap;
        }
        let dual = rho * (n as f64).sqrt() * (&z_next - &z).norm();
        z = z_next;
        residual = primal.sqrt().max(dual);
        if !residual.is_finite() {
            return Err(Error::Numerical { step: 0, message: "oracle ADMM diverged".into() });
        }
        if residual <= target {
            break;
        }
    }
    Ok((z, residual))
}
