//! Convex objective oracles.
//!
//! Both built-in families split into a smooth part and a weighted, shifted l1
//! part:
//!
//! - `L1Linear`: `f(x) = ‖x − a‖₁ + bᵀx`
//! - `QuadL1`:   `f(x) = ½xᵀPx + qᵀx + r‖x‖₁`
//!
//! The split is what the forward-backward integrator and the reference solver
//! work with; [`Objective::subgradient`] returns the usual single selection.

use serde::{Deserialize, Serialize};

use crate::sets::ConvexSet;
use crate::{Error, Matrix, Result, Vector};

/// Dead zone of the sign selection. Coordinates with `|u| <= SIGN_TOL` map to 0.
pub const SIGN_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct L1Linear {
    a: Vector,
    b: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadL1 {
    p: Matrix,
    q: Vector,
    r: f64,
    lambda_min: f64,
    spectral_norm: f64,
}

impl L1Linear {
    pub fn a(&self) -> &Vector {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }
}

impl QuadL1 {
    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn q(&self) -> &Vector {
        &self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObjectiveSpec", into = "ObjectiveSpec")]
pub enum Objective {
    L1Linear(L1Linear),
    QuadL1(QuadL1),
}

/// Wire form of an objective, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    L1Linear {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    QuadL1 {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
        r: f64,
    },
}

impl TryFrom<ObjectiveSpec> for Objective {
    type Error = Error;

    fn try_from(spec: ObjectiveSpec) -> Result<Self> {
        match spec {
            ObjectiveSpec::L1Linear { a, b } => Objective::l1_linear(Vector::from_vec(a), Vector::from_vec(b)),
            ObjectiveSpec::QuadL1 { p, q, r } => {
                let m = p.len();
                if p.iter().any(|row| row.len() != m) {
                    return Err(Error::Config("P must be a square matrix".into()));
                }
                let p = Matrix::from_fn(m, m, |i, j| p[i][j]);
                Objective::quad_l1(p, Vector::from_vec(q), r)
            }
        }
    }
}

impl From<Objective> for ObjectiveSpec {
    fn from(obj: Objective) -> Self {
        match obj {
            Objective::L1Linear(o) => ObjectiveSpec::L1Linear {
                a: o.a.as_slice().to_vec(),
                b: o.b.as_slice().to_vec(),
            },
            Objective::QuadL1(o) => ObjectiveSpec::QuadL1 {
                p: o.p.row_iter().map(|row| row.iter().copied().collect()).collect(),
                q: o.q.as_slice().to_vec(),
                r: o.r,
            },
        }
    }
}

/// Coordinate-wise selection from the set-valued sign: `±1` outside the dead
/// zone, `0` inside it.
pub fn sign_select(u: &Vector) -> Vector {
    u.map(sign_scalar)
}

pub(crate) fn sign_scalar(u: f64) -> f64 {
    if u > SIGN_TOL {
        1.0
    } else if u < -SIGN_TOL {
        -1.0
    } else {
        0.0
    }
}

impl Objective {
    pub fn l1_linear(a: Vector, b: Vector) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::Config(format!(
                "l1_linear needs a and b of the same positive length, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Config("l1_linear coefficients must be finite".into()));
        }
        Ok(Objective::L1Linear(L1Linear { a, b }))
    }

    pub fn quad_l1(p: Matrix, q: Vector, r: f64) -> Result<Self> {
        let m = q.len();
        if m == 0 || p.nrows() != m || p.ncols() != m {
            return Err(Error::Config(format!(
                "quad_l1 needs P of shape {m}x{m}, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if p.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Config("quad_l1 coefficients must be finite".into()));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::Config(format!("l1 weight r must be nonnegative, got {r}")));
        }
        let asym = (&p - p.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::Config(format!("P is not symmetric (max deviation {asym:.3e})")));
        }
        let sym = (&p + p.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let lambda_min = eig.min();
        if lambda_min <= 0.0 {
            return Err(Error::Config(format!(
                "P must be positive definite, smallest eigenvalue is {lambda_min:.3e}"
            )));
        }
        let spectral_norm = eig.amax();
        Ok(Objective::QuadL1(QuadL1 { p, q, r, lambda_min, spectral_norm }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::L1Linear(o) => o.a.len(),
            Objective::QuadL1(o) => o.q.len(),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let (shift, weight) = self.l1_term();
        self.smooth_value(x) + weight * (x - shift).abs().sum()
    }

    /// A subgradient at `x`; kinks select 0 in the l1 part.
    pub fn subgradient(&self, x: &Vector) -> Vector {
        let (shift, weight) = self.l1_term();
        self.smooth_gradient(x) + sign_select(&(x - shift)) * weight
    }

    /// Value of the differentiable part (`bᵀx` or `½xᵀPx + qᵀx`).
    pub fn smooth_value(&self, x: &Vector) -> f64 {
        match self {
            Objective::L1Linear(o) => o.b.dot(x),
            Objective::QuadL1(o) => 0.5 * x.dot(&(&o.p * x)) + o.q.dot(x),
        }
    }

    pub fn smooth_gradient(&self, x: &Vector) -> Vector {
        match self {
            Objective::L1Linear(o) => o.b.clone(),
            Objective::QuadL1(o) => &o.p * x + &o.q,
        }
    }

    /// Lipschitz constant of the smooth gradient.
    pub fn smooth_lipschitz(&self) -> f64 {
        match self {
            Objective::L1Linear(_) => 0.0,
            Objective::QuadL1(o) => o.spectral_norm,
        }
    }

    /// The nonsmooth part as `(shift, weight)` meaning `weight·‖x − shift‖₁`.
    pub fn l1_term(&self) -> (Vector, f64) {
        match self {
            Objective::L1Linear(o) => (o.a.clone(), 1.0),
            Objective::QuadL1(o) => (Vector::zeros(o.q.len()), o.r),
        }
    }

    /// A Lipschitz constant valid on `set`, in closed form.
    ///
    /// `√m + ‖b‖` for `L1Linear`; `‖P‖₂·R + ‖q‖ + r√m` for `QuadL1`, where `R`
    /// is the largest norm of a point of `set`.
    pub fn lipschitz_bound(&self, set: &ConvexSet) -> f64 {
        let sqrt_m = (self.dim() as f64).sqrt();
        match self {
            Objective::L1Linear(o) => sqrt_m + o.b.norm(),
            Objective::QuadL1(o) => o.spectral_norm * set.max_norm() + o.q.norm() + o.r * sqrt_m,
        }
    }

    /// Strong-convexity modulus: `λ_min(P)` for `QuadL1`, 0 for `L1Linear`.
    pub fn strong_convexity_modulus(&self) -> f64 {
        match self {
            Objective::L1Linear(_) => 0.0,
            Objective::QuadL1(o) => o.lambda_min,
        }
    }
}
