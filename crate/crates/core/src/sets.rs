//! Compact convex constraint sets: boxes and Euclidean balls.
//!
//! Every set supports the exact Euclidean projection, the projection of a
//! velocity onto the tangent cone at a feasible point, and an infeasibility
//! measure. Points closer than [`ACTIVE_TOL`] to a face count as on the face.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

/// Absolute tolerance used to decide whether a constraint is active.
pub const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vector,
    upper: Vector,
}

impl BoxSet {
    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallSet {
    center: Vector,
    radius: f64,
}

impl BallSet {
    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// A compact convex set with nonempty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetSpec", into = "SetSpec")]
pub enum ConvexSet {
    Box(BoxSet),
    Ball(BallSet),
}

/// Activity of a single box coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceFlag {
    Lower,
    Upper,
    Inactive,
}

/// Which constraints are active at a feasible point.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveFace {
    Box(Vec<FaceFlag>),
    Ball {
        on_boundary: bool,
        /// Outward unit normal; zero when the point is interior.
        normal: Vector,
    },
}

impl ActiveFace {
    pub fn is_interior(&self) -> bool {
        match self {
            ActiveFace::Box(flags) => flags.iter().all(|f| *f == FaceFlag::Inactive),
            ActiveFace::Ball { on_boundary, .. } => !on_boundary,
        }
    }
}

/// Wire form of a set, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SetSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl TryFrom<SetSpec> for ConvexSet {
    type Error = Error;

    fn try_from(spec: SetSpec) -> Result<Self> {
        match spec {
            SetSpec::Box { lower, upper } => {
                ConvexSet::new_box(Vector::from_vec(lower), Vector::from_vec(upper))
            }
            SetSpec::Ball { center, radius } => ConvexSet::new_ball(Vector::from_vec(center), radius),
        }
    }
}

impl From<ConvexSet> for SetSpec {
    fn from(set: ConvexSet) -> Self {
        match set {
            ConvexSet::Box(b) => SetSpec::Box {
                lower: b.lower.as_slice().to_vec(),
                upper: b.upper.as_slice().to_vec(),
            },
            ConvexSet::Ball(b) => SetSpec::Ball {
                center: b.center.as_slice().to_vec(),
                radius: b.radius,
            },
        }
    }
}

impl ConvexSet {
    /// Box `lower <= x <= upper`. Every side must be longer than `2 * ACTIVE_TOL`
    /// so that no coordinate is ever active at both faces.
    pub fn new_box(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Config(format!(
                "box bounds have different lengths ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::Config("box has dimension zero".into()));
        }
        for (k, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("box coordinate {k} is unbounded")));
            }
            if hi - lo <= 2.0 * ACTIVE_TOL {
                return Err(Error::Config(format!(
                    "box coordinate {k} is empty or degenerate: [{lo}, {hi}]"
                )));
            }
        }
        Ok(ConvexSet::Box(BoxSet { lower, upper }))
    }

    pub fn new_ball(center: Vector, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Config("ball has dimension zero".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("ball center is not finite".into()));
        }
        Ok(ConvexSet::Ball(BallSet { center, radius }))
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box(b) => b.lower.len(),
            ConvexSet::Ball(b) => b.center.len(),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.check_dim(x);
        match self {
            ConvexSet::Box(b) => x
                .iter()
                .zip(b.lower.iter().zip(b.upper.iter()))
                .all(|(xk, (lo, hi))| *xk >= lo - tol && *xk <= hi + tol),
            ConvexSet::Ball(b) => (x - &b.center).norm() <= b.radius + tol,
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &Vector) -> Vector {
        self.check_dim(x);
        match self {
            ConvexSet::Box(b) => {
                Vector::from_iterator(x.len(), x.iter().enumerate().map(|(k, xk)| xk.clamp(b.lower[k], b.upper[k])))
            }
            ConvexSet::Ball(b) => {
                let mut offset = x - &b.center;
                if offset.iter().any(|o| !o.is_finite()) {
                    // nothing sensible to return; callers catch the non-finite state
                    return x.clone();
                }
                let mut dist = offset.norm();
                if dist <= b.radius {
                    x.clone()
                } else {
                    if !dist.is_finite() {
                        offset /= offset.amax();
                        dist = offset.norm();
                    }
                    // shrink past rounding so the result is an exact member
                    let mut scale = b.radius / dist;
                    loop {
                        let y = &b.center + &offset * scale;
                        if (&y - &b.center).norm() <= b.radius {
                            return y;
                        }
                        scale *= 1.0 - f64::EPSILON;
                    }
                }
            }
        }
    }

    /// Distance from `x` to the set; zero exactly when `x` is a member.
    pub fn normal_residual(&self, x: &Vector) -> f64 {
        (x - self.project(x)).norm()
    }

    pub fn active_face(&self, x: &Vector) -> Result<ActiveFace> {
        self.check_dim(x);
        if !self.contains(x, ACTIVE_TOL) {
            return Err(Error::Domain(format!(
                "point is outside the set by {:.3e}",
                self.normal_residual(x)
            )));
        }
        Ok(match self {
            ConvexSet::Box(b) => ActiveFace::Box(
                x.iter()
                    .enumerate()
                    .map(|(k, xk)| {
                        if *xk <= b.lower[k] + ACTIVE_TOL {
                            FaceFlag::Lower
                        } else if *xk >= b.upper[k] - ACTIVE_TOL {
                            FaceFlag::Upper
                        } else {
                            FaceFlag::Inactive
                        }
                    })
                    .collect(),
            ),
            ConvexSet::Ball(b) => {
                let offset = x - &b.center;
                let dist = offset.norm();
                if dist >= b.radius - ACTIVE_TOL {
                    ActiveFace::Ball { on_boundary: true, normal: offset / dist }
                } else {
                    ActiveFace::Ball { on_boundary: false, normal: Vector::zeros(x.len()) }
                }
            }
        })
    }

    /// Projection of the velocity `v` onto the tangent cone at the feasible point `x`.
    ///
    /// Boxes use the coordinate-wise rule, which is the exact projection onto the
    /// tangent cone even at corners. Balls remove the outward radial component.
    pub fn tangent_project(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        self.check_dim(v);
        let face = self.active_face(x)?;
        Ok(project_onto_tangent(&face, v))
    }

    /// Tangent projection computed as `v - max(0, <v, z>) z`, where `z` is the unit
    /// normal-cone vector maximizing `<v, z>`.
    ///
    /// For a box the maximizer keeps the outward components of `v` on the active
    /// coordinates. This agrees with [`ConvexSet::tangent_project`]; it exists as an
    /// independent route for tests.
    pub fn tangent_project_max_normal(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        self.check_dim(v);
        let face = self.active_face(x)?;
        let outward = match &face {
            ActiveFace::Box(flags) => Vector::from_iterator(
                v.len(),
                flags.iter().zip(v.iter()).map(|(flag, vk)| match flag {
                    FaceFlag::Upper => vk.max(0.0),
                    FaceFlag::Lower => vk.min(0.0),
                    FaceFlag::Inactive => 0.0,
                }),
            ),
            ActiveFace::Ball { on_boundary: true, normal } => normal.clone(),
            ActiveFace::Ball { on_boundary: false, .. } => return Ok(v.clone()),
        };
        let norm = outward.norm();
        if norm == 0.0 {
            return Ok(v.clone());
        }
        let z_star = outward / norm;
        let beta = v.dot(&z_star).max(0.0);
        Ok(v - z_star * beta)
    }

    /// Largest Euclidean norm of any point of the set.
    pub fn max_norm(&self) -> f64 {
        match self {
            ConvexSet::Box(b) => b
                .lower
                .iter()
                .zip(b.upper.iter())
                .map(|(lo, hi)| {
                    let r = lo.abs().max(hi.abs());
                    r * r
                })
                .sum::<f64>()
                .sqrt(),
            ConvexSet::Ball(b) => b.center.norm() + b.radius,
        }
    }

    /// The set pulled inward by `margin`, or `None` when nothing is left.
    pub fn shrunk(&self, margin: f64) -> Option<ConvexSet> {
        match self {
            ConvexSet::Box(b) => {
                let lower = b.lower.add_scalar(margin);
                let upper = b.upper.add_scalar(-margin);
                ConvexSet::new_box(lower, upper).ok()
            }
            ConvexSet::Ball(b) => ConvexSet::new_ball(b.center.clone(), b.radius - margin).ok(),
        }
    }

    /// A random member: uniform rejection sampling from the bounding box, falling
    /// back to projecting the last draw.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            ConvexSet::Box(b) => Vector::from_iterator(
                b.lower.len(),
                b.lower.iter().zip(b.upper.iter()).map(|(lo, hi)| rng.gen_range(*lo..*hi)),
            ),
            ConvexSet::Ball(b) => {
                let m = b.center.len();
                let mut draw = b.center.clone();
                for _ in 0..64 {
                    draw = Vector::from_iterator(
                        m,
                        b.center.iter().map(|c| c + rng.gen_range(-b.radius..b.radius)),
                    );
                    if (&draw - &b.center).norm() <= b.radius {
                        return draw;
                    }
                }
                self.project(&draw)
            }
        }
    }

    fn check_dim(&self, x: &Vector) {
        assert_eq!(x.len(), self.dim(), "vector dimension does not match the set");
    }
}

pub(crate) fn project_onto_tangent(face: &ActiveFace, v: &Vector) -> Vector {
    match face {
        ActiveFace::Box(flags) => Vector::from_iterator(
            v.len(),
            flags.iter().zip(v.iter()).map(|(flag, vk)| match flag {
                FaceFlag::Upper if *vk > 0.0 => 0.0,
                FaceFlag::Lower if *vk < 0.0 => 0.0,
                _ => *vk,
            }),
        ),
        ActiveFace::Ball { on_boundary: true, normal } => {
            let beta = v.dot(normal).max(0.0);
            v - normal * beta
        }
        ActiveFace::Ball { on_boundary: false, .. } => v.clone(),
    }
}
