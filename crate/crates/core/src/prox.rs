//! Proximal map of a shifted, weighted l1 term restricted to a box or ball:
//!
//! `argmin_{x in set} ½‖x − z‖² + t‖x − s‖₁`
//!
//! Boxes are separable, so the answer is soft-thresholding followed by
//! clamping. For balls the constraint multiplier `μ` is found by bisection on
//! `‖x(μ) − c‖ = r`, where `x(μ)` is the closed-form minimizer of the
//! penalized problem without the constraint.

use crate::sets::ConvexSet;
use crate::Vector;

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) fn prox_shifted_l1(set: &ConvexSet, z: &Vector, shift: &Vector, t: f64) -> Vector {
    debug_assert!(t >= 0.0);
    match set {
        ConvexSet::Box(b) => Vector::from_iterator(
            z.len(),
            (0..z.len()).map(|k| {
                (shift[k] + soft_threshold(z[k] - shift[k], t)).clamp(b.lower()[k], b.upper()[k])
            }),
        ),
        ConvexSet::Ball(b) => {
            let c = b.center();
            let r = b.radius();
            let at = |mu: f64| -> Vector {
                let scale = 1.0 / (1.0 + mu);
                Vector::from_iterator(
                    z.len(),
                    (0..z.len()).map(|k| {
                        let target = (z[k] + mu * c[k]) * scale;
                        shift[k] + soft_threshold(target - shift[k], t * scale)
                    }),
                )
            };
            let free = at(0.0);
            if (&free - c).norm() <= r {
                return free;
            }
            let mut lo = 0.0;
            let mut hi = 1.0;
            while (at(hi) - c).norm() > r {
                lo = hi;
                hi *= 2.0;
                if hi > 1e300 {
                    break;
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (at(mid) - c).norm() > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            set.project(&at(hi))
        }
    }
}
