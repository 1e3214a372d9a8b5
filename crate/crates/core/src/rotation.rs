//! Paired eigenvector rotation.
//!
//! A low-deviation eigenvector `q1` and a high-deviation companion `q2` are
//! rotated in their shared plane,
//!
//! ```text
//! q1' =  cos(t) q1 + sin(t) q2
//! q2' = -sin(t) q1 + cos(t) q2
//! ```
//!
//! with the smallest angle `t` that lifts `(1'q1')^2` to the threshold. The
//! rotation keeps the full eigenvector matrix orthonormal, conserves the
//! pair's total deviation, and maps the pair's quadratic forms to convex
//! combinations of each other with weight `cos^2 t`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed in `T(q1) + T(q2) >= 2 delta`. At `delta = 1` the final
/// pair sums to exactly `2 delta` in exact arithmetic.
pub const PAIR_FEASIBILITY_TOL: f64 = 1e-9;

/// Angles whose magnitudes differ by less than this are treated as a tie.
pub const ANGLE_TIE_TOL: f64 = 1e-12;

const ORTHONORMAL_TOL: f64 = 1e-8;

/// One application of the pair rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationStep {
    pub index_low: usize,
    pub index_high: usize,
    pub s1: f64,
    pub s2: f64,
    pub theta: f64,
    pub gamma: f64,
    pub t_before: [f64; 2],
    pub t_after: [f64; 2],
    pub lambda_before: [f64; 2],
    pub lambda_after: [f64; 2],
}

fn wrap_half_turn(theta: f64) -> f64 {
    let wrapped = theta - PI * (theta / PI).round();
    wrapped.clamp(-PI / 2.0, PI / 2.0)
}

/// Both solutions in `[-pi/2, pi/2]` of `(s1 cos t + s2 sin t)^2 = delta`.
///
/// Writing `s1 cos t + s2 sin t = r cos(t - phi)` with `phi = atan2(s2, s1)`
/// gives `cos(2(t - phi)) = 2 delta / r^2 - 1`, so the roots are
/// `phi +- acos(.)/2` modulo `pi`. This avoids the `s2^2 = delta` pole of the
/// tangent form.
pub fn solve_rotation_angles(s1: f64, s2: f64, delta: f64) -> Result<(f64, f64)> {
    if !(s1.is_finite() && s2.is_finite() && delta.is_finite()) {
        return Err(Error::RotationPrecondition("non-finite input".into()));
    }
    if delta < 0.0 {
        return Err(Error::RotationPrecondition(format!("delta = {delta} < 0")));
    }
    let r2 = s1 * s1 + s2 * s2;
    if r2 == 0.0 || delta > r2 * (1.0 + 1e-12) {
        return Err(Error::RotationPrecondition(format!(
            "delta = {delta} exceeds s1^2 + s2^2 = {r2}"
        )));
    }
    let phi = s2.atan2(s1);
    let half = ((2.0 * delta / r2 - 1.0).clamp(-1.0, 1.0)).acos() / 2.0;
    Ok((wrap_half_turn(phi + half), wrap_half_turn(phi - half)))
}

/// The angle of smaller magnitude; ties go to the positive angle.
pub fn select_angle(theta_a: f64, theta_b: f64) -> f64 {
    let (ma, mb) = (theta_a.abs(), theta_b.abs());
    if ma < mb - ANGLE_TIE_TOL {
        theta_a
    } else if mb < ma - ANGLE_TIE_TOL {
        theta_b
    } else {
        theta_a.max(theta_b)
    }
}

/// Rotates `(q1, q2)` by `theta` in their shared plane.
pub fn apply_rotation(
    q1: &DVector<f64>,
    q2: &DVector<f64>,
    theta: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if q1.len() != q2.len() {
        return Err(Error::LengthMismatch {
            left: q1.len(),
            right: q2.len(),
        });
    }
    let deviation = (q1.norm() - 1.0)
        .abs()
        .max((q2.norm() - 1.0).abs())
        .max(q1.dot(q2).abs());
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    let (sin, cos) = theta.sin_cos();
    Ok((q1 * cos + q2 * sin, q2 * cos - q1 * sin))
}

/// Lifts the deviation degree of `q1` to `delta` by rotating it against
/// `q2`. `lambda1`/`lambda2` are the current quadratic forms `q'Rq` of the
/// pair; their images under the rotation are recorded in the step.
pub fn per(
    q1: &DVector<f64>,
    q2: &DVector<f64>,
    delta: f64,
    lambdas: (f64, f64),
    indices: (usize, usize),
) -> Result<(DVector<f64>, DVector<f64>, RotationStep)> {
    let (s1, s2) = (q1.sum(), q2.sum());
    let (t1, t2) = (s1 * s1, s2 * s2);
    let (lambda1, lambda2) = lambdas;
    let identity = || RotationStep {
        index_low: indices.0,
        index_high: indices.1,
        s1,
        s2,
        theta: 0.0,
        gamma: 1.0,
        t_before: [t1, t2],
        t_after: [t1, t2],
        lambda_before: [lambda1, lambda2],
        lambda_after: [lambda1, lambda2],
    };
    if t1 == delta {
        return Ok((q1.clone(), q2.clone(), identity()));
    }
    if t1 > delta {
        return Err(Error::RotationPrecondition(format!(
            "T(q1) = {t1} is not below delta = {delta}"
        )));
    }
    if t2 <= delta {
        return Err(Error::RotationPrecondition(format!(
            "T(q2) = {t2} is not above delta = {delta}"
        )));
    }
    if t1 + t2 < 2.0 * delta - PAIR_FEASIBILITY_TOL {
        return Err(Error::RotationPrecondition(format!(
            "T(q1) + T(q2) = {} is below 2 delta = {}",
            t1 + t2,
            2.0 * delta
        )));
    }
    let (a, b) = solve_rotation_angles(s1, s2, delta)?;
    let theta = select_angle(a, b);
    let (r1, r2) = apply_rotation(q1, q2, theta)?;
    let gamma = theta.cos().powi(2);
    let (u1, u2) = (r1.sum(), r2.sum());
    let step = RotationStep {
        theta,
        gamma,
        t_after: [u1 * u1, u2 * u2],
        lambda_after: [
            gamma * lambda1 + (1.0 - gamma) * lambda2,
            (1.0 - gamma) * lambda1 + gamma * lambda2,
        ],
        ..identity()
    };
    Ok((r1, r2, step))
}
