//! Minimum-volume enclosing ellipses in the plane.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semi-axis given to degenerate (point or collinear) inputs, km.
pub const MIN_SEMI_AXIS_KM: f64 = 1.0;

pub const DEFAULT_MVE_TOLERANCE: f64 = 1e-4;

const MAX_ITERATIONS: usize = 200_000;

/// `{x : (x − center)ᵀ shape (x − center) ≤ 1}` with `shape` symmetric
/// positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub shape: [[f64; 2]; 2],
}

impl Ellipse {
    pub fn new(center: [f64; 2], shape: [[f64; 2]; 2]) -> Result<Self> {
        let e = Ellipse { center, shape };
        let sym = (shape[0][1] - shape[1][0]).abs() <= 1e-12 * shape[0][1].abs().max(1e-300);
        let det = e.det();
        if !sym || !(shape[0][0] > 0.0) || !(det > 0.0) || !det.is_finite() {
            return Err(Error::Domain(format!("shape matrix {shape:?} is not positive definite")));
        }
        Ok(e)
    }

    /// Ellipse with semi-axes `a` (along `angle`) and `b`.
    pub fn from_axes(center: [f64; 2], a: f64, b: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let (ia, ib) = (1.0 / (a * a), 1.0 / (b * b));
        Ellipse {
            center,
            shape: [
                [c * c * ia + s * s * ib, c * s * (ia - ib)],
                [c * s * (ia - ib), s * s * ia + c * c * ib],
            ],
        }
    }

    pub fn circle(center: [f64; 2], r: f64) -> Self {
        Self::from_axes(center, r, r, 0.0)
    }

    fn det(&self) -> f64 {
        self.shape[0][0] * self.shape[1][1] - self.shape[0][1] * self.shape[1][0]
    }

    pub fn quad_form(&self, p: [f64; 2]) -> f64 {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let m = &self.shape;
        dx * (m[0][0] * dx + m[0][1] * dy) + dy * (m[1][0] * dx + m[1][1] * dy)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.quad_form(p) <= 1.0
    }

    pub fn area(&self) -> f64 {
        PI / self.det().sqrt()
    }

    /// Semi-axis lengths, major first.
    pub fn semi_axes(&self) -> (f64, f64) {
        let m = Matrix2::new(self.shape[0][0], self.shape[0][1], self.shape[1][0], self.shape[1][1]);
        let ev = m.symmetric_eigenvalues();
        let (lo, hi) = (ev[0].min(ev[1]), ev[0].max(ev[1]));
        (1.0 / lo.sqrt(), 1.0 / hi.sqrt())
    }

    /// Half-widths of the axis-aligned bounding box.
    pub fn half_extents(&self) -> [f64; 2] {
        let det = self.det();
        [(self.shape[1][1] / det).sqrt(), (self.shape[0][0] / det).sqrt()]
    }

    fn scaled(mut self, factor: f64) -> Self {
        for row in &mut self.shape {
            for v in row {
                *v *= factor;
            }
        }
        self
    }
}

/// Minimum-area ellipse enclosing `points`, with the default padding for
/// degenerate inputs.
pub fn min_volume_ellipse(points: &[[f64; 2]], tolerance: f64) -> Result<Ellipse> {
    min_volume_ellipse_padded(points, tolerance, MIN_SEMI_AXIS_KM)
}

/// Khachiyan's algorithm with Todd–Yıldırım away steps on the lifted
/// points `(x, y, 1)`.
///
/// Iterates until every lifted point satisfies `qᵀX⁻¹q ≤ (1 + tol)·3`, then
/// rescales the result so that every input point lies inside. A single
/// point, or collinear points, get an ellipse with minor semi-axis `pad`.
pub fn min_volume_ellipse_padded(points: &[[f64; 2]], tolerance: f64, pad: f64) -> Result<Ellipse> {
    if points.is_empty() {
        return Err(Error::Domain("cannot enclose an empty point set".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite point".into()));
    }
    if let Some(e) = degenerate_ellipse(points, pad) {
        return Ok(e);
    }

    // shift to the centroid for conditioning
    let n = points.len();
    let mean = points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    let mean = [mean[0] / n as f64, mean[1] / n as f64];
    let lifted: Vec<Vector3<f64>> = points
        .iter()
        .map(|p| Vector3::new(p[0] - mean[0], p[1] - mean[1], 1.0))
        .collect();

    const D1: f64 = 3.0;
    let mut u = vec![1.0 / n as f64; n];
    let mut scores = vec![0.0; n];
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let x: Matrix3<f64> = lifted
            .iter()
            .zip(&u)
            .fold(Matrix3::zeros(), |acc, (q, &w)| acc + w * q * q.transpose());
        let Some(x_inv) = x.try_inverse() else {
            return Err(Error::Internal("singular dispersion matrix in MVE iteration".into()));
        };
        for (s, q) in scores.iter_mut().zip(&lifted) {
            *s = q.dot(&(x_inv * q));
        }
        let (j_max, &s_max) = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if s_max <= (1.0 + tolerance) * D1 {
            converged = true;
            break;
        }
        let (j_min, &s_min) = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| u[*i] > 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("support non-empty");

        let (j, step) = if s_max - D1 >= D1 - s_min || u[j_min] >= 1.0 {
            (j_max, (s_max - D1) / (D1 * (s_max - 1.0)))
        } else {
            let full = (s_min - D1) / (D1 * (s_min - 1.0));
            let limit = -u[j_min] / (1.0 - u[j_min]);
            (j_min, full.max(limit))
        };
        for w in &mut u {
            *w *= 1.0 - step;
        }
        u[j] += step;
        if u[j] < 0.0 {
            u[j] = 0.0;
        }
    }
    if !converged {
        log::warn!("MVE iteration hit the {MAX_ITERATIONS}-step cap; result rescaled to enclose all points");
    }

    let c = lifted
        .iter()
        .zip(&u)
        .fold(Vector2::zeros(), |acc, (q, &w)| acc + w * Vector2::new(q[0], q[1]));
    let scatter = lifted.iter().zip(&u).fold(Matrix2::zeros(), |acc, (q, &w)| {
        let p = Vector2::new(q[0], q[1]);
        acc + w * p * p.transpose()
    }) - c * c.transpose();
    let Some(inv) = (scatter * 2.0).try_inverse() else {
        return Err(Error::Internal("singular MVE scatter matrix".into()));
    };
    let sym = 0.5 * (inv[(0, 1)] + inv[(1, 0)]);
    let ellipse = Ellipse {
        center: [c[0] + mean[0], c[1] + mean[1]],
        shape: [[inv[(0, 0)], sym], [sym, inv[(1, 1)]]],
    };

    let worst = points
        .iter()
        .map(|p| ellipse.quad_form(*p))
        .fold(0.0f64, f64::max);
    let ellipse = if worst > 1.0 { ellipse.scaled(1.0 / worst) } else { ellipse };
    if ellipse.det() <= 0.0 || !ellipse.det().is_finite() {
        return Err(Error::Internal(format!("MVE produced invalid shape {:?}", ellipse.shape)));
    }
    Ok(ellipse)
}

/// Capsule-like ellipse for point sets with no 2-D extent.
fn degenerate_ellipse(points: &[[f64; 2]], pad: f64) -> Option<Ellipse> {
    let p0 = points[0];
    let (far, far_d) = points
        .iter()
        .map(|p| (*p, (p[0] - p0[0]).hypot(p[1] - p0[1])))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let scale = points
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    if far_d <= 1e-12 * scale {
        return Some(Ellipse::circle(p0, pad));
    }
    let dir = [(far[0] - p0[0]) / far_d, (far[1] - p0[1]) / far_d];
    let off_line = points
        .iter()
        .map(|p| ((p[0] - p0[0]) * dir[1] - (p[1] - p0[1]) * dir[0]).abs())
        .fold(0.0f64, f64::max);
    if off_line > 1e-9 * far_d.max(1e-300) {
        return None;
    }
    let along: Vec<f64> = points
        .iter()
        .map(|p| (p[0] - p0[0]) * dir[0] + (p[1] - p0[1]) * dir[1])
        .collect();
    let lo = along.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = along.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let center = [p0[0] + mid * dir[0], p0[1] + mid * dir[1]];
    let half = (0.5 * (hi - lo)).max(pad);
    Some(Ellipse::from_axes(center, half, pad, dir[1].atan2(dir[0])))
}
