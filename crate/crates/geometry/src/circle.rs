//! Least-squares circle fitting: algebraic (Kåsa) initialization followed by
//! Gauss-Newton refinement of the geometric residual `||p - c|| - r`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub rms_residual: f64,
}

const MAX_ITERS: usize = 100;
const STEP_TOL: f64 = 1e-10;

/// Fit a circle to `points` minimizing the sum of squared geometric residuals.
pub fn fit_circle(points: &[(f64, f64)]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints { got: points.len() });
    }
    let (mut cx, mut cy, mut r) = kasa_init(points)?;

    for _ in 0..MAX_ITERS {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for &(x, y) in points {
            let dx = cx - x;
            let dy = cy - y;
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < 1e-12 {
                continue;
            }
            let res = dist - r;
            // d res / d(cx, cy, r)
            let j = Vector3::new(dx / dist, dy / dist, -1.0);
            jtj += j * j.transpose();
            jtr += j * res;
        }
        // tiny damping keeps near-degenerate systems solvable
        jtj += Matrix3::identity() * 1e-12;
        let step = match jtj.lu().solve(&(-jtr)) {
            Some(s) => s,
            None => break,
        };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        cx += step[0];
        cy += step[1];
        r += step[2];
        if step.norm() < STEP_TOL {
            break;
        }
    }

    if !(cx.is_finite() && cy.is_finite() && r.is_finite()) || r <= 0.0 {
        return Err(GeometryError::CollinearPoints);
    }

    let sse: f64 = points
        .iter()
        .map(|&(x, y)| {
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r;
            d * d
        })
        .sum();
    Ok(CircleFit {
        cx,
        cy,
        r,
        rms_residual: (sse / points.len() as f64).sqrt(),
    })
}

/// Algebraic fit on centroid-centered coordinates: minimize
/// `sum (u^2 + v^2 - 2 uc u - 2 vc v - rho)^2`. Singular exactly when the
/// centered scatter matrix is rank-deficient, i.e. the points are collinear
/// or coincident.
fn kasa_init(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;

    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    let (mut suuu, mut svvv, mut suvv, mut svuu) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let u = x - mx;
        let v = y - my;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }

    // rank test on the scatter matrix, relative to its own scale
    let det = suu * svv - suv * suv;
    let scale = 0.5 * (suu + svv);
    if !(det.is_finite() && scale > 0.0) || det <= 1e-12 * scale * scale {
        return Err(GeometryError::CollinearPoints);
    }

    let bu = 0.5 * (suuu + suvv);
    let bv = 0.5 * (svvv + svuu);
    let uc = (bu * svv - bv * suv) / det;
    let vc = (bv * suu - bu * suv) / det;
    let r2 = uc * uc + vc * vc + (suu + svv) / n;
    if !(r2.is_finite() && r2 > 0.0) {
        return Err(GeometryError::CollinearPoints);
    }
    Ok((uc + mx, vc + my, r2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_unit_circle() {
        let fit = fit_circle(&[(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]).unwrap();
        assert!(fit.cx.abs() < 1e-12);
        assert!(fit.cy.abs() < 1e-12);
        assert!((fit.r - 1.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn exact_translated_circle() {
        let fit = fit_circle(&[(8.0, 4.0), (3.0, 9.0), (-2.0, 4.0), (3.0, -1.0)]).unwrap();
        assert!((fit.cx - 3.0).abs() < 1e-12);
        assert!((fit.cy - 4.0).abs() < 1e-12);
        assert!((fit.r - 5.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            fit_circle(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(GeometryError::TooFewPoints { got: 2 })
        ));
    }

    #[test]
    fn collinear_points_rejected() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!(matches!(
            fit_circle(&pts),
            Err(GeometryError::CollinearPoints)
        ));
    }

    #[test]
    fn coincident_points_rejected() {
        let pts = vec![(2.0, 3.0); 5];
        assert!(matches!(
            fit_circle(&pts),
            Err(GeometryError::CollinearPoints)
        ));
    }
}
