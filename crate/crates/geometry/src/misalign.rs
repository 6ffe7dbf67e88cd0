//! Misalignment of the detected pupil against the fitted iris center:
//! Euclidean magnitude and quadrant-aware direction angle.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misalignment {
    /// Pixels.
    pub magnitude: f64,
    /// Degrees in (-180, 180]. Zero by convention when the magnitude is zero.
    pub angle: f64,
}

/// `magnitude = ||pupil - center||`, `angle = atan2(dy, dx)` in degrees.
/// atan2 rather than a plain arctangent so the quadrant is preserved.
pub fn compute_misalignment(pupil: (f64, f64), iris_center: (f64, f64)) -> Misalignment {
    let dx = pupil.0 - iris_center.0;
    let dy = pupil.1 - iris_center.1;
    let magnitude = (dx * dx + dy * dy).sqrt();
    if magnitude == 0.0 {
        return Misalignment {
            magnitude: 0.0,
            angle: 0.0,
        };
    }
    let mut angle = dy.atan2(dx).to_degrees();
    if angle <= -180.0 {
        angle += 360.0;
    }
    Misalignment { magnitude, angle }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five_triangle() {
        let m = compute_misalignment((3.0, 4.0), (0.0, 0.0));
        assert!((m.magnitude - 5.0).abs() < 1e-12);
        assert!((m.angle - 53.13010235415598).abs() < 1e-9);
    }

    #[test]
    fn diagonal_is_forty_five_degrees() {
        let m = compute_misalignment((1.0, 1.0), (0.0, 0.0));
        assert!((m.angle - 45.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pupil_at_center() {
        let m = compute_misalignment((2.5, -1.0), (2.5, -1.0));
        assert_eq!(m.magnitude, 0.0);
        assert_eq!(m.angle, 0.0);
    }

    #[test]
    fn angle_range_is_half_open() {
        // straight left: dy = 0, dx < 0 must give +180, not -180
        let m = compute_misalignment((-1.0, 0.0), (0.0, 0.0));
        assert!((m.angle - 180.0).abs() < 1e-9);
        let m = compute_misalignment((-1.0, -1e-300), (0.0, 0.0));
        assert!(m.angle > -180.0 && m.angle <= 180.0);
    }
}
