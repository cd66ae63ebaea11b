//! Angles in degrees on the circle.

use std::fmt;

/// An in-plane rotation angle in degrees, always wrapped into `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct AngleDeg(f64);

impl AngleDeg {
    pub const ZERO: AngleDeg = AngleDeg(0.0);

    /// Wraps `degrees` into `[-180, 180)`.
    pub fn new(degrees: f64) -> Self {
        AngleDeg(wrap_degrees(degrees))
    }

    #[inline]
    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// `(sin, cos)` with exact values at multiples of 90 degrees.
    pub fn sin_cos(self) -> (f64, f64) {
        let quarter = self.0 / 90.0;
        if quarter == quarter.round() {
            match (quarter as i64).rem_euclid(4) {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            }
        } else {
            self.radians().sin_cos()
        }
    }
}

impl From<f64> for AngleDeg {
    fn from(degrees: f64) -> Self {
        AngleDeg::new(degrees)
    }
}

impl std::ops::Neg for AngleDeg {
    type Output = AngleDeg;
    fn neg(self) -> AngleDeg {
        AngleDeg::new(-self.0)
    }
}

impl std::ops::Add for AngleDeg {
    type Output = AngleDeg;
    fn add(self, rhs: AngleDeg) -> AngleDeg {
        AngleDeg::new(self.0 + rhs.0)
    }
}

impl std::ops::Sub for AngleDeg {
    type Output = AngleDeg;
    fn sub(self, rhs: AngleDeg) -> AngleDeg {
        AngleDeg::new(self.0 - rhs.0)
    }
}

impl fmt::Display for AngleDeg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Wraps any finite angle into `[-180, 180)`.
pub fn wrap_degrees(degrees: f64) -> f64 {
    let w = (degrees + 180.0).rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 360.0 {
        -180.0
    } else {
        w - 180.0
    }
}

/// Shortest angular distance between two angles, in `[0, 180]`.
pub fn wrapped_distance(a: AngleDeg, b: AngleDeg) -> f64 {
    let d = (a.0 - b.0).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}
