//! Small fixed-size vector and unit quaternion types used throughout the crate.
//!
//! Planar quantities live in the `z = 0` plane of [`Vec3`] so that distance and
//! angle computations are shared between the 2-D and 3-D environments.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Norm deviation from one treated as already normalized.
const UNIT_SLACK: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn planar(x: f64, y: f64) -> Self {
        Vec3 { x, y, z: 0.0 }
    }

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * rhs.z - self.z * rhs.y,
            y: self.z * rhs.x - self.x * rhs.z,
            z: self.x * rhs.y - self.y * rhs.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if (n - 1.0).abs() <= UNIT_SLACK {
            // already unit; keeps normalization idempotent bit for bit
            Some(self)
        } else if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn lerp(self, rhs: Vec3, t: f64) -> Vec3 {
        self + (rhs - self) * t
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_slice(values: &[f64]) -> Option<Vec3> {
        match *values {
            [x, y] => Some(Vec3::planar(x, y)),
            [x, y, z] => Some(Vec3::new(x, y, z)),
            _ => None,
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, scalar first. Constructors normalize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a unit quaternion from raw components; `None` if the norm is zero
    /// or not finite.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Option<Quat> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if (n - 1.0).abs() <= UNIT_SLACK {
            Some(Quat { w, x, y, z })
        } else if n > 0.0 && n.is_finite() {
            Some(Quat {
                w: w / n,
                x: x / n,
                y: y / n,
                z: z / n,
            })
        } else {
            None
        }
    }

    /// Rotation of `angle` radians about a unit `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let (s, c) = (0.5 * angle).sin_cos();
        Quat {
            w: c,
            x: axis.x * s,
            y: axis.y * s,
            z: axis.z * s,
        }
    }

    /// Removes accumulated rounding drift from the norm.
    pub fn renormalized(self) -> Quat {
        Quat::new(self.w, self.x, self.y, self.z).unwrap_or(Quat::IDENTITY)
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, rhs: &Quat) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn conjugate(&self) -> Quat {
        Quat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u x v) + 2 u x (u x v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Normalized linear interpolation along the shorter arc.
    pub fn nlerp(&self, rhs: &Quat, t: f64) -> Quat {
        let sign = if self.dot(rhs) < 0.0 { -1.0 } else { 1.0 };
        Quat::new(
            self.w + (sign * rhs.w - self.w) * t,
            self.x + (sign * rhs.x - self.x) * t,
            self.y + (sign * rhs.y - self.y) * t,
            self.z + (sign * rhs.z - self.z) * t,
        )
        .unwrap_or(*self)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, rhs: Quat) -> Quat {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        let (e, f, g, h) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Quat {
            w: a * e - b * f - c * g - d * h,
            x: a * f + b * e + c * h - d * g,
            y: a * g - b * h + c * e + d * f,
            z: a * h + b * g - c * f + d * e,
        }
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        Quat {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl TryFrom<[f64; 4]> for Quat {
    type Error = String;
    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        Quat::new(c[0], c[1], c[2], c[3]).ok_or_else(|| format!("degenerate quaternion {c:?}"))
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        q.components()
    }
}
