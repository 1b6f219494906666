//! Forward kinematics for the planar and spatial 7-joint arms.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quat, Vec3};

/// Number of joints of every chain in this crate.
pub const DOF: usize = 7;

/// Joint angles in radians.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub [f64; DOF]);

impl JointConfig {
    pub const ZERO: JointConfig = JointConfig([0.0; DOF]);

    pub fn splat(value: f64) -> Self {
        JointConfig([value; DOF])
    }

    pub fn as_array(&self) -> &[f64; DOF] {
        &self.0
    }

    /// Euclidean joint-space distance.
    pub fn distance(&self, other: &JointConfig) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Sum of absolute joint differences.
    pub fn l1_distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Componentwise `a + t (b - a)`. For `t` in `[0, 1]` every component
    /// stays between its endpoints despite rounding, so interpolating between
    /// in-limit configurations never leaves the limits.
    pub fn lerp(&self, other: &JointConfig, t: f64) -> JointConfig {
        let mut out = [0.0; DOF];
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.0[i], other.0[i]);
            let v = a + t * (b - a);
            *o = if (0.0..=1.0).contains(&t) { v.clamp(a.min(b), a.max(b)) } else { v };
        }
        JointConfig(out)
    }

    /// Bit pattern, usable as an exact hash key.
    pub fn bits(&self) -> [u64; DOF] {
        self.0.map(f64::to_bits)
    }
}

impl Index<usize> for JointConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for JointConfig {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl fmt::Debug for JointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// End-effector position plus optional orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskPose {
    pub position: Vec3,
    pub orientation: Option<Quat>,
}

impl TaskPose {
    pub fn at(position: Vec3) -> Self {
        TaskPose {
            position,
            orientation: None,
        }
    }

    pub fn without_orientation(self) -> Self {
        TaskPose {
            orientation: None,
            ..self
        }
    }
}

/// Normalized geodesic distance between two rotations, in `[0, 1]`.
///
/// `q` and `-q` describe the same rotation and are at distance zero.
pub fn quat_geodesic(q1: &Quat, q2: &Quat) -> f64 {
    // acos|q1·q2| = 2 asin(|q1 - s q2| / 2) with s = sign(q1·q2); exact at 0
    let s = if q1.dot(q2) < 0.0 { -1.0 } else { 1.0 };
    let (a, b) = (q1.components(), q2.components());
    let chord = (0..4).map(|i| (a[i] - s * b[i]).powi(2)).sum::<f64>().sqrt();
    FRAC_2_PI * 2.0 * (0.5 * chord).min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Planar,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::new(1.0, 0.0, 0.0),
            Axis::Y => Vec3::new(0.0, 1.0, 0.0),
            Axis::Z => Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

/// One revolute joint followed by a fixed translation expressed in the
/// joint's rotated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub axis: Axis,
    pub offset: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("chain must have exactly {DOF} links, got {0}")]
    WrongLinkCount(usize),
    #[error("link {0}: offset must be finite and the chain must have positive reach")]
    BadOffset(usize),
    #[error("link {0}: planar links rotate about z and extend along x with positive length")]
    NotPlanar(usize),
    #[error("link {0}: joint limits must satisfy lo <= hi")]
    BadLimits(usize),
}

#[derive(Serialize, Deserialize)]
struct RawChain {
    kind: ChainKind,
    links: Vec<Link>,
}

/// A validated 7-joint serial chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain", into = "RawChain")]
pub struct KinematicChain {
    kind: ChainKind,
    links: [Link; DOF],
    /// `reach_from[j]`: summed offset lengths from joint `j` to the tip.
    reach_from: [f64; DOF],
}

impl TryFrom<RawChain> for KinematicChain {
    type Error = ChainError;
    fn try_from(raw: RawChain) -> Result<Self, ChainError> {
        KinematicChain::new(raw.kind, raw.links)
    }
}

impl From<KinematicChain> for RawChain {
    fn from(c: KinematicChain) -> Self {
        RawChain {
            kind: c.kind,
            links: c.links.to_vec(),
        }
    }
}

impl KinematicChain {
    pub fn new(kind: ChainKind, links: Vec<Link>) -> Result<Self, ChainError> {
        let links: [Link; DOF] = links
            .try_into()
            .map_err(|v: Vec<Link>| ChainError::WrongLinkCount(v.len()))?;
        for (i, link) in links.iter().enumerate() {
            if link.offset.iter().any(|v| !v.is_finite()) {
                return Err(ChainError::BadOffset(i));
            }
            let [lo, hi] = link.limits;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ChainError::BadLimits(i));
            }
            if kind == ChainKind::Planar
                && (link.axis != Axis::Z
                    || link.offset[0] <= 0.0
                    || link.offset[1] != 0.0
                    || link.offset[2] != 0.0)
            {
                return Err(ChainError::NotPlanar(i));
            }
        }
        let mut reach_from = [0.0; DOF];
        let mut acc = 0.0;
        for j in (0..DOF).rev() {
            let o = links[j].offset;
            acc += (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
            reach_from[j] = acc;
        }
        if acc <= 0.0 {
            return Err(ChainError::BadOffset(DOF - 1));
        }
        Ok(KinematicChain {
            kind,
            links,
            reach_from,
        })
    }

    /// Planar arm with the given link lengths and symmetric `±π` limits.
    pub fn planar(lengths: [f64; DOF]) -> Result<Self, ChainError> {
        let links = lengths
            .iter()
            .map(|&l| Link {
                axis: Axis::Z,
                offset: [l, 0.0, 0.0],
                limits: [-PI, PI],
            })
            .collect();
        KinematicChain::new(ChainKind::Planar, links)
    }

    /// Seven equal links of total length one.
    pub fn default_planar() -> Self {
        KinematicChain::planar([1.0 / DOF as f64; DOF]).expect("valid planar chain")
    }

    /// LBR iiwa R820 geometry: joint axes alternate z/y, offsets along z.
    pub fn default_spatial() -> Self {
        let offsets = [0.36, 0.0, 0.42, 0.0, 0.40, 0.0, 0.126];
        let links = (0..DOF)
            .map(|i| {
                let limit = if i % 2 == 0 { 170f64 } else { 120f64 }.to_radians();
                Link {
                    axis: if i % 2 == 0 { Axis::Z } else { Axis::Y },
                    offset: [0.0, 0.0, offsets[i]],
                    limits: [-limit, limit],
                }
            })
            .collect();
        KinematicChain::new(ChainKind::Spatial, links).expect("valid spatial chain")
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn links(&self) -> &[Link; DOF] {
        &self.links
    }

    /// Returns a copy with new joint limits.
    pub fn with_limits(&self, limits: [[f64; 2]; DOF]) -> Result<Self, ChainError> {
        let mut links = self.links.to_vec();
        for (l, lim) in links.iter_mut().zip(limits) {
            l.limits = lim;
        }
        KinematicChain::new(self.kind, links)
    }

    /// Upper bound on end-effector travel: sum of all offset lengths.
    pub fn reach(&self) -> f64 {
        self.reach_from[0]
    }

    /// Upper bound on task-space displacement of the tip when moving in a
    /// straight joint-space line from `a` to `b`.
    pub fn displacement_bound(&self, a: &JointConfig, b: &JointConfig) -> f64 {
        (0..DOF)
            .map(|j| (a[j] - b[j]).abs() * self.reach_from[j])
            .sum()
    }

    pub fn within_limits(&self, c: &JointConfig) -> bool {
        self.links
            .iter()
            .zip(c.0.iter())
            .all(|(l, &v)| v >= l.limits[0] && v <= l.limits[1])
    }

    pub fn clamp(&self, c: &JointConfig) -> JointConfig {
        let mut out = *c;
        for (v, l) in out.0.iter_mut().zip(self.links.iter()) {
            *v = v.clamp(l.limits[0], l.limits[1]);
        }
        out
    }

    /// Uniform draw inside the joint-limit box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> JointConfig {
        let mut out = [0.0; DOF];
        for (o, l) in out.iter_mut().zip(self.links.iter()) {
            let [lo, hi] = l.limits;
            *o = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        }
        JointConfig(out)
    }

    /// Forward kinematics. Planar chains return a position in the `z = 0`
    /// plane and no orientation; spatial chains return the tool position and
    /// orientation.
    pub fn fk(&self, c: &JointConfig) -> TaskPose {
        debug_assert!(self.within_limits(c), "configuration outside joint limits");
        match self.kind {
            ChainKind::Planar => TaskPose::at(self.planar_position(c)),
            ChainKind::Spatial => {
                let (position, q) = self.spatial_pose(c);
                TaskPose {
                    position,
                    orientation: Some(q),
                }
            }
        }
    }

    /// Position-only forward kinematics.
    pub fn fk_position(&self, c: &JointConfig) -> Vec3 {
        match self.kind {
            ChainKind::Planar => self.planar_position(c),
            ChainKind::Spatial => self.spatial_pose(c).0,
        }
    }

    fn planar_position(&self, c: &JointConfig) -> Vec3 {
        let mut phi = 0.0;
        let (mut x, mut y) = (0.0, 0.0);
        for (link, &q) in self.links.iter().zip(c.0.iter()) {
            phi += q;
            let (s, co) = phi.sin_cos();
            x += link.offset[0] * co;
            y += link.offset[0] * s;
        }
        Vec3::planar(x, y)
    }

    fn spatial_pose(&self, c: &JointConfig) -> (Vec3, Quat) {
        let mut rot = Quat::IDENTITY;
        let mut pos = Vec3::ZERO;
        for (link, &q) in self.links.iter().zip(c.0.iter()) {
            rot = rot * Quat::from_axis_angle(link.axis.unit(), q);
            let [ox, oy, oz] = link.offset;
            if ox != 0.0 || oy != 0.0 || oz != 0.0 {
                pos += rot.rotate(Vec3::new(ox, oy, oz));
            }
        }
        (pos, rot.renormalized())
    }

    /// Componentwise interpolation between two configurations, clamped to the
    /// joint limits.
    pub fn interpolate(&self, a: &JointConfig, b: &JointConfig, t: f64) -> JointConfig {
        self.clamp(&a.lerp(b, t))
    }
}
