//! Simulated worlds with hidden obstacles, and the closed plan–execute–record
//! loop that drives a trial.
//!
//! The robot never sees the obstacles. Execution walks each planned joint
//! segment in small steps and stops at the first end-effector contact; the
//! contact becomes a failure record and the robot retreats to the via point
//! where the blocked segment began.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, EpsilonParams};
use crate::failure_map::{FailureMap, FailureRecord, DEFAULT_C_FAIL};
use crate::geometry::{Quat, Vec3};
use crate::kinematics::{quat_geodesic, ChainKind, JointConfig, KinematicChain, TaskPose, DOF};
use crate::planner::{self, Path, PlanTrace, PlannerParams};
use crate::seed;

/// Maximum number of failure records per trial.
pub const N_ITER: usize = 20;

/// Obstacle placements tried before a scenario is declared infeasible.
const MAX_REDRAWS: usize = 10_000;

/// Half-thickness of a 3-D disc relative to its radius.
pub const DISC_HALF_THICKNESS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "3d-orient")]
    ThreeDOrient,
}

impl Mode {
    pub fn dim(self) -> usize {
        match self {
            Mode::TwoD => 2,
            _ => 3,
        }
    }

    pub fn uses_orientation(self) -> bool {
        self == Mode::ThreeDOrient
    }

    pub fn chain_kind(self) -> ChainKind {
        match self {
            Mode::TwoD => ChainKind::Planar,
            _ => ChainKind::Spatial,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TwoD => "2d",
            Mode::ThreeD => "3d",
            Mode::ThreeDOrient => "3d-orient",
        }
    }

    /// Task pose as seen in this mode: orientation is dropped unless the
    /// mode uses it.
    pub fn pose(self, chain: &KinematicChain, c: &JointConfig) -> TaskPose {
        let pose = chain.fk(c);
        if self.uses_orientation() {
            pose
        } else {
            pose.without_orientation()
        }
    }

    pub fn default_chain(self) -> KinematicChain {
        match self {
            Mode::TwoD => KinematicChain::default_planar(),
            _ => KinematicChain::default_spatial(),
        }
    }

    /// Fixed start and goal configurations used by generated scenarios.
    pub fn default_start_goal(self) -> (JointConfig, JointConfig) {
        match self {
            Mode::TwoD => (
                JointConfig([-0.6, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]),
                JointConfig([1.8, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3]),
            ),
            _ => (
                JointConfig([-2.8, 1.0, 0.0, 1.0, 0.0, -0.5, 0.0]),
                JointConfig([2.8, 1.0, 0.0, 1.0, 0.0, -0.5, 0.0]),
            ),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "2d" => Ok(Mode::TwoD),
            "3d" => Ok(Mode::ThreeD),
            "3d-orient" => Ok(Mode::ThreeDOrient),
            other => Err(format!("unknown mode '{other}' (expected 2d, 3d or 3d-orient)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    Disc2d,
    Ball3d,
    /// Flat cylinder of half-thickness `DISC_HALF_THICKNESS · radius`; its
    /// axis is the orientation's z axis, or world z without orientation.
    Disc3d,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    pub center: Vec3,
    pub radius: f64,
    pub orientation: Option<Quat>,
}

impl Obstacle {
    /// Geometric containment of a point (boundary included).
    pub fn contains(&self, p: Vec3) -> bool {
        let d = p - self.center;
        match self.kind {
            ObstacleKind::Disc2d => d.x * d.x + d.y * d.y <= self.radius * self.radius,
            ObstacleKind::Ball3d => d.norm_squared() <= self.radius * self.radius,
            ObstacleKind::Disc3d => {
                let axis = self
                    .orientation
                    .map(|q| q.rotate(Vec3::new(0.0, 0.0, 1.0)))
                    .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
                let h = d.dot(axis);
                let radial2 = d.norm_squared() - h * h;
                h.abs() <= DISC_HALF_THICKNESS * self.radius && radial2 <= self.radius * self.radius
            }
        }
    }

    /// Whether the obstacle stops an end-effector at `pose`. With orientation
    /// in play it only blocks when the end-effector orientation is similar to
    /// the obstacle's, `D_orient < theta_col`.
    pub fn blocks(&self, pose: &TaskPose, theta_col: f64) -> bool {
        if !self.contains(pose.position) {
            return false;
        }
        match (pose.orientation, self.orientation) {
            (Some(q), Some(qo)) => quat_geodesic(&q, &qo) < theta_col,
            _ => true,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawObstacle {
    kind: ObstacleKind,
    center: Vec<f64>,
    radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<Quat>,
}

impl Serialize for Obstacle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let dim = if self.kind == ObstacleKind::Disc2d { 2 } else { 3 };
        RawObstacle {
            kind: self.kind,
            center: self.center.to_array()[..dim].to_vec(),
            radius: self.radius,
            orientation: self.orientation,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Obstacle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = RawObstacle::deserialize(d)?;
        let expect = if raw.kind == ObstacleKind::Disc2d { 2 } else { 3 };
        if raw.center.len() != expect {
            return Err(D::Error::custom(format!(
                "{:?} center needs {expect} coordinates",
                raw.kind
            )));
        }
        if !(raw.radius > 0.0) {
            return Err(D::Error::custom("obstacle radius must be positive"));
        }
        Ok(Obstacle {
            kind: raw.kind,
            center: Vec3::from_slice(&raw.center).expect("length checked"),
            radius: raw.radius,
            orientation: raw.orientation,
        })
    }
}

/// Execution parameters of the simulated robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecParams {
    /// Task-space collision sampling spacing (m).
    pub s_col: f64,
    /// Orientation distance below which an oriented obstacle blocks.
    pub theta_col: f64,
    /// Compliant failure threshold on `Σ |c_desired - c_reached|`.
    pub d_dist: f64,
    /// When set, a contact only counts as a failure if the robot stopped more
    /// than `d_dist` (joint L1) short of the commanded via point.
    #[serde(default)]
    pub compliant: bool,
}

impl Default for ExecParams {
    fn default() -> Self {
        ExecParams {
            s_col: 0.005,
            theta_col: 0.5,
            d_dist: 0.04,
            compliant: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("infeasible scenario: obstacle placement exceeded {0} redraws")]
    Infeasible(usize),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
}

/// A world: arm, hidden obstacles, start and goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvironment", into = "RawEnvironment")]
pub struct Environment {
    pub mode: Mode,
    pub chain: KinematicChain,
    pub obstacles: Vec<Obstacle>,
    pub start: JointConfig,
    pub goal: JointConfig,
    pub exec: ExecParams,
}

#[derive(Serialize, Deserialize)]
struct RawEnvironment {
    mode: Mode,
    chain: KinematicChain,
    obstacles: Vec<Obstacle>,
    start: JointConfig,
    goal: JointConfig,
    exec: ExecParams,
}

impl TryFrom<RawEnvironment> for Environment {
    type Error = ScenarioError;
    fn try_from(r: RawEnvironment) -> Result<Self, ScenarioError> {
        Environment::new(r.mode, r.chain, r.obstacles, r.start, r.goal, r.exec)
    }
}

impl From<Environment> for RawEnvironment {
    fn from(e: Environment) -> Self {
        RawEnvironment {
            mode: e.mode,
            chain: e.chain,
            obstacles: e.obstacles,
            start: e.start,
            goal: e.goal,
            exec: e.exec,
        }
    }
}

impl Environment {
    pub fn new(
        mode: Mode,
        chain: KinematicChain,
        obstacles: Vec<Obstacle>,
        start: JointConfig,
        goal: JointConfig,
        exec: ExecParams,
    ) -> Result<Self, ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if chain.kind() != mode.chain_kind() {
            return invalid(format!("mode {mode} needs a {:?} chain", mode.chain_kind()));
        }
        if !chain.within_limits(&start) || !chain.within_limits(&goal) {
            return invalid("start and goal must lie within the joint limits".into());
        }
        if start == goal {
            return invalid("start and goal coincide".into());
        }
        if !(exec.s_col > 0.0 && exec.d_dist >= 0.0) {
            return invalid("s_col must be positive and d_dist non-negative".into());
        }
        for (i, o) in obstacles.iter().enumerate() {
            let kind_ok = match mode {
                Mode::TwoD => o.kind == ObstacleKind::Disc2d,
                _ => o.kind != ObstacleKind::Disc2d,
            };
            if !kind_ok {
                return invalid(format!("obstacle {i}: {:?} not allowed in mode {mode}", o.kind));
            }
            if o.orientation.is_some() != mode.uses_orientation() {
                return invalid(format!("obstacle {i}: orientation present iff mode is 3d-orient"));
            }
        }
        let env = Environment {
            mode,
            chain,
            obstacles,
            start,
            goal,
            exec,
        };
        for (name, c) in [("start", &env.start), ("goal", &env.goal)] {
            if env.blocking_obstacle(&env.pose(c)).is_some() {
                return invalid(format!("{name} end-effector pose is in collision"));
            }
        }
        Ok(env)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn pose(&self, c: &JointConfig) -> TaskPose {
        self.mode.pose(&self.chain, c)
    }

    /// Index of the first obstacle that blocks `pose`.
    pub fn blocking_obstacle(&self, pose: &TaskPose) -> Option<usize> {
        self.obstacles
            .iter()
            .position(|o| o.blocks(pose, self.exec.theta_col))
    }

    /// Same world without obstacles.
    pub fn without_obstacles(&self) -> Environment {
        Environment {
            obstacles: Vec::new(),
            ..self.clone()
        }
    }
}

/// What to generate: mode, obstacle count and optional radius range (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub mode: Mode,
    pub obstacles: usize,
    pub radius_range: Option<(f64, f64)>,
}

impl ScenarioSpec {
    pub fn new(mode: Mode, obstacles: usize) -> Self {
        ScenarioSpec {
            mode,
            obstacles,
            radius_range: None,
        }
    }

    /// Obstacle radius range: 2-D `[0.03, 0.10]` × arm reach, 3-D
    /// `[0.05, 0.15]` m.
    pub fn radii(&self, chain: &KinematicChain) -> (f64, f64) {
        self.radius_range.unwrap_or(match self.mode {
            Mode::TwoD => (0.03 * chain.reach(), 0.10 * chain.reach()),
            _ => (0.05, 0.15),
        })
    }
}

/// Uniformly random rotation.
fn random_quat<R: Rng + ?Sized>(rng: &mut R) -> Quat {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (t2, t3) = (2.0 * PI * u2, 2.0 * PI * u3);
    Quat::new(a * t2.sin(), a * t2.cos(), b * t3.sin(), b * t3.cos()).expect("unit by construction")
}

/// Random world with obstacles placed uniformly in the reachable workspace
/// shell. Placements touching the start or goal end-effector position are
/// redrawn.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Environment, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = spec.mode;
    let chain = mode.default_chain();
    let (start, goal) = mode.default_start_goal();
    let exec = ExecParams::default();
    let (r_lo, r_hi) = spec.radii(&chain);
    if !(r_lo > 0.0 && r_lo <= r_hi) {
        return Err(ScenarioError::Invalid(format!("bad radius range [{r_lo}, {r_hi}]")));
    }
    let keep_clear = [chain.fk_position(&start), chain.fk_position(&goal)];
    let margin = 2.0 * exec.s_col;

    // workspace shell around the first moving joint
    let (base, reach) = match mode {
        Mode::TwoD => (Vec3::ZERO, chain.reach()),
        _ => {
            let d1 = chain.links()[0].offset[2];
            (Vec3::new(0.0, 0.0, d1), chain.reach() - d1)
        }
    };
    let (inner, outer) = (0.15 * reach, 0.95 * reach);

    let mut obstacles = Vec::with_capacity(spec.obstacles);
    let mut redraws = 0;
    while obstacles.len() < spec.obstacles {
        let radius = if r_hi > r_lo { rng.gen_range(r_lo..r_hi) } else { r_lo };
        let obstacle = match mode {
            Mode::TwoD => {
                let r = rng.gen_range(inner * inner..outer * outer).sqrt();
                let phi = rng.gen_range(-PI..PI);
                Obstacle {
                    kind: ObstacleKind::Disc2d,
                    center: Vec3::planar(r * phi.cos(), r * phi.sin()),
                    radius,
                    orientation: None,
                }
            }
            _ => {
                let r = rng.gen_range(inner.powi(3)..outer.powi(3)).cbrt();
                let z: f64 = rng.gen_range(-1.0..1.0);
                let phi = rng.gen_range(-PI..PI);
                let s = (1.0 - z * z).sqrt();
                let kind = if rng.gen::<bool>() { ObstacleKind::Ball3d } else { ObstacleKind::Disc3d };
                let orientation = mode.uses_orientation().then(|| random_quat(&mut rng));
                Obstacle {
                    kind,
                    center: base + Vec3::new(s * phi.cos(), s * phi.sin(), z) * r,
                    radius,
                    orientation,
                }
            }
        };
        let below_floor = mode != Mode::TwoD && obstacle.center.z < 0.0;
        let touches = keep_clear.iter().any(|&p| {
            let grown = Obstacle {
                radius: obstacle.radius + margin,
                ..obstacle
            };
            grown.contains(p)
        });
        if below_floor || touches {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(ScenarioError::Infeasible(MAX_REDRAWS));
            }
            continue;
        }
        obstacles.push(obstacle);
    }
    Environment::new(mode, chain, obstacles, start, goal, exec)
}


/// Point where an end-effector motion was stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub pose: TaskPose,
    /// Unit direction of the stopped motion.
    pub direction: Vec3,
    pub obstacle: usize,
}

/// Walks the straight task-space segment `from → to` at spacing `s_col`
/// (excluding `from`) and reports the first sample blocked by an obstacle.
pub fn collision_check(env: &Environment, from: &TaskPose, to: &TaskPose) -> Option<Contact> {
    let delta = to.position - from.position;
    let len = delta.norm();
    let n = ((len / env.exec.s_col).ceil() as usize).max(1);
    let direction = delta.normalized().unwrap_or(Vec3::ZERO);
    for k in 1..=n {
        let t = k as f64 / n as f64;
        let pose = if k == n {
            *to
        } else {
            TaskPose {
                position: from.position.lerp(to.position, t),
                orientation: match (from.orientation, to.orientation) {
                    (Some(a), Some(b)) => Some(a.nlerp(&b, t)),
                    (_, b) => b,
                },
            }
        };
        if let Some(obstacle) = env.blocking_obstacle(&pose) {
            return Some(Contact {
                pose,
                direction,
                obstacle,
            });
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionStatus {
    ReachedGoal,
    Blocked,
    /// Every segment executed but the path did not end at the goal.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionOutcome {
    pub status: ExecutionStatus,
    pub failure: Option<FailureRecord>,
    /// Configuration the robot continues from.
    pub resume_at: JointConfig,
    /// Index of the via point `resume_at` refers to.
    pub resume_index: usize,
    /// Index of the obstacle that stopped the robot.
    pub obstacle: Option<usize>,
}

/// Number of joint-space sub-steps for a segment so that the end-effector
/// moves at most `s_col` per sub-step.
fn substeps(env: &Environment, a: &JointConfig, b: &JointConfig) -> usize {
    ((env.chain.displacement_bound(a, b) / env.exec.s_col).ceil() as usize).max(1)
}

/// Executes `path` in `env`.
///
/// Each segment is walked in joint space; consecutive end-effector poses are
/// checked with [`collision_check`]. On a blocking contact the robot returns
/// to the via point that began the segment, and a failure record (contact
/// position, motion direction, end-effector orientation in orientation mode)
/// is produced.
pub fn execute_path(env: &Environment, path: &Path) -> ExecutionOutcome {
    let via = path.via();
    let mut resume = 0;
    for (i, seg) in via.windows(2).enumerate() {
        let (a, b) = (&seg[0], &seg[1]);
        let n = substeps(env, a, b);
        let mut prev_config = *a;
        let mut prev_pose = env.pose(a);
        let segment_dir = (env.chain.fk_position(b) - prev_pose.position).normalized();
        let mut contact_here = None;
        for k in 1..=n {
            let c = if k == n { *b } else { a.lerp(b, k as f64 / n as f64) };
            let pose = env.pose(&c);
            if let Some(contact) = collision_check(env, &prev_pose, &pose) {
                contact_here = Some((contact, prev_config));
                break;
            }
            prev_config = c;
            prev_pose = pose;
        }
        let Some((contact, reached)) = contact_here else {
            resume = i + 1;
            continue;
        };
        if env.exec.compliant && b.l1_distance(&reached) <= env.exec.d_dist {
            // close enough to the commanded via point
            continue;
        }
        let direction = contact
            .direction
            .normalized()
            .or(segment_dir)
            .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        return ExecutionOutcome {
            status: ExecutionStatus::Blocked,
            failure: Some(FailureRecord {
                position: contact.pose.position,
                direction,
                orientation: contact.pose.orientation,
            }),
            resume_at: via[resume],
            resume_index: resume,
            obstacle: Some(contact.obstacle),
        };
    }
    let end = *path.last();
    let status = if end == env.goal {
        ExecutionStatus::ReachedGoal
    } else {
        ExecutionStatus::Incomplete
    };
    ExecutionOutcome {
        status,
        failure: None,
        resume_at: end,
        resume_index: via.len() - 1,
        obstacle: None,
    }
}

/// Planning method of a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Minimum failure probability path under a map with constant `c_fail`.
    Probabilistic { c_fail: f64 },
    /// Thresholded map: states with `prob_fail ≥ tau` are forbidden.
    Hard { tau: f64 },
    /// Epsilon-greedy joint-space walk.
    Epsilon { epsilon: f64 },
}

impl Method {
    pub fn probabilistic() -> Method {
        Method::Probabilistic { c_fail: DEFAULT_C_FAIL }
    }

    /// Human-readable label, e.g. `Hard 0.01`.
    pub fn label(&self) -> String {
        match *self {
            Method::Probabilistic { c_fail } if c_fail == DEFAULT_C_FAIL => "Probabilistic".into(),
            Method::Probabilistic { c_fail } => format!("Probabilistic C{c_fail}"),
            Method::Hard { tau } => format!("Hard {tau}"),
            Method::Epsilon { epsilon } => format!("Epsilon {epsilon}"),
        }
    }

    /// Family name without the parameter.
    pub fn family(&self) -> &'static str {
        match self {
            Method::Probabilistic { .. } => "Probabilistic",
            Method::Hard { .. } => "Hard",
            Method::Epsilon { .. } => "Epsilon",
        }
    }

    /// Stable 64-bit identifier used for seed derivation.
    pub fn id(&self) -> u64 {
        let (tag, value) = match *self {
            Method::Probabilistic { c_fail } => (1u64, c_fail),
            Method::Hard { tau } => (2, tau),
            Method::Epsilon { epsilon } => (3, epsilon),
        };
        seed::derive(tag, &[value.to_bits()])
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = String;
    /// `probabilistic[:C_FAIL]`, `hard:TAU` or `epsilon:EPS`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = |what: &str| -> Result<f64, String> {
            let a = arg.ok_or_else(|| format!("{name} needs a value, e.g. {name}:{what}"))?;
            a.parse::<f64>().map_err(|e| format!("bad value '{a}' for {name}: {e}"))
        };
        match name.to_ascii_lowercase().as_str() {
            "probabilistic" | "prob" => {
                let c_fail = if arg.is_some() { value("100")? } else { DEFAULT_C_FAIL };
                if !(c_fail > 0.0) {
                    return Err("C_FAIL must be positive".into());
                }
                Ok(Method::Probabilistic { c_fail })
            }
            "hard" => {
                let tau = value("0.01")?;
                if !(tau > 0.0 && tau < 1.0) {
                    return Err("hard threshold must lie in (0, 1)".into());
                }
                Ok(Method::Hard { tau })
            }
            "epsilon" | "eps" => {
                let epsilon = value("0.2")?;
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err("epsilon must lie in [0, 1]".into());
                }
                Ok(Method::Epsilon { epsilon })
            }
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

/// Parameters shared by every trial of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    pub planner: PlannerParams,
    pub epsilon: EpsilonParams,
    /// `C_FAIL` of the maps kept by the baselines.
    pub c_fail: f64,
    pub n_iter: usize,
    /// Keep the search trace of the last tree-based planning call.
    pub keep_trace: bool,
}

impl Default for TrialSettings {
    fn default() -> Self {
        TrialSettings {
            planner: PlannerParams::default(),
            epsilon: EpsilonParams::default(),
            c_fail: DEFAULT_C_FAIL,
            n_iter: N_ITER,
            keep_trace: false,
        }
    }
}

/// Timing of one planning call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanTiming {
    /// Failure records in the map when planning started.
    pub map_size: usize,
    pub seconds: f64,
    /// Segment-cost samples evaluated (zero for the epsilon walk).
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub success: bool,
    pub paths_executed: usize,
    pub collisions: usize,
    pub seed: u64,
    pub wall_time: f64,
    pub plan_timings: Vec<PlanTiming>,
    pub final_config: JointConfig,
    pub map: FailureMap,
    pub last_path: Option<Path>,
    pub last_trace: Option<PlanTrace>,
}

/// Runs one disentangling trial: plan from the current configuration,
/// execute, record the failure, repeat. Stops on reaching the goal, after
/// `budget` executed paths, or once the map holds `n_iter` records.
pub fn run_disentangle(
    env: &Environment,
    method: Method,
    budget: usize,
    seed: u64,
    settings: &TrialSettings,
) -> TrialResult {
    let started = Instant::now();
    let c_fail = match method {
        Method::Probabilistic { c_fail } => c_fail,
        _ => settings.c_fail,
    };
    let mut map = FailureMap::new(c_fail).expect("positive C_FAIL");
    let mut current = env.start;
    let mut paths_executed = 0;
    let mut collisions = 0;
    let mut success = false;
    let mut plan_timings = Vec::new();
    let mut last_path = None;
    let mut last_trace = None;
    let mut walk_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[u64::MAX]));

    while !success && paths_executed < budget && map.len() < settings.n_iter {
        let params = PlannerParams {
            rng_seed: seed::derive(seed, &[paths_executed as u64]),
            ..settings.planner
        };
        let t0 = Instant::now();
        let (path, samples) = match method {
            Method::Probabilistic { .. } => {
                let out = planner::plan(&map, &current, &env.goal, &params, &env.chain);
                let samples = out.samples;
                if settings.keep_trace {
                    last_trace = Some(out.trace(&env.chain));
                }
                (out.result.map(|(p, _)| p).ok(), samples)
            }
            Method::Hard { tau } => {
                let out = baselines::hard_plan(&map, &current, &env.goal, &params, tau, &env.chain);
                if settings.keep_trace {
                    last_trace = Some(out.plan.trace(&env.chain));
                }
                (Some(out.path), out.samples)
            }
            Method::Epsilon { epsilon } => {
                let eps = EpsilonParams {
                    epsilon,
                    ..settings.epsilon
                };
                (baselines::epsilon_plan(&current, &env.goal, &eps, &env.chain, &mut walk_rng).ok(), 0)
            }
        };
        plan_timings.push(PlanTiming {
            map_size: map.len(),
            seconds: t0.elapsed().as_secs_f64(),
            samples,
        });
        let Some(path) = path else {
            // nothing executable; the attempt is still spent
            paths_executed += 1;
            continue;
        };
        let outcome = execute_path(env, &path);
        paths_executed += 1;
        match outcome.status {
            ExecutionStatus::ReachedGoal => success = true,
            ExecutionStatus::Blocked => {
                collisions += 1;
                let f = outcome.failure.expect("blocked outcome carries a failure");
                map.push(f.position, f.direction, f.orientation)
                    .expect("contact direction is a unit vector");
            }
            ExecutionStatus::Incomplete => {}
        }
        current = outcome.resume_at;
        last_path = Some(path);
    }

    TrialResult {
        success,
        paths_executed,
        collisions,
        seed,
        wall_time: started.elapsed().as_secs_f64(),
        plan_timings,
        final_config: current,
        map,
        last_path,
        last_trace,
    }
}

/// Ring of overlapping discs around the goal end-effector position (2-D
/// only). Any continuous motion from outside the ring to the goal crosses it.
pub fn enclose_goal(env: &Environment, ring_radius: f64, disc_radius: f64) -> Result<Environment, ScenarioError> {
    if env.mode != Mode::TwoD {
        return Err(ScenarioError::Invalid("enclose_goal supports 2-D environments".into()));
    }
    let center = env.chain.fk_position(&env.goal);
    let spacing = disc_radius * 0.5;
    let count = ((2.0 * PI * ring_radius) / spacing).ceil() as usize;
    let mut obstacles = env.obstacles.clone();
    obstacles.extend((0..count).map(|i| {
        let phi = 2.0 * PI * i as f64 / count as f64;
        Obstacle {
            kind: ObstacleKind::Disc2d,
            center: center + Vec3::planar(phi.cos(), phi.sin()) * ring_radius,
            radius: disc_radius,
            orientation: None,
        }
    }));
    Environment::new(env.mode, env.chain.clone(), obstacles, env.start, env.goal, env.exec)
}

/// Builds a configuration with every joint at `value`, clamped to limits.
pub fn uniform_config(chain: &KinematicChain, value: f64) -> JointConfig {
    chain.clamp(&JointConfig([value; DOF]))
}
