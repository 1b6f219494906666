//! Failure-probability map built from blocked movements.
//!
//! Every blocked movement leaves a [`FailureRecord`]: where the end-effector
//! stopped, which way it was moving and (optionally) how it was oriented. The
//! map turns those records into a pointwise failure probability and, by
//! discretizing joint-space segments, into a path failure probability that the
//! planner minimizes.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quat, Vec3};
use crate::kinematics::{quat_geodesic, JointConfig, KinematicChain, TaskPose};

/// Default `C_FAIL` in m⁻².
pub const DEFAULT_C_FAIL: f64 = 100.0;

/// Upper clamp on per-sample failure probability in the survival product.
const MAX_SAMPLE_PROB: f64 = 1.0 - 1e-12;

thread_local! {
    static SCAN_BUFFER: RefCell<ScanBuffer> = RefCell::new(ScanBuffer::default());
}

/// Per-record upper bound, cosine and denominator of one scan.
#[derive(Default)]
struct ScanBuffer {
    bound: Vec<f64>,
    cos: Vec<f64>,
    denom: Vec<f64>,
}

/// Record positions and directions by component, so the bound pass runs
/// over contiguous slices.
#[derive(Debug, Clone, Default)]
struct Columns {
    px: Vec<f64>,
    py: Vec<f64>,
    pz: Vec<f64>,
    ux: Vec<f64>,
    uy: Vec<f64>,
    uz: Vec<f64>,
    /// Quaternion components, zero when the record has no orientation.
    q: [Vec<f64>; 4],
    /// 1 when the record has an orientation, else 0.
    oriented: Vec<f64>,
}

impl Columns {
    fn push(&mut self, p: Vec3, u: Vec3, q: Option<Quat>) {
        let c = q.map_or([0.0; 4], |q| q.components());
        for (col, v) in self.q.iter_mut().zip(c) {
            col.push(v);
        }
        self.oriented.push(if q.is_some() { 1.0 } else { 0.0 });
        self.px.push(p.x);
        self.py.push(p.y);
        self.pz.push(p.z);
        self.ux.push(u.x);
        self.uy.push(u.y);
        self.uz.push(u.z);
    }
}

const ASIN_CUBIC: f64 = PI / 2.0 - 1.0;
/// Keeps the orientation bound above the exact factor under rounding.
const ORIENT_SLACK: f64 = 1.0 - 1e-9;

/// Below this record count a linear scan beats the grid lookup.
const INDEX_MIN_RECORDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureRecord {
    pub position: Vec3,
    /// Unit vector of the blocked movement.
    pub direction: Vec3,
    pub orientation: Option<Quat>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FailureMapError {
    #[error("failure direction has zero length")]
    ZeroDirection,
    #[error("C_FAIL must be positive and finite, got {0}")]
    BadConstant(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Failure probability of `pose` given a single record.
///
/// The coordinate term is `(α/π)³ / (1 + D·C)` with `D` the squared distance
/// to the failure point and `α` the angle between the blocked direction and
/// the vector from `pose` to the failure point: points the robot would reach
/// by continuing the blocked motion get `α ≈ π`, points it came from get
/// `α ≈ 0`. At the failure point itself `α = π`. When both orientations are
/// known the result is scaled by `1 - 0.5·D_orient`.
pub fn prob_fail_single(pose: &TaskPose, f: &FailureRecord, c_fail: f64) -> f64 {
    let to_fail = f.position - pose.position;
    let d2 = to_fail.norm_squared();
    let cos = (d2 > 0.0).then(|| direction_cosine(f, to_fail, d2));
    prob_from_parts(pose, f, cos, 1.0 + d2 * c_fail)
}

fn direction_cosine(f: &FailureRecord, to_fail: Vec3, d2: f64) -> f64 {
    (f.direction.dot(to_fail) / d2.sqrt()).clamp(-1.0, 1.0)
}

/// `cos` is the cosine of `α`, `None` at the failure point.
fn prob_from_parts(pose: &TaskPose, f: &FailureRecord, cos: Option<f64>, denom: f64) -> f64 {
    let alpha = cos.map_or(PI, f64::acos);
    let a = alpha / PI;
    let coord = a * a * a / denom;
    match (pose.orientation, f.orientation) {
        (Some(q), Some(qf)) => coord * (1.0 - 0.5 * quat_geodesic(&q, &qf)),
        _ => coord,
    }
}

type CellKey = (i64, i64, i64);

/// Uniform grid over failure positions with cell edge equal to the cutoff
/// radius, so every record within the cutoff of a query point lies in the
/// 3×3(×3) block around the query cell.
#[derive(Debug, Clone, Default)]
struct GridIndex {
    cell: f64,
    cells: HashMap<CellKey, Vec<u32>>,
    planar: bool,
}

impl GridIndex {
    fn key(&self, p: Vec3) -> CellKey {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, p: Vec3, idx: usize) {
        if p.z != 0.0 {
            self.planar = false;
        }
        let k = self.key(p);
        self.cells.entry(k).or_default().push(idx as u32);
    }

    fn for_each_near(&self, p: Vec3, mut f: impl FnMut(usize)) {
        let (i, j, k) = self.key(p);
        let dz: &[i64] = if self.planar && p.z == 0.0 { &[0] } else { &[-1, 0, 1] };
        for di in -1..=1 {
            for dj in -1..=1 {
                for &dk in dz {
                    if let Some(v) = self.cells.get(&(i + di, j + dj, k + dk)) {
                        v.iter().for_each(|&idx| f(idx as usize));
                    }
                }
            }
        }
    }
}

/// Ordered set of failure records plus the constant `C_FAIL`.
#[derive(Debug, Clone)]
pub struct FailureMap {
    records: Vec<FailureRecord>,
    columns: Columns,
    c_fail: f64,
    cutoff: f64,
    index: GridIndex,
    version: u64,
}

impl PartialEq for FailureMap {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.c_fail == other.c_fail
    }
}

impl Default for FailureMap {
    fn default() -> Self {
        FailureMap::new(DEFAULT_C_FAIL).expect("default constant is valid")
    }
}

impl FailureMap {
    pub fn new(c_fail: f64) -> Result<Self, FailureMapError> {
        if !(c_fail > 0.0 && c_fail.is_finite()) {
            return Err(FailureMapError::BadConstant(c_fail));
        }
        let cutoff = 5.0 / c_fail.sqrt();
        Ok(FailureMap {
            records: Vec::new(),
            columns: Columns::default(),
            c_fail,
            cutoff,
            index: GridIndex {
                cell: cutoff,
                cells: HashMap::new(),
                planar: true,
            },
            version: 0,
        })
    }

    pub fn c_fail(&self) -> f64 {
        self.c_fail
    }

    pub fn records(&self) -> &[FailureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Incremented on every appended record.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Radius beyond which records are skipped by the indexed lookup.
    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff
    }

    /// Upper bound on the contribution of any record farther than the cutoff.
    pub fn cutoff_bound(&self) -> f64 {
        1.0 / (1.0 + self.cutoff * self.cutoff * self.c_fail)
    }

    /// Appends a record in place. The direction is normalized.
    pub fn push(
        &mut self,
        position: Vec3,
        direction: Vec3,
        orientation: Option<Quat>,
    ) -> Result<(), FailureMapError> {
        let direction = direction.normalized().ok_or(FailureMapError::ZeroDirection)?;
        self.index.insert(position, self.records.len());
        self.columns.push(position, direction, orientation);
        self.records.push(FailureRecord {
            position,
            direction,
            orientation,
        });
        self.version += 1;
        Ok(())
    }

    /// Returns a new map with one more record; `self` is unchanged.
    pub fn record_failure(
        &self,
        position: Vec3,
        direction: Vec3,
        orientation: Option<Quat>,
    ) -> Result<FailureMap, FailureMapError> {
        let mut next = self.clone();
        next.push(position, direction, orientation)?;
        Ok(next)
    }

    /// Failure probability at `pose`: the maximum over all records, zero for
    /// an empty map.
    pub fn prob_fail(&self, pose: &TaskPose) -> f64 {
        if self.records.len() >= INDEX_MIN_RECORDS {
            let mut near = 0.0f64;
            let r2 = self.cutoff * self.cutoff;
            self.index.for_each_near(pose.position, |i| {
                let f = &self.records[i];
                if (f.position - pose.position).norm_squared() <= r2 {
                    near = near.max(prob_fail_single(pose, f, self.c_fail));
                }
            });
            // Anything skipped is strictly below the bound.
            if near >= self.cutoff_bound() {
                return near;
            }
        }
        self.scan(pose)
    }

    fn scan(&self, pose: &TaskPose) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        SCAN_BUFFER.with(|buf| self.scan_with(pose, &mut buf.borrow_mut()))
    }

    fn scan_with(&self, pose: &TaskPose, buf: &mut ScanBuffer) -> f64 {
        let n = self.records.len();
        buf.bound.resize(n, 0.0);
        buf.cos.resize(n, 0.0);
        buf.denom.resize(n, 0.0);
        match pose.orientation {
            Some(q) => self.bound_pass::<true>(pose.position, q.components(), buf),
            None => self.bound_pass::<false>(pose.position, [0.0; 4], buf),
        }
        let (bound, cos, denom) = (&buf.bound[..n], &buf.cos[..n], &buf.denom[..n]);
        let mut top = 0;
        for i in 1..n {
            if bound[i] > bound[top] {
                top = i;
            }
        }
        let exact = |i: usize| prob_from_parts(pose, &self.records[i], Some(cos[i]), denom[i]);
        let mut best = exact(top);
        for i in 0..n {
            if i == top || bound[i] < best * (1.0 - 1e-9) {
                continue;
            }
            best = best.max(exact(i));
        }
        best
    }

    /// Fills per-record upper bounds on the failure probability, plus the
    /// exact cosine and denominator reused by the exact evaluation.
    fn bound_pass<const ORIENT: bool>(&self, p: Vec3, pq: [f64; 4], buf: &mut ScanBuffer) {
        let n = self.records.len();
        let c_fail = self.c_fail;
        let cols = &self.columns;
        let (px, py, pz) = (&cols.px[..n], &cols.py[..n], &cols.pz[..n]);
        let (ux, uy, uz) = (&cols.ux[..n], &cols.uy[..n], &cols.uz[..n]);
        let (qw, qx, qy, qz) = (&cols.q[0][..n], &cols.q[1][..n], &cols.q[2][..n], &cols.q[3][..n]);
        let oriented = &cols.oriented[..n];
        let (bound, cos, denom) = (&mut buf.bound[..n], &mut buf.cos[..n], &mut buf.denom[..n]);
        for i in 0..n {
            let (dx, dy, dz) = (px[i] - p.x, py[i] - p.y, pz[i] - p.z);
            let d2 = dx * dx + dy * dy + dz * dz;
            let dot = ux[i] * dx + uy[i] * dy + uz[i] * dz;
            let r = dot / d2.sqrt();
            // α = π at the failure point
            let c = if d2 > 0.0 {
                if r < -1.0 {
                    -1.0
                } else if r > 1.0 {
                    1.0
                } else {
                    r
                }
            } else {
                -1.0
            };
            let den = 1.0 + d2 * c_fail;
            // α/π = (2/π)·asin(x) with x = sin(α/2), and
            // asin(x) ≤ x + (π/2 - 1)·x³ on [0, 1]
            let x = (0.5 * (1.0 - c)).sqrt();
            let a = FRAC_2_PI * (x + ASIN_CUBIC * x * x * x);
            let a = if a > 1.0 { 1.0 } else { a };
            let mut b = a * a * a / den;
            if ORIENT {
                // D_orient ≥ (2/π)·chord since asin(y) ≥ y
                let qdot = qw[i] * pq[0] + qx[i] * pq[1] + qy[i] * pq[2] + qz[i] * pq[3];
                let sg = if qdot < 0.0 { -1.0 } else { 1.0 };
                let (ew, ex) = (pq[0] - sg * qw[i], pq[1] - sg * qx[i]);
                let (ey, ez) = (pq[2] - sg * qy[i], pq[3] - sg * qz[i]);
                let chord = (ew * ew + ex * ex + ey * ey + ez * ez).sqrt();
                b *= 1.0 - oriented[i] * chord * ORIENT_SLACK / PI;
            }
            bound[i] = b;
            cos[i] = c;
            denom[i] = den;
        }
    }

    /// Line-oriented text dump: a header, then one record per line with the
    /// position, the direction and, when present, the `w x y z` quaternion.
    pub fn to_text(&self, dim: usize) -> String {
        let mut out = format!("# failure-map v1 dim={dim} c_fail={}\n", self.c_fail);
        for f in &self.records {
            let fields: Vec<String> = f.position.to_array()[..dim]
                .iter()
                .chain(f.direction.to_array()[..dim].iter())
                .chain(f.orientation.map(|q| q.components()).iter().flatten())
                .map(|v| v.to_string())
                .collect();
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        out
    }

    /// Parses [`FailureMap::to_text`] output. Returns the map and its
    /// dimension.
    pub fn from_text(text: &str) -> Result<(FailureMap, usize), FailureMapError> {
        let err = |line: usize, msg: &str| FailureMapError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty document"))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("#") || tokens.next() != Some("failure-map") || tokens.next() != Some("v1") {
            return Err(err(1, "expected '# failure-map v1' header"));
        }
        let mut dim = None;
        let mut c_fail = None;
        for t in tokens {
            match t.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("c_fail", v)) => c_fail = v.parse::<f64>().ok(),
                _ => return Err(err(1, &format!("unknown header field '{t}'"))),
            }
        }
        let dim = dim.filter(|d| *d == 2 || *d == 3).ok_or_else(|| err(1, "dim must be 2 or 3"))?;
        let c_fail = c_fail.ok_or_else(|| err(1, "missing c_fail"))?;
        let mut map = FailureMap::new(c_fail)?;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(line_no, &e.to_string()))?;
            let orientation = match values.len() {
                n if n == 2 * dim => None,
                n if n == 2 * dim + 4 => {
                    let q = &values[2 * dim..];
                    Some(Quat::new(q[0], q[1], q[2], q[3]).ok_or_else(|| err(line_no, "degenerate quaternion"))?)
                }
                n => return Err(err(line_no, &format!("expected {} or {} fields, got {n}", 2 * dim, 2 * dim + 4))),
            };
            let position = Vec3::from_slice(&values[..dim]).expect("dim checked");
            let direction = Vec3::from_slice(&values[dim..2 * dim]).expect("dim checked");
            map.push(position, direction, orientation)
                .map_err(|e| err(line_no, &e.to_string()))?;
        }
        Ok((map, dim))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineMode {
    /// `1 - ∏ (1 - p_k)^(Δ_k/Δ)`.
    #[default]
    Survival,
    /// `∏ p_k`, kept for compatibility with the printed product form.
    LiteralProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFailureParams {
    /// Joint-space discretization distance Δ.
    pub delta: f64,
    pub combine: CombineMode,
}

impl Default for PathFailureParams {
    fn default() -> Self {
        PathFailureParams {
            delta: 0.04,
            combine: CombineMode::Survival,
        }
    }
}

/// Discretization of the segment `a → b`: `n = ⌈|b - a| / Δ⌉` equal steps,
/// yielding the configurations at `k/n` for `k = 1..=n`.
/// The start point is excluded so that consecutive segments of a path never
/// share a sample.
pub fn segment_samples(
    a: &JointConfig,
    b: &JointConfig,
    delta: f64,
) -> impl Iterator<Item = JointConfig> {
    let n = segment_sample_count(a, b, delta);
    let (a, b) = (*a, *b);
    (1..=n).map(move |k| if k == n { b } else { a.lerp(&b, k as f64 / n as f64) })
}

/// Number of samples [`segment_samples`] yields.
pub fn segment_sample_count(a: &JointConfig, b: &JointConfig, delta: f64) -> usize {
    let d = a.distance(b);
    if d == 0.0 {
        0
    } else {
        // tolerate rounding so that a segment of exactly kΔ gets k samples
        ((d / delta) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Additive path score for one segment. Scores of consecutive segments add
/// up, and [`score_to_probability`] maps the total to the path failure
/// probability.
pub fn segment_score(
    map: &FailureMap,
    chain: &KinematicChain,
    a: &JointConfig,
    b: &JointConfig,
    params: &PathFailureParams,
) -> f64 {
    match segment_score_bounded(map, chain, a, b, params, f64::INFINITY) {
        Bounded::Exact { score, .. } | Bounded::Exceeds { partial: score, .. } => score,
    }
}

/// Result of [`segment_score_bounded`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounded {
    /// The full score; `samples` points were evaluated.
    Exact { score: f64, samples: usize },
    /// The running score passed the limit after `samples` points, so the
    /// full score is strictly greater than the limit.
    Exceeds { partial: f64, samples: usize },
}

/// [`segment_score`] that stops once the running sum strictly exceeds
/// `limit`. Only survival scores are nonnegative per sample, so the limit is
/// ignored for the literal product.
pub fn segment_score_bounded(
    map: &FailureMap,
    chain: &KinematicChain,
    a: &JointConfig,
    b: &JointConfig,
    params: &PathFailureParams,
    limit: f64,
) -> Bounded {
    let n = segment_sample_count(a, b, params.delta);
    if n == 0 {
        return Bounded::Exact { score: 0.0, samples: 0 };
    }
    let stop = params.combine == CombineMode::Survival;
    let weight = a.distance(b) / n as f64 / params.delta;
    let mut score = 0.0;
    for (k, c) in segment_samples(a, b, params.delta).enumerate() {
        let p = map.prob_fail(&chain.fk(&c));
        score += sample_score(p, weight, params.combine);
        if stop && score > limit {
            return Bounded::Exceeds {
                partial: score,
                samples: k + 1,
            };
        }
    }
    Bounded::Exact { score, samples: n }
}

#[inline]
fn sample_score(p: f64, weight: f64, mode: CombineMode) -> f64 {
    match mode {
        CombineMode::Survival => -weight * (1.0 - p.min(MAX_SAMPLE_PROB)).ln(),
        CombineMode::LiteralProduct => p.ln(),
    }
}

/// Maps an accumulated score back to a probability in `[0, 1]`.
pub fn score_to_probability(score: f64, mode: CombineMode) -> f64 {
    match mode {
        CombineMode::Survival => -(-score).exp_m1(),
        CombineMode::LiteralProduct => score.exp(),
    }
}

/// Combines per-sample `(p_k, Δ_k/Δ)` pairs into a path failure probability.
pub fn combine_samples(samples: &[(f64, f64)], mode: CombineMode) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let score: f64 = samples.iter().map(|&(p, w)| sample_score(p, w, mode)).sum();
    score_to_probability(score, mode)
}

/// Failure probability of executing the joint-space polyline `path`.
///
/// A path without any movement has failure probability zero in both modes.
pub fn path_failure(
    map: &FailureMap,
    path: &[JointConfig],
    chain: &KinematicChain,
    params: &PathFailureParams,
) -> f64 {
    let moved = path.windows(2).any(|w| w[0] != w[1]);
    if !moved {
        return 0.0;
    }
    let score: f64 = path
        .windows(2)
        .map(|w| segment_score(map, chain, &w[0], &w[1], params))
        .sum();
    score_to_probability(score, params.combine)
}

/// Survival-consistent composition of two failure probabilities.
pub fn compose_failure(a: f64, b: f64) -> f64 {
    1.0 - (1.0 - a) * (1.0 - b)
}
