//! Independent reference implementations and shared checks for the
//! integration suites. Nothing here calls the library code it is compared
//! against.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use disentangle::failure_map::{segment_score, FailureRecord};
use disentangle::kinematics::{Axis, KinematicChain};
use disentangle::{FailureMap, JointConfig, PathFailureParams, Quat, TaskPose, Vec3, DOF};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M4 = [[f64; 4]; 4];

fn mat_mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn rotation(axis: Axis, q: f64) -> M4 {
    let (s, c) = (q.sin(), q.cos());
    match axis {
        Axis::X => [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        Axis::Y => [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        Axis::Z => [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
    }
}

fn translation(o: [f64; 3]) -> M4 {
    [[1.0, 0.0, 0.0, o[0]], [0.0, 1.0, 0.0, o[1]], [0.0, 0.0, 1.0, o[2]], [0.0, 0.0, 0.0, 1.0]]
}

/// Tool frame from chained 4×4 homogeneous transforms: per joint a rotation
/// about its axis followed by the link translation.
pub fn fk_matrix(chain: &KinematicChain, c: &JointConfig) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut t: M4 = translation([0.0; 3]);
    for (link, &q) in chain.links().iter().zip(c.0.iter()) {
        t = mat_mul(&t, &rotation(link.axis, q));
        t = mat_mul(&t, &translation(link.offset));
    }
    let r = [
        [t[0][0], t[0][1], t[0][2]],
        [t[1][0], t[1][1], t[1][2]],
        [t[2][0], t[2][1], t[2][2]],
    ];
    ([t[0][3], t[1][3], t[2][3]], r)
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `(2/π)·acos|q1·q2|`.
pub fn geodesic(a: &Quat, b: &Quat) -> f64 {
    let (a, b) = (a.components(), b.components());
    let dot: f64 = (0..4).map(|i| a[i] * b[i]).sum();
    2.0 / PI * dot.abs().min(1.0).acos()
}

/// Single-record probability with the angle from `atan2(|u × w|, u · w)`.
pub fn prob_single(position: Vec3, orientation: Option<Quat>, f: &FailureRecord, c_fail: f64) -> f64 {
    let w = [f.position.x - position.x, f.position.y - position.y, f.position.z - position.z];
    let u = [f.direction.x, f.direction.y, f.direction.z];
    let d2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let alpha = if d2 == 0.0 {
        PI
    } else {
        let cross = [
            u[1] * w[2] - u[2] * w[1],
            u[2] * w[0] - u[0] * w[2],
            u[0] * w[1] - u[1] * w[0],
        ];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let cos = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
        sin.atan2(cos)
    };
    let coord = (alpha / PI).powi(3) / (1.0 + d2 * c_fail);
    match (orientation, f.orientation) {
        (Some(a), Some(b)) => coord * (1.0 - 0.5 * geodesic(&a, &b)),
        _ => coord,
    }
}

pub fn prob(map: &FailureMap, pose: &TaskPose) -> f64 {
    map.records()
        .iter()
        .map(|f| prob_single(pose.position, pose.orientation, f, map.c_fail()))
        .fold(0.0, f64::max)
}

/// Path failure as a direct product of per-sample survival factors, with
/// samples at `k/n` of each segment, `n = ⌈length/Δ⌉`, and the tool pose
/// from [`fk_matrix`].
pub fn path_failure_product(map: &FailureMap, chain: &KinematicChain, path: &[JointConfig], delta: f64) -> f64 {
    let mut survival = 1.0;
    for seg in path.windows(2) {
        let (a, b) = (seg[0].0, seg[1].0);
        let len = (0..DOF).map(|j| (b[j] - a[j]).powi(2)).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let n = ((len / delta) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let mut c = [0.0; DOF];
            for j in 0..DOF {
                c[j] = if k == n { b[j] } else { a[j] + t * (b[j] - a[j]) };
            }
            let pose = oracle_pose(chain, &JointConfig(c));
            let p = prob(map, &pose).min(1.0 - 1e-12);
            survival *= (1.0 - p).powf(len / n as f64 / delta);
        }
    }
    1.0 - survival
}

/// Tool pose from the matrix chain; orientation only for spatial chains.
pub fn oracle_pose(chain: &KinematicChain, c: &JointConfig) -> TaskPose {
    let (p, r) = fk_matrix(chain, c);
    let position = Vec3::new(p[0], p[1], p[2]);
    match chain.kind() {
        disentangle::kinematics::ChainKind::Planar => TaskPose::at(position),
        disentangle::kinematics::ChainKind::Spatial => TaskPose {
            position,
            orientation: Some(matrix_quat(&r)),
        },
    }
}

/// Unit quaternion of a rotation matrix (Shepperd's method).
pub fn matrix_quat(r: &[[f64; 3]; 3]) -> Quat {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let (w, x, y, z) = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        (0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s)
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
        ((r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s)
    } else if r[1][1] > r[2][2] {
        let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
        ((r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s)
    } else {
        let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
        ((r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s)
    };
    Quat::new(w, x, y, z).expect("rotation matrix gives a nonzero quaternion")
}

/// Percentile bootstrap written out with explicit loops: per resample, `n`
/// index draws `gen_range(0..n)` from one ChaCha8 stream, then percentiles by
/// linear interpolation at `(N - 1)·p`.
pub fn bootstrap_reference(outcomes: &[bool], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let n = outcomes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut hits = 0u32;
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            if outcomes[i] {
                hits += 1;
            }
        }
        means.push(f64::from(hits) / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| {
        let h = (means.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(means.len() - 1);
        means[lo] + (h - lo as f64) * (means[hi] - means[lo])
    };
    let tail = (1.0 - level) / 2.0;
    (pct(tail), pct(1.0 - tail))
}

/// Chain with every joint after the first two locked at zero.
pub fn toy_arm() -> KinematicChain {
    let base = KinematicChain::default_planar();
    let mut limits = [[0.0, 0.0]; DOF];
    limits[0] = [-PI, PI];
    limits[1] = [-PI, PI];
    base.with_limits(limits).expect("valid limits")
}

pub const GRID: usize = 101;

pub fn grid_angle(i: usize) -> f64 {
    -PI + 2.0 * PI * i as f64 / (GRID - 1) as f64
}

pub fn toy_config(q0: f64, q1: f64) -> JointConfig {
    let mut c = [0.0; DOF];
    c[0] = q0;
    c[1] = q1;
    JointConfig(c)
}

/// Minimum accumulated segment score from `start` to `goal` over the
/// `GRID × GRID` lattice of the toy arm's two joints, with 16-connected moves
/// (king moves plus knight moves). Returns the score.
pub fn grid_min_score(map: &FailureMap, chain: &KinematicChain, start: (usize, usize), goal: (usize, usize)) -> f64 {
    const MOVES: [(i64, i64); 16] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
        (2, 1),
        (2, -1),
        (-2, 1),
        (-2, -1),
        (1, 2),
        (1, -2),
        (-1, 2),
        (-1, -2),
    ];
    let params = PathFailureParams::default();
    let idx = |i: usize, j: usize| i * GRID + j;
    let mut dist = vec![f64::INFINITY; GRID * GRID];
    let mut heap = BinaryHeap::new();
    dist[idx(start.0, start.1)] = 0.0;
    heap.push((Reverse(OrdF64(0.0)), start.0, start.1));
    while let Some((Reverse(OrdF64(d)), i, j)) = heap.pop() {
        if (i, j) == goal {
            return d;
        }
        if d > dist[idx(i, j)] {
            continue;
        }
        let from = toy_config(grid_angle(i), grid_angle(j));
        for (di, dj) in MOVES {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni >= GRID as i64 || nj >= GRID as i64 {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            let to = toy_config(grid_angle(ni), grid_angle(nj));
            let nd = d + segment_score(map, chain, &from, &to, &params);
            if nd < dist[idx(ni, nj)] {
                dist[idx(ni, nj)] = nd;
                heap.push((Reverse(OrdF64(nd)), ni, nj));
            }
        }
    }
    f64::INFINITY
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub fn random_unit3<R: Rng>(rng: &mut R, planar: bool) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            if planar { 0.0 } else { rng.gen_range(-1.0..1.0) },
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

pub fn random_quat<R: Rng>(rng: &mut R) -> Quat {
    loop {
        let c: [f64; 4] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = c.iter().map(|v| v * v).sum::<f64>();
        if n > 0.01 && n <= 1.0 {
            return Quat::new(c[0], c[1], c[2], c[3]).unwrap();
        }
    }
}

pub fn random_point<R: Rng>(rng: &mut R, planar: bool, scale: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        if planar { 0.0 } else { rng.gen_range(-scale..scale) },
    )
}

/// One randomized probability-model case.
#[derive(Debug, Clone)]
pub struct ProbCase {
    pub map: FailureMap,
    pub extra: (Vec3, Vec3, Option<Quat>),
    pub pose: TaskPose,
}

/// Random map of 0..=`max_records` records, one extra record and a query
/// pose. Roughly a third planar, a third spatial, a third with orientation.
pub fn random_prob_case<R: Rng>(rng: &mut R, max_records: usize) -> ProbCase {
    let flavour = rng.gen_range(0..3);
    let planar = flavour == 0;
    let oriented = flavour == 2;
    let c_fail = [1.0, 25.0, 100.0, 400.0][rng.gen_range(0..4)];
    let mut map = FailureMap::new(c_fail).unwrap();
    let n = rng.gen_range(0..=max_records);
    let record = |rng: &mut R| {
        (
            random_point(rng, planar, 1.0),
            random_unit3(rng, planar),
            oriented.then(|| random_quat(rng)),
        )
    };
    for _ in 0..n {
        let (p, v, q) = record(rng);
        map.push(p, v, q).unwrap();
    }
    let extra = record(rng);
    let pose = TaskPose {
        position: if rng.gen_bool(0.1) && !map.is_empty() {
            map.records()[0].position
        } else {
            random_point(rng, planar, 1.2)
        },
        orientation: oriented.then(|| random_quat(rng)),
    };
    ProbCase { map, extra, pose }
}

/// Range and oracle agreement of the pointwise probability.
pub fn check_range_and_oracle(case: &ProbCase) -> Result<(), String> {
    let p = case.map.prob_fail(&case.pose);
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("prob_fail {p} outside [0, 1]"));
    }
    for f in case.map.records() {
        let s = disentangle::failure_map::prob_fail_single(&case.pose, f, case.map.c_fail());
        if !(0.0..=1.0).contains(&s) {
            return Err(format!("prob_fail_single {s} outside [0, 1]"));
        }
    }
    let o = prob(&case.map, &case.pose);
    if (p - o).abs() > 1e-9 {
        return Err(format!("prob_fail {p} differs from oracle {o}"));
    }
    Ok(())
}

/// Appending a record never lowers the probability at the query pose.
pub fn check_max_monotone(case: &ProbCase) -> Result<(), String> {
    let before = case.map.prob_fail(&case.pose);
    let (p, v, q) = case.extra;
    let after = case.map.record_failure(p, v, q).unwrap().prob_fail(&case.pose);
    if after < before {
        return Err(format!("adding a record lowered prob_fail from {before} to {after}"));
    }
    Ok(())
}

/// For a fixed angle and orientation, probability strictly falls with
/// distance. `alpha` in `[0.05, π]`, `d1 < d2`.
pub fn check_distance_monotone<R: Rng>(rng: &mut R) -> Result<(), String> {
    let planar = rng.gen_bool(0.5);
    let v = random_unit3(rng, planar);
    let x = random_point(rng, planar, 1.0);
    let alpha = rng.gen_range(0.05..PI);
    // a unit vector at angle alpha from v
    let perp = loop {
        let r = random_unit3(rng, planar);
        let p = r - v * r.dot(v);
        if let Some(p) = p.normalized().filter(|_| p.norm() > 0.1) {
            break p;
        }
    };
    let e = v * alpha.cos() + perp * alpha.sin();
    let orientation = (!planar && rng.gen_bool(0.5)).then(|| random_quat(rng));
    let f = FailureRecord {
        position: x,
        direction: v,
        orientation: orientation.map(|_| random_quat(rng)),
    };
    let d1 = rng.gen_range(0.001..1.0);
    let d2 = d1 + rng.gen_range(0.001..1.0);
    let c_fail = rng.gen_range(1.0..400.0);
    let pose = |d: f64| TaskPose {
        position: x - e * d,
        orientation,
    };
    let p1 = disentangle::failure_map::prob_fail_single(&pose(d1), &f, c_fail);
    let p2 = disentangle::failure_map::prob_fail_single(&pose(d2), &f, c_fail);
    if !(p1 > p2) {
        return Err(format!("p({d1}) = {p1} not above p({d2}) = {p2} at alpha {alpha}"));
    }
    Ok(())
}

/// The point ahead of the failure along its direction is strictly riskier
/// than the point behind it at the same distance.
pub fn check_asymmetry<R: Rng>(rng: &mut R) -> Result<(), String> {
    let planar = rng.gen_bool(0.5);
    let f = FailureRecord {
        position: random_point(rng, planar, 1.0),
        direction: random_unit3(rng, planar),
        orientation: None,
    };
    let d = rng.gen_range(0.001..1.5);
    let c_fail = rng.gen_range(1.0..400.0);
    let ahead = TaskPose::at(f.position + f.direction * d);
    let behind = TaskPose::at(f.position - f.direction * d);
    let pa = disentangle::failure_map::prob_fail_single(&ahead, &f, c_fail);
    let pb = disentangle::failure_map::prob_fail_single(&behind, &f, c_fail);
    if !(pa > pb) {
        return Err(format!("ahead {pa} not above behind {pb} at d = {d}"));
    }
    Ok(())
}

/// Survival path failure against the direct product, plus monotonicity when
/// a segment is appended and invariance under a zero-probability segment.
pub fn check_survival<R: Rng>(rng: &mut R) -> Result<(), String> {
    use disentangle::failure_map::path_failure;
    let planar = rng.gen_bool(0.5);
    let chain = if planar {
        KinematicChain::default_planar()
    } else {
        KinematicChain::default_spatial()
    };
    let mut map = FailureMap::new(rng.gen_range(10.0..200.0)).unwrap();
    for _ in 0..rng.gen_range(1..6) {
        let c = chain.sample(rng);
        let p = chain.fk_position(&c);
        map.push(p, random_unit3(rng, planar), None).unwrap();
    }
    let mut path = vec![chain.sample(rng)];
    for _ in 0..rng.gen_range(1..4) {
        let last = *path.last().unwrap();
        let mut next = last;
        for j in 0..DOF {
            next[j] += rng.gen_range(-0.3..0.3);
        }
        path.push(chain.clamp(&next));
    }
    let params = PathFailureParams::default();
    let p = path_failure(&map, &path, &chain, &params);
    let o = path_failure_product(&map, &chain, &path, params.delta);
    if !(0.0..=1.0).contains(&p) || (p - o).abs() > 1e-6 {
        return Err(format!("path failure {p} vs product oracle {o}"));
    }
    let mut longer = path.clone();
    let last = *longer.last().unwrap();
    let mut next = last;
    for j in 0..DOF {
        next[j] += rng.gen_range(-0.3..0.3);
    }
    longer.push(chain.clamp(&next));
    let pl = path_failure(&map, &longer, &chain, &params);
    if pl < p {
        return Err(format!("appending a segment lowered path failure {p} -> {pl}"));
    }
    // a repeated via point is a segment with no samples
    let mut stalled = path.clone();
    stalled.push(last);
    let ps = path_failure(&map, &stalled, &chain, &params);
    if ps != p {
        return Err(format!("zero-length segment changed the failure: {p} -> {ps}"));
    }
    let empty = FailureMap::new(map.c_fail()).unwrap();
    let pe = path_failure(&empty, &path, &chain, &params);
    let pel = path_failure(&empty, &longer, &chain, &params);
    if pe != 0.0 || pel != pe {
        return Err(format!("zero-probability segments changed the failure: {pe} -> {pel}"));
    }
    Ok(())
}
