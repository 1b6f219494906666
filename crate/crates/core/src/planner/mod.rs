//! Probabilistic bidirectional RRT with rewiring.
//!
//! Two trees are grown, one from the start toward the goal and one from the
//! goal toward the start. Every leaf of the goal tree is then bridged to the
//! start-tree node with the cheapest connecting segment, and the cheapest
//! assembled start-to-goal path wins. Segment costs come from a
//! [`CostModel`]: the failure probability under the current failure map, or
//! the thresholded variant used by the hard-constraint baseline.

mod cost;
mod tree;

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::failure_map::FailureMap;
use crate::kinematics::{JointConfig, KinematicChain, TaskPose};
use crate::seed;

pub use cost::{CostModel, SegmentCost};
pub use tree::{Node, TraceNode, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// Iterations per tree.
    pub k_iter: usize,
    /// Joint-space discretization distance for segment costs.
    pub delta: f64,
    /// Probability of proposing the target configuration directly.
    pub p_goal: f64,
    /// Number of uniform candidates per random proposal.
    pub n_rand: usize,
    /// Maximum extension step (joint-space 2-norm, radians).
    pub eta: f64,
    pub k_rewire: usize,
    pub rng_seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            k_iter: 100,
            delta: 0.04,
            p_goal: 0.1,
            n_rand: 100,
            eta: 0.3,
            k_rewire: 10,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid planner parameter: {0}")]
    InvalidParams(&'static str),
    #[error("no admissible path between start and goal")]
    NoPath,
    #[error("a path needs at least two distinct via points")]
    DegeneratePath,
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.delta > 0.0) {
            return Err(PlanError::InvalidParams("delta must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_goal) {
            return Err(PlanError::InvalidParams("p_goal must lie in [0, 1]"));
        }
        if self.n_rand == 0 {
            return Err(PlanError::InvalidParams("n_rand must be at least 1"));
        }
        if !(self.eta > 0.0) {
            return Err(PlanError::InvalidParams("eta must be positive"));
        }
        Ok(())
    }

    pub fn failure_model(&self) -> CostModel {
        CostModel::Failure { delta: self.delta }
    }
}

/// Joint-space polyline with at least two via points, consecutive points
/// distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<JointConfig>", into = "Vec<JointConfig>")]
pub struct Path {
    via: Vec<JointConfig>,
}

impl TryFrom<Vec<JointConfig>> for Path {
    type Error = PlanError;
    fn try_from(via: Vec<JointConfig>) -> Result<Self, PlanError> {
        Path::new(via)
    }
}

impl From<Path> for Vec<JointConfig> {
    fn from(p: Path) -> Self {
        p.via
    }
}

impl Path {
    pub fn new(via: Vec<JointConfig>) -> Result<Path, PlanError> {
        if via.len() < 2 || via.windows(2).any(|w| w[0] == w[1]) {
            return Err(PlanError::DegeneratePath);
        }
        Ok(Path { via })
    }

    /// Drops consecutive duplicates before validating.
    pub fn from_points(mut via: Vec<JointConfig>) -> Result<Path, PlanError> {
        via.dedup();
        Path::new(via)
    }

    pub fn via(&self) -> &[JointConfig] {
        &self.via
    }

    pub fn first(&self) -> &JointConfig {
        &self.via[0]
    }

    pub fn last(&self) -> &JointConfig {
        self.via.last().expect("non-empty")
    }

    /// Total joint-space length.
    pub fn length(&self) -> f64 {
        self.via.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Task-space moves `(x_start, x_end)` for each consecutive via pair.
    pub fn moves(&self, chain: &KinematicChain) -> Vec<(TaskPose, TaskPose)> {
        self.via
            .windows(2)
            .map(|w| (chain.fk(&w[0]), chain.fk(&w[1])))
            .collect()
    }
}

/// Uniform in `[0, 1)` draw `w`: below `p_goal` the target itself, otherwise
/// the candidate farthest (task-space) from the tree.
pub fn choose_random_configuration(
    w: f64,
    candidates: &[JointConfig],
    tree: &Tree,
    target: &JointConfig,
    p_goal: f64,
    chain: &KinematicChain,
) -> JointConfig {
    if w < p_goal || candidates.is_empty() {
        return *target;
    }
    let mut best = candidates[0];
    let mut best_d = f64::NEG_INFINITY;
    for c in candidates {
        let d = distance_to_tree(tree, c, chain);
        if d > best_d {
            best_d = d;
            best = *c;
        }
    }
    best
}

/// Minimum task-space (position) distance from `fk(c)` to any tree node.
pub fn distance_to_tree(tree: &Tree, c: &JointConfig, chain: &KinematicChain) -> f64 {
    let p = chain.fk_position(c);
    tree.nodes()
        .iter()
        .map(|n| (n.position - p).norm_squared())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

pub fn random_configuration<R: Rng + ?Sized>(
    tree: &Tree,
    target: &JointConfig,
    params: &PlannerParams,
    chain: &KinematicChain,
    rng: &mut R,
) -> JointConfig {
    let w: f64 = rng.gen();
    if w < params.p_goal {
        return *target;
    }
    let candidates: Vec<JointConfig> = (0..params.n_rand).map(|_| chain.sample(rng)).collect();
    choose_random_configuration(w, &candidates, tree, target, params.p_goal, chain)
}

/// Orders `(score, joint distance, index)` triples; lower is better.
fn rank(a: (f64, f64, usize), b: (f64, f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.cmp(&b.2))
}

/// Tree node whose segment to `c` has the lowest cost; ties go to the
/// smaller joint-space distance, then the smaller index.
pub fn closest_configuration(eval: &mut SegmentCost<'_>, tree: &Tree, c: &JointConfig) -> usize {
    cheapest_node(eval, tree, c).1
}

/// `(score, index)` of the node with the cheapest segment to `c` under
/// [`rank`]. Exhaustive over the tree, but a segment is abandoned as soon as
/// its running score strictly exceeds the best so far, since it cannot win.
fn cheapest_node(eval: &mut SegmentCost<'_>, tree: &Tree, c: &JointConfig) -> (f64, usize) {
    let nodes = tree.nodes();
    // the joint-space nearest node usually gives a tight first bound
    let nearest = (0..nodes.len())
        .min_by(|&i, &j| nodes[i].config.distance_squared(c).total_cmp(&nodes[j].config.distance_squared(c)))
        .expect("a tree always has its root");
    let mut best = (eval.score(&nodes[nearest].config, c), nodes[nearest].config.distance_squared(c), nearest);
    for (i, n) in nodes.iter().enumerate() {
        if i == nearest {
            continue;
        }
        let Some(score) = eval.score_within(&n.config, c, best.0) else {
            continue;
        };
        let cand = (score, n.config.distance_squared(c), i);
        if rank(cand, best) == Ordering::Less {
            best = cand;
        }
    }
    (best.0, best.2)
}

/// `c_r` itself if within `eta` of `c_n`, else the point at distance `eta`
/// from `c_n` toward `c_r`.
pub fn new_configuration(c_r: &JointConfig, c_n: &JointConfig, eta: f64) -> JointConfig {
    let d = c_r.distance(c_n);
    if d <= eta {
        *c_r
    } else {
        c_n.lerp(c_r, eta / d)
    }
}

/// Reparents up to `k_rewire` joint-space nearest neighbours of `new` through
/// `new` whenever that strictly lowers their accumulated score, or keeps it
/// equal while strictly shortening their joint-space branch. Returns the
/// number of reparented nodes.
pub fn rewire_neighbours(eval: &mut SegmentCost<'_>, tree: &mut Tree, new: usize, k_rewire: usize) -> usize {
    let c_new = tree.node(new).config;
    let mut neighbours: Vec<(f64, usize)> = tree
        .nodes()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != new)
        .map(|(i, n)| (n.config.distance_squared(&c_new), i))
        .collect();
    neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    neighbours.truncate(k_rewire);

    let mut rewired = 0;
    for (_, n) in neighbours {
        if n == 0 || tree.is_ancestor(n, new) {
            continue;
        }
        let seg = eval.score(&c_new, &tree.node(n).config);
        let through_new = tree.node(new).score + seg;
        let old = tree.node(n);
        let shorter = || tree.node(new).length + c_new.distance(&old.config) < old.length;
        if through_new < old.score || (through_new == old.score && shorter()) {
            tree.reparent(n, new, seg);
            rewired += 1;
        }
    }
    rewired
}

/// Grows a tree from `root` toward `target` for `params.k_iter` iterations.
/// Iterations whose extension is inadmissible or degenerate add no node.
pub fn grow_tree<R: Rng + ?Sized>(
    eval: &mut SegmentCost<'_>,
    root: &JointConfig,
    target: &JointConfig,
    params: &PlannerParams,
    rng: &mut R,
) -> Tree {
    let chain = eval.chain().clone();
    let mut tree = Tree::new(*root, &chain);
    for _ in 0..params.k_iter {
        let c_r = random_configuration(&tree, target, params, &chain, rng);
        let nearest = closest_configuration(eval, &tree, &c_r);
        let c_n = tree.node(nearest).config;
        if c_r == c_n {
            continue;
        }
        let c = new_configuration(&c_r, &c_n, params.eta);
        if c == c_n || (c == *target && tree.nodes().iter().any(|n| n.config == c)) {
            continue;
        }
        let edge = eval.score(&c_n, &c);
        if !edge.is_finite() {
            continue;
        }
        let idx = tree.insert(c, nearest, edge, &chain);
        rewire_neighbours(eval, &mut tree, idx, params.k_rewire);
    }
    tree
}

/// Tree rooted at `start`, grown toward `goal` under the failure map.
pub fn prob_rrt(
    map: &FailureMap,
    start: &JointConfig,
    goal: &JointConfig,
    params: &PlannerParams,
    chain: &KinematicChain,
) -> Tree {
    let mut eval = SegmentCost::new(map, chain, params.failure_model());
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    grow_tree(&mut eval, start, goal, params, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bridge {
    pub start_node: usize,
    pub end_leaf: usize,
    /// Score of the bridging segment `start_node → end_leaf`.
    pub score: f64,
}

/// Connects every leaf of `end_tree` to the `start_tree` node with the
/// cheapest bridging segment.
pub fn connect_trees(eval: &mut SegmentCost<'_>, start_tree: &Tree, end_tree: &Tree) -> Vec<Bridge> {
    end_tree
        .leaves()
        .map(|leaf| {
            let (score, start_node) = cheapest_node(eval, start_tree, &end_tree.node(leaf).config);
            Bridge {
                start_node,
                end_leaf: leaf,
                score,
            }
        })
        .collect()
}

/// Via points `start root → … → start_node → end_leaf → … → end root`,
/// trimmed to begin at the last visit of the start root and end at the first
/// visit of the end root. Goal biasing can put either root inside the other
/// tree; the trimmed loops only add nonnegative score.
pub fn assemble(start_tree: &Tree, end_tree: &Tree, bridge: &Bridge) -> Vec<JointConfig> {
    let mut via = start_tree.path_from_root(bridge.start_node);
    let mut tail = end_tree.path_from_root(bridge.end_leaf);
    tail.reverse();
    via.extend(tail);
    via.dedup();
    let (start, goal) = (start_tree.node(0).config, end_tree.node(0).config);
    let first = via.iter().rposition(|c| *c == start).unwrap_or(0);
    let last = first + via[first..].iter().position(|c| *c == goal).unwrap_or(via.len() - 1 - first);
    via.truncate(last + 1);
    via.drain(..first);
    via
}

/// The assembled bridge path with the lowest total cost, ties broken by
/// joint-space length and then bridge order. Returns the path and its cost.
pub fn best_path(
    eval: &mut SegmentCost<'_>,
    start_tree: &Tree,
    end_tree: &Tree,
    bridges: &[Bridge],
) -> Result<(Path, f64), PlanError> {
    let mut best: Option<(f64, f64, Vec<JointConfig>)> = None;
    for b in bridges {
        let via = assemble(start_tree, end_tree, b);
        if via.len() < 2 {
            continue;
        }
        let score = eval.path_score(&via);
        if !score.is_finite() {
            continue;
        }
        let len: f64 = via.windows(2).map(|w| w[0].distance(&w[1])).sum();
        let better = match &best {
            None => true,
            Some((s, l, _)) => score.total_cmp(s).then(len.total_cmp(l)) == Ordering::Less,
        };
        if better {
            best = Some((score, len, via));
        }
    }
    let (score, _, via) = best.ok_or(PlanError::NoPath)?;
    Ok((Path::new(via)?, eval.model().cost(score)))
}

/// Everything one planning episode produced.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub result: Result<(Path, f64), PlanError>,
    pub start_tree: Tree,
    pub end_tree: Tree,
    pub bridges: Vec<Bridge>,
    pub segment_evaluations: usize,
    pub samples: usize,
}

impl PlanOutcome {
    pub fn trace(&self, chain: &KinematicChain) -> PlanTrace {
        let path = self.result.as_ref().ok().map(|(p, _)| p.via().to_vec()).unwrap_or_default();
        PlanTrace {
            start_tree: self.start_tree.trace(),
            end_tree: self.end_tree.trace(),
            path_positions: path.iter().map(|c| chain.fk_position(c).to_array()).collect(),
            path,
            cost: self.result.as_ref().ok().map(|(_, c)| *c),
        }
    }
}

/// Serializable record of a planning episode for rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanTrace {
    pub start_tree: Vec<TraceNode>,
    pub end_tree: Vec<TraceNode>,
    pub path: Vec<JointConfig>,
    pub path_positions: Vec<[f64; 3]>,
    pub cost: Option<f64>,
}

/// Grows both trees, bridges them and extracts the cheapest path under
/// `model`.
pub fn plan_with_model(
    map: &FailureMap,
    start: &JointConfig,
    goal: &JointConfig,
    params: &PlannerParams,
    chain: &KinematicChain,
    model: CostModel,
) -> PlanOutcome {
    let mut eval = SegmentCost::new(map, chain, model);
    let mut rng_start = ChaCha8Rng::seed_from_u64(seed::derive(params.rng_seed, &[0]));
    let mut rng_end = ChaCha8Rng::seed_from_u64(seed::derive(params.rng_seed, &[1]));
    let start_tree = grow_tree(&mut eval, start, goal, params, &mut rng_start);
    let end_tree = grow_tree(&mut eval, goal, start, params, &mut rng_end);
    let bridges = connect_trees(&mut eval, &start_tree, &end_tree);
    let result = best_path(&mut eval, &start_tree, &end_tree, &bridges);
    PlanOutcome {
        result,
        start_tree,
        end_tree,
        bridges,
        segment_evaluations: eval.evaluations(),
        samples: eval.samples(),
    }
}

/// Minimum-failure-probability path from `start` to `goal`.
pub fn plan(
    map: &FailureMap,
    start: &JointConfig,
    goal: &JointConfig,
    params: &PlannerParams,
    chain: &KinematicChain,
) -> PlanOutcome {
    plan_with_model(map, start, goal, params, chain, params.failure_model())
}
