//! Comparison planners.
//!
//! * Hard constraint: the same bidirectional tree search, but every state whose
//!   failure probability reaches a threshold is forbidden and the remaining
//!   states are free. Path cost is joint-space length.
//! * Epsilon-greedy: a joint-space walk that steps toward the goal with
//!   probability `epsilon` and otherwise in a uniformly random direction. It
//!   ignores the failure map.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::failure_map::FailureMap;
use crate::kinematics::{JointConfig, KinematicChain};
use crate::planner::{self, new_configuration, CostModel, Path, PlanError, PlanOutcome, PlannerParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonParams {
    pub epsilon: f64,
    /// Joint-space step length (radians, 2-norm).
    pub step: f64,
    /// Long enough that the mean drift `epsilon * step` per step covers the
    /// 3-D start-goal distance twice over at `epsilon = 0.2`.
    pub max_steps: usize,
}

impl Default for EpsilonParams {
    fn default() -> Self {
        EpsilonParams {
            epsilon: 0.2,
            step: 0.1,
            max_steps: 1000,
        }
    }
}

#[derive(Debug)]
pub struct HardOutcome {
    pub path: Path,
    /// True when no admissible start-to-goal path existed and the partial
    /// fallback was returned.
    pub fallback: bool,
    pub samples: usize,
    pub plan: PlanOutcome,
}

/// Hard-constraint planner. Always yields an executable path: the shortest
/// admissible one when it exists, otherwise the start-tree branch ending
/// closest to the goal, or a single `eta` step toward the goal if the tree
/// never left its root.
pub fn hard_plan(
    map: &FailureMap,
    start: &JointConfig,
    goal: &JointConfig,
    params: &PlannerParams,
    tau: f64,
    chain: &KinematicChain,
) -> HardOutcome {
    let model = CostModel::Threshold {
        delta: params.delta,
        tau,
    };
    let plan = planner::plan_with_model(map, start, goal, params, chain, model);
    let samples = plan.samples;
    if let Ok((path, _)) = &plan.result {
        return HardOutcome {
            path: path.clone(),
            fallback: false,
            samples,
            plan,
        };
    }
    let tree = &plan.start_tree;
    let nearest = (0..tree.len())
        .min_by(|&a, &b| {
            let da = tree.node(a).config.distance(goal);
            let db = tree.node(b).config.distance(goal);
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .expect("tree has a root");
    let via = if nearest == 0 {
        vec![*start, new_configuration(goal, start, params.eta)]
    } else {
        tree.path_from_root(nearest)
    };
    let path = Path::from_points(via).expect("fallback moves away from the start");
    HardOutcome {
        path,
        fallback: true,
        samples,
        plan,
    }
}

/// Epsilon-greedy walk from `start`. Each step moves `step` toward the goal
/// with probability `epsilon`, otherwise `step` along a uniformly random unit
/// direction (clamped to the joint limits, so never longer than `step`).
/// Ends at the goal once within one step of it; otherwise after `max_steps`.
pub fn epsilon_plan<R: Rng + ?Sized>(
    start: &JointConfig,
    goal: &JointConfig,
    params: &EpsilonParams,
    chain: &KinematicChain,
    rng: &mut R,
) -> Result<Path, PlanError> {
    if !(params.step > 0.0) || !(0.0..=1.0).contains(&params.epsilon) {
        return Err(PlanError::InvalidParams("epsilon walk needs step > 0 and epsilon in [0, 1]"));
    }
    let mut via = vec![*start];
    let mut current = *start;
    for _ in 0..params.max_steps {
        if current.distance(goal) <= params.step {
            via.push(*goal);
            break;
        }
        current = if rng.gen::<f64>() < params.epsilon {
            new_configuration(goal, &current, params.step)
        } else {
            chain.clamp(&random_step(&current, params.step, rng))
        };
        via.push(current);
    }
    Path::from_points(via)
}

fn random_step<R: Rng + ?Sized>(from: &JointConfig, step: f64, rng: &mut R) -> JointConfig {
    loop {
        let mut u = JointConfig::ZERO;
        for j in 0..u.0.len() {
            u[j] = rng.sample(StandardNormal);
        }
        let n = u.distance(&JointConfig::ZERO);
        if n > 1e-12 {
            let mut out = *from;
            for j in 0..out.0.len() {
                out[j] += step * u[j] / n;
            }
            return out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn endpoints() -> (KinematicChain, JointConfig, JointConfig) {
        let chain = KinematicChain::default_planar();
        (chain, JointConfig::splat(0.2), JointConfig([1.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]))
    }

    #[test]
    fn greedy_walk_reaches_goal_in_steps() {
        let (chain, s, g) = endpoints();
        let params = EpsilonParams {
            epsilon: 1.0,
            ..EpsilonParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let path = epsilon_plan(&s, &g, &params, &chain, &mut rng).unwrap();
        assert_eq!(path.last(), &g);
        let expect = (s.distance(&g) / params.step).ceil() as usize;
        assert_eq!(path.via().len(), expect + 1);
        for w in path.via().windows(2) {
            assert!(w[0].distance(&w[1]) <= params.step + 1e-12);
        }
    }

    #[test]
    fn random_walk_respects_limits_and_step() {
        let (chain, s, g) = endpoints();
        let params = EpsilonParams {
            epsilon: 0.0,
            max_steps: 50,
            ..EpsilonParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let path = epsilon_plan(&s, &g, &params, &chain, &mut rng).unwrap();
        assert!(path.via().iter().all(|c| chain.within_limits(c)));
        assert!(path.via().len() <= params.max_steps + 2);
    }

    #[test]
    fn hard_plan_without_failures_is_admissible() {
        let (chain, s, g) = endpoints();
        let map = FailureMap::default();
        let params = PlannerParams::default();
        let out = hard_plan(&map, &s, &g, &params, 0.01, &chain);
        assert!(!out.fallback);
        assert_eq!(out.path.first(), &s);
        assert_eq!(out.path.last(), &g);
    }

    #[test]
    fn hard_plan_falls_back_when_goal_forbidden() {
        let (chain, s, g) = endpoints();
        let mut map = FailureMap::default();
        // a failure at the goal makes the goal itself inadmissible
        map.push(chain.fk_position(&g), Vec3::new(1.0, 0.0, 0.0), None).unwrap();
        let params = PlannerParams {
            k_iter: 30,
            ..PlannerParams::default()
        };
        let out = hard_plan(&map, &s, &g, &params, 0.01, &chain);
        assert!(out.fallback);
        assert_eq!(out.path.first(), &s);
        assert_ne!(out.path.last(), &g);
        let tree = &out.plan.start_tree;
        let nearest = (0..tree.len())
            .min_by(|&a, &b| tree.node(a).config.distance(&g).total_cmp(&tree.node(b).config.distance(&g)))
            .unwrap();
        if nearest == 0 {
            assert_eq!(out.path.via().len(), 2);
            assert!((out.path.length() - params.eta).abs() < 1e-12);
        } else {
            assert_eq!(out.path.last(), &tree.node(nearest).config);
        }
    }
}
