use std::collections::HashMap;

use crate::failure_map::{segment_samples, segment_score_bounded, Bounded, FailureMap, PathFailureParams};
use crate::kinematics::{JointConfig, KinematicChain, DOF};

/// How a joint-space segment is scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostModel {
    /// Survival-form failure probability. Scores are accumulated hazards
    /// `-Σ (Δ_k/Δ) ln(1 - p_k)`; the probability is `1 - exp(-score)`.
    Failure { delta: f64 },
    /// Hard constraint: a segment with any sample at `prob_fail ≥ tau` is
    /// inadmissible (infinite score), otherwise it scores its joint-space
    /// length.
    Threshold { delta: f64, tau: f64 },
}

impl CostModel {
    pub fn delta(&self) -> f64 {
        match *self {
            CostModel::Failure { delta } | CostModel::Threshold { delta, .. } => delta,
        }
    }

    /// Converts an accumulated score into the reported cost.
    pub fn cost(&self, score: f64) -> f64 {
        match self {
            CostModel::Failure { .. } => -(-score).exp_m1(),
            CostModel::Threshold { .. } => score,
        }
    }
}

type SegmentKey = ([u64; DOF], [u64; DOF]);

#[derive(Debug, Clone, Copy)]
enum Cached {
    Exact(f64),
    /// The score is strictly greater than this value.
    Above(f64),
}

/// Segment scorer for one planning episode. The map is borrowed immutably, so
/// scores are cached by segment endpoints for the lifetime of the evaluator.
pub struct SegmentCost<'a> {
    map: &'a FailureMap,
    chain: &'a KinematicChain,
    model: CostModel,
    map_version: u64,
    cache: HashMap<SegmentKey, Cached>,
    evaluations: usize,
    samples: usize,
}

impl<'a> SegmentCost<'a> {
    pub fn new(map: &'a FailureMap, chain: &'a KinematicChain, model: CostModel) -> Self {
        SegmentCost {
            map,
            chain,
            model,
            map_version: map.version(),
            cache: HashMap::new(),
            evaluations: 0,
            samples: 0,
        }
    }

    pub fn map(&self) -> &FailureMap {
        self.map
    }

    pub fn chain(&self) -> &KinematicChain {
        self.chain
    }

    pub fn model(&self) -> CostModel {
        self.model
    }

    /// Number of `score` calls, cached or not.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Number of discretization samples actually evaluated.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Additive score of moving from `a` to `b`.
    pub fn score(&mut self, a: &JointConfig, b: &JointConfig) -> f64 {
        match self.score_within(a, b, f64::INFINITY) {
            Some(s) => s,
            None => unreachable!("no finite score exceeds an infinite limit"),
        }
    }

    /// Score of `a → b` if it is at most `limit`, `None` if it is strictly
    /// greater. Evaluation stops as soon as the outcome is decided.
    pub fn score_within(&mut self, a: &JointConfig, b: &JointConfig, limit: f64) -> Option<f64> {
        debug_assert_eq!(self.map_version, self.map.version());
        self.evaluations += 1;
        let key = (a.bits(), b.bits());
        match self.cache.get(&key) {
            Some(&Cached::Exact(s)) => return (s <= limit).then_some(s),
            Some(&Cached::Above(lb)) if lb >= limit => return None,
            _ => {}
        }
        let entry = self.evaluate(a, b, limit);
        self.cache.insert(key, entry);
        match entry {
            Cached::Exact(s) => Some(s),
            Cached::Above(_) => None,
        }
    }

    fn evaluate(&mut self, a: &JointConfig, b: &JointConfig, limit: f64) -> Cached {
        match self.model {
            CostModel::Failure { delta } => {
                let params = PathFailureParams {
                    delta,
                    ..PathFailureParams::default()
                };
                match segment_score_bounded(self.map, self.chain, a, b, &params, limit) {
                    Bounded::Exact { score, samples } => {
                        self.samples += samples;
                        Cached::Exact(score)
                    }
                    Bounded::Exceeds { samples, .. } => {
                        self.samples += samples;
                        Cached::Above(limit)
                    }
                }
            }
            CostModel::Threshold { delta, tau } => {
                let length = a.distance(b);
                // both outcomes, the length or infinity, exceed the limit
                if length > limit {
                    return Cached::Above(limit);
                }
                for c in segment_samples(a, b, delta) {
                    self.samples += 1;
                    if self.map.prob_fail(&self.chain.fk(&c)) >= tau {
                        return Cached::Exact(f64::INFINITY);
                    }
                }
                Cached::Exact(length)
            }
        }
    }

    /// Score of a whole polyline.
    pub fn path_score(&mut self, via: &[JointConfig]) -> f64 {
        via.windows(2).map(|w| self.score(&w[0], &w[1])).sum()
    }
}
