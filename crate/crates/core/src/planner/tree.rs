use serde::Serialize;

use crate::geometry::Vec3;
use crate::kinematics::{JointConfig, KinematicChain};

#[derive(Debug, Clone)]
pub struct Node {
    pub config: JointConfig,
    pub parent: Option<usize>,
    /// Accumulated additive score from the root.
    pub score: f64,
    /// Score of the edge from the parent.
    pub edge_score: f64,
    /// Joint-space length of the branch from the root.
    pub length: f64,
    pub children: Vec<usize>,
    /// Cached end-effector position.
    pub position: Vec3,
}

/// RRT graph rooted at node 0.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn new(root: JointConfig, chain: &KinematicChain) -> Self {
        Tree {
            nodes: vec![Node {
                config: root,
                parent: None,
                score: 0.0,
                edge_score: 0.0,
                length: 0.0,
                children: Vec::new(),
                position: chain.fk_position(&root),
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn root(&self) -> &JointConfig {
        &self.nodes[0].config
    }

    pub fn insert(&mut self, config: JointConfig, parent: usize, edge_score: f64, chain: &KinematicChain) -> usize {
        let idx = self.nodes.len();
        let score = self.nodes[parent].score + edge_score;
        let length = self.nodes[parent].length + self.nodes[parent].config.distance(&config);
        self.nodes.push(Node {
            config,
            parent: Some(parent),
            score,
            edge_score,
            length,
            children: Vec::new(),
            position: chain.fk_position(&config),
        });
        self.nodes[parent].children.push(idx);
        idx
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.children.is_empty())
            .map(|(i, _)| i)
    }

    /// True if `ancestor` lies on the parent chain of `node` (or equals it).
    pub fn is_ancestor(&self, ancestor: usize, node: usize) -> bool {
        let mut cur = Some(node);
        while let Some(i) = cur {
            if i == ancestor {
                return true;
            }
            cur = self.nodes[i].parent;
        }
        false
    }

    /// Configurations from the root down to `node`.
    pub fn path_from_root(&self, node: usize) -> Vec<JointConfig> {
        let mut out = Vec::new();
        let mut cur = Some(node);
        while let Some(i) = cur {
            out.push(self.nodes[i].config);
            cur = self.nodes[i].parent;
        }
        out.reverse();
        out
    }

    /// Moves `node` under `new_parent` and refreshes accumulated scores of its
    /// subtree.
    pub fn reparent(&mut self, node: usize, new_parent: usize, edge_score: f64) {
        assert!(node != 0, "root cannot be reparented");
        assert!(!self.is_ancestor(node, new_parent), "reparenting would create a cycle");
        if let Some(old) = self.nodes[node].parent {
            self.nodes[old].children.retain(|&c| c != node);
        }
        self.nodes[node].parent = Some(new_parent);
        self.nodes[node].edge_score = edge_score;
        self.nodes[new_parent].children.push(node);
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            let parent = self.nodes[i].parent.expect("non-root");
            self.nodes[i].score = self.nodes[parent].score + self.nodes[i].edge_score;
            self.nodes[i].length = self.nodes[parent].length + self.nodes[parent].config.distance(&self.nodes[i].config);
            stack.extend(self.nodes[i].children.iter().copied());
        }
    }

    /// Checks the structural invariants: single root, acyclic parent links,
    /// consistent child lists, consistent branch lengths and non-negative
    /// scores with a zero root.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        if self.nodes[0].parent.is_some() || self.nodes[0].score != 0.0 {
            return Err("root must have no parent and zero score".into());
        }
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            let p = n.parent.ok_or_else(|| format!("node {i} has no parent"))?;
            if !self.nodes[p].children.contains(&i) {
                return Err(format!("node {i} missing from child list of {p}"));
            }
            if !(n.score >= 0.0) {
                return Err(format!("node {i} has score {}", n.score));
            }
            let len = self.nodes[p].length + self.nodes[p].config.distance(&n.config);
            if (n.length - len).abs() > 1e-9 * (1.0 + len) {
                return Err(format!("node {i} branch length {} != {len}", n.length));
            }
            let mut steps = 0;
            let mut cur = i;
            while let Some(q) = self.nodes[cur].parent {
                cur = q;
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(format!("cycle through node {i}"));
                }
            }
            if cur != 0 {
                return Err(format!("node {i} does not reach the root"));
            }
        }
        Ok(())
    }

    pub fn trace(&self) -> Vec<TraceNode> {
        self.nodes
            .iter()
            .map(|n| TraceNode {
                config: n.config,
                parent: n.parent,
                position: n.position.to_array(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct TraceNode {
    pub config: JointConfig,
    pub parent: Option<usize>,
    pub position: [f64; 3],
}
