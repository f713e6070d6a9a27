use super::{check_finite, Interval, ModelError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes to `left`, otherwise `right`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary decision tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Node id of the leaf that `x` reaches.
    pub fn leaf_for(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                TreeNode::Leaf { .. } => return id,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_for(x)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!("leaf_for returns a leaf"),
        }
    }

    /// Leaf ids in ascending order.
    pub fn leaves(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| matches!(n, TreeNode::Leaf { .. }).then_some(i))
            .collect()
    }

    /// Leaf ids in the subtree rooted at `node`, in ascending order.
    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                TreeNode::Leaf { .. } => out.push(id),
                TreeNode::Split { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn leaf_value(&self, id: usize) -> Option<f64> {
        match self.nodes.get(id) {
            Some(TreeNode::Leaf { value }) => Some(*value),
            _ => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], id: usize) -> usize {
            match nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Checks that the node array is a rooted binary tree over `n_features`.
    fn validate(nodes: &[TreeNode], tree: usize, n_features: usize) -> Result<(), ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::EmptyTree { tree });
        }
        let len = nodes.len();
        for (node, n) in nodes.iter().enumerate() {
            match *n {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features {
                        return Err(ModelError::FeatureOutOfRange {
                            tree,
                            node,
                            feature,
                            n_features,
                        });
                    }
                    check_finite(&[threshold], || format!("trees[{tree}].nodes[{node}].threshold"))?;
                    for child in [left, right] {
                        if child >= len {
                            return Err(ModelError::ChildOutOfRange { tree, node, child, len });
                        }
                    }
                }
                TreeNode::Leaf { value } => {
                    check_finite(&[value], || format!("trees[{tree}].nodes[{node}].leaf"))?;
                }
            }
        }

        // Depth-first walk; `on_path` catches back edges, `seen` catches
        // nodes with two parents.
        let mut seen = vec![false; len];
        let mut on_path = vec![false; len];
        seen[0] = true;
        let mut stack: Vec<(usize, u8)> = vec![(0, 0)];
        on_path[0] = true;
        while let Some(&mut (node, ref mut step)) = stack.last_mut() {
            let next = match nodes[node] {
                TreeNode::Split { left, right, .. } if *step < 2 => {
                    let child = if *step == 0 { left } else { right };
                    *step += 1;
                    Some(child)
                }
                _ => None,
            };
            match next {
                Some(child) => {
                    if on_path[child] {
                        return Err(ModelError::Cycle { tree, node, child });
                    }
                    if seen[child] {
                        return Err(ModelError::SharedNode { tree, node, child });
                    }
                    seen[child] = true;
                    on_path[child] = true;
                    stack.push((child, 0));
                }
                None => {
                    on_path[node] = false;
                    stack.pop();
                }
            }
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(ModelError::Unreachable { tree, node });
        }
        Ok(())
    }
}

/// Sum-of-trees regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    n_features: usize,
    base_score: f64,
    trees: Vec<Tree>,
    feature_bounds: Vec<Interval>,
}

impl TreeEnsemble {
    pub fn new(
        n_features: usize,
        base_score: f64,
        trees: Vec<Vec<TreeNode>>,
        feature_bounds: Vec<Interval>,
    ) -> Result<Self, ModelError> {
        if n_features == 0 {
            return Err(ModelError::NoFeatures);
        }
        check_finite(&[base_score], || "base_score".into())?;
        if feature_bounds.len() != n_features {
            return Err(ModelError::InputLength {
                expected: n_features,
                found: feature_bounds.len(),
            });
        }
        for (index, b) in feature_bounds.iter().enumerate() {
            if !b.is_finite() {
                return Err(ModelError::InfiniteBound { index });
            }
            if b.lo > b.hi {
                return Err(ModelError::InvertedBound {
                    index,
                    lb: b.lo,
                    ub: b.hi,
                });
            }
        }
        let trees = trees
            .into_iter()
            .enumerate()
            .map(|(t, nodes)| Tree::validate(&nodes, t, n_features).map(|_| Tree { nodes }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            n_features,
            base_score,
            trees,
            feature_bounds,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
    pub fn base_score(&self) -> f64 {
        self.base_score
    }
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
    pub fn feature_bounds(&self) -> &[Interval] {
        &self.feature_bounds
    }

    /// `base_score` plus the reached leaf value of every tree. Ties
    /// (`x == threshold`) go left.
    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::InputLength {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(self.trees.iter().fold(self.base_score, |acc, t| acc + t.predict(x)))
    }

    /// Sorted distinct thresholds used by each feature.
    pub fn thresholds(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_features];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let TreeNode::Split { feature, threshold, .. } = *node {
                    out[feature].push(threshold);
                }
            }
        }
        for v in &mut out {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        out
    }

    pub fn split_count(&self) -> usize {
        self.trees
            .iter()
            .flat_map(|t| &t.nodes)
            .filter(|n| matches!(n, TreeNode::Split { .. }))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> Vec<TreeNode> {
        vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Leaf { value: 1.0 },
            TreeNode::Leaf { value: 2.0 },
        ]
    }

    fn unit_box(n: usize) -> Vec<Interval> {
        vec![Interval::new(0.0, 1.0); n]
    }

    #[test]
    fn predict_examples() {
        let ens = TreeEnsemble::new(1, 0.0, vec![stump()], unit_box(1)).unwrap();
        assert_eq!(ens.predict(&[0.5]).unwrap(), 1.0);
        assert_eq!(ens.predict(&[0.7]).unwrap(), 2.0);
        let twice = TreeEnsemble::new(1, 0.5, vec![stump(), stump()], unit_box(1)).unwrap();
        assert_eq!(twice.predict(&[0.0]).unwrap(), 2.5);
        assert!(twice.predict(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn malformed_trees_are_rejected() {
        let mut self_loop = stump();
        self_loop[0] = TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            left: 0,
            right: 2,
        };
        assert!(matches!(
            TreeEnsemble::new(1, 0.0, vec![self_loop], unit_box(1)),
            Err(ModelError::Cycle {
                tree: 0,
                node: 0,
                child: 0
            })
        ));

        let mut bad_feature = stump();
        bad_feature[0] = TreeNode::Split {
            feature: 5,
            threshold: 0.5,
            left: 1,
            right: 2,
        };
        assert!(matches!(
            TreeEnsemble::new(2, 0.0, vec![bad_feature], unit_box(2)),
            Err(ModelError::FeatureOutOfRange { feature: 5, .. })
        ));

        let mut out_of_range = stump();
        out_of_range[0] = TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            left: 1,
            right: 7,
        };
        assert!(matches!(
            TreeEnsemble::new(1, 0.0, vec![out_of_range], unit_box(1)),
            Err(ModelError::ChildOutOfRange { child: 7, .. })
        ));

        let mut orphan = stump();
        orphan.push(TreeNode::Leaf { value: 3.0 });
        assert!(matches!(
            TreeEnsemble::new(1, 0.0, vec![stump(), orphan], unit_box(1)),
            Err(ModelError::Unreachable { tree: 1, node: 3 })
        ));

        let shared = vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 1,
            },
            TreeNode::Leaf { value: 1.0 },
        ];
        assert!(matches!(
            TreeEnsemble::new(1, 0.0, vec![shared], unit_box(1)),
            Err(ModelError::SharedNode { .. })
        ));

        let deep_cycle = vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Split {
                feature: 0,
                threshold: 0.2,
                left: 3,
                right: 0,
            },
            TreeNode::Leaf { value: 1.0 },
            TreeNode::Leaf { value: 1.0 },
        ];
        assert!(matches!(
            TreeEnsemble::new(1, 0.0, vec![deep_cycle], unit_box(1)),
            Err(ModelError::Cycle { node: 1, child: 0, .. })
        ));
    }

    #[test]
    fn structure_queries() {
        let nodes = vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Split {
                feature: 1,
                threshold: 0.25,
                left: 3,
                right: 4,
            },
            TreeNode::Leaf { value: 3.0 },
            TreeNode::Leaf { value: 1.0 },
            TreeNode::Leaf { value: 2.0 },
        ];
        let ens = TreeEnsemble::new(2, 0.0, vec![nodes, stump()], unit_box(2)).unwrap();
        let t = &ens.trees()[0];
        assert_eq!(t.leaves(), vec![2, 3, 4]);
        assert_eq!(t.leaves_under(1), vec![3, 4]);
        assert_eq!(t.depth(), 2);
        assert_eq!(ens.thresholds(), vec![vec![0.5], vec![0.25]]);
        assert_eq!(ens.split_count(), 3);
    }
}
