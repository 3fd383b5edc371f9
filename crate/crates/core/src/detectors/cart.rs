//! Binary CART with Gini impurity over dense real features.
//!
//! Samples go left when `x[feature] <= threshold`. Ties between equally good
//! splits keep the lowest feature index, then the lowest threshold.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        malicious: bool,
        benign_count: u32,
        malicious_count: u32,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

fn gini(benign: usize, malicious: usize) -> f64 {
    let n = (benign + malicious) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (pb, pm) = (benign as f64 / n, malicious as f64 / n);
    1.0 - pb * pb - pm * pm
}

fn counts(y: &[bool], idx: &[usize]) -> (usize, usize) {
    let m = idx.iter().filter(|&&i| y[i]).count();
    (idx.len() - m, m)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    max_depth: usize,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let (b, m) = counts(self.y, idx);
        self.nodes.push(TreeNode::Leaf {
            // ties go to benign
            malicious: m > b,
            benign_count: b as u32,
            malicious_count: m as u32,
        });
        self.nodes.len() - 1
    }

    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let (b, m) = counts(self.y, idx);
        let n = idx.len() as f64;
        let parent = gini(b, m);
        let n_features = self.x.first().map_or(0, Vec::len);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..n_features {
            order.sort_by(|&a, &c| self.x[a][f].total_cmp(&self.x[c][f]).then(a.cmp(&c)));
            let (mut lb, mut lm) = (0usize, 0usize);
            for k in 0..order.len() - 1 {
                if self.y[order[k]] {
                    lm += 1;
                } else {
                    lb += 1;
                }
                let (v, next) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if v == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let impurity = (nl * gini(lb, lm) + (n - nl) * gini(b - lb, m - lm)) / n;
                if impurity < parent - 1e-12 && best.is_none_or(|(bi, _, _)| impurity < bi - 1e-12)
                {
                    best = Some((impurity, f, v + (next - v) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let (b, m) = counts(self.y, idx);
        if depth >= self.max_depth || b == 0 || m == 0 || idx.len() < 2 {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

impl Tree {
    pub fn leaf(malicious: bool) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf {
                malicious,
                benign_count: 0,
                malicious_count: 0,
            }],
        }
    }

    /// `x` rows must all have the same length; `y` is true for malicious.
    pub fn fit(x: &[Vec<f64>], y: &[bool], max_depth: usize) -> Self {
        assert_eq!(x.len(), y.len());
        let mut builder = Builder {
            x,
            y,
            max_depth,
            nodes: Vec::new(),
        };
        let idx: Vec<usize> = (0..x.len()).collect();
        builder.grow(&idx, 0);
        Tree {
            nodes: builder.nodes,
        }
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { malicious, .. } => return *malicious,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_needs_depth_two() {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let y = vec![false, true, true, false];
        // no single split lowers impurity, so the stump stays a leaf
        assert_eq!(Tree::fit(&x, &y, 8).nodes.len(), 1);
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![false, false, true, true];
        let t = Tree::fit(&x, &y, 8);
        assert_eq!(t.depth(), 1);
        assert!(matches!(t.nodes[0], TreeNode::Split { threshold, .. } if threshold == 1.5));
        for (row, label) in x.iter().zip(&y) {
            assert_eq!(t.predict(row), *label);
        }
    }

    #[test]
    fn depth_cap_and_fit() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..64).map(|i| i % 2 == 1).collect();
        let t = Tree::fit(&x, &y, 3);
        assert!(t.depth() <= 3);
        let full = Tree::fit(&x, &y, 8);
        assert!(full.depth() <= 8);
    }

    #[test]
    fn tie_prefers_lower_feature() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let y = vec![false, true];
        let t = Tree::fit(&x, &y, 8);
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn majority_tie_is_benign() {
        let x = vec![vec![0.0], vec![0.0]];
        let t = Tree::fit(&x, &[false, true], 8);
        assert!(!t.predict(&[0.0]));
    }
}
