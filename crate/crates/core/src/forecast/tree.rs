use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::stable_mean;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// Binary regression tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeArrays", into = "TreeArrays")]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Checks that every split refers to later, existing nodes and that all
    /// numbers are finite.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, String> {
        if nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(format!("node {i}: non-finite threshold"));
                    }
                    if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                        return Err(format!("node {i}: invalid children {left}, {right}"));
                    }
                }
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(format!("node {i}: non-finite leaf value"));
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(Self { nodes })
    }

    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Columnar JSON layout; `feature` is -1 for leaves, whose value sits in
/// `value`.
#[derive(Serialize, Deserialize)]
struct TreeArrays {
    feature: Vec<i64>,
    value: Vec<f64>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl From<RegressionTree> for TreeArrays {
    fn from(tree: RegressionTree) -> Self {
        let mut a = TreeArrays {
            feature: Vec::with_capacity(tree.nodes.len()),
            value: Vec::with_capacity(tree.nodes.len()),
            left: Vec::with_capacity(tree.nodes.len()),
            right: Vec::with_capacity(tree.nodes.len()),
        };
        for node in tree.nodes {
            let (f, v, l, r) = match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => (feature as i64, threshold, left, right),
                Node::Leaf { value } => (-1, value, 0, 0),
            };
            a.feature.push(f);
            a.value.push(v);
            a.left.push(l);
            a.right.push(r);
        }
        a
    }
}

impl TryFrom<TreeArrays> for RegressionTree {
    type Error = String;

    fn try_from(a: TreeArrays) -> Result<Self, String> {
        let n = a.feature.len();
        if a.value.len() != n || a.left.len() != n || a.right.len() != n {
            return Err("tree arrays differ in length".into());
        }
        let nodes = (0..n)
            .map(|i| {
                if a.feature[i] < 0 {
                    Node::Leaf { value: a.value[i] }
                } else {
                    Node::Split {
                        feature: a.feature[i] as usize,
                        threshold: a.value[i],
                        left: a.left[i],
                        right: a.right[i],
                    }
                }
            })
            .collect();
        RegressionTree::from_nodes(nodes)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    /// Minimum number of rows in each child of a split.
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features examined per node; all when `None`.
    pub mtry: Option<usize>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
}

/// Grows a least-squares tree on the rows listed in `sample` (repeats allowed).
///
/// `columns` is feature-major. Splits maximise the decrease in squared error,
/// scanning sorted feature values exhaustively; ties go to the lowest feature
/// index, then the lowest threshold.
pub(crate) fn grow<R: Rng + ?Sized>(
    columns: &[Vec<f64>],
    y: &[f64],
    mut sample: Vec<usize>,
    params: GrowParams,
    rng: &mut R,
) -> RegressionTree {
    let n_features = columns.len();
    let mut nodes = Vec::new();
    let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(sample.len());
    let mut right_buf: Vec<usize> = Vec::with_capacity(sample.len());
    let mut targets: Vec<f64> = Vec::with_capacity(sample.len());
    // (node id, rows start, rows end, depth)
    let mut stack = vec![(0usize, 0usize, sample.len(), 0usize)];
    nodes.push(Node::Leaf { value: 0.0 });

    while let Some((id, start, end, depth)) = stack.pop() {
        let rows = &sample[start..end];
        targets.clear();
        targets.extend(rows.iter().map(|&i| y[i]));
        let mean = stable_mean(&targets);
        nodes[id] = Node::Leaf { value: mean };

        let n = rows.len();
        let pure = targets.iter().all(|&v| v == targets[0]);
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || n < 2 * params.min_leaf.max(1) {
            continue;
        }

        let features: Vec<usize> = match params.mtry {
            Some(m) if m < n_features => {
                let mut f = index::sample(rng, n_features, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n_features).collect(),
        };
        let Some(choice) = best_split(columns, &targets, rows, mean, &features, params.min_leaf, &mut scratch)
        else {
            continue;
        };

        // stable in-place partition of sample[start..end]
        right_buf.clear();
        let col = &columns[choice.feature];
        let mut w = start;
        for r in start..end {
            let i = sample[r];
            if col[i] <= choice.threshold {
                sample[w] = i;
                w += 1;
            } else {
                right_buf.push(i);
            }
        }
        sample[w..end].copy_from_slice(&right_buf);

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        stack.push((right, w, end, depth + 1));
        stack.push((left, start, w, depth + 1));
    }
    RegressionTree { nodes }
}

fn best_split(
    columns: &[Vec<f64>],
    targets: &[f64],
    rows: &[usize],
    mean: f64,
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<SplitChoice> {
    let n = rows.len();
    let total: f64 = targets.iter().map(|v| v - mean).sum();
    let total_ss: f64 = targets.iter().map(|v| (v - mean) * (v - mean)).sum();
    let parent = total * total / n as f64;
    let min_leaf = min_leaf.max(1);

    let mut best_score = f64::NEG_INFINITY;
    let mut best: Option<(usize, f64, f64)> = None;
    for &f in features {
        let col = &columns[f];
        scratch.clear();
        scratch.extend(rows.iter().zip(targets).map(|(&i, &t)| (col[i], t - mean)));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if scratch[0].0 == scratch[n - 1].0 {
            continue;
        }
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += scratch[k].1;
            let n_left = k + 1;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            if scratch[k].0 == scratch[k + 1].0 {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64;
            if score > best_score {
                best_score = score;
                best = Some((f, scratch[k].0, scratch[k + 1].0));
            }
        }
    }
    let (feature, a, b) = best?;
    if !(best_score - parent > 1e-12 * total_ss) {
        return None;
    }
    let mid = 0.5 * (a + b);
    let threshold = if mid >= a && mid < b { mid } else { a };
    Some(SplitChoice { feature, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fit(columns: &[Vec<f64>], y: &[f64], params: GrowParams) -> RegressionTree {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        grow(columns, y, (0..y.len()).collect(), params, &mut rng)
    }

    const FULL: GrowParams = GrowParams {
        min_leaf: 1,
        max_depth: None,
        mtry: None,
    };

    #[test]
    fn constant_target_is_a_single_leaf() {
        let x = vec![(0..50).map(f64::from).collect::<Vec<_>>()];
        let tree = fit(&x, &[3.5; 50], FULL);
        assert!(tree.is_leaf());
        assert_eq!(tree.predict(&[100.0]), 3.5);
    }

    #[test]
    fn step_is_one_split_at_midpoint() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 - 10.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let tree = fit(&[x], &y, FULL);
        assert_eq!(tree.nodes().len(), 3);
        assert_eq!(
            tree.nodes()[0],
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = a.iter().map(|&v| if v >= 5.0 { 2.0 } else { 0.0 }).collect();
        let tree = fit(&[a.clone(), a], &y, FULL);
        assert!(matches!(tree.nodes()[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_leaf_and_depth_are_respected() {
        let x: Vec<f64> = (0..64).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let tree = fit(
            &[x.clone()],
            &y,
            GrowParams {
                min_leaf: 5,
                max_depth: Some(3),
                mtry: None,
            },
        );
        assert!(tree.depth() <= 3);
        let mut counts = std::collections::HashMap::new();
        for v in &x {
            let leaf = tree.predict(&[*v]).to_bits();
            *counts.entry(leaf).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 5));
    }

    #[test]
    fn fully_grown_tree_interpolates_training_data() {
        let x: Vec<f64> = (0..40).map(|i| (i * 7 % 40) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.3).sin()).collect();
        let tree = fit(&[x.clone()], &y, FULL);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(tree.predict(&[*xi]), *yi);
        }
    }

    #[test]
    fn serde_roundtrip_and_validation() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v / 5.0).floor()).collect();
        let tree = fit(&[x], &y, FULL);
        let json = serde_json::to_string(&tree).unwrap();
        let back: RegressionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);

        let bad = r#"{"feature":[0],"value":[1.0],"left":[1],"right":[2]}"#;
        assert!(serde_json::from_str::<RegressionTree>(bad).is_err());
    }
}
