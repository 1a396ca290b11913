use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
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

/// Binary tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn leaves_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.nodes.iter_mut().filter_map(|n| match n {
            Node::Leaf { value } => Some(value),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Criterion {
    /// Binary targets in {0, 1}.
    Gini,
    /// Real targets, least squares.
    SquaredError,
}

impl Criterion {
    /// Child-node score to be maximized, from total weight `w` and weighted
    /// target sum `s`. Summing it over children and subtracting the parent
    /// gives the weighted impurity decrease.
    fn score(self, w: f64, s: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        match self {
            // W - Gini·W = (w0² + w1²)/W
            Criterion::Gini => (s * s + (w - s) * (w - s)) / w,
            Criterion::SquaredError => s * s / w,
        }
    }
}

pub(crate) struct GrowParams<'a> {
    pub criterion: Criterion,
    pub max_depth: usize,
    /// Features examined per split; all of them when `None`.
    pub max_features: Option<usize>,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

/// Grows a tree on the rows listed in `idx`. Leaf values are the weighted
/// target mean; callers may overwrite them afterwards.
pub(crate) fn grow(
    rows: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    idx: Vec<usize>,
    mut params: GrowParams<'_>,
) -> (DecisionTree, Vec<Vec<usize>>) {
    let dim = rows.first().map_or(0, Vec::len);
    let mut nodes = Vec::new();
    let mut leaf_members = Vec::new();
    let mut stack = vec![(idx, 0usize, usize::MAX, false)];
    // Depth-first with an explicit stack; children patch their parent's link.
    while let Some((members, depth, parent, is_right)) = stack.pop() {
        let me = nodes.len();
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if is_right {
                    *right = me;
                } else {
                    *left = me;
                }
            }
        }
        let split = if depth < params.max_depth {
            let features = pick_features(dim, &mut params);
            best_split(rows, targets, weights, &members, &features, params.criterion)
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                nodes.push(Node::Split {
                    feature,
                    threshold,
                    left: usize::MAX,
                    right: usize::MAX,
                });
                let (l, r): (Vec<usize>, Vec<usize>) =
                    members.into_iter().partition(|&i| rows[i][feature] <= threshold);
                stack.push((r, depth + 1, me, true));
                stack.push((l, depth + 1, me, false));
            }
            None => {
                let (w, s) = members
                    .iter()
                    .fold((0.0, 0.0), |(w, s), &i| (w + weights[i], s + weights[i] * targets[i]));
                let value = if w > 0.0 { s / w } else { 0.0 };
                nodes.push(Node::Leaf { value });
                leaf_members.push(members);
            }
        }
    }
    (DecisionTree { nodes }, leaf_members)
}

fn pick_features(dim: usize, params: &mut GrowParams<'_>) -> Vec<usize> {
    let k = params.max_features.unwrap_or(dim).clamp(1, dim.max(1));
    let mut all: Vec<usize> = (0..dim).collect();
    if k < dim {
        if let Some(rng) = params.rng.as_deref_mut() {
            for i in 0..k {
                let j = rng.random_range(i..dim);
                all.swap(i, j);
            }
            all.truncate(k);
            all.sort_unstable();
        }
    }
    all
}

/// Exhaustive scan over midpoints between consecutive distinct values.
/// Equal gains keep the earliest candidate: lowest feature, then lowest threshold.
fn best_split(
    rows: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    members: &[usize],
    features: &[usize],
    criterion: Criterion,
) -> Option<(usize, f64)> {
    if members.len() < 2 {
        return None;
    }
    let (tw, ts) = members
        .iter()
        .fold((0.0, 0.0), |(w, s), &i| (w + weights[i], s + weights[i] * targets[i]));
    let parent = criterion.score(tw, ts);
    let min_gain = 1e-12 * parent.abs().max(1e-300);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = members.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
        let (mut lw, mut ls) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let i = order[k];
            lw += weights[i];
            ls += weights[i] * targets[i];
            let (lo, hi) = (rows[i][f], rows[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let gain = criterion.score(lw, ls) + criterion.score(tw - lw, ts - ls) - parent;
            if gain > min_gain && best.is_none_or(|(g, _, _)| gain > g) {
                let mut t = 0.5 * (lo + hi);
                if t >= hi {
                    t = lo;
                }
                best = Some((gain, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
