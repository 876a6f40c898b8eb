use rand::seq::index::sample;
use rand::Rng;

/// Growth limits for one regression tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART regression tree grown by greedy variance reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

struct Builder<'a, R> {
    cols: &'a [&'a [f64]],
    y: &'a [f64],
    cfg: TreeConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    buf: Vec<(f64, f64)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&mut self, value: f64) -> usize {
        self.nodes.push(Node::Leaf(value));
        self.nodes.len() - 1
    }

    fn best_split(&mut self, rows: &[usize], mean: f64) -> Option<BestSplit> {
        let m = self.cols.len();
        let n = rows.len();
        let min_leaf = self.cfg.min_samples_leaf;
        let features: Vec<usize> = match self.cfg.max_features {
            Some(k) if k < m => sample(self.rng, m, k).into_vec(),
            _ => (0..m).collect(),
        };
        let mut best: Option<BestSplit> = None;
        for f in features {
            let col = self.cols[f];
            self.buf.clear();
            self.buf.extend(rows.iter().map(|&r| (col[r], self.y[r] - mean)));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = self.buf.iter().map(|p| p.1).sum();
            let base = total * total / n as f64;
            let mut left = 0.0;
            for i in 0..n - 1 {
                left += self.buf[i].1;
                let nl = i + 1;
                let nr = n - nl;
                if nr < min_leaf {
                    break;
                }
                if nl < min_leaf || self.buf[i].0 == self.buf[i + 1].0 {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - base;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    let (a, b) = (self.buf[i].0, self.buf[i + 1].0);
                    let mid = a / 2.0 + b / 2.0;
                    best = Some(BestSplit {
                        feature: f,
                        threshold: if mid >= b { a } else { mid },
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n as f64;
        let constant = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
        if depth >= self.cfg.max_depth || n < 2 * self.cfg.min_samples_leaf || constant || self.cols.is_empty() {
            return self.leaf(mean);
        }
        let Some(split) = self.best_split(&rows, mean) else {
            return self.leaf(mean);
        };
        self.importance[split.feature] += split.gain;
        let col = self.cols[split.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| col[i] <= split.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl RegressionTree {
    /// Fits on the given rows (duplicates allowed, as in a bootstrap sample).
    pub fn fit<R: Rng>(cols: &[&[f64]], y: &[f64], rows: Vec<usize>, cfg: TreeConfig, rng: &mut R) -> Self {
        assert!(!rows.is_empty(), "tree needs at least one row");
        let mut b = Builder {
            cols,
            y,
            cfg,
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; cols.len()],
            buf: Vec::with_capacity(rows.len()),
        };
        b.grow(rows, 0);
        Self {
            nodes: b.nodes,
            importance: b.importance,
        }
    }

    pub fn predict_row(&self, cols: &[&[f64]], row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if cols[feature][row] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, cols: &[&[f64]], rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.predict_row(cols, r)).collect()
    }

    /// Total squared-error reduction credited to each feature.
    pub fn raw_importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}
