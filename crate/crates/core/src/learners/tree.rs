//! Regression trees: node layout, exhaustive variance-reduction split search
//! and the depth-first CART grower shared by every tree-based model.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Relative slack under which two split gains count as a tie.
const TIE_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
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

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Same split features and thresholds at every position, ignoring node
    /// numbering and leaf values.
    pub fn same_splits(&self, other: &Tree) -> bool {
        fn go(a: &Tree, i: usize, b: &Tree, j: usize) -> bool {
            match (&a.nodes[i], &b.nodes[j]) {
                (Node::Leaf { .. }, Node::Leaf { .. }) => true,
                (
                    Node::Split {
                        feature: fa,
                        threshold: ta,
                        left: la,
                        right: ra,
                    },
                    Node::Split {
                        feature: fb,
                        threshold: tb,
                        left: lb,
                        right: rb,
                    },
                ) => fa == fb && ta == tb && go(a, *la, b, *lb) && go(a, *ra, b, *rb),
                _ => false,
            }
        }
        go(self, 0, other, 0)
    }
}

/// Split candidate: feature, threshold and weighted-variance reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// `var(parent) − (n_l/n)·var(left) − (n_r/n)·var(right)`.
    pub score: f64,
}

/// Candidate ranked by raw gain (`n × score`); kept internal so every search
/// path compares the same quantity.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// `true` if `gain` beats `best` by more than the tie slack. Callers visit
/// candidates in (feature, threshold) order so ties keep the earlier one.
#[inline]
pub(crate) fn improves(gain: f64, best: Option<f64>) -> bool {
    match best {
        None => true,
        Some(b) => gain > b + TIE_REL * b.abs(),
    }
}

/// Midpoint of `lo < hi`, never rounding up to `hi`.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) * 0.5;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Reduction in summed squared error from splitting a node whose targets
/// were centred on the node mean. `sum_l`/`sum_r` are centred sums.
#[inline]
pub(crate) fn sse_gain(sum_l: f64, n_l: usize, sum_r: f64, n_r: usize) -> f64 {
    let total = sum_l + sum_r;
    sum_l * sum_l / n_l as f64 + sum_r * sum_r / n_r as f64 - total * total / (n_l + n_r) as f64
}

/// Mean and summed squared deviation of `y` over `rows`.
pub(crate) fn node_stats(y: &[f64], rows: &[usize]) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    let sse = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum::<f64>();
    (mean, sse)
}

/// Smallest gain accepted for a node, or `None` if the node is flat.
pub(crate) fn gain_floor(mean: f64, sse: f64, n: usize) -> Option<f64> {
    // sse at rounding-noise level means constant targets
    if sse <= 1e-20 * n as f64 * (mean * mean + 1.0) {
        None
    } else {
        Some(1e-10 * sse)
    }
}

/// Best threshold on one feature given the node rows sorted by that feature.
pub(crate) fn scan_sorted(
    col: &[f64],
    sorted: &[usize],
    y: &[f64],
    mean: f64,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let n = sorted.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = sorted.iter().map(|&r| y[r] - mean).sum();
    let mut sum_l = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let r = sorted[i];
        sum_l += y[r] - mean;
        let n_l = i + 1;
        if n_l < min_leaf {
            continue;
        }
        if n - n_l < min_leaf {
            break;
        }
        let lo = col[r];
        let hi = col[sorted[i + 1]];
        if lo >= hi {
            continue;
        }
        let gain = sse_gain(sum_l, n_l, total - sum_l, n - n_l);
        if improves(gain, best.map(|b| b.1)) {
            best = Some((midpoint(lo, hi), gain));
        }
    }
    best
}

fn sort_by_column(col: &[f64], rows: &mut [usize]) {
    rows.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
}

/// Exhaustive best split over `features` for the rows in `rows`.
///
/// Thresholds are midpoints between consecutive distinct values; ties go to
/// the lowest feature index, then the lowest threshold. Returns `None` when
/// no admissible split reduces the variance.
pub fn best_split(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let (mean, sse) = node_stats(y, rows);
    let floor = gain_floor(mean, sse, rows.len())?;
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();
    let mut sorted = rows.to_vec();
    let mut best: Option<Candidate> = None;
    for &f in &features {
        let col = x.column(f);
        sort_by_column(&col, &mut sorted);
        if let Some((threshold, gain)) = scan_sorted(&col, &sorted, y, mean, min_samples_leaf) {
            if improves(gain, best.map(|b| b.gain)) {
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > floor).map(|b| Split {
        feature: b.feature,
        threshold: b.threshold,
        score: b.gain / rows.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ThresholdRule {
    /// Every midpoint between consecutive distinct values.
    Exhaustive,
    /// One threshold per feature drawn uniformly in `[min, max)` of the node.
    Random,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowOptions {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per node; all when `>= n_cols`.
    pub max_features: usize,
    pub rule: ThresholdRule,
}

/// Column-major copy of a design matrix, plus each column's row order when
/// exhaustive search needs it. Built once per fit and shared by every tree.
pub(crate) struct Columns {
    n_rows: usize,
    cols: Vec<Vec<f64>>,
    order: Vec<Vec<usize>>,
}

impl Columns {
    pub fn new(x: &Matrix, rule: ThresholdRule) -> Self {
        let cols: Vec<Vec<f64>> = (0..x.n_cols()).map(|f| x.column(f)).collect();
        let order = match rule {
            ThresholdRule::Exhaustive => cols
                .iter()
                .map(|c| {
                    let mut o: Vec<usize> = (0..x.n_rows()).collect();
                    sort_by_column(c, &mut o);
                    o
                })
                .collect(),
            ThresholdRule::Random => Vec::new(),
        };
        Columns {
            n_rows: x.n_rows(),
            cols,
            order,
        }
    }

    fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Per-column sorted copies of the ascending multiset `rows`.
    fn sorted_lists(&self, rows: &[usize]) -> Vec<Vec<usize>> {
        if self.order.is_empty() {
            return Vec::new();
        }
        if rows.len() == self.n_rows && rows.iter().enumerate().all(|(i, &r)| i == r) {
            return self.order.clone();
        }
        let mut count = vec![0u32; self.n_rows];
        for &r in rows {
            count[r] += 1;
        }
        self.order
            .iter()
            .map(|o| {
                let mut s = Vec::with_capacity(rows.len());
                for &r in o {
                    for _ in 0..count[r] {
                        s.push(r);
                    }
                }
                s
            })
            .collect()
    }
}

struct Grower<'a> {
    cols: &'a Columns,
    y: &'a [f64],
    opts: GrowOptions,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

/// Grows a CART tree depth-first over `rows` (ascending, repeats allowed).
///
/// A random source is needed only when features are subsampled or
/// thresholds are random.
pub(crate) fn grow_tree(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    opts: GrowOptions,
    rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    grow_tree_on(&Columns::new(x, opts.rule), y, rows, opts, rng)
}

/// [`grow_tree`] over prepared columns.
pub(crate) fn grow_tree_on(
    cols: &Columns,
    y: &[f64],
    rows: Vec<usize>,
    opts: GrowOptions,
    rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    debug_assert!(rows.windows(2).all(|w| w[0] <= w[1]));
    let sorted = cols.sorted_lists(&rows);
    let mut g = Grower {
        cols,
        y,
        opts,
        rng,
        nodes: Vec::new(),
        goes_left: vec![false; cols.n_rows],
    };
    g.build(rows, sorted, 0);
    Tree { nodes: g.nodes }
}

fn split_by_mask(list: Vec<usize>, mask: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let n_left = list.iter().filter(|&&r| mask[r]).count();
    let mut left = Vec::with_capacity(n_left);
    let mut right = Vec::with_capacity(list.len() - n_left);
    for r in list {
        if mask[r] {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    (left, right)
}

impl Grower<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.cols.n_cols();
        if self.opts.max_features >= d {
            return (0..d).collect();
        }
        let rng = self
            .rng
            .as_deref_mut()
            .expect("feature subsampling needs a random source");
        let mut picked = sample(rng, d, self.opts.max_features.max(1)).into_vec();
        picked.sort_unstable();
        picked
    }

    fn find_split(&mut self, rows: &[usize], sorted: &[Vec<usize>], mean: f64) -> Option<Candidate> {
        let features = self.candidate_features();
        let min_leaf = self.opts.min_samples_leaf.max(1);
        let mut best: Option<Candidate> = None;
        for f in features {
            let found = match self.opts.rule {
                ThresholdRule::Exhaustive => {
                    scan_sorted(&self.cols.cols[f], &sorted[f], self.y, mean, min_leaf)
                }
                ThresholdRule::Random => self.random_threshold(f, rows, mean, min_leaf),
            };
            if let Some((threshold, gain)) = found {
                if improves(gain, best.map(|b| b.gain)) {
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        debug_assert!(rows.len() >= 2 * min_leaf || best.is_none());
        best
    }

    fn random_threshold(
        &mut self,
        f: usize,
        rows: &[usize],
        mean: f64,
        min_leaf: usize,
    ) -> Option<(f64, f64)> {
        let col = &self.cols.cols[f];
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(col[r]), hi.max(col[r]))
        });
        if lo >= hi {
            return None;
        }
        let rng = self
            .rng
            .as_deref_mut()
            .expect("random thresholds need a random source");
        let threshold = rng.random_range(lo..hi);
        let mut sum_l = 0.0;
        let mut n_l = 0;
        let mut total = 0.0;
        for &r in rows {
            let v = self.y[r] - mean;
            total += v;
            if col[r] <= threshold {
                sum_l += v;
                n_l += 1;
            }
        }
        let n_r = rows.len() - n_l;
        if n_l < min_leaf || n_r < min_leaf {
            return None;
        }
        Some((threshold, sse_gain(sum_l, n_l, total - sum_l, n_r)))
    }

    fn build(&mut self, rows: Vec<usize>, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let (mean, sse) = node_stats(self.y, &rows);
        self.nodes.push(Node::Leaf { value: mean });

        if self.opts.max_depth.is_some_and(|m| depth >= m)
            || rows.len() < 2 * self.opts.min_samples_leaf.max(1)
        {
            return id;
        }
        let Some(floor) = gain_floor(mean, sse, rows.len()) else {
            return id;
        };
        let Some(split) = self.find_split(&rows, &sorted, mean) else {
            return id;
        };
        if split.gain <= floor {
            return id;
        }

        let (f, t) = (split.feature, split.threshold);
        let col = &self.cols.cols[f];
        for &r in &rows {
            self.goes_left[r] = col[r] <= t;
        }
        let mask = &self.goes_left;
        let mut sorted_l = Vec::with_capacity(sorted.len());
        let mut sorted_r = Vec::with_capacity(sorted.len());
        for s in sorted {
            let (l, r) = split_by_mask(s, mask);
            sorted_l.push(l);
            sorted_r.push(r);
        }
        let (rows_l, rows_r) = split_by_mask(rows, mask);

        let left = self.build(rows_l, sorted_l, depth + 1);
        let right = self.build(rows_r, sorted_r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: f,
            threshold: t,
            left,
            right,
        };
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn exhaustive(depth: Option<usize>, min_leaf: usize, d: usize) -> GrowOptions {
        GrowOptions {
            max_depth: depth,
            min_samples_leaf: min_leaf,
            max_features: d,
            rule: ThresholdRule::Exhaustive,
        }
    }

    #[test]
    fn two_point_split() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let s = best_split(&x, &[0.0, 10.0], &[0, 1], &[0], 1).unwrap();
        assert_eq!(s, Split {
            feature: 0,
            threshold: 0.5,
            score: 25.0
        });
    }

    #[test]
    fn constant_target_has_no_split() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        assert!(best_split(&x, &[0.1; 4], &[0, 1, 2, 3], &[0], 1).is_none());
    }

    #[test]
    fn identical_features_tie_to_lowest_index() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let y = [1.0, 5.0, 9.0];
        let s = best_split(&x, &y, &[0, 1, 2], &[1, 0], 1).unwrap();
        assert_eq!(s.feature, 0);
        // both thresholds give the same reduction; the lower one wins
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn min_leaf_limits_candidates() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        let y = [0.0, 10.0, 10.0, 10.0];
        assert_eq!(best_split(&x, &y, &[0, 1, 2, 3], &[0], 1).unwrap().threshold, 0.5);
        assert_eq!(best_split(&x, &y, &[0, 1, 2, 3], &[0], 2).unwrap().threshold, 1.5);
        assert!(best_split(&x, &y, &[0, 1, 2, 3], &[0], 3).is_none());
    }

    #[test]
    fn depth_zero_is_mean_leaf() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [5.0]]);
        let t = grow_tree(&x, &[1.0, 2.0, 6.0], vec![0, 1, 2], exhaustive(Some(0), 1, 1), None);
        assert_eq!(t.nodes, vec![Node::Leaf { value: 3.0 }]);
    }

    #[test]
    fn depth_one_two_points() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let t = grow_tree(&x, &[0.0, 10.0], vec![0, 1], exhaustive(Some(1), 1, 1), None);
        assert_eq!(t.predict_row(&[0.0]), 0.0);
        assert_eq!(t.predict_row(&[1.0]), 10.0);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn random_thresholds_stay_inside_node_range() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [i as f64, (i * 7 % 13) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = GrowOptions {
            max_depth: Some(4),
            min_samples_leaf: 2,
            max_features: 1,
            rule: ThresholdRule::Random,
        };
        let t = grow_tree(&x, &y, (0..40).collect(), opts, Some(&mut rng));
        for n in &t.nodes {
            if let Node::Split { feature, threshold, .. } = *n {
                let col = x.column(feature);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(threshold >= lo && threshold < hi);
            }
        }
        assert!(t.n_leaves() > 1);
    }

    #[test]
    fn midpoint_never_reaches_upper() {
        let a = 1.0_f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
        assert_eq!(midpoint(0.0, 1.0), 0.5);
    }
}
