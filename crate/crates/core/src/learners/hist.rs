//! Histogram gradient boosting: features are pre-binned into equal-frequency
//! bins and trees grow leaf-wise, always expanding the leaf with the largest
//! gain until the leaf budget is spent.

use super::boosting::{boost, BoostingFit};
use super::tree::{gain_floor, improves, midpoint, node_stats, sse_gain, Node, Tree};
use super::{LearnError, ModelParams};
use crate::matrix::Matrix;

/// Per-feature bin layout learned from training data.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    /// Inclusive upper bound of every bin but the last.
    uppers: Vec<Vec<f64>>,
    /// Smallest / largest training value seen in each bin.
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn fit(x: &Matrix, n_bins: usize) -> Self {
        let n = x.n_rows();
        let mut uppers = Vec::with_capacity(x.n_cols());
        let mut lo = Vec::with_capacity(x.n_cols());
        let mut hi = Vec::with_capacity(x.n_cols());
        for f in 0..x.n_cols() {
            let mut vals = x.column(f);
            vals.sort_by(f64::total_cmp);
            let mut distinct = vals.clone();
            distinct.dedup();
            let ups: Vec<f64> = if distinct.len() <= n_bins {
                distinct[..distinct.len().saturating_sub(1)].to_vec()
            } else {
                let max = *distinct.last().unwrap();
                let mut u: Vec<f64> = (1..n_bins)
                    .map(|k| vals[(k * n / n_bins).max(1) - 1])
                    .filter(|&v| v < max)
                    .collect();
                u.dedup();
                u
            };
            let nb = ups.len() + 1;
            let mut blo = vec![f64::INFINITY; nb];
            let mut bhi = vec![f64::NEG_INFINITY; nb];
            for &v in &vals {
                let b = ups.partition_point(|u| *u < v);
                blo[b] = blo[b].min(v);
                bhi[b] = bhi[b].max(v);
            }
            uppers.push(ups);
            lo.push(blo);
            hi.push(bhi);
        }
        BinMapper { uppers, lo, hi }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.uppers[feature].len() + 1
    }

    pub fn bin(&self, feature: usize, value: f64) -> usize {
        self.uppers[feature].partition_point(|u| *u < value)
    }

    /// Column-major bin codes for every training cell.
    fn encode(&self, x: &Matrix) -> Vec<u32> {
        let n = x.n_rows();
        let mut codes = vec![0u32; n * x.n_cols()];
        for f in 0..x.n_cols() {
            for i in 0..n {
                codes[f * n + i] = self.bin(f, x.get(i, f)) as u32;
            }
        }
        codes
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    /// Rows with bin <= `last_left_bin` go left.
    last_left_bin: u32,
    threshold: f64,
    gain: f64,
}

struct Leaf {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    best: Option<Candidate>,
}

struct HistGrower<'a> {
    mapper: &'a BinMapper,
    codes: &'a [u32],
    n: usize,
    max_leaves: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
}

impl HistGrower<'_> {
    fn best_split(&self, y: &[f64], rows: &[usize], depth: usize) -> Option<Candidate> {
        if self.max_depth.is_some_and(|m| depth >= m) || rows.len() < 2 * self.min_leaf {
            return None;
        }
        let (mean, sse) = node_stats(y, rows);
        let floor = gain_floor(mean, sse, rows.len())?;
        let n = rows.len();
        let mut best: Option<Candidate> = None;
        for f in 0..self.mapper.uppers.len() {
            let nb = self.mapper.n_bins(f);
            if nb < 2 {
                continue;
            }
            let codes = &self.codes[f * self.n..(f + 1) * self.n];
            let mut sums = vec![0.0; nb];
            let mut counts = vec![0usize; nb];
            for &r in rows {
                let b = codes[r] as usize;
                sums[b] += y[r] - mean;
                counts[b] += 1;
            }
            let total: f64 = sums.iter().sum();
            let mut sum_l = 0.0;
            let mut n_l = 0;
            let mut next = nb;
            // next non-empty bin after each position
            let mut next_nonempty = vec![nb; nb];
            for b in (0..nb).rev() {
                next_nonempty[b] = next;
                if counts[b] > 0 {
                    next = b;
                }
            }
            for b in 0..nb - 1 {
                sum_l += sums[b];
                n_l += counts[b];
                if counts[b] == 0 || n_l < self.min_leaf {
                    continue;
                }
                let n_r = n - n_l;
                if n_r < self.min_leaf || n_r == 0 {
                    break;
                }
                let b2 = next_nonempty[b];
                let gain = sse_gain(sum_l, n_l, total - sum_l, n_r);
                if improves(gain, best.map(|c| c.gain)) {
                    best = Some(Candidate {
                        feature: f,
                        last_left_bin: b as u32,
                        threshold: midpoint(self.mapper.hi[f][b], self.mapper.lo[f][b2]),
                        gain,
                    });
                }
            }
        }
        best.filter(|c| c.gain > floor)
    }

    fn grow(&self, rows: Vec<usize>, y: &[f64]) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let best = self.best_split(y, &rows, 0);
        let mut leaves = vec![Leaf {
            node: 0,
            rows,
            depth: 0,
            best,
        }];
        while leaves.len() < self.max_leaves {
            let mut pick: Option<usize> = None;
            for (i, leaf) in leaves.iter().enumerate() {
                let Some(c) = leaf.best else { continue };
                let better = match pick {
                    None => true,
                    Some(p) => {
                        let pc = leaves[p].best.unwrap();
                        c.gain > pc.gain || (c.gain == pc.gain && leaf.node < leaves[p].node)
                    }
                };
                if better {
                    pick = Some(i);
                }
            }
            let Some(i) = pick else { break };
            let leaf = leaves.swap_remove(i);
            let c = leaf.best.unwrap();
            let codes = &self.codes[c.feature * self.n..(c.feature + 1) * self.n];
            let (rows_l, rows_r): (Vec<usize>, Vec<usize>) = leaf
                .rows
                .iter()
                .partition(|&&r| codes[r] <= c.last_left_bin);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[leaf.node] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
            };
            for (node, rows) in [(left, rows_l), (right, rows_r)] {
                let best = self.best_split(y, &rows, leaf.depth + 1);
                leaves.push(Leaf {
                    node,
                    rows,
                    depth: leaf.depth + 1,
                    best,
                });
            }
        }
        for leaf in &leaves {
            let (mean, _) = node_stats(y, &leaf.rows);
            nodes[leaf.node] = Node::Leaf { value: mean };
        }
        Tree { nodes }
    }
}

pub fn train_hist_gradient_boosting(
    x: &Matrix,
    y: &[f64],
    params: &ModelParams,
) -> Result<BoostingFit, LearnError> {
    let mapper = BinMapper::fit(x, params.n_bins);
    let codes = mapper.encode(x);
    let grower = HistGrower {
        mapper: &mapper,
        codes: &codes,
        n: x.n_rows(),
        max_leaves: params.max_leaves,
        max_depth: params.max_depth,
        min_leaf: params.min_samples_leaf.max(1),
    };
    boost(x, y, params, |rows, residual, _| grower.grow(rows, residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_follow_distinct_values_when_few() {
        let x = Matrix::from_rows(&[[3.0], [1.0], [2.0], [1.0]]);
        let m = BinMapper::fit(&x, 8);
        assert_eq!(m.n_bins(0), 3);
        assert_eq!(m.bin(0, 1.0), 0);
        assert_eq!(m.bin(0, 2.0), 1);
        assert_eq!(m.bin(0, 3.0), 2);
        assert_eq!(m.bin(0, 99.0), 2);
    }

    #[test]
    fn equal_frequency_bins() {
        let rows: Vec<[f64; 1]> = (0..100).map(|i| [i as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let m = BinMapper::fit(&x, 4);
        assert_eq!(m.n_bins(0), 4);
        let mut counts = [0; 4];
        for i in 0..100 {
            counts[m.bin(0, i as f64)] += 1;
        }
        assert_eq!(counts, [25, 25, 25, 25]);
    }

    #[test]
    fn constant_feature_gets_one_bin() {
        let x = Matrix::from_rows(&[[5.0], [5.0], [5.0]]);
        assert_eq!(BinMapper::fit(&x, 16).n_bins(0), 1);
    }

    #[test]
    fn heavy_ties_do_not_make_empty_bins() {
        let mut rows: Vec<[f64; 1]> = vec![[0.0]; 90];
        rows.extend((1..=10).map(|i| [i as f64]));
        let x = Matrix::from_rows(&rows);
        let m = BinMapper::fit(&x, 4);
        let mut counts = vec![0; m.n_bins(0)];
        for r in &rows {
            counts[m.bin(0, r[0])] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }
}
