//! Greedy least-squares regression trees (CART).
//!
//! Splits are searched exhaustively over every feature and every midpoint
//! between consecutive distinct values. Ties go to the lowest feature index,
//! then the lowest threshold. Training rows carry integer multiplicities so
//! that bootstrap resamples share one presorted copy of the data.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{EnsembleError, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

/// A binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64, count: usize) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value, count }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            Node::Split { .. } => None,
        })
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Split { feature, .. } => Some(feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    fn to_repr(&self, i: usize) -> TreeRepr {
        match self.nodes[i] {
            Node::Leaf { value, count } => TreeRepr::Leaf { value, count },
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => TreeRepr::Split {
                feature,
                threshold,
                left: Box::new(self.to_repr(left)),
                right: Box::new(self.to_repr(right)),
            },
        }
    }

    fn push_repr(nodes: &mut Vec<Node>, repr: TreeRepr) -> usize {
        let at = nodes.len();
        match repr {
            TreeRepr::Leaf { value, count } => nodes.push(Node::Leaf { value, count }),
            TreeRepr::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                let l = Self::push_repr(nodes, *left);
                let r = Self::push_repr(nodes, *right);
                nodes[at] = Node::Split {
                    feature,
                    threshold,
                    left: l,
                    right: r,
                };
            }
        }
        at
    }
}

/// Nested wire form of a tree.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TreeRepr {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeRepr>,
        right: Box<TreeRepr>,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

impl Serialize for RegressionTree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_repr(0).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RegressionTree {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TreeRepr::deserialize(deserializer)?;
        let mut nodes = Vec::new();
        RegressionTree::push_repr(&mut nodes, repr);
        for n in &nodes {
            if let Node::Split { threshold, .. } = n {
                if !threshold.is_finite() {
                    return Err(serde::de::Error::custom("non-finite split threshold"));
                }
            }
        }
        Ok(RegressionTree { nodes })
    }
}

/// Column-major copy of the non-constant features, each with its rows in
/// ascending value order (ties by row index).
///
/// A feature whose values rank the rows exactly like an earlier feature's is
/// dropped: both offer the same partitions with the same gains, and ties go
/// to the earlier feature, so the later one can never be chosen.
pub(crate) struct SortedColumns {
    n: usize,
    features: Vec<usize>,
    /// Feature values by row, slot-major.
    values: Vec<f64>,
    /// Dense value ranks by row, slot-major; equal values share a rank.
    ranks: Vec<u32>,
    /// Per slot, row ids in ascending value order.
    order: Vec<u32>,
    all_rows: Vec<u32>,
    all_slots: Vec<u32>,
}

impl SortedColumns {
    pub(crate) fn new(x: &Matrix) -> Self {
        let n = x.rows();
        let mut features = Vec::new();
        let mut values = Vec::new();
        let mut order = Vec::new();
        let mut all_ranks = Vec::new();
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let mut col = vec![0.0; n];
        let mut idx: Vec<u32> = Vec::with_capacity(n);
        for f in 0..x.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = x.get(i, f);
            }
            if n == 0 || col.iter().all(|&v| v == col[0]) {
                continue;
            }
            idx.clear();
            idx.extend(0..n as u32);
            idx.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            let mut ranks = vec![0u32; n];
            let mut rank = 0;
            for w in 1..n {
                if col[idx[w] as usize] != col[idx[w - 1] as usize] {
                    rank += 1;
                }
                ranks[idx[w] as usize] = rank;
            }
            if seen.contains(&ranks) {
                continue;
            }
            features.push(f);
            values.extend_from_slice(&col);
            order.extend_from_slice(&idx);
            all_ranks.extend_from_slice(&ranks);
            seen.insert(ranks);
        }
        let all_slots = (0..features.len() as u32).collect();
        SortedColumns {
            n,
            features,
            values,
            ranks: all_ranks,
            order,
            all_rows: (0..n as u32).collect(),
            all_slots,
        }
    }

    fn value(&self, slot: usize, row: u32) -> f64 {
        self.values[slot * self.n + row as usize]
    }

    fn ranks(&self, slot: usize) -> &[u32] {
        &self.ranks[slot * self.n..(slot + 1) * self.n]
    }
}

/// Rows reaching one node. `slots` lists the features that still vary
/// among them; `ord` holds, per listed slot, the `rows.len()` row ids in
/// ascending value order.
#[derive(Clone, Copy)]
struct NodeView<'a> {
    rows: &'a [u32],
    slots: &'a [u32],
    ord: &'a [u32],
}

#[derive(Default)]
struct NodeRows {
    rows: Vec<u32>,
    slots: Vec<u32>,
    ord: Vec<u32>,
}

impl NodeRows {
    fn view(&self) -> NodeView<'_> {
        NodeView {
            rows: &self.rows,
            slots: &self.slots,
            ord: &self.ord,
        }
    }
}

struct Grower<'a> {
    cols: &'a SortedColumns,
    y: &'a [f64],
    w: Vec<f64>,
    min_leaf: f64,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
    centred: Vec<f64>,
}

struct BestSplit {
    k: usize,
    threshold: f64,
    gain: f64,
}

struct NodeStats {
    mean: f64,
    w_total: f64,
    sse: f64,
    scale: f64,
}

impl Grower<'_> {
    fn stats(&self, rows: &[u32]) -> NodeStats {
        // shifted by the first target so that constant targets give an exact mean
        let y0 = self.y[rows[0] as usize];
        let (mut w_total, mut s_total) = (0.0, 0.0);
        for &r in rows {
            let w = self.w[r as usize];
            w_total += w;
            s_total += w * (self.y[r as usize] - y0);
        }
        let mean = y0 + s_total / w_total;
        let (mut sse, mut scale) = (0.0, 0.0);
        for &r in rows {
            let (w, y) = (self.w[r as usize], self.y[r as usize]);
            sse += w * (y - mean).powi(2);
            scale += w * y * y;
        }
        NodeStats {
            mean,
            w_total,
            sse,
            scale,
        }
    }

    /// A node that is a leaf whatever its features.
    fn terminal(&self, s: &NodeStats) -> bool {
        s.w_total < 2.0 * self.min_leaf || s.sse <= 1e-12 * s.scale
    }

    fn leaf(&mut self, s: &NodeStats) -> usize {
        self.nodes.push(Node::Leaf {
            value: s.mean,
            count: s.w_total as usize,
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, node: NodeView<'_>, s: NodeStats) -> usize {
        if self.terminal(&s) || node.slots.is_empty() {
            return self.leaf(&s);
        }
        for &r in node.rows {
            let (w, y) = (self.w[r as usize], self.y[r as usize]);
            self.centred[r as usize] = w * (y - s.mean);
        }
        let Some(best) = self.best_split(node, s.w_total, s.sse) else {
            return self.leaf(&s);
        };
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, count: 0 });

        let split_slot = node.slots[best.k] as usize;
        let mut left = NodeRows::default();
        let mut right = NodeRows::default();
        for &r in node.rows {
            let goes_left = self.cols.value(split_slot, r) <= best.threshold;
            self.goes_left[r as usize] = goes_left;
            if goes_left {
                left.rows.push(r);
            } else {
                right.rows.push(r);
            }
        }
        let (ls, rs) = (self.stats(&left.rows), self.stats(&right.rows));
        let (split_left, split_right) = (!self.terminal(&ls), !self.terminal(&rs));
        match (split_left, split_right) {
            (true, true) => self.fill_both(node, &mut left, &mut right),
            (true, false) => self.fill(node, &mut left, true),
            (false, true) => self.fill(node, &mut right, false),
            (false, false) => {}
        }
        let l = if split_left {
            self.grow(left.view(), ls)
        } else {
            self.leaf(&ls)
        };
        drop(left);
        let r = if split_right {
            self.grow(right.view(), rs)
        } else {
            self.leaf(&rs)
        };
        self.nodes[at] = Node::Split {
            feature: self.cols.features[split_slot],
            threshold: best.threshold,
            left: l,
            right: r,
        };
        at
    }

    /// Copies the sorted runs of the rows with `goes_left == side` into
    /// `child`, keeping only slots that still vary among them.
    fn fill(&self, node: NodeView<'_>, child: &mut NodeRows, side: bool) {
        let m = node.rows.len();
        let mut ord = vec![0u32; node.slots.len() * child.rows.len() + 1];
        let mut at = 0;
        for (k, &slot) in node.slots.iter().enumerate() {
            let start = at;
            for &r in &node.ord[k * m..(k + 1) * m] {
                ord[at] = r;
                at += usize::from(self.goes_left[r as usize] == side);
            }
            let ranks = self.cols.ranks(slot as usize);
            if ranks[ord[start] as usize] == ranks[ord[at - 1] as usize] {
                at = start;
            } else {
                child.slots.push(slot);
            }
        }
        ord.truncate(at);
        child.ord = ord;
    }

    /// [`Self::fill`] for both children in one pass.
    fn fill_both(&self, node: NodeView<'_>, left: &mut NodeRows, right: &mut NodeRows) {
        let m = node.rows.len();
        let mut lo = vec![0u32; node.slots.len() * left.rows.len() + 1];
        let mut ro = vec![0u32; node.slots.len() * right.rows.len() + 1];
        let (mut li, mut ri) = (0, 0);
        for (k, &slot) in node.slots.iter().enumerate() {
            let (ls, rs) = (li, ri);
            for &r in &node.ord[k * m..(k + 1) * m] {
                let g = usize::from(self.goes_left[r as usize]);
                lo[li] = r;
                ro[ri] = r;
                li += g;
                ri += 1 - g;
            }
            let ranks = self.cols.ranks(slot as usize);
            if ranks[lo[ls] as usize] == ranks[lo[li - 1] as usize] {
                li = ls;
            } else {
                left.slots.push(slot);
            }
            if ranks[ro[rs] as usize] == ranks[ro[ri - 1] as usize] {
                ri = rs;
            } else {
                right.slots.push(slot);
            }
        }
        lo.truncate(li);
        ro.truncate(ri);
        left.ord = lo;
        right.ord = ro;
    }

    /// Highest-gain split, where gain is the SSE reduction
    /// `sl²/wl + sl²/wr = sl²·W/(wl·wr)` for the centred left sum `sl`.
    fn best_split(&self, node: NodeView<'_>, w_total: f64, sse: f64) -> Option<BestSplit> {
        let m = node.rows.len();
        let unit = node.rows.iter().all(|&r| self.w[r as usize] == 1.0);
        let mut best: Option<BestSplit> = None;
        // a later candidate must win by more than rounding noise
        let mut bar = 1e-12 * sse * (1.0 + 1e-12);
        for k in 0..node.slots.len() {
            let slot = node.slots[k] as usize;
            let ranks = self.cols.ranks(slot);
            let ord = &node.ord[k * m..(k + 1) * m];
            let found = if unit {
                self.scan_unit(ranks, ord, w_total, &mut bar)
            } else {
                self.scan_weighted(ranks, ord, w_total, &mut bar)
            };
            if let Some((i, gain)) = found {
                let (a, b) = (self.cols.value(slot, ord[i]), self.cols.value(slot, ord[i + 1]));
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(BestSplit { k, threshold, gain });
            }
        }
        best.filter(|b| b.gain > 0.0)
    }

    /// Best cut position in one sorted run when every row has weight 1, so
    /// the left weight after position `i` is `i + 1`.
    fn scan_unit(&self, ranks: &[u32], ord: &[u32], w_total: f64, bar: &mut f64) -> Option<(usize, f64)> {
        let m = ord.len();
        let leaf = self.min_leaf as usize;
        if m < 2 * leaf {
            return None;
        }
        let mut found = None;
        let mut sl = 0.0;
        for &r in &ord[..leaf - 1] {
            sl += self.centred[r as usize];
        }
        for i in leaf - 1..m - leaf {
            sl += self.centred[ord[i] as usize];
            let wl = (i + 1) as f64;
            let lr = wl * (w_total - wl);
            if (ranks[ord[i] as usize] != ranks[ord[i + 1] as usize]) & (sl * sl * w_total > *bar * lr) {
                let gain = sl * sl * w_total / lr;
                *bar = gain * (1.0 + 1e-12);
                found = Some((i, gain));
            }
        }
        found
    }

    fn scan_weighted(&self, ranks: &[u32], ord: &[u32], w_total: f64, bar: &mut f64) -> Option<(usize, f64)> {
        let mut found = None;
        let (mut wl, mut sl) = (0.0, 0.0);
        for i in 0..ord.len() - 1 {
            let r = ord[i] as usize;
            wl += self.w[r];
            sl += self.centred[r];
            if ranks[r] == ranks[ord[i + 1] as usize] {
                continue;
            }
            let wr = w_total - wl;
            if wl < self.min_leaf || wr < self.min_leaf {
                continue;
            }
            let lr = wl * wr;
            if sl * sl * w_total > *bar * lr {
                let gain = sl * sl * w_total / lr;
                *bar = gain * (1.0 + 1e-12);
                found = Some((i, gain));
            }
        }
        found
    }
}

/// Grows a tree on rows with multiplicity `weights[i]` (0 excludes the row).
pub(crate) fn grow_tree(cols: &SortedColumns, y: &[f64], weights: &[u32], min_leaf: usize) -> RegressionTree {
    let mut grower = Grower {
        cols,
        y,
        w: weights.iter().map(|&w| f64::from(w)).collect(),
        min_leaf: min_leaf.max(1) as f64,
        nodes: Vec::new(),
        goes_left: vec![false; cols.n],
        centred: vec![0.0; cols.n],
    };
    let full = NodeView {
        rows: &cols.all_rows,
        slots: &cols.all_slots,
        ord: &cols.order,
    };
    if weights.iter().all(|&w| w > 0) {
        let s = grower.stats(full.rows);
        grower.grow(full, s);
    } else {
        let mut root = NodeRows {
            rows: (0..cols.n as u32).filter(|&r| weights[r as usize] > 0).collect(),
            ..NodeRows::default()
        };
        for (g, &w) in grower.goes_left.iter_mut().zip(weights) {
            *g = w > 0;
        }
        grower.fill(full, &mut root, true);
        let s = grower.stats(&root.rows);
        grower.grow(root.view(), s);
    }
    RegressionTree { nodes: grower.nodes }
}

/// Fits one CART regression tree.
pub fn fit_tree(x: &Matrix, y: &[f64], min_leaf_size: usize) -> Result<RegressionTree, EnsembleError> {
    if x.rows() == 0 {
        return Err(EnsembleError::Input("cannot fit a tree on zero rows".into()));
    }
    if x.rows() != y.len() {
        return Err(EnsembleError::Input(format!(
            "{} feature rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if min_leaf_size == 0 {
        return Err(EnsembleError::Config("min_leaf_size must be at least 1".into()));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(EnsembleError::Input(format!("non-finite target {v}")));
    }
    let cols = SortedColumns::new(x);
    Ok(grow_tree(&cols, y, &vec![1; y.len()], min_leaf_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_rows(values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let x = Matrix::from_rows((0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect()).unwrap();
        let t = fit_tree(&x, &[3.3; 20], 1).unwrap();
        assert_eq!(t.nodes(), &[Node::Leaf { value: 3.3, count: 20 }]);
    }

    #[test]
    fn step_function_splits_at_midpoint() {
        // Candidate thresholds 0.5, 1.5, 2.5 have SSE reductions 1/3, 1, 1/3.
        let t = fit_tree(&col(&[0.0, 1.0, 2.0, 3.0]), &[0.0, 0.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(
            t.nodes(),
            &[
                Node::Split {
                    feature: 0,
                    threshold: 1.5,
                    left: 1,
                    right: 2
                },
                Node::Leaf { value: 0.0, count: 2 },
                Node::Leaf { value: 1.0, count: 2 },
            ]
        );
    }

    #[test]
    fn min_leaf_equal_n_gives_mean() {
        let t = fit_tree(&col(&[0.0, 1.0, 2.0, 3.0]), &[0.0, 1.0, 2.0, 5.0], 4).unwrap();
        assert_eq!(t.nodes(), &[Node::Leaf { value: 2.0, count: 4 }]);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        let x = Matrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], 1).unwrap();
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let n = 97;
        let x = Matrix::from_rows((0..n).map(|i| vec![(i * 31 % 17) as f64, (i as f64).sin()]).collect()).unwrap();
        let y: Vec<f64> = (0..n).map(|i| ((i * 13) % 23) as f64).collect();
        for min_leaf in [1, 3, 7, 20] {
            let t = fit_tree(&x, &y, min_leaf).unwrap();
            assert!(t.leaves().all(|(_, c)| c >= min_leaf));
            assert_eq!(t.leaves().map(|(_, c)| c).sum::<usize>(), n);
        }
    }

    #[test]
    fn empty_data_rejected() {
        let x = Matrix::new(0, 3, vec![]).unwrap();
        assert!(fit_tree(&x, &[], 1).is_err());
    }

    #[test]
    fn weights_equal_duplicated_rows() {
        let x = col(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [1.0, 4.0, 2.0, 8.0, 5.0];
        let weights = [2, 0, 1, 3, 1];
        let cols = SortedColumns::new(&x);
        let weighted = grow_tree(&cols, &y, &weights, 2);
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            for _ in 0..w {
                rows.push(vec![x.get(i, 0)]);
                ys.push(y[i]);
            }
        }
        let explicit = fit_tree(&Matrix::from_rows(rows).unwrap(), &ys, 2).unwrap();
        assert_eq!(weighted, explicit);
    }

    enum Naive {
        Leaf(f64, usize),
        Split(usize, f64, Box<Naive>, Box<Naive>),
    }

    /// Direct exhaustive CART on integer data, comparing SSE reductions as
    /// exact rationals.
    #[allow(clippy::needless_range_loop)]
    fn naive(x: &[Vec<i64>], y: &[i64], rows: &[usize], min_leaf: usize) -> Naive {
        let n = rows.len() as i128;
        let s: i128 = rows.iter().map(|&r| y[r] as i128).sum();
        let mut best: Option<(i128, i128, usize, f64)> = None;
        for f in 0..x[0].len() {
            let mut u: Vec<i64> = rows.iter().map(|&r| x[r][f]).collect();
            u.sort_unstable();
            u.dedup();
            for w in u.windows(2) {
                let left: Vec<usize> = rows.iter().copied().filter(|&r| x[r][f] <= w[0]).collect();
                let (nl, nr) = (left.len() as i128, n - left.len() as i128);
                if (nl as usize) < min_leaf || (nr as usize) < min_leaf {
                    continue;
                }
                let sl: i128 = left.iter().map(|&r| y[r] as i128).sum();
                let sr = s - sl;
                let num = sl * sl * nr * n + sr * sr * nl * n - s * s * nl * nr;
                let den = nl * nr * n;
                if best.is_none_or(|(bn, bd, _, _)| num * bd > bn * den) {
                    best = Some((num, den, f, (w[0] + w[1]) as f64 / 2.0));
                }
            }
        }
        match best {
            Some((num, _, f, t)) if num > 0 => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| (x[r][f] as f64) <= t);
                Naive::Split(
                    f,
                    t,
                    Box::new(naive(x, y, &l, min_leaf)),
                    Box::new(naive(x, y, &r, min_leaf)),
                )
            }
            _ => Naive::Leaf(s as f64 / n as f64, rows.len()),
        }
    }

    fn same(t: &RegressionTree, i: usize, o: &Naive) -> bool {
        match (&t.nodes()[i], o) {
            (Node::Leaf { value, count }, Naive::Leaf(v, c)) => (value - v).abs() < 1e-9 && count == c,
            (
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                },
                Naive::Split(f, th, l, r),
            ) => feature == f && threshold == th && same(t, *left, l) && same(t, *right, r),
            _ => false,
        }
    }

    proptest::proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            n in 2usize..30,
            d in 1usize..5,
            seed in proptest::prelude::any::<u64>(),
            min_leaf in 1usize..5,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut x: Vec<Vec<i64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0..6)).collect()).collect();
            // a rank-equivalent copy of feature 0 must never win over it
            for row in x.iter_mut() {
                row.push(2 * row[0] + 1);
            }
            let y: Vec<i64> = (0..n).map(|_| rng.random_range(0..10)).collect();
            let xm = Matrix::from_rows(x.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()).unwrap();
            let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
            let fast = fit_tree(&xm, &yf, min_leaf).unwrap();
            let rows: Vec<usize> = (0..n).collect();
            proptest::prop_assert!(same(&fast, 0, &naive(&x, &y, &rows, min_leaf)));
        }
    }

    #[test]
    fn nested_serialization_round_trips() {
        let x = Matrix::from_rows((0..30).map(|i| vec![i as f64 * 0.1, (i % 4) as f64]).collect()).unwrap();
        let y: Vec<f64> = (0..30).map(|i| (i % 7) as f64 * 1.1).collect();
        let t = fit_tree(&x, &y, 2).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.starts_with("{\"feature\""));
        let back: RegressionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
