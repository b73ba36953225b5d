//! CART trees with exhaustive midpoint split search.
//!
//! Feature orderings are sorted once at the root and stably partitioned at
//! every split. Candidate thresholds are midpoints between consecutive
//! distinct feature values; ties in the split score go to the lowest feature
//! index, then the lowest threshold.

use alloc::vec;
use alloc::vec::Vec;

use super::forest::Criterion;
use super::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Weighted impurity of a node with `n` rows, target sum `s` and sum of
/// squares `ss`.
#[inline]
fn impurity(criterion: Criterion, n: f64, s: f64, ss: f64) -> f64 {
    match criterion {
        // n * variance
        Criterion::Mse => ss - s * s / n,
        // n * gini for binary targets: n * 2 p (1 - p) with p = s / n
        Criterion::Gini => 2.0 * (s - s * s / n),
    }
}

/// Fits one tree on the rows `rows` of `(x, y)`. Rows may repeat.
pub fn fit_tree(x: &FeatureMatrix, y: &[f64], rows: &[usize], params: &TreeParams) -> Tree {
    let m = rows.len();
    let d = x.n_cols();
    if m == 0 {
        return Tree {
            nodes: vec![Node::Leaf(0.0)],
        };
    }
    let min_leaf = params.min_leaf.max(1);
    let mut cols = vec![0.0; d * m];
    let mut ys = vec![0.0; m];
    for (k, &r) in rows.iter().enumerate() {
        ys[k] = y[r];
        for f in 0..d {
            cols[f * m + k] = x.get(r, f);
        }
    }
    let mut order: Vec<u32> = Vec::with_capacity(d * m);
    for f in 0..d {
        let col = &cols[f * m..(f + 1) * m];
        let start = order.len();
        order.extend(0..m as u32);
        order[start..].sort_unstable_by(|&a, &b| {
            col[a as usize]
                .partial_cmp(&col[b as usize])
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
    }
    let mut is_left = vec![false; m];
    let mut buf: Vec<u32> = Vec::with_capacity(m);
    let mut nodes = vec![Node::Leaf(0.0)];
    // (node index, start, end, depth)
    let mut stack = vec![(0usize, 0usize, m, 0usize)];
    while let Some((idx, start, end, depth)) = stack.pop() {
        let n = end - start;
        let seg = &order[start..end];
        let (mut s, mut ss) = (0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &k in seg {
            let v = ys[k as usize];
            s += v;
            ss += v * v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let nf = n as f64;
        nodes[idx] = Node::Leaf(s / nf);
        let depth_ok = params.max_depth.map_or(true, |md| depth < md);
        if n < 2 * min_leaf || !depth_ok || lo == hi {
            continue;
        }
        let parent = impurity(params.criterion, nf, s, ss);
        let mut best: Option<Best> = None;
        for f in 0..d {
            let col = &cols[f * m..(f + 1) * m];
            let seg = &order[f * m + start..f * m + end];
            let (mut sl, mut ssl) = (0.0, 0.0);
            for p in 0..n - 1 {
                let k = seg[p] as usize;
                sl += ys[k];
                ssl += ys[k] * ys[k];
                let nl = p + 1;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let a = col[k];
                let b = col[seg[p + 1] as usize];
                if !(a < b) {
                    continue;
                }
                let imp = impurity(params.criterion, nl as f64, sl, ssl)
                    + impurity(params.criterion, nr as f64, s - sl, ss - ssl);
                if best.as_ref().map_or(true, |bst| imp < bst.impurity) {
                    let mut t = a + 0.5 * (b - a);
                    if !(t > a) {
                        t = b;
                    }
                    best = Some(Best {
                        feature: f,
                        threshold: t,
                        impurity: imp,
                    });
                }
            }
        }
        let Some(best) = best else { continue };
        if !(parent - best.impurity > 1e-12 * parent) {
            continue;
        }
        let col = &cols[best.feature * m..(best.feature + 1) * m];
        let mut n_left = 0;
        for &k in &order[best.feature * m + start..best.feature * m + end] {
            let l = col[k as usize] < best.threshold;
            is_left[k as usize] = l;
            n_left += l as usize;
        }
        for f in 0..d {
            let seg = &mut order[f * m + start..f * m + end];
            buf.clear();
            let mut w = 0;
            for i in 0..seg.len() {
                let k = seg[i];
                if is_left[k as usize] {
                    seg[w] = k;
                    w += 1;
                } else {
                    buf.push(k);
                }
            }
            seg[w..].copy_from_slice(&buf);
        }
        let left = nodes.len();
        nodes.push(Node::Leaf(0.0));
        nodes.push(Node::Leaf(0.0));
        nodes[idx] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push((left + 1, start + n_left, end, depth + 1));
        stack.push((left, start, start + n_left, depth + 1));
    }
    Tree { nodes }
}
