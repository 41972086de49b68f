//! Bagged entropy decision trees over two classes.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::dist::DistFamily;
use crate::rng;

pub const DEFAULT_TREES: usize = 50;
pub const MIN_FOREST_EXAMPLES: usize = 20;

/// Binary entropy (bits) of a node with `a` and `b` members.
pub fn entropy(a: usize, b: usize) -> f64 {
    let n = (a + b) as f64;
    [a, b]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        class: DistFamily,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub bootstrap_seed: u64,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> DistFamily {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub seed: u64,
}

/// Class index: Weibull is the positive class and wins ties.
fn is_weibull(f: DistFamily) -> bool {
    f == DistFamily::Weibull
}

fn majority(w: usize, other: usize, other_class: DistFamily) -> DistFamily {
    if w >= other {
        DistFamily::Weibull
    } else {
        other_class
    }
}

struct Grower<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [DistFamily],
    other: DistFamily,
    max_features: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, rows: &[usize]) -> (usize, usize) {
        let w = rows.iter().filter(|&&r| is_weibull(self.ys[r])).count();
        (w, rows.len() - w)
    }

    /// Best threshold on one feature: (gain, threshold), or None if constant.
    fn best_split_on(&self, rows: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, bool)> = rows
            .iter()
            .map(|&r| (self.xs[r][feature], is_weibull(self.ys[r])))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (tw, to) = self.counts(rows);
        let n = rows.len() as f64;
        let parent = entropy(tw, to);
        let (mut lw, mut lo) = (0, 0);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..vals.len() - 1 {
            if vals[i].1 {
                lw += 1;
            } else {
                lo += 1;
            }
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let nl = (i + 1) as f64;
            let child = nl / n * entropy(lw, lo) + (n - nl) / n * entropy(tw - lw, to - lo);
            let gain = parent - child;
            let mut threshold = 0.5 * (vals[i].0 + vals[i + 1].0);
            if threshold >= vals[i + 1].0 {
                threshold = vals[i].0;
            }
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, threshold));
            }
        }
        best
    }

    fn grow<R: Rng>(&mut self, rows: Vec<usize>, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let (w, o) = self.counts(&rows);
        let leaf = Node::Leaf {
            class: majority(w, o, self.other),
        };
        self.nodes.push(leaf.clone());
        if w == 0 || o == 0 || rows.len() < 2 {
            return id;
        }
        let d = self.xs[rows[0]].len();
        // candidate features in random order; the first `max_features` are
        // the sampled subset, the rest are only consulted if none of those splits
        let order = index::sample(rng, d, d).into_vec();
        let mut best: Option<(f64, usize, f64)> = None;
        for (k, &feat) in order.iter().enumerate() {
            if k >= self.max_features && best.is_some() {
                break;
            }
            if let Some((gain, thr)) = self.best_split_on(&rows, feat) {
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feat, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Grows one tree on the given (possibly repeated) rows of the data.
pub fn grow_tree(
    xs: &[Vec<f64>],
    ys: &[DistFamily],
    rows: Vec<usize>,
    max_features: usize,
    seed: u64,
) -> Tree {
    let other = ys
        .iter()
        .copied()
        .find(|&f| !is_weibull(f))
        .unwrap_or(DistFamily::Lognormal);
    let mut g = Grower {
        xs,
        ys,
        other,
        max_features: max_features.max(1),
        nodes: Vec::new(),
    };
    let mut r = rng::stream(seed, 1);
    g.grow(rows, &mut r);
    Tree {
        nodes: g.nodes,
        bootstrap_seed: seed,
    }
}

/// Bootstrap rows for a tree seed: `n` uniform draws with replacement.
pub fn bootstrap_rows(n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::stream(seed, 0);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

pub fn train_forest(
    xs: &[Vec<f64>],
    ys: &[DistFamily],
    n_trees: usize,
    seed: u64,
) -> Result<ForestModel, MlError> {
    if xs.len() != ys.len() {
        return Err(MlError::Dimension(format!(
            "{} feature rows vs {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < MIN_FOREST_EXAMPLES {
        return Err(MlError::TooFewExamples {
            needed: MIN_FOREST_EXAMPLES,
            got: xs.len(),
        });
    }
    let mut classes: Vec<DistFamily> = ys.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() != 2 || !classes.contains(&DistFamily::Weibull) {
        return Err(MlError::SingleClass);
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(MlError::Dimension("ragged feature rows".into()));
    }
    let max_features = ((d as f64).sqrt().floor() as usize).max(1);
    let trees = (0..n_trees as u64)
        .map(|t| {
            let tseed = rng::derive_seed(seed, t);
            grow_tree(xs, ys, bootstrap_rows(xs.len(), tseed), max_features, tseed)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_features: d,
        seed,
    })
}

impl ForestModel {
    /// (Weibull votes, other votes, other class).
    pub fn votes(&self, x: &[f64]) -> (usize, usize, Option<DistFamily>) {
        let mut w = 0;
        let mut other = None;
        for t in &self.trees {
            match t.predict(x) {
                DistFamily::Weibull => w += 1,
                f => other = Some(f),
            }
        }
        (w, self.trees.len() - w, other)
    }

    /// Majority vote; ties go to Weibull.
    pub fn predict(&self, x: &[f64]) -> DistFamily {
        let (w, o, other) = self.votes(x);
        majority(w, o, other.unwrap_or(DistFamily::Lognormal))
    }
}
