//! Mutable tree state and the Metropolis-within-Gibbs updates.
//!
//! Trees route rows on pre-binned columns: a rule `(var, cut)` sends a row
//! left when `bin[var][row] <= cut`, which is the same as
//! `x < cutpoints[var][cut]`.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::tree::{DecisionTree, TreeNode};
use crate::data::DesignMatrix;

const NONE: u32 = u32::MAX;

/// Column-major binned copy of the training design.
pub(crate) struct BinnedData {
    pub bins: Vec<Vec<u16>>,
    pub cutpoints: Vec<Vec<f64>>,
}

impl BinnedData {
    pub fn new(x: &DesignMatrix, max_cuts: usize) -> Self {
        let mut bins = Vec::with_capacity(x.n_cols());
        let mut cutpoints = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let col = x.column(j);
            let cuts = cutpoints_for(&col, max_cuts);
            let b = col
                .iter()
                .map(|&v| cuts.partition_point(|&c| c <= v) as u16)
                .collect();
            bins.push(b);
            cutpoints.push(cuts);
        }
        Self {
            bins,
            cutpoints,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.bins.len()
    }

    fn n_cuts(&self, var: usize) -> u32 {
        self.cutpoints[var].len() as u32
    }
}

/// Midpoints between consecutive distinct values, thinned to at most
/// `max_cuts` evenly spaced candidates.
fn cutpoints_for(col: &[f64], max_cuts: usize) -> Vec<f64> {
    let mut uniq: Vec<f64> = col.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let mids: Vec<f64> = uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if mids.len() <= max_cuts {
        return mids;
    }
    let last = (mids.len() - 1) as f64;
    let mut picked: Vec<f64> = (0..max_cuts)
        .map(|k| mids[(k as f64 * last / (max_cuts - 1) as f64).round() as usize])
        .collect();
    picked.dedup();
    picked
}

#[derive(Debug, Clone)]
struct Node {
    parent: u32,
    left: u32,
    right: u32,
    var: u32,
    cut: u32,
    depth: u32,
    value: f64,
    alive: bool,
}

impl Node {
    fn leaf(parent: u32, depth: u32, value: f64) -> Self {
        Self {
            parent,
            left: NONE,
            right: NONE,
            var: 0,
            cut: 0,
            depth,
            value,
            alive: true,
        }
    }

    fn is_leaf(&self) -> bool {
        self.left == NONE
    }
}

pub(crate) struct McTree {
    nodes: Vec<Node>,
    free: Vec<u32>,
    leaf_of: Vec<u32>,
}

impl McTree {
    pub fn new(n_rows: usize, value: f64) -> Self {
        Self {
            nodes: vec![Node::leaf(NONE, 0, value)],
            free: Vec::new(),
            leaf_of: vec![0; n_rows],
        }
    }

    #[inline]
    pub fn value_of_row(&self, row: usize) -> f64 {
        self.nodes[self.leaf_of[row] as usize].value
    }

    fn root_only(&self) -> bool {
        self.nodes[0].is_leaf()
    }

    fn leaves(&self) -> Vec<u32> {
        (0..self.nodes.len() as u32)
            .filter(|&i| self.nodes[i as usize].alive && self.nodes[i as usize].is_leaf())
            .collect()
    }

    fn is_nog(&self, i: u32) -> bool {
        let n = &self.nodes[i as usize];
        n.alive
            && !n.is_leaf()
            && self.nodes[n.left as usize].is_leaf()
            && self.nodes[n.right as usize].is_leaf()
    }

    fn nogs(&self) -> Vec<u32> {
        (0..self.nodes.len() as u32).filter(|&i| self.is_nog(i)).collect()
    }

    fn alloc(&mut self, node: Node) -> u32 {
        match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    /// Compacts into a [`DecisionTree`], mapping leaf values through `leaf_map`.
    pub fn export(&self, data: &BinnedData, leaf_map: impl Fn(f64) -> f64) -> DecisionTree {
        let mut out = Vec::new();
        self.export_node(0, data, &leaf_map, &mut out);
        DecisionTree::from_nodes(out).expect("sampler trees are well formed")
    }

    fn export_node(
        &self,
        i: u32,
        data: &BinnedData,
        leaf_map: &impl Fn(f64) -> f64,
        out: &mut Vec<TreeNode>,
    ) -> usize {
        let n = &self.nodes[i as usize];
        let at = out.len();
        if n.is_leaf() {
            out.push(TreeNode::Leaf {
                value: leaf_map(n.value),
            });
            return at;
        }
        out.push(TreeNode::Leaf { value: 0.0 });
        let left = self.export_node(n.left, data, leaf_map, out);
        let right = self.export_node(n.right, data, leaf_map, out);
        out[at] = TreeNode::Split {
            column: n.var as usize,
            threshold: data.cutpoints[n.var as usize][n.cut as usize],
            left,
            right,
        };
        at
    }
}

/// Sufficient statistics and conjugate draws for one tree's leaves.
pub(crate) trait LeafModel {
    type Stats: Copy + Default;
    fn add(&self, s: &mut Self::Stats, row: usize);
    fn count(s: &Self::Stats) -> usize;
    fn merge(a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    /// Log marginal likelihood of the rows in one leaf, up to terms shared by
    /// every partition of the same rows.
    fn log_ml(&self, s: &Self::Stats) -> f64;
    fn draw<R: Rng>(&self, s: &Self::Stats, rng: &mut R) -> f64;
}

/// Normal leaf with prior `N(0, tau2)` for residuals with known per-row
/// precision weights.
pub(crate) struct MeanLeaf<'a> {
    pub resid: &'a [f64],
    pub weight: &'a [f64],
    pub tau2: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct MeanStats {
    n: usize,
    sw: f64,
    swr: f64,
}

impl LeafModel for MeanLeaf<'_> {
    type Stats = MeanStats;

    #[inline]
    fn add(&self, s: &mut MeanStats, row: usize) {
        let w = self.weight[row];
        s.n += 1;
        s.sw += w;
        s.swr += w * self.resid[row];
    }

    fn count(s: &MeanStats) -> usize {
        s.n
    }

    fn merge(a: &MeanStats, b: &MeanStats) -> MeanStats {
        MeanStats {
            n: a.n + b.n,
            sw: a.sw + b.sw,
            swr: a.swr + b.swr,
        }
    }

    fn log_ml(&self, s: &MeanStats) -> f64 {
        let prec = s.sw + 1.0 / self.tau2;
        -0.5 * (self.tau2 * s.sw).ln_1p() + 0.5 * s.swr * s.swr / prec
    }

    fn draw<R: Rng>(&self, s: &MeanStats, rng: &mut R) -> f64 {
        let prec = s.sw + 1.0 / self.tau2;
        let z: f64 = StandardNormal.sample(rng);
        s.swr / prec + z / prec.sqrt()
    }
}

/// Variance-multiplier leaf with prior scaled-inverse-chi-square(nu, 1) for
/// rows whose standardized squared residuals are `e2`.
pub(crate) struct ScaleLeaf<'a> {
    pub e2: &'a [f64],
    pub nu: f64,
    /// `ln Gamma(nu/2)` and `(nu/2) ln(nu/2)`, cached.
    pub prior_const: f64,
}

impl<'a> ScaleLeaf<'a> {
    pub fn new(e2: &'a [f64], nu: f64) -> Self {
        let half = 0.5 * nu;
        Self {
            e2,
            nu,
            prior_const: half * half.ln() - ln_gamma(half),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ScaleStats {
    n: usize,
    sum: f64,
}

impl LeafModel for ScaleLeaf<'_> {
    type Stats = ScaleStats;

    #[inline]
    fn add(&self, s: &mut ScaleStats, row: usize) {
        s.n += 1;
        s.sum += self.e2[row];
    }

    fn count(s: &ScaleStats) -> usize {
        s.n
    }

    fn merge(a: &ScaleStats, b: &ScaleStats) -> ScaleStats {
        ScaleStats {
            n: a.n + b.n,
            sum: a.sum + b.sum,
        }
    }

    fn log_ml(&self, s: &ScaleStats) -> f64 {
        let post = 0.5 * (self.nu + s.n as f64);
        self.prior_const + ln_gamma(post) - post * (0.5 * (self.nu + s.sum)).ln()
    }

    fn draw<R: Rng>(&self, s: &ScaleStats, rng: &mut R) -> f64 {
        let chi = ChiSquared::new(self.nu + s.n as f64).expect("positive degrees of freedom");
        let c: f64 = chi.sample(rng);
        (self.nu + s.sum) / c.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Move {
    Birth,
    Death,
    Change,
}

/// Proposal and acceptance counts per move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub birth_proposed: u64,
    pub birth_accepted: u64,
    pub death_proposed: u64,
    pub death_accepted: u64,
    pub change_proposed: u64,
    pub change_accepted: u64,
}

impl MoveStats {
    fn record(&mut self, mv: Move, accepted: bool) {
        let (p, a) = match mv {
            Move::Birth => (&mut self.birth_proposed, &mut self.birth_accepted),
            Move::Death => (&mut self.death_proposed, &mut self.death_accepted),
            Move::Change => (&mut self.change_proposed, &mut self.change_accepted),
        };
        *p += 1;
        *a += u64::from(accepted);
    }
}

/// Structural prior and proposal settings shared by both ensembles.
pub(crate) struct TreeMoves {
    pub split_alpha: f64,
    pub split_beta: f64,
    pub prob_birth: f64,
    pub prob_death: f64,
    pub min_leaf_size: usize,
}

type Ranges = Vec<(u32, u32)>;

impl TreeMoves {
    fn p_split(&self, depth: u32) -> f64 {
        self.split_alpha * (1.0 + depth as f64).powf(-self.split_beta)
    }

    /// (birth, death, change) probabilities for a tree with `n_good`
    /// splittable leaves.
    fn move_probs(&self, n_good: usize, root_only: bool) -> (f64, f64, f64) {
        let pc = 1.0 - self.prob_birth - self.prob_death;
        match (root_only, n_good > 0) {
            (true, true) => (1.0, 0.0, 0.0),
            (true, false) => (0.0, 0.0, 0.0),
            (false, true) => (self.prob_birth, self.prob_death, pc),
            (false, false) => {
                let z = self.prob_death + pc;
                (0.0, self.prob_death / z, pc / z)
            }
        }
    }

    /// Available cut-index range `[lo, hi)` per variable at `node`.
    fn ranges(&self, tree: &McTree, data: &BinnedData, node: u32) -> Ranges {
        let mut r: Ranges = (0..data.n_vars()).map(|v| (0, data.n_cuts(v))).collect();
        let mut child = node;
        let mut parent = tree.nodes[node as usize].parent;
        while parent != NONE {
            let pn = &tree.nodes[parent as usize];
            let v = pn.var as usize;
            if pn.left == child {
                r[v].1 = r[v].1.min(pn.cut);
            } else {
                r[v].0 = r[v].0.max(pn.cut + 1);
            }
            child = parent;
            parent = pn.parent;
        }
        r
    }

    fn avail_vars(ranges: &Ranges) -> Vec<usize> {
        (0..ranges.len()).filter(|&v| ranges[v].0 < ranges[v].1).collect()
    }

    /// Whether each child of a node with `ranges` still has a split after
    /// applying rule `(var, cut)`.
    fn children_good(ranges: &Ranges, n_avail: usize, var: usize, cut: u32) -> (bool, bool) {
        let (lo, hi) = ranges[var];
        let others = n_avail > 1;
        (others || lo < cut, others || cut + 1 < hi)
    }

    fn log1m_split(&self, good: bool, depth: u32) -> f64 {
        if good {
            (-self.p_split(depth)).ln_1p()
        } else {
            0.0
        }
    }

    /// One Metropolis-Hastings structure proposal followed by a Gibbs draw
    /// of every leaf value.
    pub fn update<M: LeafModel, R: Rng>(
        &self,
        tree: &mut McTree,
        data: &BinnedData,
        model: &M,
        rng: &mut R,
        stats: &mut MoveStats,
    ) {
        let leaves = tree.leaves();
        let good: Vec<(u32, Ranges)> = leaves
            .iter()
            .map(|&l| (l, self.ranges(tree, data, l)))
            .filter(|(_, r)| r.iter().any(|&(lo, hi)| lo < hi))
            .collect();
        let (pb, pd, _) = self.move_probs(good.len(), tree.root_only());
        let u: f64 = rng.random();
        if u < pb {
            let accepted = self.birth(tree, data, model, rng, &good, pb);
            stats.record(Move::Birth, accepted);
        } else if u < pb + pd {
            let accepted = self.death(tree, data, model, rng, good.len(), pd);
            stats.record(Move::Death, accepted);
        } else if !tree.root_only() {
            let accepted = self.change(tree, data, model, rng, good.len());
            stats.record(Move::Change, accepted);
        }
        self.draw_leaves(tree, model, rng);
    }

    fn birth<M: LeafModel, R: Rng>(
        &self,
        tree: &mut McTree,
        data: &BinnedData,
        model: &M,
        rng: &mut R,
        good: &[(u32, Ranges)],
        pb: f64,
    ) -> bool {
        let (leaf, ranges) = &good[rng.random_range(0..good.len())];
        let leaf = *leaf;
        let avail = Self::avail_vars(ranges);
        let var = avail[rng.random_range(0..avail.len())];
        let cut = rng.random_range(ranges[var].0..ranges[var].1);

        let bins = &data.bins[var];
        let (mut sl, mut sr) = (M::Stats::default(), M::Stats::default());
        for (i, &l) in tree.leaf_of.iter().enumerate() {
            if l == leaf {
                if bins[i] as u32 <= cut {
                    model.add(&mut sl, i);
                } else {
                    model.add(&mut sr, i);
                }
            }
        }
        if M::count(&sl) < self.min_leaf_size || M::count(&sr) < self.min_leaf_size {
            return false;
        }

        let depth = tree.nodes[leaf as usize].depth;
        let (lg, rg) = Self::children_good(ranges, avail.len(), var, cut);
        let log_prior = self.p_split(depth).ln() + self.log1m_split(lg, depth + 1) + self.log1m_split(rg, depth + 1)
            - (-self.p_split(depth)).ln_1p();

        let parent = tree.nodes[leaf as usize].parent;
        let parent_was_nog = parent != NONE && tree.is_nog(parent);
        let n_nog_after = tree.nogs().len() + 1 - usize::from(parent_was_nog);
        let n_good_after = good.len() - 1 + usize::from(lg) + usize::from(rg);
        let (_, pd_after, _) = self.move_probs(n_good_after, false);
        let log_prop = (pd_after / n_nog_after as f64).ln() - (pb / good.len() as f64).ln();

        let log_lik = model.log_ml(&sl) + model.log_ml(&sr) - model.log_ml(&M::merge(&sl, &sr));
        if rng.random::<f64>().ln() >= log_prior + log_prop + log_lik {
            return false;
        }

        let value = tree.nodes[leaf as usize].value;
        let l = tree.alloc(Node::leaf(leaf, depth + 1, value));
        let r = tree.alloc(Node::leaf(leaf, depth + 1, value));
        let node = &mut tree.nodes[leaf as usize];
        node.left = l;
        node.right = r;
        node.var = var as u32;
        node.cut = cut;
        for (i, slot) in tree.leaf_of.iter_mut().enumerate() {
            if *slot == leaf {
                *slot = if bins[i] as u32 <= cut { l } else { r };
            }
        }
        true
    }

    fn death<M: LeafModel, R: Rng>(
        &self,
        tree: &mut McTree,
        data: &BinnedData,
        model: &M,
        rng: &mut R,
        n_good: usize,
        pd: f64,
    ) -> bool {
        let nogs = tree.nogs();
        let node = nogs[rng.random_range(0..nogs.len())];
        let (l, r, var, cut, depth) = {
            let n = &tree.nodes[node as usize];
            (n.left, n.right, n.var as usize, n.cut, n.depth)
        };
        let (mut sl, mut sr) = (M::Stats::default(), M::Stats::default());
        for (i, &leaf) in tree.leaf_of.iter().enumerate() {
            if leaf == l {
                model.add(&mut sl, i);
            } else if leaf == r {
                model.add(&mut sr, i);
            }
        }

        let ranges = self.ranges(tree, data, node);
        let (lg, rg) = Self::children_good(&ranges, Self::avail_vars(&ranges).len(), var, cut);
        let log_prior = (-self.p_split(depth)).ln_1p()
            - self.p_split(depth).ln()
            - self.log1m_split(lg, depth + 1)
            - self.log1m_split(rg, depth + 1);

        let n_good_after = n_good + 1 - usize::from(lg) - usize::from(rg);
        let (pb_after, _, _) = self.move_probs(n_good_after, node == 0);
        let log_prop = (pb_after / n_good_after as f64).ln() - (pd / nogs.len() as f64).ln();

        let log_lik = model.log_ml(&M::merge(&sl, &sr)) - model.log_ml(&sl) - model.log_ml(&sr);
        if rng.random::<f64>().ln() >= log_prior + log_prop + log_lik {
            return false;
        }

        for child in [l, r] {
            tree.nodes[child as usize].alive = false;
            tree.free.push(child);
        }
        let n = &mut tree.nodes[node as usize];
        n.left = NONE;
        n.right = NONE;
        for slot in tree.leaf_of.iter_mut() {
            if *slot == l || *slot == r {
                *slot = node;
            }
        }
        true
    }

    fn change<M: LeafModel, R: Rng>(
        &self,
        tree: &mut McTree,
        data: &BinnedData,
        model: &M,
        rng: &mut R,
        n_good: usize,
    ) -> bool {
        let nogs = tree.nogs();
        let node = nogs[rng.random_range(0..nogs.len())];
        let (l, r, old_var, old_cut, depth) = {
            let n = &tree.nodes[node as usize];
            (n.left, n.right, n.var as usize, n.cut, n.depth)
        };
        let ranges = self.ranges(tree, data, node);
        let avail = Self::avail_vars(&ranges);
        let var = avail[rng.random_range(0..avail.len())];
        let cut = rng.random_range(ranges[var].0..ranges[var].1);

        let bins = &data.bins[var];
        let (mut ol, mut or) = (M::Stats::default(), M::Stats::default());
        let (mut nl, mut nr) = (M::Stats::default(), M::Stats::default());
        for (i, &leaf) in tree.leaf_of.iter().enumerate() {
            if leaf == l || leaf == r {
                if leaf == l {
                    model.add(&mut ol, i);
                } else {
                    model.add(&mut or, i);
                }
                if bins[i] as u32 <= cut {
                    model.add(&mut nl, i);
                } else {
                    model.add(&mut nr, i);
                }
            }
        }
        if M::count(&nl) < self.min_leaf_size || M::count(&nr) < self.min_leaf_size {
            return false;
        }

        let (olg, org) = Self::children_good(&ranges, avail.len(), old_var, old_cut);
        let (nlg, nrg) = Self::children_good(&ranges, avail.len(), var, cut);
        let log_prior = self.log1m_split(nlg, depth + 1) + self.log1m_split(nrg, depth + 1)
            - self.log1m_split(olg, depth + 1)
            - self.log1m_split(org, depth + 1);
        let n_good_after = n_good + usize::from(nlg) + usize::from(nrg) - usize::from(olg) - usize::from(org);
        let (_, _, pc_before) = self.move_probs(n_good, false);
        let (_, _, pc_after) = self.move_probs(n_good_after, false);
        let log_prop = pc_after.ln() - pc_before.ln();

        let log_lik = model.log_ml(&nl) + model.log_ml(&nr) - model.log_ml(&ol) - model.log_ml(&or);
        if rng.random::<f64>().ln() >= log_prior + log_prop + log_lik {
            return false;
        }

        let n = &mut tree.nodes[node as usize];
        n.var = var as u32;
        n.cut = cut;
        for (i, slot) in tree.leaf_of.iter_mut().enumerate() {
            if *slot == l || *slot == r {
                *slot = if bins[i] as u32 <= cut { l } else { r };
            }
        }
        true
    }

    fn draw_leaves<M: LeafModel, R: Rng>(&self, tree: &mut McTree, model: &M, rng: &mut R) {
        let mut stats = vec![M::Stats::default(); tree.nodes.len()];
        for (i, &leaf) in tree.leaf_of.iter().enumerate() {
            model.add(&mut stats[leaf as usize], i);
        }
        for leaf in tree.leaves() {
            tree.nodes[leaf as usize].value = model.draw(&stats[leaf as usize], rng);
        }
    }
}
