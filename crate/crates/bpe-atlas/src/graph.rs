//! Combinatorial substrate: countable directed graphs given by a parent
//! function, materialized to a finite depth.
//!
//! A graph here is a vertex set with a partial parent map `phi`. A vertex may
//! be parentless (a root), or its own parent (a loop edge at the root of a
//! chain). The fiber of `v` is `phi^{-1}(v)`, stored as the `children` list.
//! All shift operators in this crate are defined over such graphs together
//! with a positive weight per parented vertex.

use crate::{Error, Result};

/// Dense vertex index within one materialized graph. Indices are contiguous
/// from 0, assigned breadth-first by level and then branch order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// How weights and fibers continue beyond the materialized depth.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TailKind {
    /// Every branch continues as a singleton-fiber chain whose weights follow
    /// the family's declared rule.
    EventuallyLinearChain,
    /// No structural rule beyond the horizon; only the declared weight bounds
    /// are certified. Fibers are still promised to be singletons.
    DeclaredBound,
}

/// Certificate for the un-materialized part of the graph: fibers out there
/// are singletons and weights satisfy `2^inf <= lambda <= 2^sup`.
///
/// These bounds are what make left-invertibility, operator-norm bounds and
/// kernel-dimension statements meaningful beyond any finite horizon.
#[derive(Clone, Copy, Debug)]
pub struct TailRule {
    pub kind: TailKind,
    pub weight_log2_sup: f64,
    pub weight_log2_inf: f64,
}

/// Which built-in family a graph came from; drives vertex labels and the
/// describe output. `Custom` graphs get plain index labels.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GraphKind {
    /// Chain `0 -> 1 -> 2 -> ...` with an extra loop edge at vertex 0.
    LoopChain,
    /// Rooted tree: root with `k` children, each starting an infinite chain.
    Tree { k: usize },
    /// Rooted chain without a loop (classical unilateral shift).
    Chain,
    Custom,
}

/// A finite materialization of a parent-function graph.
///
/// Immutable after construction; shared freely across threads.
#[derive(Clone, Debug)]
pub struct ShiftGraph {
    parent: Vec<Option<VertexId>>,
    children: Vec<Vec<VertexId>>,
    level: Vec<u32>,
    depth: usize,
    tail: TailRule,
    kind: GraphKind,
}

impl ShiftGraph {
    pub fn n_vertices(&self) -> usize {
        self.parent.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tail(&self) -> TailRule {
        self.tail
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    #[inline]
    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.parent[v.index()]
    }

    /// The fiber `phi^{-1}(v)` restricted to materialized vertices. Complete
    /// whenever `level(v) < depth`; empty at the horizon boundary.
    #[inline]
    pub fn fiber(&self, v: VertexId) -> &[VertexId] {
        &self.children[v.index()]
    }

    #[inline]
    pub fn level(&self, v: VertexId) -> u32 {
        self.level[v.index()]
    }

    /// Parentless vertices, in index order.
    pub fn roots(&self) -> Vec<VertexId> {
        (0..self.n_vertices() as u32)
            .map(VertexId)
            .filter(|v| self.parent[v.index()].is_none())
            .collect()
    }

    /// The vertex carrying a loop edge (its own parent), if any.
    pub fn loop_vertex(&self) -> Option<VertexId> {
        (0..self.n_vertices() as u32)
            .map(VertexId)
            .find(|v| self.parent[v.index()] == Some(*v))
    }

    /// Human-readable vertex label for reports.
    pub fn label(&self, v: VertexId) -> String {
        match self.kind {
            GraphKind::Tree { k } => {
                if v.index() == 0 {
                    "(0,0)".to_string()
                } else {
                    let m = (v.index() - 1) / k + 1;
                    let j = (v.index() - 1) % k + 1;
                    format!("({m},{j})")
                }
            }
            _ => format!("{}", v.0),
        }
    }

    /// All vertices with `level <= level_bound`, in index order.
    pub fn materialize_support(&self, level_bound: usize) -> Result<Vec<VertexId>> {
        if level_bound > self.depth {
            return Err(Error::HorizonExceeded {
                needed: level_bound,
                depth: self.depth,
                what: "materialize_support".to_string(),
            });
        }
        Ok((0..self.n_vertices() as u32)
            .map(VertexId)
            .filter(|v| (self.level[v.index()] as usize) <= level_bound)
            .collect())
    }

    /// Checks the structural invariants; used by the custom builder and tests.
    fn validate(&self) -> Result<()> {
        let n = self.n_vertices();
        if self.children.len() != n || self.level.len() != n {
            return Err(Error::InvalidArgument("graph arrays disagree in length".to_string()));
        }
        let mut seen_child = vec![0usize; n];
        for v in 0..n {
            for &u in &self.children[v] {
                if u.index() >= n {
                    return Err(Error::InvalidArgument(format!(
                        "child {} of vertex {v} is not materialized",
                        u.0
                    )));
                }
                if self.parent[u.index()] != Some(VertexId(v as u32)) {
                    return Err(Error::InvalidArgument(format!(
                        "children is not the inverse of parent at vertex {v}"
                    )));
                }
                seen_child[u.index()] += 1;
            }
        }
        for v in 0..n {
            match self.parent[v] {
                None => {
                    if self.level[v] != 0 {
                        return Err(Error::InvalidArgument(format!(
                            "root {v} must have level 0"
                        )));
                    }
                }
                Some(p) if p.index() == v => {
                    if self.level[v] != 0 {
                        return Err(Error::InvalidArgument(format!(
                            "loop vertex {v} must have level 0"
                        )));
                    }
                }
                Some(p) => {
                    if p.index() >= n {
                        return Err(Error::InvalidArgument(format!(
                            "vertex {v} has an unmaterialized parent (set is not parent-closed)"
                        )));
                    }
                    if self.level[v] != self.level[p.index()] + 1 {
                        return Err(Error::InvalidArgument(format!(
                            "level({v}) must be level(parent)+1"
                        )));
                    }
                    if seen_child[v] != 1 {
                        return Err(Error::InvalidArgument(format!(
                            "vertex {v} must appear in exactly one fiber"
                        )));
                    }
                }
            }
        }
        let max_level = self.level.iter().copied().max().unwrap_or(0) as usize;
        if max_level != self.depth {
            return Err(Error::InvalidArgument(format!(
                "declared depth {} does not match max level {max_level}",
                self.depth
            )));
        }
        Ok(())
    }
}

/// Positive weight per parented vertex, plus the cached fiber norms
/// `d_v = sum_{u in fiber(v)} lambda_u^2` that govern left-invertibility
/// and the Cauchy dual.
///
/// `lambda[v]` is NaN for parentless roots (no edge ends there); `d_v` is
/// complete for `level(v) < depth` and 0 at the horizon boundary where the
/// fiber is not materialized.
#[derive(Clone, Debug)]
pub struct WeightAssignment {
    lambda: Vec<f64>,
    fiber_norm_sq: Vec<f64>,
}

impl WeightAssignment {
    /// Builds the assignment from per-vertex weights, caching fiber norms.
    /// Roots must carry NaN entries; every parented vertex a positive finite
    /// weight.
    pub fn new(graph: &ShiftGraph, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != graph.n_vertices() {
            return Err(Error::InvalidArgument(format!(
                "weight list has {} entries for {} vertices",
                lambda.len(),
                graph.n_vertices()
            )));
        }
        for v in 0..lambda.len() {
            let parented = graph.parent(VertexId(v as u32)).is_some();
            if parented && !(lambda[v] > 0.0 && lambda[v].is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "weight at vertex {v} must be positive and finite, got {}",
                    lambda[v]
                )));
            }
        }
        let mut fiber_norm_sq = vec![0.0; lambda.len()];
        for v in 0..lambda.len() {
            let mut d = 0.0;
            for &u in graph.fiber(VertexId(v as u32)) {
                d += lambda[u.index()] * lambda[u.index()];
            }
            fiber_norm_sq[v] = d;
        }
        Ok(WeightAssignment { lambda, fiber_norm_sq })
    }

    /// Weight on the edge ending at `v`. NaN for roots.
    #[inline]
    pub fn lambda(&self, v: VertexId) -> f64 {
        self.lambda[v.index()]
    }

    #[inline]
    pub fn log2_lambda(&self, v: VertexId) -> f64 {
        self.lambda[v.index()].log2()
    }

    /// `d_v`, the squared norm of `T e_v`; complete for `level(v) < depth`.
    #[inline]
    pub fn fiber_norm_sq(&self, v: VertexId) -> f64 {
        self.fiber_norm_sq[v.index()]
    }

    /// Smallest `d_v` over interior vertices with a nonempty fiber, i.e. the
    /// materialized part of the left-invertibility bound.
    pub fn min_interior_fiber_norm_sq(&self, graph: &ShiftGraph) -> f64 {
        let mut min = f64::INFINITY;
        for v in 0..self.lambda.len() {
            let vid = VertexId(v as u32);
            if (graph.level(vid) as usize) < graph.depth() && !graph.fiber(vid).is_empty() {
                min = min.min(self.fiber_norm_sq[v]);
            }
        }
        min
    }

    /// Largest `d_v` over interior vertices; `sqrt` of this is the
    /// materialized operator norm of the shift.
    pub fn max_interior_fiber_norm_sq(&self, graph: &ShiftGraph) -> f64 {
        let mut max = 0.0f64;
        for v in 0..self.lambda.len() {
            let vid = VertexId(v as u32);
            if (graph.level(vid) as usize) < graph.depth() && !graph.fiber(vid).is_empty() {
                max = max.max(self.fiber_norm_sq[v]);
            }
        }
        max
    }
}

/// The dyadic weight rule of the loop-chain family, for chain positions
/// `k >= 1`: weight 1/2 on the bands `2^m + 1 <= k <= 3 * 2^(m-1)` for some
/// `m >= 2`, weight 1 everywhere else (in particular on `k = 1..=4`).
pub fn example1_weight(k: u64) -> f64 {
    if example1_weight_is_half(k) {
        0.5
    } else {
        1.0
    }
}

/// Exact log2 of the loop-chain weight at chain position `k >= 1` (0 or -1).
pub fn example1_weight_log2(k: u64) -> f64 {
    if example1_weight_is_half(k) {
        -1.0
    } else {
        0.0
    }
}

fn example1_weight_is_half(k: u64) -> bool {
    if k < 5 {
        return false;
    }
    // k >= 5 lies in [2^m + 1, 2^(m+1)] for m = floor(log2(k - 1)) >= 2;
    // the band condition only needs checking against that single m.
    let m = 63 - (k - 1).leading_zeros() as u64;
    k <= 3 * (1 << (m - 1))
}

/// Loop-chain family: vertices `0..=depth` forming a chain, with an extra
/// loop edge at vertex 0 (so the fiber of 0 is `{0, 1}`), carrying weight 1
/// on the loop and the dyadic band rule along the chain.
pub fn build_example1(depth: usize) -> Result<(ShiftGraph, WeightAssignment)> {
    if depth < 2 {
        return Err(Error::InvalidArgument(format!(
            "loop-chain depth must be at least 2, got {depth}"
        )));
    }
    let n = depth + 1;
    let mut parent = Vec::with_capacity(n);
    let mut children: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut level = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    for v in 0..n {
        if v == 0 {
            parent.push(Some(VertexId(0)));
            children[0].push(VertexId(0));
            level.push(0);
            lambda.push(1.0);
        } else {
            parent.push(Some(VertexId((v - 1) as u32)));
            children[v - 1].push(VertexId(v as u32));
            level.push(v as u32);
            lambda.push(example1_weight(v as u64));
        }
    }
    let graph = ShiftGraph {
        parent,
        children,
        level,
        depth,
        tail: TailRule {
            kind: TailKind::EventuallyLinearChain,
            weight_log2_sup: 0.0,
            weight_log2_inf: -1.0,
        },
        kind: GraphKind::LoopChain,
    };
    let weights = WeightAssignment::new(&graph, lambda)?;
    Ok((graph, weights))
}

/// Vertex index of tree node `(m, j)` (`m >= 1`, `1 <= j <= k`) under the
/// breadth-first enumeration used by [`build_example2`]; the root `(0,0)` is
/// index 0.
pub fn tree_vertex_index(k: usize, m: usize, j: usize) -> usize {
    debug_assert!(m >= 1 && (1..=k).contains(&j));
    1 + (m - 1) * k + (j - 1)
}

/// Rooted-tree family: a root with `k` children, each child starting an
/// infinite chain. Branch 1 carries `base_weights` (entry `n-1` is the weight
/// at level `n`); branches 2..k carry weight 1 everywhere.
///
/// `base_weights` must have at least `depth` entries, all in `(0, 1]`.
pub fn build_example2(
    k: usize,
    base_weights: &[f64],
    depth: usize,
) -> Result<(ShiftGraph, WeightAssignment)> {
    if k < 1 {
        return Err(Error::InvalidArgument("tree branching k must be at least 1".to_string()));
    }
    if depth < 1 {
        return Err(Error::InvalidArgument("tree depth must be at least 1".to_string()));
    }
    if base_weights.len() < depth {
        return Err(Error::InvalidArgument(format!(
            "need at least {depth} base weights for depth {depth}, got {}",
            base_weights.len()
        )));
    }
    let mut inf_log2 = 0.0f64;
    for (i, &w) in base_weights.iter().enumerate().take(depth) {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "base weight {i} must be positive and finite, got {w}"
            )));
        }
        if w > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "base weight {i} must be at most 1, got {w}"
            )));
        }
        inf_log2 = inf_log2.min(w.log2());
    }
    let n = 1 + k * depth;
    let mut parent = vec![None; n];
    let mut children: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut level = vec![0u32; n];
    let mut lambda = vec![f64::NAN; n];
    for m in 1..=depth {
        for j in 1..=k {
            let v = tree_vertex_index(k, m, j);
            let p = if m == 1 { 0 } else { tree_vertex_index(k, m - 1, j) };
            parent[v] = Some(VertexId(p as u32));
            children[p].push(VertexId(v as u32));
            level[v] = m as u32;
            lambda[v] = if j == 1 { base_weights[m - 1] } else { 1.0 };
        }
    }
    let graph = ShiftGraph {
        parent,
        children,
        level,
        depth,
        tail: TailRule {
            kind: TailKind::EventuallyLinearChain,
            weight_log2_sup: 0.0,
            weight_log2_inf: inf_log2,
        },
        kind: GraphKind::Tree { k },
    };
    let weights = WeightAssignment::new(&graph, lambda)?;
    Ok((graph, weights))
}

/// Classical unilateral weighted shift: rooted chain `0 -> 1 -> ... -> depth`
/// with `weights[n-1]` attached to vertex `n`. The tail certificate declares
/// that weights stay within the materialized envelope.
pub fn build_classical(weights: &[f64], depth: usize) -> Result<(ShiftGraph, WeightAssignment)> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("weight sequence must be nonempty".to_string()));
    }
    if depth < 1 {
        return Err(Error::InvalidArgument("chain depth must be at least 1".to_string()));
    }
    if weights.len() < depth {
        return Err(Error::InvalidArgument(format!(
            "need at least {depth} weights for depth {depth}, got {}",
            weights.len()
        )));
    }
    let mut sup_log2 = f64::NEG_INFINITY;
    let mut inf_log2 = f64::INFINITY;
    for (i, &w) in weights.iter().enumerate().take(depth) {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} must be positive and finite, got {w}"
            )));
        }
        sup_log2 = sup_log2.max(w.log2());
        inf_log2 = inf_log2.min(w.log2());
    }
    let n = depth + 1;
    let mut parent = vec![None; n];
    let mut children: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut level = vec![0u32; n];
    let mut lambda = vec![f64::NAN; n];
    for v in 1..n {
        parent[v] = Some(VertexId((v - 1) as u32));
        children[v - 1].push(VertexId(v as u32));
        level[v] = v as u32;
        lambda[v] = weights[v - 1];
    }
    let graph = ShiftGraph {
        parent,
        children,
        level,
        depth,
        tail: TailRule {
            kind: TailKind::DeclaredBound,
            weight_log2_sup: sup_log2,
            weight_log2_inf: inf_log2,
        },
        kind: GraphKind::Chain,
    };
    let weights = WeightAssignment::new(&graph, lambda)?;
    Ok((graph, weights))
}

/// Custom parent-function graph. `parents[v]` is `None` for a root, `Some(v)`
/// for a loop, otherwise the parent index; `weights[v]` is the edge weight
/// into `v` (ignored, may be NaN, for roots). The tail certificate must be
/// supplied by the caller.
pub fn build_custom(
    parents: &[Option<usize>],
    weights: &[f64],
    tail: TailRule,
) -> Result<(ShiftGraph, WeightAssignment)> {
    let n = parents.len();
    if n == 0 {
        return Err(Error::InvalidArgument("custom graph must have at least one vertex".to_string()));
    }
    if weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "custom graph has {n} vertices but {} weights",
            weights.len()
        )));
    }
    let mut parent = vec![None; n];
    let mut children: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    for v in 0..n {
        if let Some(p) = parents[v] {
            if p >= n {
                return Err(Error::InvalidArgument(format!(
                    "parent {p} of vertex {v} is out of range"
                )));
            }
            parent[v] = Some(VertexId(p as u32));
            children[p].push(VertexId(v as u32));
        }
    }
    // Levels by breadth-first propagation from roots and loops; rejects
    // cycles other than self-loops (those vertices never get a level).
    let mut level = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for v in 0..n {
        match parent[v] {
            None => {
                level[v] = 0;
                queue.push_back(v);
            }
            Some(p) if p.index() == v => {
                level[v] = 0;
                queue.push_back(v);
            }
            _ => {}
        }
    }
    while let Some(v) = queue.pop_front() {
        for &u in &children[v] {
            if u.index() != v && level[u.index()] == u32::MAX {
                level[u.index()] = level[v] + 1;
                queue.push_back(u.index());
            }
        }
    }
    if let Some(v) = level.iter().position(|&l| l == u32::MAX) {
        return Err(Error::InvalidArgument(format!(
            "vertex {v} is not reachable from a root or loop (cycle or orphan)"
        )));
    }
    let depth = level.iter().copied().max().unwrap_or(0) as usize;
    let graph = ShiftGraph { parent, children, level, depth, tail, kind: GraphKind::Custom };
    graph.validate()?;
    let weights = WeightAssignment::new(&graph, weights.to_vec())?;
    Ok((graph, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_weight_rule_bands() {
        // Band membership straight from the rule definition.
        for m in 2..=14u64 {
            for k in (1 << m) + 1..=3 * (1 << (m - 1)) {
                assert_eq!(example1_weight(k), 0.5, "k={k} should be 1/2 (m={m})");
            }
            for k in 3 * (1 << (m - 1)) + 1..=(1 << (m + 1)) {
                assert_eq!(example1_weight(k), 1.0, "k={k} should be 1 (gap after m={m})");
            }
        }
        for k in 1..=4 {
            assert_eq!(example1_weight(k), 1.0);
        }
        assert_eq!(example1_weight(5), 0.5);
        assert_eq!(example1_weight(6), 0.5);
        assert_eq!(example1_weight(7), 1.0);
        assert_eq!(example1_weight(8), 1.0);
    }

    #[test]
    fn example1_half_count_first_sixteen() {
        let halves = (1..=16).filter(|&k| example1_weight(k) == 0.5).count();
        assert_eq!(halves, 6, "lambda_1..lambda_16 must contain six halves");
    }

    #[test]
    fn example1_structure() {
        let (g, w) = build_example1(10).unwrap();
        assert_eq!(g.n_vertices(), 11);
        assert_eq!(g.parent(VertexId(0)), Some(VertexId(0)), "loop at the root");
        assert_eq!(g.fiber(VertexId(0)), &[VertexId(0), VertexId(1)]);
        assert_eq!(g.fiber(VertexId(1)), &[VertexId(2)]);
        assert_eq!(g.level(VertexId(0)), 0);
        assert_eq!(g.level(VertexId(7)), 7);
        assert_eq!(w.lambda(VertexId(0)), 1.0);
        assert_eq!(w.lambda(VertexId(4)), 1.0);
        assert_eq!(w.lambda(VertexId(5)), 0.5);
        // d_0 = 1^2 + 1^2 on the size-2 fiber of the root.
        assert_eq!(w.fiber_norm_sq(VertexId(0)), 2.0);
        assert_eq!(w.fiber_norm_sq(VertexId(4)), 0.25);
        assert!(g.validate().is_ok());
        assert!(build_example1(1).is_err());
    }

    #[test]
    fn example1_support_by_level() {
        let (g, _) = build_example1(6).unwrap();
        let s = g.materialize_support(3).unwrap();
        assert_eq!(s, vec![VertexId(0), VertexId(1), VertexId(2), VertexId(3)]);
        assert!(matches!(
            g.materialize_support(7),
            Err(Error::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn example2_structure() {
        let base: Vec<f64> = (1..=8).map(|n| example1_weight(n)).collect();
        let (g, w) = build_example2(3, &base, 8).unwrap();
        assert_eq!(g.n_vertices(), 1 + 3 * 8);
        assert_eq!(g.roots(), vec![VertexId(0)]);
        assert_eq!(g.fiber(VertexId(0)).len(), 3);
        assert_eq!(g.label(VertexId(0)), "(0,0)");
        let v21 = VertexId(tree_vertex_index(3, 2, 1) as u32);
        assert_eq!(g.label(v21), "(2,1)");
        assert_eq!(g.parent(v21), Some(VertexId(tree_vertex_index(3, 1, 1) as u32)));
        // Branch 1 carries the base sequence, branches 2..k all ones.
        assert_eq!(w.lambda(VertexId(tree_vertex_index(3, 5, 1) as u32)), 0.5);
        assert_eq!(w.lambda(VertexId(tree_vertex_index(3, 5, 2) as u32)), 1.0);
        assert_eq!(w.lambda(VertexId(tree_vertex_index(3, 5, 3) as u32)), 1.0);
        // d_root = lambda_1^2 + (k - 1).
        assert_eq!(w.fiber_norm_sq(VertexId(0)), 3.0);
        assert!(g.validate().is_ok());
        assert_eq!(g.materialize_support(1).unwrap().len(), 4);
        assert!(build_example2(0, &base, 4).is_err());
        assert!(build_example2(2, &[1.0, 1.5], 2).is_err(), "base weights above 1 rejected");
    }

    #[test]
    fn example2_k1_all_ones_matches_classical() {
        let base = vec![1.0; 6];
        let (gt, wt) = build_example2(1, &base, 6).unwrap();
        let (gc, wc) = build_classical(&base, 6).unwrap();
        assert_eq!(gt.n_vertices(), gc.n_vertices());
        for v in 0..gt.n_vertices() as u32 {
            let v = VertexId(v);
            assert_eq!(gt.parent(v), gc.parent(v));
            assert_eq!(gt.level(v), gc.level(v));
            if gt.parent(v).is_some() {
                assert_eq!(wt.lambda(v), wc.lambda(v));
            }
        }
    }

    #[test]
    fn classical_structure() {
        let (g, w) = build_classical(&[1.0, 0.5, 1.0, 1.0, 1.0], 5).unwrap();
        assert_eq!(g.n_vertices(), 6);
        assert_eq!(g.roots(), vec![VertexId(0)]);
        assert_eq!(g.loop_vertex(), None);
        assert_eq!(g.level(VertexId(5)), 5);
        // d_v = lambda_{v+1}^2 on a chain.
        assert_eq!(w.fiber_norm_sq(VertexId(0)), 1.0);
        assert_eq!(w.fiber_norm_sq(VertexId(1)), 0.25);
        assert!(build_classical(&[], 1).is_err());
        assert!(build_classical(&[1.0], 5).is_err());
    }

    #[test]
    fn custom_round_trip_and_rejection() {
        // Loop chain rebuilt by hand through the custom entry point.
        let parents = vec![Some(0), Some(0), Some(1), Some(2)];
        let weights = vec![1.0, 1.0, 1.0, 0.5];
        let tail = TailRule {
            kind: TailKind::DeclaredBound,
            weight_log2_sup: 0.0,
            weight_log2_inf: -1.0,
        };
        let (g, w) = build_custom(&parents, &weights, tail).unwrap();
        assert_eq!(g.depth(), 3);
        assert_eq!(g.fiber(VertexId(0)), &[VertexId(0), VertexId(1)]);
        assert_eq!(w.min_interior_fiber_norm_sq(&g), 0.25);
        // A two-cycle is not a parent-function graph we accept.
        let bad = build_custom(&[Some(1), Some(0)], &[1.0, 1.0], tail);
        assert!(bad.is_err());
        // Nonpositive weight rejected.
        let bad = build_custom(&[None, Some(0)], &[f64::NAN, 0.0], tail);
        assert!(bad.is_err());
    }
}
