//! The shift, its adjoint, the Cauchy dual, the wandering subspace, and the
//! small dense linear algebra shared by the rest of the crate.
//!
//! For a graph with parent function `phi` and weights `lambda`, the shift
//! acts as `(T x)_u = lambda_u * x_{phi(u)}` and its adjoint as
//! `(T* x)_v = sum_{u in fiber(v)} lambda_u * x_u`. Since `T* T` is diagonal
//! with entries `d_v = sum_{u in fiber(v)} lambda_u^2`, the Cauchy dual
//! `T' = T (T* T)^{-1}` is again a shift on the same graph with weights
//! `lambda'_u = lambda_u / d_{phi(u)}`.

use crate::graph::{ShiftGraph, TailRule, VertexId, WeightAssignment};
use crate::vector::HilbertVector;
use crate::{C64, Error, Result};
use nalgebra::DMatrix;

/// Hard cap on `dim ker T*`; anything larger is treated as not certified
/// finite (the dense per-step Gram work scales with this dimension squared,
/// so huge kernels are out of contract anyway).
const KERNEL_DIM_CAP: usize = 1024;

/// Applies the shift: `(T x)_u = lambda_u * x_{phi(u)}`.
///
/// Fails loudly if the support of `x` touches the last materialized level,
/// because the children of those vertices do not exist yet and the result
/// would be silently truncated otherwise.
pub fn apply_shift(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    x: &HilbertVector,
) -> Result<HilbertVector> {
    let mut out = Vec::with_capacity(x.nnz() + 1);
    for (v, a) in x.iter() {
        if graph.level(v) as usize >= graph.depth() {
            return Err(Error::HorizonExceeded {
                needed: graph.level(v) as usize + 1,
                depth: graph.depth(),
                what: format!("apply_shift at vertex {}", graph.label(v)),
            });
        }
        for &u in graph.fiber(v) {
            out.push((u, a * weights.lambda(u)));
        }
    }
    Ok(HilbertVector::from_unsorted_scaled(out, x.log2_scale()))
}

/// Applies the adjoint: `(T* x)_v = sum_{u in fiber(v)} lambda_u * x_u`.
/// Entries at roots contribute nothing; no horizon constraint.
pub fn apply_adjoint(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    x: &HilbertVector,
) -> HilbertVector {
    let mut out = Vec::with_capacity(x.nnz());
    for (u, a) in x.iter() {
        if let Some(p) = graph.parent(u) {
            out.push((p, a * weights.lambda(u)));
        }
    }
    HilbertVector::from_unsorted_scaled(out, x.log2_scale())
}

/// The Cauchy dual shift: same graph, weights `lambda'_u = lambda_u /
/// d_{phi(u)}`, with the tail certificate transformed accordingly (singleton
/// tail fibers invert their weights, so sup and inf swap signs).
#[derive(Clone, Debug)]
pub struct DualWeights {
    weights: WeightAssignment,
    tail: TailRule,
}

impl DualWeights {
    pub fn weights(&self) -> &WeightAssignment {
        &self.weights
    }

    pub fn tail(&self) -> TailRule {
        self.tail
    }

    #[inline]
    pub fn lambda(&self, v: VertexId) -> f64 {
        self.weights.lambda(v)
    }
}

/// Computes the Cauchy dual weights, verifying left-invertibility first:
/// the materialized `inf_v d_v` combined with the tail certificate must be
/// bounded away from zero.
pub fn cauchy_dual(graph: &ShiftGraph, weights: &WeightAssignment) -> Result<DualWeights> {
    let tail = graph.tail();
    let mat_min = weights.min_interior_fiber_norm_sq(graph);
    let tail_d_min = f64::powf(2.0, 2.0 * tail.weight_log2_inf);
    let certified_min = mat_min.min(tail_d_min);
    if !(certified_min > 0.0 && certified_min.is_finite()) {
        return Err(Error::NotLeftInvertible(format!(
            "certified inf of d_v is {certified_min}"
        )));
    }
    let n = graph.n_vertices();
    let mut lambda = vec![f64::NAN; n];
    for v in 0..n {
        let vid = VertexId(v as u32);
        if let Some(p) = graph.parent(vid) {
            lambda[v] = weights.lambda(vid) / weights.fiber_norm_sq(p);
        }
    }
    let dual_weights = WeightAssignment::new(graph, lambda)?;
    Ok(DualWeights {
        weights: dual_weights,
        tail: TailRule {
            kind: tail.kind,
            weight_log2_sup: -tail.weight_log2_inf,
            weight_log2_inf: -tail.weight_log2_sup,
        },
    })
}

/// Orthonormal basis of the wandering subspace `ker T*`.
///
/// The kernel decomposes per structural source: one `e_root` for each
/// parentless root, and for each fiber of size `s >= 2` the
/// `(s-1)`-dimensional orthocomplement of the fiber's weight vector. Root
/// vectors come first, then fiber complements in fiber-vertex order.
#[derive(Clone, Debug)]
pub struct WanderingBasis {
    vectors: Vec<HilbertVector>,
}

impl WanderingBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[HilbertVector] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &HilbertVector {
        &self.vectors[i]
    }
}

/// Assembles the wandering basis. The tail certificate promises singleton
/// fibers beyond the horizon, so only materialized roots and fibers
/// contribute; the dimension is finite by construction but still capped to
/// keep downstream dense work sane.
pub fn wandering_basis(graph: &ShiftGraph, weights: &WeightAssignment) -> Result<WanderingBasis> {
    let mut vectors = Vec::new();
    for root in graph.roots() {
        vectors.push(HilbertVector::basis(root));
    }
    for v in 0..graph.n_vertices() as u32 {
        let fiber = graph.fiber(VertexId(v));
        let s = fiber.len();
        if s < 2 {
            continue;
        }
        // Householder reflection sending the unit weight vector u to -e_1:
        // H = I - 2 h h^T / (h^T h) with h = u + e_1. Columns 2..s of H are
        // an orthonormal basis of the orthocomplement of u inside the fiber
        // coordinate space. Weights are positive, so h_1 >= 1 and the
        // construction never degenerates.
        let a: Vec<f64> = fiber.iter().map(|&u| weights.lambda(u)).collect();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut h: Vec<f64> = a.iter().map(|x| x / norm).collect();
        h[0] += 1.0;
        let hth: f64 = h.iter().map(|x| x * x).sum();
        for col in 1..s {
            let mut entries = Vec::with_capacity(s);
            for row in 0..s {
                let id = if row == col { 1.0 } else { 0.0 };
                let val = id - 2.0 * h[row] * h[col] / hth;
                entries.push((fiber[row], C64::new(val, 0.0)));
            }
            vectors.push(HilbertVector::from_entries(entries));
        }
        if vectors.len() > KERNEL_DIM_CAP {
            return Err(Error::InfiniteDimensionalKernel(format!(
                "kernel dimension exceeds the supported cap {KERNEL_DIM_CAP}"
            )));
        }
    }
    Ok(WanderingBasis { vectors })
}

/// Incremental modified Gram-Schmidt with one re-orthogonalization pass.
///
/// Candidates whose residual norm falls below `tol` relative to their input
/// norm are dropped (counted, not kept); everything else is normalized and
/// appended. This is the engine behind both the one-shot `orthonormalize`
/// and the step-by-step orbit bases used by the region scanner.
#[derive(Clone, Debug)]
pub struct IncrementalOnb {
    q: Vec<HilbertVector>,
    tol_log2: f64,
    dropped: usize,
}

impl IncrementalOnb {
    pub fn new(tol: f64) -> Self {
        IncrementalOnb { q: Vec::new(), tol_log2: tol.log2(), dropped: 0 }
    }

    pub fn basis(&self) -> &[HilbertVector] {
        &self.q
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn into_basis(self) -> Vec<HilbertVector> {
        self.q
    }

    /// Orthogonalizes `v` against the current basis; returns the index of
    /// the accepted new basis vector, or None if `v` was (numerically)
    /// dependent.
    pub fn push(&mut self, v: &HilbertVector) -> Option<usize> {
        let input_log2 = v.log2_norm();
        if !input_log2.is_finite() {
            self.dropped += 1;
            return None;
        }
        let mut res = v.clone();
        for _pass in 0..2 {
            for q in &self.q {
                let c = res.dot(q);
                if !c.is_zero() {
                    res = res.add_scaled(c.neg(), q);
                }
            }
        }
        if res.log2_norm() - input_log2 < self.tol_log2 {
            self.dropped += 1;
            return None;
        }
        self.q.push(res.normalized());
        Some(self.q.len() - 1)
    }
}

/// One-shot orthonormalization of a finite list; returns the basis of the
/// span and its rank. Dropped (dependent) inputs reduce the rank silently.
pub fn orthonormalize(vectors: &[HilbertVector], tol: f64) -> (Vec<HilbertVector>, usize) {
    let mut onb = IncrementalOnb::new(tol);
    for v in vectors {
        onb.push(v);
    }
    let rank = onb.rank();
    (onb.into_basis(), rank)
}

/// Largest and smallest singular values of a dense complex matrix.
pub fn singular_extremes(m: &DMatrix<C64>) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, 0.0);
    }
    let svd = m.clone().svd(false, false);
    let mut max = 0.0f64;
    let mut min = f64::INFINITY;
    for &s in svd.singular_values.iter() {
        max = max.max(s);
        min = min.min(s);
    }
    (max, min)
}
