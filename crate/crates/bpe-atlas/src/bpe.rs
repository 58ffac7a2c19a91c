//! The finite-section point-evaluation engine.
//!
//! For a left-invertible shift with wandering basis `x_1..x_d`, the quantity
//! driving everything here is
//!
//! ```text
//!     B_n(w) = || P_{M_n} S_n(w) restricted to ker T* ||,
//!     M_n   = span { T^k x_i : 0 <= k <= n },
//!     S_n(w) = sum_{k<=n} conj(w)^k T'^k,
//! ```
//!
//! whose boundedness in `n` decides whether `w` admits a bounded point
//! evaluation. The evaluation series `E_w* x = sum conj(w)^n T'^n x`, the
//! kernel `kappa(z, w)`, and the adjoint-eigenvector cross-check live here
//! as well.
//!
//! The engine exploits one structural fact (tested in this file): for
//! `x, y in ker T*` and `j < k`, `<T'^k x, T^j y> = 0`. Consequently the
//! matrix row belonging to an orthonormal direction of `M_n` freezes as
//! soon as the direction joins, every row is a polynomial in `conj(w)` with
//! w-independent coefficients, and a full scan precomputes those
//! coefficients once.

use crate::graph::{ShiftGraph, VertexId, WeightAssignment};
use crate::operator::{
    apply_shift, cauchy_dual, singular_extremes, wandering_basis, DualWeights, IncrementalOnb,
    WanderingBasis,
};
use crate::spectral::SpectralReport;
use crate::vector::{HilbertVector, ScaledComplex};
use crate::{C64, Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rank tolerance for orbit orthonormalization.
pub const MODULI_RANK_TOL: f64 = 1e-12;
/// A point whose final B value exceeds this cap is never called BOUNDED.
pub const BOUNDED_CAP: f64 = 1e12;
/// Eigenvectors keeping more than this fraction of their mass in the last
/// two materialized levels are flagged non-convergent.
pub const TAIL_MASS_FLAG: f64 = 0.1;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Classification {
    Bounded,
    Unbounded,
    Inconclusive,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Bounded => "BOUNDED",
            Classification::Unbounded => "UNBOUNDED",
            Classification::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Orthonormal basis of `M_n`, grown one orbit layer at a time.
///
/// `join_steps[j]` records the layer at which basis vector `j` appeared;
/// dependent orbit vectors are dropped silently but counted, since only the
/// span matters for the criterion.
#[derive(Clone, Debug)]
pub struct ModuliBasis {
    n: usize,
    d: usize,
    onb: IncrementalOnb,
    join_steps: Vec<usize>,
    rank_at: Vec<usize>,
    cur_layer: Vec<HilbertVector>,
}

impl ModuliBasis {
    pub fn build(
        graph: &ShiftGraph,
        weights: &WeightAssignment,
        basis: &WanderingBasis,
        n: usize,
    ) -> Result<Self> {
        if basis.dim() == 0 {
            return Err(Error::InvalidArgument(
                "kernel of the adjoint is trivial; point evaluations are vacuous".to_string(),
            ));
        }
        if graph.depth() < n + 2 {
            return Err(Error::HorizonExceeded {
                needed: n + 2,
                depth: graph.depth(),
                what: format!("orbit subspace at layer {n}"),
            });
        }
        let mut mb = ModuliBasis {
            n: 0,
            d: basis.dim(),
            onb: IncrementalOnb::new(MODULI_RANK_TOL),
            join_steps: Vec::new(),
            rank_at: Vec::new(),
            cur_layer: basis.vectors().to_vec(),
        };
        for x in &mb.cur_layer {
            if mb.onb.push(x).is_some() {
                mb.join_steps.push(0);
            }
        }
        mb.rank_at.push(mb.onb.rank());
        mb.extend_to(graph, weights, n)?;
        Ok(mb)
    }

    /// Extends the subspace from its current layer to layer `m`, reusing
    /// every previously orthonormalized column.
    pub fn extend_to(
        &mut self,
        graph: &ShiftGraph,
        weights: &WeightAssignment,
        m: usize,
    ) -> Result<()> {
        if graph.depth() < m + 2 {
            return Err(Error::HorizonExceeded {
                needed: m + 2,
                depth: graph.depth(),
                what: format!("orbit subspace at layer {m}"),
            });
        }
        while self.n < m {
            for x in self.cur_layer.iter_mut() {
                *x = apply_shift(graph, weights, x)?;
            }
            self.n += 1;
            for x in &self.cur_layer {
                if self.onb.push(x).is_some() {
                    self.join_steps.push(self.n);
                }
            }
            self.rank_at.push(self.onb.rank());
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel_dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.onb.rank()
    }

    pub fn onb(&self) -> &[HilbertVector] {
        self.onb.basis()
    }

    pub fn join_steps(&self) -> &[usize] {
        &self.join_steps
    }

    /// Rank of the layer-`k` subspace for any `k` up to the current layer.
    pub fn rank_at(&self, k: usize) -> usize {
        self.rank_at[k]
    }

    /// Number of dependent orbit vectors dropped so far. On the loop-chain
    /// family this becomes nonzero once orbit residuals fall below the rank
    /// tolerance (the weights shrink the new directions super-exponentially),
    /// after which B_n is reported constant; the count makes that visible.
    pub fn dropped(&self) -> usize {
        self.onb.dropped()
    }
}

/// One row of the precomputed engine: the `M`-direction it belongs to
/// joined at `join_step`, and `g[i][k] = <T'^k x_i, q_j>` for `k <=
/// join_step` (zero beyond: dual orbits of the kernel pair against shift
/// orbits only at matching powers).
struct RowCoeffs {
    join_step: usize,
    g: Vec<Vec<ScaledComplex>>,
}

/// Precomputed scan engine: everything `w`-independent about
/// `B_0..B_{n_max}` for one operator.
pub struct BpeEngine {
    d: usize,
    n_max: usize,
    moduli: ModuliBasis,
    rows: Vec<RowCoeffs>,
}

impl BpeEngine {
    pub fn new(
        graph: &ShiftGraph,
        weights: &WeightAssignment,
        dual: &DualWeights,
        basis: &WanderingBasis,
        n_max: usize,
    ) -> Result<Self> {
        let moduli = ModuliBasis::build(graph, weights, basis, n_max)?;
        let d = basis.dim();
        let mut rows: Vec<RowCoeffs> = moduli
            .join_steps()
            .iter()
            .map(|&s| RowCoeffs {
                join_step: s,
                g: (0..d).map(|_| Vec::with_capacity(s + 1)).collect(),
            })
            .collect();
        // Stream the dual orbit once; each row only needs coefficients up
        // to its join step.
        let mut layer: Vec<HilbertVector> = basis.vectors().to_vec();
        for k in 0..=n_max {
            if k > 0 {
                for x in layer.iter_mut() {
                    *x = apply_shift(graph, dual.weights(), x)?;
                }
            }
            for (j, row) in rows.iter_mut().enumerate() {
                if row.join_step >= k {
                    for (i, x) in layer.iter().enumerate() {
                        row.g[i].push(x.dot(&moduli.onb()[j]));
                    }
                }
            }
        }
        Ok(BpeEngine { d, n_max, moduli, rows })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn kernel_dim(&self) -> usize {
        self.d
    }

    pub fn moduli(&self) -> &ModuliBasis {
        &self.moduli
    }

    /// `log2 B_n(w)` for `n = 0..=n_max`.
    ///
    /// Rows are evaluated as polynomials in `conj(w)`; the Gram matrix
    /// `H = M^H M` is accumulated under a shared exponent, and its largest
    /// eigenvalue is recomputed only at steps where new rows join (B is
    /// constant in between by construction).
    pub fn log2_b(&self, w: C64) -> Vec<f64> {
        let wbar = ScaledComplex::new(w.conj());
        let d = self.d;
        let mut h = DMatrix::<C64>::zeros(d, d);
        let mut h_scale = 0.0f64;
        let mut h_empty = true;
        let mut out = Vec::with_capacity(self.n_max + 1);
        let mut next_row = 0usize;
        let mut last = f64::NEG_INFINITY;
        let mut row_vals = vec![C64::new(0.0, 0.0); d];
        for n in 0..=self.n_max {
            let mut updated = false;
            while next_row < self.rows.len() && self.rows[next_row].join_step == n {
                let row = &self.rows[next_row];
                // r[i] = sum_k conj(w)^k g[i][k], accumulated with an
                // incrementally maintained power so zero coefficients cost
                // nothing.
                let mut r = vec![ScaledComplex::zero(); d];
                let mut wpow = ScaledComplex::one();
                for k in 0..=row.join_step {
                    if k > 0 {
                        wpow = wpow.mul(&wbar);
                        if wpow.is_zero() {
                            break;
                        }
                    }
                    for i in 0..d {
                        let gik = &row.g[i][k];
                        if !gik.is_zero() {
                            r[i] = r[i].add(&wpow.mul(gik));
                        }
                    }
                }
                let mut l = f64::NEG_INFINITY;
                for ri in &r {
                    if !ri.is_zero() {
                        l = l.max(ri.log2_abs());
                    }
                }
                next_row += 1;
                if l == f64::NEG_INFINITY {
                    continue;
                }
                if h_empty {
                    h_scale = 2.0 * l;
                    h_empty = false;
                } else if 2.0 * l > h_scale {
                    // A louder row arrived: rescale the accumulated Gram
                    // down to the new shared exponent.
                    let factor = f64::exp2(h_scale - 2.0 * l);
                    h *= C64::new(factor, 0.0);
                    h_scale = 2.0 * l;
                }
                for i in 0..d {
                    row_vals[i] = r[i].value_shifted_log2(0.5 * h_scale);
                }
                for a in 0..d {
                    for b in 0..d {
                        h[(a, b)] += row_vals[a].conj() * row_vals[b];
                    }
                }
                updated = true;
            }
            if updated || n == 0 {
                let lam = if h_empty {
                    0.0
                } else if d == 1 {
                    h[(0, 0)].re.max(0.0)
                } else {
                    let eig = nalgebra::SymmetricEigen::new(h.clone());
                    eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max)
                };
                last = if lam > 0.0 {
                    0.5 * (lam.log2() + h_scale)
                } else {
                    f64::NEG_INFINITY
                };
            }
            out.push(last);
        }
        out
    }

    /// Full sample at one point: B sequence, tail slope, classification.
    pub fn sample(&self, w: C64, tail_fraction: f64, slope_threshold: f64) -> BpeSample {
        let log2_b = self.log2_b(w);
        let (slope, classification) = classify_point(&log2_b, tail_fraction, slope_threshold);
        BpeSample { w, log2_b, slope, classification }
    }
}

/// B values and classification at one complex point.
#[derive(Clone, Debug)]
pub struct BpeSample {
    pub w: C64,
    /// `log2 B_n` for `n = 0..=N`; kept in the log domain since B can pass
    /// f64 range at aggressively scanned radii.
    pub log2_b: Vec<f64>,
    pub slope: f64,
    pub classification: Classification,
}

impl BpeSample {
    /// `B_n` as a plain double (infinite if out of range).
    pub fn b(&self, n: usize) -> f64 {
        f64::exp2(self.log2_b[n])
    }

    pub fn b_last(&self) -> f64 {
        f64::exp2(*self.log2_b.last().unwrap())
    }
}

/// The criterion sequence `B_n(w)` for `n = 0..N`, as plain doubles.
pub fn b_n(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    dual: &DualWeights,
    basis: &WanderingBasis,
    w: C64,
    n_max: usize,
) -> Result<Vec<f64>> {
    let engine = BpeEngine::new(graph, weights, dual, basis, n_max)?;
    Ok(engine.log2_b(w).iter().map(|&l| f64::exp2(l)).collect())
}

/// Least-squares slope of `log2 B_n` over the tail window, and the verdict:
/// growing => UNBOUNDED, flat with moderate B => BOUNDED, else
/// INCONCLUSIVE. Total on any input; the window degenerates gracefully for
/// short sequences.
pub fn classify_point(
    log2_b: &[f64],
    tail_fraction: f64,
    slope_threshold: f64,
) -> (f64, Classification) {
    let n_last = log2_b.len().saturating_sub(1);
    if n_last == 0 {
        return (0.0, Classification::Inconclusive);
    }
    let frac = tail_fraction.clamp(0.0, 1.0);
    let hi = n_last.saturating_sub(1).max(1);
    let start = ((((1.0 - frac) * n_last as f64).ceil()) as usize).clamp(1, hi);
    let pts: Vec<(f64, f64)> = (start..=n_last)
        .filter(|&n| log2_b[n].is_finite())
        .map(|n| (n as f64, log2_b[n]))
        .collect();
    let slope = if pts.len() < 2 {
        0.0
    } else {
        let men = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let mey = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let num: f64 = pts.iter().map(|p| (p.0 - men) * (p.1 - mey)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - men) * (p.0 - men)).sum();
        num / den
    };
    let classification = if slope > slope_threshold {
        Classification::Unbounded
    } else if slope < slope_threshold / 4.0 && log2_b[n_last] < BOUNDED_CAP.log2() {
        Classification::Bounded
    } else {
        Classification::Inconclusive
    };
    (slope, classification)
}

/// `S_n(w) x = sum_{k<=n} conj(w)^k T'^k x`.
pub fn s_n_apply(
    graph: &ShiftGraph,
    dual: &DualWeights,
    w: C64,
    x: &HilbertVector,
    n: usize,
) -> Result<HilbertVector> {
    if graph.depth() < n + 2 {
        return Err(Error::HorizonExceeded {
            needed: n + 2,
            depth: graph.depth(),
            what: format!("evaluation series truncated at {n}"),
        });
    }
    let wbar = ScaledComplex::new(w.conj());
    let mut acc = x.clone();
    let mut cur = x.clone();
    let mut wpow = ScaledComplex::one();
    for _ in 1..=n {
        cur = apply_shift(graph, dual.weights(), &cur)?;
        wpow = wpow.mul(&wbar);
        if wpow.is_zero() {
            break;
        }
        acc = acc.add_scaled(wpow, &cur);
    }
    Ok(acc)
}

/// Grid over a patch of the complex plane. One struct covers both kinds;
/// `kind` selects which fields matter. A polar grid without an explicit
/// `r_max` extends to 1.5 x the dual spectral radius estimate at scan time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub kind: GridKind,
    pub rays: usize,
    pub r_max: Option<f64>,
    pub r_step: f64,
    pub nx: usize,
    pub ny: usize,
    pub re: [f64; 2],
    pub im: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Polar,
    Cartesian,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            kind: GridKind::Polar,
            rays: 64,
            r_max: None,
            r_step: 0.01,
            nx: 64,
            ny: 64,
            re: [-1.5, 1.5],
            im: [-1.5, 1.5],
        }
    }
}

impl GridSpec {
    /// Checks every field the current `kind` uses, without building the
    /// point list, so bad grids are rejected at config-parse time. A polar
    /// grid with `r_max: None` is checked again at resolve time once the
    /// radius fallback is known.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            GridKind::Polar => {
                if self.rays == 0 {
                    return Err(Error::Config("polar grid needs at least one ray".to_string()));
                }
                if !(self.r_step > 0.0 && self.r_step.is_finite()) {
                    return Err(Error::Config(format!(
                        "polar radius step must be positive, got {}",
                        self.r_step
                    )));
                }
                if let Some(r) = self.r_max {
                    if !(r >= 0.0 && r.is_finite()) {
                        return Err(Error::Config(format!("invalid polar r_max {r}")));
                    }
                }
            }
            GridKind::Cartesian => {
                if self.nx == 0 || self.ny == 0 {
                    return Err(Error::Config("cartesian grid needs nx, ny >= 1".to_string()));
                }
                for (lo, hi, what) in [(self.re[0], self.re[1], "re"), (self.im[0], self.im[1], "im")] {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::Config(format!("invalid {what} range [{lo}, {hi}]")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Pixel dimensions and the row-major point list. Polar grids are laid
    /// out radius-major (row = radius index from 0, column = ray);
    /// Cartesian grids run from the top-left (max imaginary part) as an
    /// image would.
    pub fn resolve(&self, r_dual_estimate: f64) -> Result<(usize, usize, Vec<C64>)> {
        self.validate()?;
        match self.kind {
            GridKind::Polar => {
                let r_max = match self.r_max {
                    Some(r) => r,
                    None => 1.5 * r_dual_estimate,
                };
                if !(r_max >= 0.0 && r_max.is_finite()) {
                    return Err(Error::Config(format!("invalid polar r_max {r_max}")));
                }
                let n_radii = (r_max / self.r_step + 1e-9).floor() as usize + 1;
                let mut pts = Vec::with_capacity(n_radii * self.rays);
                for ir in 0..n_radii {
                    let r = ir as f64 * self.r_step;
                    for ia in 0..self.rays {
                        let th = 2.0 * std::f64::consts::PI * ia as f64 / self.rays as f64;
                        pts.push(C64::new(r * th.cos(), r * th.sin()));
                    }
                }
                Ok((self.rays, n_radii, pts))
            }
            GridKind::Cartesian => {
                let mut pts = Vec::with_capacity(self.nx * self.ny);
                for iy in 0..self.ny {
                    let t = if self.ny == 1 { 0.5 } else { iy as f64 / (self.ny - 1) as f64 };
                    let imv = self.im[1] + (self.im[0] - self.im[1]) * t;
                    for ix in 0..self.nx {
                        let s = if self.nx == 1 { 0.5 } else { ix as f64 / (self.nx - 1) as f64 };
                        let rev = self.re[0] + (self.re[1] - self.re[0]) * s;
                        pts.push(C64::new(rev, imv));
                    }
                }
                Ok((self.nx, self.ny, pts))
            }
        }
    }
}

/// A full region scan: one sample per grid point, plus the radii report the
/// CLI attaches for context.
#[derive(Clone, Debug)]
pub struct RegionScan {
    pub grid: GridSpec,
    pub width: usize,
    pub height: usize,
    pub n_max: usize,
    pub samples: Vec<BpeSample>,
    pub radii: Option<SpectralReport>,
}

/// Scans a grid of points. The moduli/coefficient precomputation happens
/// once; points are then evaluated independently in parallel.
/// `BPE_ATLAS_THREADS` bounds the worker count (unset: hardware default).
pub fn scan_region(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    grid: &GridSpec,
    n_max: usize,
    tail_fraction: f64,
    slope_threshold: f64,
) -> Result<RegionScan> {
    let dual = cauchy_dual(graph, weights)?;
    let basis = wandering_basis(graph, weights)?;
    let engine = BpeEngine::new(graph, weights, &dual, &basis, n_max)?;
    // The default polar extent needs the dual radius; a cheap sweep at the
    // scan horizon is enough for an extent choice.
    let r_est = if matches!(grid.kind, GridKind::Polar) && grid.r_max.is_none() {
        let sweep = crate::spectral::operator_norm_sweep(graph, dual.weights(), n_max.min(graph.depth()))?;
        (1..sweep.len()).map(|n| sweep[n] / n as f64).fold(f64::NEG_INFINITY, f64::max).exp2()
    } else {
        0.0
    };
    let (width, height, points) = grid.resolve(r_est)?;
    if points.is_empty() {
        return Err(Error::Config("grid resolved to zero points".to_string()));
    }
    let eval = || -> Vec<BpeSample> {
        points
            .par_iter()
            .map(|&w| engine.sample(w, tail_fraction, slope_threshold))
            .collect()
    };
    let samples = match std::env::var("BPE_ATLAS_THREADS").ok().and_then(|s| s.parse::<usize>().ok())
    {
        Some(t) if t > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(eval),
        _ => eval(),
    };
    Ok(RegionScan { grid: grid.clone(), width, height, n_max, samples, radii: None })
}

/// Truncated evaluation operator `E_w*` applied to the wandering basis,
/// with the kernel matrix `kappa(w, w)` and a tail bound.
#[derive(Clone, Debug)]
pub struct EvaluationData {
    pub w: C64,
    pub coeff_vectors: Vec<HilbertVector>,
    /// `gram[i][j] = <E_w* x_j, E_w* x_i>`.
    pub gram: DMatrix<C64>,
    /// Bound on the norm of the dropped tail of each series; infinite when
    /// the point sits outside the estimated convergence disc.
    pub tail_bound: f64,
    /// Whether `tail_bound` came from the certified per-step norm bound
    /// (true) or from the asymptotic radius estimate (false).
    pub tail_certified: bool,
}

fn truncated_series(
    graph: &ShiftGraph,
    dual: &DualWeights,
    basis: &WanderingBasis,
    w: C64,
    n_max: usize,
) -> Result<(Vec<HilbertVector>, f64)> {
    let wbar = ScaledComplex::new(w.conj());
    let mut acc: Vec<HilbertVector> = basis.vectors().to_vec();
    let mut layer: Vec<HilbertVector> = basis.vectors().to_vec();
    let mut wpow = ScaledComplex::one();
    let mut last_term_log2 = 0.0f64;
    for _ in 1..=n_max {
        for x in layer.iter_mut() {
            *x = apply_shift(graph, dual.weights(), x)?;
        }
        wpow = wpow.mul(&wbar);
        if wpow.is_zero() {
            last_term_log2 = f64::NEG_INFINITY;
            break;
        }
        last_term_log2 = f64::NEG_INFINITY;
        for (a, x) in acc.iter_mut().zip(layer.iter()) {
            *a = a.add_scaled(wpow, x);
            last_term_log2 = last_term_log2.max(wpow.log2_abs() + x.log2_norm());
        }
    }
    Ok((acc, last_term_log2))
}

/// Evaluation series data at `w`, truncated at `n_max`.
///
/// Outside the estimated convergence disc (`|w| * r_dual_estimate >= 1`)
/// the truncation is still computed, but the tail bound is infinite; strict
/// mode turns that into an error.
pub fn evaluation_data(
    graph: &ShiftGraph,
    dual: &DualWeights,
    basis: &WanderingBasis,
    w: C64,
    n_max: usize,
    r_dual_estimate: f64,
    strict: bool,
) -> Result<EvaluationData> {
    if basis.dim() == 0 {
        return Err(Error::InvalidArgument("wandering basis must be nonempty".to_string()));
    }
    let q_est = w.norm() * r_dual_estimate;
    if q_est >= 1.0 && strict {
        return Err(Error::DivergentSeries(format!(
            "|w| * r(T') estimate = {q_est:.6} >= 1 at w = {w}"
        )));
    }
    let (coeff_vectors, last_term_log2) = truncated_series(graph, dual, basis, w, n_max)?;
    let d = basis.dim();
    let mut gram = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            gram[(i, j)] = coeff_vectors[j].dot(&coeff_vectors[i]).value();
        }
    }
    // Certified one-step growth bound for the dual: interior fiber norms
    // and the tail weight sup both cap ||T' y|| / ||y||.
    let step_bound = dual
        .weights()
        .max_interior_fiber_norm_sq(graph)
        .sqrt()
        .max(f64::exp2(dual.tail().weight_log2_sup));
    let q_cert = w.norm() * step_bound;
    let last = f64::exp2(last_term_log2);
    let (tail_bound, tail_certified) = if q_cert < 1.0 {
        (last * q_cert / (1.0 - q_cert), true)
    } else if q_est < 1.0 {
        (last * q_est / (1.0 - q_est), false)
    } else {
        (f64::INFINITY, false)
    };
    Ok(EvaluationData { w, coeff_vectors, gram, tail_bound, tail_certified })
}

/// The kernel matrix `kappa(z, w)[i][j] = <E_w* x_j, E_z* x_i>`, truncated
/// at `n_max`.
pub fn kernel_gram(
    graph: &ShiftGraph,
    dual: &DualWeights,
    basis: &WanderingBasis,
    z: C64,
    w: C64,
    n_max: usize,
    r_dual_estimate: f64,
    strict: bool,
) -> Result<DMatrix<C64>> {
    for (p, name) in [(z, "z"), (w, "w")] {
        if p.norm() * r_dual_estimate >= 1.0 && strict {
            return Err(Error::DivergentSeries(format!(
                "|{name}| * r(T') estimate >= 1 at {name} = {p}"
            )));
        }
    }
    let (ew, _) = truncated_series(graph, dual, basis, w, n_max)?;
    let (ez, _) = if z == w {
        (ew.clone(), 0.0)
    } else {
        truncated_series(graph, dual, basis, z, n_max)?
    };
    let d = basis.dim();
    let mut out = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = ew[j].dot(&ez[i]).value();
        }
    }
    Ok(out)
}

/// Numerical nullspace of the truncated `T* - conj(w)`.
#[derive(Clone, Debug)]
pub struct AdjointEigenbasis {
    pub w: C64,
    pub vectors: Vec<HilbertVector>,
    /// Worst-case fraction of squared norm sitting in the last two
    /// materialized levels, over the returned vectors.
    pub tail_mass: f64,
    pub level_cap: usize,
}

impl AdjointEigenbasis {
    /// Whether the vectors look like genuine square-summable eigenvectors
    /// at this truncation level.
    pub fn accepted(&self) -> bool {
        !self.vectors.is_empty() && self.tail_mass <= TAIL_MASS_FLAG
    }
}

/// Computes the nullspace of `T* - conj(w)` truncated at `level_cap`
/// levels, with a free boundary: constraints run over vertices of level
/// `< level_cap`, unknowns over level `<= level_cap`. Empty result lists
/// are valid (no eigenvector at this w).
pub fn adjoint_eigenbasis(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    w: C64,
    level_cap: usize,
) -> Result<AdjointEigenbasis> {
    if level_cap < 8 {
        return Err(Error::InvalidArgument(format!(
            "adjoint eigenbasis needs at least 8 levels, got {level_cap}"
        )));
    }
    if level_cap > graph.depth() {
        return Err(Error::HorizonExceeded {
            needed: level_cap,
            depth: graph.depth(),
            what: "adjoint eigenbasis truncation".to_string(),
        });
    }
    let nv = graph.n_vertices();
    let mut col_of = vec![usize::MAX; nv];
    let mut cols = Vec::new();
    let mut rows = Vec::new();
    for vi in 0..nv {
        let v = VertexId(vi as u32);
        let lvl = graph.level(v) as usize;
        if lvl <= level_cap {
            col_of[vi] = cols.len();
            cols.push(v);
            if lvl < level_cap {
                rows.push(v);
            }
        }
    }
    // Padded square with zero rows below the constraints: the thin SVD of
    // the square matrix carries the complete set of right singular vectors,
    // so no nullspace direction of the (wide) constraint block is lost.
    let mut a = DMatrix::<C64>::zeros(cols.len(), cols.len());
    let wbar = w.conj();
    for (r, &v) in rows.iter().enumerate() {
        for &u in graph.fiber(v) {
            a[(r, col_of[u.index()])] += C64::new(weights.lambda(u), 0.0);
        }
        a[(r, col_of[v.index()])] -= wbar;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-10 * smax.max(1.0);
    let mut vectors = Vec::new();
    let mut tail_mass = 0.0f64;
    for (idx, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            let row = v_t.row(idx);
            let mut entries = Vec::new();
            let mut mass_tail = 0.0;
            let mut mass_all = 0.0;
            for (c, &v) in cols.iter().enumerate() {
                let amp = row[c].conj();
                let sq = amp.norm_sqr();
                mass_all += sq;
                let lvl = graph.level(v) as usize;
                if lvl + 1 >= level_cap {
                    mass_tail += sq;
                }
                if sq > 0.0 {
                    entries.push((v, amp));
                }
            }
            if mass_all > 0.0 {
                vectors.push(HilbertVector::from_entries(entries));
                tail_mass = tail_mass.max(mass_tail / mass_all);
            }
        }
    }
    Ok(AdjointEigenbasis { w, vectors, tail_mass, level_cap })
}

/// The depth-refinement acceptance protocol: eigenbases at `level_cap - 4`,
/// `level_cap - 2`, and `level_cap` must all exist with non-increasing tail
/// mass, and the finest must pass the flag threshold.
///
/// The rule has a resolution limit exactly on the convergence boundary: a
/// flat candidate (all-ones shift, |w| = 1) has two-level tail mass
/// 2/(level_cap + 1), which drops below the 0.1 flag once the cap exceeds
/// 19 even though the limiting vector is not square-summable. The default
/// cap of 16 is calibrated so that boundary points stay flagged; growing
/// the cap buys interior resolution at the price of a thicker accepted
/// shell near the boundary.
pub fn adjoint_eigenbasis_checked(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    w: C64,
    level_cap: usize,
) -> Result<(AdjointEigenbasis, bool)> {
    if level_cap < 12 {
        return Err(Error::InvalidArgument(format!(
            "the refinement protocol needs at least 12 levels, got {level_cap}"
        )));
    }
    let coarse = adjoint_eigenbasis(graph, weights, w, level_cap - 4)?;
    let mid = adjoint_eigenbasis(graph, weights, w, level_cap - 2)?;
    let fine = adjoint_eigenbasis(graph, weights, w, level_cap)?;
    let accepted = fine.accepted()
        && !mid.vectors.is_empty()
        && !coarse.vectors.is_empty()
        && mid.tail_mass <= coarse.tail_mass + 1e-12
        && fine.tail_mass <= mid.tail_mass + 1e-12;
    Ok((fine, accepted))
}

/// Result of the projection test: invertibility of `P_w` restricted to the
/// wandering subspace, certified through the smallest singular value of the
/// cross-Gram matrix, plus the biorthogonal dual family when well posed.
#[derive(Clone, Debug)]
pub struct GramTest {
    pub sigma_min: f64,
    pub dual_family: Option<Vec<HilbertVector>>,
}

pub fn gram_test(basis: &WanderingBasis, eigen: &AdjointEigenbasis) -> Result<GramTest> {
    if !eigen.accepted() {
        return Err(Error::InvalidArgument(format!(
            "adjoint eigenbasis at w = {} is not accepted (tail mass {:.3}); the point shows no square-summable eigenvectors",
            eigen.w, eigen.tail_mass
        )));
    }
    let d = basis.dim();
    let (ehat, erank) = crate::operator::orthonormalize(&eigen.vectors, 1e-10);
    if erank != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: erank,
            what: "adjoint eigenspace dimension".to_string(),
        });
    }
    let mut g = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = basis.vectors()[i].dot(&ehat[j]).value();
        }
    }
    let (_, sigma_min) = singular_extremes(&g);
    let dual_family = if sigma_min > 1e-8 {
        g.clone().try_inverse().map(|ginv| {
            // y_j = sum_k conj(ginv)[k][j] ehat_k gives <x_i, y_j> = delta.
            (0..d)
                .map(|j| {
                    let mut y = HilbertVector::zero();
                    for (k, e) in ehat.iter().enumerate() {
                        y = y.add_scaled(ScaledComplex::new(ginv[(k, j)].conj()), e);
                    }
                    y
                })
                .collect::<Vec<_>>()
        })
    } else {
        None
    };
    Ok(GramTest { sigma_min, dual_family })
}
