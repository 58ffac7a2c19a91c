//! Growth data in overflow-safe log2 arithmetic: orbit norms, weight
//! products, operator norms, spectral and local spectral radii, the two disc
//! radii, the loop-ratio series, and the three sequence conditions of the
//! tree family.
//!
//! Everything here estimates asymptotic quantities (limsups, spectral radii)
//! from a finite horizon. The estimators are deliberately simple and
//! documented: tail-max proxies for limsups, materialized maxima as lower
//! bounds, tail certificates for upper bounds. Horizons are carried in every
//! report so consumers can judge the estimates.

use crate::graph::{ShiftGraph, VertexId, WeightAssignment};
use crate::operator::{apply_shift, cauchy_dual, WanderingBasis};
use crate::vector::HilbertVector;
use crate::{C64, Error, Result};
use rand::SeedableRng;
use rand_distr::Distribution;

/// The sequence `log2 ||T^n x||` for `n = 0..=horizon`, computed by exact
/// iterated application (no truncation; the only error is f64 rounding).
#[derive(Clone, Debug)]
pub struct OrbitRecord {
    pub x: HilbertVector,
    pub horizon: usize,
    pub log2_norms: Vec<f64>,
}

/// Iterates the shift `n_max` times from `x`, recording `log2` norms.
///
/// Pass the primal weights for `T` orbits or the Cauchy dual weights for
/// `T'` orbits. The graph must be deep enough that no step touches the
/// horizon: `depth >= n_max + max support level + 1`.
pub fn orbit_norms(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    x: &HilbertVector,
    n_max: usize,
) -> Result<OrbitRecord> {
    if x.is_zero() {
        return Err(Error::InvalidArgument("orbit of the zero vector is degenerate".to_string()));
    }
    let support_level = x.support().map(|v| graph.level(v) as usize).max().unwrap_or(0);
    let needed = n_max + support_level + 1;
    if graph.depth() < needed {
        return Err(Error::HorizonExceeded {
            needed,
            depth: graph.depth(),
            what: format!("orbit_norms over {n_max} steps from support level {support_level}"),
        });
    }
    let mut log2_norms = Vec::with_capacity(n_max + 1);
    log2_norms.push(x.log2_norm());
    let mut cur = x.clone();
    for _ in 0..n_max {
        cur = apply_shift(graph, weights, &cur)?;
        log2_norms.push(cur.log2_norm());
    }
    Ok(OrbitRecord { x: x.clone(), horizon: n_max, log2_norms })
}

/// `sum_{k=a}^{b} log2 lambda_k` along chain vertex indices, exact in the
/// log domain. Empty ranges (`a > b`) return 0 by convention.
pub fn weight_product_log2(weights: &WeightAssignment, graph: &ShiftGraph, a: usize, b: usize) -> Result<f64> {
    if a > b {
        return Ok(0.0);
    }
    if b >= graph.n_vertices() {
        return Err(Error::OutOfRange(format!(
            "weight product upper index {b} exceeds materialized vertex count {}",
            graph.n_vertices()
        )));
    }
    let mut sum = 0.0;
    for k in a..=b {
        let v = VertexId(k as u32);
        if graph.parent(v).is_none() {
            return Err(Error::OutOfRange(format!(
                "vertex {k} in the product range carries no weight (it is a root)"
            )));
        }
        sum += weights.log2_lambda(v);
    }
    Ok(sum)
}

/// Dyadic decomposition certificate for the loop-chain weight products:
/// `n = 2^m + k` with `0 <= k < 2^m`, the capped offset `alpha`, and the
/// closed-form `log2(lambda'_1 ... lambda'_n) = 2^(m-1) + alpha - 3`.
///
/// The closed form is valid for `n >= 3`; at `n = 1, 2` the band structure
/// has not started yet and the stored `log2_product` is only the formula
/// value, not the actual product (see `closed_form_valid`).
#[derive(Clone, Copy, Debug)]
pub struct Example1Certificate {
    pub n: u64,
    pub m_n: u32,
    pub k_n: u64,
    pub alpha_kn: u64,
    pub log2_product: f64,
}

pub fn example1_certificate(n: u64) -> Result<Example1Certificate> {
    if n == 0 {
        return Err(Error::InvalidArgument("certificate needs n >= 1".to_string()));
    }
    let m_n = 63 - n.leading_zeros();
    let k_n = n - (1u64 << m_n);
    // alpha = k when 2k <= 2^m (covers m = 0 where the half-power threshold
    // is fractional), else 2^(m-1).
    let alpha_kn = if 2 * k_n <= (1u64 << m_n) { k_n } else { 1u64 << (m_n - 1) };
    let half_pow = if m_n == 0 { 0.5 } else { (1u64 << (m_n - 1)) as f64 };
    let log2_product = half_pow + alpha_kn as f64 - 3.0;
    Ok(Example1Certificate { n, m_n, k_n, alpha_kn, log2_product })
}

impl Example1Certificate {
    /// Whether `log2_product` equals the actual dual weight product (true
    /// from n = 3 on).
    pub fn closed_form_valid(&self) -> bool {
        self.n >= 3
    }

    /// The exponent-ratio bound `(2^(m-1) + alpha) / (2^m + k) <= 2/3`,
    /// checked in exact integer arithmetic (both sides scaled by 6).
    pub fn bound_holds(&self) -> bool {
        // ratio <= 2/3  <=>  3 (2^m + 2 alpha) <= 4 (2^m + k)
        let lhs = 3u128 * ((1u128 << self.m_n) + 2 * self.alpha_kn as u128);
        let rhs = 4u128 * ((1u128 << self.m_n) + self.k_n as u128);
        lhs <= rhs
    }

    /// Whether the bound is attained with equality (exactly at
    /// `k = 2^(m-1)`).
    pub fn bound_is_equality(&self) -> bool {
        let lhs = 3u128 * ((1u128 << self.m_n) + 2 * self.alpha_kn as u128);
        let rhs = 4u128 * ((1u128 << self.m_n) + self.k_n as u128);
        lhs == rhs
    }
}

/// Tail-max estimate of `limsup ||T^n x||^(1/n)` over the window
/// `[(1 - window_fraction) * N, N]`.
pub fn local_spectral_radius(orbit: &OrbitRecord, window_fraction: f64) -> Result<f64> {
    if !(window_fraction > 0.0 && window_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "window fraction must lie in (0, 1), got {window_fraction}"
        )));
    }
    if orbit.horizon < 16 {
        return Err(Error::HorizonTooSmall(format!(
            "local radius estimation needs horizon >= 16, got {}",
            orbit.horizon
        )));
    }
    let n_max = orbit.horizon;
    let start = (((1.0 - window_fraction) * n_max as f64).ceil() as usize).max(1);
    let mut best = f64::NEG_INFINITY;
    for n in start..=n_max {
        best = best.max(orbit.log2_norms[n] / n as f64);
    }
    Ok(f64::exp2(best))
}

/// Operator-norm DP. For a parent-function shift the images `T^n e_v` of
/// distinct basis vectors are orthogonal (distinct fibers of `phi^n` are
/// disjoint), so `||T^n|| = sup_v ||T^n e_v||` and each `||T^n e_v||^2` is a
/// sum over the `phi^n`-fiber of squared path products. One forward sweep
/// per step updates every vertex's path product and target; bucketed
/// log-sum-exp per target then yields every `||T^n e_v||` at once.
fn dp_operator_norms(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    n_max: usize,
    fixed_bound: Option<usize>,
) -> Result<Vec<f64>> {
    let depth = graph.depth();
    match fixed_bound {
        Some(lb) => {
            if lb + n_max > depth {
                return Err(Error::HorizonExceeded {
                    needed: lb + n_max,
                    depth,
                    what: format!("operator norm at step {n_max} with level bound {lb}"),
                });
            }
        }
        None => {
            if n_max > depth {
                return Err(Error::HorizonExceeded {
                    needed: n_max,
                    depth,
                    what: format!("operator norm sweep to step {n_max}"),
                });
            }
        }
    }
    let nv = graph.n_vertices();
    let mut p = vec![0.0f64; nv];
    let mut tgt: Vec<u32> = (0..nv as u32).collect();
    let mut p_next = vec![0.0f64; nv];
    let mut tgt_next = vec![0u32; nv];
    let mut bucket_max = vec![f64::NEG_INFINITY; nv];
    let mut bucket_sum = vec![0.0f64; nv];
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(0.0);
    for n in 1..=n_max {
        for x in 0..nv {
            match graph.parent(VertexId(x as u32)) {
                Some(par) => {
                    let prev = p[par.index()];
                    p_next[x] = if prev.is_finite() {
                        weights.log2_lambda(VertexId(x as u32)) + prev
                    } else {
                        f64::NEG_INFINITY
                    };
                    tgt_next[x] = tgt[par.index()];
                }
                None => {
                    p_next[x] = f64::NEG_INFINITY;
                    tgt_next[x] = 0;
                }
            }
        }
        std::mem::swap(&mut p, &mut p_next);
        std::mem::swap(&mut tgt, &mut tgt_next);
        // A vertex v is eligible when all phi^n-preimages are materialized,
        // i.e. level(v) + n <= depth; a fixed bound narrows this further.
        let bound = fixed_bound.unwrap_or(depth - n);
        for v in 0..nv {
            bucket_max[v] = f64::NEG_INFINITY;
            bucket_sum[v] = 0.0;
        }
        for x in 0..nv {
            if p[x].is_finite() {
                let v = tgt[x] as usize;
                if bucket_max[v] < 2.0 * p[x] {
                    bucket_max[v] = 2.0 * p[x];
                }
            }
        }
        for x in 0..nv {
            if p[x].is_finite() {
                let v = tgt[x] as usize;
                bucket_sum[v] += f64::exp2(2.0 * p[x] - bucket_max[v]);
            }
        }
        let mut best = f64::NEG_INFINITY;
        for v in 0..nv {
            if bucket_sum[v] > 0.0 && (graph.level(VertexId(v as u32)) as usize) <= bound {
                best = best.max(bucket_max[v] + bucket_sum[v].log2());
            }
        }
        debug_assert!(best.is_finite(), "no eligible vertex at step {n}");
        out.push(0.5 * best);
    }
    Ok(out)
}

/// `log2 ||T^n||` estimated as the exact materialized maximum over vertices
/// with `level <= level_bound`, combined with the tail certificate's best
/// window (`n * sup log2 lambda`; for chain tails the geometric mean of any
/// weight window is bounded by the declared sup).
pub fn operator_norm_n(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    tail_sup_log2: f64,
    n: usize,
    level_bound: usize,
) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let sweep = dp_operator_norms(graph, weights, n, Some(level_bound))?;
    Ok(sweep[n].max(n as f64 * tail_sup_log2))
}

/// Materialized `log2 ||T^n||` for every `n <= n_max`, with per-step
/// eligibility `level(v) <= depth - n` (a true lower bound sweep, no tail
/// term).
pub fn operator_norm_sweep(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    n_max: usize,
) -> Result<Vec<f64>> {
    dp_operator_norms(graph, weights, n_max, None)
}

/// Spectral-radius data and the two disc radii.
///
/// `r_dual_estimate` is the materialized lower bound
/// `max_n ||T'^n||_materialized^(1/n)` (exact for the built-in families);
/// `r_dual_upper` the certified upper bound from per-level fiber norms and
/// the tail sup. `r_inner = 1/r_dual_estimate` and `r_disc` is the sampled
/// estimate of `inf_x 1/r_local(x)` over the unit sphere of the wandering
/// subspace.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub r_dual_estimate: f64,
    pub r_dual_upper: f64,
    pub r_local: Vec<f64>,
    pub r_inner: f64,
    pub r_disc: f64,
    pub sphere_samples: usize,
    pub horizon: usize,
}

/// Estimates the disc radii at horizon `n_horizon`, sampling the wandering
/// sphere with `sphere_samples` seeded Gaussian directions on top of the
/// basis vectors themselves (skipped for one-dimensional kernels, where
/// every unit vector is a phase times the basis vector).
pub fn disc_radii(
    graph: &ShiftGraph,
    weights: &WeightAssignment,
    basis: &WanderingBasis,
    n_horizon: usize,
    sphere_samples: usize,
    seed: u64,
) -> Result<SpectralReport> {
    if basis.dim() == 0 {
        return Err(Error::InvalidArgument("wandering basis must be nonempty".to_string()));
    }
    let dual = cauchy_dual(graph, weights)?;
    let sweep = operator_norm_sweep(graph, dual.weights(), n_horizon)?;
    let mut r_dual_log2 = f64::NEG_INFINITY;
    for n in 1..=n_horizon {
        r_dual_log2 = r_dual_log2.max(sweep[n] / n as f64);
    }
    let r_dual_estimate = f64::exp2(r_dual_log2);
    let max_d = dual.weights().max_interior_fiber_norm_sq(graph);
    let r_dual_upper = max_d.sqrt().max(f64::exp2(dual.tail().weight_log2_sup));

    let mut r_local = Vec::with_capacity(basis.dim());
    let mut worst = f64::NEG_INFINITY;
    for x in basis.vectors() {
        let orbit = orbit_norms(graph, dual.weights(), x, n_horizon)?;
        let r = local_spectral_radius(&orbit, 0.5)?;
        worst = worst.max(r);
        r_local.push(r);
    }
    let samples_used = if basis.dim() > 1 { sphere_samples } else { 0 };
    if samples_used > 0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        for _ in 0..samples_used {
            let mut y = HilbertVector::zero();
            for x in basis.vectors() {
                let re: f64 = normal.sample(&mut rng);
                let im: f64 = normal.sample(&mut rng);
                y = y.add_scaled(crate::vector::ScaledComplex::new(C64::new(re, im)), x);
            }
            if y.is_zero() {
                continue;
            }
            let orbit = orbit_norms(graph, dual.weights(), &y.normalized(), n_horizon)?;
            worst = worst.max(local_spectral_radius(&orbit, 0.5)?);
        }
    }
    Ok(SpectralReport {
        r_dual_estimate,
        r_dual_upper,
        r_local,
        r_inner: 1.0 / r_dual_estimate,
        r_disc: 1.0 / worst,
        sphere_samples: samples_used,
        horizon: n_horizon,
    })
}

/// Partial sums of the loop-ratio series
/// `sum_m (lambda'_1 ... lambda'_{m+1}) / (lambda'_0)^(m+1)` in the log
/// domain, plus the divergence-at-horizon heuristic.
#[derive(Clone, Debug)]
pub struct LoopRatioSeries {
    pub horizon: usize,
    pub partial_sums_log2: Vec<f64>,
    pub last_term_log2: f64,
}

impl LoopRatioSeries {
    /// Heuristic verdict at this horizon: the partial sums have left any
    /// plausible convergence regime, or the terms are not decaying fast
    /// enough to be summable. Never a proof; phrase outputs accordingly.
    pub fn diverges_at_horizon(&self) -> bool {
        let m = self.horizon;
        let sum = *self.partial_sums_log2.last().unwrap();
        sum >= (1e6f64).log2() || self.last_term_log2 >= -((m + 1) as f64).log2()
    }
}

/// Computes the loop-ratio series for a graph with a loop at its root.
pub fn analyticity_series(
    graph: &ShiftGraph,
    dual: &crate::operator::DualWeights,
    m_max: usize,
) -> Result<LoopRatioSeries> {
    let loop_v = graph.loop_vertex().ok_or(Error::NoLoopAtRoot)?;
    let loop_log2 = dual.weights().log2_lambda(loop_v);
    let mut partial_sums_log2 = Vec::with_capacity(m_max + 1);
    let mut sum_log2 = f64::NEG_INFINITY;
    let mut last = 0.0;
    for m in 0..=m_max {
        // term(m) = lambda'_1 ... lambda'_{m+1} / lambda'_0^{m+1}
        let term_log2 = weight_product_log2(dual.weights(), graph, 1, m + 1)?
            - (m as f64 + 1.0) * loop_log2;
        last = term_log2;
        // log-sum-exp accumulation of the partial sum.
        if sum_log2 == f64::NEG_INFINITY {
            sum_log2 = term_log2;
        } else {
            let hi = sum_log2.max(term_log2);
            sum_log2 = hi + (f64::exp2(sum_log2 - hi) + f64::exp2(term_log2 - hi)).log2();
        }
        partial_sums_log2.push(sum_log2);
    }
    Ok(LoopRatioSeries { horizon: m_max, partial_sums_log2, last_term_log2: last })
}

/// Verdict on the three conditions a tree-branch weight sequence must meet:
/// (i) weights at most 1, (ii) bounded away from zero, (iii) the limsup of
/// inverse prefix products strictly below the window-sup growth rate.
#[derive(Clone, Copy, Debug)]
pub struct SequenceConditions {
    pub cond_i: bool,
    pub cond_ii: bool,
    pub cond_iii: bool,
    /// Tail-max estimate of `limsup (lambda_1 ... lambda_n)^(-1/n)`.
    pub lhs: f64,
    /// Estimate at `n = N` of `(sup_m inverse window product)^(1/N)`, the
    /// window sup running over every materialized start.
    pub rhs: f64,
}

/// Evaluates the sequence conditions at horizon `n_horizon` with the given
/// strictness margin for condition (iii). Needs at least `2 * n_horizon`
/// materialized weights so the window sup sees past the prefix regime.
pub fn sequence_conditions(
    lambda: &[f64],
    n_horizon: usize,
    margin: f64,
) -> Result<SequenceConditions> {
    if n_horizon < 64 {
        return Err(Error::HorizonTooSmall(format!(
            "sequence conditions need a horizon of at least 64, got {n_horizon}"
        )));
    }
    if lambda.len() < 2 * n_horizon {
        return Err(Error::HorizonTooSmall(format!(
            "need at least {} weights for horizon {n_horizon}, got {}",
            2 * n_horizon,
            lambda.len()
        )));
    }
    let cond_i = lambda.iter().all(|&l| l <= 1.0);
    let cond_ii = lambda.iter().cloned().fold(f64::INFINITY, f64::min) > 0.0;
    // Prefix log sums P[j] = sum of log2 lambda over the first j entries.
    let mut prefix = Vec::with_capacity(lambda.len() + 1);
    prefix.push(0.0);
    for &l in lambda {
        prefix.push(prefix.last().unwrap() + l.log2());
    }
    let start = n_horizon.div_ceil(2);
    let mut lhs_log2 = f64::NEG_INFINITY;
    for n in start..=n_horizon {
        lhs_log2 = lhs_log2.max(-prefix[n] / n as f64);
    }
    let mut best_window = f64::NEG_INFINITY;
    for m in 0..=lambda.len() - n_horizon {
        best_window = best_window.max(-(prefix[m + n_horizon] - prefix[m]));
    }
    let lhs = f64::exp2(lhs_log2);
    let rhs = f64::exp2(best_window / n_horizon as f64);
    Ok(SequenceConditions { cond_i, cond_ii, cond_iii: lhs < rhs - margin, lhs, rhs })
}

/// Two-parameter growth-law fit `r_n = c * u_n + d` in the relative
/// least-squares metric, with both sequences supplied as log2 values so
/// magnitudes like `2^508` never materialize. Minimizes
/// `sum_n (1 - c * u_n / r_n - d / r_n)^2`; the reported residual is the
/// worst `|r_n - c u_n - d| / r_n`.
#[derive(Clone, Copy, Debug)]
pub struct GrowthFit {
    pub c: f64,
    pub d: f64,
    pub max_rel_residual: f64,
}

pub fn fit_growth_two_param(log2_u: &[f64], log2_r: &[f64]) -> Result<GrowthFit> {
    if log2_u.len() != log2_r.len() {
        return Err(Error::DimensionMismatch {
            expected: log2_u.len(),
            got: log2_r.len(),
            what: "growth fit sequences".to_string(),
        });
    }
    if log2_u.len() < 2 {
        return Err(Error::InvalidArgument("growth fit needs at least two points".to_string()));
    }
    let a: Vec<f64> = log2_u.iter().zip(log2_r).map(|(u, r)| f64::exp2(u - r)).collect();
    let b: Vec<f64> = log2_r.iter().map(|r| f64::exp2(-r)).collect();
    let (mut saa, mut sab, mut sbb, mut sa1, mut sb1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        saa += a[i] * a[i];
        sab += a[i] * b[i];
        sbb += b[i] * b[i];
        sa1 += a[i];
        sb1 += b[i];
    }
    let det = saa * sbb - sab * sab;
    let (c, d) = if det.abs() > 1e-14 * (saa * sbb).max(1e-300) {
        ((sa1 * sbb - sb1 * sab) / det, (saa * sb1 - sab * sa1) / det)
    } else {
        // Degenerate design (e.g. r proportional to u): one-parameter fit.
        (sa1 / saa, 0.0)
    };
    let mut worst = 0.0f64;
    for i in 0..a.len() {
        worst = worst.max((1.0 - c * a[i] - d * b[i]).abs());
    }
    Ok(GrowthFit { c, d, max_rel_residual: worst })
}
