//! Sparse complex vectors with a separate power-of-two scale exponent.
//!
//! Orbit norms in this crate reach magnitudes like `2^(2^(n-1))`, far outside
//! double range, so every vector is stored as `2^log2_scale * amplitudes`
//! with the amplitudes kept canonical: the largest modulus lies in `[1, 2)`.
//! Rescaling multiplies by exact powers of two and therefore never changes
//! the represented vector (entries more than ~300 decimal orders below the
//! top are dropped; see `RELATIVE_FLOOR_LOG2`).

use crate::graph::VertexId;
use crate::C64;

/// Entries whose modulus falls below `max_modulus * 2^RELATIVE_FLOOR_LOG2`
/// are dropped during canonicalization. The floor sits three hundred binades
/// below the f64 rounding noise of any dot product, and far above the
/// subnormal range where exact power-of-two rescaling would start losing
/// bits.
const RELATIVE_FLOOR_LOG2: i64 = -1000;

/// Multiplies by `2^k` exactly, chunking so intermediate factors stay normal.
#[inline]
pub fn mul_pow2(x: f64, k: i64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut x = x;
    let mut k = k;
    while k > 900 {
        x *= f64::powi(2.0, 900);
        if !x.is_finite() {
            return x;
        }
        k -= 900;
    }
    while k < -900 {
        x *= f64::powi(2.0, -900);
        if x == 0.0 {
            return 0.0;
        }
        k += 900;
    }
    x * f64::powi(2.0, k as i32)
}

/// A complex scalar `mantissa * 2^log2` with the modulus of a nonzero
/// mantissa kept in `[1, 2)`. Zero is represented as mantissa 0, exponent 0.
#[derive(Clone, Copy, Debug)]
pub struct ScaledComplex {
    pub mantissa: C64,
    pub log2: i64,
}

impl ScaledComplex {
    pub fn zero() -> Self {
        ScaledComplex { mantissa: C64::new(0.0, 0.0), log2: 0 }
    }

    pub fn one() -> Self {
        ScaledComplex { mantissa: C64::new(1.0, 0.0), log2: 0 }
    }

    pub fn new(value: C64) -> Self {
        ScaledComplex { mantissa: value, log2: 0 }.canonical()
    }

    pub fn from_parts(mantissa: C64, log2: i64) -> Self {
        ScaledComplex { mantissa, log2 }.canonical()
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == C64::new(0.0, 0.0)
    }

    fn canonical(mut self) -> Self {
        let m = self.mantissa.norm();
        if m == 0.0 {
            return ScaledComplex::zero();
        }
        let shift = m.log2().floor() as i64;
        if shift != 0 {
            self.mantissa.re = mul_pow2(self.mantissa.re, -shift);
            self.mantissa.im = mul_pow2(self.mantissa.im, -shift);
            self.log2 += shift;
        }
        // log2().floor() can land one off at binade boundaries; nudge once.
        let m = self.mantissa.norm();
        if m >= 2.0 {
            self.mantissa *= 0.5;
            self.log2 += 1;
        } else if m < 1.0 {
            self.mantissa *= 2.0;
            self.log2 -= 1;
        }
        self
    }

    pub fn conj(&self) -> Self {
        ScaledComplex { mantissa: self.mantissa.conj(), log2: self.log2 }
    }

    pub fn neg(&self) -> Self {
        ScaledComplex { mantissa: -self.mantissa, log2: self.log2 }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return ScaledComplex::zero();
        }
        ScaledComplex {
            mantissa: self.mantissa * other.mantissa,
            log2: self.log2 + other.log2,
        }
        .canonical()
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return *other;
        }
        if other.is_zero() {
            return *self;
        }
        let (hi, lo) = if self.log2 >= other.log2 { (self, other) } else { (other, self) };
        let shift = lo.log2 - hi.log2;
        if shift < RELATIVE_FLOOR_LOG2 - 100 {
            return *hi;
        }
        let lo_mantissa = C64::new(mul_pow2(lo.mantissa.re, shift), mul_pow2(lo.mantissa.im, shift));
        ScaledComplex { mantissa: hi.mantissa + lo_mantissa, log2: hi.log2 }.canonical()
    }

    /// `log2` of the modulus; -inf for zero.
    pub fn log2_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.log2 as f64 + self.mantissa.norm().log2()
        }
    }

    /// Collapses to a plain complex double; overflows to infinity and
    /// underflows to zero when the exponent leaves f64 range.
    pub fn value(&self) -> C64 {
        C64::new(mul_pow2(self.mantissa.re, self.log2), mul_pow2(self.mantissa.im, self.log2))
    }

    /// `self / 2^shift` as a plain complex double. The workhorse for
    /// assembling dense matrices under a shared exponent: pick `shift` near
    /// the data's top magnitude and every entry lands in f64 range.
    pub fn value_shifted_log2(&self, shift: f64) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        self.mantissa * f64::exp2(self.log2 as f64 - shift)
    }

    /// Multiplicative inverse; caller must ensure nonzero.
    pub fn inv(&self) -> Self {
        debug_assert!(!self.is_zero());
        ScaledComplex { mantissa: self.mantissa.inv(), log2: -self.log2 }.canonical()
    }
}

/// Sparse vector in `l^2(V)`: sorted `(vertex, amplitude)` pairs scaled by
/// `2^log2_scale`. Always canonical after construction.
#[derive(Clone, Debug)]
pub struct HilbertVector {
    entries: Vec<(VertexId, C64)>,
    log2_scale: i64,
}

impl HilbertVector {
    pub fn zero() -> Self {
        HilbertVector { entries: Vec::new(), log2_scale: 0 }
    }

    /// The standard basis vector `e_v`.
    pub fn basis(v: VertexId) -> Self {
        HilbertVector { entries: vec![(v, C64::new(1.0, 0.0))], log2_scale: 0 }
    }

    /// Builds from unsorted, possibly duplicated entries; duplicates are
    /// summed.
    pub fn from_entries(entries: Vec<(VertexId, C64)>) -> Self {
        Self::from_unsorted_scaled(entries, 0)
    }

    /// Entries scaled by an explicit exponent; used by operator application
    /// where the input scale carries through. Sorts and merges duplicates.
    pub(crate) fn from_unsorted_scaled(mut entries: Vec<(VertexId, C64)>, log2_scale: i64) -> Self {
        entries.sort_unstable_by_key(|(v, _)| *v);
        let mut merged: Vec<(VertexId, C64)> = Vec::with_capacity(entries.len());
        for (v, a) in entries {
            match merged.last_mut() {
                Some((u, b)) if *u == v => *b += a,
                _ => merged.push((v, a)),
            }
        }
        let mut out = HilbertVector { entries: merged, log2_scale };
        out.canonicalize();
        out
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn log2_scale(&self) -> i64 {
        self.log2_scale
    }

    /// Sorted `(vertex, mantissa)` pairs; the represented amplitude is
    /// `mantissa * 2^log2_scale`.
    pub fn iter(&self) -> impl Iterator<Item = (VertexId, C64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.entries.iter().map(|(v, _)| *v)
    }

    /// Raw mantissa at `v` (zero if absent); pair with `log2_scale`.
    pub fn mantissa_at(&self, v: VertexId) -> C64 {
        match self.entries.binary_search_by_key(&v, |(u, _)| *u) {
            Ok(i) => self.entries[i].1,
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Amplitude at `v` as a scaled scalar.
    pub fn amplitude_at(&self, v: VertexId) -> ScaledComplex {
        ScaledComplex::from_parts(self.mantissa_at(v), self.log2_scale)
    }

    /// Amplitude at `v` collapsed to a plain double (may over/underflow).
    pub fn value_at(&self, v: VertexId) -> C64 {
        self.amplitude_at(v).value()
    }

    /// Restores canonical form: top modulus in `[1, 2)`, relative floor
    /// applied, exact zero entries removed.
    fn canonicalize(&mut self) {
        let mut max = 0.0f64;
        for (_, a) in &self.entries {
            max = max.max(a.norm());
        }
        if max == 0.0 || !max.is_finite() {
            if !max.is_finite() {
                // Poisoned input (inf/NaN amplitudes): keep entries so the
                // problem surfaces in results rather than vanishing.
                return;
            }
            self.entries.clear();
            self.log2_scale = 0;
            return;
        }
        let shift = max.log2().floor() as i64;
        if shift != 0 {
            for (_, a) in &mut self.entries {
                a.re = mul_pow2(a.re, -shift);
                a.im = mul_pow2(a.im, -shift);
            }
            self.log2_scale += shift;
        }
        let floor = mul_pow2(max, -shift + RELATIVE_FLOOR_LOG2);
        self.entries.retain(|(_, a)| a.norm() >= floor);
    }

    /// `log2` of the l2 norm; -inf for the zero vector.
    pub fn log2_norm(&self) -> f64 {
        if self.entries.is_empty() {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = self.entries.iter().map(|(_, a)| a.norm_sqr()).sum();
        self.log2_scale as f64 + 0.5 * sum.log2()
    }

    /// The l2 norm as a scaled positive real.
    pub fn norm_scaled(&self) -> ScaledComplex {
        if self.entries.is_empty() {
            return ScaledComplex::zero();
        }
        let sum: f64 = self.entries.iter().map(|(_, a)| a.norm_sqr()).sum();
        ScaledComplex::from_parts(C64::new(sum.sqrt(), 0.0), self.log2_scale)
    }

    /// Inner product `<self, other> = sum_v self_v * conj(other_v)`,
    /// linear in `self`, conjugate-linear in `other`.
    pub fn dot(&self, other: &Self) -> ScaledComplex {
        let mut acc = C64::new(0.0, 0.0);
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() && j < other.entries.len() {
            let (u, a) = self.entries[i];
            let (v, b) = other.entries[j];
            match u.cmp(&v) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a * b.conj();
                    i += 1;
                    j += 1;
                }
            }
        }
        ScaledComplex::from_parts(acc, self.log2_scale + other.log2_scale)
    }

    /// `self + coeff * other`.
    pub fn add_scaled(&self, coeff: ScaledComplex, other: &Self) -> Self {
        if coeff.is_zero() || other.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return other.scaled(coeff);
        }
        let other_scale = coeff.log2 + other.log2_scale;
        let target = self.log2_scale.max(other_scale);
        let self_shift = self.log2_scale - target;
        let other_factor = C64::new(
            mul_pow2(coeff.mantissa.re, other_scale - target),
            mul_pow2(coeff.mantissa.im, other_scale - target),
        );
        let mut merged = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() || j < other.entries.len() {
            let take_self = match (self.entries.get(i), other.entries.get(j)) {
                (Some((u, _)), Some((v, _))) => {
                    if u == v {
                        let (u, a) = self.entries[i];
                        let b = other.entries[j].1;
                        let sum = C64::new(mul_pow2(a.re, self_shift), mul_pow2(a.im, self_shift))
                            + b * other_factor;
                        merged.push((u, sum));
                        i += 1;
                        j += 1;
                        continue;
                    }
                    u < v
                }
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if take_self {
                let (u, a) = self.entries[i];
                merged.push((u, C64::new(mul_pow2(a.re, self_shift), mul_pow2(a.im, self_shift))));
                i += 1;
            } else {
                let (v, b) = other.entries[j];
                merged.push((v, b * other_factor));
                j += 1;
            }
        }
        let mut out = HilbertVector { entries: merged, log2_scale: target };
        out.canonicalize();
        out
    }

    /// `coeff * self`.
    pub fn scaled(&self, coeff: ScaledComplex) -> Self {
        if coeff.is_zero() || self.is_zero() {
            return HilbertVector::zero();
        }
        let entries = self.entries.iter().map(|&(v, a)| (v, a * coeff.mantissa)).collect();
        let mut out =
            HilbertVector { entries, log2_scale: self.log2_scale + coeff.log2 };
        out.canonicalize();
        out
    }

    /// Rescales so the represented vector has unit norm.
    pub fn normalized(&self) -> Self {
        if self.is_zero() {
            return HilbertVector::zero();
        }
        self.scaled(self.norm_scaled().inv())
    }

    /// Dense rendering of the first `n` coordinates as plain doubles; for
    /// small-scale tests and oracle comparisons only.
    pub fn to_dense(&self, n: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (v, _) in &self.entries {
            if v.index() < n {
                out[v.index()] = self.value_at(*v);
            }
        }
        out
    }
}
