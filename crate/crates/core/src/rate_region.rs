//! Capacity region of the multi-antenna multiple-access channel.
//!
//! For powers `p` the region is the polymatroid
//! `{ r ≥ 0 : Σ_{k∈J} r_k ≤ f(J) ∀ J }` with
//! `f(J) = B log2 det(I + Σ_{k∈J} p_k h_k h_kᴴ)`. Its vertices are the rate
//! tuples of MMSE-SIC decoding under a fixed order.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelVector;
use crate::error::{domain, Error, Result};
use crate::linalg::{CholeskyC, Hermitian};
use crate::scalar::Scalar;

/// Largest user count for which [`contains`] enumerates all subsets.
pub const MAX_ENUMERATED_USERS: usize = 20;

/// Default relative tolerance for region membership.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-7;

/// Transmit powers in watts, one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct PowerVector<T>(pub(crate) Vec<T>);

impl<T: Scalar> PowerVector<T> {
    pub fn new(p: Vec<T>) -> Result<Self> {
        if p.iter().any(|x| !(x.is_finite() && *x >= T::zero())) {
            return Err(domain("powers must be finite and non-negative"));
        }
        Ok(Self(p))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![T::zero(); k])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Rates in bits/s, one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct RateVector<T>(pub(crate) Vec<T>);

impl<T: Scalar> RateVector<T> {
    pub fn new(r: Vec<T>) -> Result<Self> {
        if r.iter().any(|x| !(x.is_finite() && *x >= T::zero())) {
            return Err(domain("rates must be finite and non-negative"));
        }
        Ok(Self(r))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![T::zero(); k])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// SIC decoding order. Entry 0 is `π(1)`, the user decoded **last**
/// (interference-free); the final entry is decoded first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecodingOrder(pub(crate) Vec<usize>);

impl DecodingOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &u in &order {
            if u >= order.len() || seen[u] {
                return Err(domain(format!("{order:?} is not a permutation")));
            }
            seen[u] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(k: usize) -> Self {
        Self((0..k).collect())
    }

    /// Order that decodes users with larger `weights` later (stable by index),
    /// i.e. `weights[π(1)] ≥ weights[π(2)] ≥ …`.
    pub fn by_descending<T: Scalar>(weights: &[T]) -> Self {
        let mut idx: Vec<usize> = (0..weights.len()).collect();
        idx.sort_by(|&a, &b| {
            weights[b]
                .partial_cmp(&weights[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self(idx)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of each user in the order (inverse permutation).
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (i, &u) in self.0.iter().enumerate() {
            pos[u] = i;
        }
        pos
    }
}

/// One time-sharing segment: a decoding order held for `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Segment<T> {
    pub duration: T,
    pub order: DecodingOrder,
    pub rates: RateVector<T>,
}

/// Time-shared sequence of SIC vertices within the offloading window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RateSchedule<T> {
    pub segments: Vec<Segment<T>>,
    /// `Σ_i t_i r^(i) / T̃`.
    pub effective_rates: RateVector<T>,
}

impl<T: Scalar> RateSchedule<T> {
    pub fn new(segments: Vec<Segment<T>>, window: T) -> Result<Self> {
        let k = segments.first().map_or(0, |s| s.rates.len());
        let mut total = T::zero();
        let mut eff = vec![T::zero(); k];
        for s in &segments {
            if s.rates.len() != k || s.order.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    found: s.rates.len(),
                });
            }
            if !(s.duration >= T::zero()) {
                return Err(domain("segment durations must be non-negative"));
            }
            total += s.duration;
            for (e, r) in eff.iter_mut().zip(s.rates.as_slice()) {
                *e += s.duration * *r;
            }
        }
        if total > window * (T::one() + T::lit(1e-9)) {
            return Err(domain("segment durations exceed the offloading window"));
        }
        for e in &mut eff {
            *e = *e / window;
        }
        Ok(Self {
            segments,
            effective_rates: RateVector(eff),
        })
    }

    /// A single segment spanning the whole window.
    pub fn single(order: DecodingOrder, rates: RateVector<T>, window: T) -> Self {
        Self {
            effective_rates: rates.clone(),
            segments: vec![Segment {
                duration: window,
                order,
                rates,
            }],
        }
    }

    pub fn total_duration(&self) -> T {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Bits delivered per user over the window.
    pub fn delivered_bits(&self, window: T) -> Vec<T> {
        self.effective_rates
            .as_slice()
            .iter()
            .map(|r| *r * window)
            .collect()
    }
}

fn check_dims<T: Scalar>(p: &[T], channels: &[ChannelVector<T>]) -> Result<usize> {
    if p.len() != channels.len() {
        return Err(Error::Dimension {
            expected: channels.len(),
            found: p.len(),
        });
    }
    let n = channels.first().map_or(1, |h| h.dim());
    if let Some(h) = channels.iter().find(|h| h.dim() != n) {
        return Err(Error::Dimension {
            expected: n,
            found: h.dim(),
        });
    }
    Ok(n)
}

/// Natural-log determinant of `I + Σ_{k∈subset} p_k h_k h_kᴴ`.
pub(crate) fn ln_det_subset<T: Scalar>(
    p: &[T],
    subset: impl IntoIterator<Item = usize>,
    channels: &[ChannelVector<T>],
    n: usize,
) -> T {
    let mut a = Hermitian::identity(n);
    for k in subset {
        if p[k] > T::zero() {
            a.add_outer(p[k], channels[k].entries());
        }
    }
    a.cholesky().map_or(T::infinity(), |c| c.ln_det())
}

/// `f(J) = B log2 det(I + Σ_{k∈J} p_k h_k h_kᴴ)`; zero for the empty set.
pub fn sumrate_bound<T: Scalar>(
    p: &PowerVector<T>,
    subset: &[usize],
    channels: &[ChannelVector<T>],
    bandwidth: T,
) -> Result<T> {
    let n = check_dims(p.as_slice(), channels)?;
    if let Some(&k) = subset.iter().find(|&&k| k >= channels.len()) {
        return Err(domain(format!("user {k} is not in the system")));
    }
    if subset.is_empty() {
        return Ok(T::zero());
    }
    let ln = ln_det_subset(p.as_slice(), subset.iter().copied(), channels, n);
    Ok(bandwidth * ln / T::ln2())
}

/// SIC rates for `order`: `r_{π(k)} = B log2(1 + p_{π(k)} h_{π(k)}ᴴ A_{k-1}⁻¹ h_{π(k)})`
/// where `A_{k-1} = I + Σ_{i<k} p_{π(i)} h_{π(i)} h_{π(i)}ᴴ`. The factor of
/// `A` is carried forward with rank-one Cholesky updates.
pub fn vertex_rates<T: Scalar>(
    p: &PowerVector<T>,
    order: &DecodingOrder,
    channels: &[ChannelVector<T>],
    bandwidth: T,
) -> Result<RateVector<T>> {
    let n = check_dims(p.as_slice(), channels)?;
    if order.len() != channels.len() {
        return Err(Error::Dimension {
            expected: channels.len(),
            found: order.len(),
        });
    }
    let p = p.as_slice();
    let mut rates = vec![T::zero(); p.len()];
    let mut chol = CholeskyC::identity(n);
    for &u in order.as_slice() {
        if p[u] > T::zero() {
            let h = channels[u].entries();
            let q = chol.inv_quad(h);
            rates[u] = bandwidth * (p[u] * q).ln_1p() / T::ln2();
            chol.rank_one_update(p[u], h);
        }
    }
    Ok(RateVector(rates))
}

/// Smallest powers whose SIC rates under `order` equal `targets` exactly.
/// Each user's rate depends only on users decoded after it, so the powers
/// follow by sequential inversion of [`vertex_rates`].
pub fn min_powers_for_order<T: Scalar>(
    targets: &[T],
    order: &DecodingOrder,
    channels: &[ChannelVector<T>],
    bandwidth: T,
) -> Result<PowerVector<T>> {
    let n = check_dims(targets, channels)?;
    let mut p = vec![T::zero(); targets.len()];
    let mut chol = CholeskyC::identity(n);
    for &u in order.as_slice() {
        let r = targets[u];
        if r > T::zero() {
            let h = channels[u].entries();
            let q = chol.inv_quad(h);
            if !(q > T::zero()) {
                return Err(domain(format!(
                    "user {u} has a zero channel but a positive rate target"
                )));
            }
            p[u] = (r / bandwidth * T::ln2()).exp_m1() / q;
            chol.rank_one_update(p[u], h);
        }
    }
    PowerVector::new(p)
}

/// Subset masks of `{0..k}` ordered by cardinality, then lexicographically.
fn masks_by_cardinality(k: usize) -> impl Iterator<Item = u32> {
    (1..=k).flat_map(move |c| {
        // Gosper's hack enumerates all masks with popcount c in increasing order.
        let limit = 1u64 << k;
        let mut m: u64 = (1u64 << c) - 1;
        std::iter::from_fn(move || {
            if m >= limit {
                return None;
            }
            let cur = m;
            let lo = m & m.wrapping_neg();
            let ri = m + lo;
            m = (((ri ^ m) >> 2) / lo) | ri;
            Some(cur as u32)
        })
    })
}

/// Whether `r ∈ X(p)` up to relative tolerance `tol`, by checking all
/// `2^K − 1` subset constraints (smallest subsets first).
pub fn contains<T: Scalar>(
    p: &PowerVector<T>,
    r: &RateVector<T>,
    channels: &[ChannelVector<T>],
    bandwidth: T,
    tol: T,
) -> Result<bool> {
    let n = check_dims(p.as_slice(), channels)?;
    let k = channels.len();
    if r.len() != k {
        return Err(Error::Dimension {
            expected: k,
            found: r.len(),
        });
    }
    if k > MAX_ENUMERATED_USERS {
        return Err(Error::Capability(format!(
            "membership by subset enumeration supports at most {MAX_ENUMERATED_USERS} users, got {k}; \
             certify via vertex rates and time-sharing instead"
        )));
    }
    let (p, r) = (p.as_slice(), r.as_slice());
    if r.iter().any(|x| *x < T::zero()) {
        return Ok(false);
    }
    for mask in masks_by_cardinality(k) {
        let members = (0..k).filter(|i| mask >> i & 1 == 1);
        let sum: T = members.clone().map(|i| r[i]).sum();
        if sum <= T::zero() {
            continue;
        }
        let bound = bandwidth * ln_det_subset(p, members, channels, n) / T::ln2();
        if sum > bound * (T::one() + tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn ch(v: &[(f64, f64)]) -> ChannelVector<f64> {
        ChannelVector::new(v.iter().map(|&(a, b)| Complex::new(a, b)).collect()).unwrap()
    }

    fn sample() -> Vec<ChannelVector<f64>> {
        vec![
            ch(&[(1.2, -0.3), (0.4, 0.9)]),
            ch(&[(-0.7, 0.2), (1.5, -0.6)]),
            ch(&[(0.3, 0.3), (-0.2, 1.1)]),
        ]
    }

    #[test]
    fn zero_power_gives_zero_everything() {
        let chans = sample();
        let p = PowerVector::zeros(3);
        assert_eq!(sumrate_bound(&p, &[0, 2], &chans, 1e6).unwrap(), 0.0);
        let r = vertex_rates(&p, &DecodingOrder::identity(3), &chans, 1e6).unwrap();
        assert!(r.as_slice().iter().all(|&x| x == 0.0));
        assert!(contains(&p, &RateVector::zeros(3), &chans, 1e6, 1e-7).unwrap());
    }

    #[test]
    fn single_user_bound_is_shannon() {
        let chans = vec![ch(&[(0.6, 0.8), (1.0, 0.0)])];
        let g = chans[0].gain();
        let p = PowerVector::new(vec![3.0]).unwrap();
        let f = sumrate_bound(&p, &[0], &chans, 2e6).unwrap();
        assert!((f - 2e6 * (1.0 + 3.0 * g).log2()).abs() < 1e-6);
    }

    #[test]
    fn two_user_vertices_telescope_for_both_orders() {
        let chans = &sample()[..2];
        let p = PowerVector::new(vec![0.8, 2.5]).unwrap();
        let total = sumrate_bound(&p, &[0, 1], chans, 1.0).unwrap();
        for order in [vec![0, 1], vec![1, 0]] {
            let r = vertex_rates(&p, &DecodingOrder::new(order).unwrap(), chans, 1.0).unwrap();
            assert!((r.as_slice()[0] + r.as_slice()[1] - total).abs() < 1e-12 * total);
        }
    }

    #[test]
    fn min_powers_invert_vertex_rates() {
        let chans = sample();
        let order = DecodingOrder::new(vec![2, 0, 1]).unwrap();
        let target = [1.3, 0.0, 2.2];
        let p = min_powers_for_order(&target, &order, &chans, 1.0).unwrap();
        let r = vertex_rates(&p, &order, &chans, 1.0).unwrap();
        for (a, b) in r.as_slice().iter().zip(target) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(p.as_slice()[1], 0.0);
    }

    #[test]
    fn membership_rejects_a_boosted_vertex() {
        let chans = sample();
        let p = PowerVector::new(vec![1.0, 0.5, 2.0]).unwrap();
        let order = DecodingOrder::new(vec![1, 2, 0]).unwrap();
        let mut r = vertex_rates(&p, &order, &chans, 1.0).unwrap().0;
        assert!(contains(&p, &RateVector(r.clone()), &chans, 1.0, 1e-7).unwrap());
        r[2] *= 1.01;
        assert!(!contains(&p, &RateVector(r), &chans, 1.0, 1e-7).unwrap());
    }

    #[test]
    fn membership_refuses_too_many_users() {
        let chans: Vec<_> = (0..21).map(|_| ch(&[(1.0, 0.0)])).collect();
        let err = contains(
            &PowerVector::zeros(21),
            &RateVector::zeros(21),
            &chans,
            1.0,
            1e-7,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let chans = sample();
        let p = PowerVector::zeros(2);
        assert!(matches!(
            sumrate_bound(&p, &[0], &chans, 1.0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn masks_are_ordered_by_cardinality_and_complete() {
        let masks: Vec<u32> = masks_by_cardinality(4).collect();
        assert_eq!(masks.len(), 15);
        assert!(masks
            .windows(2)
            .all(|w| w[0].count_ones() <= w[1].count_ones()));
        let mut sorted = masks.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 15);
    }

    #[test]
    fn works_in_single_precision() {
        let chans: Vec<ChannelVector<f32>> = sample().iter().map(|h| h.cast()).collect();
        let p = PowerVector::new(vec![1.0f32, 0.5, 2.0]).unwrap();
        let order = DecodingOrder::identity(3);
        let r = vertex_rates(&p, &order, &chans, 1.0).unwrap();
        let total = sumrate_bound(&p, &[0, 1, 2], &chans, 1.0).unwrap();
        let s: f32 = r.as_slice().iter().sum();
        assert!((s - total).abs() < 1e-4 * total);
    }

    #[test]
    fn by_descending_is_stable() {
        let o = DecodingOrder::by_descending(&[1.0, 3.0, 1.0, 2.0]);
        assert_eq!(o.as_slice(), &[1, 3, 0, 2]);
    }
}
