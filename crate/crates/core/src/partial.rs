//! Weighted sum-energy minimization with partial offloading.
//!
//! The rate constraints `r_k T̃ ≥ ℓ_k` are dualized with prices `λ_k ≥ 0`.
//! For fixed `λ` the Lagrangian separates into a closed-form task split per
//! user and one concave power problem whose rate part is a polymatroid
//! vertex (users sorted by price). The dual is maximized with the ellipsoid
//! method; primal points are rebuilt along the way and the run stops once
//! the primal–dual gap certifies the requested accuracy.

use std::cell::RefCell;

use itertools::Itertools;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelVector;
use crate::convex::{
    ellipsoid_maximize_with, lp_solve, maximize_concave_orthant, Control, EllipsoidSettings,
    EllipsoidState, Evaluation, LpProblem, LpStatus, OracleAnswer, Order, OrthantSettings,
    Relation, SmoothConcave, TracePoint,
};
use crate::error::{domain, Error, Result};
use crate::linalg::CholeskyC;
use crate::model::{check_profiles, SystemConfig, UserProfile};
use crate::rate_region::{
    contains, min_powers_for_order, vertex_rates, DecodingOrder, PowerVector, RateSchedule,
    RateVector, Segment, DEFAULT_MEMBERSHIP_TOL,
};
use crate::scalar::{pos, Scalar};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_RADIUS: f64 = 20.0;

/// Largest number of decoding orders enumerated for time-sharing recovery.
/// Radius of a warm-started dual ball relative to the cold one.
pub const WARM_RADIUS_FACTOR: f64 = 0.1;
pub const MAX_TIMESHARE_ORDERS: usize = 5040;

/// Prices `λ_k ≥ 0` of the rate constraints (J·s/bit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct DualVector<T>(Vec<T>);

impl<T: Scalar> DualVector<T> {
    pub fn new(lambda: Vec<T>) -> Result<Self> {
        if lambda.iter().any(|l| !(l.is_finite() && *l >= T::zero())) {
            return Err(domain("dual variables must be finite and non-negative"));
        }
        Ok(Self(lambda))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![T::zero(); k])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Offloaded bits `ℓ_k ∈ [0, L_k]` per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct OffloadPartition<T>(Vec<T>);

impl<T: Scalar> OffloadPartition<T> {
    pub fn new(bits: Vec<T>, profiles: &[UserProfile<T>]) -> Result<Self> {
        if bits.len() != profiles.len() {
            return Err(Error::Dimension {
                expected: profiles.len(),
                found: bits.len(),
            });
        }
        for (b, u) in bits.iter().zip(profiles) {
            if !(*b >= T::zero() && *b <= u.task_bits) {
                return Err(domain(format!(
                    "offloaded bits {b} outside [0, {}]",
                    u.task_bits
                )));
            }
        }
        Ok(Self(bits))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Admissible range `[lo, hi]` for a user's offloaded bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Bounds<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn free(profile: &UserProfile<T>) -> Self {
        Self {
            lo: T::zero(),
            hi: profile.task_bits,
        }
    }

    pub fn local(_profile: &UserProfile<T>) -> Self {
        Self {
            lo: T::zero(),
            hi: T::zero(),
        }
    }

    pub fn offload(profile: &UserProfile<T>) -> Self {
        Self {
            lo: profile.task_bits,
            hi: profile.task_bits,
        }
    }

    pub fn clamp(&self, x: T) -> T {
        x.max(self.lo).min(self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Settings<T> {
    /// Relative primal–dual gap at which the run stops.
    pub epsilon: T,
    /// Radius of the initial dual ball, in units of each user's price scale.
    pub initial_radius: T,
    /// Ellipsoid iterations per attempt; `None` scales with the user count.
    pub max_iter: Option<usize>,
    /// Attempts with a ten-fold larger ball when a run cannot be certified.
    pub max_restarts: usize,
}

impl<T: Scalar> Default for P1Settings<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(DEFAULT_EPSILON),
            initial_radius: T::lit(DEFAULT_RADIUS),
            max_iter: None,
            max_restarts: 2,
        }
    }
}

impl<T: Scalar> P1Settings<T> {
    pub fn with_epsilon(epsilon: T) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

/// Diagnostics of a dual solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SolveReport<T> {
    /// Prices at the best dual point.
    pub dual: DualVector<T>,
    /// Best dual value; a lower bound on the optimum.
    pub lower_bound: T,
    /// Total ellipsoid iterations over all attempts.
    pub iterations: usize,
    pub restarts: usize,
    /// Best dual value after each oracle call of the final attempt.
    pub trace: Vec<TracePoint>,
}

/// Primal solution with its energy accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OffloadSolution<T> {
    pub partition: OffloadPartition<T>,
    pub powers: PowerVector<T>,
    pub schedule: RateSchedule<T>,
    /// `p_k T̃` (J).
    pub per_user_tx_energy: Vec<T>,
    /// `ζ_k C_k³ (L_k − ℓ_k)³ / T²` (J).
    pub per_user_local_energy: Vec<T>,
    pub weighted_total: T,
    /// `C_k (L_k − ℓ_k) / T` (cycles/s).
    pub cpu_frequency: Vec<T>,
    pub report: SolveReport<T>,
}

/// Residual tolerance on delivered bits: `max(1, 1e-6·L_k)`.
pub fn tol_bits<T: Scalar>(task_bits: T) -> T {
    T::one().max(T::lit(1e-6) * task_bits)
}

impl<T: Scalar> OffloadSolution<T> {
    /// Checks rate feasibility, region membership and energy bookkeeping.
    pub fn verify(&self, profiles: &[UserProfile<T>], config: &SystemConfig<T>) -> Result<()> {
        let k = profiles.len();
        let window = config.offload_window;
        let channels: Vec<ChannelVector<T>> = profiles.iter().map(|u| u.channel.clone()).collect();
        let eff = self.schedule.effective_rates.as_slice();
        let ell = self.partition.as_slice();
        if eff.len() != k || ell.len() != k || self.powers.len() != k {
            return Err(Error::Dimension {
                expected: k,
                found: eff.len(),
            });
        }
        for u in 0..k {
            let slack = eff[u] * window - ell[u];
            if slack < -tol_bits(profiles[u].task_bits) {
                return Err(Error::InfeasibleRecovery(format!(
                    "user {u} delivers {} of {} offloaded bits",
                    eff[u] * window,
                    ell[u]
                )));
            }
        }
        if self.schedule.total_duration() > window * (T::one() + T::lit(1e-9)) {
            return Err(Error::InfeasibleRecovery(
                "schedule exceeds the offloading window".into(),
            ));
        }
        let tol = T::lit(DEFAULT_MEMBERSHIP_TOL).max(T::lit(100.0 * T::REL_EPS));
        for seg in &self.schedule.segments {
            let expect = vertex_rates(&self.powers, &seg.order, &channels, config.bandwidth)?;
            for (a, b) in expect.as_slice().iter().zip(seg.rates.as_slice()) {
                if (*a - *b).abs() > tol * (T::one() + a.abs()) {
                    return Err(Error::InfeasibleRecovery(
                        "segment rates are not the SIC vertex".into(),
                    ));
                }
            }
            // Membership enumerates all 2^K subsets; skip it for large K.
            if k <= 12 && !contains(&self.powers, &seg.rates, &channels, config.bandwidth, tol)? {
                return Err(Error::InfeasibleRecovery(
                    "segment rates leave the capacity region".into(),
                ));
            }
        }
        let total: T = profiles
            .iter()
            .enumerate()
            .map(|(u, p)| p.weight * (self.per_user_local_energy[u] + self.per_user_tx_energy[u]))
            .sum();
        if (total - self.weighted_total).abs()
            > T::lit(1e-9) * total.abs().max(T::min_positive_value())
        {
            return Err(Error::InfeasibleRecovery(
                "weighted total does not match per-user energies".into(),
            ));
        }
        Ok(())
    }
}

/// `ζ C³ b³ / T²` for `b` locally computed bits.
pub fn local_energy<T: Scalar>(profile: &UserProfile<T>, local_bits: T, block_length: T) -> T {
    profile.cubic_coefficient() * local_bits.powi(3) / (block_length * block_length)
}

/// Minimizer of `α ζ C³ (L − ℓ)³/T² + λ ℓ/T̃` over `ℓ ∈ bounds`.
fn split_one<T: Scalar>(
    lambda: T,
    profile: &UserProfile<T>,
    config: &SystemConfig<T>,
    bounds: Bounds<T>,
) -> T {
    let a = profile.weight * profile.cubic_coefficient();
    if !(a > T::zero()) {
        return if lambda > T::zero() {
            bounds.lo
        } else {
            bounds.hi
        };
    }
    let local = config.block_length * (lambda / (T::lit(3.0) * config.offload_window * a)).sqrt();
    bounds.clamp(profile.task_bits - local)
}

/// Optimal task split for fixed prices, each user over `[0, L_k]`.
pub fn split_subproblem<T: Scalar>(
    lambda: &DualVector<T>,
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
) -> Result<OffloadPartition<T>> {
    if lambda.0.len() != profiles.len() {
        return Err(Error::Dimension {
            expected: profiles.len(),
            found: lambda.0.len(),
        });
    }
    let bits = profiles
        .iter()
        .zip(&lambda.0)
        .map(|(u, l)| split_one(*l, u, config, Bounds::free(u)))
        .collect();
    Ok(OffloadPartition(bits))
}

/// Concave objective of the power subproblem for a fixed price vector:
/// `F(p) = −T̃ Σ α_k p_k + (B/ln2) Σ_k w_k ln det A_k`, where `A_k` adds the
/// first `k` users of the order and `w_k = λ_{π(k)} − λ_{π(k+1)}`.
struct PowerObjective<'a, T> {
    channels: &'a [ChannelVector<T>],
    order: &'a [usize],
    pos: Vec<usize>,
    weights: Vec<T>,
    alpha: Vec<T>,
    window: T,
    coef: T,
    antennas: usize,
}

impl<'a, T: Scalar> PowerObjective<'a, T> {
    fn new(
        lambda: &[T],
        alpha: Vec<T>,
        order: &'a DecodingOrder,
        channels: &'a [ChannelVector<T>],
        window: T,
        bandwidth: T,
    ) -> Self {
        let ord = order.as_slice();
        let weights = (0..ord.len())
            .map(|k| {
                let next = ord.get(k + 1).map_or(T::zero(), |&u| lambda[u]);
                pos(lambda[ord[k]] - next)
            })
            .collect();
        Self {
            channels,
            order: ord,
            pos: order.positions(),
            weights,
            alpha,
            window,
            coef: bandwidth / T::ln2(),
            antennas: channels.first().map_or(1, |h| h.dim()),
        }
    }

    /// Single-user water-filling ignoring interference.
    fn water_fill(&self, lambda: &[T]) -> Vec<T> {
        (0..self.order.len())
            .map(|u| {
                let g = self.channels[u].gain();
                if self.alpha[u] > T::zero() && g > T::zero() {
                    pos(self.coef * lambda[u] / (self.window * self.alpha[u]) - T::one() / g)
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

impl<T: Scalar> SmoothConcave<T> for PowerObjective<'_, T> {
    fn dim(&self) -> usize {
        self.order.len()
    }

    fn evaluate(&mut self, x: &[T], order: Order) -> Result<Evaluation<T>> {
        let n = self.order.len();
        let mut value = -self.window * self.alpha.iter().zip(x).map(|(a, p)| *a * *p).sum::<T>();
        let want_grad = order >= Order::Gradient;
        let want_hess = order == Order::Hessian;
        let mut gradient = if want_grad {
            self.alpha.iter().map(|a| -self.window * *a).collect()
        } else {
            Vec::new()
        };
        let mut hessian = want_hess.then(|| vec![T::zero(); n * n]);
        let mut chol = CholeskyC::identity(self.antennas);
        let mut ys: Vec<Vec<Complex<T>>> = Vec::with_capacity(n);
        for k in 0..n {
            let u = self.order[k];
            if x[u] > T::zero() {
                chol.rank_one_update(x[u], self.channels[u].entries());
            }
            let w = self.weights[k];
            if w <= T::zero() {
                continue;
            }
            let cw = self.coef * w;
            value += cw * chol.ln_det();
            if !want_grad {
                continue;
            }
            ys.clear();
            for i in 0..=k {
                ys.push(chol.forward(self.channels[self.order[i]].entries()));
            }
            for i in 0..=k {
                let ui = self.order[i];
                gradient[ui] += cw * ys[i].iter().map(|z| z.norm_sqr()).sum::<T>();
                if let Some(h) = hessian.as_mut() {
                    for j in 0..=i {
                        let uj = self.order[j];
                        let ip: Complex<T> =
                            ys[i].iter().zip(&ys[j]).map(|(a, b)| a.conj() * *b).sum();
                        let v = cw * ip.norm_sqr();
                        h[ui * n + uj] -= v;
                        if i != j {
                            h[uj * n + ui] -= v;
                        }
                    }
                }
            }
        }
        debug_assert!(self.pos.len() == n);
        Ok(Evaluation {
            value,
            gradient,
            hessian,
        })
    }
}

struct PowerSolution<T> {
    powers: Vec<T>,
    order: DecodingOrder,
    rates: Vec<T>,
    /// Maximum of the concave power objective.
    value: T,
}

fn solve_power<T: Scalar>(
    lambda: &[T],
    alpha: &[T],
    channels: &[ChannelVector<T>],
    window: T,
    bandwidth: T,
    warm: Option<&[T]>,
) -> Result<PowerSolution<T>> {
    let order = DecodingOrder::by_descending(lambda);
    let mut obj = PowerObjective::new(lambda, alpha.to_vec(), &order, channels, window, bandwidth);
    let n = lambda.len();
    let mut start = obj.water_fill(lambda);
    if let Some(w) = warm.filter(|w| w.len() == n) {
        let a = obj.evaluate(&start, Order::Value)?.value;
        let b = obj.evaluate(w, Order::Value)?.value;
        if b > a {
            start = w.to_vec();
        }
    }
    let scale = window * alpha.iter().copied().fold(T::zero(), T::max);
    let settings = OrthantSettings {
        tolerance: T::lit(1e-10f64.max(100.0 * T::REL_EPS)) * scale,
        max_iter: 400,
        newton: true,
    };
    let out = maximize_concave_orthant(&mut obj, &start, &settings)?;
    let powers = out.x;
    let rates = vertex_rates(
        &PowerVector::new(powers.clone())?,
        &order,
        channels,
        bandwidth,
    )?;
    Ok(PowerSolution {
        powers,
        order,
        rates: rates.as_slice().to_vec(),
        value: out.value,
    })
}

/// Optimal powers, decoding order and vertex rates for fixed prices.
pub fn power_subproblem<T: Scalar>(
    lambda: &DualVector<T>,
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
) -> Result<(PowerVector<T>, DecodingOrder, RateVector<T>)> {
    check_profiles(profiles, config)?;
    if lambda.0.len() != profiles.len() {
        return Err(Error::Dimension {
            expected: profiles.len(),
            found: lambda.0.len(),
        });
    }
    let alpha: Vec<T> = profiles.iter().map(|u| u.weight).collect();
    let channels: Vec<ChannelVector<T>> = profiles.iter().map(|u| u.channel.clone()).collect();
    let sol = solve_power(
        &lambda.0,
        &alpha,
        &channels,
        config.offload_window,
        config.bandwidth,
        None,
    )?;
    Ok((
        PowerVector::new(sol.powers)?,
        sol.order,
        RateVector::new(sol.rates)?,
    ))
}

/// Value and gradient of the power objective, exposed for verification.
pub fn power_objective<T: Scalar>(
    lambda: &DualVector<T>,
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    powers: &[T],
) -> Result<(T, Vec<T>)> {
    let alpha: Vec<T> = profiles.iter().map(|u| u.weight).collect();
    let channels: Vec<ChannelVector<T>> = profiles.iter().map(|u| u.channel.clone()).collect();
    let order = DecodingOrder::by_descending(&lambda.0);
    let mut obj = PowerObjective::new(
        &lambda.0,
        alpha,
        &order,
        &channels,
        config.offload_window,
        config.bandwidth,
    );
    let e = obj.evaluate(powers, Order::Gradient)?;
    Ok((e.value, e.gradient))
}

/// Users in the dual, their price scales and sub-channels.
struct Instance<'a, T> {
    profiles: &'a [UserProfile<T>],
    config: &'a SystemConfig<T>,
    bounds: Vec<Bounds<T>>,
    active: Vec<usize>,
    scale: Vec<T>,
    channels: Vec<ChannelVector<T>>,
    alpha: Vec<T>,
}

/// Per-user price scales for the dual search. Prices are estimated as the
/// marginal weighted transmit energy per unit rate at the full-offload SIC
/// vertex (finite differences of the minimum powers), capped by the price
/// beyond which a user with a local option computes everything locally.
fn price_scales<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    bounds: &[Bounds<T>],
    active: &[usize],
) -> Vec<T> {
    let window = config.offload_window;
    let single: Vec<T> = active
        .iter()
        .map(|&k| single_user_price(&profiles[k], config, bounds[k].hi))
        .collect();
    let channels: Vec<ChannelVector<T>> = active
        .iter()
        .map(|&k| profiles[k].channel.clone())
        .collect();
    let alpha: Vec<T> = active.iter().map(|&k| profiles[k].weight).collect();
    let rates: Vec<T> = active.iter().map(|&k| bounds[k].hi / window).collect();
    let order = DecodingOrder::by_descending(&single);
    let energy = |r: &[T]| -> Option<T> {
        let p = min_powers_for_order(r, &order, &channels, config.bandwidth).ok()?;
        let e: T = alpha
            .iter()
            .zip(p.as_slice())
            .map(|(a, p)| *a * *p)
            .sum::<T>()
            * window;
        e.is_finite().then_some(e)
    };
    let base = energy(&rates);
    active
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let u = &profiles[k];
            let b = bounds[k];
            let mut price = single[i];
            if let Some(e0) = base {
                let mut bumped = rates.clone();
                let step = rates[i] * T::lit(1e-6);
                bumped[i] += step;
                if let Some(e1) = energy(&bumped) {
                    let fd = (e1 - e0) / step;
                    if fd.is_finite() && fd > T::zero() {
                        price = price.max(fd);
                    }
                }
            }
            let marginal_local = T::lit(3.0)
                * window
                * u.weight
                * u.cubic_coefficient()
                * (u.task_bits - b.lo).powi(2)
                / (config.block_length * config.block_length);
            if b.lo < b.hi && marginal_local > T::zero() {
                price = price.min(marginal_local);
            }
            price.max(T::min_positive_value())
        })
        .collect()
}

/// Price at which an isolated user, interference-free, would deliver `bits`.
fn single_user_price<T: Scalar>(profile: &UserProfile<T>, config: &SystemConfig<T>, bits: T) -> T {
    let g = profile.channel.gain().max(T::min_positive_value());
    let spectral = (bits / (config.offload_window * config.bandwidth)).min(T::lit(60.0));
    T::ln2() * config.offload_window * profile.weight / (config.bandwidth * g)
        * T::lit(2.0).powf(spectral)
}

impl<'a, T: Scalar> Instance<'a, T> {
    fn new(
        profiles: &'a [UserProfile<T>],
        config: &'a SystemConfig<T>,
        bounds: Vec<Bounds<T>>,
    ) -> Result<Self> {
        check_profiles(profiles, config)?;
        if bounds.len() != profiles.len() {
            return Err(Error::Dimension {
                expected: profiles.len(),
                found: bounds.len(),
            });
        }
        let mut active = Vec::new();
        for (k, (u, b)) in profiles.iter().zip(&bounds).enumerate() {
            if !(b.lo >= T::zero() && b.lo <= b.hi && b.hi <= u.task_bits) {
                return Err(domain(format!(
                    "user {k}: invalid offload bounds [{}, {}]",
                    b.lo, b.hi
                )));
            }
            if u.weight == T::zero() {
                if b.lo > T::zero() {
                    return Err(domain(format!(
                        "user {k} has zero energy weight but is required to offload"
                    )));
                }
                continue;
            }
            if b.hi > T::zero() {
                active.push(k);
            }
        }
        let scale = price_scales(profiles, config, &bounds, &active);
        let channels = active
            .iter()
            .map(|&k| profiles[k].channel.clone())
            .collect();
        let alpha = active.iter().map(|&k| profiles[k].weight).collect();
        Ok(Self {
            profiles,
            config,
            bounds,
            active,
            scale,
            channels,
            alpha,
        })
    }

    fn k(&self) -> usize {
        self.profiles.len()
    }

    /// Offloaded bits of users outside the dual.
    fn fixed_bits(&self, k: usize) -> T {
        self.bounds[k].lo
    }

    /// `Σ α_k local_k(L_k − ℓ_k)` over all users.
    fn local_total(&self, ell: &[T]) -> T {
        self.profiles
            .iter()
            .zip(ell)
            .map(|(u, l)| u.weight * local_energy(u, u.task_bits - *l, self.config.block_length))
            .sum()
    }
}

/// Everything the dual function produces at one price vector.
struct DualPoint<T> {
    lambda: Vec<T>,
    value: T,
    /// Full-length split.
    ell: Vec<T>,
    powers: Vec<T>,
    order: DecodingOrder,
    rates: Vec<T>,
}

fn eval_dual<T: Scalar>(
    inst: &Instance<'_, T>,
    lambda: &[T],
    warm: Option<&[T]>,
) -> Result<DualPoint<T>> {
    let cfg = inst.config;
    let mut ell: Vec<T> = (0..inst.k()).map(|k| inst.fixed_bits(k)).collect();
    let mut linear = T::zero();
    for (i, &k) in inst.active.iter().enumerate() {
        ell[k] = split_one(lambda[i], &inst.profiles[k], cfg, inst.bounds[k]);
        linear += lambda[i] * ell[k] / cfg.offload_window;
    }
    let power = solve_power(
        lambda,
        &inst.alpha,
        &inst.channels,
        cfg.offload_window,
        cfg.bandwidth,
        warm,
    )?;
    let value = inst.local_total(&ell) + linear - power.value;
    Ok(DualPoint {
        lambda: lambda.to_vec(),
        value,
        ell,
        powers: power.powers,
        order: power.order,
        rates: power.rates,
    })
}

/// A feasible primal point over the active users.
#[derive(Clone)]
struct Primal<T> {
    energy: T,
    ell: Vec<T>,
    powers: Vec<T>,
    /// (fraction of the window, order, vertex rates) over active users.
    segments: Vec<(T, DecodingOrder, Vec<T>)>,
}

/// Single-order candidate: deliver `target` exactly with minimal powers.
fn vertex_candidate<T: Scalar>(
    inst: &Instance<'_, T>,
    order: &DecodingOrder,
    target: &[T],
) -> Result<Primal<T>> {
    let cfg = inst.config;
    let rates: Vec<T> = inst
        .active
        .iter()
        .map(|&k| target[k] / cfg.offload_window)
        .collect();
    let p = min_powers_for_order(&rates, order, &inst.channels, cfg.bandwidth)?;
    let vr = vertex_rates(&p, order, &inst.channels, cfg.bandwidth)?;
    let tx: T = inst
        .alpha
        .iter()
        .zip(p.as_slice())
        .map(|(a, p)| *a * *p)
        .sum::<T>()
        * cfg.offload_window;
    Ok(Primal {
        energy: inst.local_total(target) + tx,
        ell: target.to_vec(),
        powers: p.as_slice().to_vec(),
        segments: vec![(T::one(), order.clone(), vr.as_slice().to_vec())],
    })
}

/// Groups active users whose prices are within `tie(i, j)` of each other,
/// returned in descending price order.
fn tie_clusters<T: Scalar>(lambda: &[T], tie: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let order = DecodingOrder::by_descending(lambda);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &u in order.as_slice() {
        match clusters.last_mut() {
            Some(c) if tie(*c.last().expect("clusters are non-empty"), u) => c.push(u),
            _ => clusters.push(vec![u]),
        }
    }
    clusters
}

fn factorial_capped(n: usize, cap: usize) -> usize {
    (1..=n)
        .try_fold(1usize, |acc, i| acc.checked_mul(i).filter(|v| *v <= cap))
        .unwrap_or(cap + 1)
}

/// Decoding orders consistent with the cluster structure, or `None` if more
/// than `cap`.
fn cluster_orders(clusters: &[Vec<usize>], cap: usize) -> Option<Vec<DecodingOrder>> {
    let mut total = 1usize;
    for c in clusters {
        total = total.checked_mul(factorial_capped(c.len(), cap))?;
        if total > cap {
            return None;
        }
    }
    let per_cluster: Vec<Vec<Vec<usize>>> = clusters
        .iter()
        .map(|c| c.iter().copied().permutations(c.len()).collect())
        .collect();
    let orders = per_cluster
        .iter()
        .multi_cartesian_product()
        .map(|parts| DecodingOrder(parts.into_iter().flatten().copied().collect()))
        .collect::<Vec<_>>();
    Some(if orders.is_empty() {
        vec![DecodingOrder(Vec::new())]
    } else {
        orders
    })
}

/// Time-shared candidate at fixed powers: pick segment fractions minimizing
/// the price-weighted shortfall against `target`, then offload what is
/// actually delivered. Vertices enter by column generation: the LP row
/// prices define a weighted sum rate whose maximizing SIC order is the next
/// column.
fn timeshare_candidate<T: Scalar>(
    inst: &Instance<'_, T>,
    point: &DualPoint<T>,
    target: &[T],
) -> Result<Option<Primal<T>>> {
    let cfg = inst.config;
    let n = inst.active.len();
    let p = PowerVector::new(point.powers.clone())?;
    let lmax = point
        .lambda
        .iter()
        .copied()
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let scale: Vec<f64> = inst
        .active
        .iter()
        .map(|&k| (cfg.offload_window / inst.profiles[k].task_bits).as_f64())
        .collect();
    let mut orders = vec![point.order.clone()];
    let mut vertex = vec![point.rates.clone()];
    let penalty = 1e3;
    let mut sol = None;
    for _ in 0..4 * n + 8 {
        // Variables: m fractions, n cheap shortfalls capped by the room above
        // `lo`, n penalized shortfalls (all in units of L_k).
        let m = orders.len();
        let width = m + 2 * n;
        let mut cost = vec![0.0; width];
        for i in 0..n {
            cost[m + i] = (point.lambda[i] / lmax).as_f64().max(1e-6);
            cost[m + n + i] = penalty;
        }
        let mut lp = LpProblem::minimize(cost);
        let mut ones = vec![0.0; width];
        ones[..m].fill(1.0);
        lp.add_constraint(ones, Relation::Le, 1.0);
        for (i, &k) in inst.active.iter().enumerate() {
            let mut row = vec![0.0; width];
            for (j, r) in vertex.iter().enumerate() {
                row[j] = r[i].as_f64() * scale[i];
            }
            row[m + i] = 1.0;
            row[m + n + i] = 1.0;
            lp.add_constraint(
                row,
                Relation::Ge,
                (target[k] / inst.profiles[k].task_bits).as_f64(),
            );
        }
        for (i, &k) in inst.active.iter().enumerate() {
            let room = pos(target[k] - inst.bounds[k].lo) / inst.profiles[k].task_bits;
            lp = lp.upper_bound(m + i, room.as_f64());
        }
        let LpStatus::Optimal(s) = lp_solve(&lp)? else {
            return Ok(None);
        };
        // Pricing: a column improves iff Σ w_i a_i > y_0.
        let y0 = s.duals[0].abs();
        let w: Vec<T> = (0..n)
            .map(|i| T::lit(s.duals[1 + i].abs() * scale[i]))
            .collect();
        let order = DecodingOrder::by_descending(&w);
        let rates = vertex_rates(&p, &order, &inst.channels, cfg.bandwidth)?
            .as_slice()
            .to_vec();
        let gain: f64 = w
            .iter()
            .zip(&rates)
            .map(|(w, r)| w.as_f64() * r.as_f64())
            .sum();
        let done = gain <= y0 * (1.0 + 1e-9) + 1e-12 || orders.contains(&order);
        sol = Some(s);
        if done {
            break;
        }
        orders.push(order);
        vertex.push(rates);
    }
    let Some(sol) = sol else {
        return Ok(None);
    };
    let m = orders.len().min(sol.x.len() - 2 * n);
    let used: f64 = sol.x[..m].iter().sum();
    if !(used > 0.0) {
        return Ok(None);
    }
    let mut ell = target.to_vec();
    let mut segments = Vec::new();
    for (j, t) in sol.x[..m].iter().enumerate() {
        if *t > 1e-12 {
            segments.push((T::lit(*t / used), orders[j].clone(), vertex[j].clone()));
        }
    }
    for (i, &k) in inst.active.iter().enumerate() {
        let delivered: T =
            segments.iter().map(|(t, _, r)| *t * r[i]).sum::<T>() * cfg.offload_window;
        let b = inst.bounds[k];
        if delivered < b.lo - tol_bits(inst.profiles[k].task_bits) {
            return Ok(None);
        }
        ell[k] = delivered.min(b.hi).max(b.lo);
    }
    let tx: T = inst
        .alpha
        .iter()
        .zip(&point.powers)
        .map(|(a, p)| *a * *p)
        .sum::<T>()
        * cfg.offload_window;
    Ok(Some(Primal {
        energy: inst.local_total(&ell) + tx,
        ell,
        powers: point.powers.clone(),
        segments,
    }))
}

/// Candidate primal points recovered from one dual evaluation.
fn recover_candidates<T: Scalar>(
    inst: &Instance<'_, T>,
    point: &DualPoint<T>,
    uncertainty: Option<&[T]>,
    timeshare: bool,
    best: &mut Option<Primal<T>>,
) -> Result<()> {
    let cfg = inst.config;
    let k = inst.k();
    let consider = |c: Primal<T>, best: &mut Option<Primal<T>>| {
        if c.energy.is_finite() && best.as_ref().is_none_or(|b| c.energy < b.energy) {
            *best = Some(c);
        }
    };
    let mut from_rates = point.ell.clone();
    for (i, &u) in inst.active.iter().enumerate() {
        from_rates[u] = inst.bounds[u].clamp(point.rates[i] * cfg.offload_window);
    }
    let mid: Vec<T> = (0..k)
        .map(|u| (point.ell[u] + from_rates[u]) / T::lit(2.0))
        .collect();
    for target in [&point.ell, &from_rates, &mid] {
        consider(vertex_candidate(inst, &point.order, target)?, best);
    }

    if !timeshare {
        return Ok(());
    }
    let lam = &point.lambda;
    let tie = |i: usize, j: usize| {
        let spread = (lam[i] - lam[j]).abs();
        let base = T::lit(1e-4) * lam[i].max(lam[j]);
        let fuzz = uncertainty.map_or(T::zero(), |w| w[i] + w[j]);
        spread <= base + fuzz
    };
    if tie_clusters(lam, tie).iter().all(|c| c.len() == 1) {
        return Ok(());
    }
    for target in [&point.ell, &mid] {
        if let Some(c) = timeshare_candidate(inst, point, target)? {
            consider(c, best);
        }
    }
    Ok(())
}

/// Solves the partial-offloading problem with per-user offload bounds.
/// Users with `lo = hi` are pinned; `[0, L_k]` is the unrestricted case.
pub fn solve_bounded<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    bounds: &[Bounds<T>],
    settings: &P1Settings<T>,
) -> Result<OffloadSolution<T>> {
    solve_bounded_inner(profiles, config, bounds, settings, None)
}

/// [`solve_bounded`] with the first dual ball centred at `start` instead of
/// the origin. Later attempts fall back to the origin.
pub fn solve_bounded_from<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    bounds: &[Bounds<T>],
    settings: &P1Settings<T>,
    start: &DualVector<T>,
) -> Result<OffloadSolution<T>> {
    if start.as_slice().len() != profiles.len() {
        return Err(Error::Dimension {
            expected: profiles.len(),
            found: start.as_slice().len(),
        });
    }
    solve_bounded_inner(profiles, config, bounds, settings, Some(start))
}

fn solve_bounded_inner<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    bounds: &[Bounds<T>],
    settings: &P1Settings<T>,
    start: Option<&DualVector<T>>,
) -> Result<OffloadSolution<T>> {
    let inst = Instance::new(profiles, config, bounds.to_vec())?;
    let n = inst.active.len();
    if n == 0 {
        let ell: Vec<T> = (0..inst.k()).map(|k| inst.fixed_bits(k)).collect();
        let primal = Primal {
            energy: inst.local_total(&ell),
            ell,
            powers: Vec::new(),
            segments: vec![(T::one(), DecodingOrder(Vec::new()), Vec::new())],
        };
        let report = SolveReport {
            dual: DualVector::zeros(inst.k()),
            lower_bound: primal.energy,
            iterations: 0,
            restarts: 0,
            trace: Vec::new(),
        };
        return assemble(&inst, primal, report);
    }
    if !(settings.epsilon > T::zero()) || !(settings.initial_radius > T::zero()) {
        return Err(domain("epsilon and initial radius must be positive"));
    }
    let max_iter = settings.max_iter.unwrap_or(200 + 60 * n * n);
    let mut radius = settings.initial_radius;
    let mut total_iter = 0;
    let mut best_primal: Option<Primal<T>> = None;
    let mut best_dual: Option<DualPoint<T>> = None;

    // A warm start gets one extra attempt before the usual schedule.
    let warm_attempts = usize::from(start.is_some());
    for attempt in 0..=settings.max_restarts + warm_attempts {
        let last_eval: RefCell<Option<DualPoint<T>>> = RefCell::new(None);
        let warm: RefCell<Option<Vec<T>>> = RefCell::new(None);
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let primal_cell = RefCell::new(best_primal.take());
        let dual_cell = RefCell::new(best_dual.take());

        let oracle = |mu: &[T]| -> Result<OracleAnswer<T>> {
            let lambda: Vec<T> = mu.iter().zip(&inst.scale).map(|(m, s)| *m * *s).collect();
            let point = eval_dual(&inst, &lambda, warm.borrow().as_deref())?;
            *warm.borrow_mut() = Some(point.powers.clone());
            let supergradient: Vec<T> = inst
                .active
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    inst.scale[i] * (point.ell[k] / config.offload_window - point.rates[i])
                })
                .collect();
            let value = point.value;
            *last_eval.borrow_mut() = Some(point);
            Ok(OracleAnswer::Value {
                value,
                supergradient,
            })
        };
        let monitor = |p: &crate::convex::Progress<'_, T>| {
            let Some(point) = last_eval.borrow_mut().take() else {
                return Control::Continue;
            };
            let shape = p.state.shape();
            let width: Vec<T> = (0..n)
                .map(|i| inst.scale[i] * shape[i * n + i].max(T::zero()).sqrt())
                .collect();
            let mut best = primal_cell.borrow_mut();
            // Time-sharing recovery is costlier; try it every n-th iteration.
            let timeshare = p.iteration % n == 0;
            if let Err(e) = recover_candidates(&inst, &point, Some(&width), timeshare, &mut best) {
                *failure.borrow_mut() = Some(e);
                return Control::Stop;
            }
            let mut dual = dual_cell.borrow_mut();
            if dual.as_ref().is_none_or(|d| point.value > d.value) {
                *dual = Some(point);
            }
            let lower = dual.as_ref().map_or(T::neg_infinity(), |d| d.value);
            let upper = best.as_ref().map_or(T::infinity(), |b| b.energy);
            if upper - lower <= settings.epsilon * upper.abs() {
                Control::Stop
            } else {
                Control::Continue
            }
        };
        let ell_settings = EllipsoidSettings {
            rel_tol: T::zero(),
            abs_tol: T::zero(),
            max_iter,
            nonnegative: true,
        };
        let center = match start {
            Some(lambda) if attempt == 0 => inst
                .active
                .iter()
                .zip(&inst.scale)
                .map(|(&k, s)| lambda.as_slice()[k].max(T::zero()) / *s)
                .collect(),
            _ => vec![T::zero(); n],
        };
        let r = if attempt < warm_attempts {
            radius * T::lit(WARM_RADIUS_FACTOR)
        } else {
            radius
        };
        let init = EllipsoidState::ball(center, r)?;
        let outcome = ellipsoid_maximize_with(oracle, init, &ell_settings, monitor)?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        total_iter += outcome.iterations;
        best_primal = primal_cell.into_inner();
        best_dual = dual_cell.into_inner();

        let (Some(primal), Some(dual)) = (best_primal.as_ref(), best_dual.as_ref()) else {
            return Err(Error::NumericalFailure {
                context: "dual solve produced no iterate".into(),
                iteration: total_iter,
                trace: Vec::new(),
            });
        };
        let certified = primal.energy - dual.value <= settings.epsilon * primal.energy.abs();
        if certified {
            let mut lambda_full = vec![T::zero(); inst.k()];
            for (i, &k) in inst.active.iter().enumerate() {
                lambda_full[k] = dual.lambda[i];
            }
            let report = SolveReport {
                dual: DualVector(lambda_full),
                lower_bound: dual.value,
                iterations: total_iter,
                restarts: attempt,
                trace: outcome.trace,
            };
            let primal = best_primal.take().expect("checked above");
            return assemble(&inst, primal, report);
        }
        if attempt >= warm_attempts {
            radius = radius * T::lit(10.0);
        }
    }
    let gap = match (best_primal.as_ref(), best_dual.as_ref()) {
        (Some(p), Some(d)) => ((p.energy - d.value) / p.energy).as_f64(),
        _ => f64::NAN,
    };
    Err(Error::NumericalFailure {
        context: format!("dual solve stopped with relative gap {gap:.3e}"),
        iteration: total_iter,
        trace: vec![gap],
    })
}

/// Maps an active-user primal back to all users with full bookkeeping.
fn assemble<T: Scalar>(
    inst: &Instance<'_, T>,
    primal: Primal<T>,
    report: SolveReport<T>,
) -> Result<OffloadSolution<T>> {
    let cfg = inst.config;
    let k = inst.k();
    let mut powers = vec![T::zero(); k];
    for (i, &u) in inst.active.iter().enumerate() {
        powers[u] = primal.powers[i];
    }
    let inactive: Vec<usize> = (0..k).filter(|u| !inst.active.contains(u)).collect();
    let mut segments = Vec::new();
    for (frac, order, rates) in &primal.segments {
        let mut full_order: Vec<usize> = order.as_slice().iter().map(|&i| inst.active[i]).collect();
        full_order.extend(&inactive);
        let mut full_rates = vec![T::zero(); k];
        for (i, &u) in inst.active.iter().enumerate() {
            full_rates[u] = rates[i];
        }
        segments.push(Segment {
            duration: *frac * cfg.offload_window,
            order: DecodingOrder::new(full_order)?,
            rates: RateVector::new(full_rates)?,
        });
    }
    let schedule = RateSchedule::new(segments, cfg.offload_window)?;
    let ell = primal.ell;
    let per_user_local: Vec<T> = inst
        .profiles
        .iter()
        .zip(&ell)
        .map(|(u, l)| local_energy(u, u.task_bits - *l, cfg.block_length))
        .collect();
    let per_user_tx: Vec<T> = powers.iter().map(|p| *p * cfg.offload_window).collect();
    let weighted_total = inst
        .profiles
        .iter()
        .enumerate()
        .map(|(u, p)| p.weight * (per_user_local[u] + per_user_tx[u]))
        .sum();
    let cpu_frequency = inst
        .profiles
        .iter()
        .zip(&ell)
        .map(|(u, l)| u.cycles_per_bit * (u.task_bits - *l) / cfg.block_length)
        .collect();
    let sol = OffloadSolution {
        partition: OffloadPartition(ell),
        powers: PowerVector::new(powers)?,
        schedule,
        per_user_tx_energy: per_user_tx,
        per_user_local_energy: per_user_local,
        weighted_total,
        cpu_frequency,
        report,
    };
    sol.verify(inst.profiles, cfg)?;
    Ok(sol)
}

/// Minimum weighted sum-energy with partial offloading.
pub fn solve_p1<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    settings: &P1Settings<T>,
) -> Result<OffloadSolution<T>> {
    let bounds: Vec<Bounds<T>> = profiles.iter().map(Bounds::free).collect();
    solve_bounded(profiles, config, &bounds, settings)
}

/// Time-sharing schedule delivering `ℓ` at powers `p` under the decoding
/// orders consistent with the ties of `λ` (users within `tie_tol`).
pub fn recover_timeshare<T: Scalar>(
    lambda: &DualVector<T>,
    ell: &OffloadPartition<T>,
    powers: &PowerVector<T>,
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    tie_tol: T,
) -> Result<RateSchedule<T>> {
    check_profiles(profiles, config)?;
    let k = profiles.len();
    for len in [lambda.0.len(), ell.0.len(), powers.len()] {
        if len != k {
            return Err(Error::Dimension {
                expected: k,
                found: len,
            });
        }
    }
    let channels: Vec<ChannelVector<T>> = profiles.iter().map(|u| u.channel.clone()).collect();
    let window = config.offload_window;
    let clusters = tie_clusters(&lambda.0, |i, j| {
        (lambda.0[i] - lambda.0[j]).abs() <= tie_tol
    });
    if clusters.iter().all(|c| c.len() == 1) {
        let order = DecodingOrder::by_descending(&lambda.0);
        let rates = vertex_rates(powers, &order, &channels, config.bandwidth)?;
        let sched = RateSchedule::single(order, rates, window);
        check_delivery(&sched, ell, profiles, window)?;
        return Ok(sched);
    }
    let orders = cluster_orders(&clusters, MAX_TIMESHARE_ORDERS).ok_or_else(|| {
        Error::Capability(format!(
            "tie structure implies more than {MAX_TIMESHARE_ORDERS} decoding orders; tighten the tie tolerance"
        ))
    })?;
    let vertex: Vec<RateVector<T>> = orders
        .iter()
        .map(|o| vertex_rates(powers, o, &channels, config.bandwidth))
        .collect::<Result<_>>()?;
    let m = orders.len();
    let mut lp = LpProblem::feasibility(m);
    lp.add_constraint(vec![1.0; m], Relation::Le, 1.0);
    for u in 0..k {
        let need = ell.0[u] - tol_bits(profiles[u].task_bits);
        if need <= T::zero() {
            continue;
        }
        let norm = ell.0[u];
        let row = vertex
            .iter()
            .map(|r| (r.as_slice()[u] * window / norm).as_f64())
            .collect();
        lp.add_constraint(row, Relation::Ge, (need / norm).as_f64());
    }
    let LpStatus::Optimal(sol) = lp_solve(&lp)? else {
        return Err(Error::InfeasibleRecovery(
            "time-sharing LP is infeasible; the tie clusters are too coarse (loosen the tie tolerance) \
             or the dual solve is not accurate enough (tighten epsilon)"
                .into(),
        ));
    };
    let used: f64 = sol.x.iter().sum();
    let segments = sol
        .x
        .iter()
        .zip(orders.into_iter().zip(vertex))
        .filter(|(t, _)| **t > 1e-12)
        .map(|(t, (order, rates))| Segment {
            duration: T::lit(*t / used) * window,
            order,
            rates,
        })
        .collect();
    let sched = RateSchedule::new(segments, window)?;
    check_delivery(&sched, ell, profiles, window)?;
    Ok(sched)
}

fn check_delivery<T: Scalar>(
    sched: &RateSchedule<T>,
    ell: &OffloadPartition<T>,
    profiles: &[UserProfile<T>],
    window: T,
) -> Result<()> {
    for (u, (r, l)) in sched
        .effective_rates
        .as_slice()
        .iter()
        .zip(&ell.0)
        .enumerate()
    {
        if *r * window < *l - tol_bits(profiles[u].task_bits) {
            return Err(Error::InfeasibleRecovery(format!(
                "user {u} delivers {} of {} bits",
                *r * window,
                l
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn user(bits: f64, gain: f64, n: usize) -> UserProfile<f64> {
        let mut h = vec![0.0; n];
        h[0] = gain.sqrt();
        UserProfile::new(bits, 4e3, 1e-28, 1.0, ChannelVector::from_real(&h).unwrap()).unwrap()
    }

    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (a + b) / 2.0
    }

    #[test]
    fn local_energy_examples() {
        let u = user(6e5, 1e3, 1);
        assert_eq!(local_energy(&u, 0.0, 0.3), 0.0);
        assert!((local_energy(&u, 6e5, 0.3) - 15.36).abs() < 1e-9);
        let ratio = local_energy(&u, 3e5, 0.2) / local_energy(&u, 3e5, 0.4);
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn split_matches_golden_section() {
        let cfg = SystemConfig::new(0.3, 0.27, 2e6, 1).unwrap();
        let mut u = user(6e5, 1e3, 1);
        u.weight = 0.7;
        for lambda in [1e-9, 1e-7, 3e-6, 2e-5] {
            let ell = split_subproblem(
                &DualVector::new(vec![lambda]).unwrap(),
                std::slice::from_ref(&u),
                &cfg,
            )
            .unwrap()
            .as_slice()[0];
            let obj =
                |l: f64| u.weight * local_energy(&u, u.task_bits - l, 0.3) + lambda * l / 0.27;
            let oracle = golden_min(obj, 0.0, u.task_bits);
            assert!(
                (ell - oracle).abs() <= 1e-6 * u.task_bits,
                "λ={lambda}: {ell} vs {oracle}"
            );
        }
    }

    #[test]
    fn split_limits() {
        let cfg = SystemConfig::new(0.3, 0.27, 2e6, 1).unwrap();
        let u = vec![user(6e5, 1e3, 1)];
        let full = split_subproblem(&DualVector::zeros(1), &u, &cfg).unwrap();
        assert_eq!(full.as_slice()[0], 6e5);
        let none = split_subproblem(&DualVector::new(vec![1.0]).unwrap(), &u, &cfg).unwrap();
        assert_eq!(none.as_slice()[0], 0.0);
    }

    #[test]
    fn zero_price_gives_zero_power() {
        let (p, c) = Scenario::default().instance::<f64>(1, 0).unwrap();
        let (pw, _, r) = power_subproblem(&DualVector::zeros(4), &p, &c).unwrap();
        assert!(pw.as_slice().iter().all(|x| *x == 0.0));
        assert!(r.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_user_power_closed_form() {
        let cfg = SystemConfig::new(0.3, 0.27, 2e6, 2).unwrap();
        let u = vec![user(6e5, 3e3, 2)];
        for lambda in [1e-10, 1e-9, 5e-8] {
            let (p, _, _) =
                power_subproblem(&DualVector::new(vec![lambda]).unwrap(), &u, &cfg).unwrap();
            let expect = (2e6 * lambda / (std::f64::consts::LN_2 * 0.27) - 1.0 / 3e3).max(0.0);
            let got = p.as_slice()[0];
            assert!(
                (got - expect).abs() <= 1e-8 * expect.max(1e-12),
                "{got} vs {expect}"
            );
        }
    }

    #[test]
    fn two_user_power_matches_grid() {
        let s = Scenario {
            users: 2,
            antennas: 2,
            ..Scenario::default()
        };
        let (p, c) = s.instance::<f64>(3, 0).unwrap();
        let lambda = DualVector::new(vec![4e-9, 2.5e-9]).unwrap();
        let (pw, _, _) = power_subproblem(&lambda, &p, &c).unwrap();
        let (best, _) = power_objective(&lambda, &p, &c, pw.as_slice()).unwrap();
        let top = 4.0 * pw.as_slice().iter().copied().fold(1e-3, f64::max);
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let q = [top * i as f64 / 400.0, top * j as f64 / 400.0];
                grid_best = grid_best.max(power_objective(&lambda, &p, &c, &q).unwrap().0);
            }
        }
        assert!(
            best >= grid_best - 1e-3 * grid_best.abs(),
            "{best} vs grid {grid_best}"
        );
    }

    #[test]
    fn power_gradient_matches_differences() {
        let (p, c) = Scenario::default().instance::<f64>(5, 0).unwrap();
        let lambda = DualVector::new(vec![3e-9, 1e-9, 2e-9, 5e-9]).unwrap();
        let x = [0.02, 0.05, 0.01, 0.03];
        let (_, g) = power_objective(&lambda, &p, &c, &x).unwrap();
        for i in 0..4 {
            let h = 1e-6 * x[i];
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let fd = (power_objective(&lambda, &p, &c, &a).unwrap().0
                - power_objective(&lambda, &p, &c, &b).unwrap().0)
                / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3),
                "coord {i}: {fd} vs {g:?}"
            );
        }
    }

    fn twins() -> (Vec<UserProfile<f64>>, SystemConfig<f64>) {
        let cfg = SystemConfig::new(0.3, 0.27, 2e6, 1).unwrap();
        (vec![user(6e5, 2.0, 1), user(6e5, 2.0, 1)], cfg)
    }

    #[test]
    fn timeshare_distinct_prices_is_single_segment() {
        let (p, c) = twins();
        let pw = PowerVector::new(vec![0.5, 0.5]).unwrap();
        let ell = OffloadPartition::new(vec![1e5, 1e5], &p).unwrap();
        let lam = DualVector::new(vec![2.0, 1.0]).unwrap();
        let s = recover_timeshare(&lam, &ell, &pw, &p, &c, 1e-6).unwrap();
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].order.as_slice(), &[0, 1]);
        assert!((s.segments[0].duration - 0.27).abs() < 1e-12);
    }

    fn twin_rates(c: &SystemConfig<f64>, p: f64, g: f64) -> (f64, f64) {
        let hi = c.bandwidth * (1.0 + p * g).log2();
        let lo = c.bandwidth * (1.0 + 2.0 * p * g).log2() - hi;
        (hi, lo)
    }

    #[test]
    fn timeshare_symmetric_users_split_evenly() {
        let (p, c) = twins();
        let pw = PowerVector::new(vec![0.5, 0.5]).unwrap();
        let (hi, lo) = twin_rates(&c, 0.5, 2.0);
        let each = (hi + lo) / 2.0 * c.offload_window;
        let ell = OffloadPartition::new(vec![each, each], &p).unwrap();
        let lam = DualVector::new(vec![1.0, 1.0]).unwrap();
        let s = recover_timeshare(&lam, &ell, &pw, &p, &c, 1e-6).unwrap();
        assert_eq!(s.segments.len(), 2);
        for seg in &s.segments {
            assert!((seg.duration - c.offload_window / 2.0).abs() < 1e-4 * c.offload_window);
        }
    }

    #[test]
    fn timeshare_asymmetric_target_meets_rates() {
        let (p, c) = twins();
        let pw = PowerVector::new(vec![0.5, 0.5]).unwrap();
        let (hi, lo) = twin_rates(&c, 0.5, 2.0);
        let theta = 0.7;
        let w = c.offload_window;
        let ell = vec![
            (theta * hi + (1.0 - theta) * lo) * w,
            (theta * lo + (1.0 - theta) * hi) * w,
        ];
        let part = OffloadPartition::new(ell.clone(), &p).unwrap();
        let lam = DualVector::new(vec![1.0, 1.0]).unwrap();
        let s = recover_timeshare(&lam, &part, &pw, &p, &c, 1e-6).unwrap();
        let delivered = s.delivered_bits(w);
        for k in 0..2 {
            assert!(
                (delivered[k] - ell[k]).abs() <= 2.0 * tol_bits(6e5),
                "{delivered:?} vs {ell:?}"
            );
        }
        let first = s
            .segments
            .iter()
            .find(|g| g.order.as_slice() == [0, 1])
            .unwrap();
        assert!((first.duration - theta * w).abs() < 1e-4 * w);
    }

    #[test]
    fn timeshare_infeasible_target_is_reported() {
        let (p, c) = twins();
        let pw = PowerVector::new(vec![0.5, 0.5]).unwrap();
        let (hi, _) = twin_rates(&c, 0.5, 2.0);
        let ell = OffloadPartition::new(vec![hi * 0.27, hi * 0.27], &p).unwrap();
        let lam = DualVector::new(vec![1.0, 1.0]).unwrap();
        let err = recover_timeshare(&lam, &ell, &pw, &p, &c, 1e-6).unwrap_err();
        assert!(matches!(err, Error::InfeasibleRecovery(_)));
    }

    fn brute_force_single(u: &UserProfile<f64>, c: &SystemConfig<f64>) -> f64 {
        (0..=1000)
            .map(|i| {
                let l = u.task_bits * i as f64 / 1000.0;
                let p = ((l / (c.offload_window * c.bandwidth)).exp2() - 1.0) / u.channel.gain();
                u.weight * (local_energy(u, u.task_bits - l, c.block_length) + p * c.offload_window)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_user_matches_brute_force() {
        let s = Scenario {
            users: 1,
            task_bits: 5e5,
            block_length: 0.1,
            ..Scenario::default()
        };
        for seed in 0..5 {
            let (p, c) = s.instance::<f64>(seed, 0).unwrap();
            let sol = solve_p1(&p, &c, &P1Settings::with_epsilon(1e-3)).unwrap();
            let oracle = brute_force_single(&p[0], &c);
            assert!(
                sol.weighted_total <= oracle * 1.005
                    && sol.weighted_total >= oracle * 0.995 - 1e-12
            );
        }
    }

    #[test]
    fn weight_scaling_scales_value_only() {
        let (p, c) = Scenario::default().instance::<f64>(2, 0).unwrap();
        let settings = P1Settings::with_epsilon(1e-5);
        let a = solve_p1(&p, &c, &settings).unwrap();
        let scaled: Vec<_> = p
            .iter()
            .cloned()
            .map(|mut u| {
                u.weight *= 3.0;
                u
            })
            .collect();
        let b = solve_p1(&scaled, &c, &settings).unwrap();
        assert!((b.weighted_total / a.weighted_total - 3.0).abs() < 3e-4);
        for (x, y) in a.partition.as_slice().iter().zip(b.partition.as_slice()) {
            assert!((x - y).abs() < 1e-2 * 6e5);
        }
    }

    #[test]
    fn partial_dominates_local_and_full_offload() {
        let s = Scenario::default();
        for seed in 0..4 {
            let (p, c) = s.instance::<f64>(seed, 0).unwrap();
            let settings = P1Settings::default();
            let sol = solve_p1(&p, &c, &settings).unwrap();
            let local: f64 = p
                .iter()
                .map(|u| u.weight * local_energy(u, u.task_bits, c.block_length))
                .sum();
            let bounds: Vec<_> = p.iter().map(Bounds::offload).collect();
            let full = solve_bounded(&p, &c, &bounds, &settings).unwrap();
            assert!(
                sol.weighted_total <= local.min(full.weighted_total) * (1.0 + settings.epsilon)
            );
            assert!(sol.report.lower_bound <= sol.weighted_total);
        }
    }

    #[test]
    fn pinned_users_keep_their_bits() {
        let (p, c) = Scenario::default().instance::<f64>(4, 0).unwrap();
        let bounds = vec![
            Bounds::local(&p[0]),
            Bounds::offload(&p[1]),
            Bounds::free(&p[2]),
            Bounds::free(&p[3]),
        ];
        let sol = solve_bounded(&p, &c, &bounds, &P1Settings::default()).unwrap();
        let ell = sol.partition.as_slice();
        assert_eq!(ell[0], 0.0);
        assert_eq!(ell[1], p[1].task_bits);
        assert_eq!(sol.powers.as_slice()[0], 0.0);
    }

    #[test]
    fn weightless_user() {
        let (mut p, c) = Scenario::default().instance::<f64>(6, 0).unwrap();
        p[2].weight = 0.0;
        let sol = solve_p1(&p, &c, &P1Settings::default()).unwrap();
        assert_eq!(sol.partition.as_slice()[2], 0.0);
        let mut bounds: Vec<_> = p.iter().map(Bounds::free).collect();
        bounds[2] = Bounds::offload(&p[2]);
        assert!(matches!(
            solve_bounded(&p, &c, &bounds, &P1Settings::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn solution_round_trips_through_json() {
        let (p, c) = Scenario::default().instance::<f64>(8, 0).unwrap();
        let sol = solve_p1(&p, &c, &P1Settings::default()).unwrap();
        let text = serde_json::to_string(&sol).unwrap();
        let back: OffloadSolution<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sol);
        back.verify(&p, &c).unwrap();
    }

    #[test]
    fn single_precision_solve() {
        let (p, c) = Scenario::default().instance::<f32>(0, 0).unwrap();
        let sol = solve_p1(&p, &c, &P1Settings::default()).unwrap();
        let (p64, c64) = Scenario::default().instance::<f64>(0, 0).unwrap();
        let ref64 = solve_p1(&p64, &c64, &P1Settings::default()).unwrap();
        assert!(((sol.weighted_total as f64) / ref64.weighted_total - 1.0).abs() < 0.03);
    }

    #[test]
    fn warm_start_agrees_with_cold_start_even_when_far_off() {
        let (p, c) = Scenario::default().instance::<f64>(2, 0).unwrap();
        let bounds: Vec<_> = p.iter().map(Bounds::offload).collect();
        let settings = P1Settings::with_epsilon(1e-3);
        let cold = solve_bounded(&p, &c, &bounds, &settings).unwrap();
        let near = solve_bounded_from(&p, &c, &bounds, &settings, &cold.report.dual).unwrap();
        let far = solve_bounded_from(
            &p,
            &c,
            &bounds,
            &settings,
            &DualVector::new(vec![1e3; 4]).unwrap(),
        )
        .unwrap();
        for sol in [&near, &far] {
            assert!((sol.weighted_total / cold.weighted_total - 1.0).abs() < 2e-3);
        }
        assert!(near.report.iterations <= cold.report.iterations);
        assert!(solve_bounded_from(&p, &c, &bounds, &settings, &DualVector::zeros(3)).is_err());
    }
}
