//! Reference schemes: local computing only, full offloading, and TDMA
//! offloading with partial or binary decisions.

use serde::{Deserialize, Serialize};

use crate::binary::{
    bnb_with, exhaustive_with, relaxed_decisions, BinarySettings, BinarySolution, DecisionSets,
    Relaxed, SubproblemSolver,
};
use crate::error::{domain, Error, Result};
use crate::model::{check_profiles, SystemConfig, UserProfile};
use crate::partial::{local_energy, solve_bounded, tol_bits, Bounds, OffloadSolution, P1Settings};
use crate::scalar::Scalar;

/// Relative accuracy of the slot-time budget in the TDMA solver.
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LocalOnly<T> {
    pub weighted_total: T,
    /// Unweighted local energy of each user (J).
    pub per_user: Vec<T>,
}

/// Every user computes its whole task on the device.
pub fn local_only<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
) -> LocalOnly<T> {
    let per_user: Vec<T> = profiles
        .iter()
        .map(|u| local_energy(u, u.task_bits, config.block_length))
        .collect();
    let weighted_total = profiles
        .iter()
        .zip(&per_user)
        .map(|(u, e)| u.weight * *e)
        .sum();
    LocalOnly {
        weighted_total,
        per_user,
    }
}

/// Every user offloads its whole task over the NOMA uplink.
pub fn full_offload<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    settings: &P1Settings<T>,
) -> Result<OffloadSolution<T>> {
    let bounds: Vec<Bounds<T>> = profiles.iter().map(Bounds::offload).collect();
    solve_bounded(profiles, config, &bounds, settings)
}

/// TDMA offloading: user `k` transmits alone for `τ_k` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OmaSolution<T> {
    pub slot_durations: Vec<T>,
    /// Offloaded bits `ℓ_k`.
    pub offloaded: Vec<T>,
    /// Transmit power during the user's own slot (W).
    pub powers: Vec<T>,
    /// `p_k τ_k` (J).
    pub per_user_tx_energy: Vec<T>,
    pub per_user_local_energy: Vec<T>,
    pub weighted_total: T,
    /// Price of slot time at the optimum.
    pub multiplier: T,
    /// Dual value at `multiplier`, a certified lower bound.
    pub lower_bound: T,
}

impl<T: Scalar> OmaSolution<T> {
    /// Checks the time budget and that every slot carries its bits.
    pub fn verify(&self, profiles: &[UserProfile<T>], config: &SystemConfig<T>) -> Result<()> {
        let total: T = self.slot_durations.iter().copied().sum();
        if total > config.offload_window * (T::one() + T::lit(1e-9)) {
            return Err(Error::InfeasibleRecovery(
                "slots exceed the offloading window".into(),
            ));
        }
        for (k, u) in profiles.iter().enumerate() {
            let tau = self.slot_durations[k];
            let cap =
                tau * config.bandwidth * (T::one() + self.powers[k] * u.channel.gain()).log2();
            if !(tau >= T::zero()) || self.offloaded[k] > cap + tol_bits(u.task_bits) {
                return Err(Error::InfeasibleRecovery(format!(
                    "user {k}: slot carries {cap} of {} bits",
                    self.offloaded[k]
                )));
            }
        }
        Ok(())
    }
}

/// `x > 0` with `(x − 1)eˣ + 1 = y`, the optimal spectral efficiency (nats)
/// when slot time costs `y` in units of `α/g`.
fn efficiency<T: Scalar>(y: T) -> T {
    let f = |x: T| {
        if x < T::lit(1e-3) {
            // Series of x eˣ − (eˣ − 1), avoiding cancellation.
            x * x * (T::lit(0.5) + x * (T::lit(1.0 / 3.0) + x / T::lit(8.0)))
        } else {
            x * x.exp() - x.exp_m1()
        }
    };
    if !(y > T::zero()) {
        return T::zero();
    }
    // f is convex and increasing, so Newton from any point right of the
    // root descends monotonically onto it.
    let mut x = [(T::lit(2.0) * y).sqrt(), y.ln() + T::one()]
        .into_iter()
        .filter(|&x| x > T::zero() && f(x) >= y)
        .fold(T::infinity(), T::min);
    if !x.is_finite() {
        x = T::one();
        while f(x) < y {
            x = x * T::lit(2.0);
        }
    }
    for _ in 0..200 {
        let fx = f(x) - y;
        if fx <= T::zero() {
            break;
        }
        let step = fx / (x * x.exp());
        x = x - step;
        if step <= T::lit(4.0) * T::epsilon() * x {
            break;
        }
    }
    x
}

/// Per-user optimum for slot price `ν`.
struct UserChoice<T> {
    bits: T,
    tau: T,
    power: T,
    /// `α a (L − ℓ)³ + σ ℓ`, the user's term of the dual function.
    dual_term: T,
}

fn choose<T: Scalar>(
    u: &UserProfile<T>,
    b: Bounds<T>,
    config: &SystemConfig<T>,
    nu: T,
) -> UserChoice<T> {
    let g = u.channel.gain();
    let bw = config.bandwidth;
    let cubic = u.weight * u.cubic_coefficient() / (config.block_length * config.block_length);
    let local_cost = |l: T| cubic * (u.task_bits - l).powi(3);
    if b.hi == T::zero() || u.weight == T::zero() {
        return UserChoice {
            bits: T::zero(),
            tau: T::zero(),
            power: T::zero(),
            dual_term: local_cost(T::zero()),
        };
    }
    let x = efficiency(nu * g / u.weight);
    // Marginal slot-plus-energy cost per offloaded bit.
    let sigma = T::ln2() / bw * u.weight * x.exp() / g;
    let bits = if cubic > T::zero() {
        b.clamp(u.task_bits - (sigma / (T::lit(3.0) * cubic)).sqrt())
    } else {
        b.lo
    };
    let (tau, power) = if bits > T::zero() {
        if x > T::zero() {
            (bits * T::ln2() / (bw * x), x.exp_m1() / g)
        } else {
            (T::infinity(), T::zero())
        }
    } else {
        (T::zero(), T::zero())
    };
    UserChoice {
        bits,
        tau,
        power,
        dual_term: local_cost(bits) + sigma * bits,
    }
}

/// TDMA offloading with per-user bounds on the offloaded bits.
pub fn oma_bounded<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    bounds: &[Bounds<T>],
) -> Result<OmaSolution<T>> {
    check_profiles(profiles, config)?;
    if bounds.len() != profiles.len() {
        return Err(Error::Dimension {
            expected: profiles.len(),
            found: bounds.len(),
        });
    }
    for (k, (u, b)) in profiles.iter().zip(bounds).enumerate() {
        if !(b.lo >= T::zero() && b.lo <= b.hi && b.hi <= u.task_bits) {
            return Err(domain(format!(
                "user {k}: invalid offload bounds [{}, {}]",
                b.lo, b.hi
            )));
        }
        if u.weight == T::zero() && b.lo > T::zero() {
            return Err(domain(format!(
                "user {k} has zero energy weight but is required to offload"
            )));
        }
    }
    let window = config.offload_window;
    let pick = |nu: T| -> Vec<UserChoice<T>> {
        profiles
            .iter()
            .zip(bounds)
            .map(|(u, b)| choose(u, *b, config, nu))
            .collect()
    };
    let used = |c: &[UserChoice<T>]| -> T { c.iter().map(|c| c.tau).sum() };

    let mut nu = T::zero();
    let mut choice = pick(nu);
    if used(&choice) > window {
        // Bracket the slot price on a log scale, then bisect.
        let scale = profiles
            .iter()
            .filter(|u| u.weight > T::zero())
            .map(|u| u.weight / u.channel.gain())
            .fold(T::zero(), T::max);
        let mut hi = scale.max(T::min_positive_value());
        while used(&pick(hi)) > window {
            hi = hi * T::lit(16.0);
            if !hi.is_finite() {
                return Err(Error::NumericalFailure {
                    context: "slot price diverged".into(),
                    iteration: 0,
                    trace: Vec::new(),
                });
            }
        }
        let mut lo = hi;
        while used(&pick(lo)) <= window && lo > T::min_positive_value() {
            lo = lo / T::lit(16.0);
        }
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if used(&pick(mid)) > window {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - T::one() <= T::lit(1e-15).max(T::epsilon()) {
                break;
            }
            let fill = used(&pick(hi));
            if fill >= window * (T::one() - T::lit(TIME_TOLERANCE)) {
                break;
            }
        }
        nu = hi;
        choice = pick(nu);
    }
    let lower_bound = choice.iter().map(|c| c.dual_term).sum::<T>() - nu * window;
    let mut tx = Vec::new();
    let mut local = Vec::new();
    for (u, c) in profiles.iter().zip(&choice) {
        tx.push(c.power * c.tau);
        local.push(local_energy(u, u.task_bits - c.bits, config.block_length));
    }
    let weighted_total = profiles
        .iter()
        .enumerate()
        .map(|(k, u)| u.weight * (tx[k] + local[k]))
        .sum();
    let sol = OmaSolution {
        slot_durations: choice.iter().map(|c| c.tau).collect(),
        offloaded: choice.iter().map(|c| c.bits).collect(),
        powers: choice.iter().map(|c| c.power).collect(),
        per_user_tx_energy: tx,
        per_user_local_energy: local,
        weighted_total,
        multiplier: nu,
        lower_bound: lower_bound.min(weighted_total),
    };
    sol.verify(profiles, config)?;
    Ok(sol)
}

/// TDMA offloading with partial task splits.
pub fn oma_partial<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
) -> Result<OmaSolution<T>> {
    let bounds: Vec<Bounds<T>> = profiles.iter().map(Bounds::free).collect();
    oma_bounded(profiles, config, &bounds)
}

/// TDMA subproblems for the binary search methods.
#[derive(Debug, Clone)]
pub struct OmaSubproblem<'a, T> {
    pub profiles: &'a [UserProfile<T>],
    pub config: &'a SystemConfig<T>,
}

impl<T: Scalar> SubproblemSolver<T> for OmaSubproblem<'_, T> {
    type Solution = OmaSolution<T>;

    fn profiles(&self) -> &[UserProfile<T>] {
        self.profiles
    }

    fn solve_fixed(&self, sets: &DecisionSets) -> Result<(T, OmaSolution<T>)> {
        if !sets.is_full(self.profiles.len()) {
            return Err(domain("fixed subproblem needs every user locked"));
        }
        let sol = oma_bounded(self.profiles, self.config, &sets.bounds(self.profiles))?;
        Ok((sol.weighted_total, sol))
    }

    fn solve_relaxed(&self, sets: &DecisionSets) -> Result<Relaxed<T, OmaSolution<T>>> {
        let sol = oma_bounded(self.profiles, self.config, &sets.bounds(self.profiles))?;
        Ok(Relaxed {
            value: sol.weighted_total,
            lower_bound: sol.lower_bound,
            xi: relaxed_decisions(self.profiles, &sol.offloaded),
            solution: sol,
        })
    }
}

/// TDMA binary offloading by branch-and-bound.
pub fn oma_binary<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    settings: &BinarySettings<T>,
) -> Result<BinarySolution<T, OmaSolution<T>>> {
    check_profiles(profiles, config)?;
    bnb_with(&OmaSubproblem { profiles, config }, settings)
}

/// TDMA binary offloading by enumerating every offloading set.
pub fn oma_exhaustive<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    max_users: usize,
) -> Result<BinarySolution<T, OmaSolution<T>>> {
    check_profiles(profiles, config)?;
    exhaustive_with(&OmaSubproblem { profiles, config }, max_users)
}
