//! Prospect-theoretic valuation of the uncertain future payoff.
//!
//! A prosumer's realized payoff is affine in the future price,
//! `u(rho) = c * rho + d`, with `c` the energy left in storage and `d` the
//! deterministic trade revenue. Under a uniform future price the expected
//! framed value has a closed form with three branches depending on where
//! the reference point falls relative to `[c rho_min + d, c rho_max + d]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::{realized_payoff, ActionProfile, MarketParams, ProsumerParams, ProspectParams, Scenario};

/// Framed value of a monetary outcome `u` relative to the reference point.
pub fn framing_value(u: f64, p: &ProspectParams) -> f64 {
    shifted_value(u - p.reference, p)
}

/// Framing value of an outcome already expressed relative to the reference.
fn shifted_value(z: f64, p: &ProspectParams) -> f64 {
    if z > 0.0 {
        z.powf(p.beta_plus)
    } else if z < 0.0 {
        -p.lambda * (-z).powf(p.beta_minus)
    } else {
        0.0
    }
}

/// `(b + h)^p - b^p` for `b >= 0, h >= 0` without cancellation.
fn power_increment(b: f64, h: f64, p: f64) -> f64 {
    if b > 0.0 {
        b.powf(p) * (p * (h / b).ln_1p()).exp_m1()
    } else {
        h.powf(p)
    }
}

/// The affine pieces of a prosumer's random payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtUtilityTerms {
    /// Future stored energy, `W + Q + x_n - L`.
    pub c: f64,
    /// Current trade revenue, `-(rho_base + alpha * sum x) * x_n`.
    pub d: f64,
    /// Width of the future-price support.
    pub rho_d: f64,
}

/// Which closed-form branch applies at a given action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtBranch {
    /// Every outcome is a gain.
    Gains,
    /// The reference point splits the outcome range.
    Mixed,
    /// Every outcome is a loss.
    Losses,
    /// No energy left in storage, the payoff is certain.
    Deterministic,
}

impl PtUtilityTerms {
    pub fn new(own: f64, others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> Self {
        PtUtilityTerms {
            c: p.surplus() + own,
            d: -(m.rho_base + m.alpha * (own + others_sum)) * own,
            rho_d: m.spread(),
        }
    }

    pub fn branch(&self, m: &MarketParams, p: &ProspectParams) -> PtBranch {
        if self.c <= 0.0 {
            return PtBranch::Deterministic;
        }
        let lo = self.c * m.rho_min + self.d - p.reference;
        let hi = self.c * m.rho_max + self.d - p.reference;
        if lo >= 0.0 {
            PtBranch::Gains
        } else if hi <= 0.0 {
            PtBranch::Losses
        } else {
            PtBranch::Mixed
        }
    }

    /// Expected framed value over `rho_f ~ U[rho_min, rho_max]`.
    pub fn expected_value(&self, m: &MarketParams, p: &ProspectParams) -> f64 {
        let c = self.c;
        if c <= 0.0 {
            return framing_value(self.d, p);
        }
        let lo = c * m.rho_min + self.d - p.reference;
        let hi = c * m.rho_max + self.d - p.reference;
        let width = c * self.rho_d;
        let denom_plus = (p.beta_plus + 1.0) * width;
        let denom_minus = (p.beta_minus + 1.0) * width;
        if lo >= 0.0 {
            power_increment(lo, width, p.beta_plus + 1.0) / denom_plus
        } else if hi <= 0.0 {
            -p.lambda * power_increment(-hi, width, p.beta_minus + 1.0) / denom_minus
        } else {
            hi.powf(p.beta_plus + 1.0) / denom_plus - p.lambda * (-lo).powf(p.beta_minus + 1.0) / denom_minus
        }
    }
}

/// Closed-form prospect-theoretic expected utility of an own action given
/// the others' aggregate.
pub fn pt_value(own: f64, others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> f64 {
    PtUtilityTerms::new(own, others_sum, m, p).expected_value(m, &p.prospect)
}

/// Derivative of [`pt_value`] in the own action.
///
/// Integrating by parts over the price support gives
/// `F' = ((rho_max + d') V(u_max) - (rho_min + d') V(u_min) - rho_d F) / (rho_d c)`.
/// Returns `None` when `c` is too small for that quotient to be accurate.
pub fn pt_value_derivative(own: f64, others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> Option<f64> {
    let t = PtUtilityTerms::new(own, others_sum, m, p);
    if t.c <= 1e-9 * p.q_max {
        return None;
    }
    let d_prime = -(m.rho_base + m.alpha * others_sum) - 2.0 * m.alpha * own;
    let v_hi = framing_value(t.c * m.rho_max + t.d, &p.prospect);
    let v_lo = framing_value(t.c * m.rho_min + t.d, &p.prospect);
    let f = t.expected_value(m, &p.prospect);
    Some(((m.rho_max + d_prime) * v_hi - (m.rho_min + d_prime) * v_lo - t.rho_d * f) / (t.rho_d * t.c))
}

/// Prospect-theoretic expected utility of prosumer `n` at `profile`.
pub fn pt_expected_utility(n: usize, profile: &ActionProfile, scenario: &Scenario) -> f64 {
    pt_value(profile[n], profile.others_sum(n), &scenario.market, &scenario.prosumers[n])
}

/// Monte Carlo estimate of [`pt_expected_utility`]: `(mean, standard error)`.
///
/// Draws `rho_f` uniformly from a ChaCha8 stream seeded with `seed`.
pub fn pt_expected_utility_mc(n: usize, profile: &ActionProfile, scenario: &Scenario, samples: usize, seed: u64) -> (f64, f64) {
    let m = &scenario.market;
    let p = &scenario.prosumers[n];
    let own = profile[n];
    let others = profile.others_sum(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Welford keeps a constant sample stream bit-exact.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 1..=samples {
        let rho = rng.gen_range(m.rho_min..=m.rho_max);
        let v = framing_value(realized_payoff(own, others, m, p, rho), &p.prospect);
        let delta = v - mean;
        mean += delta / k as f64;
        m2 += delta * (v - mean);
    }
    if samples < 2 {
        return (mean, f64::INFINITY);
    }
    let var = m2 / (samples - 1) as f64;
    (mean, (var / samples as f64).sqrt())
}

/// Action values at which the reference point crosses the lowest or the
/// highest attainable payoff, i.e. where the closed form switches branch.
/// Returned sorted, restricted to the open interval `(lo, hi)`.
pub fn branch_breakpoints(bounds: (f64, f64), others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> Vec<f64> {
    let roots = PayoffRoots::new(others_sum, m, p);
    let mut pts: Vec<f64> = [roots.at_min, roots.at_max]
        .into_iter()
        .flatten()
        .flat_map(|(a, b)| [a, b])
        .filter(|&x| x > bounds.0 && x < bounds.1)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Roots of `c rho + d - R = 0` in the own action, at `rho_min` and `rho_max`.
#[derive(Debug, Clone, Copy)]
struct PayoffRoots {
    delta_min: f64,
    delta_max: f64,
    at_min: Option<(f64, f64)>,
    at_max: Option<(f64, f64)>,
}

impl PayoffRoots {
    fn new(others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> Self {
        let k = p.surplus();
        let r = p.prospect.reference;
        let a = m.alpha;
        let s_min = m.rho_min - m.rho_base - a * others_sum;
        let s_max = m.rho_max - m.rho_base - a * others_sum;
        let delta_min = s_min * s_min + 4.0 * a * (k * m.rho_min - r);
        let delta_max = s_max * s_max + 4.0 * a * (k * m.rho_max - r);
        let roots = |s: f64, delta: f64| {
            (delta >= 0.0).then(|| {
                let sq = delta.sqrt();
                ((s - sq) / (2.0 * a), (s + sq) / (2.0 * a))
            })
        };
        PayoffRoots {
            delta_min,
            delta_max,
            at_min: roots(s_min, delta_min),
            at_max: roots(s_max, delta_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcavityCase {
    /// All outcomes are gains over the whole box.
    Case1,
    /// All outcomes are losses over the whole box.
    Case2,
    /// Outcomes straddle the reference point over the whole box and the
    /// mixed branch is concave there.
    Case3,
    Unclassified,
}

/// Concavity classification of one prosumer's PT objective on its box.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityCaseReport {
    pub case: ConcavityCase,
    pub delta1: f64,
    pub delta2: f64,
    /// Smaller and larger root where `R = c rho_min + d`.
    pub roots_min: Option<(f64, f64)>,
    /// Smaller and larger root where `R = c rho_max + d`.
    pub roots_max: Option<(f64, f64)>,
    pub k: f64,
    pub m1: f64,
    pub a1: f64,
    pub b: f64,
    /// `1 - b / a1`; `None` when `a1 == 0` (no loss aversion), where the
    /// bound is vacuous.
    pub case3_threshold: Option<f64>,
    /// Largest value of the exact mixed-branch second derivative on the box.
    pub mixed_curvature_max: f64,
    /// `lambda = 1` and linear exponents: the objective is the expected
    /// utility shifted by `R`, concave whatever the case tests say.
    pub affine_reduction: bool,
    pub note: Option<String>,
}

impl ConcavityCaseReport {
    pub fn concavity_guaranteed(&self) -> bool {
        self.case != ConcavityCase::Unclassified || self.affine_reduction
    }
}

/// Sufficient concavity conditions for the PT objective with linear
/// exponents (`beta+ = beta- = 1`).
pub fn classify_concavity(bounds: (f64, f64), others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> ConcavityCaseReport {
    let (x_min, x_max) = bounds;
    let a = m.alpha;
    let lambda = p.prospect.lambda;
    let k = p.surplus();
    let roots = PayoffRoots::new(others_sum, m, p);

    let m1 = 64.0 * k;
    let a1 = 48.0 * a * a * (1.0 - lambda);
    let b = (176.0 * a * a * k + 32.0 * a * (m.rho_base - m.rho_max + a * others_sum)) * (1.0 - lambda);
    let case3_threshold = (a1 != 0.0).then(|| 1.0 - b / a1);
    let mixed_curvature_max = mixed_curvature_max(bounds, others_sum, m, p);

    let mut report = ConcavityCaseReport {
        case: ConcavityCase::Unclassified,
        delta1: roots.delta_min,
        delta2: roots.delta_max,
        roots_min: roots.at_min,
        roots_max: roots.at_max,
        k,
        m1,
        a1,
        b,
        case3_threshold,
        mixed_curvature_max,
        affine_reduction: false,
        note: None,
    };

    if !p.prospect.is_linear() {
        report.note = Some("classifier requires beta_plus = beta_minus = 1".into());
        return report;
    }
    if lambda == 1.0 {
        report.affine_reduction = true;
        report.note = Some("lambda = 1: objective equals expected utility minus R, concave".into());
    }

    let case1 = matches!(roots.at_min, Some((r1, r2)) if roots.delta_min > 0.0 && r1 < x_min && x_max < r2);
    let case2 = roots.delta_max < 0.0
        || matches!(roots.at_max, Some((r3, r4)) if x_max < r3 || r4 < x_min);
    let inside_max = matches!(roots.at_max, Some((r3, r4)) if roots.delta_max > 0.0 && r3 < x_min && x_max < r4);
    let outside_min = roots.delta_min < 0.0
        || matches!(roots.at_min, Some((r1, r2)) if x_max < r1 || r2 < x_min);
    let threshold_ok = case3_threshold.is_none_or(|t| x_max < t);

    report.case = if case1 {
        ConcavityCase::Case1
    } else if case2 {
        ConcavityCase::Case2
    } else if inside_max && outside_min && threshold_ok && mixed_curvature_max <= 0.0 {
        ConcavityCase::Case3
    } else {
        ConcavityCase::Unclassified
    };
    report
}

/// Maximum over the box of the mixed-branch second derivative (linear
/// exponents). In terms of stored energy `c` it is
/// `[6a^2(1-l)c - 4a(g_max - l g_min) + 2e^2(1-l)/c^3] / (2 rho_d)`.
fn mixed_curvature_max(bounds: (f64, f64), others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> f64 {
    let a = m.alpha;
    let lambda = p.prospect.lambda;
    let k = p.surplus();
    let shift = m.rho_base + a * others_sum;
    let g_max = m.rho_max - shift + 2.0 * a * k;
    let g_min = m.rho_min - shift + 2.0 * a * k;
    let e = shift * k - a * k * k - p.prospect.reference;
    let c_lo = (bounds.0 + k).max(0.0);
    let c_hi = bounds.1 + k;
    let h = |c: f64| {
        let curv_term = if c > 0.0 {
            2.0 * e * e * (1.0 - lambda) / (c * c * c)
        } else if e == 0.0 || lambda == 1.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        (6.0 * a * a * (1.0 - lambda) * c - 4.0 * a * (g_max - lambda * g_min) + curv_term) / (2.0 * m.spread())
    };
    if lambda == 1.0 {
        return h(c_hi).max(h(c_lo));
    }
    // -A c - E / c^3 peaks at c = (3E/A)^(1/4)
    let a_coef = 6.0 * a * a * (lambda - 1.0);
    let e_coef = 2.0 * e * e * (lambda - 1.0);
    let c_star = (3.0 * e_coef / a_coef).powf(0.25).clamp(c_lo, c_hi);
    h(c_star).max(h(c_hi))
}
