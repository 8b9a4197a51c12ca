//! Domain types and the raw economics of the trading game.
//!
//! Energies are in kWh, money in $, prices in $/kWh. A positive action
//! `x_n` means prosumer `n` buys energy from the company, a negative one
//! means it sells.

use crate::error::{Error, Result};

/// Behavioral constants of the framing value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProspectParams {
    /// Loss-aversion multiplier, at least 1.
    pub lambda: f64,
    /// Diminishing-sensitivity exponent for gains, in (0, 1].
    pub beta_plus: f64,
    /// Diminishing-sensitivity exponent for losses, in (0, 1].
    pub beta_minus: f64,
    /// Reference payoff separating gains from losses ($).
    pub reference: f64,
}

impl ProspectParams {
    pub fn new(lambda: f64, beta_plus: f64, beta_minus: f64, reference: f64) -> Result<Self> {
        let p = ProspectParams {
            lambda,
            beta_plus,
            beta_minus,
            reference,
        };
        p.validate()?;
        Ok(p)
    }

    /// Expected-utility behavior shifted by the reference point.
    pub fn neutral(reference: f64) -> Self {
        ProspectParams {
            lambda: 1.0,
            beta_plus: 1.0,
            beta_minus: 1.0,
            reference,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 1.0) || !self.lambda.is_finite() {
            return Err(Error::param("lambda", format!("must be >= 1, got {}", self.lambda)));
        }
        for (name, b) in [("beta_plus", self.beta_plus), ("beta_minus", self.beta_minus)] {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1], got {b}")));
            }
        }
        if !self.reference.is_finite() {
            return Err(Error::param("r", "reference point must be finite"));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.beta_plus == 1.0 && self.beta_minus == 1.0
    }
}

impl Default for ProspectParams {
    fn default() -> Self {
        ProspectParams {
            lambda: 2.25,
            beta_plus: 0.88,
            beta_minus: 0.88,
            reference: 1.0,
        }
    }
}

/// Physical and behavioral constants of one prosumer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProsumerParams {
    /// PV production over the period.
    pub w: f64,
    /// Energy initially in storage.
    pub q: f64,
    /// Load that must be served.
    pub l: f64,
    /// Storage capacity.
    pub q_max: f64,
    pub prospect: ProspectParams,
}

impl ProsumerParams {
    pub fn new(w: f64, q: f64, l: f64, q_max: f64, prospect: ProspectParams) -> Result<Self> {
        let p = ProsumerParams {
            w,
            q,
            l,
            q_max,
            prospect,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w", self.w), ("q", self.q), ("l", self.l)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be a finite value >= 0, got {v}")));
            }
        }
        if !(self.q_max > 0.0) || !self.q_max.is_finite() {
            return Err(Error::param("q_max", format!("must be > 0, got {}", self.q_max)));
        }
        if self.q > self.q_max {
            return Err(Error::param(
                "q",
                format!("initial storage {} exceeds capacity {}", self.q, self.q_max),
            ));
        }
        self.prospect.validate()
    }

    /// Net energy left over without trading, `W + Q - L`.
    pub fn surplus(&self) -> f64 {
        self.w + self.q - self.l
    }
}

/// Leader-side and market constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Price slope per kWh of aggregate demand.
    pub alpha: f64,
    pub rho_base: f64,
    /// Support of the uniform future price.
    pub rho_min: f64,
    pub rho_max: f64,
    /// Market clearing price paid or received by the company.
    pub rho_mar: f64,
    /// Admissible interval for the leader's choice of `rho_base`.
    pub leader_lo: f64,
    pub leader_hi: f64,
}

impl MarketParams {
    /// Market with the leader interval set to `[rho_min, rho_max]`.
    pub fn new(alpha: f64, rho_base: f64, rho_min: f64, rho_max: f64, rho_mar: f64) -> Result<Self> {
        let m = MarketParams {
            alpha,
            rho_base,
            rho_min,
            rho_max,
            rho_mar,
            leader_lo: rho_min,
            leader_hi: rho_max,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::param("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if !(self.rho_min < self.rho_max) {
            return Err(Error::param(
                "rho_min",
                format!("rho_min ({}) must be below rho_max ({})", self.rho_min, self.rho_max),
            ));
        }
        if !(self.leader_lo <= self.leader_hi) {
            return Err(Error::param(
                "leader_lo",
                format!("leader interval [{}, {}] is empty", self.leader_lo, self.leader_hi),
            ));
        }
        for (name, v) in [
            ("rho_base", self.rho_base),
            ("rho_mar", self.rho_mar),
            ("leader_lo", self.leader_lo),
            ("leader_hi", self.leader_hi),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn with_rho_base(&self, rho_base: f64) -> Self {
        MarketParams { rho_base, ..*self }
    }

    /// Mean of the future price, `(rho_max + rho_min) / 2`.
    pub fn mid_price(&self) -> f64 {
        0.5 * (self.rho_max + self.rho_min)
    }

    /// Width of the future-price support.
    pub fn spread(&self) -> f64 {
        self.rho_max - self.rho_min
    }

    /// Offset of the base price from the expected future price.
    pub fn theta(&self) -> f64 {
        self.rho_base - self.mid_price()
    }
}

/// Declared energy amounts, one entry per prosumer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile(pub Vec<f64>);

impl ActionProfile {
    pub fn new(x: Vec<f64>) -> Self {
        ActionProfile(x)
    }

    pub fn zeros(n: usize) -> Self {
        ActionProfile(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Aggregate action of everyone except `n`.
    pub fn others_sum(&self, n: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != n)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn sup_distance(&self, other: &ActionProfile) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for ActionProfile {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub prosumers: Vec<ProsumerParams>,
    pub market: MarketParams,
}

impl Scenario {
    pub fn new(prosumers: Vec<ProsumerParams>, market: MarketParams) -> Result<Self> {
        if prosumers.is_empty() {
            return Err(Error::param("prosumers", "scenario needs at least one prosumer"));
        }
        for p in &prosumers {
            p.validate()?;
        }
        market.validate()?;
        Ok(Scenario { prosumers, market })
    }

    pub fn len(&self) -> usize {
        self.prosumers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prosumers.is_empty()
    }

    pub fn bounds(&self, n: usize) -> (f64, f64) {
        feasible_bounds(&self.prosumers[n])
    }

    pub fn with_rho_base(&self, rho_base: f64) -> Self {
        Scenario {
            prosumers: self.prosumers.clone(),
            market: self.market.with_rho_base(rho_base),
        }
    }

    /// Midpoint of every prosumer's feasible interval.
    pub fn midpoint_profile(&self) -> ActionProfile {
        ActionProfile(
            (0..self.len())
                .map(|n| {
                    let (lo, hi) = self.bounds(n);
                    0.5 * (lo + hi)
                })
                .collect(),
        )
    }

    pub fn check_profile(&self, profile: &ActionProfile) -> Result<()> {
        if profile.len() != self.len() {
            return Err(Error::ProfileLength {
                expected: self.len(),
                got: profile.len(),
            });
        }
        Ok(())
    }
}

/// Feasible trade interval `[L - W - Q, L - W - Q + Q_max]`.
pub fn feasible_bounds(p: &ProsumerParams) -> (f64, f64) {
    let x_min = p.l - p.w - p.q;
    (x_min, x_min + p.q_max)
}

/// Current unit price; deliberately not clamped to `[rho_min, rho_max]`.
pub fn unit_price(profile: &ActionProfile, m: &MarketParams) -> f64 {
    m.rho_base + m.alpha * profile.total()
}

/// Payoff of prosumer `n` once the future price `rho_f` is revealed.
pub fn realized_utility(n: usize, profile: &ActionProfile, m: &MarketParams, p: &ProsumerParams, rho_f: f64) -> f64 {
    realized_payoff(profile[n], profile.others_sum(n), m, p, rho_f)
}

pub(crate) fn realized_payoff(own: f64, others_sum: f64, m: &MarketParams, p: &ProsumerParams, rho_f: f64) -> f64 {
    let price = m.rho_base + m.alpha * (own + others_sum);
    -price * own + (p.surplus() + own) * rho_f
}

/// Expected payoff under the uniform future price.
pub fn cgt_expected_utility(n: usize, profile: &ActionProfile, m: &MarketParams, p: &ProsumerParams) -> f64 {
    cgt_value(profile[n], profile.others_sum(n), m, p)
}

/// `-a x^2 - (theta + a xbar) x + delta` as a function of the own action.
pub fn cgt_value(own: f64, others_sum: f64, m: &MarketParams, p: &ProsumerParams) -> f64 {
    let delta = p.surplus() * m.mid_price();
    -m.alpha * own * own - (m.theta() + m.alpha * others_sum) * own + delta
}

/// Company profit: resale revenue minus the cost at the clearing price.
pub fn company_utility(profile: &ActionProfile, m: &MarketParams) -> f64 {
    let total = profile.total();
    (m.rho_base + m.alpha * total) * total - m.rho_mar * total
}
