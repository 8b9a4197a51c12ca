//! The followers' game: per-prosumer objectives and best responses, the
//! Nikaido-Isoda residual, and the relaxation dynamics shared by the
//! expected-utility and prospect-theoretic solvers.

use crate::error::{Error, Result};
use crate::market::{cgt_value, ActionProfile, Scenario};
use crate::prospect::{classify_concavity, pt_value};
use crate::pt_solver::{best_response_pt, PtSearchSettings};

/// How a prosumer values its uncertain payoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    /// Maximizes expected payoff.
    Rational,
    /// Maximizes the expected framed value of its payoff.
    Prospect,
}

/// A scenario together with the behavior of every prosumer.
#[derive(Debug, Clone)]
pub struct FollowerGame<'a> {
    scenario: &'a Scenario,
    behaviors: Vec<Behavior>,
    search: PtSearchSettings,
}

impl<'a> FollowerGame<'a> {
    pub fn cgt(scenario: &'a Scenario) -> Self {
        FollowerGame {
            scenario,
            behaviors: vec![Behavior::Rational; scenario.len()],
            search: PtSearchSettings::default(),
        }
    }

    pub fn prospect(scenario: &'a Scenario, search: PtSearchSettings) -> Self {
        FollowerGame {
            scenario,
            behaviors: vec![Behavior::Prospect; scenario.len()],
            search,
        }
    }

    pub fn mixed(scenario: &'a Scenario, behaviors: Vec<Behavior>, search: PtSearchSettings) -> Result<Self> {
        if behaviors.len() != scenario.len() {
            return Err(Error::ProfileLength {
                expected: scenario.len(),
                got: behaviors.len(),
            });
        }
        Ok(FollowerGame {
            scenario,
            behaviors,
            search,
        })
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn behavior(&self, n: usize) -> Behavior {
        self.behaviors[n]
    }

    pub fn search(&self) -> &PtSearchSettings {
        &self.search
    }

    pub fn len(&self) -> usize {
        self.scenario.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenario.is_empty()
    }

    pub fn bounds(&self, n: usize) -> (f64, f64) {
        self.scenario.bounds(n)
    }

    /// Objective of prosumer `n` playing `own` against an aggregate `others_sum`.
    pub fn utility(&self, n: usize, own: f64, others_sum: f64) -> f64 {
        let p = &self.scenario.prosumers[n];
        let m = &self.scenario.market;
        match self.behaviors[n] {
            Behavior::Rational => cgt_value(own, others_sum, m, p),
            Behavior::Prospect => pt_value(own, others_sum, m, p),
        }
    }

    pub fn best_response(&self, n: usize, others_sum: f64) -> f64 {
        let p = &self.scenario.prosumers[n];
        let m = &self.scenario.market;
        match self.behaviors[n] {
            Behavior::Rational => crate::cgt::best_response_cgt(others_sum, m, self.bounds(n)),
            Behavior::Prospect => best_response_pt(self.bounds(n), others_sum, m, p, &self.search),
        }
    }

    /// Best response of every player to the current profile.
    pub fn best_responses(&self, profile: &ActionProfile) -> ActionProfile {
        let total = profile.total();
        ActionProfile(
            (0..self.len())
                .map(|n| self.best_response(n, total - profile[n]))
                .collect(),
        )
    }

    /// Gain of prosumer `n` from moving `from -> to` with the others fixed.
    pub fn deviation_gain(&self, n: usize, from: f64, to: f64, others_sum: f64) -> f64 {
        match self.behaviors[n] {
            Behavior::Rational => {
                // factored so that the gain is exactly zero when from == to
                let m = &self.scenario.market;
                (from - to) * (m.alpha * (from + to) + m.theta() + m.alpha * others_sum)
            }
            Behavior::Prospect => self.utility(n, to, others_sum) - self.utility(n, from, others_sum),
        }
    }

    /// Nikaido-Isoda function: total gain from every player unilaterally
    /// switching from `x_n` to `y_n`.
    pub fn nikaido_isoda(&self, x: &ActionProfile, y: &ActionProfile) -> f64 {
        let total = x.total();
        (0..self.len())
            .map(|n| self.deviation_gain(n, x[n], y[n], total - x[n]))
            .sum()
    }

    /// `Psi(x, best responses to x)`; zero exactly at an equilibrium.
    pub fn ni_residual(&self, x: &ActionProfile) -> f64 {
        self.nikaido_isoda(x, &self.best_responses(x))
    }

    /// Largest unilateral gain any player can get by moving to a point of a
    /// uniform `points`-point grid over its box.
    pub fn grid_epsilon(&self, x: &ActionProfile, points: usize) -> f64 {
        let total = x.total();
        let points = points.max(2);
        (0..self.len())
            .map(|n| {
                let (lo, hi) = self.bounds(n);
                let others = total - x[n];
                let here = self.utility(n, x[n], others);
                (0..points)
                    .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                    .map(|z| self.utility(n, z, others) - here)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Whether the concavity classifier vouches for every prospect player
    /// at `x`. Rational players are always concave.
    pub fn concavity_certified(&self, x: &ActionProfile) -> bool {
        let total = x.total();
        (0..self.len()).all(|n| match self.behaviors[n] {
            Behavior::Rational => true,
            Behavior::Prospect => classify_concavity(
                self.bounds(n),
                total - x[n],
                &self.scenario.market,
                &self.scenario.prosumers[n],
            )
            .concavity_guaranteed(),
        })
    }

    pub fn project(&self, x: &ActionProfile) -> ActionProfile {
        ActionProfile(
            x.0.iter()
                .enumerate()
                .map(|(n, &v)| {
                    let (lo, hi) = self.bounds(n);
                    v.clamp(lo, hi)
                })
                .collect(),
        )
    }
}

/// Starting point of an iterative solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialProfile {
    /// Middle of every feasible interval.
    #[default]
    Midpoint,
    /// Given profile, projected onto the feasible box.
    Given(ActionProfile),
}

impl InitialProfile {
    pub fn resolve(&self, game: &FollowerGame) -> Result<ActionProfile> {
        match self {
            InitialProfile::Midpoint => Ok(game.scenario().midpoint_profile()),
            InitialProfile::Given(x) => {
                game.scenario().check_profile(x)?;
                Ok(game.project(x))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSettings {
    pub max_iters: usize,
    /// Stop once the Nikaido-Isoda residual is at most this.
    pub tol: f64,
    pub initial: InitialProfile,
    /// Record every `trace_stride`-th residual.
    pub trace_stride: usize,
}

impl Default for RelaxationSettings {
    fn default() -> Self {
        RelaxationSettings {
            max_iters: 1_000_000,
            tol: 1e-8,
            initial: InitialProfile::Midpoint,
            trace_stride: 1,
        }
    }
}

impl RelaxationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        if self.trace_stride < 1 {
            return Err(Error::param("trace_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of an equilibrium computation.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub profile: ActionProfile,
    /// Updates performed (relaxation steps or full sweeps).
    pub iterations: usize,
    /// `(t, value)` pairs: the Nikaido-Isoda residual of `x(t)` for
    /// relaxation, the sup-norm change of sweep `t` for sequential play.
    pub residual_trace: Vec<(usize, f64)>,
    pub converged: bool,
    /// Nikaido-Isoda residual of the returned profile.
    pub residual: f64,
    /// Grid-certified equilibrium gap, when a certificate was computed.
    pub epsilon: Option<f64>,
    /// Visited profiles at which the concavity classifier could not vouch
    /// for every player (prospect relaxation only).
    pub unclassified_visits: Option<usize>,
}

/// Simultaneous relaxation `x(t+1) = (1 - 1/sqrt t) x(t) + (1/sqrt t) x^r(t)`
/// starting at `t = 1`.
pub(crate) fn relax(game: &FollowerGame, settings: &RelaxationSettings, track_concavity: bool) -> Result<EquilibriumReport> {
    settings.validate()?;
    let mut x = settings.initial.resolve(game)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut unclassified = 0;
    let mut t = 1usize;
    let (residual, converged) = loop {
        if track_concavity && !game.concavity_certified(&x) {
            unclassified += 1;
        }
        let br = game.best_responses(&x);
        let residual = game.nikaido_isoda(&x, &br);
        let done = residual <= settings.tol;
        if (t - 1).is_multiple_of(settings.trace_stride) || done || iterations == settings.max_iters {
            trace.push((t, residual));
        }
        if done {
            break (residual, true);
        }
        if iterations == settings.max_iters {
            break (residual, false);
        }
        let step = 1.0 / (t as f64).sqrt();
        for (xn, bn) in x.0.iter_mut().zip(&br.0) {
            *xn = (1.0 - step) * *xn + step * bn;
        }
        iterations += 1;
        t += 1;
    };
    Ok(EquilibriumReport {
        profile: x,
        iterations,
        residual_trace: trace,
        converged,
        residual,
        epsilon: converged.then_some(residual.max(0.0)),
        unclassified_visits: track_concavity.then_some(unclassified),
    })
}
