//! Leader optimization by exhaustive search over a price grid.
//!
//! The company announces every grid value of `rho_base` in turn, the
//! prosumers settle on an equilibrium for each, and the company keeps the
//! most profitable announcement. With step `epsilon` this yields an
//! `epsilon`-Stackelberg equilibrium.

use rayon::prelude::*;

use crate::cgt::relaxation_solve;
use crate::error::{Error, Result};
use crate::game::{EquilibriumReport, FollowerGame, InitialProfile, RelaxationSettings};
use crate::market::{company_utility, ActionProfile, Scenario};
use crate::pt_solver::{relaxation_solve_pt, sequential_best_response, sequential_solve, PtSearchSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FollowerModel {
    Cgt,
    Pt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FollowerSolver {
    Relaxation,
    Sequential,
}

/// How the followers' equilibrium is computed at each announced price.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerSettings {
    pub model: FollowerModel,
    pub solver: FollowerSolver,
    pub relaxation: RelaxationSettings,
    pub search: PtSearchSettings,
}

impl FollowerSettings {
    /// Expected-utility followers solved by relaxation.
    pub fn cgt() -> Self {
        FollowerSettings {
            model: FollowerModel::Cgt,
            solver: FollowerSolver::Relaxation,
            relaxation: RelaxationSettings::default(),
            search: PtSearchSettings::default(),
        }
    }

    /// Prospect-theoretic followers solved by sequential best response.
    pub fn pt() -> Self {
        FollowerSettings {
            model: FollowerModel::Pt,
            solver: FollowerSolver::Sequential,
            ..Self::cgt()
        }
    }

    pub fn game<'a>(&self, scenario: &'a Scenario) -> FollowerGame<'a> {
        match self.model {
            FollowerModel::Cgt => FollowerGame::cgt(scenario),
            FollowerModel::Pt => FollowerGame::prospect(scenario, self.search.clone()),
        }
    }
}

/// Solves the followers' game for the scenario's current `rho_base`.
pub fn solve_followers(scenario: &Scenario, settings: &FollowerSettings) -> Result<EquilibriumReport> {
    match (settings.model, settings.solver) {
        (FollowerModel::Cgt, FollowerSolver::Relaxation) => relaxation_solve(scenario, &settings.relaxation),
        (FollowerModel::Pt, FollowerSolver::Relaxation) => relaxation_solve_pt(scenario, &settings.relaxation, &settings.search),
        (FollowerModel::Pt, FollowerSolver::Sequential) => sequential_best_response(scenario, &settings.search),
        (FollowerModel::Cgt, FollowerSolver::Sequential) => {
            sequential_solve(&FollowerGame::cgt(scenario), &settings.search, &InitialProfile::Midpoint)
        }
    }
}

/// Largest gain any follower gets by switching to its best response.
pub fn follower_gap(game: &FollowerGame, profile: &ActionProfile) -> f64 {
    let total = profile.total();
    (0..game.len())
        .map(|n| {
            let others = total - profile[n];
            game.deviation_gain(n, profile[n], game.best_response(n, others), others)
        })
        .fold(0.0, f64::max)
}

/// Grid values `lo, lo + eps, ...`, closed with `hi`.
pub fn leader_grid(lo: f64, hi: f64, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::param("epsilon", format!("must be > 0, got {epsilon}")));
    }
    if !(lo <= hi) {
        return Err(Error::param("leader_lo", format!("leader interval [{lo}, {hi}] is empty")));
    }
    let steps = ((hi - lo) / epsilon + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| lo + k as f64 * epsilon).collect();
    let last = *grid.last().expect("grid holds lo");
    if hi - last > 1e-9 * epsilon {
        grid.push(hi);
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub rho_base: f64,
    pub profit: f64,
    pub follower_profile: ActionProfile,
    /// Largest follower gain from deviating at this price.
    pub follower_epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergResult {
    pub rho_star: f64,
    pub follower_profile: ActionProfile,
    pub leader_profit: f64,
    pub grid: Vec<GridPoint>,
    pub epsilon: f64,
    /// Follower solver iterations summed over the grid.
    pub total_follower_iterations: usize,
}

impl StackelbergResult {
    /// Grid points whose follower solve did not converge.
    pub fn flagged(&self) -> impl Iterator<Item = &GridPoint> {
        self.grid.iter().filter(|g| !g.converged)
    }
}

/// Announces every grid price, solves the followers at each, and returns the
/// most profitable converged point (smallest price on ties). Grid points are
/// solved in parallel on the current rayon pool.
pub fn epsilon_se_grid(scenario: &Scenario, epsilon: f64, follower: &FollowerSettings) -> Result<StackelbergResult> {
    let m = &scenario.market;
    let prices = leader_grid(m.leader_lo, m.leader_hi, epsilon)?;
    let grid = prices
        .par_iter()
        .map(|&rho| {
            let sc = scenario.with_rho_base(rho);
            let rep = solve_followers(&sc, follower)?;
            let gap = follower_gap(&follower.game(&sc), &rep.profile);
            Ok(GridPoint {
                rho_base: rho,
                profit: company_utility(&rep.profile, &sc.market),
                follower_epsilon: gap,
                converged: rep.converged,
                iterations: rep.iterations,
                follower_profile: rep.profile,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<&GridPoint> = None;
    for g in grid.iter().filter(|g| g.converged) {
        if best.is_none_or(|b| g.profit > b.profit) {
            best = Some(g);
        }
    }
    let best = best.ok_or(Error::NoConvergedGridPoint)?.clone();
    Ok(StackelbergResult {
        rho_star: best.rho_base,
        follower_profile: best.follower_profile,
        leader_profit: best.profit,
        total_follower_iterations: grid.iter().map(|g| g.iterations).sum(),
        grid,
        epsilon,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeVerification {
    /// Largest follower gain from deviating at `rho_star`.
    pub follower_gain: f64,
    /// Best grid profit minus the profit realized at `rho_star`.
    pub leader_regret: f64,
    pub epsilon: f64,
}

impl SeVerification {
    pub fn followers_ok(&self) -> bool {
        self.follower_gain <= self.epsilon
    }

    pub fn leader_ok(&self) -> bool {
        self.leader_regret <= self.epsilon
    }

    pub fn passed(&self) -> bool {
        self.followers_ok() && self.leader_ok()
    }
}

/// Checks both equilibrium conditions at grid resolution: the followers'
/// profile at `rho_star` is an `epsilon`-equilibrium, and no grid price
/// earns the leader more than `epsilon` above its realized profit.
pub fn verify_se(result: &StackelbergResult, scenario: &Scenario, follower: &FollowerSettings, epsilon: f64) -> Result<SeVerification> {
    let sc = scenario.with_rho_base(result.rho_star);
    sc.check_profile(&result.follower_profile)?;
    let follower_gain = follower_gap(&follower.game(&sc), &result.follower_profile);
    let realized = company_utility(&result.follower_profile, &sc.market);
    let best = result
        .grid
        .iter()
        .filter(|g| g.converged)
        .map(|g| g.profit)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SeVerification {
        follower_gain,
        leader_regret: (best - realized).max(0.0),
        epsilon,
    })
}
