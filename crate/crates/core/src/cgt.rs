//! Follower equilibrium under expected-utility behavior.
//!
//! Each prosumer's expected utility is a strictly concave quadratic in its
//! own action, so best responses are clamped stationary points and the
//! game has a unique pure equilibrium.

use crate::error::{Error, Result};
use crate::game::{relax, EquilibriumReport, FollowerGame, RelaxationSettings};
use crate::market::{ActionProfile, MarketParams, Scenario};

/// `clamp(-theta / (2 alpha) - others_sum / 2, x_min, x_max)`.
pub fn best_response_cgt(others_sum: f64, m: &MarketParams, bounds: (f64, f64)) -> f64 {
    let stationary = -m.theta() / (2.0 * m.alpha) - others_sum / 2.0;
    stationary.clamp(bounds.0, bounds.1)
}

/// Componentwise projection onto the product of feasible intervals.
pub fn project_onto_box(profile: &ActionProfile, scenario: &Scenario) -> ActionProfile {
    FollowerGame::cgt(scenario).project(profile)
}

/// Nikaido-Isoda function of the expected-utility game,
/// `sum_n (x_n - y_n) [alpha (x_n + y_n) + theta + alpha xbar_{-n}]`.
pub fn nikaido_isoda(x: &ActionProfile, y: &ActionProfile, scenario: &Scenario) -> Result<f64> {
    scenario.check_profile(x)?;
    scenario.check_profile(y)?;
    Ok(FollowerGame::cgt(scenario).nikaido_isoda(x, y))
}

/// Distance of `x` from equilibrium measured as `Psi(x, x^r(x))`.
pub fn ni_residual(x: &ActionProfile, scenario: &Scenario) -> Result<f64> {
    scenario.check_profile(x)?;
    Ok(FollowerGame::cgt(scenario).ni_residual(x))
}

/// Runs the relaxation learning dynamics until the residual drops to `tol`.
pub fn relaxation_solve(scenario: &Scenario, settings: &RelaxationSettings) -> Result<EquilibriumReport> {
    relax(&FollowerGame::cgt(scenario), settings, false)
}

/// Dual witness of per-player optimality at a candidate equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    /// Multipliers of the upper bounds `x_n <= x_max,n`.
    pub mu: Vec<f64>,
    /// Multipliers of the lower bounds `x_n >= x_min,n`.
    pub nu: Vec<f64>,
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    /// `|D(mu, nu) - ||(I - A) x - a||^2|` for the projection fixed point.
    pub duality_gap: f64,
    /// Largest violation of the box constraints.
    pub feasibility_residual: f64,
    pub tol: f64,
}

impl KktCertificate {
    pub fn passed(&self) -> bool {
        self.stationarity_residual <= self.tol
            && self.complementarity_residual <= self.tol
            && self.duality_gap <= self.tol
            && self.feasibility_residual <= self.tol
    }

    pub fn max_residual(&self) -> f64 {
        self.stationarity_residual
            .max(self.complementarity_residual)
            .max(self.duality_gap)
            .max(self.feasibility_residual)
    }
}

/// Recovers the multipliers of every player's bound constraints from the
/// active set and evaluates the optimality conditions at `x_star`.
///
/// With `g_n = -2 alpha x_n - theta - alpha xbar_{-n}` the per-player
/// gradient, `mu_n = max(0, g_n)` on upper-active components and
/// `nu_n = max(0, -g_n)` on lower-active ones. The duality gap is checked on
/// the projection problem `min ||z - (a + A x)||^2` over the box, whose
/// multipliers are the above scaled by `1 / alpha`.
pub fn kkt_verify(x_star: &ActionProfile, scenario: &Scenario, tol: f64) -> Result<KktCertificate> {
    scenario.check_profile(x_star)?;
    let m = &scenario.market;
    let a = m.alpha;
    let total = x_star.total();
    let n_players = scenario.len();

    let mut mu = vec![0.0; n_players];
    let mut nu = vec![0.0; n_players];
    let mut stationarity: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    let mut feasibility: f64 = 0.0;
    let mut primal = 0.0;
    let mut dual = 0.0;

    for n in 0..n_players {
        let (lo, hi) = scenario.bounds(n);
        let x = x_star[n];
        let others = total - x;
        let grad = -2.0 * a * x - m.theta() - a * others;
        if x >= hi - tol {
            mu[n] = grad.max(0.0);
        }
        if x <= lo + tol {
            nu[n] = (-grad).max(0.0);
        }
        stationarity = stationarity.max((grad + nu[n] - mu[n]).abs());
        complementarity = complementarity
            .max((mu[n] * (x - hi)).abs())
            .max((nu[n] * (x - lo)).abs());
        feasibility = feasibility.max(lo - x).max(x - hi);

        let target = -m.theta() / (2.0 * a) - others / 2.0;
        primal += (x - target) * (x - target);
        let (mu_p, nu_p) = (mu[n] / a, nu[n] / a);
        let diff = mu_p - nu_p;
        dual += -0.25 * diff * diff + diff * target - mu_p * hi + nu_p * lo;
    }

    Ok(KktCertificate {
        mu,
        nu,
        stationarity_residual: stationarity,
        complementarity_residual: complementarity,
        duality_gap: (dual - primal).abs(),
        feasibility_residual: feasibility.max(0.0),
        tol,
    })
}

/// Result of the exhaustive grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub profile: ActionProfile,
    /// Worst unilateral gain available by moving to another grid point.
    pub max_gain: f64,
    /// Grid spacing on each player's axis.
    pub spacing: Vec<f64>,
    /// Acceptance bound `2 alpha h (h + D)` with `h` the largest spacing
    /// and `D` the largest box width.
    pub gain_bound: f64,
}

impl BruteForceResult {
    pub fn accepted(&self) -> bool {
        self.max_gain <= self.gain_bound
    }
}

pub const BRUTE_FORCE_MAX_PLAYERS: usize = 3;

/// Exhaustive grid oracle for the expected-utility game.
pub fn brute_force_ne(scenario: &Scenario, grid_points_per_axis: usize) -> Result<BruteForceResult> {
    brute_force_game(&FollowerGame::cgt(scenario), grid_points_per_axis)
}

/// Grid profile minimizing the largest unilateral grid-deviation gain.
/// Ties go to the first profile in lexicographic grid order.
pub fn brute_force_game(game: &FollowerGame, grid_points_per_axis: usize) -> Result<BruteForceResult> {
    let n_players = game.len();
    if n_players > BRUTE_FORCE_MAX_PLAYERS {
        return Err(Error::TooLarge {
            max: BRUTE_FORCE_MAX_PLAYERS,
            got: n_players,
        });
    }
    if grid_points_per_axis < 11 {
        return Err(Error::param("grid_points_per_axis", "must be at least 11"));
    }
    let g = grid_points_per_axis;
    let grids: Vec<Vec<f64>> = (0..n_players)
        .map(|n| {
            let (lo, hi) = game.bounds(n);
            (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect()
        })
        .collect();

    // Mixed-radix decoding of a flat index over the given players' grids.
    let decode = |mut idx: usize, players: &[usize], out: &mut Vec<usize>| {
        out.clear();
        for _ in players {
            out.push(idx % g);
            idx /= g;
        }
    };

    // best_dev[n][others] = max over the grid of player n's objective
    let mut best_dev: Vec<Vec<f64>> = Vec::with_capacity(n_players);
    let mut digits = Vec::with_capacity(n_players);
    for n in 0..n_players {
        let others: Vec<usize> = (0..n_players).filter(|&k| k != n).collect();
        let count = g.pow(others.len() as u32);
        let mut table = Vec::with_capacity(count);
        for idx in 0..count {
            decode(idx, &others, &mut digits);
            let s: f64 = others.iter().zip(&digits).map(|(&k, &i)| grids[k][i]).sum();
            let best = grids[n]
                .iter()
                .map(|&z| game.utility(n, z, s))
                .fold(f64::NEG_INFINITY, f64::max);
            table.push(best);
        }
        best_dev.push(table);
    }

    let all: Vec<usize> = (0..n_players).collect();
    let mut best_idx = 0;
    let mut best_gain = f64::INFINITY;
    for idx in 0..g.pow(n_players as u32) {
        decode(idx, &all, &mut digits);
        let total: f64 = digits.iter().enumerate().map(|(k, &i)| grids[k][i]).sum();
        let mut worst: f64 = f64::NEG_INFINITY;
        for n in 0..n_players {
            let own = grids[n][digits[n]];
            let mut oidx = 0;
            let mut radix = 1;
            for (k, &i) in digits.iter().enumerate() {
                if k != n {
                    oidx += i * radix;
                    radix *= g;
                }
            }
            worst = worst.max(best_dev[n][oidx] - game.utility(n, own, total - own));
            if worst >= best_gain {
                break;
            }
        }
        if worst < best_gain {
            best_gain = worst;
            best_idx = idx;
        }
    }

    decode(best_idx, &all, &mut digits);
    let profile = ActionProfile((0..n_players).map(|k| grids[k][digits[k]]).collect());
    let spacing: Vec<f64> = grids.iter().map(|gr| gr[1] - gr[0]).collect();
    let h = spacing.iter().cloned().fold(0.0, f64::max);
    let width = (0..n_players)
        .map(|n| game.bounds(n).1 - game.bounds(n).0)
        .fold(0.0, f64::max);
    let alpha = game.scenario().market.alpha;
    Ok(BruteForceResult {
        profile,
        max_gain: best_gain,
        spacing,
        gain_bound: 2.0 * alpha * h * (h + width),
    })
}
