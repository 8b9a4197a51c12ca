//! Follower equilibria under prospect-theoretic behavior.
//!
//! The PT objective has no closed-form maximizer. It is smooth between the
//! at most four actions where the reference point crosses the lowest or
//! highest attainable payoff, so the best response searches each smooth
//! piece separately and keeps the global winner.

use crate::error::{Error, Result};
use crate::game::{relax, EquilibriumReport, FollowerGame, InitialProfile, RelaxationSettings};
use crate::market::{MarketParams, ProsumerParams, Scenario};
use crate::prospect::{branch_breakpoints, pt_value, pt_value_derivative};

#[derive(Debug, Clone, PartialEq)]
pub struct PtSearchSettings {
    /// Coarse grid size spread over the whole box.
    pub coarse_points: usize,
    /// Final bracket width of the per-segment refinement (kWh).
    pub refine_tol: f64,
    /// Sweep limit for sequential best response.
    pub max_sweeps: usize,
    /// Sequential play stops once a sweep moves no action by more than this.
    pub step_tol: f64,
    /// Per-player grid size of the post-hoc equilibrium certificate.
    pub certify_points: usize,
}

impl Default for PtSearchSettings {
    fn default() -> Self {
        PtSearchSettings {
            coarse_points: 512,
            refine_tol: 1e-9,
            max_sweeps: 500,
            step_tol: 1e-4,
            certify_points: 10_000,
        }
    }
}

impl PtSearchSettings {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_points < 64 {
            return Err(Error::param("coarse_points", "must be at least 64"));
        }
        if !(self.refine_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::param("refine_tol", "tolerances must be > 0"));
        }
        if self.max_sweeps < 1 {
            return Err(Error::param("max_sweeps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Local maxima refined per smooth segment.
const MAX_REFINED_PEAKS: usize = 8;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Global maximizer of the PT objective over `bounds`; ties go to the
/// smaller action.
pub fn best_response_pt(bounds: (f64, f64), others_sum: f64, m: &MarketParams, p: &ProsumerParams, s: &PtSearchSettings) -> f64 {
    let (lo, hi) = bounds;
    if !(hi > lo) {
        return lo;
    }
    let f = |x: f64| pt_value(x, others_sum, m, p);
    let df = |x: f64| pt_value_derivative(x, others_sum, m, p);

    let mut edges = vec![lo];
    edges.extend(branch_breakpoints(bounds, others_sum, m, p));
    edges.push(hi);

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for seg in edges.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let share = ((s.coarse_points as f64) * (b - a) / (hi - lo)).ceil() as usize;
        let count = share.max(16);
        let xs: Vec<f64> = (0..=count)
            .map(|i| if i == count { b } else { a + (b - a) * i as f64 / count as f64 })
            .collect();
        let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        candidates.push((a, fs[0]));
        candidates.push((b, fs[count]));

        let mut peaks: Vec<usize> = (0..=count)
            .filter(|&i| (i == 0 || fs[i] >= fs[i - 1]) && (i == count || fs[i] >= fs[i + 1]))
            .collect();
        peaks.sort_by(|&i, &j| fs[j].total_cmp(&fs[i]).then(i.cmp(&j)));
        peaks.truncate(MAX_REFINED_PEAKS);
        for i in peaks {
            let left = xs[i.saturating_sub(1)];
            let right = xs[(i + 1).min(count)];
            let x = refine(&f, &df, left, right, s.refine_tol);
            candidates.push((x, f(x)));
        }
    }

    candidates.sort_by(|u, v| u.0.total_cmp(&v.0));
    let mut best = candidates[0];
    for &(x, v) in &candidates[1..] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best.0.clamp(lo, hi)
}

/// Maximizes a smooth function on `[a, b]`: bisection on the derivative
/// when it brackets a sign change, golden-section search otherwise.
fn refine(f: &impl Fn(f64) -> f64, df: &impl Fn(f64) -> Option<f64>, mut a: f64, mut b: f64, tol: f64) -> f64 {
    if let (Some(da), Some(db)) = (df(a), df(b)) {
        if da > 0.0 && db < 0.0 {
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                match df(mid) {
                    Some(d) if d > 0.0 => a = mid,
                    Some(d) if d < 0.0 => b = mid,
                    Some(_) => return mid,
                    None => return golden_section(f, a, b, tol),
                }
            }
            return 0.5 * (a + b);
        }
    }
    golden_section(f, a, b, tol)
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Relaxation dynamics with PT best responses. Every visited profile is
/// run through the concavity classifier and failures are counted in the
/// report.
pub fn relaxation_solve_pt(scenario: &Scenario, settings: &RelaxationSettings, search: &PtSearchSettings) -> Result<EquilibriumReport> {
    search.validate()?;
    relax(&FollowerGame::prospect(scenario, search.clone()), settings, true)
}

/// Round-robin best response for PT prosumers, starting at the box midpoints.
pub fn sequential_best_response(scenario: &Scenario, settings: &PtSearchSettings) -> Result<EquilibriumReport> {
    sequential_solve(&FollowerGame::prospect(scenario, settings.clone()), settings, &InitialProfile::Midpoint)
}

/// Players best-respond one at a time in ascending index order; one
/// iteration is a full sweep. Stops when a sweep moves no action by more
/// than `step_tol`, then certifies the result on a per-player grid.
pub fn sequential_solve(game: &FollowerGame, settings: &PtSearchSettings, initial: &InitialProfile) -> Result<EquilibriumReport> {
    settings.validate()?;
    let mut x = initial.resolve(game)?;
    let mut total = x.total();
    let mut trace = Vec::with_capacity(settings.max_sweeps);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < settings.max_sweeps {
        let mut moved: f64 = 0.0;
        for n in 0..game.len() {
            let br = game.best_response(n, total - x[n]);
            moved = moved.max((br - x[n]).abs());
            x.0[n] = br;
            // recompute rather than update to keep the aggregate drift-free
            total = x.total();
        }
        sweeps += 1;
        trace.push((sweeps, moved));
        if moved <= settings.step_tol {
            converged = true;
            break;
        }
    }
    let residual = game.ni_residual(&x);
    let epsilon = converged.then(|| game.grid_epsilon(&x, settings.certify_points));
    Ok(EquilibriumReport {
        profile: x,
        iterations: sweeps,
        residual_trace: trace,
        converged,
        residual,
        epsilon,
        unclassified_visits: None,
    })
}
