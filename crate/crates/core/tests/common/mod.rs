#![allow(dead_code)]

use prosumer_game::market::{feasible_bounds, MarketParams, ProsumerParams, ProspectParams, Scenario};
use prosumer_game::ActionProfile;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Two identical prosumers with alpha = 0.1 and theta = 0.03, whose unique
/// equilibrium is (-0.1, -0.1).
pub fn symmetric_scenario() -> Scenario {
    let p = ProsumerParams::new(50.0, 0.0, 45.0, 25.0, ProspectParams::default()).unwrap();
    let m = MarketParams::new(0.1, 0.08, 0.0, 0.1, 0.05).unwrap();
    Scenario::new(vec![p, p], m).unwrap()
}

/// Single prosumer whose leader profit is `-2.5 theta^2 - 0.1 theta`,
/// maximized at `rho_base = 0.03` with profit 0.001.
pub fn monopoly_scenario() -> Scenario {
    let p = ProsumerParams::new(50.0, 0.0, 50.0, 100.0, ProspectParams::default()).unwrap();
    let m = MarketParams::new(0.1, 0.05, 0.0, 0.1, 0.03).unwrap();
    Scenario::new(vec![p], m).unwrap()
}

pub fn random_market(rng: &mut ChaCha8Rng) -> MarketParams {
    let rho_min = rng.gen_range(0.0..0.05);
    let rho_max = rho_min + rng.gen_range(0.02..0.15);
    let rho_base = rng.gen_range(rho_min - 0.05..rho_max + 0.05);
    MarketParams::new(rng.gen_range(0.05..0.5), rho_base, rho_min, rho_max, rng.gen_range(0.0..0.1)).unwrap()
}

pub fn random_prosumer(rng: &mut ChaCha8Rng, prospect: ProspectParams) -> ProsumerParams {
    let q_max: f64 = rng.gen_range(5.0..30.0);
    ProsumerParams::new(
        rng.gen_range(10.0..30.0),
        rng.gen_range(0.0..q_max.min(10.0)),
        rng.gen_range(10.0..30.0),
        q_max,
        prospect,
    )
    .unwrap()
}

pub fn random_prospect(rng: &mut ChaCha8Rng) -> ProspectParams {
    ProspectParams::new(
        rng.gen_range(1.0..4.0),
        rng.gen_range(0.3..1.0),
        rng.gen_range(0.3..1.0),
        rng.gen_range(-3.0..5.0),
    )
    .unwrap()
}

pub fn random_scenario(rng: &mut ChaCha8Rng, n: usize) -> Scenario {
    let m = random_market(rng);
    let ps = (0..n).map(|_| random_prosumer(rng, ProspectParams::default())).collect();
    Scenario::new(ps, m).unwrap()
}

pub fn random_profile(rng: &mut ChaCha8Rng, s: &Scenario) -> ActionProfile {
    ActionProfile::new(
        s.prosumers
            .iter()
            .map(|p| {
                let (lo, hi) = feasible_bounds(p);
                rng.gen_range(lo..=hi)
            })
            .collect(),
    )
}
