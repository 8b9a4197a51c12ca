//! Scenario configuration files.
//!
//! A config is TOML with a `[market]` table and exactly one of `[prosumers]`
//! (explicit per-prosumer arrays) or `[generator]` (seeded random draw).
//! Every key is optional except where noted; missing keys take the values
//! of [`ScenarioConfig::default`].
//!
//! ```toml
//! [market]
//! alpha = "1/N"
//! rho_base = 0.04
//!
//! [generator]
//! n = 9
//! l_range = [10.0, 30.0]
//! seed = 7
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::market::{MarketParams, ProsumerParams, ProspectParams, Scenario};

pub const DEFAULT_SEED: u64 = 7;

/// Price elasticity, either fixed or `1/N` for the population size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Value(f64),
    PerCapita,
}

impl Alpha {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            Alpha::Value(a) => a,
            Alpha::PerCapita => 1.0 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub alpha: Alpha,
    pub rho_base: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_mar: f64,
    /// Leader search interval; `None` means the regulated price range.
    pub leader_lo: Option<f64>,
    pub leader_hi: Option<f64>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            alpha: Alpha::PerCapita,
            rho_base: 0.04,
            rho_min: 0.0,
            rho_max: 0.12,
            rho_mar: 0.06,
            leader_lo: None,
            leader_hi: None,
        }
    }
}

/// Explicit per-prosumer parameters, one entry per prosumer in every array.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsumerArrays {
    pub w: Vec<f64>,
    pub q: Vec<f64>,
    pub l: Vec<f64>,
    pub q_max: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta_plus: Vec<f64>,
    pub beta_minus: Vec<f64>,
    pub r: Vec<f64>,
}

/// Draws `l`, `w` and `q` uniformly per prosumer from a ChaCha8 stream
/// seeded with `seed`; the remaining parameters are shared.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub l_range: (f64, f64),
    pub w_range: (f64, f64),
    pub q_range: (f64, f64),
    pub seed: u64,
    pub q_max: f64,
    pub prospect: ProspectParams,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 9,
            l_range: (10.0, 30.0),
            w_range: (10.0, 30.0),
            q_range: (0.0, 10.0),
            seed: DEFAULT_SEED,
            q_max: 25.0,
            prospect: ProspectParams::new(2.25, 0.88, 0.88, 1.0).expect("default prospect parameters are valid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Population {
    Explicit(ProsumerArrays),
    Generated(GeneratorConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub market: MarketConfig,
    pub population: Population,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            market: MarketConfig::default(),
            population: Population::Generated(GeneratorConfig::default()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    market: Option<RawMarket>,
    prosumers: Option<RawProsumers>,
    generator: Option<RawGenerator>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAlpha {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    alpha: Option<RawAlpha>,
    rho_base: Option<f64>,
    rho_min: Option<f64>,
    rho_max: Option<f64>,
    rho_mar: Option<f64>,
    leader_lo: Option<f64>,
    leader_hi: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProsumers {
    w: Vec<f64>,
    q: Vec<f64>,
    l: Vec<f64>,
    q_max: Option<Vec<f64>>,
    lambda: Option<Vec<f64>>,
    beta_plus: Option<Vec<f64>>,
    beta_minus: Option<Vec<f64>>,
    r: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    n: Option<usize>,
    l_range: Option<[f64; 2]>,
    w_range: Option<[f64; 2]>,
    q_range: Option<[f64; 2]>,
    seed: Option<u64>,
    q_max: Option<f64>,
    lambda: Option<f64>,
    beta_plus: Option<f64>,
    beta_minus: Option<f64>,
    r: Option<f64>,
}

fn range(key: &str, raw: Option<[f64; 2]>, default: (f64, f64)) -> Result<(f64, f64)> {
    let Some([lo, hi]) = raw else { return Ok(default) };
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::config(key, format!("expected [lo, hi] with lo <= hi, got [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let key = e.span().map(|s| text[s].trim().to_string()).unwrap_or_default();
            Error::config(key, e.message().trim().to_string())
        })?;

        let d = MarketConfig::default();
        let market = match raw.market {
            None => d,
            Some(m) => MarketConfig {
                alpha: match m.alpha {
                    None => d.alpha,
                    Some(RawAlpha::Number(a)) => Alpha::Value(a),
                    Some(RawAlpha::Text(t)) if t.trim() == "1/N" => Alpha::PerCapita,
                    Some(RawAlpha::Text(t)) => {
                        return Err(Error::config("market.alpha", format!("expected a number or \"1/N\", got \"{t}\"")))
                    }
                },
                rho_base: m.rho_base.unwrap_or(d.rho_base),
                rho_min: m.rho_min.unwrap_or(d.rho_min),
                rho_max: m.rho_max.unwrap_or(d.rho_max),
                rho_mar: m.rho_mar.unwrap_or(d.rho_mar),
                leader_lo: m.leader_lo,
                leader_hi: m.leader_hi,
            },
        };

        let population = match (raw.prosumers, raw.generator) {
            (Some(_), Some(_)) => {
                return Err(Error::config("prosumers", "give either [prosumers] or [generator], not both"));
            }
            (None, None) => Population::Generated(GeneratorConfig::default()),
            (None, Some(g)) => {
                let d = GeneratorConfig::default();
                let dp = d.prospect;
                Population::Generated(GeneratorConfig {
                    n: g.n.unwrap_or(d.n),
                    l_range: range("generator.l_range", g.l_range, d.l_range)?,
                    w_range: range("generator.w_range", g.w_range, d.w_range)?,
                    q_range: range("generator.q_range", g.q_range, d.q_range)?,
                    seed: g.seed.unwrap_or(d.seed),
                    q_max: g.q_max.unwrap_or(d.q_max),
                    prospect: ProspectParams {
                        lambda: g.lambda.unwrap_or(dp.lambda),
                        beta_plus: g.beta_plus.unwrap_or(dp.beta_plus),
                        beta_minus: g.beta_minus.unwrap_or(dp.beta_minus),
                        reference: g.r.unwrap_or(dp.reference),
                    },
                })
            }
            (Some(p), None) => {
                let n = p.w.len();
                let dg = GeneratorConfig::default();
                let dp = dg.prospect;
                let fill = |v: Option<Vec<f64>>, x: f64| v.unwrap_or_else(|| vec![x; n]);
                Population::Explicit(ProsumerArrays {
                    q_max: fill(p.q_max, dg.q_max),
                    lambda: fill(p.lambda, dp.lambda),
                    beta_plus: fill(p.beta_plus, dp.beta_plus),
                    beta_minus: fill(p.beta_minus, dp.beta_minus),
                    r: fill(p.r, dp.reference),
                    w: p.w,
                    q: p.q,
                    l: p.l,
                })
            }
        };

        let cfg = ScenarioConfig { market, population };
        cfg.build()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn len(&self) -> usize {
        match &self.population {
            Population::Explicit(a) => a.w.len(),
            Population::Generated(g) => g.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Replaces the generator seed; explicit populations are unaffected.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Population::Generated(g) = &mut self.population {
            g.seed = seed;
        }
        self
    }

    /// Expands the population and validates everything.
    pub fn build(&self) -> Result<Scenario> {
        let prosumers = match &self.population {
            Population::Explicit(a) => explicit_prosumers(a)?,
            Population::Generated(g) => generate_prosumers(g)?,
        };
        if prosumers.is_empty() {
            return Err(Error::config("prosumers", "population is empty"));
        }
        let c = &self.market;
        let market = MarketParams {
            alpha: c.alpha.resolve(prosumers.len()),
            rho_base: c.rho_base,
            rho_min: c.rho_min,
            rho_max: c.rho_max,
            rho_mar: c.rho_mar,
            leader_lo: c.leader_lo.unwrap_or(c.rho_min),
            leader_hi: c.leader_hi.unwrap_or(c.rho_max),
        };
        market.validate().map_err(|e| prefixed("market", e))?;
        Scenario::new(prosumers, market).map_err(|e| prefixed("market", e))
    }
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::config(format!("{section}.{field}"), reason),
        other => other,
    }
}

fn explicit_prosumers(a: &ProsumerArrays) -> Result<Vec<ProsumerParams>> {
    let n = a.w.len();
    let arrays = [
        ("q", a.q.len()),
        ("l", a.l.len()),
        ("q_max", a.q_max.len()),
        ("lambda", a.lambda.len()),
        ("beta_plus", a.beta_plus.len()),
        ("beta_minus", a.beta_minus.len()),
        ("r", a.r.len()),
    ];
    for (name, len) in arrays {
        if len != n {
            return Err(Error::config(
                format!("prosumers.{name}"),
                format!("array `{name}` has {len} entries but `w` has {n}"),
            ));
        }
    }
    (0..n)
        .map(|i| {
            let prospect = ProspectParams {
                lambda: a.lambda[i],
                beta_plus: a.beta_plus[i],
                beta_minus: a.beta_minus[i],
                reference: a.r[i],
            };
            let p = ProsumerParams {
                w: a.w[i],
                q: a.q[i],
                l: a.l[i],
                q_max: a.q_max[i],
                prospect,
            };
            p.validate().map_err(|e| prefixed(&format!("prosumers[{i}]"), e))?;
            Ok(p)
        })
        .collect()
}

fn generate_prosumers(g: &GeneratorConfig) -> Result<Vec<ProsumerParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    (0..g.n)
        .map(|i| {
            let l = draw(&mut rng, g.l_range);
            let w = draw(&mut rng, g.w_range);
            let q = draw(&mut rng, g.q_range);
            let p = ProsumerParams {
                w,
                q,
                l,
                q_max: g.q_max,
                prospect: g.prospect,
            };
            p.validate().map_err(|e| prefixed(&format!("generator (prosumer {i})"), e))?;
            Ok(p)
        })
        .collect()
}
