//! Parameter sweeps that regenerate the experiment tables as CSV.
//!
//! Each sweep point is independent and runs on the current rayon pool; rows
//! are emitted in grid order. A point whose follower solve fails to converge
//! still produces a row and is listed in [`SweepTable::flagged`].

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{Population, ScenarioConfig};
use crate::error::{Error, Result};
use crate::game::{Behavior, FollowerGame, InitialProfile};
use crate::market::Scenario;
use crate::pt_solver::sequential_solve;
use crate::stackelberg::{epsilon_se_grid, solve_followers, FollowerModel, FollowerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Total load against the reference point.
    Reference,
    /// Total load against the reference point for several loss multipliers.
    Lambda,
    /// Leader profit with and without anticipating PT followers.
    ProfitGap,
    /// Total load against population size.
    Population,
    /// Group loads of a mixed population against the base price.
    PriceResponse,
    /// Sequential best-response sweep counts against population size.
    Convergence,
}

impl SweepKind {
    pub const ALL: [SweepKind; 6] = [
        SweepKind::Reference,
        SweepKind::Lambda,
        SweepKind::ProfitGap,
        SweepKind::Population,
        SweepKind::PriceResponse,
        SweepKind::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Reference => "reference",
            SweepKind::Lambda => "lambda",
            SweepKind::ProfitGap => "profit-gap",
            SweepKind::Population => "population",
            SweepKind::PriceResponse => "price-response",
            SweepKind::Convergence => "convergence",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            SweepKind::Reference => &["r", "total_load_cgt_kwh", "total_load_pt_kwh"],
            SweepKind::Lambda => &["lambda", "r", "total_load_kwh"],
            SweepKind::ProfitGap => &["r", "profit_pt_aware_usd", "profit_cgt_assuming_usd"],
            SweepKind::Population => &["n", "total_load_cgt_kwh", "total_load_pt_kwh"],
            SweepKind::PriceResponse => &["rho_base_usd_per_kwh", "group", "group_load_kwh"],
            SweepKind::Convergence => &["n", "iterations", "converged"],
        }
    }

    /// Grid used when no range is given.
    pub fn default_range(self) -> GridRange {
        match self {
            SweepKind::Reference | SweepKind::ProfitGap => GridRange::new(-4.0, 8.0, 0.25),
            SweepKind::Lambda => GridRange::new(-4.0, 8.0, 0.5),
            SweepKind::Population | SweepKind::Convergence => GridRange::new(10.0, 70.0, 10.0),
            SweepKind::PriceResponse => GridRange::new(-0.10, 0.10, 0.01),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('-', "_") == s)
            .ok_or_else(|| Error::param("kind", format!("unknown sweep `{s}`")))
    }
}

/// Evenly spaced values `start, start + step, ...` up to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        GridRange { start, stop, step }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::param("range", "endpoints must be finite"));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::param("range", format!("step must be > 0, got {}", self.step)));
        }
        if self.stop < self.start {
            return Err(Error::param("range", format!("stop {} is below start {}", self.stop, self.start)));
        }
        Ok(())
    }

    /// Grid values, rounded to 12 significant decimals so that printed
    /// values do not carry accumulated step error.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| {
                let v = self.start + k as f64 * self.step;
                (v * 1e12).round() / 1e12
            })
            .collect()
    }
}

impl FromStr for GridRange {
    type Err = Error;

    /// Parses `start:stop:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::param("range", format!("`{t}` is not a number")))
        };
        match parts.as_slice() {
            [a, b, c] => {
                let r = GridRange::new(parse(a)?, parse(b)?, parse(c)?);
                r.validate()?;
                Ok(r)
            }
            _ => Err(Error::param("range", format!("expected start:stop:step, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub range: GridRange,
    /// Loss multipliers for the lambda sweep.
    pub lambdas: Vec<f64>,
    pub config: ScenarioConfig,
    /// Solver settings for prospect-theoretic followers.
    pub pt: FollowerSettings,
    /// Solver settings for expected-utility followers.
    pub cgt: FollowerSettings,
    /// Leader grid step for the profit-gap sweep.
    pub epsilon: f64,
}

impl SweepSpec {
    pub fn new(kind: SweepKind, config: ScenarioConfig) -> Self {
        SweepSpec {
            kind,
            range: kind.default_range(),
            lambdas: vec![2.0, 4.0, 6.0],
            config,
            pt: FollowerSettings::pt(),
            cgt: FollowerSettings::cgt(),
            epsilon: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        if self.kind == SweepKind::Lambda {
            if self.lambdas.is_empty() {
                return Err(Error::param("lambdas", "must not be empty"));
            }
            if self.lambdas.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::param("lambdas", "must be strictly increasing"));
            }
        }
        if matches!(self.kind, SweepKind::Population | SweepKind::Convergence) {
            if !matches!(self.config.population, Population::Generated(_)) {
                return Err(Error::config("generator", "population sweeps need a [generator] block"));
            }
            if self.range.values().iter().any(|&n| n < 1.0 || n.fract() != 0.0) {
                return Err(Error::param("range", "population sizes must be positive integers"));
            }
        }
        if self.pt.model != FollowerModel::Pt || self.cgt.model != FollowerModel::Cgt {
            return Err(Error::param("model", "follower settings do not match their model"));
        }
        Ok(())
    }
}

/// CSV-ready sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub rows: Vec<Vec<String>>,
    /// One message per row whose solve did not converge.
    pub flagged: Vec<String>,
}

impl SweepTable {
    pub fn header(&self) -> &'static [&'static str] {
        self.kind.header()
    }

    pub fn all_converged(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Numeric value of `column` in every row.
    pub fn column(&self, column: &str) -> Vec<f64> {
        let Some(i) = self.header().iter().position(|h| *h == column) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }
}

struct Row {
    cells: Vec<Vec<String>>,
    flag: Option<String>,
}

fn flag_if(ok: bool, what: impl FnOnce() -> String) -> Option<String> {
    (!ok).then(what)
}

fn with_reference(s: &Scenario, r: f64) -> Scenario {
    let mut s = s.clone();
    for p in &mut s.prosumers {
        p.prospect.reference = r;
    }
    s
}

fn with_lambda(s: &Scenario, lambda: f64) -> Scenario {
    let mut s = s.clone();
    for p in &mut s.prosumers {
        p.prospect.lambda = lambda;
    }
    s
}

fn sized(config: &ScenarioConfig, n: usize) -> Result<Scenario> {
    let mut c = config.clone();
    if let Population::Generated(g) = &mut c.population {
        g.n = n;
    }
    c.build()
}

/// Group index of prosumer `n` when `len` prosumers split into three
/// contiguous groups of near-equal size.
pub fn price_response_group(n: usize, len: usize) -> usize {
    n * 3 / len
}

pub const PRICE_RESPONSE_GROUPS: [&str; 3] = ["rational", "ref_1", "ref_3"];

/// Mixed population for the price-response sweep: the first third is
/// rational, the others are PT with reference points 1 and 3.
pub fn price_response_population(s: &Scenario) -> (Scenario, Vec<Behavior>) {
    let mut s = s.clone();
    let len = s.len();
    let mut behaviors = Vec::with_capacity(len);
    for (n, p) in s.prosumers.iter_mut().enumerate() {
        match price_response_group(n, len) {
            0 => behaviors.push(Behavior::Rational),
            1 => {
                p.prospect.reference = 1.0;
                behaviors.push(Behavior::Prospect);
            }
            _ => {
                p.prospect.reference = 3.0;
                behaviors.push(Behavior::Prospect);
            }
        }
    }
    (s, behaviors)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let base = spec.config.build()?;
    let values = spec.range.values();

    let rows: Vec<Row> = match spec.kind {
        SweepKind::Reference => {
            let cgt = solve_followers(&base, &spec.cgt)?;
            values
                .par_iter()
                .map(|&r| {
                    let pt = solve_followers(&with_reference(&base, r), &spec.pt)?;
                    Ok(Row {
                        cells: vec![vec![r.to_string(), cgt.profile.total().to_string(), pt.profile.total().to_string()]],
                        flag: flag_if(cgt.converged && pt.converged, || format!("r={r}: follower solve did not converge")),
                    })
                })
                .collect::<Result<_>>()?
        }
        SweepKind::Lambda => {
            let points: Vec<(f64, f64)> = spec
                .lambdas
                .iter()
                .flat_map(|&l| values.iter().map(move |&r| (l, r)))
                .collect();
            points
                .par_iter()
                .map(|&(l, r)| {
                    let pt = solve_followers(&with_reference(&with_lambda(&base, l), r), &spec.pt)?;
                    Ok(Row {
                        cells: vec![vec![l.to_string(), r.to_string(), pt.profile.total().to_string()]],
                        flag: flag_if(pt.converged, || format!("lambda={l}, r={r}: follower solve did not converge")),
                    })
                })
                .collect::<Result<_>>()?
        }
        SweepKind::ProfitGap => {
            let naive = epsilon_se_grid(&base, spec.epsilon, &spec.cgt)?;
            values
                .par_iter()
                .map(|&r| {
                    let aware = epsilon_se_grid(&with_reference(&base, r), spec.epsilon, &spec.pt)?;
                    let at = aware
                        .grid
                        .iter()
                        .find(|g| g.rho_base == naive.rho_star)
                        .expect("both leaders search the same grid");
                    let ok = naive.flagged().next().is_none() && aware.flagged().next().is_none();
                    Ok(Row {
                        cells: vec![vec![r.to_string(), aware.leader_profit.to_string(), at.profit.to_string()]],
                        flag: flag_if(ok, || format!("r={r}: some leader grid point did not converge")),
                    })
                })
                .collect::<Result<_>>()?
        }
        SweepKind::Population => values
            .par_iter()
            .map(|&n| {
                let s = sized(&spec.config, n as usize)?;
                let cgt = solve_followers(&s, &spec.cgt)?;
                let pt = solve_followers(&s, &spec.pt)?;
                Ok(Row {
                    cells: vec![vec![n.to_string(), cgt.profile.total().to_string(), pt.profile.total().to_string()]],
                    flag: flag_if(cgt.converged && pt.converged, || format!("n={n}: follower solve did not converge")),
                })
            })
            .collect::<Result<_>>()?,
        SweepKind::PriceResponse => {
            let (mixed, behaviors) = price_response_population(&base);
            values
                .par_iter()
                .map(|&rho| {
                    let s = mixed.with_rho_base(rho);
                    let game = FollowerGame::mixed(&s, behaviors.clone(), spec.pt.search.clone())?;
                    let rep = sequential_solve(&game, &spec.pt.search, &InitialProfile::Midpoint)?;
                    let mut loads = [0.0; 3];
                    for (n, x) in rep.profile.as_slice().iter().enumerate() {
                        loads[price_response_group(n, s.len())] += x;
                    }
                    let cells = PRICE_RESPONSE_GROUPS
                        .iter()
                        .zip(loads)
                        .map(|(g, load)| vec![rho.to_string(), g.to_string(), load.to_string()])
                        .collect();
                    Ok(Row {
                        cells,
                        flag: flag_if(rep.converged, || format!("rho_base={rho}: follower solve did not converge")),
                    })
                })
                .collect::<Result<_>>()?
        }
        SweepKind::Convergence => values
            .par_iter()
            .map(|&n| {
                let s = sized(&spec.config, n as usize)?;
                let rep = solve_followers(&s, &spec.pt)?;
                Ok(Row {
                    cells: vec![vec![n.to_string(), rep.iterations.to_string(), rep.converged.to_string()]],
                    flag: flag_if(rep.converged, || format!("n={n}: follower solve did not converge")),
                })
            })
            .collect::<Result<_>>()?,
    };

    let mut table = SweepTable {
        kind: spec.kind,
        rows: Vec::new(),
        flagged: Vec::new(),
    };
    for row in rows {
        table.rows.extend(row.cells);
        table.flagged.extend(row.flag);
    }
    Ok(table)
}

/// Gnuplot script that plots the CSV written for `kind` at `csv_path`.
pub fn gnuplot_script(kind: SweepKind, csv_path: &str) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset key autotitle columnhead\nset grid\n");
    let body = match kind {
        SweepKind::Reference => format!(
            "set xlabel 'reference point ($)'\nset ylabel 'total load (kWh)'\n\
             plot '{csv_path}' using 1:2 with lines, '' using 1:3 with linespoints\n"
        ),
        SweepKind::Lambda => format!(
            "set xlabel 'reference point ($)'\nset ylabel 'total load (kWh)'\n\
             plot for [l in system(\"tail -n +2 '{csv_path}' | cut -d, -f1 | uniq\")] \
             '{csv_path}' using 2:($1 == l ? $3 : NaN) with linespoints title 'lambda='.l\n"
        ),
        SweepKind::ProfitGap => format!(
            "set xlabel 'reference point ($)'\nset ylabel 'profit ($)'\n\
             plot '{csv_path}' using 1:2 with linespoints, '' using 1:3 with linespoints\n"
        ),
        SweepKind::Population => format!(
            "set xlabel 'prosumers'\nset ylabel 'total load (kWh)'\n\
             plot '{csv_path}' using 1:2 with linespoints, '' using 1:3 with linespoints\n"
        ),
        SweepKind::PriceResponse => format!(
            "set xlabel 'base price ($/kWh)'\nset ylabel 'group load (kWh)'\n\
             plot for [g in \"{}\"] '{csv_path}' using 1:(strcol(2) eq g ? $3 : NaN) with linespoints title g\n",
            PRICE_RESPONSE_GROUPS.join(" ")
        ),
        SweepKind::Convergence => format!(
            "set xlabel 'prosumers'\nset ylabel 'sweeps'\n\
             plot '{csv_path}' using 1:2 with linespoints\n"
        ),
    };
    s.push_str(&body);
    s
}
