//! Scenario runner: seeded parameter sweeps over channel realizations, emitting CSV and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{lemma1_empirical_all, lemma2_empirical, tightest_constraint, TailReport, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::forms::{build_constraints, build_user_forms, ConstraintForm, ConstraintLabel, UserForms};
use crate::network::{
    db_to_linear, derive_seed, generate_channels, stream_rng, Architecture, ChannelRealization, NetworkConfig,
    PrimalUser,
};
use crate::sdr::{randomize, solve_sdr, Scheme, SdrOptions};
use crate::signalchain::ber_run;

pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_CANDIDATES: usize = 500;
pub const DEFAULT_TOL_GAMMA: f64 = 1e-7;
pub const DEFAULT_SDP_TOL: f64 = 1e-9;
pub const DEFAULT_BER_BLOCKS: usize = 2000;
/// A sweep point aborts the run once more than this fraction of its trials fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            OneOrMany::One(x) => Ok(vec![*x; n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => {
                Err(Error::InvalidConfig(format!("{what} needs 1 or {n} entries, got {}", v.len())))
            }
        }
    }
}

/// Primal user as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimalUserSpec {
    pub noise: f64,
    pub interference_bound_db: f64,
}

/// Network section of a config file. Transmit powers and bounds are in dB, noise variances linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    pub relays: usize,
    pub group_sizes: Vec<usize>,
    #[serde(default = "zero_db")]
    pub tx_power_db: OneOrMany,
    pub relay_noise: OneOrMany,
    pub user_noise: OneOrMany,
    #[serde(default)]
    pub total_power_db: Option<f64>,
    #[serde(default)]
    pub per_relay_bound_db: Option<OneOrMany>,
    #[serde(default)]
    pub primal_users: Vec<PrimalUserSpec>,
}

fn zero_db() -> OneOrMany {
    OneOrMany::One(0.0)
}

impl NetworkSpec {
    pub fn to_config(&self) -> Result<NetworkConfig> {
        let groups = self.group_sizes.len();
        let users: usize = self.group_sizes.iter().sum();
        let lin = |v: Vec<f64>| v.into_iter().map(db_to_linear).collect::<Vec<_>>();
        let cfg = NetworkConfig {
            architecture: self.architecture,
            relays: self.relays,
            group_sizes: self.group_sizes.clone(),
            tx_powers: lin(self.tx_power_db.expand(groups, "tx_power_db")?),
            relay_noise: self.relay_noise.expand(self.relays, "relay_noise")?,
            user_noise: self.user_noise.expand(users, "user_noise")?,
            total_power_bound: self.total_power_db.map(db_to_linear),
            per_relay_bounds: match &self.per_relay_bound_db {
                Some(b) => lin(b.expand(self.relays, "per_relay_bound_db")?),
                None => Vec::new(),
            },
            primal_users: self
                .primal_users
                .iter()
                .map(|p| PrimalUser { noise: p.noise, interference_bound: db_to_linear(p.interference_bound_db) })
                .collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Total relay power bound in dB.
    TotalPower { values_db: Vec<f64> },
    /// Number of relays (antennas) whose own bound is enforced; defaults to `0..=L`.
    PerRelayCount {
        #[serde(default)]
        counts: Option<Vec<usize>>,
    },
    /// Number of protected primal users, all sharing one noise level and ceiling.
    PrimalUserCount { counts: Vec<usize>, noise: f64, interference_bound_db: f64 },
    /// Total power bound in dB, with uncoded worst-user BER of the rounded beamformers.
    BerPower {
        values_db: Vec<f64>,
        #[serde(default = "default_blocks")]
        blocks: usize,
    },
    BoundsLab {
        #[serde(default = "default_rho")]
        rho: Vec<f64>,
        #[serde(default = "default_v")]
        v: Vec<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
}

fn default_blocks() -> usize {
    DEFAULT_BER_BLOCKS
}
fn default_rho() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1]
}
fn default_v() -> Vec<f64> {
    crate::bounds::DEFAULT_V_GRID.to_vec()
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

impl Sweep {
    pub fn column(&self) -> &'static str {
        match self {
            Sweep::TotalPower { .. } | Sweep::BerPower { .. } => "P0_dB",
            Sweep::PerRelayCount { .. } => "per_relay_constraints",
            Sweep::PrimalUserCount { .. } => "primal_users",
            Sweep::BoundsLab { .. } => "trial",
        }
    }
}

/// A complete experiment: base network, sweep, and run controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub network: NetworkSpec,
    pub sweep: Sweep,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_tol_gamma")]
    pub tol_gamma: f64,
    #[serde(default = "default_sdp_tol")]
    pub sdp_tol: f64,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_candidates() -> usize {
    DEFAULT_CANDIDATES
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_tol_gamma() -> f64 {
    DEFAULT_TOL_GAMMA
}
fn default_sdp_tol() -> f64 {
    DEFAULT_SDP_TOL
}

impl Scenario {
    /// Parses TOML; errors carry the line and column of the offending item.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let message = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    let col = span.start - text[..span.start].rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}: {}", e.message())
                }
                None => e.message().to_string(),
            };
            Error::Config { path: origin.to_string(), message }
        })?;
        s.validate().map_err(|e| Error::Config { path: origin.to_string(), message: e.to_string() })?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = self.network.to_config()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.candidates == 0 {
            return bad("candidates must be at least 1".into());
        }
        if !(self.tol_gamma > 0.0 && self.sdp_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name {:?} is not a plain file stem", self.name));
        }
        match &self.sweep {
            Sweep::TotalPower { values_db } | Sweep::BerPower { values_db, .. } => {
                if values_db.is_empty() || values_db.iter().any(|v| !v.is_finite()) {
                    return bad("values_db must be a nonempty list of finite numbers".into());
                }
            }
            Sweep::PerRelayCount { counts } => {
                if cfg.per_relay_bounds.is_empty() {
                    return bad("per_relay_count sweep needs network.per_relay_bound_db".into());
                }
                if let Some(c) = counts {
                    if c.is_empty() || c.iter().any(|&n| n > cfg.relays) {
                        return bad(format!("counts must be a nonempty list within 0..={}", cfg.relays));
                    }
                }
            }
            Sweep::PrimalUserCount { counts, noise, .. } => {
                if counts.is_empty() {
                    return bad("counts must be nonempty".into());
                }
                if !(*noise > 0.0) {
                    return bad("primal user noise must be positive".into());
                }
            }
            Sweep::BoundsLab { rho, v, samples } => {
                if rho.is_empty() || v.is_empty() || *samples == 0 {
                    return bad("bounds lab needs rho, v and samples".into());
                }
            }
        }
        if let Sweep::BerPower { blocks: 0, .. } = self.sweep {
            return bad("blocks must be at least 1".into());
        }
        let sweeps_budget = matches!(self.sweep, Sweep::TotalPower { .. } | Sweep::BerPower { .. });
        let adds_primal = matches!(&self.sweep, Sweep::PrimalUserCount { counts, .. } if counts.iter().any(|&n| n > 0));
        if !sweeps_budget && !adds_primal && !cfg.has_constraints() {
            return Err(Error::NoConstraints);
        }
        Ok(())
    }

    /// Sweep values as written to the first CSV column.
    pub fn points(&self) -> Vec<f64> {
        let relays = self.network.relays;
        match &self.sweep {
            Sweep::TotalPower { values_db } | Sweep::BerPower { values_db, .. } => values_db.clone(),
            Sweep::PerRelayCount { counts } => match counts {
                Some(c) => c.iter().map(|&n| n as f64).collect(),
                None => (0..=relays).map(|n| n as f64).collect(),
            },
            Sweep::PrimalUserCount { counts, .. } => counts.iter().map(|&n| n as f64).collect(),
            Sweep::BoundsLab { .. } => (0..self.trials).map(|t| t as f64).collect(),
        }
    }

    fn sdr_options(&self) -> SdrOptions {
        SdrOptions { tol_gamma: self.tol_gamma, sdp_tol: self.sdp_tol, ..SdrOptions::default() }
    }

    /// Network and constraints for one trial at one sweep point.
    fn instance(&self, point: f64, trial: usize) -> Result<(NetworkConfig, ChannelRealization, Vec<ConstraintForm>)> {
        let mut cfg = self.network.to_config()?;
        let mut keep_relays = cfg.relays;
        match &self.sweep {
            Sweep::TotalPower { .. } | Sweep::BerPower { .. } => cfg.total_power_bound = Some(db_to_linear(point)),
            Sweep::PerRelayCount { .. } => keep_relays = point as usize,
            Sweep::PrimalUserCount { noise, interference_bound_db, .. } => {
                let extra = PrimalUser { noise: *noise, interference_bound: db_to_linear(*interference_bound_db) };
                cfg.primal_users.extend(std::iter::repeat_n(extra, point as usize));
            }
            Sweep::BoundsLab { .. } => {}
        }
        let r = generate_channels(&cfg, derive_seed(self.seed, &[trial as u64]));
        let cons: Vec<ConstraintForm> = build_constraints(&r, &cfg)?
            .into_iter()
            .filter(|cf| !matches!(cf.label, ConstraintLabel::PerRelay(i) if i >= keep_relays))
            .collect();
        if cons.is_empty() {
            return Err(Error::NoConstraints);
        }
        Ok((cfg, r, cons))
    }
}

/// One solved trial of one scheme pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub r1sdr_obj: f64,
    pub r2sdr_obj: f64,
    pub bf_rounded: f64,
    pub bfa_rounded: f64,
    /// Worst-user uncoded BER, only for BER sweeps.
    pub bf_ber: Option<f64>,
    pub bfa_ber: Option<f64>,
}

impl TrialRecord {
    pub fn bf_gap(&self) -> f64 {
        self.r1sdr_obj - self.bf_rounded
    }
    pub fn bfa_gap(&self) -> f64 {
        self.r2sdr_obj - self.bfa_rounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub value: f64,
    pub records: Vec<TrialRecord>,
    pub failures: usize,
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Standard error of the mean; NaN below two samples.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs.iter().copied());
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

impl PointSummary {
    pub fn mean_of(&self, f: impl Fn(&TrialRecord) -> f64) -> f64 {
        mean(self.records.iter().map(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub name: String,
    pub column: &'static str,
    pub points: Vec<PointSummary>,
    pub ber: bool,
}

impl SweepResult {
    pub fn headers(&self) -> Vec<&'static str> {
        let mut h = vec![self.column, "r1sdr_obj", "r2sdr_obj", "bf_rounded", "bfa_rounded"];
        if self.ber {
            h.extend(["bf_ber", "bfa_ber"]);
        }
        h.push("failures");
        h
    }

    fn series(&self) -> Vec<Vec<f64>> {
        let mut cols: Vec<Vec<f64>> = vec![
            self.points.iter().map(|p| p.mean_of(|r| r.r1sdr_obj)).collect(),
            self.points.iter().map(|p| p.mean_of(|r| r.r2sdr_obj)).collect(),
            self.points.iter().map(|p| p.mean_of(|r| r.bf_rounded)).collect(),
            self.points.iter().map(|p| p.mean_of(|r| r.bfa_rounded)).collect(),
        ];
        if self.ber {
            cols.push(self.points.iter().map(|p| p.mean_of(|r| r.bf_ber.unwrap_or(f64::NAN))).collect());
            cols.push(self.points.iter().map(|p| p.mean_of(|r| r.bfa_ber.unwrap_or(f64::NAN))).collect());
        }
        cols
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers().join(",");
        out.push('\n');
        let cols = self.series();
        for (i, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{}", p.value);
            for c in &cols {
                let _ = write!(out, ",{:.10e}", c[i]);
            }
            let _ = writeln!(out, ",{}", p.failures);
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let xs: Vec<f64> = self.points.iter().map(|p| p.value).collect();
        let cols = self.series();
        let names = self.headers();
        if self.ber {
            let series = [(names[5], cols[4].clone()), (names[6], cols[5].clone())];
            svg_line_chart(&self.name, self.column, "worst-user BER", &xs, &series)
        } else {
            let series: Vec<(&str, Vec<f64>)> = names[1..5].iter().copied().zip(cols).collect();
            svg_line_chart(&self.name, self.column, "worst-user SINR", &xs, &series)
        }
    }

    /// Writes `<name>.csv` and `<name>.svg` under `dir`, returning the CSV path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.name));
        fs::write(&csv, self.to_csv())?;
        fs::write(dir.join(format!("{}.svg", self.name)), self.to_svg())?;
        Ok(csv)
    }
}

fn solve_trial(s: &Scenario, pi: usize, point: f64, trial: usize, blocks: Option<usize>) -> Result<TrialRecord> {
    let (cfg, r, cons) = s.instance(point, trial)?;
    let users: Vec<UserForms> = build_user_forms(&r, &cfg);
    let opts = s.sdr_options();
    let mut out = TrialRecord {
        trial,
        r1sdr_obj: 0.0,
        r2sdr_obj: 0.0,
        bf_rounded: 0.0,
        bfa_rounded: 0.0,
        bf_ber: None,
        bfa_ber: None,
    };
    for (si, scheme) in [Scheme::Bf, Scheme::Bfa].into_iter().enumerate() {
        let keys = [trial as u64, pi as u64, si as u64];
        let sol = solve_sdr(scheme, &users, &cons, &opts)?;
        let mut rng = stream_rng(s.seed, &keys);
        let bp = randomize(&sol, &users, &cons, s.candidates, &mut rng)?;
        let ber = match blocks {
            Some(n) => {
                let per_user = ber_run(&cfg, &r, &bp.w1, &bp.w2, n, &mut rng)?;
                Some(per_user.into_iter().fold(0.0, f64::max))
            }
            None => None,
        };
        match scheme {
            Scheme::Bf => (out.r1sdr_obj, out.bf_rounded, out.bf_ber) = (sol.gamma_star, bp.min_sinr, ber),
            Scheme::Bfa => (out.r2sdr_obj, out.bfa_rounded, out.bfa_ber) = (sol.gamma_star, bp.min_sinr, ber),
        }
    }
    Ok(out)
}

/// Runs every `(point, trial)` pair in parallel; the result is independent of the thread count.
pub fn run_sweep(s: &Scenario) -> Result<SweepResult> {
    s.validate()?;
    let blocks = match s.sweep {
        Sweep::BerPower { blocks, .. } => Some(blocks),
        Sweep::BoundsLab { .. } => {
            return Err(Error::InvalidArgument("bounds lab scenarios run through run_bounds_lab".into()))
        }
        _ => None,
    };
    let points = s.points();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..s.trials).map(move |t| (p, t))).collect();
    let outcomes: Vec<Result<TrialRecord>> =
        jobs.par_iter().map(|&(p, t)| solve_trial(s, p, points[p], t, blocks)).collect();
    let mut summaries: Vec<PointSummary> =
        points.iter().map(|&value| PointSummary { value, records: Vec::new(), failures: 0 }).collect();
    for (&(p, _), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(rec) => summaries[p].records.push(rec),
            Err(e @ (Error::NoConstraints | Error::InvalidConfig(_))) => return Err(e),
            Err(_) => summaries[p].failures += 1,
        }
    }
    for p in &summaries {
        if p.failures as f64 > MAX_FAILURE_FRACTION * s.trials as f64 {
            return Err(Error::TooManyFailures { failed: p.failures, total: s.trials });
        }
    }
    Ok(SweepResult { name: s.name.clone(), column: s.sweep.column(), points: summaries, ber: blocks.is_some() })
}

/// Tail reports sampled around one relaxation solution.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsInstance {
    pub trial: usize,
    pub gamma_star: f64,
    /// One report per user over the `rho` grid.
    pub lemma1: Vec<TailReport>,
    /// Report over the `v` grid for the tightest constraint.
    pub lemma2: TailReport,
    pub constraint: ConstraintLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsResult {
    pub name: String,
    pub instances: Vec<BoundsInstance>,
}

fn label_text(l: &ConstraintLabel) -> String {
    match l {
        ConstraintLabel::Total => "total".into(),
        ConstraintLabel::PerRelay(i) => format!("relay{i}"),
        ConstraintLabel::Primal(u) => format!("primal{u}"),
    }
}

impl BoundsResult {
    pub fn lemma1_csv(&self) -> String {
        let mut out = String::from("trial,user,omega,grid_value,empirical,ci_halfwidth,analytic_bound\n");
        for inst in &self.instances {
            for (u, rep) in inst.lemma1.iter().enumerate() {
                for k in 0..rep.grid.len() {
                    let _ = writeln!(
                        out,
                        "{},{},{:.10e},{},{:.10e},{:.10e},{:.10e}",
                        inst.trial,
                        u,
                        rep.omega.unwrap_or(f64::NAN),
                        rep.grid[k],
                        rep.empirical[k],
                        rep.ci_halfwidth[k],
                        rep.analytic[k]
                    );
                }
            }
        }
        out
    }

    pub fn lemma2_csv(&self) -> String {
        let mut out = String::from("trial,constraint,grid_value,empirical,ci_halfwidth,analytic_bound\n");
        for inst in &self.instances {
            let rep = &inst.lemma2;
            for k in 0..rep.grid.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.10e},{:.10e},{:.10e}",
                    inst.trial,
                    label_text(&inst.constraint),
                    rep.grid[k],
                    rep.empirical[k],
                    rep.ci_halfwidth[k],
                    rep.analytic[k]
                );
            }
        }
        out
    }

    /// Worst case over instances (and users) at each grid point, against the bound at that point.
    fn envelope<'a>(reports: impl Iterator<Item = &'a TailReport>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut grid = Vec::new();
        let mut emp: Vec<f64> = Vec::new();
        let mut bound: Vec<f64> = Vec::new();
        for rep in reports {
            if grid.is_empty() {
                grid = rep.grid.clone();
                emp = vec![0.0; grid.len()];
                bound = vec![f64::INFINITY; grid.len()];
            }
            for k in 0..grid.len() {
                emp[k] = emp[k].max(rep.empirical[k]);
                bound[k] = bound[k].min(rep.analytic[k]);
            }
        }
        (grid, emp, bound)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let (g1, e1, b1) = Self::envelope(self.instances.iter().flat_map(|i| i.lemma1.iter()));
        let (g2, e2, b2) = Self::envelope(self.instances.iter().map(|i| &i.lemma2));
        let parts = [
            ("lemma1", self.lemma1_csv(), "rho", g1, e1, b1),
            ("lemma2", self.lemma2_csv(), "v", g2, e2, b2),
        ];
        for (tag, csv, xlabel, g, e, b) in parts {
            let stem = format!("{}_{}", self.name, tag);
            let path = dir.join(format!("{stem}.csv"));
            fs::write(&path, csv)?;
            let svg = svg_line_chart(&stem, xlabel, "tail probability", &g, &[("worst empirical", e), ("smallest bound", b)]);
            fs::write(dir.join(format!("{stem}.svg")), svg)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Solves R2SDR on `trials` instances and samples the tail events around its solution.
pub fn run_bounds_lab(s: &Scenario) -> Result<BoundsResult> {
    s.validate()?;
    let (rho, v, samples) = match &s.sweep {
        Sweep::BoundsLab { rho, v, samples } => (rho.clone(), v.clone(), *samples),
        _ => (default_rho(), default_v(), DEFAULT_SAMPLES),
    };
    let mut base = s.clone();
    base.sweep = Sweep::BoundsLab { rho: rho.clone(), v: v.clone(), samples };
    if !base.network.to_config()?.has_constraints() {
        return Err(Error::NoConstraints);
    }
    let opts = s.sdr_options();
    let instances = (0..s.trials)
        .map(|t| {
            let (cfg, r, cons) = base.instance(0.0, t)?;
            let users = build_user_forms(&r, &cfg);
            let sol = solve_sdr(Scheme::Bfa, &users, &cons, &opts)?;
            let mut rng = stream_rng(s.seed, &[t as u64, u64::MAX]);
            let lemma1 = lemma1_empirical_all(&sol.x1, &sol.x2, &users, &rho, samples, &mut rng)?;
            let cf = tightest_constraint(&cons, &sol.x1, &sol.x2).ok_or(Error::NoConstraints)?;
            let lemma2 = lemma2_empirical(&sol.x1, &sol.x2, cf, &v, samples, &mut rng)?;
            Ok(BoundsInstance { trial: t, gamma_star: sol.gamma_star, lemma1, lemma2, constraint: cf.label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsResult { name: s.name.clone(), instances })
}

/// What a run produced on disk.
#[derive(Debug, Clone)]
pub enum RunOutput {
    Sweep(SweepResult, PathBuf),
    Bounds(BoundsResult, Vec<PathBuf>),
}

/// Runs the scenario's sweep and writes its files into `out_dir`.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    if matches!(s.sweep, Sweep::BoundsLab { .. }) {
        let res = run_bounds_lab(s)?;
        let paths = res.write(&s.out_dir)?;
        return Ok(RunOutput::Bounds(res, paths));
    }
    let res = run_sweep(s)?;
    let path = res.write(&s.out_dir)?;
    Ok(RunOutput::Sweep(res, path))
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// A plain SVG line chart with linear axes; NaN values are skipped.
pub fn svg_line_chart(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 70.0, 160.0, 40.0, 50.0);
    let finite = |v: &f64| v.is_finite();
    let (mut x0, mut x1) = xs.iter().copied().filter(finite).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(finite);
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !(x0 < x1) {
        (x0, x1) = if x0.is_finite() { (x0 - 1.0, x0 + 1.0) } else { (0.0, 1.0) };
    }
    if !(y0 < y1) {
        (y0, y1) = if y0.is_finite() { (y0 - 1.0, y0 + 1.0) } else { (0.0, 1.0) };
    }
    y0 = y0.min(0.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let (ax0, ax1, ay0, ay1) = (left, w - right, h - bottom, top);
    let _ = writeln!(s, r#"<path d="M{ax0},{ay1} L{ax0},{ay0} L{ax1},{ay0}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(fx), ay0 + 16.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, ax0 - 6.0, py(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (ax0 + ax1) / 2.0, h - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        escape(ylabel)
    );
    for (i, (name, v)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(v)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        }
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, ax1 + 10.0, ax1 + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, ax1 + 36.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn mimo(users: usize) -> NetworkSpec {
    NetworkSpec {
        architecture: Architecture::Mimo,
        relays: 4,
        group_sizes: vec![users / 2; 2],
        tx_power_db: OneOrMany::One(0.0),
        relay_noise: OneOrMany::One(0.25),
        user_noise: OneOrMany::One(0.25),
        total_power_db: None,
        per_relay_bound_db: None,
        primal_users: Vec::new(),
    }
}

fn preset_scenario(name: &str, network: NetworkSpec, sweep: Sweep) -> Scenario {
    Scenario {
        name: name.into(),
        network,
        sweep,
        trials: DEFAULT_TRIALS,
        candidates: DEFAULT_CANDIDATES,
        seed: 1,
        out_dir: default_out(),
        tol_gamma: DEFAULT_TOL_GAMMA,
        sdp_tol: DEFAULT_SDP_TOL,
    }
}

pub const PRESET_NAMES: [&str; 6] = ["fig1", "fig1_m12", "fig2", "fig3", "fig4", "bounds"];

/// Built-in scenarios mirroring the published MIMO relay experiments at desk scale.
pub fn preset(name: &str) -> Option<Scenario> {
    let power_grid = vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
    let s = match name {
        "fig1" => preset_scenario(name, mimo(16), Sweep::TotalPower { values_db: power_grid }),
        "fig1_m12" => preset_scenario(name, mimo(12), Sweep::TotalPower { values_db: power_grid }),
        "fig2" => {
            let mut net = mimo(16);
            net.total_power_db = Some(4.0);
            net.per_relay_bound_db = Some(OneOrMany::One(-5.0));
            preset_scenario(name, net, Sweep::PerRelayCount { counts: None })
        }
        "fig3" => {
            let mut net = mimo(12);
            net.total_power_db = Some(10.0);
            let sweep = Sweep::PrimalUserCount { counts: (0..=6).collect(), noise: 0.25, interference_bound_db: 3.0 };
            preset_scenario(name, net, sweep)
        }
        "fig4" => preset_scenario(name, mimo(16), Sweep::BerPower { values_db: power_grid, blocks: DEFAULT_BER_BLOCKS }),
        "bounds" => {
            let mut net = mimo(16);
            net.total_power_db = Some(4.0);
            let mut s = preset_scenario(name, net, Sweep::BoundsLab { rho: default_rho(), v: default_v(), samples: DEFAULT_SAMPLES });
            s.trials = 10;
            s
        }
        _ => return None,
    };
    Some(s)
}

/// Outcome of one built-in check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Quick end-to-end checks on small deterministic instances.
pub fn selftest() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        checks.push(Check { name, passed, detail });
    };

    push("channel draws are reproducible", (|| {
        let cfg = mimo(16).to_config()?;
        let same = generate_channels(&cfg, 7) == generate_channels(&cfg, 7);
        Ok((same, format!("f: {} vectors, g: {} vectors", cfg.groups(), cfg.total_users())))
    })());

    push("scalar relaxation reaches 2/3", (|| {
        let users = vec![scalar_user()];
        let cons = vec![scalar_budget()];
        let sol = solve_sdr(Scheme::Bfa, &users, &cons, &SdrOptions { tol_gamma: 1e-7, ..SdrOptions::default() })?;
        Ok(((sol.gamma_star - 2.0 / 3.0).abs() <= 1e-3, format!("gamma* = {:.6}", sol.gamma_star)))
    })());

    push("scalar beamforming reaches 1/2", (|| {
        let users = vec![scalar_user()];
        let cons = vec![scalar_budget()];
        let sol = solve_sdr(Scheme::Bf, &users, &cons, &SdrOptions { tol_gamma: 1e-7, ..SdrOptions::default() })?;
        Ok(((sol.gamma_star - 0.5).abs() <= 1e-3, format!("gamma* = {:.6}", sol.gamma_star)))
    })());

    push("rounded SINR stays below the relaxation", (|| {
        let mut s = preset("fig1").expect("preset");
        s.network.relays = 2;
        s.network.group_sizes = vec![2, 2];
        s.network.architecture = Architecture::Distributed;
        s.sweep = Sweep::TotalPower { values_db: vec![0.0, 6.0] };
        s.trials = 3;
        s.candidates = 50;
        let res = run_sweep(&s)?;
        let ok = res.points.iter().flat_map(|p| &p.records).all(|r| r.bf_gap() >= -1e-6 && r.bfa_gap() >= -1e-6);
        Ok((ok, format!("{} trials checked", res.points.iter().map(|p| p.records.len()).sum::<usize>())))
    })());

    push("sweep output is deterministic", (|| {
        let mut s = preset("fig1").expect("preset");
        s.network.architecture = Architecture::Distributed;
        s.network.group_sizes = vec![2, 2];
        s.sweep = Sweep::TotalPower { values_db: vec![3.0] };
        s.trials = 2;
        s.candidates = 20;
        let a = run_sweep(&s)?.to_csv();
        let b = run_sweep(&s)?.to_csv();
        Ok((a == b, format!("{} bytes", a.len())))
    })());

    push("presets parse back from TOML", (|| {
        for name in PRESET_NAMES {
            let s = preset(name).expect("preset");
            let back = Scenario::from_toml(&s.to_toml(), name)?;
            if back != s {
                return Ok((false, format!("{name} changed in a round trip")));
            }
        }
        Ok((true, format!("{} presets", PRESET_NAMES.len())))
    })());

    checks
}

fn scalar_user() -> UserForms {
    use crate::matkernel::{c, CMat};
    use crate::network::UserId;
    let one = CMat::from_element(1, 1, c(1.0, 0.0));
    UserForms { user: UserId { group: 0, index: 0 }, a: one.clone(), abar: one.clone(), c: one.clone(), cbar: one }
}

fn scalar_budget() -> ConstraintForm {
    use crate::matkernel::{c, CMat};
    let half = CMat::from_element(1, 1, c(0.5, 0.0));
    ConstraintForm { d: half.clone(), dbar: half, bound: 1.0, label: ConstraintLabel::Total }
}
