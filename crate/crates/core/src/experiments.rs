//! Scenario harnesses. Each one runs a fixed configuration, returns a report
//! and renders it as CSV, so that (config, seed) fully determines the bytes
//! written.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, Evolver, Scheme, Stepper, WaveState};
use crate::entangle::{
    self, EntangleError, LocalityVerdict, Outcome, PairMeasures, PureState, RelationEventLog,
    Transition, APPARATUS, ELECTRON_2,
};
use crate::geometry::{self, GeometryError, ShortcutMode, ShortcutReport};
use crate::relgraph::{build_lattice_capped, GraphError, DEFAULT_MAX_VERTICES};
use crate::BUILD_ID;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Entangle(#[from] EntangleError),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("locality check failed: {0}")]
    Locality(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

impl ExperimentError {
    /// Process exit code: 2 for validation failures, 3 when a size or
    /// capability limit is hit, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Graph(GraphError::TooLarge { .. })
            | ExperimentError::Dynamics(DynamicsError::ExactUnavailable { .. })
            | ExperimentError::Dynamics(DynamicsError::TooLargeForEnumeration { .. })
            | ExperimentError::Geometry(GeometryError::TooLarge { .. }) => 3,
            ExperimentError::Dynamics(DynamicsError::SolverError(_))
            | ExperimentError::Geometry(GeometryError::SolverError)
            | ExperimentError::Locality(_)
            | ExperimentError::Io(_) => 1,
            _ => 2,
        }
    }
}

/// Plain-text `key = value` configuration. Blank lines and lines starting with
/// `#` are ignored; a repeated key keeps its last value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::InvalidConfig(format!("line {}: expected key = value", i + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ExperimentError::InvalidConfig(format!(
                    "line {}: empty key",
                    i + 1
                )));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| {
                    ExperimentError::InvalidConfig(format!("{key} = {v:?} is not a valid value"))
                })
            })
            .transpose()
    }

    /// Rejects keys outside `known`.
    pub fn expect_keys(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(ExperimentError::InvalidConfig(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    /// `key=value` lines in key order.
    pub fn canonical_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Hex SHA-256 of [`Config::canonical_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One-line provenance record written next to every scenario's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub scenario: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
}

impl Manifest {
    pub fn new(scenario: &str, config: &Config, seed: Option<u64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            config_hash: config.hash(),
            seed,
            version: BUILD_ID.to_string(),
        }
    }

    pub fn line(&self) -> String {
        let seed = self
            .seed
            .map(|s| s.to_string())
            .unwrap_or_else(|| "none".into());
        format!(
            "scenario={} config_hash={} seed={} version={}",
            self.scenario, self.config_hash, seed, self.version
        )
    }
}

/// A named set of CSV files plus the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub manifest: Manifest,
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    /// Writes every file and `manifest.txt` into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        fs::write(
            dir.join("manifest.txt"),
            format!("{}\n", self.manifest.line()),
        )
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_str())
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Dispersion

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionConfig {
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub ticks: u64,
    pub scheme: Scheme,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        Self {
            n: 64,
            m: 2,
            mu: 0.25,
            ticks: 32,
            scheme: Scheme::Exact,
        }
    }
}

impl DispersionConfig {
    pub const KEYS: [&'static str; 5] = ["n", "m", "mu", "ticks", "scheme"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.expect_keys(&Self::KEYS)?;
        let d = Self::default();
        let scheme = match cfg.get("scheme") {
            Some(s) => s.parse::<Scheme>()?,
            None => d.scheme,
        };
        Ok(Self {
            n: cfg.parsed("n")?.unwrap_or(d.n),
            m: cfg.parsed("m")?.unwrap_or(d.m),
            mu: cfg.parsed("mu")?.unwrap_or(d.mu),
            ticks: cfg.parsed("ticks")?.unwrap_or(d.ticks),
            scheme,
        })
    }

    pub fn to_config(&self) -> Config {
        let mut c = Config::default();
        c.set("n", self.n);
        c.set("m", self.m);
        c.set("mu", self.mu);
        c.set("ticks", self.ticks);
        c.set("scheme", self.scheme);
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionRow {
    pub tick: u64,
    /// `<phi_m | psi(t)>`.
    pub overlap: Complex64,
    /// Unwrapped phase of the overlap.
    pub phase: f64,
    pub norm_sqr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionReport {
    pub config: DispersionConfig,
    pub k: f64,
    pub rows: Vec<DispersionRow>,
    /// Fitted phase advance per tick, magnitude.
    pub phase_per_tick: f64,
    /// `mu (2 - 2 cos k)`.
    pub lattice_prediction: f64,
    /// `mu k^2`.
    pub continuum_prediction: f64,
    pub lattice_deviation: f64,
    /// Relative deviation from the continuum prediction; zero for `k = 0`.
    pub continuum_deviation: f64,
    /// `|psi(T)|^2 - 1`.
    pub norm_growth: f64,
}

/// Tracks the phase of a ring plane wave under repeated ticks.
pub fn run_dispersion(cfg: &DispersionConfig) -> Result<DispersionReport> {
    if cfg.n < 8 {
        return Err(ExperimentError::InvalidGeometry(format!(
            "ring size {} below 8",
            cfg.n
        )));
    }
    if cfg.m >= cfg.n {
        return Err(ExperimentError::InvalidGeometry(format!(
            "mode {} not below ring size {}",
            cfg.m, cfg.n
        )));
    }
    let g = build_lattice_capped(&[cfg.n], true, DEFAULT_MAX_VERTICES.max(cfg.n))?;
    let evolver = Evolver::new(&g, Stepper::new(cfg.scheme, cfg.mu)?)?;
    let phi = WaveState::plane_wave(cfg.n, cfg.m);
    // signed wave number in (-pi, pi]
    let m_signed = if 2 * cfg.m > cfg.n {
        cfg.m as f64 - cfg.n as f64
    } else {
        cfg.m as f64
    };
    let k = 2.0 * std::f64::consts::PI * m_signed / cfg.n as f64;

    let mut rows = Vec::with_capacity(cfg.ticks as usize + 1);
    let mut state = phi.clone();
    let mut phase = 0.0;
    let mut prev_arg = 0.0;
    for tick in 0..=cfg.ticks {
        if tick > 0 {
            state = evolver.step(&state)?;
        }
        let overlap = phi.inner(&state);
        let arg = overlap.arg();
        if tick > 0 {
            let mut delta = arg - prev_arg;
            while delta > std::f64::consts::PI {
                delta -= 2.0 * std::f64::consts::PI;
            }
            while delta <= -std::f64::consts::PI {
                delta += 2.0 * std::f64::consts::PI;
            }
            phase += delta;
        }
        prev_arg = arg;
        rows.push(DispersionRow {
            tick,
            overlap,
            phase,
            norm_sqr: state.norm_sqr(),
        });
    }

    // least-squares slope through the origin
    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), r| {
        (n + r.tick as f64 * r.phase, d + (r.tick as f64).powi(2))
    });
    let phase_per_tick = if den > 0.0 { (num / den).abs() } else { 0.0 };
    let lattice_prediction = cfg.mu * (2.0 - 2.0 * k.cos());
    let continuum_prediction = cfg.mu * k * k;
    let continuum_deviation = if continuum_prediction > 0.0 {
        (phase_per_tick - continuum_prediction).abs() / continuum_prediction
    } else {
        phase_per_tick
    };
    let norm_growth = rows.last().map_or(0.0, |r| r.norm_sqr - 1.0);
    Ok(DispersionReport {
        config: cfg.clone(),
        k,
        phase_per_tick,
        lattice_prediction,
        continuum_prediction,
        lattice_deviation: (phase_per_tick - lattice_prediction).abs(),
        continuum_deviation,
        norm_growth,
        rows,
    })
}

impl DispersionReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("tick,re,im,phase,norm_sqr\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.tick,
                fmt_f(r.overlap.re),
                fmt_f(r.overlap.im),
                fmt_f(r.phase),
                fmt_f(r.norm_sqr)
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("quantity,value\n");
        for (name, v) in [
            ("k", self.k),
            ("phase_per_tick", self.phase_per_tick),
            ("lattice_prediction", self.lattice_prediction),
            ("continuum_prediction", self.continuum_prediction),
            ("lattice_deviation", self.lattice_deviation),
            ("continuum_deviation", self.continuum_deviation),
            ("norm_growth", self.norm_growth),
        ] {
            let _ = writeln!(out, "{name},{}", fmt_f(v));
        }
        out
    }

    pub fn artifacts(&self) -> Artifacts {
        Artifacts {
            manifest: Manifest::new("dispersion", &self.config.to_config(), None),
            files: vec![
                ("dispersion.csv".into(), self.rows_csv()),
                ("dispersion_summary.csv".into(), self.summary_csv()),
            ],
        }
    }
}

// ---------------------------------------------------------------------------
// Double slit

/// Open-boundary rectangle with a barrier column pierced at two rows. The
/// first lattice axis is `x`; vertex `(x, y)` has index `x + width * y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleSlitConfig {
    pub width: usize,
    pub height: usize,
    pub barrier_x: usize,
    pub slit_a: usize,
    pub slit_b: usize,
    pub source_x: usize,
    pub source_y: usize,
    /// Gaussian standard deviation in vertices.
    pub source_width: f64,
    /// Wave number of the source along `+x`.
    pub source_momentum: f64,
    pub mu: f64,
    pub ticks: u64,
    pub screen_x: usize,
}

impl Default for DoubleSlitConfig {
    fn default() -> Self {
        Self {
            width: 61,
            height: 41,
            barrier_x: 20,
            slit_a: 14,
            slit_b: 26,
            source_x: 5,
            source_y: 20,
            source_width: 3.0,
            source_momentum: FRAC_PI_2,
            mu: 0.2,
            ticks: 120,
            screen_x: 55,
        }
    }
}

impl DoubleSlitConfig {
    pub const KEYS: [&'static str; 12] = [
        "width",
        "height",
        "barrier_x",
        "slit_a",
        "slit_b",
        "source_x",
        "source_y",
        "source_width",
        "source_momentum",
        "mu",
        "ticks",
        "screen_x",
    ];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.expect_keys(&Self::KEYS)?;
        let d = Self::default();
        Ok(Self {
            width: cfg.parsed("width")?.unwrap_or(d.width),
            height: cfg.parsed("height")?.unwrap_or(d.height),
            barrier_x: cfg.parsed("barrier_x")?.unwrap_or(d.barrier_x),
            slit_a: cfg.parsed("slit_a")?.unwrap_or(d.slit_a),
            slit_b: cfg.parsed("slit_b")?.unwrap_or(d.slit_b),
            source_x: cfg.parsed("source_x")?.unwrap_or(d.source_x),
            source_y: cfg.parsed("source_y")?.unwrap_or(d.source_y),
            source_width: cfg.parsed("source_width")?.unwrap_or(d.source_width),
            source_momentum: cfg.parsed("source_momentum")?.unwrap_or(d.source_momentum),
            mu: cfg.parsed("mu")?.unwrap_or(d.mu),
            ticks: cfg.parsed("ticks")?.unwrap_or(d.ticks),
            screen_x: cfg.parsed("screen_x")?.unwrap_or(d.screen_x),
        })
    }

    pub fn to_config(&self) -> Config {
        let mut c = Config::default();
        c.set("width", self.width);
        c.set("height", self.height);
        c.set("barrier_x", self.barrier_x);
        c.set("slit_a", self.slit_a);
        c.set("slit_b", self.slit_b);
        c.set("source_x", self.source_x);
        c.set("source_y", self.source_y);
        c.set("source_width", self.source_width);
        c.set("source_momentum", self.source_momentum);
        c.set("mu", self.mu);
        c.set("ticks", self.ticks);
        c.set("screen_x", self.screen_x);
        c
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::InvalidGeometry(msg));
        if self.slit_a == self.slit_b {
            return bad(format!("slits coincide at row {}", self.slit_a));
        }
        if self.width < 3 || self.height < 3 {
            return bad(format!("{}x{} lattice too small", self.width, self.height));
        }
        for (name, v, max) in [
            ("barrier_x", self.barrier_x, self.width),
            ("source_x", self.source_x, self.width),
            ("screen_x", self.screen_x, self.width),
            ("slit_a", self.slit_a, self.height),
            ("slit_b", self.slit_b, self.height),
            ("source_y", self.source_y, self.height),
        ] {
            if v >= max {
                return bad(format!("{name} = {v} outside 0..{max}"));
            }
        }
        if self.source_x == self.barrier_x || self.screen_x == self.barrier_x {
            return bad("source and screen must lie off the barrier".into());
        }
        if (self.source_x < self.barrier_x) == (self.screen_x < self.barrier_x) {
            return bad("source and screen must be on opposite sides of the barrier".into());
        }
        if !(self.source_width.is_finite() && self.source_width > 0.0)
            || !self.source_momentum.is_finite()
        {
            return bad("source width must be positive and momentum finite".into());
        }
        Ok(())
    }

    fn index(&self, x: usize, y: usize) -> usize {
        x + self.width * y
    }

    /// Normalized Gaussian packet, zero on the whole barrier column.
    fn source(&self) -> Result<WaveState> {
        let two_var = 2.0 * self.source_width * self.source_width;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.width * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                if x == self.barrier_x {
                    continue;
                }
                let dx = x as f64 - self.source_x as f64;
                let dy = y as f64 - self.source_y as f64;
                amps[self.index(x, y)] = Complex64::from_polar(
                    (-(dx * dx + dy * dy) / two_var).exp(),
                    self.source_momentum * dx,
                );
            }
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(WaveState::new(amps)?)
    }

    /// Screen intensity at the final tick with the given slit rows open.
    fn screen_intensity(&self, open: &[usize]) -> Result<Vec<f64>> {
        let mut g = build_lattice_capped(&[self.width, self.height], false, usize::MAX)?;
        for y in (0..self.height).filter(|y| !open.contains(y)) {
            g = g.isolate(self.index(self.barrier_x, y))?;
        }
        let evolver = Evolver::new(&g, Stepper::new(Scheme::Cayley, self.mu)?)?;
        let end = evolver.run(&self.source()?, self.ticks)?;
        Ok((0..self.height)
            .map(|y| end.amplitudes()[self.index(self.screen_x, y)].norm_sqr())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleSlitReport {
    pub config: DoubleSlitConfig,
    pub both: Vec<f64>,
    pub slit_a_only: Vec<f64>,
    pub slit_b_only: Vec<f64>,
    /// `I_both - I_a - I_b` per screen row.
    pub residual: Vec<f64>,
    pub local_maxima: usize,
    pub peak: f64,
    pub max_residual: f64,
    /// Largest `|I(y) - I(y')|` over rows mirrored about the slits' midline.
    pub mirror_error: f64,
}

/// Strict interior local maxima.
pub fn count_local_maxima(profile: &[f64]) -> usize {
    profile
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count()
}

/// Evolves the source through both slits and through each slit alone.
pub fn run_double_slit(cfg: &DoubleSlitConfig) -> Result<DoubleSlitReport> {
    cfg.validate()?;
    let both = cfg.screen_intensity(&[cfg.slit_a, cfg.slit_b])?;
    let slit_a_only = cfg.screen_intensity(&[cfg.slit_a])?;
    let slit_b_only = cfg.screen_intensity(&[cfg.slit_b])?;
    let residual: Vec<f64> = (0..cfg.height)
        .map(|y| both[y] - slit_a_only[y] - slit_b_only[y])
        .collect();
    let peak = both.iter().copied().fold(0.0, f64::max);
    let max_residual = residual.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let axis2 = cfg.slit_a + cfg.slit_b;
    let mirror_error = (0..cfg.height)
        .filter(|&y| y <= axis2 && axis2 - y < cfg.height)
        .map(|y| (both[y] - both[axis2 - y]).abs())
        .fold(0.0, f64::max);
    Ok(DoubleSlitReport {
        config: cfg.clone(),
        local_maxima: count_local_maxima(&both),
        peak,
        max_residual,
        mirror_error,
        both,
        slit_a_only,
        slit_b_only,
        residual,
    })
}

impl DoubleSlitReport {
    pub fn screen_csv(&self) -> String {
        let mut out = String::from("y,both,slit_a,slit_b,residual\n");
        for y in 0..self.both.len() {
            let _ = writeln!(
                out,
                "{y},{},{},{},{}",
                fmt_f(self.both[y]),
                fmt_f(self.slit_a_only[y]),
                fmt_f(self.slit_b_only[y]),
                fmt_f(self.residual[y])
            );
        }
        out
    }

    pub fn fringe_csv(&self) -> String {
        format!(
            "quantity,value\nlocal_maxima,{}\npeak,{}\nmax_residual,{}\nresidual_over_peak,{}\nmirror_error,{}\n",
            self.local_maxima,
            fmt_f(self.peak),
            fmt_f(self.max_residual),
            fmt_f(self.max_residual / self.peak),
            fmt_f(self.mirror_error)
        )
    }

    pub fn artifacts(&self) -> Artifacts {
        Artifacts {
            manifest: Manifest::new("doubleslit", &self.config.to_config(), None),
            files: vec![
                ("screen.csv".into(), self.screen_csv()),
                ("fringes.csv".into(), self.fringe_csv()),
            ],
        }
    }
}

// ---------------------------------------------------------------------------
// EPR

#[derive(Debug, Clone, PartialEq)]
pub struct EprReport {
    pub seed: u64,
    pub eps: f64,
    /// Ticks 0 (singlet), 1 (after the interaction), 2 (after collapse).
    pub states: Vec<PureState>,
    pub measures: Vec<(u64, (usize, usize), PairMeasures)>,
    pub outcome: Outcome,
    pub log: RelationEventLog,
    pub verdict: LocalityVerdict,
}

/// Singlet plus apparatus, measurement interaction on electron 2, then a
/// seeded collapse of the apparatus.
pub fn run_epr_scenario(seed: u64, eps: f64) -> Result<EprReport> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(ExperimentError::InvalidConfig(format!(
            "eps = {eps} must be finite and non-negative"
        )));
    }
    let s0 = entangle::make_epr_with_apparatus();
    let mut log = RelationEventLog::from_state(&s0, eps);
    let s1 = entangle::apply_measurement_interaction(&s0, ELECTRON_2, APPARATUS)?;
    log = entangle::propagate_relations(
        &s0,
        &s1,
        Transition::Interaction(ELECTRON_2, APPARATUS),
        &log,
        eps,
    )?;
    let (outcome, s2) = entangle::collapse_seeded(&s1, APPARATUS, seed)?;
    log = entangle::propagate_relations(&s1, &s2, Transition::Collapse, &log, eps)?;
    let verdict = entangle::locality_check(&log);
    if let LocalityVerdict::Fail { reason, .. } = &verdict {
        return Err(ExperimentError::Locality(reason.clone()));
    }
    let states = vec![s0, s1, s2];
    let measures = states
        .iter()
        .flat_map(|s| {
            entangle::all_pair_measures(s)
                .into_iter()
                .map(move |(p, m)| (s.tick(), p, m))
        })
        .collect();
    Ok(EprReport {
        seed,
        eps,
        states,
        measures,
        outcome,
        log,
        verdict,
    })
}

/// Fraction of `+` outcomes over `trials` collapses of the post-interaction
/// state, all drawn from one generator seeded with `seed`.
pub fn born_frequency(trials: u64, seed: u64) -> Result<f64> {
    let s0 = entangle::make_epr_with_apparatus();
    let s1 = entangle::apply_measurement_interaction(&s0, ELECTRON_2, APPARATUS)?;
    let (plus, _) = entangle::pointer_probabilities(&s1, APPARATUS)?;
    let mut rng = entangle::seeded_rng(seed);
    let hits = (0..trials).filter(|_| rng.random::<f64>() < plus).count();
    Ok(hits as f64 / trials as f64)
}

impl EprReport {
    pub fn measures_csv(&self) -> String {
        let mut out = String::from("tick,a,b,mutual_information,negativity\n");
        for (tick, (a, b), m) in &self.measures {
            let _ = writeln!(
                out,
                "{tick},{a},{b},{},{}",
                fmt_f(m.mutual_information),
                fmt_f(m.negativity)
            );
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut buf = Vec::new();
        self.log.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn measure(&self, tick: u64, a: usize, b: usize) -> Option<PairMeasures> {
        self.measures
            .iter()
            .find(|(t, p, _)| *t == tick && *p == (a.min(b), a.max(b)))
            .map(|(_, _, m)| *m)
    }

    pub fn artifacts(&self) -> Artifacts {
        let mut cfg = Config::default();
        cfg.set("eps", self.eps);
        Artifacts {
            manifest: Manifest::new("epr", &cfg, Some(self.seed)),
            files: vec![
                ("epr_measures.csv".into(), self.measures_csv()),
                ("epr_events.csv".into(), self.events_csv()),
                (
                    "epr_outcome.csv".into(),
                    format!("quantity,value\noutcome,{}\n", self.outcome),
                ),
            ],
        }
    }
}

// ---------------------------------------------------------------------------
// Shortcut

#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutSweep {
    pub n: usize,
    pub mode: ShortcutMode,
    pub rows: Vec<(f64, ShortcutReport)>,
}

/// Distance impact of one antipodal chord on the ring `C_n`, for each
/// conductance in `w_list`.
pub fn run_shortcut(n: usize, w_list: &[f64], mode: ShortcutMode) -> Result<ShortcutSweep> {
    if n < 8 || n % 2 != 0 {
        return Err(ExperimentError::InvalidGeometry(format!(
            "ring size {n} must be even and at least 8"
        )));
    }
    let g = build_lattice_capped(&[n], true, DEFAULT_MAX_VERTICES.max(n))?;
    let (x, y) = (0, n / 2);
    let rows = w_list
        .iter()
        .map(|&w| Ok((w, geometry::shortcut_impact(&g, x, y, (x, y), w, mode)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShortcutSweep { n, mode, rows })
}

impl ShortcutSweep {
    pub fn csv(&self) -> String {
        let mut out = format!("w,{}\n", geometry::REPORT_HEADER);
        let pair = (0, self.n / 2);
        for (w, r) in &self.rows {
            let mut buf = Vec::new();
            r.write_rows(&mut buf, pair).expect("writing to memory");
            for line in String::from_utf8(buf).expect("ascii csv").lines() {
                let _ = writeln!(out, "{},{line}", fmt_f(*w));
            }
        }
        out
    }

    pub fn artifacts(&self) -> Artifacts {
        let mut cfg = Config::default();
        cfg.set("n", self.n);
        cfg.set("mode", format!("{:?}", self.mode));
        cfg.set(
            "w",
            self.rows
                .iter()
                .map(|(w, _)| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        Artifacts {
            manifest: Manifest::new("shortcut", &cfg, None),
            files: vec![("shortcut.csv".into(), self.csv())],
        }
    }
}

// ---------------------------------------------------------------------------
// Built-in invariant suite

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Quick self-test: path-sum oracle, integrator unitarity and the EPR
/// locality audit.
pub fn run_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    let path_sum = (|| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for text in ["0 1\n1 2", "0 1\n1 2\n2 3\n3 0", "0 1\n0 2\n0 3\n1 2\n3 4"] {
            let g = crate::relgraph::from_edge_list(text)?;
            for t in 0..=4 {
                let k = dynamics::kernel_matrix(&g, 0.3, t, Scheme::Euler)?;
                let p = dynamics::path_sum_kernel(&g, 0.3, t as u32)?;
                worst = worst.max(dynamics::max_deviation(&k, &p));
            }
        }
        Ok(worst)
    })();
    out.push(match path_sum {
        Ok(d) => CheckResult {
            name: "path-sum",
            passed: d <= 1e-12,
            detail: format!("max deviation {d:.3e}"),
        },
        Err(e) => CheckResult {
            name: "path-sum",
            passed: false,
            detail: e.to_string(),
        },
    });

    let unitarity = (|| -> Result<f64> {
        let g = build_lattice_capped(&[32], true, 32)?;
        let mut worst: f64 = 0.0;
        for scheme in [Scheme::Cayley, Scheme::Exact] {
            let ev = Evolver::new(&g, Stepper::new(scheme, 0.3)?)?;
            let start = WaveState::localized(32, 3)?;
            let end = ev.run(&start, 200)?;
            worst = worst.max((end.norm() - 1.0).abs());
        }
        Ok(worst)
    })();
    out.push(match unitarity {
        Ok(d) => CheckResult {
            name: "unitarity",
            passed: d <= 1e-12,
            detail: format!("max norm drift {d:.3e}"),
        },
        Err(e) => CheckResult {
            name: "unitarity",
            passed: false,
            detail: e.to_string(),
        },
    });

    out.push(match run_epr_scenario(0, entangle::DEFAULT_EPSILON) {
        Ok(r) => CheckResult {
            name: "locality",
            passed: r.verdict.passed(),
            detail: format!("{} relation events", r.log.len()),
        },
        Err(e) => CheckResult {
            name: "locality",
            passed: false,
            detail: e.to_string(),
        },
    });
    out
}
