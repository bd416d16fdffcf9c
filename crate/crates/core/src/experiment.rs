//! Config-driven experiments: weak and strong sweeps, estimator studies,
//! the controlled-volatility counterexample and plot-script emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    complexity_report, fit_loglog, shared_noise_budget, NoiseMode, SlopeFit, SweepPoint,
    SweepSeries, DEFAULT_RESAMPLES, MIN_FIT_POINTS,
};
use crate::dynamics::{make_lattice, simulate_pair, KeyedNoise, TimeGrid};
use crate::error::{PolexError, Result};
use crate::estimators::{
    aggregated_terminal_mean, conditional_value, conditional_weak_error_quantile,
    convergence_sweep, naive_estimate, orthogonality_limit, policy_gradient_estimate,
    quadratic_variation_estimate, quadratic_variation_limit, shared_noise_estimate, td_residual,
    value_aggregated, value_gap, EstimateResult, StrongNorm, TestFunctionSpec, ValueToolkit,
};
use crate::presets::{preset, Preset};
use crate::rng::{mix, run_seed};
use crate::stats::RunningStats;

/// Header of every per-run results table.
pub const CSV_HEADER: &str = "study,preset,n,m,run,mean,std_error,seed,wall_ms";
/// Header of the slope summary table.
pub const SLOPE_HEADER: &str = "study,preset,slope,ci_low,ci_high,r_squared,resamples";
/// Paths and runs of the fast profile.
pub const FAST_PATHS: usize = 5_000;
pub const FAST_RUNS: usize = 10;

/// Which estimator a study exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Value,
    CondValue,
    Td,
    Pg,
    Qv,
    SharedVsNaive,
    CondWeak,
}

impl Study {
    pub const ALL: [Study; 7] = [
        Study::Value,
        Study::CondValue,
        Study::Td,
        Study::Pg,
        Study::Qv,
        Study::SharedVsNaive,
        Study::CondWeak,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Study::Value => "value",
            Study::CondValue => "cond_value",
            Study::Td => "td",
            Study::Pg => "pg",
            Study::Qv => "qv",
            Study::SharedVsNaive => "shared_vs_naive",
            Study::CondWeak => "cond_weak",
        }
    }

    fn default_preset(self) -> &'static str {
        match self {
            Study::Td => "td_exact",
            Study::Pg => "lq_pg",
            _ => "fig1_drift",
        }
    }

    fn default_test_function(self) -> &'static str {
        match self {
            Study::SharedVsNaive => "tanh",
            Study::CondWeak => "x",
            _ => "x^4",
        }
    }
}

impl FromStr for Study {
    type Err = PolexError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().replace('-', "_").to_ascii_lowercase();
        Study::ALL
            .into_iter()
            .find(|st| st.label() == key)
            .ok_or_else(|| {
                let known: Vec<_> = Study::ALL.iter().map(|s| s.label()).collect();
                PolexError::config(format!("unknown study '{s}' (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    #[default]
    Terminal,
    SupLattice,
}

impl From<NormChoice> for StrongNorm {
    fn from(n: NormChoice) -> Self {
        match n {
            NormChoice::Terminal => StrongNorm::Terminal,
            NormChoice::SupLattice => StrongNorm::SupLattice,
        }
    }
}

/// Experiment settings read from a TOML document; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset name; each command has its own default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub grid_sizes: Vec<usize>,
    /// Monte Carlo paths per estimate.
    pub paths: usize,
    /// Outer repetitions with independent seeds.
    pub runs: usize,
    pub master_seed: u64,
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// `x`, `x^p` or `tanh`; each command has its own default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_function: Option<String>,
    /// Lattice cells per interval of the finest grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice_factor: Option<usize>,
    /// Not part of the config hash: the location does not change results.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub resamples: usize,
    pub strong_power: u32,
    pub strong_norm: NormChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    /// Brownian paths per frozen sampling-noise realization.
    pub inner_paths: usize,
    /// Frozen sampling-noise realizations for the conditional weak error.
    pub outer_realizations: usize,
    pub tail_probability: f64,
    /// Target accuracy of the shared-noise study.
    pub epsilon: f64,
    /// Record wall-clock times instead of zeros.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            grid_sizes: vec![2, 4, 8, 16, 32, 64, 128, 256],
            paths: 50_000,
            runs: 100,
            master_seed: 2024,
            horizon: 1.0,
            x0: None,
            test_function: None,
            lattice_factor: None,
            output_dir: PathBuf::from("polex-out"),
            resamples: DEFAULT_RESAMPLES,
            strong_power: 2,
            strong_norm: NormChoice::Terminal,
            study: None,
            inner_paths: 1_000,
            outer_realizations: 200,
            tail_probability: 0.05,
            epsilon: 0.1,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| PolexError::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            PolexError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Switches to the fast profile.
    pub fn fast(mut self) -> Self {
        self.paths = FAST_PATHS;
        self.runs = FAST_RUNS;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(PolexError::config(msg.to_string()));
        if self.grid_sizes.is_empty() || self.grid_sizes.contains(&0) {
            return fail("grid_sizes must be nonempty with every entry >= 1");
        }
        if self.paths < 2 {
            return fail("paths must be at least 2");
        }
        if self.runs < 1 {
            return fail("runs must be at least 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return fail("horizon must be positive");
        }
        if self.resamples < crate::analysis::MIN_RESAMPLES {
            return fail("resamples must be at least 100");
        }
        if self.lattice_factor == Some(0) {
            return fail("lattice_factor must be at least 1");
        }
        if self.strong_power < 2 || self.strong_power % 2 != 0 {
            return fail("strong_power must be an even integer >= 2");
        }
        if self.inner_paths < 1 || self.outer_realizations < 1 {
            return fail("inner_paths and outer_realizations must be at least 1");
        }
        if !(self.tail_probability > 0.0 && self.tail_probability < 1.0) {
            return fail("tail_probability must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail("epsilon must lie in (0, 1)");
        }
        if let Some(f) = &self.test_function {
            TestFunctionSpec::parse(f)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization of the effective settings.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn resolve_preset(&self, default: &str) -> Result<Preset> {
        let name = self.preset.as_deref().unwrap_or(default);
        let mut p = preset(name, self.horizon, self.x0.clone())?;
        if let Some(factor) = self.lattice_factor {
            p.setup = p.setup.with_lattice_factor(factor)?;
        }
        Ok(p)
    }

    fn resolve_test_function(&self, default: &str) -> Result<TestFunctionSpec> {
        TestFunctionSpec::parse(self.test_function.as_deref().unwrap_or(default))
    }

    fn seed_of_run(&self, run: usize) -> u64 {
        run_seed(self.master_seed, run as u64)
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub study: String,
    pub preset: String,
    pub n: usize,
    pub m: usize,
    pub run: usize,
    pub mean: f64,
    pub std_error: f64,
    pub seed: u64,
    pub wall_ms: u64,
}

impl Row {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.study,
            self.preset,
            self.n,
            self.m,
            self.run,
            self.mean,
            self.std_error,
            self.seed,
            self.wall_ms
        )
    }
}

/// Slope fit of one run-averaged series.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub study: String,
    pub series: SweepSeries,
    pub fit: SlopeFit,
}

/// Everything an experiment produced.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub command: String,
    pub preset: String,
    pub rows: Vec<Row>,
    /// Run-averaged series, one per study label.
    pub series: Vec<SweepSeries>,
    pub fits: Vec<FitRecord>,
    /// Human-readable remarks such as skipped fits.
    pub notices: Vec<String>,
    /// Further output files as `(file name, contents)`.
    pub attachments: Vec<(String, String)>,
}

impl Report {
    fn new(command: &str, preset: &str) -> Self {
        Report {
            command: command.into(),
            preset: preset.into(),
            ..Default::default()
        }
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv());
            out.push('\n');
        }
        out
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = String::from(SLOPE_HEADER);
        out.push('\n');
        for r in &self.fits {
            let _ = writeln!(out, "{},{},{}", r.study, self.preset, r.fit.csv_row());
        }
        out
    }

    /// Summary lines for the terminal.
    pub fn summary(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .fits
            .iter()
            .map(|r| r.fit.summary(&format!("{}/{}", r.study, self.preset)))
            .collect();
        lines.extend(self.notices.iter().map(|n| format!("note: {n}")));
        lines
    }

    pub fn series(&self, study: &str) -> Option<&SweepSeries> {
        self.series.iter().find(|s| s.label == study)
    }

    pub fn fit(&self, study: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|r| r.study == study).map(|r| &r.fit)
    }

    /// Writes the results table, slope table, manifest and attachments into
    /// `dir` and returns the paths written.
    pub fn write(&self, dir: &Path, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let stem = format!("{}_{}", self.command, self.preset);
        let mut files = vec![
            (format!("{stem}.csv"), self.csv()),
            (format!("{stem}_slopes.csv"), self.slopes_csv()),
            (format!("{stem}.manifest.toml"), self.manifest(config)),
        ];
        files.extend(self.attachments.iter().cloned());
        let mut written = Vec::new();
        for (name, contents) in files {
            let path = dir.join(name);
            fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }

    fn manifest(&self, config: &ExperimentConfig) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            preset: &'a str,
            master_seed: u64,
            config_hash: String,
            version: &'a str,
            slope_method: &'a str,
            config: &'a ExperimentConfig,
        }
        toml::to_string(&Manifest {
            command: &self.command,
            preset: &self.preset,
            master_seed: config.master_seed,
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION"),
            slope_method: "OLS of ln(value) on ln(n), percentile bootstrap over sweep points",
            config,
        })
        .expect("manifest serializes")
    }

    /// Averages the rows of `study` over runs and fits the magnitudes of
    /// the averages when `fit` is set.
    fn summarize(&mut self, study: &str, config: &ExperimentConfig, fit: bool) {
        let series = average_runs(&self.rows, study);
        if fit {
            self.fit_series(study, &series, config);
        }
        self.series.push(series);
    }

    fn fit_series(&mut self, study: &str, series: &SweepSeries, config: &ExperimentConfig) {
        if series.points.len() < MIN_FIT_POINTS {
            self.notices.push(format!(
                "{study}: need >= {MIN_FIT_POINTS} points for a slope fit; fit skipped"
            ));
            return;
        }
        let magnitudes = SweepSeries {
            label: series.label.clone(),
            points: series
                .points
                .iter()
                .map(|p| SweepPoint {
                    value: p.value.abs(),
                    ..*p
                })
                .collect(),
        };
        match fit_loglog(&magnitudes, config.resamples, config.master_seed) {
            Ok(fit) => self.fits.push(FitRecord {
                study: study.into(),
                series: magnitudes,
                fit,
            }),
            Err(e) => self.notices.push(format!("{study}: fit skipped: {e}")),
        }
    }
}

/// Mean over runs at each `n`; the standard error is the spread of the
/// run means, or the single run's own error when there is one run.
fn average_runs(rows: &[Row], study: &str) -> SweepSeries {
    let mut sizes: Vec<usize> = rows.iter().filter(|r| r.study == study).map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let points = sizes
        .into_iter()
        .map(|n| {
            let mut stats = RunningStats::default();
            let mut last_error = 0.0;
            for r in rows.iter().filter(|r| r.study == study && r.n == n) {
                stats.push(r.mean);
                last_error = r.std_error;
            }
            let std_error = if stats.count() > 1 { stats.std_error() } else { last_error };
            SweepPoint {
                n,
                value: stats.mean(),
                std_error,
            }
        })
        .collect();
    SweepSeries {
        label: study.into(),
        points,
    }
}

struct Clock {
    enabled: bool,
    start: Instant,
}

impl Clock {
    fn start(enabled: bool) -> Self {
        Clock {
            enabled,
            start: Instant::now(),
        }
    }

    fn ms(&self) -> u64 {
        if self.enabled {
            self.start.elapsed().as_millis() as u64
        } else {
            0
        }
    }
}

fn row(study: &str, preset: &str, n: usize, m: usize, run: usize, est: &EstimateResult, config: &ExperimentConfig, wall_ms: u64) -> Row {
    Row {
        study: study.into(),
        preset: preset.into(),
        n,
        m,
        run,
        mean: est.mean,
        std_error: est.std_error,
        seed: config.master_seed,
        wall_ms,
    }
}

/// Weak and strong sweeps computed from the same paths.
pub fn run_convergence(config: &ExperimentConfig, default_preset: &str) -> Result<(Report, Report)> {
    config.validate()?;
    let p = config.resolve_preset(default_preset)?;
    let f = match &config.test_function {
        Some(text) => TestFunctionSpec::parse(text)?,
        None => p.test_function.clone(),
    };
    let mut weak = Report::new("weak", &p.name);
    let mut strong = Report::new("strong", &p.name);
    for run in 0..config.runs {
        let clock = Clock::start(config.timing);
        let points = convergence_sweep(
            &p.setup,
            &f,
            &config.grid_sizes,
            config.paths,
            config.seed_of_run(run),
            config.strong_norm.into(),
            config.strong_power,
        )?;
        let ms = clock.ms();
        for pt in points {
            weak.rows.push(row("weak", &p.name, pt.n, config.paths, run, &pt.weak, config, ms));
            strong.rows.push(row("strong", &p.name, pt.n, config.paths, run, &pt.strong, config, ms));
        }
    }
    weak.summarize("weak", config, true);
    strong.summarize("strong", config, true);
    Ok((weak, strong))
}

/// Weak error `E f(X^G_T) - E f(X~_T)` against the grid size.
pub fn run_weak_sweep(config: &ExperimentConfig) -> Result<Report> {
    Ok(run_convergence(config, "fig1_drift")?.0)
}

/// Strong error `E[|X^G - X~|^p]^{1/p}` against the grid size.
pub fn run_strong_sweep(config: &ExperimentConfig) -> Result<Report> {
    Ok(run_convergence(config, "fig1_drift")?.1)
}

/// Strong sweep of the controlled-volatility counterexample, with one
/// paired trajectory at the finest grid attached.
pub fn run_counterexample(config: &ExperimentConfig) -> Result<Report> {
    let (_, strong) = run_convergence(config, "counterexample")?;
    let mut report = Report::new("counterexample", &strong.preset);
    report.rows = strong
        .rows
        .into_iter()
        .map(|r| Row {
            study: "counterexample".into(),
            ..r
        })
        .collect();
    report.summarize("counterexample", config, true);
    if let Some(fit) = report.fit("counterexample") {
        let verdict = if fit.ci_high >= 0.0 && fit.ci_low <= 0.0 {
            "strong error does not decay"
        } else {
            "strong error changes with n"
        };
        report.notices.push(format!("counterexample: {verdict}"));
    }

    let p = config.resolve_preset("counterexample")?;
    let n = *config.grid_sizes.iter().max().expect("validated");
    let cells = p.setup.lattice_cells(&[n])?;
    let lattice = make_lattice(config.master_seed, 0, p.setup.dynamics.state_dim, cells, p.setup.horizon)?;
    let mut noise = KeyedNoise::naive(p.setup.policy.noise_law(), config.master_seed, 0, n);
    let pair = simulate_pair(
        &p.setup.dynamics,
        &p.setup.policy,
        &p.setup.aggregated,
        &TimeGrid::uniform(n, p.setup.horizon)?,
        &lattice,
        &mut noise,
    )?;
    let mut buf = Vec::new();
    pair.write_csv(&mut buf)?;
    report.attachments.push((
        format!("trajectory_{}.csv", p.name),
        String::from_utf8(buf).expect("utf-8 csv"),
    ));
    Ok(report)
}

fn probe<'a>(tk: &'a Option<ValueToolkit>, study: Study, preset: &str) -> Result<&'a ValueToolkit> {
    tk.as_ref().ok_or_else(|| {
        PolexError::config(format!(
            "preset '{preset}' has no probe for the {} study",
            study.label()
        ))
    })
}

/// Bias tables of the reinforcement-learning estimators.
pub fn run_estimator_study(config: &ExperimentConfig, study: Study) -> Result<Report> {
    config.validate()?;
    let p = config.resolve_preset(study.default_preset())?;
    let setup = &p.setup;
    let label = study.label();
    let mut report = Report::new(label, &p.name);
    let m = config.paths;
    let sizes = &config.grid_sizes;

    match study {
        Study::Value => {
            for run in 0..config.runs {
                for &n in sizes {
                    let clock = Clock::start(config.timing);
                    let est = value_gap(setup, n, m, config.seed_of_run(run))?;
                    report.rows.push(row(label, &p.name, n, m, run, &est, config, clock.ms()));
                }
            }
            report.summarize(label, config, true);
        }
        Study::CondValue => {
            let cells = setup.lattice_cells(sizes)?;
            let reference = value_aggregated(setup, cells, m, config.master_seed)?;
            report.notices.push(format!(
                "cond_value: continuous-execution value {} (se {})",
                reference.mean, reference.std_error
            ));
            for run in 0..config.runs {
                let seed = config.seed_of_run(run);
                for &n in sizes {
                    let clock = Clock::start(config.timing);
                    let est = conditional_value(setup, n, m, mix(seed, 1), seed)?;
                    report.rows.push(row(label, &p.name, n, m, run, &est, config, clock.ms()));
                }
            }
            report.summarize(label, config, false);
            if config.runs > 1 {
                let spread = spread_series(&report.rows, label, reference.mean);
                report.fit_series("cond_value_spread", &spread, config);
                report.series.push(spread);
            } else {
                report.notices.push("cond_value: spread needs >= 2 runs; fit skipped".into());
            }
        }
        Study::Td | Study::Pg | Study::Qv => {
            let tk = match study {
                Study::Td => probe(&p.td, study, &p.name)?,
                Study::Pg => probe(&p.pg, study, &p.name)?,
                _ => probe(&p.qv, study, &p.name)?,
            };
            let cells = setup.lattice_cells(sizes)?;
            let limit = match study {
                Study::Qv => quadratic_variation_limit(setup, tk, cells, m, config.master_seed)?,
                _ => orthogonality_limit(setup, tk, cells, m, config.master_seed)?,
            };
            report.notices.push(format!(
                "{label}: continuous-execution limit {} (se {})",
                limit.mean, limit.std_error
            ));
            for run in 0..config.runs {
                let seed = config.seed_of_run(run);
                for &n in sizes {
                    let clock = Clock::start(config.timing);
                    let est = match study {
                        Study::Td => td_residual(setup, tk, n, m, seed)?,
                        Study::Pg => policy_gradient_estimate(setup, tk, n, m, seed)?,
                        _ => quadratic_variation_estimate(setup, tk, n, m, seed)?,
                    };
                    report.rows.push(row(label, &p.name, n, m, run, &est, config, clock.ms()));
                }
            }
            report.summarize(label, config, false);
            let mut bias = report.series(label).expect("just added").clone();
            bias.label = format!("{label}_bias");
            for pt in &mut bias.points {
                pt.value -= limit.mean;
            }
            report.fit_series(&bias.label.clone(), &bias, config);
            report.series.push(bias);
        }
        Study::SharedVsNaive => shared_vs_naive(config, &p, &mut report)?,
        Study::CondWeak => {
            let f = config.resolve_test_function(study.default_test_function())?;
            for run in 0..config.runs {
                for &n in sizes {
                    let clock = Clock::start(config.timing);
                    let q = conditional_weak_error_quantile(
                        setup,
                        &f,
                        n,
                        config.inner_paths,
                        config.outer_realizations,
                        config.tail_probability,
                        config.seed_of_run(run),
                    )?;
                    let est = EstimateResult {
                        mean: q,
                        std_error: 0.0,
                        num_paths: config.inner_paths,
                        seed: config.master_seed,
                    };
                    report.rows.push(row(label, &p.name, n, config.inner_paths, run, &est, config, clock.ms()));
                }
            }
            report.summarize(label, config, true);
        }
    }
    Ok(report)
}

/// Root mean square distance of the per-run values from `centre`.
fn spread_series(rows: &[Row], study: &str, centre: f64) -> SweepSeries {
    let mut squares: Vec<Row> = rows
        .iter()
        .filter(|r| r.study == study)
        .cloned()
        .map(|r| Row {
            mean: (r.mean - centre).powi(2),
            ..r
        })
        .collect();
    for r in &mut squares {
        r.study = "spread".into();
    }
    let mut s = average_runs(&squares, "spread");
    for pt in &mut s.points {
        let rms = pt.value.sqrt();
        pt.std_error = if rms > 0.0 { pt.std_error / (2.0 * rms) } else { 0.0 };
        pt.value = rms;
    }
    s.label = format!("{study}_spread");
    s
}

fn shared_vs_naive(config: &ExperimentConfig, p: &Preset, report: &mut Report) -> Result<()> {
    let f = config.resolve_test_function(Study::SharedVsNaive.default_test_function())?;
    let budget = shared_noise_budget(config.epsilon)?;
    let setup = &p.setup;
    report.notices.push(format!(
        "shared_vs_naive: m = n = {budget} from epsilon {}; grid_sizes ignored",
        config.epsilon
    ));
    let cells = setup.lattice_cells(&[budget])?;
    let reference = aggregated_terminal_mean(setup, &f, cells, config.paths, config.master_seed)?;
    let mut hits = 0;
    for run in 0..config.runs {
        let seed = config.seed_of_run(run);
        let clock = Clock::start(config.timing);
        let shared = shared_noise_estimate(setup, &f, budget, budget, seed)?;
        let ms = clock.ms();
        report.rows.push(row("shared", &p.name, budget, budget, run, &shared.estimate, config, ms));
        let clock = Clock::start(config.timing);
        let naive = naive_estimate(setup, &f, budget, budget, seed)?;
        let ms = clock.ms();
        report.rows.push(row("naive", &p.name, budget, budget, run, &naive.estimate, config, ms));
        if (shared.estimate.mean - reference.mean).abs() <= config.epsilon {
            hits += 1;
        }
    }
    report.summarize("shared", config, false);
    report.summarize("naive", config, false);
    report.notices.push(format!(
        "shared_vs_naive: reference {} (se {}); shared estimate within epsilon in {hits}/{} runs",
        reference.mean, reference.std_error, config.runs
    ));

    let mut table = String::from("mode,m,n,noise_draws\n");
    for (mode, name) in [(NoiseMode::Shared, "shared"), (NoiseMode::Naive, "naive")] {
        let c = complexity_report(mode, budget, budget)?;
        let _ = writeln!(table, "{name},{budget},{budget},{}", c.noise_draws);
        report.notices.push(format!("complexity {name}: {} noise draws", c.noise_draws));
    }
    report
        .attachments
        .push((format!("complexity_{}.csv", p.name), table));
    Ok(())
}

const PLOT_SCRIPT: &str = "plot_figures.py";

/// Checks the result tables in `dir` and writes a plotting script there.
/// Returns the script path and the study labels found.
pub fn emit_plots(dir: &Path) -> Result<(PathBuf, Vec<String>)> {
    let entries = fs::read_dir(dir)
        .map_err(|e| PolexError::config(format!("cannot read {}: {e}", dir.display())))?;
    let mut tables: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    tables.sort();
    let mut studies: Vec<String> = Vec::new();
    let mut result_files = Vec::new();
    for path in &tables {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(CSV_HEADER) => {}
            Some(SLOPE_HEADER) => continue,
            _ => {
                return Err(PolexError::config(format!(
                    "{} is not a polex result table",
                    path.display()
                )))
            }
        }
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let numeric_ok = fields.len() == 9
                && fields[2].parse::<usize>().is_ok()
                && fields[5].parse::<f64>().is_ok()
                && fields[6].parse::<f64>().is_ok();
            if !numeric_ok {
                return Err(PolexError::config(format!(
                    "malformed row {} in {}",
                    k + 2,
                    path.display()
                )));
            }
            if !studies.iter().any(|s| s == fields[0]) {
                studies.push(fields[0].to_string());
            }
        }
        result_files.push(path.file_name().expect("file").to_string_lossy().into_owned());
    }
    if result_files.is_empty() {
        return Err(PolexError::config(format!("no CSV found in {}", dir.display())));
    }
    let script = plot_script(&result_files, &studies);
    let path = dir.join(PLOT_SCRIPT);
    fs::write(&path, script)?;
    Ok((path, studies))
}

fn plot_script(files: &[String], studies: &[String]) -> String {
    let list = |items: &[String]| {
        items
            .iter()
            .map(|s| format!("{s:?}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        r#"#!/usr/bin/env python3
"""Log-log convergence figures from polex result tables.

Each study gets one figure: the run-averaged mean (columns n, mean) with a
95% band from 1000 bootstrap resamples over runs, or +/- 1.96 std_error
when a grid size has a single run.
"""
import csv
import os
import random
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
FILES = [{files}]
STUDIES = [{studies}]
RESAMPLES = 1000


def load():
    data = defaultdict(lambda: defaultdict(list))
    for name in FILES:
        with open(os.path.join(HERE, name), newline="") as fh:
            for row in csv.DictReader(fh):
                key = (row["study"], row["preset"])
                data[key][int(row["n"])].append((float(row["mean"]), float(row["std_error"])))
    return data


def band(values, rng):
    means = [v for v, _ in values]
    centre = sum(means) / len(means)
    if len(means) == 1:
        half = 1.96 * values[0][1]
        return centre, centre - half, centre + half
    boots = sorted(
        sum(rng.choice(means) for _ in means) / len(means) for _ in range(RESAMPLES)
    )
    return centre, boots[int(0.025 * RESAMPLES)], boots[int(0.975 * RESAMPLES) - 1]


def main():
    rng = random.Random(0)
    data = load()
    for study in STUDIES:
        fig, ax = plt.subplots(figsize=(5, 4))
        for (label, preset), by_n in sorted(data.items()):
            if label != study:
                continue
            ns = sorted(by_n)
            rows = [band(by_n[n], rng) for n in ns]
            centre = [abs(c) for c, _, _ in rows]
            low = [max(abs(c) - (c - lo), 1e-300) for c, lo, _ in rows]
            high = [abs(c) + (hi - c) for c, _, hi in rows]
            ax.plot(ns, centre, marker="o", label=preset)
            ax.fill_between(ns, low, high, alpha=0.25)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("number of grid points n")
        ax.set_ylabel(study)
        ax.set_title(study)
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(HERE, f"{{study}}.png"), dpi=150)
        plt.close(fig)


if __name__ == "__main__":
    main()
"#,
        files = list(files),
        studies = list(studies),
    )
}
