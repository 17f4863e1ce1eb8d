//! Experiment runner behind the `mqap` binary: configuration, trial
//! orchestration, front files, manifests and result comparison.
//!
//! Configuration files are plain `key = value` lines; `#` starts a comment.
//! Command-line flags are applied afterwards through [`ExperimentConfig::set`],
//! so they always win.
//!
//! ```
//! use mqap::experiment::ExperimentConfig;
//!
//! let cfg = ExperimentConfig::from_text("islands = 4\ntrials = 3\nalgorithm = nsga2\n").unwrap();
//! assert_eq!(cfg.islands, 4);
//! assert_eq!(cfg.population_size(), 25);
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::archive_merge;
use crate::clock::{Clock, LogicalClock, WallClock};
use crate::evaluation::{evaluate_full, ObjectiveVector, Solution};
use crate::genetics::VariationParams;
use crate::instance::{generate_uniform, load_instance, write_instance, Instance, InstanceError, InstanceSpec};
use crate::island::{
    build_topology, population_size_for, run_islands, wire_mailboxes, Algorithm, IslandConfig, IslandError,
    IslandStats, TopologyKind,
};
use crate::localsearch::LocalSearchParams;
use crate::metrics::{hypervolume, normalized_hypervolumes, wilcoxon_rank_sum, Front, MetricsError, DEFAULT_REFERENCE_OFFSET};
use crate::ranking::{compare_objectives, Dominance};

/// Largest instance [`cmd_enumerate`] accepts.
pub const ENUMERATE_MAX_N: usize = 10;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Every key understood by [`ExperimentConfig::set`]; `island.<id>.<key>`
/// overrides are listed separately in [`ISLAND_OVERRIDE_KEYS`].
pub const CONFIG_KEYS: &[&str] = &[
    "instance",
    "gen_n",
    "gen_m",
    "gen_correlation",
    "gen_seed",
    "gen_max",
    "algorithm",
    "islands",
    "trials",
    "seed",
    "generations",
    "time_budget_secs",
    "epoch",
    "migrants",
    "pc",
    "pm",
    "ls_secs",
    "population",
    "archive_capacity",
    "tournament",
    "out",
    "parallel_trials",
    "clock",
    "clock_tick_us",
];

pub const ISLAND_OVERRIDE_KEYS: &[&str] = &[
    "population",
    "epoch",
    "migrants",
    "generations",
    "pc",
    "pm",
    "ls_secs",
    "archive_capacity",
    "tournament",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("cannot load instance {path}: {source}")]
    InstanceLoadError { path: PathBuf, source: InstanceError },
    #[error("cannot generate instance: {0}")]
    Generator(InstanceError),
    #[error("cannot write {path}: {reason}")]
    OutputWriteError { path: PathBuf, reason: String },
    #[error("cannot read {path}: {reason}")]
    InputReadError { path: PathBuf, reason: String },
    #[error("{path} line {line}: {message}")]
    FrontFormat { path: String, line: usize, message: String },
    #[error("instance mismatch: {0}")]
    InstanceMismatch(String),
    #[error("instance has n = {0}; exhaustive enumeration is limited to n <= {ENUMERATE_MAX_N}")]
    TooLarge(usize),
    #[error(transparent)]
    Island(#[from] IslandError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ExperimentError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| invalid(key, value, e.to_string()))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ExperimentError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

fn parse_secs(key: &str, value: &str) -> Result<Duration, ExperimentError> {
    let secs: f64 = parse_num(key, value)?;
    if !secs.is_finite() || secs < 0.0 {
        return Err(invalid(key, value, "expected a non-negative number of seconds"));
    }
    Ok(Duration::from_secs_f64(secs))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Generated(InstanceSpec),
}

impl InstanceSource {
    pub fn load(&self) -> Result<Instance, ExperimentError> {
        match self {
            InstanceSource::File(path) => load_instance(path).map_err(|source| ExperimentError::InstanceLoadError {
                path: path.clone(),
                source,
            }),
            InstanceSource::Generated(spec) => generate_uniform(spec).map_err(ExperimentError::Generator),
        }
    }
}

/// Parses `n=30,m=2,correlation=0,seed=1[,max=100]`.
pub fn parse_generator_spec(text: &str) -> Result<InstanceSpec, ExperimentError> {
    let mut spec = InstanceSpec::new(0, 2, 0.0, 1);
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| invalid("instance", text, format!("expected key=value, got {part:?}")))?;
        match k.trim() {
            "n" => spec.n = parse_num(k, v)?,
            "m" => spec.m = parse_num(k, v)?,
            "c" | "correlation" => spec.correlation = parse_num(k, v)?,
            "seed" => spec.seed = parse_num(k, v)?,
            "max" => spec.max_value = parse_num(k, v)?,
            other => return Err(invalid("instance", text, format!("unknown generator field {other:?}"))),
        }
    }
    if spec.n == 0 {
        return Err(invalid("instance", text, "generator needs n"));
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    Wall,
    /// Deterministic clock advancing `clock_tick_us` per reading.
    Logical,
}

/// Everything one `run` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: Option<InstanceSource>,
    pub algorithm: Algorithm,
    pub islands: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub generations: usize,
    pub time_budget: Option<Duration>,
    pub epoch: usize,
    pub migrants: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub ls_budget: Duration,
    /// `None` sizes populations from the island count.
    pub population: Option<usize>,
    pub archive_capacity: usize,
    pub tournament: usize,
    pub out: PathBuf,
    pub parallel_trials: bool,
    pub clock: ClockKind,
    pub clock_tick: Duration,
    /// `island.<id>.<key>` settings, applied on top of the shared ones.
    pub island_overrides: BTreeMap<usize, Vec<(String, String)>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let island = IslandConfig::default();
        Self {
            instance: None,
            algorithm: Algorithm::Memetic,
            islands: 1,
            trials: 30,
            base_seed: 1,
            generations: island.generations,
            time_budget: island.time_budget,
            epoch: island.epoch,
            migrants: island.migrants,
            crossover: island.variation.crossover,
            mutation: island.variation.mutation,
            ls_budget: island.local_search.t_max,
            population: None,
            archive_capacity: island.archive_capacity,
            tournament: island.tournament_size,
            out: PathBuf::from("results"),
            parallel_trials: false,
            clock: ClockKind::Wall,
            clock_tick: Duration::from_micros(100),
            island_overrides: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::InputReadError {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ExperimentError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ExperimentError::ConfigSyntax {
                line: idx + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one setting; this is also how command-line flags are applied.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        if let Some(rest) = key.strip_prefix("island.") {
            let (id, sub) = rest
                .split_once('.')
                .ok_or_else(|| ExperimentError::UnknownKey(key.to_string()))?;
            let id: usize = parse_num(key, id)?;
            if !ISLAND_OVERRIDE_KEYS.contains(&sub) {
                return Err(ExperimentError::UnknownKey(key.to_string()));
            }
            // validate now so errors surface at load time
            apply_island_key(&mut IslandConfig::default(), sub, value)?;
            self.island_overrides
                .entry(id)
                .or_default()
                .push((sub.to_string(), value.to_string()));
            return Ok(());
        }
        match key {
            "instance" => {
                self.instance = Some(match value.strip_prefix("gen:") {
                    Some(spec) => InstanceSource::Generated(parse_generator_spec(spec)?),
                    None => InstanceSource::File(PathBuf::from(value)),
                })
            }
            "gen_n" | "gen_m" | "gen_correlation" | "gen_seed" | "gen_max" => {
                let mut spec = match &self.instance {
                    Some(InstanceSource::Generated(s)) => s.clone(),
                    _ => InstanceSpec::new(0, 2, 0.0, 1),
                };
                match key {
                    "gen_n" => spec.n = parse_num(key, value)?,
                    "gen_m" => spec.m = parse_num(key, value)?,
                    "gen_correlation" => spec.correlation = parse_num(key, value)?,
                    "gen_seed" => spec.seed = parse_num(key, value)?,
                    _ => spec.max_value = parse_num(key, value)?,
                }
                self.instance = Some(InstanceSource::Generated(spec));
            }
            "algorithm" => self.algorithm = value.parse()?,
            "islands" => self.islands = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.base_seed = parse_num(key, value)?,
            "generations" => self.generations = parse_num(key, value)?,
            "time_budget_secs" => {
                self.time_budget = match value.trim() {
                    "none" | "inf" | "0" => None,
                    v => Some(parse_secs(key, v)?),
                }
            }
            "epoch" => self.epoch = parse_num(key, value)?,
            "migrants" => self.migrants = parse_num(key, value)?,
            "pc" => self.crossover = parse_num(key, value)?,
            "pm" => self.mutation = parse_num(key, value)?,
            "ls_secs" => self.ls_budget = parse_secs(key, value)?,
            "population" => {
                self.population = match value.trim() {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "archive_capacity" => self.archive_capacity = parse_num(key, value)?,
            "tournament" => self.tournament = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "parallel_trials" => self.parallel_trials = parse_bool(key, value)?,
            "clock" => {
                self.clock = match value.trim() {
                    "wall" => ClockKind::Wall,
                    "logical" => ClockKind::Logical,
                    _ => return Err(invalid(key, value, "expected wall or logical")),
                }
            }
            "clock_tick_us" => self.clock_tick = Duration::from_micros(parse_num(key, value)?),
            _ => return Err(ExperimentError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials < 1 {
            return Err(invalid("trials", &self.trials.to_string(), "at least one trial"));
        }
        if self.islands < 1 {
            return Err(invalid("islands", &self.islands.to_string(), "at least one island"));
        }
        if self.instance.is_none() {
            return Err(invalid("instance", "", "no instance file or generator given"));
        }
        if let Some(id) = self.island_overrides.keys().find(|id| **id >= self.islands) {
            return Err(invalid(
                "island",
                &id.to_string(),
                format!("override for island {id} but only {} islands", self.islands),
            ));
        }
        for id in 0..self.islands {
            self.island_config(id, 0)?.validate()?;
        }
        Ok(())
    }

    pub fn population_size(&self) -> usize {
        self.population.unwrap_or_else(|| population_size_for(self.islands))
    }

    /// Seed of trial `trial` (0-based).
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    /// Island configuration for island `id` within a trial seeded `trial_seed`.
    pub fn island_config(&self, id: usize, trial_seed: u64) -> Result<IslandConfig, ExperimentError> {
        let mut cfg = IslandConfig {
            island_id: id,
            population_size: self.population_size(),
            epoch: self.epoch,
            migrants: self.migrants,
            generations: self.generations,
            variation: VariationParams::new(self.crossover, self.mutation)
                .map_err(|e| invalid("pc/pm", &format!("{}/{}", self.crossover, self.mutation), e.to_string()))?,
            local_search: LocalSearchParams { t_max: self.ls_budget },
            algorithm: self.algorithm,
            seed: island_seed(trial_seed, id),
            time_budget: self.time_budget,
            archive_capacity: self.archive_capacity,
            tournament_size: self.tournament,
        };
        if let Some(overrides) = self.island_overrides.get(&id) {
            for (k, v) in overrides {
                apply_island_key(&mut cfg, k, v)?;
            }
        }
        Ok(cfg)
    }

    /// Effective settings as `key = value` pairs, recorded in the manifest.
    pub fn settings(&self) -> BTreeMap<String, String> {
        let mut s = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            s.insert(k.to_string(), v);
        };
        match &self.instance {
            Some(InstanceSource::File(p)) => put("instance", p.display().to_string()),
            Some(InstanceSource::Generated(g)) => put(
                "instance",
                format!("gen:n={},m={},correlation={},seed={},max={}", g.n, g.m, g.correlation, g.seed, g.max_value),
            ),
            None => {}
        }
        put("algorithm", self.algorithm.to_string());
        put("islands", self.islands.to_string());
        put("trials", self.trials.to_string());
        put("seed", self.base_seed.to_string());
        put("generations", self.generations.to_string());
        put(
            "time_budget_secs",
            self.time_budget.map_or("none".to_string(), |d| d.as_secs_f64().to_string()),
        );
        put("epoch", self.epoch.to_string());
        put("migrants", self.migrants.to_string());
        put("pc", self.crossover.to_string());
        put("pm", self.mutation.to_string());
        put("ls_secs", self.ls_budget.as_secs_f64().to_string());
        put("population", self.population_size().to_string());
        put("archive_capacity", self.archive_capacity.to_string());
        put("tournament", self.tournament.to_string());
        put("clock", format!("{:?}", self.clock).to_ascii_lowercase());
        for (id, kvs) in &self.island_overrides {
            for (k, v) in kvs {
                put(&format!("island.{id}.{k}"), v.clone());
            }
        }
        s
    }
}

fn apply_island_key(cfg: &mut IslandConfig, key: &str, value: &str) -> Result<(), ExperimentError> {
    match key {
        "population" => cfg.population_size = parse_num(key, value)?,
        "epoch" => cfg.epoch = parse_num(key, value)?,
        "migrants" => cfg.migrants = parse_num(key, value)?,
        "generations" => cfg.generations = parse_num(key, value)?,
        "pc" | "pm" => {
            let p: f64 = parse_num(key, value)?;
            let (c, m) = if key == "pc" {
                (p, cfg.variation.mutation)
            } else {
                (cfg.variation.crossover, p)
            };
            cfg.variation = VariationParams::new(c, m).map_err(|e| invalid(key, value, e.to_string()))?;
        }
        "ls_secs" => cfg.local_search.t_max = parse_secs(key, value)?,
        "archive_capacity" => cfg.archive_capacity = parse_num(key, value)?,
        "tournament" => cfg.tournament_size = parse_num(key, value)?,
        _ => return Err(ExperimentError::UnknownKey(key.to_string())),
    }
    Ok(())
}

pub fn island_seed(trial_seed: u64, island: usize) -> u64 {
    trial_seed.wrapping_mul(1000).wrapping_add(island as u64)
}

/// Worker cap from `MQAP_THREADS`, falling back to `default`.
pub fn thread_cap(default: usize) -> usize {
    std::env::var("MQAP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(default)
        .max(1)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub instance: String,
    pub algorithm: Algorithm,
    pub island_count: usize,
    pub trial: usize,
    pub seed: u64,
    /// Merged archives, sorted by objectives then permutation.
    pub front: Vec<Solution>,
    pub wall_secs: f64,
    pub island_stats: Vec<IslandStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trial: usize,
    pub seed: u64,
    pub front_file: String,
    pub front_size: usize,
    pub wall_secs: f64,
    pub islands: Vec<IslandStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub instance: String,
    pub n: usize,
    pub m: usize,
    pub algorithm: Algorithm,
    pub islands: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub settings: BTreeMap<String, String>,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, ExperimentError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| ExperimentError::InputReadError {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::InputReadError {
            path,
            reason: e.to_string(),
        })
    }
}

pub fn sort_front(front: &mut [Solution]) {
    front.sort_by(|a, b| {
        a.objectives
            .values()
            .cmp(b.objectives.values())
            .then_with(|| a.perm.cmp(&b.perm))
    });
}

/// Runs one trial: a full island fleet on `instance`.
pub fn run_trial(
    config: &ExperimentConfig,
    instance: &Instance,
    trial: usize,
    max_threads: usize,
) -> Result<RunResult, ExperimentError> {
    let seed = config.trial_seed(trial);
    let configs = (0..config.islands)
        .map(|id| config.island_config(id, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let topology = build_topology(TopologyKind::Complete, config.islands);
    let mailboxes = wire_mailboxes(&topology);
    let clock: Box<dyn Clock> = match config.clock {
        ClockKind::Wall => Box::new(WallClock::new()),
        ClockKind::Logical => Box::new(LogicalClock::new(config.clock_tick)),
    };
    let started = Instant::now();
    let outcomes = run_islands(instance, configs, mailboxes, clock.as_ref(), max_threads)?;
    let wall_secs = started.elapsed().as_secs_f64();
    let mut front = archive_merge(outcomes.iter().map(|o| &o.archive));
    sort_front(&mut front);
    Ok(RunResult {
        instance: instance.name().to_string(),
        algorithm: config.algorithm,
        island_count: config.islands,
        trial,
        seed,
        front,
        wall_secs,
        island_stats: outcomes.into_iter().map(|o| o.stats).collect(),
    })
}

pub fn front_file_name(trial: usize) -> String {
    format!("trial-{trial:03}.front")
}

/// Runs every trial, writing one front file per trial plus the manifest.
pub fn cmd_run(config: &ExperimentConfig) -> Result<(Manifest, Vec<RunResult>), ExperimentError> {
    config.validate()?;
    let instance = config.instance.as_ref().expect("validated").load()?;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| ExperimentError::OutputWriteError {
        path: out.clone(),
        reason: e.to_string(),
    })?;

    let results = if config.parallel_trials && config.trials > 1 {
        let cap = thread_cap(config.islands * config.trials);
        let per_trial = config.islands.min(cap);
        let workers = (cap / per_trial).clamp(1, config.trials);
        let next = Mutex::new(0usize);
        let slots: Mutex<Vec<Option<Result<RunResult, ExperimentError>>>> =
            Mutex::new((0..config.trials).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let trial = {
                        let mut n = next.lock().expect("trial counter");
                        let t = *n;
                        *n += 1;
                        t
                    };
                    if trial >= config.trials {
                        break;
                    }
                    let r = run_trial(config, &instance, trial, per_trial);
                    slots.lock().expect("trial slots")[trial] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("trial slots")
            .into_iter()
            .map(|r| r.expect("every trial ran"))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let cap = thread_cap(config.islands);
        (0..config.trials)
            .map(|t| run_trial(config, &instance, t, cap))
            .collect::<Result<Vec<_>, _>>()?
    };

    let mut runs = Vec::with_capacity(results.len());
    for r in &results {
        let name = front_file_name(r.trial);
        let header = [
            ("instance", r.instance.clone()),
            ("algorithm", r.algorithm.to_string()),
            ("islands", r.island_count.to_string()),
            ("trial", r.trial.to_string()),
            ("seed", r.seed.to_string()),
        ];
        write_text(&out.join(&name), &format_front(&header, &r.front))?;
        runs.push(RunRecord {
            trial: r.trial,
            seed: r.seed,
            front_file: name,
            front_size: r.front.len(),
            wall_secs: r.wall_secs,
            islands: r.island_stats.clone(),
        });
    }
    let manifest = Manifest {
        instance: instance.name().to_string(),
        n: instance.n(),
        m: instance.m(),
        algorithm: config.algorithm,
        islands: config.islands,
        trials: config.trials,
        base_seed: config.base_seed,
        settings: config.settings(),
        runs,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_text(&out.join(MANIFEST_FILE), &(json + "\n"))?;
    Ok((manifest, results))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|e| ExperimentError::OutputWriteError {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// A parsed front file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontFile {
    pub header: BTreeMap<String, String>,
    pub solutions: Vec<Solution>,
}

impl FrontFile {
    pub fn instance(&self) -> Option<&str> {
        self.header.get("instance").map(String::as_str)
    }

    pub fn front(&self) -> Front {
        Front::from_solutions(&self.solutions)
    }
}

/// Renders a front: `# key=value` header lines, then one
/// `perm | objectives` line per solution.
pub fn format_front(header: &[(&str, String)], solutions: &[Solution]) -> String {
    let mut s = String::new();
    for (k, v) in header {
        let _ = writeln!(s, "# {k}={v}");
    }
    for sol in solutions {
        let perm: Vec<String> = sol.perm.iter().map(usize::to_string).collect();
        let obj: Vec<String> = sol.objectives.values().iter().map(i64::to_string).collect();
        let _ = writeln!(s, "{} | {}", perm.join(" "), obj.join(" "));
    }
    s
}

pub fn parse_front(text: &str, origin: &str) -> Result<FrontFile, ExperimentError> {
    let mut header = BTreeMap::new();
    let mut solutions = Vec::new();
    let fail = |line: usize, message: String| ExperimentError::FrontFormat {
        path: origin.to_string(),
        line,
        message,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let (perm_part, obj_part) = line
            .split_once('|')
            .ok_or_else(|| fail(idx + 1, "expected `permutation | objectives`".into()))?;
        let perm = perm_part
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| fail(idx + 1, format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let obj = obj_part
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|e| fail(idx + 1, format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if obj.is_empty() {
            return Err(fail(idx + 1, "no objective values".into()));
        }
        if let Some(first) = solutions.first() {
            let first: &Solution = first;
            if first.objectives.len() != obj.len() || first.perm.len() != perm.len() {
                return Err(fail(idx + 1, "inconsistent line shape".into()));
            }
        }
        solutions.push(Solution::with_objectives(perm, ObjectiveVector::new(obj)));
    }
    Ok(FrontFile { header, solutions })
}

pub fn read_front(path: &Path) -> Result<FrontFile, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::InputReadError {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_front(&text, &path.display().to_string())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exact Pareto front by exhaustive enumeration, one solution per distinct
/// objective vector (the lexicographically first permutation).
pub fn cmd_enumerate(instance: &Instance) -> Result<Vec<Solution>, ExperimentError> {
    let n = instance.n();
    if n > ENUMERATE_MAX_N {
        return Err(ExperimentError::TooLarge(n));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut front: Vec<Solution> = Vec::new();
    loop {
        let obj = evaluate_full(instance, &perm).expect("identity-derived permutation");
        let covered = front.iter().any(|s| {
            matches!(
                compare_objectives(s.objectives.values(), obj.values()),
                Dominance::Dominates | Dominance::Equal
            )
        });
        if !covered {
            front.retain(|s| compare_objectives(obj.values(), s.objectives.values()) != Dominance::Dominates);
            front.push(Solution::with_objectives(perm.clone(), obj));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    sort_front(&mut front);
    Ok(front)
}

pub fn cmd_gen(spec: &InstanceSpec) -> Result<String, ExperimentError> {
    generate_uniform(spec)
        .map(|inst| write_instance(&inst))
        .map_err(ExperimentError::Generator)
}

/// Hypervolume of a front file. With an explicit reference point the raw
/// objective values are used; otherwise the front is normalised by its own
/// bounds and measured against `(1 + offset, ...)`-style worst corner.
pub fn cmd_hv(front: &FrontFile, reference: Option<&[f64]>) -> Result<f64, ExperimentError> {
    let f = front.front();
    match reference {
        Some(r) => Ok(hypervolume(&f.points, r)?),
        None => Ok(normalized_hypervolumes(&[f], DEFAULT_REFERENCE_OFFSET)?[0]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultSetSummary {
    pub label: String,
    pub dir: String,
    pub algorithm: Algorithm,
    pub islands: usize,
    pub hypervolumes: Vec<f64>,
    pub mean_hv: f64,
    pub std_hv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    /// `None` when either side has fewer than three trials.
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceComparison {
    pub instance: String,
    pub sets: Vec<ResultSetSummary>,
    pub pairs: Vec<PairTest>,
    /// Index into `sets` of the highest mean hypervolume.
    pub best: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub alpha: f64,
    pub instances: Vec<InstanceComparison>,
}

struct LoadedSet {
    dir: String,
    manifest: Manifest,
    fronts: Vec<Front>,
}

/// Pools every trial front per instance, normalises with the union bounds,
/// computes per-trial hypervolume and runs pairwise rank-sum tests.
pub fn cmd_compare(dirs: &[PathBuf], alpha: f64) -> Result<CompareReport, ExperimentError> {
    if dirs.len() < 2 {
        return Err(ExperimentError::InstanceMismatch(
            "need at least two result sets to compare".into(),
        ));
    }
    let mut groups: BTreeMap<String, Vec<LoadedSet>> = BTreeMap::new();
    for dir in dirs {
        let manifest = Manifest::read(dir)?;
        let mut fronts = Vec::with_capacity(manifest.runs.len());
        for run in &manifest.runs {
            let ff = read_front(&dir.join(&run.front_file))?;
            if ff.instance() != Some(manifest.instance.as_str()) {
                return Err(ExperimentError::InstanceMismatch(format!(
                    "{} belongs to {:?}, manifest says {:?}",
                    run.front_file,
                    ff.instance(),
                    manifest.instance
                )));
            }
            fronts.push(ff.front());
        }
        groups.entry(manifest.instance.clone()).or_default().push(LoadedSet {
            dir: dir.display().to_string(),
            manifest,
            fronts,
        });
    }

    let mut instances = Vec::new();
    for (name, mut sets) in groups {
        if sets.len() < 2 {
            return Err(ExperimentError::InstanceMismatch(format!(
                "instance {name:?} has only one result set"
            )));
        }
        let (n, m) = (sets[0].manifest.n, sets[0].manifest.m);
        if sets.iter().any(|s| s.manifest.n != n || s.manifest.m != m) {
            return Err(ExperimentError::InstanceMismatch(format!(
                "result sets named {name:?} disagree on instance size"
            )));
        }
        sets.sort_by(|a, b| {
            base_label(&a.manifest)
                .cmp(&base_label(&b.manifest))
                .then_with(|| a.dir.cmp(&b.dir))
        });

        let pooled: Vec<Front> = sets.iter().flat_map(|s| s.fronts.iter().cloned()).collect();
        let hv = normalized_hypervolumes(&pooled, DEFAULT_REFERENCE_OFFSET)?;
        let mut offset = 0;
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut summaries = Vec::new();
        for s in &sets {
            let values = hv[offset..offset + s.fronts.len()].to_vec();
            offset += s.fronts.len();
            let base = base_label(&s.manifest);
            let count = seen.entry(base.clone()).or_insert(0);
            *count += 1;
            let label = if *count == 1 { base } else { format!("{base}#{count}") };
            let (mean, std) = mean_std(&values);
            summaries.push(ResultSetSummary {
                label,
                dir: s.dir.clone(),
                algorithm: s.manifest.algorithm,
                islands: s.manifest.islands,
                hypervolumes: values,
                mean_hv: mean,
                std_hv: std,
            });
        }

        let mut pairs = Vec::new();
        for i in 0..summaries.len() {
            for j in i + 1..summaries.len() {
                let p_value = match wilcoxon_rank_sum(&summaries[i].hypervolumes, &summaries[j].hypervolumes) {
                    Ok(r) => Some(r.p_value),
                    // every value tied: no evidence of a difference
                    Err(MetricsError::DegenerateSample) => Some(1.0),
                    Err(MetricsError::SampleTooSmall(..)) => None,
                    Err(e) => return Err(e.into()),
                };
                pairs.push(PairTest {
                    a: summaries[i].label.clone(),
                    b: summaries[j].label.clone(),
                    p_value,
                    significant: p_value.is_some_and(|p| p < alpha),
                });
            }
        }
        let best = summaries
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if s.mean_hv > summaries[best].mean_hv { i } else { best });
        instances.push(InstanceComparison {
            instance: name,
            sets: summaries,
            pairs,
            best,
        });
    }
    Ok(CompareReport { alpha, instances })
}

fn base_label(m: &Manifest) -> String {
    format!("{}-{}", m.algorithm, m.islands)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl CompareReport {
    /// Rows are instances, columns are `algorithm-islands` labels; the best
    /// mean per row carries a trailing `*`.
    pub fn table_csv(&self) -> String {
        let mut labels: Vec<String> = self
            .instances
            .iter()
            .flat_map(|i| i.sets.iter().map(|s| s.label.clone()))
            .collect();
        labels.sort();
        labels.dedup();
        let mut out = String::from("instance");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for inst in &self.instances {
            out.push_str(&inst.instance);
            for l in &labels {
                out.push(',');
                if let Some((i, s)) = inst.sets.iter().enumerate().find(|(_, s)| &s.label == l) {
                    let _ = write!(out, "{:.4}", s.mean_hv);
                    if i == inst.best {
                        out.push('*');
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("instance,a,b,mean_a,mean_b,p_value,significant\n");
        for inst in &self.instances {
            let mean = |label: &str| inst.sets.iter().find(|s| s.label == label).map_or(f64::NAN, |s| s.mean_hv);
            for p in &inst.pairs {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.4},{:.4},{},{}",
                    inst.instance,
                    p.a,
                    p.b,
                    mean(&p.a),
                    mean(&p.b),
                    p.p_value.map_or("NA".to_string(), |v| format!("{v:.6}")),
                    p.significant
                );
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            let _ = writeln!(out, "instance {}", inst.instance);
            for (i, s) in inst.sets.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "  {:<16} trials={:<3} mean_hv={:.4} sd={:.4}{}",
                    s.label,
                    s.hypervolumes.len(),
                    s.mean_hv,
                    s.std_hv,
                    if i == inst.best { "  <- best" } else { "" }
                );
            }
            for p in &inst.pairs {
                let _ = writeln!(
                    out,
                    "  {} vs {}: p={}{}",
                    p.a,
                    p.b,
                    p.p_value.map_or("NA".to_string(), |v| format!("{v:.4}")),
                    if p.significant { " (significant)" } else { "" }
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_text(
            "instance = gen:n=8,m=2,correlation=0,seed=3\n\
             trials = 1\ngenerations = 5\nls_secs = 1\ntime_budget_secs = none\n",
        )
        .unwrap();
        cfg.out = out.to_path_buf();
        cfg
    }

    #[test]
    fn config_text_and_overrides() {
        let mut cfg = ExperimentConfig::from_text(
            "# comment\nislands = 5\nalgorithm = nsga2   # trailing\nisland.2.epoch = 7\ntime_budget_secs = 12.5\n",
        )
        .unwrap();
        assert_eq!(cfg.islands, 5);
        assert_eq!(cfg.algorithm, Algorithm::Nsga2);
        assert_eq!(cfg.population_size(), 20);
        assert_eq!(cfg.time_budget, Some(Duration::from_secs_f64(12.5)));
        assert_eq!(cfg.island_config(2, 0).unwrap().epoch, 7);
        assert_eq!(cfg.island_config(1, 0).unwrap().epoch, 5);
        // flags are applied later and win
        cfg.set("islands", "8").unwrap();
        assert_eq!(cfg.population_size(), 13);
        assert!(matches!(cfg.set("bogus", "1"), Err(ExperimentError::UnknownKey(_))));
        assert!(matches!(cfg.set("island.1.bogus", "1"), Err(ExperimentError::UnknownKey(_))));
        assert!(matches!(cfg.set("trials", "x"), Err(ExperimentError::InvalidValue { .. })));
        assert!(matches!(
            ExperimentConfig::from_text("no equals sign"),
            Err(ExperimentError::ConfigSyntax { line: 1, .. })
        ));
    }

    #[test]
    fn generator_keys_build_a_spec() {
        let cfg = ExperimentConfig::from_text("gen_n = 12\ngen_m = 3\ngen_correlation = 0.5\ngen_seed = 9\n").unwrap();
        match cfg.instance {
            Some(InstanceSource::Generated(s)) => {
                assert_eq!((s.n, s.m, s.correlation, s.seed), (12, 3, 0.5, 9));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::from_text("instance = gen:n=6\n").unwrap();
        assert!(cfg.validate().is_ok());
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        cfg.trials = 1;
        cfg.islands = 0;
        assert!(cfg.validate().is_err());
        cfg.islands = 2;
        cfg.set("island.3.epoch", "2").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seed_derivation() {
        let cfg = ExperimentConfig {
            base_seed: 40,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.trial_seed(0), 40);
        assert_eq!(cfg.trial_seed(2), 42);
        assert_eq!(island_seed(42, 3), 42_003);
        assert_eq!(cfg.island_config(3, 42).unwrap().seed, 42_003);
    }

    #[test]
    fn front_round_trip() {
        let sols = vec![
            Solution::with_objectives(vec![2, 0, 1], ObjectiveVector::new(vec![5, 9])),
            Solution::with_objectives(vec![0, 1, 2], ObjectiveVector::new(vec![7, 3])),
        ];
        let text = format_front(&[("instance", "x".into()), ("seed", "4".into())], &sols);
        assert_eq!(text, "# instance=x\n# seed=4\n2 0 1 | 5 9\n0 1 2 | 7 3\n");
        let back = parse_front(&text, "mem").unwrap();
        assert_eq!(back.instance(), Some("x"));
        assert_eq!(back.solutions.len(), 2);
        assert_eq!(back.solutions[1].objectives.values(), &[7, 3]);
        assert!(parse_front("1 2 3\n", "mem").is_err());
        assert!(parse_front("0 1 | 3\n0 1 | 3 4\n", "mem").is_err());
    }

    #[test]
    fn next_permutation_visits_all() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(p, vec![3, 2, 1, 0]);
    }

    #[test]
    fn enumerate_small_cases() {
        let inst = generate_uniform(&InstanceSpec::new(2, 1, 0.0, 1)).unwrap();
        let f = cmd_enumerate(&inst).unwrap();
        assert!((1..=2).contains(&f.len()));
        let big = generate_uniform(&InstanceSpec::new(11, 1, 0.0, 1)).unwrap();
        assert!(matches!(cmd_enumerate(&big), Err(ExperimentError::TooLarge(11))));
    }

    #[test]
    fn run_writes_front_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let (manifest, results) = cmd_run(&cfg).unwrap();
        assert_eq!(manifest.runs.len(), 1);
        assert_eq!(results.len(), 1);
        let ff = read_front(&dir.path().join(&manifest.runs[0].front_file)).unwrap();
        assert_eq!(ff.solutions.len(), manifest.runs[0].front_size);
        assert_eq!(ff.header.get("seed").map(String::as_str), Some("1"));
        let read_back = Manifest::read(dir.path()).unwrap();
        assert_eq!(read_back, manifest);
    }

    #[test]
    fn compare_requires_two_sets() {
        assert!(matches!(
            cmd_compare(&[PathBuf::from("x")], 0.05),
            Err(ExperimentError::InstanceMismatch(_))
        ));
    }
}
