//! Island loops and the asynchronous migration fabric.
//!
//! Each island is a sequential loop that owns its population, archive and RNG.
//! Islands talk only through unbounded channels: sends never block and
//! [`check_migrants`] only drains what has already arrived. An island that has
//! finished drops its inbox, after which sends to it are silently discarded.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::archive::{Archive, DEFAULT_ARCHIVE_CAPACITY};
use crate::clock::Clock;
use crate::evaluation::Solution;
use crate::genetics::{
    cycle_crossover, random_permutation, seeded_rng, swap_mutation, tournament_select, SearchRng,
    VariationParams,
};
use crate::instance::Instance;
use crate::localsearch::{dominance_based_local_search, LocalSearchParams};
use crate::ranking::{elitist_integration, fitness_then_diversity, rank_and_crowd, truncate_by_fitness};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IslandError {
    #[error("invalid island configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown algorithm {0:?} (expected memetic or nsga2)")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Memetic,
    Nsga2,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Memetic => "memetic",
            Algorithm::Nsga2 => "nsga2",
        })
    }
}

impl FromStr for Algorithm {
    type Err = IslandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "memetic" => Ok(Algorithm::Memetic),
            "nsga2" | "nsga-ii" | "nsgaii" => Ok(Algorithm::Nsga2),
            other => Err(IslandError::UnknownAlgorithm(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandConfig {
    pub island_id: usize,
    pub population_size: usize,
    /// Generations between migrations.
    pub epoch: usize,
    /// Solutions sent to each neighbour per migration.
    pub migrants: usize,
    pub generations: usize,
    pub variation: VariationParams,
    pub local_search: LocalSearchParams,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub time_budget: Option<Duration>,
    pub archive_capacity: usize,
    pub tournament_size: usize,
}

impl Default for IslandConfig {
    fn default() -> Self {
        Self {
            island_id: 0,
            population_size: 20,
            epoch: 5,
            migrants: 2,
            generations: 100,
            variation: VariationParams::default(),
            local_search: LocalSearchParams::default(),
            algorithm: Algorithm::Memetic,
            seed: 0,
            time_budget: Some(Duration::from_secs(300)),
            archive_capacity: DEFAULT_ARCHIVE_CAPACITY,
            tournament_size: 2,
        }
    }
}

impl IslandConfig {
    pub fn validate(&self) -> Result<(), IslandError> {
        let fail = |msg: &str| Err(IslandError::InvalidConfig(msg.to_string()));
        if self.population_size < 2 {
            return fail("population size must be at least 2");
        }
        if self.epoch < 1 {
            return fail("epoch must be at least 1");
        }
        if self.migrants < 1 || self.migrants > self.archive_capacity {
            return fail("migrants must be in 1..=archive capacity");
        }
        if self.archive_capacity < 1 {
            return fail("archive capacity must be positive");
        }
        if self.tournament_size < 1 {
            return fail("tournament size must be positive");
        }
        if self.local_search.t_max.is_zero() {
            return fail("local search budget must be positive");
        }
        Ok(())
    }
}

/// Per-island population size: ⌈100 / islands⌉ up to 11 islands, 13 beyond.
pub fn population_size_for(islands: usize) -> usize {
    match islands {
        0 => 100,
        1..=11 => 100usize.div_ceil(islands),
        _ => 13,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Complete,
}

/// Directed communication graph between islands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<BTreeSet<usize>>,
}

impl Topology {
    pub fn island_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, island: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[island].iter().copied()
    }

    pub fn out_degree(&self, island: usize) -> usize {
        self.neighbors[island].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(BTreeSet::len).sum()
    }
}

pub fn build_topology(kind: TopologyKind, island_count: usize) -> Topology {
    let neighbors = match kind {
        TopologyKind::Complete => (0..island_count)
            .map(|i| (0..island_count).filter(|&j| j != i).collect())
            .collect(),
    };
    Topology { neighbors }
}

/// Copies of selected solutions sent from one island to a neighbour.
#[derive(Debug, Clone)]
pub struct MigrantBatch {
    pub sender: usize,
    pub generation: usize,
    pub solutions: Vec<Solution>,
}

#[derive(Debug)]
struct Outbox {
    target: usize,
    channel: Sender<MigrantBatch>,
    delivered: Arc<AtomicUsize>,
}

/// An island's end of the migration fabric: one inbox and one outbox per neighbour.
#[derive(Debug)]
pub struct Mailbox {
    island: usize,
    inbox: Option<Receiver<MigrantBatch>>,
    outboxes: Vec<Outbox>,
    delivered: Arc<AtomicUsize>,
}

impl Mailbox {
    /// A mailbox with no neighbours.
    pub fn isolated(island: usize) -> Self {
        Self {
            island,
            inbox: None,
            outboxes: Vec::new(),
            delivered: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn island(&self) -> usize {
        self.island
    }

    pub fn neighbor_ids(&self) -> Vec<usize> {
        self.outboxes.iter().map(|o| o.target).collect()
    }

    pub fn neighbor_count(&self) -> usize {
        self.outboxes.len()
    }

    /// Shared counter of batches successfully queued into this island's inbox.
    pub fn delivered_counter(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.delivered)
    }

    /// Sends a copy of `solutions` to every neighbour. Returns how many neighbours accepted it.
    pub fn send(&self, generation: usize, solutions: &[Solution]) -> usize {
        let mut accepted = 0;
        for outbox in &self.outboxes {
            let batch = MigrantBatch {
                sender: self.island,
                generation,
                solutions: solutions.to_vec(),
            };
            if outbox.channel.send(batch).is_ok() {
                outbox.delivered.fetch_add(1, Ordering::Relaxed);
                accepted += 1;
            }
        }
        accepted
    }
}

/// Builds one mailbox per island, wired along the topology's edges.
pub fn wire_mailboxes(topology: &Topology) -> Vec<Mailbox> {
    let count = topology.island_count();
    let mut receivers = Vec::with_capacity(count);
    let mut senders = Vec::with_capacity(count);
    let counters: Vec<Arc<AtomicUsize>> = (0..count).map(|_| Arc::new(AtomicUsize::new(0))).collect();
    for _ in 0..count {
        let (tx, rx) = channel();
        senders.push(tx);
        receivers.push(rx);
    }
    receivers
        .into_iter()
        .enumerate()
        .map(|(island, rx)| Mailbox {
            island,
            inbox: Some(rx),
            outboxes: topology
                .neighbors(island)
                .map(|target| Outbox {
                    target,
                    channel: senders[target].clone(),
                    delivered: Arc::clone(&counters[target]),
                })
                .collect(),
            delivered: Arc::clone(&counters[island]),
        })
        .collect()
}

/// Drains every batch already queued, without waiting.
pub fn check_migrants(mailbox: &Mailbox) -> Vec<MigrantBatch> {
    let Some(inbox) = &mailbox.inbox else {
        return Vec::new();
    };
    let mut batches = Vec::new();
    loop {
        match inbox.try_recv() {
            Ok(batch) => batches.push(batch),
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
        }
    }
    batches
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IslandStats {
    pub island_id: usize,
    pub generations: usize,
    pub send_events: usize,
    /// Solutions sent, counted once per neighbour.
    pub migrants_sent: usize,
    /// Part of `migrants_sent` that reached a still-running neighbour.
    pub migrants_delivered: usize,
    pub batches_received: usize,
    pub migrants_received: usize,
    pub local_search_scans: usize,
    pub local_search_improvements: usize,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone)]
pub struct IslandOutcome {
    pub archive: Archive,
    pub stats: IslandStats,
}

/// Runs whichever loop `config.algorithm` names.
pub fn run_island(
    config: &IslandConfig,
    instance: &Instance,
    mailbox: &Mailbox,
    clock: &dyn Clock,
) -> Result<IslandOutcome, IslandError> {
    match config.algorithm {
        Algorithm::Memetic => run_memetic_island(config, instance, mailbox, clock),
        Algorithm::Nsga2 => run_nsga2_island(config, instance, mailbox, clock),
    }
}

struct IslandState<'a> {
    config: &'a IslandConfig,
    instance: &'a Instance,
    mailbox: &'a Mailbox,
    clock: &'a dyn Clock,
    rng: SearchRng,
    archive: Archive,
    stats: IslandStats,
    start: Duration,
}

impl<'a> IslandState<'a> {
    fn new(
        config: &'a IslandConfig,
        instance: &'a Instance,
        mailbox: &'a Mailbox,
        clock: &'a dyn Clock,
    ) -> Result<Self, IslandError> {
        config.validate()?;
        Ok(Self {
            config,
            instance,
            mailbox,
            clock,
            rng: seeded_rng(config.seed),
            archive: Archive::new(config.archive_capacity),
            stats: IslandStats {
                island_id: config.island_id,
                ..IslandStats::default()
            },
            start: clock.now(),
        })
    }

    fn out_of_time(&self) -> bool {
        match self.config.time_budget {
            Some(budget) => self.clock.now().saturating_sub(self.start) >= budget,
            None => false,
        }
    }

    fn random_population(&mut self) -> Vec<Solution> {
        let n = self.instance.n();
        let pop = (0..self.config.population_size)
            .map(|_| {
                let perm = random_permutation(n, &mut self.rng);
                Solution::new(self.instance, perm).expect("random permutation is valid")
            })
            .collect();
        rank_and_crowd(pop).into_members()
    }

    /// `population_size` children from tournament-selected parent pairs.
    fn offspring(&mut self, population: &[Solution]) -> Vec<Solution> {
        let target = self.config.population_size;
        let k = self.config.tournament_size;
        let VariationParams { crossover, mutation } = self.config.variation;
        let mut children = Vec::with_capacity(target + 1);
        while children.len() < target {
            let p1 = tournament_select(population, k, fitness_then_diversity, &mut self.rng)
                .expect("population is never empty");
            let p2 = tournament_select(population, k, fitness_then_diversity, &mut self.rng)
                .expect("population is never empty");
            let (mut c1, mut c2) = if self.rng.gen_bool(crossover) {
                cycle_crossover(&p1.perm, &p2.perm).expect("parents share the instance size")
            } else {
                (p1.perm.clone(), p2.perm.clone())
            };
            swap_mutation(&mut c1, mutation, &mut self.rng);
            swap_mutation(&mut c2, mutation, &mut self.rng);
            for child in [c1, c2] {
                if children.len() < target {
                    children.push(Solution::new(self.instance, child).expect("operators keep permutations valid"));
                }
            }
        }
        children
    }

    fn receive(&mut self) -> Vec<Solution> {
        let batches = check_migrants(self.mailbox);
        self.stats.batches_received += batches.len();
        let migrants: Vec<Solution> = batches
            .into_iter()
            .flat_map(|b| b.solutions)
            .map(|mut s| {
                s.visited = false;
                s.rank = None;
                s
            })
            .collect();
        self.stats.migrants_received += migrants.len();
        migrants
    }

    fn emigrate(&mut self, generation: usize, pool: &[Solution]) {
        if pool.is_empty() {
            return;
        }
        let selected: Vec<Solution> = (0..self.config.migrants)
            .map(|_| {
                tournament_select(pool, self.config.tournament_size, fitness_then_diversity, &mut self.rng)
                    .expect("pool checked non-empty")
                    .clone()
            })
            .collect();
        let receivers = self.mailbox.send(generation, &selected);
        self.stats.send_events += 1;
        self.stats.migrants_sent += self.mailbox.neighbor_count() * selected.len();
        self.stats.migrants_delivered += receivers * selected.len();
    }

    fn finish(mut self) -> IslandOutcome {
        self.stats.elapsed_secs = self.clock.now().saturating_sub(self.start).as_secs_f64();
        IslandOutcome {
            archive: self.archive,
            stats: self.stats,
        }
    }
}

/// The memetic island loop.
///
/// Per generation: tournament parents, cycle crossover, swap mutation, archive
/// update with the offspring, local search from the archive (its result becomes
/// the population), ranking and crowding, a non-blocking drain of migrants,
/// archive update with population and migrants, emigration every `epoch`
/// generations, and elitist integration of the migrants.
pub fn run_memetic_island(
    config: &IslandConfig,
    instance: &Instance,
    mailbox: &Mailbox,
    clock: &dyn Clock,
) -> Result<IslandOutcome, IslandError> {
    let mut state = IslandState::new(config, instance, mailbox, clock)?;
    let mut population = state.random_population();
    state.archive.insert(&population);

    for generation in 1..=config.generations {
        if state.out_of_time() {
            break;
        }
        let offspring = state.offspring(&population);
        state.archive.insert(&offspring);

        let searched = dominance_based_local_search(
            &state.archive,
            &config.local_search,
            instance,
            &mut state.rng,
            clock,
        );
        state.stats.local_search_scans += searched.scans;
        state.stats.local_search_improvements += searched.improvements;
        let mut current = searched.population;
        if current.len() > config.population_size {
            current = truncate_by_fitness(current, config.population_size);
        }
        let current = rank_and_crowd(current).into_members();

        let migrants = state.receive();
        state.archive.insert(current.iter().chain(migrants.iter()));

        if generation % config.epoch == 0 {
            let pool = state.archive.ranked_members();
            state.emigrate(generation, &pool);
        }

        population = elitist_integration(current, migrants, config.population_size);
        state.stats.generations = generation;
    }

    Ok(state.finish())
}

/// NSGA-II island: the same migration and archive bookkeeping, no local search,
/// and (μ+λ) survival by rank then crowding. Migrants are drawn from the population.
pub fn run_nsga2_island(
    config: &IslandConfig,
    instance: &Instance,
    mailbox: &Mailbox,
    clock: &dyn Clock,
) -> Result<IslandOutcome, IslandError> {
    let mut state = IslandState::new(config, instance, mailbox, clock)?;
    let mut population = state.random_population();
    state.archive.insert(&population);

    for generation in 1..=config.generations {
        if state.out_of_time() {
            break;
        }
        let offspring = state.offspring(&population);
        state.archive.insert(&offspring);

        let mut union = population;
        union.extend(offspring);
        let survivors = truncate_by_fitness(union, config.population_size);
        let survivors = rank_and_crowd(survivors).into_members();

        let migrants = state.receive();
        state.archive.insert(&migrants);

        if generation % config.epoch == 0 {
            state.emigrate(generation, &survivors);
        }

        population = elitist_integration(survivors, migrants, config.population_size);
        state.stats.generations = generation;
    }

    Ok(state.finish())
}

/// Runs one island per config on a pool of at most `max_threads` workers and
/// returns the outcomes in island order.
///
/// `configs[i]` runs with `mailboxes[i]`; each mailbox is dropped as soon as
/// its island finishes.
pub fn run_islands(
    instance: &Instance,
    configs: Vec<IslandConfig>,
    mailboxes: Vec<Mailbox>,
    clock: &dyn Clock,
    max_threads: usize,
) -> Result<Vec<IslandOutcome>, IslandError> {
    assert_eq!(configs.len(), mailboxes.len(), "one mailbox per island");
    for c in &configs {
        c.validate()?;
    }
    let count = configs.len();
    let queue: Mutex<VecDeque<(usize, IslandConfig, Mailbox)>> = Mutex::new(
        configs
            .into_iter()
            .zip(mailboxes)
            .enumerate()
            .map(|(i, (c, m))| (i, c, m))
            .collect(),
    );
    let results: Mutex<Vec<Option<Result<IslandOutcome, IslandError>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    let workers = max_threads.clamp(1, count.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((index, config, mailbox)) = job else {
                    break;
                };
                let outcome = run_island(&config, instance, &mailbox, clock);
                drop(mailbox);
                results.lock().expect("results lock")[index] = Some(outcome);
            });
        }
    });

    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every island ran"))
        .collect()
}
