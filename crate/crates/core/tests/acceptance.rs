//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if a gated criterion fails.

use std::collections::HashSet;
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;

use mqap::archive::Archive;
use mqap::clock::WallClock;
use mqap::evaluation::{evaluate_delta, evaluate_full, ObjectiveVector, Solution};
use mqap::experiment::{cmd_enumerate, cmd_run, run_trial, ExperimentConfig};
use mqap::genetics::{cycle_crossover, random_permutation, seeded_rng, SearchRng};
use mqap::instance::{generate_uniform, Instance, InstanceSpec, SquareMatrix};
use mqap::island::{build_topology, run_island, wire_mailboxes, Algorithm, IslandConfig, TopologyKind};
use mqap::localsearch::LocalSearchParams;
use mqap::metrics::{hypervolume, normalized_hypervolumes, wilcoxon_rank_sum_with, Alternative, Front};
use mqap::ranking::dominance_depth_assign;

struct Verdict {
    passed: bool,
    gated: bool,
    detail: String,
}

fn gated(passed: bool, detail: String) -> Verdict {
    Verdict {
        passed,
        gated: true,
        detail,
    }
}

fn random_instance(rng: &mut SearchRng, n: usize, m: usize) -> Instance {
    let mat = |rng: &mut SearchRng| {
        let rows: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0..=100)).collect()).collect();
        SquareMatrix::from_rows(&rows)
    };
    let d = mat(rng);
    let flows = (0..m).map(|_| mat(rng)).collect();
    Instance::new("random", d, flows).unwrap()
}

fn c1_delta_exactness() -> Verdict {
    let mut rng = seeded_rng(1);
    let (mut cases, mut mismatches) = (0, 0);
    let start = Instant::now();
    for _ in 0..250 {
        let n = rng.gen_range(2..=25);
        let m = rng.gen_range(1..=4);
        let inst = random_instance(&mut rng, n, m);
        let perm = random_permutation(n, &mut rng);
        let base = evaluate_full(&inst, &perm).unwrap();
        for _ in 0..5 {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let delta = evaluate_delta(&inst, &perm, i, j).unwrap();
            let mut swapped = perm.clone();
            swapped.swap(i, j);
            if &base + &delta != evaluate_full(&inst, &swapped).unwrap() {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    gated(
        cases >= 1000 && mismatches == 0 && secs < 5.0,
        format!("{cases} cases, {mismatches} mismatches, {secs:.2}s"),
    )
}

fn c2_crossover_example() -> Verdict {
    let p1 = [8, 4, 7, 3, 6, 2, 5, 1, 9, 0];
    let p2 = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
    let (c1, c2) = cycle_crossover(&p1, &p2).unwrap();
    let ok = c1 == [8, 1, 2, 3, 4, 5, 6, 7, 9, 0] && c2 == [0, 4, 7, 3, 6, 2, 5, 1, 8, 9];
    gated(ok, format!("c1={c1:?} c2={c2:?}"))
}

fn c3_ranking_oracle() -> Verdict {
    let mut rng = seeded_rng(3);
    let start = Instant::now();
    let mut disagreements = 0;
    for _ in 0..200 {
        let size = rng.gen_range(1..=30);
        let m = rng.gen_range(1..=4);
        let pts: Vec<Vec<i64>> = (0..size).map(|_| (0..m).map(|_| rng.gen_range(0..10)).collect()).collect();
        let pop: Vec<Solution> = pts
            .iter()
            .enumerate()
            .map(|(id, v)| Solution::with_objectives(vec![id], ObjectiveVector::new(v.clone())))
            .collect();
        let ranked = dominance_depth_assign(pop);
        let mut got = vec![0; size];
        for s in &ranked.members {
            got[s.perm[0]] = s.rank.unwrap();
        }
        // repeated filter
        let dom = |a: &[i64], b: &[i64]| a.iter().zip(b).all(|(x, y)| x <= y) && a != b;
        let mut expected = vec![usize::MAX; size];
        let mut left: Vec<usize> = (0..size).collect();
        let mut depth = 0;
        while !left.is_empty() {
            let front: Vec<usize> = left
                .iter()
                .copied()
                .filter(|&a| !left.iter().any(|&b| dom(&pts[b], &pts[a])))
                .collect();
            for &a in &front {
                expected[a] = depth;
            }
            left.retain(|a| !front.contains(a));
            depth += 1;
        }
        if got != expected {
            disagreements += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    gated(
        disagreements == 0 && secs < 5.0,
        format!("200 populations, {disagreements} disagreements, {secs:.2}s"),
    )
}

fn monte_carlo_hv(points: &[Vec<f64>], samples: usize, rng: &mut SearchRng) -> f64 {
    let m = points[0].len();
    let mut hits = 0usize;
    let mut x = vec![0.0; m];
    for _ in 0..samples {
        for v in x.iter_mut() {
            *v = rng.gen::<f64>();
        }
        if points.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

fn c4_hypervolume_accuracy() -> Verdict {
    let start = Instant::now();
    let hand = hypervolume(&[vec![0.25, 0.75], vec![0.5, 0.5]], &[1.0, 1.0]).unwrap();
    let hand_ok = (hand - 0.3125).abs() <= 1e-12;
    let mut rng = seeded_rng(4);
    let mut worst: f64 = 0.0;
    for f in 0..50 {
        let m = 2 + f % 3;
        let size = rng.gen_range(1..=20);
        let pts: Vec<Vec<f64>> = (0..size).map(|_| (0..m).map(|_| rng.gen::<f64>()).collect()).collect();
        let exact = hypervolume(&pts, &vec![1.0; m]).unwrap();
        let mc = monte_carlo_hv(&pts, 1_000_000, &mut rng);
        worst = worst.max((exact - mc).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    gated(
        hand_ok && worst <= 1e-2 && secs < 60.0,
        format!("hand case {hand}, worst |exact - MC| = {worst:.5} over 50 fronts, {secs:.1}s"),
    )
}

fn c5_small_instance_optimality() -> Verdict {
    let start = Instant::now();
    let mut per_instance = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for inst_seed in 0..5u64 {
        let inst = generate_uniform(&InstanceSpec::new(7, 2, 0.0, 500 + inst_seed)).unwrap();
        let exact = Front::from_solutions(&cmd_enumerate(&inst).unwrap());
        let mut hits = 0;
        for run_seed in 0..10u64 {
            let cfg = IslandConfig {
                population_size: 20,
                generations: 50,
                local_search: LocalSearchParams {
                    t_max: Duration::from_millis(500),
                },
                seed: 1000 * inst_seed + run_seed,
                time_budget: None,
                ..IslandConfig::default()
            };
            let mailbox = wire_mailboxes(&build_topology(TopologyKind::Complete, 1)).pop().unwrap();
            let out = run_island(&cfg, &inst, &mailbox, &WallClock::new()).unwrap();
            let found = Front::from_solutions(out.archive.members());
            let hv = normalized_hypervolumes(&[found, exact.clone()], 0.01).unwrap();
            let ratio = hv[0] / hv[1];
            min_ratio = min_ratio.min(ratio);
            if ratio >= 0.95 {
                hits += 1;
            }
        }
        per_instance.push(hits);
    }
    let secs = start.elapsed().as_secs_f64();
    gated(
        per_instance.iter().all(|&h| h >= 9) && secs < 600.0,
        format!("seeds reaching 0.95 per instance {per_instance:?}, min ratio {min_ratio:.4}, {secs:.1}s"),
    )
}

fn c6_archive_stress() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded_rng(6);
    let capacity = 25;
    let mut archive = Archive::new(capacity);
    let mut stream = Vec::with_capacity(10_000);
    let mut evicted: Vec<Solution> = Vec::new();
    let mut violations = 0;
    for id in 0..10_000usize {
        let v: Vec<i64> = (0..3).map(|_| rng.gen_range(0..2000)).collect();
        let s = Solution::with_objectives(vec![id], ObjectiveVector::new(v));
        let report = archive.insert(std::iter::once(&s));
        evicted.extend(report.evicted);
        stream.push(s);
        if archive.len() > capacity {
            violations += 1;
        }
        let members = archive.members();
        for a in members {
            for b in members {
                if a.objectives.values().iter().zip(b.objectives.values()).all(|(x, y)| x <= y)
                    && a.objectives != b.objectives
                {
                    violations += 1;
                }
            }
        }
    }
    // every member is truly non-dominated, or each of its dominators is
    // covered by some solution lost to crowding eviction
    let weakly = |a: &Solution, b: &Solution| a.objectives.values().iter().zip(b.objectives.values()).all(|(x, y)| x <= y);
    let mut unexplained = 0;
    let mut off_front = 0;
    for x in archive.members() {
        let dominators: Vec<&Solution> = stream.iter().filter(|y| weakly(y, x) && y.objectives != x.objectives).collect();
        if !dominators.is_empty() {
            off_front += 1;
        }
        for y in dominators {
            if !evicted.iter().any(|z| weakly(z, y)) {
                unexplained += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    gated(
        violations == 0 && unexplained == 0 && secs < 10.0,
        format!(
            "10000 inserts, {violations} invariant violations, {} evictions, {off_front} members off the true front (all explained: {}), {secs:.2}s",
            evicted.len(),
            unexplained == 0
        ),
    )
}

fn async_config(id: usize) -> IslandConfig {
    IslandConfig {
        island_id: id,
        population_size: 25,
        generations: 20,
        local_search: LocalSearchParams {
            t_max: Duration::from_millis(50),
        },
        seed: 70 + id as u64,
        time_budget: None,
        ..IslandConfig::default()
    }
}

/// Runs islands 0..3 to completion; island 3 either finishes at once or
/// stalls for `stall` while holding its mailbox. Returns the time the three
/// active islands needed.
fn three_islands_with_fourth(inst: &Instance, stall: Option<Duration>) -> (Duration, Vec<usize>) {
    let mut boxes = wire_mailboxes(&build_topology(TopologyKind::Complete, 4));
    let fourth = boxes.pop().unwrap();
    let clock = WallClock::new();
    let (done_tx, done_rx) = mpsc::channel();
    let start = Instant::now();
    thread::scope(|scope| {
        let clock = &clock;
        scope.spawn(move || match stall {
            Some(d) => {
                thread::sleep(d);
                drop(fourth);
            }
            None => {
                let cfg = IslandConfig {
                    generations: 0,
                    ..async_config(3)
                };
                run_island(&cfg, inst, &fourth, clock).unwrap();
            }
        });
        let handles: Vec<_> = boxes
            .into_iter()
            .enumerate()
            .map(|(id, mailbox)| {
                let done = done_tx.clone();
                scope.spawn(move || {
                    let out = run_island(&async_config(id), inst, &mailbox, clock).unwrap();
                    done.send(()).unwrap();
                    out.stats.generations
                })
            })
            .collect();
        for _ in 0..3 {
            done_rx.recv().unwrap();
        }
        let elapsed = start.elapsed();
        let generations = handles.into_iter().map(|h| h.join().unwrap()).collect();
        (elapsed, generations)
    })
}

fn c7_asynchrony() -> Verdict {
    let start = Instant::now();
    let inst = generate_uniform(&InstanceSpec::new(25, 2, 0.0, 77)).unwrap();
    let (solo, solo_gens) = three_islands_with_fourth(&inst, None);
    let (stalled, stalled_gens) = three_islands_with_fourth(&inst, Some(Duration::from_secs(10)));
    let secs = start.elapsed().as_secs_f64();
    let ok = solo_gens.iter().chain(&stalled_gens).all(|&g| g == 20)
        && solo < Duration::from_secs(5)
        && stalled <= solo * 2
        && secs < 60.0;
    gated(
        ok,
        format!(
            "3 active islands: solo {:.2}s, with a stalled neighbour {:.2}s (limit {:.2}s), generations {:?}, {secs:.1}s total",
            solo.as_secs_f64(),
            stalled.as_secs_f64(),
            (solo * 2).as_secs_f64(),
            stalled_gens
        ),
    )
}

fn c8_directional_comparison() -> Verdict {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::from_text(
        "instance = gen:n=30,m=2,correlation=0,seed=8\nislands = 4\ngenerations = 30\nls_secs = 1\ntime_budget_secs = none\nseed = 800\n",
    )
    .unwrap();
    let inst = cfg.instance.as_ref().unwrap().load().unwrap();
    let mut fronts = Vec::new();
    for algorithm in [Algorithm::Memetic, Algorithm::Nsga2] {
        cfg.algorithm = algorithm;
        for trial in 0..10 {
            let r = run_trial(&cfg, &inst, trial, 4).unwrap();
            fronts.push(Front::from_solutions(&r.front));
        }
    }
    let hv = normalized_hypervolumes(&fronts, 0.01).unwrap();
    let (memetic, nsga) = hv.split_at(10);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let test = wilcoxon_rank_sum_with(memetic, nsga, Alternative::Greater);
    let p = test.map(|t| format!("{:.4}", t.p_value)).unwrap_or_else(|e| e.to_string());
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        passed: mean(memetic) >= mean(nsga),
        gated: false,
        detail: format!(
            "mean HV memetic {:.4} vs NSGA-II {:.4}, one-sided rank-sum p = {p}, {secs:.1}s",
            mean(memetic),
            mean(nsga)
        ),
    }
}

fn c9_determinism() -> Verdict {
    let start = Instant::now();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut contents = Vec::new();
    for dir in &dirs {
        let mut cfg = ExperimentConfig::from_text(
            "instance = gen:n=12,m=2,correlation=0.3,seed=9\nislands = 1\ntrials = 2\ngenerations = 30\nls_secs = 5\nseed = 90\n",
        )
        .unwrap();
        cfg.out = dir.path().to_path_buf();
        let (manifest, _) = cmd_run(&cfg).unwrap();
        let files: Vec<Vec<u8>> = manifest
            .runs
            .iter()
            .map(|r| std::fs::read(dir.path().join(&r.front_file)).unwrap())
            .collect();
        contents.push(files);
    }
    let secs = start.elapsed().as_secs_f64();
    let distinct: HashSet<&Vec<u8>> = contents[0].iter().collect();
    gated(
        contents[0] == contents[1] && secs < 30.0,
        format!(
            "{} front files byte-identical across two runs: {} ({} distinct trials), {secs:.2}s",
            contents[0].len(),
            contents[0] == contents[1],
            distinct.len()
        ),
    )
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as --nocapture; a name filter skips the suite
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("delta-evaluation exactness", c1_delta_exactness),
        ("cycle-crossover reference example", c2_crossover_example),
        ("ranking oracle equivalence", c3_ranking_oracle),
        ("hypervolume accuracy", c4_hypervolume_accuracy),
        ("small-instance optimality", c5_small_instance_optimality),
        ("archive invariants", c6_archive_stress),
        ("asynchrony", c7_asynchrony),
        ("directional desk-scale comparison", c8_directional_comparison),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        let status = match (v.passed, v.gated) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (reported, not gated)",
        };
        println!("acceptance {} {name}: {status} - {}", idx + 1, v.detail);
        if !v.passed && v.gated {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} gated criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all gated criteria passed");
        ExitCode::SUCCESS
    }
}
