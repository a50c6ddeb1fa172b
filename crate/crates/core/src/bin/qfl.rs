//! Experiment front-end.
//!
//! Verbs:
//!   run              one configuration, one seed
//!   sweep            attack x defense x q x rho x seed grid
//!   check            invariant and diagnostic suite
//!   partition-stats  Dirichlet split audit
//!
//! Flags override config-file keys; see `qfl help`.

use std::process::ExitCode;

use qfl_core::analysis::{clip_to_radius, lemma1_check, proposition1_check, quadratic};
use qfl_core::config::{build_grid, build_run_config, ConfigMap, ExperimentGrid};
use qfl_core::crafting::{craft, CraftingConfig, HistoryBuffer};
use qfl_core::error::{Error, Result};
use qfl_core::experiment::{emit_results, run_grid};
use qfl_core::federation::dirichlet_partition;
use qfl_core::linalg;
use qfl_core::qsim::{AngleSource, Gate, Statevector, ZObservable};
use qfl_core::rng::stream;
use rand::Rng;

const USAGE: &str = "\
qfl - quantum federated learning attack/defense simulator

USAGE:
    qfl <verb> [flags]

VERBS:
    run               execute a single configuration
    sweep             execute the sweep grid from sweep.* keys
    check             run the invariant/diagnostic suite
    partition-stats   audit the Dirichlet partition heterogeneity
    help              print this text

FLAGS (override config keys):
    --config PATH     key=value config file
    --dataset ID      mnist | mnist8x8 | cifar10 | synthetic_blobs
    --attack ID       none | grover | pauli | bitflip | signflip
    --defense ID      fedavg | krum | mkrum | foolsgold | mudhog | flguardian
    --q FLOAT         malicious client fraction
    --rho FLOAT       round-level poisoning probability
    --rounds INT      federation rounds
    --clients INT     client count
    --seed INT        run seed
    --out DIR         output directory (results.csv, summary.csv, ...)
    --shots INT       shot-sampled readout instead of exact expectations
    --paper-scale     K=20, T=100, full dataset profile
    --set KEY=VALUE   set any raw config key

Dataset files are searched under --set dataset.root=... or $QFL_DATA_DIR.
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(args: &[String]) -> Result<ExitCode> {
    let verb = args.first().map(String::as_str).unwrap_or("help");
    let map = parse_flags(&args[1..])?;
    match verb {
        "run" => cmd_run(map),
        "sweep" => cmd_sweep(map),
        "check" => cmd_check(),
        "partition-stats" => cmd_partition_stats(map),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(ExitCode::SUCCESS)
        }
        other => Err(Error::Config(format!(
            "unknown verb '{other}'; try 'qfl help'"
        ))),
    }
}

fn parse_flags(args: &[String]) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    let mut it = args.iter().peekable();
    let take_value = |it: &mut std::iter::Peekable<std::slice::Iter<String>>,
                          flag: &str|
     -> Result<String> {
        it.next()
            .cloned()
            .ok_or_else(|| Error::Config(format!("{flag} needs a value")))
    };
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                let path = take_value(&mut it, "--config")?;
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read config {path}: {e}")))?;
                let file_map = ConfigMap::parse(&text)?;
                // file keys first; flags that already appeared still win
                let mut merged = file_map;
                for key in map.keys().cloned().collect::<Vec<_>>() {
                    if let Some(v) = map.get(&key) {
                        merged.set(&key, v);
                    }
                }
                map = merged;
            }
            "--dataset" => {
                let v = take_value(&mut it, "--dataset")?;
                map.set("dataset.id", &v);
            }
            "--attack" => {
                let v = take_value(&mut it, "--attack")?;
                map.set("attack.kind", &v);
            }
            "--defense" => {
                let v = take_value(&mut it, "--defense")?;
                map.set("defense.rule", &v);
            }
            "--q" => {
                let v = take_value(&mut it, "--q")?;
                map.set("federation.malicious_fraction", &v);
            }
            "--rho" => {
                let v = take_value(&mut it, "--rho")?;
                map.set("attack.rho", &v);
            }
            "--rounds" => {
                let v = take_value(&mut it, "--rounds")?;
                map.set("federation.rounds", &v);
            }
            "--clients" => {
                let v = take_value(&mut it, "--clients")?;
                map.set("federation.clients", &v);
            }
            "--seed" => {
                let v = take_value(&mut it, "--seed")?;
                map.set("federation.seed", &v);
            }
            "--out" => {
                let v = take_value(&mut it, "--out")?;
                map.set("output.dir", &v);
            }
            "--shots" => {
                let v = take_value(&mut it, "--shots")?;
                map.set("federation.shots", &v);
            }
            "--paper-scale" => {
                map.set("federation.paper_scale", "true");
            }
            "--set" => {
                let v = take_value(&mut it, "--set")?;
                let (key, value) = v
                    .split_once('=')
                    .ok_or_else(|| Error::Config("--set expects KEY=VALUE".into()))?;
                map.set(key.trim(), value.trim());
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown flag '{other}'; try 'qfl help'"
                )))
            }
        }
    }
    Ok(map)
}

fn cmd_run(map: ConfigMap) -> Result<ExitCode> {
    let cfg = build_run_config(&map)?;
    // a run is a one-cell grid: reuse the grid machinery for emission
    let grid = ExperimentGrid {
        attacks: vec![cfg.federation.attack.kind],
        defenses: vec![cfg.federation.defense],
        q_values: vec![cfg.federation.malicious_fraction],
        rho_values: vec![cfg.federation.attack.poison_prob],
        seeds: vec![cfg.federation.seed],
    };
    let outcome = run_grid(&map, &grid)?;
    if !outcome.cell_errors.is_empty() {
        for e in &outcome.cell_errors {
            eprintln!("cell error: {e}");
        }
        return Ok(ExitCode::FAILURE);
    }
    let files = emit_results(&outcome, &cfg.out_dir)?;
    for s in &outcome.summaries {
        println!(
            "{} / {} q={} rho={}: final accuracy {:.2}% (std {:.2})",
            s.attack, s.defense, s.q, s.rho, s.final_accuracy_mean, s.final_accuracy_std
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(map: ConfigMap) -> Result<ExitCode> {
    let cfg = build_run_config(&map)?;
    let grid = build_grid(&map)?;
    let outcome = run_grid(&map, &grid)?;
    let files = emit_results(&outcome, &cfg.out_dir)?;
    println!(
        "{} cells, {} rows, {} cell errors",
        outcome.summaries.len(),
        outcome.rows.len(),
        outcome.cell_errors.len()
    );
    for e in &outcome.cell_errors {
        eprintln!("cell error: {e}");
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn check_line(name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "{}: {name}{}{}",
        if pass { "PASS" } else { "FAIL" },
        if detail.is_empty() { "" } else { " - " },
        detail
    );
    pass
}

fn cmd_check() -> Result<ExitCode> {
    let mut all = true;

    // norm preservation and diagonal inertia over random states
    {
        let mut rng = stream(1001, &[1]);
        let mut worst_norm: f64 = 0.0;
        let mut worst_diag: f64 = 0.0;
        for _ in 0..100 {
            let n = 3;
            let mut state = Statevector::new(n).unwrap();
            for w in 0..n {
                state
                    .apply(&Gate::Rx {
                        wire: w,
                        angle: AngleSource::Fixed(rng.random::<f64>() * 6.0 - 3.0),
                    })
                    .unwrap();
                state.apply(&Gate::H { wire: w }).unwrap();
            }
            state
                .apply(&Gate::Cnot {
                    control: 0,
                    target: 2,
                })
                .unwrap();
            worst_norm = worst_norm.max((state.norm_sqr() - 1.0).abs());
            let before: Vec<f64> = (0..n)
                .map(|w| state.expectation_z(&ZObservable::single(w)).unwrap())
                .collect();
            let mut diag = state.clone();
            diag.apply(&Gate::PhaseOracle {
                wires: vec![0, 1, 2],
                marked: vec![true, true, false],
            })
            .unwrap();
            diag.apply(&Gate::Rz {
                wire: 1,
                angle: AngleSource::Fixed(1.3),
            })
            .unwrap();
            for (w, b) in before.iter().enumerate() {
                let after = diag.expectation_z(&ZObservable::single(w)).unwrap();
                worst_diag = worst_diag.max((after - b).abs());
            }
        }
        all &= check_line(
            "norm preservation (100 random circuits)",
            worst_norm <= 1e-10,
            &format!("worst {worst_norm:.2e}"),
        );
        all &= check_line(
            "diagonal-gate inertia on Z features",
            worst_diag <= 1e-10,
            &format!("worst {worst_diag:.2e}"),
        );
    }

    // deviation recursion on the synthetic quadratic objective
    {
        let mut rng = stream(1002, &[2]);
        let fed = quadratic::QuadraticFederation::random(4, 5, 6, &mut rng);
        let l = fed.smoothness();
        let theta0: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut attack_rng = stream(1003, &[3]);
        let (devs, b_norms) = fed.run_paired(50, &theta0, &[0], |_, _| {
            let mut d: Vec<f64> = (0..6)
                .map(|_| attack_rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            clip_to_radius(&mut d, 0.5);
            d
        });
        let out = proposition1_check(&devs, &b_norms, l, fed.beta)?;
        all &= check_line(
            "deviation recursion on quadratic objective (50 rounds)",
            out.violations == 0,
            &format!("L={l:.4}, max residual {:.2e}", out.max_residual),
        );
    }

    // perturbation bound on random clipped instances
    {
        let mut rng = stream(1004, &[4]);
        let mut violations = 0;
        for _ in 0..10_000 {
            let m = 1 + (rng.random::<u32>() % 4) as usize;
            let k = m + 1 + (rng.random::<u32>() % 8) as usize;
            let r_t = rng.random::<f64>() + 0.01;
            let deltas: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let mut d: Vec<f64> =
                        (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                    clip_to_radius(&mut d, r_t);
                    d
                })
                .collect();
            let weighted: Vec<(f64, &[f64])> =
                deltas.iter().map(|d| (1.0 / k as f64, d.as_slice())).collect();
            let out = lemma1_check(&weighted, r_t, m as f64 / k as f64)?;
            if !out.pass {
                violations += 1;
            }
        }
        all &= check_line(
            "perturbation bound on 10,000 clipped instances",
            violations == 0,
            &format!("{violations} violations"),
        );
    }

    // crafting invariants on randomized trials
    {
        let mut rng = stream(1005, &[5]);
        let dim = 24;
        let mut buf = HistoryBuffer::new(10, dim);
        for _ in 0..10 {
            let entry: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
            buf.push(entry).unwrap();
        }
        let cfg = CraftingConfig::default();
        let mut ok = true;
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..dim).map(|_| 2.0 * (rng.random::<f64>() - 0.5)).collect();
            let (out, trace) = craft(&raw, &buf, &cfg, &mut rng);
            ok &= trace.intensity >= cfg.eps_min - 1e-15 && trace.intensity <= cfg.eps_max + 1e-15;
            let zero_frac = out.iter().filter(|&&v| v == 0.0).count() as f64 / dim as f64;
            ok &= zero_frac >= cfg.sparsity_quantile - 1.0 / dim as f64;
        }
        all &= check_line("crafting invariants (1,000 randomized trials)", ok, "");
    }

    // linear-task sanity: wide blobs are separable by the centroid rule
    {
        let mut rng = stream(1006, &[6]);
        let ds = qfl_core::data::synthetic_blobs(2, 200, 4, 10.0, &mut rng)?;
        let center = |axis: usize, d: usize| {
            qfl_core::data::blob_to_pixel(if d == axis { 10.0 } else { 0.0 }, 10.0)
        };
        let mut correct = 0usize;
        for i in 0..ds.len() {
            let x = ds.input(i);
            let d0: f64 = x
                .iter()
                .enumerate()
                .map(|(d, &v)| (v - center(0, d)) * (v - center(0, d)))
                .sum();
            let d1: f64 = x
                .iter()
                .enumerate()
                .map(|(d, &v)| (v - center(1, d)) * (v - center(1, d)))
                .sum();
            let pred = usize::from(d1 < d0);
            if pred == ds.label(i) as usize {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.len() as f64;
        all &= check_line(
            "synthetic blob separability",
            acc >= 0.99,
            &format!("centroid accuracy {acc:.4}"),
        );
    }

    Ok(if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_partition_stats(map: ConfigMap) -> Result<ExitCode> {
    let cfg = build_run_config(&map)?;
    let mut cache = qfl_core::experiment::DatasetCache::new();
    let (train, _test) = cache.pools_for(&cfg)?;
    let k = cfg.federation.clients;
    let alpha = cfg.federation.dirichlet_alpha;
    let n_classes = train.n_classes();
    println!(
        "dataset={} samples={} classes={n_classes} K={k} alpha={alpha}",
        cfg.dataset.id(),
        train.len()
    );
    let parts = dirichlet_partition(
        train.labels(),
        k,
        alpha,
        &mut stream(cfg.federation.seed, &[qfl_core::rng::tags::PARTITION]),
    )?;
    let mut variances = Vec::new();
    for (client, part) in parts.iter().enumerate() {
        let mut hist = vec![0usize; n_classes];
        for &i in part {
            hist[train.label(i) as usize] += 1;
        }
        let n = part.len() as f64;
        let props: Vec<f64> = hist.iter().map(|&h| h as f64 / n).collect();
        let mean = 1.0 / n_classes as f64;
        let var = props.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n_classes as f64;
        variances.push(var);
        println!(
            "client {client}: n={} hist={hist:?} class_prop_variance={var:.5}",
            part.len()
        );
    }
    println!(
        "mean class-proportion variance: {:.6}",
        variances.iter().sum::<f64>() / variances.len() as f64
    );
    println!(
        "client size spread (L2 from even split): {:.3}",
        linalg::norm(
            &parts
                .iter()
                .map(|p| p.len() as f64 - train.len() as f64 / k as f64)
                .collect::<Vec<f64>>()
        )
    );
    Ok(ExitCode::SUCCESS)
}
