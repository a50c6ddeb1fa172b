//! Sweep execution and result emission: one run per grid cell and seed,
//! long-format CSV rows, cell-level summaries, a reproducibility manifest,
//! and a line-delimited round log.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{proposition1_check, theorem1_statistics};
use crate::config::{ConfigMap, DatasetSpec, ExperimentGrid, RunConfig};
use crate::data::{load_cifar10_bin, load_mnist_idx, synthetic_blobs, Dataset};
use crate::error::{Error, Result};
use crate::federation::{run_experiment, shadow_benign_run, RunOutcome};
use crate::model::ModelParams;
use crate::rng::{stream, tags};

/// One results.csv row.
#[derive(Debug, Clone)]
pub struct RoundRow {
    pub round: usize,
    pub seed: u64,
    pub dataset: String,
    pub attack: &'static str,
    pub defense: &'static str,
    pub q: f64,
    pub rho: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub deviation: Option<f64>,
    pub b_norm: f64,
}

/// Aggregated view of one grid cell across its seeds.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub dataset: String,
    pub attack: &'static str,
    pub defense: &'static str,
    pub q: f64,
    pub rho: f64,
    pub seeds: usize,
    pub final_accuracy_mean: f64,
    pub final_accuracy_std: f64,
    /// Versus the same defense's q=0 baseline in this grid, when present.
    pub accuracy_drop: Option<f64>,
    /// Fraction of (round, attacker) stealth-audit checks inside the
    /// benign 4-sigma norm band.
    pub stealth_band_fraction: Option<f64>,
    pub lemma1_violations: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<RoundRow>,
    pub summaries: Vec<CellSummary>,
    pub manifest_lines: Vec<String>,
    pub log_lines: Vec<String>,
    pub cell_errors: Vec<String>,
}

/// Base pools loaded once per process; grid cells draw seeded subsets.
pub struct DatasetCache {
    base: Option<(Dataset, Dataset)>,
}

impl DatasetCache {
    pub fn new() -> Self {
        DatasetCache { base: None }
    }

    fn file_pair(root: &Path, spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
        match spec {
            DatasetSpec::Mnist | DatasetSpec::Mnist8x8 => {
                let train = load_mnist_idx(
                    &root.join("train-images-idx3-ubyte"),
                    &root.join("train-labels-idx1-ubyte"),
                )?;
                let test = load_mnist_idx(
                    &root.join("t10k-images-idx3-ubyte"),
                    &root.join("t10k-labels-idx1-ubyte"),
                )?;
                if matches!(spec, DatasetSpec::Mnist8x8) {
                    Ok((train.downscale_square(8)?, test.downscale_square(8)?))
                } else {
                    Ok((train, test))
                }
            }
            DatasetSpec::Cifar10 => {
                let train_paths: Vec<PathBuf> = (1..=5)
                    .map(|i| root.join(format!("data_batch_{i}.bin")))
                    .collect();
                let train_refs: Vec<&Path> = train_paths.iter().map(PathBuf::as_path).collect();
                let train = load_cifar10_bin(&train_refs)?;
                let test = load_cifar10_bin(&[root.join("test_batch.bin").as_path()])?;
                Ok((train, test))
            }
            DatasetSpec::SyntheticBlobs { .. } => unreachable!("blobs are generated per seed"),
        }
    }

    /// The (train, test) pools for one run: file-backed pools are loaded
    /// once and subset per seed; synthetic pools are generated per seed.
    pub fn pools_for(&mut self, cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
        let seed = cfg.federation.seed;
        let (train, test) = match &cfg.dataset {
            DatasetSpec::SyntheticBlobs {
                classes,
                dim,
                separation,
                train_per_class,
                test_per_class,
            } => {
                let mut rng = stream(seed, &[tags::DATASET]);
                let train = synthetic_blobs(*classes, *train_per_class, *dim, *separation, &mut rng)?;
                let test = synthetic_blobs(*classes, *test_per_class, *dim, *separation, &mut rng)?;
                (train, test)
            }
            spec => {
                if self.base.is_none() {
                    let root = cfg.data_root.clone().ok_or_else(|| {
                        Error::Config(format!(
                            "dataset '{}' needs dataset.root or ${} pointing at the files",
                            spec.id(),
                            crate::config::DATA_DIR_ENV
                        ))
                    })?;
                    self.base = Some(Self::file_pair(&root, spec)?);
                }
                let (train, test) = self.base.as_ref().expect("just populated");
                (train.clone(), test.clone())
            }
        };
        let train = train.subset(cfg.train_subset, &mut stream(seed, &[tags::SUBSET, 0]));
        let test = test.subset(cfg.test_subset, &mut stream(seed, &[tags::SUBSET, 1]));
        Ok((train, test))
    }
}

impl Default for DatasetCache {
    fn default() -> Self {
        Self::new()
    }
}

pub struct CellOutcome {
    pub attacked: RunOutcome,
    pub benign_twin: Option<RunOutcome>,
}

/// Run one fully resolved configuration (with shadow pairing when enabled).
pub fn run_cell(cfg: &RunConfig, cache: &mut DatasetCache) -> Result<CellOutcome> {
    let (train, test) = cache.pools_for(cfg)?;
    if cfg.shadow {
        let (attacked, benign) =
            shadow_benign_run(cfg.federation.clone(), cfg.arch, &train, test)?;
        Ok(CellOutcome {
            attacked,
            benign_twin: Some(benign),
        })
    } else {
        let attacked = run_experiment(cfg.federation.clone(), cfg.arch, &train, test)?;
        Ok(CellOutcome {
            attacked,
            benign_twin: None,
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn cell_key(attack: &str, defense: &str, q: f64, rho: f64) -> String {
    format!("{attack}/{defense}/q={q}/rho={rho}")
}

/// Execute the full grid in declaration order (attacks, defenses, q, rho,
/// seeds innermost). q=0 cells are independent of the attack axis and are
/// executed once per (defense, seed). A failing cell is recorded and the
/// grid continues.
pub fn run_grid(base: &ConfigMap, grid: &ExperimentGrid) -> Result<GridOutcome> {
    let mut cache = DatasetCache::new();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut manifest_lines = Vec::new();
    let mut log_lines = Vec::new();
    let mut cell_errors = Vec::new();

    // memo for q=0 runs, keyed by (defense, seed)
    let mut baseline_memo: BTreeMap<(String, u64), RunOutcome> = BTreeMap::new();
    // per-defense q=0 mean final accuracy, for the drop column
    let mut baseline_mean: BTreeMap<String, f64> = BTreeMap::new();

    manifest_lines.push("[config]".to_string());
    for line in base.echo().lines() {
        manifest_lines.push(line.to_string());
    }
    manifest_lines.push(String::new());
    manifest_lines.push("[grid]".to_string());
    manifest_lines.push(format!(
        "attacks = {}",
        grid.attacks
            .iter()
            .map(|a| a.as_str())
            .collect::<Vec<_>>()
            .join(",")
    ));
    manifest_lines.push(format!(
        "defenses = {}",
        grid.defenses
            .iter()
            .map(|d| d.record_label())
            .collect::<Vec<_>>()
            .join(",")
    ));
    manifest_lines.push(format!(
        "q_values = {}",
        grid.q_values
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    ));
    manifest_lines.push(format!(
        "rho_values = {}",
        grid.rho_values
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    ));
    manifest_lines.push(format!(
        "seeds = {}",
        grid.seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    ));
    manifest_lines.push(String::new());
    manifest_lines.push("[cells]".to_string());

    for &attack in &grid.attacks {
        for &defense in &grid.defenses {
            for &q in &grid.q_values {
                for &rho in &grid.rho_values {
                    let mut finals = Vec::new();
                    let mut stealth_hits = 0usize;
                    let mut stealth_total = 0usize;
                    let mut lemma1_violations = 0usize;
                    let mut seeds_done = 0usize;
                    for &seed in &grid.seeds {
                        let mut map = base.clone();
                        map.set("attack.kind", attack.as_str());
                        map.set(
                            "defense.rule",
                            match defense {
                                crate::aggregators::DefenseRule::FedAvg => "fedavg",
                                crate::aggregators::DefenseRule::Krum => "krum",
                                crate::aggregators::DefenseRule::MultiKrum => "mkrum",
                                crate::aggregators::DefenseRule::FoolsGold => "foolsgold",
                                crate::aggregators::DefenseRule::MudHog => "mudhog",
                                crate::aggregators::DefenseRule::FlGuardian => "flguardian",
                            },
                        );
                        map.set("federation.malicious_fraction", &q.to_string());
                        map.set("attack.rho", &rho.to_string());
                        map.set("federation.seed", &seed.to_string());
                        let cfg = match crate::config::build_run_config(&map) {
                            Ok(c) => c,
                            Err(e) => {
                                cell_errors.push(format!(
                                    "{} seed={seed}: {e}",
                                    cell_key(attack.as_str(), defense.record_label(), q, rho)
                                ));
                                continue;
                            }
                        };
                        let is_baseline = cfg.federation.n_malicious() == 0;
                        let memo_key = (defense.record_label().to_string(), seed);
                        let outcome = if is_baseline && baseline_memo.contains_key(&memo_key) {
                            CellOutcome {
                                attacked: baseline_memo[&memo_key].clone(),
                                benign_twin: None,
                            }
                        } else {
                            match run_cell(&cfg, &mut cache) {
                                Ok(o) => o,
                                Err(e) => {
                                    cell_errors.push(format!(
                                        "{} seed={seed}: {e}",
                                        cell_key(attack.as_str(), defense.record_label(), q, rho)
                                    ));
                                    continue;
                                }
                            }
                        };
                        if is_baseline {
                            baseline_memo
                                .entry(memo_key)
                                .or_insert_with(|| outcome.attacked.clone());
                        }
                        seeds_done += 1;
                        let run = &outcome.attacked;
                        finals.push(run.final_accuracy);
                        manifest_lines.push(format!(
                            "{} seed={seed} malicious_ids={:?} initial_accuracy={:.4} final_accuracy={:.4}",
                            cell_key(attack.as_str(), defense.record_label(), q, rho),
                            run.malicious_ids,
                            run.initial_accuracy,
                            run.final_accuracy,
                        ));
                        for r in &run.records {
                            rows.push(RoundRow {
                                round: r.round,
                                seed,
                                dataset: cfg.dataset.id().to_string(),
                                attack: attack.as_str(),
                                defense: defense.record_label(),
                                q,
                                rho,
                                accuracy: r.accuracy,
                                loss: r.test_loss,
                                deviation: r.deviation,
                                b_norm: r.b_norm,
                            });
                            let mut line = format!(
                                "cell={} seed={seed} round={} accuracy={:.4} loss={:.6} b_norm={:.6} deviation={}",
                                cell_key(attack.as_str(), defense.record_label(), q, rho),
                                r.round,
                                r.accuracy,
                                r.test_loss,
                                r.b_norm,
                                fmt_opt(r.deviation),
                            );
                            if let Some(lem) = &r.lemma1 {
                                write!(
                                    line,
                                    " lemma1_b={:.6} lemma1_bound={:.6} lemma1_pass={}",
                                    lem.b_norm, lem.bound, lem.pass
                                )
                                .expect("write to string");
                                if !lem.pass {
                                    lemma1_violations += 1;
                                }
                            }
                            for (client, ok) in &r.stealth_in_band {
                                stealth_total += 1;
                                if *ok {
                                    stealth_hits += 1;
                                }
                                write!(line, " stealth[{client}]={}", u8::from(*ok))
                                    .expect("write to string");
                            }
                            if cfg.federation.crafting.debug {
                                for (client, trace) in &r.craft_traces {
                                    write!(
                                        line,
                                        " craft[{client}]=anchor:{:?},u:{:.6},u_perp:{:.6},s:{:.4},eps:{:.4},R:{:.6},zero_frac:{:.3}",
                                        trace.anchor_index,
                                        trace.deviation_norm,
                                        trace.residual_norm,
                                        trace.anomaly_score,
                                        trace.intensity,
                                        trace.target_norm,
                                        trace.zero_fraction,
                                    )
                                    .expect("write to string");
                                }
                            }
                            log_lines.push(line);
                        }
                        if let Some(benign) = &outcome.benign_twin {
                            append_shadow_diagnostics(
                                &mut manifest_lines,
                                &cfg,
                                run,
                                benign,
                                seed,
                                attack.as_str(),
                                defense.record_label(),
                                q,
                                rho,
                            );
                        }
                    }
                    if seeds_done == 0 {
                        continue;
                    }
                    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
                    let var = finals.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                        / finals.len() as f64;
                    if q == 0.0 {
                        baseline_mean
                            .entry(defense.record_label().to_string())
                            .or_insert(mean);
                    }
                    summaries.push(CellSummary {
                        dataset: base
                            .get("dataset.id")
                            .unwrap_or("synthetic_blobs")
                            .to_string(),
                        attack: attack.as_str(),
                        defense: defense.record_label(),
                        q,
                        rho,
                        seeds: seeds_done,
                        final_accuracy_mean: mean,
                        final_accuracy_std: var.sqrt(),
                        accuracy_drop: None, // filled below once baselines are known
                        stealth_band_fraction: if stealth_total == 0 {
                            None
                        } else {
                            Some(stealth_hits as f64 / stealth_total as f64)
                        },
                        lemma1_violations,
                    });
                }
            }
        }
    }

    for s in &mut summaries {
        if let Some(&baseline) = baseline_mean.get(s.defense) {
            s.accuracy_drop = Some(baseline - s.final_accuracy_mean);
        }
    }
    Ok(GridOutcome {
        rows,
        summaries,
        manifest_lines,
        log_lines,
        cell_errors,
    })
}

#[allow(clippy::too_many_arguments)]
fn append_shadow_diagnostics(
    manifest_lines: &mut Vec<String>,
    cfg: &RunConfig,
    attacked: &RunOutcome,
    benign: &RunOutcome,
    seed: u64,
    attack: &str,
    defense: &str,
    q: f64,
    rho: f64,
) {
    let key = cell_key(attack, defense, q, rho);
    let deviations: Vec<f64> = std::iter::once(0.0)
        .chain(attacked.records.iter().map(|r| r.deviation.unwrap_or(0.0)))
        .collect();
    let b_norms: Vec<f64> = attacked.records.iter().map(|r| r.b_norm).collect();

    // rough empirical smoothness probe: how much the benign aggregate
    // differs across the two trajectories, relative to their distance
    let mut l_estimate = 0.0f64;
    for (t, (ra, rb)) in attacked
        .records
        .iter()
        .zip(benign.records.iter())
        .enumerate()
    {
        let dev_before = deviations[t];
        if dev_before < 1e-9 {
            continue;
        }
        let diff = crate::linalg::norm(&crate::linalg::sub(
            &ra.benign_aggregate,
            &rb.applied_aggregate,
        ));
        l_estimate = l_estimate.max(diff / dev_before);
    }
    if let Ok(out) = proposition1_check(&deviations, &b_norms, l_estimate, cfg.federation.server_lr)
    {
        manifest_lines.push(format!(
            "{key} seed={seed} prop1_L_estimate={l_estimate:.6} prop1_max_residual={:.6e} prop1_violations={}",
            out.max_residual, out.violations
        ));
    }

    let clean = ModelParams::from_flat(&cfg.arch, benign.final_params.clone());
    let attacked_params = ModelParams::from_flat(&cfg.arch, attacked.final_params.clone());
    if let (Ok(clean), Ok(attacked_params)) = (clean, attacked_params) {
        // sample up to 20 matched-round parameter pairs for the Lipschitz
        // estimate; here final-state pair only, matched rounds are not
        // retained to keep run records lean
        let mut cache = DatasetCache::new();
        if let Ok((_, test)) = cache.pools_for(cfg) {
            if let Ok(stats) = theorem1_statistics(
                &clean,
                &attacked_params,
                &cfg.arch,
                &crate::model::clean_template(&cfg.arch),
                &test,
                &[],
            ) {
                manifest_lines.push(format!(
                    "{key} seed={seed} theorem1_L_f={:.6} drift={:.6} band_fraction={:.4} flip_fraction={:.4}",
                    stats.lipschitz, stats.drift, stats.band_fraction, stats.flip_fraction
                ));
            }
        }
    }
}

/// Write results.csv, summary.csv, manifest.txt, and rounds.log.
pub fn emit_results(outcome: &GridOutcome, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let mut results = String::from("round,seed,dataset,attack,defense,q,rho,accuracy,loss,deviation,b_norm\n");
    for r in &outcome.rows {
        writeln!(
            results,
            "{},{},{},{},{},{},{},{:.4},{:.6},{},{:.6}",
            r.round,
            r.seed,
            r.dataset,
            r.attack,
            r.defense,
            r.q,
            r.rho,
            r.accuracy,
            r.loss,
            fmt_opt(r.deviation),
            r.b_norm
        )
        .expect("write to string");
    }
    let results_path = out_dir.join("results.csv");
    fs::write(&results_path, results)?;
    written.push(results_path);

    let mut summary = String::from(
        "dataset,attack,defense,q,rho,seeds,final_accuracy_mean,final_accuracy_std,accuracy_drop,stealth_band_fraction,lemma1_violations\n",
    );
    for s in &outcome.summaries {
        writeln!(
            summary,
            "{},{},{},{},{},{},{:.4},{:.4},{},{},{}",
            s.dataset,
            s.attack,
            s.defense,
            s.q,
            s.rho,
            s.seeds,
            s.final_accuracy_mean,
            s.final_accuracy_std,
            s.accuracy_drop
                .map(|d| format!("{d:.4}"))
                .unwrap_or_default(),
            s.stealth_band_fraction
                .map(|f| format!("{f:.4}"))
                .unwrap_or_default(),
            s.lemma1_violations
        )
        .expect("write to string");
    }
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, summary)?;
    written.push(summary_path);

    let mut manifest = outcome.manifest_lines.join("\n");
    manifest.push('\n');
    if !outcome.cell_errors.is_empty() {
        manifest.push_str("\n[errors]\n");
        for e in &outcome.cell_errors {
            manifest.push_str(e);
            manifest.push('\n');
        }
    }
    let manifest_path = out_dir.join("manifest.txt");
    fs::write(&manifest_path, manifest)?;
    written.push(manifest_path);

    let mut log = outcome.log_lines.join("\n");
    if !outcome.log_lines.is_empty() {
        log.push('\n');
    }
    let log_path = out_dir.join("rounds.log");
    fs::write(&log_path, log)?;
    written.push(log_path);

    Ok(written)
}
