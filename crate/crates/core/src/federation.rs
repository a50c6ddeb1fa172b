//! Synchronous federated rounds: partitioning, broadcast, local training
//! with the attack surfaces wired in, aggregation, evaluation, and the
//! attack-free shadow twin.
//!
//! Every random draw comes from a named stream keyed by (seed, purpose,
//! client, round), so a (config, seed) pair fully determines every emitted
//! byte, and the shadow twin can share the data-path streams while leaving
//! the attack-path streams untouched.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::aggregators::{
    aggregate, normalize_weights, server_apply, AggregatorState, ClientUpdate, DefenseParams,
    DefenseRule,
};
use crate::analysis::{clip_to_radius, lemma1_check, Lemma1Outcome};
use crate::attacks::{build_attack_circuit, effective_loss_scale, poison_round, AttackConfig};
use crate::crafting::{craft, CraftTrace, CraftingConfig, HistoryBuffer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    clean_template, evaluate_with, local_train, AdamWConfig, ModelArchitecture, ModelParams,
    TrainSettings,
};
use crate::qsim::{CircuitTemplate, Measurement};
use crate::rng::{stream, tags};

#[derive(Debug, Clone)]
pub struct FederationConfig {
    /// Client count K (full participation each round).
    pub clients: usize,
    /// Malicious fraction q; m = round(q * K) identities are fixed for the
    /// whole run.
    pub malicious_fraction: f64,
    /// Round count T.
    pub rounds: usize,
    /// Local epochs E per round.
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Client AdamW learning rate.
    pub client_lr: f64,
    /// Client AdamW weight decay.
    pub weight_decay: f64,
    /// Server rate beta.
    pub server_lr: f64,
    pub dirichlet_alpha: f64,
    pub seed: u64,
    pub attack: AttackConfig,
    pub crafting: CraftingConfig,
    pub defense: DefenseRule,
    pub defense_params: DefenseParams,
    /// Enforce per-attacker clipping and audit the aggregate-perturbation
    /// bound each round.
    pub lemma1_clip: bool,
    /// Shot-sampled readout; `None` keeps exact expectations.
    pub shots: Option<u64>,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Config("client count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.malicious_fraction) {
            return Err(Error::Config(format!(
                "malicious fraction must be in [0,1], got {}",
                self.malicious_fraction
            )));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local epochs must be >= 1".into()));
        }
        if self.dirichlet_alpha <= 0.0 {
            return Err(Error::Config("dirichlet alpha must be > 0".into()));
        }
        Ok(())
    }

    pub fn n_malicious(&self) -> usize {
        (self.malicious_fraction * self.clients as f64).round() as usize
    }

    fn measurement(&self) -> Measurement {
        match self.shots {
            None => Measurement::Exact,
            Some(shots) => Measurement::Sampled {
                shots,
                seed: self.seed,
            },
        }
    }

    fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            optimizer: AdamWConfig {
                lr: self.client_lr,
                weight_decay: self.weight_decay,
                ..AdamWConfig::default()
            },
            measurement: self.measurement(),
        }
    }
}

/// Per-round audit record. The poison flags and the benign/malicious
/// decomposition exist only here; aggregators never see them.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub benign_aggregate: Vec<f64>,
    pub attack_perturbation: Vec<f64>,
    pub applied_aggregate: Vec<f64>,
    pub client_delta_norms: Vec<(usize, f64)>,
    pub poison_flags: Vec<(usize, bool)>,
    pub accuracy: f64,
    pub test_loss: f64,
    pub b_norm: f64,
    /// Distance to the shadow twin, filled by paired runs.
    pub deviation: Option<f64>,
    pub lemma1: Option<Lemma1Outcome>,
    /// Per malicious client: transmitted norm within 4 sigma of the benign
    /// norm statistics this round.
    pub stealth_in_band: Vec<(usize, bool)>,
    /// Crafting intermediates per malicious client (for the debug dump).
    pub craft_traces: Vec<(usize, CraftTrace)>,
    pub failed_clients: Vec<usize>,
    pub round_rejected: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RoundRecord>,
    pub initial_accuracy: f64,
    pub initial_loss: f64,
    pub final_accuracy: f64,
    pub malicious_ids: Vec<usize>,
    pub final_params: Vec<f64>,
}

/// Dirichlet non-IID split: for every class, client shares are drawn from
/// Dirichlet(alpha * 1_K). Every sample is assigned exactly once and every
/// client ends up with at least one sample (resample guard, then a
/// deterministic rebalance fallback).
pub fn dirichlet_partition(
    labels: &[u8],
    k: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Config("client count must be >= 1".into()));
    }
    if labels.len() < k {
        return Err(Error::Config(format!(
            "dataset of {} samples cannot cover {k} clients",
            labels.len()
        )));
    }
    if k == 1 {
        return Ok(vec![(0..labels.len()).collect()]);
    }
    let n_classes = labels.iter().map(|&l| l as usize).max().unwrap_or(0) + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::Config(format!("invalid dirichlet alpha: {e}")))?;
    // Dirichlet(alpha * 1_K) via normalized Gamma(alpha, 1) draws
    let dirichlet_shares = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng).max(1e-300)).collect();
        let total: f64 = draws.iter().sum();
        for d in &mut draws {
            *d /= total;
        }
        draws
    };

    for _attempt in 0..100 {
        let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); k];
        for class_indices in &by_class {
            if class_indices.is_empty() {
                continue;
            }
            let mut indices = class_indices.clone();
            indices.shuffle(rng);
            let shares: Vec<f64> = dirichlet_shares(rng);
            let n = indices.len();
            let mut cumulative = 0.0;
            let mut taken = 0usize;
            for (client, &share) in shares.iter().enumerate() {
                cumulative += share;
                let upto = if client == k - 1 {
                    n
                } else {
                    (cumulative * n as f64).round() as usize
                };
                let upto = upto.clamp(taken, n);
                assignment[client].extend_from_slice(&indices[taken..upto]);
                taken = upto;
            }
        }
        if assignment.iter().all(|a| !a.is_empty()) {
            return Ok(assignment);
        }
    }

    // deterministic fallback: rebalance from the largest clients
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class_indices in &by_class {
        let mut indices = class_indices.clone();
        indices.shuffle(rng);
        let shares: Vec<f64> = dirichlet_shares(rng);
        let n = indices.len();
        let mut cumulative = 0.0;
        let mut taken = 0usize;
        for (client, &share) in shares.iter().enumerate() {
            cumulative += share;
            let upto = if client == k - 1 {
                n
            } else {
                (cumulative * n as f64).round() as usize
            };
            let upto = upto.clamp(taken, n);
            assignment[client].extend_from_slice(&indices[taken..upto]);
            taken = upto;
        }
    }
    loop {
        let empty = match assignment.iter().position(|a| a.is_empty()) {
            Some(i) => i,
            None => break,
        };
        let largest = (0..k)
            .max_by_key(|&i| assignment[i].len())
            .expect("k >= 1");
        if assignment[largest].len() <= 1 {
            return Err(Error::Config(
                "cannot give every client a sample; dataset too small".into(),
            ));
        }
        let moved = assignment[largest].pop().expect("largest is non-empty");
        assignment[empty].push(moved);
    }
    Ok(assignment)
}

/// One federation run: owns the global parameters, per-client pools, the
/// adversary state, and the server-side aggregator state.
pub struct Federation {
    cfg: FederationConfig,
    arch: ModelArchitecture,
    clean_circuit: CircuitTemplate,
    client_data: Vec<Dataset>,
    test_data: Dataset,
    theta: ModelParams,
    malicious: BTreeSet<usize>,
    agg_state: AggregatorState,
    history: BTreeMap<usize, HistoryBuffer>,
    /// False for the shadow twin: malicious clients behave fully benignly
    /// while all data-path streams stay identical.
    adversary_active: bool,
}

impl Federation {
    pub fn new(
        cfg: FederationConfig,
        arch: ModelArchitecture,
        train: &Dataset,
        test: Dataset,
    ) -> Result<Self> {
        Self::with_adversary(cfg, arch, train, test, true)
    }

    fn with_adversary(
        cfg: FederationConfig,
        arch: ModelArchitecture,
        train: &Dataset,
        test: Dataset,
        adversary_active: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        arch.validate()?;
        cfg.attack.validate(&arch)?;
        cfg.crafting.validate()?;
        if train.input_dim() != arch.input_dim {
            return Err(Error::Shape(format!(
                "training pool dimension {} does not match architecture {}",
                train.input_dim(),
                arch.input_dim
            )));
        }

        let mut partition_rng = stream(cfg.seed, &[tags::PARTITION]);
        let parts = dirichlet_partition(
            train.labels(),
            cfg.clients,
            cfg.dirichlet_alpha,
            &mut partition_rng,
        )?;
        let client_data: Vec<Dataset> = parts.iter().map(|idx| train.select(idx)).collect();

        let mut id_rng = stream(cfg.seed, &[tags::MALICIOUS]);
        let mut ids: Vec<usize> = (0..cfg.clients).collect();
        ids.shuffle(&mut id_rng);
        let malicious: BTreeSet<usize> = ids.into_iter().take(cfg.n_malicious()).collect();

        let mut init_rng = stream(cfg.seed, &[tags::INIT]);
        let theta = ModelParams::init(&arch, &mut init_rng);
        let clean_circuit = clean_template(&arch);
        let dim = theta.dim();

        let history = malicious
            .iter()
            .map(|&id| (id, HistoryBuffer::new(cfg.crafting.window, dim)))
            .collect();

        Ok(Federation {
            cfg,
            arch,
            clean_circuit,
            client_data,
            test_data: test,
            theta,
            malicious,
            agg_state: AggregatorState::new(),
            history,
            adversary_active,
        })
    }

    pub fn malicious_ids(&self) -> Vec<usize> {
        self.malicious.iter().copied().collect()
    }

    pub fn params(&self) -> &ModelParams {
        &self.theta
    }

    pub fn clean_circuit(&self) -> &CircuitTemplate {
        &self.clean_circuit
    }

    pub fn arch(&self) -> &ModelArchitecture {
        &self.arch
    }

    pub fn evaluate_current(&self) -> Result<(f64, f64)> {
        evaluate_with(
            &self.theta,
            &self.arch,
            &self.clean_circuit,
            &self.test_data,
            self.cfg.measurement(),
        )
    }

    /// Execute round `round_t`: broadcast, local training (with S1 gate +
    /// loss amplification and S2 crafting on poisoned malicious rounds),
    /// aggregation behind the defense rule, server apply, evaluation, and
    /// the audit decomposition.
    pub fn run_round(&mut self, round_t: usize) -> Result<RoundRecord> {
        let cfg = &self.cfg;
        let broadcast = self.theta.clone();
        let settings = cfg.train_settings();

        let mut updates: Vec<ClientUpdate> = Vec::with_capacity(cfg.clients);
        let mut poison_flags = Vec::new();
        let mut craft_traces = Vec::new();
        let mut failed_clients = Vec::new();
        let mut clip_radii: Vec<f64> = Vec::new();
        let mut is_malicious_update: Vec<bool> = Vec::new();

        for k in 0..cfg.clients {
            let malicious_k = self.adversary_active && self.malicious.contains(&k);
            let poisoned = malicious_k && poison_round(cfg.seed, k, round_t, cfg.attack.poison_prob);
            if malicious_k {
                poison_flags.push((k, poisoned));
            }
            let circuit = if poisoned {
                build_attack_circuit(&self.clean_circuit, &cfg.attack, &self.arch, round_t)?
            } else {
                self.clean_circuit.clone()
            };
            let loss_scale = effective_loss_scale(poisoned, cfg.attack.loss_scale);
            let mut batch_rng = stream(cfg.seed, &[tags::BATCH, k as u64, round_t as u64]);
            let outcome = match local_train(
                &broadcast,
                &self.client_data[k],
                &settings,
                &self.arch,
                &circuit,
                loss_scale,
                &mut batch_rng,
            ) {
                Ok(o) => o,
                Err(Error::Numeric(msg)) => {
                    // client fault: skip it, renormalize the rest
                    let _ = msg;
                    failed_clients.push(k);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let raw = outcome.delta;

            let mut transmitted = raw.clone();
            if malicious_k {
                let buf = self
                    .history
                    .get_mut(&k)
                    .expect("history buffer exists for every malicious client");
                if poisoned {
                    if cfg.crafting.enabled {
                        let mut craft_rng =
                            stream(cfg.seed, &[tags::CRAFT, k as u64, round_t as u64]);
                        let (crafted, trace) = craft(&raw, buf, &cfg.crafting, &mut craft_rng);
                        transmitted = crafted;
                        craft_traces.push((k, trace));
                    }
                } else {
                    // clean-mode rounds feed the honest-like history
                    buf.push(raw.clone())?;
                }
                if cfg.lemma1_clip {
                    let radius = if buf.is_empty() {
                        linalg::norm(&transmitted)
                    } else {
                        buf.norm_mean() + 3.0 * buf.norm_std()
                    };
                    clip_to_radius(&mut transmitted, radius);
                    clip_radii.push(radius);
                }
            }

            updates.push(ClientUpdate {
                client_id: k,
                round: round_t,
                delta: transmitted,
                weight: 1.0,
            });
            is_malicious_update.push(malicious_k);
        }

        if updates.is_empty() {
            return Err(Error::Protocol(format!(
                "every client failed in round {round_t}"
            )));
        }
        normalize_weights(&mut updates)?;

        // audit decomposition (never visible to the aggregator)
        let dim = updates[0].delta.len();
        let mut benign_aggregate = vec![0.0; dim];
        let mut attack_perturbation = vec![0.0; dim];
        for (u, &mal) in updates.iter().zip(&is_malicious_update) {
            if mal {
                linalg::axpy(&mut attack_perturbation, u.weight, &u.delta);
            } else {
                linalg::axpy(&mut benign_aggregate, u.weight, &u.delta);
            }
        }
        let b_norm = linalg::norm(&attack_perturbation);

        let lemma1 = if cfg.lemma1_clip && is_malicious_update.iter().any(|&m| m) {
            let r_t = clip_radii.iter().cloned().fold(0.0, f64::max);
            let weighted: Vec<(f64, &[f64])> = updates
                .iter()
                .zip(&is_malicious_update)
                .filter(|(_, &m)| m)
                .map(|(u, _)| (u.weight, u.delta.as_slice()))
                .collect();
            let q_effective: f64 = weighted.iter().map(|(w, _)| w).sum();
            Some(lemma1_check(&weighted, r_t, q_effective)?)
        } else {
            None
        };

        // stealth audit: malicious transmitted norms against the benign
        // norm band of this round
        let benign_norms: Vec<f64> = updates
            .iter()
            .zip(&is_malicious_update)
            .filter(|(_, &m)| !m)
            .map(|(u, _)| linalg::norm(&u.delta))
            .collect();
        let stealth_in_band = if benign_norms.is_empty() {
            Vec::new()
        } else {
            let mean = benign_norms.iter().sum::<f64>() / benign_norms.len() as f64;
            let var = benign_norms
                .iter()
                .map(|n| (n - mean) * (n - mean))
                .sum::<f64>()
                / benign_norms.len() as f64;
            let std = var.sqrt();
            updates
                .iter()
                .zip(&is_malicious_update)
                .filter(|(_, &m)| m)
                .map(|(u, _)| {
                    let n = linalg::norm(&u.delta);
                    (u.client_id, (n - mean).abs() <= 4.0 * std)
                })
                .collect()
        };

        let applied = aggregate(
            cfg.defense,
            &cfg.defense_params,
            &updates,
            &self.agg_state,
            cfg.n_malicious().max(1),
        )?;
        let mut round_rejected = false;
        match server_apply(self.theta.flat_mut(), &applied, cfg.server_lr) {
            Ok(()) => {}
            Err(Error::Numeric(_)) => round_rejected = true,
            Err(e) => return Err(e),
        }
        self.agg_state.record(&updates);

        // attackers observe the broadcast delta theta^{t+1} - theta^t
        if !round_rejected && self.adversary_active {
            let global_delta = linalg::sub(self.theta.flat(), broadcast.flat());
            for buf in self.history.values_mut() {
                buf.push(global_delta.clone())?;
            }
        }

        let (accuracy, test_loss) = self.evaluate_current()?;
        Ok(RoundRecord {
            round: round_t,
            client_delta_norms: updates
                .iter()
                .map(|u| (u.client_id, linalg::norm(&u.delta)))
                .collect(),
            benign_aggregate,
            attack_perturbation,
            applied_aggregate: applied,
            poison_flags,
            accuracy,
            test_loss,
            b_norm,
            deviation: None,
            lemma1,
            stealth_in_band,
            craft_traces,
            failed_clients,
            round_rejected,
        })
    }

    /// Run all T rounds.
    pub fn run(&mut self) -> Result<RunOutcome> {
        let (initial_accuracy, initial_loss) = self.evaluate_current()?;
        let mut records = Vec::with_capacity(self.cfg.rounds);
        for t in 0..self.cfg.rounds {
            records.push(self.run_round(t)?);
        }
        let final_accuracy = records
            .last()
            .map(|r| r.accuracy)
            .unwrap_or(initial_accuracy);
        Ok(RunOutcome {
            records,
            initial_accuracy,
            initial_loss,
            final_accuracy,
            malicious_ids: self.malicious_ids(),
            final_params: self.theta.flat().to_vec(),
        })
    }
}

/// Single-seed experiment entry point.
pub fn run_experiment(
    cfg: FederationConfig,
    arch: ModelArchitecture,
    train: &Dataset,
    test: Dataset,
) -> Result<RunOutcome> {
    Federation::new(cfg, arch, train, test)?.run()
}

/// Paired attacked/benign trajectories sharing all data-path randomness;
/// only attack activation differs. Per-round deviations
/// `||theta_t - theta_ben_t||` are filled into the attacked records.
pub fn shadow_benign_run(
    cfg: FederationConfig,
    arch: ModelArchitecture,
    train: &Dataset,
    test: Dataset,
) -> Result<(RunOutcome, RunOutcome)> {
    let mut attacked =
        Federation::with_adversary(cfg.clone(), arch, train, test.clone(), true)?;
    let mut benign = Federation::with_adversary(cfg.clone(), arch, train, test, false)?;

    let (att_acc0, att_loss0) = attacked.evaluate_current()?;
    let (ben_acc0, ben_loss0) = benign.evaluate_current()?;
    let mut att_records = Vec::with_capacity(cfg.rounds);
    let mut ben_records = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let mut ra = attacked.run_round(t)?;
        let rb = benign.run_round(t)?;
        let deviation = linalg::norm(&linalg::sub(
            attacked.theta.flat(),
            benign.theta.flat(),
        ));
        ra.deviation = Some(deviation);
        att_records.push(ra);
        ben_records.push(rb);
    }
    let attacked_outcome = RunOutcome {
        final_accuracy: att_records.last().map(|r| r.accuracy).unwrap_or(att_acc0),
        records: att_records,
        initial_accuracy: att_acc0,
        initial_loss: att_loss0,
        malicious_ids: attacked.malicious_ids(),
        final_params: attacked.theta.flat().to_vec(),
    };
    let benign_outcome = RunOutcome {
        final_accuracy: ben_records.last().map(|r| r.accuracy).unwrap_or(ben_acc0),
        records: ben_records,
        initial_accuracy: ben_acc0,
        initial_loss: ben_loss0,
        malicious_ids: benign.malicious_ids(),
        final_params: benign.theta.flat().to_vec(),
    };
    Ok((attacked_outcome, benign_outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::data::synthetic_blobs;

    fn toy_setup() -> (ModelArchitecture, Dataset, Dataset) {
        let arch = ModelArchitecture::custom(3, 2, 3, 4).unwrap();
        let mut rng = stream(100, &[tags::DATASET]);
        let train = synthetic_blobs(3, 30, 4, 3.0, &mut rng).unwrap();
        let test = synthetic_blobs(3, 15, 4, 3.0, &mut rng).unwrap();
        (arch, train, test)
    }

    fn base_cfg(seed: u64) -> FederationConfig {
        FederationConfig {
            clients: 3,
            malicious_fraction: 0.0,
            rounds: 2,
            local_epochs: 1,
            batch_size: 16,
            client_lr: 1e-3,
            weight_decay: 0.0,
            server_lr: 1.0,
            dirichlet_alpha: 0.9,
            seed,
            attack: AttackConfig::none(),
            crafting: CraftingConfig {
                enabled: false,
                ..CraftingConfig::default()
            },
            defense: DefenseRule::FedAvg,
            defense_params: DefenseParams::default(),
            lemma1_clip: false,
            shots: None,
        }
    }

    #[test]
    fn partition_single_client_takes_everything() {
        let labels = vec![0u8, 1, 0, 1, 2];
        let parts = dirichlet_partition(&labels, 1, 0.9, &mut stream(1, &[1])).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].len(), 5);
    }

    #[test]
    fn partition_is_a_partition() {
        let labels: Vec<u8> = (0..200).map(|i| (i % 5) as u8).collect();
        let parts = dirichlet_partition(&labels, 7, 0.5, &mut stream(2, &[2])).unwrap();
        let mut seen = vec![false; labels.len()];
        for part in &parts {
            assert!(!part.is_empty());
            for &i in part {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn partition_rejects_tiny_dataset() {
        let labels = vec![0u8, 1];
        assert!(dirichlet_partition(&labels, 3, 0.9, &mut stream(3, &[3])).is_err());
    }

    #[test]
    fn small_alpha_is_more_heterogeneous() {
        // Monte-Carlo heterogeneity oracle: mean per-client class-proportion
        // variance is strictly larger at alpha = 0.1 than at alpha = 10
        let labels: Vec<u8> = (0..300).map(|i| (i % 3) as u8).collect();
        let k = 5;
        let mean_variance = |alpha: f64, seed_base: u64| -> f64 {
            let mut total = 0.0;
            let mut count = 0usize;
            for s in 0..200u64 {
                let parts =
                    dirichlet_partition(&labels, k, alpha, &mut stream(seed_base + s, &[4]))
                        .unwrap();
                for part in parts {
                    let mut hist = [0.0f64; 3];
                    for &i in &part {
                        hist[(labels[i]) as usize] += 1.0;
                    }
                    let n: f64 = hist.iter().sum();
                    let props: Vec<f64> = hist.iter().map(|h| h / n).collect();
                    let mean = 1.0 / 3.0;
                    total += props.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / 3.0;
                    count += 1;
                }
            }
            total / count as f64
        };
        let hetero = mean_variance(0.1, 10_000);
        let homo = mean_variance(10.0, 20_000);
        assert!(
            hetero > homo,
            "alpha=0.1 variance {hetero} should exceed alpha=10 variance {homo}"
        );
    }

    #[test]
    fn clean_run_matches_reference_loop() {
        // the federation machinery must match a hand-rolled loop over the
        // same streams: per client local_train from the broadcast, uniform
        // average, server apply
        let (arch, train, test) = toy_setup();
        let cfg = base_cfg(7);
        let mut fed = Federation::new(cfg.clone(), arch, &train, test.clone()).unwrap();
        let reference_parts = dirichlet_partition(
            train.labels(),
            cfg.clients,
            cfg.dirichlet_alpha,
            &mut stream(cfg.seed, &[tags::PARTITION]),
        )
        .unwrap();
        let client_pools: Vec<Dataset> =
            reference_parts.iter().map(|p| train.select(p)).collect();
        let mut theta = ModelParams::init(&arch, &mut stream(cfg.seed, &[tags::INIT]));
        let circuit = clean_template(&arch);
        let settings = cfg.train_settings();
        for t in 0..cfg.rounds {
            let mut agg = vec![0.0; theta.dim()];
            for k in 0..cfg.clients {
                let out = local_train(
                    &theta,
                    &client_pools[k],
                    &settings,
                    &arch,
                    &circuit,
                    1.0,
                    &mut stream(cfg.seed, &[tags::BATCH, k as u64, t as u64]),
                )
                .unwrap();
                linalg::axpy(&mut agg, 1.0 / cfg.clients as f64, &out.delta);
            }
            linalg::axpy(theta.flat_mut(), cfg.server_lr, &agg);
            let record = fed.run_round(t).unwrap();
            assert!(!record.round_rejected);
            for (a, b) in fed.params().flat().iter().zip(theta.flat()) {
                assert!((a - b).abs() < 1e-12, "round {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn null_adversary_matches_clean_run_exactly() {
        let (arch, train, test) = toy_setup();
        let clean_cfg = base_cfg(11);
        let mut null_cfg = base_cfg(11);
        null_cfg.malicious_fraction = 0.34; // m = 1 of 3
        null_cfg.attack = AttackConfig::none();
        null_cfg.attack.poison_prob = 0.9; // draws happen but change nothing
        null_cfg.crafting.enabled = false;

        let a = run_experiment(clean_cfg, arch, &train, test.clone()).unwrap();
        let b = run_experiment(null_cfg, arch, &train, test).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.accuracy, rb.accuracy);
            assert_eq!(ra.applied_aggregate, rb.applied_aggregate);
        }
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn fedavg_decomposition_holds_each_round() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(13);
        cfg.clients = 4;
        cfg.malicious_fraction = 0.25;
        cfg.attack = AttackConfig::defaults_for(AttackKind::Pauli, &arch);
        cfg.crafting.enabled = true;
        cfg.rounds = 3;
        let outcome = run_experiment(cfg, arch, &train, test).unwrap();
        for r in &outcome.records {
            // g + b equals the applied fedavg aggregate
            let mut sum = r.benign_aggregate.clone();
            linalg::axpy(&mut sum, 1.0, &r.attack_perturbation);
            for (s, a) in sum.iter().zip(&r.applied_aggregate) {
                assert!((s - a).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(17);
        cfg.malicious_fraction = 0.34;
        cfg.attack = AttackConfig::defaults_for(AttackKind::Grover, &arch);
        cfg.crafting.enabled = true;
        let a = run_experiment(cfg.clone(), arch, &train, test.clone()).unwrap();
        let b = run_experiment(cfg, arch, &train, test).unwrap();
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.malicious_ids, b.malicious_ids);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.accuracy, rb.accuracy);
            assert_eq!(ra.b_norm, rb.b_norm);
            assert_eq!(ra.poison_flags, rb.poison_flags);
        }
    }

    #[test]
    fn zero_rounds_reports_initial_accuracy() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(19);
        cfg.rounds = 0;
        let outcome = run_experiment(cfg, arch, &train, test).unwrap();
        assert!(outcome.records.is_empty());
        assert_eq!(outcome.final_accuracy, outcome.initial_accuracy);
    }

    #[test]
    fn desk_scale_clean_run_learns() {
        // synthetic task, K=5: final accuracy beats the initial model in
        // most seeds
        let arch = ModelArchitecture::custom(3, 2, 3, 4).unwrap();
        let mut improved = 0;
        for seed in 0..5u64 {
            let mut rng = stream(seed, &[tags::DATASET, 50]);
            let train = synthetic_blobs(3, 40, 4, 3.0, &mut rng).unwrap();
            let test = synthetic_blobs(3, 40, 4, 3.0, &mut rng).unwrap();
            let mut cfg = base_cfg(seed);
            cfg.clients = 5;
            cfg.rounds = 20;
            cfg.client_lr = 5e-3;
            let outcome = run_experiment(cfg, arch, &train, test).unwrap();
            if outcome.final_accuracy > outcome.initial_accuracy {
                improved += 1;
            }
        }
        assert!(improved >= 4, "improved in only {improved}/5 seeds");
    }

    #[test]
    fn shadow_run_null_adversary_has_zero_deviation() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(23);
        cfg.malicious_fraction = 0.34;
        cfg.attack = AttackConfig::none();
        cfg.crafting.enabled = false;
        let (attacked, _benign) = shadow_benign_run(cfg, arch, &train, test).unwrap();
        for r in &attacked.records {
            assert_eq!(r.deviation, Some(0.0));
        }
    }

    #[test]
    fn shadow_run_deviations_are_finite_and_recorded() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(29);
        cfg.clients = 4;
        cfg.malicious_fraction = 0.25;
        cfg.attack = AttackConfig::defaults_for(AttackKind::SignFlip, &arch);
        cfg.crafting.enabled = true;
        cfg.rounds = 3;
        let (attacked, benign) = shadow_benign_run(cfg.clone(), arch, &train, test).unwrap();
        assert_eq!(attacked.records.len(), cfg.rounds);
        assert_eq!(attacked.malicious_ids, benign.malicious_ids);
        for r in &attacked.records {
            let d = r.deviation.expect("deviation recorded");
            assert!(d.is_finite());
        }
    }

    #[test]
    fn malicious_ids_persist_across_rounds_and_twin() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(31);
        cfg.clients = 6;
        cfg.malicious_fraction = 0.5;
        cfg.attack = AttackConfig::defaults_for(AttackKind::BitFlip, &arch);
        let (attacked, benign) = shadow_benign_run(cfg, arch, &train, test).unwrap();
        assert_eq!(attacked.malicious_ids.len(), 3);
        assert_eq!(attacked.malicious_ids, benign.malicious_ids);
    }

    #[test]
    fn lemma1_clip_mode_never_violates_bound() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(37);
        cfg.clients = 4;
        cfg.malicious_fraction = 0.5;
        cfg.attack = AttackConfig::defaults_for(AttackKind::Grover, &arch);
        cfg.crafting.enabled = true;
        cfg.lemma1_clip = true;
        cfg.rounds = 4;
        let outcome = run_experiment(cfg, arch, &train, test).unwrap();
        for r in &outcome.records {
            let lemma = r.lemma1.as_ref().expect("lemma1 audit present");
            assert!(lemma.pass, "round {}: {:?}", r.round, lemma);
        }
    }

    #[test]
    fn full_participation_every_round() {
        let (arch, train, test) = toy_setup();
        let mut cfg = base_cfg(41);
        cfg.clients = 5;
        cfg.rounds = 2;
        let outcome = run_experiment(cfg, arch, &train, test).unwrap();
        for r in &outcome.records {
            assert_eq!(r.client_delta_norms.len(), 5);
            let ids: Vec<usize> = r.client_delta_norms.iter().map(|(id, _)| *id).collect();
            assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        }
    }
}
