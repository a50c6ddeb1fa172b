//! Browser-facing demo surface.
//!
//! Three interactive operations, each taking and returning JSON strings so
//! the page stays free of generated bindings beyond plain function calls:
//!
//! - [`attack_feature_sweep`]: how each circuit attack moves the measured
//!   Z features of a fixed random model as its knob turns.
//! - [`craft_pipeline`]: the stealth crafting pipeline on a synthetic
//!   history window, with principal-plane geometry for plotting.
//! - [`federated_demo`]: a miniature federated run paired with its
//!   attack-free shadow twin, returning accuracy and deviation curves.
//!
//! Everything is deterministic in the provided seed.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use qfl_core::aggregators::{DefenseParams, DefenseRule};
use qfl_core::analysis::{stealth_membership, StealthSetParams};
use qfl_core::attacks::{build_attack_circuit, AttackConfig, AttackKind};
use qfl_core::crafting::{craft, principal_directions, CraftingConfig, HistoryBuffer};
use qfl_core::data::synthetic_blobs;
use qfl_core::federation::{shadow_benign_run, FederationConfig};
use qfl_core::linalg;
use qfl_core::model::{clean_template, ModelArchitecture, ModelParams};
use qfl_core::qsim::ZObservable;
use qfl_core::rng::stream;
use rand_like::fill_uniform;

/// Tiny uniform filler on top of the core streams, so the demo crate does
/// not need its own RNG dependency.
mod rand_like {
    use rand::Rng;

    pub fn fill_uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
    }
}

fn err_json(message: &str) -> String {
    format!("{{\"error\":{}}}", serde_json::Value::from(message))
}

#[derive(Deserialize)]
struct SweepRequest {
    #[serde(default = "default_kind")]
    kind: String,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_points")]
    points: usize,
}

fn default_kind() -> String {
    "pauli".to_string()
}
fn default_seed() -> u64 {
    7
}
fn default_points() -> usize {
    61
}

#[derive(Serialize)]
struct SweepResponse {
    kind: String,
    /// Knob values: rotation angle, phase, marked-state index, or round.
    xs: Vec<f64>,
    /// Clean features per data wire (constant across the sweep).
    clean: Vec<f64>,
    /// `attacked[wire][point]`.
    attacked: Vec<Vec<f64>>,
    x_label: String,
}

/// Z features of a fixed seeded model under one attack as its knob turns.
#[wasm_bindgen]
pub fn attack_feature_sweep(config_json: &str) -> String {
    let req: SweepRequest = match serde_json::from_str(config_json) {
        Ok(r) => r,
        Err(e) => return err_json(&format!("bad request: {e}")),
    };
    match sweep_impl(&req) {
        Ok(resp) => serde_json::to_string(&resp).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e.to_string()),
    }
}

fn sweep_impl(req: &SweepRequest) -> qfl_core::Result<SweepResponse> {
    let arch = ModelArchitecture::custom(4, 3, 4, 8)?;
    let clean = clean_template(&arch);
    let mut rng = stream(req.seed, &[0xD1]);
    let params = fill_uniform(&mut rng, clean.n_params(), -1.2, 1.2);
    let inputs = fill_uniform(&mut rng, clean.n_inputs(), -2.0, 2.0);
    let observables: Vec<ZObservable> = (0..4).map(ZObservable::single).collect();
    let features = |circuit: &qfl_core::qsim::CircuitTemplate| -> qfl_core::Result<Vec<f64>> {
        let state = circuit.run(&params, &inputs)?;
        observables.iter().map(|o| state.expectation_z(o)).collect()
    };
    let clean_features = features(&clean)?;

    let kind = AttackKind::parse(&req.kind)?;
    let points = req.points.clamp(2, 512);
    let mut xs = Vec::new();
    let mut attacked: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let x_label;
    match kind {
        AttackKind::Pauli => {
            x_label = "rotation angle alpha (rad)".to_string();
            for p in 0..points {
                let alpha = std::f64::consts::PI * p as f64 / (points - 1) as f64;
                let mut cfg = AttackConfig::defaults_for(kind, &arch);
                cfg.alphas = vec![alpha; 4];
                let circuit = build_attack_circuit(&clean, &cfg, &arch, 0)?;
                let f = features(&circuit)?;
                xs.push(alpha);
                for (w, v) in f.into_iter().enumerate() {
                    attacked[w].push(v);
                }
            }
        }
        AttackKind::SignFlip => {
            x_label = "phase phi (rad)".to_string();
            for p in 0..points {
                let phi = 2.0 * std::f64::consts::PI * p as f64 / (points - 1) as f64;
                let mut cfg = AttackConfig::defaults_for(kind, &arch);
                cfg.phase = phi;
                let circuit = build_attack_circuit(&clean, &cfg, &arch, 0)?;
                let f = features(&circuit)?;
                xs.push(phi);
                for (w, v) in f.into_iter().enumerate() {
                    attacked[w].push(v);
                }
            }
        }
        AttackKind::Grover => {
            x_label = "marked state omega (basis index)".to_string();
            for omega_index in 0..16usize {
                let mut cfg = AttackConfig::defaults_for(kind, &arch);
                cfg.omega = (0..4).map(|b| (omega_index >> (3 - b)) & 1 == 1).collect();
                let circuit = build_attack_circuit(&clean, &cfg, &arch, 0)?;
                let f = features(&circuit)?;
                xs.push(omega_index as f64);
                for (w, v) in f.into_iter().enumerate() {
                    attacked[w].push(v);
                }
            }
        }
        AttackKind::BitFlip => {
            x_label = "round t (period 3)".to_string();
            for t in 0..12usize {
                let cfg = AttackConfig::defaults_for(kind, &arch);
                let circuit = build_attack_circuit(&clean, &cfg, &arch, t)?;
                let f = features(&circuit)?;
                xs.push(t as f64);
                for (w, v) in f.into_iter().enumerate() {
                    attacked[w].push(v);
                }
            }
        }
        AttackKind::None => {
            x_label = "noop".to_string();
            xs.push(0.0);
            for (w, v) in clean_features.iter().enumerate() {
                attacked[w].push(*v);
            }
        }
    }
    Ok(SweepResponse {
        kind: kind.as_str().to_string(),
        xs,
        clean: clean_features,
        attacked,
        x_label,
    })
}

#[derive(Deserialize)]
struct CraftRequest {
    #[serde(default = "default_seed")]
    seed: u64,
    /// Norm of the raw malicious update relative to the benign mean.
    #[serde(default = "default_raw_scale")]
    raw_scale: f64,
    #[serde(default = "default_top_k")]
    top_k: usize,
    #[serde(default = "default_quantile")]
    sparsity_quantile: f64,
}

fn default_raw_scale() -> f64 {
    2.0
}
fn default_top_k() -> usize {
    3
}
fn default_quantile() -> f64 {
    0.5
}

#[derive(Serialize)]
struct PlanePoint {
    x: f64,
    y: f64,
    label: String,
}

#[derive(Serialize)]
struct CraftResponse {
    history_norms: Vec<f64>,
    raw_norm: f64,
    crafted_norm: f64,
    anomaly_score: f64,
    intensity: f64,
    target_norm: f64,
    zero_fraction: f64,
    norm_mean: f64,
    norm_std: f64,
    stealth_member: bool,
    stealth_cosine: Option<f64>,
    stealth_radius: f64,
    /// History entries, the raw update, and the crafted update projected
    /// onto the top-2 principal plane of the history.
    plane: Vec<PlanePoint>,
}

/// Run the crafting pipeline on a synthetic honest-like history window.
#[wasm_bindgen]
pub fn craft_pipeline(config_json: &str) -> String {
    let req: CraftRequest = match serde_json::from_str(config_json) {
        Ok(r) => r,
        Err(e) => return err_json(&format!("bad request: {e}")),
    };
    match craft_impl(&req) {
        Ok(resp) => serde_json::to_string(&resp).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e.to_string()),
    }
}

fn craft_impl(req: &CraftRequest) -> qfl_core::Result<CraftResponse> {
    let dim = 48;
    let mut rng = stream(req.seed, &[0xD2]);
    let mut buf = HistoryBuffer::new(10, dim);
    // benign-like updates: a shared drift direction plus noise, unit-ish norms
    let drift = fill_uniform(&mut rng, dim, -1.0, 1.0);
    for _ in 0..10 {
        let mut entry = fill_uniform(&mut rng, dim, -0.35, 0.35);
        linalg::axpy(&mut entry, 0.9, &drift);
        let norm = linalg::norm(&entry);
        let target = 1.0 + 0.08 * (fill_uniform(&mut rng, 1, -1.0, 1.0)[0]);
        for v in &mut entry {
            *v *= target / norm;
        }
        buf.push(entry)?;
    }
    let mut raw = fill_uniform(&mut rng, dim, -1.0, 1.0);
    let norm = linalg::norm(&raw);
    for v in &mut raw {
        *v *= req.raw_scale.max(1e-6) * buf.norm_mean() / norm;
    }
    let cfg = CraftingConfig {
        top_k: req.top_k.min(8),
        sparsity_quantile: req.sparsity_quantile.clamp(0.0, 0.99),
        ..CraftingConfig::default()
    };
    let mut craft_rng = stream(req.seed, &[0xD3]);
    let (crafted, trace) = craft(&raw, &buf, &cfg, &mut craft_rng);

    let center: Vec<f64> = {
        let mut c = vec![0.0; dim];
        for e in buf.entries() {
            linalg::axpy(&mut c, 0.1, e);
        }
        c
    };
    let radius = buf.norm_mean() + 3.0 * buf.norm_std();
    let diag = stealth_membership(
        &crafted,
        &StealthSetParams {
            center,
            radius,
            cosine_threshold: 0.0,
        },
    );

    let axes = principal_directions(&buf, 2);
    let project = |v: &[f64], label: &str| -> PlanePoint {
        let x = axes.first().map(|a| linalg::dot(v, a)).unwrap_or(0.0);
        let y = axes.get(1).map(|a| linalg::dot(v, a)).unwrap_or(0.0);
        PlanePoint {
            x,
            y,
            label: label.to_string(),
        }
    };
    let mut plane: Vec<PlanePoint> = buf.entries().map(|e| project(e, "history")).collect();
    plane.push(project(&raw, "raw"));
    plane.push(project(&crafted, "crafted"));

    Ok(CraftResponse {
        history_norms: buf.entries().map(|e| linalg::norm(e)).collect(),
        raw_norm: linalg::norm(&raw),
        crafted_norm: linalg::norm(&crafted),
        anomaly_score: trace.anomaly_score,
        intensity: trace.intensity,
        target_norm: trace.target_norm,
        zero_fraction: trace.zero_fraction,
        norm_mean: buf.norm_mean(),
        norm_std: buf.norm_std(),
        stealth_member: diag.member,
        stealth_cosine: diag.cosine,
        stealth_radius: radius,
        plane,
    })
}

#[derive(Deserialize)]
struct FederatedRequest {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_kind")]
    attack: String,
    #[serde(default = "default_defense")]
    defense: String,
    #[serde(default = "default_rounds")]
    rounds: usize,
    #[serde(default = "default_rho")]
    rho: f64,
}

fn default_defense() -> String {
    "fedavg".to_string()
}
fn default_rounds() -> usize {
    8
}
fn default_rho() -> f64 {
    0.9
}

#[derive(Serialize)]
struct FederatedResponse {
    rounds: Vec<usize>,
    attacked_accuracy: Vec<f64>,
    benign_accuracy: Vec<f64>,
    deviation: Vec<f64>,
    b_norm: Vec<f64>,
    initial_accuracy: f64,
    malicious_ids: Vec<usize>,
    defense: String,
}

/// A miniature federated run (synthetic task, K=4, one malicious client)
/// paired with its attack-free shadow twin.
#[wasm_bindgen]
pub fn federated_demo(config_json: &str) -> String {
    let req: FederatedRequest = match serde_json::from_str(config_json) {
        Ok(r) => r,
        Err(e) => return err_json(&format!("bad request: {e}")),
    };
    match federated_impl(&req) {
        Ok(resp) => serde_json::to_string(&resp).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e.to_string()),
    }
}

fn federated_impl(req: &FederatedRequest) -> qfl_core::Result<FederatedResponse> {
    let arch = ModelArchitecture::custom(3, 2, 3, 8)?;
    let mut data_rng = stream(req.seed, &[0xD4]);
    let train = synthetic_blobs(3, 40, 8, 5.0, &mut data_rng)?;
    let test = synthetic_blobs(3, 25, 8, 5.0, &mut data_rng)?;
    let kind = AttackKind::parse(&req.attack)?;
    let mut attack = if kind == AttackKind::None {
        AttackConfig::none()
    } else {
        AttackConfig::defaults_for(kind, &arch)
    };
    attack.poison_prob = req.rho.clamp(0.0, 1.0);
    if kind == AttackKind::Grover {
        // mark the heaviest basis state so the oracle acts on real amplitude
        attack.omega = vec![false; 3];
    }
    let defense = DefenseRule::parse(&req.defense)?;
    let cfg = FederationConfig {
        clients: 4,
        malicious_fraction: 0.25,
        rounds: req.rounds.clamp(1, 30),
        local_epochs: 1,
        batch_size: 16,
        client_lr: 0.02,
        weight_decay: 0.0,
        server_lr: 1.0,
        dirichlet_alpha: 0.9,
        seed: req.seed,
        attack,
        crafting: CraftingConfig::default(),
        defense,
        defense_params: DefenseParams::default(),
        lemma1_clip: false,
        shots: None,
    };
    let (attacked, benign) = shadow_benign_run(cfg, arch, &train, test)?;
    Ok(FederatedResponse {
        rounds: attacked.records.iter().map(|r| r.round).collect(),
        attacked_accuracy: attacked.records.iter().map(|r| r.accuracy).collect(),
        benign_accuracy: benign.records.iter().map(|r| r.accuracy).collect(),
        deviation: attacked
            .records
            .iter()
            .map(|r| r.deviation.unwrap_or(0.0))
            .collect(),
        b_norm: attacked.records.iter().map(|r| r.b_norm).collect(),
        initial_accuracy: attacked.initial_accuracy,
        malicious_ids: attacked.malicious_ids,
        defense: defense.record_label().to_string(),
    })
}

// ModelParams is part of the public surface the page may grow into; keep
// the import used.
#[allow(unused)]
fn _params_dim(arch: &ModelArchitecture) -> usize {
    ModelParams::zeros(arch).dim()
}
