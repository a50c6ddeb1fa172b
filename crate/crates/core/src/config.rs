//! Flat key=value run configuration with section prefixes
//! (`federation.*`, `attack.*`, `crafting.*`, `defense.*`, `dataset.*`,
//! `analysis.*`, `sweep.*`, `model.*`, `output.*`).
//!
//! CLI flags override file keys; the full effective configuration is echoed
//! into the run manifest so any output is reproducible from its manifest
//! alone.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::aggregators::{DefenseParams, DefenseRule};
use crate::attacks::{AttackConfig, AttackKind};
use crate::crafting::{CraftingConfig, TargetNormRule};
use crate::error::{Error, Result};
use crate::federation::FederationConfig;
use crate::model::ModelArchitecture;
use crate::qsim::InsertionPoint;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "QFL_DATA_DIR";

/// Raw parsed keys. Later assignments win, which is what makes CLI
/// overrides trivial.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse `key = value` lines; `#` starts a comment, blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            map.set(key.trim(), value.trim());
        }
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'"))),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got '{v}'"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got '{v}'"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
        }
    }

    /// Sorted `key = value` echo for the manifest.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }
}

/// Which pool backs the run.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Mnist,
    Mnist8x8,
    Cifar10,
    SyntheticBlobs {
        classes: usize,
        dim: usize,
        separation: f64,
        train_per_class: usize,
        test_per_class: usize,
    },
}

impl DatasetSpec {
    pub fn id(&self) -> &'static str {
        match self {
            DatasetSpec::Mnist => "mnist",
            DatasetSpec::Mnist8x8 => "mnist8x8",
            DatasetSpec::Cifar10 => "cifar10",
            DatasetSpec::SyntheticBlobs { .. } => "synthetic_blobs",
        }
    }
}

/// Fully resolved run configuration: everything a single experiment needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub federation: FederationConfig,
    pub arch: ModelArchitecture,
    pub dataset: DatasetSpec,
    pub data_root: Option<PathBuf>,
    pub train_subset: usize,
    pub test_subset: usize,
    pub shadow: bool,
    pub out_dir: PathBuf,
}

fn parse_list<T, F>(value: &str, key: &str, f: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            f(s).map_err(|_| Error::Config(format!("{key}: could not parse list item '{s}'")))
        })
        .collect()
}

fn parse_f64_list(map: &ConfigMap, key: &str) -> Result<Option<Vec<f64>>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => Ok(Some(parse_list(v, key, |s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: bad number '{s}'")))
        })?)),
    }
}

fn parse_usize_list(map: &ConfigMap, key: &str) -> Result<Option<Vec<usize>>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => Ok(Some(parse_list(v, key, |s| {
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: bad integer '{s}'")))
        })?)),
    }
}

/// Resolve the dataset spec and the matching architecture profile.
pub fn resolve_dataset_and_arch(map: &ConfigMap) -> Result<(DatasetSpec, ModelArchitecture)> {
    let id = map.get_or("dataset.id", "synthetic_blobs");
    let dataset = match id.as_str() {
        "mnist" => DatasetSpec::Mnist,
        "mnist8x8" => DatasetSpec::Mnist8x8,
        "cifar10" => DatasetSpec::Cifar10,
        "synthetic_blobs" => DatasetSpec::SyntheticBlobs {
            classes: map.get_usize("dataset.blob_classes", 10)?,
            dim: map.get_usize("dataset.blob_dim", 64)?,
            separation: map.get_f64("dataset.blob_separation", 2.5)?,
            train_per_class: map.get_usize("dataset.blob_train_per_class", 200)?,
            test_per_class: map.get_usize("dataset.blob_test_per_class", 100)?,
        },
        other => {
            return Err(Error::Config(format!(
                "dataset.id must be one of mnist, mnist8x8, cifar10, synthetic_blobs; got '{other}'"
            )))
        }
    };
    let mut arch = match &dataset {
        DatasetSpec::Mnist => ModelArchitecture::mnist(),
        DatasetSpec::Mnist8x8 => ModelArchitecture::mnist8x8(),
        DatasetSpec::Cifar10 => ModelArchitecture::cifar10(6),
        DatasetSpec::SyntheticBlobs { classes, dim, .. } => {
            ModelArchitecture::custom(4, 6, *classes, *dim)?
        }
    };
    arch.entangling_depth = map.get_usize("model.entangling_depth", arch.entangling_depth)?;
    arch.validate()?;
    Ok((dataset, arch))
}

fn resolve_attack(map: &ConfigMap, arch: &ModelArchitecture) -> Result<AttackConfig> {
    let kind = AttackKind::parse(&map.get_or("attack.kind", "none"))?;
    let mut cfg = if kind == AttackKind::None {
        AttackConfig::none()
    } else {
        AttackConfig::defaults_for(kind, arch)
    };
    cfg.poison_prob = map.get_f64("attack.rho", cfg.poison_prob)?;
    cfg.loss_scale = map.get_f64("attack.lambda", cfg.loss_scale)?;
    if let Some(v) = map.get("attack.insertion") {
        cfg.insertion = InsertionPoint::parse(v)?;
    }
    if let Some(v) = map.get("attack.omega") {
        cfg.omega = v
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Config(format!(
                    "attack.omega must be a bit-string, got '{v}'"
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
    }
    if let Some(wires) = parse_usize_list(map, "attack.wires")? {
        cfg.wires = wires;
    }
    if let Some(alphas) = parse_f64_list(map, "attack.alphas")? {
        cfg.alphas = alphas;
    }
    if cfg.wires.len() != cfg.alphas.len() && kind == AttackKind::Pauli {
        // a single configured angle broadcasts across the wire set
        if cfg.alphas.len() == 1 {
            cfg.alphas = vec![cfg.alphas[0]; cfg.wires.len()];
        }
    }
    cfg.period = map.get_usize("attack.period", cfg.period)?;
    cfg.target_wire = map.get_usize("attack.target_wire", cfg.target_wire)?;
    cfg.sign_wire = map.get_usize("attack.sign_wire", cfg.sign_wire)?;
    cfg.phase = map.get_f64("attack.phase", cfg.phase)?;
    cfg.use_ancilla_oracle = map.get_bool("attack.use_ancilla_oracle", cfg.use_ancilla_oracle)?;
    Ok(cfg)
}

fn resolve_crafting(map: &ConfigMap) -> Result<CraftingConfig> {
    let mut cfg = CraftingConfig::default();
    cfg.enabled = map.get_bool("crafting.enabled", cfg.enabled)?;
    cfg.window = map.get_usize("crafting.window", cfg.window)?;
    cfg.top_k = map.get_usize("crafting.top_k", cfg.top_k)?;
    cfg.eps_min = map.get_f64("crafting.eps_min", cfg.eps_min)?;
    cfg.eps_max = map.get_f64("crafting.eps_max", cfg.eps_max)?;
    cfg.sparsity_quantile = map.get_f64("crafting.sparsity_quantile", cfg.sparsity_quantile)?;
    cfg.debug = map.get_bool("crafting.debug", cfg.debug)?;
    match map.get("crafting.noise_sigma") {
        None | Some("auto") => {}
        Some(v) => {
            let sigma: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("crafting.noise_sigma: bad value '{v}'")))?;
            cfg.noise_sigma = Some(sigma);
        }
    }
    match map.get("crafting.target_norm") {
        None | Some("gaussian") => {}
        Some(v) => {
            let fixed = v.strip_prefix("fixed:").ok_or_else(|| {
                Error::Config(format!(
                    "crafting.target_norm must be 'gaussian' or 'fixed:<value>', got '{v}'"
                ))
            })?;
            let value: f64 = fixed
                .parse()
                .map_err(|_| Error::Config(format!("crafting.target_norm: bad value '{v}'")))?;
            cfg.target_norm = TargetNormRule::Fixed(value);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_defense(map: &ConfigMap) -> Result<(DefenseRule, DefenseParams)> {
    let rule = DefenseRule::parse(&map.get_or("defense.rule", "fedavg"))?;
    let mut params = DefenseParams::default();
    match map.get("defense.krum_f") {
        None | Some("auto") => {}
        Some(v) => {
            params.krum_f = Some(v.parse().map_err(|_| {
                Error::Config(format!("defense.krum_f: expected integer or auto, got '{v}'"))
            })?);
        }
    }
    match map.get("defense.mkrum_select") {
        None | Some("auto") => {}
        Some(v) => {
            params.mkrum_select = Some(v.parse().map_err(|_| {
                Error::Config(format!(
                    "defense.mkrum_select: expected integer or auto, got '{v}'"
                ))
            })?);
        }
    }
    Ok((rule, params))
}

/// Build the fully resolved run configuration from raw keys. The
/// desk-scale profile is the default; `--paper-scale` raises the federation
/// knobs to the full-scale values.
pub fn build_run_config(map: &ConfigMap) -> Result<RunConfig> {
    let paper_scale = map.get_bool("federation.paper_scale", false)?;
    let (dataset, arch) = resolve_dataset_and_arch(map)?;
    let attack = resolve_attack(map, &arch)?;
    let crafting = resolve_crafting(map)?;
    let (defense, defense_params) = resolve_defense(map)?;

    let default_clients = if paper_scale { 20 } else { 5 };
    let default_rounds = if paper_scale { 100 } else { 20 };
    let shots = match map.get("federation.shots") {
        None | Some("exact") | Some("0") => None,
        Some(v) => Some(v.parse::<u64>().map_err(|_| {
            Error::Config(format!("federation.shots: expected an integer, got '{v}'"))
        })?),
    };

    let federation = FederationConfig {
        clients: map.get_usize("federation.clients", default_clients)?,
        malicious_fraction: map.get_f64("federation.malicious_fraction", 0.0)?,
        rounds: map.get_usize("federation.rounds", default_rounds)?,
        local_epochs: map.get_usize("federation.local_epochs", 1)?,
        batch_size: map.get_usize("federation.batch_size", 32)?,
        client_lr: map.get_f64("federation.client_lr", 1e-3)?,
        weight_decay: map.get_f64("federation.weight_decay", 0.01)?,
        server_lr: map.get_f64("federation.server_lr", 1.0)?,
        dirichlet_alpha: map.get_f64("federation.dirichlet_alpha", 0.9)?,
        seed: map.get_u64("federation.seed", 1)?,
        attack,
        crafting,
        defense,
        defense_params,
        lemma1_clip: map.get_bool("analysis.lemma1_clip", false)?,
        shots,
    };
    federation.validate()?;
    if federation.malicious_fraction > 0.5 {
        eprintln!(
            "warning: malicious fraction {} exceeds 0.5",
            federation.malicious_fraction
        );
    }

    let data_root = map
        .get("dataset.root")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));

    let (default_train_subset, default_test_subset) = if paper_scale {
        (usize::MAX, usize::MAX)
    } else {
        (2000, 1000)
    };

    Ok(RunConfig {
        federation,
        arch,
        dataset,
        data_root,
        train_subset: map.get_usize("dataset.train_subset", default_train_subset)?,
        test_subset: map.get_usize("dataset.test_subset", default_test_subset)?,
        shadow: map.get_bool("analysis.shadow", false)?,
        out_dir: PathBuf::from(map.get_or("output.dir", "runs/out")),
    })
}

/// Grid axes for `sweep`, enumerated in declaration order.
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub attacks: Vec<AttackKind>,
    pub defenses: Vec<DefenseRule>,
    pub q_values: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub seeds: Vec<u64>,
}

pub fn build_grid(map: &ConfigMap) -> Result<ExperimentGrid> {
    let attacks = match map.get("sweep.attacks") {
        None => vec![AttackKind::Grover],
        Some(v) => parse_list(v, "sweep.attacks", AttackKind::parse)?,
    };
    let defenses = match map.get("sweep.defenses") {
        None => vec![DefenseRule::FedAvg],
        Some(v) => parse_list(v, "sweep.defenses", DefenseRule::parse)?,
    };
    let q_values = parse_f64_list(map, "sweep.q_values")?.unwrap_or_else(|| vec![0.0, 0.2]);
    let rho_values = parse_f64_list(map, "sweep.rho_values")?.unwrap_or_else(|| vec![0.9]);
    let seeds = match map.get("sweep.seeds") {
        None => vec![1, 2, 3],
        Some(v) => parse_list(v, "sweep.seeds", |s| {
            s.parse::<u64>()
                .map_err(|_| Error::Config(format!("sweep.seeds: bad integer '{s}'")))
        })?,
    };
    if seeds.is_empty() {
        return Err(Error::Config("sweep.seeds must not be empty".into()));
    }
    Ok(ExperimentGrid {
        attacks,
        defenses,
        q_values,
        rho_values,
        seeds,
    })
}
