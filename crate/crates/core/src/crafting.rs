//! Surface S2: transform a malicious raw update into a stealth-shaped
//! transmitted update.
//!
//! Pipeline order: nearest-history anchor, top-k principal-component
//! removal, adaptive intensity, norm camouflage, sparsification. The
//! history window holds honest-like updates the attacker saw locally (its
//! own clean-mode deltas plus broadcast global deltas); no benign-client
//! data is required.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg;

/// Division guard for the norm statistics.
const SIGMA_FLOOR: f64 = 1e-12;

/// Fixed-capacity FIFO of honest-like flattened updates with cached
/// population statistics over entry norms.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    capacity: usize,
    dim: usize,
    entries: VecDeque<Vec<f64>>,
    norm_mean: f64,
    norm_std: f64,
}

impl HistoryBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        HistoryBuffer {
            capacity: capacity.max(1),
            dim,
            entries: VecDeque::new(),
            norm_mean: 0.0,
            norm_std: SIGMA_FLOOR,
        }
    }

    /// FIFO insert with eviction at capacity; norm statistics are refreshed
    /// on every insertion (population convention, floored sigma).
    pub fn push(&mut self, h: Vec<f64>) -> Result<()> {
        if h.len() != self.dim {
            return Err(Error::Shape(format!(
                "history entry dimension {} does not match buffer dimension {}",
                h.len(),
                self.dim
            )));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(h);
        let norms: Vec<f64> = self.entries.iter().map(|e| linalg::norm(e)).collect();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let var = norms.iter().map(|n| (n - mean) * (n - mean)).sum::<f64>() / norms.len() as f64;
        self.norm_mean = mean;
        self.norm_std = var.sqrt().max(SIGMA_FLOOR);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_mean(&self) -> f64 {
        self.norm_mean
    }

    pub fn norm_std(&self) -> f64 {
        self.norm_std
    }

    pub fn entries(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.entries.iter()
    }

    fn entry(&self, i: usize) -> &Vec<f64> {
        &self.entries[i]
    }
}

/// How the camouflage step picks its target norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetNormRule {
    /// `max(N(mean, std), 0.1 * mean)` over the history norm statistics.
    SampleGaussian,
    /// Fixed value (test override).
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraftingConfig {
    pub enabled: bool,
    /// History window size H.
    pub window: usize,
    /// Principal directions removed from the deviation.
    pub top_k: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    /// Isotropic noise scale; `None` means `1e-3 * norm_mean`.
    pub noise_sigma: Option<f64>,
    /// Sparsity quantile kappa_s in [0, 1).
    pub sparsity_quantile: f64,
    pub target_norm: TargetNormRule,
    /// Dump per-step intermediates to the round log.
    pub debug: bool,
}

impl Default for CraftingConfig {
    fn default() -> Self {
        CraftingConfig {
            enabled: true,
            window: 10,
            top_k: 3,
            eps_min: 0.05,
            eps_max: 1.0,
            noise_sigma: None,
            sparsity_quantile: 0.5,
            target_norm: TargetNormRule::SampleGaussian,
            debug: false,
        }
    }
}

impl CraftingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_min <= 0.0 || self.eps_min > self.eps_max {
            return Err(Error::Config(format!(
                "need 0 < eps_min <= eps_max, got {} and {}",
                self.eps_min, self.eps_max
            )));
        }
        if !(0.0..1.0).contains(&self.sparsity_quantile) {
            return Err(Error::Config(format!(
                "sparsity quantile must be in [0,1), got {}",
                self.sparsity_quantile
            )));
        }
        if let Some(s) = self.noise_sigma {
            if s < 0.0 {
                return Err(Error::Config("noise sigma must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Per-step intermediates for the round log's debug dump.
#[derive(Debug, Clone, PartialEq)]
pub struct CraftTrace {
    pub bypassed: bool,
    pub anchor_index: Option<usize>,
    pub deviation_norm: f64,
    pub residual_norm: f64,
    pub anomaly_score: f64,
    pub intensity: f64,
    pub target_norm: f64,
    pub pre_noise_norm: f64,
    pub zero_fraction: f64,
}

impl CraftTrace {
    fn bypass() -> Self {
        CraftTrace {
            bypassed: true,
            anchor_index: None,
            deviation_norm: 0.0,
            residual_norm: 0.0,
            anomaly_score: 0.0,
            intensity: 0.0,
            target_norm: 0.0,
            pre_noise_norm: 0.0,
            zero_fraction: 0.0,
        }
    }
}

/// Nearest historical reference by Euclidean distance, ties broken by
/// lowest insertion index. Returns the anchor index and `u = r - h*`.
pub fn nearest_reference(buf: &HistoryBuffer, raw: &[f64]) -> Option<(usize, Vec<f64>)> {
    if buf.is_empty() {
        return None;
    }
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (i, h) in buf.entries().enumerate() {
        let d = linalg::euclidean_distance_sqr(raw, h);
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    let u = linalg::sub(raw, buf.entry(best));
    Some((best, u))
}

/// Top principal directions of the row-centered history matrix, via the
/// eigendecomposition of the small Gram matrix. Directions with negligible
/// singular value are skipped (rank deficiency).
pub fn principal_directions(buf: &HistoryBuffer, top_k: usize) -> Vec<Vec<f64>> {
    if top_k == 0 || buf.len() < 2 {
        return Vec::new();
    }
    let n = buf.len();
    let d = buf.dim();
    let mut mean = vec![0.0; d];
    for h in buf.entries() {
        linalg::axpy(&mut mean, 1.0 / n as f64, h);
    }
    let centered: Vec<Vec<f64>> = buf.entries().map(|h| linalg::sub(h, &mean)).collect();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let g = linalg::dot(&centered[i], &centered[j]);
            gram[i][j] = g;
            gram[j][i] = g;
        }
    }
    let (eigenvalues, eigenvectors) = linalg::jacobi_eigh(&gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let scale_tol = eigenvalues.iter().cloned().fold(0.0, f64::max) * 1e-12;
    let mut directions = Vec::new();
    for &idx in order.iter().take(top_k) {
        let lambda = eigenvalues[idx];
        if lambda <= scale_tol || lambda <= 0.0 {
            continue;
        }
        // right singular vector: v = C^T w / sqrt(lambda)
        let mut v = vec![0.0; d];
        for (i, row) in centered.iter().enumerate() {
            linalg::axpy(&mut v, eigenvectors[i][idx], row);
        }
        linalg::scale(&mut v, 1.0 / lambda.sqrt());
        let norm = linalg::norm(&v);
        if norm > 0.0 {
            linalg::scale(&mut v, 1.0 / norm);
            directions.push(v);
        }
    }
    directions
}

/// Remove the top-k principal components of the centered history from `u`.
pub fn null_space_component(u: &[f64], buf: &HistoryBuffer, top_k: usize) -> Vec<f64> {
    let mut out = u.to_vec();
    for v in principal_directions(buf, top_k) {
        let proj = linalg::dot(&out, &v);
        linalg::axpy(&mut out, -proj, &v);
    }
    out
}

/// Norm-anomaly score and adaptive intensity:
/// `s = |  ||r|| - mean | / std`, `eps = max(eps_min, eps_max / (1 + s))`.
pub fn adaptive_intensity(buf: &HistoryBuffer, raw: &[f64], cfg: &CraftingConfig) -> (f64, f64) {
    let s = (linalg::norm(raw) - buf.norm_mean()).abs() / buf.norm_std();
    let eps = (cfg.eps_max / (1.0 + s)).max(cfg.eps_min);
    (s, eps)
}

/// Rescale to a sampled target norm, then add isotropic Gaussian noise.
/// Returns the camouflaged vector and the sampled target norm.
pub fn camouflage(
    p: &[f64],
    buf: &HistoryBuffer,
    cfg: &CraftingConfig,
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let target = match cfg.target_norm {
        TargetNormRule::Fixed(r) => r,
        TargetNormRule::SampleGaussian => {
            let normal = Normal::new(buf.norm_mean(), buf.norm_std()).expect("valid norm stats");
            normal.sample(rng).max(0.1 * buf.norm_mean())
        }
    };
    let p_norm = linalg::norm(p);
    let mut out = p.to_vec();
    if p_norm > 0.0 {
        linalg::scale(&mut out, target / p_norm);
    }
    let sigma = cfg.noise_sigma.unwrap_or(1e-3 * buf.norm_mean());
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("valid noise sigma");
        for v in &mut out {
            *v += normal.sample(rng);
        }
    }
    (out, target)
}

/// Keep coordinates with `|value| >= tau` where tau is the kappa_s-quantile
/// of the absolute values (linear interpolation); zero the rest.
pub fn sparsify(p_cam: &[f64], quantile: f64) -> Vec<f64> {
    if p_cam.is_empty() || quantile <= 0.0 {
        return p_cam.to_vec();
    }
    let magnitudes: Vec<f64> = p_cam.iter().map(|v| v.abs()).collect();
    let tau = linalg::interpolated_quantile(&magnitudes, quantile);
    p_cam
        .iter()
        .map(|&v| if v.abs() >= tau { v } else { 0.0 })
        .collect()
}

/// Full pipeline. With an empty history the raw update passes through
/// unmodified (trace marked bypassed).
pub fn craft(
    raw: &[f64],
    buf: &HistoryBuffer,
    cfg: &CraftingConfig,
    rng: &mut impl Rng,
) -> (Vec<f64>, CraftTrace) {
    if !cfg.enabled || buf.is_empty() {
        return (raw.to_vec(), CraftTrace::bypass());
    }
    let (anchor, u) = nearest_reference(buf, raw).expect("buffer checked non-empty");
    let u_perp = null_space_component(&u, buf, cfg.top_k);
    let (score, eps) = adaptive_intensity(buf, raw, cfg);
    let mut p = buf.entry(anchor).clone();
    linalg::axpy(&mut p, eps, &u_perp);
    if linalg::norm(&p) == 0.0 {
        // degenerate crafted vector: fall back to the anchor itself, a
        // plausible benign-looking update
        p = buf.entry(anchor).clone();
    }
    let (p_cam, target) = camouflage(&p, buf, cfg, rng);
    let pre_noise_norm = if linalg::norm(&p) > 0.0 { target } else { 0.0 };
    let out = sparsify(&p_cam, cfg.sparsity_quantile);
    let zeros = out.iter().filter(|&&v| v == 0.0).count();
    let trace = CraftTrace {
        bypassed: false,
        anchor_index: Some(anchor),
        deviation_norm: linalg::norm(&u),
        residual_norm: linalg::norm(&u_perp),
        anomaly_score: score,
        intensity: eps,
        target_norm: target,
        pre_noise_norm,
        zero_fraction: zeros as f64 / out.len() as f64,
    };
    (out, trace)
}
