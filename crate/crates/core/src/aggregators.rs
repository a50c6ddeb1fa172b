//! Server-side aggregation rules: nominal averaging plus five robust or
//! backdoor-oriented defenses.
//!
//! Rules are pure functions of the received updates and (for the
//! history-based rules) the per-client cumulative state. No malicious flag
//! crosses this boundary; `ClientUpdate` does not carry one. Mud-HoG and
//! FLGuardian are documented approximations of their cited descriptions and
//! are reported as `mudhog-proxy` / `flguardian-proxy` in outputs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg;

/// One client's transmitted delta for a round. The server normalizes
/// weights to sum 1 on receipt.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub round: usize,
    pub delta: Vec<f64>,
    pub weight: f64,
}

/// Per-client cumulative update history for the history-based rules.
#[derive(Debug, Clone, Default)]
pub struct AggregatorState {
    cumulative: BTreeMap<usize, Vec<f64>>,
}

impl AggregatorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold a round's transmitted deltas into the per-client histories.
    /// Call after aggregation so a round's own updates never inform its
    /// weighting.
    pub fn record(&mut self, updates: &[ClientUpdate]) {
        for u in updates {
            let entry = self
                .cumulative
                .entry(u.client_id)
                .or_insert_with(|| vec![0.0; u.delta.len()]);
            linalg::axpy(entry, 1.0, &u.delta);
        }
    }

    pub fn history(&self, client_id: usize) -> Option<&Vec<f64>> {
        self.cumulative.get(&client_id)
    }

    fn histories_for(&self, updates: &[ClientUpdate]) -> Vec<Vec<f64>> {
        updates
            .iter()
            .map(|u| {
                self.cumulative
                    .get(&u.client_id)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; u.delta.len()])
            })
            .collect()
    }
}

/// The selectable defense rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseRule {
    FedAvg,
    Krum,
    MultiKrum,
    FoolsGold,
    MudHog,
    FlGuardian,
}

impl DefenseRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(DefenseRule::FedAvg),
            "krum" => Ok(DefenseRule::Krum),
            "mkrum" => Ok(DefenseRule::MultiKrum),
            "foolsgold" => Ok(DefenseRule::FoolsGold),
            "mudhog" => Ok(DefenseRule::MudHog),
            "flguardian" => Ok(DefenseRule::FlGuardian),
            other => Err(Error::Config(format!("unknown defense rule '{other}'"))),
        }
    }

    /// Identifier used in output records; proxies are labeled as such.
    pub fn record_label(&self) -> &'static str {
        match self {
            DefenseRule::FedAvg => "fedavg",
            DefenseRule::Krum => "krum",
            DefenseRule::MultiKrum => "mkrum",
            DefenseRule::FoolsGold => "foolsgold",
            DefenseRule::MudHog => "mudhog-proxy",
            DefenseRule::FlGuardian => "flguardian-proxy",
        }
    }
}

/// Rule hyperparameters resolved by the federation config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefenseParams {
    /// Krum/MKrum Byzantine count f; `None` derives ceil(q*K) at the call
    /// site.
    pub krum_f: Option<usize>,
    /// MKrum selection count; `None` means the maximum n - f - 2.
    pub mkrum_select: Option<usize>,
}

impl Default for DefenseParams {
    fn default() -> Self {
        DefenseParams {
            krum_f: None,
            mkrum_select: None,
        }
    }
}

fn check_nonempty(updates: &[ClientUpdate]) -> Result<()> {
    if updates.is_empty() {
        return Err(Error::Protocol("no client updates to aggregate".into()));
    }
    let d = updates[0].delta.len();
    if updates.iter().any(|u| u.delta.len() != d) {
        return Err(Error::Shape("client updates disagree on dimension".into()));
    }
    Ok(())
}

/// Normalize weights in place to sum to 1.
pub fn normalize_weights(updates: &mut [ClientUpdate]) -> Result<()> {
    let total: f64 = updates.iter().map(|u| u.weight).sum();
    if total <= 0.0 {
        return Err(Error::Protocol(format!(
            "non-positive total client weight {total}"
        )));
    }
    for u in updates.iter_mut() {
        u.weight /= total;
    }
    Ok(())
}

/// Weighted average of the deltas (the no-defense reference).
pub fn fedavg(updates: &[ClientUpdate]) -> Result<Vec<f64>> {
    check_nonempty(updates)?;
    let d = updates[0].delta.len();
    let mut out = vec![0.0; d];
    for u in updates {
        linalg::axpy(&mut out, u.weight, &u.delta);
    }
    Ok(out)
}

fn krum_scores(updates: &[ClientUpdate], f: usize) -> Result<Vec<f64>> {
    let n = updates.len();
    if n < f + 3 {
        return Err(Error::Config(format!(
            "krum needs n >= f + 3 (n = {n}, f = {f})"
        )));
    }
    let k = n - f - 2;
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| linalg::euclidean_distance_sqr(&updates[i].delta, &updates[j].delta))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        scores.push(dists[..k].iter().sum());
    }
    Ok(scores)
}

/// Index of the Krum selection: minimal sum of squared distances to the
/// n - f - 2 nearest other deltas, ties broken by lowest client id.
pub fn krum_select(updates: &[ClientUpdate], f: usize) -> Result<usize> {
    check_nonempty(updates)?;
    let scores = krum_scores(updates, f)?;
    let mut best = 0usize;
    for i in 1..updates.len() {
        let better = scores[i] < scores[best]
            || (scores[i] == scores[best] && updates[i].client_id < updates[best].client_id);
        if better {
            best = i;
        }
    }
    Ok(best)
}

/// Krum: the single selected delta.
pub fn krum(updates: &[ClientUpdate], f: usize) -> Result<Vec<f64>> {
    let idx = krum_select(updates, f)?;
    Ok(updates[idx].delta.clone())
}

/// Multi-Krum: equal-weight average of the `m_select` lowest-score deltas.
pub fn multi_krum(updates: &[ClientUpdate], f: usize, m_select: usize) -> Result<Vec<f64>> {
    check_nonempty(updates)?;
    let scores = krum_scores(updates, f)?;
    let max_select = updates.len() - f - 2;
    if m_select == 0 || m_select > max_select {
        return Err(Error::Config(format!(
            "mkrum selection count must be in 1..={max_select}, got {m_select}"
        )));
    }
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap()
            .then(updates[a].client_id.cmp(&updates[b].client_id))
    });
    let d = updates[0].delta.len();
    let mut out = vec![0.0; d];
    for &i in order.iter().take(m_select) {
        linalg::axpy(&mut out, 1.0 / m_select as f64, &updates[i].delta);
    }
    Ok(out)
}

/// FoolsGold reweighting over cumulative client histories: pairwise cosine
/// similarity, pardoning rescale, `1 - max cosine` weights, logit
/// sharpening, renormalized weighted mean. Zero histories (first round)
/// fall back to FedAvg.
pub fn foolsgold(updates: &[ClientUpdate], state: &AggregatorState) -> Result<Vec<f64>> {
    check_nonempty(updates)?;
    let n = updates.len();
    if n == 1 {
        return Ok(updates[0].delta.clone());
    }
    let histories = state.histories_for(updates);
    if histories.iter().all(|h| linalg::norm(h) == 0.0) {
        return fedavg(updates);
    }
    let mut cs = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cs[i][j] = linalg::cosine(&histories[i], &histories[j]);
            }
        }
    }
    let v: Vec<f64> = (0..n)
        .map(|i| cs[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    // pardoning: scale down similarity against clients that look less
    // sybil-like than the row client
    for i in 0..n {
        for j in 0..n {
            if i != j && v[j] > v[i] && v[j] > 0.0 {
                cs[i][j] *= v[i] / v[j];
            }
        }
    }
    let mut wv: Vec<f64> = (0..n)
        .map(|i| {
            let m = cs[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (1.0 - m).clamp(0.0, 1.0)
        })
        .collect();
    let max_wv = wv.iter().cloned().fold(0.0, f64::max);
    if max_wv > 0.0 {
        for w in &mut wv {
            *w /= max_wv;
        }
    }
    // logit sharpening, clipped back into [0, 1]
    for w in &mut wv {
        *w = if *w >= 1.0 {
            1.0
        } else if *w <= 0.0 {
            0.0
        } else {
            ((*w / (1.0 - *w)).ln() + 0.5).clamp(0.0, 1.0)
        };
    }
    let total: f64 = wv.iter().sum();
    let d = updates[0].delta.len();
    let mut out = vec![0.0; d];
    if total <= 1e-12 {
        // every client looks like a sybil: contribute nothing this round
        return Ok(out);
    }
    for (u, &w) in updates.iter().zip(&wv) {
        linalg::axpy(&mut out, w / total, &u.delta);
    }
    Ok(out)
}

/// Documented Mud-HoG approximation: clients are 2-means-clustered by
/// cosine distance on long-term cumulative gradients; the larger cluster is
/// averaged (both on an exact size tie). Degenerate histories fall back to
/// FedAvg.
pub fn mudhog(updates: &[ClientUpdate], state: &AggregatorState) -> Result<Vec<f64>> {
    check_nonempty(updates)?;
    let n = updates.len();
    if n <= 2 {
        return fedavg(updates);
    }
    let signatures = state.histories_for(updates);
    if signatures.iter().all(|s| linalg::norm(s) == 0.0) {
        return fedavg(updates);
    }
    // deterministic seeding: the pair at maximal cosine distance
    let mut seed_pair = (0usize, 1usize);
    let mut max_dist = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = 1.0 - linalg::cosine(&signatures[i], &signatures[j]);
            if dist > max_dist {
                max_dist = dist;
                seed_pair = (i, j);
            }
        }
    }
    if max_dist < 1e-9 {
        return fedavg(updates);
    }
    let mut centroids = [signatures[seed_pair.0].clone(), signatures[seed_pair.1].clone()];
    let mut assignment = vec![0usize; n];
    for _ in 0..20 {
        let mut changed = false;
        for (i, sig) in signatures.iter().enumerate() {
            let d0 = 1.0 - linalg::cosine(sig, &centroids[0]);
            let d1 = 1.0 - linalg::cosine(sig, &centroids[1]);
            let c = usize::from(d1 < d0);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        for c in 0..2 {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; signatures[0].len()];
            for &i in &members {
                linalg::axpy(&mut mean, 1.0 / members.len() as f64, &signatures[i]);
            }
            centroids[c] = mean;
        }
        if !changed {
            break;
        }
    }
    let size0 = assignment.iter().filter(|&&a| a == 0).count();
    let size1 = n - size0;
    let keep: Vec<usize> = if size0 == size1 {
        (0..n).collect()
    } else {
        let majority = usize::from(size1 > size0);
        (0..n).filter(|&i| assignment[i] == majority).collect()
    };
    let mut kept: Vec<ClientUpdate> = keep.iter().map(|&i| updates[i].clone()).collect();
    normalize_weights(&mut kept)?;
    fedavg(&kept)
}

/// Documented FLGuardian approximation: screen against the coordinate-wise
/// median center, dropping clients whose norm z-score exceeds 2.5 or whose
/// cosine to the center is negative; average the survivors. If everyone is
/// dropped the median center itself is returned.
pub fn flguardian_screen(updates: &[ClientUpdate]) -> Result<Vec<f64>> {
    check_nonempty(updates)?;
    let n = updates.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "flguardian screening needs at least 3 updates, got {n}"
        )));
    }
    let deltas: Vec<Vec<f64>> = updates.iter().map(|u| u.delta.clone()).collect();
    let center = linalg::coordinate_median(&deltas);
    let norms: Vec<f64> = deltas.iter().map(|d| linalg::norm(d)).collect();
    let mean = norms.iter().sum::<f64>() / n as f64;
    let var = norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-12);
    let survivors: Vec<usize> = (0..n)
        .filter(|&i| {
            let z = (norms[i] - mean).abs() / std;
            let cos = linalg::cosine(&deltas[i], &center);
            z <= 2.5 && cos >= 0.0
        })
        .collect();
    if survivors.is_empty() {
        return Ok(center);
    }
    let mut kept: Vec<ClientUpdate> = survivors.iter().map(|&i| updates[i].clone()).collect();
    normalize_weights(&mut kept)?;
    fedavg(&kept)
}

/// Dispatch on the configured rule. `n_expected_malicious` feeds the Krum
/// default f = ceil(q*K) when no explicit value is configured.
pub fn aggregate(
    rule: DefenseRule,
    params: &DefenseParams,
    updates: &[ClientUpdate],
    state: &AggregatorState,
    n_expected_malicious: usize,
) -> Result<Vec<f64>> {
    match rule {
        DefenseRule::FedAvg => fedavg(updates),
        DefenseRule::Krum => {
            let f = params.krum_f.unwrap_or(n_expected_malicious);
            krum(updates, f)
        }
        DefenseRule::MultiKrum => {
            let f = params.krum_f.unwrap_or(n_expected_malicious);
            let max_select = updates.len().saturating_sub(f + 2).max(1);
            let m = params.mkrum_select.unwrap_or(max_select);
            multi_krum(updates, f, m)
        }
        DefenseRule::FoolsGold => foolsgold(updates, state),
        DefenseRule::MudHog => mudhog(updates, state),
        DefenseRule::FlGuardian => flguardian_screen(updates),
    }
}

/// Server-side parameter update `theta <- theta + beta * aggregate`. A
/// non-finite aggregate rejects the round and leaves theta untouched.
pub fn server_apply(theta: &mut [f64], aggregate: &[f64], beta: f64) -> Result<()> {
    if theta.len() != aggregate.len() {
        return Err(Error::Shape(format!(
            "aggregate dimension {} does not match parameters {}",
            aggregate.len(),
            theta.len()
        )));
    }
    if aggregate.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "aggregate contains non-finite entries; round rejected".into(),
        ));
    }
    linalg::axpy(theta, beta, aggregate);
    Ok(())
}
