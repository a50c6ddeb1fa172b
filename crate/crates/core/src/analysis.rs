//! Runtime theory diagnostics: stealth-set membership, perturbation and
//! deviation bound checks, margin statistics, and accuracy-drop arithmetic.
//!
//! The bound checks treat the stated inequalities as contracts: they report
//! residuals and violations rather than assuming the inequalities hold on
//! arbitrary objectives. The synthetic quadratic federation below is the
//! environment where the deviation recursion provably holds and serves as
//! the test oracle.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{forward, ModelArchitecture, ModelParams};
use crate::qsim::CircuitTemplate;

/// Stealth set parameters: robust center of benign deltas, radius, and
/// cosine threshold.
#[derive(Debug, Clone)]
pub struct StealthSetParams {
    pub center: Vec<f64>,
    pub radius: f64,
    pub cosine_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StealthDiagnostics {
    pub member: bool,
    pub norm: f64,
    /// Cosine to the center; `None` when the center is zero and the cosine
    /// clause passes vacuously.
    pub cosine: Option<f64>,
}

/// Membership in the stealth set: `||u|| <= r` and
/// `cos(u, center) >= kappa`. A zero center makes the cosine clause
/// vacuously true (flagged by `cosine: None`).
pub fn stealth_membership(u: &[f64], params: &StealthSetParams) -> StealthDiagnostics {
    let norm = linalg::norm(u);
    let within_radius = norm <= params.radius;
    let center_norm = linalg::norm(&params.center);
    if center_norm == 0.0 {
        return StealthDiagnostics {
            member: within_radius,
            norm,
            cosine: None,
        };
    }
    let cosine = if norm == 0.0 {
        // zero update points nowhere; treat as aligned
        1.0
    } else {
        linalg::cosine(u, &params.center)
    };
    StealthDiagnostics {
        member: within_radius && cosine >= params.cosine_threshold,
        norm,
        cosine: Some(cosine),
    }
}

/// Coordinate-wise median center of benign deltas (audit-side only; the
/// server cannot know benign identities in deployment).
pub fn robust_center(benign_deltas: &[Vec<f64>]) -> Result<Vec<f64>> {
    if benign_deltas.is_empty() {
        return Err(Error::Data("no benign deltas for the robust center".into()));
    }
    Ok(linalg::coordinate_median(benign_deltas))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Outcome {
    pub b_norm: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Aggregate-perturbation bound: with every malicious transmitted delta
/// clipped to `r_t`, the weighted malicious aggregate must satisfy
/// `||b|| <= q * r_t` (tolerance 1e-9).
pub fn lemma1_check(
    malicious_weighted: &[(f64, &[f64])],
    r_t: f64,
    q: f64,
) -> Result<Lemma1Outcome> {
    if malicious_weighted.is_empty() {
        return Ok(Lemma1Outcome {
            b_norm: 0.0,
            bound: q * r_t,
            pass: true,
        });
    }
    let d = malicious_weighted[0].1.len();
    let mut b = vec![0.0; d];
    for (w, delta) in malicious_weighted {
        if delta.len() != d {
            return Err(Error::Shape("malicious deltas disagree on dimension".into()));
        }
        linalg::axpy(&mut b, *w, delta);
    }
    let b_norm = linalg::norm(&b);
    let bound = q * r_t;
    Ok(Lemma1Outcome {
        b_norm,
        bound,
        pass: b_norm <= bound + 1e-9,
    })
}

/// Clip a vector to a norm budget in place; returns the applied radius.
pub fn clip_to_radius(v: &mut [f64], radius: f64) -> f64 {
    let n = linalg::norm(v);
    if n > radius && n > 0.0 {
        linalg::scale(v, radius / n);
    }
    radius
}

#[derive(Debug, Clone)]
pub struct Prop1Residuals {
    /// `dev_{t+1} - ((1 + beta*L) * dev_t + beta * ||b_t||)` per round.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub violations: usize,
}

/// Deviation recursion check:
/// `dev_{t+1} <= (1 + beta*L) * dev_t + beta * ||b_t||` within 1e-8.
/// `deviations` has length T+1 (deviation before round 0 is 0), `b_norms`
/// has length T.
pub fn proposition1_check(
    deviations: &[f64],
    b_norms: &[f64],
    l_smooth: f64,
    beta: f64,
) -> Result<Prop1Residuals> {
    if deviations.len() != b_norms.len() + 1 {
        return Err(Error::Shape(format!(
            "need T+1 deviations for T rounds, got {} and {}",
            deviations.len(),
            b_norms.len()
        )));
    }
    let mut residuals = Vec::with_capacity(b_norms.len());
    let mut violations = 0usize;
    let mut max_residual = 0.0f64;
    for t in 0..b_norms.len() {
        let bound = (1.0 + beta * l_smooth) * deviations[t] + beta * b_norms[t];
        let residual = deviations[t + 1] - bound;
        if residual > 1e-8 {
            violations += 1;
        }
        if residuals.is_empty() || residual > max_residual {
            max_residual = residual;
        }
        residuals.push(residual);
    }
    Ok(Prop1Residuals {
        residuals,
        max_residual,
        violations,
    })
}

/// Margin of one logit vector: top minus runner-up, non-negative.
pub fn margin(logits: &[f64]) -> f64 {
    debug_assert!(logits.len() >= 2);
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &l in logits {
        if l > top {
            second = top;
            top = l;
        } else if l > second {
            second = l;
        }
    }
    top - second
}

/// Clean margins over a test set.
pub fn margin_distribution(
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    data: &Dataset,
) -> Result<Vec<f64>> {
    if arch.n_classes < 2 {
        return Err(Error::Config("margins need at least two classes".into()));
    }
    let mut margins = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (logits, _) = forward(data.input(i), params, arch, circuit)?;
        margins.push(margin(&logits));
    }
    Ok(margins)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Stats {
    /// Empirical logit-Lipschitz estimate over sampled parameter pairs.
    pub lipschitz: f64,
    /// `|| theta_attack - theta_clean ||` at the compared round.
    pub drift: f64,
    /// Fraction of test points with clean margin <= 2 * L_f * drift.
    pub band_fraction: f64,
    /// Observed fraction of prediction flips between the two models. The
    /// margin condition is sufficient, not tight, so no ordering against
    /// `band_fraction` is asserted; both are reported.
    pub flip_fraction: f64,
}

/// Margin-condition statistics for a paired (clean, attacked) model.
/// `trajectory_pairs` supplies extra parameter pairs (e.g. matched rounds
/// of the shadow run) for the Lipschitz estimate.
pub fn theorem1_statistics(
    clean: &ModelParams,
    attacked: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    data: &Dataset,
    trajectory_pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<Theorem1Stats> {
    let drift = linalg::norm(&linalg::sub(attacked.flat(), clean.flat()));

    let mut pairs: Vec<(ModelParams, ModelParams)> = Vec::new();
    pairs.push((clean.clone(), attacked.clone()));
    for (a, b) in trajectory_pairs {
        pairs.push((
            ModelParams::from_flat(arch, a.clone())?,
            ModelParams::from_flat(arch, b.clone())?,
        ));
    }

    let mut lipschitz = 0.0f64;
    for (pa, pb) in &pairs {
        let dist = linalg::norm(&linalg::sub(pb.flat(), pa.flat()));
        if dist < 1e-12 {
            continue;
        }
        for i in 0..data.len() {
            let (la, _) = forward(data.input(i), pa, arch, circuit)?;
            let (lb, _) = forward(data.input(i), pb, arch, circuit)?;
            let linf = la
                .iter()
                .zip(&lb)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            lipschitz = lipschitz.max(linf / dist);
        }
    }

    let mut in_band = 0usize;
    let mut flips = 0usize;
    for i in 0..data.len() {
        let (lc, _) = forward(data.input(i), clean, arch, circuit)?;
        let (la, _) = forward(data.input(i), attacked, arch, circuit)?;
        let m = margin(&lc);
        if drift == 0.0 {
            if m == 0.0 {
                in_band += 1;
            }
        } else if m <= 2.0 * lipschitz * drift {
            in_band += 1;
        }
        if crate::model::argmax(&lc) != crate::model::argmax(&la) {
            flips += 1;
        }
    }
    let n = data.len().max(1) as f64;
    Ok(Theorem1Stats {
        lipschitz,
        drift,
        band_fraction: in_band as f64 / n,
        flip_fraction: flips as f64 / n,
    })
}

/// Signed accuracy drop in percentage points: baseline minus attacked.
pub fn accuracy_drop(baseline_pct: f64, attacked_pct: f64) -> f64 {
    baseline_pct - attacked_pct
}

/// Synthetic quadratic federated objective
/// `F(theta) = 1/2 * sum_k w_k * ||A_k theta - c_k||^2` with analytically
/// known smoothness `L = lambda_max(sum_k w_k A_k^T A_k)`. Clients run E
/// plain gradient steps; the benign twin evolves by the benign aggregate
/// alone, which is exactly the regime where the deviation recursion holds.
pub mod quadratic {
    use rand::Rng;

    use super::*;

    pub struct QuadraticFederation {
        /// Row-major A_k matrices, `rows x dim` each.
        pub a_mats: Vec<Vec<f64>>,
        pub c_vecs: Vec<Vec<f64>>,
        pub weights: Vec<f64>,
        pub rows: usize,
        pub dim: usize,
        /// Client GD step size.
        pub eta: f64,
        /// Server rate beta.
        pub beta: f64,
        pub local_steps: usize,
    }

    impl QuadraticFederation {
        pub fn random(k: usize, rows: usize, dim: usize, rng: &mut impl Rng) -> Self {
            let a_mats = (0..k)
                .map(|_| {
                    (0..rows * dim)
                        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                        .collect()
                })
                .collect();
            let c_vecs = (0..k)
                .map(|_| (0..rows).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                .collect();
            QuadraticFederation {
                a_mats,
                c_vecs,
                weights: vec![1.0 / k as f64; k],
                rows,
                dim,
                eta: 0.05,
                beta: 1.0,
                local_steps: 1,
            }
        }

        fn gradient(&self, k: usize, theta: &[f64]) -> Vec<f64> {
            // A^T (A theta - c)
            let a = &self.a_mats[k];
            let mut resid = vec![0.0; self.rows];
            for r in 0..self.rows {
                let row = &a[r * self.dim..(r + 1) * self.dim];
                resid[r] = linalg::dot(row, theta) - self.c_vecs[k][r];
            }
            let mut grad = vec![0.0; self.dim];
            for r in 0..self.rows {
                let row = &a[r * self.dim..(r + 1) * self.dim];
                linalg::axpy(&mut grad, resid[r], row);
            }
            grad
        }

        /// Client update: E gradient steps from theta, returning the delta.
        pub fn client_delta(&self, k: usize, theta: &[f64]) -> Vec<f64> {
            let mut local = theta.to_vec();
            for _ in 0..self.local_steps {
                let grad = self.gradient(k, &local);
                linalg::axpy(&mut local, -self.eta, &grad);
            }
            linalg::sub(&local, theta)
        }

        fn benign_aggregate(&self, theta: &[f64], benign: &[usize]) -> Vec<f64> {
            let mut agg = vec![0.0; self.dim];
            for &k in benign {
                let delta = self.client_delta(k, theta);
                linalg::axpy(&mut agg, self.weights[k], &delta);
            }
            agg
        }

        /// Exact smoothness constant `lambda_max(sum_k w_k A_k^T A_k)`.
        pub fn smoothness(&self) -> f64 {
            let mut h = vec![vec![0.0; self.dim]; self.dim];
            for (k, a) in self.a_mats.iter().enumerate() {
                for r in 0..self.rows {
                    let row = &a[r * self.dim..(r + 1) * self.dim];
                    for i in 0..self.dim {
                        for j in 0..self.dim {
                            h[i][j] += self.weights[k] * row[i] * row[j];
                        }
                    }
                }
            }
            linalg::symmetric_lambda_max(&h)
        }

        /// Run paired attacked/benign trajectories for `rounds` rounds.
        /// `malicious` clients transmit the bounded perturbations produced
        /// by `attack_delta(round, attacker_index)`; the benign twin
        /// evolves by the benign aggregate alone. Returns per-round
        /// deviations (length rounds+1, starting at 0) and `||b_t||`.
        pub fn run_paired(
            &self,
            rounds: usize,
            theta0: &[f64],
            malicious: &[usize],
            mut attack_delta: impl FnMut(usize, usize) -> Vec<f64>,
        ) -> (Vec<f64>, Vec<f64>) {
            let benign: Vec<usize> = (0..self.a_mats.len())
                .filter(|k| !malicious.contains(k))
                .collect();
            let mut theta = theta0.to_vec();
            let mut theta_ben = theta0.to_vec();
            let mut deviations = vec![0.0];
            let mut b_norms = Vec::with_capacity(rounds);
            for t in 0..rounds {
                let mut b = vec![0.0; self.dim];
                for (ai, &a) in malicious.iter().enumerate() {
                    let delta = attack_delta(t, ai);
                    linalg::axpy(&mut b, self.weights[a], &delta);
                }
                let g_att = self.benign_aggregate(&theta, &benign);
                linalg::axpy(&mut theta, self.beta, &g_att);
                linalg::axpy(&mut theta, self.beta, &b);

                let g_ben = self.benign_aggregate(&theta_ben, &benign);
                linalg::axpy(&mut theta_ben, self.beta, &g_ben);

                deviations.push(linalg::norm(&linalg::sub(&theta, &theta_ben)));
                b_norms.push(linalg::norm(&b));
            }
            (deviations, b_norms)
        }
    }
}
