//! Surface S1: circuit-level attacks, the round-level poisoning gate, and
//! loss amplification.
//!
//! Four attack families splice fixed gate blocks into the clean template:
//! a phase-oracle reflection on a marked basis state, tensor-product Pauli-X
//! rotations, a periodically applied bit flip, and a single-wire phase gate.
//! Diagonal blocks are inert when appended after the last non-diagonal
//! layer, so the defaults insert them before the final entangling block
//! where later layers turn the phase into a measurable feature shift.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ModelArchitecture;
use crate::qsim::{CircuitTemplate, Gate, InsertionPoint};
use crate::rng::{stream, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    None,
    Grover,
    Pauli,
    BitFlip,
    SignFlip,
}

impl AttackKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackKind::None),
            "grover" => Ok(AttackKind::Grover),
            "pauli" => Ok(AttackKind::Pauli),
            "bitflip" => Ok(AttackKind::BitFlip),
            "signflip" => Ok(AttackKind::SignFlip),
            other => Err(Error::Config(format!("unknown attack kind '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Grover => "grover",
            AttackKind::Pauli => "pauli",
            AttackKind::BitFlip => "bitflip",
            AttackKind::SignFlip => "signflip",
        }
    }
}

/// All attack constants. Defaults target every data wire with moderate
/// angles; none of the constants are prescribed by theory, they are knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Marked bit-string over the data wires (Grover).
    pub omega: Vec<bool>,
    /// Wire subset J for the Pauli rotations.
    pub wires: Vec<usize>,
    /// Rotation angles alpha_j (radians, full-angle convention), one per
    /// wire in `wires`.
    pub alphas: Vec<f64>,
    /// Bit-flip period p in rounds.
    pub period: usize,
    /// Bit-flip target wire r.
    pub target_wire: usize,
    /// Sign-flip wire s.
    pub sign_wire: usize,
    /// Sign-flip phase phi (radians).
    pub phase: f64,
    /// Round-level poisoning probability rho.
    pub poison_prob: f64,
    /// Loss amplification lambda on poisoned rounds.
    pub loss_scale: f64,
    pub insertion: InsertionPoint,
    /// Realize the Grover oracle through the MCX-plus-ancilla construction
    /// instead of the direct diagonal gate.
    pub use_ancilla_oracle: bool,
}

impl AttackConfig {
    /// Defaults for a given attack kind and architecture: omega all-ones,
    /// J = all data wires, alpha_j = pi/4, p = 3, r = s = 0, phi = pi,
    /// lambda = 2. Diagonal attacks insert before the final block; the bit
    /// flip appends post-circuit where its effect is exact.
    pub fn defaults_for(kind: AttackKind, arch: &ModelArchitecture) -> Self {
        let n = arch.n_data_wires;
        AttackConfig {
            kind,
            omega: vec![true; n],
            wires: (0..n).collect(),
            alphas: vec![FRAC_PI_4; n],
            period: 3,
            target_wire: 0,
            sign_wire: 0,
            phase: PI,
            poison_prob: 0.9,
            loss_scale: 2.0,
            insertion: match kind {
                AttackKind::BitFlip => InsertionPoint::PostCircuit,
                _ => InsertionPoint::BeforeFinalBlock,
            },
            use_ancilla_oracle: false,
        }
    }

    pub fn none() -> Self {
        AttackConfig {
            kind: AttackKind::None,
            omega: Vec::new(),
            wires: Vec::new(),
            alphas: Vec::new(),
            period: 3,
            target_wire: 0,
            sign_wire: 0,
            phase: PI,
            poison_prob: 0.0,
            loss_scale: 1.0,
            insertion: InsertionPoint::BeforeFinalBlock,
            use_ancilla_oracle: false,
        }
    }

    pub fn validate(&self, arch: &ModelArchitecture) -> Result<()> {
        let n = arch.n_data_wires;
        if !(0.0..=1.0).contains(&self.poison_prob) {
            return Err(Error::Config(format!(
                "poison probability must be in [0,1], got {}",
                self.poison_prob
            )));
        }
        if self.loss_scale < 1.0 {
            return Err(Error::Config(format!(
                "loss scale must be >= 1, got {}",
                self.loss_scale
            )));
        }
        match self.kind {
            AttackKind::None => Ok(()),
            AttackKind::Grover => {
                if self.omega.len() != n {
                    return Err(Error::Config(format!(
                        "omega length {} does not match {n} data wires",
                        self.omega.len()
                    )));
                }
                Ok(())
            }
            AttackKind::Pauli => {
                if self.wires.len() != self.alphas.len() {
                    return Err(Error::Config(format!(
                        "wire set size {} does not match angle count {}",
                        self.wires.len(),
                        self.alphas.len()
                    )));
                }
                if let Some(&w) = self.wires.iter().find(|&&w| w >= n) {
                    return Err(Error::Config(format!("attack wire {w} is not a data wire")));
                }
                Ok(())
            }
            AttackKind::BitFlip => {
                if self.period == 0 {
                    return Err(Error::Config("bit-flip period must be >= 1".into()));
                }
                if self.target_wire >= n {
                    return Err(Error::Config(format!(
                        "bit-flip target {} is not a data wire",
                        self.target_wire
                    )));
                }
                Ok(())
            }
            AttackKind::SignFlip => {
                if self.sign_wire >= n {
                    return Err(Error::Config(format!(
                        "sign-flip wire {} is not a data wire",
                        self.sign_wire
                    )));
                }
                Ok(())
            }
        }
    }

    /// The gate block this attack splices in at round `round_t`. Empty for
    /// inactive rounds (bit flip off-period) and for `None`.
    pub fn gate_block(&self, arch: &ModelArchitecture, round_t: usize) -> Vec<Gate> {
        match self.kind {
            AttackKind::None => Vec::new(),
            AttackKind::Grover => {
                let data_wires: Vec<usize> = (0..arch.n_data_wires).collect();
                if self.use_ancilla_oracle {
                    grover_oracle_via_ancilla(&self.omega, &data_wires, arch.n_data_wires)
                        .unwrap_or_default()
                } else {
                    vec![Gate::PhaseOracle {
                        wires: data_wires,
                        marked: self.omega.clone(),
                    }]
                }
            }
            AttackKind::Pauli => self
                .wires
                .iter()
                .zip(&self.alphas)
                .map(|(&w, &a)| Gate::pauli_x_exponent(w, a))
                .collect(),
            AttackKind::BitFlip => {
                if round_t % self.period == 0 {
                    vec![Gate::X {
                        wire: self.target_wire,
                    }]
                } else {
                    Vec::new()
                }
            }
            AttackKind::SignFlip => vec![Gate::Phase {
                wire: self.sign_wire,
                angle: crate::qsim::AngleSource::Fixed(self.phase),
            }],
        }
    }
}

/// Splice the attack block for `round_t` into the clean template. With
/// `kind = None` (or an off-period bit flip) the clean template comes back
/// unchanged.
pub fn build_attack_circuit(
    clean: &CircuitTemplate,
    cfg: &AttackConfig,
    arch: &ModelArchitecture,
    round_t: usize,
) -> Result<CircuitTemplate> {
    cfg.validate(arch)?;
    let block = cfg.gate_block(arch, round_t);
    if block.is_empty() {
        return Ok(clean.clone());
    }
    clean.with_block_inserted(cfg.insertion, block)
}

/// The marked-state reflection `I - 2|omega><omega|` on the data register,
/// realized with phase kickback: prepare the ancilla in `|->` (X then H),
/// map `|omega>` to all-ones with X gates, apply MCX onto the ancilla, and
/// uncompute. Equals the direct diagonal oracle up to global phase, with
/// the ancilla returned to its initial state.
pub fn grover_oracle_via_ancilla(
    omega: &[bool],
    data_wires: &[usize],
    ancilla: usize,
) -> Result<Vec<Gate>> {
    if omega.len() != data_wires.len() {
        return Err(Error::Config(format!(
            "omega length {} does not match data wire count {}",
            omega.len(),
            data_wires.len()
        )));
    }
    let mut gates = Vec::new();
    gates.push(Gate::X { wire: ancilla });
    gates.push(Gate::H { wire: ancilla });
    for (&w, &bit) in data_wires.iter().zip(omega) {
        if !bit {
            gates.push(Gate::X { wire: w });
        }
    }
    gates.push(Gate::Mcx {
        controls: data_wires.to_vec(),
        target: ancilla,
    });
    for (&w, &bit) in data_wires.iter().zip(omega) {
        if !bit {
            gates.push(Gate::X { wire: w });
        }
    }
    gates.push(Gate::H { wire: ancilla });
    gates.push(Gate::X { wire: ancilla });
    Ok(gates)
}

/// Round-level poisoning switch: one Bernoulli(rho) draw per
/// (seed, client, round), fixed for the whole round.
pub fn poison_round(seed: u64, client: usize, round_t: usize, rho: f64) -> bool {
    if rho <= 0.0 {
        return false;
    }
    if rho >= 1.0 {
        return true;
    }
    let mut rng = stream(seed, &[tags::ATTACK, client as u64, round_t as u64]);
    rng.random::<f64>() < rho
}

/// Loss amplification: 1 on clean rounds, lambda on poisoned rounds.
pub fn effective_loss_scale(poisoned: bool, lambda: f64) -> f64 {
    if poisoned {
        lambda
    } else {
        1.0
    }
}
