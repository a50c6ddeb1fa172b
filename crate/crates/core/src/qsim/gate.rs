use crate::error::{Error, Result};

/// Where a rotation angle comes from when a circuit is executed.
///
/// `Fixed` angles are baked into the template (attack constants), `Param`
/// slots index into the trainable quantum parameter block, and `Input` slots
/// index into the per-sample encoder angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Fixed(f64),
    Param(usize),
    Input(usize),
}

/// A single circuit operation.
///
/// Trainable rotations (`Rx`/`Ry`/`Rz`) use the half-angle convention
/// `R_P(theta) = exp(-i * theta * P / 2)`, which is what the parameter-shift
/// rule assumes. `Phase` is the relative-phase gate `diag(1, e^{i*phi})`.
/// `PhaseOracle` negates the amplitude of every basis state whose bits on
/// `wires` match `marked` (the reflection `I - 2|w><w|` on that register).
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Rx { wire: usize, angle: AngleSource },
    Ry { wire: usize, angle: AngleSource },
    Rz { wire: usize, angle: AngleSource },
    Phase { wire: usize, angle: AngleSource },
    X { wire: usize },
    Z { wire: usize },
    H { wire: usize },
    Cnot { control: usize, target: usize },
    Mcx { controls: Vec<usize>, target: usize },
    Qft { wires: Vec<usize>, inverse: bool },
    PhaseOracle { wires: Vec<usize>, marked: Vec<bool> },
}

impl Gate {
    /// The exponent-form Pauli-X rotation `exp(-i * alpha * X)` used by the
    /// full-angle attack convention. Identical to `Rx(2 * alpha)` in the
    /// half-angle convention, with no global-phase discrepancy.
    pub fn pauli_x_exponent(wire: usize, alpha: f64) -> Gate {
        Gate::Rx {
            wire,
            angle: AngleSource::Fixed(2.0 * alpha),
        }
    }

    /// All wires this gate touches, in declaration order.
    pub fn wires(&self) -> Vec<usize> {
        match self {
            Gate::Rx { wire, .. }
            | Gate::Ry { wire, .. }
            | Gate::Rz { wire, .. }
            | Gate::Phase { wire, .. }
            | Gate::X { wire }
            | Gate::Z { wire }
            | Gate::H { wire } => vec![*wire],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Mcx { controls, target } => {
                let mut w = controls.clone();
                w.push(*target);
                w
            }
            Gate::Qft { wires, .. } => wires.clone(),
            Gate::PhaseOracle { wires, .. } => wires.clone(),
        }
    }

    /// Trainable-parameter slot, if this gate draws from the quantum block.
    pub fn param_slot(&self) -> Option<usize> {
        match self.angle_source() {
            Some(AngleSource::Param(slot)) => Some(slot),
            _ => None,
        }
    }

    /// Encoder slot, if this gate draws from the per-sample input angles.
    pub fn input_slot(&self) -> Option<usize> {
        match self.angle_source() {
            Some(AngleSource::Input(slot)) => Some(slot),
            _ => None,
        }
    }

    pub fn angle_source(&self) -> Option<AngleSource> {
        match self {
            Gate::Rx { angle, .. }
            | Gate::Ry { angle, .. }
            | Gate::Rz { angle, .. }
            | Gate::Phase { angle, .. } => Some(*angle),
            _ => None,
        }
    }

    /// True for single-parameter Pauli rotations, the only gate kinds the
    /// parameter-shift rule supports.
    pub fn is_pauli_rotation(&self) -> bool {
        matches!(self, Gate::Rx { .. } | Gate::Ry { .. } | Gate::Rz { .. })
    }

    /// Diagonal in the computational basis (commutes with every Pauli-Z
    /// observable when appended last).
    pub fn is_diagonal(&self) -> bool {
        matches!(
            self,
            Gate::Rz { .. } | Gate::Phase { .. } | Gate::Z { .. } | Gate::PhaseOracle { .. }
        )
    }

    /// Check wire indices against the register width: in range, distinct,
    /// and structurally sane (e.g. oracle pattern length matches its wires).
    pub fn validate(&self, n_wires: usize) -> Result<()> {
        let wires = self.wires();
        for &w in &wires {
            if w >= n_wires {
                return Err(Error::Circuit(format!(
                    "wire {w} out of range for {n_wires}-wire register"
                )));
            }
        }
        for i in 0..wires.len() {
            for j in (i + 1)..wires.len() {
                if wires[i] == wires[j] {
                    return Err(Error::Circuit(format!(
                        "wire {} listed twice in one gate",
                        wires[i]
                    )));
                }
            }
        }
        match self {
            Gate::Mcx { controls, .. } if controls.is_empty() => Err(Error::Circuit(
                "MCX requires at least one control wire".into(),
            )),
            Gate::Qft { wires, .. } if wires.is_empty() => {
                Err(Error::Circuit("QFT requires at least one wire".into()))
            }
            Gate::PhaseOracle { wires, marked } if wires.len() != marked.len() => {
                Err(Error::Circuit(format!(
                    "phase oracle pattern length {} does not match wire count {}",
                    marked.len(),
                    wires.len()
                )))
            }
            Gate::PhaseOracle { wires, .. } if wires.is_empty() => {
                Err(Error::Circuit("phase oracle requires at least one wire".into()))
            }
            _ => Ok(()),
        }
    }

    /// Resolve the concrete rotation angle for this execution.
    pub fn resolve_angle(&self, params: &[f64], inputs: &[f64]) -> Result<Option<f64>> {
        match self.angle_source() {
            None => Ok(None),
            Some(AngleSource::Fixed(a)) => Ok(Some(a)),
            Some(AngleSource::Param(slot)) => params.get(slot).copied().map(Some).ok_or_else(|| {
                Error::Circuit(format!(
                    "missing quantum parameter for slot {slot} (have {})",
                    params.len()
                ))
            }),
            Some(AngleSource::Input(slot)) => inputs.get(slot).copied().map(Some).ok_or_else(|| {
                Error::Circuit(format!(
                    "missing input angle for slot {slot} (have {})",
                    inputs.len()
                ))
            }),
        }
    }
}
