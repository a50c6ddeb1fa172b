//! Dense statevector simulation of parameterized quantum circuits.
//!
//! States are full complex amplitude vectors over `2^n` basis states with
//! wire 0 as the most significant bit of the basis index. Expectations are
//! exact; shot sampling is opt-in. Gradients of Pauli-rotation parameters
//! use the parameter-shift rule.

mod circuit;
mod gate;
mod gradient;
mod measure;
mod sampling;

pub use circuit::{CircuitTemplate, InsertionPoint};
pub use gate::{AngleSource, Gate};
pub use gradient::{input_shift_jacobian, parameter_shift_jacobian, shift_jacobian_with};
pub use measure::Measurement;
pub use sampling::sample_bitstrings;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum register width for the dense backend.
pub const MAX_WIRES: usize = 16;

/// Pure state of an `n_wires` register: `2^n_wires` complex amplitudes,
/// wire 0 = most significant bit of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_wires: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// `|0...0>` on `n_wires` wires. 1 <= n_wires <= 16.
    pub fn new(n_wires: usize) -> Result<Self> {
        if n_wires == 0 || n_wires > MAX_WIRES {
            return Err(Error::Config(format!(
                "n_wires must be in 1..={MAX_WIRES}, got {n_wires}"
            )));
        }
        let mut amps = vec![Complex64::ZERO; 1 << n_wires];
        amps[0] = Complex64::ONE;
        Ok(Statevector { n_wires, amps })
    }

    /// Build from raw amplitudes; length must be a power of two and the
    /// vector must be normalized.
    pub fn from_amps(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() || len < 2 || len > (1 << MAX_WIRES) {
            return Err(Error::Config(format!(
                "amplitude vector length {len} is not a supported power of two"
            )));
        }
        let n_wires = len.trailing_zeros() as usize;
        let state = Statevector { n_wires, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Config(format!(
                "amplitude vector is not normalized: |psi|^2 = {norm}"
            )));
        }
        Ok(state)
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of the computational basis state with index `basis`.
    pub fn probability(&self, basis: usize) -> f64 {
        self.amps[basis].norm_sqr()
    }

    #[inline]
    fn bit(&self, index: usize, wire: usize) -> bool {
        (index >> (self.n_wires - 1 - wire)) & 1 == 1
    }

    #[inline]
    fn stride(&self, wire: usize) -> usize {
        1 << (self.n_wires - 1 - wire)
    }

    /// Apply a gate whose angles are all fixed. Gates with `Param`/`Input`
    /// sources need [`Statevector::apply_resolved`].
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        self.apply_resolved(gate, &[], &[])
    }

    /// Apply a gate, resolving `Param`/`Input` angle sources from the given
    /// slices.
    pub fn apply_resolved(&mut self, gate: &Gate, params: &[f64], inputs: &[f64]) -> Result<()> {
        gate.validate(self.n_wires)?;
        let angle = gate.resolve_angle(params, inputs)?;
        match gate {
            Gate::Rx { wire, .. } => {
                let half = angle.unwrap() / 2.0;
                let (c, s) = (half.cos(), half.sin());
                self.apply_1q(
                    *wire,
                    [
                        [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                        [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
                    ],
                );
            }
            Gate::Ry { wire, .. } => {
                let half = angle.unwrap() / 2.0;
                let (c, s) = (half.cos(), half.sin());
                self.apply_1q(
                    *wire,
                    [
                        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
                    ],
                );
            }
            Gate::Rz { wire, .. } => {
                let half = angle.unwrap() / 2.0;
                let phase_lo = Complex64::from_polar(1.0, -half);
                let phase_hi = Complex64::from_polar(1.0, half);
                self.apply_diag_1q(*wire, phase_lo, phase_hi);
            }
            Gate::Phase { wire, .. } => {
                let phase = Complex64::from_polar(1.0, angle.unwrap());
                self.apply_diag_1q(*wire, Complex64::ONE, phase);
            }
            Gate::X { wire } => {
                let stride = self.stride(*wire);
                let len = self.amps.len();
                let mut base = 0;
                while base < len {
                    for i in base..base + stride {
                        self.amps.swap(i, i + stride);
                    }
                    base += 2 * stride;
                }
            }
            Gate::Z { wire } => {
                self.apply_diag_1q(*wire, Complex64::ONE, -Complex64::ONE);
            }
            Gate::H { wire } => {
                let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
                let h = Complex64::new(inv_sqrt2, 0.0);
                self.apply_1q(*wire, [[h, h], [h, -h]]);
            }
            Gate::Cnot { control, target } => {
                let t_stride = self.stride(*target);
                for i in 0..self.amps.len() {
                    if self.bit(i, *control) && !self.bit(i, *target) {
                        self.amps.swap(i, i + t_stride);
                    }
                }
            }
            Gate::Mcx { controls, target } => {
                let t_stride = self.stride(*target);
                for i in 0..self.amps.len() {
                    if !self.bit(i, *target) && controls.iter().all(|&c| self.bit(i, c)) {
                        self.amps.swap(i, i + t_stride);
                    }
                }
            }
            Gate::Qft { wires, inverse } => {
                self.apply_qft(wires, *inverse);
            }
            Gate::PhaseOracle { wires, marked } => {
                for i in 0..self.amps.len() {
                    let hit = wires
                        .iter()
                        .zip(marked.iter())
                        .all(|(&w, &m)| self.bit(i, w) == m);
                    if hit {
                        self.amps[i] = -self.amps[i];
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_1q(&mut self, wire: usize, m: [[Complex64; 2]; 2]) {
        let stride = self.stride(wire);
        let len = self.amps.len();
        let mut base = 0;
        while base < len {
            for i in base..base + stride {
                let j = i + stride;
                let a = self.amps[i];
                let b = self.amps[j];
                self.amps[i] = m[0][0] * a + m[0][1] * b;
                self.amps[j] = m[1][0] * a + m[1][1] * b;
            }
            base += 2 * stride;
        }
    }

    fn apply_diag_1q(&mut self, wire: usize, lo: Complex64, hi: Complex64) {
        for i in 0..self.amps.len() {
            if self.bit(i, wire) {
                self.amps[i] *= hi;
            } else {
                self.amps[i] *= lo;
            }
        }
    }

    /// Phase `e^{i*lambda}` on basis states where both wires read 1. Used
    /// internally by the QFT decomposition; symmetric in its two wires.
    fn apply_cphase(&mut self, a: usize, b: usize, lambda: f64) {
        let phase = Complex64::from_polar(1.0, lambda);
        for i in 0..self.amps.len() {
            if self.bit(i, a) && self.bit(i, b) {
                self.amps[i] *= phase;
            }
        }
    }

    fn swap_wires(&mut self, a: usize, b: usize) {
        let sa = self.stride(a);
        let sb = self.stride(b);
        for i in 0..self.amps.len() {
            if self.bit(i, a) && !self.bit(i, b) {
                self.amps.swap(i, i - sa + sb);
            }
        }
    }

    /// Gate-level QFT over `wires` (wires[0] is the most significant digit
    /// of the transformed register): H plus controlled phases, then the
    /// bit-reversal swaps. `inverse` runs the adjoint.
    fn apply_qft(&mut self, wires: &[usize], inverse: bool) {
        let m = wires.len();
        if !inverse {
            for i in 0..m {
                self.apply_1q(
                    wires[i],
                    [
                        [
                            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                        ],
                        [
                            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                            Complex64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
                        ],
                    ],
                );
                for j in (i + 1)..m {
                    let lambda = std::f64::consts::PI / (1u64 << (j - i)) as f64;
                    self.apply_cphase(wires[j], wires[i], lambda);
                }
            }
            for i in 0..m / 2 {
                self.swap_wires(wires[i], wires[m - 1 - i]);
            }
        } else {
            for i in 0..m / 2 {
                self.swap_wires(wires[i], wires[m - 1 - i]);
            }
            for i in (0..m).rev() {
                for j in ((i + 1)..m).rev() {
                    let lambda = -std::f64::consts::PI / (1u64 << (j - i)) as f64;
                    self.apply_cphase(wires[j], wires[i], lambda);
                }
                self.apply_1q(
                    wires[i],
                    [
                        [
                            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                        ],
                        [
                            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                            Complex64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
                        ],
                    ],
                );
            }
        }
    }

    /// Exact expectation of a tensor product of Pauli-Z factors.
    pub fn expectation_z(&self, obs: &ZObservable) -> Result<f64> {
        for &w in &obs.wires {
            if w >= self.n_wires {
                return Err(Error::Circuit(format!(
                    "observable wire {w} out of range for {}-wire register",
                    self.n_wires
                )));
            }
        }
        let mut acc = 0.0;
        for (i, amp) in self.amps.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let ones = obs.wires.iter().filter(|&&w| self.bit(i, w)).count();
            let sign = if ones % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * p;
        }
        Ok(acc)
    }
}

/// Tensor product of single-wire Pauli-Z factors; the default measurement
/// is the singleton `Z_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZObservable {
    wires: Vec<usize>,
}

impl ZObservable {
    pub fn single(wire: usize) -> Self {
        ZObservable { wires: vec![wire] }
    }

    pub fn product(wires: Vec<usize>) -> Self {
        ZObservable { wires }
    }

    pub fn wires(&self) -> &[usize] {
        &self.wires
    }
}
