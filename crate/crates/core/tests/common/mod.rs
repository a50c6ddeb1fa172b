//! Test-only oracles, independent of the simulator's gate-application path.
//!
//! Gates are realized as dense `2^n x 2^n` matrices built entrywise from
//! their textbook definitions (the QFT as the DFT matrix directly), composed
//! by matrix multiplication, and applied by dense matrix-vector products.

#![allow(dead_code)]

use num_complex::Complex64;
use qfl_core::qsim::{CircuitTemplate, Gate, Statevector};

pub type Matrix = Vec<Vec<Complex64>>;

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Complex64::ONE } else { Complex64::ZERO })
                .collect()
        })
        .collect()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![Complex64::ZERO; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == Complex64::ZERO {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn apply_matrix(m: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// max |(M^dagger M - I)_{ij}|
pub fn unitarity_error(m: &Matrix) -> f64 {
    let n = m.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::ZERO;
            for k in 0..n {
                acc += m[k][i].conj() * m[k][j];
            }
            let expected = if i == j { Complex64::ONE } else { Complex64::ZERO };
            worst = worst.max((acc - expected).norm());
        }
    }
    worst
}

fn bit(index: usize, wire: usize, n_wires: usize) -> usize {
    (index >> (n_wires - 1 - wire)) & 1
}

fn single_qubit_embedding(m2: [[Complex64; 2]; 2], wire: usize, n_wires: usize) -> Matrix {
    let dim = 1 << n_wires;
    let mut out = vec![vec![Complex64::ZERO; dim]; dim];
    for j in 0..dim {
        for bit_out in 0..2 {
            let i = if bit_out == 1 {
                j | (1 << (n_wires - 1 - wire))
            } else {
                j & !(1 << (n_wires - 1 - wire))
            };
            out[i][j] += m2[bit_out][bit(j, wire, n_wires)]
                * if true { Complex64::ONE } else { Complex64::ZERO };
        }
    }
    out
}

/// Dense matrix of one gate on the full register, built from definitions.
pub fn gate_matrix(gate: &Gate, n_wires: usize, params: &[f64], inputs: &[f64]) -> Matrix {
    let dim = 1 << n_wires;
    let angle = gate.resolve_angle(params, inputs).unwrap();
    match gate {
        Gate::Rx { wire, .. } => {
            let h = angle.unwrap() / 2.0;
            single_qubit_embedding(
                [
                    [Complex64::new(h.cos(), 0.0), Complex64::new(0.0, -h.sin())],
                    [Complex64::new(0.0, -h.sin()), Complex64::new(h.cos(), 0.0)],
                ],
                *wire,
                n_wires,
            )
        }
        Gate::Ry { wire, .. } => {
            let h = angle.unwrap() / 2.0;
            single_qubit_embedding(
                [
                    [Complex64::new(h.cos(), 0.0), Complex64::new(-h.sin(), 0.0)],
                    [Complex64::new(h.sin(), 0.0), Complex64::new(h.cos(), 0.0)],
                ],
                *wire,
                n_wires,
            )
        }
        Gate::Rz { wire, .. } => {
            let h = angle.unwrap() / 2.0;
            single_qubit_embedding(
                [
                    [Complex64::from_polar(1.0, -h), Complex64::ZERO],
                    [Complex64::ZERO, Complex64::from_polar(1.0, h)],
                ],
                *wire,
                n_wires,
            )
        }
        Gate::Phase { wire, .. } => single_qubit_embedding(
            [
                [Complex64::ONE, Complex64::ZERO],
                [Complex64::ZERO, Complex64::from_polar(1.0, angle.unwrap())],
            ],
            *wire,
            n_wires,
        ),
        Gate::X { wire } => single_qubit_embedding(
            [
                [Complex64::ZERO, Complex64::ONE],
                [Complex64::ONE, Complex64::ZERO],
            ],
            *wire,
            n_wires,
        ),
        Gate::Z { wire } => single_qubit_embedding(
            [
                [Complex64::ONE, Complex64::ZERO],
                [Complex64::ZERO, -Complex64::ONE],
            ],
            *wire,
            n_wires,
        ),
        Gate::H { wire } => {
            let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            single_qubit_embedding([[s, s], [s, -s]], *wire, n_wires)
        }
        Gate::Cnot { control, target } => {
            let mut out = vec![vec![Complex64::ZERO; dim]; dim];
            for j in 0..dim {
                let i = if bit(j, *control, n_wires) == 1 {
                    j ^ (1 << (n_wires - 1 - target))
                } else {
                    j
                };
                out[i][j] = Complex64::ONE;
            }
            out
        }
        Gate::Mcx { controls, target } => {
            let mut out = vec![vec![Complex64::ZERO; dim]; dim];
            for j in 0..dim {
                let all_set = controls.iter().all(|&c| bit(j, c, n_wires) == 1);
                let i = if all_set {
                    j ^ (1 << (n_wires - 1 - target))
                } else {
                    j
                };
                out[i][j] = Complex64::ONE;
            }
            out
        }
        Gate::PhaseOracle { wires, marked } => {
            let mut out = vec![vec![Complex64::ZERO; dim]; dim];
            for j in 0..dim {
                let hit = wires
                    .iter()
                    .zip(marked)
                    .all(|(&w, &m)| (bit(j, w, n_wires) == 1) == m);
                out[j][j] = if hit { -Complex64::ONE } else { Complex64::ONE };
            }
            out
        }
        Gate::Qft { wires, inverse } => {
            // the DFT matrix on the sub-register, independent of any gate
            // decomposition: out[a][b] = omega^(a*b) / sqrt(N)
            let m = wires.len();
            let sub = 1usize << m;
            let sign = if *inverse { -1.0 } else { 1.0 };
            let scale = 1.0 / (sub as f64).sqrt();
            let mut out = vec![vec![Complex64::ZERO; dim]; dim];
            for j in 0..dim {
                // sub-register value of j, wires[0] most significant
                let mut b = 0usize;
                for (pos, &w) in wires.iter().enumerate() {
                    b |= bit(j, w, n_wires) << (m - 1 - pos);
                }
                for a in 0..sub {
                    // rebuild the full index with sub-register value a
                    let mut i = j;
                    for (pos, &w) in wires.iter().enumerate() {
                        let target_bit = (a >> (m - 1 - pos)) & 1;
                        let mask = 1 << (n_wires - 1 - w);
                        if target_bit == 1 {
                            i |= mask;
                        } else {
                            i &= !mask;
                        }
                    }
                    let phase =
                        sign * 2.0 * std::f64::consts::PI * (a as f64) * (b as f64) / sub as f64;
                    out[i][j] = Complex64::from_polar(scale, phase);
                }
            }
            out
        }
    }
}

/// Dense unitary of a whole template with resolved parameters.
pub fn circuit_unitary(circuit: &CircuitTemplate, params: &[f64], inputs: &[f64]) -> Matrix {
    let mut u = identity(1 << circuit.n_wires());
    for gate in circuit.gates() {
        let g = gate_matrix(gate, circuit.n_wires(), params, inputs);
        u = matmul(&g, &u);
    }
    u
}

/// Run a circuit via the dense oracle from `|0...0>`.
pub fn run_dense(circuit: &CircuitTemplate, params: &[f64], inputs: &[f64]) -> Vec<Complex64> {
    let u = circuit_unitary(circuit, params, inputs);
    let mut v = vec![Complex64::ZERO; u.len()];
    v[0] = Complex64::ONE;
    apply_matrix(&u, &v)
}

pub fn max_amp_distance(a: &Statevector, b: &[Complex64]) -> f64 {
    a.amps()
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
