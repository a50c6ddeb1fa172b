use crate::error::Result;
use crate::qsim::{sample_bitstrings, Statevector, ZObservable};
use crate::rng::{stream, tags};

/// How Z-expectations are read out: exactly from the amplitudes (default)
/// or estimated from a finite number of shots.
///
/// Sampled mode derives its stream from the run seed and a fingerprint of
/// the state, so a (config, seed) pair still reproduces every byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measurement {
    Exact,
    Sampled { shots: u64, seed: u64 },
}

impl Measurement {
    /// All requested Z-product expectations from a single readout pass.
    pub fn features(&self, state: &Statevector, observables: &[ZObservable]) -> Result<Vec<f64>> {
        match *self {
            Measurement::Exact => observables
                .iter()
                .map(|obs| state.expectation_z(obs))
                .collect(),
            Measurement::Sampled { shots, seed } => {
                let mut rng = stream(seed, &[tags::SAMPLING, fingerprint(state)]);
                let counts = sample_bitstrings(state, shots, &mut rng)?;
                let n = state.n_wires();
                let mut features = vec![0.0; observables.len()];
                for (bits, count) in &counts {
                    let bytes = bits.as_bytes();
                    for (j, obs) in observables.iter().enumerate() {
                        let ones = obs.wires().iter().filter(|&&w| bytes[w] == b'1').count();
                        let sign = if ones % 2 == 0 { 1.0 } else { -1.0 };
                        features[j] += sign * *count as f64;
                    }
                }
                let _ = n;
                for f in &mut features {
                    *f /= shots as f64;
                }
                Ok(features)
            }
        }
    }
}

fn fingerprint(state: &Statevector) -> u64 {
    // FNV-1a over the amplitude bit patterns
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for amp in state.amps() {
        for part in [amp.re, amp.im] {
            for byte in part.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
    }
    h
}
