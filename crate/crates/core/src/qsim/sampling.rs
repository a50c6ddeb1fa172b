use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::qsim::Statevector;

/// Draw `shots` computational-basis samples from `|amps|^2`.
///
/// Keys are bit-strings with wire 0 first (matching the basis-index bit
/// order). Counts always sum to `shots`; results are deterministic for a
/// seeded stream.
pub fn sample_bitstrings(
    state: &Statevector,
    shots: u64,
    rng: &mut impl Rng,
) -> Result<BTreeMap<String, u64>> {
    if shots == 0 {
        return Err(Error::Config("shots must be >= 1".into()));
    }
    let mut cumulative = Vec::with_capacity(state.amps().len());
    let mut acc = 0.0;
    for amp in state.amps() {
        acc += amp.norm_sqr();
        cumulative.push(acc);
    }
    let total = acc;
    let n = state.n_wires();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for _ in 0..shots {
        let u: f64 = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c < u).min(cumulative.len() - 1);
        let key: String = (0..n)
            .map(|w| {
                if (idx >> (n - 1 - w)) & 1 == 1 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(counts)
}
