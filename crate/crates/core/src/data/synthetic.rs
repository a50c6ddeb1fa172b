//! Synthetic Gaussian-blob pools for desk-scale experiments and oracles.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Unit-variance Gaussian clusters, one per class, centered at
/// `separation * e_{c mod dim}`. At large separation a linear classifier is
/// essentially Bayes-optimal, which makes these pools useful oracles.
///
/// Values are affinely rescaled into the pixel range [0, 1] (raw value `v`
/// maps to `(v + 3) / (separation + 6)`, clamped); the map is fixed by the
/// separation alone, so the cluster geometry is preserved.
pub fn synthetic_blobs(
    n_classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::Config("blob dimension must be >= 1".into()));
    }
    if n_classes == 0 || n_classes > 255 {
        return Err(Error::Config("blob class count must be in 1..=255".into()));
    }
    if separation < 0.0 {
        return Err(Error::Config("blob separation must be >= 0".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut inputs = Vec::with_capacity(n_classes * n_per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * n_per_class);
    for c in 0..n_classes {
        let axis = c % dim;
        for _ in 0..n_per_class {
            for d in 0..dim {
                let mean = if d == axis { separation } else { 0.0 };
                inputs.push(blob_to_pixel(mean + normal.sample(rng), separation));
            }
            labels.push(c as u8);
        }
    }
    Dataset::new(inputs, labels, dim, n_classes)
}

/// The fixed raw-to-pixel map used by `synthetic_blobs`.
pub fn blob_to_pixel(raw: f64, separation: f64) -> f64 {
    ((raw + 3.0) / (separation + 6.0)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Nearest-true-centroid decision rule; linear for equal covariances.
    /// Centers go through the same raw-to-pixel map as the data.
    fn centroid_accuracy(ds: &Dataset, separation: f64) -> f64 {
        let mut correct = 0usize;
        for i in 0..ds.len() {
            let x = ds.input(i);
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..ds.n_classes() {
                let axis = c % ds.input_dim();
                let dist: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(d, &v)| {
                        let mean =
                            blob_to_pixel(if d == axis { separation } else { 0.0 }, separation);
                        (v - mean) * (v - mean)
                    })
                    .sum();
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            if best.1 == ds.label(i) as usize {
                correct += 1;
            }
        }
        correct as f64 / ds.len() as f64
    }

    #[test]
    fn wide_separation_is_linearly_separable() {
        let ds = synthetic_blobs(2, 200, 4, 10.0, &mut stream(5, &[1])).unwrap();
        assert!(centroid_accuracy(&ds, 10.0) >= 0.99);
    }

    #[test]
    fn zero_separation_is_chance_level() {
        let ds = synthetic_blobs(4, 500, 4, 0.0, &mut stream(5, &[2])).unwrap();
        let acc = centroid_accuracy(&ds, 0.0);
        assert!((acc - 0.25).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn fixed_seed_reproduces_pool() {
        let a = synthetic_blobs(3, 10, 5, 2.0, &mut stream(9, &[3])).unwrap();
        let b = synthetic_blobs(3, 10, 5, 2.0, &mut stream(9, &[3])).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.input(7), b.input(7));
    }
}
