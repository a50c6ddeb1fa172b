//! Datasets and loaders: MNIST IDX, CIFAR-10 binary, and synthetic pools.

mod cifar;
mod idx;
mod synthetic;

pub use cifar::load_cifar10_bin;
pub use idx::{load_mnist_idx, write_idx_images, write_idx_labels};
pub use synthetic::{blob_to_pixel, synthetic_blobs};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// A labeled pool of flat feature vectors. Pixel data is scaled to [0, 1]
/// on load; labels are validated against `n_classes`.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<u8>,
    input_dim: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<u8>, input_dim: usize, n_classes: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Data("input_dim must be positive".into()));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(Error::Shape(format!(
                "inputs length {} does not match {} samples x dim {}",
                inputs.len(),
                labels.len(),
                input_dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            input_dim,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Copy out the rows at `indices`.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            inputs,
            labels,
            input_dim: self.input_dim,
            n_classes: self.n_classes,
        }
    }

    /// Seeded random subset of at most `n` samples.
    pub fn subset(&self, n: usize, rng: &mut impl Rng) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        indices.shuffle(rng);
        indices.truncate(n);
        self.select(&indices)
    }

    /// Per-class sample counts, length `n_classes`.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.n_classes];
        for &l in &self.labels {
            hist[l as usize] += 1;
        }
        hist
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        Batch {
            inputs,
            labels,
            input_dim: self.input_dim,
        }
    }

    /// Box-filter downscale of square images to `side x side`. Used for the
    /// desk-scale 8x8 MNIST profile.
    pub fn downscale_square(&self, side: usize) -> Result<Dataset> {
        let src_side = (self.input_dim as f64).sqrt() as usize;
        if src_side * src_side != self.input_dim {
            return Err(Error::Shape(format!(
                "input_dim {} is not a square image",
                self.input_dim
            )));
        }
        if side == 0 || side > src_side {
            return Err(Error::Config(format!(
                "cannot downscale {src_side}x{src_side} to {side}x{side}"
            )));
        }
        let mut out = Vec::with_capacity(self.len() * side * side);
        for i in 0..self.len() {
            let img = self.input(i);
            for oy in 0..side {
                let y0 = oy * src_side / side;
                let y1 = ((oy + 1) * src_side).div_ceil(side);
                for ox in 0..side {
                    let x0 = ox * src_side / side;
                    let x1 = ((ox + 1) * src_side).div_ceil(side);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += img[y * src_side + x];
                        }
                    }
                    out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        Dataset::new(out, self.labels.clone(), side * side, self.n_classes)
    }
}

/// One mini-batch: row-major inputs plus labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<u8>,
    pub input_dim: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }
}
