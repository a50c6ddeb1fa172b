//! CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3072 pixels.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

const RECORD_BYTES: usize = 3073;
const PIXELS: usize = 3072;

/// Load one or more CIFAR-10 binary batch files into a single pool.
pub fn load_cifar10_bin(paths: &[&Path]) -> Result<Dataset> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let meta = std::fs::metadata(path)?;
        if meta.len() % RECORD_BYTES as u64 != 0 {
            return Err(Error::Load {
                path: path.display().to_string(),
                offset: meta.len(),
                message: format!("file size {} is not a multiple of {RECORD_BYTES}", meta.len()),
            });
        }
        let mut reader = BufReader::new(File::open(path)?);
        let mut record = [0u8; RECORD_BYTES];
        let mut offset = 0u64;
        loop {
            match reader.read_exact(&mut record) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let label = record[0];
            if label > 9 {
                return Err(Error::Load {
                    path: path.display().to_string(),
                    offset,
                    message: format!("label byte {label} out of range 0..=9"),
                });
            }
            labels.push(label);
            inputs.extend(record[1..].iter().map(|&p| f64::from(p) / 255.0));
            offset += RECORD_BYTES as u64;
        }
    }
    Dataset::new(inputs, labels, PIXELS, 10)
}
