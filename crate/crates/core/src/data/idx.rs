//! MNIST IDX binary format: big-endian headers, u8 payloads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Offset<'a> {
    path: &'a Path,
    pos: u64,
}

impl<'a> Offset<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Load {
            path: self.path.display().to_string(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn read_u32(&mut self, reader: &mut impl Read) -> Result<u32> {
        let mut buf = [0u8; 4];
        reader
            .read_exact(&mut buf)
            .map_err(|e| self.err(format!("truncated header: {e}")))?;
        self.pos += 4;
        Ok(u32::from_be_bytes(buf))
    }

    fn read_bytes(&mut self, reader: &mut impl Read, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        reader
            .read_exact(&mut buf)
            .map_err(|e| self.err(format!("truncated payload: {e}")))?;
        self.pos += n as u64;
        Ok(buf)
    }
}

/// Load an MNIST-layout image/label file pair. Pixels are scaled to [0, 1].
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img_off = Offset {
        path: images_path,
        pos: 0,
    };
    let mut reader = BufReader::new(File::open(images_path)?);
    let magic = img_off.read_u32(&mut reader)?;
    if magic != IMAGES_MAGIC {
        return Err(img_off.err(format!(
            "bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = img_off.read_u32(&mut reader)? as usize;
    let rows = img_off.read_u32(&mut reader)? as usize;
    let cols = img_off.read_u32(&mut reader)? as usize;
    let pixels = img_off.read_bytes(&mut reader, count * rows * cols)?;

    let mut lbl_off = Offset {
        path: labels_path,
        pos: 0,
    };
    let mut reader = BufReader::new(File::open(labels_path)?);
    let magic = lbl_off.read_u32(&mut reader)?;
    if magic != LABELS_MAGIC {
        return Err(lbl_off.err(format!(
            "bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = lbl_off.read_u32(&mut reader)? as usize;
    if label_count != count {
        return Err(lbl_off.err(format!(
            "label count {label_count} does not match image count {count}"
        )));
    }
    let labels = lbl_off.read_bytes(&mut reader, label_count)?;

    let inputs: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Dataset::new(inputs, labels, rows * cols, 10)
}

/// Write images in IDX layout (for loader round-trip checks and synthetic
/// pool export). `pixels` is row-major u8, `count * rows * cols` long.
pub fn write_idx_images(
    path: &Path,
    pixels: &[u8],
    count: usize,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if pixels.len() != count * rows * cols {
        return Err(Error::Shape(format!(
            "pixel buffer length {} does not match {count}x{rows}x{cols}",
            pixels.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(count as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    w.write_all(pixels)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    Ok(())
}
