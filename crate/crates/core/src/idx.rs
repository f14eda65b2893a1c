//! IDX binary image/label ingestion (the MNIST-family container format).
//!
//! Big-endian headers: images carry magic `0x00000803` then count, rows,
//! cols and unsigned bytes; labels carry magic `0x00000801` then count and
//! one byte per label. Pixels are scaled to `[0, 1]` by division by 255 and
//! flattened row-major.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::federation::LabeledDataset;
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn new(inner: R) -> Self {
        Cursor { inner, offset: 0 }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| Error::Parse {
            offset: at,
            detail: format!("truncated while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32_be(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_be_bytes(b))
    }
}

fn open(path: &Path) -> Result<Cursor<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::Parse {
        offset: 0,
        detail: format!("cannot open {}: {e}", path.display()),
    })?;
    Ok(Cursor::new(BufReader::new(file)))
}

fn expect_magic<R: Read>(cur: &mut Cursor<R>, want: u32, what: &str) -> Result<()> {
    let got = cur.read_u32_be("magic")?;
    if got != want {
        return Err(Error::Parse {
            offset: 0,
            detail: format!("{what} magic {got:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

/// Parse an images/labels file pair into a dataset with `K = 10` classes
/// unless the labels say otherwise.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let mut img = open(images_path)?;
    expect_magic(&mut img, IMAGE_MAGIC, "image file")?;
    let count = img.read_u32_be("image count")? as usize;
    let rows = img.read_u32_be("rows")? as usize;
    let cols = img.read_u32_be("cols")? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    img.read_exact(&mut pixels, "pixel data")?;

    let mut lab = open(labels_path)?;
    expect_magic(&mut lab, LABEL_MAGIC, "label file")?;
    let label_count = lab.read_u32_be("label count")? as usize;
    if label_count != count {
        return Err(Error::Parse {
            offset: 4,
            detail: format!("{count} images but {label_count} labels"),
        });
    }
    let mut raw_labels = vec![0u8; count];
    lab.read_exact(&mut raw_labels, "label data")?;

    let data: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().copied().max().unwrap_or(0).max(9) + 1;
    LabeledDataset::new(Tensor::new(vec![count, rows * cols], data)?, labels, class_count)
}
