use std::io::Write;
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

/// One label byte followed by 32·32·3 channel-planar pixel bytes.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

/// Loads the five training batches and the test batch from `dir`.
/// The test split is normalized with the training statistics.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for name in TRAIN_FILES {
        let (i, l) = read_cifar_batch(&dir.join(name))?;
        images.extend(i);
        labels.extend(l);
    }
    let train = Dataset::new(images, labels, 10, Split::Train)?;
    let (i, l) = read_cifar_batch(&dir.join(TEST_FILE))?;
    let test = Dataset::new(i, l, 10, Split::Test)?.with_stats(train.mean.clone(), train.std.clone());
    Ok((train, test))
}

pub fn read_cifar_batch(path: &Path) -> Result<(Vec<Image>, Vec<usize>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Ingestion {
        file: path.to_path_buf(),
        offset: 0,
        reason: e.to_string(),
    })?;
    let whole = bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES;
    if whole != bytes.len() || bytes.is_empty() {
        return Err(Error::Ingestion {
            file: path.to_path_buf(),
            offset: whole as u64,
            reason: format!(
                "file is {} bytes, not a positive multiple of the {CIFAR_RECORD_BYTES}-byte record",
                bytes.len()
            ),
        });
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD_BYTES);
    let mut labels = Vec::with_capacity(images.capacity());
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::Ingestion {
                file: path.to_path_buf(),
                offset: (r * CIFAR_RECORD_BYTES) as u64,
                reason: format!("label byte {label} is not a CIFAR-10 class"),
            });
        }
        labels.push(label);
        images.push(Image::from_planar(32, 32, 3, &rec[1..])?);
    }
    Ok((images, labels))
}

/// Serializes records in the binary batch format.
pub fn write_cifar_batch<W: Write>(mut out: W, images: &[Image], labels: &[usize]) -> Result<()> {
    for (img, &label) in images.iter().zip(labels) {
        if (img.width(), img.height(), img.channels()) != (32, 32, 3) || label > 255 {
            return Err(Error::InvalidInput("CIFAR records are 32×32×3 with a byte label".into()));
        }
        let io = |e| Error::io("<cifar batch>", e);
        out.write_all(&[label as u8]).map_err(io)?;
        out.write_all(&img.to_planar()).map_err(io)?;
    }
    Ok(())
}
