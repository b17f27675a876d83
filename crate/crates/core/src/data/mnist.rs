use std::io::Write;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, WriteBytesExt};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Loads `train-*` and `t10k-*` IDX files (uncompressed) from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let load = |prefix: &str, split| -> Result<Dataset> {
        let images = read_idx_images(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
        let label_path = dir.join(format!("{prefix}-labels-idx1-ubyte"));
        let labels = read_idx_labels(&label_path)?;
        if images.len() != labels.len() {
            return Err(Error::Ingestion {
                file: label_path,
                offset: 4,
                reason: format!("{} labels for {} images", labels.len(), images.len()),
            });
        }
        Dataset::new(images, labels, 10, split)
    };
    let train = load("train", Split::Train)?;
    let test = load("t10k", Split::Test)?.with_stats(train.mean.clone(), train.std.clone());
    Ok((train, test))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Ingestion {
        file: path.to_path_buf(),
        offset: 0,
        reason: e.to_string(),
    })
}

fn header(path: &Path, bytes: &[u8], magic: u32, words: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 * words {
        return Err(Error::Ingestion {
            file: path.to_path_buf(),
            offset: bytes.len() as u64,
            reason: "truncated IDX header".into(),
        });
    }
    let found = BigEndian::read_u32(&bytes[0..4]);
    if found != magic {
        return Err(Error::Ingestion {
            file: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {found:#010x}, expected {magic:#010x}"),
        });
    }
    Ok((1..words).map(|i| BigEndian::read_u32(&bytes[4 * i..4 * i + 4]) as usize).collect())
}

pub fn read_idx_images(path: &Path) -> Result<Vec<Image>> {
    let bytes = read_file(path)?;
    let dims = header(path, &bytes, IMAGE_MAGIC, 4)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(Error::Ingestion {
            file: path.to_path_buf(),
            offset: (16 + body.len().min(n * rows * cols)) as u64,
            reason: format!("expected {} pixel bytes, found {}", n * rows * cols, body.len()),
        });
    }
    body.chunks_exact(rows * cols)
        .map(|px| Image::new(cols, rows, 1, px.to_vec()))
        .collect()
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    let n = header(path, &bytes, LABEL_MAGIC, 2)?[0];
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Ingestion {
            file: path.to_path_buf(),
            offset: (8 + body.len().min(n)) as u64,
            reason: format!("expected {n} labels, found {}", body.len()),
        });
    }
    if let Some(i) = body.iter().position(|&l| l >= 10) {
        return Err(Error::Ingestion {
            file: path.to_path_buf(),
            offset: (8 + i) as u64,
            reason: format!("label {} is not a digit class", body[i]),
        });
    }
    Ok(body.iter().map(|&l| l as usize).collect())
}

pub fn write_idx_images<W: Write>(mut out: W, images: &[Image]) -> Result<()> {
    let (rows, cols) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    let io = |e| Error::io("<idx images>", e);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.write_u32::<BigEndian>(v).map_err(io)?;
    }
    for img in images {
        if img.channels() != 1 || img.height() != rows || img.width() != cols {
            return Err(Error::InvalidInput("IDX images must share one grayscale shape".into()));
        }
        out.write_all(img.pixels()).map_err(io)?;
    }
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut out: W, labels: &[usize]) -> Result<()> {
    let io = |e| Error::io("<idx labels>", e);
    out.write_u32::<BigEndian>(LABEL_MAGIC).map_err(io)?;
    out.write_u32::<BigEndian>(labels.len() as u32).map_err(io)?;
    let bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    out.write_all(&bytes).map_err(io)
}
