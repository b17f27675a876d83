use std::path::Path;

use super::*;

fn pattern_image(w: usize, h: usize, ch: usize, salt: usize) -> Image {
    let px = (0..w * h * ch).map(|i| ((i * 131 + salt * 17) % 256) as u8).collect();
    Image::new(w, h, ch, px).unwrap()
}

fn write_file(path: &Path, bytes: &[u8]) {
    std::fs::write(path, bytes).unwrap();
}

fn cifar_bytes(labels: &[usize]) -> Vec<u8> {
    let images: Vec<Image> = (0..labels.len()).map(|i| pattern_image(32, 32, 3, i)).collect();
    let mut buf = Vec::new();
    write_cifar_batch(&mut buf, &images, labels).unwrap();
    buf
}

#[test]
fn cifar_record_walkthrough() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = vec![0u8; CIFAR_RECORD_BYTES * 2];
    bytes[0] = 7;
    bytes[1] = 200; // red channel, pixel (0, 0)
    bytes[1 + 1024] = 100; // green channel, pixel (0, 0)
    bytes[1 + 2048 + 33] = 50; // blue channel, pixel (1, 1)
    bytes[CIFAR_RECORD_BYTES] = 3;
    let path = dir.path().join("b.bin");
    write_file(&path, &bytes);
    let (images, labels) = read_cifar_batch(&path).unwrap();
    assert_eq!(labels, vec![7, 3]);
    assert_eq!(images[0].get(0, 0, 0), 200);
    assert_eq!(images[0].get(0, 0, 1), 100);
    assert_eq!(images[0].get(1, 1, 2), 50);
}

#[test]
fn truncated_cifar_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = cifar_bytes(&[1, 2]);
    bytes.truncate(CIFAR_RECORD_BYTES + 100);
    let path = dir.path().join("short.bin");
    write_file(&path, &bytes);
    match read_cifar_batch(&path) {
        Err(Error::Ingestion { file, offset, .. }) => {
            assert_eq!(file, path);
            assert_eq!(offset, CIFAR_RECORD_BYTES as u64);
        }
        other => panic!("expected ingestion error, got {other:?}"),
    }
    assert!(matches!(
        read_cifar_batch(&dir.path().join("missing.bin")),
        Err(Error::Ingestion { .. })
    ));
}

#[test]
fn cifar_parse_agrees_with_independent_parse_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let labels = [4, 9, 0];
    let bytes = cifar_bytes(&labels);
    for (i, name) in ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"]
        .iter()
        .enumerate()
    {
        let mut b = bytes.clone();
        b[0] = i as u8;
        write_file(&dir.path().join(name), &b);
    }
    let (train, test) = load_cifar10(dir.path()).unwrap();
    assert_eq!(train.len(), 15);
    assert_eq!(test.len(), 3);
    assert_eq!(test.mean, train.mean);

    // Brute force: pixel (x, y, c) of record r lives at r·3073 + 1 + c·1024 + y·32 + x.
    let brute: u64 = (0..32 * 32 * 3)
        .map(|i| {
            let (c, rem) = (i / 1024, i % 1024);
            let (y, x) = (rem / 32, rem % 32);
            let v = bytes[1 + c * 1024 + y * 32 + x] as u64;
            v * (1 + (x + 32 * y + 1024 * c) as u64 % 7)
        })
        .sum();
    let img = &train.images[0];
    let loaded: u64 = (0..32 * 32 * 3)
        .map(|i| {
            let (c, rem) = (i / 1024, i % 1024);
            let (y, x) = (rem / 32, rem % 32);
            img.get(x, y, c) as u64 * (1 + (x + 32 * y + 1024 * c) as u64 % 7)
        })
        .sum();
    assert_eq!(loaded, brute);

    let (images, labels_read) = read_cifar_batch(&dir.path().join("test_batch.bin")).unwrap();
    let mut again = Vec::new();
    write_cifar_batch(&mut again, &images, &labels_read).unwrap();
    let mut original = bytes.clone();
    original[0] = 5;
    assert_eq!(again, original);
}

fn write_mnist(dir: &Path, prefix: &str, images: &[Image], labels: &[usize]) {
    let mut buf = Vec::new();
    write_idx_images(&mut buf, images).unwrap();
    write_file(&dir.join(format!("{prefix}-images-idx3-ubyte")), &buf);
    let mut buf = Vec::new();
    write_idx_labels(&mut buf, labels).unwrap();
    write_file(&dir.join(format!("{prefix}-labels-idx1-ubyte")), &buf);
}

#[test]
fn mnist_loads_and_matches_independent_parse() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<Image> = (0..4).map(|i| pattern_image(28, 28, 1, i)).collect();
    write_mnist(dir.path(), "train", &images, &[7, 1, 2, 3]);
    write_mnist(dir.path(), "t10k", &images[..2], &[0, 9]);
    let (train, test) = load_mnist(dir.path()).unwrap();
    assert_eq!(train.labels, vec![7, 1, 2, 3]);
    assert_eq!(test.labels, vec![0, 9]);
    assert_eq!(train.image_shape(), Some((1, 28, 28)));

    let raw = std::fs::read(dir.path().join("train-images-idx3-ubyte")).unwrap();
    assert_eq!(&raw[0..4], &[0, 0, 8, 3]);
    let n = u32::from_be_bytes([raw[4], raw[5], raw[6], raw[7]]) as usize;
    assert_eq!(n, 4);
    let brute: u64 = raw[16..16 + 784].iter().enumerate().map(|(i, &v)| v as u64 * (i as u64 % 11 + 1)).sum();
    let loaded: u64 = train.images[0].pixels().iter().enumerate().map(|(i, &v)| v as u64 * (i as u64 % 11 + 1)).sum();
    assert_eq!(brute, loaded);
}

#[test]
fn mnist_bad_magic_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<Image> = (0..2).map(|i| pattern_image(28, 28, 1, i)).collect();
    let mut buf = Vec::new();
    write_idx_images(&mut buf, &images).unwrap();
    buf[3] = 0x01;
    let path = dir.path().join("bad");
    write_file(&path, &buf);
    assert!(matches!(read_idx_images(&path), Err(Error::Ingestion { offset: 0, .. })));

    let mut buf = Vec::new();
    write_idx_images(&mut buf, &images).unwrap();
    buf.truncate(buf.len() - 5);
    write_file(&path, &buf);
    assert!(matches!(read_idx_images(&path), Err(Error::Ingestion { .. })));
}

#[test]
fn normalize_examples() {
    let img = Image::new(1, 1, 1, vec![255]).unwrap();
    assert_eq!(normalize::<f64>(&img, &[0.0], &[1.0]).unwrap(), vec![1.0]);
    let img = Image::new(1, 1, 1, vec![51]).unwrap();
    let v = normalize::<f64>(&img, &[51.0 / 255.0], &[0.3]).unwrap();
    assert_eq!(v, vec![0.0]);
    assert!(normalize::<f64>(&img, &[0.0], &[0.0]).is_err());

    let rgb = Image::new(2, 1, 3, vec![0, 51, 102, 255, 153, 204]).unwrap();
    let v = normalize::<f64>(&rgb, &[0.0; 3], &[1.0; 3]).unwrap();
    // Channel-planar output.
    assert_eq!(v, vec![0.0, 1.0, 0.2, 0.6, 0.4, 0.8]);
}

#[test]
fn channel_means_match_streaming_oracle() {
    let images: Vec<Image> = (0..25).map(|i| pattern_image(32, 32, 3, i)).collect();
    let (mean, std) = channel_stats(&images);
    for c in 0..3 {
        // Welford's running mean and variance, one pixel at a time.
        let (mut n, mut m, mut m2) = (0.0, 0.0, 0.0);
        for img in &images {
            for px in img.pixels().chunks_exact(3) {
                let x = px[c] as f64 / 255.0;
                n += 1.0;
                let d = x - m;
                m += d / n;
                m2 += d * (x - m);
            }
        }
        assert!((mean[c] - m).abs() < 1e-6);
        assert!((std[c] - (m2 / n).sqrt()).abs() < 1e-6);
    }
}

#[test]
fn crop_flip_examples() {
    let img = pattern_image(6, 5, 3, 1);
    assert_eq!(crop_flip(&img, 4, 4, false, Padding::Zero), img);
    let flipped = crop_flip(&img, 4, 4, true, Padding::Zero);
    assert_ne!(flipped, img);
    assert_eq!(crop_flip(&flipped, 4, 4, true, Padding::Zero), img);

    // Brute-force padded image, then read (r, c) at offset (0, 0).
    let (w, h, p) = (6, 5, BASELINE_PAD);
    let mut padded = vec![0u8; (w + 2 * p) * (h + 2 * p) * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                padded[((y + p) * (w + 2 * p) + x + p) * 3 + c] = img.get(x, y, c);
            }
        }
    }
    let out = crop_flip(&img, 0, 0, false, Padding::Zero);
    for r in 0..h {
        for col in 0..w {
            for c in 0..3 {
                assert_eq!(out.get(col, r, c), padded[(r * (w + 2 * p) + col) * 3 + c]);
            }
        }
    }
}

#[test]
fn reflect_padding_mirrors_edges() {
    let img = Image::new(4, 1, 1, vec![10, 20, 30, 40]).unwrap();
    let out = crop_flip(&img, 2, 4, false, Padding::Reflect);
    // Shift right by 2: source x = −2, −1, 0, 1 → reflected 2, 1, 0, 1.
    assert_eq!(out.pixels(), &[30, 20, 10, 20]);
}

#[test]
fn baseline_preserves_shape_and_is_seeded() {
    let img = pattern_image(8, 8, 1, 3);
    for i in 0..20 {
        let a = baseline_augment(&img, &mut AugRng::for_stream(Stream::Baseline, 1, 0, i), Padding::Zero);
        let b = baseline_augment(&img, &mut AugRng::for_stream(Stream::Baseline, 1, 0, i), Padding::Zero);
        assert!(a.same_shape(&img));
        assert_eq!(a, b);
    }
}

fn labelled(counts: &[usize]) -> Dataset {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (class, &n) in counts.iter().enumerate() {
        for j in 0..n {
            images.push(pattern_image(2, 2, 1, class * 100 + j));
            labels.push(class);
        }
    }
    Dataset::new(images, labels, counts.len(), Split::Train).unwrap()
}

#[test]
fn subset_examples() {
    let ds = labelled(&[5; 10]);
    let full = subset(&ds, ds.len(), 3).unwrap();
    let mut a = full.labels.clone();
    let mut b = ds.labels.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);

    let ten = subset(&ds, 10, 3).unwrap();
    assert_eq!(ten.class_counts(), vec![1; 10]);
    assert!(subset(&ds, 51, 3).is_err());
    assert_eq!(subset_indices(&ds, 20, 9).unwrap(), subset_indices(&ds, 20, 9).unwrap());
}

#[test]
fn subset_counts_match_counting_oracle() {
    let counts = [13, 7, 29, 1, 50];
    let ds = labelled(&counts);
    let total: usize = counts.iter().sum();
    for n in [1, 17, 33, 64, total] {
        let sub = subset(&ds, n, 42).unwrap();
        assert_eq!(sub.len(), n);
        // Oracle: floor quotas, then remaining slots to the largest remainders.
        let mut quota: Vec<(usize, usize, usize)> =
            counts.iter().enumerate().map(|(c, &k)| (c, k * n / total, (k * n) % total)).collect();
        let left = n - quota.iter().map(|q| q.1).sum::<usize>();
        let mut by_rem = quota.clone();
        by_rem.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
        for q in by_rem.iter().take(left) {
            quota[q.0].1 += 1;
        }
        let expect: Vec<usize> = quota.iter().map(|q| q.1).collect();
        assert_eq!(sub.class_counts(), expect, "n = {n}");
    }
}

#[test]
fn synthetic_digits_are_balanced_and_seeded() {
    let (train, test) = synth_digits(50, 20, 1).unwrap();
    assert_eq!(train.class_counts(), vec![5; 10]);
    assert_eq!(test.len(), 20);
    assert_eq!(train.image_shape(), Some((1, 28, 28)));
    assert_eq!(test.mean, train.mean);
    let (again, _) = synth_digits(50, 0, 1).unwrap();
    assert_eq!(again.images, train.images);
    assert!(train.images.iter().all(|img| img.pixels().iter().any(|&v| v > 128)));
}

#[test]
fn dataset_validation() {
    let img = pattern_image(2, 2, 1, 0);
    assert!(Dataset::new(vec![img.clone()], vec![], 2, Split::Train).is_err());
    assert!(Dataset::new(vec![img.clone()], vec![2], 2, Split::Train).is_err());
    assert!(Dataset::new(vec![img, pattern_image(3, 2, 1, 0)], vec![0, 1], 2, Split::Train).is_err());
}
