//! Dataset handling: IDX image/label containers, synthetic Gaussian blob
//! tasks for fast experiments, and seeded epoch batching.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Pcg32;

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// In-memory classification dataset. Image inputs are scaled to [0, 1];
/// labels index classes `0..num_classes`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("dataset must be nonempty"));
        }
        if inputs.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let input_dim = inputs[0].len();
        if input_dim == 0 || inputs.iter().any(|x| x.len() != input_dim) {
            return Err(Error::dim("inputs must share one positive dimension".to_string()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            input_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// First `count` samples (or fewer if the dataset is smaller).
    pub fn take(&self, count: usize) -> Dataset {
        let count = count.min(self.len());
        Dataset {
            inputs: self.inputs[..count].to_vec(),
            labels: self.labels[..count].to_vec(),
            input_dim: self.input_dim,
            num_classes: self.num_classes,
        }
    }
}

/// Load an IDX image/label pair: big-endian magic 0x00000803 with
/// (count, rows, cols) dimensions for images, 0x00000801 with (count,) for
/// labels. Pixels are unsigned bytes flattened row-major and scaled by
/// 1/255; the two counts must agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    parse_idx(&image_bytes, &label_bytes)
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated while reading {what}"),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let magic = read_u32_be(image_bytes, 0, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(image_bytes, 4, "image count")? as usize;
    let rows = read_u32_be(image_bytes, 8, "image rows")? as usize;
    let cols = read_u32_be(image_bytes, 12, "image cols")? as usize;
    let pixels = rows * cols;
    let expected = 16 + count * pixels;
    if image_bytes.len() != expected {
        return Err(Error::Format {
            offset: image_bytes.len().min(expected) as u64,
            reason: format!(
                "image payload is {} bytes, header implies {expected}",
                image_bytes.len()
            ),
        });
    }

    let magic = read_u32_be(label_bytes, 0, "label magic")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        });
    }
    let label_count = read_u32_be(label_bytes, 4, "label count")? as usize;
    if label_count != count {
        return Err(Error::Format {
            offset: 4,
            reason: format!("{count} images but {label_count} labels"),
        });
    }
    if label_bytes.len() != 8 + count {
        return Err(Error::Format {
            offset: label_bytes.len().min(8 + count) as u64,
            reason: format!(
                "label payload is {} bytes, header implies {}",
                label_bytes.len(),
                8 + count
            ),
        });
    }

    let inputs: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            image_bytes[16 + i * pixels..16 + (i + 1) * pixels]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect();
    let labels: Vec<usize> = label_bytes[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(inputs, labels, num_classes)
}

/// Write an IDX image/label pair, the inverse of [`load_idx`]. Useful for
/// generating desk-scale fixtures.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    pixels: &[Vec<u8>],
    rows: usize,
    cols: usize,
    labels: &[u8],
) -> Result<()> {
    if pixels.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} images but {} labels",
            pixels.len(),
            labels.len()
        )));
    }
    if pixels.iter().any(|p| p.len() != rows * cols) {
        return Err(Error::dim(format!("each image must have {} pixels", rows * cols)));
    }
    let mut image_bytes = Vec::with_capacity(16 + pixels.len() * rows * cols);
    image_bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(pixels.len() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for p in pixels {
        image_bytes.extend_from_slice(p);
    }
    std::fs::write(images_path, image_bytes)?;

    let mut label_bytes = Vec::with_capacity(8 + labels.len());
    label_bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    label_bytes.extend_from_slice(labels);
    std::fs::write(labels_path, label_bytes)?;
    Ok(())
}

/// Gaussian blob classification task: each class center sits `separation`
/// from the origin along a seeded random direction, samples add unit
/// isotropic noise. Samples are emitted class by class.
pub fn synthetic_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut Pcg32,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid("blob dataset needs at least 2 classes"));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::invalid("per_class and dim must be positive"));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::invalid("separation must be finite and non-negative"));
    }

    let mut centers = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut direction: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut direction {
                *v *= separation / norm;
            }
        }
        centers.push(direction);
    }

    let mut inputs = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            inputs.push(center.iter().map(|&c| c + rng.next_gaussian()).collect());
            labels.push(class);
        }
    }
    Dataset::new(inputs, labels, classes)
}

/// Seeded shuffled mini-batch index slices for one epoch. Every index
/// appears exactly once; the final batch may be short.
pub fn batches(dataset: &Dataset, batch_size: usize, rng: &mut Pcg32) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut indices);
    Ok(indices.chunks(batch_size).map(|c| c.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("imgs.idx3");
        let lbl = dir.path().join("lbls.idx1");
        let pixels = vec![vec![0u8, 128, 255, 7], vec![1, 2, 3, 4]];
        write_idx(&img, &lbl, &pixels, 2, 2, &[3, 1]).unwrap();
        let ds = load_idx(&img, &lbl).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim, 4);
        assert_eq!(ds.labels, vec![3, 1]);
        for (input, raw) in ds.inputs.iter().zip(&pixels) {
            for (&v, &b) in input.iter().zip(raw) {
                assert_eq!(v.to_bits(), (b as f64 / 255.0).to_bits());
            }
        }
        // Full byte 255 maps to exactly 1.0.
        assert_eq!(ds.inputs[0][2], 1.0);
    }

    #[test]
    fn idx_header_constants() {
        let mut image_bytes = Vec::new();
        image_bytes.extend_from_slice(&[0, 0, 8, 3]);
        image_bytes.extend_from_slice(&2u32.to_be_bytes());
        image_bytes.extend_from_slice(&28u32.to_be_bytes());
        image_bytes.extend_from_slice(&28u32.to_be_bytes());
        image_bytes.extend(std::iter::repeat(0u8).take(2 * 28 * 28));
        let mut label_bytes = Vec::new();
        label_bytes.extend_from_slice(&[0, 0, 8, 1]);
        label_bytes.extend_from_slice(&2u32.to_be_bytes());
        label_bytes.extend_from_slice(&[0, 1]);
        let ds = parse_idx(&image_bytes, &label_bytes).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim, 784);
    }

    #[test]
    fn idx_rejects_corrupted_headers() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx(&img, &lbl, &[vec![1, 2, 3, 4]], 2, 2, &[0]).unwrap();
        let good_img = std::fs::read(&img).unwrap();
        let good_lbl = std::fs::read(&lbl).unwrap();

        // Wrong image magic.
        let mut bad = good_img.clone();
        bad[3] = 9;
        let err = parse_idx(&bad, &good_lbl).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");

        // Truncated image payload.
        let err = parse_idx(&good_img[..good_img.len() - 1], &good_lbl).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");

        // Wrong label magic.
        let mut bad = good_lbl.clone();
        bad[3] = 2;
        assert!(parse_idx(&good_img, &bad).is_err());

        // Count mismatch.
        let mut bad = good_lbl.clone();
        bad[7] = 2;
        assert!(parse_idx(&good_img, &bad).is_err());
    }

    #[test]
    fn blobs_are_deterministic_and_labeled() {
        let a = synthetic_blobs(3, 5, 4, 2.0, &mut Pcg32::new(8)).unwrap();
        let b = synthetic_blobs(3, 5, 4, 2.0, &mut Pcg32::new(8)).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.num_classes, 3);
        assert_eq!(a.len(), 15);
    }

    #[test]
    fn blobs_with_zero_separation_share_one_distribution() {
        let ds = synthetic_blobs(2, 200, 3, 0.0, &mut Pcg32::new(4)).unwrap();
        // Class-conditional means coincide at the origin.
        for class in 0..2 {
            let members: Vec<&Vec<f64>> = ds
                .inputs
                .iter()
                .zip(&ds.labels)
                .filter(|(_, &l)| l == class)
                .map(|(x, _)| x)
                .collect();
            for d in 0..3 {
                let mean: f64 =
                    members.iter().map(|x| x[d]).sum::<f64>() / members.len() as f64;
                assert!(mean.abs() < 0.25, "class {class} dim {d} mean {mean}");
            }
        }
    }

    #[test]
    fn blobs_reject_single_class() {
        assert!(synthetic_blobs(1, 5, 2, 1.0, &mut Pcg32::new(0)).is_err());
    }

    #[test]
    fn batches_partition_the_index_set() {
        let ds = synthetic_blobs(2, 5, 2, 1.0, &mut Pcg32::new(1)).unwrap();
        let slices = batches(&ds, 3, &mut Pcg32::new(2)).unwrap();
        assert_eq!(
            slices.iter().map(|s| s.len()).collect::<Vec<_>>(),
            vec![3, 3, 3, 1]
        );
        let mut all: Vec<usize> = slices.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let single = batches(&ds, 100, &mut Pcg32::new(2)).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 10);
    }

    #[test]
    fn batches_reject_zero_batch_size() {
        let ds = synthetic_blobs(2, 2, 2, 1.0, &mut Pcg32::new(1)).unwrap();
        assert!(batches(&ds, 0, &mut Pcg32::new(2)).is_err());
    }
}
