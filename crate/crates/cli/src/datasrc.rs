//! Resolving a [`DatasetSource`] into train/test datasets.

use std::path::Path;

use anyhow::{Context, Result};

use lipnet::data::{load_idx, synthetic_blobs, Dataset};
use lipnet::rng::Pcg32;

use crate::config::DatasetSource;

/// Desk-scale MNIST subset sizes.
pub const SUBSET_TRAIN: usize = 10_000;
pub const SUBSET_TEST: usize = 2_000;

/// Stream index for blob generation, derived from the master seed so a
/// sweep's dataset is fixed by (config, seed) alone.
const BLOB_DATA_STREAM: u64 = 101;

pub fn resolve(source: &DatasetSource, master_seed: u64) -> Result<(Dataset, Dataset)> {
    match source {
        DatasetSource::Mnist { dir, full } => load_mnist(dir, *full),
        DatasetSource::Blobs {
            classes,
            per_class,
            test_per_class,
            dim,
            separation,
        } => {
            // One pool per class so both splits share the same class
            // centers; the first `per_class` of each block train, the rest
            // test.
            let mut rng = Pcg32::derived(master_seed, BLOB_DATA_STREAM);
            let pool = synthetic_blobs(
                *classes,
                per_class + test_per_class,
                *dim,
                *separation,
                &mut rng,
            )?;
            let block = per_class + test_per_class;
            let mut train_inputs = Vec::with_capacity(classes * per_class);
            let mut train_labels = Vec::with_capacity(classes * per_class);
            let mut test_inputs = Vec::with_capacity(classes * test_per_class);
            let mut test_labels = Vec::with_capacity(classes * test_per_class);
            for class in 0..*classes {
                for offset in 0..block {
                    let i = class * block + offset;
                    if offset < *per_class {
                        train_inputs.push(pool.inputs[i].clone());
                        train_labels.push(pool.labels[i]);
                    } else {
                        test_inputs.push(pool.inputs[i].clone());
                        test_labels.push(pool.labels[i]);
                    }
                }
            }
            Ok((
                Dataset::new(train_inputs, train_labels, *classes)?,
                Dataset::new(test_inputs, test_labels, *classes)?,
            ))
        }
    }
}

pub fn load_mnist(dir: &Path, full: bool) -> Result<(Dataset, Dataset)> {
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .with_context(|| format!("loading MNIST train split from {}", dir.display()))?;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
    .with_context(|| format!("loading MNIST test split from {}", dir.display()))?;
    if full {
        Ok((train, test))
    } else {
        Ok((train.take(SUBSET_TRAIN), test.take(SUBSET_TEST)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_resolve_deterministically_from_the_master_seed() {
        let source = DatasetSource::Blobs {
            classes: 3,
            per_class: 10,
            test_per_class: 4,
            dim: 5,
            separation: 2.0,
        };
        let (train_a, test_a) = resolve(&source, 7).unwrap();
        let (train_b, test_b) = resolve(&source, 7).unwrap();
        assert_eq!(train_a.inputs, train_b.inputs);
        assert_eq!(test_a.inputs, test_b.inputs);
        assert_eq!(train_a.len(), 30);
        assert_eq!(test_a.len(), 12);
        // Disjoint samples, shared class structure.
        assert_ne!(train_a.inputs[0], test_a.inputs[0]);
        assert_eq!(test_a.labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn blob_splits_share_class_centers() {
        // With shared centers a nearest-centroid rule fit on train classifies
        // test far above chance.
        let source = DatasetSource::Blobs {
            classes: 3,
            per_class: 100,
            test_per_class: 30,
            dim: 8,
            separation: 6.0,
        };
        let (train, test) = resolve(&source, 3).unwrap();
        let mut centroids = vec![vec![0.0; train.input_dim]; 3];
        let mut counts = vec![0usize; 3];
        for (x, &label) in train.inputs.iter().zip(&train.labels) {
            counts[label] += 1;
            for (c, v) in centroids[label].iter_mut().zip(x) {
                *c += v;
            }
        }
        for (c, &n) in centroids.iter_mut().zip(&counts) {
            for v in c.iter_mut() {
                *v /= n as f64;
            }
        }
        let mut correct = 0;
        for (x, &label) in test.inputs.iter().zip(&test.labels) {
            let nearest = centroids
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da: f64 = a.iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
                    let db: f64 = b.iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap()
                .0;
            if nearest == label {
                correct += 1;
            }
        }
        assert!(correct >= 80, "nearest-centroid got {correct}/90");
    }

    #[test]
    fn missing_mnist_dir_is_an_error() {
        let source = DatasetSource::Mnist {
            dir: "/nonexistent".into(),
            full: false,
        };
        assert!(resolve(&source, 0).is_err());
    }
}
