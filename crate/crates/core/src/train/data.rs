//! In-memory datasets, synthetic generators and client sharding.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, DATA_STREAM};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Class labels in `0..n_classes`.
    Classes { labels: Vec<u32>, n_classes: usize },
    /// Real-valued targets, `dim` per row.
    Values { values: Vec<f32>, dim: usize },
}

/// Row-major feature matrix with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    n_features: usize,
    targets: Targets,
}

impl Dataset {
    pub fn new(features: Vec<f32>, n_features: usize, targets: Targets) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Config("datasets need at least one feature".into()));
        }
        if !features.len().is_multiple_of(n_features) {
            return Err(Error::Config(format!(
                "{} feature values do not divide into rows of {n_features}",
                features.len()
            )));
        }
        let rows = features.len() / n_features;
        let target_rows = match &targets {
            Targets::Classes { labels, n_classes } => {
                if let Some(&l) = labels.iter().find(|&&l| l as usize >= *n_classes) {
                    return Err(Error::Config(format!(
                        "label {l} outside {n_classes} classes"
                    )));
                }
                labels.len()
            }
            Targets::Values { values, dim } => {
                if *dim == 0 || values.len() % dim != 0 {
                    return Err(Error::Config(format!(
                        "{} target values for dim {dim}",
                        values.len()
                    )));
                }
                values.len() / dim
            }
        };
        if rows != target_rows {
            return Err(Error::Config(format!(
                "{rows} feature rows but {target_rows} targets"
            )));
        }
        Ok(Self {
            features,
            n_features,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    /// Number of classes, or the regression output dimension.
    pub fn target_dim(&self) -> usize {
        match &self.targets {
            Targets::Classes { n_classes, .. } => *n_classes,
            Targets::Values { dim, .. } => *dim,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Classes { .. })
    }

    /// Copies the given rows (repeats allowed) into a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let targets = match &self.targets {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values { values, dim } => Targets::Values {
                values: rows
                    .iter()
                    .flat_map(|&r| values[r * dim..(r + 1) * dim].iter().copied())
                    .collect(),
                dim: *dim,
            },
        };
        Dataset {
            features,
            n_features: self.n_features,
            targets,
        }
    }

    /// Per-class row counts; empty for regression data.
    pub fn class_counts(&self) -> Vec<usize> {
        match &self.targets {
            Targets::Classes { labels, n_classes } => {
                let mut counts = vec![0; *n_classes];
                labels.iter().for_each(|&l| counts[l as usize] += 1);
                counts
            }
            Targets::Values { .. } => Vec::new(),
        }
    }
}

/// Synthetic task generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetKind {
    /// Two Gaussian classes (unit variance) whose means are `separation`
    /// standard deviations apart along a random direction.
    Blobs {
        #[serde(default = "default_blob_dim")]
        dim: usize,
        #[serde(default = "default_separation")]
        separation: f32,
    },
    /// `y = A x + b + noise`.
    Linreg {
        #[serde(default = "default_linreg_in")]
        input_dim: usize,
        #[serde(default = "default_one")]
        output_dim: usize,
        #[serde(default)]
        noise: f32,
    },
    /// Label is the XOR of the signs of the first two features; extra
    /// features are uninformative.
    XorIsh {
        #[serde(default)]
        noise_dims: usize,
        #[serde(default)]
        label_noise: f32,
    },
}

fn default_blob_dim() -> usize {
    2
}
fn default_separation() -> f32 {
    4.0
}
fn default_linreg_in() -> usize {
    5
}
fn default_one() -> usize {
    1
}

fn normal(rng: &mut impl Rng) -> f32 {
    rng.sample(StandardNormal)
}

/// Generates `size` rows of the given task. Deterministic in `seed`.
pub fn make_dataset(kind: &DatasetKind, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::Config("dataset size must be positive".into()));
    }
    let mut rng = rng::stream(seed, DATA_STREAM, 0);
    match *kind {
        DatasetKind::Blobs { dim, separation } => {
            if dim == 0 {
                return Err(Error::Config("blobs need dim >= 1".into()));
            }
            let mut dir: Vec<f32> = (0..dim).map(|_| normal(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f32>().sqrt();
            dir.iter_mut().for_each(|v| *v /= norm);
            let mut features = Vec::with_capacity(size * dim);
            let mut labels = Vec::with_capacity(size);
            for i in 0..size {
                let label = (i % 2) as u32;
                let offset = if label == 1 {
                    separation / 2.0
                } else {
                    -separation / 2.0
                };
                features.extend(dir.iter().map(|&d| offset * d + normal(&mut rng)));
                labels.push(label);
            }
            Dataset::new(
                features,
                dim,
                Targets::Classes {
                    labels,
                    n_classes: 2,
                },
            )
        }
        DatasetKind::Linreg {
            input_dim,
            output_dim,
            noise,
        } => {
            if input_dim == 0 || output_dim == 0 {
                return Err(Error::Config("linreg dims must be positive".into()));
            }
            let scale = 1.0 / (input_dim as f32).sqrt();
            let a: Vec<f32> = (0..input_dim * output_dim)
                .map(|_| normal(&mut rng) * scale)
                .collect();
            let b: Vec<f32> = (0..output_dim).map(|_| 0.5 * normal(&mut rng)).collect();
            let mut features = Vec::with_capacity(size * input_dim);
            let mut values = Vec::with_capacity(size * output_dim);
            for _ in 0..size {
                let x: Vec<f32> = (0..input_dim).map(|_| normal(&mut rng)).collect();
                for o in 0..output_dim {
                    let row = &a[o * input_dim..(o + 1) * input_dim];
                    let y = b[o] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f32>();
                    values.push(y + noise * normal(&mut rng));
                }
                features.extend(x);
            }
            Dataset::new(
                features,
                input_dim,
                Targets::Values {
                    values,
                    dim: output_dim,
                },
            )
        }
        DatasetKind::XorIsh {
            noise_dims,
            label_noise,
        } => {
            let dim = 2 + noise_dims;
            let mut features = Vec::with_capacity(size * dim);
            let mut labels = Vec::with_capacity(size);
            for _ in 0..size {
                let row: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
                let mut label = (row[0] > 0.0) != (row[1] > 0.0);
                if label_noise > 0.0 && rng.random::<f32>() < label_noise {
                    label = !label;
                }
                features.extend(row);
                labels.push(label as u32);
            }
            Dataset::new(
                features,
                dim,
                Targets::Classes {
                    labels,
                    n_classes: 2,
                },
            )
        }
    }
}

fn permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, DATA_STREAM, index));
    perm
}

/// Shuffles the rows and cuts them into `k` contiguous shards whose sizes
/// differ by at most one (larger shards first). A single shard is the
/// dataset itself, in its original order.
pub fn split_iid(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Dataset>> {
    if k == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    if k > data.len() {
        return Err(Error::Config(format!(
            "{k} clients for {} samples",
            data.len()
        )));
    }
    if k == 1 {
        return Ok(vec![data.clone()]);
    }
    let perm = permutation(data.len(), seed, 1);
    let (base, extra) = (data.len() / k, data.len() % k);
    let mut start = 0;
    Ok((0..k)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let shard = data.subset(&perm[start..start + size]);
            start += size;
            shard
        })
        .collect())
}

/// Random `(train, validation)` split with `validation_fraction` of the rows
/// held out.
pub fn train_validation_split(
    data: &Dataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::Config(format!(
            "validation_fraction must be in [0, 1), got {validation_fraction}"
        )));
    }
    let n_val = (validation_fraction * data.len() as f64).round() as usize;
    if n_val >= data.len() {
        return Err(Error::Config(
            "validation split leaves no training rows".into(),
        ));
    }
    let perm = permutation(data.len(), seed, 2);
    Ok((data.subset(&perm[n_val..]), data.subset(&perm[..n_val])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        for kind in [
            DatasetKind::Blobs {
                dim: 3,
                separation: 2.0,
            },
            DatasetKind::Linreg {
                input_dim: 4,
                output_dim: 2,
                noise: 0.1,
            },
            DatasetKind::XorIsh {
                noise_dims: 1,
                label_noise: 0.05,
            },
        ] {
            let a = make_dataset(&kind, 50, 9).unwrap();
            assert_eq!(a, make_dataset(&kind, 50, 9).unwrap());
            assert_ne!(a, make_dataset(&kind, 50, 10).unwrap());
            assert_eq!(a.len(), 50);
        }
    }

    #[test]
    fn split_single_client_keeps_everything() {
        let d = make_dataset(
            &DatasetKind::XorIsh {
                noise_dims: 0,
                label_noise: 0.0,
            },
            30,
            1,
        )
        .unwrap();
        let shards = split_iid(&d, 1, 4).unwrap();
        assert_eq!(shards.len(), 1);
        assert_eq!(shards[0].len(), 30);
        assert_eq!(shards[0].class_counts(), d.class_counts());
    }

    #[test]
    fn split_is_a_balanced_partition() {
        // feature value = row id, so coverage can be checked exactly
        let d = Dataset::new(
            (0..100).map(|i| i as f32).collect(),
            1,
            Targets::Values {
                values: vec![0.0; 100],
                dim: 1,
            },
        )
        .unwrap();
        let shards = split_iid(&d, 4, 3).unwrap();
        assert!(shards.iter().all(|s| s.len() == 25));
        let mut seen: Vec<usize> = shards
            .iter()
            .flat_map(|s| s.features().iter().map(|&v| v as usize))
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());

        let uneven = split_iid(&d.subset(&(0..10).collect::<Vec<_>>()), 3, 0).unwrap();
        assert_eq!(
            uneven.iter().map(Dataset::len).collect::<Vec<_>>(),
            vec![4, 3, 3]
        );
        assert!(split_iid(&d, 101, 0).is_err());
        assert!(split_iid(&d, 0, 0).is_err());
    }

    #[test]
    fn rejects_inconsistent_rows() {
        assert!(Dataset::new(
            vec![0.0; 6],
            2,
            Targets::Classes {
                labels: vec![0, 1],
                n_classes: 2
            }
        )
        .is_err());
        assert!(Dataset::new(
            vec![0.0; 4],
            2,
            Targets::Classes {
                labels: vec![0, 2],
                n_classes: 2
            }
        )
        .is_err());
    }
}
