//! Toy local trainer: linear or logistic regression with L2, full-batch
//! gradient descent, on synthetic two-class data or a CSV file.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

use super::config::{ModelFamily, PartitionMode, TrainerSpec};
use crate::group_math::seeded_or_os_rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{samples} samples cannot be split over {parties} parties")]
    TooFewSamples { samples: usize, parties: usize },
    #[error("dataset csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Rows of `f1,...,fd,label`; a header row is skipped if present.
    pub fn from_csv(path: &Path) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| DataError::Csv(e.to_string()))?;
        let mut data = Dataset::default();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
            let parsed: Result<Vec<f64>, _> =
                record.iter().map(|f| f.trim().parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(DataError::Csv(format!("row {}: {e}", row + 1))),
            };
            if values.len() < 2 {
                return Err(DataError::Csv(format!("row {} has no features", row + 1)));
            }
            let (label, features) = values.split_last().expect("non-empty");
            if data.dim() != 0 && features.len() != data.dim() {
                return Err(DataError::Csv(format!(
                    "row {} has a different width",
                    row + 1
                )));
            }
            data.features.push(features.to_vec());
            data.labels.push(*label);
        }
        Ok(data)
    }

    /// Seeded shuffle then split off the last `fraction` as a test set.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seeded_or_os_rng(Some(seed)));
        let test = ((self.len() as f64) * fraction).round() as usize;
        let cut = self.len() - test.min(self.len());
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }
}

/// Two Gaussian classes whose means differ by `class_separation` along a
/// random unit direction. For linear regression the label is instead
/// `x . w* + noise` for a random `w*`.
pub fn synthetic_dataset(spec: &TrainerSpec, samples: usize, seed: u64) -> Dataset {
    let mut rng = seeded_or_os_rng(Some(spec.data_seed));
    let d = spec.features;
    let mut direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    direction.iter_mut().for_each(|x| *x /= norm);
    // per-split stream; the direction is shared between train and test
    let mut rng = seeded_or_os_rng(Some(
        spec.data_seed ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
    ));
    let mut data = Dataset::default();
    for _ in 0..samples {
        let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let label = match spec.family {
            ModelFamily::LogisticRegression => {
                let class = rng.random_range(0..2u8);
                let sign = if class == 1 { 0.5 } else { -0.5 };
                for (xi, di) in x.iter_mut().zip(&direction) {
                    *xi += sign * spec.class_separation * di;
                }
                f64::from(class)
            }
            ModelFamily::LinearRegression => {
                let noise: f64 = rng.sample(StandardNormal);
                x.iter().zip(&direction).map(|(a, b)| a * b).sum::<f64>() * spec.class_separation
                    + 0.1 * noise
            }
        };
        data.features.push(x);
        data.labels.push(label);
    }
    data
}

/// Splits `data` into `n_parties` disjoint shards. Label skew draws each
/// class's party proportions from a symmetric Dirichlet; every party keeps
/// at least one sample.
pub fn partition_data(
    data: &Dataset,
    n_parties: usize,
    mode: PartitionMode,
    concentration: f64,
    seed: u64,
) -> Result<Vec<Dataset>, DataError> {
    if n_parties == 0 || data.len() < n_parties {
        return Err(DataError::TooFewSamples {
            samples: data.len(),
            parties: n_parties,
        });
    }
    let mut rng = seeded_or_os_rng(Some(seed));
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n_parties];
    match mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng);
            let base = data.len() / n_parties;
            let extra = data.len() % n_parties;
            let mut start = 0;
            for (p, shard) in shards.iter_mut().enumerate() {
                let size = base + usize::from(p < extra);
                shard.extend_from_slice(&idx[start..start + size]);
                start += size;
            }
        }
        PartitionMode::LabelSkew => {
            let mut classes: Vec<f64> = data.labels.clone();
            classes.sort_by(f64::total_cmp);
            classes.dedup();
            let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
            for class in classes {
                let mut idx: Vec<usize> = (0..data.len())
                    .filter(|&i| data.labels[i] == class)
                    .collect();
                idx.shuffle(&mut rng);
                let draws: Vec<f64> = (0..n_parties).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                let mut start = 0;
                let mut acc = 0.0;
                for (p, draw) in draws.iter().enumerate() {
                    acc += draw / total;
                    let end = if p + 1 == n_parties {
                        idx.len()
                    } else {
                        ((acc * idx.len() as f64).round() as usize).clamp(start, idx.len())
                    };
                    shards[p].extend_from_slice(&idx[start..end]);
                    start = end;
                }
            }
            for p in 0..n_parties {
                if shards[p].is_empty() {
                    let donor = (0..n_parties)
                        .max_by_key(|&q| shards[q].len())
                        .expect("parties");
                    let moved = shards[donor].pop().expect("donor has samples");
                    shards[p].push(moved);
                }
            }
        }
    }
    Ok(shards.iter().map(|s| data.subset(s)).collect())
}

/// Weights are `dim` feature weights followed by a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub weights: Vec<f64>,
    pub family: ModelFamily,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ToyModel {
    pub fn zeros(dim: usize, family: ModelFamily) -> Self {
        Self {
            weights: vec![0.0; dim + 1],
            family,
        }
    }

    fn score(&self, x: &[f64]) -> f64 {
        let (w, b) = self.weights.split_at(self.weights.len() - 1);
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.family {
            ModelFamily::LogisticRegression => sigmoid(self.score(x)),
            ModelFamily::LinearRegression => self.score(x),
        }
    }

    /// Mean log loss (logistic) or half mean squared error (linear), plus
    /// `l2/2 |w|^2` over the feature weights.
    pub fn loss(&self, data: &Dataset, l2: f64) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let data_loss: f64 = data
            .features
            .iter()
            .zip(&data.labels)
            .map(|(x, &y)| match self.family {
                ModelFamily::LogisticRegression => {
                    let p = self.predict(x).clamp(1e-12, 1.0 - 1e-12);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                }
                ModelFamily::LinearRegression => 0.5 * (self.predict(x) - y).powi(2),
            })
            .sum::<f64>()
            / data.len() as f64;
        let d = self.weights.len() - 1;
        data_loss + 0.5 * l2 * self.weights[..d].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn gradient(&self, data: &Dataset, l2: f64) -> Vec<f64> {
        let d = self.weights.len() - 1;
        let mut g = vec![0.0; d + 1];
        if data.is_empty() {
            return g;
        }
        for (x, &y) in data.features.iter().zip(&data.labels) {
            // both families share the residual form of the gradient
            let r = self.predict(x) - y;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += r * xi;
            }
            g[d] += r;
        }
        let m = data.len() as f64;
        for (i, gi) in g.iter_mut().enumerate() {
            *gi /= m;
            if i < d {
                *gi += l2 * self.weights[i];
            }
        }
        g
    }

    /// `epochs` full-batch gradient steps; returns the loss before training.
    pub fn train(&mut self, data: &Dataset, epochs: usize, learning_rate: f64, l2: f64) -> f64 {
        let before = self.loss(data, l2);
        for _ in 0..epochs {
            let g = self.gradient(data, l2);
            for (w, gi) in self.weights.iter_mut().zip(g) {
                *w -= learning_rate * gi;
            }
        }
        before
    }

    /// Classification accuracy (logistic) or the fraction of predictions
    /// within 0.5 of the target (linear).
    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .features
            .iter()
            .zip(&data.labels)
            .filter(|(x, &y)| match self.family {
                ModelFamily::LogisticRegression => (self.predict(x) >= 0.5) == (y >= 0.5),
                ModelFamily::LinearRegression => (self.predict(x) - y).abs() < 0.5,
            })
            .count();
        hits as f64 / data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TrainerSpec {
        TrainerSpec::default()
    }

    #[test]
    fn iid_split_is_even_and_disjoint() {
        let data = synthetic_dataset(&spec(), 1000, 1);
        let shards = partition_data(&data, 5, PartitionMode::Iid, 1.0, 3).unwrap();
        assert!(shards.iter().all(|s| s.len() == 200));
        let mut all: Vec<Vec<u64>> = shards
            .iter()
            .flat_map(|s| {
                s.features
                    .iter()
                    .map(|x| x.iter().map(|v| v.to_bits()).collect())
            })
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 1000);
    }

    #[test]
    fn too_few_samples() {
        let data = synthetic_dataset(&spec(), 3, 1);
        assert!(matches!(
            partition_data(&data, 5, PartitionMode::Iid, 1.0, 0),
            Err(DataError::TooFewSamples {
                samples: 3,
                parties: 5
            })
        ));
    }

    fn class_share(shard: &Dataset) -> f64 {
        shard.labels.iter().sum::<f64>() / shard.len() as f64
    }

    #[test]
    fn label_skew_is_reproducible_and_biased() {
        let data = synthetic_dataset(&spec(), 2000, 1);
        let a = partition_data(&data, 5, PartitionMode::LabelSkew, 0.3, 9).unwrap();
        let b = partition_data(&data, 5, PartitionMode::LabelSkew, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(Dataset::len).sum::<usize>(), 2000);
        assert!(a.iter().all(|s| !s.is_empty()));
        let spread = a
            .iter()
            .map(class_share)
            .fold(0.0f64, |m, s| m.max((s - 0.5).abs()));
        assert!(spread > 0.2, "{spread}");
    }

    #[test]
    fn label_skew_approaches_iid_for_large_concentration() {
        let data = synthetic_dataset(&spec(), 5000, 1);
        let shards = partition_data(&data, 5, PartitionMode::LabelSkew, 1e6, 9).unwrap();
        for s in &shards {
            assert!((s.len() as f64 - 1000.0).abs() < 20.0, "{}", s.len());
            assert!((class_share(s) - class_share(&data)).abs() < 0.02);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for family in [
            ModelFamily::LogisticRegression,
            ModelFamily::LinearRegression,
        ] {
            let mut s = spec();
            s.family = family;
            s.features = 3;
            let data = synthetic_dataset(&s, 50, 2);
            let mut model = ToyModel::zeros(3, family);
            model.weights = vec![0.3, -0.2, 0.1, 0.05];
            let g = model.gradient(&data, 0.1);
            for i in 0..4 {
                let h = 1e-6;
                let mut plus = model.clone();
                plus.weights[i] += h;
                let mut minus = model.clone();
                minus.weights[i] -= h;
                let fd = (plus.loss(&data, 0.1) - minus.loss(&data, 0.1)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6, "{family:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn logistic_training_separates_the_classes() {
        let s = spec();
        let train = synthetic_dataset(&s, 1000, 1);
        let test = synthetic_dataset(&s, 500, 2);
        let mut model = ToyModel::zeros(s.features, s.family);
        let first = model.train(&train, 50, 0.5, 0.01);
        assert!(model.loss(&train, 0.01) < first);
        assert!(model.accuracy(&test) > 0.75, "{}", model.accuracy(&test));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,label\n1.0,2.0,1\n-1,0.5,0\n").unwrap();
        let d = Dataset::from_csv(&path).unwrap();
        assert_eq!(d.features, vec![vec![1.0, 2.0], vec![-1.0, 0.5]]);
        assert_eq!(d.labels, vec![1.0, 0.0]);
        std::fs::write(&path, "1,2,1\n3,x,0\n").unwrap();
        assert!(Dataset::from_csv(&path).is_err());
    }
}
