//! Datasets: the CIFAR-10 binary format, a synthetic complex-blob task, and
//! deterministic minibatching.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clinalg::{random_complex_gaussian, Complex, ComplexMatrix};
use crate::error::{invalid, Error, Result};
use crate::oac::FeatureShape;

pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_PIXELS: usize = 3072;
pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// Labelled samples stored sample-major: sample `i` occupies
/// `samples[i * feature_len .. (i + 1) * feature_len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Complex>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub feature_shape: FeatureShape,
}

impl Dataset {
    pub fn new(
        samples: Vec<Complex>,
        labels: Vec<usize>,
        class_count: usize,
        feature_shape: FeatureShape,
    ) -> Result<Self> {
        if samples.len() != labels.len() * feature_shape.len() {
            return Err(invalid(format!(
                "{} values for {} samples of {} features",
                samples.len(),
                labels.len(),
                feature_shape.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(invalid(format!("label {bad} out of range for {class_count} classes")));
        }
        Ok(Self {
            samples,
            labels,
            class_count,
            feature_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape.len()
    }

    pub fn sample(&self, i: usize) -> &[Complex] {
        let n = self.feature_len();
        &self.samples[i * n..(i + 1) * n]
    }

    /// Stacks the chosen samples as columns.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let n = self.feature_len();
        let mut x = ComplexMatrix::zeros(n, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            for (r, v) in self.sample(i).iter().enumerate() {
                x[(r, j)] = *v;
            }
        }
        Batch {
            x,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `features × batch`.
    pub x: ComplexMatrix,
    pub labels: Vec<usize>,
}

/// Real inputs enter the network as `x + j0`.
pub fn to_complex(x: &[f64]) -> Vec<Complex> {
    x.iter().map(|&v| Complex::new(v, 0.0)).collect()
}

/// Parses raw CIFAR-10 records into `(labels, pixels)`.
pub fn parse_cifar10(bytes: &[u8], file: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    let whole = bytes.len() / CIFAR_RECORD;
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Truncated {
            file: file.to_string(),
            offset: (whole * CIFAR_RECORD) as u64,
            message: format!(
                "{} trailing bytes after {whole} complete records",
                bytes.len() - whole * CIFAR_RECORD
            ),
        });
    }
    let mut labels = Vec::with_capacity(whole);
    let mut pixels = Vec::with_capacity(whole * CIFAR_PIXELS);
    for (record, chunk) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = chunk[0];
        if label as usize >= CIFAR_CLASSES {
            return Err(Error::BadLabel {
                file: file.to_string(),
                record,
                label,
            });
        }
        labels.push(label);
        pixels.extend_from_slice(&chunk[1..]);
    }
    Ok((labels, pixels))
}

fn read_cifar_file(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let bytes = fs::read(path)?;
    parse_cifar10(&bytes, &path.display().to_string())
}

/// Loads the training batches present in `dir` (at least `data_batch_1.bin`)
/// and `test_batch.bin`, scales pixels to `[0, 1]`, and standardizes each
/// color channel with training-set statistics.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train_labels = Vec::new();
    let mut train_pixels = Vec::new();
    for name in CIFAR_TRAIN_FILES {
        let path = dir.join(name);
        if !path.exists() {
            if name == CIFAR_TRAIN_FILES[0] {
                return Err(invalid(format!("{} not found", path.display())));
            }
            continue;
        }
        let (l, p) = read_cifar_file(&path)?;
        train_labels.extend(l);
        train_pixels.extend(p);
    }
    let (test_labels, test_pixels) = read_cifar_file(&dir.join(CIFAR_TEST_FILE))?;

    let stats = channel_stats(&train_pixels);
    let shape = FeatureShape::new(3, 32, 32);
    let build = |labels: Vec<u8>, pixels: &[u8]| {
        let samples = pixels
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let (mean, std) = stats[(i % CIFAR_PIXELS) / 1024];
                Complex::new((p as f64 / 255.0 - mean) / std, 0.0)
            })
            .collect();
        Dataset::new(
            samples,
            labels.into_iter().map(usize::from).collect(),
            CIFAR_CLASSES,
            shape,
        )
    };
    Ok((build(train_labels, &train_pixels)?, build(test_labels, &test_pixels)?))
}

/// Per-channel `(mean, std)` of pixels scaled to `[0, 1]`; a zero spread maps to 1.
fn channel_stats(pixels: &[u8]) -> [(f64, f64); 3] {
    let mut out = [(0.0, 1.0); 3];
    for (ch, slot) in out.iter_mut().enumerate() {
        let values = pixels
            .chunks_exact(CIFAR_PIXELS)
            .flat_map(|img| &img[ch * 1024..(ch + 1) * 1024])
            .map(|&p| p as f64 / 255.0);
        let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
        for v in values {
            n += 1.0;
            sum += v;
            sq += v * v;
        }
        if n > 0.0 {
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            *slot = (mean, if var > 0.0 { var.sqrt() } else { 1.0 });
        }
    }
    out
}

/// Synthetic complex Gaussian clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobConfig {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Per-entry complex variance around the class mean.
    #[serde(default = "default_variance")]
    pub variance: f64,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    4
}
fn default_dim() -> usize {
    16
}
fn default_separation() -> f64 {
    4.0
}
fn default_variance() -> f64 {
    1.0
}
fn default_per_class() -> usize {
    250
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            classes: default_classes(),
            dim: default_dim(),
            separation: default_separation(),
            variance: default_variance(),
            per_class: default_per_class(),
            seed: 0,
        }
    }
}

impl BlobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim == 0 || self.per_class < 5 {
            return Err(invalid("blobs need >= 2 classes, dim >= 1, and >= 5 samples per class"));
        }
        if !(self.separation > 0.0) || !(self.variance >= 0.0) || !self.separation.is_finite() {
            return Err(invalid("blob separation must be > 0 and variance >= 0"));
        }
        Ok(())
    }
}

/// Class means on the unit sphere of `C^dim`, scaled by the separation.
pub fn blob_means(cfg: &BlobConfig) -> Result<Vec<Vec<Complex>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    (0..cfg.classes)
        .map(|_| {
            let v = random_complex_gaussian(cfg.dim, 1, 1.0, &mut rng)?;
            let norm = v.frobenius();
            Ok(v.into_vec().into_iter().map(|z| z * (cfg.separation / norm)).collect())
        })
        .collect()
}

/// Generates the blob task and splits each class 80/20 into train/test.
pub fn synth_blobs(cfg: &BlobConfig) -> Result<(Dataset, Dataset)> {
    let means = blob_means(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let n_train = cfg.per_class * 4 / 5;
    let (mut train, mut test) = ((Vec::new(), Vec::new()), (Vec::new(), Vec::new()));
    for (class, mean) in means.iter().enumerate() {
        for s in 0..cfg.per_class {
            let noise = random_complex_gaussian(cfg.dim, 1, cfg.variance, &mut rng)?;
            let sample = mean.iter().zip(noise.as_slice()).map(|(m, n)| m + n);
            let dest = if s < n_train { &mut train } else { &mut test };
            dest.0.extend(sample);
            dest.1.push(class);
        }
    }
    let shape = FeatureShape::flat(cfg.dim);
    Ok((
        Dataset::new(train.0, train.1, cfg.classes, shape)?,
        Dataset::new(test.0, test.1, cfg.classes, shape)?,
    ))
}

/// Accuracy of assigning each sample to the closest class mean.
pub fn nearest_mean_accuracy(d: &Dataset, means: &[Vec<Complex>]) -> f64 {
    let correct = (0..d.len())
        .filter(|&i| {
            let x = d.sample(i);
            let dist = |m: &Vec<Complex>| x.iter().zip(m).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
            let best = (0..means.len())
                .min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b])))
                .unwrap_or(0);
            best == d.labels[i]
        })
        .count();
    correct as f64 / d.len().max(1) as f64
}

/// Minibatch iterator over one epoch.
pub struct Batches<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let batch = self.data.gather(&self.order[self.next..end]);
        self.next = end;
        Some(batch)
    }
}

/// One epoch of batches; the final partial batch is kept.
pub fn batches<'a, R: Rng + ?Sized>(
    data: &'a Dataset,
    batch_size: usize,
    shuffle: bool,
    rng: &mut R,
) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be >= 1"));
    }
    if data.is_empty() {
        return Err(invalid("dataset is empty"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if shuffle {
        order.shuffle(rng);
    }
    Ok(Batches {
        data,
        order,
        batch_size,
        next: 0,
    })
}

/// Writes a small CIFAR-10-format corpus whose classes differ by mean color
/// and a class-dependent stripe, so training on it is meaningful.
pub fn write_synthetic_cifar(dir: &Path, per_file: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = CIFAR_TRAIN_FILES.iter().chain(std::iter::once(&CIFAR_TEST_FILE));
    for name in names {
        let mut bytes = Vec::with_capacity(per_file * CIFAR_RECORD);
        for i in 0..per_file {
            let label = (i % CIFAR_CLASSES) as u8;
            bytes.push(label);
            for ch in 0..3 {
                let base = 40.0 + 17.0 * ((label as usize + ch * 3) % CIFAR_CLASSES) as f64;
                for y in 0..32 {
                    for _x in 0..32 {
                        let stripe = if y % CIFAR_CLASSES == label as usize { 60.0 } else { 0.0 };
                        let v = base + stripe + rng.random_range(-20.0..20.0);
                        bytes.push(v.clamp(0.0, 255.0) as u8);
                    }
                }
            }
        }
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![fill; CIFAR_RECORD];
        r[0] = label;
        r
    }

    #[test]
    fn two_records() {
        let bytes = [record(7, 10), record(0, 200)].concat();
        let (labels, pixels) = parse_cifar10(&bytes, "f").unwrap();
        assert_eq!(labels, vec![7, 0]);
        assert_eq!(pixels.len(), 2 * CIFAR_PIXELS);
    }

    #[test]
    fn truncated_names_offset() {
        let mut bytes = [record(1, 0), record(2, 0)].concat();
        bytes.push(0);
        match parse_cifar10(&bytes, "f") {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, 2 * CIFAR_RECORD as u64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_label_names_record() {
        let bytes = [record(1, 0), record(1, 0), record(10, 0)].concat();
        match parse_cifar10(&bytes, "f") {
            Err(Error::BadLabel { record, label, .. }) => assert_eq!((record, label), (2, 10)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn to_complex_round_trip() {
        let x = [1.0, 0.0, -2.5];
        let z = to_complex(&x);
        assert_eq!(z[0], Complex::new(1.0, 0.0));
        assert_eq!(z.iter().map(|v| v.re).collect::<Vec<_>>(), x);
        assert!(z.iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn degenerate_blobs_sit_on_means() {
        let cfg = BlobConfig {
            variance: 0.0,
            per_class: 10,
            ..BlobConfig::default()
        };
        let means = blob_means(&cfg).unwrap();
        let (train, test) = synth_blobs(&cfg).unwrap();
        assert_eq!((train.len(), test.len()), (32, 8));
        for i in 0..train.len() {
            assert_eq!(train.sample(i), &means[train.labels[i]][..]);
        }
        assert_eq!(nearest_mean_accuracy(&test, &means), 1.0);
        for m in &means {
            let norm: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blobs_are_seeded_and_separable() {
        let cfg = BlobConfig::default();
        assert_eq!(synth_blobs(&cfg).unwrap(), synth_blobs(&cfg).unwrap());
        let (train, test) = synth_blobs(&cfg).unwrap();
        let means = blob_means(&cfg).unwrap();
        assert!(nearest_mean_accuracy(&train, &means) >= 0.95);
        assert!(nearest_mean_accuracy(&test, &means) >= 0.95);
        assert!(synth_blobs(&BlobConfig { separation: 0.0, ..cfg }).is_err());
    }

    fn toy(n: usize) -> Dataset {
        Dataset::new(to_complex(&(0..n).map(|i| i as f64).collect::<Vec<_>>()), vec![0; n], 1, FeatureShape::flat(1)).unwrap()
    }

    #[test]
    fn batch_sizes_and_order() {
        let d = toy(130);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sizes: Vec<_> = batches(&d, 64, false, &mut rng).unwrap().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![64, 64, 2]);
        let first = batches(&d, 64, false, &mut rng).unwrap().next().unwrap();
        assert_eq!(first.x[(0, 5)], Complex::new(5.0, 0.0));
    }

    #[test]
    fn shuffled_epoch_covers_every_sample_once() {
        let d = toy(37);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            batches(&d, 8, true, &mut rng)
                .unwrap()
                .flat_map(|b| b.x.into_vec())
                .map(|z| z.re as usize)
                .collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = toy(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(batches(&d, 4, false, &mut rng).is_err());
        assert!(batches(&toy(3), 0, false, &mut rng).is_err());
    }

    #[test]
    fn synthetic_corpus_loads() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_cifar(dir.path(), 20, 1).unwrap();
        let (train, test) = load_cifar10(dir.path()).unwrap();
        assert_eq!((train.len(), test.len()), (100, 20));
        assert_eq!(train.feature_shape, FeatureShape::new(3, 32, 32));
        let red: Vec<f64> = (0..train.len()).flat_map(|i| train.sample(i)[..1024].iter().map(|z| z.re)).collect();
        let mean = red.iter().sum::<f64>() / red.len() as f64;
        assert!(mean.abs() < 1e-9);
    }
}
