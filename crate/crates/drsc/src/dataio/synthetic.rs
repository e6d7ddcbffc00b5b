//! Synthetic two-view dataset with known latent structure.
//!
//! Each item has a class-determined shared factor and two independent
//! view-private factors. Both views are fixed random linear maps of
//! (shared, private) plus optional noise, so a model that separates the
//! shared part from the private parts has a ground truth to be checked
//! against: the class is recoverable from the shared factor alone, and
//! swapping private factors between items must not change the class.

use crate::autograd::Tensor;
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub shared_dim: usize,
    pub private_dim: usize,
    pub noise_scale: f64,
    /// [channels, length] of the first view (token-like grid).
    pub text_shape: [usize; 2],
    /// [channels, length] of the second view (spectrogram-like grid).
    pub mel_shape: [usize; 2],
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 25,
            n_per_class: 20,
            shared_dim: 8,
            private_dim: 4,
            noise_scale: 0.05,
            text_shape: [16, 12],
            mel_shape: [24, 16],
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticItem {
    pub text: Tensor,
    pub mel: Tensor,
    pub label: usize,
    /// Ground-truth shared factor (class signal), for probe tests.
    pub shared: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub train: Vec<SyntheticItem>,
    pub test: Vec<SyntheticItem>,
    /// Per-class prototype shared factors.
    pub prototypes: Vec<Vec<f64>>,
    pub spec: SyntheticSpec,
}

fn random_map(rows: usize, cols: usize, rng: &mut SeededRng) -> Vec<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    (0..rows * cols).map(|_| rng.normal() * scale).collect()
}

fn apply_map(map: &[f64], input: &[f64], rows: usize) -> Vec<f64> {
    let cols = input.len();
    (0..rows)
        .map(|r| (0..cols).map(|c| map[r * cols + c] * input[c]).sum())
        .collect()
}

/// Flat-argument convenience over [`generate`] for the common knobs.
pub fn make_synthetic_dataset(
    n_classes: usize,
    n_per_class: usize,
    shared_dim: usize,
    private_dim: usize,
    noise_scale: f64,
    seed: u64,
) -> SyntheticDataset {
    generate(&SyntheticSpec {
        n_classes,
        n_per_class,
        shared_dim,
        private_dim,
        noise_scale,
        seed,
        ..SyntheticSpec::default()
    })
}

/// Generate the dataset. Fully determined by `spec` (including `seed`).
pub fn generate(spec: &SyntheticSpec) -> SyntheticDataset {
    let mut rng = SeededRng::substream(spec.seed, 0xD5);
    let d_in = spec.shared_dim + spec.private_dim;
    let text_len: usize = spec.text_shape[0] * spec.text_shape[1];
    let mel_len: usize = spec.mel_shape[0] * spec.mel_shape[1];

    // prototypes are spread at 2σ so the 0.3σ within-class jitter never
    // brings an item closer to a foreign prototype than to its own
    let prototypes: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..spec.shared_dim).map(|_| 2.0 * rng.normal()).collect())
        .collect();
    let text_map = random_map(text_len, d_in, &mut rng);
    let mel_map = random_map(mel_len, d_in, &mut rng);

    let mut items = Vec::with_capacity(spec.n_classes * spec.n_per_class);
    for (label, proto) in prototypes.iter().enumerate() {
        for _ in 0..spec.n_per_class {
            let shared: Vec<f64> = proto.iter().map(|&p| p + 0.3 * rng.normal()).collect();
            let make_view = |rng: &mut SeededRng, map: &[f64], len: usize, shape: [usize; 2]| {
                let mut input = shared.clone();
                for _ in 0..spec.private_dim {
                    input.push(rng.normal());
                }
                let mut v = apply_map(map, &input, len);
                for x in v.iter_mut() {
                    *x += spec.noise_scale * rng.normal();
                }
                Tensor::new(vec![shape[0], shape[1]], v)
            };
            let text = make_view(&mut rng, &text_map, text_len, spec.text_shape);
            let mel = make_view(&mut rng, &mel_map, mel_len, spec.mel_shape);
            items.push(SyntheticItem { text, mel, label, shared });
        }
    }

    let n_test_per_class = (spec.test_fraction * spec.n_per_class as f64).round() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for chunk in items.chunks(spec.n_per_class) {
        let mut order: Vec<usize> = (0..chunk.len()).collect();
        rng.shuffle(&mut order);
        for (rank, &i) in order.iter().enumerate() {
            if rank < n_test_per_class {
                test.push(chunk[i].clone());
            } else {
                train.push(chunk[i].clone());
            }
        }
    }
    SyntheticDataset { train, test, prototypes, spec: spec.clone() }
}
