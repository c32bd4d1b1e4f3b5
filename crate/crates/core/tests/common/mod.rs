#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use strength_init::data::{
    encode_idx_images, encode_idx_labels, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS,
};
use strength_init::mlp::{Mlp, MlpArch};
use strength_init::{derive_stream, init, InitMethod, InitSpec, RngStream, StreamPurpose};

pub const SIDE: u32 = 4;
pub const FEATURES: usize = (SIDE * SIDE) as usize;

/// Class `c` lights pixel `c` brightly on top of uniform noise.
fn synthetic_split(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = RngStream::new(StreamPurpose::Split, seed, 9, 9);
    let mut pixels = Vec::with_capacity(n * FEATURES);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = (i % 10) as u8;
        for p in 0..FEATURES {
            let noise: u8 = rng.gen_range(0..80);
            pixels.push(if p == c as usize {
                200 + noise / 2
            } else {
                noise
            });
        }
        labels.push(c);
    }
    (pixels, labels)
}

/// Writes a tiny MNIST-layout dataset of 4x4 images under `root/mnist`.
pub fn write_synthetic_mnist(root: &Path, train: usize, test: usize) {
    let dir = root.join("mnist");
    std::fs::create_dir_all(&dir).unwrap();
    let (px, lb) = synthetic_split(train, 1);
    std::fs::write(dir.join(TRAIN_IMAGES), encode_idx_images(SIDE, SIDE, &px)).unwrap();
    std::fs::write(dir.join(TRAIN_LABELS), encode_idx_labels(&lb)).unwrap();
    let (px, lb) = synthetic_split(test, 2);
    std::fs::write(dir.join(TEST_IMAGES), encode_idx_images(SIDE, SIDE, &px)).unwrap();
    std::fs::write(dir.join(TEST_LABELS), encode_idx_labels(&lb)).unwrap();
}

pub const FD_STEP: f64 = 1e-5;
/// Central differences carry about `eps * |L| / h` of roundoff; below this
/// magnitude a relative error only measures that noise.
pub const FD_FLOOR: f64 = 1e-5;

/// Random layer sizes with at most `max_params` parameters.
pub fn random_arch(rng: &mut impl Rng, max_params: usize) -> Vec<usize> {
    loop {
        let depth = rng.gen_range(2..=4);
        let mut sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=9)).collect();
        sizes.push(rng.gen_range(2..=10));
        let params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params <= max_params {
            return sizes;
        }
    }
}

/// Largest relative error between backprop and central differences over
/// every parameter of a random network, and the parameter count.
pub fn gradient_check(sizes: &[usize], batch: usize, seed: u64) -> (f64, usize) {
    let arch = MlpArch::new(sizes.to_vec()).unwrap();
    let weights = (0..sizes.len() - 1)
        .map(|l| {
            let spec = InitSpec::new(InitMethod::GlorotNormal, sizes[l], sizes[l + 1]);
            init(&spec, &mut derive_stream(seed, l as u32, 0)).unwrap()
        })
        .collect();
    let mut rng = RngStream::new(StreamPurpose::Split, seed, 0, 0);
    let biases = sizes[1..]
        .iter()
        .map(|&n| (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect())
        .collect();
    let mut net = Mlp::new(arch, weights)
        .unwrap()
        .with_biases(biases)
        .unwrap();
    let x: Vec<f64> = (0..batch * sizes[0])
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let classes = *sizes.last().unwrap();
    let y: Vec<u8> = (0..batch)
        .map(|_| rng.gen_range(0..classes) as u8)
        .collect();

    let grads = net.loss_and_gradients(&x, &y).unwrap().grads;
    let h = FD_STEP;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for l in 0..sizes.len() - 1 {
        for (bias, analytic) in [(false, &grads.weights[l]), (true, &grads.biases[l])] {
            for (i, &g) in analytic.iter().enumerate() {
                let orig = *net.param_mut(l, i, bias);
                *net.param_mut(l, i, bias) = orig + h;
                let up = net.loss(&x, &y).unwrap();
                *net.param_mut(l, i, bias) = orig - h;
                let down = net.loss(&x, &y).unwrap();
                *net.param_mut(l, i, bias) = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(FD_FLOOR);
                worst = worst.max(rel);
                count += 1;
            }
        }
    }
    (worst, count)
}

/// Exact law of sequential weighted sampling without replacement over three
/// items: probability of each of the six draw orders.
pub fn draw_order_law(p: [f64; 3]) -> Vec<([usize; 3], f64)> {
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    perms
        .iter()
        .map(|&o| (o, p[o[0]] * p[o[1]] / (1.0 - p[o[0]])))
        .collect()
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}
