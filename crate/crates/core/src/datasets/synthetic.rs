//! Writes CIFAR-10-layout batch files holding procedurally generated images.
//!
//! Each class owns a colour cast and a smooth random texture per colour
//! channel. An image carries its class cast plus a random per-image cast, its
//! class texture cyclically shifted by a few pixels and blended with the
//! texture of a random other class, and pixel noise. The casts of different
//! classes overlap, so an MLP learns the task well above chance but cannot
//! solve it perfectly, which is the regime where duplication effects are
//! visible.
//! The files go through the regular binary loader like real CIFAR-10 data.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cifar::{CIFAR_RECORD_LEN, CIFAR_SIDE};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticImageSpec {
    pub classes: u8,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Mean pixel level.
    pub brightness: f64,
    /// Pixel amplitude of the class texture.
    pub signal: f64,
    /// Weight of the blended texture from another class, relative to `signal`.
    pub confusion: f64,
    /// Pixel amplitude of each class's colour cast, a unit vector over the
    /// three channels added to every pixel.
    pub tint: f64,
    /// Per-channel standard deviation of an image's random colour cast.
    pub tint_jitter: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    /// Largest cyclic shift, in pixels, along each axis.
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for SyntheticImageSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            train_per_class: 1_250,
            test_per_class: 500,
            brightness: 40.0,
            signal: 10.0,
            confusion: 0.6,
            tint: 30.0,
            tint_jitter: 20.0,
            noise: 60.0,
            max_shift: 4,
            seed: 0,
        }
    }
}

struct Texture {
    // [channel][pixel]
    planes: Vec<Vec<f64>>,
}

impl Texture {
    fn random(r: &mut rng::Rng) -> Self {
        let n = CIFAR_SIDE * CIFAR_SIDE;
        let planes = (0..3)
            .map(|_| {
                let waves: Vec<(f64, f64, f64)> = (0..4)
                    .map(|_| {
                        let fx = f64::from(r.random_range(0..4u8));
                        let fy = f64::from(r.random_range(1..4u8));
                        (fx, fy, r.random_range(0.0..TAU))
                    })
                    .collect();
                let mut plane: Vec<f64> = (0..n)
                    .map(|p| {
                        let (x, y) = ((p % CIFAR_SIDE) as f64, (p / CIFAR_SIDE) as f64);
                        let s = CIFAR_SIDE as f64;
                        waves.iter().map(|&(fx, fy, ph)| (TAU * (fx * x + fy * y) / s + ph).sin()).sum()
                    })
                    .collect();
                let rms = (plane.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
                plane.iter_mut().for_each(|v| *v /= rms);
                plane
            })
            .collect();
        Self { planes }
    }

    fn at(&self, c: usize, x: usize, y: usize) -> f64 {
        self.planes[c][y * CIFAR_SIDE + x]
    }
}

fn unit3(r: &mut rng::Rng) -> [f64; 3] {
    let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(r));
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.map(|x| x / n)
}

fn render(
    spec: &SyntheticImageSpec,
    textures: &[Texture],
    tints: &[[f64; 3]],
    label: usize,
    r: &mut rng::Rng,
    out: &mut Vec<u8>,
) {
    let k = textures.len();
    let other = if k > 1 { (label + r.random_range(1..k)) % k } else { label };
    let span = 2 * spec.max_shift + 1;
    let shift = |r: &mut rng::Rng| r.random_range(0..span);
    let (sx, sy, ox, oy) = (shift(r), shift(r), shift(r), shift(r));
    let cast: Vec<f64> = (0..3)
        .map(|c| {
            let z: f64 = StandardNormal.sample(r);
            spec.tint * tints[label][c] + spec.tint_jitter * z
        })
        .collect();
    out.push(label as u8);
    for (c, cast) in cast.iter().enumerate() {
        for y in 0..CIFAR_SIDE {
            for x in 0..CIFAR_SIDE {
                let own = textures[label].at(c, (x + sx) % CIFAR_SIDE, (y + sy) % CIFAR_SIDE);
                let mix = textures[other].at(c, (x + ox) % CIFAR_SIDE, (y + oy) % CIFAR_SIDE);
                let z: f64 = StandardNormal.sample(r);
                let v = spec.brightness + cast + spec.signal * (own + spec.confusion * mix) + spec.noise * z;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
}

fn batch(spec: &SyntheticImageSpec, textures: &[Texture], tints: &[[f64; 3]], per_class: usize, seed: u64) -> Vec<u8> {
    let mut r = rng::rng_from(seed);
    let k = textures.len();
    let mut out = Vec::with_capacity(per_class * k * CIFAR_RECORD_LEN);
    // Interleave classes like the shuffled real batches.
    for i in 0..per_class * k {
        render(spec, textures, tints, i % k, &mut r, &mut out);
    }
    out
}

/// Writes `data_batch_1.bin` and `test_batch.bin` into `dir`.
pub fn write_synthetic_cifar(dir: &Path, spec: &SyntheticImageSpec) -> Result<()> {
    if spec.classes == 0 || spec.classes > 10 {
        return Err(Error::config(format!("synthetic classes must be in 1..=10, got {}", spec.classes)));
    }
    let mut r = rng::rng_from(rng::derive_seed(spec.seed, &[rng::stream::MODEL]));
    let textures: Vec<Texture> = (0..spec.classes).map(|_| Texture::random(&mut r)).collect();
    let tints: Vec<[f64; 3]> = (0..spec.classes).map(|_| unit3(&mut r)).collect();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let train =
        batch(spec, &textures, &tints, spec.train_per_class, rng::derive_seed(spec.seed, &[rng::stream::TRAIN]));
    let test = batch(spec, &textures, &tints, spec.test_per_class, rng::derive_seed(spec.seed, &[rng::stream::TEST]));
    for (name, bytes) in [("data_batch_1.bin", train), ("test_batch.bin", test)] {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
