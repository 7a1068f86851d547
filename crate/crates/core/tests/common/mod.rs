#![allow(dead_code)]

use std::path::{Path, PathBuf};

use diffractnet::data::{Dataset, IMAGE_PIXELS, IMAGE_SIDE};
use diffractnet::{ComplexField, GridGeometry};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noisy images where class `c` lights a 7×7 patch at a class-specific spot.
pub fn synthetic_dataset(n: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * IMAGE_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.gen_range(0..classes);
        let (px, py) = (3 + 6 * (c % 3), 3 + 6 * (c / 3 % 3));
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let inside = (px..px + 7).contains(&x) && (py..py + 7).contains(&y);
                let base: u8 = if inside { 200 } else { 0 };
                images.push(base.saturating_add(rng.gen_range(0..40)));
            }
        }
        labels.push(c);
    }
    Dataset::new(images, labels, classes).unwrap()
}

pub struct Fixture {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

/// Writes a synthetic train/test pair as IDX files under `dir`.
pub fn write_fixture(dir: &Path, n_train: usize, n_test: usize, classes: usize) -> Fixture {
    std::fs::create_dir_all(dir).unwrap();
    let f = Fixture {
        train_images: dir.join("train-images"),
        train_labels: dir.join("train-labels"),
        test_images: dir.join("test-images"),
        test_labels: dir.join("test-labels"),
    };
    synthetic_dataset(n_train, classes, 1)
        .write_idx(&f.train_images, &f.train_labels)
        .unwrap();
    synthetic_dataset(n_test, classes, 2)
        .write_idx(&f.test_images, &f.test_labels)
        .unwrap();
    f
}

impl Fixture {
    /// `--set` arguments pointing the data keys at this fixture.
    pub fn set_args(&self) -> Vec<String> {
        [
            ("data.train_images", &self.train_images),
            ("data.train_labels", &self.train_labels),
            ("data.test_images", &self.test_images),
            ("data.test_labels", &self.test_labels),
        ]
        .iter()
        .flat_map(|(k, p)| ["--set".to_string(), format!("{k}={}", p.display())])
        .collect()
    }
}

/// Small, fast network settings shared by the CLI tests.
pub const SMALL_NET: &[&str] = &[
    "net.nx=32",
    "net.ny=32",
    "net.layers=2",
    "net.classes=4",
    "net.spacing=10.0",
    "train.batch_size=8",
    "log.wall_clock=false",
];

pub fn random_field(geometry: GridGeometry, rng: &mut ChaCha8Rng) -> ComplexField {
    let values = (0..geometry.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ComplexField::from_values(geometry, values).unwrap()
}

pub fn unit_energy(field: ComplexField) -> ComplexField {
    let e = field.total_energy();
    field.scale(Complex64::new(1.0 / e.sqrt(), 0.0))
}

/// Runs the CLI in-process and returns (exit code, stdout, stderr).
pub fn run_cli(args: &[String]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("diffractnet".to_string()).chain(args.iter().cloned());
    let code = diffractnet::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

pub fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

pub fn with_sets(mut base: Vec<String>, sets: &[&str]) -> Vec<String> {
    for s in sets {
        base.push("--set".into());
        base.push(s.to_string());
    }
    base
}
