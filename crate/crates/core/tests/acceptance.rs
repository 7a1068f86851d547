//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Criteria 6 and 7 train 12 networks each on real data and take about an hour
//! on one core. They run only when `DIFFRACTNET_ACCEPTANCE_LONG=1`; the dataset
//! directories come from `DIFFRACTNET_FASHION_DIR` and `DIFFRACTNET_EMNIST_DIR`.

mod common;

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{random_field, unit_energy, write_fixture};
use diffractnet::config::RunConfig;
use diffractnet::data::{self, Dataset};
use diffractnet::layers::{modulate, modulate_backward, ModulationParams};
use diffractnet::network::{detector_readout, loss_and_grad, pick_frequencies, ParamId};
use diffractnet::propagation::{direct_sum_oracle, propagate, propagate_adjoint};
use diffractnet::training::{self, grad_check_report, OptimizerState};
use diffractnet::{
    checkpoint, ComplexField, DetectorLayout, GridGeometry, Method, MfdNet, MfdNetConfig,
    PropagationKernel,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget_s: f64, detail: String) -> Outcome {
    let s = elapsed.as_secs_f64();
    check(
        s < budget_s,
        format!("{detail}; {s:.2} s (budget {budget_s} s)"),
    )
}

/// Independent direct sum of the scalar impulse `(dz/r²)(1/(2πr) + 1/(jλ))e^{j2πr/λ}`.
fn reference_propagate(field: &ComplexField, wavelength: f64, z: f64) -> Vec<Complex64> {
    let g = field.geometry();
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    for oy in 0..g.ny {
        for ox in 0..g.nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for iy in 0..g.ny {
                for ix in 0..g.nx {
                    let dx = (ox as f64 - ix as f64) * g.pitch;
                    let dy = (oy as f64 - iy as f64) * g.pitch;
                    let r = (dx * dx + dy * dy + z * z).sqrt();
                    let radial = Complex64::new(1.0 / (2.0 * PI * r), -1.0 / wavelength);
                    let phase = Complex64::from_polar(1.0, 2.0 * PI * r / wavelength);
                    acc += field.get(ix, iy) * radial * phase * (z / (r * r));
                }
            }
            out[g.index(ox, oy)] = acc * g.pitch * g.pitch;
        }
    }
    out
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_oracle, mut worst_reference) = (0.0f64, 0.0f64);
    for n in [8, 16] {
        for _ in 0..10 {
            let g = GridGeometry::square(n, rng.gen_range(0.5..1.5)).unwrap();
            let wavelength = rng.gen_range(0.5..1.5);
            let z = rng.gen_range(1.0..30.0);
            let u = random_field(g, &mut rng);
            let k = PropagationKernel::build(g, wavelength, z, Method::SampledRs).unwrap();
            let fast = propagate(&u, &k).unwrap();
            let oracle = direct_sum_oracle(&u, wavelength, z).unwrap();
            worst_oracle = worst_oracle.max(fast.max_abs_diff(&oracle).unwrap());
            let reference = reference_propagate(&u, wavelength, z);
            worst_reference = worst_reference.max(max_diff(fast.values(), &reference));
        }
    }
    let ok = worst_oracle < 1e-10 && worst_reference < 1e-10;
    let detail = format!(
        "max |fast - oracle| {worst_oracle:.2e}, vs independent sum {worst_reference:.2e} (tol 1e-10)"
    );
    within(start.elapsed(), 5.0, detail).and_then(|d| check(ok, d))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for method in [Method::SampledRs, Method::AngularSpectrum] {
        for _ in 0..20 {
            let g = GridGeometry::new(
                rng.gen_range(4..40),
                rng.gen_range(4..40),
                rng.gen_range(0.3..2.0),
            )
            .unwrap();
            let k = PropagationKernel::build(
                g,
                rng.gen_range(0.4..2.0),
                rng.gen_range(0.5..50.0),
                method,
            )
            .unwrap();
            let u = random_field(g, &mut rng);
            let v = random_field(g, &mut rng);
            let lhs = propagate(&u, &k).unwrap().inner(&v).unwrap();
            let rhs = u.inner(&propagate_adjoint(&v, &k).unwrap()).unwrap();
            worst = worst.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()));
        }
    }
    let detail = format!("max relative |<Ku,v> - <u,K*v>| {worst:.2e} over 40 trials (tol 1e-10)");
    within(start.elapsed(), 5.0, detail).and_then(|d| check(worst < 1e-10, d))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // Arbitrary inputs, including wavelengths that make most of the band evanescent.
    let mut worst_growth = f64::NEG_INFINITY;
    for _ in 0..20 {
        let g = GridGeometry::new(rng.gen_range(8..48), rng.gen_range(8..48), 1.0).unwrap();
        let k = PropagationKernel::build(
            g,
            rng.gen_range(0.5..3.0),
            rng.gen_range(0.5..40.0),
            Method::AngularSpectrum,
        )
        .unwrap();
        let u = random_field(g, &mut rng);
        let ratio = propagate(&u, &k).unwrap().total_energy() / u.total_energy();
        worst_growth = worst_growth.max(ratio - 1.0);
    }

    // Band-limited inputs: spectrum confined well inside the propagating disc.
    let mut worst_loss = 0.0f64;
    for _ in 0..10 {
        let n = 32;
        let g = GridGeometry::square(n, 1.0).unwrap();
        let wavelength = 1.5;
        let cutoff = 0.9 / wavelength;
        let freq = |i: usize| {
            let s = if i < n.div_ceil(2) {
                i as f64
            } else {
                i as f64 - n as f64
            };
            s / n as f64
        };
        let mut spectrum = random_field(g, &mut rng).into_values();
        for y in 0..n {
            for x in 0..n {
                if freq(x).powi(2) + freq(y).powi(2) >= cutoff * cutoff {
                    spectrum[g.index(x, y)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        let u = ComplexField::from_values(g, spectrum).unwrap().ifft2();
        let k = PropagationKernel::build(
            g,
            wavelength,
            rng.gen_range(1.0..100.0),
            Method::AngularSpectrum,
        )
        .unwrap();
        let out = propagate(&u, &k).unwrap();
        worst_loss = worst_loss.max((out.total_energy() / u.total_energy() - 1.0).abs());
    }

    let mut worst_modulation = 0.0f64;
    for _ in 0..20 {
        let g = GridGeometry::new(rng.gen_range(2..64), rng.gen_range(2..64), 1.0).unwrap();
        let params = ModulationParams::random(g, false, false, &mut rng).unwrap();
        let u = random_field(g, &mut rng);
        let h = modulate(&u, &params).unwrap();
        worst_modulation = worst_modulation.max((h.total_energy() / u.total_energy() - 1.0).abs());
    }

    let ok = worst_growth <= 1e-12 && worst_loss < 1e-9 && worst_modulation < 1e-12;
    let detail = format!(
        "max growth {worst_growth:.2e} (tol 1e-12), band-limited drift {worst_loss:.2e} (tol 1e-9), \
         phase-only drift {worst_modulation:.2e} (tol 1e-12)"
    );
    within(start.elapsed(), 5.0, detail).and_then(|d| check(ok, d))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = GridGeometry::square(16, 1.0).unwrap();
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for layers in [1, 3, 5] {
        for channels in [1, 3] {
            let config = MfdNetConfig {
                num_layers: layers,
                wavelengths: pick_frequencies(0.8, 1.2, channels).unwrap(),
                geometry: g,
                num_classes: 4,
                amplitude_trainable: true,
                bias_enabled: true,
                ..MfdNetConfig::default()
            };
            let mut net = MfdNet::new(config, rng.gen()).unwrap();
            // Move away from the symmetric start so every parameter class matters.
            for l in 0..layers {
                let layer = &mut net.layers_mut()[l];
                layer
                    .amplitude
                    .iter_mut()
                    .for_each(|a| *a = rng.gen_range(0.5..1.5));
                layer.bias = Some(Complex64::new(
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                ));
            }
            for w in net.channel_weights_mut() {
                *w = rng.gen_range(0.2..1.0);
            }
            let input = unit_energy(random_field(g, &mut rng));
            let label = rng.gen_range(0..4);
            let report =
                grad_check_report(&net, &input, label, 20, 1e-6, rng.gen(), |_| {}).unwrap();
            let kinds =
                |f: fn(&ParamId) -> bool| report.probes.iter().filter(|p| f(&p.param)).count();
            let covered = kinds(|p| matches!(p, ParamId::Phase { .. })) > 0
                && kinds(|p| matches!(p, ParamId::Amplitude { .. })) > 0
                && kinds(|p| matches!(p, ParamId::BiasRe { .. } | ParamId::BiasIm { .. })) > 0
                && kinds(|p| matches!(p, ParamId::ChannelWeight(_))) > 0;
            if !covered {
                return Err(format!(
                    "L={layers} F={channels}: a parameter class was not probed"
                ));
            }
            let e = report.max_rel_error();
            worst = worst.max(e);
            lines.push(format!("L{layers}F{channels}={e:.1e}"));
        }
    }
    let detail = format!(
        "max rel err {worst:.2e} (tol 1e-4) [{}], 20 probes each over phase/amplitude/bias/weights",
        lines.join(" ")
    );
    within(start.elapsed(), 60.0, detail).and_then(|d| check(worst < 1e-4, d))
}

/// Single-wavelength stack written out step by step from the public building blocks.
fn hand_pipeline(
    net: &MfdNet,
    input: &ComplexField,
    label: usize,
) -> (Vec<f64>, Vec<(Vec<f64>, Vec<f64>, Complex64)>, f64) {
    let cfg = net.config();
    let g = cfg.geometry;
    let kernel =
        PropagationKernel::build(g, cfg.wavelengths[0], cfg.layer_spacing, cfg.method).unwrap();
    let layout = DetectorLayout::grid(g, cfg.num_classes).unwrap();

    let mut zs = Vec::new();
    let mut u = input.clone();
    for layer in net.layers() {
        let z = propagate(&u, &kernel).unwrap();
        u = modulate(&z, layer).unwrap();
        zs.push(z);
    }
    let out = propagate(&u, &kernel).unwrap();
    let readout = out.modulus();
    let logits = detector_readout(&readout, &layout).unwrap();
    let (_, grad_logits) = loss_and_grad(&logits, label, cfg.loss).unwrap();

    let grad_w: f64 = grad_logits.iter().zip(&logits).map(|(g, s)| g * s).sum();
    let mut grad_map = vec![0.0; g.len()];
    for (region, gl) in layout.regions().iter().zip(&grad_logits) {
        for y in region.y0..region.y0 + region.height {
            for x in region.x0..region.x0 + region.width {
                grad_map[g.index(x, y)] = *gl;
            }
        }
    }
    let grad_out: Vec<Complex64> = out
        .values()
        .iter()
        .zip(&grad_map)
        .map(|(u, gm)| {
            let m = u.norm();
            if m > 0.0 {
                u * (gm / m)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let mut grad =
        propagate_adjoint(&ComplexField::from_values(g, grad_out).unwrap(), &kernel).unwrap();
    let mut layer_grads =
        vec![(Vec::new(), Vec::new(), Complex64::new(0.0, 0.0)); net.layers().len()];
    for l in (0..net.layers().len()).rev() {
        let (grad_z, pg) = modulate_backward(&grad, &zs[l], &net.layers()[l]).unwrap();
        layer_grads[l] = (pg.d_phase, pg.d_amplitude, pg.d_bias.unwrap_or_default());
        grad = propagate_adjoint(&grad_z, &kernel).unwrap();
    }
    (logits, layer_grads, grad_w)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = GridGeometry::square(24, 1.0).unwrap();
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for trial in 0..3 {
        let config = MfdNetConfig {
            num_layers: 3,
            wavelengths: vec![rng.gen_range(0.8..1.2)],
            layer_spacing: 15.0,
            geometry: g,
            num_classes: 4,
            amplitude_trainable: trial > 0,
            bias_enabled: trial > 1,
            ..MfdNetConfig::default()
        };
        let mut net = MfdNet::new(config, rng.gen()).unwrap();
        net.channel_weights_mut()[0] = 1.0;
        if trial > 0 {
            for layer in net.layers_mut() {
                layer
                    .amplitude
                    .iter_mut()
                    .for_each(|a| *a = rng.gen_range(0.5..1.5));
                if layer.bias.is_some() {
                    layer.bias = Some(Complex64::new(0.01, -0.02));
                }
            }
        }
        let input = unit_energy(random_field(g, &mut rng));
        let label = rng.gen_range(0..4);
        let (hand_logits, hand_layers, hand_w) = hand_pipeline(&net, &input, label);
        let (_, logits, grads) = net.loss_and_gradients(&input, label).unwrap();
        let mut same = |a: f64, b: f64| {
            compared += 1;
            mismatches += usize::from(a != b);
        };
        logits
            .iter()
            .zip(&hand_logits)
            .for_each(|(a, b)| same(*a, *b));
        same(grads.channel_weights[0], hand_w);
        for (lg, (dp, da, db)) in grads.layers.iter().zip(&hand_layers) {
            lg.d_phase.iter().zip(dp).for_each(|(a, b)| same(*a, *b));
            if net.config().amplitude_trainable {
                lg.d_amplitude
                    .iter()
                    .zip(da)
                    .for_each(|(a, b)| same(*a, *b));
            }
            if let Some(b) = lg.d_bias {
                same(b.re, db.re);
                same(b.im, db.im);
            }
        }
    }

    // Duplicate wavelengths collapse to one channel scaled by the weight sum.
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let base = MfdNetConfig {
            num_layers: 2,
            wavelengths: vec![1.0; 3],
            layer_spacing: 15.0,
            geometry: g,
            num_classes: 4,
            ..MfdNetConfig::default()
        };
        let mut triple = MfdNet::new(base.clone(), rng.gen()).unwrap();
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        triple.channel_weights_mut().copy_from_slice(&w);
        let single = MfdNet::from_parts(
            MfdNetConfig {
                wavelengths: vec![1.0],
                ..base
            },
            triple.layers().to_vec(),
            vec![w.iter().sum()],
        )
        .unwrap();
        let input = unit_energy(random_field(g, &mut rng));
        let t3 = triple.forward(&input).unwrap();
        let t1 = single.forward(&input).unwrap();
        let scaled = t3.channels[0].readout.scale(w.iter().sum());
        for (a, b) in t3
            .merged
            .values()
            .iter()
            .zip(scaled.values())
            .chain(t3.merged.values().iter().zip(t1.merged.values()))
        {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in t3.logits.iter().zip(&t1.logits) {
            worst = worst.max((a - b).abs());
        }
    }

    let ok = mismatches == 0 && worst < 1e-12;
    check(
        ok,
        format!(
            "F=1 vs hand pipeline: {mismatches} of {compared} values differ bitwise; \
             duplicate factoring max diff {worst:.2e} (tol 1e-12)"
        ),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = write_fixture(dir.path(), 96, 32, 4);
    let bin = env!("CARGO_BIN_EXE_diffractnet");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        // Same output directory both times: it is part of the recorded config.
        let out_dir = dir.path().join("run");
        let mut cmd = Command::new(bin);
        cmd.env("DIFFRACTNET_THREADS", threads)
            .args(["train", "--seed", "11", "--out"])
            .arg(&out_dir)
            .args(fixture.set_args())
            .args(["--set", "train.epochs=3"]);
        for s in common::SMALL_NET {
            cmd.args(["--set", s]);
        }
        let status = cmd.output().map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "train failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        let csv = std::fs::read(out_dir.join("metrics.csv")).map_err(|e| e.to_string())?;
        let ckpt = std::fs::read(out_dir.join("model.mfdn")).map_err(|e| e.to_string())?;
        outputs.push((csv, ckpt));
    }
    let csv_same = outputs[0].0 == outputs[1].0;
    let ckpt_same = outputs[0].1 == outputs[1].1;
    let rows = String::from_utf8_lossy(&outputs[0].0).lines().count() - 1;
    check(
        csv_same && ckpt_same && rows == 3,
        format!(
            "two runs (1 and 3 worker threads): CSV identical {csv_same} ({rows} rows), \
             checkpoint identical {ckpt_same} ({} bytes)",
            outputs[0].1.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    // Hand-written IDX bytes: three 2×3 images and their labels.
    let images: Vec<u8> = [
        &[0u8, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 3][..],
        &[
            0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255, 9, 8, 7, 6, 5, 4,
        ],
    ]
    .concat();
    let labels = vec![0u8, 0, 8, 1, 0, 0, 0, 3, 2, 0, 1];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut idx_ok = true;
    for bytes in [&images, &labels] {
        let tensor = data::parse_idx(bytes).map_err(|e| e.to_string())?;
        idx_ok &= tensor.encode().map_err(|e| e.to_string())? == **bytes;
        let path = dir.path().join("t.idx");
        data::write_idx(&path, &tensor).map_err(|e| e.to_string())?;
        idx_ok &= std::fs::read(&path).map_err(|e| e.to_string())? == **bytes;
        idx_ok &= data::load_idx(&path).map_err(|e| e.to_string())? == tensor;
    }
    let set = common::synthetic_dataset(50, 10, 9);
    let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
    set.write_idx(&ip, &lp).map_err(|e| e.to_string())?;
    let back: Dataset = data::load_dataset(&ip, &lp, 10, false).map_err(|e| e.to_string())?;
    idx_ok &= back == set;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut config = RunConfig::default();
    for s in [
        "net.nx=12",
        "net.ny=12",
        "net.layers=3",
        "net.classes=4",
        "net.bias=true",
        "net.amplitude_trainable=true",
    ] {
        config.apply_override(s).map_err(|e| e.to_string())?;
    }
    let mut net = MfdNet::new(config.net_config().unwrap(), 1).unwrap();
    for layer in net.layers_mut() {
        layer
            .amplitude
            .iter_mut()
            .for_each(|a| *a = rng.gen_range(0.0..2.0));
        layer
            .phase
            .iter_mut()
            .for_each(|p| *p = rng.gen_range(-1e3..1e3));
        layer.bias = Some(Complex64::new(rng.gen(), rng.gen()));
    }
    net.channel_weights_mut()
        .iter_mut()
        .for_each(|w| *w = rng.gen_range(-2.0..2.0));
    let bytes = checkpoint::encode(&config, &net).map_err(|e| e.to_string())?;
    let (config2, net2) = checkpoint::decode(&bytes).map_err(|e| e.to_string())?;
    let bitwise = net2.layers().iter().zip(net.layers()).all(|(a, b)| {
        a.amplitude
            .iter()
            .zip(&b.amplitude)
            .all(|(x, y)| x.to_bits() == y.to_bits())
            && a.phase
                .iter()
                .zip(&b.phase)
                .all(|(x, y)| x.to_bits() == y.to_bits())
            && a.bias.map(|c| (c.re.to_bits(), c.im.to_bits()))
                == b.bias.map(|c| (c.re.to_bits(), c.im.to_bits()))
    }) && net2
        .channel_weights()
        .iter()
        .zip(net.channel_weights())
        .all(|(x, y)| x.to_bits() == y.to_bits())
        && config2 == config
        && checkpoint::encode(&config2, &net2).map_err(|e| e.to_string())? == bytes;
    let mut undetected = Vec::new();
    for i in 0..bytes.len() {
        for mask in [0x01u8, 0x80, 0xff] {
            let mut bad = bytes.clone();
            bad[i] ^= mask;
            if checkpoint::decode(&bad).is_ok() {
                undetected.push(i);
            }
        }
    }
    check(
        idx_ok && bitwise && undetected.is_empty(),
        format!(
            "IDX roundtrip {idx_ok}; checkpoint bitwise {bitwise}; {} of {} single-byte corruptions undetected",
            undetected.len(),
            bytes.len() * 3
        ),
    )
}

/// Protocol for the multi-channel trend runs. Batch size and learning rate are
/// not fixed by the criterion; these were chosen on a pilot run (F=1 only).
const TREND_LR: f64 = 0.01;
const TREND_BATCH: usize = 32;

fn find_split(dir: &Path, stems: &[&str]) -> Option<PathBuf> {
    stems
        .iter()
        .flat_map(|s| [dir.join(s), dir.join(format!("{s}.gz"))])
        .find(|p| p.exists())
}

struct Trend {
    classes: usize,
    grid: usize,
    orientation_fix: bool,
    f1_floor: f64,
}

fn trend(dir_var: &str, prefixes: &[&str], spec: Trend) -> Outcome {
    let dir = std::env::var_os(dir_var)
        .map(PathBuf::from)
        .ok_or(format!("{dir_var} is not set; dataset unavailable"))?;
    let locate = |kind: &str, part: &str| {
        let stems: Vec<String> = prefixes
            .iter()
            .map(|p| format!("{p}{kind}-{part}"))
            .collect();
        let stems: Vec<&str> = stems.iter().map(String::as_str).collect();
        find_split(&dir, &stems).ok_or(format!("no {kind}-{part} file in {}", dir.display()))
    };
    let mut config = RunConfig::default();
    config.data.train_images = locate("train", "images-idx3-ubyte")?;
    config.data.train_labels = locate("train", "labels-idx1-ubyte")?;
    config.data.test_images =
        locate("test", "images-idx3-ubyte").or_else(|_| locate("t10k", "images-idx3-ubyte"))?;
    config.data.test_labels =
        locate("test", "labels-idx1-ubyte").or_else(|_| locate("t10k", "labels-idx1-ubyte"))?;
    config.data.orientation_fix = spec.orientation_fix;
    config.net.classes = spec.classes;
    config.net.nx = spec.grid;
    config.net.ny = spec.grid;
    config.net.layers = 5;
    config.train.epochs = 10;
    config.train.learning_rate = TREND_LR;
    config.train.batch_size = TREND_BATCH;
    config.train.train_subset = Some(10_000);
    config.train.test_subset = Some(2_000);
    let train_set = diffractnet::cli::load_train(&config).map_err(|e| e.to_string())?;
    let test_set = diffractnet::cli::load_test(&config).map_err(|e| e.to_string())?;

    let mut means = Vec::new();
    let mut runs = Vec::new();
    for channels in [1, 3] {
        let mut accs = Vec::new();
        for seed in 0..3u64 {
            let mut c = config.clone();
            c.net.channels = channels;
            c.train.seed = seed;
            let mut net = MfdNet::new(c.net_config().unwrap(), seed).unwrap();
            let mut state = OptimizerState::new(&net);
            let mut last = 0.0;
            for epoch in 1..=c.train.epochs {
                let m = training::train_epoch(
                    &mut net,
                    &train_set,
                    Some(&test_set),
                    &c.train,
                    &mut state,
                    epoch,
                )
                .map_err(|e| e.to_string())?;
                last = m.test_accuracy.unwrap();
                eprintln!(
                    "  F={channels} seed={seed} epoch={epoch} loss={:.4} test_acc={last:.4}",
                    m.train_loss
                );
            }
            accs.push(last);
            runs.push(format!("F{channels}s{seed}={last:.4}"));
        }
        means.push(accs.iter().sum::<f64>() / accs.len() as f64);
    }
    let gain = means[1] - means[0];
    check(
        gain >= 0.02 && means[0] >= spec.f1_floor,
        format!(
            "mean test acc F=1 {:.4} (floor {}), F=3 {:.4}, gain {:+.2} points (need +2) [{}]",
            means[0],
            spec.f1_floor,
            means[1],
            100.0 * gain,
            runs.join(" ")
        ),
    )
}

fn criterion_6() -> Outcome {
    trend(
        "DIFFRACTNET_FASHION_DIR",
        &[""],
        Trend {
            classes: 10,
            grid: 56,
            orientation_fix: false,
            f1_floor: 0.65,
        },
    )
}

fn criterion_7() -> Outcome {
    trend(
        "DIFFRACTNET_EMNIST_DIR",
        &["emnist-balanced-"],
        Trend {
            classes: 47,
            grid: 112,
            orientation_fix: true,
            f1_floor: 0.35,
        },
    )
}

fn main() {
    let long = std::env::var("DIFFRACTNET_ACCEPTANCE_LONG").is_ok_and(|v| v == "1");
    let criteria: [(&str, fn() -> Outcome, bool); 9] = [
        ("1 oracle equivalence", criterion_1, false),
        ("2 adjoint consistency", criterion_2, false),
        ("3 energy properties", criterion_3, false),
        ("4 gradient correctness", criterion_4, false),
        ("5 single-frequency reduction", criterion_5, false),
        ("6 multi-channel trend (Fashion-MNIST)", criterion_6, true),
        ("7 multi-channel trend (EMNIST balanced)", criterion_7, true),
        ("8 determinism", criterion_8, false),
        ("9 format fidelity", criterion_9, false),
    ];
    // Keep panic messages from interleaving with the result lines.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f, is_long) in criteria {
        if is_long && !long {
            println!("criterion {name}: SKIP (long run; set DIFFRACTNET_ACCEPTANCE_LONG=1)");
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
