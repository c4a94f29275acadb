//! The built-in synthetic model zoo and its matching synthetic dataset.
//!
//! Ten image classes are defined by a base hue plus an oriented stripe
//! pattern; images get seeded jitter, a secondary color blob, a luminance
//! gradient and light noise. The toy classifiers are small conv nets with
//! fixed color/texture feature kernels and a nearest-class-prototype linear
//! head computed from reference renders, so they genuinely classify the
//! synthetic data without any training pipeline. Everything is
//! deterministic given seeds, so the full property and acceptance suites
//! run without downloading pretrained weights.

use super::{ConvClassifier, ConvCaptioner, HintColorizer, PreprocessSpec, TapExtractor};
use crate::grad::Tape;
use crate::imaging::{lab_to_rgb, LabImage, RgbImage};
use crate::models::rgb_to_chw;
use crate::nn::{
    conv_from_kernels, conv_xavier, zeros1, ConvNet, Layer, KERNEL_BOX, KERNEL_IDENTITY,
    KERNEL_SMOOTH,
};
use ndarray::{Array2, Array3, ArrayD, IxDyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

pub const SYNTH_CLASSES: usize = 10;
/// Default side length of synthetic images.
pub const SYNTH_SIZE: usize = 32;

pub const TOY_CLASSIFIER: &str = "toy-cnn";
pub const TOY_CLASSIFIER_B: &str = "toy-cnn-b";
pub const TOY_CLASSIFIER_C: &str = "toy-cnn-c";
pub const TOY_ROBUST: &str = "toy-robust";
pub const TOY_ABMEAN2: &str = "toy-abmean2";
pub const TOY_HIFREQ2: &str = "toy-hifreq2";
pub const TOY_COLORIZER: &str = "toy-colorizer";
pub const TOY_EXTRACTOR: &str = "toy-extractor";
pub const TOY_CAPTIONER: &str = "toy-captioner";

const TEMPLATE_SEED_BASE: u64 = 0x7E3A_11CE_0000_0001;
const REFS_PER_CLASS: usize = 8;

pub fn synth_class_name(class: usize) -> String {
    format!("class_{class:02}")
}

/// Deterministic seed for image `idx` of `class` under an experiment seed.
pub fn image_seed(base: u64, class: usize, idx: usize) -> u64 {
    let mut z = base
        ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (idx as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Renders one synthetic image. The class fixes the hue and stripe pattern;
/// the seed drives jitter, blob placement, gradient and noise.
pub fn synth_image(class: usize, seed: u64, size: usize) -> RgbImage {
    assert!(class < SYNTH_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hue = TAU * class as f64 / SYNTH_CLASSES as f64 + (rng.random::<f64>() - 0.5) * 0.2;
    let chroma = 40.0 + (rng.random::<f64>() - 0.5) * 8.0;
    let (a0, b0) = (chroma * hue.cos(), chroma * hue.sin());

    let phi = PI * (class % 5) as f64 / 5.0;
    let period = 3.0 + (class % 4) as f64;
    let phase = rng.random::<f64>() * TAU;
    let amp = 11.0 + (rng.random::<f64>() - 0.5) * 4.0;

    let blob_cx = size as f64 * (0.25 + 0.5 * rng.random::<f64>());
    let blob_cy = size as f64 * (0.25 + 0.5 * rng.random::<f64>());
    let blob_r = size as f64 * (0.18 + 0.14 * rng.random::<f64>());
    let blob_hue = hue + 0.9;
    let (a1, b1) = (34.0 * blob_hue.cos(), 34.0 * blob_hue.sin());

    let gdir = rng.random::<f64>() * TAU;
    let (gx, gy) = (gdir.cos(), gdir.sin());

    // Smooth low-frequency color variation: keeps the AB clusters spatially
    // coherent the way object regions are in natural images.
    let mut waves = Vec::new();
    for _ in 0..2 {
        let dir = rng.random::<f64>() * TAU;
        let wavelen = size as f64 * (0.25 + 0.35 * rng.random::<f64>());
        let ph_a = rng.random::<f64>() * TAU;
        let ph_b = rng.random::<f64>() * TAU;
        let amp = 2.5 + 2.0 * rng.random::<f64>();
        waves.push((dir.cos(), dir.sin(), wavelen, ph_a, ph_b, amp));
    }

    let mut l = Array2::zeros((size, size));
    let mut ab = Array3::zeros((size, size, 2));
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let u = xf * phi.cos() + yf * phi.sin();
            let stripe = (TAU * u / period + phase).sin();
            let grad = 6.0 * ((xf * gx + yf * gy) / size as f64);

            let d = ((xf - blob_cx).powi(2) + (yf - blob_cy).powi(2)).sqrt();
            let w = sigmoid((blob_r - d) / (0.15 * blob_r + 1.0));
            // The blob region carries stronger texture, so color ambiguity
            // (texture-driven) aligns with the AB segmentation.
            let amp_local = amp * (0.55 + 1.1 * w);
            let lum =
                55.0 + amp_local * stripe + grad + (rng.random::<f64>() - 0.5) * 2.4;

            let mut a = a0 * (1.0 - w) + a1 * w;
            let mut b = b0 * (1.0 - w) + b1 * w;
            for &(wx, wy, wavelen, ph_a, ph_b, wamp) in &waves {
                let t = TAU * (xf * wx + yf * wy) / wavelen;
                a += wamp * (t + ph_a).sin();
                b += wamp * (t + ph_b).cos();
            }
            a += (rng.random::<f64>() - 0.5) * 1.0;
            b += (rng.random::<f64>() - 0.5) * 1.0;

            l[[y, x]] = lum.clamp(25.0, 85.0);
            ab[[y, x, 0]] = a.clamp(-60.0, 60.0);
            ab[[y, x, 1]] = b.clamp(-60.0, 60.0);
        }
    }
    let lab = LabImage::new(l, ab).expect("synthetic ranges are valid");
    lab_to_rgb(&lab).expect("synthetic image is in range")
}

// 3×3 feature kernels for the toy classifiers.
const K_STRIPE_H: [[f64; 3]; 3] = [
    [-1.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0],
    [2.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0],
];
const K_STRIPE_V: [[f64; 3]; 3] = [
    [-1.0 / 6.0, 2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 2.0 / 6.0, -1.0 / 6.0],
];
const K_DIAG: [[f64; 3]; 3] = [
    [2.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 6.0, 2.0 / 6.0],
];
const K_ANTI: [[f64; 3]; 3] = [
    [-1.0 / 6.0, -1.0 / 6.0, 2.0 / 6.0],
    [-1.0 / 6.0, 2.0 / 6.0, -1.0 / 6.0],
    [2.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0],
];
const K_LAPLACE: [[f64; 3]; 3] = [
    [0.0, -0.25, 0.0],
    [-0.25, 1.0, -0.25],
    [0.0, -0.25, 0.0],
];
const K_CHECKER: [[f64; 3]; 3] = [
    [1.0 / 9.0, -1.0 / 9.0, 1.0 / 9.0],
    [-1.0 / 9.0, 1.0 / 9.0, -1.0 / 9.0],
    [1.0 / 9.0, -1.0 / 9.0, 1.0 / 9.0],
];

fn neg(k: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = k;
    for row in &mut out {
        for v in row {
            *v = -*v;
        }
    }
    out
}

fn gray() -> Vec<f64> {
    vec![1.0 / 3.0; 3]
}

struct VariantSpec {
    color_scale: f64,
    texture_scale: f64,
    color_kernel: [[f64; 3]; 3],
    extra_random: usize,
    smooth_input: bool,
    seed: u64,
}

fn texture_kernels() -> Vec<(Vec<f64>, [[f64; 3]; 3])> {
    let mut out = Vec::new();
    for k in [K_STRIPE_H, K_STRIPE_V, K_DIAG, K_ANTI, K_LAPLACE, K_CHECKER] {
        out.push((gray(), k));
        out.push((gray(), neg(k)));
    }
    out
}

/// Fixed feature stage: per-channel color means plus polarity pairs of
/// oriented stripe/high-frequency detectors, global average pooled and
/// rescaled so color dominates texture in the prototype metric.
fn feature_layers(spec: &VariantSpec) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    if spec.smooth_input {
        for _ in 0..2 {
            layers.push(conv_from_kernels(
                &[
                    (vec![1.0, 0.0, 0.0], KERNEL_SMOOTH),
                    (vec![0.0, 1.0, 0.0], KERNEL_SMOOTH),
                    (vec![0.0, 0.0, 1.0], KERNEL_SMOOTH),
                ],
                3,
                1,
                1,
            ));
        }
    }
    let mut kernels = vec![
        (vec![1.0, 0.0, 0.0], spec.color_kernel),
        (vec![0.0, 1.0, 0.0], spec.color_kernel),
        (vec![0.0, 0.0, 1.0], spec.color_kernel),
    ];
    kernels.extend(texture_kernels());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.extra_random {
        let mix: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut k = [[0.0; 3]; 3];
        for row in &mut k {
            for v in row.iter_mut() {
                *v = (rng.random::<f64>() - 0.5) * 0.8;
            }
        }
        kernels.push((mix, k));
    }
    let n_features = kernels.len();
    layers.push(conv_from_kernels(&kernels, 3, 1, 1));
    layers.push(Layer::Relu);
    layers.push(Layer::GlobalAvgPool);
    let mut scale = vec![spec.texture_scale; n_features];
    let mut shift = vec![0.0; n_features];
    for c in 0..3 {
        scale[c] = spec.color_scale;
    }
    for s in shift.iter_mut() {
        *s = 0.0;
    }
    layers.push(Layer::ChannelAffine { scale, shift });
    (layers, n_features)
}

fn run_vector_net(net: &ConvNet, img: &RgbImage) -> Vec<f64> {
    let tape = Tape::new();
    let x = tape.constant(rgb_to_chw(img));
    let out = net.forward(&tape, x, None);
    tape.value(out.output).iter().copied().collect()
}

/// Builds a prototype (nearest class mean) linear head over the feature
/// space, with the temperature set from the observed classification margins
/// of the reference renders.
fn prototype_head(features: &ConvNet, n_features: usize, variant_seed: u64) -> Layer {
    let mut prototypes = vec![vec![0.0; n_features]; SYNTH_CLASSES];
    let mut refs: Vec<(usize, Vec<f64>)> = Vec::new();
    for class in 0..SYNTH_CLASSES {
        for j in 0..REFS_PER_CLASS {
            let seed = image_seed(TEMPLATE_SEED_BASE ^ variant_seed, class, j);
            let img = synth_image(class, seed, SYNTH_SIZE);
            let phi = run_vector_net(features, &img);
            for (acc, v) in prototypes[class].iter_mut().zip(&phi) {
                *acc += v / REFS_PER_CLASS as f64;
            }
            refs.push((class, phi));
        }
    }
    let score = |proto: &[f64], phi: &[f64]| -> f64 {
        let dot: f64 = proto.iter().zip(phi).map(|(p, x)| p * x).sum();
        let nrm: f64 = proto.iter().map(|p| p * p).sum();
        dot - nrm / 2.0
    };
    let mut margins: Vec<f64> = refs
        .iter()
        .map(|(class, phi)| {
            let own = score(&prototypes[*class], phi);
            let best_other = (0..SYNTH_CLASSES)
                .filter(|j| j != class)
                .map(|j| score(&prototypes[j], phi))
                .fold(f64::NEG_INFINITY, f64::max);
            own - best_other
        })
        .collect();
    margins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = margins[margins.len() / 2];
    let tau = if median > 1e-9 { (3.0 / median).clamp(1.0, 400.0) } else { 40.0 };

    let mut w = ArrayD::zeros(IxDyn(&[SYNTH_CLASSES, n_features]));
    let mut b = ArrayD::zeros(IxDyn(&[SYNTH_CLASSES]));
    for (k, proto) in prototypes.iter().enumerate() {
        let nrm: f64 = proto.iter().map(|p| p * p).sum();
        for (i, p) in proto.iter().enumerate() {
            w[[k, i]] = tau * p;
        }
        b[[k]] = -tau * nrm / 2.0;
    }
    Layer::Linear { weight: w, bias: b }
}

fn build_prototype_classifier(tag: &str, spec: VariantSpec) -> ConvClassifier {
    let (layers, n_features) = feature_layers(&spec);
    let features = ConvNet::new(layers.clone());
    let head = prototype_head(&features, n_features, spec.seed);
    let mut all = layers;
    all.push(head);
    ConvClassifier {
        tag: tag.into(),
        labels: (0..SYNTH_CLASSES).map(synth_class_name).collect(),
        preprocess: PreprocessSpec::identity(),
        net: ConvNet::new(all),
    }
}

/// Two-class model whose decision depends only on the mean red-green
/// opponency (a stand-in for the mean AB color axis). Identity kernels keep
/// the logits an exactly hand-computable affine map of the image.
fn abmean2() -> ConvClassifier {
    let layers = vec![
        conv_from_kernels(
            &[
                (vec![1.0, -1.0, 0.0], KERNEL_IDENTITY),
                (vec![-1.0, 1.0, 0.0], KERNEL_IDENTITY),
            ],
            3,
            1,
            1,
        ),
        Layer::Relu,
        Layer::GlobalAvgPool,
        Layer::Linear {
            weight: {
                let mut w = ArrayD::zeros(IxDyn(&[2, 2]));
                // logit0 ("greenish") = 30·(g−r)+ − 30·(r−g)+, and mirrored.
                w[[0, 0]] = -30.0;
                w[[0, 1]] = 30.0;
                w[[1, 0]] = 30.0;
                w[[1, 1]] = -30.0;
                w
            },
            bias: zeros1(2),
        },
    ];
    ConvClassifier {
        tag: TOY_ABMEAN2.into(),
        labels: vec!["greenish".into(), "reddish".into()],
        preprocess: PreprocessSpec::identity(),
        net: ConvNet::new(layers),
    }
}

/// Two-class model keyed to high-frequency energy (Laplacian polarity
/// pair): smooth vs textured.
fn hifreq2() -> ConvClassifier {
    let layers = vec![
        conv_from_kernels(&[(gray(), K_LAPLACE), (gray(), neg(K_LAPLACE))], 3, 1, 1),
        Layer::Relu,
        Layer::GlobalAvgPool,
        Layer::Linear {
            weight: {
                let mut w = ArrayD::zeros(IxDyn(&[2, 2]));
                w[[0, 0]] = -60.0;
                w[[0, 1]] = -60.0;
                w[[1, 0]] = 60.0;
                w[[1, 1]] = 60.0;
                w
            },
            bias: {
                let mut b = zeros1(2);
                b[[0]] = 60.0 * 0.05;
                b[[1]] = -60.0 * 0.05;
                b
            },
        },
    ];
    ConvClassifier {
        tag: TOY_HIFREQ2.into(),
        labels: vec!["smooth".into(), "textured".into()],
        preprocess: PreprocessSpec::identity(),
        net: ConvNet::new(layers),
    }
}

/// Resolves `toy-*` classifier tags.
pub fn toy_classifier(tag: &str) -> Option<ConvClassifier> {
    match tag {
        TOY_CLASSIFIER => Some(build_prototype_classifier(
            tag,
            VariantSpec {
                color_scale: 2.5,
                texture_scale: 1.0,
                color_kernel: KERNEL_BOX,
                extra_random: 0,
                smooth_input: false,
                seed: 0x0A,
            },
        )),
        TOY_CLASSIFIER_B => Some(build_prototype_classifier(
            tag,
            VariantSpec {
                color_scale: 2.0,
                texture_scale: 1.3,
                color_kernel: KERNEL_SMOOTH,
                extra_random: 3,
                smooth_input: false,
                seed: 0x0B,
            },
        )),
        TOY_CLASSIFIER_C => Some(build_prototype_classifier(
            tag,
            VariantSpec {
                color_scale: 2.2,
                texture_scale: 0.9,
                color_kernel: KERNEL_BOX,
                extra_random: 5,
                smooth_input: false,
                seed: 0x0C,
            },
        )),
        TOY_ROBUST => Some(build_prototype_classifier(
            tag,
            VariantSpec {
                color_scale: 2.5,
                texture_scale: 1.0,
                color_kernel: KERNEL_BOX,
                extra_random: 0,
                smooth_input: true,
                seed: 0x0D,
            },
        )),
        TOY_ABMEAN2 => Some(abmean2()),
        TOY_HIFREQ2 => Some(hifreq2()),
        _ => None,
    }
}

fn smoothing_net(layers: usize) -> ConvNet {
    let stack = (0..layers)
        .map(|_| conv_from_kernels(&[(vec![1.0], KERNEL_SMOOTH)], 1, 1, 1))
        .collect();
    ConvNet::new(stack)
}

fn lum_field_net(seed: u64) -> ConvNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = [[0.0; 3]; 3];
    for row in &mut k {
        for v in row.iter_mut() {
            *v = (rng.random::<f64>() - 0.5) * 0.5;
        }
    }
    ConvNet::new(vec![conv_from_kernels(&[(vec![1.0], k)], 1, 1, 1)])
}

fn dist_net(q_bins: usize, seed: u64) -> ConvNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weight = conv_xavier(&mut rng, q_bins, 6, 1);
    weight.mapv_inplace(|v| v * 7.0);
    // Bias-free 1×1 head: per-pixel logits scale exactly with the
    // sharpness-scaled inputs.
    ConvNet::new(vec![Layer::Conv { weight, bias: zeros1(q_bins), stride: 1, pad: 0, dilation: 1 }])
}

/// The toy hint-guided colorizer.
pub fn toy_colorizer() -> HintColorizer {
    HintColorizer {
        tag: TOY_COLORIZER.into(),
        q_bins: 16,
        smooth: smoothing_net(2),
        wide: smoothing_net(3),
        wide2: smoothing_net(6),
        lum_a: lum_field_net(0x11),
        lum_b: lum_field_net(0x12),
        dist_net: dist_net(16, 0x31),
        pin_eps: 0.01,
        coverage_gain: 150.0,
        coverage_bias: -4.0,
        spread_gain: 30.0,
        spread_bias: -3.0,
        pre_gain: 1.15,
        lum_gain: 0.25,
        dev_cap: 0.1,
        prox_gain: 30.0,
        prox_bias: -3.0,
        swing_own: 30.0,
        swing_cross: 0.4,
    }
}

/// The toy texture feature extractor with the five standard taps.
pub fn toy_extractor() -> TapExtractor {
    let mut rng = ChaCha8Rng::seed_from_u64(0x77);
    let mut first = vec![
        (vec![1.0, 0.0, 0.0], KERNEL_IDENTITY),
        (vec![0.0, 1.0, 0.0], KERNEL_IDENTITY),
        (vec![0.0, 0.0, 1.0], KERNEL_IDENTITY),
        (gray(), K_STRIPE_H),
        (gray(), neg(K_STRIPE_H)),
        (gray(), K_STRIPE_V),
        (gray(), neg(K_STRIPE_V)),
        (gray(), K_LAPLACE),
        (gray(), neg(K_LAPLACE)),
    ];
    // One random mixing channel keeps the first tap from being axis-aligned.
    let mix: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut k = [[0.0; 3]; 3];
    for row in &mut k {
        for v in row.iter_mut() {
            *v = (rng.random::<f64>() - 0.5) * 0.6;
        }
    }
    first.push((mix, k));

    let mut layers = vec![conv_from_kernels(&first, 3, 1, 1), Layer::Relu];
    let mut taps = vec![("R11".to_string(), 1usize)];
    let mut cin = first.len();
    for (name, cout) in [("R21", 12), ("R31", 16), ("R41", 20), ("R51", 24)] {
        layers.push(Layer::AvgPool2);
        let mut bias = zeros1(cout);
        bias.mapv_inplace(|_| 0.05);
        layers.push(Layer::Conv {
            weight: conv_xavier(&mut rng, cout, cin, 3),
            bias,
            stride: 1,
            pad: 1,
            dilation: 1,
        });
        layers.push(Layer::Relu);
        taps.push((name.to_string(), layers.len() - 1));
        cin = cout;
    }
    TapExtractor { tag: TOY_EXTRACTOR.into(), net: ConvNet::with_taps(layers, taps) }
}

/// The toy captioner: three word positions (article, color word, texture
/// word) over a ten-word vocabulary, with per-position spatial attention.
pub fn toy_captioner() -> ConvCaptioner {
    let vocab: Vec<String> = [
        "a", "red", "green", "blue", "teal", "gray", "smooth", "striped", "textured", "scene",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let v = vocab.len();

    let mut kernels = vec![
        (vec![1.0, 0.0, 0.0], KERNEL_BOX),
        (vec![0.0, 1.0, 0.0], KERNEL_BOX),
        (vec![0.0, 0.0, 1.0], KERNEL_BOX),
    ];
    kernels.extend(texture_kernels());
    let n_feat = kernels.len();
    let trunk = ConvNet::new(vec![conv_from_kernels(&kernels, 3, 1, 1), Layer::Relu]);

    let head = |rows: Vec<(usize, Vec<(usize, f64)>, f64)>| -> ConvNet {
        let mut w = ArrayD::zeros(IxDyn(&[v, n_feat]));
        let mut b = zeros1(v);
        for (word, weights, bias) in rows {
            for (feat, val) in weights {
                w[[word, feat]] = val;
            }
            b[[word]] = bias;
        }
        ConvNet::new(vec![Layer::Linear { weight: w, bias: b }])
    };
    // Feature indices: 0-2 color means; 3/4 H±, 5/6 V±, 7/8 diag±,
    // 9/10 anti±, 11/12 laplace±, 13/14 checker±.
    let stripe_feats = [3usize, 4, 5, 6, 7, 8, 9, 10];
    let hf_feats = [11usize, 12, 13, 14];
    let pos0 = head(vec![(0, vec![], 4.0), (9, vec![], 1.0)]);
    let pos1 = head(vec![
        (1, vec![(0, 22.0), (1, -11.0), (2, -11.0)], 0.0),
        (2, vec![(0, -11.0), (1, 22.0), (2, -11.0)], 0.0),
        (3, vec![(0, -11.0), (1, -11.0), (2, 22.0)], 0.0),
        (4, vec![(0, -14.0), (1, 7.0), (2, 7.0)], 0.0),
        (5, vec![(0, -4.0), (1, -4.0), (2, -4.0)], 5.8),
    ]);
    let pos2 = head(vec![
        (7, stripe_feats.iter().map(|&f| (f, 30.0)).collect(), -2.0),
        (8, hf_feats.iter().map(|&f| (f, 36.0)).collect(), -2.0),
        (
            6,
            stripe_feats
                .iter()
                .chain(&hf_feats)
                .map(|&f| (f, -20.0))
                .collect(),
            1.2,
        ),
    ]);

    let attn = |feats: &[usize], gain: f64| -> ConvNet {
        let mut w = ArrayD::zeros(IxDyn(&[1, n_feat, 1, 1]));
        for &f in feats {
            w[[0, f, 0, 0]] = gain;
        }
        ConvNet::new(vec![Layer::Conv { weight: w, bias: zeros1(1), stride: 1, pad: 0, dilation: 1 }])
    };
    let attn0 = attn(&[], 0.0);
    let attn1 = attn(&[0, 1, 2], 6.0);
    let attn2 = attn(&[3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14], 6.0);

    ConvCaptioner {
        tag: TOY_CAPTIONER.into(),
        vocab,
        trunk,
        word_heads: vec![pos0, pos1, pos2],
        attn_heads: vec![attn0, attn1, attn2],
    }
}
