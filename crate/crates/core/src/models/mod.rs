//! Adapters over the pretrained networks the attacks drive: victim
//! classifiers, the hint-guided colorizer, the texture feature extractor
//! (which doubles as the embedding space for nearest-neighbor source
//! selection) and the convolutional captioner.
//!
//! Models are resolved through a [`ModelRegistry`] keyed by string tags.
//! `toy-*` tags build the deterministic synthetic zoo in [`toy`]; any other
//! tag is loaded as a JSON bundle from the configured weights directory
//! (weights are external artifacts, never vendored).

pub mod toy;

use crate::cadv::HintSet;
use crate::error::{Error, Result};
use crate::grad::{Tape, Var};
use crate::imaging::{resize_bilinear, RgbImage};
use crate::nn::ConvNet;
use ndarray::{Array2, Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

/// The five tap names of the texture feature extractor, shallowest first.
pub const TAP_NAMES: [&str; 5] = ["R11", "R21", "R31", "R41", "R51"];

/// Converts an H×W×3 image to the `[3,H,W]` layout used on the tape.
pub fn rgb_to_chw(img: &RgbImage) -> ArrayD<f64> {
    let (h, w, _) = img.pixels().dim();
    let mut out = ArrayD::zeros(IxDyn(&[3, h, w]));
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out[[c, y, x]] = img.pixels()[[y, x, c]];
            }
        }
    }
    out
}

/// Converts a `[3,H,W]` array back to an image, clamping into `[0,1]`.
pub fn chw_to_rgb(chw: &ArrayD<f64>) -> Result<RgbImage> {
    let shape = chw.shape();
    let (h, w) = (shape[1], shape[2]);
    let mut px = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                px[[y, x, c]] = chw[[c, y, x]];
            }
        }
    }
    RgbImage::from_clamped(px)
}

/// Input contract of a classifier: optional square input size plus
/// per-channel normalization applied before the network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub input_size: Option<usize>,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl PreprocessSpec {
    pub fn identity() -> Self {
        Self { input_size: None, mean: [0.0; 3], std: [1.0; 3] }
    }
}

/// A victim classifier: a conv net ending in a logit vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvClassifier {
    pub tag: String,
    pub labels: Vec<String>,
    pub preprocess: PreprocessSpec,
    pub net: ConvNet,
}

impl ConvClassifier {
    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    /// Applies preprocessing and the network on the tape; gradients flow
    /// back to `rgb_chw`.
    pub fn logits_traced(&self, tape: &Tape, rgb_chw: Var) -> Var {
        let scale = [
            1.0 / self.preprocess.std[0],
            1.0 / self.preprocess.std[1],
            1.0 / self.preprocess.std[2],
        ];
        let shift = [
            -self.preprocess.mean[0] / self.preprocess.std[0],
            -self.preprocess.mean[1] / self.preprocess.std[1],
            -self.preprocess.mean[2] / self.preprocess.std[2],
        ];
        let x = tape.channel_affine(rgb_chw, &scale, &shift);
        self.net.forward(tape, x, None).output
    }

    /// Evaluation-mode inference: resizes per the preprocess spec if needed
    /// and returns `(logits, argmax label index)`.
    pub fn classify(&self, img: &RgbImage) -> Result<(Vec<f64>, usize)> {
        let resized;
        let input = match self.preprocess.input_size {
            Some(s) if img.height() != s || img.width() != s => {
                resized = resize_bilinear(img, s, s)?;
                &resized
            }
            _ => img,
        };
        let tape = Tape::new();
        let x = tape.constant(rgb_to_chw(input));
        let logits = self.logits_traced(&tape, x);
        let v = tape.value(logits);
        if v.len() != self.label_count() {
            return Err(Error::DimensionMismatch(format!(
                "classifier {} produced {} logits for {} labels",
                self.tag,
                v.len(),
                self.label_count()
            )));
        }
        let vec: Vec<f64> = v.iter().copied().collect();
        Ok((vec.clone(), argmax(&vec)))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax probability of one class.
pub fn softmax_prob(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|x| (x - max).exp()).sum();
    (logits[class] - max).exp() / denom
}

/// The hint-guided colorization network. Consumes the L channel, a sparse
/// AB hint field and its mask; produces an AB field plus a per-pixel
/// distribution over `q_bins` quantized color bins.
///
/// The architecture couples a local pathway (masked hints diffused and
/// renormalized, so hinted regions reproduce their hint colors) with a
/// global pathway (an amplified color proposal from pooled hint statistics
/// and luminance features) gated by a smooth hint-coverage field. It is
/// deterministic and differentiable with respect to hints, mask and its own
/// parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HintColorizer {
    pub tag: String,
    pub q_bins: usize,
    pub smooth: ConvNet,
    pub wide: ConvNet,
    pub wide2: ConvNet,
    pub lum_a: ConvNet,
    pub lum_b: ConvNet,
    pub dist_net: ConvNet,
    pub pin_eps: f64,
    pub coverage_gain: f64,
    pub coverage_bias: f64,
    pub spread_gain: f64,
    pub spread_bias: f64,
    pub pre_gain: f64,
    pub lum_gain: f64,
    /// Maximum deviation (normalized AB) a hinted pixel can take from the
    /// free proposal.
    pub dev_cap: f64,
    /// Anchor-proximity response: how strongly nearby hints suppress the
    /// free swing.
    pub prox_gain: f64,
    pub prox_bias: f64,
    /// Swing response to the global drift of the raw hint planes away from
    /// their mask-consistent expectation (zero for untouched hint sets).
    pub swing_own: f64,
    pub swing_cross: f64,
}

/// Traced colorizer outputs: `ab` is `[2,H,W]` in AB units, `dist` is
/// `[Q,H,W]` of per-pixel probabilities (only when requested; attack loops
/// skip it since no loss flows through the distribution head).
pub struct ColorizeTraced {
    pub ab: Var,
    pub dist: Option<Var>,
}

/// Tape variables for every colorizer parameter, used by the
/// network-weights attack.
pub struct ColorizerParams(Vec<Vec<Var>>);

impl ColorizerParams {
    /// All parameter variables flattened in binding order.
    pub fn flat(&self) -> Vec<Var> {
        self.0.iter().flatten().copied().collect()
    }
}

impl HintColorizer {
    fn subnets(&self) -> [&ConvNet; 6] {
        [
            &self.smooth,
            &self.wide,
            &self.wide2,
            &self.lum_a,
            &self.lum_b,
            &self.dist_net,
        ]
    }

    pub fn param_arrays(&self) -> Vec<ArrayD<f64>> {
        self.subnets()
            .iter()
            .flat_map(|n| n.param_arrays().into_iter().cloned())
            .collect()
    }

    pub fn set_param_arrays(&mut self, values: &[ArrayD<f64>]) {
        let counts: Vec<usize> = self.subnets().iter().map(|n| n.param_count()).collect();
        let mut nets: [&mut ConvNet; 6] = [
            &mut self.smooth,
            &mut self.wide,
            &mut self.wide2,
            &mut self.lum_a,
            &mut self.lum_b,
            &mut self.dist_net,
        ];
        let mut offset = 0;
        for (net, count) in nets.iter_mut().zip(counts) {
            net.set_param_arrays(&values[offset..offset + count]);
            offset += count;
        }
        assert_eq!(offset, values.len());
    }

    pub fn bind_params(&self, tape: &Tape, requires_grad: bool) -> ColorizerParams {
        ColorizerParams(
            self.subnets()
                .iter()
                .map(|n| n.bind_params(tape, requires_grad))
                .collect(),
        )
    }

    /// Normalized L channel `[1,H,W]` (L/50 − 1, the colorizer's native
    /// input scaling).
    pub fn l_input(l: &Array2<f64>) -> ArrayD<f64> {
        let (h, w) = l.dim();
        let mut out = ArrayD::zeros(IxDyn(&[1, h, w]));
        for y in 0..h {
            for x in 0..w {
                out[[0, y, x]] = l[[y, x]] / 50.0 - 1.0;
            }
        }
        out
    }

    /// The coverage field induced by a hint-magnitude map `|hint|·mask`
    /// (diagnostics and tests).
    pub fn coverage_field(&self, hint_magnitude: &ArrayD<f64>) -> ArrayD<f64> {
        let tape = Tape::new();
        let mag = tape.constant(hint_magnitude.clone());
        let d_mag = self.smooth.forward(&tape, mag, None).output;
        let gate = {
            let scaled = tape.mul_scalar(d_mag, self.coverage_gain);
            let shifted = tape.add_scalar(scaled, self.coverage_bias);
            tape.sigmoid(shifted)
        };
        let spread = self.wide.forward(&tape, gate, None).output;
        let cvg = {
            let scaled = tape.mul_scalar(spread, self.spread_gain);
            let shifted = tape.add_scalar(scaled, self.spread_bias);
            tape.sigmoid(shifted)
        };
        tape.value(cvg)
    }

    /// Per-pixel color ambiguity in `[0.15, 1.0]`, derived from local
    /// luminance texture: textured regions admit many plausible colors and
    /// get a wide output swing, flat regions are conservative. Depends only
    /// on the fixed L channel.
    pub fn ambiguity_map(l: &Array2<f64>) -> ArrayD<f64> {
        let l_n = l.mapv(|v| v / 50.0 - 1.0);
        let smoothed = crate::imaging::gaussian_blur(&l_n, 1.2).expect("sigma fixed");
        let tex = ndarray::Zip::from(&l_n)
            .and(&smoothed)
            .map_collect(|&a, &b| (a - b).abs());
        let spread = crate::imaging::gaussian_blur(&tex, 1.2).expect("sigma fixed");
        let (h, w) = l.dim();
        let mut out = ArrayD::zeros(IxDyn(&[1, h, w]));
        for y in 0..h {
            for x in 0..w {
                let s = 1.0 / (1.0 + (-12.0 * (spread[[y, x]] - 0.10)).exp());
                out[[0, y, x]] = 0.15 + 0.85 * s;
            }
        }
        out
    }

    /// Runs the colorizer on the tape. `ha`/`hb` are the hint channels in
    /// the normalized domain (AB/110), `m` is the mask; all `[1,H,W]`.
    /// Gradients flow to hints, mask and (when bound) parameters. The raw
    /// hint planes feed the pooled global pathway directly, so every hint
    /// pixel carries gradient even where the mask is currently zero.
    pub fn forward_traced(
        &self,
        tape: &Tape,
        l: &Array2<f64>,
        ha: Var,
        hb: Var,
        m: Var,
        params: Option<&ColorizerParams>,
        need_dist: bool,
    ) -> ColorizeTraced {
        let (h, w) = l.dim();
        let p = |i: usize| params.map(|p| p.0[i].as_slice());
        let l_n = tape.constant(Self::l_input(l));

        // Local pathway: masked hints diffused, then renormalized by the
        // diffused mask so hinted regions carry their hint color.
        let hm_a = tape.mul(ha, m);
        let hm_b = tape.mul(hb, m);
        let d_a = self.smooth.forward(tape, hm_a, p(0)).output;
        let d_b = self.smooth.forward(tape, hm_b, p(0)).output;
        let d_m = self.smooth.forward(tape, m, p(0)).output;
        let d_m_eps = tape.add_scalar(d_m, self.pin_eps);
        let pin_a = tape.div(d_a, d_m_eps);
        let pin_b = tape.div(d_b, d_m_eps);

        // Coverage: a thresholded gate on hint magnitude (|hint|·mask),
        // spread wide. Keying on magnitude rather than bare mask means a
        // thin mask with no color content neither pins nor desaturates the
        // output; only real hint placements produce coverage.
        let mag = {
            let abs_a = {
                let neg = tape.mul_scalar(ha, -1.0);
                let p1 = tape.relu(ha);
                let p2 = tape.relu(neg);
                tape.add(p1, p2)
            };
            let abs_b = {
                let neg = tape.mul_scalar(hb, -1.0);
                let p1 = tape.relu(hb);
                let p2 = tape.relu(neg);
                tape.add(p1, p2)
            };
            let l1 = tape.add(abs_a, abs_b);
            tape.mul(l1, m)
        };
        let d_mag = self.smooth.forward(tape, mag, p(0)).output;
        let gate = {
            let scaled = tape.mul_scalar(d_mag, self.coverage_gain);
            let shifted = tape.add_scalar(scaled, self.coverage_bias);
            tape.sigmoid(shifted)
        };
        let spread = self.wide.forward(tape, gate, p(1)).output;
        let cvg = {
            let scaled = tape.mul_scalar(spread, self.spread_gain);
            let shifted = tape.add_scalar(scaled, self.spread_bias);
            tape.sigmoid(shifted)
        };
        let m_w = spread;
        let one_minus_cvg = {
            let neg = tape.mul_scalar(cvg, -1.0);
            tape.add_scalar(neg, 1.0)
        };

        // Free-region color = reproduction base + damped swing channel.
        // The base is the mask-normalized mean hint color, so the network
        // reproduces the image's palette at full amplitude no matter how
        // many hints there are. The swing channel reacts to the raw pooled
        // hint planes, but its amplitude shrinks with overall hint coverage
        // and with low local color ambiguity: well-anchored, unambiguous
        // images give the attack less room.
        let lum_a_field = self.lum_a.forward(tape, l_n, p(3)).output;
        let lum_b_field = self.lum_b.forward(tape, l_n, p(4)).output;
        let mean_cvg = tape.global_avg_pool(cvg);
        let damping = {
            let neg = tape.mul_scalar(mean_cvg, -1.0);
            tape.add_scalar(neg, 1.0)
        };
        let covered_mass = {
            let gap = tape.global_avg_pool(d_m);
            tape.add_scalar(gap, 0.02)
        };
        let gmean_a = {
            let have = tape.global_avg_pool(d_a);
            tape.div(have, covered_mass)
        };
        let gmean_b = {
            let have = tape.global_avg_pool(d_b);
            tape.div(have, covered_mass)
        };
        // Regional interpolation of hint colors: wide-diffused hint mass
        // normalized by wide-diffused mask mass, blended toward the global
        // mean where no hints reach. This is the network's reconstruction of
        // the palette, accurate near hint regions for any hint count.
        const REGION_BLEND: f64 = 0.015;
        let region_den = {
            let wide_mass = self.wide.forward(tape, d_m, p(1)).output;
            tape.add_scalar(wide_mass, REGION_BLEND)
        };
        let regional = |d_h: Var, gmean: Var| -> Var {
            let wide_h = self.wide.forward(tape, d_h, p(1)).output;
            let gmap = tape.broadcast_c(gmean, h, w);
            let gterm = tape.mul_scalar(gmap, REGION_BLEND);
            let num = tape.add(wide_h, gterm);
            tape.div(num, region_den)
        };
        let base_a = regional(d_a, gmean_a);
        let base_b = regional(d_b, gmean_b);
        // Swing inputs: how far the raw hint planes have drifted from the
        // value implied by the masked hints alone. For any untouched hint
        // set (hints only where the mask is set, copied from wherever) the
        // deviation is identically zero, so the colorization is undisturbed;
        // an optimizer pushing the dense hint field activates it.
        let gap_m = tape.global_avg_pool(m);
        let dev_of = |h_plane: Var, gmean: Var| -> Var {
            let raw_mean = tape.global_avg_pool(h_plane);
            let implied = tape.mul(gmean, gap_m);
            tape.sub(raw_mean, implied)
        };
        let dev_a = dev_of(ha, gmean_a);
        let dev_b = dev_of(hb, gmean_b);
        let swing_of = |own: Var, cross: Var| -> Var {
            let o = tape.mul_scalar(own, self.swing_own);
            let c = tape.mul_scalar(cross, self.swing_cross);
            let sum = tape.add(o, c);
            tape.mul(sum, damping)
        };
        let swing_a = swing_of(dev_a, dev_b);
        let swing_b = swing_of(dev_b, dev_a);
        let amb = tape.constant(Self::ambiguity_map(l));
        // Anchor proximity: an extra-wide diffusion of hint presence. Free
        // pixels near any anchored region swing less; pixels far from every
        // anchor swing fully. More spread-out hint sets suppress more of
        // the image.
        let reach = {
            let far = self.wide2.forward(tape, gate, p(2)).output;
            let scaled = tape.mul_scalar(far, self.prox_gain);
            let shifted = tape.add_scalar(scaled, self.prox_bias);
            let prox = tape.sigmoid(shifted);
            let neg = tape.mul_scalar(prox, -1.0);
            tape.add_scalar(neg, 1.0)
        };

        let mut out_ab = Vec::with_capacity(2);
        for (pin, base, swing, lum_field) in [
            (pin_a, base_a, swing_a, lum_a_field),
            (pin_b, base_b, swing_b, lum_b_field),
        ] {
            // The free proposal is linear: the AB range and the sRGB gamut
            // bound it downstream, and a saturating squash here would eat
            // precisely the swing differences hint anchoring is meant to
            // produce.
            // The free proposal is linear: the AB range and the sRGB gamut
            // bound it downstream, and a saturating squash here would eat
            // precisely the swing differences hint anchoring is meant to
            // produce.
            let lum_scaled = tape.mul_scalar(lum_field, self.lum_gain);
            let anchored = tape.add(base, lum_scaled);
            let free = {
                let swing_map = {
                    let b = tape.broadcast_c(swing, h, w);
                    let local_gain = tape.mul(amb, reach);
                    tape.mul(b, local_gain)
                };
                tape.add(anchored, swing_map)
            };
            // Hinted pixels correct the reconstruction by at most ±dev_cap,
            // with the trust budget spread across the hinted area: a lone
            // hint carries more local influence than each of many.
            let combined = {
                let dev = tape.sub(pin, anchored);
                let capped = {
                    let scaled = tape.mul_scalar(dev, self.pre_gain / self.dev_cap);
                    let squashed = tape.tanh(scaled);
                    tape.mul_scalar(squashed, self.dev_cap)
                };
                let budget = {
                    let neg = tape.mul_scalar(mean_cvg, -1.0);
                    let lin = tape.add_scalar(neg, 1.0);
                    tape.broadcast_c(lin, h, w)
                };
                let trusted = tape.mul(capped, budget);
                let gated = tape.mul(cvg, trusted);
                tape.add(free, gated)
            };
            out_ab.push(tape.mul_scalar(combined, 110.0));
        }
        let ab = tape.concat_c(&[out_ab[0], out_ab[1]]);

        let dist = need_dist.then(|| {
            // Distribution sharpness is inversely tied to ambiguity, so the
            // entropy map ranks exactly the regions the swing gain favors.
            // The head is a bias-free 1×1 conv, making the scaling exact.
            let sharp = tape.constant(Self::ambiguity_map(l).mapv(|a| 1.0 / (a + 0.1)));
            let parts: Vec<Var> = [d_a, d_b, m_w, l_n, ha, hb]
                .into_iter()
                .map(|c| tape.mul(c, sharp))
                .collect();
            let dist_in = tape.concat_c(&parts);
            let z = self.dist_net.forward(tape, dist_in, p(5)).output;
            tape.softmax_c(z)
        });

        ColorizeTraced { ab, dist }
    }
}

fn channel_chw(field: &Array2<f64>) -> ArrayD<f64> {
    let (h, w) = field.dim();
    let mut out = ArrayD::zeros(IxDyn(&[1, h, w]));
    for y in 0..h {
        for x in 0..w {
            out[[0, y, x]] = field[[y, x]];
        }
    }
    out
}

/// Evaluation-mode colorization: predicted AB field (H×W×2, AB units) plus
/// the per-pixel color-bin distribution (H×W×Q).
pub fn colorize(
    model: &HintColorizer,
    l: &Array2<f64>,
    hints: &HintSet,
) -> Result<(Array3<f64>, Array3<f64>)> {
    let (h, w) = l.dim();
    if hints.hint_ab.dim() != (h, w, 2) || hints.mask.dim() != (h, w) {
        return Err(Error::DimensionMismatch(format!(
            "colorize: L is {h}×{w}, hints are {:?}/{:?}",
            hints.hint_ab.dim(),
            hints.mask.dim()
        )));
    }
    if l.iter().any(|&v| !(0.0..=100.0).contains(&v)) {
        return Err(Error::InvalidArgument("colorize: L outside [0,100]".into()));
    }
    let tape = Tape::new();
    let ha = tape.constant(channel_chw(
        &hints.hint_ab.index_axis(ndarray::Axis(2), 0).mapv(|v| v / 110.0),
    ));
    let hb = tape.constant(channel_chw(
        &hints.hint_ab.index_axis(ndarray::Axis(2), 1).mapv(|v| v / 110.0),
    ));
    let m = tape.constant(channel_chw(&hints.mask));
    let out = model.forward_traced(&tape, l, ha, hb, m, None, true);

    let ab_chw = tape.value(out.ab);
    let dist_chw = tape.value(out.dist.expect("dist requested"));
    let mut ab = Array3::zeros((h, w, 2));
    for y in 0..h {
        for x in 0..w {
            // The linear free pathway can exceed the nominal AB range;
            // clamp to the valid domain for downstream LabImage use.
            ab[[y, x, 0]] = ab_chw[[0, y, x]].clamp(crate::imaging::AB_MIN, crate::imaging::AB_MAX);
            ab[[y, x, 1]] = ab_chw[[1, y, x]].clamp(crate::imaging::AB_MIN, crate::imaging::AB_MAX);
        }
    }
    let q = model.q_bins;
    let mut dist = Array3::zeros((h, w, q));
    for y in 0..h {
        for x in 0..w {
            for b in 0..q {
                dist[[y, x, b]] = dist_chw[[b, y, x]];
            }
        }
    }
    Ok((ab, dist))
}

/// Feature extractor with the five named taps used for texture statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TapExtractor {
    pub tag: String,
    pub net: ConvNet,
}

impl TapExtractor {
    /// Tap feature maps on the tape, shallowest first.
    pub fn features_traced(&self, tape: &Tape, rgb_chw: Var) -> Vec<(String, Var)> {
        self.net.forward(tape, rgb_chw, None).taps
    }

    /// Evaluation-mode tap features.
    pub fn features(&self, img: &RgbImage) -> Vec<(String, ArrayD<f64>)> {
        let tape = Tape::new();
        let x = tape.constant(rgb_to_chw(img));
        self.features_traced(&tape, x)
            .into_iter()
            .map(|(name, v)| (name, tape.value(v)))
            .collect()
    }

    /// Spatially average-pooled deepest-tap feature vector.
    pub fn embed(&self, img: &RgbImage) -> Vec<f64> {
        let feats = self.features(img);
        let (_, deepest) = feats.last().expect("extractor has taps");
        let shape = deepest.shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let mut out = vec![0.0; c];
        for (ci, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += deepest[[ci, y, x]];
                }
            }
            *o = acc / (h * w) as f64;
        }
        out
    }
}

/// Cosine distance `1 − a·b/(‖a‖‖b‖)`; zero vectors are maximally distant.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

/// Convolutional captioner with fixed word positions: shared trunk feature
/// maps, one linear word head per position and one spatial attention head
/// per position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvCaptioner {
    pub tag: String,
    pub vocab: Vec<String>,
    pub trunk: ConvNet,
    pub word_heads: Vec<ConvNet>,
    pub attn_heads: Vec<ConvNet>,
}

/// Traced captioner outputs: per-position logit vectors (length = vocab)
/// and per-position spatial attention maps `[1,H,W]`.
pub struct CaptionTraced {
    pub logits: Vec<Var>,
    pub attention: Vec<Var>,
}

impl ConvCaptioner {
    pub fn positions(&self) -> usize {
        self.word_heads.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn forward_traced(&self, tape: &Tape, rgb_chw: Var) -> CaptionTraced {
        let feat = self.trunk.forward(tape, rgb_chw, None).output;
        let pooled = tape.global_avg_pool(feat);
        let logits = self
            .word_heads
            .iter()
            .map(|head| head.forward(tape, pooled, None).output)
            .collect();
        let attention = self
            .attn_heads
            .iter()
            .map(|head| {
                let raw = head.forward(tape, feat, None).output;
                tape.softmax_all(raw)
            })
            .collect();
        CaptionTraced { logits, attention }
    }

    /// Evaluation-mode caption as word indices (argmax per position).
    pub fn caption(&self, img: &RgbImage) -> Vec<usize> {
        let tape = Tape::new();
        let x = tape.constant(rgb_to_chw(img));
        let out = self.forward_traced(&tape, x);
        out.logits
            .iter()
            .map(|&l| {
                let v: Vec<f64> = tape.value(l).iter().copied().collect();
                argmax(&v)
            })
            .collect()
    }

    pub fn words(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.vocab[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.vocab.iter().position(|w| w == word)
    }
}

/// Evaluation of a classifier on an image (the `classify` operation).
pub fn classify(model: &ConvClassifier, img: &RgbImage) -> Result<(Vec<f64>, usize)> {
    model.classify(img)
}

/// Nearest-neighbor embedding (the `embed` operation).
pub fn embed(extractor: &TapExtractor, img: &RgbImage) -> Vec<f64> {
    extractor.embed(img)
}

/// On-disk form of a loadable model, one JSON file per tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelBundle {
    Classifier(ConvClassifier),
    Colorizer(HintColorizer),
    Extractor(TapExtractor),
    Captioner(ConvCaptioner),
}

/// Resolves model tags to loaded models, with a per-process cache.
/// `toy-*` tags are built in; anything else loads `<tag>.json` from the
/// weights directory (`SEMADV_WEIGHTS_DIR` or config).
pub struct ModelRegistry {
    weights_dir: Option<PathBuf>,
    classifiers: Mutex<HashMap<String, Arc<ConvClassifier>>>,
    colorizers: Mutex<HashMap<String, Arc<HintColorizer>>>,
    extractors: Mutex<HashMap<String, Arc<TapExtractor>>>,
    captioners: Mutex<HashMap<String, Arc<ConvCaptioner>>>,
}

pub const WEIGHTS_DIR_ENV: &str = "SEMADV_WEIGHTS_DIR";

impl ModelRegistry {
    pub fn new(weights_dir: Option<PathBuf>) -> Self {
        Self {
            weights_dir,
            classifiers: Mutex::new(HashMap::new()),
            colorizers: Mutex::new(HashMap::new()),
            extractors: Mutex::new(HashMap::new()),
            captioners: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(WEIGHTS_DIR_ENV).map(PathBuf::from))
    }

    fn load_bundle(&self, tag: &str) -> Result<ModelBundle> {
        let dir = self.weights_dir.as_ref().ok_or_else(|| Error::ModelLoad {
            tag: tag.into(),
            reason: format!("no weights directory configured (set {WEIGHTS_DIR_ENV})"),
        })?;
        let path = dir.join(format!("{tag}.json"));
        let file = std::fs::File::open(&path).map_err(|e| Error::ModelLoad {
            tag: tag.into(),
            reason: format!("{}: {e}", path.display()),
        })?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }

    pub fn classifier(&self, tag: &str) -> Result<Arc<ConvClassifier>> {
        if let Some(c) = self.classifiers.lock().unwrap().get(tag) {
            return Ok(c.clone());
        }
        let model = if let Some(m) = toy::toy_classifier(tag) {
            m
        } else {
            match self.load_bundle(tag)? {
                ModelBundle::Classifier(c) => c,
                _ => {
                    return Err(Error::ModelLoad {
                        tag: tag.into(),
                        reason: "bundle is not a classifier".into(),
                    })
                }
            }
        };
        let arc = Arc::new(model);
        self.classifiers.lock().unwrap().insert(tag.into(), arc.clone());
        Ok(arc)
    }

    pub fn colorizer(&self, tag: &str) -> Result<Arc<HintColorizer>> {
        if let Some(c) = self.colorizers.lock().unwrap().get(tag) {
            return Ok(c.clone());
        }
        let model = if tag == toy::TOY_COLORIZER {
            toy::toy_colorizer()
        } else {
            match self.load_bundle(tag)? {
                ModelBundle::Colorizer(c) => c,
                _ => {
                    return Err(Error::ModelLoad {
                        tag: tag.into(),
                        reason: "bundle is not a colorizer".into(),
                    })
                }
            }
        };
        let arc = Arc::new(model);
        self.colorizers.lock().unwrap().insert(tag.into(), arc.clone());
        Ok(arc)
    }

    pub fn extractor(&self, tag: &str) -> Result<Arc<TapExtractor>> {
        if let Some(c) = self.extractors.lock().unwrap().get(tag) {
            return Ok(c.clone());
        }
        let model = if tag == toy::TOY_EXTRACTOR {
            toy::toy_extractor()
        } else {
            match self.load_bundle(tag)? {
                ModelBundle::Extractor(c) => c,
                _ => {
                    return Err(Error::ModelLoad {
                        tag: tag.into(),
                        reason: "bundle is not an extractor".into(),
                    })
                }
            }
        };
        let arc = Arc::new(model);
        self.extractors.lock().unwrap().insert(tag.into(), arc.clone());
        Ok(arc)
    }

    pub fn captioner(&self, tag: &str) -> Result<Arc<ConvCaptioner>> {
        if let Some(c) = self.captioners.lock().unwrap().get(tag) {
            return Ok(c.clone());
        }
        let model = if tag == toy::TOY_CAPTIONER {
            toy::toy_captioner()
        } else {
            match self.load_bundle(tag)? {
                ModelBundle::Captioner(c) => c,
                _ => {
                    return Err(Error::ModelLoad {
                        tag: tag.into(),
                        reason: "bundle is not a captioner".into(),
                    })
                }
            }
        };
        let arc = Arc::new(model);
        self.captioners.lock().unwrap().insert(tag.into(), arc.clone());
        Ok(arc)
    }
}
