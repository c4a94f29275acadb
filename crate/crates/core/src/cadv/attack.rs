//! Adversarial optimization of hints + mask (or of a per-image copy of the
//! colorizer's weights) under the victim's cross-entropy.

use super::{compute_entropy_map, prepare_hints, CadvConfig, HintSet};
use crate::error::{Error, Result};
use crate::eval::{AttackResult, AttackTrace};
use crate::grad::{Adam, Tape, Var};
use crate::imaging::{lab_to_rgb, lp_metrics, LabImage, AB_MAX, AB_MIN};
use crate::models::{
    argmax, chw_to_rgb, colorize, softmax_prob, ConvClassifier, HintColorizer,
};
use ndarray::{ArrayD, IxDyn};
use std::time::Instant;

/// Normalized hint channels `[1,H,W]` from a hint set (AB/110).
fn hint_channels(hints: &HintSet) -> (ArrayD<f64>, ArrayD<f64>, ArrayD<f64>) {
    let (h, w) = hints.mask.dim();
    let mut ha = ArrayD::zeros(IxDyn(&[1, h, w]));
    let mut hb = ArrayD::zeros(IxDyn(&[1, h, w]));
    let mut m = ArrayD::zeros(IxDyn(&[1, h, w]));
    for y in 0..h {
        for x in 0..w {
            ha[[0, y, x]] = hints.hint_ab[[y, x, 0]] / 110.0;
            hb[[0, y, x]] = hints.hint_ab[[y, x, 1]] / 110.0;
            m[[0, y, x]] = hints.mask[[y, x]];
        }
    }
    (ha, hb, m)
}

enum Variables {
    /// Optimize the dense normalized hint fields and the mask.
    HintsMask,
    /// Optimize a copy of the colorizer parameters; hints stay zero.
    Weights(HintColorizer, Vec<ArrayD<f64>>),
}

/// Core loop shared by both cAdv variants. Each iteration rebuilds the
/// tape, evaluates classifier-on-colorizer, checks the stopping rule
/// (target reached and target-class confidence stable within `conf_delta`
/// between consecutive iterations), then takes an Adam step.
fn drive(
    classifier: &ConvClassifier,
    colorizer: &HintColorizer,
    lab: &LabImage,
    hints: &HintSet,
    target: usize,
    cfg: &CadvConfig,
    mut variables: Variables,
) -> Result<AttackResult> {
    if target >= classifier.label_count() {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} labels",
            classifier.label_count()
        )));
    }
    let started = Instant::now();
    let original = lab_to_rgb(lab)?;
    let (_, gt_label) = classifier.classify(&original)?;

    let (mut ha, mut hb, mut mask) = hint_channels(hints);
    let mut adam = Adam::new(cfg.lr);
    let mut trace = AttackTrace::default();
    let mut prev_conf: Option<f64> = None;
    let mut final_rgb: Option<ArrayD<f64>> = None;

    for iter in 0..cfg.max_iters {
        let tape = Tape::new();
        let hints_are_leaves = matches!(variables, Variables::HintsMask);
        let insert = |arr: &ArrayD<f64>| -> Var {
            if hints_are_leaves {
                tape.leaf(arr.clone())
            } else {
                tape.constant(arr.clone())
            }
        };
        let ha_v = insert(&ha);
        let hb_v = insert(&hb);
        let m_v = insert(&mask);
        let (net, params) = match &variables {
            Variables::HintsMask => (colorizer, None),
            Variables::Weights(attacked, _) => {
                (attacked, Some(attacked.bind_params(&tape, true)))
            }
        };
        let out = net.forward_traced(&tape, lab.l(), ha_v, hb_v, m_v, params.as_ref(), false);
        let rgb = tape.lab_to_rgb(out.ab, lab.l());
        let logits_v = classifier.logits_traced(&tape, rgb);
        let loss = tape.cross_entropy(logits_v, target);

        let loss_value = tape.scalar(loss);
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iter, value: loss_value });
        }
        let logits: Vec<f64> = tape.value(logits_v).iter().copied().collect();
        let label = argmax(&logits);
        let conf = softmax_prob(&logits, target);
        trace.confidence.push(conf);
        trace.iterations = iter + 1;
        final_rgb = Some(tape.value(rgb));

        if label == target {
            if let Some(p) = prev_conf {
                if (conf - p).abs() <= cfg.conf_delta {
                    trace.notes.push(format!("confidence stable at iteration {}", iter + 1));
                    break;
                }
            }
        }
        prev_conf = Some(conf);

        let grads = tape.backward(loss);
        match &mut variables {
            Variables::HintsMask => {
                let g = [grads.wrt(ha_v), grads.wrt(hb_v), grads.wrt(m_v)];
                let mut params = [ha, hb, mask];
                adam.step(&mut params, &g);
                [ha, hb, mask] = params;
                ha.mapv_inplace(|v| v.clamp(AB_MIN / 110.0, AB_MAX / 110.0));
                hb.mapv_inplace(|v| v.clamp(AB_MIN / 110.0, AB_MAX / 110.0));
                mask.mapv_inplace(|v| v.clamp(0.0, 1.0));
            }
            Variables::Weights(attacked, theta) => {
                let flat = params.expect("weights variant binds params").flat();
                let g: Vec<Option<&ArrayD<f64>>> = flat.iter().map(|&v| grads.wrt(v)).collect();
                adam.step(theta, &g);
                attacked.set_param_arrays(theta);
            }
        }
    }

    let adv = chw_to_rgb(&final_rgb.expect("at least one iteration"))?;
    let (adv_logits, adv_label) = classifier.classify(&adv)?;
    Ok(AttackResult {
        norms: lp_metrics(&original, &adv)?,
        success: adv_label == target,
        final_confidence: softmax_prob(&adv_logits, target),
        original,
        adversarial: adv,
        ground_truth: gt_label,
        target,
        trace,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Joint optimization of the dense hint and mask fields (the standard
/// cAdv). `hints` is the sparse initialization from [`super::sample_hints`];
/// the L channel stays fixed throughout.
pub fn attack_hints_mask(
    classifier: &ConvClassifier,
    colorizer: &HintColorizer,
    lab: &LabImage,
    hints: &HintSet,
    target: usize,
    cfg: &CadvConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    if hints.mask.dim() != lab.l().dim() {
        return Err(Error::DimensionMismatch("hints do not match image".into()));
    }
    drive(classifier, colorizer, lab, hints, target, cfg, Variables::HintsMask)
}

/// The unconstrained variant: optimizes a per-image copy of the colorizer's
/// parameters with zero hints. The original colorizer is untouched.
pub fn attack_network_weights(
    classifier: &ConvClassifier,
    colorizer: &HintColorizer,
    lab: &LabImage,
    target: usize,
    cfg: &CadvConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    let attacked = colorizer.clone();
    let theta = attacked.param_arrays();
    let hints = HintSet::empty(lab.height(), lab.width());
    drive(
        classifier,
        colorizer,
        lab,
        &hints,
        target,
        cfg,
        Variables::Weights(attacked, theta),
    )
}

/// Full cAdv pipeline for one image: zero-hint colorization for the entropy
/// map, AB clustering, hint sampling from the k lowest-entropy clusters,
/// then the joint hints+mask attack.
pub fn run_cadv(
    classifier: &ConvClassifier,
    colorizer: &HintColorizer,
    lab: &LabImage,
    target: usize,
    cfg: &CadvConfig,
) -> Result<(AttackResult, HintSet)> {
    let (_, dist) = colorize(colorizer, lab.l(), &HintSet::empty(lab.height(), lab.width()))?;
    let entropy = compute_entropy_map(&dist)?;
    let (_clusters, hints) = prepare_hints(lab, &entropy, cfg)?;
    let result = attack_hints_mask(classifier, colorizer, lab, &hints, target, cfg)?;
    Ok((result, hints))
}

/// Mean absolute AB difference between two H×W×2 fields.
pub fn mean_ab_distance(a: &ndarray::Array3<f64>, b: &ndarray::Array3<f64>) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n
}
