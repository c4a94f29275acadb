use super::*;
use crate::imaging::{rgb_to_lab, RgbImage};
use crate::models::toy::{TOY_ABMEAN2, TOY_COLORIZER};
use crate::models::ModelRegistry;

fn fast_cfg() -> CadvConfig {
    CadvConfig { lr: 0.01, max_iters: 100, k: 1, n_hints: 0, ..Default::default() }
}

// The 2-class model keyed to mean red-green opponency: a global AB shift
// crosses its linear boundary, so the colorization attack must flip the
// label in under 100 iterations.
#[test]
fn flips_the_ab_mean_toy_classifier() {
    let reg = ModelRegistry::new(None);
    let clf = reg.classifier(TOY_ABMEAN2).unwrap();
    let colorizer = reg.colorizer(TOY_COLORIZER).unwrap();

    let img = RgbImage::filled(16, 16, [0.30, 0.55, 0.40]).unwrap();
    let lab = rgb_to_lab(&img);
    let (_, start_label) = clf.classify(&img).unwrap();
    assert_eq!(start_label, 0, "start image should be greenish");

    let hints = HintSet::empty(16, 16);
    let result =
        attack_hints_mask(&clf, &colorizer, &lab, &hints, 1, &fast_cfg()).unwrap();
    assert!(result.success, "attack failed: trace {:?}", result.trace.confidence.last());
    assert!(result.trace.iterations < 100, "took {}", result.trace.iterations);
    assert_eq!(clf.classify(&result.adversarial).unwrap().1, 1);
}

// Stopping rule: a target that is already the prediction with stable
// confidence terminates within two iterations, leaving the image unchanged
// (below one 8-bit quantization step).
#[test]
fn already_on_target_stops_immediately() {
    let reg = ModelRegistry::new(None);
    let clf = reg.classifier(TOY_ABMEAN2).unwrap();
    let colorizer = reg.colorizer(TOY_COLORIZER).unwrap();

    let img = RgbImage::filled(12, 12, [0.30, 0.55, 0.40]).unwrap();
    let lab = rgb_to_lab(&img);
    let hints = HintSet::empty(12, 12);
    // Attack toward the class the colorized image already has.
    let colorized = {
        let (ab, _) = crate::models::colorize(&colorizer, lab.l(), &hints).unwrap();
        let relab = lab.with_ab(ab).unwrap();
        crate::imaging::lab_to_rgb(&relab).unwrap()
    };
    let (_, current) = clf.classify(&colorized).unwrap();

    let cfg = CadvConfig { k: 1, n_hints: 0, ..Default::default() };
    let result = attack_hints_mask(&clf, &colorizer, &lab, &hints, current, &cfg).unwrap();
    assert!(result.success);
    assert!(result.trace.iterations <= 2, "took {}", result.trace.iterations);
}

#[test]
fn weight_attack_leaves_original_colorizer_untouched() {
    let reg = ModelRegistry::new(None);
    let clf = reg.classifier(TOY_ABMEAN2).unwrap();
    let colorizer = reg.colorizer(TOY_COLORIZER).unwrap();
    let before: Vec<_> = colorizer.param_arrays();

    let img = RgbImage::filled(16, 16, [0.30, 0.55, 0.40]).unwrap();
    let lab = rgb_to_lab(&img);
    let cfg = CadvConfig { lr: 0.02, max_iters: 150, k: 1, n_hints: 0, ..Default::default() };
    let result = attack_network_weights(&clf, &colorizer, &lab, 1, &cfg).unwrap();
    assert!(result.success, "weight attack failed");

    let after = colorizer.param_arrays();
    assert_eq!(before.len(), after.len());
    for (a, b) in before.iter().zip(&after) {
        assert_eq!(a, b, "colorizer weights changed by the attack");
    }
}

// Only AB is attacked: the adversarial image's recomputed L channel matches
// the input L wherever the adversarial color stayed inside the sRGB gamut
// (outside it, the gamut clamp deliberately absorbs the difference).
#[test]
fn luminance_is_preserved_in_gamut() {
    let reg = ModelRegistry::new(None);
    let clf = reg.classifier(TOY_ABMEAN2).unwrap();
    let colorizer = reg.colorizer(TOY_COLORIZER).unwrap();

    let img = RgbImage::filled(16, 16, [0.30, 0.55, 0.40]).unwrap();
    let lab = rgb_to_lab(&img);
    let hints = HintSet::empty(16, 16);
    let result = attack_hints_mask(&clf, &colorizer, &lab, &hints, 1, &fast_cfg()).unwrap();

    let back = rgb_to_lab(&result.adversarial);
    let mut in_gamut = 0usize;
    let mut preserved = 0usize;
    for y in 0..16 {
        for x in 0..16 {
            // A pixel is in gamut iff its Lab round-trips.
            let rt = crate::imaging::lab_pixel_to_rgb(
                lab.l()[[y, x]],
                back.ab()[[y, x, 0]],
                back.ab()[[y, x, 1]],
            );
            let lab_rt = crate::imaging::rgb_pixel_to_lab(rt);
            if (lab_rt[1] - back.ab()[[y, x, 0]]).abs() < 0.05
                && (lab_rt[2] - back.ab()[[y, x, 1]]).abs() < 0.05
            {
                in_gamut += 1;
                if (back.l()[[y, x]] - lab.l()[[y, x]]).abs() < 1e-2 {
                    preserved += 1;
                }
            }
        }
    }
    assert!(in_gamut > 128, "attack left too few pixels in gamut: {in_gamut}");
    assert_eq!(preserved, in_gamut, "L drifted on in-gamut pixels");
}

#[test]
fn target_out_of_range_is_rejected() {
    let reg = ModelRegistry::new(None);
    let clf = reg.classifier(TOY_ABMEAN2).unwrap();
    let colorizer = reg.colorizer(TOY_COLORIZER).unwrap();
    let img = RgbImage::filled(8, 8, [0.5, 0.5, 0.5]).unwrap();
    let lab = rgb_to_lab(&img);
    let hints = HintSet::empty(8, 8);
    assert!(attack_hints_mask(&clf, &colorizer, &lab, &hints, 7, &fast_cfg()).is_err());
}
