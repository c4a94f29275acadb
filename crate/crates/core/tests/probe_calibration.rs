// Temporary calibration probe for the desk-scale attack protocol.
// Run with: cargo test -p semadv --test probe_calibration -- --nocapture --ignored

use semadv::cadv::{run_cadv, CadvConfig};
use semadv::imaging::rgb_to_lab;
use semadv::models::toy::{image_seed, synth_image, SYNTH_CLASSES, SYNTH_SIZE};
use semadv::models::ModelRegistry;

#[test]
#[ignore]
fn probe_cadv_protocol() {
    let reg = ModelRegistry::new(None);
    let clf = reg.classifier("toy-cnn").unwrap();
    let colorizer = reg.colorizer("toy-colorizer").unwrap();

    let size: usize = std::env::var("PROBE_SIZE")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(SYNTH_SIZE);
    let lr: f64 = std::env::var("PROBE_LR")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.02);

    let per_class: usize = std::env::var("PROBE_PER_CLASS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(2);
    for k in [1usize, 4, 8] {
        let mut successes = 0;
        let mut total = 0;
        let mut shortfalls = 0;
        let mut misclassified = 0;
        let mut linf_sum = 0.0;
        let mut iters_sum = 0usize;
        let t0 = std::time::Instant::now();
        for class in 0..SYNTH_CLASSES {
            for idx in 0..per_class {
                let seed = image_seed(std::env::var("PROBE_SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(1234), class, idx);
                let img = synth_image(class, seed, size);
                let (_, pred) = clf.classify(&img).unwrap();
                if pred != class {
                    misclassified += 1;
                    continue;
                }
                let target = (class + 1 + (total % (SYNTH_CLASSES - 1))) % SYNTH_CLASSES;
                let lab = rgb_to_lab(&img);
                let cfg = CadvConfig {
                    k,
                    n_hints: 50,
                    lr,
                    max_iters: 300,
                    seed: seed ^ 0xA77AC4,
                    ..Default::default()
                };
                match run_cadv(&clf, &colorizer, &lab, target, &cfg) {
                    Ok((res, _)) => {
                        total += 1;
                        if res.success {
                            successes += 1;
                        }
                        linf_sum += res.norms.linf;
                        iters_sum += res.trace.iterations;
                    }
                    Err(semadv::Error::HintShortfall { .. }) => shortfalls += 1,
                    Err(e) => panic!("attack error: {e}"),
                }
            }
        }
        println!(
            "size {size} lr {lr} cadv_{k}: {successes}/{total} success, {shortfalls} shortfalls, {misclassified} misclassified, mean linf {:.3}, mean iters {:.0}, {:.1}s",
            linf_sum / total.max(1) as f64,
            iters_sum as f64 / total.max(1) as f64,
            t0.elapsed().as_secs_f64()
        );
    }
}

#[test]
#[ignore]
fn probe_coverage_by_k() {
    use ndarray::{ArrayD, IxDyn};
    use semadv::cadv::{compute_entropy_map, prepare_hints, HintSet};
    use semadv::models::colorize;

    let reg = ModelRegistry::new(None);
    let colorizer = reg.colorizer("toy-colorizer").unwrap();
    for k in [1usize, 4, 8] {
        let mut cvg_sum = 0.0;
        let mut n = 0;
        for class in 0..SYNTH_CLASSES {
            for idx in 0..2 {
                let seed = image_seed(1234, class, idx);
                let img = synth_image(class, seed, SYNTH_SIZE);
                let lab = rgb_to_lab(&img);
                let (_, dist) =
                    colorize(&colorizer, lab.l(), &HintSet::empty(32, 32)).unwrap();
                let entropy = compute_entropy_map(&dist).unwrap();
                let cfg = CadvConfig { k, n_hints: 50, seed, ..Default::default() };
                let Ok((_, hints)) = prepare_hints(&lab, &entropy, &cfg) else { continue };
                let mut mag = ArrayD::zeros(IxDyn(&[1, 32, 32]));
                for (y, x) in &hints.positions {
                    mag[[0, *y, *x]] = (hints.hint_ab[[*y, *x, 0]].abs()
                        + hints.hint_ab[[*y, *x, 1]].abs())
                        / 110.0;
                }
                let cvg = colorizer.coverage_field(&mag);
                cvg_sum += cvg.sum() / 1024.0;
                n += 1;
            }
        }
        println!("k={k}: mean coverage {:.4} over {n} images", cvg_sum / n as f64);
    }
}

#[test]
#[ignore]
fn probe_linf_anatomy() {
    use ndarray::{ArrayD, IxDyn};
    use semadv::cadv::{attack_hints_mask, compute_entropy_map, prepare_hints, HintSet};
    use semadv::imaging::lab_to_rgb;
    use semadv::models::colorize;

    let reg = ModelRegistry::new(None);
    let clf = reg.classifier("toy-cnn").unwrap();
    let colorizer = reg.colorizer("toy-colorizer").unwrap();

    for k in [1usize, 4, 8] {
        let class = 2usize;
        let seed = image_seed(1234, class, 0);
        let img = synth_image(class, seed, SYNTH_SIZE);
        let lab = rgb_to_lab(&img);
        let (_, dist) = colorize(&colorizer, lab.l(), &HintSet::empty(32, 32)).unwrap();
        let entropy = compute_entropy_map(&dist).unwrap();
        let cfg = CadvConfig { k, n_hints: 50, lr: 0.02, max_iters: 300, seed, ..Default::default() };
        let Ok((_, hints)) = prepare_hints(&lab, &entropy, &cfg) else {
            println!("k={k}: hint shortfall, skipped");
            continue;
        };

        // Baseline: colorized with initial hints, no attack.
        let (ab0, _) = colorize(&colorizer, lab.l(), &hints).unwrap();
        let base_img = lab_to_rgb(&lab.with_ab(ab0).unwrap()).unwrap();
        let orig = lab_to_rgb(&lab).unwrap();
        let base_linf = semadv::imaging::lp_metrics(&orig, &base_img).unwrap().linf;

        let res = attack_hints_mask(&clf, &colorizer, &lab, &hints, 7, &cfg).unwrap();
        // locate max pixel and its coverage
        let mut mag = ArrayD::zeros(IxDyn(&[1, 32, 32]));
        for (y, x) in &hints.positions {
            mag[[0, *y, *x]] =
                (hints.hint_ab[[*y, *x, 0]].abs() + hints.hint_ab[[*y, *x, 1]].abs()) / 110.0;
        }
        let cvg = colorizer.coverage_field(&mag);
        let mut best = (0usize, 0usize, 0.0f64);
        for y in 0..32 {
            for x in 0..32 {
                for c in 0..3 {
                    let d = (res.adversarial.pixels()[[y, x, c]] - orig.pixels()[[y, x, c]]).abs();
                    if d > best.2 {
                        best = (y, x, d);
                    }
                }
            }
        }
        println!(
            "k={k}: baseline linf {base_linf:.3}, final linf {:.3}, iters {}, success {}, max at ({},{}) cvg {:.2}",
            res.norms.linf, res.trace.iterations, res.success, best.0, best.1, cvg[[0, best.0, best.1]]
        );
    }
}

#[test]
#[ignore]
fn probe_paired_ordering() {
    use std::collections::HashMap;
    let reg = ModelRegistry::new(None);
    let clf = reg.classifier("toy-cnn").unwrap();
    let colorizer = reg.colorizer("toy-colorizer").unwrap();
    let base: u64 = std::env::var("PROBE_SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(1234);
    let per_class: usize = std::env::var("PROBE_PER_CLASS").ok().and_then(|v| v.parse().ok()).unwrap_or(6);
    let lr: f64 = std::env::var("PROBE_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(0.008);

    let mut linf: HashMap<(usize, usize), [Option<f64>; 3]> = HashMap::new();
    let mut succ = [0usize; 3];
    let mut tot = [0usize; 3];
    for (ki, k) in [1usize, 4, 8].into_iter().enumerate() {
        for class in 0..SYNTH_CLASSES {
            for idx in 0..per_class {
                let seed = image_seed(base, class, idx);
                let img = synth_image(class, seed, SYNTH_SIZE);
                let (_, pred) = clf.classify(&img).unwrap();
                if pred != class {
                    continue;
                }
                let target = (class + 1 + idx) % SYNTH_CLASSES;
                let target = if target == class { (class + 1) % SYNTH_CLASSES } else { target };
                let lab = rgb_to_lab(&img);
                let cfg = CadvConfig { k, n_hints: 50, lr, max_iters: 300, seed: seed ^ 0xA77AC4, ..Default::default() };
                if let Ok((res, _)) = run_cadv(&clf, &colorizer, &lab, target, &cfg) {
                    linf.entry((class, idx)).or_default()[ki] = Some(res.norms.linf);
                    tot[ki] += 1;
                    if res.success {
                        succ[ki] += 1;
                    }
                }
            }
        }
    }
    let paired: Vec<[f64; 3]> = linf
        .values()
        .filter_map(|v| match (v[0], v[1], v[2]) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        })
        .collect();
    let n = paired.len() as f64;
    let mean = |i: usize| paired.iter().map(|p| p[i]).sum::<f64>() / n;
    println!(
        "seed {base}: n_paired {} | success {}/{} {}/{} {}/{} | mean linf k1 {:.4} k4 {:.4} k8 {:.4} | ordered {}",
        paired.len(), succ[0], tot[0], succ[1], tot[1], succ[2], tot[2],
        mean(0), mean(1), mean(2),
        mean(0) >= mean(1) && mean(1) >= mean(2)
    );
}
