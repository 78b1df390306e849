//! Naive scalar-loop oracles, independent of the library's implementation
//! paths, plus small random generators for the test suites.
//!
//! Compiled once per test target; not every target uses every helper.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use alss_core::boxloss::BBox;
use alss_core::tensor::{BnParams, ConvParams, Tensor4};

pub fn max_rel_err(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Plain seven-loop grouped cross-correlation with explicit zero padding.
pub fn naive_conv2d(x: &Tensor4<f64>, p: &ConvParams<f64>) -> Tensor4<f64> {
    let (n, _, ih, iw) = x.dims();
    let oh = (ih + 2 * p.padding - p.kernel) / p.stride + 1;
    let ow = (iw + 2 * p.padding - p.kernel) / p.stride + 1;
    let in_per_group = p.in_channels / p.groups;
    let out_per_group = p.out_channels / p.groups;
    let mut out = Tensor4::zeros(n, p.out_channels, oh, ow);
    for b in 0..n {
        for oc in 0..p.out_channels {
            let group = oc / out_per_group;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias.as_ref().map_or(0.0, |bs| bs[oc]);
                    for ic in 0..in_per_group {
                        for ky in 0..p.kernel {
                            for kx in 0..p.kernel {
                                let y = (oy * p.stride + ky) as isize - p.padding as isize;
                                let xx = (ox * p.stride + kx) as isize - p.padding as isize;
                                if y < 0 || y >= ih as isize || xx < 0 || xx >= iw as isize {
                                    continue;
                                }
                                let w = p.weights
                                    [((oc * in_per_group + ic) * p.kernel + ky) * p.kernel + kx];
                                acc += w * x.get(
                                    b,
                                    group * in_per_group + ic,
                                    y as usize,
                                    xx as usize,
                                );
                            }
                        }
                    }
                    out.set(b, oc, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Windowed maximum with -inf padding.
pub fn naive_max_pool(
    x: &Tensor4<f64>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor4<f64> {
    let (n, c, ih, iw) = x.dims();
    let oh = (ih + 2 * padding - kernel) / stride + 1;
    let ow = (iw + 2 * padding - kernel) / stride + 1;
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let y = (oy * stride + ky) as isize - padding as isize;
                            let xx = (ox * stride + kx) as isize - padding as isize;
                            if y < 0 || y >= ih as isize || xx < 0 || xx >= iw as isize {
                                continue;
                            }
                            best = best.max(x.get(b, ch, y as usize, xx as usize));
                        }
                    }
                    out.set(b, ch, oy, ox, best);
                }
            }
        }
    }
    out
}

/// Per-element normalization formula.
pub fn naive_batch_norm(x: &Tensor4<f64>, p: &BnParams<f64>) -> Tensor4<f64> {
    let (n, c, h, w) = x.dims();
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let v = p.scale[ch] * (x.get(b, ch, i, j) - p.running_mean[ch])
                        / (p.running_var[ch] + p.eps).sqrt()
                        + p.shift[ch];
                    out.set(b, ch, i, j, v);
                }
            }
        }
    }
    out
}

/// Regroup-transpose permutation written as explicit index arithmetic.
pub fn naive_shuffle(x: &Tensor4<f64>, groups: usize) -> Tensor4<f64> {
    let (n, c, h, w) = x.dims();
    let per = c / groups;
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for g in 0..groups {
            for k in 0..per {
                // input channel g*per+k lands at position k*groups+g
                for i in 0..h {
                    for j in 0..w {
                        out.set(b, k * groups + g, i, j, x.get(b, g * per + k, i, j));
                    }
                }
            }
        }
    }
    out
}

/// Directional attention evaluated with scalar loops: per-axis means,
/// grouped pointwise transforms, sigmoid gates, broadcast product.
pub fn naive_lca(
    x: &Tensor4<f64>,
    f_h_weights: &[f64],
    f_h_bias: &[f64],
    f_w_weights: &[f64],
    f_w_bias: &[f64],
    groups: usize,
) -> Tensor4<f64> {
    let (n, c, h, w) = x.dims();
    let per = c / groups;
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        // pooled descriptors
        let mut z_h = vec![0.0; c * h];
        let mut z_w = vec![0.0; c * w];
        for ch in 0..c {
            for i in 0..h {
                let mut acc = 0.0;
                for j in 0..w {
                    acc += x.get(b, ch, i, j);
                }
                z_h[ch * h + i] = acc / w as f64;
            }
            for j in 0..w {
                let mut acc = 0.0;
                for i in 0..h {
                    acc += x.get(b, ch, i, j);
                }
                z_w[ch * w + j] = acc / h as f64;
            }
        }
        // grouped pointwise transforms + sigmoid
        let transform =
            |z: &[f64], len: usize, weights: &[f64], bias: &[f64], oc: usize, pos: usize| {
                let group = oc / per;
                let mut acc = bias[oc];
                for ic in 0..per {
                    acc += weights[oc * per + ic] * z[(group * per + ic) * len + pos];
                }
                sigmoid(acc)
            };
        for ch in 0..c {
            for i in 0..h {
                let gh = transform(&z_h, h, f_h_weights, f_h_bias, ch, i);
                for j in 0..w {
                    let gw = transform(&z_w, w, f_w_weights, f_w_bias, ch, j);
                    out.set(b, ch, i, j, x.get(b, ch, i, j) * gh * gw);
                }
            }
        }
    }
    out
}

/// Random box with coordinates in the unit image.
pub fn random_box(rng: &mut ChaCha8Rng) -> BBox<f64> {
    BBox::new(
        0.2 + 0.6 * rng.gen::<f64>(),
        0.2 + 0.6 * rng.gen::<f64>(),
        0.05 + 0.35 * rng.gen::<f64>(),
        0.05 + 0.35 * rng.gen::<f64>(),
    )
}

pub fn draw_generic_pair(rng: &mut ChaCha8Rng) -> (BBox<f64>, BBox<f64>) {
    loop {
        if let Some(pair) = alss_core::boxloss::sample_generic_pair(rng) {
            return pair;
        }
    }
}

// --- independent detection-metrics oracle -------------------------------

use alss_core::evalmetrics::{Detection, GtBox};

fn oracle_iou(a: &BBox<f64>, b: &BBox<f64>) -> f64 {
    let (ax1, ax2) = (a.cx - a.w / 2.0, a.cx + a.w / 2.0);
    let (ay1, ay2) = (a.cy - a.h / 2.0, a.cy + a.h / 2.0);
    let (bx1, bx2) = (b.cx - b.w / 2.0, b.cx + b.w / 2.0);
    let (by1, by2) = (b.cy - b.h / 2.0, b.cy + b.h / 2.0);
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / ((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter)
}

pub struct OracleReport {
    pub map: f64,
    pub per_class_ap: Vec<(usize, f64)>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub max_f1_confidence: f64,
}

/// Scalar-loop evaluator: greedy matching per class/image in descending
/// confidence, cumulative PR, right-envelope AP, pooled max-F1 point.
pub fn oracle_evaluate(
    dets: &[Detection],
    gts: &[GtBox],
    classes: &[usize],
    thr: f64,
) -> OracleReport {
    let mut pooled: Vec<(f64, bool)> = Vec::new();
    let mut per_class_ap = Vec::new();
    let mut ap_sum = 0.0;
    let mut included = 0usize;
    for &class in classes {
        let mut cd: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class).collect();
        cd.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
        let cg: Vec<&GtBox> = gts.iter().filter(|g| g.class_id == class).collect();
        let mut used = vec![false; cg.len()];
        let mut flags = Vec::with_capacity(cd.len());
        for d in &cd {
            let mut best = 0.0;
            let mut besti = usize::MAX;
            for (i, g) in cg.iter().enumerate() {
                if used[i] || g.image_id != d.image_id {
                    continue;
                }
                let o = oracle_iou(&d.bbox, &g.bbox);
                if o >= thr && o > best {
                    best = o;
                    besti = i;
                }
            }
            if besti != usize::MAX {
                used[besti] = true;
                flags.push(true);
            } else {
                flags.push(false);
            }
        }
        pooled.extend(cd.iter().zip(flags.iter()).map(|(d, &f)| (d.confidence, f)));
        let mut precision = Vec::new();
        let mut recall = Vec::new();
        let mut tp = 0usize;
        for (k, &f) in flags.iter().enumerate() {
            if f {
                tp += 1;
            }
            precision.push(tp as f64 / (k + 1) as f64);
            recall.push(if cg.is_empty() {
                0.0
            } else {
                tp as f64 / cg.len() as f64
            });
        }
        let mut env = precision.clone();
        for i in (0..env.len().saturating_sub(1)).rev() {
            env[i] = env[i].max(env[i + 1]);
        }
        let mut ap = 0.0;
        let mut prev = 0.0;
        for i in 0..env.len() {
            ap += (recall[i] - prev) * env[i];
            prev = recall[i];
        }
        per_class_ap.push((class, ap));
        if !(cg.is_empty() && cd.is_empty()) {
            ap_sum += ap;
            included += 1;
        }
    }
    pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let total_gt = gts.iter().filter(|g| classes.contains(&g.class_id)).count();
    let mut best = (0.0f64, 1.0f64, 0.0f64, 0.0f64); // f1, thr, p, r
    let mut tp = 0usize;
    for k in 0..pooled.len() {
        if pooled[k].1 {
            tp += 1;
        }
        if k + 1 < pooled.len() && pooled[k + 1].0 == pooled[k].0 {
            continue;
        }
        let p = tp as f64 / (k + 1) as f64;
        let r = if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        };
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        if f1 > best.0 {
            best = (f1, pooled[k].0, p, r);
        }
    }
    OracleReport {
        map: if included == 0 {
            0.0
        } else {
            ap_sum / included as f64
        },
        per_class_ap,
        precision: best.2,
        recall: best.3,
        f1: best.0,
        max_f1_confidence: best.1,
    }
}

/// Random small detection corpus: up to 20 boxes over 3 images, 3 classes.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> (Vec<Detection>, Vec<GtBox>) {
    let images = ["a", "b", "c"];
    let n_gt = rng.gen_range(1..=10);
    let n_det = rng.gen_range(0..=20);
    let gts: Vec<GtBox> = (0..n_gt)
        .map(|_| GtBox {
            image_id: images[rng.gen_range(0..3)].to_string(),
            class_id: rng.gen_range(0..3),
            bbox: random_box(rng),
        })
        .collect();
    let dets: Vec<Detection> = (0..n_det)
        .map(|_| {
            // half the detections perturb a ground-truth box, half are noise
            let bbox = if rng.gen::<bool>() && !gts.is_empty() {
                let g = &gts[rng.gen_range(0..gts.len())];
                BBox::new(
                    g.bbox.cx + 0.02 * (rng.gen::<f64>() - 0.5),
                    g.bbox.cy + 0.02 * (rng.gen::<f64>() - 0.5),
                    g.bbox.w * (0.9 + 0.2 * rng.gen::<f64>()),
                    g.bbox.h * (0.9 + 0.2 * rng.gen::<f64>()),
                )
            } else {
                random_box(rng)
            };
            Detection {
                image_id: images[rng.gen_range(0..3)].to_string(),
                class_id: rng.gen_range(0..3),
                bbox,
                confidence: (rng.gen::<f64>() * 100.0).round() / 100.0,
            }
        })
        .collect();
    (dets, gts)
}
