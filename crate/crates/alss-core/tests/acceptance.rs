//! Acceptance suite: one test per acceptance criterion, each printing a
//! pass line with its measured margins. Tolerances are pinned here as
//! constants.

mod common;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use alss_core::boxloss::{
    self, eval_loss, finesiou_shape_cost, loss_grad, scenarios, siou_shape_cost, zeta_angle_term,
    BBox, LossKind, LossParams, ANGLE_THRESHOLD,
};
use alss_core::evalmetrics;
use alss_core::netgraph::{build_alss_yolo, BuildOverrides, NetworkGraph};
use alss_core::ops;
use alss_core::reference::{
    self, CellPrinting, INCONSISTENT_SHAPE_LAYER, PRINTED_FUSED_TOTAL_PARAMS, PRINTED_TOTAL_PARAMS,
    PRINT_ULP, RECONSTRUCTED_LAYER19_CHANNELS, ROUNDED_CELL_TOL, SHAPE_COST_EXAMPLES,
    SHAPE_TABLE_THETA,
};
use alss_core::tensor::Tensor4;

const GRAD_REL_TOL: f64 = 1e-4;
const ORACLE_REL_TOL: f64 = 1e-10;
const FUSION_REL_TOL: f64 = 1e-6;
const SCALE_INVARIANCE_TOL: f64 = 1e-12;
const CALIBRATED_LAYER_TOL: f64 = 0.15;
const TOTAL_PARAMS_TOL: f64 = 0.05;
const REGRESSION_STEP: f64 = 1e-3;

fn reference_graph() -> NetworkGraph<f64> {
    build_alss_yolo(4, 0, BuildOverrides::default()).unwrap()
}

fn workspace_file(rel: &str) -> String {
    let path = format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {path}: {e}"))
}

/// Criterion 1: the printed shape-cost table is reproduced at θ = 3: the
/// thirteen correctly-rounded cells match within 5e-5; the two cells the
/// table prints truncated (0.0167 for a computed 0.016779…) reproduce the
/// printed digits under truncation and stay within one print-ulp; the one
/// formula-inconsistent cell (printed 0.0967 where its own printed side
/// ratios give 0.1761) is reported, not forced. θ = 3 uniquely minimizes
/// the max deviation over integer θ in 1..=8.
#[test]
fn criterion_1_shape_cost_table() {
    let start = Instant::now();
    let rows = boxloss::shape_cost_table(SHAPE_TABLE_THETA);
    let mut rounded = 0;
    let mut truncated = 0;
    let mut inconsistent_delta = 0.0;
    for (row, ex) in rows.iter().zip(SHAPE_COST_EXAMPLES.iter()) {
        for (computed, printed, printing) in [
            (row.omega_siou, ex.printed_omega_siou, ex.siou_printing),
            (row.omega_fine, ex.printed_omega_fine, ex.fine_printing),
        ] {
            match printing {
                CellPrinting::Rounded => {
                    assert!(
                        (computed - printed).abs() <= ROUNDED_CELL_TOL,
                        "cell {printed} deviates: computed {computed}"
                    );
                    rounded += 1;
                }
                CellPrinting::Truncated => {
                    assert_eq!(reference::trunc4(computed), printed);
                    assert!((computed - printed).abs() < PRINT_ULP);
                    truncated += 1;
                }
                CellPrinting::Inconsistent => {
                    // the printed 0.0967 cell: its own printed omega pair
                    // (2/3, 1/2) gives the value printed in the fine column
                    assert!((computed - ex.printed_omega_fine).abs() <= ROUNDED_CELL_TOL);
                    inconsistent_delta = (computed - printed).abs();
                    assert!(inconsistent_delta > 0.07);
                }
            }
        }
    }
    assert_eq!((rounded, truncated), (13, 2));

    let sweep = boxloss::theta_sweep(1..=8);
    let best = sweep.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, 3, "theta sweep must bottom out at 3: {sweep:?}");
    let runner_up = sweep
        .iter()
        .filter(|(t, _)| *t != 3)
        .map(|&(_, d)| d)
        .fold(f64::INFINITY, f64::min);
    assert!(best.1 < runner_up, "theta = 3 must be the unique minimum");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "criterion 1 exceeded 1 s");
    println!(
        "criterion 1: PASS: 13 rounded cells within 5e-5, 2 truncated cells within one print-ulp, \
         inconsistent cell delta {:.4} reported; theta sweep minimum at 3 ({:.1e} vs next {:.1e}); {:?}",
        inconsistent_delta, best.1, runner_up, elapsed
    );
}

/// Criterion 2: layers whose internals the reference fully determines
/// match their printed parameter counts exactly.
#[test]
fn criterion_2_exact_parameter_class() {
    let start = Instant::now();
    let graph = reference_graph();
    let report = graph.audit_params(640, 640).unwrap();
    let expect: &[(usize, u64)] = &[
        (1, 1168),
        (2, 1184),
        (3, 3504),
        (9, 77_968),
        (10, 0),
        (11, 0),
        (13, 0),
        (14, 0),
        (17, 0),
        (18, 3248),
        (19, 0),
        (21, 0),
        (22, 3248),
        (23, 0),
        (25, 391_324),
    ];
    for &(index, want) in expect {
        let row = &report.rows[index];
        assert_eq!(
            row.computed_params, want,
            "layer {index} ({}) computed {} != printed {want}",
            row.kind, row.computed_params
        );
        assert_eq!(row.declared_params, Some(want));
    }
    for row in report.exact_class_rows() {
        assert_eq!(
            row.delta.unwrap_or(0),
            0,
            "exact-class layer {} off",
            row.index
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "criterion 2 exceeded 1 s");
    println!(
        "criterion 2: PASS: all exact-class layers match printed counts (incl. Focus 1168, \
         SPPF 77968, Detect 391324); {elapsed:?}"
    );
}

/// Criterion 3: calibrated layers sit within ±15% of the printed counts
/// (the committed knobs give 0 delta on every split/shuffle layer and
/// −3.5% on the attention layer), the total is within ±5% of 1455154, the
/// per-layer delta report is emitted, and batch-norm fusion strictly
/// reduces the count while preserving forward outputs within 1e-6
/// relative on 5 random inputs.
#[test]
fn criterion_3_calibrated_parameter_class() {
    let graph = reference_graph();
    let report = graph.audit_params(640, 640).unwrap();
    let mut worst: f64 = 0.0;
    for row in report
        .rows
        .iter()
        .filter(|r| r.kind == "ALSS" || r.kind == "LCA")
    {
        let declared = row.declared_params.unwrap() as f64;
        let rel = (row.computed_params as f64 - declared).abs() / declared;
        worst = worst.max(rel);
        assert!(
            rel <= CALIBRATED_LAYER_TOL,
            "layer {} ({}) off by {:.1}%",
            row.index,
            row.kind,
            rel * 100.0
        );
    }
    let total_rel = (report.computed_total as f64 - PRINTED_TOTAL_PARAMS as f64).abs()
        / PRINTED_TOTAL_PARAMS as f64;
    assert!(total_rel <= TOTAL_PARAMS_TOL);

    let csv = report.to_csv();
    assert!(csv.lines().count() >= 27 && csv.contains("delta"));

    assert!(report.fused_computed_total < report.computed_total);
    let fused_rel = (report.fused_computed_total as f64 - PRINTED_FUSED_TOTAL_PARAMS as f64).abs()
        / PRINTED_FUSED_TOTAL_PARAMS as f64;

    let fused = graph.fuse_bn();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_fusion: f64 = 0.0;
    for _ in 0..5 {
        let x = Tensor4::<f64>::random(1, 1, 64, 64, &mut rng);
        let a = graph.forward(&x).unwrap();
        let b = fused.forward(&x).unwrap();
        for (av, bv) in a.node_outputs.iter().zip(b.node_outputs.iter()) {
            for (at, bt) in av.iter().zip(bv.iter()) {
                for (x1, x2) in at.iter().zip(bt.iter()) {
                    worst_fusion =
                        worst_fusion.max((x1 - x2).abs() / (x1.abs() + x2.abs() + 1e-12));
                }
            }
        }
    }
    assert!(worst_fusion < FUSION_REL_TOL);
    println!(
        "criterion 3: PASS: calibrated layers within ±15% (worst {:.2}%), total {} within ±5% of {} \
         ({:+.3}%), fused {} vs printed {} ({:+.3}%), fusion forward max rel err {:.1e}",
        worst * 100.0,
        report.computed_total,
        PRINTED_TOTAL_PARAMS,
        (report.computed_total as f64 / PRINTED_TOTAL_PARAMS as f64 - 1.0) * 100.0,
        report.fused_computed_total,
        PRINTED_FUSED_TOTAL_PARAMS,
        fused_rel * 100.0,
        worst_fusion
    );
}

/// Criterion 4: the shape audit against the verbatim printed output
/// column for a 1×640×640 input: 25 of 26 rows match exactly; the single
/// mismatch is layer 19, whose printed 136×40×40 contradicts the printed
/// wiring (concat of 56 + 88 channels) and layer 20's printed parameter
/// count (120484 is reachable only from 144 input channels). The
/// irreconcilable row is asserted and reported, not forced.
#[test]
fn criterion_4_shape_audit() {
    let start = Instant::now();
    let graph = reference_graph();
    let shapes = graph.propagate_shapes(640, 640).unwrap();
    let mut matched = 0usize;
    let mut mismatched = Vec::new();
    for layer in reference::REFERENCE_LAYERS.iter() {
        let Some(printed) = layer.printed_output else {
            continue;
        };
        if shapes[layer.index] == Some(printed) {
            matched += 1;
        } else {
            mismatched.push(layer.index);
        }
    }
    assert_eq!(
        mismatched,
        vec![INCONSISTENT_SHAPE_LAYER],
        "exactly the known inconsistent row may mismatch"
    );
    assert_eq!(matched, 24); // of the 25 printed shapes (detect prints none)
    assert_eq!(
        shapes[INCONSISTENT_SHAPE_LAYER],
        Some((RECONSTRUCTED_LAYER19_CHANNELS, 40, 40))
    );
    // the reconciling evidence: layer 20's printed count holds exactly
    // with the 144-channel input that the actual wiring produces
    let report = graph.audit_params(640, 640).unwrap();
    assert_eq!(report.rows[20].computed_params, 120_484);
    assert_eq!(report.rows[20].delta, Some(0));
    // and the declared build contract (config with the reconciled shape)
    // matches computed shapes on all 26 rows
    assert_eq!(report.shape_mismatches, 0);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "criterion 4 exceeded 10 s");
    println!(
        "criterion 4: PASS: 24/25 printed shapes match exactly; layer 19 computed 144x40x40 vs \
         printed 136x40x40 is the printed table's internal inconsistency (its own wiring sums \
         56+88 and layer 20's 120484 params require 144); reported, not forced; {elapsed:?}"
    );
}

/// Criterion 5: per loss kind, 100 random generic box pairs give
/// dual-number vs central-difference agreement within 1e-4 relative, and
/// zero-at-identity holds exactly.
#[test]
fn criterion_5_gradient_suite() {
    let start = Instant::now();
    let params = LossParams::default();
    for kind in [LossKind::Ciou, LossKind::Siou, LossKind::FineSiou] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for trial in 0..100 {
            let (pred, gt) = common::draw_generic_pair(&mut rng);
            let analytic = loss_grad(kind, &pred, &gt, &params);
            let f =
                |v: &[f64]| eval_loss(kind, &BBox::new(v[0], v[1], v[2], v[3]), &gt, &params).total;
            let fd = ops::finite_diff_grad(f, &[pred.cx, pred.cy, pred.w, pred.h], 1e-6).unwrap();
            let rel = boxloss::gradient_rel_err(&analytic, &fd);
            assert!(
                rel < GRAD_REL_TOL,
                "{kind:?} trial {trial}: ad {analytic:?} vs fd {fd:?}"
            );
            worst = worst.max(rel);
        }
        let ident = BBox::<f64>::new(0.4, 0.6, 0.2, 0.3);
        assert_eq!(eval_loss(kind, &ident, &ident, &params).total, 0.0);
        println!(
            "criterion 5 [{}]: 100/100 gradients within 1e-4 (worst {:.2e}); zero at identity",
            kind.as_str(),
            worst
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "criterion 5 exceeded 5 s");
    println!("criterion 5: PASS: all three loss kinds; {elapsed:?}");
}

/// Criterion 6: loss properties over 1000 seeded random trials: component
/// bounds, translation invariance of the shape costs, scale invariance of
/// every component to 1e-12, the gt-normalized asymmetry on the printed
/// table pairs, and the coincident-center / above-threshold conventions.
#[test]
fn criterion_6_loss_property_suite() {
    let params = LossParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..1000 {
        let pred = common::random_box(&mut rng);
        let gt = common::random_box(&mut rng);

        let bd = boxloss::finesiou_loss(&pred, &gt, &params);
        assert!((0.0..=1.0).contains(&bd.iou), "trial {trial}");
        assert!((0.0..=1.0).contains(&bd.lambda));
        assert!((0.0..1.0).contains(&bd.zeta));
        assert!((0.0..2.0).contains(&bd.delta));
        assert!((0.0..2.0).contains(&bd.omega));

        // translation invariance of both shape costs
        use rand::Rng;
        let (dx, dy) = (rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        let moved_pred = BBox {
            cx: pred.cx + dx,
            cy: pred.cy + dy,
            ..pred
        };
        let moved_gt = BBox {
            cx: gt.cx + dx,
            cy: gt.cy + dy,
            ..gt
        };
        assert_eq!(
            siou_shape_cost(&pred, &gt, params.theta),
            siou_shape_cost(&moved_pred, &moved_gt, params.theta)
        );
        assert_eq!(
            finesiou_shape_cost(&pred, &gt, params.theta),
            finesiou_shape_cost(&moved_pred, &moved_gt, params.theta)
        );

        // scale invariance of every component
        let k = 0.1 + 9.9 * rng.gen::<f64>();
        let scale = |b: &BBox<f64>| BBox::<f64>::new(b.cx * k, b.cy * k, b.w * k, b.h * k);
        let a = boxloss::finesiou_loss(&pred, &gt, &params);
        let b = boxloss::finesiou_loss(&scale(&pred), &scale(&gt), &params);
        for (u, v) in [
            (a.iou, b.iou),
            (a.lambda, b.lambda),
            (a.zeta, b.zeta),
            (a.delta, b.delta),
            (a.omega, b.omega),
            (
                boxloss::siou_shape_cost(&pred, &gt, params.theta),
                boxloss::siou_shape_cost(&scale(&pred), &scale(&gt), params.theta),
            ),
        ] {
            assert!(
                (u - v).abs() <= SCALE_INVARIANCE_TOL * u.abs().max(v.abs()).max(1.0),
                "trial {trial}: {u} vs {v} at k={k}"
            );
        }
    }

    // asymmetry on the printed table pairs: oversized prediction scores
    // strictly higher under gt normalization, and the two directions of
    // each pair order as printed (0.1761 > 0.0586, 0.0336 > 0.0168)
    for (gtd, prd) in [((30.0, 40.0), (50.0, 60.0)), ((60.0, 80.0), (80.0, 100.0))] {
        let gt = BBox::<f64>::new(0.0, 0.0, gtd.0, gtd.1);
        let pred = BBox::<f64>::new(0.0, 0.0, prd.0, prd.1);
        let over = finesiou_shape_cost(&pred, &gt, 3.0);
        let under = finesiou_shape_cost(&gt, &pred, 3.0);
        assert!(over > under, "{over} should exceed {under}");
        assert_eq!(under, siou_shape_cost(&gt, &pred, 3.0));
    }
    let gt = BBox::<f64>::new(0.0, 0.0, 30.0, 40.0);
    let pred = BBox::<f64>::new(0.0, 0.0, 50.0, 60.0);
    assert!((finesiou_shape_cost(&pred, &gt, 3.0) - 0.1761).abs() < ROUNDED_CELL_TOL);
    assert!((finesiou_shape_cost(&gt, &pred, 3.0) - 0.0586).abs() < ROUNDED_CELL_TOL);

    // conventions: coincident centers zero the angle machinery; lambda at
    // or above the threshold zeroes the separated term
    let same = BBox::<f64>::new(1.0, 2.0, 3.0, 4.0);
    let (lambda, sigma) = boxloss::angle_cost(&same, &same);
    assert_eq!((lambda, sigma), (0.0, 0.0));
    let bd = boxloss::finesiou_loss(&same, &BBox::new(1.0, 2.0, 5.0, 6.0), &params);
    assert_eq!(bd.zeta, 0.0);
    assert_eq!(zeta_angle_term(ANGLE_THRESHOLD, 3.0, ANGLE_THRESHOLD), 0.0);
    assert_eq!(zeta_angle_term(0.999, 3.0, ANGLE_THRESHOLD), 0.0);
    assert_eq!(zeta_angle_term(1.0, 3.0, ANGLE_THRESHOLD), 0.0);

    println!(
        "criterion 6: PASS: bounds, translation/scale invariance (1e-12), table-pair asymmetry \
         and the sigma=0 / lambda>=0.9847 conventions over 1000 seeded trials"
    );
}

/// Criterion 7: conv, pool, batch-norm, shuffle and directional-attention
/// forwards match naive scalar-loop oracles on 20 randomized small tensors
/// each, max relative error below 1e-10.
#[test]
fn criterion_7_oracle_equivalence() {
    use alss_core::blocks::{LcaBlock, LcaConfig};
    use alss_core::tensor::{BnParams, ConvParams};
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    use rand::Rng;

    for case in 0..20 {
        // conv with rotating stride/groups/bias shapes
        let cin = 2 + case % 4;
        let cout = 2 * (1 + case % 3);
        let groups = if case % 3 == 0 { 2 } else { 1 };
        let (cin, cout) = (cin * groups, cout * groups);
        let x = Tensor4::<f64>::random(1 + case % 2, cin, 5 + case % 3, 5, &mut rng);
        let mut p = ConvParams::new(
            cin,
            cout,
            1 + 2 * (case % 2),
            1 + case % 2,
            case % 2,
            groups,
        )
        .unwrap();
        if case % 2 == 1 {
            p = p.with_bias(vec![0.0; cout]).unwrap();
        }
        p.init_random(&mut rng);
        worst = worst.max(common::max_rel_err(
            &ops::conv2d(&x, &p).unwrap(),
            &common::naive_conv2d(&x, &p),
        ));

        // pooling
        let xp = Tensor4::<f64>::random(1, 2, 6, 6, &mut rng);
        let (k, s, pad) = [(3, 2, 0), (2, 2, 0), (3, 1, 1), (5, 1, 2)][case % 4];
        worst = worst.max(common::max_rel_err(
            &ops::max_pool2d(&xp, k, s, pad).unwrap(),
            &common::naive_max_pool(&xp, k, s, pad),
        ));

        // batch norm
        let xb = Tensor4::<f64>::random(2, 3, 4, 4, &mut rng);
        let mut bn = BnParams::identity(3);
        bn.init_random(&mut rng);
        worst = worst.max(common::max_rel_err(
            &ops::batch_norm_infer(&xb, &bn).unwrap(),
            &common::naive_batch_norm(&xb, &bn),
        ));

        // shuffle
        let groups = [2, 3, 4][case % 3];
        let xs = Tensor4::<f64>::random(1, 12, 3, 3, &mut rng);
        assert_eq!(
            ops::channel_shuffle(&xs, groups).unwrap(),
            common::naive_shuffle(&xs, groups)
        );

        // directional attention
        let c = [4, 6, 8][case % 3];
        let g = if c % 3 == 0 { 3 } else { 2 };
        let mut lca = LcaBlock::<f64>::new(LcaConfig::new(c, g)).unwrap();
        lca.init_random(&mut rng);
        let xl = Tensor4::<f64>::random(1 + case % 2, c, 3 + case % 3, 4, &mut rng);
        let (f_h, f_w) = lca.transforms();
        worst = worst.max(common::max_rel_err(
            &lca.forward(&xl).unwrap(),
            &common::naive_lca(
                &xl,
                &f_h.conv.weights,
                f_h.conv.bias.as_ref().unwrap(),
                &f_w.conv.weights,
                f_w.conv.bias.as_ref().unwrap(),
                g,
            ),
        ));
        let _ = rng.gen::<f64>();
    }
    assert!(worst < ORACLE_REL_TOL, "worst oracle deviation {worst}");
    println!(
        "criterion 7: PASS: conv/pool/norm/shuffle/attention match scalar-loop oracles on 20 \
         random tensors each (worst rel err {worst:.2e} < 1e-10)"
    );
}

/// Criterion 8: the evaluator reproduces the hand-computed fixtures
/// exactly (including the 5/6 AP case) and matches an independent
/// scalar-loop oracle over 200 random corpora.
#[test]
fn criterion_8_evaluator() {
    // hand case: flags T,F,T with 2 gts -> AP 5/6, best F1 4/5
    let curve = evalmetrics::pr_curve(&[true, false, true], 2);
    assert_eq!(curve.precision, vec![1.0, 0.5, 2.0 / 3.0]);
    assert_eq!(curve.recall, vec![0.5, 0.5, 1.0]);
    let ap = evalmetrics::average_precision(&curve);
    assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    let sweep = evalmetrics::f1_sweep(&[true, false, true], &[0.9, 0.8, 0.7], 2);
    assert_eq!(sweep.best_f1, 0.8);

    // bundled 3-image fixture vs the committed golden report
    let gts = evalmetrics::parse_gt_text(&workspace_file(
        "crates/alss-core/tests/fixtures/eval_gt.txt",
    ))
    .unwrap();
    let dets = evalmetrics::parse_det_text(&workspace_file(
        "crates/alss-core/tests/fixtures/eval_det.txt",
    ))
    .unwrap();
    let report = evalmetrics::evaluate(&dets, &gts, &[0, 1], 0.5).unwrap();
    let golden: serde_json::Value = serde_json::from_str(&workspace_file(
        "crates/alss-core/tests/fixtures/eval_golden.json",
    ))
    .unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    assert!(close(report.map, golden["map"].as_f64().unwrap()));
    assert!(close(
        report.precision,
        golden["precision"].as_f64().unwrap()
    ));
    assert!(close(report.recall, golden["recall"].as_f64().unwrap()));
    assert!(close(report.f1, golden["f1"].as_f64().unwrap()));
    assert!(close(
        report.max_f1_confidence,
        golden["max_f1_confidence"].as_f64().unwrap()
    ));
    for (c, g) in report
        .per_class
        .iter()
        .zip(golden["per_class"].as_array().unwrap())
    {
        assert_eq!(c.class_id, g["class_id"].as_u64().unwrap() as usize);
        assert!(close(c.ap, g["ap"].as_f64().unwrap()));
        assert_eq!(c.num_gt as u64, g["num_gt"].as_u64().unwrap());
    }

    // randomized corpora vs the independent oracle
    let classes = [0usize, 1, 2];
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, gts) = common::random_corpus(&mut rng);
        let got = evalmetrics::evaluate(&dets, &gts, &classes, 0.5).unwrap();
        let want = common::oracle_evaluate(&dets, &gts, &classes, 0.5);
        assert!(
            close(got.map, want.map),
            "seed {seed}: map {} vs {}",
            got.map,
            want.map
        );
        assert!(
            close(got.precision, want.precision),
            "seed {seed} precision"
        );
        assert!(close(got.recall, want.recall), "seed {seed} recall");
        assert!(close(got.f1, want.f1), "seed {seed} f1");
        assert_eq!(got.max_f1_confidence, want.max_f1_confidence, "seed {seed}");
        for (c, &(cid, ap)) in got.per_class.iter().zip(want.per_class_ap.iter()) {
            assert_eq!(c.class_id, cid);
            assert!(close(c.ap, ap), "seed {seed} class {cid}: {} vs {ap}", c.ap);
        }
    }
    println!(
        "criterion 8: PASS: hand fixtures exact (AP 5/6 case), bundled 3-image fixture matches \
         the committed golden, 200 random corpora match the scalar oracle"
    );
}

/// Criterion 9: on the committed scenario suite: the gt-normalized shape
/// term starts strictly above the max-normalized one on every
/// oversized-prediction scenario, every non-divergent trajectory is
/// monotone non-increasing at step 1e-3, and a steps-to-tolerance summary
/// is emitted.
#[test]
fn criterion_9_regression_harness() {
    let suite = scenarios::parse_suite(&workspace_file("configs/regress-scenarios.cfg")).unwrap();
    assert!(suite.scenarios.iter().any(|s| s.is_oversized_pred()));
    let mut summary = String::from("scenario,kind,initial_total,steps_to_tolerance,violations\n");
    let mut oversized_checked = 0;
    for sc in &suite.scenarios {
        assert_eq!(
            sc.step_size, REGRESSION_STEP,
            "suite must run at the pinned step"
        );
        let params = LossParams::new(sc.theta, sc.eta);
        let mut initial_omega = std::collections::HashMap::new();
        for &kind in &sc.kinds {
            let traj = boxloss::regression_sim(
                &sc.init,
                &sc.target,
                kind,
                &params,
                sc.step_size,
                sc.max_steps,
                sc.tol,
            )
            .unwrap();
            assert!(
                !matches!(traj.outcome, boxloss::Outcome::Diverged(_)),
                "{} {:?} diverged",
                sc.name,
                kind
            );
            assert!(
                traj.monotone_violations.is_empty(),
                "{} {:?} not monotone at steps {:?}",
                sc.name,
                kind,
                traj.monotone_violations
            );
            if sc.init == sc.target {
                assert_eq!(traj.steps_to_tolerance(), Some(0));
            }
            initial_omega.insert(kind, traj.initial().omega);
            summary.push_str(&format!(
                "{},{},{:.6},{},{}\n",
                sc.name,
                kind.as_str(),
                traj.initial().total,
                traj.steps_to_tolerance()
                    .map_or("exhausted".to_string(), |n| n.to_string()),
                traj.monotone_violations.len()
            ));
        }
        if sc.is_oversized_pred()
            && initial_omega.contains_key(&LossKind::Siou)
            && initial_omega.contains_key(&LossKind::FineSiou)
        {
            let fine = initial_omega[&LossKind::FineSiou];
            let siou = initial_omega[&LossKind::Siou];
            assert!(
                fine > siou,
                "{}: gt-normalized shape cost {fine} must exceed max-normalized {siou}",
                sc.name
            );
            oversized_checked += 1;
        }
    }
    assert!(
        oversized_checked >= 4,
        "suite must cover the oversized table pairs"
    );
    print!("{summary}");
    println!(
        "criterion 9: PASS: {oversized_checked} oversized scenarios show the strict shape-term \
         ordering; all trajectories monotone non-increasing at step 1e-3; summary above"
    );
}
