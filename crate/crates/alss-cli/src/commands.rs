//! Subcommand implementations.

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use alss_core::boxloss::{
    self, loss_grad, shape_cost_table, shape_table_csv, theta_sweep, BBox, LossKind, LossParams,
};
use alss_core::evalmetrics;
use alss_core::fmt::sig6;
use alss_core::netgraph::{parse_config, NetworkGraph};
use alss_core::ops::finite_diff_grad;
use alss_core::reference;

use alss_core::boxloss::scenarios;

/// Write a file atomically: write to a temp sibling, then rename over.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp__");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn load_graph(config: &Path, seed: u64) -> Result<NetworkGraph<f64>> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let graph =
        parse_config::<f64>(&text, seed).with_context(|| format!("in {}", config.display()))?;
    Ok(graph)
}

pub fn params(
    config: &Path,
    out: Option<&Path>,
    seed: u64,
    height: usize,
    width: usize,
) -> Result<ExitCode> {
    let graph = load_graph(config, seed)?;
    let report = graph.audit_params(height, width)?;
    let csv = report.to_csv();
    if let Some(path) = out {
        write_atomic(path, &csv)?;
    }
    println!(
        "{:>5} {:<9} {:>10} {:>10} {:>7}  note",
        "index", "kind", "computed", "declared", "delta"
    );
    for row in &report.rows {
        println!(
            "{:>5} {:<9} {:>10} {:>10} {:>7}  {}",
            row.index,
            row.kind,
            row.computed_params,
            row.declared_params
                .map_or("-".into(), |p: u64| p.to_string()),
            row.delta.map_or("-".into(), |d: i64| d.to_string()),
            row.note
        );
    }
    println!(
        "total: computed {} declared {} (delta {}), fused {}",
        report.computed_total,
        report.declared_total,
        report.computed_total as i64 - report.declared_total as i64,
        report.fused_computed_total
    );
    let exact_mismatches: Vec<usize> = report
        .exact_class_rows()
        .filter(|r| r.delta.unwrap_or(0) != 0)
        .map(|r| r.index)
        .collect();
    if !exact_mismatches.is_empty() {
        eprintln!("exact-class parameter mismatches at layers {exact_mismatches:?}");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn shapes(config: &Path, height: usize, width: usize, seed: u64) -> Result<ExitCode> {
    let graph = load_graph(config, seed)?;
    let shapes = graph
        .propagate_shapes(height, width)
        .context("shape propagation failed")?;
    let mut mismatches = 0usize;
    let fmt_shape = |s: Option<(usize, usize, usize)>| match s {
        Some((c, h, w)) => format!("{c}x{h}x{w}"),
        None => "-".to_string(),
    };
    println!(
        "{:>5} {:<9} {:>14} {:>14}  status",
        "index", "kind", "computed", "declared"
    );
    for node in &graph.nodes {
        let computed = shapes[node.index];
        let ok = node.declared_output.map_or(true, |d| computed == Some(d));
        if !ok {
            mismatches += 1;
        }
        println!(
            "{:>5} {:<9} {:>14} {:>14}  {}",
            node.index,
            node.op.kind_name(),
            fmt_shape(computed),
            fmt_shape(node.declared_output),
            if ok { "ok" } else { "MISMATCH" }
        );
    }
    let declared = graph
        .nodes
        .iter()
        .filter(|n| n.declared_output.is_some())
        .count();
    println!("{}/{declared} declared shapes match", declared - mismatches);
    Ok(if mismatches == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn loss_table(theta: f64, out: Option<&Path>, sweep: bool) -> Result<ExitCode> {
    if theta <= 0.0 {
        bail!("parse error: theta must be positive");
    }
    if sweep {
        println!("theta  max_abs_deviation");
        let sweeps = theta_sweep(1..=8);
        for (t, dev) in &sweeps {
            println!("{t:>5}  {}", sig6(*dev));
        }
        let best = sweeps
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty sweep");
        println!("minimum at theta = {}", best.0);
        return Ok(ExitCode::SUCCESS);
    }
    let rows = shape_cost_table(theta);
    let csv = shape_table_csv(&rows);
    if let Some(path) = out {
        write_atomic(path, &csv)?;
    }
    print!("{csv}");
    let max_dev = boxloss::shape_table_max_deviation(theta);
    println!("max abs deviation from printed cells: {}", sig6(max_dev));
    for (row, ex) in rows.iter().zip(reference::SHAPE_COST_EXAMPLES.iter()) {
        if ex.siou_printing == reference::CellPrinting::Inconsistent {
            println!(
                "note: printed Omega(SIOU) {} for gt {}x{} pred {}x{} is inconsistent with its own printed side ratios; formula gives {} (delta {})",
                ex.printed_omega_siou,
                ex.gt_w,
                ex.gt_h,
                ex.pred_w,
                ex.pred_h,
                sig6(row.omega_siou),
                sig6((row.omega_siou - ex.printed_omega_siou).abs())
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(loss: &str, trials: usize, seed: u64, theta: f64, eta: f64) -> Result<ExitCode> {
    if trials == 0 {
        bail!("parse error: --trials must be at least 1");
    }
    let kind = LossKind::parse(loss).map_err(|e| anyhow::anyhow!("parse error: {e}"))?;
    let params = LossParams::new(theta, eta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut redraws = 0usize;
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for trial in 0..trials {
        let (pred, gt) = loop {
            match boxloss::sample_generic_pair(&mut rng) {
                Some(pair) => break pair,
                None => redraws += 1,
            }
        };
        let analytic = loss_grad(kind, &pred, &gt, &params);
        let f = |v: &[f64]| {
            boxloss::eval_loss(kind, &BBox::new(v[0], v[1], v[2], v[3]), &gt, &params).total
        };
        let fd = finite_diff_grad(f, &[pred.cx, pred.cy, pred.w, pred.h], 1e-6)?;
        let trial_worst = boxloss::gradient_rel_err(&analytic, &fd);
        worst = worst.max(trial_worst);
        if trial_worst >= 1e-4 {
            failures += 1;
            eprintln!(
                "trial {trial}: rel error {} at pred=({}, {}, {}, {})",
                sig6(trial_worst),
                sig6(pred.cx),
                sig6(pred.cy),
                sig6(pred.w),
                sig6(pred.h)
            );
        }
    }
    println!(
        "{}: {}/{} trials within 1e-4 (worst rel error {}, {} singular redraws)",
        kind.as_str(),
        trials - failures,
        trials,
        sig6(worst),
        redraws
    );
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn regress(path: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let suite = scenarios::parse_suite(&text).with_context(|| format!("in {}", path.display()))?;
    let mut csv = String::from("scenario,kind,step,iou,lambda,zeta,delta,omega,total\n");
    let mut summary = vec![format!(
        "{:<16} {:<9} {:>12} {:>12} {:>10} {:>10}",
        "scenario", "kind", "initial", "final", "steps", "violations"
    )];
    for sc in &suite.scenarios {
        for &kind in &sc.kinds {
            let params = LossParams::new(sc.theta, sc.eta);
            let traj = boxloss::regression_sim(
                &sc.init,
                &sc.target,
                kind,
                &params,
                sc.step_size,
                sc.max_steps,
                sc.tol,
            )?;
            for step in &traj.steps {
                let b = &step.breakdown;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    sc.name,
                    kind.as_str(),
                    step.step,
                    sig6(b.iou),
                    sig6(b.lambda),
                    sig6(b.zeta),
                    sig6(b.delta),
                    sig6(b.omega),
                    sig6(b.total)
                ));
            }
            let steps = match traj.outcome {
                boxloss::Outcome::Converged(n) => n.to_string(),
                boxloss::Outcome::Exhausted => "exhausted".to_string(),
                boxloss::Outcome::Diverged(n) => format!("DIVERGED@{n}"),
            };
            summary.push(format!(
                "{:<16} {:<9} {:>12} {:>12} {:>10} {:>10}",
                sc.name,
                kind.as_str(),
                sig6(traj.initial().total),
                sig6(traj.steps.last().unwrap().breakdown.total),
                steps,
                traj.monotone_violations.len()
            ));
        }
    }
    if let Some(path) = out {
        write_atomic(path, &csv)?;
    }
    for line in summary {
        println!("{line}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn eval(
    gt_path: &Path,
    det_path: &Path,
    iou: f64,
    classes: Option<&[usize]>,
    out_json: Option<&Path>,
    out_csv: Option<&Path>,
) -> Result<ExitCode> {
    let read = |p: &Path| -> Result<String> {
        fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
    };
    let gt_text = read(gt_path)?;
    let gts = if gt_path.extension().is_some_and(|e| e == "json") {
        evalmetrics::parse_gt_json(&gt_text)
    } else {
        evalmetrics::parse_gt_text(&gt_text)
    }
    .with_context(|| format!("in {}", gt_path.display()))?;
    let det_text = read(det_path)?;
    let dets = if det_path.extension().is_some_and(|e| e == "json") {
        evalmetrics::parse_det_json(&det_text)
    } else {
        evalmetrics::parse_det_text(&det_text)
    }
    .with_context(|| format!("in {}", det_path.display()))?;

    let class_list: Vec<usize> = match classes {
        Some(c) => c.to_vec(),
        None => {
            let mut ids: Vec<usize> = gts.iter().map(|g| g.class_id).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        }
    };
    let report = evalmetrics::evaluate(&dets, &gts, &class_list, iou)?;
    if let Some(path) = out_json {
        write_atomic(path, &report.to_json())?;
    }
    if let Some(path) = out_csv {
        write_atomic(path, &report.per_class_csv())?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "mAP@{}: {}  P: {}  R: {}  F1: {} (confidence {})",
        sig6(iou),
        sig6(report.map),
        sig6(report.precision),
        sig6(report.recall),
        sig6(report.f1),
        sig6(report.max_f1_confidence)
    );
    for c in &report.per_class {
        println!(
            "  class {}: AP {} ({} gt, {} det){}",
            c.class_id,
            sig6(c.ap),
            c.num_gt,
            c.num_det,
            c.note
                .as_deref()
                .map(|n| format!(" ({n})"))
                .unwrap_or_default()
        );
    }
    Ok(ExitCode::SUCCESS)
}
