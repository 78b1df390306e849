//! IoU-family bounding-box regression losses: plain IoU, CIoU, SIOU and
//! FineSIOU, decomposed into angle (Λ, ζ), distance (Δ) and shape (Ω)
//! costs, plus gradients and a small gradient-descent regression harness.
//!
//! All formulas are written once against the [`Real`] trait; evaluating
//! them with [`Dual4`] yields the gradient of the total with respect to the
//! predicted box's (cx, cy, w, h).
//!
//! Conventions at the non-smooth spots: when the two centers coincide the
//! angle cost Λ, the separated angle term ζ and the distance cost Δ are all
//! exactly zero (so a perfect prediction costs exactly zero), and ζ's
//! exponent argument is clamped at zero so Λ above the angle threshold
//! contributes no cost.

mod real;
pub mod scenarios;

pub use real::{Dual4, Real};

use crate::error::{CoreError, Result};

/// Λ values above this threshold (the 5°-proximity point) contribute no
/// separated angle cost.
pub const ANGLE_THRESHOLD: f64 = 0.9847;

/// Axis-aligned box in center format: (cx, cy) center, w × h extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<R> {
    pub cx: R,
    pub cy: R,
    pub w: R,
    pub h: R,
}

impl<R: Real> BBox<R> {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox {
            cx: R::from_f64(cx),
            cy: R::from_f64(cy),
            w: R::from_f64(w),
            h: R::from_f64(h),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.w.value() > 0.0 && self.h.value() > 0.0
    }

    pub fn x1(&self) -> R {
        self.cx - self.w / R::from_f64(2.0)
    }

    pub fn x2(&self) -> R {
        self.cx + self.w / R::from_f64(2.0)
    }

    pub fn y1(&self) -> R {
        self.cy - self.h / R::from_f64(2.0)
    }

    pub fn y2(&self) -> R {
        self.cy + self.h / R::from_f64(2.0)
    }

    pub fn area(&self) -> R {
        self.w * self.h
    }
}

impl BBox<f64> {
    /// Seed the prediction's coordinates as dual variables.
    fn as_dual_vars(&self) -> BBox<Dual4> {
        BBox {
            cx: Dual4::var(self.cx, 0),
            cy: Dual4::var(self.cy, 1),
            w: Dual4::var(self.w, 2),
            h: Dual4::var(self.h, 3),
        }
    }

    fn as_dual_consts(&self) -> BBox<Dual4> {
        BBox {
            cx: Dual4::constant(self.cx),
            cy: Dual4::constant(self.cy),
            w: Dual4::constant(self.w),
            h: Dual4::constant(self.h),
        }
    }
}

/// Loss knobs: shape exponent θ, angle exponent η, the Λ threshold, and
/// whether the distance cost keeps its angle-dependent exponent γ = 2 − Λ
/// (`fixed_distance_gamma` switches to γ = 2; off by default and excluded
/// from the golden tables).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub theta: f64,
    pub eta: f64,
    pub angle_threshold: f64,
    pub fixed_distance_gamma: bool,
}

impl LossParams {
    pub fn new(theta: f64, eta: f64) -> Self {
        LossParams {
            theta,
            eta,
            angle_threshold: ANGLE_THRESHOLD,
            fixed_distance_gamma: false,
        }
    }
}

impl Default for LossParams {
    /// θ = 3 (the value that reproduces the printed shape-cost tables),
    /// η = 3.
    fn default() -> Self {
        LossParams::new(3.0, 3.0)
    }
}

/// Which governing formula a breakdown's total follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Iou,
    Ciou,
    Siou,
    FineSiou,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Iou => "iou",
            LossKind::Ciou => "ciou",
            LossKind::Siou => "siou",
            LossKind::FineSiou => "finesiou",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iou" => Ok(LossKind::Iou),
            "ciou" => Ok(LossKind::Ciou),
            "siou" => Ok(LossKind::Siou),
            "finesiou" | "fine_siou" => Ok(LossKind::FineSiou),
            _ => Err(CoreError::invalid(format!("unknown loss kind `{s}`"))),
        }
    }
}

/// All components of one loss evaluation.
///
/// For CIoU, `delta` holds the normalized center-distance term and `omega`
/// the aspect-ratio consistency term; Λ and ζ are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<R> {
    pub kind: LossKind,
    pub iou: R,
    pub lambda: R,
    pub zeta: R,
    pub delta: R,
    pub omega: R,
    /// Euclidean distance between the two centers.
    pub center_distance: R,
    pub total: R,
}

impl<R: Real> LossBreakdown<R> {
    /// Recompute the total from the stored components via the governing
    /// formula of `kind`; must equal `total` exactly.
    pub fn recomposed_total(&self) -> R {
        let one = R::one();
        let half = R::from_f64(0.5);
        match self.kind {
            LossKind::Iou => one - self.iou,
            LossKind::Ciou => one - self.iou + self.delta + self.omega,
            LossKind::Siou => one - self.iou + (self.delta + self.omega) * half,
            LossKind::FineSiou => one - self.iou + (self.zeta + self.delta + self.omega) * half,
        }
    }
}

/// Intersection over union, in [0, 1]. Degenerate (non-overlapping)
/// configurations score 0.
///
/// Areas are computed from the same corner coordinates as the
/// intersection, so identical boxes score exactly 1.
pub fn iou<R: Real>(a: &BBox<R>, b: &BBox<R>) -> R {
    let zero = R::zero();
    let iw = a.x2().min(b.x2()) - a.x1().max(b.x1());
    let ih = a.y2().min(b.y2()) - a.y1().max(b.y1());
    if iw.value() <= 0.0 || ih.value() <= 0.0 {
        return zero;
    }
    let inter = iw * ih;
    let area_a = (a.x2() - a.x1()) * (a.y2() - a.y1());
    let area_b = (b.x2() - b.x1()) * (b.y2() - b.y1());
    inter / (area_a + area_b - inter)
}

/// Width and height of the smallest axis-aligned box covering both inputs.
pub fn enclosing_extents<R: Real>(a: &BBox<R>, b: &BBox<R>) -> (R, R) {
    (
        a.x2().max(b.x2()) - a.x1().min(b.x1()),
        a.y2().max(b.y2()) - a.y1().min(b.y1()),
    )
}

/// Shape cost with max-normalized side mismatches:
/// `Ω = Σ_{t∈{w,h}} (1 − e^{−ω_t})^θ`, `ω_t = |t − t_gt| / max(t, t_gt)`.
pub fn siou_shape_cost<R: Real>(pred: &BBox<R>, gt: &BBox<R>, theta: f64) -> R {
    let ww = (pred.w - gt.w).abs() / pred.w.max(gt.w);
    let wh = (pred.h - gt.h).abs() / pred.h.max(gt.h);
    shape_term(ww, theta) + shape_term(wh, theta)
}

/// Shape cost normalized by the ground-truth sides:
/// `ω_t = |t − t_gt| / t_gt`. Oversized predictions score strictly higher
/// than under the max-normalized variant.
pub fn finesiou_shape_cost<R: Real>(pred: &BBox<R>, gt: &BBox<R>, theta: f64) -> R {
    let ww = (pred.w - gt.w).abs() / gt.w;
    let wh = (pred.h - gt.h).abs() / gt.h;
    shape_term(ww, theta) + shape_term(wh, theta)
}

fn shape_term<R: Real>(omega: R, theta: f64) -> R {
    (R::one() - (-omega).exp()).powf(theta)
}

/// Angle cost `Λ = 1 − 2·sin²(arcsin(b_h/σ) − π/4)` and the center
/// distance σ.
///
/// `b_h` is the absolute vertical center gap, so the elevation angle is
/// folded into [0°, 90°]. Coincident centers and exactly axis-aligned
/// displacements take the constant branch Λ = 0 (the formula's limit along
/// the horizontal approach; both axis alignments are kinks of |·|).
pub fn angle_cost<R: Real>(pred: &BBox<R>, gt: &BBox<R>) -> (R, R) {
    let zero = R::zero();
    let dx = (gt.cx - pred.cx).abs();
    let dy = (gt.cy - pred.cy).abs();
    if dx.value() == 0.0 && dy.value() == 0.0 {
        return (zero, zero);
    }
    let sigma = (dx * dx + dy * dy).sqrt();
    if dx.value() == 0.0 || dy.value() == 0.0 {
        return (zero, sigma);
    }
    let ratio = (dy / sigma).min(R::one());
    let quarter_pi = R::from_f64(std::f64::consts::FRAC_PI_4);
    let s = (ratio.asin() - quarter_pi).sin();
    (R::one() - R::from_f64(2.0) * s * s, sigma)
}

/// Separated angle term `ζ = (1 − e^{−max(0, threshold − Λ)})^η`, in [0, 1).
pub fn zeta_angle_term<R: Real>(lambda: R, eta: f64, threshold: f64) -> R {
    let arg = (R::from_f64(threshold) - lambda).max(R::zero());
    (R::one() - (-arg).exp()).powf(eta)
}

/// Distance cost `Δ = Σ_{t∈{x,y}} (1 − e^{−γ·ρ_t})` with
/// `ρ_x = ((Δcx)/c_w)²`, `ρ_y = ((Δcy)/c_h)²` and γ supplied by the caller
/// (2 − Λ in the standard formulation). Zero enclosing extents give Δ = 0.
pub fn distance_cost<R: Real>(pred: &BBox<R>, gt: &BBox<R>, gamma: R, extents: (R, R)) -> R {
    let (cw, ch) = extents;
    if cw.value() == 0.0 || ch.value() == 0.0 {
        return R::zero();
    }
    let rx = (gt.cx - pred.cx) / cw;
    let ry = (gt.cy - pred.cy) / ch;
    let one = R::one();
    (one - (-(gamma * rx * rx)).exp()) + (one - (-(gamma * ry * ry)).exp())
}

fn siou_family<R: Real>(
    pred: &BBox<R>,
    gt: &BBox<R>,
    params: &LossParams,
    fine: bool,
) -> LossBreakdown<R> {
    let (lambda, sigma) = angle_cost(pred, gt);
    let gamma = if params.fixed_distance_gamma {
        R::from_f64(2.0)
    } else {
        R::from_f64(2.0) - lambda
    };
    let delta = distance_cost(pred, gt, gamma, enclosing_extents(pred, gt));
    let iou_v = iou(pred, gt);
    let one = R::one();
    let half = R::from_f64(0.5);
    if fine {
        let omega = finesiou_shape_cost(pred, gt, params.theta);
        // coincident centers force the separated angle term to zero, so a
        // perfect prediction costs exactly zero
        let zeta = if sigma.value() == 0.0 {
            R::zero()
        } else {
            zeta_angle_term(lambda, params.eta, params.angle_threshold)
        };
        LossBreakdown {
            kind: LossKind::FineSiou,
            iou: iou_v,
            lambda,
            zeta,
            delta,
            omega,
            center_distance: sigma,
            total: one - iou_v + (zeta + delta + omega) * half,
        }
    } else {
        let omega = siou_shape_cost(pred, gt, params.theta);
        LossBreakdown {
            kind: LossKind::Siou,
            iou: iou_v,
            lambda,
            zeta: R::zero(),
            delta,
            omega,
            center_distance: sigma,
            total: one - iou_v + (delta + omega) * half,
        }
    }
}

/// SIOU loss: `1 − IoU + (Δ + Ω)/2`, Λ entering only through γ inside Δ.
pub fn siou_loss<R: Real>(pred: &BBox<R>, gt: &BBox<R>, params: &LossParams) -> LossBreakdown<R> {
    siou_family(pred, gt, params, false)
}

/// FineSIOU loss: `1 − IoU + (ζ + Δ + Ω)/2` with gt-normalized shape cost.
pub fn finesiou_loss<R: Real>(
    pred: &BBox<R>,
    gt: &BBox<R>,
    params: &LossParams,
) -> LossBreakdown<R> {
    siou_family(pred, gt, params, true)
}

/// CIoU loss: `1 − IoU + ρ²/c² + α·v` with the aspect-ratio consistency
/// term `v = (4/π²)(atan(w_gt/h_gt) − atan(w/h))²`, `α = v/(1 − IoU + v)`.
pub fn ciou_loss<R: Real>(pred: &BBox<R>, gt: &BBox<R>) -> LossBreakdown<R> {
    let iou_v = iou(pred, gt);
    let (cw, ch) = enclosing_extents(pred, gt);
    let dx = gt.cx - pred.cx;
    let dy = gt.cy - pred.cy;
    let rho2 = dx * dx + dy * dy;
    let c2 = cw * cw + ch * ch;
    let center_term = if c2.value() == 0.0 {
        R::zero()
    } else {
        rho2 / c2
    };
    let four_over_pi2 = R::from_f64(4.0 / (std::f64::consts::PI * std::f64::consts::PI));
    let da = (gt.w / gt.h).atan() - (pred.w / pred.h).atan();
    let v = four_over_pi2 * da * da;
    let one = R::one();
    let denom = one - iou_v + v;
    // v = 0 and IoU = 1 simultaneously only at a perfect box: no aspect term
    let aspect = if denom.value() == 0.0 {
        R::zero()
    } else {
        v / denom * v
    };
    LossBreakdown {
        kind: LossKind::Ciou,
        iou: iou_v,
        lambda: R::zero(),
        zeta: R::zero(),
        delta: center_term,
        omega: aspect,
        center_distance: rho2.sqrt(),
        total: one - iou_v + center_term + aspect,
    }
}

/// Evaluate any loss kind into a breakdown.
pub fn eval_loss<R: Real>(
    kind: LossKind,
    pred: &BBox<R>,
    gt: &BBox<R>,
    params: &LossParams,
) -> LossBreakdown<R> {
    match kind {
        LossKind::Iou => {
            let iou_v = iou(pred, gt);
            let (lambda, sigma) = angle_cost(pred, gt);
            LossBreakdown {
                kind,
                iou: iou_v,
                lambda,
                zeta: R::zero(),
                delta: R::zero(),
                omega: R::zero(),
                center_distance: sigma,
                total: R::one() - iou_v,
            }
        }
        LossKind::Ciou => ciou_loss(pred, gt),
        LossKind::Siou => siou_loss(pred, gt, params),
        LossKind::FineSiou => finesiou_loss(pred, gt, params),
    }
}

/// Gradient of the selected loss total with respect to the predicted box's
/// (cx, cy, w, h), by forward-mode dual evaluation.
pub fn loss_grad(
    kind: LossKind,
    pred: &BBox<f64>,
    gt: &BBox<f64>,
    params: &LossParams,
) -> [f64; 4] {
    eval_loss(kind, &pred.as_dual_vars(), &gt.as_dual_consts(), params)
        .total
        .grad()
}

/// One computed row of the shape-cost example table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeTableRow {
    pub gt_w: f64,
    pub gt_h: f64,
    pub pred_w: f64,
    pub pred_h: f64,
    pub omega_w_siou: f64,
    pub omega_w_fine: f64,
    pub omega_h_siou: f64,
    pub omega_h_fine: f64,
    pub omega_siou: f64,
    pub omega_fine: f64,
}

/// Compute the bundled shape-cost example rows at a given θ.
pub fn shape_cost_table(theta: f64) -> Vec<ShapeTableRow> {
    crate::reference::SHAPE_COST_EXAMPLES
        .iter()
        .map(|ex| {
            let gt = BBox::<f64>::new(0.0, 0.0, ex.gt_w, ex.gt_h);
            let pred = BBox::<f64>::new(0.0, 0.0, ex.pred_w, ex.pred_h);
            ShapeTableRow {
                gt_w: ex.gt_w,
                gt_h: ex.gt_h,
                pred_w: ex.pred_w,
                pred_h: ex.pred_h,
                omega_w_siou: (ex.pred_w - ex.gt_w).abs() / ex.pred_w.max(ex.gt_w),
                omega_w_fine: (ex.pred_w - ex.gt_w).abs() / ex.gt_w,
                omega_h_siou: (ex.pred_h - ex.gt_h).abs() / ex.pred_h.max(ex.gt_h),
                omega_h_fine: (ex.pred_h - ex.gt_h).abs() / ex.gt_h,
                omega_siou: siou_shape_cost(&pred, &gt, theta),
                omega_fine: finesiou_shape_cost(&pred, &gt, theta),
            }
        })
        .collect()
}

/// CSV emission of the shape-cost table.
pub fn shape_table_csv(rows: &[ShapeTableRow]) -> String {
    let mut out = String::from(
        "wgt,hgt,w,h,omega_w_siou,omega_w_fine,omega_h_siou,omega_h_fine,Omega_siou,Omega_fine\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            crate::fmt::sig6(r.gt_w),
            crate::fmt::sig6(r.gt_h),
            crate::fmt::sig6(r.pred_w),
            crate::fmt::sig6(r.pred_h),
            crate::fmt::sig6(r.omega_w_siou),
            crate::fmt::sig6(r.omega_w_fine),
            crate::fmt::sig6(r.omega_h_siou),
            crate::fmt::sig6(r.omega_h_fine),
            crate::fmt::sig6(r.omega_siou),
            crate::fmt::sig6(r.omega_fine),
        ));
    }
    out
}

/// Maximum absolute deviation of the computed Ω columns from the printed
/// cells at a given θ, skipping the one formula-inconsistent cell.
pub fn shape_table_max_deviation(theta: f64) -> f64 {
    use crate::reference::{CellPrinting, SHAPE_COST_EXAMPLES};
    let rows = shape_cost_table(theta);
    let mut max_dev = 0.0f64;
    for (row, ex) in rows.iter().zip(SHAPE_COST_EXAMPLES.iter()) {
        if ex.siou_printing != CellPrinting::Inconsistent {
            max_dev = max_dev.max((row.omega_siou - ex.printed_omega_siou).abs());
        }
        if ex.fine_printing != CellPrinting::Inconsistent {
            max_dev = max_dev.max((row.omega_fine - ex.printed_omega_fine).abs());
        }
    }
    max_dev
}

/// Sweep integer θ values, returning (θ, max deviation) pairs.
pub fn theta_sweep(thetas: std::ops::RangeInclusive<u32>) -> Vec<(u32, f64)> {
    thetas
        .map(|t| (t, shape_table_max_deviation(t as f64)))
        .collect()
}

/// Worst per-coordinate relative error between two gradients.
///
/// The denominator is floored at 1e-6: central differences on an O(1)
/// function carry ~1e-10 of absolute rounding noise (machine epsilon over
/// the step), so components below the floor are effectively compared
/// absolutely at that noise level, far tighter than the 1e-4 gate.
pub fn gradient_rel_err(analytic: &[f64; 4], reference: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Draw a (pred, gt) pair in unit-image coordinates, rejecting every
/// configuration where the losses are non-smooth or finite differencing is
/// curvature-limited: coincident or axis-aligned centers, near-equal
/// sides (the max-normalizer switch), the angle-threshold clamp, touching
/// overlap boundaries, and near-identical boxes.
///
/// Returns `None` on a rejected draw so callers can count redraws.
pub fn sample_generic_pair<R: rand::Rng>(rng: &mut R) -> Option<(BBox<f64>, BBox<f64>)> {
    let mut draw = |_: ()| -> BBox<f64> {
        BBox::new(
            0.2 + 0.6 * rng.gen::<f64>(),
            0.2 + 0.6 * rng.gen::<f64>(),
            0.05 + 0.35 * rng.gen::<f64>(),
            0.05 + 0.35 * rng.gen::<f64>(),
        )
    };
    let pred = draw(());
    let gt = draw(());
    let dx = (pred.cx - gt.cx).abs();
    let dy = (pred.cy - gt.cy).abs();
    if dx < 1e-3 || dy < 1e-3 {
        return None;
    }
    if (pred.w - gt.w).abs() < 1e-3 || (pred.h - gt.h).abs() < 1e-3 {
        return None;
    }
    let (lambda, _) = angle_cost(&pred, &gt);
    if (lambda - ANGLE_THRESHOLD).abs() < 1e-3 {
        return None;
    }
    let iw = pred.x2().min(gt.x2()) - pred.x1().max(gt.x1());
    let ih = pred.y2().min(gt.y2()) - pred.y1().max(gt.y1());
    if iw.abs() < 1e-3 || ih.abs() < 1e-3 {
        return None;
    }
    if iou(&pred, &gt) > 0.95 {
        return None;
    }
    Some((pred, gt))
}

/// Smallest box side the regression simulator will shrink to.
pub const MIN_BOX_SIDE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Total dropped below tolerance at this step.
    Converged(usize),
    /// Step budget exhausted before reaching tolerance.
    Exhausted,
    /// Total exceeded 10× its initial value at this step.
    Diverged(usize),
}

#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub step: usize,
    pub pred: BBox<f64>,
    pub breakdown: LossBreakdown<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: LossKind,
    pub steps: Vec<TrajectoryStep>,
    pub outcome: Outcome,
    /// Step indices where the total increased over the previous step.
    pub monotone_violations: Vec<usize>,
}

impl Trajectory {
    pub fn initial(&self) -> &LossBreakdown<f64> {
        &self.steps[0].breakdown
    }

    pub fn steps_to_tolerance(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Converged(n) => Some(n),
            _ => None,
        }
    }
}

/// Plain gradient descent of `pred` toward `target` under a loss kind.
///
/// Divergence (total exceeding 10× the initial value) is reported in the
/// outcome, not raised; monotonicity violations are recorded per step.
pub fn regression_sim(
    init: &BBox<f64>,
    target: &BBox<f64>,
    kind: LossKind,
    params: &LossParams,
    step_size: f64,
    max_steps: usize,
    tol: f64,
) -> Result<Trajectory> {
    if step_size <= 0.0 {
        return Err(CoreError::invalid("step size must be positive"));
    }
    if !init.is_valid() || !target.is_valid() {
        return Err(CoreError::invalid("boxes must have positive extent"));
    }
    let mut pred = *init;
    let first = eval_loss(kind, &pred, target, params);
    let initial_total = first.total;
    let mut steps = vec![TrajectoryStep {
        step: 0,
        pred,
        breakdown: first,
    }];
    let mut violations = Vec::new();
    if initial_total < tol {
        return Ok(Trajectory {
            kind,
            steps,
            outcome: Outcome::Converged(0),
            monotone_violations: violations,
        });
    }
    let mut prev_total = initial_total;
    for step in 1..=max_steps {
        let g = loss_grad(kind, &pred, target, params);
        pred = BBox {
            cx: pred.cx - step_size * g[0],
            cy: pred.cy - step_size * g[1],
            w: (pred.w - step_size * g[2]).max(MIN_BOX_SIDE),
            h: (pred.h - step_size * g[3]).max(MIN_BOX_SIDE),
        };
        let b = eval_loss(kind, &pred, target, params);
        let total = b.total;
        steps.push(TrajectoryStep {
            step,
            pred,
            breakdown: b,
        });
        if total > prev_total {
            violations.push(step);
        }
        if total > 10.0 * initial_total {
            return Ok(Trajectory {
                kind,
                steps,
                outcome: Outcome::Diverged(step),
                monotone_violations: violations,
            });
        }
        if total < tol {
            return Ok(Trajectory {
                kind,
                steps,
                outcome: Outcome::Converged(step),
                monotone_violations: violations,
            });
        }
        prev_total = total;
    }
    Ok(Trajectory {
        kind,
        steps,
        outcome: Outcome::Exhausted,
        monotone_violations: violations,
    })
}
