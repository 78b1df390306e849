//! Reference data bundled with the crate: the printed per-layer table of
//! the detector (module kinds, output shapes, parameter counts and totals),
//! the split/bottleneck coefficient schedules, and the printed shape-cost
//! example table the loss suite reproduces.
//!
//! Two cells of the printed material are internally inconsistent and are
//! *reported*, never forced:
//!
//! - layer 19's output is printed as 136×40×40, but its concat inputs sum
//!   to 56 + 88 = 144 and layer 20's printed parameter count (120484) is
//!   only reachable with 144 input channels;
//! - one shape-cost cell prints 0.0967 where the governing formula gives
//!   0.1761 (the value printed for the neighbouring column).
//!
//! Additionally, two shape-cost cells print truncated rather than rounded
//! digits (0.0167 for a computed 0.016779...).

use crate::ratio::Ratio;

/// One row of the printed per-layer table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceLayer {
    pub index: usize,
    pub kind: &'static str,
    /// Printed output shape (channels, height, width); `None` where the
    /// table prints "-".
    pub printed_output: Option<(usize, usize, usize)>,
    /// Printed parameter count; `None` where the table prints "-".
    pub printed_params: Option<u64>,
}

const fn row(
    index: usize,
    kind: &'static str,
    printed_output: Option<(usize, usize, usize)>,
    printed_params: Option<u64>,
) -> ReferenceLayer {
    ReferenceLayer {
        index,
        kind,
        printed_output,
        printed_params,
    }
}

/// The 26 printed layer rows, verbatim (including the inconsistent
/// 136×40×40 at index 19; see the module docs).
pub const REFERENCE_LAYERS: [ReferenceLayer; 26] = [
    row(0, "Input", Some((1, 640, 640)), None),
    row(1, "Focus", Some((8, 160, 160)), Some(1168)),
    row(2, "CBS", Some((16, 160, 160)), Some(1184)),
    row(3, "CBS", Some((24, 160, 160)), Some(3504)),
    row(4, "ALSS", Some((24, 80, 80)), Some(1728)),
    row(5, "ALSS", Some((48, 80, 80)), Some(3819)),
    row(6, "ALSS", Some((88, 40, 40)), Some(15020)),
    row(7, "ALSS", Some((88, 40, 40)), Some(38393)),
    row(8, "ALSS", Some((176, 20, 20)), Some(54497)),
    row(9, "SPPF", Some((176, 20, 20)), Some(77968)),
    row(10, "Upsample", Some((176, 40, 40)), Some(0)),
    row(11, "Concat", Some((264, 40, 40)), Some(0)),
    row(12, "ALSS", Some((88, 40, 40)), Some(379477)),
    row(13, "Upsample", Some((88, 80, 80)), Some(0)),
    row(14, "Concat", Some((136, 80, 80)), Some(0)),
    row(15, "LCA", Some((136, 80, 80)), Some(19448)),
    row(16, "ALSS", Some((56, 80, 80)), Some(77628)),
    row(17, "MaxPool", Some((56, 40, 40)), Some(0)),
    row(18, "CB", Some((56, 40, 40)), Some(3248)),
    row(19, "Concat", Some((136, 40, 40)), Some(0)),
    row(20, "ALSS", Some((56, 40, 40)), Some(120484)),
    row(21, "MaxPool", Some((56, 20, 20)), Some(0)),
    row(22, "CB", Some((56, 20, 20)), Some(3248)),
    row(23, "Concat", Some((232, 20, 20)), Some(0)),
    row(24, "ALSS", Some((56, 20, 20)), Some(263016)),
    row(25, "Detect", None, Some(391324)),
];

/// Printed parameter total of the reference build.
pub const PRINTED_TOTAL_PARAMS: u64 = 1_455_154;
/// Printed parameter total after conv/norm layer fusion.
pub const PRINTED_FUSED_TOTAL_PARAMS: u64 = 1_452_413;

/// The single layer whose printed output shape contradicts the printed
/// wiring and parameter counts (136 printed, 144 reconstructed).
pub const INCONSISTENT_SHAPE_LAYER: usize = 19;
/// The channel count forced at layer 19 by layer 20's printed parameters.
pub const RECONSTRUCTED_LAYER19_CHANNELS: usize = 144;

/// Split coefficients of the nine split-and-shuffle layers, bottom to top.
pub fn alpha_schedule() -> [Ratio; 9] {
    [
        Ratio::new(2, 5),
        Ratio::new(2, 5),
        Ratio::new(1, 2),
        Ratio::new(3, 5),
        Ratio::new(7, 10),
        Ratio::new(1, 5),
        Ratio::new(3, 10),
        Ratio::new(1, 5),
        Ratio::new(1, 5),
    ]
}

/// Bottleneck coefficients of the nine split-and-shuffle layers.
pub fn beta_schedule() -> [Ratio; 9] {
    [
        Ratio::new(2, 5),
        Ratio::new(2, 5),
        Ratio::new(1, 2),
        Ratio::new(3, 5),
        Ratio::new(3, 5),
        Ratio::new(4, 5),
        Ratio::new(4, 5),
        Ratio::new(4, 5),
        Ratio::new(4, 5),
    ]
}

/// Node indices of the split-and-shuffle layers, in schedule order.
pub const ALSS_NODE_INDICES: [usize; 9] = [4, 5, 6, 7, 8, 12, 16, 20, 24];

/// How a printed shape-cost cell relates to the governing formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellPrinting {
    /// Printed value is the computed value rounded to 4 decimals.
    Rounded,
    /// Printed value is the computed value truncated to 4 decimals.
    Truncated,
    /// Printed value cannot be reconciled with the formula.
    Inconsistent,
}

/// One row of the printed shape-cost example table (gt sides, predicted
/// sides, and the two printed Ω columns at θ = 3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeCostExample {
    pub gt_w: f64,
    pub gt_h: f64,
    pub pred_w: f64,
    pub pred_h: f64,
    pub printed_omega_siou: f64,
    pub printed_omega_fine: f64,
    pub siou_printing: CellPrinting,
    pub fine_printing: CellPrinting,
}

/// Exponent that reproduces the printed Ω columns.
pub const SHAPE_TABLE_THETA: f64 = 3.0;

/// The eight printed examples. Row 1's Ω(SIOU) cell prints 0.0967 while
/// the formula on its own printed ω = (2/3, 1/2) gives 0.1761; rows 6 and
/// 7 print Ω(SIOU) truncated (0.0167 for 0.016779…).
pub const SHAPE_COST_EXAMPLES: [ShapeCostExample; 8] = [
    ShapeCostExample {
        gt_w: 30.0,
        gt_h: 40.0,
        pred_w: 50.0,
        pred_h: 60.0,
        printed_omega_siou: 0.0586,
        printed_omega_fine: 0.1761,
        siou_printing: CellPrinting::Rounded,
        fine_printing: CellPrinting::Rounded,
    },
    ShapeCostExample {
        gt_w: 30.0,
        gt_h: 40.0,
        pred_w: 10.0,
        pred_h: 20.0,
        printed_omega_siou: 0.0967,
        printed_omega_fine: 0.1761,
        siou_printing: CellPrinting::Inconsistent,
        fine_printing: CellPrinting::Rounded,
    },
    ShapeCostExample {
        gt_w: 40.0,
        gt_h: 30.0,
        pred_w: 60.0,
        pred_h: 50.0,
        printed_omega_siou: 0.0586,
        printed_omega_fine: 0.1761,
        siou_printing: CellPrinting::Rounded,
        fine_printing: CellPrinting::Rounded,
    },
    ShapeCostExample {
        gt_w: 50.0,
        gt_h: 60.0,
        pred_w: 30.0,
        pred_h: 40.0,
        printed_omega_siou: 0.0586,
        printed_omega_fine: 0.0586,
        siou_printing: CellPrinting::Rounded,
        fine_printing: CellPrinting::Rounded,
    },
    ShapeCostExample {
        gt_w: 60.0,
        gt_h: 80.0,
        pred_w: 80.0,
        pred_h: 100.0,
        printed_omega_siou: 0.0168,
        printed_omega_fine: 0.0336,
        siou_printing: CellPrinting::Rounded,
        fine_printing: CellPrinting::Rounded,
    },
    ShapeCostExample {
        gt_w: 60.0,
        gt_h: 80.0,
        pred_w: 40.0,
        pred_h: 60.0,
        printed_omega_siou: 0.0336,
        printed_omega_fine: 0.0336,
        siou_printing: CellPrinting::Rounded,
        fine_printing: CellPrinting::Rounded,
    },
    ShapeCostExample {
        gt_w: 80.0,
        gt_h: 60.0,
        pred_w: 100.0,
        pred_h: 80.0,
        printed_omega_siou: 0.0167,
        printed_omega_fine: 0.0336,
        siou_printing: CellPrinting::Truncated,
        fine_printing: CellPrinting::Rounded,
    },
    ShapeCostExample {
        gt_w: 80.0,
        gt_h: 100.0,
        pred_w: 60.0,
        pred_h: 80.0,
        printed_omega_siou: 0.0167,
        printed_omega_fine: 0.0168,
        siou_printing: CellPrinting::Truncated,
        fine_printing: CellPrinting::Rounded,
    },
];

/// Tolerance for a correctly rounded 4-decimal cell.
pub const ROUNDED_CELL_TOL: f64 = 5e-5;
/// One print-ulp at 4 decimals; bound for truncated cells.
pub const PRINT_ULP: f64 = 1e-4;

/// Truncate toward zero at 4 decimals, the printing used by the truncated
/// cells.
pub fn trunc4(x: f64) -> f64 {
    (x * 1e4).trunc() / 1e4
}
