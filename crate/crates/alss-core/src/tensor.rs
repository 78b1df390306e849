//! Dense rank-4 tensors and the parameter records of conv/norm layers.
//!
//! Layout is batch → channel → height → width, row-major. All dimension
//! counts are at least 1 and `data.len()` always equals `n·c·h·w`.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Dense rank-4 array in batch/channel/height/width order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<S> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor4<S> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        assert!(
            n >= 1 && c >= 1 && h >= 1 && w >= 1,
            "all dims must be >= 1"
        );
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![S::zero(); n * c * h * w],
        }
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: S) -> Self {
        let mut t = Self::zeros(n, c, h, w);
        t.data.fill(value);
        t
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<S>) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(CoreError::invalid("all dims must be >= 1"));
        }
        if data.len() != n * c * h * w {
            return Err(CoreError::shape(format!(
                "data length {} does not match {n}x{c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    /// Uniform values in [-0.5, 0.5), deterministic for a given rng state.
    pub fn random<R: Rng>(n: usize, c: usize, h: usize, w: usize, rng: &mut R) -> Self {
        let data = (0..n * c * h * w)
            .map(|_| S::from_f64(rng.gen::<f64>() - 0.5))
            .collect();
        Tensor4 { n, c, h, w, data }
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.w
    }

    /// (batch, channels, height, width)
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    /// (channels, height, width), the per-sample shape used in audits.
    pub fn chw(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline(always)]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.c + c) * self.h + y) * self.w + x
    }

    #[inline(always)]
    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> S {
        self.data[self.index(b, c, y, x)]
    }

    #[inline(always)]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: S) {
        let i = self.index(b, c, y, x);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// The contiguous h·w plane of one (batch, channel) pair.
    pub fn plane(&self, b: usize, c: usize) -> &[S] {
        let start = (b * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v.as_f64()).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.data.iter()
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.as_f64().abs())
            .fold(0.0, f64::max)
    }
}

/// Grouped 2-D convolution parameters.
///
/// Weights are stored `[out_ch][in_ch/groups][k][k]` row-major; depthwise
/// is `groups == in_channels == out_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<S> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub weights: Vec<S>,
    pub bias: Option<Vec<S>>,
}

impl<S: Scalar> ConvParams<S> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || groups == 0 {
            return Err(CoreError::invalid("conv dims must be >= 1"));
        }
        if in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(CoreError::GroupMismatch {
                groups,
                channels: if in_channels % groups != 0 {
                    in_channels
                } else {
                    out_channels
                },
            });
        }
        let weights = vec![S::zero(); out_channels * (in_channels / groups) * kernel * kernel];
        Ok(ConvParams {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
            weights,
            bias: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<S>) -> Result<Self> {
        if weights.len() != self.weight_count() {
            return Err(CoreError::shape(format!(
                "expected {} weights, got {}",
                self.weight_count(),
                weights.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_bias(mut self, bias: Vec<S>) -> Result<Self> {
        if bias.len() != self.out_channels {
            return Err(CoreError::shape(format!(
                "expected {} bias values, got {}",
                self.out_channels,
                bias.len()
            )));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * (self.in_channels / self.groups) * self.kernel * self.kernel
    }

    /// Trainable parameter count: weights plus bias when present.
    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias.as_ref().map_or(0, Vec::len)
    }

    /// Output spatial size for an input extent, or None when empty.
    pub fn out_extent(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Deterministic init: uniform in ±1/sqrt(fan_in), bias (if any) in ±0.1.
    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = (self.in_channels / self.groups * self.kernel * self.kernel) as f64;
        let bound = fan_in.sqrt().recip();
        for w in &mut self.weights {
            *w = S::from_f64((rng.gen::<f64>() * 2.0 - 1.0) * bound);
        }
        if let Some(b) = &mut self.bias {
            for v in b {
                *v = S::from_f64((rng.gen::<f64>() * 2.0 - 1.0) * 0.1);
            }
        }
    }
}

/// Inference-mode batch-norm parameters (one value per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams<S> {
    pub scale: Vec<S>,
    pub shift: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub eps: f64,
}

impl<S: Scalar> BnParams<S> {
    /// Identity transform over `channels` (scale 1, shift 0, mean 0, var 1).
    pub fn identity(channels: usize) -> Self {
        BnParams {
            scale: vec![S::one(); channels],
            shift: vec![S::zero(); channels],
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.scale.len();
        if self.shift.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(CoreError::shape("batch-norm vectors differ in length"));
        }
        if self.eps <= 0.0 {
            return Err(CoreError::invalid("bn eps must be > 0"));
        }
        if self.running_var.iter().any(|v| v.as_f64() < 0.0) {
            return Err(CoreError::invalid("bn running_var must be >= 0"));
        }
        Ok(())
    }

    /// Counted parameters: scale and shift only (running stats excluded).
    pub fn param_count(&self) -> usize {
        2 * self.channels()
    }

    /// Deterministic init with non-trivial statistics so fusion tests bite.
    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        for v in &mut self.scale {
            *v = S::from_f64(0.5 + rng.gen::<f64>());
        }
        for v in &mut self.shift {
            *v = S::from_f64(rng.gen::<f64>() - 0.5);
        }
        for v in &mut self.running_mean {
            *v = S::from_f64(rng.gen::<f64>() - 0.5);
        }
        for v in &mut self.running_var {
            *v = S::from_f64(0.25 + rng.gen::<f64>());
        }
    }
}
