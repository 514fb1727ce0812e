//! Dense `[batch, channels, length]` tensors and the 1-D convolution kernels.
//!
//! The convolution is a cross-correlation with symmetric zero padding. Its
//! adjoint (the "transposed convolution") is computed from the same weights
//! and takes the original input length explicitly, so every strided
//! convolution has exactly one transpose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: [usize; 3],
    data: Vec<F>,
    grad: Option<Vec<F>>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: [usize; 3], data: Vec<F>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![F::zero(); shape.iter().product()],
            grad: None,
        }
    }

    pub fn full(shape: [usize; 3], value: F) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
            grad: None,
        }
    }

    pub fn scalar(value: F) -> Self {
        Self::full([1, 1, 1], value)
    }

    pub fn from_fn(shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for b in 0..shape[0] {
            for c in 0..shape[1] {
                for t in 0..shape[2] {
                    data.push(f(b, c, t));
                }
            }
        }
        Self {
            shape,
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn length(&self) -> usize {
        self.shape[2]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn get(&self, b: usize, c: usize, t: usize) -> F {
        self.data[(b * self.shape[1] + c) * self.shape[2] + t]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> F {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [F] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![F::zero(); n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[F]) {
        debug_assert_eq!(delta.len(), self.data.len());
        for (g, d) in self.grad_mut().iter_mut().zip(delta) {
            *g += *d;
        }
    }

    pub fn reshape(mut self, shape: [usize; 3]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn dot(&self, other: &Self) -> F {
        assert_eq!(self.shape, other.shape, "dot on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| G::from_f64_lossy(v.as_f64()))
                .collect(),
            grad: None,
        }
    }

    /// Rows `b` of the batch, in the given order.
    pub fn gather(&self, rows: &[usize]) -> Result<Self> {
        let per = self.shape[1] * self.shape[2];
        let mut data = Vec::with_capacity(rows.len() * per);
        for &r in rows {
            if r >= self.shape[0] {
                return Err(Error::invalid(format!(
                    "batch index {r} out of range for batch of {}",
                    self.shape[0]
                )));
            }
            data.extend_from_slice(&self.data[r * per..(r + 1) * per]);
        }
        Tensor::new([rows.len(), self.shape[1], self.shape[2]], data)
    }

    /// Concatenates along the batch axis.
    pub fn concat_batch(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let [_, c, l] = first.shape;
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            if p.shape[1] != c || p.shape[2] != l {
                return Err(Error::invalid(format!(
                    "concat shape mismatch: {:?} vs {:?}",
                    p.shape, first.shape
                )));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Tensor::new([n, c, l], data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let spec = Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("conv channel counts must be positive"));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel_size must be odd and positive, got {}",
                self.kernel_size
            )));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        Ok(())
    }

    /// Output length for an input of `len` samples.
    pub fn output_len(&self, len: usize) -> Result<usize> {
        let padded = len + 2 * self.padding;
        if padded < self.kernel_size {
            return Err(Error::invalid(format!(
                "length: input of {len} samples (padding {}) is shorter than kernel {}",
                self.padding, self.kernel_size
            )));
        }
        Ok((padded - self.kernel_size) / self.stride + 1)
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels, self.kernel_size]
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_size
    }
}

fn check_weights<F>(w: &[F], spec: &ConvSpec) -> Result<()> {
    if w.len() != spec.weight_len() {
        return Err(Error::invalid(format!(
            "kernel: expected {} weights for {:?}, got {}",
            spec.weight_len(),
            spec.weight_shape(),
            w.len()
        )));
    }
    Ok(())
}

/// Unfolds one batch row `x` (C×L) into a (C·K)×Lout column matrix.
fn im2col<F: Real>(x: &[F], len: usize, lout: usize, spec: &ConvSpec, col: &mut [F]) {
    let k = spec.kernel_size;
    let (s, p) = (spec.stride, spec.padding as isize);
    for c in 0..spec.in_channels {
        let xc = &x[c * len..(c + 1) * len];
        for kk in 0..k {
            let row = &mut col[(c * k + kk) * lout..(c * k + kk + 1) * lout];
            for (t, out) in row.iter_mut().enumerate() {
                let idx = (t * s) as isize + kk as isize - p;
                *out = if idx >= 0 && (idx as usize) < len {
                    xc[idx as usize]
                } else {
                    F::zero()
                };
            }
        }
    }
}

/// Scatter-adds a (C·K)×Lout column matrix back into a C×L row.
fn col2im<F: Real>(col: &[F], len: usize, lout: usize, spec: &ConvSpec, x: &mut [F]) {
    let k = spec.kernel_size;
    let (s, p) = (spec.stride, spec.padding as isize);
    for c in 0..spec.in_channels {
        let xc = &mut x[c * len..(c + 1) * len];
        for kk in 0..k {
            let row = &col[(c * k + kk) * lout..(c * k + kk + 1) * lout];
            for (t, &v) in row.iter().enumerate() {
                let idx = (t * s) as isize + kk as isize - p;
                if idx >= 0 && (idx as usize) < len {
                    xc[idx as usize] += v;
                }
            }
        }
    }
}

/// Cross-correlation of `x` with kernel `w` (`[out, in, k]` row-major) plus an
/// optional per-output-channel bias.
pub fn conv1d<F: Real>(
    x: &Tensor<F>,
    w: &[F],
    bias: Option<&[F]>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    spec.validate()?;
    check_weights(w, spec)?;
    let [n, c, len] = x.shape();
    if c != spec.in_channels {
        return Err(Error::invalid(format!(
            "channels: input has {c}, conv expects {}",
            spec.in_channels
        )));
    }
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(Error::invalid(format!(
                "bias: expected {} entries, got {}",
                spec.out_channels,
                b.len()
            )));
        }
    }
    let lout = spec.output_len(len)?;
    let ck = c * spec.kernel_size;
    let o = spec.out_channels;
    let mut out = vec![F::zero(); n * o * lout];
    let mut col = vec![F::zero(); ck * lout];
    for b in 0..n {
        im2col(&x.data()[b * c * len..(b + 1) * c * len], len, lout, spec, &mut col);
        let yb = &mut out[b * o * lout..(b + 1) * o * lout];
        F::gemm(o, ck, lout, F::one(), w, ck, 1, &col, lout, 1, F::zero(), yb, lout, 1);
        if let Some(bias) = bias {
            for (oc, row) in yb.chunks_mut(lout).enumerate() {
                let bv = bias[oc];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new([n, o, lout], out)
}

/// Exact adjoint of the bias-free part of [`conv1d`] for inputs of
/// `original_input_length` samples.
pub fn conv1d_adjoint<F: Real>(
    y: &Tensor<F>,
    w: &[F],
    spec: &ConvSpec,
    original_input_length: usize,
) -> Result<Tensor<F>> {
    spec.validate()?;
    check_weights(w, spec)?;
    let [n, o, lout] = y.shape();
    if o != spec.out_channels {
        return Err(Error::invalid(format!(
            "channels: adjoint input has {o}, conv produces {}",
            spec.out_channels
        )));
    }
    let expected = spec.output_len(original_input_length)?;
    if lout != expected {
        return Err(Error::invalid(format!(
            "length: adjoint input has {lout} samples but conv of {original_input_length} produces {expected}"
        )));
    }
    let c = spec.in_channels;
    let len = original_input_length;
    let ck = c * spec.kernel_size;
    let mut out = vec![F::zero(); n * c * len];
    let mut col = vec![F::zero(); ck * lout];
    for b in 0..n {
        let yb = &y.data()[b * o * lout..(b + 1) * o * lout];
        // col = Wᵀ · y_b, with Wᵀ read through swapped strides
        F::gemm(ck, o, lout, F::one(), w, 1, ck, yb, lout, 1, F::zero(), &mut col, lout, 1);
        col2im(&col, len, lout, spec, &mut out[b * c * len..(b + 1) * c * len]);
    }
    Tensor::new([n, c, len], out)
}

/// Accumulates `∂⟨conv1d(x, w), dy⟩/∂w` into `dw`.
pub fn conv1d_weight_grad<F: Real>(x: &Tensor<F>, dy: &Tensor<F>, spec: &ConvSpec, dw: &mut [F]) {
    let [n, c, len] = x.shape();
    let [_, o, lout] = dy.shape();
    debug_assert_eq!(dw.len(), spec.weight_len());
    let ck = c * spec.kernel_size;
    let mut col = vec![F::zero(); ck * lout];
    for b in 0..n {
        im2col(&x.data()[b * c * len..(b + 1) * c * len], len, lout, spec, &mut col);
        let dyb = &dy.data()[b * o * lout..(b + 1) * o * lout];
        F::gemm(o, lout, ck, F::one(), dyb, lout, 1, &col, 1, lout, F::one(), dw, ck, 1);
    }
}

/// Per-channel sum over batch and length.
pub fn channel_sums<F: Real>(t: &Tensor<F>) -> Vec<F> {
    let [n, c, len] = t.shape();
    let mut out = vec![F::zero(); c];
    for b in 0..n {
        for (ch, acc) in out.iter_mut().enumerate() {
            let row = &t.data()[(b * c + ch) * len..(b * c + ch + 1) * len];
            *acc += row.iter().copied().sum::<F>();
        }
    }
    out
}

pub fn leaky_relu<F: Real>(x: &Tensor<F>, slope: F) -> Tensor<F> {
    x.map(|v| if v > F::zero() { v } else { slope * v })
}

/// Derivative used by the tape: 1 for positive inputs, `slope` otherwise
/// (including exactly zero).
pub fn leaky_relu_derivative<F: Real>(v: F, slope: F) -> F {
    if v > F::zero() {
        F::one()
    } else {
        slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor<f64> {
        Tensor::new([1, 1, data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_same_padding() {
        let spec = ConvSpec::new(1, 1, 3, 1, 1).unwrap();
        let y = conv1d(&t(&[1.0, 2.0, 3.0]), &[0.0, 1.0, 0.0], None, &spec).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn sliding_dot_product() {
        // Even kernels are outside the public contract; build the spec by hand.
        let spec = ConvSpec {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 2,
            stride: 1,
            padding: 0,
        };
        let mut y = vec![0.0; 2];
        let x = [1.0, 2.0, 3.0];
        let w = [1.0, 1.0];
        // direct oracle
        for (i, out) in y.iter_mut().enumerate() {
            *out = w[0] * x[i] + w[1] * x[i + 1];
        }
        assert_eq!(y, vec![3.0, 5.0]);
        let mut col = vec![0.0; 4];
        im2col(&x, 3, 2, &spec, &mut col);
        let mut out = vec![0.0; 2];
        f64::gemm(1, 2, 2, 1.0, &w, 2, 1, &col, 2, 1, 0.0, &mut out, 2, 1);
        assert_eq!(out, y);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let spec = ConvSpec::new(2, 3, 5, 2, 2).unwrap();
        let w: Vec<f64> = (0..spec.weight_len()).map(|i| i as f64 * 0.1 - 1.0).collect();
        let x = Tensor::zeros([2, 2, 11]);
        let y = conv1d(&x, &w, None, &spec).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let z = conv1d_adjoint(&Tensor::zeros(y.shape()), &w, &spec, 11).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_adjoint_is_identity() {
        let spec = ConvSpec::new(1, 1, 3, 1, 1).unwrap();
        let y = conv1d_adjoint(&t(&[4.0, -1.0, 2.5]), &[0.0, 1.0, 0.0], &spec, 3).unwrap();
        assert_eq!(y.data(), &[4.0, -1.0, 2.5]);
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let spec = ConvSpec::new(2, 1, 3, 1, 1).unwrap();
        let err = conv1d(&t(&[1.0, 2.0, 3.0]), &[0.0; 6], None, &spec).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }

    #[test]
    fn adjoint_rejects_inconsistent_length() {
        let spec = ConvSpec::new(1, 1, 15, 2, 7).unwrap();
        let y = Tensor::<f64>::zeros([1, 1, 125]);
        assert!(conv1d_adjoint(&y, &[0.0; 15], &spec, 250).is_ok());
        // 249 also maps to 125, so both are valid originals
        assert_eq!(conv1d_adjoint(&y, &[0.0; 15], &spec, 249).unwrap().length(), 249);
        assert!(conv1d_adjoint(&y, &[0.0; 15], &spec, 260).is_err());
    }

    #[test]
    fn output_length_formula() {
        let spec = ConvSpec::new(1, 16, 15, 2, 7).unwrap();
        assert_eq!(spec.output_len(250).unwrap(), 125);
        assert!(ConvSpec::new(1, 1, 4, 1, 0).is_err());
        assert!(ConvSpec::new(1, 1, 5, 1, 0).unwrap().output_len(4).is_err());
    }

    #[test]
    fn leaky_relu_cases() {
        let x = t(&[-1.0, 0.0, 2.0]);
        assert_eq!(leaky_relu(&x, 0.2).data(), &[-0.2, 0.0, 2.0]);
        assert_eq!(leaky_relu(&x, 1.0).data(), x.data());
        assert_eq!(leaky_relu(&t(&[-3.0, 3.0]), 0.0).data(), &[0.0, 3.0]);
        assert_eq!(leaky_relu_derivative(0.0, 0.2), 0.2);
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::<f64>::new([2, 1, 3], vec![0.0; 5]).is_err());
    }
}
