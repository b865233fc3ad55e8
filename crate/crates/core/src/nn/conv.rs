use crate::error::{Error, Result};

use super::{Initializer, Param, Tensor};

/// Same-length 1D correlation with `(k − 1) / 2` zeros padded at each end.
///
/// `x: [C_in, N]`, `kernel: [C_out, C_in, k]`, `bias: [C_out]` → `[C_out, N]`.
pub fn conv1d_forward(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let dims = ConvDims::of(x, kernel)?;
    bias.expect_shape(&[dims.c_out], "conv1d bias")?;
    let y = correlate(x.data(), kernel.data(), bias.data(), &dims);
    Tensor::new(vec![dims.c_out, dims.n], y)
}

/// Returns `(dx, dkernel, dbias)` for an upstream gradient `dy: [C_out, N]`.
pub fn conv1d_backward(x: &Tensor, kernel: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let dims = ConvDims::of(x, kernel)?;
    dy.expect_shape(&[dims.c_out, dims.n], "conv1d upstream gradient")?;
    let mut dx = vec![0.0; dims.c_in * dims.n];
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; dims.c_out];
    correlate_backward(x.data(), kernel.data(), dy.data(), &dims, &mut dx, &mut dk, &mut db);
    Ok((
        Tensor::new(vec![dims.c_in, dims.n], dx)?,
        Tensor::new(kernel.shape().to_vec(), dk)?,
        Tensor::new(vec![dims.c_out], db)?,
    ))
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    c_in: usize,
    c_out: usize,
    width: usize,
    n: usize,
}

impl ConvDims {
    fn of(x: &Tensor, kernel: &Tensor) -> Result<Self> {
        x.expect_rank(2, "conv1d input")?;
        kernel.expect_rank(3, "conv1d kernel")?;
        let (c_in, n) = (x.shape()[0], x.shape()[1]);
        let (c_out, k_in, width) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
        if width % 2 == 0 {
            return Err(Error::EvenKernel(width));
        }
        if k_in != c_in {
            return Err(Error::ShapeMismatch(format!(
                "conv1d kernel expects {k_in} input channels, input has {c_in}"
            )));
        }
        if n == 0 {
            return Err(Error::ShapeMismatch("conv1d input has no time steps".into()));
        }
        Ok(ConvDims { c_in, c_out, width, n })
    }

    /// Valid output range `[lo, hi)` for kernel tap `j`.
    fn tap_range(&self, j: usize) -> (usize, usize) {
        let pad = self.width / 2;
        // input index is t + j − pad, must lie in [0, n)
        let lo = pad.saturating_sub(j);
        let hi = (self.n + pad).saturating_sub(j).min(self.n);
        (lo, hi.max(lo))
    }
}

fn correlate(x: &[f64], k: &[f64], b: &[f64], d: &ConvDims) -> Vec<f64> {
    let pad = d.width / 2;
    let mut y = vec![0.0; d.c_out * d.n];
    for o in 0..d.c_out {
        let yo = &mut y[o * d.n..(o + 1) * d.n];
        yo.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..d.c_in {
            let xc = &x[c * d.n..(c + 1) * d.n];
            for j in 0..d.width {
                let w = k[(o * d.c_in + c) * d.width + j];
                if w == 0.0 {
                    continue;
                }
                let (lo, hi) = d.tap_range(j);
                for t in lo..hi {
                    yo[t] += w * xc[t + j - pad];
                }
            }
        }
    }
    y
}

fn correlate_backward(x: &[f64], k: &[f64], dy: &[f64], d: &ConvDims, dx: &mut [f64], dk: &mut [f64], db: &mut [f64]) {
    let pad = d.width / 2;
    for o in 0..d.c_out {
        let dyo = &dy[o * d.n..(o + 1) * d.n];
        db[o] += dyo.iter().sum::<f64>();
        for c in 0..d.c_in {
            let xc = &x[c * d.n..(c + 1) * d.n];
            let dxc = &mut dx[c * d.n..(c + 1) * d.n];
            for j in 0..d.width {
                let idx = (o * d.c_in + c) * d.width + j;
                let w = k[idx];
                let (lo, hi) = d.tap_range(j);
                let mut acc = 0.0;
                for t in lo..hi {
                    let g = dyo[t];
                    acc += g * xc[t + j - pad];
                    dxc[t + j - pad] += g * w;
                }
                dk[idx] += acc;
            }
        }
    }
}

/// Convolution layer holding its kernel and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernel: Param,
    pub bias: Param,
}

impl Conv1d {
    pub fn new(init: &mut Initializer, name: &str, c_in: usize, c_out: usize, width: usize) -> Self {
        Conv1d {
            kernel: init.glorot(&format!("{name}.kernel"), &[c_out, c_in, width], c_in * width, c_out * width),
            bias: Param::zeros(format!("{name}.bias"), &[c_out]),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv1d_forward(x, &self.kernel.value, &self.bias.value)
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&mut self, x: &Tensor, dy: &[f64]) -> Result<Vec<f64>> {
        let dims = ConvDims::of(x, &self.kernel.value)?;
        if dy.len() != dims.c_out * dims.n {
            return Err(Error::ShapeMismatch("conv1d upstream gradient".into()));
        }
        let mut dx = vec![0.0; dims.c_in * dims.n];
        let Conv1d { kernel, bias } = self;
        correlate_backward(
            x.data(),
            kernel.value.data(),
            dy,
            &dims,
            &mut dx,
            kernel.grad.data_mut(),
            bias.grad.data_mut(),
        );
        Ok(dx)
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.kernel, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.kernel, &mut self.bias]
    }
}
