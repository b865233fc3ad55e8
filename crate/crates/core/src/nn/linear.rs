use crate::error::{Error, Result};

use super::{Initializer, Param, Tensor};

/// `y = x Wᵀ + b` for a batch `x: [B, in]`, `W: [out, in]`, `b: [out]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, inputs, outputs) = check_shapes(x, w)?;
    b.expect_shape(&[outputs], "linear bias")?;
    let mut y = Vec::with_capacity(batch * outputs);
    for row in x.data().chunks_exact(inputs) {
        y.extend(affine(w.data(), b.data(), row));
    }
    Tensor::new(vec![batch, outputs], y)
}

/// Returns `(dx, dW, db)` with `dx = dy W`, `dW = dyᵀ x`, `db = Σ_batch dy`.
pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, inputs, outputs) = check_shapes(x, w)?;
    dy.expect_shape(&[batch, outputs], "linear upstream gradient")?;
    let mut dx = vec![0.0; batch * inputs];
    let mut dw = vec![0.0; outputs * inputs];
    let mut db = vec![0.0; outputs];
    for ((xr, dyr), dxr) in x
        .data()
        .chunks_exact(inputs)
        .zip(dy.data().chunks_exact(outputs))
        .zip(dx.chunks_exact_mut(inputs))
    {
        affine_backward(w.data(), xr, dyr, dxr, &mut dw, &mut db);
    }
    Ok((
        Tensor::new(vec![batch, inputs], dx)?,
        Tensor::new(vec![outputs, inputs], dw)?,
        Tensor::new(vec![outputs], db)?,
    ))
}

fn check_shapes(x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize)> {
    x.expect_rank(2, "linear input")?;
    w.expect_rank(2, "linear weight")?;
    let (batch, inputs) = (x.shape()[0], x.shape()[1]);
    let (outputs, w_in) = (w.shape()[0], w.shape()[1]);
    if w_in != inputs {
        return Err(Error::ShapeMismatch(format!(
            "linear weight takes {w_in} inputs, input has {inputs}"
        )));
    }
    Ok((batch, inputs, outputs))
}

fn affine<'a>(w: &'a [f64], b: &'a [f64], x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    let inputs = x.len();
    w.chunks_exact(inputs)
        .zip(b)
        .map(move |(wr, &bias)| bias + wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
}

fn affine_backward(w: &[f64], x: &[f64], dy: &[f64], dx: &mut [f64], dw: &mut [f64], db: &mut [f64]) {
    let inputs = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        let wr = &w[o * inputs..(o + 1) * inputs];
        let dwr = &mut dw[o * inputs..(o + 1) * inputs];
        for i in 0..inputs {
            dx[i] += g * wr[i];
            dwr[i] += g * x[i];
        }
    }
}

/// Fully connected layer operating on one sample at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Glorot weights, zero bias.
    pub fn new(init: &mut Initializer, name: &str, inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: init.glorot(&format!("{name}.weight"), &[outputs, inputs], inputs, outputs),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::ShapeMismatch(format!(
                "{}: expected {} inputs, got {}",
                self.weight.name,
                self.inputs(),
                x.len()
            )));
        }
        Ok(affine(self.weight.value.data(), self.bias.value.data(), x).collect())
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        let Linear { weight, bias } = self;
        affine_backward(weight.value.data(), x, dy, &mut dx, weight.grad.data_mut(), bias.grad.data_mut());
        dx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn identity_weights_copy_input() {
        let x = t(&[2, 2], &[1.0, -2.0, 3.0, 4.0]);
        let y = linear_forward(&x, &t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let y = linear_forward(&Tensor::zeros(&[3, 2]), &t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), &t(&[2], &[0.5, -1.0])).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn hand_computed_dot_product() {
        let y = linear_forward(&t(&[1, 2], &[1.0, 2.0]), &t(&[1, 2], &[3.0, 4.0]), &t(&[1], &[1.0])).unwrap();
        assert_eq!(y.data(), &[12.0]);
    }

    #[test]
    fn backward_trivial_cases() {
        let x = t(&[2, 2], &[1.0, -2.0, 3.0, 4.0]);
        let w = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let (dx, dw, db) = linear_backward(&x, &w, &Tensor::zeros(&[2, 2])).unwrap();
        assert!(dx.data().iter().chain(dw.data()).chain(db.data()).all(|&v| v == 0.0));
        let dy = t(&[2, 2], &[0.1, 0.2, 0.3, 0.4]);
        let (dx, _, db) = linear_backward(&x, &w, &dy).unwrap();
        assert_eq!(dx, dy);
        assert!((db.data()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let w = t(&[1, 2], &[1.0, 2.0]);
        assert!(matches!(linear_forward(&x, &w, &t(&[1], &[0.0])), Err(Error::ShapeMismatch(_))));
        let w = t(&[1, 3], &[1.0, 2.0, 3.0]);
        assert!(matches!(
            linear_forward(&x, &w, &t(&[2], &[0.0, 0.0])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn layer_matches_free_function() {
        let mut init = Initializer::new(3);
        let mut layer = Linear::new(&mut init, "l", 3, 2);
        let x = [0.3, -0.1, 0.8];
        let y = layer.forward(&x).unwrap();
        let y2 = linear_forward(&t(&[1, 3], &x), &layer.weight.value, &layer.bias.value).unwrap();
        assert_eq!(y, y2.data());
        let dx = layer.backward(&x, &[1.0, -1.0]);
        let (dx2, dw2, _) = linear_backward(&t(&[1, 3], &x), &layer.weight.value, &t(&[1, 2], &[1.0, -1.0])).unwrap();
        assert_eq!(dx, dx2.data());
        assert_eq!(layer.weight.grad, dw2);
    }
}
