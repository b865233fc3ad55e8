pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Upstream gradient masked by `x > 0` (the subgradient at 0 is 0).
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect()
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// Takes the forward output `y = σ(x)`.
pub fn sigmoid_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&s, &d)| d * s * (1.0 - s)).collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Takes the forward output `y = tanh(x)`.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&t, &d)| d * (1.0 - t * t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&[-1.0, 0.0, 2.0], &[5.0, 5.0, 5.0]), vec![0.0, 0.0, 5.0]);
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        assert_eq!(tanh_backward(&tanh(&[0.0]), &[1.0]), vec![1.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let s = sigmoid(&[-800.0, 800.0]);
        assert_eq!(s, vec![0.0, 1.0]);
        assert!(sigmoid_scalar(-40.0) > 0.0);
    }

    #[test]
    fn backward_matches_difference_quotient() {
        let h = 1e-6;
        for &x in &[-2.0, -0.3, 0.4, 1.7] {
            let num = (sigmoid_scalar(x + h) - sigmoid_scalar(x - h)) / (2.0 * h);
            let ana = sigmoid_backward(&[sigmoid_scalar(x)], &[1.0])[0];
            assert!((num - ana).abs() < 1e-9);
            let num = ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
            let ana = tanh_backward(&[x.tanh()], &[1.0])[0];
            assert!((num - ana).abs() < 1e-9);
        }
    }
}
