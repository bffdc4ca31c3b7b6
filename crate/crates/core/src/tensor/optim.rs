use std::f64::consts::PI;

use super::{Real, Tensor, TensorError};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    /// Moments shaped like `params`, all zero.
    pub fn new(params: &[Tensor<T>]) -> Adam<T> {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<(), TensorError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: [params.len(), 0],
                rhs: [grads.len(), self.m.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(t));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(t));
        let lr = T::from_f64_lossy(lr);
        let eps = T::from_f64_lossy(self.eps);
        let one = T::one();
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Step at which the one-cycle schedule reaches its maximum: 5% of the run.
pub fn onecycle_peak_step(total_steps: usize) -> usize {
    ((0.05 * total_steps as f64).round() as usize).min(total_steps.saturating_sub(1))
}

/// One-cycle learning rate: linear warmup from `max_lr / 25` to `max_lr` at
/// the peak step, then cosine annealing to `max_lr / 1e4` at the last step.
pub fn onecycle_lr(step: usize, total_steps: usize, max_lr: f64) -> Result<f64, TensorError> {
    if step >= total_steps {
        return Err(TensorError::OutOfRange {
            step,
            total: total_steps,
        });
    }
    let initial = max_lr / 25.0;
    let last = max_lr / 1e4;
    let peak = onecycle_peak_step(total_steps);
    if step < peak {
        return Ok(initial + (max_lr - initial) * step as f64 / peak as f64);
    }
    let span = total_steps - 1 - peak;
    if span == 0 {
        return Ok(max_lr);
    }
    let progress = (step - peak) as f64 / span as f64;
    Ok(last + (max_lr - last) * 0.5 * (1.0 + (PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::<f64>::row(vec![1.0, -2.0])];
        let mut adam = Adam::new(&p);
        adam.step(&mut p, &[Tensor::zeros(1, 2)], 0.1).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![Tensor::<f64>::scalar(0.0)];
        let mut adam = Adam::new(&p);
        adam.step(&mut p, &[Tensor::scalar(1.0)], 0.001).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_absolute_value() {
        let a = 2.5;
        let mut p = vec![Tensor::<f64>::scalar(-1.0)];
        let mut adam = Adam::new(&p);
        let total = 3000;
        for s in 0..total {
            let g = if p[0].item() > a { 1.0 } else { -1.0 };
            adam.step(&mut p, &[Tensor::scalar(g)], onecycle_lr(s, total, 0.05).unwrap()).unwrap();
        }
        assert!((p[0].item() - a).abs() < 1e-2, "{}", p[0].item());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![Tensor::<f32>::zeros(2, 2)];
        let mut adam = Adam::new(&p);
        assert!(matches!(
            adam.step(&mut p, &[Tensor::zeros(2, 3)], 0.1),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn schedule_landmarks() {
        let total = 1000;
        assert!((onecycle_lr(0, total, 1e-3).unwrap() - 1e-3 / 25.0).abs() < 1e-18);
        assert_eq!(onecycle_lr(50, total, 1e-3).unwrap(), 1e-3);
        assert!((onecycle_lr(total - 1, total, 1e-3).unwrap() - 1e-7).abs() < 1e-15);
        let lrs: Vec<f64> = (0..total).map(|s| onecycle_lr(s, total, 1e-3).unwrap()).collect();
        let argmax = (0..total).max_by(|&a, &b| lrs[a].total_cmp(&lrs[b])).unwrap();
        assert_eq!(argmax, 50);
        assert!(lrs[..50].windows(2).all(|w| w[0] < w[1]));
        assert!(lrs[50..].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn schedule_out_of_range() {
        assert_eq!(onecycle_lr(10, 10, 1e-3), Err(TensorError::OutOfRange { step: 10, total: 10 }));
    }

    #[test]
    fn tiny_runs() {
        assert_eq!(onecycle_lr(0, 1, 1e-3).unwrap(), 1e-3);
        assert_eq!(onecycle_peak_step(20), 1);
    }
}
