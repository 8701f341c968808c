use super::net::{ArcaneNet, Gradients};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
}

/// Parameter update rule plus its running state.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn sgd(lr: f64) -> Self {
        Optimizer::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::new(OptimizerKind::ADAM, lr)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, net: &mut ArcaneNet, grads: &Gradients) -> Result<(), NnError> {
        let params = net.params_mut();
        if params.len() != grads.tensors.len() || params.iter().zip(&grads.tensors).any(|(p, g)| !p.same_shape(g)) {
            return Err(NnError::ShapeMismatch {
                what: "gradients".into(),
                expected: params.iter().map(|p| p.len()).collect(),
                found: grads.tensors.iter().map(|g| g.len()).collect(),
            });
        }
        if !grads.is_finite() {
            return Err(NnError::NonFinite("gradient".into()));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(&grads.tensors) {
                    p.data_mut().iter_mut().zip(g.data()).for_each(|(w, d)| *w -= self.lr * d);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = grads.tensors.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params.into_iter().zip(&grads.tensors).zip(&mut self.m).zip(&mut self.v) {
                    for (((w, &d), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mean Huber loss (delta 1) and its gradient with respect to `pred`.
pub fn huber_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let e = p - y;
            loss += if e.abs() <= 1.0 { 0.5 * e * e } else { e.abs() - 0.5 };
            e.clamp(-1.0, 1.0) / n
        })
        .collect();
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{NetConfig, Variant};

    fn tiny() -> ArcaneNet {
        let mut cfg = NetConfig::with_global_dims((5, 5), 3, Variant::Dual);
        cfg.conv_g.truncate(1);
        cfg.proj = 4;
        cfg.hidden = 4;
        ArcaneNet::new(cfg, 1).unwrap()
    }

    fn ramp(net: &ArcaneNet) -> Gradients {
        let mut g = net.zero_gradients();
        for (i, t) in g.tensors.iter_mut().enumerate() {
            t.data_mut().iter_mut().enumerate().for_each(|(j, v)| *v = ((i * 31 + j) % 7) as f64 - 3.0);
        }
        g
    }

    #[test]
    fn sgd_is_exact() {
        let mut net = tiny();
        let before = net.clone();
        let g = ramp(&net);
        Optimizer::sgd(0.001).apply(&mut net, &g).unwrap();
        for ((a, b), d) in net.params().iter().zip(before.params()).zip(&g.tensors) {
            for ((x, y), z) in a.data().iter().zip(b.data()).zip(d.data()) {
                assert_eq!(*x, y - 0.001 * z);
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for mut opt in [Optimizer::sgd(0.1), Optimizer::adam(0.1)] {
            let mut net = tiny();
            let before = net.clone();
            let g = net.zero_gradients();
            opt.apply(&mut net, &g).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn identical_updates_stay_identical() {
        let (mut a, mut b) = (tiny(), tiny());
        let g = ramp(&a);
        let (mut oa, mut ob) = (Optimizer::adam(0.001), Optimizer::adam(0.001));
        for _ in 0..3 {
            oa.apply(&mut a, &g).unwrap();
            ob.apply(&mut b, &g).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut net = tiny();
        let before = net.clone();
        let g = ramp(&net);
        Optimizer::adam(0.01).apply(&mut net, &g).unwrap();
        let (p, q, d) = (&net.params()[0].data()[0], &before.params()[0].data()[0], g.tensors[0].data()[0]);
        assert!(((q - p) - 0.01 * d.signum()).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = tiny();
        let mut g = net.zero_gradients();
        g.tensors[0].data_mut()[0] = f64::NAN;
        assert!(matches!(Optimizer::adam(0.1).apply(&mut net, &g), Err(NnError::NonFinite(_))));
    }

    #[test]
    fn huber_values() {
        let (l, g) = huber_loss(&[0.5, 3.0], &[0.0, 0.0]);
        assert_eq!(l, (0.125 + 2.5) / 2.0);
        assert_eq!(g, vec![0.25, 0.5]);
    }
}
