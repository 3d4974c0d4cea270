use super::network::{Gradients, LayerParams, Network};
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    step: u64,
    m: Vec<LayerParams<T>>,
    v: Vec<LayerParams<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>, learning_rate: f64) -> Self {
        let zeros: Vec<LayerParams<T>> = net.arch().layers.iter().map(LayerParams::zeros).collect();
        Self { learning_rate, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(BETA1);
        let b2 = T::lit(BETA2);
        let one = T::one();
        let corr1 = T::lit(1.0 - BETA1.powi(t));
        let corr2 = T::lit(1.0 - BETA2.powi(t));
        let lr = T::lit(self.learning_rate);
        let eps = T::lit(EPSILON);
        for (((p, g), m), v) in net.params_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pairs = p
                .weight
                .iter_mut()
                .zip(&g.weight)
                .zip(m.weight.iter_mut().zip(v.weight.iter_mut()))
                .chain(p.bias.iter_mut().zip(&g.bias).zip(m.bias.iter_mut().zip(v.bias.iter_mut())));
            for ((p, &g), (m, v)) in pairs {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::{ArchitectureSpec, LayerSpec, Shape};
    use crate::rng::seeded;

    fn net() -> Network<f64> {
        let arch = ArchitectureSpec::new(Shape::Flat(2), vec![LayerSpec::Dense { input: 2, output: 1 }]).unwrap();
        Network::init(&arch, &mut seeded(0)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut n = net();
        let before = n.clone();
        let mut adam = Adam::new(&n, 1e-3);
        let zeros: Gradients<f64> = n.arch().layers.iter().map(LayerParams::zeros).collect();
        for _ in 0..10 {
            adam.step(&mut n, &zeros);
        }
        assert_eq!(n, before);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        // with constant g the bias-corrected ratio m_hat / sqrt(v_hat) is
        // exactly sign(g) at every step, so each update is lr (up to eps)
        let mut n = net();
        let mut adam = Adam::new(&n, 1e-3);
        let g = vec![LayerParams { weight: vec![0.37, -5.0], bias: vec![1e-3] }];
        for _ in 0..500 {
            let before: Vec<f64> = (0..3).map(|i| n.param(i)).collect();
            adam.step(&mut n, &g);
            for (i, b) in before.iter().enumerate() {
                let delta = b - n.param(i);
                let sign = [0.37f64, -5.0, 1e-3][i].signum();
                assert!((delta - sign * 1e-3).abs() < 1e-6, "{delta}");
            }
        }
        assert_eq!(adam.steps(), 500);
    }
}
