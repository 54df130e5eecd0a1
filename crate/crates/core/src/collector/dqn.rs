//! One small Q-network per feature, stored as stacked weight tensors so that
//! every agent's hidden layer is computed with a single matrix product.
//!
//! Agent `a` maps the shared state `s` to `Q_a(s, .) = W2_a relu(W1_a s + b1_a) + b2_a`
//! over the two actions {deselect, select}.

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng;

pub const N_ACTIONS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct QNetworks {
    n_agents: usize,
    hidden: usize,
    /// (n_agents * hidden, state_dim)
    w1: Array2<f64>,
    b1: Array1<f64>,
    /// (n_agents, N_ACTIONS, hidden)
    w2: Array3<f64>,
    b2: Array2<f64>,
}

/// Forward-pass intermediates needed for the backward pass.
struct Activations {
    pre: Array2<f64>,
    hidden: Array2<f64>,
    /// (batch, n_agents, N_ACTIONS)
    q: Array3<f64>,
}

impl QNetworks {
    /// Uniform initialisation in `±1/sqrt(fan_in)` for every layer.
    pub fn new<R: Rng + ?Sized>(n_agents: usize, state_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let b_in = 1.0 / (state_dim as f64).sqrt();
        let b_hid = 1.0 / (hidden as f64).sqrt();
        let mut u = |bound: f64| rng.random_range(-bound..bound);
        let w1 = Array2::from_shape_simple_fn((n_agents * hidden, state_dim), || u(b_in));
        let b1 = Array1::from_shape_simple_fn(n_agents * hidden, || u(b_in));
        let w2 = Array3::from_shape_simple_fn((n_agents, N_ACTIONS, hidden), || u(b_hid));
        let b2 = Array2::from_shape_simple_fn((n_agents, N_ACTIONS), || u(b_hid));
        Self {
            n_agents,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn forward(&self, states: &Array2<f64>) -> Activations {
        let mut pre = states.dot(&self.w1.t());
        pre += &self.b1;
        let hidden = pre.mapv(|z| z.max(0.0));
        let batch = states.nrows();
        let mut q = Array3::zeros((batch, self.n_agents, N_ACTIONS));
        for b in 0..batch {
            let h = hidden.row(b);
            for a in 0..self.n_agents {
                let h_a = h.slice(s![a * self.hidden..(a + 1) * self.hidden]);
                for k in 0..N_ACTIONS {
                    q[[b, a, k]] = self.w2.slice(s![a, k, ..]).dot(&h_a) + self.b2[[a, k]];
                }
            }
        }
        Activations { pre, hidden, q }
    }

    /// Q-values of every agent for a batch of states: (batch, n_agents, 2).
    pub fn q_values(&self, states: &Array2<f64>) -> Array3<f64> {
        self.forward(states).q
    }

    /// Squared TD error on the taken actions, averaged over the batch and summed
    /// over agents, and its gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        states: &Array2<f64>,
        actions: &Array2<bool>,
        targets: &Array2<f64>,
    ) -> (f64, QNetworks) {
        let act = self.forward(states);
        let batch = states.nrows();
        let scale = 1.0 / batch as f64;
        let mut loss = 0.0;
        let mut d_q = Array3::<f64>::zeros((batch, self.n_agents, N_ACTIONS));
        for b in 0..batch {
            for a in 0..self.n_agents {
                let k = usize::from(actions[[b, a]]);
                let err = act.q[[b, a, k]] - targets[[b, a]];
                loss += err * err * scale;
                d_q[[b, a, k]] = 2.0 * err * scale;
            }
        }

        let mut grad = self.zeros_like();
        let mut d_hidden = Array2::<f64>::zeros(act.hidden.raw_dim());
        for b in 0..batch {
            for a in 0..self.n_agents {
                let cols = a * self.hidden..(a + 1) * self.hidden;
                for k in 0..N_ACTIONS {
                    let g = d_q[[b, a, k]];
                    if g == 0.0 {
                        continue;
                    }
                    grad.b2[[a, k]] += g;
                    let h = act.hidden.slice(s![b, cols.clone()]);
                    grad.w2.slice_mut(s![a, k, ..]).scaled_add(g, &h);
                    d_hidden
                        .slice_mut(s![b, cols.clone()])
                        .scaled_add(g, &self.w2.slice(s![a, k, ..]));
                }
            }
        }
        let d_pre = d_hidden * act.pre.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
        grad.w1 = d_pre.t().dot(states);
        grad.b1 = d_pre.sum_axis(Axis(0));
        (loss, grad)
    }

    fn zeros_like(&self) -> QNetworks {
        QNetworks {
            n_agents: self.n_agents,
            hidden: self.hidden,
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array3::zeros(self.w2.raw_dim()),
            b2: Array2::zeros(self.b2.raw_dim()),
        }
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }
}

/// Adam over all four parameter tensors of a [`QNetworks`].
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: QNetworks,
    v: QNetworks,
}

impl Adam {
    pub fn new(like: &QNetworks, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut QNetworks, mut grad: QNetworks) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .params_mut()
            .into_iter()
            .zip(grad.params_mut())
            .zip(self.m.params_mut())
            .zip(self.v.params_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}
