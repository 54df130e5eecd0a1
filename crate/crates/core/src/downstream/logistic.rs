//! L2-regularised logistic regression on fold-standardised features.

#[derive(Debug, Clone)]
pub struct LogisticModel {
    means: Vec<f64>,
    scales: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

/// Inverse regularisation strength, as in the usual `C` parameterisation.
const C: f64 = 1.0;
const ITERATIONS: usize = 400;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LogisticModel {
    /// Fits by Nesterov-accelerated gradient descent on
    /// `mean(log loss) + ||w||^2 / (2 C n)`.
    pub fn fit(columns: &[Vec<f64>], labels: &[u8], train: &[usize]) -> Self {
        let d = columns.len();
        let n = train.len() as f64;
        let mut means = Vec::with_capacity(d);
        let mut scales = Vec::with_capacity(d);
        for col in columns {
            let m = train.iter().map(|&r| col[r]).sum::<f64>() / n;
            let var = train.iter().map(|&r| (col[r] - m).powi(2)).sum::<f64>() / n;
            means.push(m);
            scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        let x: Vec<Vec<f64>> = train
            .iter()
            .map(|&r| (0..d).map(|j| (columns[j][r] - means[j]) / scales[j]).collect())
            .collect();
        let y: Vec<f64> = train.iter().map(|&r| f64::from(labels[r])).collect();

        let lambda = 1.0 / (C * n);
        // Lipschitz bound: standardised columns give trace(X^T X)/n <= d.
        let step = 1.0 / (0.25 * (d as f64 + 1.0) + lambda);
        let mut w = vec![0.0; d + 1];
        let mut prev = w.clone();
        let mut grad = vec![0.0; d + 1];
        for t in 0..ITERATIONS {
            let momentum = t as f64 / (t as f64 + 3.0);
            let look: Vec<f64> = w
                .iter()
                .zip(&prev)
                .map(|(a, b)| a + momentum * (a - b))
                .collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (row, &target) in x.iter().zip(&y) {
                let z = look[d] + row.iter().zip(&look).map(|(a, b)| a * b).sum::<f64>();
                let err = sigmoid(z) - target;
                for (g, a) in grad.iter_mut().zip(row) {
                    *g += err * a;
                }
                grad[d] += err;
            }
            prev.clone_from(&w);
            for j in 0..=d {
                let reg = if j < d { lambda * look[j] } else { 0.0 };
                w[j] = look[j] - step * (grad[j] / n + reg);
            }
        }
        Self {
            means,
            scales,
            bias: w[d],
            weights: w[..d].to_vec(),
        }
    }

    pub fn probability(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        let z = self.bias
            + (0..self.weights.len())
                .map(|j| self.weights[j] * (columns[j][row] - self.means[j]) / self.scales[j])
                .sum::<f64>();
        sigmoid(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_a_linear_boundary() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 / 10.0).collect();
        let b: Vec<f64> = (0..50).map(|i| ((i * 11) % 50) as f64 / 10.0).collect();
        let labels: Vec<u8> = a.iter().zip(&b).map(|(x, y)| u8::from(x - y > 0.3)).collect();
        let columns = vec![a, b];
        let train: Vec<usize> = (0..50).collect();
        let model = LogisticModel::fit(&columns, &labels, &train);
        let correct = train
            .iter()
            .filter(|&&r| u8::from(model.probability(&columns, r) > 0.5) == labels[r])
            .count();
        assert!(correct >= 45, "{correct}/50");
    }
}
