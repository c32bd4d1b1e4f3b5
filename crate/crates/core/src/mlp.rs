//! Fully connected ReLU network with a softmax cross-entropy head.
//!
//! Layer `l` maps `n_l -> n_{l+1}` through a [`WeightMatrix`] of shape
//! `n_l x n_{l+1}` (same orientation the rewiring works on), so a batch
//! `X (b x n_l)` goes to `X W + bias`.

use serde::{Deserialize, Serialize};

use crate::data::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::matrix_io::WeightMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    layer_sizes: Vec<usize>,
}

impl MlpArch {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "architecture needs at least two positive layer sizes, got {layer_sizes:?}"
            )));
        }
        Ok(Self { layer_sizes })
    }

    /// Two hidden layers of 64 units.
    pub fn shallow_thin(inputs: usize, classes: usize) -> Self {
        Self {
            layer_sizes: vec![inputs, 64, 64, classes],
        }
    }

    /// Eight hidden layers of 2048 units.
    pub fn deep_wide(inputs: usize, classes: usize) -> Self {
        let mut layer_sizes = vec![inputs];
        layer_sizes.extend(std::iter::repeat(2048).take(8));
        layer_sizes.push(classes);
        Self { layer_sizes }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let sizes = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad layer size {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }
}

impl std::fmt::Display for MlpArch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// `C = beta * C + op(A) op(B)` for row-major operands. `op(A)` is `m x k`,
/// `op(B)` is `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above bound every index the strides can reach and
    // `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: MlpArch,
    weights: Vec<WeightMatrix>,
    biases: Vec<Vec<f64>>,
}

/// Gradients of the mean batch loss, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Loss, gradient and hit count of one batch.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub loss: f64,
    pub correct: usize,
    pub grads: Gradients,
}

impl Mlp {
    /// Zero biases; weights must match the architecture.
    pub fn new(arch: MlpArch, weights: Vec<WeightMatrix>) -> Result<Self> {
        if weights.len() != arch.num_weight_layers() {
            return Err(Error::InvalidArgument(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                arch.num_weight_layers()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            let want = (arch.layer_sizes[l], arch.layer_sizes[l + 1]);
            if w.shape() != want {
                return Err(Error::InvalidShape(format!(
                    "layer {l} is {:?}, expected {want:?}",
                    w.shape()
                )));
            }
        }
        let biases = arch.layer_sizes[1..]
            .iter()
            .map(|&n| vec![0.0; n])
            .collect();
        Ok(Self {
            arch,
            weights,
            biases,
        })
    }

    pub fn with_biases(mut self, biases: Vec<Vec<f64>>) -> Result<Self> {
        if biases.len() != self.biases.len()
            || biases
                .iter()
                .zip(&self.biases)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::InvalidShape("bias shapes do not match".into()));
        }
        self.biases = biases;
        Ok(self)
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn weights(&self) -> &[WeightMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data().len()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Pre-activations of every layer for a batch of `b` rows.
    fn forward(&self, x: &[f64], b: usize) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.weights.len());
        for (l, (w, bias)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (n_in, n_out) = w.shape();
            let mut z = Vec::with_capacity(b * n_out);
            for _ in 0..b {
                z.extend_from_slice(bias);
            }
            if l == 0 {
                gemm(b, n_in, n_out, x, false, w.data(), false, 1.0, &mut z);
            } else {
                let a: Vec<f64> = zs[l - 1].iter().map(|&v| v.max(0.0)).collect();
                gemm(b, n_in, n_out, &a, false, w.data(), false, 1.0, &mut z);
            }
            zs.push(z);
        }
        zs
    }

    /// Turns logits into probabilities in place; returns summed loss and hits.
    fn softmax_xent(logits: &mut [f64], labels: &[u8], classes: usize) -> (f64, usize) {
        let mut loss = 0.0;
        let mut correct = 0;
        for (row, &y) in logits.chunks_exact_mut(classes).zip(labels) {
            let (mut argmax, mut max) = (0, f64::NEG_INFINITY);
            for (j, &v) in row.iter().enumerate() {
                if v > max {
                    max = v;
                    argmax = j;
                }
            }
            if argmax == y as usize {
                correct += 1;
            }
            let shifted_target = row[y as usize] - max;
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            loss += sum.ln() - shifted_target;
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        (loss, correct)
    }

    /// Mean cross-entropy, accuracy hits and full gradient for one batch.
    pub fn loss_and_gradients(&self, x: &[f64], labels: &[u8]) -> Result<BatchOutcome> {
        let b = labels.len();
        let n0 = self.arch.inputs();
        let classes = self.arch.outputs();
        if b == 0 || x.len() != b * n0 {
            return Err(Error::InvalidShape(format!(
                "batch of {b} labels needs {} inputs, got {}",
                b * n0,
                x.len()
            )));
        }
        if labels.iter().any(|&y| y as usize >= classes) {
            return Err(Error::InvalidArgument("label outside output range".into()));
        }
        let mut zs = self.forward(x, b);
        let last = zs.len() - 1;
        let (loss_sum, correct) = Self::softmax_xent(&mut zs[last], labels, classes);

        // dL/dz at the output, for the mean loss.
        let mut delta = std::mem::take(&mut zs[last]);
        for (row, &y) in delta.chunks_exact_mut(classes).zip(labels) {
            row[y as usize] -= 1.0;
        }
        let inv_b = 1.0 / b as f64;
        delta.iter_mut().for_each(|d| *d *= inv_b);

        let depth = self.weights.len();
        let mut gw = vec![Vec::new(); depth];
        let mut gb = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            let (n_in, n_out) = self.weights[l].shape();
            let input: Vec<f64> = if l == 0 {
                x.to_vec()
            } else {
                zs[l - 1].iter().map(|&v| v.max(0.0)).collect()
            };
            let mut dw = vec![0.0; n_in * n_out];
            gemm(n_in, b, n_out, &input, true, &delta, false, 0.0, &mut dw);
            let mut db = vec![0.0; n_out];
            for row in delta.chunks_exact(n_out) {
                for (acc, d) in db.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            gw[l] = dw;
            gb[l] = db;
            if l > 0 {
                let mut da = vec![0.0; b * n_in];
                gemm(
                    b,
                    n_out,
                    n_in,
                    &delta,
                    false,
                    self.weights[l].data(),
                    true,
                    0.0,
                    &mut da,
                );
                for (d, &z) in da.iter_mut().zip(&zs[l - 1]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = da;
            }
        }
        Ok(BatchOutcome {
            loss: loss_sum * inv_b,
            correct,
            grads: Gradients {
                weights: gw,
                biases: gb,
            },
        })
    }

    /// Mean loss only; the finite-difference oracle perturbs through this.
    pub fn loss(&self, x: &[f64], labels: &[u8]) -> Result<f64> {
        let b = labels.len();
        if b == 0 || x.len() != b * self.arch.inputs() {
            return Err(Error::InvalidShape("batch shape mismatch".into()));
        }
        let mut zs = self.forward(x, b);
        let last = zs.len() - 1;
        let (loss_sum, _) = Self::softmax_xent(&mut zs[last], labels, self.arch.outputs());
        Ok(loss_sum / b as f64)
    }

    /// Accuracy in percent and mean loss over a dataset, in chunks.
    pub fn evaluate(&self, images: &[f64], labels: &[u8]) -> (f64, f64) {
        const CHUNK: usize = 1000;
        let n0 = self.arch.inputs();
        let classes = self.arch.outputs();
        let (mut loss, mut correct) = (0.0, 0usize);
        for (xs, ys) in images.chunks(CHUNK * n0).zip(labels.chunks(CHUNK)) {
            let mut zs = self.forward(xs, ys.len());
            let last = zs.len() - 1;
            let (l, c) = Self::softmax_xent(&mut zs[last], ys, classes);
            loss += l;
            correct += c;
        }
        let n = labels.len().max(1) as f64;
        (100.0 * correct as f64 / n, loss / n)
    }

    pub(crate) fn weight_data_mut(&mut self, l: usize) -> &mut [f64] {
        self.weights[l].data_mut()
    }

    pub(crate) fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.biases[l]
    }

    /// Mutable access used by gradient checks.
    pub fn param_mut(&mut self, layer: usize, index: usize, bias: bool) -> &mut f64 {
        if bias {
            &mut self.biases[layer][index]
        } else {
            &mut self.weights[layer].data_mut()[index]
        }
    }
}

/// `ln 10`: loss of a uniform predictor over the ten classes.
pub fn uniform_loss() -> f64 {
    (NUM_CLASSES as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_parsing() {
        let a = MlpArch::parse("784,64,64,10").unwrap();
        assert_eq!(a, MlpArch::shallow_thin(784, 10));
        assert_eq!(a.to_string(), "784,64,64,10");
        assert!(MlpArch::parse("784").is_err());
        assert!(MlpArch::parse("784,0,10").is_err());
        assert_eq!(MlpArch::deep_wide(784, 10).num_weight_layers(), 9);
    }

    #[test]
    fn uniform_predictor_loss_is_ln10() {
        let arch = MlpArch::new(vec![3, 10]).unwrap();
        let mlp = Mlp::new(arch, vec![WeightMatrix::zeros(3, 10).unwrap()]).unwrap();
        let x = [0.3, -1.0, 2.0, 0.0, 0.5, 0.5];
        let loss = mlp.loss(&x, &[4, 7]).unwrap();
        assert!((loss - uniform_loss()).abs() < 1e-9);
    }

    #[test]
    fn gemm_transposes() {
        // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn output_gradient_is_finite_and_nonzero() {
        let arch = MlpArch::new(vec![4, 5, 10]).unwrap();
        let w0 = WeightMatrix::new(
            4,
            5,
            (0..20).map(|k| (k as f64 * 0.37).sin() * 0.5).collect(),
        )
        .unwrap();
        let w1 = WeightMatrix::new(
            5,
            10,
            (0..50).map(|k| (k as f64 * 0.11).cos() * 0.3).collect(),
        )
        .unwrap();
        let mlp = Mlp::new(arch, vec![w0, w1]).unwrap();
        let out = mlp.loss_and_gradients(&[0.2, 0.4, 0.6, 0.8], &[3]).unwrap();
        let g = &out.grads.weights[1];
        assert!(g.iter().all(|v| v.is_finite()));
        assert!(g.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let arch = MlpArch::new(vec![2, 3]).unwrap();
        assert!(Mlp::new(arch.clone(), vec![WeightMatrix::zeros(3, 2).unwrap()]).is_err());
        let mlp = Mlp::new(arch, vec![WeightMatrix::zeros(2, 3).unwrap()]).unwrap();
        assert!(mlp.loss_and_gradients(&[1.0, 2.0, 3.0], &[0]).is_err());
        assert!(mlp.loss_and_gradients(&[1.0, 2.0], &[5]).is_err());
    }
}
