use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::NnError;

/// Exponential-linear unit.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Fully connected network with ELU between layers and a linear output.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix
/// (`out x in`, row-major) followed by the bias.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    version: u64,
}

/// Equality of architecture and weights; the cache version is bookkeeping.
impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.params == other.params
    }
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// All-zero network with the given layer widths, input first.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; n], version: 0 })
    }

    /// Orthogonal weights scaled by `hidden_gain` (last layer: `output_gain`), zero biases.
    pub fn orthogonal(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut impl Rng) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(rows, cols, rng);
            let off = net.weight_offset(l);
            for (p, v) in net.params[off..off + rows * cols].iter_mut().zip(w.iter()) {
                *p = gain * v;
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::Shape(format!("expected {} params, got {}", self.params.len(), params.len())));
        }
        self.params_mut().copy_from_slice(params);
        Ok(())
    }

    fn weight_offset(&self, layer: usize) -> usize {
        self.sizes.windows(2).take(layer).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (rows, cols) = (self.sizes[l + 1], self.sizes[l]);
        let off = self.weight_offset(l);
        let w = ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols]).expect("layout");
        let b = ArrayView1::from(&self.params[off + rows * cols..off + rows * cols + rows]);
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::Shape(format!("input width {} != {}", x.ncols(), self.input_dim())));
        }
        Ok(())
    }

    /// Batched forward pass, rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Cache), NnError> {
        self.check_input(&x)?;
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut h = x.to_owned();
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w.t());
            z += &b;
            inputs.push(h);
            if l + 1 < layers {
                let a = z.mapv(elu);
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Ok((h, Cache { version: self.version, inputs, pre }))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(&x)?;
        let layers = self.num_layers();
        let mut h = x.to_owned();
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w.t());
            z += &b;
            if l + 1 < layers {
                z.mapv_inplace(elu);
            }
            h = z;
        }
        Ok(h)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass. Returns the flat parameter gradient and the input gradient.
    pub fn backward(&self, cache: &Cache, grad_out: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>), NnError> {
        let (g, gx) = self.reverse(cache, grad_out, true)?;
        Ok((g, gx.expect("requested")))
    }

    /// Reverse pass for the parameter gradient alone.
    pub fn param_grads(&self, cache: &Cache, grad_out: ArrayView2<f64>) -> Result<Vec<f64>, NnError> {
        Ok(self.reverse(cache, grad_out, false)?.0)
    }

    fn reverse(
        &self,
        cache: &Cache,
        grad_out: ArrayView2<f64>,
        input_grad: bool,
    ) -> Result<(Vec<f64>, Option<Array2<f64>>), NnError> {
        if cache.version != self.version {
            return Err(NnError::StaleCache);
        }
        let batch = cache.inputs[0].nrows();
        if grad_out.dim() != (batch, self.output_dim()) {
            return Err(NnError::Shape(format!(
                "output gradient {:?} != ({batch}, {})",
                grad_out.dim(),
                self.output_dim()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut gz = grad_out.to_owned();
        for l in (0..self.num_layers()).rev() {
            let (w, _) = self.layer(l);
            let (rows, cols) = w.dim();
            let off = self.weight_offset(l);
            let gw = gz.t().dot(&cache.inputs[l]);
            grads[off..off + rows * cols].copy_from_slice(gw.as_slice().expect("standard layout"));
            let gb: Array1<f64> = gz.sum_axis(Axis(0));
            grads[off + rows * cols..off + rows * cols + rows].copy_from_slice(gb.as_slice().expect("contiguous"));
            if l == 0 {
                return Ok((grads, input_grad.then(|| gz.dot(&w))));
            }
            let mut next = gz.dot(&w);
            next.zip_mut_with(&cache.pre[l - 1], |g, &z| *g *= elu_grad(z));
            gz = next;
        }
        unreachable!("at least one layer")
    }
}

/// Matrix with orthonormal rows (or columns, whichever are fewer).
fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(q) {
                *a -= d * b;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut m = Array2::zeros((rows, cols));
    for (i, q) in basis.iter().enumerate() {
        if rows <= cols {
            m.slice_mut(s![i, ..]).assign(&ArrayView1::from(q.as_slice()));
        } else {
            m.slice_mut(s![.., i]).assign(&ArrayView1::from(q.as_slice()));
        }
    }
    m
}
