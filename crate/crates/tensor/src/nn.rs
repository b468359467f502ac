//! ReLU feed-forward stacks.

use rand::Rng;

use crate::array::Tensor;
use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

/// Layer sizes plus the activation applied after the final layer. Hidden
/// layers always use ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub sizes: Vec<usize>,
    pub output: Activation,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Self {
        LayerSpec { sizes, output: Activation::Identity }
    }

    pub fn with_output(mut self, act: Activation) -> Self {
        self.output = act;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("empty layer spec")
    }
}

/// An MLP whose weights live in a [`ParamStore`] under `<prefix>.l<i>.{w,b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub prefix: String,
    pub spec: LayerSpec,
}

impl Mlp {
    /// Registers Glorot-initialized weights and zero biases.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: impl Into<String>,
        spec: LayerSpec,
        rng: &mut R,
    ) -> Result<Mlp> {
        let prefix = prefix.into();
        if spec.sizes.len() < 2 {
            return Err(TensorError::ShapeMismatch("an MLP needs at least two sizes".into()));
        }
        for (i, w) in spec.sizes.windows(2).enumerate() {
            store.insert_glorot(format!("{prefix}.l{i}.w"), w[1], w[0], rng)?;
            store.insert(format!("{prefix}.l{i}.b"), Tensor::zeros(1, w[1]))?;
        }
        Ok(Mlp { prefix, spec })
    }

    /// Rebinds an existing layout (e.g. after loading a checkpoint).
    pub fn bind(store: &ParamStore, prefix: impl Into<String>, spec: LayerSpec) -> Result<Mlp> {
        let mlp = Mlp { prefix: prefix.into(), spec };
        for (i, w) in mlp.spec.sizes.windows(2).enumerate() {
            let (wn, bn) = mlp.layer_names(i);
            let wt = store.get(&wn).ok_or_else(|| TensorError::UnknownParameter(wn.clone()))?;
            let bt = store.get(&bn).ok_or_else(|| TensorError::UnknownParameter(bn.clone()))?;
            if wt.shape() != (w[1], w[0]) || bt.shape() != (1, w[1]) {
                return Err(TensorError::ShapeMismatch(format!("layer {i} of `{}`", mlp.prefix)));
            }
        }
        Ok(mlp)
    }

    pub fn layer_names(&self, i: usize) -> (String, String) {
        (format!("{}.l{i}.w", self.prefix), format!("{}.l{i}.b", self.prefix))
    }

    pub fn num_layers(&self) -> usize {
        self.spec.sizes.len() - 1
    }

    /// Forward pass on a `rows × in` input.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.spec.input_dim() {
            return Err(TensorError::ShapeMismatch(format!(
                "`{}` expects width {}, got {cols}",
                self.prefix,
                self.spec.input_dim()
            )));
        }
        let (w, b) = self.layer_vars(tape, 0)?;
        let h = tape.linear(x, w, b);
        self.finish(tape, h, 1)
    }

    /// Forward pass whose first layer takes sparse binary rows (indices of set
    /// entries), e.g. fingerprints. An optional dense block is concatenated
    /// after the binary block: the first layer's weight is split column-wise.
    pub fn forward_sparse(&self, tape: &mut Tape<'_>, active: Vec<Vec<usize>>, dense: Option<Var>) -> Result<Var> {
        let (w, b) = self.layer_vars(tape, 0)?;
        let in_dim = self.spec.input_dim();
        let dense_cols = dense.map_or(0, |d| tape.shape(d).1);
        let sparse_dim = in_dim.checked_sub(dense_cols).ok_or_else(|| {
            TensorError::ShapeMismatch(format!("`{}`: dense block wider than input", self.prefix))
        })?;
        if active.iter().flatten().any(|&i| i >= sparse_dim) {
            return Err(TensorError::ShapeMismatch(format!("`{}`: sparse index out of range", self.prefix)));
        }
        let rows = active.len();
        let h = match dense {
            None => tape.sparse_matmul_t(w, active),
            Some(d) => {
                if tape.shape(d).0 != rows {
                    return Err(TensorError::ShapeMismatch("sparse/dense row mismatch".into()));
                }
                let hs = tape.sparse_matmul_t(w, active);
                let hd = tape.matmul_t_cols(d, w, sparse_dim);
                tape.add(hs, hd)
            }
        };
        let h = tape.add_row(h, b);
        self.finish(tape, h, 1)
    }

    fn layer_vars(&self, tape: &mut Tape<'_>, i: usize) -> Result<(Var, Var)> {
        let (wn, bn) = self.layer_names(i);
        Ok((tape.param_named(&wn)?, tape.param_named(&bn)?))
    }

    fn finish(&self, tape: &mut Tape<'_>, mut h: Var, start: usize) -> Result<Var> {
        let n = self.num_layers();
        for i in start..=n {
            let last = i == n;
            // Activation of layer i-1.
            h = if last {
                match self.spec.output {
                    Activation::Identity => h,
                    Activation::Relu => tape.relu(h),
                    Activation::Sigmoid => tape.sigmoid(h),
                    Activation::Tanh => tape.tanh(h),
                }
            } else {
                tape.relu(h)
            };
            if !last {
                let (w, b) = self.layer_vars(tape, i)?;
                h = tape.linear(h, w, b);
            }
        }
        Ok(h)
    }
}

/// Runs `mlp` on one input vector and returns the output with the recorded tape.
pub fn mlp_forward<'s>(store: &'s ParamStore, mlp: &Mlp, input: &[f64]) -> Result<(Vec<f64>, Tape<'s>, Var)> {
    let mut tape = Tape::new(store);
    let x = tape.constant(Tensor::row_vector(input.to_vec()));
    let y = mlp.forward(&mut tape, x)?;
    let out = tape.value(y).data().to_vec();
    Ok((out, tape, y))
}
