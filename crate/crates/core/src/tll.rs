//! Two-level-lattice (TLL) controllers and the LTI plant they drive.
//!
//! A scalar TLL computes `max_j min_{i in s_j} (w_i . x + b_i)`: `N` local linear
//! functions, `M` selector sets. A multi-output controller stacks `m` equally sized
//! scalar TLLs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::dot;
use crate::polytope::inf_norm;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTll {
    n: usize,
    /// `N x n`, row-major.
    weights: Vec<f64>,
    biases: Vec<f64>,
    /// Sorted, deduplicated, 0-based.
    selectors: Vec<Vec<usize>>,
}

impl ScalarTll {
    /// Build and validate a scalar TLL. Selector indices are 0-based; repeated
    /// indices inside one selector set are collapsed.
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>, selectors: Vec<Vec<usize>>) -> Result<Self> {
        let big_n = weights.len();
        if big_n == 0 {
            return Err(Error::invalid("a TLL needs at least one local linear function"));
        }
        if biases.len() != big_n {
            return Err(Error::dim(format!(
                "{big_n} weight rows but {} biases",
                biases.len()
            )));
        }
        let n = weights[0].len();
        if n == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| w.len() != n) {
            return Err(Error::dim(format!(
                "weight row {} has length {} (expected {n})",
                i + 1,
                w.len()
            )));
        }
        if weights.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::invalid("weights and biases must be finite"));
        }
        if selectors.is_empty() {
            return Err(Error::invalid("a TLL needs at least one selector set"));
        }
        let mut sets = Vec::with_capacity(selectors.len());
        for (j, s) in selectors.into_iter().enumerate() {
            if s.is_empty() {
                return Err(Error::invalid(format!("selector set {} is empty", j + 1)));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= big_n) {
                return Err(Error::invalid(format!(
                    "selector set {} refers to function {} but N = {big_n}",
                    j + 1,
                    bad + 1
                )));
            }
            let mut s = s;
            s.sort_unstable();
            s.dedup();
            sets.push(s);
        }
        for i in 0..big_n {
            for k in i + 1..big_n {
                let same = weights[i]
                    .iter()
                    .zip(&weights[k])
                    .all(|(a, b)| a.to_bits() == b.to_bits())
                    && biases[i].to_bits() == biases[k].to_bits();
                if same {
                    return Err(Error::invalid(format!(
                        "local linear functions {} and {} are identical",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(Self {
            n,
            weights: weights.into_iter().flatten().collect(),
            biases,
            selectors: sets,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    /// Number of local linear functions `N`.
    pub fn num_functions(&self) -> usize {
        self.biases.len()
    }

    /// Number of selector sets `M`.
    pub fn num_groups(&self) -> usize {
        self.selectors.len()
    }

    pub fn weight(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.biases[i]
    }

    pub fn selectors(&self) -> &[Vec<usize>] {
        &self.selectors
    }

    pub fn local(&self, i: usize, x: &[f64]) -> f64 {
        dot(self.weight(i), x) + self.biases[i]
    }

    pub fn local_values(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_functions()).map(|i| self.local(i, x)).collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::dim(format!(
                "input has length {} but the TLL expects {}",
                x.len(),
                self.n
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let vals = self.local_values(x);
        self.selectors
            .iter()
            .map(|s| s.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the local function that produces the output at `x`: arg-min inside
    /// each group, then arg-max over groups, ties to the lowest index.
    pub fn active_index(&self, x: &[f64]) -> usize {
        let vals = self.local_values(x);
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for s in &self.selectors {
            let mut arg = s[0];
            for &i in &s[1..] {
                if vals[i] < vals[arg] {
                    arg = i;
                }
            }
            if best.1 == usize::MAX || vals[arg] > best.0 {
                best = (vals[arg], arg);
            }
        }
        best.1
    }

    /// `max_i ||w_i||_1`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.weights
            .chunks_exact(self.n)
            .map(|w| w.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub(crate) fn scaled(&self, c: f64) -> ScalarTll {
        ScalarTll {
            weights: self.weights.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TllController {
    components: Vec<ScalarTll>,
}

impl TllController {
    pub fn new(components: Vec<ScalarTll>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::invalid("a controller needs at least one output component"));
        };
        let shape = (first.input_dim(), first.num_functions(), first.num_groups());
        for (k, c) in components.iter().enumerate().skip(1) {
            let s = (c.input_dim(), c.num_functions(), c.num_groups());
            if s != shape {
                return Err(Error::invalid(format!(
                    "component {} has (n, N, M) = {:?} but component 1 has {:?}",
                    k + 1,
                    s,
                    shape
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[ScalarTll] {
        &self.components
    }

    pub fn input_dim(&self) -> usize {
        self.components[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn num_functions(&self) -> usize {
        self.components[0].num_functions()
    }

    pub fn num_groups(&self) -> usize {
        self.components[0].num_groups()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn active_indices(&self, x: &[f64]) -> Vec<usize> {
        self.components.iter().map(|c| c.active_index(x)).collect()
    }

    /// Lipschitz constant of the whole map for the max-norm on input and output.
    pub fn lipschitz_bound(&self) -> f64 {
        self.components
            .iter()
            .map(ScalarTll::lipschitz_bound)
            .fold(0.0, f64::max)
    }

    /// Gain matrix and offset of the affine piece selected by `active` (one index per output).
    pub fn affine_piece(&self, active: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.output_dim();
        let n = self.input_dim();
        let w = DMatrix::from_fn(m, n, |k, j| self.components[k].weight(active[k])[j]);
        let b = DVector::from_fn(m, |k, _| self.components[k].bias(active[k]));
        (w, b)
    }

    /// Multiply every weight by `c`; biases are untouched.
    pub fn scale_weights(&self, c: f64) -> TllController {
        TllController {
            components: self.components.iter().map(|s| s.scaled(c)).collect(),
        }
    }
}

/// State-feedback law usable by the Lipschitz grid method.
pub trait FeedbackController: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn control(&self, x: &[f64]) -> Vec<f64>;
}

impl FeedbackController for TllController {
    fn input_dim(&self) -> usize {
        TllController::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        TllController::output_dim(self)
    }

    fn control(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval_unchecked(x)).collect()
    }
}

/// Adapter for closures `x -> u`.
pub struct FnController<F> {
    pub n: usize,
    pub m: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> FnController<F> {
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> FeedbackController for FnController<F> {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn control(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

/// `x_{t+1} = A x_t + B u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::dim(format!(
                "B has {} rows but A is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::dim("state and control dimensions must be at least 1"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("system matrices must be finite"));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn b_norm(&self) -> f64 {
        inf_norm(&self.b)
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        (0..n)
            .map(|i| {
                (0..n).map(|j| self.a[(i, j)] * x[j]).sum::<f64>()
                    + (0..self.control_dim()).map(|j| self.b[(i, j)] * u[j]).sum::<f64>()
            })
            .collect()
    }

    pub fn check_controller(&self, n: usize, m: usize) -> Result<()> {
        if n != self.state_dim() || m != self.control_dim() {
            return Err(Error::dim(format!(
                "controller maps R^{n} -> R^{m} but the system has n = {}, m = {}",
                self.state_dim(),
                self.control_dim()
            )));
        }
        Ok(())
    }
}
