//! Flat, allocation-light evaluators for hot loops (path integration and
//! action minimization), where walking a `BTreeMap` per call is too slow.

use super::{Polynomial, VectorField};

#[derive(Debug, Clone)]
pub struct CompiledPoly {
    nvars: usize,
    coefficients: Vec<f64>,
    /// Row-major `len × nvars` exponent table.
    exponents: Vec<u32>,
    max_exp: u32,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        let nvars = p.nvars();
        let mut coefficients = Vec::with_capacity(p.len());
        let mut exponents = Vec::with_capacity(p.len() * nvars);
        for (m, c) in p.terms() {
            coefficients.push(c);
            exponents.extend_from_slice(m.exponents());
        }
        let max_exp = exponents.iter().copied().max().unwrap_or(0);
        Self { nvars, coefficients, exponents, max_exp }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Evaluates using a caller-provided power table, `powers[i * stride + k] = x_i^k`.
    fn eval_with(&self, powers: &[f64], stride: usize) -> f64 {
        let n = self.nvars;
        let mut sum = 0.0;
        for (t, &c) in self.coefficients.iter().enumerate() {
            let mut v = c;
            for (i, &e) in self.exponents[t * n..(t + 1) * n].iter().enumerate() {
                if e > 0 {
                    v *= powers[i * stride + e as usize];
                }
            }
            sum += v;
        }
        sum
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let stride = self.max_exp as usize + 1;
        let powers = power_table(x, stride);
        self.eval_with(&powers, stride)
    }
}

fn power_table(x: &[f64], stride: usize) -> Vec<f64> {
    let mut powers = vec![1.0; x.len() * stride];
    for (i, &xi) in x.iter().enumerate() {
        for k in 1..stride {
            powers[i * stride + k] = powers[i * stride + k - 1] * xi;
        }
    }
    powers
}

/// A vector field together with its Jacobian, compiled for fast evaluation.
#[derive(Debug, Clone)]
pub struct CompiledField {
    nvars: usize,
    components: Vec<CompiledPoly>,
    /// Row-major `n × n`, entry `(i, j)` is `∂f_i/∂x_j`.
    jacobian: Vec<CompiledPoly>,
    stride: usize,
}

impl CompiledField {
    pub fn new(f: &VectorField) -> Self {
        let components: Vec<CompiledPoly> = f.components().iter().map(CompiledPoly::new).collect();
        let jacobian: Vec<CompiledPoly> = f
            .components()
            .iter()
            .flat_map(|c| (0..f.nvars()).map(move |j| CompiledPoly::new(&c.derivative(j))))
            .collect();
        let stride = components.iter().map(|c| c.max_exp).max().unwrap_or(0) as usize + 1;
        Self { nvars: f.nvars(), components, jacobian, stride }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let powers = power_table(x, self.stride);
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval_with(&powers, self.stride);
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nvars];
        self.eval_into(x, &mut out);
        out
    }

    /// Writes `f(x)` into `value` and the row-major Jacobian into `jac`.
    pub fn eval_with_jacobian(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) {
        let powers = power_table(x, self.stride);
        for (o, c) in value.iter_mut().zip(&self.components) {
            *o = c.eval_with(&powers, self.stride);
        }
        for (o, c) in jac.iter_mut().zip(&self.jacobian) {
            *o = c.eval_with(&powers, self.stride);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    #[test]
    fn compiled_matches_tree_evaluation() {
        let f = VectorField::new(vec![
            parse_polynomial("x1 - x1^3 - 10*x1*x2^2", 2).unwrap(),
            parse_polynomial("-(1 + x1^2)*x2 + 3", 2).unwrap(),
        ])
        .unwrap();
        let cf = f.compile();
        let x = [0.7, -1.3];
        let direct = f.evaluate(&x).unwrap();
        let fast = cf.evaluate(&x);
        for (a, b) in direct.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut v = [0.0; 2];
        let mut j = [0.0; 4];
        cf.eval_with_jacobian(&x, &mut v, &mut j);
        let jac = f.jacobian();
        for r in 0..2 {
            for c in 0..2 {
                let exact = jac[r].component(c).evaluate(&x).unwrap();
                assert!((exact - j[r * 2 + c]).abs() < 1e-12);
            }
        }
    }
}
