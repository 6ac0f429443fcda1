//! Sparse polynomials in the original real coordinates `(x, y)` of the
//! lattice, with per-term ε-order bookkeeping.  Used for the full
//! Hamiltonians and their flows; variables are ordered `x_0..x_{n-1},
//! y_0..y_{n-1}` by array index.

use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct RealPoly {
    nvars: usize,
    /// (ε-order, exponent vector) → coefficient.
    terms: BTreeMap<(u32, Vec<u8>), f64>,
}

impl RealPoly {
    pub fn zero(nvars: usize) -> Self {
        RealPoly { nvars, terms: BTreeMap::new() }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn insert(&mut self, s: u32, exps: Vec<u8>, coeff: f64) {
        debug_assert_eq!(exps.len(), self.nvars);
        let key = (s, exps);
        let acc = self.terms.get(&key).copied().unwrap_or(0.0) + coeff;
        if acc.abs() < 1e-15 {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, acc);
        }
    }

    /// Monomial helper: `coeff · Π var_i^{pow_i}` at ε-order `s`.
    pub fn add_monomial(&mut self, s: u32, vars_pows: &[(usize, u8)], coeff: f64) {
        let mut exps = vec![0u8; self.nvars];
        for &(v, p) in vars_pows {
            exps[v] += p;
        }
        self.insert(s, exps, coeff);
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &[u8], f64)> {
        self.terms.iter().map(|((s, e), c)| (*s, e.as_slice(), *c))
    }

    pub fn add(&self, other: &RealPoly) -> RealPoly {
        let mut out = self.clone();
        for (s, e, c) in other.terms() {
            out.insert(s, e.to_vec(), c);
        }
        out
    }

    pub fn scale(&self, f: f64) -> RealPoly {
        let mut out = RealPoly::zero(self.nvars);
        for (s, e, c) in self.terms() {
            out.insert(s, e.to_vec(), c * f);
        }
        out
    }

    pub fn mul(&self, other: &RealPoly) -> RealPoly {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut out = RealPoly::zero(self.nvars);
        for (s1, e1, c1) in self.terms() {
            for (s2, e2, c2) in other.terms() {
                let exps = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert(s1 + s2, exps, c1 * c2);
            }
        }
        out
    }

    pub fn eval(&self, u: &[f64], eps: f64) -> f64 {
        debug_assert_eq!(u.len(), self.nvars);
        let mut acc = 0.0;
        for (s, e, c) in self.terms() {
            let mut v = c * eps.powi(s as i32);
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    v *= u[i].powi(p as i32);
                }
            }
            acc += v;
        }
        acc
    }

    pub fn derivative(&self, var: usize) -> RealPoly {
        let mut out = RealPoly::zero(self.nvars);
        for (s, e, c) in self.terms() {
            if e[var] > 0 {
                let mut e2 = e.to_vec();
                e2[var] -= 1;
                out.insert(s, e2, c * e[var] as f64);
            }
        }
        out
    }

    /// All first derivatives, precomputed for repeated field evaluation.
    pub fn gradient(&self) -> Vec<RealPoly> {
        (0..self.nvars).map(|v| self.derivative(v)).collect()
    }
}

/// Canonical vector field of a Hamiltonian on pairs `(x_i, y_i)`:
/// `ẋ_i = ∂H/∂y_i`, `ẏ_i = −∂H/∂x_i`, with `n = nvars/2` pairs.
pub struct HamiltonianField {
    pub n: usize,
    grad: Vec<RealPoly>,
    /// hess[i][v] = ∂²H/∂u_i∂u_v, precomputed for the variational equations.
    hess: Vec<Vec<RealPoly>>,
}

impl HamiltonianField {
    pub fn new(h: &RealPoly) -> Self {
        assert_eq!(h.nvars() % 2, 0);
        let grad = h.gradient();
        let hess = grad.iter().map(|g| g.gradient()).collect();
        HamiltonianField { n: h.nvars() / 2, grad, hess }
    }

    pub fn eval(&self, u: &[f64], eps: f64, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = self.grad[n + i].eval(u, eps);
            out[n + i] = -self.grad[i].eval(u, eps);
        }
    }

    /// Jacobian of the vector field at `u` (for variational equations).
    pub fn jacobian(&self, u: &[f64], eps: f64) -> Vec<Vec<f64>> {
        let n = self.n;
        let dim = 2 * n;
        let mut jac = vec![vec![0.0; dim]; dim];
        for i in 0..n {
            for v in 0..dim {
                jac[i][v] = self.hess[n + i][v].eval(u, eps);
                jac[n + i][v] = -self.hess[i][v].eval(u, eps);
            }
        }
        jac
    }
}
