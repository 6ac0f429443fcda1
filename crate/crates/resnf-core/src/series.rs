//! Sparse graded Fourier–Taylor series.
//!
//! A series lives on the phase space `T^m × R^m × C^{2·nt}` with coordinates
//! `(q̂, p̂, ξ, η)` and carries an explicit ε-order per term.  Angles enter
//! through complex exponentials `e^{i k·q̂}`, actions and transversal
//! variables as monomials.  The grade of a term is `2|l|₁ + |a|₁ + |b|₁`,
//! so the quadratic drift `ω p₁ + Σ i ξ_j η_j` sits at grade 2.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::CoreError;

pub type C64 = Complex64;

/// Coefficients below this magnitude are dropped on insertion.
pub const PRUNE_EPS: f64 = 1e-14;
/// Divisors below this magnitude abort the homological solve.
pub const DIVISOR_FLOOR: f64 = 1e-8;

/// Phase-space dimensions: `m` angle/action pairs, `nt` transversal pairs.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Dims {
    pub m: usize,
    pub nt: usize,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Monomial {
    /// Fourier index over the angles q̂.
    pub k: Vec<i32>,
    /// Powers of the actions p̂.
    pub l: Vec<u32>,
    /// Powers of ξ.
    pub a: Vec<u32>,
    /// Powers of η.
    pub b: Vec<u32>,
}

impl Monomial {
    pub fn unit(dims: Dims) -> Self {
        Monomial {
            k: vec![0; dims.m],
            l: vec![0; dims.m],
            a: vec![0; dims.nt],
            b: vec![0; dims.nt],
        }
    }

    pub fn grade(&self) -> u32 {
        2 * self.l.iter().sum::<u32>() + self.a.iter().sum::<u32>() + self.b.iter().sum::<u32>()
    }

    /// Degree in the transversal variables only.
    pub fn transversal_degree(&self) -> u32 {
        self.a.iter().sum::<u32>() + self.b.iter().sum::<u32>()
    }

    pub fn action_degree(&self) -> u32 {
        self.l.iter().sum::<u32>()
    }

    /// Divisor of the homological equation for the drift `ω p₁ + Σ i ξη`.
    pub fn divisor(&self, omega: f64) -> f64 {
        self.k[0] as f64 * omega + self.a.iter().sum::<u32>() as f64
            - self.b.iter().sum::<u32>() as f64
    }

    /// Exactly resonant with respect to the drift: no fast-angle harmonic and
    /// balanced transversal degrees.
    pub fn is_resonant(&self) -> bool {
        self.k[0] == 0 && self.a.iter().sum::<u32>() == self.b.iter().sum::<u32>()
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={:?} l={:?} a={:?} b={:?}", self.k, self.l, self.a, self.b)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Truncation {
    pub s_max: u32,
    pub grade_max: u32,
}

impl Truncation {
    pub fn min(self, other: Truncation) -> Truncation {
        Truncation {
            s_max: self.s_max.min(other.s_max),
            grade_max: self.grade_max.min(other.grade_max),
        }
    }
}

/// Evaluation point for a series; `eps` feeds the ε-order bookkeeping.
#[derive(Clone, Debug)]
pub struct EvalPoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub xi: Vec<C64>,
    pub eta: Vec<C64>,
    pub eps: f64,
}

impl EvalPoint {
    pub fn origin(dims: Dims, eps: f64) -> Self {
        EvalPoint {
            q: vec![0.0; dims.m],
            p: vec![0.0; dims.m],
            xi: vec![C64::new(0.0, 0.0); dims.nt],
            eta: vec![C64::new(0.0, 0.0); dims.nt],
            eps,
        }
    }
}

/// Which variable to differentiate against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Q(usize),
    P(usize),
    Xi(usize),
    Eta(usize),
}

#[derive(Clone, Debug)]
pub struct FtSeries {
    dims: Dims,
    trunc: Truncation,
    terms: BTreeMap<(u32, Monomial), C64>,
}

impl FtSeries {
    pub fn zero(dims: Dims, trunc: Truncation) -> Self {
        FtSeries { dims, trunc, terms: BTreeMap::new() }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &Monomial, C64)> {
        self.terms.iter().map(|((s, m), c)| (*s, m, *c))
    }

    pub fn min_eps_order(&self) -> Option<u32> {
        self.terms.keys().map(|(s, _)| *s).min()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Accumulate a term; silently drops anything beyond the truncation and
    /// prunes coefficients that cancel below `PRUNE_EPS`.
    pub fn insert(&mut self, s: u32, mono: Monomial, coeff: C64) {
        debug_assert_eq!(mono.k.len(), self.dims.m);
        debug_assert_eq!(mono.a.len(), self.dims.nt);
        if s > self.trunc.s_max || mono.grade() > self.trunc.grade_max {
            return;
        }
        if coeff.norm() == 0.0 {
            return;
        }
        let key = (s, mono);
        let acc = self.terms.get(&key).copied().unwrap_or(C64::new(0.0, 0.0)) + coeff;
        if acc.norm() < PRUNE_EPS {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, acc);
        }
    }

    fn check_dims(&self, other: &FtSeries) -> Result<(), CoreError> {
        if self.dims != other.dims {
            return Err(CoreError::DimMismatch {
                left: (self.dims.m, self.dims.nt),
                right: (other.dims.m, other.dims.nt),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &FtSeries) -> Result<FtSeries, CoreError> {
        self.check_dims(other)?;
        let mut out = FtSeries::zero(self.dims, self.trunc.min(other.trunc));
        for (s, m, c) in self.terms().chain(other.terms()) {
            out.insert(s, m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FtSeries) -> Result<FtSeries, CoreError> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, factor: C64) -> FtSeries {
        let mut out = FtSeries::zero(self.dims, self.trunc);
        for (s, m, c) in self.terms() {
            out.insert(s, m.clone(), c * factor);
        }
        out
    }

    pub fn mul(&self, other: &FtSeries) -> Result<FtSeries, CoreError> {
        self.check_dims(other)?;
        let trunc = self.trunc.min(other.trunc);
        let mut out = FtSeries::zero(self.dims, trunc);
        for (s1, m1, c1) in self.terms() {
            let g1 = m1.grade();
            for (s2, m2, c2) in other.terms() {
                let s = s1 + s2;
                if s > trunc.s_max || g1 + m2.grade() > trunc.grade_max {
                    continue;
                }
                let mono = Monomial {
                    k: m1.k.iter().zip(&m2.k).map(|(x, y)| x + y).collect(),
                    l: m1.l.iter().zip(&m2.l).map(|(x, y)| x + y).collect(),
                    a: m1.a.iter().zip(&m2.a).map(|(x, y)| x + y).collect(),
                    b: m1.b.iter().zip(&m2.b).map(|(x, y)| x + y).collect(),
                };
                out.insert(s, mono, c1 * c2);
            }
        }
        Ok(out)
    }

    /// Canonical Poisson bracket
    /// `{f,g} = Σ_a (f_q̂ₐ g_p̂ₐ − f_p̂ₐ g_q̂ₐ) + Σ_j (f_ξⱼ g_ηⱼ − f_ηⱼ g_ξⱼ)`.
    ///
    /// With this convention the flow of `ω p₁ + Σ i ξη` is
    /// `q̇₁ = ω, ξ̇ = iξ, η̇ = −iη`.
    pub fn poisson(&self, other: &FtSeries) -> Result<FtSeries, CoreError> {
        self.check_dims(other)?;
        let trunc = self.trunc.min(other.trunc);
        let mut out = FtSeries::zero(self.dims, trunc);
        let i = C64::new(0.0, 1.0);
        let m = self.dims.m;
        let nt = self.dims.nt;
        // Index the right factor by the variables each term touches so a term
        // of `self` only meets partners that can give a nonzero bracket; the
        // bulk of the naive cross product is between disjoint-support pairs.
        let rhs: Vec<(u32, &Monomial, C64, u32)> = other
            .terms()
            .map(|(s2, m2, c2)| (s2, m2, c2, m2.grade()))
            .collect();
        let mut by_var: Vec<Vec<u32>> = vec![Vec::new(); m + nt];
        for (idx, (_, m2, _, _)) in rhs.iter().enumerate() {
            for ax in 0..m {
                if m2.k[ax] != 0 || m2.l[ax] != 0 {
                    by_var[ax].push(idx as u32);
                }
            }
            for j in 0..nt {
                if m2.a[j] != 0 || m2.b[j] != 0 {
                    by_var[m + j].push(idx as u32);
                }
            }
        }
        let mut seen = vec![u64::MAX; rhs.len()];
        let mut cands: Vec<u32> = Vec::new();
        for (pass, (s1, m1, c1)) in self.terms().enumerate() {
            let pass = pass as u64;
            let g1 = m1.grade();
            cands.clear();
            let gather = |list: &[u32], seen: &mut [u64], cands: &mut Vec<u32>| {
                for &idx in list {
                    if seen[idx as usize] != pass {
                        seen[idx as usize] = pass;
                        cands.push(idx);
                    }
                }
            };
            for ax in 0..m {
                if m1.k[ax] != 0 || m1.l[ax] != 0 {
                    gather(&by_var[ax], &mut seen, &mut cands);
                }
            }
            for j in 0..nt {
                if m1.a[j] != 0 || m1.b[j] != 0 {
                    gather(&by_var[m + j], &mut seen, &mut cands);
                }
            }
            for &idx in &cands {
                let (s2, m2, c2, g2) = rhs[idx as usize];
                let s = s1 + s2;
                if s > trunc.s_max || g1 + g2 > trunc.grade_max + 2 {
                    continue;
                }
                let cc = c1 * c2;
                // Summed monomial shared by every cross term of this pair.
                let mut summed: Option<Monomial> = None;
                // Angle/action pairs: both cross terms land on the same
                // monomial (k summed, one power of p̂ₐ removed).
                for ax in 0..m {
                    let fac = m1.k[ax] as f64 * m2.l[ax] as f64
                        - m1.l[ax] as f64 * m2.k[ax] as f64;
                    if fac == 0.0 {
                        continue;
                    }
                    let base = summed.get_or_insert_with(|| Monomial {
                        k: m1.k.iter().zip(&m2.k).map(|(x, y)| x + y).collect(),
                        l: m1.l.iter().zip(&m2.l).map(|(x, y)| x + y).collect(),
                        a: m1.a.iter().zip(&m2.a).map(|(x, y)| x + y).collect(),
                        b: m1.b.iter().zip(&m2.b).map(|(x, y)| x + y).collect(),
                    });
                    let mut mono = base.clone();
                    mono.l[ax] -= 1;
                    out.insert(s, mono, i * fac * cc);
                }
                // Transversal pairs: one power of ξⱼ and ηⱼ removed.
                for j in 0..nt {
                    let fac = m1.a[j] as f64 * m2.b[j] as f64
                        - m1.b[j] as f64 * m2.a[j] as f64;
                    if fac == 0.0 {
                        continue;
                    }
                    let base = summed.get_or_insert_with(|| Monomial {
                        k: m1.k.iter().zip(&m2.k).map(|(x, y)| x + y).collect(),
                        l: m1.l.iter().zip(&m2.l).map(|(x, y)| x + y).collect(),
                        a: m1.a.iter().zip(&m2.a).map(|(x, y)| x + y).collect(),
                        b: m1.b.iter().zip(&m2.b).map(|(x, y)| x + y).collect(),
                    });
                    let mut mono = base.clone();
                    mono.a[j] -= 1;
                    mono.b[j] -= 1;
                    out.insert(s, mono, C64::new(fac, 0.0) * cc);
                }
            }
        }
        Ok(out)
    }

    /// `exp(L_χ) H = Σ_j L_χ^j H / j!` with `L_χ f = {f, χ}`, truncated by
    /// ε-order.  Requires a perturbative generator (min ε-order ≥ 1) so the
    /// sum terminates.
    pub fn lie_transform(&self, chi: &FtSeries) -> Result<FtSeries, CoreError> {
        self.check_dims(chi)?;
        if chi.is_empty() {
            return Ok(self.clone());
        }
        if chi.min_eps_order() == Some(0) {
            return Err(CoreError::NonPerturbativeGenerator);
        }
        let mut acc = self.clone();
        let mut term = self.clone();
        let mut j = 1u32;
        while !term.is_empty() && j <= self.trunc.s_max + 1 {
            term = term.poisson(chi)?.scale(C64::new(1.0 / j as f64, 0.0));
            acc = acc.add(&term)?;
            j += 1;
        }
        Ok(acc)
    }

    /// The `(s, ℓ)` bucket `f_ℓ^{(·,s)}`.
    pub fn grade_select(&self, s: u32, grade: u32) -> FtSeries {
        self.filter(|ts, m| ts == s && m.grade() == grade)
    }

    /// All ε-orders of a fixed grade.
    pub fn grade_part(&self, grade: u32) -> FtSeries {
        self.filter(|_, m| m.grade() == grade)
    }

    pub fn eps_part(&self, s: u32) -> FtSeries {
        self.filter(|ts, _| ts == s)
    }

    pub fn filter<F: Fn(u32, &Monomial) -> bool>(&self, pred: F) -> FtSeries {
        let mut out = FtSeries::zero(self.dims, self.trunc);
        for (s, m, c) in self.terms() {
            if pred(s, m) {
                out.insert(s, m.clone(), c);
            }
        }
        out
    }

    pub fn with_trunc(&self, trunc: Truncation) -> FtSeries {
        let mut out = FtSeries::zero(self.dims, trunc);
        for (s, m, c) in self.terms() {
            out.insert(s, m.clone(), c);
        }
        out
    }

    /// Generator of the removal step: `χ` with coefficients `c/(i·D)`,
    /// `D = k₁ω + |a|₁ − |b|₁`, so that `{h, χ} = −f` for the drift `h`.
    pub fn solve_homological(&self, omega: f64, divisor_floor: f64) -> Result<FtSeries, CoreError> {
        let mut out = FtSeries::zero(self.dims, self.trunc);
        for (s, m, c) in self.terms() {
            let d = m.divisor(omega);
            if d.abs() < divisor_floor {
                return Err(CoreError::SmallDivisor {
                    monomial: m.to_string(),
                    divisor: d,
                });
            }
            out.insert(s, m.clone(), c / C64::new(0.0, d));
        }
        Ok(out)
    }

    /// Substitute `p̂ₐ → p̂ₐ + δₐ ε^{s_shift}` for every action.
    pub fn translate_p(&self, delta: &[f64], s_shift: u32) -> FtSeries {
        assert_eq!(delta.len(), self.dims.m);
        let mut out = FtSeries::zero(self.dims, self.trunc);
        for (s, m, c) in self.terms() {
            // Expand the product of shifted powers axis by axis.
            let mut parts: Vec<(u32, Vec<u32>, f64)> = vec![(0, Vec::new(), 1.0)];
            for ax in 0..self.dims.m {
                let la = m.l[ax];
                let mut next = Vec::new();
                for (ds, lv, f) in &parts {
                    for j in 0..=la {
                        let binom = binomial(la, j);
                        let shift_pow = (la - j) as u32;
                        let factor = f * binom * delta[ax].powi((la - j) as i32);
                        if factor == 0.0 && la != j {
                            continue;
                        }
                        let mut lv2 = lv.clone();
                        lv2.push(j);
                        next.push((ds + shift_pow * s_shift, lv2, factor));
                    }
                }
                parts = next;
            }
            for (ds, lv, f) in parts {
                let mono = Monomial { k: m.k.clone(), l: lv, a: m.a.clone(), b: m.b.clone() };
                out.insert(s + ds, mono, c * f);
            }
        }
        out
    }

    /// Reality involution induced by `x = (ξ+iη)/√2`, `y = i(ξ−iη)/√2`:
    /// conjugate the coefficient, negate `k`, swap `(a, b)`, and multiply by
    /// `i^{|a|+|b|}`.  Series built from real Hamiltonians are fixed points.
    pub fn involution(&self) -> FtSeries {
        let mut out = FtSeries::zero(self.dims, self.trunc);
        let i = C64::new(0.0, 1.0);
        for (s, m, c) in self.terms() {
            let deg = m.transversal_degree();
            let phase = i.powu(deg % 4);
            let mono = Monomial {
                k: m.k.iter().map(|x| -x).collect(),
                l: m.l.clone(),
                a: m.b.clone(),
                b: m.a.clone(),
            };
            out.insert(s, mono, c.conj() * phase);
        }
        out
    }

    pub fn derivative(&self, var: Var) -> FtSeries {
        let mut out = FtSeries::zero(self.dims, self.trunc);
        for (s, m, c) in self.terms() {
            match var {
                Var::Q(ax) => {
                    if m.k[ax] != 0 {
                        out.insert(s, m.clone(), c * C64::new(0.0, m.k[ax] as f64));
                    }
                }
                Var::P(ax) => {
                    if m.l[ax] > 0 {
                        let mut mono = m.clone();
                        mono.l[ax] -= 1;
                        out.insert(s, mono, c * m.l[ax] as f64);
                    }
                }
                Var::Xi(j) => {
                    if m.a[j] > 0 {
                        let mut mono = m.clone();
                        mono.a[j] -= 1;
                        out.insert(s, mono, c * m.a[j] as f64);
                    }
                }
                Var::Eta(j) => {
                    if m.b[j] > 0 {
                        let mut mono = m.clone();
                        mono.b[j] -= 1;
                        out.insert(s, mono, c * m.b[j] as f64);
                    }
                }
            }
        }
        out
    }

    pub fn eval(&self, pt: &EvalPoint) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (s, m, c) in self.terms() {
            let mut v = c * self.eps_pow(pt.eps, s);
            let mut phase = 0.0;
            for (ki, qi) in m.k.iter().zip(&pt.q) {
                phase += *ki as f64 * qi;
            }
            v *= C64::new(0.0, phase).exp();
            for (li, pi) in m.l.iter().zip(&pt.p) {
                v *= pi.powi(*li as i32);
            }
            for (ai, xi) in m.a.iter().zip(&pt.xi) {
                v *= xi.powu(*ai);
            }
            for (bi, et) in m.b.iter().zip(&pt.eta) {
                v *= et.powu(*bi);
            }
            acc += v;
        }
        acc
    }

    fn eps_pow(&self, eps: f64, s: u32) -> f64 {
        eps.powi(s as i32)
    }

    /// Pure-angle content folded into the trigonometric basis: returns
    /// `(s, k, cos-coefficient, sin-coefficient)` with `k` the first
    /// sign-canonical representative of `±k`, for terms with no p̂/ξ/η
    /// dependence.  `c₊ e^{ik·q} + c₋ e^{−ik·q} = (c₊+c₋)cos + i(c₊−c₋)sin`;
    /// both reported coefficients are real for series fixed by the reality
    /// involution.
    pub fn angle_cosine_table(&self) -> Vec<(u32, Vec<i32>, f64, f64)> {
        let mut map: BTreeMap<(u32, Vec<i32>), (C64, C64)> = BTreeMap::new();
        for (s, m, c) in self.terms() {
            if m.action_degree() != 0 || m.transversal_degree() != 0 {
                continue;
            }
            let kpos = canonical_k(&m.k);
            let flipped = kpos != m.k;
            let entry = map.entry((s, kpos)).or_insert((C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
            entry.0 += c;
            entry.1 += if flipped { -c } else { c };
        }
        map.into_iter()
            .map(|((s, k), (sum, diff))| {
                if k.iter().all(|&x| x == 0) {
                    (s, k, sum.re, 0.0)
                } else {
                    (s, k, sum.re, (C64::new(0.0, 1.0) * diff).re)
                }
            })
            .collect()
    }
}

fn canonical_k(k: &[i32]) -> Vec<i32> {
    match k.iter().find(|&&x| x != 0) {
        Some(&first) if first < 0 => k.iter().map(|x| -x).collect(),
        _ => k.to_vec(),
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { m: 2, nt: 2 }
    }

    fn trunc() -> Truncation {
        Truncation { s_max: 4, grade_max: 8 }
    }

    fn mono(dims: Dims) -> Monomial {
        Monomial::unit(dims)
    }

    #[test]
    fn drift_flow_convention() {
        // h = ω p₁ + Σ i ξⱼηⱼ;  {e^{i q₁}, h} = iω e^{i q₁}, {ξ, h} = iξ.
        let d = dims();
        let mut h = FtSeries::zero(d, trunc());
        let mut p1 = mono(d);
        p1.l[0] = 1;
        h.insert(0, p1, C64::new(1.6, 0.0));
        for j in 0..d.nt {
            let mut xe = mono(d);
            xe.a[j] = 1;
            xe.b[j] = 1;
            h.insert(0, xe, C64::new(0.0, 1.0));
        }

        let mut f = FtSeries::zero(d, trunc());
        let mut eq1 = mono(d);
        eq1.k[0] = 1;
        f.insert(0, eq1.clone(), C64::new(1.0, 0.0));
        let br = f.poisson(&h).unwrap();
        let c = br.terms().next().unwrap();
        assert_eq!(c.1, &eq1);
        assert!((c.2 - C64::new(0.0, 1.6)).norm() < 1e-15);

        let mut xi0 = FtSeries::zero(d, trunc());
        let mut xm = mono(d);
        xm.a[0] = 1;
        xi0.insert(0, xm.clone(), C64::new(1.0, 0.0));
        let br = xi0.poisson(&h).unwrap();
        let c = br.terms().next().unwrap();
        assert_eq!(c.1, &xm);
        assert!((c.2 - C64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn bracket_xieta_with_xi() {
        // {ξ₀η₀, ξ₀} = −ξ₀.
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        let mut me = mono(d);
        me.a[0] = 1;
        me.b[0] = 1;
        f.insert(0, me, C64::new(1.0, 0.0));
        let mut g = FtSeries::zero(d, trunc());
        let mut mx = mono(d);
        mx.a[0] = 1;
        g.insert(0, mx.clone(), C64::new(1.0, 0.0));
        let br = f.poisson(&g).unwrap();
        let c = br.terms().next().unwrap();
        assert_eq!(c.1, &mx);
        assert!((c.2 - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn product_to_sum() {
        // (ε cos q₂)² = ε² (1/2 + cos(2q₂)/2) in the exponential basis.
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        for sign in [1i32, -1] {
            let mut m = mono(d);
            m.k[1] = sign;
            f.insert(1, m, C64::new(0.5, 0.0));
        }
        let sq = f.mul(&f).unwrap();
        let table = sq.angle_cosine_table();
        // constant 1/2 at s=2 and cos(2q₂)/2 at s=2
        assert_eq!(table.len(), 2);
        let (s0, k0, c0, _) = &table[0];
        assert_eq!((*s0, k0.as_slice()), (2, &[0, 0][..]));
        assert!((c0 - 0.5).abs() < 1e-15);
        let (s1, k1, c1, _) = &table[1];
        assert_eq!((*s1, k1.as_slice()), (2, &[0, 2][..]));
        assert!((c1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn homological_roundtrip() {
        // f = ε e^{i q₁} ξ₀, ω = 1.6 → χ = f/(2.6 i); {h, χ} = −f.
        let d = dims();
        let omega = 1.6;
        let mut h = FtSeries::zero(d, trunc());
        let mut p1 = mono(d);
        p1.l[0] = 1;
        h.insert(0, p1, C64::new(omega, 0.0));
        for j in 0..d.nt {
            let mut xe = mono(d);
            xe.a[j] = 1;
            xe.b[j] = 1;
            h.insert(0, xe, C64::new(0.0, 1.0));
        }
        let mut f = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.k[0] = 1;
        m.a[0] = 1;
        f.insert(1, m.clone(), C64::new(1.0, 0.0));
        let chi = f.solve_homological(omega, DIVISOR_FLOOR).unwrap();
        let c = chi.terms().next().unwrap().2;
        assert!((c - C64::new(1.0, 0.0) / C64::new(0.0, 2.6)).norm() < 1e-15);
        let back = h.poisson(&chi).unwrap().add(&f).unwrap();
        assert!(back.max_abs_coeff() < 1e-12);
    }

    #[test]
    fn homological_rejects_resonant() {
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.a[0] = 1;
        m.b[0] = 1; // k₁ = 0, |a| = |b| → divisor 0
        f.insert(1, m, C64::new(1.0, 0.0));
        assert!(matches!(
            f.solve_homological(1.6, DIVISOR_FLOOR),
            Err(CoreError::SmallDivisor { .. })
        ));
    }

    #[test]
    fn homological_pure_angle() {
        // f = ε e^{−i q₁} → χ = f/(−iω).
        let d = dims();
        let omega = 1.6;
        let mut f = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.k[0] = -1;
        f.insert(1, m, C64::new(1.0, 0.0));
        let chi = f.solve_homological(omega, DIVISOR_FLOOR).unwrap();
        let c = chi.terms().next().unwrap().2;
        assert!((c - C64::new(1.0, 0.0) / C64::new(0.0, -omega)).norm() < 1e-15);
    }

    #[test]
    fn involution_fixes_i_xieta() {
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.a[0] = 1;
        m.b[0] = 1;
        f.insert(0, m, C64::new(0.0, 1.0));
        let g = f.involution();
        assert!(f.sub(&g).unwrap().max_abs_coeff() < 1e-15);
    }

    #[test]
    fn involution_is_an_involution() {
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.k[0] = 2;
        m.k[1] = -1;
        m.l[1] = 1;
        m.a[0] = 2;
        m.b[1] = 1;
        f.insert(2, m, C64::new(0.7, -0.3));
        let g = f.involution().involution();
        assert!(f.sub(&g).unwrap().max_abs_coeff() < 1e-15);
    }

    #[test]
    fn translation_expands_binomially() {
        // p₁² under p₁ → p₁ + δ ε: p₁² + 2δε p₁ + δ²ε².
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.l[0] = 2;
        f.insert(0, m, C64::new(1.0, 0.0));
        let g = f.translate_p(&[0.5, 0.0], 1);
        assert_eq!(g.len(), 3);
        let pt = EvalPoint {
            q: vec![0.0, 0.0],
            p: vec![0.3, 0.0],
            xi: vec![C64::new(0.0, 0.0); 2],
            eta: vec![C64::new(0.0, 0.0); 2],
            eps: 0.1,
        };
        let expect = (0.3 + 0.5 * 0.1f64).powi(2);
        assert!((g.eval(&pt).re - expect).abs() < 1e-14);
    }

    #[test]
    fn lie_transform_zero_generator_is_identity() {
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.l[0] = 1;
        f.insert(0, m, C64::new(2.0, 0.0));
        let chi = FtSeries::zero(d, trunc());
        let g = f.lie_transform(&chi).unwrap();
        assert!(f.sub(&g).unwrap().max_abs_coeff() < 1e-15);
    }

    #[test]
    fn lie_transform_rejects_order_zero_generator() {
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        f.insert(0, mono(d), C64::new(1.0, 0.0));
        let mut chi = FtSeries::zero(d, trunc());
        let mut m = mono(d);
        m.k[0] = 1;
        chi.insert(0, m, C64::new(1.0, 0.0));
        assert!(matches!(f.lie_transform(&chi), Err(CoreError::NonPerturbativeGenerator)));
    }

    #[test]
    fn grade_buckets_partition() {
        let d = dims();
        let mut f = FtSeries::zero(d, trunc());
        let mut m1 = mono(d);
        m1.l[0] = 1;
        f.insert(0, m1, C64::new(1.0, 0.0));
        let mut m2 = mono(d);
        m2.a[0] = 1;
        m2.b[1] = 1;
        f.insert(1, m2, C64::new(0.0, 2.0));
        let mut m3 = mono(d);
        m3.k[1] = 1;
        f.insert(2, m3, C64::new(0.5, 0.0));
        let mut sum = FtSeries::zero(d, trunc());
        for s in 0..=4 {
            for g in 0..=8 {
                sum = sum.add(&f.grade_select(s, g)).unwrap();
            }
        }
        assert!(f.sub(&sum).unwrap().max_abs_coeff() < 1e-15);
    }
}
