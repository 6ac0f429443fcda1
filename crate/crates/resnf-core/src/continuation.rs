//! Critical points of the slow potential on the phase-shift torus, degenerate
//! families along Hessian kernel directions, order-by-order projections and
//! the candidate classification table.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::series::FtSeries;

pub const GRID_DENSITY: usize = 24;
/// Gradient bound satisfied by every returned critical point.
pub const GRAD_TOL: f64 = 1e-10;
pub const MERGE_TOL: f64 = 1e-8;
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Relative threshold below which a Hessian eigenvalue counts as kernel.
pub const KERNEL_TOL: f64 = 1e-6;
/// A projection with max |g| below this is reported inconclusive.
pub const PROJECTION_TOL: f64 = 1e-10;
/// Graded coefficient threshold for breaking/resolving a kernel direction.
const GRADED_TOL: f64 = 1e-8;

const TAU: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

/// Real trigonometric polynomial on T^{m-1}.
#[derive(Debug, Clone)]
pub struct TrigPoly {
    pub m1: usize,
    /// (harmonic, cosine coefficient, sine coefficient)
    pub terms: Vec<(Vec<i32>, f64, f64)>,
}

impl TrigPoly {
    pub fn zero(m1: usize) -> Self {
        TrigPoly { m1, terms: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(_, c, s)| c.abs() < 1e-12 && s.abs() < 1e-12)
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(k, c, s)| {
                let ph: f64 = k.iter().zip(q).map(|(&ki, &qi)| ki as f64 * qi).sum();
                c * ph.cos() + s * ph.sin()
            })
            .sum()
    }

    pub fn grad(&self, q: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.m1);
        for (k, c, s) in &self.terms {
            let ph: f64 = k.iter().zip(q).map(|(&ki, &qi)| ki as f64 * qi).sum();
            let d = -c * ph.sin() + s * ph.cos();
            for i in 0..self.m1 {
                g[i] += k[i] as f64 * d;
            }
        }
        g
    }

    pub fn hess(&self, q: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m1, self.m1);
        for (k, c, s) in &self.terms {
            let ph: f64 = k.iter().zip(q).map(|(&ki, &qi)| ki as f64 * qi).sum();
            let d2 = -(c * ph.cos() + s * ph.sin());
            for i in 0..self.m1 {
                for j in 0..self.m1 {
                    h[(i, j)] += (k[i] * k[j]) as f64 * d2;
                }
            }
        }
        h
    }

    /// Keep only the listed axes; the dropped ones must be absent from every
    /// harmonic.
    pub fn restrict(&self, keep: &[usize]) -> TrigPoly {
        let terms = self
            .terms
            .iter()
            .map(|(k, c, s)| {
                debug_assert!(k
                    .iter()
                    .enumerate()
                    .all(|(i, &ki)| keep.contains(&i) || ki == 0));
                (keep.iter().map(|&i| k[i]).collect(), *c, *s)
            })
            .collect();
        TrigPoly { m1: keep.len(), terms }
    }
}

/// Per-order slow potential: `orders[s-1]` is the ε^s angular part.
#[derive(Debug, Clone)]
pub struct SlowPotential {
    pub m1: usize,
    pub orders: Vec<TrigPoly>,
}

impl SlowPotential {
    /// Split a slow angular series (grade 0, k₁ = 0) into per-order trig
    /// polynomials in the resonant angles q₂..q_m.
    pub fn from_series(z0: &FtSeries, r: u32) -> Self {
        let m1 = z0.dims().m - 1;
        let mut orders = vec![TrigPoly::zero(m1); r as usize];
        for (s, k, c, sn) in z0.angle_cosine_table() {
            if s == 0 || s > r || k.iter().all(|&x| x == 0) {
                continue;
            }
            debug_assert_eq!(k[0], 0, "slow potential carries a fast harmonic");
            orders[(s - 1) as usize].terms.push((k[1..].to_vec(), c, sn));
        }
        SlowPotential { m1, orders }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateKind {
    Point,
    Family { direction: Vec<i64> },
    Torus { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Candidate,
    Continued,
    Broken,
    Unresolved,
}

#[derive(Debug, Clone)]
pub struct CandidateConfig {
    pub kind: CandidateKind,
    /// Base point in T^{m-1} (family member at ϑ = 0 for families).
    pub q: Vec<f64>,
    pub hessian_spectrum: Vec<f64>,
    pub degeneracy_dim: usize,
    pub status: BTreeMap<u32, Status>,
}

impl CandidateConfig {
    pub fn label(&self) -> String {
        fmt_candidate(&self.kind, &self.q)
    }
}

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub q: Vec<f64>,
    pub hessian_spectrum: Vec<f64>,
    pub kernel: Vec<DVector<f64>>,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    pub identically_flat: bool,
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU { 0.0 } else { y }
}

fn wrap_pm(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI { y - TAU } else { y }
}

fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| wrap_pm(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Newton refinement of ∇Z = 0 from a uniform grid; duplicates merged modulo
/// 2π; Hessian spectrum and kernel attached.
pub fn find_critical_points(z: &TrigPoly, grid_density: usize) -> CriticalSet {
    if z.is_zero() {
        return CriticalSet { points: Vec::new(), identically_flat: true };
    }
    let m1 = z.m1;
    let n_seeds = grid_density.pow(m1 as u32);
    let mut found: Vec<Vec<f64>> = Vec::new();
    for seed_idx in 0..n_seeds {
        let mut q: Vec<f64> = (0..m1)
            .map(|i| {
                let j = (seed_idx / grid_density.pow(i as u32)) % grid_density;
                TAU * j as f64 / grid_density as f64
            })
            .collect();
        if let Some(sol) = newton_refine(z, &mut q) {
            if !found.iter().any(|p| torus_dist(p, &sol) < MERGE_TOL) {
                found.push(sol);
            }
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let points = found
        .into_iter()
        .map(|q| {
            let (spectrum, kernel, degenerate) = hessian_data(z, &q);
            CriticalPoint { q, hessian_spectrum: spectrum, kernel, degenerate }
        })
        .collect();
    CriticalSet { points, identically_flat: false }
}

fn newton_refine(z: &TrigPoly, q: &mut Vec<f64>) -> Option<Vec<f64>> {
    let mut g = z.grad(q);
    for _ in 0..200 {
        if g.norm() < 1e-12 {
            break;
        }
        let h = z.hess(q);
        let svd = h.svd(true, true);
        let cutoff = 1e-8 * svd.singular_values.max() + 1e-13;
        let step = svd.solve(&(-&g), cutoff).ok()?;
        if step.norm() < 1e-16 {
            return None;
        }
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..z.m1).map(|i| q[i] + lambda * step[i]).collect();
            let gt = z.grad(&trial);
            if gt.norm() < g.norm() {
                *q = trial;
                g = gt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    if g.norm() >= 1e-12 {
        return None;
    }
    // prefer the exact lattice point when the root sits on the π/2 grid
    let snapped: Vec<f64> = q.iter().map(|&x| wrap((x / (PI / 2.0)).round() * PI / 2.0)).collect();
    if q.iter().zip(&snapped).all(|(&a, &b)| wrap_pm(a - b).abs() < 1e-3)
        && z.grad(&snapped).norm() <= z.grad(q).norm().max(1e-13)
    {
        return Some(snapped);
    }
    Some(q.iter().map(|&x| wrap(x)).collect())
}

fn hessian_data(z: &TrigPoly, q: &[f64]) -> (Vec<f64>, Vec<DVector<f64>>, bool) {
    let h = z.hess(q);
    let eig = h.symmetric_eigen();
    let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    spectrum.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let det: f64 = eig.eigenvalues.iter().product();
    let degenerate = norm < 1e-10 || det.abs() < DEGENERACY_TOL * norm;
    let kernel = (0..z.m1)
        .filter(|&i| eig.eigenvalues[i].abs() < KERNEL_TOL * norm.max(1.0))
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (spectrum, kernel, degenerate)
}

/// Fit the smallest parallel integer vector; `None` if no small-denominator
/// fit exists.
fn integer_direction(v: &DVector<f64>) -> Option<Vec<i64>> {
    let vmax = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if vmax < 1e-12 {
        return None;
    }
    for scale in 1..=6 {
        let w: Vec<f64> = v.iter().map(|&x| x / vmax * scale as f64).collect();
        if w.iter().all(|&x| (x - x.round()).abs() < 1e-6) {
            let mut ints: Vec<i64> = w.iter().map(|&x| x.round() as i64).collect();
            let g = ints.iter().fold(0i64, |acc, &x| gcd(acc, x.abs()));
            if g == 0 {
                return None;
            }
            ints.iter_mut().for_each(|x| *x /= g);
            if ints.iter().find(|&&x| x != 0).copied().unwrap_or(0) < 0 {
                ints.iter_mut().for_each(|x| *x = -*x);
            }
            return Some(ints);
        }
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn on_family(p: &[f64], base: &[f64], dir: &[i64]) -> Option<f64> {
    // scan + refine the family parameter; affine integer families only
    let m1 = p.len();
    let dist = |theta: f64| -> f64 {
        (0..m1)
            .map(|i| wrap_pm(p[i] - base[i] - theta * dir[i] as f64).powi(2))
            .sum::<f64>()
    };
    let n = 4096;
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for j in 0..n {
        let t = TAU * j as f64 / n as f64;
        let d = dist(t);
        if d < best {
            best = d;
            best_t = t;
        }
    }
    // golden-section polish around the best sample
    let (mut lo, mut hi) = (best_t - TAU / n as f64, best_t + TAU / n as f64);
    for _ in 0..80 {
        let m1t = lo + (hi - lo) * 0.382;
        let m2t = lo + (hi - lo) * 0.618;
        if dist(m1t) < dist(m2t) { hi = m2t } else { lo = m1t }
    }
    let t = 0.5 * (lo + hi);
    if dist(t) < 1e-16 { Some(t) } else { None }
}

fn validate_family(z: &TrigPoly, base: &[f64], dir: &[i64]) -> bool {
    let hnorm_ref = 1.0;
    for j in 0..32 {
        let theta = TAU * j as f64 / 32.0;
        let p: Vec<f64> = (0..z.m1).map(|i| wrap(base[i] + theta * dir[i] as f64)).collect();
        if z.grad(&p).norm() >= GRAD_TOL {
            return false;
        }
        let h = z.hess(&p);
        let d = DVector::from_iterator(z.m1, dir.iter().map(|&x| x as f64));
        if (&h * &d).norm() / d.norm() > KERNEL_TOL * h.norm().max(hnorm_ref) {
            return false;
        }
    }
    true
}

fn canonical_family_base(base: &[f64], dir: &[i64]) -> Vec<f64> {
    // slide along the family so the pivot coordinate (first |d|=1, else first
    // nonzero) reads zero, then snap exact π/2-grid components
    let pivot = dir
        .iter()
        .position(|&d| d.abs() == 1)
        .or_else(|| dir.iter().position(|&d| d != 0));
    let mut out: Vec<f64> = base.to_vec();
    if let Some(i) = pivot {
        let theta = base[i] / dir[i] as f64;
        for (j, x) in out.iter_mut().enumerate() {
            *x = wrap(*x - theta * dir[j] as f64);
        }
    }
    for x in out.iter_mut() {
        let snap = wrap((*x / (PI / 2.0)).round() * PI / 2.0);
        if wrap_pm(*x - snap).abs() < 1e-7 {
            *x = snap;
        }
    }
    out
}

/// Kernel-direction arclength families through the degenerate critical
/// points, as affine integer families; optional externally supplied seeds are
/// validated against the same invariants.
pub fn detect_families(
    z: &TrigPoly,
    set: &CriticalSet,
    seeds: &[(Vec<f64>, Vec<i64>)],
) -> Vec<CandidateConfig> {
    let mut fams: Vec<(Vec<f64>, Vec<i64>)> = Vec::new();
    for (base, dir) in seeds {
        if validate_family(z, base, dir) {
            push_family(&mut fams, base, dir);
        }
    }
    for p in set.points.iter().filter(|p| p.degenerate) {
        if fams.iter().any(|(b, d)| on_family(&p.q, b, d).is_some()) {
            continue;
        }
        if p.kernel.len() != 1 {
            continue;
        }
        if let Some(dir) = integer_direction(&p.kernel[0]) {
            if validate_family(z, &p.q, &dir) {
                push_family(&mut fams, &p.q, &dir);
            }
        }
    }
    fams.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    fams.into_iter()
        .map(|(base, dir)| {
            let (spectrum, kernel, _) = hessian_data(z, &base);
            CandidateConfig {
                kind: CandidateKind::Family { direction: dir },
                q: base,
                hessian_spectrum: spectrum,
                degeneracy_dim: kernel.len(),
                status: BTreeMap::new(),
            }
        })
        .collect()
}

fn push_family(fams: &mut Vec<(Vec<f64>, Vec<i64>)>, base: &[f64], dir: &[i64]) {
    let cbase = canonical_family_base(base, dir);
    if !fams
        .iter()
        .any(|(b, d)| d == dir && on_family(&cbase, b, d).is_some())
    {
        fams.push((cbase, dir.to_vec()));
    }
}

#[derive(Debug, Clone)]
pub struct FamilyProjection {
    pub order_s: u32,
    pub theta: Vec<f64>,
    pub g: Vec<f64>,
    pub zeros: Vec<f64>,
    pub inconclusive: bool,
}

/// g(ϑ) = ⟨F_s(P(ϑ)), ∂ϑP⟩ with F_s the ε^s coefficient of ∇Z₀.
pub fn family_projection(
    slow: &SlowPotential,
    family: &CandidateConfig,
    s: u32,
) -> FamilyProjection {
    let dir = match &family.kind {
        CandidateKind::Family { direction } => direction.clone(),
        _ => panic!("family projection on a non-family candidate"),
    };
    let z = &slow.orders[(s - 1) as usize];
    let d = DVector::from_iterator(slow.m1, dir.iter().map(|&x| x as f64));
    let n = 256;
    let geval = |t: f64| -> f64 {
        let p: Vec<f64> = (0..slow.m1)
            .map(|i| wrap(family.q[i] + t * dir[i] as f64))
            .collect();
        z.grad(&p).dot(&d)
    };
    let theta: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
    let g: Vec<f64> = theta.iter().map(|&t| geval(t)).collect();
    let gmax = g.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let inconclusive = gmax < PROJECTION_TOL;
    let mut zeros = Vec::new();
    if !inconclusive {
        for j in 0..n {
            let (a, b) = (g[j], g[(j + 1) % n]);
            if a.abs() < 1e-13 {
                zeros.push(theta[j]);
            } else if b.abs() >= 1e-13 && a * b < 0.0 {
                let (mut lo, mut hi) = (theta[j], theta[j] + TAU / n as f64);
                for _ in 0..64 {
                    let mid = 0.5 * (lo + hi);
                    if geval(mid) * a <= 0.0 { hi = mid } else { lo = mid }
                }
                zeros.push(0.5 * (lo + hi));
            }
        }
        zeros = zeros
            .into_iter()
            .map(|t| {
                let snap = wrap((t / (PI / 2.0)).round() * PI / 2.0);
                if wrap_pm(t - snap).abs() < 1e-8 { snap } else { wrap(t) }
            })
            .collect();
        zeros.sort_by(|a, b| a.partial_cmp(b).unwrap());
        zeros.dedup_by(|a, b| wrap_pm(*a - *b).abs() < 1e-8);
    }
    FamilyProjection { order_s: s, theta, g, zeros, inconclusive }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Yes,
    No,
    Unknown,
    Blank,
}

impl Mark {
    pub fn symbol(&self) -> &'static str {
        match self {
            Mark::Yes => "yes",
            Mark::No => "no",
            Mark::Unknown => "?",
            Mark::Blank => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityMark {
    Stable,
    Unstable,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct TableRow {
    pub order: u32,
    pub label: String,
    pub continuation: Mark,
    pub stability: Mark,
}

#[derive(Debug, Clone)]
pub struct ClassificationTable {
    pub rows: Vec<TableRow>,
    pub candidates: Vec<CandidateConfig>,
}

struct Cand {
    base: Vec<f64>,           // reduced coordinates
    family_dir: Option<Vec<i64>>,
    hessian_spectrum: Vec<f64>,
    unresolved: Vec<DVector<f64>>, // reduced-space directions still degenerate
    continuation: Option<bool>,
    stability: Option<bool>,
    born: u32,
    status: BTreeMap<u32, Status>,
}

impl Cand {
    fn closed(&self) -> bool {
        match self.continuation {
            Some(false) => true,
            Some(true) => self.stability.is_some(),
            None => false,
        }
    }
}

/// Order-by-order candidate classification of the slow potential: graded
/// kernel conditions decide when degenerate candidates break, persist or
/// resolve; the stability column is supplied by the caller per (candidate,
/// order) since it requires the Floquet analysis of the full normal form.
pub fn classify(
    slow: &SlowPotential,
    r_max: u32,
    grid_density: usize,
    family_seeds: &[(Vec<f64>, Vec<i64>)],
    stability: &mut dyn FnMut(&CandidateConfig, u32) -> StabilityMark,
) -> ClassificationTable {
    let m1 = slow.m1;
    // axes absent from every harmonic generate exact subtorus families
    let active: Vec<usize> = (0..m1)
        .filter(|&i| {
            slow.orders
                .iter()
                .flat_map(|z| z.terms.iter())
                .any(|(k, c, s)| k[i] != 0 && (c.abs() > 1e-12 || s.abs() > 1e-12))
        })
        .collect();
    let free: Vec<usize> = (0..m1).filter(|i| !active.contains(i)).collect();
    let orders: Vec<TrigPoly> = slow.orders.iter().map(|z| z.restrict(&active)).collect();
    let s0 = orders.iter().position(|z| !z.is_zero()).map(|i| i as u32 + 1);

    let mut rows = Vec::new();
    let torus_orders = s0.map(|s| s.min(r_max + 1) - 1).unwrap_or(r_max);
    for r in 1..=torus_orders {
        rows.push(TableRow {
            order: r,
            label: fmt_torus(m1),
            continuation: Mark::Unknown,
            stability: Mark::Unknown,
        });
    }
    let s0 = match s0 {
        Some(s) if s <= r_max => s,
        _ => {
            return ClassificationTable { rows, candidates: Vec::new() };
        }
    };

    let to_full = |p: &[f64]| -> Vec<f64> {
        let mut q = vec![0.0; m1];
        for (j, &i) in active.iter().enumerate() {
            q[i] = p[j];
        }
        q
    };
    let public = |c: &Cand| -> CandidateConfig {
        let kind = match (&c.family_dir, free.is_empty()) {
            (Some(d), _) => {
                let mut dir = vec![0i64; m1];
                for (j, &i) in active.iter().enumerate() {
                    dir[i] = d[j];
                }
                CandidateKind::Family { direction: dir }
            }
            (None, false) => {
                let mut dir = vec![0i64; m1];
                dir[free[0]] = 1;
                CandidateKind::Family { direction: dir }
            }
            (None, true) => CandidateKind::Point,
        };
        CandidateConfig {
            kind,
            q: to_full(&c.base),
            hessian_spectrum: c.hessian_spectrum.clone(),
            degeneracy_dim: c.unresolved.len(),
            status: c.status.clone(),
        }
    };

    let mut cands: Vec<Cand> = Vec::new();
    let set = find_critical_points(&orders[(s0 - 1) as usize], grid_density);
    let reduced_seeds: Vec<(Vec<f64>, Vec<i64>)> = family_seeds
        .iter()
        .filter(|(_, d)| active.iter().any(|&i| d[i] != 0))
        .map(|(b, d)| {
            (
                active.iter().map(|&i| b[i]).collect(),
                active.iter().map(|&i| d[i]).collect(),
            )
        })
        .collect();
    let fams = detect_families(&orders[(s0 - 1) as usize], &set, &reduced_seeds);
    for p in &set.points {
        if fams.iter().any(|f| match &f.kind {
            CandidateKind::Family { direction } => on_family(&p.q, &f.q, direction).is_some(),
            _ => false,
        }) {
            continue;
        }
        cands.push(Cand {
            base: p.q.clone(),
            family_dir: None,
            hessian_spectrum: p.hessian_spectrum.clone(),
            unresolved: p.kernel.clone(),
            continuation: if p.degenerate { None } else { Some(true) },
            stability: None,
            born: s0,
            status: BTreeMap::new(),
        });
    }
    for f in fams {
        let dir = match &f.kind {
            CandidateKind::Family { direction } => direction.clone(),
            _ => unreachable!(),
        };
        cands.push(Cand {
            base: f.q.clone(),
            family_dir: Some(dir),
            hessian_spectrum: f.hessian_spectrum.clone(),
            unresolved: Vec::new(),
            continuation: None,
            stability: None,
            born: s0,
            status: BTreeMap::new(),
        });
    }

    let z_s0 = orders[(s0 - 1) as usize].clone();
    for s in s0..=r_max {
        let mut new_points: Vec<Vec<f64>> = Vec::new();
        let mut examined: Vec<usize> = Vec::new();
        let mut suppressed: Vec<usize> = Vec::new();
        for idx in 0..cands.len() {
            if cands[idx].closed() || cands[idx].born > s {
                continue;
            }
            examined.push(idx);
            if s == cands[idx].born {
                // birth order: record the initial assessment only
                update_stability(&mut cands[idx], s, &public, stability);
                let st = status_of(&cands[idx]);
                cands[idx].status.insert(s, st);
                continue;
            }
            if let Some(dir) = cands[idx].family_dir.clone() {
                let fam_red = CandidateConfig {
                    kind: CandidateKind::Family { direction: dir.clone() },
                    q: cands[idx].base.clone(),
                    hessian_spectrum: cands[idx].hessian_spectrum.clone(),
                    degeneracy_dim: 1,
                    status: BTreeMap::new(),
                };
                let red_slow = SlowPotential { m1: active.len(), orders: orders.clone() };
                let proj = family_projection(&red_slow, &fam_red, s);
                if proj.inconclusive {
                    cands[idx].status.insert(s, Status::Unresolved);
                } else {
                    cands[idx].continuation = Some(false);
                    cands[idx].status.insert(s, Status::Broken);
                    // a broken family is represented by its surviving points
                    suppressed.push(idx);
                    for &t in &proj.zeros {
                        let p: Vec<f64> = (0..active.len())
                            .map(|i| wrap(cands[idx].base[i] + t * dir[i] as f64))
                            .collect();
                        new_points.push(p);
                    }
                }
            } else {
                let p = cands[idx].base.clone();
                let u = cands[idx].unresolved.clone();
                if !u.is_empty() {
                    let zs = &orders[(s - 1) as usize];
                    let g = zs.grad(&p);
                    if u.iter().any(|v| g.dot(v).abs() > GRADED_TOL) {
                        cands[idx].continuation = Some(false);
                        cands[idx].status.insert(s, Status::Broken);
                        let st = status_of(&cands[idx]);
                        cands[idx].status.insert(s, st);
                        continue;
                    }
                    cands[idx].unresolved = resolve_directions(&u, &zs.hess(&p));
                    if cands[idx].unresolved.is_empty() {
                        cands[idx].continuation = Some(true);
                    }
                }
                update_stability(&mut cands[idx], s, &public, stability);
                let st = status_of(&cands[idx]);
                cands[idx].status.insert(s, st);
            }
        }
        // spawn candidates at the projection zeros of freshly broken families
        new_points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        new_points.dedup_by(|a, b| torus_dist(a, b) < 1e-6);
        for p in new_points {
            if cands
                .iter()
                .any(|c| c.family_dir.is_none() && torus_dist(&c.base, &p) < 1e-6)
            {
                continue;
            }
            if let Some(c) = graded_birth(&orders, &z_s0, &p, s0, s) {
                let mut c = c;
                update_stability(&mut c, s, &public, stability);
                let st = status_of(&c);
                c.status.insert(s, st);
                examined.push(cands.len());
                cands.push(c);
            }
        }
        // emit rows: carryovers in birth order, then the newborns
        examined.retain(|i| !suppressed.contains(i));
        examined.sort_by_key(|&i| (cands[i].born == s, i));
        for &i in &examined {
            let c = &cands[i];
            let continuation = match c.continuation {
                Some(true) => Mark::Yes,
                Some(false) => Mark::No,
                None => Mark::Unknown,
            };
            let stability = match (c.continuation, c.stability) {
                (Some(false), _) => Mark::Blank,
                (_, Some(true)) => Mark::Yes,
                (_, Some(false)) => Mark::No,
                _ => Mark::Unknown,
            };
            rows.push(TableRow {
                order: s,
                label: public(c).label(),
                continuation,
                stability,
            });
        }
    }
    let candidates = cands.iter().map(|c| public(c)).collect();
    ClassificationTable { rows, candidates }
}

fn status_of(c: &Cand) -> Status {
    match c.continuation {
        Some(true) => Status::Continued,
        Some(false) => Status::Broken,
        None if c.status.is_empty() => Status::Candidate,
        None => Status::Unresolved,
    }
}

fn update_stability(
    c: &mut Cand,
    s: u32,
    public: &impl Fn(&Cand) -> CandidateConfig,
    stability: &mut dyn FnMut(&CandidateConfig, u32) -> StabilityMark,
) {
    if c.continuation == Some(true) && c.stability.is_none() {
        match stability(&public(c), s) {
            StabilityMark::Stable => c.stability = Some(true),
            StabilityMark::Unstable => c.stability = Some(false),
            StabilityMark::Unknown => {}
        }
    }
}

/// Restrict the order-s Hessian to the unresolved subspace and split it into
/// resolved (nonzero eigenvalue) and still-degenerate directions.
fn resolve_directions(u: &[DVector<f64>], h: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let dim = u.len();
    let mut b = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            b[(i, j)] = u[i].dot(&(h * &u[j]));
        }
    }
    let eig = b.symmetric_eigen();
    let mut out = Vec::new();
    for i in 0..dim {
        if eig.eigenvalues[i].abs() <= GRADED_TOL {
            let mut v = DVector::zeros(u[0].len());
            for j in 0..dim {
                v += &u[j] * eig.eigenvectors[(j, i)];
            }
            out.push(v.normalize());
        }
    }
    out
}

/// Graded admission of a point spawned by a breaking family at order s:
/// kernel components of every lower-order gradient must vanish and the point
/// inherits whatever directions the intermediate orders already resolved.
fn graded_birth(
    orders: &[TrigPoly],
    z_s0: &TrigPoly,
    p: &[f64],
    s0: u32,
    s: u32,
) -> Option<Cand> {
    if z_s0.grad(p).norm() >= GRAD_TOL {
        return None;
    }
    let (spectrum, kernel, _) = hessian_data(z_s0, p);
    let mut unresolved = kernel;
    for sp in (s0 + 1)..=s {
        if unresolved.is_empty() {
            break;
        }
        let zs = &orders[(sp - 1) as usize];
        let g = zs.grad(p);
        if unresolved.iter().any(|v| g.dot(v).abs() > GRADED_TOL) {
            return None;
        }
        unresolved = resolve_directions(&unresolved, &zs.hess(p));
    }
    let continuation = if unresolved.is_empty() { Some(true) } else { None };
    Some(Cand {
        base: p.to_vec(),
        family_dir: None,
        hessian_spectrum: spectrum,
        unresolved,
        continuation,
        stability: None,
        born: s,
        status: BTreeMap::new(),
    })
}

fn fmt_torus(m1: usize) -> String {
    if m1 == 1 {
        "ϑ ∈ T".to_string()
    } else {
        let vars: Vec<String> = (1..=m1).map(|i| format!("ϑ{}", i)).collect();
        format!("({}) ∈ T^{}", vars.join(", "), m1)
    }
}

fn fmt_angle(x: f64) -> String {
    let half_pi = PI / 2.0;
    let k = (x / half_pi).round();
    if (x - k * half_pi).abs() < 1e-6 {
        match k.rem_euclid(4.0) as i64 {
            0 => "0".to_string(),
            1 => "π/2".to_string(),
            2 => "π".to_string(),
            _ => "3π/2".to_string(),
        }
    } else {
        format!("{:.6}", x)
    }
}

fn fmt_candidate(kind: &CandidateKind, q: &[f64]) -> String {
    match kind {
        CandidateKind::Torus { dim } => fmt_torus(*dim),
        CandidateKind::Point => {
            let comps: Vec<String> = q.iter().map(|&x| fmt_angle(x)).collect();
            if comps.len() == 1 { comps[0].clone() } else { format!("({})", comps.join(", ")) }
        }
        CandidateKind::Family { direction } => {
            let comps: Vec<String> = q
                .iter()
                .zip(direction)
                .map(|(&b, &d)| {
                    let var = match d {
                        0 => return fmt_angle(b),
                        1 => "ϑ".to_string(),
                        -1 => "−ϑ".to_string(),
                        n => format!("{}ϑ", n).replace('-', "−"),
                    };
                    if b.abs() < 1e-9 {
                        var
                    } else {
                        format!("{}+{}", var, fmt_angle(b))
                    }
                })
                .collect();
            format!("({}) ∈ T", comps.join(", "))
        }
    }
}
