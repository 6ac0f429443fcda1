//! High-accuracy flow of the full lattice Hamiltonian, the period map Υ,
//! damped-Newton refinement to true periodic orbits, and the ε-grid scaling
//! fits feeding the continuation theorem hypotheses.

use nalgebra::{DMatrix, DVector};
use ode_solvers::dop853::Dop853;
use ode_solvers::dop_shared::OutputType;

use crate::error::CoreError;
use crate::model::LocalMap;
use crate::normal_form::{LocalState, NormalFormResult};
use crate::realpoly::HamiltonianField;
use crate::series::C64;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Copy, Debug)]
pub struct FlowConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub method_order: u32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { rel_tol: 1e-12, abs_tol: 1e-14, max_step: f64::INFINITY, method_order: 8 }
    }
}

struct FieldSys<'a> {
    field: &'a HamiltonianField,
    eps: f64,
}

impl ode_solvers::System<f64, DVector<f64>> for FieldSys<'_> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        self.field.eval(y.as_slice(), self.eps, dy.as_mut_slice());
    }
}

fn integrate<S: ode_solvers::System<f64, DVector<f64>>>(
    sys: S,
    y0: DVector<f64>,
    t: f64,
    cfg: &FlowConfig,
) -> Result<DVector<f64>, CoreError> {
    let h_max = cfg.max_step.min(t.abs());
    let mut stepper = Dop853::from_param(
        sys,
        0.0,
        t,
        t,
        y0,
        cfg.rel_tol,
        cfg.abs_tol,
        0.9,
        0.0,
        0.333,
        6.0,
        h_max,
        0.0,
        1_000_000,
        10_000,
        OutputType::Sparse,
    );
    stepper
        .integrate()
        .map_err(|e| CoreError::IntegrationFailure(e.to_string()))?;
    stepper
        .y_out()
        .last()
        .cloned()
        .ok_or_else(|| CoreError::IntegrationFailure("no output produced".into()))
}

/// Time-`t` flow of the canonical field of the original Hamiltonian.
pub fn flow(
    field: &HamiltonianField,
    x0: &[f64],
    eps: f64,
    t: f64,
    cfg: &FlowConfig,
) -> Result<Vec<f64>, CoreError> {
    if t == 0.0 {
        return Ok(x0.to_vec());
    }
    let out = integrate(FieldSys { field, eps }, DVector::from_column_slice(x0), t, cfg)?;
    Ok(out.as_slice().to_vec())
}

struct VarSys<'a> {
    field: &'a HamiltonianField,
    eps: f64,
    dim: usize,
}

impl ode_solvers::System<f64, DVector<f64>> for VarSys<'_> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let d = self.dim;
        self.field.eval(&y.as_slice()[..d], self.eps, &mut dy.as_mut_slice()[..d]);
        let jac = self.field.jacobian(&y.as_slice()[..d], self.eps);
        // Φ stored column-major after the base point; Φ̇ = J(u)Φ.
        for col in 0..d {
            let base = d + col * d;
            for row in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    let j = jac[row][k];
                    if j != 0.0 {
                        acc += j * y[base + k];
                    }
                }
                dy[base + row] = acc;
            }
        }
    }
}

/// Flow plus the Jacobian of the flow map (tangent system integrated
/// alongside the trajectory).
pub fn variational_flow(
    field: &HamiltonianField,
    x0: &[f64],
    eps: f64,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(Vec<f64>, DMatrix<f64>), CoreError> {
    let d = x0.len();
    if t == 0.0 {
        return Ok((x0.to_vec(), DMatrix::identity(d, d)));
    }
    let mut y0 = DVector::zeros(d + d * d);
    y0.as_mut_slice()[..d].copy_from_slice(x0);
    for i in 0..d {
        y0[d + i * d + i] = 1.0;
    }
    let out = integrate(VarSys { field, eps, dim: d }, y0, t, cfg)?;
    let x = out.as_slice()[..d].to_vec();
    let phi = DMatrix::from_column_slice(d, d, &out.as_slice()[d..]);
    Ok((x, phi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsilonVariant {
    /// Parameter q₁(0); rows: all q, p̂ without p̂₁, all transversals.
    Full,
    /// Parameters q₁(0) and q₂(0); p̂₂ row dropped as well.
    TwoTorus,
}

/// The period map Υ of the ORIGINAL Hamiltonian: reduced initial conditions
/// in the local chart, integrated for one period T = 2π/ω; the residual is
/// the wrapped displacement per row with the variant's rows removed.
pub struct PeriodMap<'a> {
    pub map: &'a LocalMap,
    pub field: &'a HamiltonianField,
    pub omega: f64,
    pub variant: UpsilonVariant,
    pub q1_0: f64,
    /// Only read in the TwoTorus variant.
    pub q2_0: f64,
    pub cfg: FlowConfig,
}

fn wrap_pm(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > std::f64::consts::PI { y - TAU } else { y }
}

impl PeriodMap<'_> {
    fn n_sites(&self) -> usize {
        self.map.m + self.map.nt
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    fn fixed_angles(&self) -> usize {
        match self.variant {
            UpsilonVariant::Full => 1,
            UpsilonVariant::TwoTorus => 2,
        }
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.n_sites() - self.fixed_angles()
    }

    /// Unknown layout: free slow angles, all p̂, then x_t, y_t.
    pub fn pack(&self, st: &LocalState) -> DVector<f64> {
        let m = self.map.m;
        let fixed = self.fixed_angles();
        let mut z = Vec::with_capacity(self.n_unknowns());
        z.extend_from_slice(&st.q[fixed..]);
        z.extend_from_slice(&st.p);
        let (xt, yt) = xy_from_transversal(&st.xi, &st.eta);
        z.extend_from_slice(&xt);
        z.extend_from_slice(&yt);
        debug_assert_eq!(z.len(), 2 * (m + self.map.nt) - fixed);
        DVector::from_vec(z)
    }

    /// Embed the unknown vector into the original lattice coordinates.
    pub fn embed(&self, z: &[f64]) -> Vec<f64> {
        let m = self.map.m;
        let nt = self.map.nt;
        let fixed = self.fixed_angles();
        let mut qhat = Vec::with_capacity(m);
        qhat.push(self.q1_0);
        if fixed == 2 {
            qhat.push(self.q2_0);
        }
        qhat.extend_from_slice(&z[..m - fixed]);
        let phat = &z[m - fixed..2 * m - fixed];
        let xt = &z[2 * m - fixed..2 * m - fixed + nt];
        let yt = &z[2 * m - fixed + nt..];
        self.map.to_original(&qhat, phat, xt, yt, self.n_sites())
    }

    /// Local coordinates [q̂, p̂, x_t, y_t] of an original-coordinate point.
    fn local(&self, u: &[f64]) -> Vec<f64> {
        let (q, p, xt, yt) = self.map.from_original(u, self.n_sites());
        let mut out = q;
        out.extend(p);
        out.extend(xt);
        out.extend(yt);
        out
    }

    /// Row selector: q rows are wrapped angle displacements (the drift ωT is
    /// an exact multiple of 2π per excited angle and wraps away); the p̂₁ row
    /// (and p̂₂ for TwoTorus) is dropped.
    fn select_rows(&self, delta: &[f64]) -> DVector<f64> {
        let m = self.map.m;
        let fixed = self.fixed_angles();
        let mut rows = Vec::with_capacity(delta.len() - fixed);
        for (i, &d) in delta.iter().enumerate() {
            if i < m {
                rows.push(wrap_pm(d));
            } else if i < 2 * m && i - m < fixed {
                continue; // gauge rows p̂₁ (and p̂₂)
            } else {
                rows.push(d);
            }
        }
        DVector::from_vec(rows)
    }

    /// Υ(z; ε): displacement over one period in reduced local coordinates.
    pub fn residual(&self, z: &[f64], eps: f64) -> Result<DVector<f64>, CoreError> {
        let u0 = self.embed(z);
        let ut = flow(self.field, &u0, eps, self.period(), &self.cfg)?;
        let l0 = self.local(&u0);
        let lt = self.local(&ut);
        let delta: Vec<f64> = lt.iter().zip(&l0).map(|(a, b)| a - b).collect();
        Ok(self.select_rows(&delta))
    }

    /// Residual together with M(ε) = Υ′, assembled from the variational flow
    /// and finite-difference chart derivatives.
    pub fn jacobian(&self, z: &[f64], eps: f64) -> Result<(DVector<f64>, DMatrix<f64>), CoreError> {
        let u0 = self.embed(z);
        let dim = u0.len();
        let (ut, phi) = variational_flow(self.field, &u0, eps, self.period(), &self.cfg)?;
        let l0 = self.local(&u0);
        let lt = self.local(&ut);
        let delta: Vec<f64> = lt.iter().zip(&l0).map(|(a, b)| a - b).collect();
        let res = self.select_rows(&delta);

        let nz = z.len();
        let h = 1e-6;
        // D embed: original coordinates per unknown.
        let mut de = DMatrix::zeros(dim, nz);
        let mut zp = z.to_vec();
        for j in 0..nz {
            zp[j] = z[j] + h;
            let up = self.embed(&zp);
            zp[j] = z[j] - h;
            let um = self.embed(&zp);
            zp[j] = z[j];
            for i in 0..dim {
                de[(i, j)] = (up[i] - um[i]) / (2.0 * h);
            }
        }
        // D local at both endpoints; angle rows differenced mod 2π so the
        // atan2 branch cut is harmless.
        let m = self.map.m;
        let dlocal = |u: &[f64]| -> DMatrix<f64> {
            let mut d = DMatrix::zeros(2 * self.n_sites(), dim);
            let mut uu = u.to_vec();
            for j in 0..dim {
                uu[j] = u[j] + h;
                let lp = self.local(&uu);
                uu[j] = u[j] - h;
                let lm = self.local(&uu);
                uu[j] = u[j];
                for i in 0..2 * self.n_sites() {
                    let diff = if i < m { wrap_pm(lp[i] - lm[i]) } else { lp[i] - lm[i] };
                    d[(i, j)] = diff / (2.0 * h);
                }
            }
            d
        };
        let full = dlocal(&ut) * &phi - dlocal(&u0);
        // Row reduction matching select_rows.
        let fixed = self.fixed_angles();
        let nrows = 2 * self.n_sites() - fixed;
        let mut mmat = DMatrix::zeros(nrows, nz);
        let mut r = 0;
        for i in 0..2 * self.n_sites() {
            if i >= m && i < 2 * m && i - m < fixed {
                continue;
            }
            mmat.set_row(r, &(full.row(i) * &de).row(0));
            r += 1;
        }
        Ok((res, mmat))
    }
}

/// Real transversal pair from the complexified one (inverse of the chart
/// ξ = (x−iy)/√2, η = −i(x+iy)/√2 on the real slice).
pub fn xy_from_transversal(xi: &[C64], eta: &[C64]) -> (Vec<f64>, Vec<f64>) {
    let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
    let i = C64::new(0.0, 1.0);
    let xt = xi.iter().zip(eta).map(|(&x, &e)| ((x + i * e) * inv_sqrt2).re).collect();
    let yt = xi.iter().zip(eta).map(|(&x, &e)| ((e + i * x) * inv_sqrt2).re).collect();
    (xt, yt)
}

/// Refined periodic orbit plus the ε-grid scaling evidence for the
/// continuation theorem.
#[derive(Clone, Debug)]
pub struct OrbitCertificate {
    pub qstar: Vec<f64>,
    pub eps: f64,
    pub x_po: Vec<f64>,
    pub ups_residual_initial: f64,
    pub ups_residual_final: f64,
    /// min |eigenvalue| of M(ε) at this ε.
    pub min_eig: f64,
    /// Fitted α from min |eig(M)| ~ ε^α over the grid, with its R².
    pub alpha_fit: f64,
    pub alpha_r2: f64,
    /// Fitted slope of the seed residual |Υ| over the grid; ≈ r+1.
    pub slope_fit_r1: f64,
    /// Fitted slope of |x_po − x*|; the theorem predicts r+1−α.
    pub dist_slope: f64,
    pub distance_x_po_to_xstar: f64,
    pub newton_iters: usize,
}

/// Log-spaced ε-grid over [lo, hi].
pub fn eps_log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Default ε-grid: 8 log-spaced points in [10⁻³, 10⁻²].
pub fn eps_grid() -> Vec<f64> {
    eps_log_grid(1e-3, 1e-2, 8)
}

/// Log–log least squares: returns (slope, intercept, R²).
pub fn fit_scaling(samples: &[(f64, f64)]) -> Result<(f64, f64, f64), CoreError> {
    if samples.len() < 4 {
        return Err(CoreError::InvalidSamples(format!("need ≥ 4 samples, got {}", samples.len())));
    }
    if samples.iter().any(|&(e, v)| e <= 0.0 || v <= 0.0) {
        return Err(CoreError::InvalidSamples("nonpositive sample".into()));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(e, _)| (lo.min(e), hi.max(e)));
    if hi / lo < 9.99 {
        return Err(CoreError::InvalidSamples("samples span less than a decade".into()));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|&(e, _)| e.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, v)| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r2))
}

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_TOL: f64 = 1e-11;
/// A stalled line search is still accepted below this residual; the floor is
/// set by the integrator accuracy over one period, not by Newton.
const NEWTON_STALL_TOL: f64 = 1e-10;

fn newton_refine(
    pm: &PeriodMap<'_>,
    z0: &DVector<f64>,
    eps: f64,
) -> Result<(DVector<f64>, f64, f64, usize), CoreError> {
    let mut z = z0.clone();
    let (mut res, mut mmat) = pm.jacobian(z.as_slice(), eps)?;
    let initial = res.amax();
    let mut min_eig_at_sol = min_abs_eig(&mmat);
    let mut iters = 0;
    while res.amax() > NEWTON_TOL && iters < NEWTON_MAX_ITERS {
        let dz = mmat
            .clone()
            .lu()
            .solve(&res)
            .ok_or_else(|| CoreError::HypothesisFailure("M(ε) is singular".into()))?;
        // damped step: halve until the residual decreases
        let base = res.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..25 {
            let zt = &z - &dz * lambda;
            let rt = pm.residual(zt.as_slice(), eps)?;
            if rt.norm() < base {
                accepted = Some(zt);
                break;
            }
            lambda *= 0.5;
        }
        let Some(zt) = accepted else {
            if res.amax() < NEWTON_STALL_TOL {
                break;
            }
            return Err(CoreError::NewtonDivergence { residual: base, iters });
        };
        z = zt;
        iters += 1;
        let (r2, m2) = pm.jacobian(z.as_slice(), eps)?;
        res = r2;
        mmat = m2;
        min_eig_at_sol = min_abs_eig(&mmat);
    }
    if res.amax() > NEWTON_STALL_TOL {
        return Err(CoreError::NewtonDivergence { residual: res.amax(), iters });
    }
    Ok((z, initial, min_eig_at_sol, iters))
}

fn min_abs_eig(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min)
}

/// Refine a candidate over every ε in `grid`, with the α and slope fits
/// shared across the returned certificates; asserts 2α < r+1 before
/// declaring the continuation successful.
pub fn refine_grid(
    nf: &NormalFormResult,
    map: &LocalMap,
    field: &HamiltonianField,
    qstar: &[f64],
    grid: &[f64],
    r: u32,
    variant: UpsilonVariant,
    cfg: FlowConfig,
) -> Result<Vec<OrbitCertificate>, CoreError> {
    let mut eig_samples = Vec::new();
    let mut ups_samples = Vec::new();
    let mut dist_samples = Vec::new();
    let mut partial = Vec::new();
    for &e in grid {
        let seed = LocalState {
            q: std::iter::once(0.0).chain(qstar.iter().copied()).collect(),
            p: vec![0.0; map.m],
            xi: vec![C64::new(0.0, 0.0); map.nt],
            eta: vec![C64::new(0.0, 0.0); map.nt],
        };
        let st0 = nf.replay(&seed, e, true);
        let pm = PeriodMap {
            map,
            field,
            omega: nf.omega,
            variant,
            q1_0: st0.q[0],
            q2_0: if map.m > 1 { st0.q[1] } else { 0.0 },
            cfg,
        };
        let z0 = pm.pack(&st0);
        let (z, initial, min_eig, iters) = newton_refine(&pm, &z0, e)?;
        let x_seed = pm.embed(z0.as_slice());
        let x_po = pm.embed(z.as_slice());
        let dist = x_po
            .iter()
            .zip(&x_seed)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        eig_samples.push((e, min_eig));
        ups_samples.push((e, initial.max(1e-300)));
        dist_samples.push((e, dist.max(1e-300)));
        let res_final = pm.residual(z.as_slice(), e)?.amax();
        partial.push((e, x_po, initial, res_final, min_eig, dist, iters));
    }
    let (alpha_fit, _, alpha_r2) = fit_scaling(&eig_samples)?;
    let (slope_fit_r1, _, _) = fit_scaling(&ups_samples)?;
    let (dist_slope, _, _) = fit_scaling(&dist_samples)?;
    if 2.0 * alpha_fit >= (r + 1) as f64 {
        return Err(CoreError::HypothesisFailure(format!(
            "2α = {:.3} ≥ r+1 = {}",
            2.0 * alpha_fit,
            r + 1
        )));
    }
    Ok(partial
        .into_iter()
        .map(|(e, x_po, initial, res_final, min_eig, dist, iters)| OrbitCertificate {
            qstar: qstar.to_vec(),
            eps: e,
            x_po,
            ups_residual_initial: initial,
            ups_residual_final: res_final,
            min_eig,
            alpha_fit,
            alpha_r2,
            slope_fit_r1,
            dist_slope,
            distance_x_po_to_xstar: dist,
            newton_iters: iters,
        })
        .collect())
}

/// Refine a candidate at a single `eps`, running the whole ε-grid for the
/// scaling fits.
pub fn refine_orbit(
    nf: &NormalFormResult,
    map: &LocalMap,
    field: &HamiltonianField,
    qstar: &[f64],
    eps: f64,
    r: u32,
    variant: UpsilonVariant,
    cfg: FlowConfig,
) -> Result<OrbitCertificate, CoreError> {
    let mut grid = eps_grid();
    if !grid.iter().any(|&e| (e - eps).abs() < 1e-15) {
        grid.push(eps);
    }
    let certs = refine_grid(nf, map, field, qstar, &grid, r, variant, cfg)?;
    Ok(certs
        .into_iter()
        .find(|c| (c.eps - eps).abs() < 1e-15)
        .expect("requested eps is in the grid"))
}
