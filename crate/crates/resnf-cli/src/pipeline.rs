//! Orchestration shared by the subcommands: model assembly, classification
//! with the Floquet stability column wired in, orbit refinement over the
//! ε-grid, and trajectory tracing.

use std::collections::BTreeMap;

use anyhow::Result;
use resnf_core::continuation::{
    classify, CandidateConfig, CandidateKind, ClassificationTable, SlowPotential, StabilityMark,
    Status,
};
use resnf_core::dynamics::{flow, refine_grid, UpsilonVariant};
use resnf_core::model::{build_chart, build_hamiltonian, to_local_form, LocalMap, ResonantChart};
use resnf_core::normal_form::{effective_z0, normalize, LocalState, NormalFormResult};
use resnf_core::realpoly::HamiltonianField;
use resnf_core::series::{C64, FtSeries, Truncation};
use resnf_core::stability::{floquet_family, FloquetData, Verdict};
use resnf_core::{CoreError, ModelSpec, OrbitCertificate};

use crate::config::RunConfig;

pub struct Ctx {
    pub spec: ModelSpec,
    pub chart: ResonantChart,
    pub map: LocalMap,
    pub field: HamiltonianField,
}

impl Ctx {
    pub fn build(cfg: &RunConfig) -> Result<Ctx, CoreError> {
        let spec = cfg.model.clone();
        spec.validate()?;
        let chart = build_chart(&spec)?;
        let map = LocalMap::new(&spec, &chart);
        let field = HamiltonianField::new(&build_hamiltonian(&spec)?);
        Ok(Ctx { spec, chart, map, field })
    }

    pub fn local(&self, r: u32, grade_max: u32) -> Result<FtSeries, CoreError> {
        to_local_form(&self.spec, &self.chart, Truncation { s_max: r + 1, grade_max })
    }

    pub fn normal_form(
        &self,
        r: u32,
        grade_max: u32,
        qstar: &[f64],
    ) -> Result<NormalFormResult, CoreError> {
        normalize(&self.local(r, grade_max)?, r, qstar)
    }

    pub fn slow_potential(&self, r: u32, grade_max: u32) -> Result<SlowPotential, CoreError> {
        let z0 = effective_z0(&self.local(r, grade_max)?, r)?;
        Ok(SlowPotential::from_series(&z0, r))
    }
}

/// Stability verdict for an isolated candidate: normalize at its phase
/// configuration and read the internal Floquet exponents; α is taken as the
/// largest fitted exponent power (the softest multiplier branch).
pub fn candidate_stability(ctx: &Ctx, cfg: &RunConfig, cand: &CandidateConfig, s: u32) -> StabilityMark {
    let zero_pairs = match zero_pairs_for(&ctx.spec, &cand.kind) {
        Some(z) => z,
        None => return StabilityMark::Unknown,
    };
    let nf = match ctx.normal_form(s, cfg.normal_form.grade_max, &cand.q) {
        Ok(nf) => nf,
        Err(_) => return StabilityMark::Unknown,
    };
    match floquet_family(&nf, s, f64::NAN, zero_pairs) {
        Ok(data) => match data.verdict {
            Verdict::Stable => StabilityMark::Stable,
            Verdict::Unstable => StabilityMark::Unstable,
            Verdict::Indeterminate => StabilityMark::Unknown,
        },
        Err(_) => StabilityMark::Unknown,
    }
}

/// Expected unit-multiplier pairs: one from the gauge drift, plus one per
/// family direction when the gauge subtorus absorbs the free phase (k ≠ 1
/// resonances).  Family candidates of fully 1:…:1 models are degenerate
/// circles of orbits and get no verdict here.
fn zero_pairs_for(spec: &ModelSpec, kind: &CandidateKind) -> Option<usize> {
    match kind {
        CandidateKind::Point => Some(1),
        CandidateKind::Family { .. } => {
            if spec.resonance.iter().all(|&k| k == 1) {
                None
            } else {
                Some(2)
            }
        }
        CandidateKind::Torus { .. } => None,
    }
}

pub fn classification(cfg: &RunConfig, ctx: &Ctx, with_stability: bool) -> Result<ClassificationTable, CoreError> {
    let r = cfg.normal_form.order;
    let slow = ctx.slow_potential(r, cfg.normal_form.grade_max)?;
    let mut stab = |cand: &CandidateConfig, s: u32| -> StabilityMark {
        if with_stability {
            candidate_stability(ctx, cfg, cand, s)
        } else {
            StabilityMark::Unknown
        }
    };
    Ok(classify(
        &slow,
        r,
        cfg.continuation.grid_density,
        &cfg.continuation.family_seeds,
        &mut stab,
    ))
}

/// Candidates continued at the final order, in table order.
pub fn continued_candidates(table: &ClassificationTable, r: u32) -> Vec<&CandidateConfig> {
    table
        .candidates
        .iter()
        .filter(|c| c.status.get(&r).copied() == Some(Status::Continued))
        .collect()
}

pub fn upsilon_variant(spec: &ModelSpec) -> UpsilonVariant {
    if spec.resonance.iter().all(|&k| k == 1) {
        UpsilonVariant::Full
    } else {
        UpsilonVariant::TwoTorus
    }
}

pub struct RefinedCandidate {
    pub label: String,
    pub qstar: Vec<f64>,
    pub zero_pairs: usize,
    pub certificates: Vec<OrbitCertificate>,
}

/// Refine every continued candidate over the configured ε-grid.  Family
/// candidates are refined at their base point when the gauge provides the
/// missing phase (k ≠ 1 resonances); otherwise they are skipped.
pub fn refine_all(cfg: &RunConfig, ctx: &Ctx, table: &ClassificationTable) -> Result<Vec<RefinedCandidate>, CoreError> {
    let r = cfg.normal_form.order;
    let variant = upsilon_variant(&ctx.spec);
    let mut out = Vec::new();
    for cand in continued_candidates(table, r) {
        if matches!(cand.kind, CandidateKind::Family { .. }) && variant == UpsilonVariant::Full {
            continue;
        }
        let nf = ctx.normal_form(r, cfg.normal_form.grade_max, &cand.q)?;
        let certs = refine_grid(
            &nf,
            &ctx.map,
            &ctx.field,
            &cand.q,
            &cfg.epsilon_grid,
            r,
            variant,
            cfg.flow_config(),
        )?;
        out.push(RefinedCandidate {
            label: cand.label(),
            qstar: cand.q.clone(),
            zero_pairs: zero_pairs_for(&ctx.spec, &cand.kind).unwrap_or(1),
            certificates: certs,
        });
    }
    Ok(out)
}

pub struct ScanRow {
    pub label: String,
    pub alpha: f64,
    pub upsilon_slope: f64,
    pub distance_slope: f64,
    pub beta: f64,
    pub verdict: String,
    pub floquet: Option<FloquetData>,
}

/// α / β / residual-slope summary per continued candidate.
pub fn scan(cfg: &RunConfig, ctx: &Ctx, table: &ClassificationTable) -> Result<Vec<ScanRow>, CoreError> {
    let r = cfg.normal_form.order;
    let refined = refine_all(cfg, ctx, table)?;
    let mut out = Vec::new();
    for rc in refined {
        let nf = ctx.normal_form(r, cfg.normal_form.grade_max, &rc.qstar)?;
        let cert = &rc.certificates[0];
        let (beta, verdict, data) = match floquet_family(&nf, r, cert.alpha_fit, rc.zero_pairs) {
            Ok(d) => (d.gap_beta_fit, format!("{:?}", d.verdict), Some(d)),
            Err(e) => (f64::NAN, format!("{e}"), None),
        };
        out.push(ScanRow {
            label: rc.label,
            alpha: cert.alpha_fit,
            upsilon_slope: cert.slope_fit_r1,
            distance_slope: cert.dist_slope,
            beta,
            verdict,
            floquet: data,
        });
    }
    Ok(out)
}

pub struct Trace {
    /// Columns: t, then x_0..x_{n-1}, y_0..y_{n-1}, then |u(t) − u_po(t)|.
    pub rows_by_order: BTreeMap<u32, Vec<Vec<f64>>>,
    pub max_residual: BTreeMap<u32, f64>,
    pub eps: f64,
}

/// Trajectories of the order-r and order-(r+1) normal-form seeds against the
/// refined orbit, sampled over `n_periods` periods.
pub fn trace(
    cfg: &RunConfig,
    ctx: &Ctx,
    qstar: &[f64],
    n_periods: usize,
    samples_per_period: usize,
) -> Result<Trace, CoreError> {
    let r = cfg.normal_form.order;
    let eps = cfg.epsilon_grid[0];
    let flow_cfg = cfg.flow_config();
    let variant = upsilon_variant(&ctx.spec);

    // refined orbit from the higher-order seed (the scaling fits inside the
    // refiner need a full grid even though only one ε is traced)
    let nf_hi = ctx.normal_form(r + 1, cfg.normal_form.grade_max, qstar)?;
    let x_po = resnf_core::dynamics::refine_orbit(
        &nf_hi, &ctx.map, &ctx.field, qstar, eps, r + 1, variant, flow_cfg,
    )?
    .x_po;

    let period = 2.0 * std::f64::consts::PI / nf_hi.omega;
    let dt = period / samples_per_period as f64;
    let n_steps = n_periods * samples_per_period;

    let mut rows_by_order = BTreeMap::new();
    let mut max_residual = BTreeMap::new();
    for order in [r, r + 1] {
        let nf = ctx.normal_form(order, cfg.normal_form.grade_max, qstar)?;
        let seed = LocalState {
            q: std::iter::once(0.0).chain(qstar.iter().copied()).collect(),
            p: vec![0.0; ctx.map.m],
            xi: vec![C64::new(0.0, 0.0); ctx.map.nt],
            eta: vec![C64::new(0.0, 0.0); ctx.map.nt],
        };
        let st0 = nf.replay(&seed, eps, true);
        let (xt, yt) = resnf_core::dynamics::xy_from_transversal(&st0.xi, &st0.eta);
        let mut u = ctx.map.to_original(&st0.q, &st0.p, &xt, &yt, ctx.spec.n_sites);
        let mut u_ref = x_po.clone();
        let mut rows = Vec::with_capacity(n_steps + 1);
        let mut worst = 0.0f64;
        for step in 0..=n_steps {
            let res = u
                .iter()
                .zip(&u_ref)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(res);
            let mut row = vec![step as f64 * dt];
            row.extend_from_slice(&u);
            row.push(res);
            rows.push(row);
            if step < n_steps {
                u = flow(&ctx.field, &u, eps, dt, &flow_cfg)?;
                u_ref = flow(&ctx.field, &u_ref, eps, dt, &flow_cfg)?;
            }
        }
        rows_by_order.insert(order, rows);
        max_residual.insert(order, worst);
    }
    Ok(Trace { rows_by_order, max_residual, eps })
}
