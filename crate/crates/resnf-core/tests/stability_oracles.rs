//! Floquet oracles: closed-form internal exponents for the small lattices,
//! spectral-gap (β) scalings, verdicts, and cross-validation of the
//! normal-form multipliers against the true monodromy.

use std::f64::consts::PI;

use resnf_core::dynamics::{refine_grid, FlowConfig, UpsilonVariant};
use resnf_core::model::{build_chart, build_hamiltonian, to_local_form, LocalMap, ModelSpec};
use resnf_core::normal_form::{normalize, NormalFormResult};
use resnf_core::realpoly::HamiltonianField;
use resnf_core::series::Truncation;
use resnf_core::stability::{cross_validate, floquet, linearize, FloquetData, Verdict};

const ISTAR: f64 = 0.6;

fn small(name: &str, n: usize) -> ModelSpec {
    let mut spec = resnf_core::presets::preset(name).unwrap();
    spec.n_sites = n;
    spec
}

fn normal_form(name: &str, n: usize, r: u32, qstar: &[f64]) -> (ModelSpec, NormalFormResult) {
    let spec = small(name, n);
    spec.validate().unwrap();
    let chart = build_chart(&spec).unwrap();
    let local = to_local_form(&spec, &chart, Truncation { s_max: r + 1, grade_max: 8 }).unwrap();
    let nf = normalize(&local, r, qstar).unwrap();
    (spec, nf)
}

fn check_fits(data: &FloquetData, expected: &[(f64, f64)], imaginary: bool) {
    assert_eq!(data.exponent_fits.len(), expected.len(), "pair count");
    for (fit, &(coeff, power)) in data.exponent_fits.iter().zip(expected) {
        assert!((fit.power - power).abs() < 0.2, "power {} vs {power}", fit.power);
        assert!(
            (fit.coeff - coeff).abs() < 0.05 * coeff,
            "coeff {} vs {coeff}",
            fit.coeff
        );
        assert_eq!(fit.imaginary, imaginary, "axis of pair with coeff {coeff}");
    }
}

/// Two-site in-phase mode q* = 0: a real pair λ ≈ ±2ε, unstable.
#[test]
fn two_site_in_phase_unstable() {
    let (_, nf) = normal_form("two_site", 7, 2, &[0.0]);
    let data = floquet(&nf, 2, 1.0).unwrap();
    check_fits(&data, &[(2.0, 1.0)], false);
    assert_eq!(data.verdict, Verdict::Unstable);
    // closed form at the reference ε: λ = ±(2ε − ε³/I*²)
    let e = data.eps;
    let lam = 2.0 * e - e.powi(3) / (ISTAR * ISTAR);
    let m = data.exponents.iter().map(|l| (l.norm() - lam).abs()).fold(f64::INFINITY, f64::min);
    assert!(m < 1e-3 * lam, "{m}");
}

/// Two-site out-of-phase mode q* = π: an imaginary pair λ ≈ ±2iε, stable.
#[test]
fn two_site_out_of_phase_stable() {
    let (_, nf) = normal_form("two_site", 7, 2, &[PI]);
    let data = floquet(&nf, 2, 1.0).unwrap();
    check_fits(&data, &[(2.0, 1.0)], true);
    assert_eq!(data.verdict, Verdict::Stable);
    assert!((data.gap_beta_fit - 1.0).abs() < 0.2, "β {}", data.gap_beta_fit);
    let e = data.eps;
    let lam = 2.0 * e + e.powi(3) / (ISTAR * ISTAR);
    let m = data.exponents.iter().map(|l| (l.im.abs() - lam).abs()).fold(f64::INFINITY, f64::min);
    assert!(m < 1e-3 * lam, "{m}");
}

/// Three-site (0, π): two imaginary pairs with distinct scalings
/// 2√(I*ε) and √3 ε; stable.
#[test]
fn three_site_mixed_mode() {
    let (_, nf) = normal_form("three_site", 7, 2, &[0.0, PI]);
    let data = floquet(&nf, 2, 1.0).unwrap();
    // ranks sorted by |λ| at each ε: √3 ε is the smaller on the whole grid
    check_fits(&data, &[(3.0f64.sqrt(), 1.0), (2.0 * ISTAR.sqrt(), 0.5)], true);
    assert_eq!(data.verdict, Verdict::Stable);
}

/// Zigzag in-phase (0,0,0): three imaginary √ε pairs, two of them degenerate
/// at leading order with coefficient 2√(2I*), the third 2√I*; the
/// near-degenerate pair splits only at order ε^{3/2}, giving β ≈ 3/2.
#[test]
fn zigzag_in_phase_beta() {
    let (_, nf) = normal_form("zigzag", 13, 2, &[0.0, 0.0, 0.0]);
    let data = floquet(&nf, 2, 0.5).unwrap();
    let c2 = 2.0 * (2.0 * ISTAR).sqrt();
    let c1 = 2.0 * ISTAR.sqrt();
    check_fits(&data, &[(c1, 0.5), (c2, 0.5), (c2, 0.5)], true);
    assert!((data.gap_beta_fit - 1.5).abs() < 0.2, "β {}", data.gap_beta_fit);
    assert_eq!(data.verdict, Verdict::Stable);
}

/// Railway in-phase (0,0,0) at r = 3: degenerate pair splitting at ε^{5/2}.
#[test]
fn railway_in_phase_beta() {
    let (_, nf) = normal_form("railway", 10, 3, &[0.0, 0.0, 0.0]);
    let data = floquet(&nf, 3, 0.5).unwrap();
    assert!((data.gap_beta_fit - 2.5).abs() < 0.2, "β {}", data.gap_beta_fit);
    for fit in &data.exponent_fits {
        assert!(fit.imaginary && (fit.power - 0.5).abs() < 0.2);
    }
    assert_eq!(data.verdict, Verdict::Stable);
}

/// Quartic lattice: first effects at order ε³, exponents ~ ε^{3/2}.
#[test]
fn quartic_modes() {
    let (_, nf) = normal_form("quartic", 9, 3, &[0.0, 0.0]);
    let data = floquet(&nf, 3, 1.5).unwrap();
    check_fits(&data, &[(2.0 * ISTAR, 1.5), (2.0 * 3.0f64.sqrt() * ISTAR, 1.5)], true);
    assert_eq!(data.verdict, Verdict::Stable);

    let (_, nf) = normal_form("quartic", 9, 3, &[PI, PI]);
    let data = floquet(&nf, 3, 1.5).unwrap();
    assert_eq!(data.verdict, Verdict::Unstable);
    assert!(data.exponent_fits.iter().any(|f| !f.imaginary));
}

/// Spectral structure at a reference ε: the L11 spectrum is symmetric under
/// λ → −λ, the multipliers include the unit pair, and L22 is elliptic at
/// these orders.
#[test]
fn spectral_symmetries() {
    let (_, nf) = normal_form("three_site", 7, 2, &[0.0, PI]);
    let data = floquet(&nf, 2, 1.0).unwrap();
    for l in &data.l11_spectrum {
        let m = data
            .l11_spectrum
            .iter()
            .map(|o| (o + l).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(m < 1e-9, "spectrum not symmetric at {l}");
    }
    let units = data.multipliers.iter().filter(|mu| (*mu - 1.0).norm() < 1e-6).count();
    assert!(units >= 2, "unit pair missing");
    for l in &data.l22_spectrum {
        assert!(l.re.abs() < 1e-8, "transversal exponent off the axis: {l}");
    }

    // ε = 0: the slow block is nilpotent (all exponents vanish) and the
    // transversal block rotates.
    let blocks = linearize(&nf, &[0.0, PI], 0.0).unwrap();
    for l in blocks.l11.complex_eigenvalues().iter() {
        assert!(l.norm() < 1e-7, "{l}");
    }
    for l in blocks.l22.complex_eigenvalues().iter() {
        assert!(l.re.abs() < 1e-9 && l.norm() > 0.1, "{l}");
    }
}

/// True monodromy multipliers of the refined orbits sit in disks around the
/// normal-form approximations whose radii shrink like ε^{r+1−α}.
#[test]
fn cross_validate_three_site() {
    let r = 2;
    let qstar = [0.0, PI];
    let spec = small("three_site", 7);
    let chart = build_chart(&spec).unwrap();
    let local = to_local_form(&spec, &chart, Truncation { s_max: r + 1, grade_max: 8 }).unwrap();
    let nf = normalize(&local, r, &qstar).unwrap();
    let map = LocalMap::new(&spec, &chart);
    let field = HamiltonianField::new(&build_hamiltonian(&spec).unwrap());
    let cfg = FlowConfig::default();
    let grid: Vec<f64> = resnf_core::dynamics::eps_grid();
    let certs =
        refine_grid(&nf, &map, &field, &qstar, &grid, r, UpsilonVariant::Full, cfg.clone()).unwrap();
    let cv = cross_validate(&nf, &map, &field, &certs, &cfg).unwrap();
    assert!(cv.unit_pair_err < 1e-6, "unit pair err {}", cv.unit_pair_err);
    assert!(cv.quadruple_err < 1e-6, "quadruple err {}", cv.quadruple_err);
    let alpha = certs[0].alpha_fit;
    // the theorem radius is an upper bound; the fit may only overshoot it
    assert!(
        cv.slope > r as f64 + 1.0 - alpha - 0.3,
        "slope {} with α {alpha}",
        cv.slope
    );
    assert!(cv.max_disk_radius < 0.1, "{}", cv.max_disk_radius);
}
