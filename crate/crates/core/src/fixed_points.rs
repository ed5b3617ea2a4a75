//! Long-time asymptotes of the squared distance between coupled chains.
//!
//! At stationarity of the marginals (x = y = 1) the cross term obeys
//! `dv/dt ∝ h(ρ(v)) − 2vΦ(−l/2)`, where `ρ(v)` is the gradient projection
//! correlation of the coupling. For elliptical targets `l` is the natural
//! parameter `l₁` and the reflection correlation depends on the
//! ellipticity `ε ≥ 1`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{csv_err, OdeKind};
use crate::special::{bvn_low, std_normal_cdf, GL20};

const BRACKET: (f64, f64) = (0.0, 1.0 - 1e-9);
const RATIO_PANELS: usize = 16;
const V_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub kind: OdeKind,
    pub l: f64,
    pub epsilon: f64,
    pub v_star: f64,
    pub s_inf: f64,
    pub stability: Stability,
}

/// Expected joint acceptance `E[1 ∧ e^{−lZ₁−l²/2} ∧ e^{−lZ₂−l²/2}]` for a
/// standard bivariate normal pair with correlation `rho`.
pub fn h_rho(rho: f64, l: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::domain(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::domain(format!("step size parameter must be positive, got {l}")));
    }
    let a = -0.5 * l;
    if rho == 1.0 {
        return Ok(2.0 * std_normal_cdf(a));
    }
    let r = (0.5 * (1.0 - rho)).sqrt();
    Ok(bvn_low(a, a, rho) + 2.0 * bvn_low(a, -l * r, r))
}

/// `h(ρ)/h(1)` as a one-dimensional integral in which the Gaussian tail
/// factor cancels, so it stays accurate when `h(1) = 2Φ(−l/2)` underflows.
///
/// With `a = l/2` and `κ = √((1−ρ)/(1+ρ))`,
/// `h(ρ) ∝ ∫₀^∞ e^{−au−u²/2} [Φ(−κ(a+u)) + Φ(κ(u−a))] du`.
fn h_ratio(rho: f64, l: f64) -> f64 {
    let a = 0.5 * l;
    let kappa = ((1.0 - rho) / (1.0 + rho)).sqrt();
    // e^{-au-u²/2} < e^{-40} beyond the cutoff.
    let upper = -a + (a * a + 80.0).sqrt();
    let width = upper / RATIO_PANELS as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for p in 0..RATIO_PANELS {
        let mid = (p as f64 + 0.5) * width;
        for &(w, x) in &GL20 {
            for u in [mid - 0.5 * width * x, mid + 0.5 * width * x] {
                let e = w * (-a * u - 0.5 * u * u).exp();
                den += e;
                num += e * (std_normal_cdf(-kappa * (a + u)) + std_normal_cdf(kappa * (u - a)));
            }
        }
    }
    num / den
}

/// Correlation of the gradient projections at x = y = 1.
fn rho_of_v(kind: OdeKind, v: f64, epsilon: f64) -> f64 {
    match kind {
        OdeKind::Reflection => v + (1.0 - v) / epsilon,
        _ => v,
    }
}

/// `h(ρ(v)) − 2vΦ(−l/2)`; its sign is the direction of travel of `v`.
pub fn fixed_point_residual(kind: OdeKind, v: f64, l: f64, epsilon: f64) -> Result<f64> {
    let rho = rho_of_v(kind, v, epsilon).min(1.0);
    Ok(h_rho(rho, l)? - 2.0 * v * std_normal_cdf(-0.5 * l))
}

fn validate(kind: OdeKind, l: f64, epsilon: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::domain(format!("step size parameter must be positive, got {l}")));
    }
    if !(epsilon >= 1.0) {
        return Err(Error::domain(format!("ellipticity must be at least 1, got {epsilon}")));
    }
    if kind == OdeKind::Optimal {
        return Err(Error::Unsupported("no fixed point solver for the optimal bound".into()));
    }
    Ok(())
}

/// Stable fixed point of the cross term under `kind`.
pub fn solve_fixed_point(kind: OdeKind, l: f64, epsilon: f64) -> Result<FixedPointResult> {
    validate(kind, l, epsilon)?;
    let result = |v_star: f64, stability| FixedPointResult {
        kind,
        l,
        epsilon,
        v_star,
        s_inf: 2.0 * (1.0 - v_star),
        stability,
    };
    if kind == OdeKind::Gcrn || (kind == OdeKind::Reflection && epsilon == 1.0) {
        return Ok(result(1.0, Stability::Stable));
    }
    let f = |v: f64| -> Result<f64> { Ok(h_ratio(rho_of_v(kind, v, epsilon).min(1.0), l) - v) };
    let (mut lo, mut hi) = BRACKET;
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo <= 0.0 || f_hi >= 0.0 {
        return Err(Error::NoSignChange { what: format!("{kind} fixed point at l = {l}, epsilon = {epsilon}"), lo, hi });
    }
    let mut iterations = 0;
    while hi - lo > V_TOL {
        if iterations == MAX_BISECTIONS {
            return Err(Error::NoConvergence { what: "fixed point bisection".into(), iterations });
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            lo = mid;
            hi = mid;
        } else if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v_star = 0.5 * (lo + hi);
    if v_star <= 0.0 {
        return Err(Error::NoSignChange { what: format!("{kind} fixed point underflows at l = {l}"), lo: BRACKET.0, hi: BRACKET.1 });
    }
    Ok(result(v_star, stability_at(&f, v_star)?))
}

fn stability_at(f: &impl Fn(f64) -> Result<f64>, v: f64) -> Result<Stability> {
    let step = 1e-6 * v.min(1.0 - v).max(1e-9);
    let slope = f(v + step)? - f(v - step)?;
    Ok(if slope < 0.0 { Stability::Stable } else { Stability::Unstable })
}

/// One row of an asymptote sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub l: f64,
    pub epsilon: f64,
    pub kind: OdeKind,
    pub v_star: f64,
    pub s_inf: f64,
    /// Limiting expected squared jump distance per coordinate, `2l²Φ(−l/2)`.
    pub esjd: f64,
}

/// Fixed points over the product of `ls` and `epsilons`, row-major in `ls`.
pub fn sweep_asymptotes(kind: OdeKind, ls: &[f64], epsilons: &[f64]) -> Result<Vec<SweepRow>> {
    if ls.is_empty() || epsilons.is_empty() {
        return Err(Error::domain("sweep grids must be non-empty"));
    }
    let grid: Vec<(f64, f64)> = ls.iter().flat_map(|&l| epsilons.iter().map(move |&e| (l, e))).collect();
    grid.par_iter()
        .map(|&(l, epsilon)| {
            let r = solve_fixed_point(kind, l, epsilon)?;
            Ok(SweepRow {
                l,
                epsilon,
                kind,
                v_star: r.v_star,
                s_inf: r.s_inf,
                esjd: 2.0 * l * l * std_normal_cdf(-0.5 * l),
            })
        })
        .collect()
}

/// Writes `l,epsilon,kind,v_star,s_inf,esjd`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["l", "epsilon", "kind", "v_star", "s_inf", "esjd"]).map_err(csv_err)?;
    for r in rows {
        w.serialize((r.l, r.epsilon, r.kind.name(), r.v_star, r.s_inf, r.esjd)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn phi(x: f64) -> f64 {
        std_normal_cdf(x)
    }

    #[test]
    fn h_at_one_is_twice_the_tail() {
        for l in [0.1, 1.0, 2.38, 5.0] {
            assert!((h_rho(1.0, l).unwrap() - 2.0 * phi(-0.5 * l)).abs() < 1e-15);
            // Continuity from below.
            assert!((h_rho(1.0 - 1e-12, l).unwrap() - 2.0 * phi(-0.5 * l)).abs() < 1e-6);
        }
    }

    #[test]
    fn h_at_zero_matches_monte_carlo() {
        let l = 2.38;
        let closed = phi(-0.5 * l).powi(2) + 2.0 * bvn_low(-0.5 * l, -l / 2f64.sqrt(), 1.0 / 2f64.sqrt());
        assert!((h_rho(0.0, l).unwrap() - closed).abs() < 1e-14);
        let mut rng = RngStream::new(11, 0);
        let n = 2_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let z1 = rng.normal();
            let z2 = rng.normal();
            let e = (-l * z1.max(z2) - 0.5 * l * l).exp().min(1.0);
            sum += e;
            sum2 += e * e;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - closed).abs() < 3.0 * se, "{mean} vs {closed} (se {se})");
    }

    #[test]
    fn h_matches_monte_carlo_at_correlation() {
        let (l, rho): (f64, f64) = (1.5, 0.6);
        let mut rng = RngStream::new(12, 0);
        let n = 1_000_000;
        let c = (1.0 - rho * rho).sqrt();
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let z1 = rng.normal();
            let z2 = rho * z1 + c * rng.normal();
            let e = (-l * z1.max(z2) - 0.5 * l * l).exp().min(1.0);
            sum += e;
            sum2 += e * e;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - h_rho(rho, l).unwrap()).abs() < 3.0 * se);
    }

    #[test]
    fn h_rejects_bad_input() {
        assert!(h_rho(1.1, 1.0).is_err());
        assert!(h_rho(f64::NAN, 1.0).is_err());
        assert!(h_rho(0.5, 0.0).is_err());
    }

    /// h(ρ) by quadrature over Z₁ with the Z₂ | Z₁ expectation in closed form.
    fn h_quadrature(rho: f64, l: f64) -> f64 {
        let c = -0.5 * l;
        let sd = (1.0 - rho * rho).sqrt();
        let inner = |z1: f64| {
            let mu = rho * z1;
            let m1 = (-l * z1 - 0.5 * l * l).exp().min(1.0);
            // Z₂ ≤ Z₁: the minimum is set by Z₁.
            let below = phi((z1 - mu) / sd) * m1;
            // Z₂ > Z₁: split at the acceptance boundary c.
            let flat = if z1 < c { phi((c - mu) / sd) - phi((z1 - mu) / sd) } else { 0.0 };
            let t = z1.max(c);
            let tilt = (-l * mu + 0.5 * l * l * sd * sd - 0.5 * l * l).exp() * phi((mu - l * sd * sd - t) / sd);
            crate::special::std_normal_pdf(z1) * (below + flat + tilt)
        };
        crate::special::oracle::integrate(inner, -12.0, 12.0, &[c], 400)
    }

    #[test]
    fn h_agrees_with_quadrature_and_ratio_form() {
        for l in [0.3, 1.0, 2.38, 4.0] {
            let h1 = 2.0 * phi(-0.5 * l);
            for rho in [-0.9, -0.3, 0.0, 0.4, 0.9, 0.999] {
                let h = h_rho(rho, l).unwrap();
                assert!((h - h_quadrature(rho, l)).abs() < 1e-10, "l = {l}, rho = {rho}");
                assert!((h / h1 - h_ratio(rho, l)).abs() < 1e-12, "l = {l}, rho = {rho}");
            }
        }
    }

    #[test]
    fn crn_asymptote_at_optimal_scale() {
        let l = 2.38;
        let r = solve_fixed_point(OdeKind::Crn, l, 1.0).unwrap();
        assert_eq!(r.stability, Stability::Stable);
        // The fixed point also zeroes the quadrature form of the equation.
        let res = h_quadrature(r.v_star, l) - 2.0 * r.v_star * phi(-0.5 * l);
        assert!(res.abs() < 1e-10, "{res}");
        assert!((r.s_inf - 0.923_181).abs() < 1e-6, "{}", r.s_inf);
        assert_eq!((r.s_inf * 100.0).round() / 100.0, 0.92);
        for eps in [3.0, 50.0] {
            assert_eq!(solve_fixed_point(OdeKind::Crn, l, eps).unwrap().v_star, r.v_star);
        }
    }

    #[test]
    fn gcrn_and_unit_ellipticity_reflection_contract() {
        for l in [0.01, 1.0, 2.38, 50.0] {
            for eps in [1.0, 10.0] {
                let g = solve_fixed_point(OdeKind::Gcrn, l, eps).unwrap();
                assert_eq!((g.v_star, g.s_inf, g.stability), (1.0, 0.0, Stability::Stable));
            }
            let r = solve_fixed_point(OdeKind::Reflection, l, 1.0).unwrap();
            assert_eq!((r.v_star, r.s_inf), (1.0, 0.0));
        }
    }

    #[test]
    fn root_residual_is_tiny() {
        for kind in [OdeKind::Crn, OdeKind::Reflection] {
            for (l, eps) in [(0.5, 1.1), (2.38, 2.0), (2.38, 50.0), (5.0, 4.0)] {
                let r = solve_fixed_point(kind, l, eps).unwrap();
                let res = fixed_point_residual(kind, r.v_star, l, eps).unwrap();
                assert!(res.abs() <= 1e-12, "{kind} {l} {eps}: {res}");
                assert_eq!(r.stability, Stability::Stable);
            }
        }
    }

    #[test]
    fn residual_slope_blows_up_near_one() {
        for kind in [OdeKind::Crn, OdeKind::Reflection] {
            let mut prev = f64::NEG_INFINITY;
            for k in 2..=6 {
                let v = 1.0 - 10f64.powi(-k);
                let dv = 1e-3 * (1.0 - v);
                let lhs = |v| h_rho(rho_of_v(kind, v, 4.0), 2.38).unwrap();
                let slope = (lhs(v + dv) - lhs(v - dv)) / (2.0 * dv);
                assert!(slope > prev, "{kind} k = {k}: {slope} <= {prev}");
                prev = slope;
            }
            assert!(prev > 10.0);
        }
    }

    #[test]
    fn v_one_is_unstable_for_crn() {
        // Just below 1 the residual is negative, so v drifts away from 1.
        let f = fixed_point_residual(OdeKind::Crn, 1.0 - 1e-8, 2.38, 1.0).unwrap();
        assert!(f < 0.0);
    }

    #[test]
    fn reflection_ordering_and_epsilon_limits() {
        for l in [0.5, 1.0, 2.38, 5.0] {
            let crn = solve_fixed_point(OdeKind::Crn, l, 1.0).unwrap().v_star;
            let mut prev = 1.0;
            for eps in [1.1, 1.5, 2.0, 5.0, 10.0, 50.0] {
                let v = solve_fixed_point(OdeKind::Reflection, l, eps).unwrap().v_star;
                assert!(crn < v && v < 1.0, "l = {l}, eps = {eps}: {crn} {v}");
                assert!(v < prev);
                prev = v;
            }
            let far = solve_fixed_point(OdeKind::Reflection, l, 1e8).unwrap().v_star;
            assert!((far - crn).abs() < 1e-6);
        }
    }

    #[test]
    fn crn_sweep_endpoints_and_monotonicity() {
        let ls = [0.01, 0.1, 0.5, 1.0, 2.38, 5.0, 10.0, 50.0];
        let rows = sweep_asymptotes(OdeKind::Crn, &ls, &[1.0, 7.0]).unwrap();
        let by_eps = |e: f64| rows.iter().filter(|r| r.epsilon == e).map(|r| r.v_star).collect::<Vec<_>>();
        let (a, b) = (by_eps(1.0), by_eps(7.0));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[1] < w[0]), "{a:?}");
        assert!(a[0] > 0.99, "{}", a[0]);
        assert!(*a.last().unwrap() < 0.01, "{}", a.last().unwrap());
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = sweep_asymptotes(OdeKind::Reflection, &[1.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[1].l, rows[1].epsilon), (1.0, 3.0));
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "l,epsilon,kind,v_star,s_inf,esjd");
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("1.0,1.0,reflection,1.0,0.0,"));
    }

    #[test]
    fn solver_rejects_bad_input() {
        assert!(solve_fixed_point(OdeKind::Crn, 0.0, 1.0).is_err());
        assert!(solve_fixed_point(OdeKind::Reflection, 1.0, 0.5).is_err());
        assert!(matches!(solve_fixed_point(OdeKind::Optimal, 1.0, 1.0), Err(Error::Unsupported(_))));
        assert!(sweep_asymptotes(OdeKind::Crn, &[], &[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn h_increasing_in_rho(l in 0.1f64..6.0, a in -0.99f64..0.99, gap in 1e-3f64..0.5) {
            let b = (a + gap).min(1.0);
            prop_assert!(h_rho(b, l).unwrap() > h_rho(a, l).unwrap());
        }

        #[test]
        fn ordering_holds(l in 0.2f64..6.0, eps in 1.1f64..50.0) {
            let crn = solve_fixed_point(OdeKind::Crn, l, eps).unwrap();
            let refl = solve_fixed_point(OdeKind::Reflection, l, eps).unwrap();
            prop_assert!(crn.v_star < refl.v_star && refl.v_star < 1.0);
            prop_assert!((crn.s_inf - 2.0 * (1.0 - crn.v_star)).abs() < 1e-15);
            prop_assert!(crn.v_star > 0.0);
        }
    }
}
