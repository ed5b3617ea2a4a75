//! Deterministic high-dimensional limits of coupled RWM chains.
//!
//! States are scaled as (x, y, v) = (‖X‖², ‖Y‖², XᵀY)/d with time t/d and
//! step size h = l/√d. The squared-distance form replaces v by
//! s = x + y − 2v.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bvn_low, bvn_up, gaussian_integrals, std_normal_cdf, tilted_tail};

/// Correlations closer to ±1 than this use the closed forms at ρ = ±1.
pub const RHO_CROSSOVER: f64 = 1e-12;

/// Default RK4 step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Largest tolerated Cauchy-Schwarz violation before an integration fails.
const STATE_TOL: f64 = 1e-8;

/// Couplings that admit an ODE limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeKind {
    Crn,
    Reflection,
    Gcrn,
    /// The asymptotically optimal Markovian coupling.
    Optimal,
}

impl OdeKind {
    pub const ALL: [OdeKind; 4] = [OdeKind::Crn, OdeKind::Reflection, OdeKind::Gcrn, OdeKind::Optimal];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Crn => "crn",
            Self::Reflection => "reflection",
            Self::Gcrn => "gcrn",
            Self::Optimal => "optimal",
        }
    }
}

impl std::fmt::Display for OdeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crn" => Ok(Self::Crn),
            "reflection" | "refl" => Ok(Self::Reflection),
            "gcrn" => Ok(Self::Gcrn),
            "optimal" => Ok(Self::Optimal),
            other => Err(Error::Parse(format!("unknown ODE coupling {other:?}"))),
        }
    }
}

/// Scaled squared norms and inner product of a pair of chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

impl OdeState {
    pub fn new(x: f64, y: f64, v: f64) -> Result<Self> {
        let w = Self { x, y, v };
        w.validate()?;
        Ok(w)
    }

    /// State with v = ρ₀√(xy).
    pub fn from_correlation(x: f64, y: f64, rho0: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho0) {
            return Err(Error::domain(format!("initial correlation {rho0} outside [-1,1]")));
        }
        Self::new(x, y, rho0 * (x * y).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x >= 0.0 && self.y >= 0.0 && self.x.is_finite() && self.y.is_finite() && self.v.is_finite()) {
            return Err(Error::domain(format!("invalid ODE state {self:?}")));
        }
        if self.v.abs() > (self.x * self.y).sqrt() + STATE_TOL {
            return Err(Error::domain(format!("|v| > sqrt(xy) in {self:?}")));
        }
        Ok(())
    }

    /// Scaled squared distance x + y − 2v.
    pub fn s(&self) -> f64 {
        self.x + self.y - 2.0 * self.v
    }

    pub fn to_sd(&self) -> SdState {
        SdState { x: self.x, y: self.y, s: self.s() }
    }
}

/// The (x, y, s) coordinates of the squared-distance form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdState {
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

impl SdState {
    pub fn v(&self) -> f64 {
        0.5 * (self.x + self.y - self.s)
    }

    pub fn to_w(&self) -> OdeState {
        OdeState { x: self.x, y: self.y, v: self.v() }
    }
}

fn check_l(l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::domain(format!("scaling l must be positive, got {l}")));
    }
    Ok(())
}

fn check_norm(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("{name} must be non-negative, got {x}")));
    }
    Ok(())
}

/// Acceptance probability of a chain at scaled squared norm `x`:
/// Φ(−l/(2√x)) + e^{l²(x−1)/2}Φ(l/(2√x) − l√x).
pub fn acceptance_limit(x: f64, l: f64) -> Result<f64> {
    check_l(l)?;
    check_norm("x", x)?;
    if x == 0.0 {
        return Ok(tilted_tail(0.0, l));
    }
    Ok(std_normal_cdf(-l / (2.0 * x.sqrt())) + tilted_tail(x, l))
}

/// Drift of the scaled squared norm of one chain.
pub fn drift_a(x: f64, l: f64) -> Result<f64> {
    check_l(l)?;
    check_norm("x", x)?;
    if x == 0.0 {
        return Ok(tilted_tail(0.0, l));
    }
    Ok((1.0 - 2.0 * x) * tilted_tail(x, l) + std_normal_cdf(-l / (2.0 * x.sqrt())))
}

/// Limiting correlation of the gradient projections at `w`.
pub fn rho_limit(kind: OdeKind, w: &OdeState) -> Result<f64> {
    w.validate()?;
    let (x, y, v) = (w.x, w.y, w.v);
    if x == 0.0 || y == 0.0 {
        return Ok(1.0);
    }
    let sxy = (x * y).sqrt();
    let rho = match kind {
        OdeKind::Gcrn => 1.0,
        OdeKind::Crn => v / sxy,
        OdeKind::Reflection => {
            let s = w.s();
            if s <= 0.0 || x == y {
                return Ok(1.0);
            }
            (x + y) / (2.0 * sxy) - (x - y) * (x - y) / (2.0 * sxy * s)
        }
        OdeKind::Optimal => {
            return Err(Error::Unsupported("the optimal coupling has no projection correlation".into()))
        }
    };
    Ok(rho.clamp(-1.0, 1.0))
}

fn h_term(x: f64, y: f64, rho: f64, l: f64) -> f64 {
    let sx = x.sqrt();
    let b = -((x / y).sqrt() - rho) / ((1.0 - rho) * (1.0 + rho)).sqrt();
    let nb = (1.0 + b * b).sqrt();
    let a = b * l * sx;
    let u = l / (2.0 * sx) - l * sx;
    (0.5 * l * l * (x - 1.0)).exp() * bvn_low(a / nb, u, -b / nb)
}

/// g = E[1 ∧ e^{−l√x Z₁−l²/2} ∧ e^{−l√y Z₂−l²/2}] for standard normals with
/// correlation ρ.
pub fn g_value(x: f64, y: f64, rho: f64, l: f64) -> Result<f64> {
    check_l(l)?;
    if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
        return Err(Error::domain(format!("g needs x, y > 0, got ({x}, {y})")));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("correlation {rho} outside [-1,1]")));
    }
    if rho >= 1.0 - RHO_CROSSOVER {
        return Ok(gaussian_integrals(x.sqrt(), y.sqrt(), l)?.second);
    }
    if rho <= -1.0 + RHO_CROSSOVER {
        let (a, b) = (l * x.sqrt(), l * y.sqrt());
        let tail = |c: f64| (0.5 * c * c - 0.5 * l * l).exp() * std_normal_cdf(-c);
        return Ok(tail(a) + tail(b));
    }
    let up = bvn_up(l / (2.0 * x.sqrt()), l / (2.0 * y.sqrt()), rho);
    Ok(up + h_term(x, y, rho, l) + h_term(y, x, rho, l))
}

/// g under the asymptotically optimal Markovian coupling: p(x) ∧ p(y).
pub fn g_opt(x: f64, y: f64, l: f64) -> Result<f64> {
    Ok(acceptance_limit(x, l)?.min(acceptance_limit(y, l)?))
}

fn g_for(kind: OdeKind, w: &OdeState, l: f64) -> Result<f64> {
    if kind == OdeKind::Optimal {
        return g_opt(w.x, w.y, l);
    }
    if w.x == 0.0 || w.y == 0.0 {
        // A chain at the origin accepts with constant probability e^{−l²/2}.
        let a = l * w.x.max(w.y).sqrt();
        return Ok((-0.5 * l * l).exp() * (0.5 + (0.5 * a * a).exp() * std_normal_cdf(-a)));
    }
    g_value(w.x, w.y, rho_limit(kind, w)?, l)
}

/// ẇ = l²(a(x), a(y), b(x, y, v)).
pub fn drift_c(w: &OdeState, l: f64, kind: OdeKind) -> Result<OdeState> {
    check_l(l)?;
    w.validate()?;
    let l2 = l * l;
    let b = g_for(kind, w, l)? - w.v * (tilted_tail(w.x, l) + tilted_tail(w.y, l));
    Ok(OdeState { x: l2 * drift_a(w.x, l)?, y: l2 * drift_a(w.y, l)?, v: l2 * b })
}

/// Drift of the squared-distance form.
pub fn drift_sd(f: &SdState, l: f64, kind: OdeKind) -> Result<SdState> {
    let c = drift_c(&f.to_w(), l, kind)?;
    Ok(SdState { x: c.x, y: c.y, s: c.x + c.y - 2.0 * c.v })
}

/// A sampled ODE solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<OdeState>,
}

impl Trajectory {
    pub fn last(&self) -> &OdeState {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn s(&self) -> Vec<f64> {
        self.states.iter().map(OdeState::s).collect()
    }

    /// Linear interpolation of s at time `t`.
    pub fn s_at(&self, t: f64) -> f64 {
        interpolate(&self.t, t, |i| self.states[i].s())
    }

    /// Columns t, x, y, v, s.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "v", "s"]).map_err(csv_err)?;
        for (t, s) in self.t.iter().zip(&self.states) {
            w.serialize((t, s.x, s.y, s.v, s.s())).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

fn interpolate(ts: &[f64], t: f64, value: impl Fn(usize) -> f64) -> f64 {
    if t <= ts[0] {
        return value(0);
    }
    let i = ts.partition_point(|&u| u <= t);
    if i >= ts.len() {
        return value(ts.len() - 1);
    }
    let (t0, t1) = (ts[i - 1], ts[i]);
    let f = (t - t0) / (t1 - t0);
    value(i - 1) * (1.0 - f) + value(i) * f
}

fn check_span(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::domain(format!("invalid integration span t_end={t_end}, dt={dt}")));
    }
    Ok((t_end / dt).round() as usize)
}

/// Projects a state back onto the Cauchy-Schwarz set, failing if the
/// violation is larger than round-off.
fn clip(w: &mut OdeState, t: f64) -> Result<()> {
    for (name, val) in [("x", &mut w.x), ("y", &mut w.y)] {
        if *val < 0.0 {
            if *val < -STATE_TOL {
                return Err(Error::StateSpace { t, what: format!("{name} = {val} < 0") });
            }
            *val = 0.0;
        }
    }
    let bound = (w.x * w.y).sqrt();
    if w.v.abs() > bound {
        if w.v.abs() > bound + STATE_TOL {
            return Err(Error::StateSpace { t, what: format!("|v| = {} exceeds sqrt(xy) = {bound}", w.v.abs()) });
        }
        w.v = w.v.clamp(-bound, bound);
    }
    if !(w.x.is_finite() && w.y.is_finite() && w.v.is_finite()) {
        return Err(Error::StateSpace { t, what: "non-finite state".into() });
    }
    Ok(())
}

fn axpy(w: &OdeState, k: &OdeState, a: f64) -> OdeState {
    OdeState { x: w.x + a * k.x, y: w.y + a * k.y, v: w.v + a * k.v }
}

/// Classical RK4 solution of ẇ = c(w) on [0, t_end] with fixed step `dt`.
pub fn integrate_w(w0: OdeState, l: f64, kind: OdeKind, t_end: f64, dt: f64) -> Result<Trajectory> {
    check_l(l)?;
    w0.validate()?;
    let n = check_span(t_end, dt)?;
    let mut w = w0;
    clip(&mut w, 0.0)?;
    let mut t = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    t.push(0.0);
    states.push(w);
    // Intermediate stages may graze the boundary; evaluate there on the clipped state.
    let eval = |w: OdeState, time: f64| -> Result<OdeState> {
        let mut w = w;
        clip(&mut w, time)?;
        drift_c(&w, l, kind)
    };
    for i in 0..n {
        let time = i as f64 * dt;
        let k1 = eval(w, time)?;
        let k2 = eval(axpy(&w, &k1, 0.5 * dt), time)?;
        let k3 = eval(axpy(&w, &k2, 0.5 * dt), time)?;
        let k4 = eval(axpy(&w, &k3, dt), time)?;
        w = OdeState {
            x: w.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            y: w.y + dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
            v: w.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        };
        let now = (i + 1) as f64 * dt;
        clip(&mut w, now)?;
        t.push(now);
        states.push(w);
    }
    Ok(Trajectory { t, states })
}

/// RK4 solution of the squared-distance form, integrated directly in
/// (x, y, s).
pub fn integrate_sd(f0: SdState, l: f64, kind: OdeKind, t_end: f64, dt: f64) -> Result<Vec<(f64, SdState)>> {
    check_l(l)?;
    f0.to_w().validate()?;
    let n = check_span(t_end, dt)?;
    let project = |f: SdState, time: f64| -> Result<SdState> {
        let mut w = f.to_w();
        clip(&mut w, time)?;
        Ok(w.to_sd())
    };
    let mut f = project(f0, 0.0)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.0, f));
    let add = |f: &SdState, k: &SdState, a: f64| SdState { x: f.x + a * k.x, y: f.y + a * k.y, s: f.s + a * k.s };
    for i in 0..n {
        let time = i as f64 * dt;
        let k1 = drift_sd(&f, l, kind)?;
        let k2 = drift_sd(&project(add(&f, &k1, 0.5 * dt), time)?, l, kind)?;
        let k3 = drift_sd(&project(add(&f, &k2, 0.5 * dt), time)?, l, kind)?;
        let k4 = drift_sd(&project(add(&f, &k3, dt), time)?, l, kind)?;
        let next = SdState {
            x: f.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            y: f.y + dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
            s: f.s + dt / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
        };
        let now = (i + 1) as f64 * dt;
        f = project(next, now)?;
        out.push((now, f));
    }
    Ok(out)
}

/// Triplets (x_m, y_m, v_m) for m = −1, 0, 1, each normalised by z_m²d,
/// together with z₁² and z₋₁².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticalState {
    pub minus1: OdeState,
    pub zero: OdeState,
    pub one: OdeState,
    pub z1_sq: f64,
    pub zm1_sq: f64,
}

impl EllipticalState {
    /// Correlation of the gradient projections under `kind`.
    pub fn rho(&self, kind: OdeKind) -> Result<f64> {
        let (x1, y1, v1) = (self.one.x, self.one.y, self.one.v);
        if !(x1 > 0.0 && y1 > 0.0) {
            return Err(Error::ZeroGradient);
        }
        let sxy = (x1 * y1).sqrt();
        let rho = match kind {
            OdeKind::Gcrn => 1.0,
            OdeKind::Crn => v1 / sxy,
            OdeKind::Reflection => {
                let s = self.minus1.s();
                if s <= 0.0 {
                    return Ok(1.0);
                }
                let z = &self.zero;
                v1 / sxy + 2.0 * (z.x - z.v) * (z.y - z.v) / (self.z1_sq * self.zm1_sq * sxy * s)
            }
            OdeKind::Optimal => {
                return Err(Error::Unsupported("the optimal coupling has no projection correlation".into()))
            }
        };
        Ok(rho.clamp(-1.0, 1.0))
    }
}

/// Inputs of the elliptical infinitesimals for one power k of Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticalQuantities {
    pub x_k: f64,
    pub y_k: f64,
    pub v_k: f64,
    pub x1: f64,
    pub y1: f64,
    pub rho: f64,
}

/// a_k(x_k; x₁), a_k(y_k; y₁) and b_k(v_k; x₁, y₁, ρ). The expected one-step
/// changes of the Ω^k norms and inner product are these times l_k² = l²z_k².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticalDrift {
    pub a_x: f64,
    pub a_y: f64,
    pub b: f64,
}

pub fn elliptical_infinitesimal(q: &EllipticalQuantities, l1: f64) -> Result<EllipticalDrift> {
    check_l(l1)?;
    if !(q.x1 > 0.0 && q.y1 > 0.0) {
        return Err(Error::domain(format!("x1, y1 must be positive, got ({}, {})", q.x1, q.y1)));
    }
    let (kx, ky) = (tilted_tail(q.x1, l1), tilted_tail(q.y1, l1));
    let a = |xk: f64, x1: f64, k: f64| (1.0 - 2.0 * xk) * k + std_normal_cdf(-l1 / (2.0 * x1.sqrt()));
    Ok(EllipticalDrift {
        a_x: a(q.x_k, q.x1, kx),
        a_y: a(q.y_k, q.y1, ky),
        b: g_value(q.x1, q.y1, q.rho, l1)? - q.v_k * (kx + ky),
    })
}

/// Per-block scaled statistics for Σ = diag(1, σ², 1, σ², …): block 0 holds
/// the unit-variance coordinates and block 1 the others. Each entry is
/// normalised by d/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub r: [f64; 2],
}

impl BlockState {
    /// Both blocks at the same scaled state.
    pub fn uniform(w: &OdeState) -> Self {
        Self { p: [w.x; 2], q: [w.y; 2], r: [w.v; 2] }
    }

    fn validate(&self) -> Result<()> {
        for j in 0..2 {
            OdeState { x: self.p[j], y: self.q[j], v: self.r[j] }.validate()?;
        }
        Ok(())
    }

    /// ‖X − Y‖²/tr Σ, which equals 2 for independent stationary chains.
    pub fn scaled_distance(&self, sigma2: f64) -> f64 {
        let s0 = self.p[0] + self.q[0] - 2.0 * self.r[0];
        let s1 = self.p[1] + self.q[1] - 2.0 * self.r[1];
        (s0 + s1) / (1.0 + sigma2)
    }

    /// The Ω-weighted triplets; ω = 1/σ² is the second precision eigenvalue.
    pub fn elliptical(&self, omega: f64) -> EllipticalState {
        let trip = |m: i32| {
            let hi = omega.powi(m + 1);
            let norm = 1.0 + omega.powi(m);
            OdeState {
                x: (self.p[0] + hi * self.p[1]) / norm,
                y: (self.q[0] + hi * self.q[1]) / norm,
                v: (self.r[0] + hi * self.r[1]) / norm,
            }
        };
        EllipticalState {
            minus1: trip(-1),
            zero: trip(0),
            one: trip(1),
            z1_sq: 0.5 * (1.0 + omega),
            zm1_sq: 0.5 * (1.0 + 1.0 / omega),
        }
    }
}

fn check_sigma2(sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("second eigenvalue must be positive, got {sigma2}")));
    }
    Ok(1.0 / sigma2)
}

/// Block drift from the k = 0 and k = 1 infinitesimals. Needs σ² ≠ 1.
pub fn two_eigenvalue_drift(b: &BlockState, sigma2: f64, l: f64, kind: OdeKind) -> Result<BlockState> {
    check_l(l)?;
    let omega = check_sigma2(sigma2)?;
    if (omega - 1.0).abs() < 1e-12 {
        return Err(Error::domain("the block map is singular when sigma2 = 1"));
    }
    b.validate()?;
    let e = b.elliptical(omega);
    let l1 = l * e.z1_sq.sqrt();
    let g = match kind {
        OdeKind::Optimal => Some(g_opt(e.one.x, e.one.y, l1)?),
        _ => None,
    };
    let rho = match kind {
        OdeKind::Optimal => 1.0,
        k => e.rho(k)?,
    };
    let mut d = [[0.0; 3]; 2];
    for (k, trip) in [e.zero, e.one].iter().enumerate() {
        let q = EllipticalQuantities { x_k: trip.x, y_k: trip.y, v_k: trip.v, x1: e.one.x, y1: e.one.y, rho };
        let mut inf = elliptical_infinitesimal(&q, l1)?;
        if let Some(g) = g {
            inf.b = g - trip.v * (tilted_tail(e.one.x, l1) + tilted_tail(e.one.y, l1));
        }
        let lk2 = l * l * 0.5 * (1.0 + omega.powi(k as i32));
        d[k] = [lk2 * inf.a_x, lk2 * inf.a_y, lk2 * inf.b];
    }
    // D_k = Δ_0 + ω^k Δ_1, and dp_j/dt = 2Δ_j.
    let mut out = BlockState { p: [0.0; 2], q: [0.0; 2], r: [0.0; 2] };
    for c in 0..3 {
        let second = (d[1][c] - d[0][c]) / (omega - 1.0);
        let first = d[0][c] - second;
        let slot = match c {
            0 => &mut out.p,
            1 => &mut out.q,
            _ => &mut out.r,
        };
        *slot = [2.0 * first, 2.0 * second];
    }
    Ok(out)
}

/// Sampled solution of the six-dimensional block ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTrajectory {
    pub sigma2: f64,
    pub t: Vec<f64>,
    pub states: Vec<BlockState>,
}

impl BlockTrajectory {
    pub fn scaled_distance(&self) -> Vec<f64> {
        self.states.iter().map(|b| b.scaled_distance(self.sigma2)).collect()
    }

    pub fn scaled_distance_at(&self, t: f64) -> f64 {
        interpolate(&self.t, t, |i| self.states[i].scaled_distance(self.sigma2))
    }
}

/// RK4 solution of the block ODE for Σ = diag(1, σ², …). With σ² = 1 the
/// blocks must agree and the spherical ODE is used.
pub fn two_eigenvalue_ode(
    sigma2: f64,
    w0: BlockState,
    l: f64,
    kind: OdeKind,
    t_end: f64,
    dt: f64,
) -> Result<BlockTrajectory> {
    let omega = check_sigma2(sigma2)?;
    w0.validate()?;
    if (omega - 1.0).abs() < 1e-12 {
        if w0.p[0] != w0.p[1] || w0.q[0] != w0.q[1] || w0.r[0] != w0.r[1] {
            return Err(Error::domain("with sigma2 = 1 both blocks must start equal"));
        }
        let tr = integrate_w(OdeState { x: w0.p[0], y: w0.q[0], v: w0.r[0] }, l, kind, t_end, dt)?;
        return Ok(BlockTrajectory { sigma2, t: tr.t, states: tr.states.iter().map(BlockState::uniform).collect() });
    }
    let n = check_span(t_end, dt)?;
    let mut b = w0;
    let mut t = vec![0.0];
    let mut states = vec![b];
    let comb = |b: &BlockState, k: &BlockState, a: f64| {
        let f = |u: [f64; 2], v: [f64; 2]| [u[0] + a * v[0], u[1] + a * v[1]];
        BlockState { p: f(b.p, k.p), q: f(b.q, k.q), r: f(b.r, k.r) }
    };
    let clip_block = |b: &mut BlockState, time: f64| -> Result<()> {
        for j in 0..2 {
            let mut w = OdeState { x: b.p[j], y: b.q[j], v: b.r[j] };
            clip(&mut w, time)?;
            (b.p[j], b.q[j], b.r[j]) = (w.x, w.y, w.v);
        }
        Ok(())
    };
    let eval = |b: BlockState, time: f64| -> Result<BlockState> {
        let mut b = b;
        clip_block(&mut b, time)?;
        two_eigenvalue_drift(&b, sigma2, l, kind)
    };
    for i in 0..n {
        let time = i as f64 * dt;
        let k1 = eval(b, time)?;
        let k2 = eval(comb(&b, &k1, 0.5 * dt), time)?;
        let k3 = eval(comb(&b, &k2, 0.5 * dt), time)?;
        let k4 = eval(comb(&b, &k3, dt), time)?;
        let mut next = b;
        for (slot, ks) in [
            (&mut next.p, [k1.p, k2.p, k3.p, k4.p]),
            (&mut next.q, [k1.q, k2.q, k3.q, k4.q]),
            (&mut next.r, [k1.r, k2.r, k3.r, k4.r]),
        ] {
            for j in 0..2 {
                slot[j] += dt / 6.0 * (ks[0][j] + 2.0 * ks[1][j] + 2.0 * ks[2][j] + ks[3][j]);
            }
        }
        let now = (i + 1) as f64 * dt;
        clip_block(&mut next, now)?;
        b = next;
        t.push(now);
        states.push(b);
    }
    Ok(BlockTrajectory { sigma2, t, states })
}
