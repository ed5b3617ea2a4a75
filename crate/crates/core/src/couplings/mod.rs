//! Couplings of two Metropolis chains.
//!
//! All constructions share the acceptance uniform between the chains. The
//! increment couplings (CRN, reflection, GCRN and its two variants) transform a
//! single base draw; the maximal couplings can produce identical proposals and
//! hence exact meetings.

mod hughop;
mod maximal;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{accept, dot, norm};
use crate::rng::RngStream;
use crate::targets::LogDensity;

pub use hughop::{coupled_hug_hop_step, coupled_hug_step, CoupledHugHop, HugHopReport};
pub use maximal::{maximal_independent_pair, reflection_maximal_pair, DEFAULT_REJECTION_CAP};

/// Which joint construction to use for the two proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CouplingKind {
    Crn,
    Reflection,
    Gcrn,
    GcrnRotation,
    GcrnReflect,
    ReflectionMaximal,
    /// GCRN while ‖X−Y‖² ≥ δ, reflection-maximal below.
    TwoScale { delta: f64 },
    MaximalIndependent,
}

impl CouplingKind {
    pub fn two_scale(delta: f64) -> Result<Self> {
        let k = Self::TwoScale { delta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::TwoScale { delta } = self {
            if delta.is_nan() || *delta <= 0.0 {
                return Err(Error::domain(format!("two-scale threshold must be positive, got {delta}")));
            }
        }
        Ok(())
    }

    /// Couplings built by transforming one base normal vector.
    pub fn is_increment(&self) -> bool {
        matches!(self, Self::Crn | Self::Reflection | Self::Gcrn | Self::GcrnRotation | Self::GcrnReflect)
    }

    fn uses_gradients(&self) -> bool {
        matches!(self, Self::Gcrn | Self::GcrnRotation | Self::GcrnReflect | Self::TwoScale { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Crn => "crn",
            Self::Reflection => "reflection",
            Self::Gcrn => "gcrn",
            Self::GcrnRotation => "gcrn-rotation",
            Self::GcrnReflect => "gcrn-reflect",
            Self::ReflectionMaximal => "reflection-maximal",
            Self::TwoScale { .. } => "two-scale",
            Self::MaximalIndependent => "maximal-independent",
        }
    }
}

impl fmt::Display for CouplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TwoScale { delta } => write!(f, "two-scale({delta})"),
            k => f.write_str(k.name()),
        }
    }
}

impl FromStr for CouplingKind {
    type Err = Error;

    /// Accepts the kebab-case names; the two-scale coupling is written
    /// `two-scale(δ)` or `two-scale:δ`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("two-scale") {
            let arg = rest.trim_start_matches([':', '(', '=']).trim_end_matches(')');
            let delta: f64 = arg.parse().map_err(|_| Error::Parse(format!("bad two-scale threshold in {s:?}")))?;
            return Self::two_scale(delta);
        }
        Ok(match s.as_str() {
            "crn" => Self::Crn,
            "reflection" | "refl" => Self::Reflection,
            "gcrn" => Self::Gcrn,
            "gcrn-rotation" => Self::GcrnRotation,
            "gcrn-reflect" => Self::GcrnReflect,
            "reflection-maximal" => Self::ReflectionMaximal,
            "maximal-independent" => Self::MaximalIndependent,
            _ => return Err(Error::Parse(format!("unknown coupling {s:?}"))),
        })
    }
}

fn check_unit(name: &str, v: &[f64], d: usize) -> Result<()> {
    check_dim(d, v.len())?;
    let n = norm(v);
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("{name} must be a unit vector, has norm {n}")));
    }
    Ok(())
}

/// Writes the coupled increments for an increment coupling. Directions the
/// kind does not use are ignored. Degenerate directions fall back to CRN.
pub(crate) fn couple_into(
    kind: CouplingKind,
    z: &[f64],
    z1: f64,
    n_x: &[f64],
    n_y: &[f64],
    e: &[f64],
    zx: &mut [f64],
    zy: &mut [f64],
) {
    match kind {
        CouplingKind::Crn => {
            zx.copy_from_slice(z);
            zy.copy_from_slice(z);
        }
        CouplingKind::Reflection => {
            zx.copy_from_slice(z);
            let p = 2.0 * dot(e, z);
            for ((o, zi), ei) in zy.iter_mut().zip(z).zip(e) {
                *o = zi - p * ei;
            }
        }
        CouplingKind::Gcrn => {
            let px = z1 - dot(n_x, z);
            let py = z1 - dot(n_y, z);
            for i in 0..z.len() {
                zx[i] = z[i] + px * n_x[i];
                zy[i] = z[i] + py * n_y[i];
            }
        }
        CouplingKind::GcrnRotation => {
            zx.copy_from_slice(z);
            let c = dot(n_x, n_y);
            let mut w: Vec<f64> = n_y.iter().zip(n_x).map(|(b, a)| b - c * a).collect();
            let s = norm(&w);
            if s <= 1e-15 {
                if c > 0.0 {
                    zy.copy_from_slice(z);
                } else {
                    // Antipodal gradients: the plane is undefined, reflect instead.
                    let p = 2.0 * dot(n_x, z);
                    for ((o, zi), ni) in zy.iter_mut().zip(z).zip(n_x) {
                        *o = zi - p * ni;
                    }
                }
                return;
            }
            w.iter_mut().for_each(|v| *v /= s);
            let a = dot(n_x, z);
            let b = dot(&w, z);
            let cx = a * (c - 1.0) - b * s;
            let cw = a * s + b * (c - 1.0);
            for i in 0..z.len() {
                zy[i] = z[i] + cx * n_x[i] + cw * w[i];
            }
        }
        CouplingKind::GcrnReflect => {
            zx.copy_from_slice(z);
            let et: Vec<f64> = n_x.iter().zip(n_y).map(|(a, b)| a - b).collect();
            let en = norm(&et);
            if en <= 1e-15 {
                zy.copy_from_slice(z);
                return;
            }
            let p = 2.0 * dot(&et, z) / (en * en);
            for ((o, zi), ei) in zy.iter_mut().zip(z).zip(&et) {
                *o = zi - p * ei;
            }
        }
        _ => unreachable!("not an increment coupling"),
    }
}

/// Coupled proposal increments (Z_x, Z_y) from base draws (z, z₁).
pub fn couple_increments(
    kind: CouplingKind,
    z: &[f64],
    z1: f64,
    n_x: &[f64],
    n_y: &[f64],
    e: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !kind.is_increment() {
        return Err(Error::Unsupported(format!("{kind} is not an increment coupling")));
    }
    let d = z.len();
    match kind {
        CouplingKind::Reflection => check_unit("e", e, d)?,
        CouplingKind::Gcrn | CouplingKind::GcrnRotation | CouplingKind::GcrnReflect => {
            check_unit("n_x", n_x, d)?;
            check_unit("n_y", n_y, d)?;
        }
        _ => {}
    }
    let mut zx = vec![0.0; d];
    let mut zy = vec![0.0; d];
    couple_into(kind, z, z1, n_x, n_y, e, &mut zx, &mut zy);
    Ok((zx, zy))
}

/// Correlation of the gradient projections n_xᵀZ_x and n_yᵀZ_y for the
/// increment couplings at the state (x, y).
pub fn grad_projection_correlation<T: LogDensity + ?Sized>(
    kind: CouplingKind,
    x: &[f64],
    y: &[f64],
    target: &T,
) -> Result<f64> {
    check_dim(target.dim(), x.len())?;
    check_dim(x.len(), y.len())?;
    if !kind.is_increment() {
        return Err(Error::Unsupported(format!("projection correlation of {kind}")));
    }
    let mut gx = vec![0.0; x.len()];
    let mut gy = vec![0.0; x.len()];
    target.log_density_grad(x, &mut gx);
    target.log_density_grad(y, &mut gy);
    let (nx, ny) = (norm(&gx), norm(&gy));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroGradient);
    }
    if x == y {
        return Ok(1.0);
    }
    let c = dot(&gx, &gy) / (nx * ny);
    let rho = match kind {
        CouplingKind::Crn => c,
        CouplingKind::Reflection => {
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let dn = norm(&diff);
            c - 2.0 * dot(&gx, &diff) * dot(&gy, &diff) / (nx * ny * dn * dn)
        }
        _ => 1.0,
    };
    Ok(rho.clamp(-1.0, 1.0))
}

/// Positions of two coupled chains, the meeting flag and the iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledChainState {
    x: Vec<f64>,
    y: Vec<f64>,
    met: bool,
    t: u64,
}

impl CoupledChainState {
    /// A state at t = 0; the chains count as met when X₀ = Y₀.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_dim(x.len(), y.len())?;
        if x.is_empty() {
            return Err(Error::domain("empty state"));
        }
        let met = x == y;
        Ok(Self { x, y, met, t: 0 })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn met(&self) -> bool {
        self.met
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn distance_sq(&self) -> f64 {
        self.x.iter().zip(&self.y).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.x, self.y)
    }
}

/// What happened during one coupled transition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepReport {
    pub accepted_x: bool,
    pub accepted_y: bool,
    pub proposals_equal: bool,
    /// The step fell back to CRN because a gradient vanished or X = Y.
    pub fallback: bool,
}

/// Coupled RWM chains with cached log-densities and gradients.
///
/// With a single target the coupling is faithful: equal positions set the
/// meeting flag and the chains then move together. With two targets
/// (bias mode) the chains never count as met.
pub struct CoupledRwm<'a, TX: LogDensity + ?Sized, TY: LogDensity + ?Sized = TX> {
    target_x: &'a TX,
    target_y: &'a TY,
    faithful: bool,
    h: f64,
    kind: CouplingKind,
    rejection_cap: usize,
    state: CoupledChainState,
    lp_x: f64,
    lp_y: f64,
    gx: Vec<f64>,
    gy: Vec<f64>,
    grads_valid: bool,
    z: Vec<f64>,
    zx: Vec<f64>,
    zy: Vec<f64>,
    xp: Vec<f64>,
    yp: Vec<f64>,
    gxp: Vec<f64>,
    gyp: Vec<f64>,
    nx: Vec<f64>,
    ny: Vec<f64>,
    e: Vec<f64>,
}

impl<'a, T: LogDensity + ?Sized> CoupledRwm<'a, T, T> {
    /// Faithful coupling of two chains targeting `target`.
    pub fn new(target: &'a T, kind: CouplingKind, h: f64, state: CoupledChainState) -> Result<Self> {
        Self::build(target, target, true, kind, h, state)
    }
}

impl<'a, TX: LogDensity + ?Sized, TY: LogDensity + ?Sized> CoupledRwm<'a, TX, TY> {
    /// X targets `target_x` and Y targets `target_y`; meetings are disabled.
    pub fn cross_target(
        target_x: &'a TX,
        target_y: &'a TY,
        kind: CouplingKind,
        h: f64,
        state: CoupledChainState,
    ) -> Result<Self> {
        if !kind.is_increment() {
            return Err(Error::Unsupported(format!("{kind} across different targets")));
        }
        Self::build(target_x, target_y, false, kind, h, state)
    }

    fn build(
        target_x: &'a TX,
        target_y: &'a TY,
        faithful: bool,
        kind: CouplingKind,
        h: f64,
        mut state: CoupledChainState,
    ) -> Result<Self> {
        kind.validate()?;
        check_dim(target_x.dim(), state.dim())?;
        check_dim(target_y.dim(), state.dim())?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("step size must be positive, got {h}")));
        }
        if !faithful {
            state.met = false;
        }
        let d = state.dim();
        let lp_x = target_x.log_density(&state.x);
        let lp_y = target_y.log_density(&state.y);
        let v = || vec![0.0; d];
        Ok(Self {
            target_x,
            target_y,
            faithful,
            h,
            kind,
            rejection_cap: DEFAULT_REJECTION_CAP,
            state,
            lp_x,
            lp_y,
            gx: v(),
            gy: v(),
            grads_valid: false,
            z: v(),
            zx: v(),
            zy: v(),
            xp: v(),
            yp: v(),
            gxp: v(),
            gyp: v(),
            nx: v(),
            ny: v(),
            e: v(),
        })
    }

    pub fn with_rejection_cap(mut self, cap: usize) -> Self {
        self.rejection_cap = cap;
        self
    }

    pub fn state(&self) -> &CoupledChainState {
        &self.state
    }

    pub fn into_state(self) -> CoupledChainState {
        self.state
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kind(&self) -> CouplingKind {
        self.kind
    }

    fn ensure_grads(&mut self) {
        if !self.grads_valid {
            self.lp_x = self.target_x.log_density_grad(&self.state.x, &mut self.gx);
            self.lp_y = self.target_y.log_density_grad(&self.state.y, &mut self.gy);
            self.grads_valid = true;
        }
    }

    /// Advances both chains by one coupled transition.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<StepReport> {
        self.state.t += 1;
        if self.state.met {
            return Ok(self.step_met(rng));
        }
        let kind = match self.kind {
            CouplingKind::TwoScale { delta } => {
                if self.state.distance_sq() >= delta {
                    CouplingKind::Gcrn
                } else {
                    CouplingKind::ReflectionMaximal
                }
            }
            k => k,
        };
        let report = match kind {
            CouplingKind::ReflectionMaximal => self.step_reflection_maximal(rng),
            CouplingKind::MaximalIndependent => self.step_maximal_independent(rng)?,
            k => self.step_increment(k, rng),
        };
        if self.faithful && (report.accepted_x || report.accepted_y) && self.state.x == self.state.y {
            self.state.met = true;
        }
        Ok(report)
    }

    fn step_met(&mut self, rng: &mut RngStream) -> StepReport {
        rng.fill_normals(&mut self.z);
        let u = rng.uniform();
        for i in 0..self.z.len() {
            self.xp[i] = self.state.x[i] + self.h * self.z[i];
        }
        let lp = if self.kind.uses_gradients() {
            self.target_x.log_density_grad(&self.xp, &mut self.gxp)
        } else {
            self.target_x.log_density(&self.xp)
        };
        let accepted = accept(u, lp - self.lp_x);
        if accepted {
            std::mem::swap(&mut self.state.x, &mut self.xp);
            self.state.y.copy_from_slice(&self.state.x);
            self.lp_x = lp;
            self.lp_y = lp;
            if self.kind.uses_gradients() && self.grads_valid {
                std::mem::swap(&mut self.gx, &mut self.gxp);
                self.gy.copy_from_slice(&self.gx);
            } else {
                self.grads_valid = false;
            }
        }
        StepReport { accepted_x: accepted, accepted_y: accepted, proposals_equal: true, fallback: false }
    }

    fn step_increment(&mut self, kind: CouplingKind, rng: &mut RngStream) -> StepReport {
        let d = self.z.len();
        rng.fill_normals(&mut self.z);
        let needs_grad = matches!(kind, CouplingKind::Gcrn | CouplingKind::GcrnRotation | CouplingKind::GcrnReflect);
        let z1 = if needs_grad { rng.normal() } else { 0.0 };
        let u = rng.uniform();
        let mut effective = kind;
        if needs_grad {
            self.ensure_grads();
            let (ngx, ngy) = (norm(&self.gx), norm(&self.gy));
            if ngx > 0.0 && ngy > 0.0 && ngx.is_finite() && ngy.is_finite() {
                for i in 0..d {
                    self.nx[i] = self.gx[i] / ngx;
                    self.ny[i] = self.gy[i] / ngy;
                }
            } else {
                effective = CouplingKind::Crn;
            }
        } else if kind == CouplingKind::Reflection {
            let mut s = 0.0;
            for i in 0..d {
                self.e[i] = self.state.x[i] - self.state.y[i];
                s += self.e[i] * self.e[i];
            }
            if s > 0.0 {
                let s = s.sqrt();
                self.e.iter_mut().for_each(|v| *v /= s);
            } else {
                effective = CouplingKind::Crn;
            }
        }
        couple_into(effective, &self.z, z1, &self.nx, &self.ny, &self.e, &mut self.zx, &mut self.zy);
        for i in 0..d {
            self.xp[i] = self.state.x[i] + self.h * self.zx[i];
            self.yp[i] = self.state.y[i] + self.h * self.zy[i];
        }
        let mut report = self.accept_pair(u, needs_grad);
        report.fallback = effective != kind;
        report
    }

    fn step_reflection_maximal(&mut self, rng: &mut RngStream) -> StepReport {
        let equal = maximal::reflection_maximal_into(
            &self.state.x,
            &self.state.y,
            self.h,
            rng,
            &mut self.z,
            &mut self.xp,
            &mut self.yp,
        );
        let u = rng.uniform();
        let mut report = self.accept_pair(u, self.kind.uses_gradients());
        report.proposals_equal = equal;
        report
    }

    fn step_maximal_independent(&mut self, rng: &mut RngStream) -> Result<StepReport> {
        use crate::kernels::GaussianLaw;
        let qx = GaussianLaw::isotropic(self.state.x.clone(), self.h)?;
        let qy = GaussianLaw::isotropic(self.state.y.clone(), self.h)?;
        let (xp, yp, equal) = maximal_independent_pair(&qx, &qy, rng, self.rejection_cap)?;
        self.xp = xp;
        self.yp = yp;
        let u = rng.uniform();
        let mut report = self.accept_pair(u, false);
        report.proposals_equal = equal;
        Ok(report)
    }

    /// Shared-uniform Metropolis decisions for the proposals in `xp`, `yp`.
    fn accept_pair(&mut self, u: f64, with_grad: bool) -> StepReport {
        let (lp_xp, lp_yp) = if with_grad && self.grads_valid {
            (
                self.target_x.log_density_grad(&self.xp, &mut self.gxp),
                self.target_y.log_density_grad(&self.yp, &mut self.gyp),
            )
        } else {
            self.grads_valid = false;
            (self.target_x.log_density(&self.xp), self.target_y.log_density(&self.yp))
        };
        let accepted_x = accept(u, lp_xp - self.lp_x);
        let accepted_y = accept(u, lp_yp - self.lp_y);
        if accepted_x {
            std::mem::swap(&mut self.state.x, &mut self.xp);
            self.lp_x = lp_xp;
            if self.grads_valid {
                std::mem::swap(&mut self.gx, &mut self.gxp);
            }
        }
        if accepted_y {
            std::mem::swap(&mut self.state.y, &mut self.yp);
            self.lp_y = lp_yp;
            if self.grads_valid {
                std::mem::swap(&mut self.gy, &mut self.gyp);
            }
        }
        StepReport { accepted_x, accepted_y, proposals_equal: false, fallback: false }
    }
}

/// One coupled RWM transition of `state` under `kind`.
pub fn coupled_rwm_step<T: LogDensity + ?Sized>(
    state: &CoupledChainState,
    kind: CouplingKind,
    h: f64,
    target: &T,
    rng: &mut RngStream,
) -> Result<CoupledChainState> {
    let mut c = CoupledRwm::new(target, kind, h, state.clone())?;
    c.step(rng)?;
    Ok(c.into_state())
}

/// One transition of the two-scale coupling with threshold δ.
pub fn two_scale_rwm_step<T: LogDensity + ?Sized>(
    state: &CoupledChainState,
    delta: f64,
    h: f64,
    target: &T,
    rng: &mut RngStream,
) -> Result<CoupledChainState> {
    coupled_rwm_step(state, CouplingKind::two_scale(delta)?, h, target, rng)
}

/// One transition with X targeting `target_x` and Y targeting `target_y`.
pub fn cross_target_step<TX: LogDensity + ?Sized, TY: LogDensity + ?Sized>(
    state: &CoupledChainState,
    kind: CouplingKind,
    h: f64,
    target_x: &TX,
    target_y: &TY,
    rng: &mut RngStream,
) -> Result<CoupledChainState> {
    let mut c = CoupledRwm::cross_target(target_x, target_y, kind, h, state.clone())?;
    c.step(rng)?;
    Ok(c.into_state())
}

/// Cross-target transition under the GCRN coupling.
pub fn cross_target_gcrn_step<TX: LogDensity + ?Sized, TY: LogDensity + ?Sized>(
    state: &CoupledChainState,
    h: f64,
    target_x: &TX,
    target_y: &TY,
    rng: &mut RngStream,
) -> Result<CoupledChainState> {
    cross_target_step(state, CouplingKind::Gcrn, h, target_x, target_y, rng)
}
