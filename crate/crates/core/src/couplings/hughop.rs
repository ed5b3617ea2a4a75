use super::maximal::maximal_independent_pair;
use super::{CoupledChainState, DEFAULT_REJECTION_CAP};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{accept, hop_accept, hug_trajectory, GaussianLaw, HopParams, HugParams};
use crate::rng::RngStream;
use crate::targets::LogDensity;

/// Acceptance outcomes of one coupled Hug and Hop iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HugHopReport {
    pub hug_accepted_x: bool,
    pub hug_accepted_y: bool,
    pub hop_accepted_x: bool,
    pub hop_accepted_y: bool,
    /// The Hop proposals were identical.
    pub hop_equal: bool,
}

/// Coupled Hug and Hop chains. Hug uses common momenta, Hop switches
/// between the GCRN construction (‖X−Y‖² ≥ δ) and the maximal coupling with
/// independent residuals. Every acceptance uses one shared uniform.
pub struct CoupledHugHop<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    hug: HugParams,
    hop: HopParams,
    delta: f64,
    rejection_cap: usize,
    state: CoupledChainState,
}

impl<'a, T: LogDensity + ?Sized> CoupledHugHop<'a, T> {
    pub fn new(target: &'a T, hug: HugParams, hop: HopParams, delta: f64, state: CoupledChainState) -> Result<Self> {
        hug.validate()?;
        hop.validate()?;
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::domain(format!("Hop threshold must be positive, got {delta}")));
        }
        check_dim(target.dim(), state.dim())?;
        Ok(Self { target, hug, hop, delta, rejection_cap: DEFAULT_REJECTION_CAP, state })
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

    /// One Hug transition followed by one Hop transition.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<HugHopReport> {
        self.state.t += 1;
        let (hug_accepted_x, hug_accepted_y) = self.hug_phase(rng);
        let (hop_accepted_x, hop_accepted_y, hop_equal) = self.hop_phase(rng)?;
        if !self.state.met && self.state.x == self.state.y {
            self.state.met = true;
        }
        Ok(HugHopReport { hug_accepted_x, hug_accepted_y, hop_accepted_x, hop_accepted_y, hop_equal })
    }

    /// Only the Hug half of an iteration.
    pub fn step_hug(&mut self, rng: &mut RngStream) -> (bool, bool) {
        self.state.t += 1;
        self.hug_phase(rng)
    }

    fn hug_phase(&mut self, rng: &mut RngStream) -> (bool, bool) {
        let mut v = vec![0.0; self.state.dim()];
        rng.fill_normals(&mut v);
        let u = rng.uniform();
        let ax = hug_move(&mut self.state.x, &v, u, &self.hug, self.target);
        if self.state.met {
            self.state.y.copy_from_slice(&self.state.x);
            return (ax, ax);
        }
        let ay = hug_move(&mut self.state.y, &v, u, &self.hug, self.target);
        (ax, ay)
    }

    fn hop_phase(&mut self, rng: &mut RngStream) -> Result<(bool, bool, bool)> {
        let d = self.state.dim();
        let mut gx = vec![0.0; d];
        let mut gy = vec![0.0; d];
        let lp_x = self.target.log_density_grad(&self.state.x, &mut gx);
        let law_x = GaussianLaw::hop(&self.state.x, &gx, &self.hop).ok();
        if self.state.met {
            let (z, z1, u) = draw_base(d, rng);
            let Some(law) = law_x else { return Ok((false, false, true)) };
            let xp = law.transform(&z, z1);
            let acc = hop_accept(&self.state.x, lp_x, &law, &xp, u, &self.hop, self.target) == Some(true);
            if acc {
                self.state.x = xp;
                self.state.y.copy_from_slice(&self.state.x);
            }
            return Ok((acc, acc, true));
        }
        let lp_y = self.target.log_density_grad(&self.state.y, &mut gy);
        let law_y = GaussianLaw::hop(&self.state.y, &gy, &self.hop).ok();

        let (xp, yp, equal, u) = match (&law_x, &law_y) {
            (Some(qx), Some(qy)) if self.state.distance_sq() < self.delta => {
                let (xp, yp, equal) = maximal_independent_pair(qx, qy, rng, self.rejection_cap)?;
                (Some(xp), Some(yp), equal, rng.uniform())
            }
            _ => {
                let (z, z1, u) = draw_base(d, rng);
                (law_x.as_ref().map(|q| q.transform(&z, z1)), law_y.as_ref().map(|q| q.transform(&z, z1)), false, u)
            }
        };
        let mut ax = false;
        if let (Some(q), Some(p)) = (&law_x, xp) {
            if hop_accept(&self.state.x, lp_x, q, &p, u, &self.hop, self.target) == Some(true) {
                self.state.x = p;
                ax = true;
            }
        }
        let mut ay = false;
        if let (Some(q), Some(p)) = (&law_y, yp) {
            if hop_accept(&self.state.y, lp_y, q, &p, u, &self.hop, self.target) == Some(true) {
                self.state.y = p;
                ay = true;
            }
        }
        Ok((ax, ay, equal))
    }
}

fn draw_base(d: usize, rng: &mut RngStream) -> (Vec<f64>, f64, f64) {
    let mut z = vec![0.0; d];
    rng.fill_normals(&mut z);
    let z1 = rng.normal();
    let u = rng.uniform();
    (z, z1, u)
}

fn hug_move<T: LogDensity + ?Sized>(x: &mut Vec<f64>, v: &[f64], u: f64, hug: &HugParams, target: &T) -> bool {
    let Some(xp) = hug_trajectory(x, v, hug, target) else { return false };
    if accept(u, target.log_density(&xp) - target.log_density(x)) {
        *x = xp;
        true
    } else {
        false
    }
}

/// One Hug transition of both chains with common momenta and uniform.
pub fn coupled_hug_step<T: LogDensity + ?Sized>(
    state: &CoupledChainState,
    hug: &HugParams,
    target: &T,
    rng: &mut RngStream,
) -> Result<CoupledChainState> {
    hug.validate()?;
    check_dim(target.dim(), state.dim())?;
    let mut s = state.clone();
    s.t += 1;
    let mut v = vec![0.0; s.dim()];
    rng.fill_normals(&mut v);
    let u = rng.uniform();
    hug_move(&mut s.x, &v, u, hug, target);
    if s.met {
        s.y.copy_from_slice(&s.x);
    } else {
        hug_move(&mut s.y, &v, u, hug, target);
        s.met = s.x == s.y;
    }
    Ok(s)
}

/// One coupled Hug and Hop iteration with Hop threshold `delta`.
pub fn coupled_hug_hop_step<T: LogDensity + ?Sized>(
    state: &CoupledChainState,
    hug: &HugParams,
    hop: &HopParams,
    delta: f64,
    target: &T,
    rng: &mut RngStream,
) -> Result<CoupledChainState> {
    let mut c = CoupledHugHop::new(target, *hug, *hop, delta, state.clone())?;
    c.step(rng)?;
    Ok(c.into_state())
}
