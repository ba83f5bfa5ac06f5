//! Gaussian-state CV-CIM dynamics.
//!
//! Each oscillator carries a mean amplitude `μ_i` and a variance `σ_i`. One
//! roundtrip is one Euler-Maruyama step:
//!
//! ```text
//! μ̃  = μ + Z / √(4 j Δt)
//! μ' = μ + [(−(1+j) + p − g²μ²) μ − λ Φ(μ̃)] Δt + √j (σ − ½) Z √Δt
//! σ' = σ + [2(−(1+j) + p − 3g²μ²) σ − 2j (σ − ½)² + (1+j) + 2g²μ²] Δt
//! ```
//!
//! with `Z ~ N(0, I)` drawn once per step and shared by the measurement and
//! the backaction term, `p = p_t`, `j = j_t` taken from the schedules, and
//! `Φ` the feedback policy applied to the amplitude-space gradient.

use serde::{Deserialize, Serialize};

use crate::boxqp::{amplitude_to_box, feedback_gradient_into, AmplitudeDomain, BoxQpInstance, FeedbackScaling};
use crate::feedback::{init_state, update_in_place, PolicyConfig, PolicyState};
use crate::metrics::relative_gap;
use crate::rng::{GaussianSource, NoNoise, NormalStream};
use crate::{Error, Result};

/// Physical hyperparameters and schedule shapes.
///
/// Defaults: 15000 roundtrips of `Δt = 0.0025`, `g = 0.01`, `λ = 550`,
/// `p_t = 2.5 t/T`, `j_t = 25 exp(−3 t/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CimParams {
    /// Total number of roundtrips `T`.
    pub roundtrips: usize,
    pub dt: f64,
    /// Nonlinearity coefficient `g`.
    pub g: f64,
    /// Feedback strength `λ`.
    pub lambda: f64,
    pub pump_max: f64,
    pub j0: f64,
    pub j_decay: f64,
    pub noise: bool,
    /// Trajectories with `|μ_i| > divergence_factor·√a` are declared diverged.
    pub divergence_factor: f64,
    pub feedback_scaling: FeedbackScaling,
}

impl Default for CimParams {
    fn default() -> Self {
        Self {
            roundtrips: 15_000,
            dt: 0.0025,
            g: 0.01,
            lambda: 550.0,
            pump_max: 2.5,
            j0: 25.0,
            j_decay: 3.0,
            noise: true,
            divergence_factor: 10.0,
            feedback_scaling: FeedbackScaling::ChainRule,
        }
    }
}

impl CimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.roundtrips == 0 {
            return bad("roundtrips must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad(format!("g must be positive, got {}", self.g));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !self.pump_max.is_finite() {
            return bad(format!("pump_max must be finite, got {}", self.pump_max));
        }
        if !(self.j0 > 0.0 && self.j0.is_finite()) || !self.j_decay.is_finite() {
            return bad(format!(
                "measurement schedule must stay positive (j0 = {}, j_decay = {})",
                self.j0, self.j_decay
            ));
        }
        if !(self.divergence_factor > 0.0) {
            return bad(format!(
                "divergence_factor must be positive, got {}",
                self.divergence_factor
            ));
        }
        Ok(())
    }

    /// Total anneal time `T·Δt`.
    pub fn anneal_time(&self) -> f64 {
        self.roundtrips as f64 * self.dt
    }
}

/// Pump strength `p_t = pump_max · t/T`.
pub fn pump_at(t: usize, params: &CimParams) -> f64 {
    params.pump_max * t as f64 / params.roundtrips as f64
}

/// Measurement strength `j_t = j0 · exp(−j_decay · t/T)`.
pub fn measurement_at(t: usize, params: &CimParams) -> f64 {
    params.j0 * (-params.j_decay * t as f64 / params.roundtrips as f64).exp()
}

/// `a = (p_T − (1 + j_T)) / g²` from the end-of-anneal schedule values.
pub fn amplitude_domain(params: &CimParams) -> Result<AmplitudeDomain> {
    let pump = pump_at(params.roundtrips, params);
    let measurement = measurement_at(params.roundtrips, params);
    let gain = pump - (1.0 + measurement);
    if !(gain > 0.0) {
        return Err(Error::NoBistability { pump, measurement });
    }
    AmplitudeDomain::new(gain / (params.g * params.g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub roundtrip: usize,
    pub policy_state: PolicyState,
    pub diverged_at: Option<usize>,
}

impl TrajectoryState {
    /// Vacuum start: `μ = 0`, `σ = ½`.
    pub fn vacuum(n: usize, policy: &PolicyConfig) -> Result<Self> {
        Ok(Self {
            mu: vec![0.0; n],
            sigma: vec![0.5; n],
            roundtrip: 0,
            policy_state: init_state(n, policy)?,
            diverged_at: None,
        })
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Stateful one-step integrator bound to an instance and parameter set.
/// Holds scratch buffers so stepping does not allocate.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    inst: &'a BoxQpInstance,
    params: CimParams,
    policy: PolicyConfig,
    dom: AmplitudeDomain,
    z: Vec<f64>,
    measured: Vec<f64>,
    x: Vec<f64>,
    grad: Vec<f64>,
    dir: Vec<f64>,
    mu_next: Vec<f64>,
    sigma_next: Vec<f64>,
}

impl<'a> Stepper<'a> {
    /// Uses the amplitude domain implied by the schedules.
    pub fn new(inst: &'a BoxQpInstance, params: CimParams, policy: PolicyConfig) -> Result<Self> {
        let dom = amplitude_domain(&params)?;
        Self::with_domain(inst, params, policy, dom)
    }

    /// Uses an explicit domain (for frozen-schedule experiments where the
    /// end-of-anneal values are not meaningful).
    pub fn with_domain(
        inst: &'a BoxQpInstance,
        params: CimParams,
        policy: PolicyConfig,
        dom: AmplitudeDomain,
    ) -> Result<Self> {
        params.validate()?;
        policy.validate()?;
        let n = inst.n();
        Ok(Self {
            inst,
            params,
            policy,
            dom,
            z: vec![0.0; n],
            measured: vec![0.0; n],
            x: vec![0.0; n],
            grad: vec![0.0; n],
            dir: vec![0.0; n],
            mu_next: vec![0.0; n],
            sigma_next: vec![0.0; n],
        })
    }

    pub fn domain(&self) -> &AmplitudeDomain {
        &self.dom
    }

    pub fn params(&self) -> &CimParams {
        &self.params
    }

    /// Measured amplitudes `μ̃` of the most recent step.
    pub fn last_measured(&self) -> &[f64] {
        &self.measured
    }

    /// Noise realization `Z` of the most recent step.
    pub fn last_noise(&self) -> &[f64] {
        &self.z
    }

    /// Advances roundtrip `t` using the scheduled pump and measurement strength.
    pub fn step<N: GaussianSource + ?Sized>(&mut self, state: &mut TrajectoryState, t: usize, noise: &mut N) {
        let pump = pump_at(t, &self.params);
        let meas = measurement_at(t, &self.params);
        self.step_with(state, pump, meas, noise);
    }

    /// Advances one roundtrip with explicit pump and measurement strength.
    /// A diverged state is left untouched.
    pub fn step_with<N: GaussianSource + ?Sized>(
        &mut self,
        state: &mut TrajectoryState,
        pump: f64,
        meas: f64,
        noise: &mut N,
    ) {
        if state.is_diverged() {
            return;
        }
        let dt = self.params.dt;
        let g2 = self.params.g * self.params.g;
        let lambda = self.params.lambda;

        if self.params.noise && noise.is_active() {
            for z in &mut self.z {
                *z = noise.next_standard_normal();
            }
        } else {
            self.z.iter_mut().for_each(|z| *z = 0.0);
        }

        let meas_scale = 1.0 / (4.0 * meas * dt).sqrt();
        for ((m, &mu), &z) in self.measured.iter_mut().zip(&state.mu).zip(&self.z) {
            *m = mu + z * meas_scale;
        }

        feedback_gradient_into(
            self.inst,
            &self.measured,
            &self.dom,
            self.params.feedback_scaling,
            &mut self.x,
            &mut self.grad,
        );
        let roundtrip = state.roundtrip;
        if update_in_place(&mut state.policy_state, &self.grad, &self.policy, &mut self.dir).is_err() {
            state.diverged_at = Some(roundtrip + 1);
            return;
        }

        let sqrt_j = meas.sqrt();
        let sqrt_dt = dt.sqrt();
        let loss = -(1.0 + meas) + pump;
        let limit = self.params.divergence_factor * self.dom.sqrt_a();
        let mut diverged = false;
        for i in 0..state.mu.len() {
            let mu = state.mu[i];
            let sigma = state.sigma[i];
            let mu2 = mu * mu;
            let drift = (loss - g2 * mu2) * mu - lambda * self.dir[i];
            let mu_next = mu + drift * dt + sqrt_j * (sigma - 0.5) * self.z[i] * sqrt_dt;
            let ds = 2.0 * (loss - 3.0 * g2 * mu2) * sigma - 2.0 * meas * (sigma - 0.5) * (sigma - 0.5)
                + (1.0 + meas)
                + 2.0 * g2 * mu2;
            let sigma_next = sigma + ds * dt;
            if !mu_next.is_finite() || !sigma_next.is_finite() || mu_next.abs() > limit || sigma_next <= 0.0 {
                diverged = true;
            }
            self.mu_next[i] = mu_next;
            self.sigma_next[i] = sigma_next;
        }

        if diverged {
            state.diverged_at = Some(roundtrip + 1);
            return;
        }
        state.mu.copy_from_slice(&self.mu_next);
        state.sigma.copy_from_slice(&self.sigma_next);
        state.roundtrip = roundtrip + 1;
    }
}

/// One gap sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub roundtrip: usize,
    pub gap: f64,
}

/// Strided optimality-gap history of one trajectory. Records stop at
/// divergence; `diverged_at` marks the roundtrip that failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub records: Vec<GapRecord>,
    pub diverged_at: Option<usize>,
}

impl GapSeries {
    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Best gap over the recorded history (up to divergence).
    pub fn best_gap(&self) -> Option<f64> {
        self.records.iter().map(|r| r.gap).reduce(f64::min)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().map(|r| r.gap)
    }

    /// First recorded roundtrip whose gap is at most `threshold`.
    pub fn first_reaching(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.gap <= threshold).map(|r| r.roundtrip)
    }

    /// Gap recorded at exactly `roundtrip`, if any.
    pub fn gap_at(&self, roundtrip: usize) -> Option<f64> {
        self.records
            .binary_search_by_key(&roundtrip, |r| r.roundtrip)
            .ok()
            .map(|i| self.records[i].gap)
    }
}

/// Gap of the clipped box image of `mu`.
pub fn gap_of(inst: &BoxQpInstance, mu: &[f64], dom: &AmplitudeDomain, reference: f64) -> Result<f64> {
    let x = amplitude_to_box(mu, dom);
    relative_gap(inst.objective_unchecked(x.as_slice()), reference)
}

/// Runs one full anneal from the vacuum state.
///
/// The gap is recorded at roundtrip 0, every `stride` roundtrips, and at the
/// final roundtrip. Noise comes from the stream seeded by `seed`.
pub fn simulate(
    inst: &BoxQpInstance,
    params: &CimParams,
    policy: &PolicyConfig,
    seed: u64,
    stride: usize,
) -> Result<(TrajectoryState, GapSeries)> {
    let mut stream = NormalStream::new(seed);
    if params.noise {
        simulate_with(inst, params, policy, &mut stream, stride)
    } else {
        simulate_with(inst, params, policy, &mut NoNoise, stride)
    }
}

/// [`simulate`] with a caller-supplied noise source.
pub fn simulate_with<N: GaussianSource + ?Sized>(
    inst: &BoxQpInstance,
    params: &CimParams,
    policy: &PolicyConfig,
    noise: &mut N,
    stride: usize,
) -> Result<(TrajectoryState, GapSeries)> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    let reference = inst
        .best_known()
        .ok_or_else(|| Error::MissingReference(inst.label().to_string()))?;
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    let mut stepper = Stepper::new(inst, *params, *policy)?;
    let dom = *stepper.domain();
    let mut state = TrajectoryState::vacuum(inst.n(), policy)?;
    let mut series = GapSeries::default();
    series.records.push(GapRecord {
        roundtrip: 0,
        gap: gap_of(inst, &state.mu, &dom, reference)?,
    });
    let total = params.roundtrips;
    for t in 0..total {
        stepper.step(&mut state, t, noise);
        if state.is_diverged() {
            series.diverged_at = state.diverged_at;
            break;
        }
        let done = t + 1;
        if done % stride == 0 || done == total {
            series.records.push(GapRecord {
                roundtrip: done,
                gap: gap_of(inst, &state.mu, &dom, reference)?,
            });
        }
    }
    Ok((state, series))
}
