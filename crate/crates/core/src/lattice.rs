//! Continuous-time kinetic Monte Carlo for integer height columns.
//!
//! A state is a vector of column heights `h_0 … h_{N-1}` with the
//! screw-periodic closure `h(i + N) = h(i) + ζN`. Three transition families
//! act on it:
//!
//! * surface hopping: an atom leaves site `α` for one of its two neighbours,
//!   each direction at rate `½ exp(-2β n(α))`, where `n(α)` is the
//!   coordination number (the symmetrised energy cost of removing the atom);
//! * evaporation from site `i` at rate
//!   `ρ exp(-½ β N^{-p} [V(z_i) - V(z_{i-1})])` with rescaled slopes
//!   `z_i = N (h_{i+1} - h_i)`;
//! * deposition at the constant rate `τ⁻¹ exp(-½ β μ)`.
//!
//! Trajectories are sampled with the rejection-free direct method. Per-site
//! rate totals live in a binary sum tree so event selection is `O(log N)`;
//! after an event only the sites whose neighbourhood changed are refreshed.
//!
//! The coordination number is evaluated literally, so for `V(z) = z²` it
//! equals `∇⁺h - ∇⁻h + 1` rather than the shifted `∇⁺h - ∇⁻h + 2`. A constant
//! shift `c` in `n` only rescales time by `exp(-2βc)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, StreamRng};
use crate::statmech::TiltedEnsemble;
use crate::sumtree::SumTree;
use crate::{Error, Result};

/// Integer height columns with screw-periodic closure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroState {
    heights: Vec<i64>,
    /// Height jump `ζN` across the periodic seam.
    screw: i64,
    #[serde(skip)]
    time_bits: u64,
}

impl MicroState {
    /// Periodic state (`ζ = 0`) at time zero. Needs at least four columns.
    pub fn new(heights: Vec<i64>) -> Result<Self> {
        Self::with_screw(heights, 0)
    }

    /// State whose heights satisfy `h(i + N) = h(i) + screw`, i.e. mean slope
    /// `ζ = screw / N`.
    pub fn with_screw(heights: Vec<i64>, screw: i64) -> Result<Self> {
        if heights.len() < 4 {
            return Err(Error::InvalidParameter(format!(
                "a lattice needs at least 4 columns, got {}",
                heights.len()
            )));
        }
        Ok(Self { heights, screw, time_bits: 0f64.to_bits() })
    }

    pub fn flat(n: usize, level: i64) -> Result<Self> {
        Self::new(vec![level; n])
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    pub fn time(&self) -> f64 {
        f64::from_bits(self.time_bits)
    }

    pub fn set_time(&mut self, t: f64) {
        self.time_bits = t.to_bits();
    }

    pub fn screw(&self) -> i64 {
        self.screw
    }

    /// Mean slope `ζ`.
    pub fn slope_offset(&self) -> f64 {
        self.screw as f64 / self.len() as f64
    }

    /// Height at any integer index, honouring the screw closure.
    pub fn height(&self, i: isize) -> i64 {
        let n = self.len() as isize;
        let wraps = i.div_euclid(n);
        self.heights[i.rem_euclid(n) as usize] + wraps as i64 * self.screw
    }

    /// `∇⁺h(i) = h(i+1) - h(i)`.
    pub fn forward_diff(&self, i: usize) -> i64 {
        self.height(i as isize + 1) - self.height(i as isize)
    }

    /// `∇⁻h(i) = h(i) - h(i-1)`.
    pub fn backward_diff(&self, i: usize) -> i64 {
        self.height(i as isize) - self.height(i as isize - 1)
    }

    /// Rescaled slope `z_i = (h_{i+1} - h_i) / N⁻¹`.
    pub fn rescaled_slope(&self, i: isize) -> f64 {
        let n = self.len() as f64;
        n * (self.height(i + 1) - self.height(i)) as f64
    }

    /// Total mass `Σ h_i` over one period.
    pub fn mass(&self) -> i64 {
        self.heights.iter().sum()
    }

    /// Applies one transition to the heights (time is left untouched).
    pub fn apply(&mut self, kind: EventKind, site: usize) {
        let n = self.len();
        match kind {
            EventKind::HopLeft => {
                self.heights[site] -= 1;
                self.heights[(site + n - 1) % n] += 1;
            }
            EventKind::HopRight => {
                self.heights[site] -= 1;
                self.heights[(site + 1) % n] += 1;
            }
            EventKind::Evaporate => self.heights[site] -= 1,
            EventKind::Deposit => self.heights[site] += 1,
        }
    }

    pub(crate) fn applied(&self, kind: EventKind, site: usize) -> Self {
        let mut next = self.clone();
        next.apply(kind, site);
        next
    }

    /// Samples a microstate in local equilibrium around a macroscopic
    /// profile.
    ///
    /// `target[i]` is the desired (real) height of column `i` in lattice
    /// units. Bond slopes are drawn independently from the tilted Gibbs
    /// measure whose mean is the target slope, then nudged one unit at a
    /// time on random bonds until they close periodically; finally the
    /// whole column set is shifted to match the target mean.
    pub fn local_equilibrium(target: &[f64], beta: f64, p: u8, rng: &mut impl Rng) -> Result<Self> {
        let n = target.len();
        if n < 4 {
            return Err(Error::InvalidParameter(format!("a lattice needs at least 4 columns, got {n}")));
        }
        let mut slopes = Vec::with_capacity(n);
        for i in 0..n {
            let mean_slope = target[(i + 1) % n] - target[i];
            let eta = crate::statmech::surface_tension(mean_slope, beta, p)?.eta_star;
            slopes.push(TiltedEnsemble::new(beta, eta, p)?.sample(rng));
        }
        let mut excess: i64 = slopes.iter().sum();
        while excess != 0 {
            let bond = rng.random_range(0..n);
            slopes[bond] -= excess.signum();
            excess -= excess.signum();
        }
        let mut heights = Vec::with_capacity(n);
        let mut h = 0i64;
        for &z in &slopes {
            heights.push(h);
            h += z;
        }
        let target_mean = target.iter().sum::<f64>() / n as f64;
        let current_mean = heights.iter().sum::<i64>() as f64 / n as f64;
        let shift = (target_mean - current_mean).round() as i64;
        heights.iter_mut().for_each(|v| *v += shift);
        Self::new(heights)
    }
}

/// Potential exponent `p` in `V(z) = |z|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Potential {
    /// `V(z) = |z|`, bond counting.
    Linear,
    /// `V(z) = z²`.
    Quadratic,
}

impl Potential {
    pub fn exponent(self) -> u8 {
        match self {
            Potential::Linear => 1,
            Potential::Quadratic => 2,
        }
    }

    pub fn eval(self, z: f64) -> f64 {
        match self {
            Potential::Linear => z.abs(),
            Potential::Quadratic => z * z,
        }
    }

    fn eval_int(self, z: i64) -> i64 {
        match self {
            Potential::Linear => z.abs(),
            Potential::Quadratic => z * z,
        }
    }
}

impl TryFrom<u8> for Potential {
    type Error = String;

    fn try_from(p: u8) -> std::result::Result<Self, String> {
        match p {
            1 => Ok(Potential::Linear),
            2 => Ok(Potential::Quadratic),
            other => Err(format!("potential exponent must be 1 or 2, got {other}")),
        }
    }
}

impl From<Potential> for u8 {
    fn from(p: Potential) -> u8 {
        p.exponent()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmcParams {
    /// Inverse temperature β.
    pub beta: f64,
    pub p: Potential,
    /// Evaporation prefactor ρ_evap.
    #[serde(default)]
    pub rho_evap: f64,
    /// Deposition prefactor τ⁻¹_dep.
    #[serde(default)]
    pub tau_dep_inv: f64,
    /// Chemical potential difference μ of the deposition rate.
    #[serde(default)]
    pub mu_dep: f64,
    #[serde(default)]
    pub seed: u64,
}

impl KmcParams {
    /// Hopping-only dynamics.
    pub fn hopping(beta: f64, p: Potential, seed: u64) -> Self {
        Self { beta, p, rho_evap: 0.0, tau_dep_inv: 0.0, mu_dep: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        for (name, v) in [("rho_evap", self.rho_evap), ("tau_dep_inv", self.tau_dep_inv)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.mu_dep.is_finite() {
            return Err(Error::InvalidParameter("mu_dep must be finite".into()));
        }
        Ok(())
    }

    /// Height scaling exponent `q = p/(p-1)`; infinite for `p = 1`.
    pub fn q(&self) -> f64 {
        let p = self.p.exponent() as f64;
        if p == 1.0 {
            f64::INFINITY
        } else {
            p / (p - 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HopLeft,
    HopRight,
    Evaporate,
    Deposit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub site: usize,
    pub waiting_time: f64,
}

fn twice_coordination(state: &MicroState, site: usize, p: Potential) -> i64 {
    let up = state.forward_diff(site);
    let down = state.backward_diff(site);
    p.eval_int(up + 1) - p.eval_int(up) + p.eval_int(down - 1) - p.eval_int(down)
}

/// Coordination number
/// `n(α) = ½[V(∇⁺J_α h) - V(∇⁺h) + V(∇⁻J_α h) - V(∇⁻h)]` at `site`, where
/// `J_α` removes one atom from `α`.
pub fn coordination_number(state: &MicroState, site: usize, params: &KmcParams) -> f64 {
    0.5 * twice_coordination(state, site, params.p) as f64
}

/// Rate `½ exp(-2β n(α))` of each directed hop out of `site`.
pub fn hop_rate(state: &MicroState, site: usize, params: &KmcParams) -> f64 {
    0.5 * (-2.0 * params.beta * coordination_number(state, site, params)).exp()
}

/// Evaporation rate for rescaled slopes `z_i`, `z_{i-1}` on an `n`-column
/// lattice.
pub fn evap_rate(z_i: f64, z_im1: f64, params: &KmcParams, n: usize) -> f64 {
    let scale = (n as f64).powi(-(params.p.exponent() as i32));
    params.rho_evap * (-0.5 * params.beta * scale * (params.p.eval(z_i) - params.p.eval(z_im1))).exp()
}

/// Deposition rate `τ⁻¹ exp(-½ β μ)`; independent of the state.
pub fn dep_rate(params: &KmcParams) -> f64 {
    params.tau_dep_inv * (-0.5 * params.beta * params.mu_dep).exp()
}

/// Evaporation rate at a site of `state`.
pub fn site_evap_rate(state: &MicroState, site: usize, params: &KmcParams) -> f64 {
    let i = site as isize;
    evap_rate(state.rescaled_slope(i), state.rescaled_slope(i - 1), params, state.len())
}

/// Exponentials of `-β k / 2` for small integers `k`, the only arguments the
/// rate formulas produce on integer heights.
#[derive(Debug, Clone)]
struct ExpTable {
    half_beta: f64,
    values: Vec<f64>,
}

impl ExpTable {
    const RADIUS: i64 = 512;

    fn new(beta: f64) -> Self {
        let half_beta = 0.5 * beta;
        let values = (-Self::RADIUS..=Self::RADIUS).map(|k| (-half_beta * k as f64).exp()).collect();
        Self { half_beta, values }
    }

    /// `exp(-β k / 2)`.
    fn get(&self, k: i64) -> f64 {
        if k.abs() <= Self::RADIUS {
            self.values[(k + Self::RADIUS) as usize]
        } else {
            (-self.half_beta * k as f64).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SiteRates {
    hop: f64,
    evap: f64,
}

/// Incremental direct-method sampler for one trajectory.
#[derive(Debug, Clone)]
pub struct Kmc {
    state: MicroState,
    params: KmcParams,
    exp: ExpTable,
    dep: f64,
    rates: Vec<SiteRates>,
    tree: SumTree,
}

impl Kmc {
    pub fn new(state: MicroState, params: KmcParams) -> Result<Self> {
        params.validate()?;
        let exp = ExpTable::new(params.beta);
        let dep = dep_rate(&params);
        let mut kmc = Self { rates: vec![SiteRates::default(); state.len()], tree: SumTree::new(&[]), state, params, exp, dep };
        let mut totals = Vec::with_capacity(kmc.state.len());
        for site in 0..kmc.state.len() {
            let r = kmc.compute_rates(site)?;
            kmc.rates[site] = r;
            totals.push(2.0 * r.hop + r.evap + dep);
        }
        kmc.tree = SumTree::new(&totals);
        Ok(kmc)
    }

    fn compute_rates(&self, site: usize) -> Result<SiteRates> {
        let p = self.params.p;
        // 2β n = β · (2n), and ½ exp(-2βn) = ½ exp(-β/2 · 4n).
        let hop = 0.5 * self.exp.get(2 * twice_coordination(&self.state, site, p));
        let evap = if self.params.rho_evap > 0.0 {
            let d = p.eval_int(self.state.forward_diff(site)) - p.eval_int(self.state.backward_diff(site));
            self.params.rho_evap * self.exp.get(d)
        } else {
            0.0
        };
        if !(hop.is_finite() && evap.is_finite()) {
            return Err(Error::NonFiniteRate { site });
        }
        Ok(SiteRates { hop, evap })
    }

    fn refresh(&mut self, site: usize) -> Result<()> {
        let r = self.compute_rates(site)?;
        self.rates[site] = r;
        self.tree.set(site, 2.0 * r.hop + r.evap + self.dep);
        Ok(())
    }

    pub fn state(&self) -> &MicroState {
        &self.state
    }

    pub fn into_state(self) -> MicroState {
        self.state
    }

    pub fn params(&self) -> &KmcParams {
        &self.params
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// Per-directed-hop rate currently cached for `site`.
    pub fn cached_hop_rate(&self, site: usize) -> f64 {
        self.rates[site].hop
    }

    /// Draws the next event without applying it.
    fn draw(&self, rng: &mut impl Rng) -> Result<EventRecord> {
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::ZeroTotalRate);
        }
        let u: f64 = rng.random();
        let waiting_time = -(1.0 - u).ln() / total;
        let site = self.tree.find(rng.random::<f64>() * total);
        let r = self.rates[site];
        let local = rng.random::<f64>() * (2.0 * r.hop + r.evap + self.dep);
        let kind = if local < r.hop {
            EventKind::HopLeft
        } else if local < 2.0 * r.hop {
            EventKind::HopRight
        } else if local < 2.0 * r.hop + r.evap {
            EventKind::Evaporate
        } else {
            EventKind::Deposit
        };
        Ok(EventRecord { kind, site, waiting_time })
    }

    fn commit(&mut self, event: &EventRecord) -> Result<()> {
        let n = self.state.len();
        self.state.apply(event.kind, event.site);
        let t = self.state.time() + event.waiting_time;
        self.state.set_time(t);
        let mut touched = [usize::MAX; 6];
        let mut count = 0;
        let mut touch = |centre: usize| {
            for s in [(centre + n - 1) % n, centre, (centre + 1) % n] {
                if !touched[..count].contains(&s) {
                    touched[count] = s;
                    count += 1;
                }
            }
        };
        touch(event.site);
        match event.kind {
            EventKind::HopLeft => touch((event.site + n - 1) % n),
            EventKind::HopRight => touch((event.site + 1) % n),
            _ => {}
        }
        for &s in &touched[..count] {
            self.refresh(s)?;
        }
        Ok(())
    }

    /// Samples and applies one transition.
    pub fn step(&mut self, rng: &mut impl Rng) -> Result<EventRecord> {
        let event = self.draw(rng)?;
        self.commit(&event)?;
        Ok(event)
    }

    /// Advances to exactly `t_end`. Events whose firing time would exceed
    /// `t_end` are discarded (memorylessness makes this exact). `on_event`
    /// sees every applied event after it has been applied.
    pub fn advance_to(
        &mut self,
        t_end: f64,
        rng: &mut impl Rng,
        mut on_event: impl FnMut(&EventRecord, &MicroState),
    ) -> Result<u64> {
        let mut fired = 0;
        loop {
            let event = self.draw(rng)?;
            if self.state.time() + event.waiting_time > t_end {
                self.state.set_time(t_end);
                return Ok(fired);
            }
            self.commit(&event)?;
            fired += 1;
            on_event(&event, &self.state);
        }
    }
}

/// One transition of the jump process from `state`.
///
/// Total rate `R = Σ_α [2 r_hop(α) + r_evap(α) + r_dep]`; the waiting time
/// is exponential with mean `1/R` and the event is chosen with probability
/// proportional to its rate.
pub fn step_ssa(state: &MicroState, params: &KmcParams, rng: &mut impl Rng) -> Result<(MicroState, EventRecord)> {
    let mut kmc = Kmc::new(state.clone(), *params)?;
    let event = kmc.step(rng)?;
    Ok((kmc.into_state(), event))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub heights: Vec<i64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrajectoryOptions {
    /// Times at which the height profile is recorded (sorted, within
    /// `[0, t_final]`).
    pub sample_times: Vec<f64>,
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub events: Vec<EventRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: MicroState,
    pub event_count: u64,
}

fn simulate(
    initial: MicroState,
    params: &KmcParams,
    t_final: f64,
    options: &TrajectoryOptions,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    if !(t_final.is_finite() && t_final >= initial.time()) {
        return Err(Error::InvalidParameter(format!("t_final {t_final} precedes the initial time")));
    }
    let mut kmc = Kmc::new(initial, *params)?;
    let mut events = Vec::new();
    let mut snapshots = Vec::with_capacity(options.sample_times.len());
    let mut event_count = 0;
    let mut record = |e: &EventRecord, _: &MicroState| {
        if options.record_events {
            events.push(*e);
        }
    };
    for &ts in options.sample_times.iter().filter(|&&t| t <= t_final) {
        if ts > kmc.state().time() {
            event_count += kmc.advance_to(ts, rng, &mut record)?;
        }
        snapshots.push(Snapshot { t: ts, heights: kmc.state().heights().to_vec() });
    }
    event_count += kmc.advance_to(t_final, rng, &mut record)?;
    Ok(Trajectory { events, snapshots, final_state: kmc.into_state(), event_count })
}

/// Single trajectory on stream `(params.seed, 0)`.
pub fn run_trajectory(
    initial: &MicroState,
    params: &KmcParams,
    t_final: f64,
    options: &TrajectoryOptions,
) -> Result<Trajectory> {
    let mut rng = stream(params.seed, 0);
    simulate(initial.clone(), params, t_final, options, &mut rng)
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub sample_times: Vec<f64>,
    /// `mean[s][i]`: replicate mean of `h_i` at `sample_times[s]`.
    pub mean: Vec<Vec<f64>>,
    /// Unbiased replicate variance (zero for a single replicate).
    pub variance: Vec<Vec<f64>>,
    pub replicates: Vec<Trajectory>,
}

/// Independent replicates from a common initial state.
pub fn run_ensemble(
    initial: &MicroState,
    params: &KmcParams,
    t_final: f64,
    n_reps: usize,
    options: &TrajectoryOptions,
) -> Result<EnsembleResult> {
    run_ensemble_from(params, t_final, n_reps, options, |_| Ok(initial.clone()))
}

/// Independent replicates whose initial state is drawn by `init` from the
/// replicate's own stream `(params.seed, r)` before the dynamics start.
///
/// Results are bit-identical regardless of how replicates are scheduled.
pub fn run_ensemble_from<F>(
    params: &KmcParams,
    t_final: f64,
    n_reps: usize,
    options: &TrajectoryOptions,
    init: F,
) -> Result<EnsembleResult>
where
    F: Fn(&mut StreamRng) -> Result<MicroState> + Sync,
{
    if n_reps == 0 {
        return Err(Error::InvalidParameter("an ensemble needs at least one replicate".into()));
    }
    let run_one = |r: usize| -> Result<Trajectory> {
        let mut rng = stream(params.seed, r as u64);
        let initial = init(&mut rng)?;
        simulate(initial, params, t_final, options, &mut rng)
    };
    #[cfg(feature = "parallel")]
    let replicates: Vec<Trajectory> = {
        use rayon::prelude::*;
        (0..n_reps).into_par_iter().map(run_one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let replicates: Vec<Trajectory> = (0..n_reps).map(run_one).collect::<Result<_>>()?;

    let sample_times: Vec<f64> = options.sample_times.iter().copied().filter(|&t| t <= t_final).collect();
    let sites = replicates[0].final_state.len();
    let mut mean = vec![vec![0.0; sites]; sample_times.len()];
    let mut variance = vec![vec![0.0; sites]; sample_times.len()];
    for s in 0..sample_times.len() {
        for i in 0..sites {
            let m = replicates.iter().map(|r| r.snapshots[s].heights[i] as f64).sum::<f64>() / n_reps as f64;
            mean[s][i] = m;
            if n_reps > 1 {
                variance[s][i] = replicates
                    .iter()
                    .map(|r| (r.snapshots[s].heights[i] as f64 - m).powi(2))
                    .sum::<f64>()
                    / (n_reps - 1) as f64;
            }
        }
    }
    Ok(EnsembleResult { sample_times, mean, variance, replicates })
}

/// Box-averaged heights and slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseProfile {
    pub t: f64,
    pub heights: Vec<f64>,
    pub slopes: Vec<f64>,
}

/// Averages `M`-column boxes: `h̄_k` is the box mean and
/// `z̄_k = (h_last - h_first)/(M - 1)` the slope across the box.
pub fn coarse_grain(state: &MicroState, box_size: usize) -> Result<CoarseProfile> {
    coarse_grain_heights(&state.heights().iter().map(|&h| h as f64).collect::<Vec<_>>(), state.time(), box_size)
}

/// [`coarse_grain`] on real heights (e.g. an ensemble mean).
pub fn coarse_grain_heights(heights: &[f64], t: f64, box_size: usize) -> Result<CoarseProfile> {
    let n = heights.len();
    if box_size < 2 || !n.is_multiple_of(box_size) {
        return Err(Error::BadPartition { len: n, box_size });
    }
    let boxes = n / box_size;
    let mut h = Vec::with_capacity(boxes);
    let mut z = Vec::with_capacity(boxes);
    for chunk in heights.chunks(box_size) {
        h.push(chunk.iter().sum::<f64>() / box_size as f64);
        z.push((chunk[box_size - 1] - chunk[0]) / (box_size - 1) as f64);
    }
    Ok(CoarseProfile { t, heights: h, slopes: z })
}

impl CoarseProfile {
    /// Maps to macroscopic units on `n_sites` columns: heights scale by
    /// `N^{-q}`, slopes (per unit macroscopic length) by `N^{1-q}` and time
    /// by `N^{-(q+2)}`.
    pub fn rescaled(&self, n_sites: usize, params: &KmcParams) -> Result<CoarseProfile> {
        let q = params.q();
        if !q.is_finite() {
            return Err(Error::InvalidParameter("p = 1 has no finite height scaling (q = ∞)".into()));
        }
        let n = n_sites as f64;
        let hs = n.powf(-q);
        let zs = n.powf(1.0 - q);
        Ok(CoarseProfile {
            t: self.t * n.powf(-(q + 2.0)),
            heights: self.heights.iter().map(|v| v * hs).collect(),
            slopes: self.slopes.iter().map(|v| v * zs).collect(),
        })
    }
}

/// Exact action of the generator on a test functional:
///
/// `Aφ(h) = Σ_{α, γ=α±1} r(α)(φ(J_α^γ h) - φ(h))
///        + Σ_α [r_dep (φ(J^α h) - φ(h)) + r_evap(α)(φ(J_α h) - φ(h))]`.
pub fn generator_apply(phi: &dyn Fn(&MicroState) -> f64, state: &MicroState, params: &KmcParams) -> f64 {
    let base = phi(state);
    let dep = dep_rate(params);
    let mut acc = 0.0;
    for site in 0..state.len() {
        let hop = hop_rate(state, site, params);
        for kind in [EventKind::HopLeft, EventKind::HopRight] {
            acc += hop * (phi(&state.applied(kind, site)) - base);
        }
        if dep > 0.0 {
            acc += dep * (phi(&state.applied(EventKind::Deposit, site)) - base);
        }
        if params.rho_evap > 0.0 {
            acc += site_evap_rate(state, site, params) * (phi(&state.applied(EventKind::Evaporate, site)) - base);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(beta: f64) -> KmcParams {
        KmcParams::hopping(beta, Potential::Quadratic, 1)
    }

    #[test]
    fn coordination_number_examples() {
        let flat = MicroState::flat(8, 3).unwrap();
        assert_eq!(coordination_number(&flat, 2, &quad(1.0)), 1.0);
        let linear = KmcParams::hopping(1.0, Potential::Linear, 0);
        assert_eq!(coordination_number(&flat, 2, &linear), 1.0);
        let peak = MicroState::new(vec![0, 0, 1, 0, 0, 0]).unwrap();
        assert_eq!(coordination_number(&peak, 2, &quad(1.0)), -1.0);
    }

    #[test]
    fn linear_potential_counts_broken_bonds() {
        // n + 1 = number of neighbours at least as high as the site.
        let state = MicroState::new(vec![0, 2, 1, 1, 3, -1, 0, 5]).unwrap();
        let params = KmcParams::hopping(1.0, Potential::Linear, 0);
        for site in 0..state.len() {
            let h = state.height(site as isize);
            let bonds = [state.height(site as isize - 1), state.height(site as isize + 1)]
                .iter()
                .filter(|&&g| h <= g)
                .count() as f64;
            assert_eq!(coordination_number(&state, site, &params) + 1.0, bonds, "site {site}");
        }
    }

    #[test]
    fn quadratic_coordination_is_shifted_laplacian() {
        let state = MicroState::new(vec![0, 2, 1, 1, 3, -1, 0, 5]).unwrap();
        for site in 0..state.len() {
            let lap = state.forward_diff(site) - state.backward_diff(site);
            assert_eq!(coordination_number(&state, site, &quad(0.3)), lap as f64 + 1.0);
        }
    }

    #[test]
    fn rate_examples() {
        let flat = MicroState::flat(6, 0).unwrap();
        let peak = MicroState::new(vec![0, 0, 1, 0, 0, 0]).unwrap();
        assert_eq!(hop_rate(&peak, 2, &quad(0.0)), 0.5);
        assert!((hop_rate(&flat, 1, &quad(1.0)) - 0.067_668).abs() < 1e-6);
        assert!((hop_rate(&peak, 2, &quad(1.0)) - 3.694_528).abs() < 1e-6);

        let mut p = quad(1.0);
        p.rho_evap = 1.0;
        assert!((evap_rate(1.0, 0.0, &p, 1) - 0.606_531).abs() < 1e-6);
        assert_eq!(evap_rate(2.5, 2.5, &p, 17), 1.0);
        p.beta = 0.0;
        assert_eq!(evap_rate(9.0, -3.0, &p, 4), 1.0);

        let mut d = quad(2.0);
        d.tau_dep_inv = 1.0;
        d.mu_dep = 1.0;
        assert!((dep_rate(&d) - 0.367_879).abs() < 1e-6);
        d.mu_dep = 0.0;
        assert_eq!(dep_rate(&d), 1.0);
        d.tau_dep_inv = 0.0;
        assert_eq!(dep_rate(&d), 0.0);
    }

    #[test]
    fn cached_rates_match_literal_formulas() {
        let state = MicroState::with_screw(vec![0, 3, 1, 1, 4, -2, 0, 5], 2).unwrap();
        let params = KmcParams { beta: 0.7, p: Potential::Quadratic, rho_evap: 0.4, tau_dep_inv: 0.3, mu_dep: -0.5, seed: 0 };
        let kmc = Kmc::new(state.clone(), params).unwrap();
        let mut total = 0.0;
        for s in 0..state.len() {
            let hop = hop_rate(&state, s, &params);
            assert!((kmc.cached_hop_rate(s) - hop).abs() <= 1e-14 * hop);
            total += 2.0 * hop + site_evap_rate(&state, s, &params) + dep_rate(&params);
        }
        assert!((kmc.total_rate() - total).abs() < 1e-12 * total);
    }

    #[test]
    fn flat_four_site_total_rate() {
        let kmc = Kmc::new(MicroState::flat(4, 0).unwrap(), quad(1.0)).unwrap();
        // Two directed hops per site at ½e^{-2} each.
        assert!((kmc.total_rate() - 4.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((kmc.total_rate() - 0.541_341).abs() < 1e-6);
    }

    #[test]
    fn screw_periodic_indexing() {
        let s = MicroState::with_screw(vec![0, 1, 2, 3], 4).unwrap();
        assert_eq!(s.height(4), 4);
        assert_eq!(s.height(-1), -1);
        assert_eq!(s.forward_diff(3), 1);
        assert_eq!(s.backward_diff(0), 1);
        assert_eq!(s.slope_offset(), 1.0);
    }

    #[test]
    fn deposit_adds_exactly_one() {
        let params = KmcParams { beta: 1.0, p: Potential::Quadratic, rho_evap: 0.0, tau_dep_inv: 1e6, mu_dep: 0.0, seed: 0 };
        let state = MicroState::new(vec![1, 2, 3, 4, 5]).unwrap();
        let mut rng = stream(3, 0);
        let (next, e) = step_ssa(&state, &params, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::Deposit);
        assert_eq!(next.heights()[e.site], state.heights()[e.site] + 1);
        assert_eq!(next.mass(), state.mass() + 1);
        assert!(e.waiting_time > 0.0 && next.time() == e.waiting_time);
    }

    #[test]
    fn zero_rate_is_reported() {
        // exp(-800) underflows to zero.
        let params = KmcParams::hopping(400.0, Potential::Quadratic, 0);
        let state = MicroState::flat(6, 0).unwrap();
        let mut rng = stream(0, 0);
        assert_eq!(step_ssa(&state, &params, &mut rng).unwrap_err(), Error::ZeroTotalRate);
    }

    #[test]
    fn coarse_grain_examples() {
        let flat = MicroState::flat(12, 7).unwrap();
        let c = coarse_grain(&flat, 4).unwrap();
        assert_eq!(c.heights, vec![7.0; 3]);
        assert_eq!(c.slopes, vec![0.0; 3]);

        let linear = MicroState::with_screw((0..12).map(|i| 3 * i).collect(), 36).unwrap();
        let c = coarse_grain(&linear, 3).unwrap();
        assert_eq!(c.slopes, vec![3.0; 4]);
        assert_eq!(c.heights, vec![3.0, 12.0, 21.0, 30.0]);

        assert_eq!(coarse_grain(&flat, 5).unwrap_err(), Error::BadPartition { len: 12, box_size: 5 });
        assert!(coarse_grain(&flat, 1).is_err());
    }

    #[test]
    fn rescaling_uses_quartic_time() {
        let mut state = MicroState::flat(16, 512).unwrap();
        state.set_time(65536.0 * 3.0);
        let c = coarse_grain(&state, 4).unwrap().rescaled(16, &quad(1.0)).unwrap();
        assert_eq!(c.t, 3.0);
        assert_eq!(c.heights, vec![2.0; 4]);
        let linear = KmcParams::hopping(1.0, Potential::Linear, 0);
        assert!(coarse_grain(&state, 4).unwrap().rescaled(16, &linear).is_err());
    }

    #[test]
    fn generator_examples() {
        let state = MicroState::new(vec![0, 2, 1, 1, 3, -1, 0, 5]).unwrap();
        let params = KmcParams { beta: 0.4, p: Potential::Quadratic, rho_evap: 0.8, tau_dep_inv: 0.5, mu_dep: 0.2, seed: 0 };
        assert_eq!(generator_apply(&|_| 4.2, &state, &params), 0.0);

        let mass = |s: &MicroState| s.mass() as f64;
        let mean_evap = (0..8).map(|i| site_evap_rate(&state, i, &params)).sum::<f64>() / 8.0;
        let expected = 8.0 * (dep_rate(&params) - mean_evap);
        assert!((generator_apply(&mass, &state, &params) - expected).abs() < 1e-12);

        let flat = MicroState::flat(8, 0).unwrap();
        let single = |s: &MicroState| s.heights()[3] as f64;
        assert!(generator_apply(&single, &flat, &quad(1.0)).abs() < 1e-15);
    }

    #[test]
    fn local_equilibrium_tracks_target_profile() {
        let n = 64;
        let target: Vec<f64> = (0..n).map(|i| 200.0 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
        let mut rng = stream(11, 0);
        let s = MicroState::local_equilibrium(&target, 0.5, 2, &mut rng).unwrap();
        assert_eq!(s.forward_diff(n - 1) + (0..n - 1).map(|i| s.forward_diff(i)).sum::<i64>(), 0);
        let worst = (0..n).map(|i| (s.heights()[i] as f64 - target[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 30.0, "worst deviation {worst}");
    }
}
