//! Time-domain simulation of the interacting X-system: drifted Brownian
//! coordinates indexed by the graph, coupled through
//! psi(t) = K_{t^tau}^{-1} (X(t) + (t^tau) eta) and absorbed at 0, plus
//! exact 3-d Bessel bridge paths and the mixture representation
//! (draw the hitting-time vector first, then independent bridges).
//!
//! Absorption uses Brownian-bridge crossing corrections by default: a step
//! ending below 0 absorbs at an exact within-cell crossing time, and a
//! step staying positive absorbs with the bridge crossing probability
//! exp(-2 x y / dt). Naive grid detection overestimates hitting times by
//! O(sqrt(dt)); `CrossingMode::GridOnly` keeps that scheme available for
//! convergence studies.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::GraphPotentialParams;
use crate::potential;
use crate::scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingMode {
    BridgeCorrected,
    GridOnly,
}

#[derive(Debug, Clone)]
pub struct SdeOptions {
    pub dt: f64,
    pub crossing: CrossingMode,
    /// Shrink the step when a coordinate sits within 5*sqrt(dt) of 0.
    pub refine_near_zero: bool,
    /// Soft horizon; defaults to 50x the largest per-coordinate hitting
    /// mean when unset.
    pub soft_horizon: Option<f64>,
    /// Hard cap on simulated time; defaults to 1024x the soft horizon.
    pub hard_cap: Option<f64>,
}

impl Default for SdeOptions {
    fn default() -> Self {
        SdeOptions {
            dt: 1e-3,
            crossing: CrossingMode::BridgeCorrected,
            refine_near_zero: true,
            soft_horizon: None,
            hard_cap: None,
        }
    }
}

impl SdeOptions {
    pub fn with_dt(dt: f64) -> Self {
        SdeOptions { dt, ..Default::default() }
    }

    fn resolve_horizon(&self, params: &GraphPotentialParams) -> (f64, f64) {
        let soft = self.soft_horizon.unwrap_or_else(|| {
            let mut largest = 0.0_f64;
            for i in 0..params.n() {
                let mut denom = params.eta()[i];
                for j in 0..params.n() {
                    if j != i {
                        denom += params.w().get(i, j) * params.theta()[j];
                    }
                }
                let mean = if denom > 0.0 {
                    params.theta()[i] / denom
                } else {
                    // driftless isolated coordinate: diffusive scale
                    params.theta()[i] * params.theta()[i]
                };
                largest = largest.max(mean);
            }
            50.0 * largest.max(1e-2)
        });
        (soft, self.hard_cap.unwrap_or(soft * 1024.0))
    }
}

/// Discretized paths of the interacting system with absorption data.
#[derive(Debug, Clone)]
pub struct XPathBundle {
    pub grid: Vec<f64>,
    /// paths[i][k] = X_i(grid[k]); exactly 0 at every grid time >= tau_i.
    pub paths: Vec<Vec<f64>>,
    pub absorbed: Vec<bool>,
    /// Sub-grid refined hitting times; +inf when not absorbed.
    pub tau: Vec<f64>,
    pub psi_last: Vec<f64>,
}

struct EngineState {
    x: Vec<f64>,
    absorbed: Vec<bool>,
    tau: Vec<f64>,
    psi: Vec<f64>,
    clock: Vec<f64>,
    w_psi: Vec<f64>,
    solver: crate::lattice::DenseSolver,
}

fn step_block(
    params: &GraphPotentialParams,
    opts: &SdeOptions,
    st: &mut EngineState,
    t_from: f64,
    t_to: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    let n = params.n();
    let eta = params.eta();
    let w = params.w();
    let mut t = t_from;
    while t < t_to {
        let mut h = (t_to - t).min(opts.dt);
        if opts.refine_near_zero {
            let mut min_x2 = f64::INFINITY;
            for i in 0..n {
                if !st.absorbed[i] {
                    min_x2 = min_x2.min(st.x[i] * st.x[i]);
                }
            }
            if min_x2 < 25.0 * opts.dt {
                h = h.min((min_x2 / 25.0).max(opts.dt / 64.0));
            }
        }
        // psi(t) = K_{t^tau}^{-1} (X + (t^tau) eta)
        for i in 0..n {
            st.clock[i] = if st.absorbed[i] { st.tau[i] } else { t };
            st.psi[i] = st.x[i] + st.clock[i] * eta[i];
        }
        st.solver.factor(|i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - st.clock[i] * w.get(i, j)
        })?;
        st.solver.solve_in_place(&mut st.psi);
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += w.get(i, j) * st.psi[j];
            }
            st.w_psi[i] = s;
        }
        let sq = h.sqrt();
        for i in 0..n {
            if st.absorbed[i] {
                continue;
            }
            let drift = -(st.w_psi[i] + eta[i]);
            let xi: f64 = rng.sample(StandardNormal);
            let y = st.x[i] + drift * h + sq * xi;
            match opts.crossing {
                CrossingMode::GridOnly => {
                    if y <= 0.0 {
                        st.absorbed[i] = true;
                        st.tau[i] = t + h;
                        st.x[i] = 0.0;
                    } else {
                        st.x[i] = y;
                    }
                }
                CrossingMode::BridgeCorrected => {
                    let crossed = if y <= 0.0 {
                        true
                    } else {
                        rng.random::<f64>() < scalar::bridge_crossing_probability(st.x[i], y, h)
                    };
                    if crossed {
                        let s = scalar::bridge_first_crossing_time(st.x[i], y.abs(), h, rng);
                        st.absorbed[i] = true;
                        st.tau[i] = t + s;
                        st.x[i] = 0.0;
                    } else {
                        st.x[i] = y;
                    }
                }
            }
        }
        t += h;
    }
    Ok(())
}

fn run_engine(
    params: &GraphPotentialParams,
    start: &[f64],
    rng: &mut impl Rng,
    opts: &SdeOptions,
    stop_time: Option<f64>,
    mut on_grid: impl FnMut(f64, &[f64]),
) -> Result<EngineState> {
    let n = params.n();
    if start.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: start.len() });
    }
    let (_, cap) = opts.resolve_horizon(params);
    let mut st = EngineState {
        x: start.to_vec(),
        absorbed: start.iter().map(|&v| v <= 0.0).collect(),
        tau: start.iter().map(|&v| if v <= 0.0 { 0.0 } else { f64::INFINITY }).collect(),
        psi: vec![0.0; n],
        clock: vec![0.0; n],
        w_psi: vec![0.0; n],
        solver: crate::lattice::DenseSolver::new(n),
    };
    for i in 0..n {
        if st.absorbed[i] {
            st.x[i] = 0.0;
        }
    }
    on_grid(0.0, &st.x);
    let mut k = 0u64;
    loop {
        let all_absorbed = st.absorbed.iter().all(|&a| a);
        let t = k as f64 * opts.dt;
        if let Some(stop) = stop_time {
            if t >= stop - 0.5 * opts.dt {
                break;
            }
        } else if all_absorbed {
            break;
        }
        if t > cap {
            return Err(Error::HorizonExceeded { horizon: cap });
        }
        let t_next = (k + 1) as f64 * opts.dt;
        if all_absorbed {
            on_grid(t_next, &st.x);
            k += 1;
            continue;
        }
        step_block(params, opts, &mut st, t, t_next, rng)?;
        on_grid(t_next, &st.x);
        k += 1;
    }
    Ok(st)
}

/// Simulate the interacting system from theta until every coordinate is
/// absorbed, recording the full paths on the uniform dt grid.
pub fn simulate_x(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<XPathBundle> {
    simulate_x_from(params, params.theta(), rng, opts)
}

/// Same engine from arbitrary nonnegative start levels (a zero start means
/// the coordinate is already absorbed); used by restarted systems.
pub fn simulate_x_from(
    params: &GraphPotentialParams,
    start: &[f64],
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<XPathBundle> {
    let n = params.n();
    let mut grid = Vec::new();
    let mut paths = vec![Vec::new(); n];
    let st = run_engine(params, start, rng, opts, None, |t, x| {
        grid.push(t);
        for i in 0..n {
            paths[i].push(x[i]);
        }
    })?;
    Ok(XPathBundle { grid, paths, absorbed: st.absorbed, tau: st.tau, psi_last: st.psi })
}

/// Run to a fixed global time without requiring absorption; unabsorbed
/// coordinates keep tau = +inf.
pub fn simulate_x_to_time(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    opts: &SdeOptions,
    t_end: f64,
) -> Result<XPathBundle> {
    let n = params.n();
    let mut grid = Vec::new();
    let mut paths = vec![Vec::new(); n];
    let st = run_engine(params, params.theta(), rng, opts, Some(t_end), |t, x| {
        grid.push(t);
        for i in 0..n {
            paths[i].push(x[i]);
        }
    })?;
    Ok(XPathBundle { grid, paths, absorbed: st.absorbed, tau: st.tau, psi_last: st.psi })
}

/// Hitting times only; no path storage.
pub fn simulate_tau(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<Vec<f64>> {
    let st = run_engine(params, params.theta(), rng, opts, None, |_, _| {})?;
    Ok(st.tau)
}

pub(crate) fn simulate_tau_from(
    params: &GraphPotentialParams,
    start: &[f64],
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<Vec<f64>> {
    let st = run_engine(params, start, rng, opts, None, |_, _| {})?;
    Ok(st.tau)
}

/// (X(t0), tau): the state at one probe time plus the hitting times.
pub fn simulate_x_probe(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    opts: &SdeOptions,
    t0: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = params.n();
    let mut probe = vec![0.0; n];
    let mut best = f64::INFINITY;
    let st = run_engine(params, params.theta(), rng, opts, None, |t, x| {
        let d = (t - t0).abs();
        if d < best {
            best = d;
            probe.copy_from_slice(x);
        }
    })?;
    Ok((probe, st.tau))
}

// ---------------------------------------------------------------------------
// Bessel bridges
// ---------------------------------------------------------------------------

/// One nonnegative path pinned from theta at 0 to 0 at tau.
#[derive(Debug, Clone)]
pub struct BridgePath {
    pub theta: f64,
    pub tau: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Exact-at-grid 3-d Bessel bridge: the Euclidean norm of three scalar
/// Brownian bridges from (theta, 0, 0) to the origin over [0, tau].
pub fn bessel_bridge_path(
    theta: f64,
    tau: f64,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<BridgePath> {
    if !(theta > 0.0) || !(tau > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParam("bessel bridge needs theta, tau, dt > 0".into()));
    }
    let mut grid = vec![0.0];
    let mut comps = [theta, 0.0, 0.0];
    let mut values = vec![theta];
    let mut t = 0.0;
    while t < tau {
        let t_next = (t + dt).min(tau);
        if t_next >= tau {
            grid.push(tau);
            values.push(0.0);
            break;
        }
        let shrink = (tau - t_next) / (tau - t);
        let var = (t_next - t) * shrink;
        let sd = var.sqrt();
        let mut s2 = 0.0;
        for c in comps.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *c = *c * shrink + sd * xi;
            s2 += *c * *c;
        }
        grid.push(t_next);
        values.push(s2.sqrt());
        t = t_next;
    }
    Ok(BridgePath { theta, tau, grid, values })
}

/// Single-point law of the bridge at time t in (0, tau).
pub fn bessel_bridge_point(theta: f64, tau: f64, t: f64, rng: &mut impl Rng) -> f64 {
    if t <= 0.0 {
        return theta;
    }
    if t >= tau {
        return 0.0;
    }
    let shrink = (tau - t) / tau;
    let sd = (t * shrink).sqrt();
    let mut s2 = 0.0;
    for mean in [theta * shrink, 0.0, 0.0] {
        let xi: f64 = rng.sample(StandardNormal);
        let c = mean + sd * xi;
        s2 += c * c;
    }
    s2.sqrt()
}

// ---------------------------------------------------------------------------
// Mixture representation
// ---------------------------------------------------------------------------

enum BetaRoute {
    Grid(potential::GridOracle),
    Hitting(SdeOptions),
}

/// Simulates the system by drawing the hitting-time vector first and then
/// independent Bessel bridges per coordinate. At n <= 2 the hitting
/// vector comes from the grid inverse-CDF oracle, so the mixture route is
/// independent of the Euler integrator it is tested against.
pub struct MixtureSampler<'a> {
    params: &'a GraphPotentialParams,
    dt: f64,
    route: BetaRoute,
}

impl<'a> MixtureSampler<'a> {
    pub fn new(params: &'a GraphPotentialParams, dt: f64) -> Result<Self> {
        let route = if params.n() <= 2 {
            BetaRoute::Grid(potential::GridOracle::build(params)?)
        } else {
            BetaRoute::Hitting(SdeOptions::with_dt(dt.min(1e-3)))
        };
        Ok(MixtureSampler { params, dt, route })
    }

    fn draw_tau(&self, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let sample = match &self.route {
            BetaRoute::Grid(oracle) => oracle.sample(rng),
            BetaRoute::Hitting(opts) => {
                potential::sample_beta_via_hitting(self.params, rng, opts)?
            }
        };
        Ok(sample.tau)
    }

    pub fn simulate(&self, rng: &mut impl Rng) -> Result<XPathBundle> {
        let n = self.params.n();
        let tau = self.draw_tau(rng)?;
        let bridges: Vec<BridgePath> = (0..n)
            .map(|i| bessel_bridge_path(self.params.theta()[i], tau[i], self.dt, rng))
            .collect::<Result<_>>()?;
        let t_max = tau.iter().cloned().fold(0.0, f64::max);
        let steps = (t_max / self.dt).ceil() as usize + 1;
        let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * self.dt).collect();
        let mut paths = vec![vec![0.0; grid.len()]; n];
        for i in 0..n {
            for (k, &t) in grid.iter().enumerate() {
                paths[i][k] = bridge_value_at(&bridges[i], t);
            }
        }
        Ok(XPathBundle {
            grid,
            paths,
            absorbed: vec![true; n],
            tau,
            psi_last: vec![0.0; n],
        })
    }

    /// (X(t0), tau) with the single probe point drawn exactly.
    pub fn probe(&self, rng: &mut impl Rng, t0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let tau = self.draw_tau(rng)?;
        let x0 = (0..self.params.n())
            .map(|i| bessel_bridge_point(self.params.theta()[i], tau[i], t0, rng))
            .collect();
        Ok((x0, tau))
    }
}

fn bridge_value_at(bridge: &BridgePath, t: f64) -> f64 {
    if t >= bridge.tau {
        return 0.0;
    }
    match bridge.grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
        Ok(k) => bridge.values[k],
        Err(k) => {
            if k == 0 {
                bridge.values[0]
            } else if k >= bridge.grid.len() {
                0.0
            } else {
                let (t0, t1) = (bridge.grid[k - 1], bridge.grid[k]);
                let w = (t - t0) / (t1 - t0);
                bridge.values[k - 1] * (1.0 - w) + bridge.values[k] * w
            }
        }
    }
}
