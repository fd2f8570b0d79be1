//! The multivariate potential on (R+)^V attached to the graph: density,
//! closed-form Laplace transform, two independent samplers (the
//! hitting-time construction and a grid inverse-CDF oracle for n <= 2)
//! and the strong-Markov restart parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{GraphPotentialParams, SquareMatrix};
use crate::paths::{self, SdeOptions};
use crate::quad;

/// One draw of the potential together with its hitting-time coordinates;
/// tau_i = 1/(2 beta_i) bit-exactly by construction.
#[derive(Debug, Clone)]
pub struct PotentialSample {
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
}

impl PotentialSample {
    pub fn from_tau(params: &GraphPotentialParams, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != params.n() {
            return Err(Error::DimensionMismatch { expected: params.n(), got: tau.len() });
        }
        if tau.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Numerical("hitting times must be finite and positive".into()));
        }
        let beta: Vec<f64> = tau.iter().map(|t| 1.0 / (2.0 * t)).collect();
        let sample = PotentialSample { beta, tau };
        sample.validate(params)?;
        Ok(sample)
    }

    pub fn from_beta(params: &GraphPotentialParams, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != params.n() {
            return Err(Error::DimensionMismatch { expected: params.n(), got: beta.len() });
        }
        if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Numerical("potential entries must be finite and positive".into()));
        }
        let tau: Vec<f64> = beta.iter().map(|b| 1.0 / (2.0 * b)).collect();
        let sample = PotentialSample { beta, tau };
        sample.validate(params)?;
        Ok(sample)
    }

    fn validate(&self, params: &GraphPotentialParams) -> Result<()> {
        let h = params.h_beta(&self.beta)?;
        if !h.is_positive_definite() {
            return Err(Error::Numerical("sampled potential has H_beta not positive definite".into()));
        }
        Ok(())
    }
}

/// Density of the potential at beta; 0 outside the positive-definite
/// region of H_beta.
pub fn nu_density(params: &GraphPotentialParams, beta: &[f64]) -> Result<f64> {
    let n = params.n();
    if beta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: beta.len() });
    }
    let h = params.h_beta(beta)?;
    let chol = match h.cholesky() {
        Some(c) => c,
        None => return Ok(0.0),
    };
    let theta = params.theta();
    let eta = params.eta();
    let h_theta = h.mul_vec(theta)?;
    let quad_theta: f64 = theta.iter().zip(&h_theta).map(|(a, b)| a * b).sum();
    let hinv_eta = chol.solve(eta)?;
    let quad_eta: f64 = eta.iter().zip(&hinv_eta).map(|(a, b)| a * b).sum();
    let cross: f64 = eta.iter().zip(theta).map(|(a, b)| a * b).sum();
    let log_theta_prod: f64 = theta.iter().map(|t| t.ln()).sum();
    let log_norm = 0.5 * (n as f64) * (2.0 / std::f64::consts::PI).ln();
    let log_density = log_norm - 0.5 * quad_theta - 0.5 * quad_eta + cross + log_theta_prod
        - 0.5 * chol.log_determinant();
    Ok(log_density.exp())
}

/// Closed-form Laplace transform of the potential at lambda >= 0.
pub fn nu_laplace(params: &GraphPotentialParams, lambda: &[f64]) -> Result<f64> {
    let n = params.n();
    if lambda.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lambda.len() });
    }
    if lambda.iter().any(|l| *l < 0.0) {
        return Err(Error::InvalidParam("lambda must be entrywise >= 0".into()));
    }
    let theta = params.theta();
    let eta = params.eta();
    let s: Vec<f64> = theta.iter().zip(lambda).map(|(t, l)| (t * t + l).sqrt()).collect();
    let ws = params.w().mul_vec(&s)?;
    let quad_s: f64 = s.iter().zip(&ws).map(|(a, b)| a * b).sum();
    let wt = params.w().mul_vec(theta)?;
    let quad_t: f64 = theta.iter().zip(&wt).map(|(a, b)| a * b).sum();
    let cross: f64 = eta.iter().zip(theta.iter().zip(&s)).map(|(e, (t, si))| e * (t - si)).sum();
    let mut prod = 0.0;
    for i in 0..n {
        prod += (theta[i] / s[i]).ln();
    }
    Ok((-0.5 * quad_s + 0.5 * quad_t + cross + prod).exp())
}

/// Draw the potential by simulating the interacting system to full
/// absorption and inverting the hitting times.
pub fn sample_beta_via_hitting(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<PotentialSample> {
    let tau = paths::simulate_tau(params, rng, opts)?;
    PotentialSample::from_tau(params, tau)
}

// ---------------------------------------------------------------------------
// Quadrature over the positive-definite region (n <= 2)
// ---------------------------------------------------------------------------

fn typical_beta(params: &GraphPotentialParams, i: usize) -> f64 {
    let mut denom = params.eta()[i];
    for j in 0..params.n() {
        if j != i {
            denom += params.w().get(i, j) * params.theta()[j];
        }
    }
    let mean_tau = if denom > 0.0 {
        params.theta()[i] / denom
    } else {
        params.theta()[i] * params.theta()[i]
    };
    0.5 / mean_tau + 0.5 * params.w().get(i, i)
}

/// Integral of density * exp(-<lambda, beta>) over the support, by nested
/// adaptive quadrature with the square-root substitution that removes the
/// 1/sqrt|H| edge singularity. n <= 2 only.
pub fn nu_laplace_quadrature(params: &GraphPotentialParams, lambda: &[f64]) -> Result<f64> {
    let n = params.n();
    if n > 2 {
        return Err(Error::UnsupportedDimension { n, max: 2 });
    }
    if lambda.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lambda.len() });
    }
    let w = params.w();
    match n {
        1 => {
            let lo = 0.5 * w.get(0, 0);
            let scale = (typical_beta(params, 0) - lo).max(1e-3).sqrt();
            let f = |v: f64| {
                let b = lo + v * v;
                let d = nu_density(params, &[b]).unwrap_or(0.0);
                d * (-lambda[0] * b).exp() * 2.0 * v
            };
            Ok(quad::integrate_to_inf(&f, 0.0, scale, 1e-10))
        }
        _ => {
            let lo1 = 0.5 * w.get(0, 0);
            let scale1 = (typical_beta(params, 0) - lo1).max(1e-3).sqrt();
            let w12 = w.get(0, 1);
            let outer = |v1: f64| {
                let b1 = lo1 + v1 * v1;
                let h1 = 2.0 * b1 - w.get(0, 0);
                if h1 <= 0.0 {
                    return 0.0;
                }
                let lo2 = 0.5 * (w.get(1, 1) + w12 * w12 / h1);
                let scale2 = (typical_beta(params, 1) - 0.5 * w.get(1, 1)).max(1e-3).sqrt();
                let inner = |v2: f64| {
                    let b2 = lo2 + v2 * v2;
                    let d = nu_density(params, &[b1, b2]).unwrap_or(0.0);
                    d * (-lambda[0] * b1 - lambda[1] * b2).exp() * 2.0 * v2
                };
                quad::integrate_to_inf(&inner, 0.0, scale2, 1e-11) * 2.0 * v1
            };
            Ok(quad::integrate_to_inf(&outer, 0.0, scale1, 1e-9))
        }
    }
}

/// Total mass of the density by quadrature (1 for a correct density).
pub fn nu_normalization_quadrature(params: &GraphPotentialParams) -> Result<f64> {
    nu_laplace_quadrature(params, &vec![0.0; params.n()])
}

// ---------------------------------------------------------------------------
// Grid inverse-CDF oracle (n <= 2)
// ---------------------------------------------------------------------------

/// Inverse-CDF table over the square-root-mapped coordinate: nodes carry
/// the mapped beta values and the normalized cumulative mass.
struct CdfTable {
    beta: Vec<f64>,
    cdf: Vec<f64>,
}

impl CdfTable {
    /// Build from an unnormalized density g(beta) on (lo, inf), tabulated
    /// along beta = lo + (scale * w/(1-w))^2 at `cells`+1 uniform w-nodes.
    fn build(lo: f64, scale: f64, cells: usize, g: impl Fn(f64) -> f64) -> Self {
        let mut beta = Vec::with_capacity(cells + 1);
        let mut weight = Vec::with_capacity(cells + 1);
        for k in 0..=cells {
            let wv = k as f64 / (cells + 1) as f64;
            let v = scale * wv / (1.0 - wv);
            let b = lo + v * v;
            let dv_dw = scale / ((1.0 - wv) * (1.0 - wv));
            beta.push(b);
            weight.push(g(b) * 2.0 * v * dv_dw);
        }
        let mut cdf = vec![0.0; cells + 1];
        for k in 1..=cells {
            cdf[k] = cdf[k - 1] + 0.5 * (weight[k] + weight[k - 1]);
        }
        let total = cdf[cells];
        for c in cdf.iter_mut() {
            *c /= total;
        }
        CdfTable { beta, cdf }
    }

    fn invert(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1).max(1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        self.beta[k - 1] + t * (self.beta[k] - self.beta[k - 1])
    }

    /// Forward CDF at beta by interpolation (accuracy checks).
    fn eval(&self, b: f64) -> f64 {
        let k = self.beta.partition_point(|&x| x < b).min(self.beta.len() - 1).max(1);
        let (b0, b1) = (self.beta[k - 1], self.beta[k]);
        let t = if b1 > b0 { ((b - b0) / (b1 - b0)).clamp(0.0, 1.0) } else { 0.0 };
        (self.cdf[k - 1] + t * (self.cdf[k] - self.cdf[k - 1])).clamp(0.0, 1.0)
    }
}

/// Inverse-CDF sampler for the potential at n <= 2, built from the density
/// alone (independent of the path engine): an adaptive-resolution marginal
/// table for the first coordinate, and for n = 2 a family of conditional
/// tables interpolated along the marginal grid.
pub struct GridOracle {
    params: GraphPotentialParams,
    marginal: CdfTable,
    conditionals: Vec<CdfTable>,
}

const MARGINAL_CELLS: usize = 4096;
const COND_NODES: usize = 768;
const COND_CELLS: usize = 512;

impl GridOracle {
    pub fn build(params: &GraphPotentialParams) -> Result<Self> {
        let n = params.n();
        if n > 2 {
            return Err(Error::UnsupportedDimension { n, max: 2 });
        }
        let w = params.w();
        if n == 1 {
            let lo = 0.5 * w.get(0, 0);
            let scale = (typical_beta(params, 0) - lo).max(1e-3).sqrt();
            let p = params.clone();
            let marginal = CdfTable::build(lo, scale, MARGINAL_CELLS, move |b| {
                nu_density(&p, &[b]).unwrap_or(0.0)
            });
            return Ok(GridOracle { params: params.clone(), marginal, conditionals: Vec::new() });
        }

        let lo1 = 0.5 * w.get(0, 0);
        let scale1 = (typical_beta(params, 0) - lo1).max(1e-3).sqrt();
        let w12 = w.get(0, 1);
        let scale2 = (typical_beta(params, 1) - 0.5 * w.get(1, 1)).max(1e-3).sqrt();
        let marginal_density = |b1: f64| {
            let h1 = 2.0 * b1 - w.get(0, 0);
            if h1 <= 0.0 {
                return 0.0;
            }
            let lo2 = 0.5 * (w.get(1, 1) + w12 * w12 / h1);
            let inner = |v2: f64| {
                let b2 = lo2 + v2 * v2;
                nu_density(params, &[b1, b2]).unwrap_or(0.0) * 2.0 * v2
            };
            quad::integrate_to_inf(&inner, 0.0, scale2, 1e-10)
        };
        let marginal = CdfTable::build(lo1, scale1, COND_NODES, marginal_density);

        let mut conditionals = Vec::with_capacity(marginal.beta.len());
        for &b1 in &marginal.beta {
            let h1 = 2.0 * b1 - w.get(0, 0);
            if h1 <= 0.0 {
                // zero-mass edge node: degenerate table, never sampled
                conditionals.push(CdfTable {
                    beta: vec![0.0, 1.0],
                    cdf: vec![0.0, 1.0],
                });
                continue;
            }
            let lo2 = 0.5 * (w.get(1, 1) + w12 * w12 / h1);
            let table = CdfTable::build(lo2, scale2, COND_CELLS, |b2| {
                nu_density(params, &[b1, b2]).unwrap_or(0.0)
            });
            conditionals.push(table);
        }
        Ok(GridOracle { params: params.clone(), marginal, conditionals })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> PotentialSample {
        loop {
            if let Some(s) = self.try_sample(rng) {
                return s;
            }
        }
    }

    fn try_sample(&self, rng: &mut impl Rng) -> Option<PotentialSample> {
        let u1: f64 = rng.random();
        if self.params.n() == 1 {
            let b = self.marginal.invert(u1);
            return PotentialSample::from_beta(&self.params, vec![b]).ok();
        }
        let b1 = self.marginal.invert(u1);
        // blend the two neighboring conditional tables at the same u2
        let k = self.marginal.beta.partition_point(|&x| x < b1).min(self.marginal.beta.len() - 1).max(1);
        let (x0, x1) = (self.marginal.beta[k - 1], self.marginal.beta[k]);
        let lam = if x1 > x0 { ((b1 - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
        let u2: f64 = rng.random();
        let q0 = self.conditionals[k - 1].invert(u2);
        let q1 = self.conditionals[k].invert(u2);
        let b2 = (1.0 - lam) * q0 + lam * q1;
        PotentialSample::from_beta(&self.params, vec![b1, b2]).ok()
    }

    /// Sup-distance between the sampler's marginal CDF for the first
    /// coordinate and a reference CDF, probed on a uniform quantile grid.
    pub fn marginal_sup_error(&self, reference_cdf: impl Fn(f64) -> f64, probes: usize) -> f64 {
        let mut sup = 0.0_f64;
        for k in 1..probes {
            let u = k as f64 / probes as f64;
            let b = self.marginal.invert(u);
            sup = sup.max((reference_cdf(b) - u).abs());
        }
        sup
    }

    pub(crate) fn marginal_cdf_at(&self, b: f64) -> f64 {
        self.marginal.eval(b)
    }
}

/// Convenience one-shot draw through a freshly built oracle. Building the
/// tables dominates the cost; for many draws build [`GridOracle`] once.
pub fn sample_beta_oracle(params: &GraphPotentialParams, rng: &mut impl Rng) -> Result<PotentialSample> {
    Ok(GridOracle::build(params)?.sample(rng))
}

// ---------------------------------------------------------------------------
// Strong Markov restart
// ---------------------------------------------------------------------------

/// Parameters of the shifted system after a multi-time T: conductances
/// W K_{T^tau}^{-1}, boundary drift eta + W~ (T^tau) eta, and start levels
/// X(T).
#[derive(Debug, Clone)]
pub struct RestartParams {
    pub w_tilde: SquareMatrix,
    pub eta_tilde: Vec<f64>,
    pub x_at_t: Vec<f64>,
}

pub fn restart_params(
    params: &GraphPotentialParams,
    t_clocks: &[f64],
    tau: &[f64],
    x_at_t: &[f64],
) -> Result<RestartParams> {
    let n = params.n();
    for (name, v) in [("t_clocks", t_clocks), ("tau", tau), ("x_at_t", x_at_t)] {
        if v.len() != n {
            return Err(Error::InvalidParam(format!("{name} has length {}, expected {n}", v.len())));
        }
    }
    let clock: Vec<f64> = t_clocks.iter().zip(tau).map(|(t, s)| t.min(*s)).collect();
    let k = params.k_t(&clock)?;
    let kt_lu = k.transpose().lu()?;
    let mut w_tilde = SquareMatrix::zeros(n);
    for j in 0..n {
        // row j of W~ solves K^T x = (column j of W)
        let col: Vec<f64> = (0..n).map(|i| params.w().get(i, j)).collect();
        let row = kt_lu.solve(&col)?;
        for (i, v) in row.into_iter().enumerate() {
            w_tilde.set(j, i, v);
        }
    }
    // symmetric in exact arithmetic; enforce it
    let scale = w_tilde.max_abs().max(1.0);
    let mut sym = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = 0.5 * (w_tilde.get(i, j) + w_tilde.get(j, i));
            if v < -1e-9 * scale {
                return Err(Error::Numerical(format!("restart conductance W~[{i}][{j}] = {v} < 0")));
            }
            sym.set(i, j, v.max(0.0));
        }
    }
    let shifted: Vec<f64> = clock.iter().zip(params.eta()).map(|(c, e)| c * e).collect();
    let w_shift = sym.mul_vec(&shifted)?;
    let mut eta_tilde = Vec::with_capacity(n);
    for i in 0..n {
        let v = params.eta()[i] + w_shift[i];
        if v < -1e-9 {
            return Err(Error::Numerical(format!("restart drift eta~[{i}] = {v} < 0")));
        }
        eta_tilde.push(v.max(0.0));
    }
    Ok(RestartParams { w_tilde: sym, eta_tilde, x_at_t: x_at_t.to_vec() })
}

impl RestartParams {
    /// Continuation system E(W~, X(T), eta~); zero start levels mean the
    /// coordinate is already absorbed.
    pub fn to_params(&self) -> Result<GraphPotentialParams> {
        let start: Vec<f64> = self.x_at_t.iter().map(|&v| v.max(0.0)).collect();
        GraphPotentialParams::continuation(self.w_tilde.clone(), start, self.eta_tilde.clone())
    }
}

/// Sample the total hitting-time vector by simulating to the multi-time
/// `t_multi`, restarting with the shifted parameters, and summing.
pub fn two_stage_tau(
    params: &GraphPotentialParams,
    t_multi: &[f64],
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<Vec<f64>> {
    let n = params.n();
    if t_multi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: t_multi.len() });
    }
    let t_end = t_multi.iter().cloned().fold(0.0, f64::max);
    let stage1 = paths::simulate_x_to_time(params, rng, opts, t_end)?;
    let mut x_at_t = vec![0.0; n];
    for i in 0..n {
        let k = (t_multi[i] / opts.dt).round() as usize;
        let k = k.min(stage1.grid.len() - 1);
        x_at_t[i] = if stage1.tau[i] <= t_multi[i] { 0.0 } else { stage1.paths[i][k] };
    }
    let rp = restart_params(params, t_multi, &stage1.tau, &x_at_t)?;
    let cont = rp.to_params()?;
    let tau2 = paths::simulate_tau_from(&cont, &rp.x_at_t, rng, opts)?;
    let mut total = vec![0.0; n];
    for i in 0..n {
        total[i] = if stage1.tau[i] <= t_multi[i] {
            stage1.tau[i]
        } else {
            t_multi[i] + tau2[i]
        };
    }
    Ok(total)
}
