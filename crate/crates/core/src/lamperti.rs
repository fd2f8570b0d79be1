//! The Lamperti clock change and the opposite-drift system in the changed
//! time scale: forward transport of simulated X-paths (X -> rho), the
//! autonomous rho-SDE, the conditional representation given the clock
//! limits, and extraction of the conditional driving noise B*.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::{DenseSolver, GraphPotentialParams};
use crate::paths::XPathBundle;

const EXP_GUARD: f64 = 1e300;

/// Paths of (rho, T) over a uniform grid in the changed time u.
#[derive(Debug, Clone)]
pub struct RhoPathBundle {
    pub u_grid: Vec<f64>,
    /// rho[i][k] = rho_i(u_grid[k])
    pub rho: Vec<Vec<f64>>,
    /// t_clock[i][k] = T_i(u_grid[k]), strictly increasing in k
    pub t_clock: Vec<Vec<f64>>,
    /// Clock limits T_i^inf when known (from absorption or given).
    pub t_inf: Option<Vec<f64>>,
    /// Driving noise of the conditional representation when known.
    pub b_star: Option<Vec<Vec<f64>>>,
}

impl RhoPathBundle {
    pub fn n(&self) -> usize {
        self.rho.len()
    }

    /// Bridge fraction (T_i^inf - T_i(u)) / T_i^inf.
    pub fn phi(&self, i: usize, k: usize) -> Option<f64> {
        let t_inf = self.t_inf.as_ref()?[i];
        Some((t_inf - self.t_clock[i][k]) / t_inf)
    }
}

/// Transport a fully absorbed X-bundle into the Lamperti scale:
/// U_i(t) = int 1_{s<tau_i} / X_i(s)^2 ds accumulated by trapezoid,
/// inverted onto a uniform u-grid, with rho_i(u) = log X_i(T_i(u)).
///
/// Inside the final cell before absorption the path is modeled as linear
/// decay to 0 at tau_i, which makes the cell's clock integral available in
/// closed form; only u-targets close to u_max land there.
pub fn clock_change(x: &XPathBundle, du: f64, u_max: f64) -> Result<RhoPathBundle> {
    if !(du > 0.0) || !(u_max > 0.0) {
        return Err(Error::InvalidParam("clock_change needs du > 0 and u_max > 0".into()));
    }
    if !x.absorbed.iter().all(|&a| a) {
        return Err(Error::DegenerateClock("input bundle is not fully absorbed".into()));
    }
    let n = x.paths.len();
    let steps = (u_max / du).round() as usize;
    let u_grid: Vec<f64> = (0..=steps).map(|k| k as f64 * du).collect();
    let mut rho = vec![Vec::with_capacity(steps + 1); n];
    let mut t_clock = vec![Vec::with_capacity(steps + 1); n];

    for i in 0..n {
        let path = &x.paths[i];
        let tau = x.tau[i];
        rho[i].push(path[0].ln());
        t_clock[i].push(0.0);
        let mut next = 1usize; // next u-target index
        let mut u_acc = 0.0;
        let mut k = 0usize;
        while next <= steps && k + 1 < path.len() && path[k + 1] > 0.0 {
            let (x0, x1) = (path[k], path[k + 1]);
            let dt = x.grid[k + 1] - x.grid[k];
            let inc = 0.5 * dt * (1.0 / (x0 * x0) + 1.0 / (x1 * x1));
            if !(inc > 0.0) {
                return Err(Error::DegenerateClock(format!(
                    "clock increment not positive on coordinate {i}"
                )));
            }
            while next <= steps && u_grid[next] <= u_acc + inc {
                let frac = (u_grid[next] - u_acc) / inc;
                let t_star = x.grid[k] + frac * dt;
                let x_star = x0 + frac * (x1 - x0);
                t_clock[i].push(t_star);
                rho[i].push(x_star.ln());
                next += 1;
            }
            u_acc += inc;
            k += 1;
        }
        if next <= steps {
            // final cell: linear decay from x_k at grid[k] to 0 at tau;
            // U(t) - U_k = (tau - t_k)^2 / x_k^2 * (1/(tau-t) - 1/(tau-t_k))
            let x0 = path[k];
            let t_k = x.grid[k];
            if !(x0 > 0.0 && tau > t_k) {
                return Err(Error::DegenerateClock(format!(
                    "cannot extend clock into the absorption cell on coordinate {i}"
                )));
            }
            let c = (tau - t_k) * (tau - t_k) / (x0 * x0);
            while next <= steps {
                let delta = u_grid[next] - u_acc;
                let inv = 1.0 / (tau - t_k) + delta / c;
                let t_star = tau - 1.0 / inv;
                let x_star = x0 * (tau - t_star) / (tau - t_k);
                t_clock[i].push(t_star);
                rho[i].push(x_star.ln());
                next += 1;
            }
        }
    }
    Ok(RhoPathBundle { u_grid, rho, t_clock, t_inf: Some(x.tau.clone()), b_star: None })
}

fn rho_drive(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    du: f64,
    steps: usize,
    start: Option<(&[f64], &[f64])>,
    mut record: impl FnMut(usize, &[f64], &[f64]),
) -> Result<()> {
    let n = params.n();
    let w = params.w();
    let eta = params.eta();
    let (mut r, mut t): (Vec<f64>, Vec<f64>) = match start {
        None => (params.theta().iter().map(|v| v.ln()).collect(), vec![0.0; n]),
        Some((r0, t0)) => {
            if r0.len() != n || t0.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r0.len().min(t0.len()) });
            }
            (r0.to_vec(), t0.to_vec())
        }
    };
    let mut solver = DenseSolver::new(n);
    let mut rhs = vec![0.0; n];
    let mut e_rho = vec![0.0; n];
    let sq = du.sqrt();
    for k in 0..=steps {
        record(k, &r, &t);
        if k == steps {
            break;
        }
        for i in 0..n {
            e_rho[i] = r[i].exp();
            if !(e_rho[i] * e_rho[i] < EXP_GUARD) {
                return Err(Error::Overflow(format!(
                    "e^(2 rho_{i}) overflowed at u = {}",
                    k as f64 * du
                )));
            }
            rhs[i] = e_rho[i] + t[i] * eta[i];
        }
        solver.factor(|i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - t[i] * w.get(i, j)
        })?;
        solver.solve_in_place(&mut rhs);
        for i in 0..n {
            let mut w_term = 0.0;
            for j in 0..n {
                w_term += w.get(i, j) * rhs[j];
            }
            let drift = -0.5 - e_rho[i] * (w_term + eta[i]);
            let xi: f64 = rng.sample(StandardNormal);
            t[i] += e_rho[i] * e_rho[i] * du;
            r[i] += drift * du + sq * xi;
        }
    }
    Ok(())
}

/// Euler-Maruyama simulation of the opposite-drift system in u:
/// d rho_i = dB_i + (-1/2 - e^{rho_i} (W K_{T}^{-1} (e^rho + T eta) + eta)_i) du,
/// dT_i = e^{2 rho_i} du. Starts at (log theta, 0) unless `start` (rho0, T0)
/// is given; K_{T0} must then be invertible.
pub fn simulate_rho_sde(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    du: f64,
    u_max: f64,
    start: Option<(&[f64], &[f64])>,
) -> Result<RhoPathBundle> {
    if !(du > 0.0) || !(u_max > 0.0) {
        return Err(Error::InvalidParam("simulate_rho_sde needs du > 0 and u_max > 0".into()));
    }
    let n = params.n();
    let steps = (u_max / du).round() as usize;
    let u_grid: Vec<f64> = (0..=steps).map(|k| k as f64 * du).collect();
    let mut rho = vec![Vec::with_capacity(steps + 1); n];
    let mut t_clock = vec![Vec::with_capacity(steps + 1); n];
    rho_drive(params, rng, du, steps, start, |_, r, t| {
        for i in 0..n {
            rho[i].push(r[i]);
            t_clock[i].push(t[i]);
        }
    })?;
    Ok(RhoPathBundle { u_grid, rho, t_clock, t_inf: None, b_star: None })
}

/// Endpoint (rho(u_max), T(u_max)) without storing the path.
pub fn rho_endpoint(
    params: &GraphPotentialParams,
    rng: &mut impl Rng,
    du: f64,
    u_max: f64,
    start: Option<(&[f64], &[f64])>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(du > 0.0) || !(u_max > 0.0) {
        return Err(Error::InvalidParam("rho_endpoint needs du > 0 and u_max > 0".into()));
    }
    let n = params.n();
    let steps = (u_max / du).round() as usize;
    let mut out_r = vec![0.0; n];
    let mut out_t = vec![0.0; n];
    rho_drive(params, rng, du, steps, start, |k, r, t| {
        if k == steps {
            out_r.copy_from_slice(r);
            out_t.copy_from_slice(t);
        }
    })?;
    Ok((out_r, out_t))
}

/// Conditional representation given the clock limits: per coordinate draw
/// B*, form e*_i = exp(B*_i + u/2) and its running square integral, and
/// read (rho, T) off the exact algebra
///   T = T^inf theta^2 T* / (T^inf + theta^2 T*),
///   rho = log theta + B* + u/2 + log((T^inf - T)/T^inf).
/// The clock identities theta^2 T* = T^inf T/(T^inf - T) and
/// 1/T^inf + 1/(theta^2 T*) = 1/T then hold to rounding on the stored
/// paths, and T < T^inf structurally. Coordinates are independent.
pub fn simulate_rho_conditional(
    theta: &[f64],
    t_inf: &[f64],
    rng: &mut impl Rng,
    du: f64,
    u_max: f64,
) -> Result<RhoPathBundle> {
    if !(du > 0.0) || !(u_max > 0.0) {
        return Err(Error::InvalidParam("needs du > 0 and u_max > 0".into()));
    }
    let n = theta.len();
    if t_inf.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: t_inf.len() });
    }
    if theta.iter().any(|v| !(*v > 0.0)) || t_inf.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParam("theta and t_inf must be entrywise > 0".into()));
    }
    let steps = (u_max / du).round() as usize;
    let u_grid: Vec<f64> = (0..=steps).map(|k| k as f64 * du).collect();
    let mut rho = vec![Vec::with_capacity(steps + 1); n];
    let mut t_clock = vec![Vec::with_capacity(steps + 1); n];
    let mut b_star = vec![Vec::with_capacity(steps + 1); n];
    let sq = du.sqrt();
    for i in 0..n {
        let th2 = theta[i] * theta[i];
        let ti = t_inf[i];
        let mut b = 0.0_f64;
        let mut t_star = 0.0_f64;
        for k in 0..=steps {
            let u = u_grid[k];
            let denom = ti + th2 * t_star;
            let phi = ti / denom;
            if !(phi > 0.0) {
                return Err(Error::ClockOverrun { coord: i, u });
            }
            rho[i].push(theta[i].ln() + b + 0.5 * u + phi.ln());
            t_clock[i].push(ti * th2 * t_star / denom);
            b_star[i].push(b);
            if k == steps {
                break;
            }
            let e2 = (2.0 * (b + 0.5 * u)).exp();
            if !(e2 < EXP_GUARD) {
                return Err(Error::Overflow(format!("e*_{i}^2 overflowed at u = {u}")));
            }
            t_star += e2 * du;
            let xi: f64 = rng.sample(StandardNormal);
            b += sq * xi;
        }
    }
    Ok(RhoPathBundle {
        u_grid,
        rho,
        t_clock,
        t_inf: Some(t_inf.to_vec()),
        b_star: Some(b_star),
    })
}

/// Reconstruct the conditional driving noise from a bundle with known
/// clock limits:
/// B*_i(u) = rho_i(u) - rho_i(0) - u/2 - log((T^inf - T(u))/(T^inf - T(0))).
pub fn extract_b_star(bundle: &RhoPathBundle) -> Result<Vec<Vec<f64>>> {
    let t_inf = bundle
        .t_inf
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("bundle has no clock limits T_inf".into()))?;
    let n = bundle.n();
    let mut out = vec![Vec::with_capacity(bundle.u_grid.len()); n];
    for i in 0..n {
        let rho0 = bundle.rho[i][0];
        let g0 = t_inf[i] - bundle.t_clock[i][0];
        if !(g0 > 0.0) {
            return Err(Error::ClockOverrun { coord: i, u: 0.0 });
        }
        for (k, &u) in bundle.u_grid.iter().enumerate() {
            let gap = t_inf[i] - bundle.t_clock[i][k];
            if !(gap > 0.0) {
                return Err(Error::ClockOverrun { coord: i, u });
            }
            out[i].push(bundle.rho[i][k] - rho0 - 0.5 * u - (gap / g0).ln());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SquareMatrix;
    use crate::paths::{simulate_x, SdeOptions};
    use crate::scalar::Ig;
    use crate::stats;
    use crate::streams::replica_rng;

    fn c1() -> GraphPotentialParams {
        let w = SquareMatrix::from_rows(&[vec![0.0]]).unwrap();
        GraphPotentialParams::new(w, vec![1.0], vec![1.0]).unwrap()
    }

    fn c2() -> GraphPotentialParams {
        let w = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        GraphPotentialParams::new(w, vec![1.0, 1.0], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn clock_change_inverse_identities() {
        let params = c2();
        let mut rng = replica_rng(2024, 400, 1);
        let x = simulate_x(&params, &mut rng, &SdeOptions::with_dt(2.5e-4)).unwrap();
        let du = 1e-2;
        let bundle = clock_change(&x, du, 1.0).unwrap();
        for i in 0..2 {
            // recompute U by trapezoid up to T_i(u): it must return u
            let mut u_acc = 0.0;
            let mut k = 0usize;
            for (m, &u) in bundle.u_grid.iter().enumerate().skip(1) {
                let t_target = bundle.t_clock[i][m];
                while k + 1 < x.grid.len() && x.grid[k + 1] <= t_target && x.paths[i][k + 1] > 0.0 {
                    let dt = x.grid[k + 1] - x.grid[k];
                    u_acc += 0.5 * dt
                        * (1.0 / (x.paths[i][k] * x.paths[i][k])
                            + 1.0 / (x.paths[i][k + 1] * x.paths[i][k + 1]));
                    k += 1;
                }
                // partial cell
                let dt = x.grid[k + 1] - x.grid[k];
                let frac = (t_target - x.grid[k]) / dt;
                let x1 = x.paths[i][k] + frac * (x.paths[i][k + 1] - x.paths[i][k]);
                let partial = 0.5 * (t_target - x.grid[k])
                    * (1.0 / (x.paths[i][k] * x.paths[i][k]) + 1.0 / (x1 * x1));
                assert!(
                    (u_acc + partial - u).abs() <= 10.0 * du,
                    "coord {i}: U(T(u)) = {} vs u = {u}",
                    u_acc + partial
                );
                // e^{rho(u)} = X(T(u))
                assert!((bundle.rho[i][m].exp() - x1).abs() <= 1e-9 * (1.0 + x1));
            }
        }
    }

    #[test]
    fn clock_integral_diverges_as_grid_refines() {
        // total accumulated U at the last positive grid point grows
        // without bound as dt shrinks
        let params = c1();
        let mut means = Vec::new();
        for (lvl, dt) in [1e-2, 1e-3, 1e-4].iter().enumerate() {
            let mut total = 0.0;
            let reps = 40;
            for r in 0..reps {
                let mut rng = replica_rng(2024, 401 + lvl as u64, r);
                let x = simulate_x(&params, &mut rng, &SdeOptions::with_dt(*dt)).unwrap();
                let mut u = 0.0;
                for k in 0..x.grid.len() - 1 {
                    if x.paths[0][k + 1] > 0.0 {
                        u += 0.5
                            * (x.grid[k + 1] - x.grid[k])
                            * (1.0 / (x.paths[0][k] * x.paths[0][k])
                                + 1.0 / (x.paths[0][k + 1] * x.paths[0][k + 1]));
                    }
                }
                total += u;
            }
            means.push(total / reps as f64);
        }
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
        assert!(means[2] > 10.0);
    }

    #[test]
    fn rho_sde_clock_limit_matches_hitting_law_1d() {
        let params = c1();
        let law = Ig::new(1.0, 1.0).unwrap();
        let taus: Vec<f64> = (0..2000)
            .map(|r| {
                let mut rng = replica_rng(2024, 402, r);
                let b = simulate_rho_sde(&params, &mut rng, 1e-3, 12.0, None).unwrap();
                *b.t_clock[0].last().unwrap()
            })
            .collect();
        let ks = stats::ks_test(&taus, |x| law.cdf(x)).unwrap();
        assert!(ks.p_value > 0.01, "p {}", ks.p_value);
    }

    #[test]
    fn conditional_round_trips_b_star_exactly() {
        let mut rng = replica_rng(2024, 403, 0);
        let bundle = simulate_rho_conditional(&[1.0, 2.0], &[0.7, 1.4], &mut rng, 1e-3, 3.0).unwrap();
        let extracted = extract_b_star(&bundle).unwrap();
        let drawn = bundle.b_star.as_ref().unwrap();
        for i in 0..2 {
            for k in 0..bundle.u_grid.len() {
                assert!((extracted[i][k] - drawn[i][k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conditional_clock_stays_below_limit() {
        let mut rng = replica_rng(2024, 404, 0);
        let bundle = simulate_rho_conditional(&[1.0], &[0.9], &mut rng, 1e-3, 12.0).unwrap();
        for k in 0..bundle.u_grid.len() {
            assert!(bundle.t_clock[0][k] < 0.9);
        }
        // phi in (0, 1], phi(0) = 1
        assert_eq!(bundle.phi(0, 0).unwrap(), 1.0);
        let last = bundle.phi(0, bundle.u_grid.len() - 1).unwrap();
        assert!(last > 0.0 && last < 1.0);
    }

    #[test]
    fn conditional_coordinates_uncorrelated() {
        let mut r1 = Vec::new();
        let mut r2 = Vec::new();
        for r in 0..4000 {
            let mut rng = replica_rng(2024, 405, r);
            let b = simulate_rho_conditional(&[1.0, 1.0], &[0.8, 1.2], &mut rng, 1e-2, 1.0).unwrap();
            r1.push(*b.rho[0].last().unwrap());
            r2.push(*b.rho[1].last().unwrap());
        }
        let corr = stats::pearson_corr(&r1, &r2);
        assert!(stats::corr_fisher_z(corr, r1.len()).abs() <= 2.576, "corr {corr}");
    }

    #[test]
    fn conditional_reconstructs_bridge_moment_at_half_time() {
        // with T_inf fixed at 1, X = e^{rho(U)} at t = 1/2 satisfies
        // E[X^2] = (theta/2)^2 + 3/4
        let mut vals = Vec::new();
        for r in 0..10_000 {
            let mut rng = replica_rng(2024, 406, r);
            let b = simulate_rho_conditional(&[1.0], &[1.0], &mut rng, 1e-3, 8.0).unwrap();
            let k = b.t_clock[0].partition_point(|&t| t < 0.5);
            if k >= b.u_grid.len() {
                continue;
            }
            let x = b.rho[0][k].exp();
            vals.push(x * x);
        }
        let (m, se) = stats::mean_se(&vals);
        assert!((m - 1.0).abs() <= 3.0 * se, "m {m} se {se} n {}", vals.len());
    }

    #[test]
    fn extract_requires_t_inf() {
        let params = c1();
        let mut rng = replica_rng(2024, 407, 0);
        let bundle = simulate_rho_sde(&params, &mut rng, 1e-2, 0.5, None).unwrap();
        assert!(extract_b_star(&bundle).is_err());
    }

    #[test]
    fn general_start_requires_valid_clock() {
        let params = c2();
        let mut rng = replica_rng(2024, 408, 0);
        // T0 with T1*T2 > 1 is outside the validity region for W12 = 1
        let r0 = [0.0, 0.0];
        let t0 = [2.0, 2.0];
        assert!(matches!(
            simulate_rho_sde(&params, &mut rng, 1e-3, 0.1, Some((&r0, &t0))),
            Err(Error::SingularMatrix) | Err(Error::Overflow(_))
        ));
    }
}
