//! Deterministic solvers for `x = b + y + ∫h(x)`, its reflected version,
//! composition with time changes and the Gronwall certificate.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{domain, Error, Result};
use crate::paths::{reflect_upper_grid, Cadlag, GridPath, LinearPath, Regulated, StepPath};

/// Lipschitz drift `h` of an integral representation.
#[derive(Clone)]
pub enum DriftFn {
    Zero,
    /// `h(s) = −μs`.
    Linear { mu: f64 },
    /// `h(s) = offset − μ(s∧0) − θs⁺`; the offset carries a constant drift
    /// such as `−βμ`, so `h(0) = offset`.
    PiecewiseLinear { mu: f64, theta: f64, offset: f64 },
    /// Arbitrary function with a stated Lipschitz modulus.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        modulus: f64,
    },
}

impl fmt::Debug for DriftFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftFn::Zero => f.write_str("Zero"),
            DriftFn::Linear { mu } => write!(f, "Linear {{ mu: {mu} }}"),
            DriftFn::PiecewiseLinear { mu, theta, offset } => write!(
                f,
                "PiecewiseLinear {{ mu: {mu}, theta: {theta}, offset: {offset} }}"
            ),
            DriftFn::Custom { modulus, .. } => write!(f, "Custom {{ modulus: {modulus} }}"),
        }
    }
}

impl DriftFn {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, modulus: f64) -> Self {
        DriftFn::Custom {
            f: Arc::new(f),
            modulus,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            DriftFn::Zero => 0.0,
            DriftFn::Linear { mu } => -mu * s,
            DriftFn::PiecewiseLinear { mu, theta, offset } => {
                offset - mu * s.min(0.0) - theta * s.max(0.0)
            }
            DriftFn::Custom { f, .. } => f(s),
        }
    }

    /// Lipschitz constant `c`.
    pub fn modulus(&self) -> f64 {
        match self {
            DriftFn::Zero => 0.0,
            DriftFn::Linear { mu } => mu.abs(),
            DriftFn::PiecewiseLinear { mu, theta, .. } => mu.abs().max(theta.abs()),
            DriftFn::Custom { modulus, .. } => *modulus,
        }
    }
}

/// Uniform grid `0, dt, 2dt, …` closed at `horizon`.
pub fn uniform_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain("step", format!("dt = {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(domain("horizon", format!("{horizon}")));
    }
    let steps = libm::ceil(horizon / dt - 1e-9) as usize;
    let mut grid: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
    grid.push(horizon);
    Ok(grid)
}

/// Uniform grid with the given epochs inserted.
pub fn solver_grid(horizon: f64, dt: f64, epochs: &[f64]) -> Result<Vec<f64>> {
    let mut grid = uniform_grid(horizon, dt)?;
    grid.extend(epochs.iter().copied().filter(|&t| t > 0.0 && t < horizon));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

fn jump_epochs<Y: Cadlag + ?Sized>(y: &Y) -> Vec<f64> {
    y.jumps()
        .into_iter()
        .filter(|&(_, j)| j != 0.0)
        .map(|(t, _)| t)
        .collect()
}

/// Left-point Euler recursion for `w = b + y + ∫h(x)` with `x` the upper
/// reflection of `w` at `kappa` (no reflection when `kappa = ∞`).
fn euler<Y: Cadlag + ?Sized>(b: f64, y: &Y, h: &DriftFn, kappa: f64, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ys = sample_any(y, grid);
    let mut xs = Vec::with_capacity(grid.len());
    let mut us = Vec::with_capacity(grid.len());
    let mut integral = 0.0;
    let mut u = 0.0f64;
    for k in 0..grid.len() {
        if k > 0 {
            integral += h.eval(xs[k - 1]) * (grid[k] - grid[k - 1]);
        }
        let w = b + ys[k] + integral;
        u = u.max(w - kappa);
        xs.push(w - u);
        us.push(u);
    }
    (xs, us)
}

fn sample_any<Y: Cadlag + ?Sized>(y: &Y, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&t| y.value(t)).collect()
}

fn check_horizon_match<Y: Cadlag + ?Sized>(y: &Y, grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) || grid.last().is_none_or(|&g| g > y.horizon()) {
        return Err(domain("grid", "must start at 0 and stay within the driver's horizon"));
    }
    Ok(())
}

/// Solves `x(t) = b + y(t) + ∫₀ᵗ h(x(s)) ds` by forward Euler on a uniform
/// grid of step `dt` refined with the jump epochs of `y`.
pub fn solve_integral_rep<Y: Cadlag + ?Sized>(b: f64, y: &Y, h: &DriftFn, dt: f64) -> Result<GridPath> {
    let grid = solver_grid(y.horizon(), dt, &jump_epochs(y))?;
    solve_integral_rep_on(b, y, h, &grid)
}

/// [`solve_integral_rep`] on a caller-supplied grid.
pub fn solve_integral_rep_on<Y: Cadlag + ?Sized>(b: f64, y: &Y, h: &DriftFn, grid: &[f64]) -> Result<GridPath> {
    check_horizon_match(y, grid)?;
    let (xs, _) = euler(b, y, h, f64::INFINITY, grid);
    GridPath::new(grid.to_vec(), xs)
}

/// Solves `x = b + y + ∫h(x) − u`, `x ≤ κ`, with `u` nondecreasing and
/// increasing only when `x = κ`.
///
/// The discrete system is solved exactly by forward substitution: at each
/// grid point `w_k = b + y_k + Σ_{j<k} h(x_j)Δt_j`, `u_k = max_{j≤k}(w_j − κ)⁺`
/// and `x_k = w_k − u_k`. With `κ = ∞` the output equals
/// [`solve_integral_rep`] bit for bit.
pub fn solve_reflected_rep<Y: Cadlag + ?Sized>(
    b: f64,
    y: &Y,
    h: &DriftFn,
    kappa: f64,
    dt: f64,
) -> Result<Regulated<GridPath>> {
    let grid = solver_grid(y.horizon(), dt, &jump_epochs(y))?;
    solve_reflected_rep_on(b, y, h, kappa, &grid)
}

pub fn solve_reflected_rep_on<Y: Cadlag + ?Sized>(
    b: f64,
    y: &Y,
    h: &DriftFn,
    kappa: f64,
    grid: &[f64],
) -> Result<Regulated<GridPath>> {
    check_reflected(b, kappa)?;
    check_horizon_match(y, grid)?;
    let (xs, us) = euler(b, y, h, kappa, grid);
    Ok(Regulated {
        content: GridPath::new(grid.to_vec(), xs)?,
        regulator: GridPath::new(grid.to_vec(), us)?,
    })
}

fn check_reflected(b: f64, kappa: f64) -> Result<()> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(domain("barrier", format!("kappa = {kappa}")));
    }
    if b > kappa {
        return Err(domain("initial value", format!("b = {b} exceeds kappa = {kappa}")));
    }
    Ok(())
}

/// Picard iteration `w ← b + y + ∫h(φ_κ(w))` for the same discrete system,
/// restarted on blocks of length `1/(4c)` so that each block is a
/// contraction. Stops a block when successive iterates differ by less than
/// `1e-10` or after 100 sweeps. Kept as an independent check of
/// [`solve_reflected_rep`].
pub fn solve_reflected_picard<Y: Cadlag + ?Sized>(
    b: f64,
    y: &Y,
    h: &DriftFn,
    kappa: f64,
    dt: f64,
) -> Result<Regulated<GridPath>> {
    check_reflected(b, kappa)?;
    let grid = solver_grid(y.horizon(), dt, &jump_epochs(y))?;
    let ys = sample_any(y, &grid);
    let c = h.modulus();
    let block = if c > 0.0 { 0.25 / c } else { f64::INFINITY };
    let len = grid.len();
    let mut xs = alloc::vec![0.0; len];
    let mut us = alloc::vec![0.0; len];
    let mut start = 0usize;
    // integral and regulator carried into the current block
    let (mut int0, mut u0) = (0.0, 0.0f64);
    while start < len {
        let mut end = start + 1;
        while end < len && grid[end] - grid[start] <= block {
            end += 1;
        }
        let prev_x = if start == 0 { None } else { Some(xs[start - 1]) };
        let guess = prev_x.unwrap_or(b + ys[0]).min(kappa);
        let mut cur: Vec<f64> = alloc::vec![guess; end - start];
        let mut cur_u: Vec<f64> = alloc::vec![u0; end - start];
        for _ in 0..100 {
            let mut next = Vec::with_capacity(end - start);
            let mut next_u = Vec::with_capacity(end - start);
            let mut integral = int0;
            let mut u = u0;
            for k in start..end {
                if k > 0 {
                    let left = if k > start { cur[k - 1 - start] } else { xs[k - 1] };
                    integral += h.eval(left) * (grid[k] - grid[k - 1]);
                }
                let w = b + ys[k] + integral;
                u = u.max(w - kappa);
                next.push(w - u);
                next_u.push(u);
            }
            let diff = next
                .iter()
                .zip(&cur)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            cur = next;
            cur_u = next_u;
            if diff < 1e-10 {
                break;
            }
        }
        xs[start..end].copy_from_slice(&cur);
        us[start..end].copy_from_slice(&cur_u);
        u0 = us[end - 1];
        int0 = {
            let mut integral = int0;
            for k in start.max(1)..end {
                integral += h.eval(xs[k - 1]) * (grid[k] - grid[k - 1]);
            }
            integral
        };
        start = end;
    }
    Ok(Regulated {
        content: GridPath::new(grid.clone(), xs)?,
        regulator: GridPath::new(grid, us)?,
    })
}

/// Running-sup reflection of a grid path (re-exported convenience).
pub fn reflect(y: &GridPath, kappa: f64) -> Result<Regulated<GridPath>> {
    reflect_upper_grid(y, kappa)
}

/// `t ↦ x(τ(t))` for piecewise-linear `x` and nondecreasing piecewise-linear
/// `τ` with range inside `x`'s domain. Jumps of `x` crossed by `τ` are kept
/// exactly.
pub fn compose(x: &LinearPath, tau: &LinearPath) -> Result<LinearPath> {
    if !tau.is_nondecreasing() {
        return Err(Error::Contract("time change must be nondecreasing".into()));
    }
    let th = tau.horizon();
    let lo = tau.initial();
    let hi = tau.value(th);
    if lo < 0.0 || hi > x.horizon() * (1.0 + 1e-12) {
        return Err(domain(
            "time change range",
            format!("[{lo}, {hi}] not within [0, {}]", x.horizon()),
        ));
    }
    let xk = x.knots();
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut jumps = Vec::new();
    let mut slopes = Vec::new();
    let mut last_end = x.initial();
    let tk = tau.knots();
    for i in 0..tk.len() {
        let (t0, v0, _, s) = tau.segment_parts(i);
        let t1 = tk.get(i + 1).copied().unwrap_or(th);
        let v1 = v0 + s * (t1 - t0);
        // x-segment containing v0 (right-continuous)
        let mut j = xk.partition_point(|&k| k <= v0).saturating_sub(1);
        let (xk0, xv0, _, xs0) = x.segment_parts(j);
        let value = xv0 + xs0 * (v0 - xk0);
        knots.push(t0);
        values.push(value);
        // segment ends are recomputed, so continuity shows up as rounding noise
        let jump = value - last_end;
        let jump = if i == 0 || jump.abs() <= 1e-12 * (1.0 + value.abs()) {
            0.0
        } else {
            jump
        };
        jumps.push(jump);
        slopes.push(xs0 * s);
        if s > 0.0 {
            // crossings of later x-knots strictly inside (v0, v1)
            while j + 1 < xk.len() && xk[j + 1] < v1 {
                j += 1;
                let (e, ev, ej, es) = x.segment_parts(j);
                let tc = t0 + (e - v0) / s;
                if !(tc > t0 && tc < t1) {
                    continue;
                }
                if tc <= *knots.last().expect("nonempty") {
                    continue;
                }
                knots.push(tc);
                values.push(ev);
                jumps.push(ej);
                slopes.push(es * s);
            }
        }
        let (lk, lv, ls) = (
            *knots.last().expect("nonempty"),
            *values.last().expect("nonempty"),
            *slopes.last().expect("nonempty"),
        );
        last_end = lv + ls * (t1 - lk);
    }
    // a jump of x reached exactly at the horizon
    let at_end = xk.partition_point(|&k| k < hi);
    let approached = tau.value(*tk.last().expect("nonempty")) < hi;
    if approached && at_end > 0 && at_end < xk.len() && xk[at_end] == hi {
        let (_, ev, ej, _) = x.segment_parts(at_end);
        if ej != 0.0 && th > *knots.last().expect("nonempty") {
            knots.push(th);
            values.push(ev);
            jumps.push(ej);
            slopes.push(0.0);
        }
    }
    Ok(LinearPath::from_parts(knots, values, jumps, slopes, th))
}

/// Composition of a step path with a time change; the result is a step
/// path.
pub fn compose_step(x: &StepPath, tau: &LinearPath) -> Result<StepPath> {
    let c = compose(&LinearPath::from_step(x), tau)?;
    let mut b = StepPath::builder(c.initial(), c.horizon());
    for (&t, &v) in c.knots().iter().zip(c.knot_values()).skip(1) {
        b.push(t, v)?;
    }
    Ok(b.finish())
}

/// `ε·e^{cT}`; requires `ε, c ≥ 0`.
pub fn gronwall_bound(eps: f64, c: f64, horizon: f64) -> f64 {
    debug_assert!(eps >= 0.0 && c >= 0.0);
    if eps == 0.0 {
        return 0.0;
    }
    eps * libm::exp(c * horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn analytic_error(dt: f64) -> f64 {
        let y = StepPath::zero(2.0);
        let x = solve_integral_rep(1.0, &y, &DriftFn::Linear { mu: 1.0 }, dt).unwrap();
        x.times()
            .iter()
            .zip(x.values())
            .fold(0.0, |m, (&t, &v)| m.max((v - libm::exp(-t)).abs()))
    }

    #[test]
    fn euler_is_first_order() {
        let e1 = analytic_error(0.01);
        let e2 = analytic_error(0.005);
        let ratio = e1 / e2;
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
        assert!(e1 < 0.01);
    }

    #[test]
    fn zero_drift_returns_driver() {
        let y = StepPath::new(0.3, vec![0.25, 0.7], vec![-1.0, 2.0], 1.0).unwrap();
        let x = solve_integral_rep(1.5, &y, &DriftFn::Zero, 0.1).unwrap();
        for (&t, &v) in x.times().iter().zip(x.values()) {
            assert_eq!(v, 1.5 + y.value(t));
        }
        assert!(x.times().contains(&0.25) && x.times().contains(&0.7));
        assert!(solve_integral_rep(0.0, &y, &DriftFn::Zero, 0.0).is_err());
    }

    #[test]
    fn inactive_barrier_is_identical() {
        let y = StepPath::new(0.0, vec![0.4], vec![0.2], 3.0).unwrap();
        let h = DriftFn::PiecewiseLinear { mu: 1.0, theta: 0.5, offset: -1.0 };
        let free = solve_integral_rep(0.0, &y, &h, 0.01).unwrap();
        let inf = solve_reflected_rep(0.0, &y, &h, f64::INFINITY, 0.01).unwrap();
        assert_eq!(inf.content, free);
        assert_eq!(inf.regulator.values().iter().fold(0.0f64, |m, &v| m.max(v)), 0.0);
        let high = solve_reflected_rep(0.0, &y, &h, 10.0, 0.01).unwrap();
        assert_eq!(high.content, free);
    }

    #[test]
    fn running_sup_example() {
        let y = LinearPath::affine(0.0, 1.0, 2.0);
        let r = solve_reflected_rep(0.0, &y, &DriftFn::Zero, 0.0, 0.01).unwrap();
        for (&t, (&x, &u)) in r.content.times().iter().zip(r.content.values().iter().zip(r.regulator.values())) {
            assert_eq!(x, 0.0);
            assert!((u - t).abs() < 1e-12);
        }
        assert!(solve_reflected_rep(1.0, &y, &DriftFn::Zero, 0.5, 0.01).is_err());
    }

    #[test]
    fn active_barrier_complementarity_and_picard_agreement() {
        let y = LinearPath::affine(0.0, 0.0, 4.0);
        let h = DriftFn::PiecewiseLinear { mu: 1.0, theta: 0.5, offset: 1.0 };
        let r = solve_reflected_rep(0.0, &y, &h, 0.5, 0.001).unwrap();
        assert!(r.regulator.terminal() > 0.0);
        assert_eq!(r.complementarity_residual(0.5), 0.0);
        assert!(r.barrier_excess(0.5) <= 0.0);
        let p = solve_reflected_picard(0.0, &y, &h, 0.5, 0.001).unwrap();
        assert!(p.content.sup_distance(&r.content).unwrap() < 1e-9);
        assert!(p.regulator.sup_distance(&r.regulator).unwrap() < 1e-9);
    }

    #[test]
    fn composition_examples() {
        let x = LinearPath::lin_comb(
            1.0,
            &LinearPath::from_step(&StepPath::counting(&[0.3, 0.9, 1.7], 2.0).unwrap()),
            -1.0,
            &LinearPath::affine(0.0, 1.0, 2.0),
        )
        .unwrap();
        let id = LinearPath::affine(0.0, 1.0, 2.0);
        let same = compose(&x, &id).unwrap();
        for t in [0.0, 0.29, 0.3, 0.31, 1.0, 1.7, 2.0] {
            assert!((same.value(t) - x.value(t)).abs() < 1e-15);
        }
        let half = LinearPath::affine(0.0, 2.0, 1.0);
        let fast = compose(&x, &half).unwrap();
        for t in [0.1, 0.15, 0.45, 0.5, 0.86, 1.0] {
            assert!((fast.value(t) - x.value(2.0 * t)).abs() < 1e-12, "t = {t}");
        }
        let jumps: Vec<f64> = fast.jumps().into_iter().filter(|j| j.1 != 0.0).map(|j| j.1).collect();
        assert_eq!(jumps, vec![1.0, 1.0, 1.0]);
        let flat = compose(&x, &LinearPath::affine(0.95, 0.0, 1.0)).unwrap();
        assert_eq!(flat.sup_abs(), x.value(0.95).abs());
        assert!(compose(&x, &LinearPath::affine(0.0, 3.0, 1.0)).is_err());
    }

    #[test]
    fn step_composition() {
        let x = StepPath::counting(&[0.5, 1.5], 2.0).unwrap();
        let tau = LinearPath::affine(0.0, 2.0, 1.0);
        let c = compose_step(&x, &tau).unwrap();
        assert_eq!(c.epochs(), &[0.25, 0.75]);
        assert_eq!(c.values(), &[1.0, 2.0]);
    }

    #[test]
    fn gronwall() {
        assert_eq!(gronwall_bound(0.0, 3.0, 1.0), 0.0);
        assert_eq!(gronwall_bound(0.2, 0.0, 5.0), 0.2);
        assert!((gronwall_bound(0.1, 1.0, 2.0) - 0.738_905_609_893_065).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        assert_eq!(uniform_grid(1.0, 0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(uniform_grid(1.0, 0.3).unwrap().len(), 5);
        assert_eq!(solver_grid(1.0, 0.5, &[0.5, 0.7, 1.0]).unwrap(), vec![0.0, 0.5, 0.7, 1.0]);
    }
}
