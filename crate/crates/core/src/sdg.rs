//! Simulation of the controlled stochastic differential game
//!
//! ```text
//! dX = (A - B) dW + γ dW̃ + (C + D)(A + B) dt,   X_0 = x0,
//! ```
//!
//! where the maximizer plays `(A, C)`, the minimizer `(B, D)`, `W` is a scalar
//! Brownian motion and `W̃` an independent m-dimensional one. The payoff of a
//! path is `∫₀^τ h(X_s) ds + g(X_τ)` with `τ` the exit time from the domain.
//!
//! Paths are integrated by Euler–Maruyama. An exit inside a step is located by
//! linear interpolation of the level field. With `bridge` enabled (the
//! default), a step that ends inside the domain is still counted as an exit
//! with the Brownian-bridge crossing probability of the normal component,
//! which removes the O(√dt) overshoot bias of discrete monitoring.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, SmoothField};
use crate::geometry::Domain;
use crate::isaacs::ControlAtom;
use crate::linalg::{dot, norm};

const BOUNDARY_TOL: f64 = 1e-12;

/// Joint action of both players at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    pub maximizer: ControlAtom,
    pub minimizer: ControlAtom,
}

pub type FeedbackFn = dyn Fn(f64, &[f64]) -> ControlAtom + Send + Sync;

#[derive(Clone)]
pub enum StrategyKind {
    Constant(ControlAtom),
    /// Near-optimal play of the maximizer from a value function `u`.
    NearOptimalMax(Arc<dyn SmoothField>),
    /// Near-optimal play of the minimizer from a value function `u`.
    NearOptimalMin(Arc<dyn SmoothField>),
    /// Push along `-Dψ/|Dψ|`, `ψ(x) = level(x) + |x - anchor|²`, at intensity `c0`.
    ExitForcing {
        anchor: Vec<f64>,
        c0: f64,
    },
    Custom(Arc<FeedbackFn>),
}

impl fmt::Debug for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(a) => f.debug_tuple("Constant").field(a).finish(),
            Self::NearOptimalMax(_) => f.write_str("NearOptimalMax"),
            Self::NearOptimalMin(_) => f.write_str("NearOptimalMin"),
            Self::ExitForcing { anchor, c0 } => f
                .debug_struct("ExitForcing")
                .field("anchor", anchor)
                .field("c0", c0)
                .finish(),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// A state-feedback strategy together with the player's declared bound on
/// the intensity.
#[derive(Debug, Clone)]
pub struct StrategySpec {
    kind: StrategyKind,
    bound: f64,
    tol_grad: f64,
}

impl StrategySpec {
    pub fn constant(atom: ControlAtom, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        if atom.c > bound {
            return Err(Error::InvalidSpec(format!(
                "constant intensity {} exceeds bound {bound}",
                atom.c
            )));
        }
        Ok(Self {
            kind: StrategyKind::Constant(atom),
            bound,
            tol_grad: 1e-8,
        })
    }

    /// Realizes `2p dW + 2q dt` jointly with [`StrategySpec::near_optimal_min`]
    /// at the same bound. A larger bound tracks the diffusion more closely
    /// when `q ≠ 0`.
    pub fn near_optimal_max(u: Arc<dyn SmoothField>, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        Ok(Self {
            kind: StrategyKind::NearOptimalMax(u),
            bound,
            tol_grad: 1e-8,
        })
    }

    pub fn near_optimal_min(u: Arc<dyn SmoothField>, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        Ok(Self {
            kind: StrategyKind::NearOptimalMin(u),
            bound,
            tol_grad: 1e-8,
        })
    }

    /// Exit-forcing strategy; `c0` defaults to [`default_c0`]. The declared
    /// bound is `c0`.
    pub fn exit_forcing(domain: &Domain, anchor: Vec<f64>, c0: Option<f64>) -> Result<Self> {
        if anchor.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: anchor.len(),
            });
        }
        let min_c0 = default_c0(domain);
        let c0 = c0.unwrap_or(min_c0);
        if !(c0 >= min_c0 && c0.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "exit-forcing intensity {c0} below the required {min_c0}"
            )));
        }
        Ok(Self {
            kind: StrategyKind::ExitForcing { anchor, c0 },
            bound: c0,
            tol_grad: 1e-8,
        })
    }

    /// Arbitrary feedback `(t, x) -> atom`; intensities are capped at `bound`.
    pub fn custom(f: Arc<FeedbackFn>, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        Ok(Self {
            kind: StrategyKind::Custom(f),
            bound,
            tol_grad: 1e-8,
        })
    }

    pub fn with_tol_grad(mut self, tol_grad: f64) -> Self {
        self.tol_grad = tol_grad;
        self
    }

    pub fn kind(&self) -> &StrategyKind {
        &self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Writes the direction into `out` and returns the intensity. `prev` is
    /// the direction emitted at the previous step.
    fn act(
        &self,
        domain: &Domain,
        t: f64,
        x: &[f64],
        prev: &[f64],
        s: &mut Scratch,
    ) -> Result<f64> {
        match &self.kind {
            StrategyKind::Constant(atom) => {
                s.dir.copy_from_slice(&atom.a);
                Ok(atom.c)
            }
            StrategyKind::NearOptimalMax(u) | StrategyKind::NearOptimalMin(u) => {
                let sign = if matches!(self.kind, StrategyKind::NearOptimalMax(_)) {
                    1.0
                } else {
                    -1.0
                };
                match feedback_into(&**u, x, self.tol_grad, s) {
                    Ok(()) => Ok(near_optimal_direction(sign, self.bound, s)),
                    Err(Error::DegenerateGradient(_)) => {
                        s.dir.copy_from_slice(prev);
                        Ok(0.0)
                    }
                    Err(e) => Err(e),
                }
            }
            StrategyKind::ExitForcing { anchor, c0 } => {
                // Along a path the direction field is continued past the
                // region |Dψ| ≥ 1/2 where the construction is certified.
                match exit_forcing_into(x, anchor, domain, &mut s.dir, 0.0) {
                    Ok(()) => {}
                    Err(_) => s.dir.copy_from_slice(prev),
                }
                Ok(*c0)
            }
            StrategyKind::Custom(f) => {
                let atom = f(t, x);
                if atom.dim() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        got: atom.dim(),
                    });
                }
                let n = norm(&atom.a);
                if !((n - 1.0).abs() <= 1e-12) || !(atom.c >= 0.0) {
                    return Err(Error::Domain(format!(
                        "custom strategy emitted an invalid atom {atom:?}"
                    )));
                }
                s.dir.copy_from_slice(&atom.a);
                Ok(atom.c.min(self.bound))
            }
        }
    }

    /// The atom this strategy plays at `(t, x)` when nothing was played
    /// before (the maximizer's fallback direction is `+e1`).
    pub fn atom_at(
        &self,
        domain: &Domain,
        t: f64,
        x: &[f64],
        maximizer: bool,
    ) -> Result<ControlAtom> {
        let m = x.len();
        let mut s = Scratch::new(m);
        let prev = initial_direction(m, maximizer);
        let c = self.act(domain, t, x, &prev, &mut s)?;
        Ok(ControlAtom { a: s.dir, c })
    }
}

fn check_bound(bound: f64) -> Result<()> {
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "bound {bound} must be finite and >= 0"
        )));
    }
    Ok(())
}

fn initial_direction(m: usize, maximizer: bool) -> Vec<f64> {
    let mut e = vec![0.0; m];
    e[0] = if maximizer { 1.0 } else { -1.0 };
    e
}

/// Per-path work buffers.
struct Scratch {
    grad: Vec<f64>,
    hess: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    dir: Vec<f64>,
}

impl Scratch {
    fn new(m: usize) -> Self {
        Self {
            grad: vec![0.0; m],
            hess: vec![0.0; m * m],
            p: vec![0.0; m],
            q: vec![0.0; m],
            dir: vec![0.0; m],
        }
    }
}

fn feedback_into(u: &dyn SmoothField, x: &[f64], tol_grad: f64, s: &mut Scratch) -> Result<()> {
    let m = x.len();
    u.gradient(x, &mut s.grad);
    let g2 = dot(&s.grad, &s.grad);
    let gn = g2.sqrt();
    if !(gn > tol_grad) {
        return Err(Error::DegenerateGradient(gn));
    }
    u.hessian(x, &mut s.hess);
    // q = (D²u Du - Δ∞u Du) / |Du|², Δ∞u = Duᵀ D²u Du / |Du|².
    let mut quad = 0.0;
    for i in 0..m {
        let row: f64 = (0..m).map(|j| s.hess[i * m + j] * s.grad[j]).sum();
        s.q[i] = row;
        quad += s.grad[i] * row;
    }
    let lap = quad / g2;
    for i in 0..m {
        s.q[i] = (s.q[i] - lap * s.grad[i]) / g2;
        s.p[i] = s.grad[i] / gn;
    }
    Ok(())
}

/// `A = (p + ηq)/n` for the maximizer, `B = (-p + ηq)/n` for the minimizer,
/// with intensity `bound` each, so that `A - B = 2p/n` and
/// `(C + D)(A + B) = 2q`. Needs `|q| < 2·bound`; larger `q` is scaled down.
fn near_optimal_direction(sign: f64, bound: f64, s: &mut Scratch) -> f64 {
    let qn = norm(&s.q);
    if bound == 0.0 || qn == 0.0 {
        for (d, p) in s.dir.iter_mut().zip(&s.p) {
            *d = sign * p;
        }
        return bound;
    }
    let q_eff = qn.min(2.0 * bound * (1.0 - 1e-6));
    let eta = 1.0 / (4.0 * bound * bound - q_eff * q_eff).sqrt() * (q_eff / qn);
    let mut n2 = 0.0;
    for i in 0..s.dir.len() {
        s.dir[i] = sign * s.p[i] + eta * s.q[i];
        n2 += s.dir[i] * s.dir[i];
    }
    let n = n2.sqrt();
    s.dir.iter_mut().for_each(|d| *d /= n);
    bound
}

/// `p = Du/|Du|` and `q = (D²u Du - Δ∞u Du)/|Du|²` at `x`.
pub fn near_optimal_feedback(
    u: &dyn SmoothField,
    x: &[f64],
    tol_grad: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: x.len(),
        });
    }
    let mut s = Scratch::new(x.len());
    feedback_into(u, x, tol_grad, &mut s)?;
    Ok((s.p, s.q))
}

/// Smallest admissible exit-forcing intensity, `8 (2κ + 1) + 1` with `κ` the
/// curvature bound of the domain.
pub fn default_c0(domain: &Domain) -> f64 {
    8.0 * (2.0 * domain.curvature_bound() + 1.0) + 1.0
}

fn exit_forcing_into(
    x: &[f64],
    anchor: &[f64],
    domain: &Domain,
    out: &mut [f64],
    min_norm: f64,
) -> Result<()> {
    domain.level_gradient(x, out);
    for i in 0..x.len() {
        out[i] += 2.0 * (x[i] - anchor[i]);
    }
    let n = norm(out);
    if !(n >= min_norm) || n == 0.0 {
        return Err(Error::OutsideExitForcingRegion(n));
    }
    out.iter_mut().for_each(|v| *v /= -n);
    Ok(())
}

/// Exit-forcing action at `x`: direction `-Dψ/|Dψ|` with
/// `ψ = level + |x - anchor|²`, intensity `c0`.
pub fn exit_forcing_control(
    x: &[f64],
    anchor: &[f64],
    domain: &Domain,
    c0: f64,
) -> Result<ControlAtom> {
    let m = domain.dim();
    for len in [x.len(), anchor.len()] {
        if len != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: len,
            });
        }
    }
    if !(domain.level(x) >= -BOUNDARY_TOL) {
        return Err(Error::Domain("point outside the closed domain".into()));
    }
    let min_c0 = default_c0(domain);
    if !(c0 >= min_c0 && c0.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "exit-forcing intensity {c0} below the required {min_c0}"
        )));
    }
    let mut a = vec![0.0; m];
    exit_forcing_into(x, anchor, domain, &mut a, 0.5)?;
    ControlAtom::new(a, c0)
}

/// Domain with running payoff `h` and terminal payoff `g`.
#[derive(Clone)]
pub struct Game {
    pub domain: Domain,
    pub h: Arc<dyn ScalarField>,
    pub g: Arc<dyn ScalarField>,
}

impl fmt::Debug for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Game")
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl Game {
    pub fn new(domain: Domain, h: Arc<dyn ScalarField>, g: Arc<dyn ScalarField>) -> Result<Self> {
        for d in [h.dim(), g.dim()] {
            if d != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: d,
                });
            }
        }
        Ok(Self { domain, h, g })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub gamma: f64,
    /// Censoring horizon; `None` means `50 · diam²`.
    pub t_max: Option<f64>,
    /// Brownian-bridge exit detection between steps.
    pub bridge: bool,
}

impl SimOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            gamma: 0.0,
            t_max: None,
            bridge: true,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = Some(t_max);
        self
    }

    pub fn with_bridge(mut self, bridge: bool) -> Self {
        self.bridge = bridge;
        self
    }

    pub fn horizon(&self, domain: &Domain) -> f64 {
        self.t_max
            .unwrap_or_else(|| 50.0 * domain.diameter().powi(2))
    }

    fn validate(&self, domain: &Domain) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidSpec(format!(
                "gamma = {} outside [0, 1)",
                self.gamma
            )));
        }
        let t_max = self.horizon(domain);
        if !(t_max > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "t_max = {t_max} must be positive"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub exited: bool,
    /// `+∞` when censored.
    pub exit_time: f64,
    pub exit_point: Option<Vec<f64>>,
    /// Left-endpoint sum of `h` along the path up to the exit time.
    pub running_integral: f64,
}

struct PathOutcome {
    exit_time: f64,
    exit_point: Option<Vec<f64>>,
    running: f64,
    max_disp2: f64,
}

/// Independent per-path stream: ChaCha8 keyed by `seed`, stream `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_path<R: Rng>(
    game: &Game,
    x0: &[f64],
    smax: &StrategySpec,
    smin: &StrategySpec,
    opts: &SimOptions,
    rng: &mut R,
    mut record: Option<(&mut Vec<f64>, &mut Vec<Vec<f64>>)>,
) -> Result<PathOutcome> {
    let domain = &game.domain;
    let m = domain.dim();
    if x0.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: x0.len(),
        });
    }
    let mut l0 = domain.level(x0);
    if !(l0 >= -BOUNDARY_TOL) {
        return Err(Error::Domain(format!(
            "start point {x0:?} outside the closed domain"
        )));
    }
    if let Some((times, states)) = record.as_mut() {
        times.push(0.0);
        states.push(x0.to_vec());
    }
    if l0 <= BOUNDARY_TOL {
        return Ok(PathOutcome {
            exit_time: 0.0,
            exit_point: Some(x0.to_vec()),
            running: 0.0,
            max_disp2: 0.0,
        });
    }
    let t_max = opts.horizon(domain);
    let (dt, gamma) = (opts.dt, opts.gamma);
    let sqdt = dt.sqrt();
    let mut x = x0.to_vec();
    let mut xn = vec![0.0; m];
    let mut normal = vec![0.0; m];
    let mut sa = Scratch::new(m);
    let mut sb = Scratch::new(m);
    let mut prev_a = initial_direction(m, true);
    let mut prev_b = initial_direction(m, false);
    let mut running = 0.0;
    let mut max_disp2: f64 = 0.0;
    let mut step: u64 = 0;
    let mut t = 0.0;
    while t < t_max {
        let c = smax.act(domain, t, &x, &prev_a, &mut sa)?;
        let d = smin.act(domain, t, &x, &prev_b, &mut sb)?;
        let (a, b) = (&sa.dir, &sb.dir);
        let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sqdt;
        for i in 0..m {
            xn[i] = x[i] + (a[i] - b[i]) * dw + (c + d) * (a[i] + b[i]) * dt;
        }
        if gamma > 0.0 {
            for v in xn.iter_mut() {
                *v += gamma * sqdt * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let hx = game.h.value(&x);
        let l1 = domain.level(&xn);
        let mut exit: Option<(f64, Vec<f64>)> = None;
        if l1 <= 0.0 {
            let theta = if l0 - l1 > 0.0 {
                (l0 / (l0 - l1)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let xe: Vec<f64> = (0..m).map(|i| x[i] + theta * (xn[i] - x[i])).collect();
            exit = Some((theta, domain.project(&xe)));
        } else if opts.bridge && 2.0 * l0 * l1 < 40.0 * (4.0 + gamma * gamma) * dt {
            domain.level_gradient(&x, &mut normal);
            let sn: f64 = (0..m).map(|i| (a[i] - b[i]) * normal[i]).sum();
            let var = sn * sn + gamma * gamma;
            if var > 0.0 {
                let z = 2.0 * l0 * l1 / (var * dt);
                if z < 40.0 && rng.random::<f64>() < (-z).exp() {
                    let mid: Vec<f64> = (0..m).map(|i| 0.5 * (x[i] + xn[i])).collect();
                    exit = Some((0.5, domain.project(&mid)));
                }
            }
        }
        if let Some((theta, point)) = exit {
            running += hx * theta * dt;
            let tau = t + theta * dt;
            max_disp2 = max_disp2.max(dist2(&point, x0));
            if let Some((times, states)) = record.as_mut() {
                times.push(tau);
                states.push(point.clone());
            }
            return Ok(PathOutcome {
                exit_time: tau,
                exit_point: Some(point),
                running,
                max_disp2,
            });
        }
        running += hx * dt;
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut prev_a, &mut sa.dir);
        std::mem::swap(&mut prev_b, &mut sb.dir);
        l0 = l1;
        step += 1;
        t = step as f64 * dt;
        max_disp2 = max_disp2.max(dist2(&x, x0));
        if let Some((times, states)) = record.as_mut() {
            times.push(t);
            states.push(x.clone());
        }
    }
    Ok(PathOutcome {
        exit_time: f64::INFINITY,
        exit_point: None,
        running,
        max_disp2,
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One Euler–Maruyama path from `x0`, recording every state.
pub fn simulate_path<R: Rng>(
    game: &Game,
    x0: &[f64],
    strat_max: &StrategySpec,
    strat_min: &StrategySpec,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    opts.validate(&game.domain)?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let out = run_path(
        game,
        x0,
        strat_max,
        strat_min,
        opts,
        rng,
        Some((&mut times, &mut states)),
    )?;
    Ok(Trajectory {
        times,
        states,
        exited: out.exit_point.is_some(),
        exit_time: out.exit_time,
        exit_point: out.exit_point,
        running_integral: out.running,
    })
}

/// `∫₀^τ h(X_s) ds + g(X_τ)` by the left-endpoint rule over the recorded
/// states, or `None` for a censored path.
pub fn payoff(traj: &Trajectory, h: &dyn ScalarField, g: &dyn ScalarField) -> Option<f64> {
    let exit = traj.exit_point.as_ref()?;
    let running: f64 = traj
        .times
        .windows(2)
        .zip(&traj.states)
        .map(|(w, x)| h.value(x) * (w[1] - w[0]))
        .sum();
    Some(running + g.value(exit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    /// Mean payoff over exited paths (NaN when none exited).
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub censored: usize,
    pub exit_fraction: f64,
    pub mean_exit_time: f64,
    /// Mean over exited paths of `max_t |X_t - x0|²`.
    pub mean_sq_max_displacement: f64,
    /// False when fewer than 99% of the paths exited.
    pub reliable: bool,
}

/// Pairwise summation in index order; the result does not depend on how the
/// values were produced.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_of(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(v) / v.len() as f64
    }
}

/// Outcome of one Monte Carlo path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: u64,
    /// `+∞` when censored.
    pub exit_time: f64,
    /// `None` when censored.
    pub payoff: Option<f64>,
    pub censored: bool,
    pub max_sq_displacement: f64,
}

/// Runs `n_paths` independent paths. Path `i` draws from
/// [`path_rng`]`(seed, i)`, so the records are reproducible and independent
/// of the thread count.
pub fn mc_paths(
    game: &Game,
    x0: &[f64],
    strat_max: &StrategySpec,
    strat_min: &StrategySpec,
    n_paths: usize,
    opts: &SimOptions,
    seed: u64,
) -> Result<Vec<PathRecord>> {
    if n_paths == 0 {
        return Err(Error::InvalidSpec("n_paths must be at least 1".into()));
    }
    opts.validate(&game.domain)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let o = run_path(game, x0, strat_max, strat_min, opts, &mut rng, None)?;
            let payoff = o
                .exit_point
                .as_ref()
                .map(|x| o.running + game.g.value(x));
            Ok(PathRecord {
                path_id: i,
                exit_time: o.exit_time,
                censored: payoff.is_none(),
                payoff,
                max_sq_displacement: o.max_disp2,
            })
        })
        .collect()
}

/// Aggregates path records in index order.
pub fn summarize(records: &[PathRecord]) -> PayoffEstimate {
    let exited: Vec<&PathRecord> = records.iter().filter(|r| !r.censored).collect();
    let payoffs: Vec<f64> = exited.iter().filter_map(|r| r.payoff).collect();
    let times: Vec<f64> = exited.iter().map(|r| r.exit_time).collect();
    let disp: Vec<f64> = exited.iter().map(|r| r.max_sq_displacement).collect();
    let mean = mean_of(&payoffs);
    let n = payoffs.len();
    let std_error = if n > 1 {
        let sq: Vec<f64> = payoffs.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&sq) / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    let n_paths = records.len();
    let exit_fraction = if n_paths == 0 {
        0.0
    } else {
        n as f64 / n_paths as f64
    };
    PayoffEstimate {
        mean,
        std_error,
        n_paths,
        censored: n_paths - n,
        exit_fraction,
        mean_exit_time: mean_of(&times),
        mean_sq_max_displacement: mean_of(&disp),
        reliable: exit_fraction >= 0.99,
    }
}

/// Monte Carlo estimate of the payoff of a fixed strategy pair; see
/// [`mc_paths`] for the stream layout.
pub fn mc_value(
    game: &Game,
    x0: &[f64],
    strat_max: &StrategySpec,
    strat_min: &StrategySpec,
    n_paths: usize,
    opts: &SimOptions,
    seed: u64,
) -> Result<PayoffEstimate> {
    let records = mc_paths(game, x0, strat_max, strat_min, n_paths, opts, seed)?;
    Ok(summarize(&records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantField;
    use crate::geometry::{make_domain, DomainSpec};

    fn unit_interval() -> Domain {
        make_domain(DomainSpec::Interval { lo: 0.0, hi: 1.0 }).unwrap()
    }

    fn game_1d(h: f64) -> Game {
        Game::new(
            unit_interval(),
            Arc::new(ConstantField::new(1, h)),
            Arc::new(ConstantField::new(1, 0.0)),
        )
        .unwrap()
    }

    fn constant(a: f64, c: f64) -> StrategySpec {
        StrategySpec::constant(ControlAtom::new(vec![a], c).unwrap(), c).unwrap()
    }

    #[test]
    fn deterministic_drift_exits_on_schedule() {
        let game = game_1d(2.0);
        let opts = SimOptions::new(1e-5);
        let mut rng = path_rng(1, 0);
        let traj = simulate_path(
            &game,
            &[0.5],
            &constant(1.0, 1.0),
            &constant(1.0, 1.0),
            &opts,
            &mut rng,
        )
        .unwrap();
        assert!(traj.exited);
        assert!((traj.exit_time - 0.125).abs() < 1e-12, "{}", traj.exit_time);
        assert_eq!(traj.exit_point.as_deref(), Some(&[1.0][..]));
        let v = payoff(&traj, &*game.h, &*game.g).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert!((traj.running_integral - 0.25).abs() < 1e-12);
        for w in traj.times.windows(2).take(traj.times.len() - 2) {
            assert!((w[1] - w[0] - 1e-5).abs() < 1e-15);
        }
    }

    #[test]
    fn start_on_the_boundary_exits_immediately() {
        let game = game_1d(2.0);
        let mut rng = path_rng(1, 0);
        let s = constant(1.0, 0.0);
        let traj = simulate_path(&game, &[0.0], &s, &s, &SimOptions::new(1e-3), &mut rng).unwrap();
        assert_eq!(traj.exit_time, 0.0);
        assert_eq!(traj.exit_point, Some(vec![0.0]));
        assert_eq!(payoff(&traj, &*game.h, &*game.g), Some(0.0));
        assert!(matches!(
            simulate_path(&game, &[1.5], &s, &s, &SimOptions::new(1e-3), &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn censoring_is_reported() {
        let game = game_1d(1.0);
        // a = b: no diffusion; c = d = 0: no drift. The path never moves.
        let s = constant(1.0, 0.0);
        let opts = SimOptions::new(1e-2).with_t_max(0.5);
        let mut rng = path_rng(3, 0);
        let traj = simulate_path(&game, &[0.5], &s, &s, &opts, &mut rng).unwrap();
        assert!(!traj.exited);
        assert_eq!(traj.exit_time, f64::INFINITY);
        assert_eq!(payoff(&traj, &*game.h, &*game.g), None);
        let est = mc_value(&game, &[0.5], &s, &s, 10, &opts, 3).unwrap();
        assert_eq!(est.censored, 10);
        assert_eq!(est.exit_fraction, 0.0);
        assert!(!est.reliable);
    }

    #[test]
    fn feedback_examples() {
        struct Quad;
        impl ScalarField for Quad {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, x: &[f64]) -> f64 {
                x[0] + 0.5 * x[0] * x[0] + 2.0 * x[0] * x[1]
            }
        }
        impl SmoothField for Quad {
            fn gradient(&self, _x: &[f64], out: &mut [f64]) {
                // Evaluated at the origin: Du = (1, 0).
                out.copy_from_slice(&[1.0, 0.0]);
            }
            fn hessian(&self, _x: &[f64], out: &mut [f64]) {
                out.copy_from_slice(&[1.0, 2.0, 2.0, 0.0]);
            }
        }
        let (p, q) = near_optimal_feedback(&Quad, &[0.0, 0.0], 1e-8).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        assert_eq!(q, vec![0.0, 2.0]);
    }

    #[test]
    fn near_optimal_pair_reproduces_the_target_dynamics() {
        let mut s = Scratch::new(2);
        s.p.copy_from_slice(&[0.6, 0.8]);
        s.q.copy_from_slice(&[-0.8, 0.6]);
        let bound = 3.0;
        let c = near_optimal_direction(1.0, bound, &mut s);
        let a = s.dir.clone();
        let d = near_optimal_direction(-1.0, bound, &mut s);
        let b = s.dir.clone();
        assert!((norm(&a) - 1.0).abs() < 1e-15 && (norm(&b) - 1.0).abs() < 1e-15);
        for i in 0..2 {
            // Drift (C + D)(A + B) equals 2q.
            assert!(((c + d) * (a[i] + b[i]) - 2.0 * s.q[i]).abs() < 1e-12);
        }
        // Diffusion A - B is parallel to p with length 2 sqrt(1 - |q|²/4b²).
        let len = 2.0 * (1.0 - 1.0 / (4.0 * bound * bound)).sqrt();
        for i in 0..2 {
            assert!(((a[i] - b[i]) - len * s.p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exit_forcing_examples() {
        let d = unit_interval();
        let c0 = default_c0(&d);
        assert_eq!(c0, 9.0);
        let atom = exit_forcing_control(&[0.05], &[0.05], &d, c0).unwrap();
        assert_eq!(atom.a, vec![-1.0]);
        let atom = exit_forcing_control(&[0.2], &[0.1], &d, c0).unwrap();
        assert_eq!(atom.a, vec![-1.0]);
        assert_eq!(atom.c, c0);
        // Dψ = 1 + 2(0.4 - 0.7) = 0.4 < 1/2.
        assert!(matches!(
            exit_forcing_control(&[0.4], &[0.7], &d, c0),
            Err(Error::OutsideExitForcingRegion(_))
        ));
        assert!(exit_forcing_control(&[0.4], &[0.4], &d, c0 - 1.0).is_err());

        let ann = make_domain(DomainSpec::Annulus {
            center: vec![0.0, 0.0],
            inner: 1.0,
            outer: 2.0,
        })
        .unwrap();
        assert_eq!(default_c0(&ann), 25.0);
        let x = [1.05 * 0.6, 1.05 * 0.8];
        let atom = exit_forcing_control(&x, &x, &ann, 25.0).unwrap();
        assert!((atom.a[0] + 0.6).abs() < 1e-12 && (atom.a[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn mc_value_is_reproducible_and_exact_for_deterministic_play() {
        let game = game_1d(2.0);
        let s = constant(1.0, 1.0);
        let opts = SimOptions::new(1e-4);
        let est = mc_value(&game, &[0.5], &s, &s, 40, &opts, 9).unwrap();
        assert!((est.mean - 0.25).abs() < 1e-12);
        assert!(est.std_error < 1e-12);
        assert_eq!(est.exit_fraction, 1.0);

        let a = constant(1.0, 0.0);
        let b = constant(-1.0, 0.0);
        let e1 = mc_value(&game, &[0.3], &a, &b, 200, &opts, 11).unwrap();
        let e2 = mc_value(&game, &[0.3], &a, &b, 200, &opts, 11).unwrap();
        assert_eq!(e1, e2);
        let e3 = mc_value(&game, &[0.3], &a, &b, 200, &opts, 12).unwrap();
        assert_ne!(e1.mean, e3.mean);
    }
}
