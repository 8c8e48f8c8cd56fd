//! Harmonic HMC: exact Hamiltonian trajectories for a Gaussian target.
//!
//! After whitening, the target is `N(0, I)` and Hamilton's equations with a
//! Gaussian momentum solve to a rotation in each `(y_i, v_i)` plane:
//!
//! ```text
//! y(t) = y₀ cos t + v₀ sin t
//! v(t) = v₀ cos t − y₀ sin t
//! ```
//!
//! Each linear wall `f·y + g ≥ 0` is met when `a cos t + b sin t + g = 0`
//! with `a = f·y₀`, `b = f·v₀`, which has a closed-form solution. At a hit
//! the velocity is reflected specularly and the clock restarts at the wall.
//! The dynamics conserve `(‖y‖² + ‖v‖²)/2` exactly, so every proposal is
//! accepted.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, TAU};
use std::time::Instant;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::diagnostics::ChainResult;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, solve_triangular, Matrix, UpperTriangular};
use crate::model::{BoxConstraints, Constraints, LinearConstraints, MatrixKind, MtnProblem};
use crate::sampler::{run_chain, Sampler};

/// Hit times this close to zero count as immediate.
pub const HIT_EPS: f64 = 1e-10;
/// Relative gap `r − c` below which a trajectory only grazes a wall.
pub const TANGENCY_RTOL: f64 = 1e-12;
/// Slack violations up to this size are projected back onto the wall.
pub const CLAMP_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_BOUNCES: usize = 1_000_000;
/// Constraint counts above this skip the `m × m` Gram cache.
const GRAM_MAX_ROWS: usize = 8192;

/// Maps between original coordinates `x` and whitened coordinates `y`.
#[derive(Clone, Debug)]
pub struct Whitening {
    mean: Vec<f64>,
    factor: UpperTriangular,
    kind: MatrixKind,
}

impl Whitening {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `y` for a given `x`.
    pub fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        match self.kind {
            // Φ = UᵀU: y = U(x − μ)
            MatrixKind::Precision => Ok(self.factor.mul_vec(&centered)),
            // Σ = UᵀU: y = U⁻ᵀ(x − μ)
            MatrixKind::Covariance => solve_triangular(&self.factor, &centered, true),
        }
    }

    /// `x` for a given `y`.
    pub fn unwhiten(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = match self.kind {
            MatrixKind::Precision => solve_triangular(&self.factor, y, false)?,
            MatrixKind::Covariance => self.factor.tr_mul_vec(y),
        };
        for (xi, m) in x.iter_mut().zip(&self.mean) {
            *xi += m;
        }
        Ok(x)
    }
}

/// Constraints `Fw·y + gw ≥ 0` in whitened coordinates.
#[derive(Clone, Debug)]
pub struct WhitenedConstraints {
    fw: Matrix,
    gw: Vec<f64>,
    row_norm2: Vec<f64>,
    /// `Fw Fwᵀ`, used to update `Fw·v` after a reflection in O(m).
    gram: Option<Matrix>,
}

impl WhitenedConstraints {
    /// Builds whitened constraints directly from `Fw` and `gw`.
    pub fn new(fw: Matrix, gw: Vec<f64>) -> Result<Self> {
        if fw.rows() != gw.len() {
            return Err(Error::DimensionMismatch {
                expected: fw.rows(),
                found: gw.len(),
            });
        }
        let row_norm2: Vec<f64> = (0..fw.rows()).map(|j| dot(fw.row(j), fw.row(j))).collect();
        if row_norm2.contains(&0.0) {
            return Err(Error::ZeroNormal);
        }
        let gram = (fw.rows() <= GRAM_MAX_ROWS).then(|| fw.gram());
        Ok(Self {
            fw,
            gw,
            row_norm2,
            gram,
        })
    }

    pub fn count(&self) -> usize {
        self.gw.len()
    }

    pub fn dim(&self) -> usize {
        self.fw.cols()
    }

    pub fn fw(&self) -> &Matrix {
        &self.fw
    }

    pub fn gw(&self) -> &[f64] {
        &self.gw
    }

    /// `Fw·y + gw`.
    pub fn slacks(&self, y: &[f64]) -> Vec<f64> {
        let mut s = self.fw.matvec(y);
        for (si, g) in s.iter_mut().zip(&self.gw) {
            *si += g;
        }
        s
    }
}

/// Whitens a problem whose given matrix has a cached Cholesky factor.
pub fn whiten(problem: &MtnProblem) -> Result<(Whitening, WhitenedConstraints)> {
    let gauss = problem.gaussian();
    let factor = gauss.chol_upper().ok_or(Error::MissingCholesky)?.clone();
    let lin = problem.constraints().to_linear();
    let w = Whitening {
        mean: gauss.mean().to_vec(),
        factor,
        kind: gauss.kind(),
    };
    let cons = whiten_constraints(&w, &lin)?;
    Ok((w, cons))
}

fn whiten_constraints(w: &Whitening, lin: &LinearConstraints) -> Result<WhitenedConstraints> {
    let m = lin.count();
    let d = w.dim();
    let mut fw = Matrix::zeros(m, d);
    for j in 0..m {
        let f = lin.f().row(j);
        let row = match w.kind {
            // F U⁻¹: row j is U⁻ᵀ fⱼ
            MatrixKind::Precision => solve_triangular(&w.factor, f, true)?,
            // F Uᵀ: row j is U fⱼ
            MatrixKind::Covariance => w.factor.mul_vec(f),
        };
        fw.row_mut(j).copy_from_slice(&row);
    }
    let gw = lin.slacks(&w.mean);
    WhitenedConstraints::new(fw, gw)
}

/// Position and velocity in whitened coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub t_elapsed: f64,
}

impl HarmonicState {
    pub fn new(y: Vec<f64>, v: Vec<f64>) -> Self {
        Self { y, v, t_elapsed: 0.0 }
    }

    pub fn energy(&self) -> f64 {
        0.5 * (dot(&self.y, &self.y) + dot(&self.v, &self.v))
    }
}

/// Exact position and velocity after time `t` with no walls.
pub fn position_at(y0: &[f64], v0: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    if t == 0.0 {
        return (y0.to_vec(), v0.to_vec());
    }
    let (s, c) = t.sin_cos();
    let y = y0.iter().zip(v0).map(|(y, v)| y * c + v * s).collect();
    let v = y0.iter().zip(v0).map(|(y, v)| v * c - y * s).collect();
    (y, v)
}

/// Rotates `(y, v)` by angle `t` in place.
fn rotate(y: &mut [f64], v: &mut [f64], t: f64) {
    let (s, c) = t.sin_cos();
    for (yi, vi) in y.iter_mut().zip(v.iter_mut()) {
        let (y0, v0) = (*yi, *vi);
        *yi = y0 * c + v0 * s;
        *vi = v0 * c - y0 * s;
    }
}

/// Time at which `a cos t + b sin t + c` next crosses zero from above.
///
/// In phase-amplitude form the slack is `r cos(t − φ) + c`; its two roots
/// are `φ ± arccos(−c/r)` and the one with negative derivative is
/// `φ + arccos(−c/r)`. Taking that branch means the wall a trajectory has
/// just bounced off (slack zero, increasing) is never re-detected.
fn exit_time(a: f64, b: f64, c: f64, horizon: f64) -> Option<f64> {
    let r = a.hypot(b);
    if r == 0.0 {
        return None;
    }
    if c >= 0.0 && r - c <= TANGENCY_RTOL * r {
        return None;
    }
    let phi = b.atan2(a);
    let mut t = phi + (-c / r).clamp(-1.0, 1.0).acos();
    if t < -HIT_EPS {
        t += TAU;
    } else if t >= TAU - HIT_EPS {
        t -= TAU;
    }
    let t = t.max(0.0);
    (t <= horizon).then_some(t)
}

fn earliest_exit(a: &[f64], b: &[f64], c: &[f64], horizon: f64) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for j in 0..c.len() {
        if let Some(t) = exit_time(a[j], b[j], c[j], horizon) {
            // Strict comparison keeps the lower row on ties.
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, j));
            }
        }
    }
    best
}

fn check_feasible(slacks: &[f64]) -> Result<()> {
    match slacks.iter().enumerate().find(|(_, &s)| s < -CLAMP_TOL) {
        Some((row, &slack)) => Err(Error::InfeasibleState { row, slack }),
        None => Ok(()),
    }
}

/// First wall reached within `horizon` from `(y0, v0)`, as `(time, row)`.
pub fn first_wall_hit(
    y0: &[f64],
    v0: &[f64],
    cons: &WhitenedConstraints,
    horizon: f64,
) -> Result<Option<(f64, usize)>> {
    let a = cons.fw.matvec(y0);
    let b = cons.fw.matvec(v0);
    let slacks: Vec<f64> = a.iter().zip(&cons.gw).map(|(a, c)| a + c).collect();
    check_feasible(&slacks)?;
    Ok(earliest_exit(&a, &b, &cons.gw, horizon))
}

/// Specular reflection of `v` off the wall with normal `f`.
pub fn reflect(v: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let ff = dot(f, f);
    if ff == 0.0 {
        return Err(Error::ZeroNormal);
    }
    let coef = 2.0 * dot(f, v) / ff;
    let mut out = v.to_vec();
    axpy(-coef, f, &mut out);
    Ok(out)
}

/// A wall hit observed during [`propose_traced`].
#[derive(Clone, Debug)]
pub struct Bounce {
    pub row: usize,
    /// Time since the start of the proposal.
    pub time: f64,
    /// Position at the wall.
    pub y: Vec<f64>,
}

/// Runs the bouncing dynamics for time `t_total`.
pub fn propose(
    state: &HarmonicState,
    t_total: f64,
    cons: &WhitenedConstraints,
    max_bounces: usize,
) -> Result<HarmonicState> {
    propose_traced(state, t_total, cons, max_bounces, |_| {}).map(|(s, _)| s)
}

/// [`propose`] that reports each bounce and returns the bounce count.
pub fn propose_traced(
    state: &HarmonicState,
    t_total: f64,
    cons: &WhitenedConstraints,
    max_bounces: usize,
    mut on_bounce: impl FnMut(&Bounce),
) -> Result<(HarmonicState, usize)> {
    if !(t_total > 0.0) {
        return Err(Error::InvalidParameter("integration time must be positive".into()));
    }
    let mut y = state.y.clone();
    let mut v = state.v.clone();
    let c = &cons.gw;
    // a = Fw·y and b = Fw·v rotate with (y, v), so they are updated
    // alongside instead of being recomputed after each segment.
    let mut a = cons.fw.matvec(&y);
    let mut b = cons.fw.matvec(&v);
    let slacks: Vec<f64> = a.iter().zip(c).map(|(a, c)| a + c).collect();
    check_feasible(&slacks)?;

    let mut elapsed = 0.0;
    let mut bounces = 0usize;
    loop {
        let remaining = t_total - elapsed;
        match earliest_exit(&a, &b, c, remaining) {
            None => {
                rotate(&mut y, &mut v, remaining);
                rotate(&mut a, &mut b, remaining);
                break;
            }
            Some((t, j)) => {
                bounces += 1;
                if bounces > max_bounces {
                    return Err(Error::TooManyBounces(max_bounces));
                }
                rotate(&mut y, &mut v, t);
                rotate(&mut a, &mut b, t);
                elapsed += t;
                a[j] = -c[j];
                on_bounce(&Bounce {
                    row: j,
                    time: elapsed,
                    y: y.clone(),
                });
                let coef = 2.0 * b[j] / cons.row_norm2[j];
                axpy(-coef, cons.fw.row(j), &mut v);
                match &cons.gram {
                    Some(g) => axpy(-coef, g.row(j), &mut b),
                    None => {
                        let fj = cons.fw.row(j);
                        for (k, bk) in b.iter_mut().enumerate() {
                            *bk -= coef * dot(cons.fw.row(k), fj);
                        }
                    }
                }
            }
        }
    }

    // Round-off can leave a slack marginally negative; project it back.
    let slacks = cons.slacks(&y);
    check_feasible(&slacks)?;
    for (j, &s) in slacks.iter().enumerate() {
        if s < 0.0 {
            axpy(-s / cons.row_norm2[j], cons.fw.row(j), &mut y);
        }
    }
    Ok((
        HarmonicState {
            y,
            v,
            t_elapsed: state.t_elapsed + t_total,
        },
        bounces,
    ))
}

/// Integration time drawn uniformly from `[π/8, π/2]`.
pub fn sample_integration_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(FRAC_PI_8..=FRAC_PI_2)
}

#[derive(Clone, Debug)]
pub struct HarmonicOptions {
    /// Draw the integration time per iteration; otherwise use `fixed_time`.
    pub randomize_time: bool,
    pub fixed_time: f64,
    pub max_bounces: usize,
}

impl Default for HarmonicOptions {
    fn default() -> Self {
        Self {
            randomize_time: true,
            fixed_time: FRAC_PI_2,
            max_bounces: DEFAULT_MAX_BOUNCES,
        }
    }
}

/// Harmonic HMC chain over a prepared problem.
pub struct HarmonicSampler {
    whitening: Whitening,
    cons: WhitenedConstraints,
    original: Constraints,
    y: Vec<f64>,
    x: Vec<f64>,
    opts: HarmonicOptions,
    setup_seconds: f64,
    bounces: u64,
}

impl HarmonicSampler {
    /// Needs the Cholesky factor of the problem's given matrix.
    pub fn new(problem: &MtnProblem, x0: &[f64], opts: HarmonicOptions) -> Result<Self> {
        problem.validate_initial(x0)?;
        if !opts.randomize_time && !(opts.fixed_time > 0.0) {
            return Err(Error::InvalidParameter("integration time must be positive".into()));
        }
        let start = Instant::now();
        let (whitening, cons) = whiten(problem)?;
        let y = whitening.whiten(x0)?;
        let setup_seconds = start.elapsed().as_secs_f64();
        Ok(Self {
            whitening,
            cons,
            original: problem.constraints().clone(),
            y,
            x: x0.to_vec(),
            opts,
            setup_seconds,
            bounces: 0,
        })
    }

    pub fn whitened_constraints(&self) -> &WhitenedConstraints {
        &self.cons
    }

    pub fn whitening(&self) -> &Whitening {
        &self.whitening
    }

    fn store_position(&mut self) -> Result<()> {
        let mut x = self.whitening.unwhiten(&self.y)?;
        match &self.original {
            Constraints::Box(b) => clamp_box(b, &mut x)?,
            Constraints::Linear(l) => check_feasible(&l.slacks(&x))?,
        }
        self.x = x;
        Ok(())
    }
}

fn clamp_box(b: &BoxConstraints, x: &mut [f64]) -> Result<()> {
    for (i, xi) in x.iter().enumerate() {
        let slack = (xi - b.lower()[i]).min(b.upper()[i] - xi);
        if slack < -CLAMP_TOL * (1.0 + xi.abs()) {
            return Err(Error::InfeasibleState { row: i, slack });
        }
    }
    b.clamp(x);
    Ok(())
}

impl Sampler for HarmonicSampler {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn setup_seconds(&self) -> f64 {
        self.setup_seconds
    }

    fn position(&self) -> &[f64] {
        &self.x
    }

    fn step(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        let v: Vec<f64> = (0..self.y.len()).map(|_| rng.sample(StandardNormal)).collect();
        let t = if self.opts.randomize_time {
            sample_integration_time(rng)
        } else {
            self.opts.fixed_time
        };
        let state = HarmonicState::new(std::mem::take(&mut self.y), v);
        let (next, bounces) = propose_traced(&state, t, &self.cons, self.opts.max_bounces, |_| {})?;
        self.bounces += bounces as u64;
        self.y = next.y;
        self.store_position()
    }

    fn event_count(&self) -> u64 {
        self.bounces
    }
}

/// Runs a harmonic chain of `n` iterations on a prepared problem.
pub fn harmonic_sample(
    problem: &MtnProblem,
    x0: &[f64],
    n: usize,
    burn_in_frac: f64,
    opts: HarmonicOptions,
    rng: &mut dyn RngCore,
) -> Result<ChainResult> {
    let mut sampler = HarmonicSampler::new(problem, x0, opts)?;
    run_chain(&mut sampler, n, burn_in_frac, problem.prep_seconds(), rng)
}
