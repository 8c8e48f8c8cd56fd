//! Event-driven simulation of the zigzag dynamics
//!
//! ```text
//! dx/dt = v = sign(p),   dp/dt = −Φ(x − μ)
//! ```
//!
//! Between events `v` is constant, so `x` moves linearly and each `pᵢ`
//! follows a quadratic in `t`. Events are the zeros of those quadratics
//! (velocity flips) and the times the position reaches a bound (bounces).

use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::model::BoxConstraints;

use super::{ZigzagModel, ZigzagState};

/// Boundary events within this of a gradient event are processed first.
pub const SIMULTANEOUS_TOL: f64 = 1e-12;
/// Largest `|pᵢ|` at which a velocity flip is accepted.
pub const FLIP_TOL: f64 = 1e-9;
/// Largest distance from a bound at which a bounce is accepted.
pub const BOUNCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    GradientFlip,
    BoundaryBounce,
}

/// Momentum after moving `t` along the current segment.
pub fn momentum_at(state: &ZigzagState, t: f64) -> Vec<f64> {
    if t == 0.0 {
        return state.p.clone();
    }
    (0..state.p.len())
        .map(|i| segment_momentum(state, i, t))
        .collect()
}

#[inline]
fn segment_momentum(state: &ZigzagState, i: usize, t: f64) -> f64 {
    state.p[i] - state.grad[i] * t - 0.5 * state.phi_v[i] * t * t
}

/// Smallest root in `(eps, horizon]` of `c + b t + a t² = 0`.
fn first_positive_root(a: f64, b: f64, c: f64, eps: f64, horizon: f64) -> Option<f64> {
    let accept = |t: f64| (t > eps && t <= horizon).then_some(t);
    if a == 0.0 {
        return if b == 0.0 { None } else { accept(-c / b) };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        // b = 0 and c = 0: double root at the origin.
        return None;
    }
    let (r1, r2) = (q / a, c / q);
    match (accept(r1.min(r2)), accept(r1.max(r2))) {
        (Some(t), _) | (None, Some(t)) => Some(t),
        _ => None,
    }
}

/// Earliest momentum sign change within `horizon`, as `(time, coordinate)`.
///
/// A coordinate whose momentum already opposes its velocity (possible only
/// through round-off) is reported at time zero.
pub fn next_gradient_event(state: &ZigzagState, horizon: f64) -> Option<(f64, usize)> {
    let eps = 1e-12 * (1.0 + horizon);
    let mut best: Option<(f64, usize)> = None;
    for i in 0..state.p.len() {
        let t = if state.p[i] * state.v[i] < 0.0 {
            Some(0.0)
        } else {
            first_positive_root(-0.5 * state.phi_v[i], -state.grad[i], state.p[i], eps, horizon)
        };
        if let Some(t) = t {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best
}

/// Earliest time the position reaches a finite bound within `horizon`.
pub fn next_boundary_event(
    state: &ZigzagState,
    bounds: &BoxConstraints,
    horizon: f64,
) -> Result<Option<(f64, usize)>> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..state.x.len() {
        let (x, l, u) = (state.x[i], bounds.lower()[i], bounds.upper()[i]);
        if x < l || x > u {
            let slack = (x - l).min(u - x);
            return Err(Error::InfeasibleState { row: i, slack });
        }
        let t = if state.v[i] > 0.0 { u - x } else { x - l };
        if t.is_finite() && t <= horizon && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, i));
        }
    }
    Ok(best)
}

/// Moves the state `t` along its current segment.
pub fn advance_segment(state: &mut ZigzagState, t: f64) {
    if t == 0.0 {
        return;
    }
    for i in 0..state.x.len() {
        state.p[i] = segment_momentum(state, i, t);
        state.x[i] += state.v[i] * t;
    }
    axpy(t, &state.phi_v, &mut state.grad);
}

/// Applies a velocity flip or a bounce at coordinate `i`.
pub fn apply_event(
    state: &mut ZigzagState,
    model: &ZigzagModel,
    i: usize,
    kind: EventKind,
) -> Result<()> {
    match kind {
        EventKind::GradientFlip => {
            if state.p[i].abs() > FLIP_TOL {
                return Err(Error::PreconditionViolation(format!(
                    "flip at coordinate {i} with momentum {}",
                    state.p[i]
                )));
            }
            state.p[i] = 0.0;
        }
        EventKind::BoundaryBounce => {
            let bound = if state.v[i] > 0.0 {
                model.bounds.upper()[i]
            } else {
                model.bounds.lower()[i]
            };
            if !((state.x[i] - bound).abs() <= BOUNCE_TOL) {
                return Err(Error::PreconditionViolation(format!(
                    "bounce at coordinate {i} with x = {} away from bound {bound}",
                    state.x[i]
                )));
            }
            state.x[i] = bound;
            state.p[i] = -state.p[i];
        }
    }
    state.v[i] = -state.v[i];
    // Φv changes by 2·v_new·Φ[:, i]; Φ is symmetric so the row will do.
    axpy(2.0 * state.v[i], model.phi.row(i), &mut state.phi_v);
    Ok(())
}

/// An event observed during [`zigzag_propose`].
#[derive(Clone, Copy, Debug)]
pub struct Event {
    pub coord: usize,
    pub kind: EventKind,
    /// Time since the start of the proposal.
    pub time: f64,
}

/// Runs the dynamics for time `duration`, reporting each event after it is
/// applied. Returns the number of events.
pub fn zigzag_propose(
    state: &mut ZigzagState,
    model: &ZigzagModel,
    duration: f64,
    max_events: usize,
    mut on_event: impl FnMut(&ZigzagState, &Event),
) -> Result<usize> {
    let mut elapsed = 0.0;
    let mut events = 0usize;
    loop {
        let remaining = duration - elapsed;
        if remaining <= 0.0 {
            break;
        }
        let grad_ev = next_gradient_event(state, remaining);
        let bound_ev = next_boundary_event(state, &model.bounds, remaining)?;
        let event = match (grad_ev, bound_ev) {
            (None, None) => None,
            (Some((t, i)), None) => Some((t, i, EventKind::GradientFlip)),
            (None, Some((t, i))) => Some((t, i, EventKind::BoundaryBounce)),
            (Some((tg, ig)), Some((tb, ib))) => Some(if tb <= tg + SIMULTANEOUS_TOL {
                (tb, ib, EventKind::BoundaryBounce)
            } else {
                (tg, ig, EventKind::GradientFlip)
            }),
        };
        let Some((t, i, kind)) = event else {
            advance_segment(state, remaining);
            model.bounds.clamp(&mut state.x);
            break;
        };
        events += 1;
        if events > max_events {
            return Err(Error::TooManyEvents(max_events));
        }
        advance_segment(state, t);
        model.bounds.clamp(&mut state.x);
        elapsed += t;
        apply_event(state, model, i, kind)?;
        on_event(
            state,
            &Event {
                coord: i,
                kind,
                time: elapsed,
            },
        );
    }
    Ok(events)
}
