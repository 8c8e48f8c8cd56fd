//! No-U-turn tree building on top of the zigzag dynamics.
//!
//! The tree is a doubling sequence of segments of length `t_base`. Because
//! the dynamics are simulated exactly, every state in the tree has the same
//! joint density, so the next state is picked uniformly among the segment
//! endpoints with progressive sampling.

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::linalg::dot;

use super::dynamics::zigzag_propose;
use super::{ZigzagConfig, ZigzagModel, ZigzagState};

/// Moves `t_base` forwards (`dir > 0`) or backwards in time.
fn leaf_step(
    state: &ZigzagState,
    model: &ZigzagModel,
    t_base: f64,
    forward: bool,
    budget: &mut usize,
) -> Result<ZigzagState> {
    let mut s = state.clone();
    if !forward {
        s.reverse();
    }
    let n = zigzag_propose(&mut s, model, t_base, *budget, |_, _| {})?;
    *budget -= n;
    if !forward {
        s.reverse();
    }
    Ok(s)
}

/// `(x⁺ − x⁻)·v⁻ < 0` or `(x⁺ − x⁻)·v⁺ < 0`.
fn is_u_turn(minus: &ZigzagState, plus: &ZigzagState) -> bool {
    let span: Vec<f64> = plus.x.iter().zip(&minus.x).map(|(a, b)| a - b).collect();
    dot(&span, &minus.v) < 0.0 || dot(&span, &plus.v) < 0.0
}

struct Subtree {
    /// Endpoint nearest the trajectory origin.
    inner: ZigzagState,
    /// Endpoint the next doubling continues from.
    outer: ZigzagState,
    sample: Vec<f64>,
    size: usize,
}

/// Builds a subtree of `2^depth` segments; `None` means it U-turned.
fn build_tree(
    start: &ZigzagState,
    model: &ZigzagModel,
    t_base: f64,
    forward: bool,
    depth: usize,
    rng: &mut dyn RngCore,
    budget: &mut usize,
) -> Result<Option<Subtree>> {
    if depth == 0 {
        let s = leaf_step(start, model, t_base, forward, budget)?;
        return Ok(Some(Subtree {
            inner: s.clone(),
            sample: s.x.clone(),
            outer: s,
            size: 1,
        }));
    }
    let Some(first) = build_tree(start, model, t_base, forward, depth - 1, rng, budget)? else {
        return Ok(None);
    };
    let Some(second) = build_tree(&first.outer, model, t_base, forward, depth - 1, rng, budget)? else {
        return Ok(None);
    };
    let size = first.size + second.size;
    let sample = if rng.random::<f64>() * (size as f64) < second.size as f64 {
        second.sample
    } else {
        first.sample
    };
    let turned = if forward {
        is_u_turn(&first.inner, &second.outer)
    } else {
        is_u_turn(&second.outer, &first.inner)
    };
    if turned {
        return Ok(None);
    }
    Ok(Some(Subtree {
        inner: first.inner,
        outer: second.outer,
        sample,
        size,
    }))
}

/// One NUTS transition from `state`; returns the new position and the
/// number of events simulated.
pub fn nuts_propose(
    state: &ZigzagState,
    model: &ZigzagModel,
    config: &ZigzagConfig,
    rng: &mut dyn RngCore,
) -> Result<(Vec<f64>, usize)> {
    let mut budget = config.max_events_per_proposal;
    let mut minus = state.clone();
    let mut plus = state.clone();
    let mut sample = state.x.clone();
    let mut size = 1usize;
    let mut depth = 0;
    while depth < config.max_tree_depth {
        let forward = rng.random_bool(0.5);
        let edge = if forward { &plus } else { &minus };
        let Some(sub) = build_tree(edge, model, config.t_base, forward, depth, rng, &mut budget)? else {
            break;
        };
        if rng.random::<f64>() * ((size + sub.size) as f64) < sub.size as f64 {
            sample = sub.sample;
        }
        size += sub.size;
        if forward {
            plus = sub.outer;
        } else {
            minus = sub.outer;
        }
        depth += 1;
        if is_u_turn(&minus, &plus) {
            break;
        }
    }
    if depth == config.max_tree_depth {
        log::warn!("NUTS reached the maximum tree depth {depth}");
    }
    Ok((sample, config.max_events_per_proposal - budget))
}
