//! Exhaustive-enumeration oracles for the depth-3 truncated search values.
//!
//! Everything here works on raw path probabilities with hand-written
//! observation tables. No belief recursion, no quadrature, no solver code:
//! a deterministic policy's action at any step is a function of the
//! observations seen so far, so enumerating every map from
//! observation-history nodes to actions covers every deterministic policy,
//! and each map is scored by summing `probability x cost` over all
//! label/observation paths. Agreement with the production evaluators then
//! pins both sides independently.
//!
//! The toy observation model is binary: a null sequence emits 1 with
//! probability 0.2, a signal-bearing sequence with probability 0.8. The
//! pair observation is the sum of two independent emissions, so its
//! distribution over {0, 1, 2} depends only on how many members carry the
//! signal; the three tables below are the hand-computed convolutions.

#![allow(dead_code)]

/// P(x) for a null sequence: x in {0, 1}.
pub const TOY_F0: [f64; 2] = [0.8, 0.2];
/// P(x) for a signal-bearing sequence.
pub const TOY_F1: [f64; 2] = [0.2, 0.8];
/// P(z) for a pair with no signal: (0.8, 0.2) convolved with itself.
pub const TOY_Z00: [f64; 3] = [0.64, 0.32, 0.04];
/// P(z) for a pair with exactly one signal: (0.8, 0.2) * (0.2, 0.8).
pub const TOY_ZMIX: [f64; 3] = [0.16, 0.68, 0.16];
/// P(z) for a pair with two signals: (0.2, 0.8) convolved with itself.
pub const TOY_Z11: [f64; 3] = [0.04, 0.32, 0.64];

/// Search depth shared by all three oracles.
pub const HORIZON: u32 = 3;

/// Minimal expected cost of the depth-3 confirmation stage, enumerating
/// all 2^7 stop/continue maps on the binary observation-history tree.
///
/// `start` holds the joint weights of the pair's label classes in the
/// order `[w11, w10, w01, w00]` (first index: does sequence a carry the
/// signal; second: does sequence b). Observations come from sequence a
/// only. A stop leaf declares whichever sequence is more likely to carry
/// the signal; since leaf contributions add up and the declaration at one
/// leaf constrains nothing else, taking the cheaper declaration per leaf
/// enumerates both choices exactly.
pub fn enumerate_refinement(c: f64, start: [f64; 4]) -> f64 {
    let mut best = f64::INFINITY;
    // Internal nodes: depth 0 has id 0, depth d children ids 2*id+1+x.
    for mask in 0u32..(1 << 7) {
        let v = refine_walk(c, mask, 0, 0, start);
        if v < best {
            best = v;
        }
    }
    best
}

fn refine_stop_cost(w: [f64; 4]) -> f64 {
    let mass_a = w[0] + w[1]; // sequence a carries the signal
    let mass_b = w[0] + w[2]; // sequence b carries the signal
    let total: f64 = w.iter().sum();
    total - mass_a.max(mass_b)
}

fn refine_walk(c: f64, mask: u32, node: u32, depth: u32, w: [f64; 4]) -> f64 {
    let total: f64 = w.iter().sum();
    let stop = c * depth as f64 * total + refine_stop_cost(w);
    if depth == HORIZON || mask & (1 << node) != 0 {
        return stop;
    }
    let mut cont = 0.0;
    for x in 0..2usize {
        // Classes 11 and 10 put the signal in sequence a.
        let next = [
            w[0] * TOY_F1[x],
            w[1] * TOY_F1[x],
            w[2] * TOY_F0[x],
            w[3] * TOY_F0[x],
        ];
        cont += refine_walk(c, mask, 2 * node + 1 + x as u32, depth + 1, next);
    }
    cont
}

/// Minimal expected cost of the depth-3 pair-scanning stage, enumerating
/// all 3^13 maps from observation-history nodes to {stop, continue,
/// switch} on the ternary tree.
///
/// Weights are `[w00, wmix, w11]`, jointly over (label class of the pair
/// currently under observation, observations so far). Switching replaces
/// the pair: the path mass redistributes over the classes by the prior,
/// and the next observation comes from the fresh pair. `stop_cost` prices
/// committing to confirmation at the normalized belief `(p11, pmix)`.
pub fn enumerate_scanning<S>(c: f64, prior: [f64; 3], start: [f64; 3], stop_cost: &S) -> f64
where
    S: Fn(f64, f64) -> f64,
{
    // Ternary-history node ids: depth d block starts at (3^d - 1)/2.
    const N_NODES: u32 = 13; // depths 0..=2
    let pow3: Vec<u64> = (0..N_NODES).map(|k| 3u64.pow(k)).collect();
    let n_maps = 3u64.pow(N_NODES);
    let mut best = f64::INFINITY;
    for map in 0..n_maps {
        let v = scan_walk(c, map, &pow3, 0, 0, prior, start, stop_cost);
        if v < best {
            best = v;
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn scan_walk<S>(
    c: f64,
    map: u64,
    pow3: &[u64],
    node: u32,
    depth: u32,
    prior: [f64; 3],
    w: [f64; 3],
    stop_cost: &S,
) -> f64
where
    S: Fn(f64, f64) -> f64,
{
    let total = w[0] + w[1] + w[2];
    let stop = c * depth as f64 * total + total * stop_cost(w[2] / total, w[1] / total);
    if depth == HORIZON {
        return stop;
    }
    let action = (map / pow3[node as usize]) % 3;
    match action {
        0 => stop,
        _ => {
            // 1 = keep the current pair, 2 = observe a fresh pair.
            let base = if action == 1 {
                w
            } else {
                [total * prior[0], total * prior[1], total * prior[2]]
            };
            let mut acc = 0.0;
            for z in 0..3usize {
                let next = [
                    base[0] * TOY_Z00[z],
                    base[1] * TOY_ZMIX[z],
                    base[2] * TOY_Z11[z],
                ];
                acc += scan_walk(
                    c,
                    map,
                    pow3,
                    3 * node + 1 + z as u32,
                    depth + 1,
                    prior,
                    next,
                    stop_cost,
                );
            }
            acc
        }
    }
}

/// Minimal expected cost of the depth-3 one-sequence-at-a-time search,
/// enumerating all 3^7 maps from observation-history nodes to {stop,
/// continue, switch} on the binary tree.
///
/// Weights are `[w0, w1]` over (is the current sequence null / signal,
/// observations so far). Stopping declares the current sequence, so the
/// error mass is `w0`. Switching redistributes the path mass by the prior
/// and observes the fresh sequence.
pub fn enumerate_baseline(c: f64, prior_pi: f64, start: [f64; 2]) -> f64 {
    let pow3: Vec<u64> = (0..7).map(|k| 3u64.pow(k)).collect();
    let mut best = f64::INFINITY;
    for map in 0..3u64.pow(7) {
        let v = baseline_walk(c, map, &pow3, 0, 0, prior_pi, start);
        if v < best {
            best = v;
        }
    }
    best
}

fn baseline_walk(
    c: f64,
    map: u64,
    pow3: &[u64],
    node: u32,
    depth: u32,
    prior_pi: f64,
    w: [f64; 2],
) -> f64 {
    let total = w[0] + w[1];
    let stop = c * depth as f64 * total + w[0];
    if depth == HORIZON {
        return stop;
    }
    let action = (map / pow3[node as usize]) % 3;
    match action {
        0 => stop,
        _ => {
            let base = if action == 1 {
                w
            } else {
                [total * (1.0 - prior_pi), total * prior_pi]
            };
            let mut acc = 0.0;
            for x in 0..2usize {
                let next = [base[0] * TOY_F0[x], base[1] * TOY_F1[x]];
                acc += baseline_walk(c, map, pow3, 2 * node + 1 + x as u32, depth + 1, prior_pi, next);
            }
            acc
        }
    }
}
