//! Stationary law of the block chain on `m^r` contexts.
//!
//! The chain must have exactly one closed communicating class; transient
//! contexts get zero mass. Small classes are solved directly, large ones by
//! power iteration on the lazy chain `(I + Q) / 2`, which has the same
//! stationary law and is aperiodic.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};

pub(crate) const DENSE_SOLVE_LIMIT: usize = 4096;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 1_000_000;

pub(crate) fn solve(m: usize, order: usize, kernel: &[f64]) -> Result<Vec<f64>> {
    let states = kernel.len() / m;
    if order == 0 {
        return Ok(vec![1.0]);
    }
    let next = |c: usize, b: usize| (c * m + b) % states;

    let mut graph = DiGraph::<(), ()>::with_capacity(states, states * m);
    let nodes: Vec<_> = (0..states).map(|_| graph.add_node(())).collect();
    for c in 0..states {
        for b in 0..m {
            if kernel[c * m + b] > 0.0 {
                graph.add_edge(nodes[c], nodes[next(c, b)], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; states];
    for (k, scc) in sccs.iter().enumerate() {
        for v in scc {
            component[v.index()] = k;
        }
    }
    let closed: Vec<usize> = (0..sccs.len())
        .filter(|&k| {
            sccs[k].iter().all(|v| {
                let c = v.index();
                (0..m).all(|b| kernel[c * m + b] == 0.0 || component[next(c, b)] == k)
            })
        })
        .collect();
    if closed.len() != 1 {
        return Err(Error::Reducible(format!("{} closed communicating classes among {states} contexts", closed.len())));
    }
    let mut class: Vec<usize> = sccs[closed[0]].iter().map(|v| v.index()).collect();
    class.sort_unstable();

    let mut pi = if class.len() <= DENSE_SOLVE_LIMIT {
        dense(m, states, kernel, &class)?
    } else {
        power_iteration(m, states, kernel, &class)
    };
    for p in &mut pi {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

fn dense(m: usize, states: usize, kernel: &[f64], class: &[usize]) -> Result<Vec<f64>> {
    let k = class.len();
    let mut local = vec![usize::MAX; states];
    for (j, &c) in class.iter().enumerate() {
        local[c] = j;
    }
    // Rows of (Q^T - I), last equation replaced by normalization.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (j, &c) in class.iter().enumerate() {
        a[(j, j)] -= 1.0;
        for b in 0..m {
            let p = kernel[c * m + b];
            if p > 0.0 {
                let to = local[(c * m + b) % states];
                a[(to, j)] += p;
            }
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k);
    rhs[k - 1] = 1.0;
    let x = a.lu().solve(&rhs).ok_or_else(|| Error::Reducible("singular balance equations".into()))?;
    let mut pi = vec![0.0; states];
    for (j, &c) in class.iter().enumerate() {
        pi[c] = x[j];
    }
    Ok(pi)
}

fn power_iteration(m: usize, states: usize, kernel: &[f64], class: &[usize]) -> Vec<f64> {
    let mut pi = vec![0.0; states];
    for &c in class {
        pi[c] = 1.0 / class.len() as f64;
    }
    let mut next = vec![0.0; states];
    for _ in 0..POWER_MAX_ITER {
        next.iter_mut().zip(&pi).for_each(|(n, &p)| *n = 0.5 * p);
        for c in 0..states {
            let mass = 0.5 * pi[c];
            if mass == 0.0 {
                continue;
            }
            for b in 0..m {
                next[(c * m + b) % states] += mass * kernel[c * m + b];
            }
        }
        let diff = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if diff < POWER_TOL {
            break;
        }
    }
    pi
}
