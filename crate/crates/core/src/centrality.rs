//! Katz centrality, PageRank and degree statistics on sparse weighted graphs.
//!
//! Katz solves `x = alpha * A^T x + beta * 1` by fixed-point iteration, so a
//! node is credited for every weighted walk that ends at it. Scores are then
//! divided by their maximum entry, which maps them into `[0, 1]`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse row adjacency with parallel edges merged by summing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph<T> {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<T>,
    symmetric: bool,
}

impl<T: Scalar> SparseGraph<T> {
    /// Builds a directed graph on `n` nodes. Self-loops are kept if given;
    /// callers that forbid them filter beforehand.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut list: Vec<(usize, usize, T)> = edges.into_iter().collect();
        list.sort_by_key(|e| (e.0, e.1));
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(list.len());
        let mut weights: Vec<T> = Vec::with_capacity(list.len());
        let mut last: Option<(usize, usize)> = None;
        for (u, v, w) in list {
            assert!(u < n && v < n, "edge ({u},{v}) out of range for {n} nodes");
            if last == Some((u, v)) {
                let tail = weights.last_mut().expect("merged edge");
                *tail = *tail + w;
                continue;
            }
            last = Some((u, v));
            targets.push(v);
            weights.push(w);
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        SparseGraph {
            offsets,
            targets,
            weights,
            symmetric: false,
        }
    }

    /// Builds the graph and adds the transpose, so every edge is mirrored.
    pub fn symmetrized(n: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let list: Vec<(usize, usize, T)> = edges.into_iter().collect();
        let mirrored = list.iter().map(|&(u, v, w)| (v, u, w));
        let mut g = Self::from_edges(n, list.iter().copied().chain(mirrored));
        g.symmetric = true;
        g
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn out_edges(&self, u: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.node_count()).flat_map(move |u| self.out_edges(u).map(move |(v, w)| (u, v, w)))
    }

    pub fn weight(&self, u: usize, v: usize) -> T {
        self.out_edges(u)
            .find(|&(t, _)| t == v)
            .map_or_else(T::zero, |(_, w)| w)
    }

    /// Same graph with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        SparseGraph {
            offsets: self.offsets.clone(),
            targets: self.targets.clone(),
            weights: self.weights.iter().map(|&w| w * factor).collect(),
            symmetric: self.symmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Katz,
    Pagerank,
    Degree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores<T> {
    /// One score per node, indexed like the graph.
    pub scores: Vec<T>,
    pub method: Method,
    /// Katz alpha or PageRank damping.
    pub alpha_or_damping: T,
    pub normalized: bool,
    pub iterations: usize,
}

impl<T: Scalar> CentralityScores<T> {
    pub fn get(&self, node: usize) -> T {
        self.scores[node]
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Writes `node,score` rows using `labels[i]` as the node name.
    pub fn write_csv<W: Write>(&self, writer: W, labels: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "score"])?;
        for (label, score) in labels.iter().zip(&self.scores) {
            w.write_record([label.as_str(), &score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn divide_by_max<T: Scalar>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::zero(), T::max);
    if max > T::zero() {
        for v in x.iter_mut() {
            *v = *v / max;
        }
    }
}

/// Upper estimate of the spectral radius of a non-negative adjacency matrix.
///
/// Runs `steps` power iterations on `A + I` from the all-ones vector and
/// returns the smallest Collatz-Wielandt bound `max_i (Mx)_i / x_i` seen,
/// minus one. The shift keeps the iterate positive and avoids the
/// oscillation plain power iteration shows on bipartite or periodic graphs.
pub fn spectral_radius_estimate<T: Scalar>(graph: &SparseGraph<T>, steps: usize) -> T {
    let n = graph.node_count();
    if n == 0 || graph.edge_count() == 0 {
        return T::zero();
    }
    let mut x = vec![T::one(); n];
    let mut best = T::infinity();
    for _ in 0..steps.max(1) {
        let mut y = x.clone();
        for (u, xu) in y.iter_mut().enumerate() {
            for (v, w) in graph.out_edges(u) {
                *xu = *xu + w * x[v];
            }
        }
        let bound = y.iter().zip(&x).map(|(&yi, &xi)| yi / xi).fold(T::zero(), T::max);
        best = best.min(bound);
        divide_by_max(&mut y);
        x = y;
    }
    (best - T::one()).max(T::zero())
}

/// `frac / rho` with a 100-step radius estimate; graphs without edges use
/// `frac` directly.
pub fn default_katz_alpha<T: Scalar>(graph: &SparseGraph<T>, frac: T) -> T {
    let rho = spectral_radius_estimate(graph, 100);
    if rho > T::zero() {
        frac / rho
    } else {
        frac
    }
}

/// Unnormalized Katz vector: the fixed point of `x = alpha * A^T x + beta`.
pub fn katz_unnormalized<T: Scalar>(
    graph: &SparseGraph<T>,
    alpha: T,
    beta: T,
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, usize)> {
    if alpha.is_nan() || alpha <= T::zero() {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if beta.is_nan() || beta <= T::zero() {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let rho = spectral_radius_estimate(graph, 100);
    if rho > T::zero() && alpha >= T::one() / rho {
        return Err(Error::AlphaTooLarge {
            alpha: alpha.as_f64(),
            rho: rho.as_f64(),
            limit: (T::one() / rho).as_f64(),
        });
    }
    let n = graph.node_count();
    let mut x = vec![beta; n];
    let mut next = vec![beta; n];
    let mut residual = T::infinity();
    for iter in 1..=max_iter {
        next.fill(beta);
        for (u, &xu) in x.iter().enumerate() {
            if xu == T::zero() {
                continue;
            }
            for (v, w) in graph.out_edges(u) {
                next[v] = next[v] + alpha * w * xu;
            }
        }
        residual = next
            .iter()
            .zip(&x)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        std::mem::swap(&mut x, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok((x, iter));
        }
    }
    Err(Error::NoConvergence {
        method: "katz",
        iterations: max_iter,
        residual: residual.as_f64(),
    })
}

/// Katz centrality divided by its maximum entry.
pub fn katz_centrality<T: Scalar>(
    graph: &SparseGraph<T>,
    alpha: T,
    beta: T,
    tol: T,
    max_iter: usize,
) -> Result<CentralityScores<T>> {
    let (mut scores, iterations) = katz_unnormalized(graph, alpha, beta, tol, max_iter)?;
    divide_by_max(&mut scores);
    Ok(CentralityScores {
        scores,
        method: Method::Katz,
        alpha_or_damping: alpha,
        normalized: true,
        iterations,
    })
}

/// Weighted PageRank. Dangling nodes spread their mass uniformly.
/// Converges in L1; `normalize` divides the stationary vector by its max.
pub fn pagerank<T: Scalar>(
    graph: &SparseGraph<T>,
    damping: T,
    tol: T,
    max_iter: usize,
    normalize: bool,
) -> Result<CentralityScores<T>> {
    if !(damping > T::zero() && damping < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "damping must be in (0, 1), got {damping}"
        )));
    }
    let n = graph.node_count();
    let done = |scores, iterations| CentralityScores {
        scores,
        method: Method::Pagerank,
        alpha_or_damping: damping,
        normalized: normalize,
        iterations,
    };
    if n == 0 {
        return Ok(done(Vec::new(), 0));
    }
    let nf = T::of_usize(n);
    let out_weight: Vec<T> = (0..n).map(|u| graph.out_edges(u).map(|(_, w)| w).sum()).collect();
    let mut x = vec![T::one() / nf; n];
    let mut next = vec![T::zero(); n];
    let mut residual = T::infinity();
    for iter in 1..=max_iter {
        let dangling: T = (0..n).filter(|&u| out_weight[u] <= T::zero()).map(|u| x[u]).sum();
        let base = (T::one() - damping) / nf + damping * dangling / nf;
        next.fill(base);
        for u in 0..n {
            if out_weight[u] <= T::zero() {
                continue;
            }
            let share = damping * x[u] / out_weight[u];
            for (v, w) in graph.out_edges(u) {
                next[v] = next[v] + share * w;
            }
        }
        residual = next.iter().zip(&x).map(|(&a, &b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual <= tol {
            if normalize {
                divide_by_max(&mut x);
            }
            return Ok(done(x, iter));
        }
    }
    Err(Error::NoConvergence {
        method: "pagerank",
        iterations: max_iter,
        residual: residual.as_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats<T> {
    pub in_degree: usize,
    pub out_degree: usize,
    /// Total weight of incident edges; on symmetric graphs each undirected
    /// edge counts once.
    pub weighted_degree: T,
}

pub fn degree_stats<T: Scalar>(graph: &SparseGraph<T>) -> Vec<DegreeStats<T>> {
    let n = graph.node_count();
    let mut stats = vec![
        DegreeStats {
            in_degree: 0,
            out_degree: 0,
            weighted_degree: T::zero(),
        };
        n
    ];
    for (u, v, w) in graph.edges() {
        stats[u].out_degree += 1;
        stats[v].in_degree += 1;
        stats[u].weighted_degree = stats[u].weighted_degree + w;
        if !graph.is_symmetric() {
            stats[v].weighted_degree = stats[v].weighted_degree + w;
        }
    }
    stats
}
