//! Exact discrete optimal transport by successive shortest paths.
//!
//! The transportation problem between supplies `a` and demands `b` is solved
//! as a min-cost flow on the dense bipartite graph source -> rows -> columns
//! -> sink. Dijkstra with node potentials keeps reduced costs nonnegative, so
//! each augmentation follows a cheapest residual path. The graph has at most a
//! few thousand nodes in practice and is never materialized: residual arcs are
//! derived on the fly from the current plan.

use crate::error::{MfgError, Result};

/// Residual capacity below which an arc is considered saturated.
const CAP_EPS: f64 = 1e-15;

/// Optimal plan: total cost and the nonzero entries `(row, col, mass)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Minimizes `Σ π_ij c(i, j)` over couplings `π` of `a` and `b`.
///
/// The two weight vectors must carry the same total mass (up to `1e-9`).
pub fn exact_transport_cost(
    a: &[f64],
    b: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> Result<TransportPlan> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(MfgError::EmptyMeasure);
    }
    let ta: f64 = a.iter().sum();
    let tb: f64 = b.iter().sum();
    if (ta - tb).abs() > 1e-9 {
        return Err(MfgError::Unnormalized(ta - tb));
    }
    let c: Vec<f64> = (0..n * m).map(|k| cost(k / m, k % m)).collect();
    if c.iter().any(|x| !x.is_finite()) {
        return Err(MfgError::NonFinite("transport cost"));
    }

    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = vec![0.0; n * m];
    // Node layout: 0..n rows, n..n+m columns, n+m sink. The source is
    // implicit: every row with remaining supply starts at distance 0.
    let v_count = n + m + 1;
    let sink = n + m;
    let mut pot = vec![0.0; v_count];
    let mut dist = vec![0.0; v_count];
    let mut prev = vec![usize::MAX; v_count];
    let mut done = vec![false; v_count];
    let target = ta.min(tb);
    let mut shipped = 0.0;

    while target - shipped > 1e-13 {
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        for i in 0..n {
            if supply[i] > CAP_EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..v_count {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX || u == sink {
                break;
            }
            done[u] = true;
            let relax = |v: usize, w: f64, dist: &mut [f64], prev: &mut [usize]| {
                let nd = best + (w + pot[u] - pot[v]).max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u < n {
                for j in 0..m {
                    if !done[n + j] {
                        relax(n + j, c[u * m + j], &mut dist, &mut prev);
                    }
                }
            } else {
                let j = u - n;
                if demand[j] > CAP_EPS && !done[sink] {
                    relax(sink, 0.0, &mut dist, &mut prev);
                }
                for i in 0..n {
                    if !done[i] && flow[i * m + j] > CAP_EPS {
                        relax(i, -c[i * m + j], &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let reach = dist[sink];
        for v in 0..v_count {
            pot[v] += dist[v].min(reach);
        }

        // Walk back from the sink to find the bottleneck.
        let last_col = prev[sink];
        let mut delta = demand[last_col - n];
        let mut v = last_col;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                // Backward arc column u -> row v cancels flow on (v, u).
                delta = delta.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        delta = delta.min(supply[v]);

        supply[v] -= delta;
        demand[last_col - n] -= delta;
        let mut v = last_col;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u * m + (v - n)] += delta;
            } else {
                flow[v * m + (u - n)] -= delta;
            }
            v = u;
        }
        shipped += delta;
    }

    let mut entries = Vec::new();
    let mut total = 0.0;
    for (k, &f) in flow.iter().enumerate() {
        if f > CAP_EPS {
            total += f * c[k];
            entries.push((k / m, k % m, f));
        }
    }
    Ok(TransportPlan { cost: total, entries })
}
