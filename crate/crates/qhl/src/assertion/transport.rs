//! Bipartite transportation feasibility: route supply masses to component
//! demands through permitted arcs. Used for decomposition search and for the
//! weight accounting of entailment proofs.
//!
//! Augmenting-path search (breadth-first, so shortest paths first) over the
//! residual graph; the augmentation count is polynomial in the node count
//! independent of the capacity values, which keeps the float instantiation
//! safe from non-termination.

use crate::lang::Rational;
use num_traits::Zero;
use std::collections::VecDeque;
use std::ops::{Add, Sub};

pub trait FlowNum: Copy + PartialOrd + Zero + Add<Output = Self> + Sub<Output = Self> {}
impl FlowNum for f64 {}
impl FlowNum for Rational {}

const ROOT: usize = usize::MAX;

/// Maximum flow and per-arc flows. Forward arcs are uncapacitated; supplies
/// cap the sources and demands cap the sinks. `eps` is the smallest residual
/// worth pushing (zero for exact arithmetic).
fn max_flow<T: FlowNum>(
    supplies: &[T],
    demands: &[T],
    arc: &dyn Fn(usize, usize) -> bool,
    eps: T,
) -> (T, Vec<Vec<T>>) {
    let nb = supplies.len();
    let nc = demands.len();
    let mut flow = vec![vec![T::zero(); nc]; nb];
    let mut used_s = vec![T::zero(); nb];
    let mut used_d = vec![T::zero(); nc];
    let mut total = T::zero();
    loop {
        // node ids: 0..nb are supplies, nb..nb+nc are demands
        let mut parent: Vec<Option<usize>> = vec![None; nb + nc];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for b in 0..nb {
            if supplies[b] - used_s[b] > eps {
                parent[b] = Some(ROOT);
                queue.push_back(b);
            }
        }
        let mut end: Option<usize> = None;
        'bfs: while let Some(u) = queue.pop_front() {
            if u < nb {
                for i in 0..nc {
                    let v = nb + i;
                    if parent[v].is_none() && arc(u, i) {
                        parent[v] = Some(u);
                        if demands[i] - used_d[i] > eps {
                            end = Some(v);
                            break 'bfs;
                        }
                        queue.push_back(v);
                    }
                }
            } else {
                let i = u - nb;
                for b in 0..nb {
                    if parent[b].is_none() && flow[b][i] > eps {
                        parent[b] = Some(u);
                        queue.push_back(b);
                    }
                }
            }
        }
        let Some(end) = end else { break };

        // bottleneck along the path: demand residual, backward flows, supply
        // residual at the root
        let i_end = end - nb;
        let mut delta = demands[i_end] - used_d[i_end];
        let mut v = end;
        loop {
            let u = parent[v].unwrap();
            if u == ROOT {
                let r = supplies[v] - used_s[v];
                if r < delta {
                    delta = r;
                }
                break;
            }
            if v >= nb && u < nb {
                // forward arc u -> v: uncapacitated
            } else {
                // backward arc: v is a supply reached from demand u
                let f = flow[v][u - nb];
                if f < delta {
                    delta = f;
                }
            }
            v = u;
        }

        let mut v = end;
        loop {
            let u = parent[v].unwrap();
            if u == ROOT {
                used_s[v] = used_s[v] + delta;
                break;
            }
            if v >= nb && u < nb {
                flow[u][v - nb] = flow[u][v - nb] + delta;
            } else {
                flow[v][u - nb] = flow[v][u - nb] - delta;
            }
            v = u;
        }
        used_d[i_end] = used_d[i_end] + delta;
        total = total + delta;
    }
    (total, flow)
}

/// Float feasibility: every demand filled and every supply drained up to
/// `slack`. Returns per-arc flows on success.
pub fn feasible_f64(
    supplies: &[f64],
    demands: &[f64],
    arc: &dyn Fn(usize, usize) -> bool,
    slack: f64,
) -> Option<Vec<Vec<f64>>> {
    let (total, flows) = max_flow(supplies, demands, arc, 1e-15);
    let ts: f64 = supplies.iter().sum();
    let td: f64 = demands.iter().sum();
    let target = if ts > td { ts } else { td };
    if total >= target - slack {
        Some(flows)
    } else {
        None
    }
}

/// Exact rational feasibility; supplies and demands must balance exactly.
pub fn feasible_exact(
    supplies: &[Rational],
    demands: &[Rational],
    arc: &dyn Fn(usize, usize) -> bool,
) -> Option<Vec<Vec<Rational>>> {
    let (total, flows) = max_flow(supplies, demands, arc, Rational::zero());
    let ts: Rational = supplies.iter().copied().fold(Rational::zero(), |a, b| a + b);
    let td: Rational = demands.iter().copied().fold(Rational::zero(), |a, b| a + b);
    if total == ts && total == td {
        Some(flows)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn balanced_instance_routes_fully() {
        // two supplies of 1/2; component 0 takes either, component 1 only b1
        let flows = feasible_exact(
            &[rat(1, 2), rat(1, 2)],
            &[rat(1, 2), rat(1, 2)],
            &|b, i| i == 0 || b == 1,
        )
        .expect("feasible");
        assert_eq!(flows[0][0], rat(1, 2));
        assert_eq!(flows[1][1], rat(1, 2));
    }

    #[test]
    fn overcommitted_component_is_infeasible() {
        // both supplies can only reach component 0, which wants 1/2
        let r = feasible_exact(
            &[rat(1, 2), rat(1, 2)],
            &[rat(1, 2), rat(1, 2)],
            &|_, i| i == 0,
        );
        assert!(r.is_none());
    }

    #[test]
    fn rerouting_through_backward_arcs() {
        // greedy would send b0 to c0 and strand b1; the solver must reroute
        let flows = feasible_exact(
            &[rat(1, 2), rat(1, 2)],
            &[rat(1, 2), rat(1, 2)],
            &|b, i| (b, i) != (1, 1),
        )
        .expect("feasible");
        assert_eq!(flows[0][1], rat(1, 2));
        assert_eq!(flows[1][0], rat(1, 2));
    }

    #[test]
    fn fractional_split_across_components() {
        // one supply of 1 split over three demands
        let flows = feasible_exact(
            &[rat(1, 1)],
            &[rat(1, 2), rat(1, 3), rat(1, 6)],
            &|_, _| true,
        )
        .expect("feasible");
        let total: Rational = flows[0].iter().copied().fold(Rational::zero(), |a, b| a + b);
        assert_eq!(total, rat(1, 1));
    }

    #[test]
    fn float_version_tolerates_noise() {
        let w = 1.0 / 3.0;
        let flows = feasible_f64(&[w, w, w], &[2.0 * w, w], &|_, _| true, 1e-9).expect("feasible");
        let c0: f64 = (0..3).map(|b| flows[b][0]).sum();
        assert!((c0 - 2.0 * w).abs() < 1e-9);
        assert!(feasible_f64(&[w, w, w], &[2.0 * w, w], &|b, _| b == 0, 1e-9).is_none());
    }
}
