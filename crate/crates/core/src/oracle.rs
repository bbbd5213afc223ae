//! Slow reference solvers used to cross-check the production code paths.
//! Nothing outside tests should call into this module.

use crate::error::{Result, RscError};
use crate::lp::{LinearProgram, Relation};
use crate::nn::Tensor2;
use crate::scmdp::ScMdpSpec;
use crate::robust::{TvBall, WorstCase};

/// `min P·v` over a TV ball as an explicit LP in `(P, u)` with
/// `|P_i − p0_i| ≤ u_i` and `Σ u_i ≤ 2σ`.
pub fn lp_oracle_min_expectation(ball: &TvBall, v: &[f64]) -> Result<WorstCase> {
    let (p0, sigma) = (ball.center(), ball.radius());
    if v.len() != p0.len() {
        return Err(RscError::Shape(format!("value vector has {} entries, ball {}", v.len(), p0.len())));
    }
    let n = p0.len();
    let mut costs = v.to_vec();
    costs.extend(std::iter::repeat_n(0.0, n));
    let mut lp = LinearProgram::minimize(costs);
    let mut row = vec![0.0; 2 * n];
    row[..n].fill(1.0);
    lp.constrain(row, Relation::Eq, 1.0);
    for i in 0..n {
        let mut upper = vec![0.0; 2 * n];
        upper[i] = 1.0;
        upper[n + i] = -1.0;
        lp.constrain(upper, Relation::Le, p0[i]);
        let mut lower = vec![0.0; 2 * n];
        lower[i] = 1.0;
        lower[n + i] = 1.0;
        lp.constrain(lower, Relation::Ge, p0[i]);
    }
    let mut budget = vec![0.0; 2 * n];
    budget[n..].fill(1.0);
    lp.constrain(budget, Relation::Le, 2.0 * sigma);
    let sol = lp.solve()?;
    Ok(WorstCase {
        value: sol.objective,
        worst: sol.x[..n].to_vec(),
    })
}

/// Candidate extreme points of a TV ball, by brute force. Every coordinate
/// is pinned at `0`, pinned at `p0_i`, or left free; one free coordinate is
/// fixed by `ΣP = 1`, two free coordinates additionally saturate the radius.
/// The result contains every vertex of the ball (plus possibly some
/// non-extreme feasible points), so a linear minimum over it is exact.
pub fn tv_ball_vertices(p0: &[f64], sigma: f64) -> Vec<Vec<f64>> {
    const TOL: f64 = 1e-12;
    let n = p0.len();
    let feasible = |p: &[f64]| {
        let tv = 0.5 * p.iter().zip(p0).map(|(a, b)| (a - b).abs()).sum::<f64>();
        p.iter().all(|&x| x >= -TOL) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-10 && tv <= sigma + 1e-10
    };
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut push = |p: Vec<f64>| {
        if feasible(&p) && !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-10)) {
            out.push(p);
        }
    };
    // status per coordinate: 0 = zero, 1 = center, 2 = free
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut status = vec![0u8; n];
        let mut c = code;
        for st in status.iter_mut() {
            *st = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == 2).collect();
        let mut p: Vec<f64> = (0..n).map(|i| if status[i] == 1 { p0[i] } else { 0.0 }).collect();
        let fixed_mass: f64 = p.iter().sum();
        let fixed_dev: f64 = (0..n).filter(|&i| status[i] != 2).map(|i| (p[i] - p0[i]).abs()).sum();
        match free.as_slice() {
            [k] => {
                p[*k] = 1.0 - fixed_mass;
                push(p);
            }
            [j, k] => {
                let (j, k) = (*j, *k);
                // P_j + P_k = m, s_j(P_j − p0_j) + s_k(P_k − p0_k) = d
                let m = 1.0 - fixed_mass;
                let d = 2.0 * sigma - fixed_dev;
                for (sj, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let det: f64 = sk - sj;
                    if det.abs() < 0.5 {
                        continue;
                    }
                    let rhs = d + sj * p0[j] + sk * p0[k];
                    // sj P_j + sk (m − P_j) = rhs
                    let pj = (rhs - sk * m) / (sj - sk);
                    let pk = m - pj;
                    if sj * (pj - p0[j]) < -TOL || sk * (pk - p0[k]) < -TOL {
                        continue;
                    }
                    let mut q = p.clone();
                    q[j] = pj;
                    q[k] = pk;
                    push(q);
                }
            }
            _ => {}
        }
    }
    out
}

/// `min P·v` over the enumerated candidate points.
pub fn vertex_oracle_min_expectation(p0: &[f64], v: &[f64], sigma: f64) -> f64 {
    tv_ball_vertices(p0, sigma)
        .iter()
        .map(|p| p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Exact robust SC optimum for two actions: the objective in `p = π(0)` is
/// the lower envelope of one line per ball vertex, so its maximum sits at an
/// endpoint or at a pairwise crossing.
pub fn two_action_oracle(spec: &ScMdpSpec, sigma: f64) -> Vec<Vec<f64>> {
    let (horizon, ns) = (spec.horizon(), spec.num_states());
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    for t in (1..=horizon).rev() {
        let pc = spec.nominal_confounder(t);
        let verts = tv_ball_vertices(pc, sigma);
        for s in 0..ns {
            // line_k(p) = p * (r0 + P_k·h0) + (1 − p) * (r1 + P_k·h1)
            let ends: Vec<(f64, f64)> = verts
                .iter()
                .map(|pk| {
                    let side = |a: usize| {
                        spec.reward(t, s, a)
                            + (0..pk.len())
                                .map(|c| {
                                    pk[c]
                                        * spec
                                            .kernel(t, s, a, c)
                                            .iter()
                                            .zip(&v[t])
                                            .map(|(x, y)| x * y)
                                            .sum::<f64>()
                                })
                                .sum::<f64>()
                    };
                    (side(1), side(0))
                })
                .collect();
            let envelope = |p: f64| {
                ends.iter()
                    .map(|(at0, at1)| at0 + p * (at1 - at0))
                    .fold(f64::INFINITY, f64::min)
            };
            let mut candidates = vec![0.0, 1.0];
            for i in 0..ends.len() {
                for j in i + 1..ends.len() {
                    let si = ends[i].1 - ends[i].0;
                    let sj = ends[j].1 - ends[j].0;
                    if (si - sj).abs() > 1e-15 {
                        let p = (ends[j].0 - ends[i].0) / (si - sj);
                        if (0.0..=1.0).contains(&p) {
                            candidates.push(p);
                        }
                    }
                }
            }
            v[t - 1][s] = candidates.into_iter().map(envelope).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    v
}

/// Brute-force donor search for the dimension swap: every candidate's score
/// is computed from the full squared distance, then the best is picked by a
/// full sort (highest score, lowest index).
pub fn brute_force_donor(states: &[Vec<f64>], target: usize, dim: usize) -> usize {
    let base = &states[target];
    let mut scored: Vec<(f64, usize)> = states
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != target)
        .map(|(k, s)| {
            let diffs: Vec<f64> = base.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).collect();
            let rest: f64 = diffs.iter().enumerate().filter(|(j, _)| *j != dim).map(|(_, d)| d).sum();
            (diffs[dim] / (rest + crate::augment::SWAP_EPS), k)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored[0].1
}

/// Worst relative error between analytic gradients and central differences
/// with step `h`. `f` returns the loss and its gradients for the given
/// parameters; the relative error of each entry is
/// `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
pub fn gradient_check<F>(params: &[Tensor2], h: f64, floor: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[Tensor2]) -> Result<(f64, Vec<Tensor2>)>,
{
    let (_, analytic) = f(params)?;
    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for e in 0..p.len() {
            let x = p.data()[e];
            probe[pi].data_mut()[e] = x + h;
            let (up, _) = f(&probe)?;
            probe[pi].data_mut()[e] = x - h;
            let (down, _) = f(&probe)?;
            probe[pi].data_mut()[e] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_oracle_two_point() {
        let ball = TvBall::new(vec![0.5, 0.5], 0.2).unwrap();
        let wc = lp_oracle_min_expectation(&ball, &[0.0, 1.0]).unwrap();
        assert!((wc.value - 0.3).abs() < 1e-10);
    }

    #[test]
    fn vertices_of_interval() {
        let mut verts = tv_ball_vertices(&[0.5, 0.5], 0.2);
        verts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(verts.len(), 3);
        assert!((verts[0][0] - 0.3).abs() < 1e-12 && (verts[2][0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn vertex_oracle_matches_lp() {
        let p0 = [0.2, 0.5, 0.3];
        let v = [1.0, 3.0, -2.0];
        for sigma in [0.0, 0.15, 0.4, 1.0] {
            let ball = TvBall::new(p0.to_vec(), sigma).unwrap();
            let a = lp_oracle_min_expectation(&ball, &v).unwrap().value;
            let b = vertex_oracle_min_expectation(&p0, &v, sigma);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
