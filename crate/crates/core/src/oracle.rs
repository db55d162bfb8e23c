//! Brute-force grid enumeration bracketing the optimized rate.
//!
//! The oracle quantizes every auxiliary channel row onto a simplex grid,
//! runs the exact decoder update at each grid point, and takes the best
//! feasible value. That value is a true upper bound on the rate-distortion
//! function (any admissible system is achievable). The lower end of the
//! bracket subtracts a discretization slack derived from the
//! Fannes-Audenaert entropy continuity bound, clamped at zero; at coarse
//! resolutions the slack is large, which the bracket reports honestly.
//!
//! To keep enumeration exhaustive the oracle restricts the auxiliary
//! alphabets to |W| = 3 and |U| = 2 (the optimizer runs at the full caps
//! |X|+2 and (|X|+1)^2). The restriction can only raise the upper end, so
//! the bracket stays valid.

use serde::{Deserialize, Serialize};

use crate::error::{HbrdError, Result};
use crate::optimizer::RdMode;
use crate::prob::{binary_entropy, JointDist};
use crate::source::{ComponentSource, DistortionQuadruple, DistortionSpec, ProductSource};

/// Bracket on the rate-distortion value from exhaustive grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleBracket {
    /// Best exactly-feasible grid value (upper bound on the RD function).
    pub upper_nats: f64,
    /// `max(0, relaxed_best - slack)`.
    pub lower_nats: f64,
    /// Discretization slack (entropy continuity over one grid cell).
    pub slack_nats: f64,
    /// Best value over the constraint-relaxed grid (diagnostic).
    pub relaxed_nats: f64,
    pub resolution: usize,
    pub w_card: usize,
    pub u_card: usize,
}

impl OracleBracket {
    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lower_nats - tol && value <= self.upper_nats + tol
    }
}

/// All pmfs on `k` symbols whose coordinates are multiples of
/// `1/(resolution-1)`.
pub fn simplex_grid(k: usize, resolution: usize) -> Vec<Vec<f64>> {
    let m = resolution - 1;
    fn rec(k: usize, left: usize, idx: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if idx == k - 1 {
            current[idx] = left;
            out.push(current.clone());
            return;
        }
        for v in 0..=left {
            current[idx] = v;
            rec(k, left - v, idx + 1, current, out);
        }
    }
    let mut raw = Vec::new();
    let mut current = vec![0usize; k];
    rec(k, m, 0, &mut current, &mut raw);
    raw.into_iter()
        .map(|counts| counts.iter().map(|&c| c as f64 / m as f64).collect())
        .collect()
}

/// Lower-left Pareto frontier of (distortion, rate) pairs: sorted by
/// distortion, rate strictly decreasing.
fn pareto_frontier(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (d, i) in pts {
        if let Some(&(_, last_i)) = out.last() {
            if i >= last_i - 1e-15 {
                continue;
            }
        }
        out.push((d, i));
    }
    out
}

/// Frontier of sums of one point from each input frontier.
fn merge_frontiers(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sums = Vec::with_capacity(a.len() * b.len());
    for &(da, ia) in a {
        for &(db, ib) in b {
            sums.push((da + db, ia + ib));
        }
    }
    pareto_frontier(sums)
}

/// Smallest rate on the frontier with distortion within budget.
fn min_rate_within(frontier: &[(f64, f64)], budget: f64) -> Option<f64> {
    let mut best = None;
    for &(d, i) in frontier {
        if d <= budget {
            best = Some(i);
        } else {
            break;
        }
    }
    best
}

/// One grid candidate for a component: the two common-layer informations
/// plus the private-layer minima under exact and relaxed constraints
/// (infinite when infeasible).
#[derive(Debug, Clone, Copy)]
struct Candidate {
    i_w_given_y: f64,
    i_w_given_z: f64,
    private_exact: f64,
    private_relaxed: f64,
}

struct CompOracle {
    candidates: Vec<Candidate>,
}

/// Expected distortion of the best (w, s)-cell decoder for a fixed common
/// layer.
fn common_decoder_distortion(
    p_xs: &[f64],
    nx: usize,
    ns: usize,
    q: &[Vec<f64>],
    nw: usize,
    dm: &[f64],
    nrep: usize,
) -> f64 {
    let mut total = 0.0;
    for w in 0..nw {
        for s in 0..ns {
            let mut best = f64::INFINITY;
            for rep in 0..nrep {
                let mut v = 0.0;
                for x in 0..nx {
                    v += p_xs[x * ns + s] * q[x][w] * dm[x * nrep + rep];
                }
                if v < best {
                    best = v;
                }
            }
            total += best;
        }
    }
    total
}

/// Private-layer trade-off for one w-slice: enumerate one grid row per
/// source symbol and record (distortion, information) contributions, both
/// already weighted by the slice mass.
fn slice_frontier(
    p_xs: &[f64],
    nx: usize,
    ns: usize,
    q_col: &[f64],
    u_rows: &[Vec<f64>],
    nu: usize,
    dm: &[f64],
    nrep: usize,
) -> Vec<(f64, f64)> {
    // slice weights v[x][s] = p(x,s) q(w|x)
    let mut v = vec![0.0; nx * ns];
    let mut mass = 0.0;
    for x in 0..nx {
        for s in 0..ns {
            v[x * ns + s] = p_xs[x * ns + s] * q_col[x];
            mass += v[x * ns + s];
        }
    }
    if mass <= 0.0 {
        return vec![(0.0, 0.0)];
    }
    let mut m_s = vec![0.0; ns];
    for s in 0..ns {
        for x in 0..nx {
            m_s[s] += v[x * ns + s];
        }
    }
    let n_points = u_rows.len();
    let combos = n_points.pow(nx as u32);
    let mut pts = Vec::with_capacity(combos);
    let mut choice = vec![0usize; nx];
    for combo in 0..combos {
        let mut c = combo;
        for ch in choice.iter_mut() {
            *ch = c % n_points;
            c /= n_points;
        }
        // n[s][u] = sum_x v[x][s] r_x(u)
        let mut n_su = vec![0.0; ns * nu];
        for (x, &rix) in choice.iter().enumerate() {
            let row = &u_rows[rix];
            for s in 0..ns {
                let vx = v[x * ns + s];
                if vx == 0.0 {
                    continue;
                }
                for u in 0..nu {
                    n_su[s * nu + u] += vx * row[u];
                }
            }
        }
        // information contribution
        let mut info = 0.0;
        for (x, &rix) in choice.iter().enumerate() {
            let row = &u_rows[rix];
            for s in 0..ns {
                let vx = v[x * ns + s];
                if vx == 0.0 {
                    continue;
                }
                for u in 0..nu {
                    let r = row[u];
                    if r > 0.0 && n_su[s * nu + u] > 0.0 {
                        info += vx * r * (r * m_s[s] / n_su[s * nu + u]).ln();
                    }
                }
            }
        }
        // distortion of the optimal (u, s)-cell decoder within this slice
        let mut dist = 0.0;
        for s in 0..ns {
            for u in 0..nu {
                let mut best = f64::INFINITY;
                for rep in 0..nrep {
                    let mut val = 0.0;
                    for (x, &rix) in choice.iter().enumerate() {
                        val += v[x * ns + s] * u_rows[rix][u] * dm[x * nrep + rep];
                    }
                    if val < best {
                        best = val;
                    }
                }
                dist += best;
            }
        }
        pts.push((dist, info.max(0.0)));
    }
    pareto_frontier(pts)
}

#[allow(clippy::too_many_arguments)]
fn component_candidates(
    src: &ComponentSource,
    dist: &DistortionSpec,
    private_side_y: bool,
    d_private: f64,
    d_common: f64,
    w_card: usize,
    u_card: usize,
    resolution: usize,
    relax: f64,
) -> CompOracle {
    let (nx, ny, nz) = (src.x_card, src.y_card, src.z_card);
    let mut p_xy = vec![0.0; nx * ny];
    let mut p_xz = vec![0.0; nx * nz];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let v = src.joint[(x * ny + y) * nz + z];
                p_xy[x * ny + y] += v;
                p_xz[x * nz + z] += v;
            }
        }
    }
    let (ns_priv, p_priv): (usize, &[f64]) = if private_side_y {
        (ny, &p_xy)
    } else {
        (nz, &p_xz)
    };
    let (ns_comm, p_comm): (usize, &[f64]) = if private_side_y {
        (nz, &p_xz)
    } else {
        (ny, &p_xy)
    };
    let (dm_priv, nrep_priv, dm_comm, nrep_comm) = if private_side_y {
        (
            &dist.hat_matrix,
            dist.hat_card,
            &dist.tilde_matrix,
            dist.tilde_card,
        )
    } else {
        (
            &dist.tilde_matrix,
            dist.tilde_card,
            &dist.hat_matrix,
            dist.hat_card,
        )
    };

    let w_rows = simplex_grid(w_card, resolution);
    let u_rows = simplex_grid(u_card, resolution);

    let mut candidates = Vec::new();
    // one grid choice per source symbol row
    let combos = w_rows.len().pow(nx as u32);
    let mut choice = vec![0usize; nx];
    for combo in 0..combos {
        let mut c = combo;
        for ch in choice.iter_mut() {
            *ch = c % w_rows.len();
            c /= w_rows.len();
        }
        let q: Vec<Vec<f64>> = choice.iter().map(|&i| w_rows[i].clone()).collect();

        let d_comm_val =
            common_decoder_distortion(p_comm, nx, ns_comm, &q, w_card, dm_comm, nrep_comm);
        let comm_exact = d_comm_val <= d_common + 1e-12;
        let comm_relaxed = d_comm_val <= d_common + relax + 1e-12;
        if !comm_relaxed {
            continue;
        }

        // common-layer informations through the reference joint machinery
        let mut p = vec![0.0; nx * ny * nz * w_card];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let base = src.joint[(x * ny + y) * nz + z];
                    if base == 0.0 {
                        continue;
                    }
                    for w in 0..w_card {
                        p[((x * ny + y) * nz + z) * w_card + w] = base * q[x][w];
                    }
                }
            }
        }
        let joint = JointDist::new(vec![nx, ny, nz, w_card], p).expect("consistent dims");
        let i_w_given_y = joint
            .mutual_information(&[3], &[0], &[1])
            .expect("disjoint axes");
        let i_w_given_z = joint
            .mutual_information(&[3], &[0], &[2])
            .expect("disjoint axes");

        // private layer: per-slice frontiers merged under the shared budget
        let mut frontier = vec![(0.0, 0.0)];
        for w in 0..w_card {
            let q_col: Vec<f64> = (0..nx).map(|x| q[x][w]).collect();
            let sf = slice_frontier(
                p_priv, nx, ns_priv, &q_col, &u_rows, u_card, dm_priv, nrep_priv,
            );
            frontier = merge_frontiers(&frontier, &sf);
        }
        let private_exact = if comm_exact {
            min_rate_within(&frontier, d_private + 1e-12).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        let private_relaxed =
            min_rate_within(&frontier, d_private + relax + 1e-12).unwrap_or(f64::INFINITY);
        if private_exact.is_infinite() && private_relaxed.is_infinite() {
            continue;
        }
        candidates.push(Candidate {
            i_w_given_y,
            i_w_given_z,
            private_exact,
            private_relaxed,
        });
    }
    CompOracle { candidates }
}

/// Fannes-Audenaert continuity: bound on |H(P) - H(Q)| for TV distance
/// `delta` over an alphabet of size `dim`.
fn entropy_continuity(delta: f64, dim: usize) -> f64 {
    if dim <= 1 {
        return 0.0;
    }
    let cap = 1.0 - 1.0 / dim as f64;
    let d = delta.min(cap);
    (d * ((dim - 1) as f64).ln() + binary_entropy(d)).min((dim as f64).ln())
}

/// Continuity bound for I(A;B|C) under a TV perturbation of the joint.
fn mi_continuity(delta: f64, dims: [usize; 3]) -> f64 {
    let [da, db, dc] = dims;
    entropy_continuity(delta, da * dc)
        + entropy_continuity(delta, db * dc)
        + entropy_continuity(delta, da * db * dc)
        + entropy_continuity(delta, dc)
}

fn discretization_slack(
    ps: &ProductSource,
    mode: RdMode,
    w_card: usize,
    u_card: usize,
    resolution: usize,
) -> f64 {
    let m = (resolution - 1) as f64;
    let eps_w = w_card as f64 / (2.0 * m);
    let eps_u = u_card as f64 / (2.0 * m);
    let delta = (eps_w + eps_u).min(1.0);
    let mut slack = 0.0;
    for (i, comp) in [&ps.component1, &ps.component2].into_iter().enumerate() {
        let (nx, ny, nz) = (comp.x_card, comp.y_card, comp.z_card);
        let private_side_y = match mode {
            RdMode::Mismatched => i == 0,
            _ => true,
        };
        let ns_priv = if private_side_y { ny } else { nz };
        // both common branches enter through the max in the mismatched
        // objective; the matched objective uses only the Z side
        slack += mi_continuity(delta, [w_card, nx, nz]);
        if mode == RdMode::Mismatched {
            slack += mi_continuity(delta, [w_card, nx, ny]);
        }
        slack += mi_continuity(delta, [u_card, nx, ns_priv * w_card]);
    }
    slack
}

/// Exhaustive quantized-channel search. The upper end of the bracket is
/// the best exactly-feasible grid value; the lower end subtracts the
/// discretization slack from the constraint-relaxed best.
pub fn brute_force_oracle(
    ps: &ProductSource,
    d: &DistortionQuadruple,
    mode: RdMode,
    resolution: usize,
) -> Result<OracleBracket> {
    if ps.component1.x_card > 3 || ps.component2.x_card > 3 {
        return Err(HbrdError::TooLarge(
            "the brute-force oracle enumerates only source alphabets up to 3".into(),
        ));
    }
    if resolution < 3 {
        return Err(HbrdError::Config(
            "oracle grid needs at least 3 points per simplex coordinate".into(),
        ));
    }
    if mode == RdMode::Lossless {
        return Err(HbrdError::Config(
            "use the Mismatched mode at zero distortion instead of Lossless".into(),
        ));
    }
    let w_card = 3;
    let u_card = 2;
    let mismatched = mode == RdMode::Mismatched;

    let relax1 = max_entry(&ps.distortion1) * w_plus_u_tv(w_card, u_card, resolution);
    let relax2 = max_entry(&ps.distortion2) * w_plus_u_tv(w_card, u_card, resolution);

    let comp1 = component_candidates(
        &ps.component1,
        &ps.distortion1,
        true,
        d.dhat1,
        d.dtilde1,
        w_card,
        u_card,
        resolution,
        relax1,
    );
    let comp2 = component_candidates(
        &ps.component2,
        &ps.distortion2,
        !mismatched,
        if mismatched { d.dtilde2 } else { d.dhat2 },
        if mismatched { d.dhat2 } else { d.dtilde2 },
        w_card,
        u_card,
        resolution,
        relax2,
    );
    if comp1.candidates.is_empty() || comp2.candidates.is_empty() {
        return Err(HbrdError::InfeasibleTarget {
            constraint: "oracle grid".into(),
            target: f64::NAN,
            minimum: f64::NAN,
        });
    }

    let (mut upper, mut relaxed) = (f64::INFINITY, f64::INFINITY);
    if mismatched {
        // prune dominated candidates before the pairwise combination
        let prune = |v: Vec<Candidate>| -> Vec<Candidate> {
            let mut kept: Vec<Candidate> = Vec::new();
            'outer: for c in v {
                for k in &kept {
                    if k.i_w_given_y <= c.i_w_given_y + 1e-15
                        && k.i_w_given_z <= c.i_w_given_z + 1e-15
                        && k.private_exact <= c.private_exact + 1e-15
                        && k.private_relaxed <= c.private_relaxed + 1e-15
                    {
                        continue 'outer;
                    }
                }
                kept.push(c);
            }
            kept
        };
        let c1 = prune(comp1.candidates);
        let c2 = prune(comp2.candidates);
        for a in &c1 {
            for b in &c2 {
                let common = (a.i_w_given_y + b.i_w_given_y).max(a.i_w_given_z + b.i_w_given_z);
                let exact = common + a.private_exact + b.private_exact;
                let rel = common + a.private_relaxed + b.private_relaxed;
                if exact < upper {
                    upper = exact;
                }
                if rel < relaxed {
                    relaxed = rel;
                }
            }
        }
    } else {
        // separable matched objective: optimize each component alone
        let best = |cands: &[Candidate]| -> (f64, f64) {
            let mut e = f64::INFINITY;
            let mut r = f64::INFINITY;
            for c in cands {
                e = e.min(c.i_w_given_z + c.private_exact);
                r = r.min(c.i_w_given_z + c.private_relaxed);
            }
            (e, r)
        };
        let (e1, r1) = best(&comp1.candidates);
        let (e2, r2) = best(&comp2.candidates);
        upper = e1 + e2;
        relaxed = r1 + r2;
    }

    let slack = discretization_slack(ps, mode, w_card, u_card, resolution);
    Ok(OracleBracket {
        upper_nats: upper,
        lower_nats: (relaxed - slack).max(0.0),
        slack_nats: slack,
        relaxed_nats: relaxed,
        resolution,
        w_card,
        u_card,
    })
}

fn max_entry(d: &DistortionSpec) -> f64 {
    d.hat_matrix
        .iter()
        .chain(d.tilde_matrix.iter())
        .fold(0.0f64, |m, &v| m.max(v))
}

fn w_plus_u_tv(w_card: usize, u_card: usize, resolution: usize) -> f64 {
    let m = (resolution - 1) as f64;
    (w_card as f64 + u_card as f64) / (2.0 * m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;
    use crate::optimizer::{component_rd, optimize_rd, OptimizerConfig};
    use crate::prob::LN_2;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simplex_grid_counts_and_corners() {
        let g = simplex_grid(3, 5);
        // compositions of 4 into 3 parts: C(6,2) = 15
        assert_eq!(g.len(), 15);
        for p in &g {
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(g.iter().any(|p| p[0] == 1.0));
        assert!(g.iter().any(|p| p[2] == 1.0));
    }

    #[test]
    fn pareto_keeps_only_improving_points() {
        let f = pareto_frontier(vec![(0.2, 1.0), (0.1, 2.0), (0.3, 0.5), (0.15, 1.5)]);
        assert_eq!(f, vec![(0.1, 2.0), (0.15, 1.5), (0.2, 1.0), (0.3, 0.5)]);
        let f2 = pareto_frontier(vec![(0.1, 1.0), (0.2, 1.0), (0.3, 2.0)]);
        assert_eq!(f2, vec![(0.1, 1.0)]);
        assert_eq!(min_rate_within(&f, 0.16), Some(1.5));
        assert_eq!(min_rate_within(&f, 0.05), None);
    }

    #[test]
    fn butterfly_upper_bound_is_one_bit() {
        let ps = builtins::fig2_butterfly();
        let bracket =
            brute_force_oracle(&ps, &DistortionQuadruple::ZERO, RdMode::Mismatched, 5).unwrap();
        assert_abs_diff_eq!(bracket.upper_nats, LN_2, epsilon = 1e-9);
        assert!(bracket.contains(LN_2, 1e-9));
    }

    #[test]
    fn constant_feasible_targets_bracket_zero() {
        let ps = builtins::fig2_butterfly();
        let d = DistortionQuadruple::new(0.5, 0.5, 0.5, 0.5).unwrap();
        let bracket = brute_force_oracle(&ps, &d, RdMode::Mismatched, 5).unwrap();
        assert_abs_diff_eq!(bracket.upper_nats, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bracket.lower_nats, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn optimizer_lands_inside_bracket_matched() {
        let ps = builtins::random_matched_binary(2);
        let d = DistortionQuadruple::new(0.1, 0.12, 0.14, 0.09).unwrap();
        let cfg = OptimizerConfig {
            restarts: 12,
            seed: 5,
            ..OptimizerConfig::default()
        };
        let res = optimize_rd(&ps, &d, RdMode::Matched, &cfg).unwrap();
        let bracket = brute_force_oracle(&ps, &d, RdMode::Matched, 7).unwrap();
        assert!(
            bracket.contains(res.rate_nats, 1e-9),
            "rate {} outside [{}, {}]",
            res.rate_nats,
            bracket.lower_nats,
            bracket.upper_nats
        );
    }

    #[test]
    fn oracle_refuses_large_alphabets() {
        let comp = ComponentSource::new(4, 1, 1, vec![0.25; 4]).unwrap();
        let ps = ProductSource::new(
            comp.clone(),
            comp,
            DistortionSpec::hamming(4),
            DistortionSpec::hamming(4),
        )
        .unwrap();
        assert!(matches!(
            brute_force_oracle(&ps, &DistortionQuadruple::ZERO, RdMode::Matched, 5),
            Err(HbrdError::TooLarge(_))
        ));
    }

    #[test]
    fn conditional_rd_spot_check_with_shared_side_info() {
        // Y = Z: the component objective telescopes to a single fused
        // auxiliary V = (W, U), i.e. conditional rate-distortion. The oracle
        // here is an independent grid search over p(v|x) with exact decoder
        // updates.
        let mut joint = vec![0.0; 8];
        // X uniform, S = BSC(X, 0.2), Y = Z = S
        for x in 0..2 {
            for s in 0..2 {
                let p = 0.5 * if x == s { 0.8 } else { 0.2 };
                joint[(x * 2 + s) * 2 + s] = p;
            }
        }
        let comp = ComponentSource::new(2, 2, 2, joint).unwrap();
        let dhat = 0.08;
        let res = component_rd(
            &comp,
            &DistortionSpec::hamming(2),
            dhat,
            0.5,
            &OptimizerConfig {
                restarts: 16,
                seed: 3,
                ..OptimizerConfig::default()
            },
        )
        .unwrap();

        // independent conditional-RD oracle: V with 3 symbols, fine grid
        let mut p_xs = vec![0.0; 4];
        for x in 0..2 {
            for s in 0..2 {
                p_xs[x * 2 + s] = 0.5 * if x == s { 0.8 } else { 0.2 };
            }
        }
        let rows = simplex_grid(3, 49);
        let mut best = f64::INFINITY;
        for r0 in &rows {
            for r1 in &rows {
                let q = [r0, r1];
                // distortion of the optimal (v, s) decoder under Hamming
                let mut dist = 0.0;
                for v in 0..3 {
                    for s in 0..2 {
                        let w0 = p_xs[s] * q[0][v];
                        let w1 = p_xs[2 + s] * q[1][v];
                        dist += w0.min(w1);
                    }
                }
                if dist > dhat + 1e-12 {
                    continue;
                }
                // I(V; X | S)
                let mut info = 0.0;
                for s in 0..2 {
                    let ps_mass = p_xs[s] + p_xs[2 + s];
                    for v in 0..3 {
                        let m = p_xs[s] * q[0][v] + p_xs[2 + s] * q[1][v];
                        for x in 0..2 {
                            let pv = p_xs[x * 2 + s] * q[x][v];
                            if pv > 0.0 {
                                info += pv * (q[x][v] * ps_mass / m).ln();
                            }
                        }
                    }
                }
                best = best.min(info);
            }
        }
        assert!(
            (res.rate_nats - best).abs() < 3e-3,
            "component rate {} vs conditional-RD grid {}",
            res.rate_nats,
            best
        );
    }
}
