//! Exact probability computations over finite joint distributions.
//!
//! Everything here works on dense probability mass functions held as flat
//! row-major arrays with one axis per variable. Information quantities are
//! computed in nats; conversion to bits happens only at reporting time.
//! `0 ln 0` is treated as `0` throughout.

use crate::error::{HbrdError, Result};

/// Tolerance for pmf normalization checks.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Default tolerance for Markov-chain tests.
pub const DEFAULT_MARKOV_TOL: f64 = 1e-7;

/// Mutual informations below this are treated as rounding noise and
/// clamped to zero; anything more negative is a bug.
pub const MI_NEGATIVE_FLOOR: f64 = -1e-12;

/// Natural log of 2; divides nats into bits.
pub const LN_2: f64 = std::f64::consts::LN_2;

#[inline]
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

/// `-p ln p` with the `0 ln 0 = 0` convention.
#[inline]
pub fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_term(p) + entropy_term(1.0 - p)
}

/// A dense joint pmf over an ordered tuple of finite variables.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDist {
    dims: Vec<usize>,
    p: Vec<f64>,
}

impl JointDist {
    /// Build from axis sizes and row-major probabilities.
    pub fn new(dims: Vec<usize>, p: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(HbrdError::InvalidInput(
                "joint distribution needs positive alphabet sizes".into(),
            ));
        }
        let len: usize = dims.iter().product();
        if p.len() != len {
            return Err(HbrdError::InvalidInput(format!(
                "probability array has {} entries, dimensions require {}",
                p.len(),
                len
            )));
        }
        Ok(Self { dims, p })
    }

    /// Checks nonnegativity and normalization; lists every violation.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        for (i, &v) in self.p.iter().enumerate() {
            if !v.is_finite() {
                violations.push(format!("entry {} is not finite ({})", i, v));
            } else if v < 0.0 {
                violations.push(format!("entry {} is negative ({})", i, v));
            }
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            violations.push(format!(
                "probabilities sum to {} (must be within {} of 1)",
                total, NORMALIZATION_TOL
            ));
        }
        violations
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_axes(&self) -> usize {
        self.dims.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    /// Probability of one outcome tuple.
    pub fn prob(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.dims.len());
        let s = self.strides();
        let flat: usize = idx.iter().zip(&s).map(|(i, st)| i * st).sum();
        self.p[flat]
    }

    /// Tensor product of two independent joints; axes of `other` follow ours.
    pub fn tensor(&self, other: &JointDist) -> JointDist {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut p = Vec::with_capacity(self.p.len() * other.p.len());
        for &a in &self.p {
            for &b in &other.p {
                p.push(a * b);
            }
        }
        JointDist { dims, p }
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        for &a in axes {
            if a >= self.dims.len() {
                return Err(HbrdError::InvalidInput(format!(
                    "axis {} out of range for {}-variable joint",
                    a,
                    self.dims.len()
                )));
            }
        }
        Ok(())
    }

    /// Marginal pmf over `axes` (kept in the given order), as a flat array
    /// indexed row-major by those axes.
    pub fn marginal_flat(&self, axes: &[usize]) -> Result<Vec<f64>> {
        self.check_axes(axes)?;
        let sizes: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let out_len: usize = sizes.iter().product::<usize>().max(1);
        let mut out = vec![0.0; out_len];
        let strides = self.strides();
        let mut idx = vec![0usize; self.dims.len()];
        for (flat, &pv) in self.p.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            // decode the flat index once
            let mut rem = flat;
            for (k, &st) in strides.iter().enumerate() {
                idx[k] = rem / st;
                rem %= st;
            }
            let mut o = 0usize;
            for &a in axes {
                o = o * self.dims[a] + idx[a];
            }
            out[o] += pv;
        }
        Ok(out)
    }

    /// Shannon entropy (nats) of the marginal over `axes`.
    pub fn entropy(&self, axes: &[usize]) -> Result<f64> {
        let m = self.marginal_flat(axes)?;
        Ok(m.iter().map(|&p| entropy_term(p)).sum())
    }

    /// Conditional entropy H(target | given) in nats.
    pub fn conditional_entropy(&self, target: &[usize], given: &[usize]) -> Result<f64> {
        disjoint(target, given)?;
        let mut both: Vec<usize> = target.to_vec();
        both.extend_from_slice(given);
        Ok(self.entropy(&both)? - self.entropy(given)?)
    }

    /// Conditional mutual information I(A; B | C) in nats, clamped at zero.
    ///
    /// Computed in KL form as a single signed sum over supported atoms,
    /// which keeps rounding well below the `-1e-12` floor; a value under
    /// the floor indicates corrupt input and is reported as an error.
    pub fn mutual_information(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        disjoint(a, b)?;
        disjoint(a, c)?;
        disjoint(b, c)?;
        self.check_axes(a)?;
        self.check_axes(b)?;
        self.check_axes(c)?;

        let mut ac: Vec<usize> = a.to_vec();
        ac.extend_from_slice(c);
        let mut bc: Vec<usize> = b.to_vec();
        bc.extend_from_slice(c);
        let mut abc: Vec<usize> = a.to_vec();
        abc.extend_from_slice(b);
        abc.extend_from_slice(c);

        let p_ac = self.marginal_flat(&ac)?;
        let p_bc = self.marginal_flat(&bc)?;
        let p_abc = self.marginal_flat(&abc)?;
        let p_c = self.marginal_flat(c)?;

        let bn: usize = b.iter().map(|&x| self.dims[x]).product::<usize>().max(1);
        let cn: usize = c.iter().map(|&x| self.dims[x]).product::<usize>().max(1);

        // p_abc is indexed (a, b, c) row-major; recover the three sub-indices
        // by arithmetic on the flat position.
        let mut total = 0.0;
        for (flat, &pabc) in p_abc.iter().enumerate() {
            if pabc == 0.0 {
                continue;
            }
            let ci = flat % cn;
            let bi = (flat / cn) % bn;
            let ai = flat / (cn * bn);
            let pac = p_ac[ai * cn + ci];
            let pbc = p_bc[bi * cn + ci];
            let pc = p_c[ci];
            total += pabc * ((pabc * pc) / (pac * pbc)).ln();
        }
        if total < MI_NEGATIVE_FLOOR {
            return Err(HbrdError::InternalInvariant(format!(
                "conditional mutual information evaluated to {} (below the {} floor)",
                total, MI_NEGATIVE_FLOOR
            )));
        }
        Ok(total.max(0.0))
    }

    /// Markov test A - B - C on three axes: true iff, over every supported
    /// (a, b), `max_c |p(c|a,b) - p(c|b)| <= tol`. Cells with `p(a,b) = 0`
    /// are skipped, so degenerate (constant) variables behave sensibly.
    pub fn is_markov(&self, a: usize, b: usize, c: usize, tol: f64) -> Result<bool> {
        disjoint(&[a], &[b])?;
        disjoint(&[a], &[c])?;
        disjoint(&[b], &[c])?;
        let p_abc = self.marginal_flat(&[a, b, c])?;
        let (na, nb, nc) = (self.dims[a], self.dims[b], self.dims[c]);
        let mut p_ab = vec![0.0; na * nb];
        let mut p_bc = vec![0.0; nb * nc];
        let mut p_b = vec![0.0; nb];
        for ai in 0..na {
            for bi in 0..nb {
                for ci in 0..nc {
                    let v = p_abc[(ai * nb + bi) * nc + ci];
                    p_ab[ai * nb + bi] += v;
                    p_bc[bi * nc + ci] += v;
                    p_b[bi] += v;
                }
            }
        }
        for ai in 0..na {
            for bi in 0..nb {
                let pab = p_ab[ai * nb + bi];
                if pab <= 0.0 {
                    continue;
                }
                for ci in 0..nc {
                    let c_given_ab = p_abc[(ai * nb + bi) * nc + ci] / pab;
                    let c_given_b = p_bc[bi * nc + ci] / p_b[bi];
                    if (c_given_ab - c_given_b).abs() > tol {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

fn disjoint(x: &[usize], y: &[usize]) -> Result<()> {
    for &i in x {
        if y.contains(&i) {
            return Err(HbrdError::OverlappingGroups(format!(
                "axis {} appears in two groups",
                i
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform(dims: Vec<usize>) -> JointDist {
        let n: usize = dims.iter().product();
        JointDist::new(dims, vec![1.0 / n as f64; n]).unwrap()
    }

    /// X uniform binary, Y = X.
    fn copied_pair() -> JointDist {
        JointDist::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap()
    }

    #[test]
    fn entropy_of_deterministic_copy_is_zero() {
        let j = copied_pair();
        assert_abs_diff_eq!(j.conditional_entropy(&[0], &[1]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_given_constant_is_marginal_entropy() {
        // X uniform binary, Y constant.
        let j = JointDist::new(vec![2, 1], vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(j.conditional_entropy(&[0], &[1]).unwrap(), LN_2, epsilon = 1e-15);
    }

    #[test]
    fn scalar_entropy_value() {
        // Frozen from direct evaluation of -sum p ln p at p = (0.25, 0.75).
        let j = JointDist::new(vec![2], vec![0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(j.entropy(&[0]).unwrap(), 0.5623351446188083, epsilon = 1e-14);
    }

    #[test]
    fn independent_variables_have_zero_mi() {
        let j = uniform(vec![2, 3]);
        assert_eq!(j.mutual_information(&[0], &[1], &[]).unwrap(), 0.0);
    }

    #[test]
    fn copied_bit_has_ln2_mi() {
        let j = copied_pair();
        assert_abs_diff_eq!(j.mutual_information(&[0], &[1], &[]).unwrap(), LN_2, epsilon = 1e-15);
    }

    #[test]
    fn bsc_pair_mi_matches_exhaustive_sum() {
        // Crossover 0.11 on a uniform bit. Frozen from the 4-entry joint:
        // 2*(0.445 ln(0.445/0.25)) + 2*(0.055 ln(0.055/0.25)).
        let j = JointDist::new(vec![2, 2], vec![0.445, 0.055, 0.055, 0.445]).unwrap();
        assert_abs_diff_eq!(
            j.mutual_information(&[0], &[1], &[]).unwrap(),
            0.3466318436412792,
            epsilon = 1e-13
        );
    }

    #[test]
    fn overlapping_groups_rejected() {
        let j = uniform(vec![2, 2]);
        assert!(j.mutual_information(&[0], &[0], &[]).is_err());
        assert!(j.conditional_entropy(&[1], &[1]).is_err());
    }

    #[test]
    fn markov_constant_tail_holds() {
        // Y = X, Z constant: X - Y - Z holds.
        let j = JointDist::new(vec![2, 2, 1], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(j.is_markov(0, 1, 2, DEFAULT_MARKOV_TOL).unwrap());
    }

    #[test]
    fn markov_xor_fails() {
        // X, Y independent uniform bits, Z = X xor Y: p(z|x,y) is 0/1 while
        // p(z|y) = 1/2, so the max deviation is exactly 0.5.
        let mut p = vec![0.0; 8];
        for x in 0..2 {
            for y in 0..2 {
                let z = x ^ y;
                p[(x * 2 + y) * 2 + z] = 0.25;
            }
        }
        let j = JointDist::new(vec![2, 2, 2], p).unwrap();
        assert!(!j.is_markov(0, 1, 2, 0.499).unwrap());
        assert!(j.is_markov(0, 1, 2, 0.500001).unwrap());
    }

    #[test]
    fn markov_fully_independent_holds_any_order() {
        let j = uniform(vec![2, 3, 2]);
        for (a, b, c) in [(0, 1, 2), (1, 0, 2), (2, 1, 0), (0, 2, 1)] {
            assert!(j.is_markov(a, b, c, 1e-12).unwrap());
        }
    }

    #[test]
    fn validate_flags_negative_and_unnormalized() {
        let j = JointDist::new(vec![2], vec![1.01, -0.01]).unwrap();
        let v = j.validate();
        assert!(v.iter().any(|s| s.contains("negative")));
        let j2 = JointDist::new(vec![2], vec![0.5, 0.499]).unwrap();
        let v2 = j2.validate();
        assert_eq!(v2.len(), 1);
        assert!(v2[0].contains("sum to"));
        assert!(uniform(vec![2, 2, 2]).validate().is_empty());
    }

    fn random_joint(dims: Vec<usize>) -> impl Strategy<Value = JointDist> {
        let n: usize = dims.iter().product();
        proptest::collection::vec(1e-4..1.0f64, n).prop_map(move |raw| {
            let total: f64 = raw.iter().sum();
            let p = raw.iter().map(|v| v / total).collect();
            JointDist::new(dims.clone(), p).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn entropy_bounds_hold(j in random_joint(vec![3, 2, 3])) {
            let h_a = j.entropy(&[0]).unwrap();
            let h_a_given_b = j.conditional_entropy(&[0], &[1]).unwrap();
            prop_assert!(h_a_given_b >= -1e-12);
            prop_assert!(h_a_given_b <= h_a + 1e-12);
            prop_assert!(h_a <= (3.0f64).ln() + 1e-12);
            prop_assert!(j.mutual_information(&[0], &[1], &[2]).unwrap() >= 0.0);
        }

        #[test]
        fn chain_rule_holds(j in random_joint(vec![2, 3, 2])) {
            // I(A,B; C) = I(A; C) + I(B; C | A)
            let lhs = j.mutual_information(&[0, 1], &[2], &[]).unwrap();
            let rhs = j.mutual_information(&[0], &[2], &[]).unwrap()
                + j.mutual_information(&[1], &[2], &[0]).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10, "chain rule violated: {} vs {}", lhs, rhs);
        }

        #[test]
        fn markov_agrees_with_conditional_mi(
            pa in proptest::collection::vec(0.05..1.0f64, 3),
            rows_b in proptest::collection::vec(0.05..1.0f64, 9),
            rows_c in proptest::collection::vec(0.05..1.0f64, 6),
            dense in random_joint(vec![3, 3, 2]),
        ) {
            // Generatively Markov source p(a) p(b|a) p(c|b): both tests say yes.
            let za: f64 = pa.iter().sum();
            let mut p = vec![0.0; 18];
            for a in 0..3 {
                let zb: f64 = rows_b[a * 3..a * 3 + 3].iter().sum();
                for b in 0..3 {
                    let zc: f64 = rows_c[b * 2..b * 2 + 2].iter().sum();
                    for c in 0..2 {
                        p[(a * 3 + b) * 2 + c] =
                            (pa[a] / za) * (rows_b[a * 3 + b] / zb) * (rows_c[b * 2 + c] / zc);
                    }
                }
            }
            let markov = JointDist::new(vec![3, 3, 2], p).unwrap();
            prop_assert!(markov.is_markov(0, 1, 2, 1e-9).unwrap());
            prop_assert!(markov.mutual_information(&[0], &[2], &[1]).unwrap() < 1e-12);

            // Dense generic joints virtually never satisfy the chain; when the
            // cell test rejects at a loose tolerance, conditional MI is far
            // from zero as well, and when conditional MI vanishes the cell
            // test must accept.
            let i = dense.mutual_information(&[0], &[2], &[1]).unwrap();
            let m = dense.is_markov(0, 1, 2, 1e-6).unwrap();
            if m {
                prop_assert!(i < 1e-10);
            } else {
                prop_assert!(i > 1e-13);
            }
        }
    }
}
