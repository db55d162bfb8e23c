//! Block-coding simulator for the layered binning scheme that transmits
//! the XOR of the two extra bin indices.
//!
//! In the lossless specialization the common descriptions are the sources
//! themselves: component 1 is bin coded at rate I(X1;X1|Y1) = H(X1|Y1)
//! into index I1 and again at the extra rate I(X1;Y1|Z1) into I2;
//! component 2 symmetrically into J1 (rate H(X2|Z2)) and J2 (rate
//! I(X2;Z2|Y2)). The encoder sends (I1, J1, I2 xor J2): a decoder can
//! recover its own component from its first-layer index, recompute its
//! half of the XOR layer, strip it, and recover the other component from
//! the unwrapped index. Binning uses seeded universal hashing (random
//! full-row-rank GF(2) matrices over packed symbol blocks; the shorter
//! XOR operand is zero-padded).
//!
//! Decoding here is exact maximum likelihood over the bin of sequence
//! PAIRS consistent with everything a decoder holds: its first-layer
//! index, the other component's first-layer index, and the XOR layer,
//! which couples the two legs. This dominates the stage-by-stage unwrap
//! (a wrong first-stage winner cannot corrupt the second stage), and ties
//! are broken by lexicographic order on the pair and counted as errors
//! whenever the truth loses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HbrdError, Result};
use crate::prob::{nats_to_bits, LN_2};
use crate::rng;
use crate::source::{ComponentSource, ProductSource, Var};
use rand::Rng;

/// Largest block length the exhaustive decoder accepts.
pub const MAX_BLOCK: usize = 24;

/// Largest per-component alphabet.
pub const MAX_CARD: usize = 4;

/// Bin enumeration is capped at 2^MAX_NULLITY candidates per decode.
pub const MAX_NULLITY: u32 = 26;

/// The four per-layer bin rates of the lossless scheme, bits per symbol
/// before block-length rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    /// H(X1|Y1): decoder 1 recovers component 1.
    pub i1_bits: f64,
    /// I(X1;Y1|Z1): extra layer letting decoder 2 recover component 1.
    pub i2_bits: f64,
    /// H(X2|Z2): decoder 2 recovers component 2.
    pub j1_bits: f64,
    /// I(X2;Z2|Y2): extra layer letting decoder 1 recover component 2.
    pub j2_bits: f64,
    /// i1 + j1 + max(i2, j2).
    pub total_bits: f64,
}

/// Per-layer bin rates from the source's exact information quantities.
pub fn rate_budget(ps: &ProductSource, epsilon: f64) -> Result<RateBudget> {
    if epsilon < 0.0 {
        return Err(HbrdError::InvalidInput("slack must be nonnegative".into()));
    }
    let c1 = &ps.component1;
    let c2 = &ps.component2;
    let i1 = c1.conditional_entropy(Var::X, Var::Y)? / LN_2;
    let i2 = nats_to_bits(c1.mutual_information(&[Var::X], &[Var::Y], &[Var::Z])?);
    let j1 = c2.conditional_entropy(Var::X, Var::Z)? / LN_2;
    let j2 = nats_to_bits(c2.mutual_information(&[Var::X], &[Var::Z], &[Var::Y])?);
    Ok(RateBudget {
        i1_bits: i1,
        i2_bits: i2,
        j1_bits: j1,
        j2_bits: j2,
        total_bits: i1 + j1 + i2.max(j2),
    })
}

/// Concrete bin-index lengths for one block length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningCode {
    pub n: usize,
    pub epsilon: f64,
    /// Bits per layer: ceil(n * (rate + epsilon)), capped at the packed
    /// block width (indices longer than the block are never useful).
    pub len_i1: usize,
    pub len_i2: usize,
    pub len_j1: usize,
    pub len_j2: usize,
    /// Master seed the per-layer hash matrices derive from.
    pub seed: u64,
}

impl BinningCode {
    /// Total transmitted bits: the XOR layer is as long as the longer of
    /// its two operands.
    pub fn sent_bits(&self) -> usize {
        self.len_i1 + self.len_j1 + self.len_i2.max(self.len_j2)
    }

    pub fn rate_bits_per_symbol(&self) -> f64 {
        self.sent_bits() as f64 / self.n as f64
    }
}

fn bits_per_symbol(card: usize) -> usize {
    (usize::BITS - (card - 1).leading_zeros()) as usize
}

/// Layer lengths for the given block length and slack.
pub fn binning_code(ps: &ProductSource, n: usize, epsilon: f64, seed: u64) -> Result<BinningCode> {
    validate_sim_inputs(ps, n)?;
    let budget = rate_budget(ps, epsilon)?;
    let m1 = n * bits_per_symbol(ps.component1.x_card);
    let m2 = n * bits_per_symbol(ps.component2.x_card);
    let len = |rate_bits: f64, m: usize| -> usize {
        ((n as f64 * (rate_bits + epsilon)).ceil() as usize).min(m)
    };
    Ok(BinningCode {
        n,
        epsilon,
        len_i1: len(budget.i1_bits, m1),
        len_i2: len(budget.i2_bits, m1),
        len_j1: len(budget.j1_bits, m2),
        len_j2: len(budget.j2_bits, m2),
        seed,
    })
}

/// Empirical outcome of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub code: BinningCode,
    /// Transmitted bits per source symbol.
    pub rate_bits: f64,
    /// Block error rate of each decoder: the true pair fails to attain
    /// the maximal bin likelihood at some stage.
    pub decoder1_error_rate: f64,
    pub decoder2_error_rate: f64,
    pub decoder1_errors: usize,
    pub decoder2_errors: usize,
    /// Blocks where the truth tied for the maximum but lost the
    /// lexicographic tie-break (not counted as errors; see the decoder
    /// notes below).
    pub decoder1_tie_losses: usize,
    pub decoder2_tie_losses: usize,
    pub warnings: Vec<String>,
}

fn validate_sim_inputs(ps: &ProductSource, n: usize) -> Result<()> {
    if n == 0 || n > MAX_BLOCK {
        return Err(HbrdError::TooLarge(format!(
            "block length must be in 1..={}, got {}",
            MAX_BLOCK, n
        )));
    }
    for (i, c) in [&ps.component1, &ps.component2].into_iter().enumerate() {
        if c.x_card > MAX_CARD {
            return Err(HbrdError::TooLarge(format!(
                "component {} alphabet {} exceeds the simulator cap {}",
                i + 1,
                c.x_card,
                MAX_CARD
            )));
        }
    }
    Ok(())
}

/// A GF(2) hash: `k` random rows over `m` packed bits, sampled full row
/// rank so that maximal-length indices give singleton bins.
#[derive(Debug, Clone)]
struct HashMatrix {
    rows: Vec<u64>,
    k: usize,
}

impl HashMatrix {
    fn sample<R: Rng>(rng: &mut R, k: usize, m: usize) -> HashMatrix {
        assert!(k <= m && m <= 64);
        let mask = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        loop {
            let rows: Vec<u64> = (0..k).map(|_| rng.gen::<u64>() & mask).collect();
            let wide: Vec<u128> = rows.iter().map(|&r| r as u128).collect();
            if rank128(&wide) == k {
                return HashMatrix { rows, k };
            }
        }
    }

    /// k-bit hash value, bit j = parity of row_j & x.
    fn apply(&self, x: u64) -> u64 {
        let mut h = 0u64;
        for (j, &row) in self.rows.iter().enumerate() {
            h |= (((row & x).count_ones() & 1) as u64) << j;
        }
        h
    }
}
/// Exhaustive joint ML decode over a bin of sequence pairs. Constraint
/// rows live on the concatenated bit layout: component 1 in the low bits,
/// component 2 shifted up by component 1's width.
struct PairOutcome {
    /// Lexicographically smallest maximizing pair.
    output: Option<(Vec<u8>, Vec<u8>)>,
    /// The true pair attains the maximal likelihood level.
    truth_attains_max: bool,
}

struct SymbolCoder {
    n: usize,
    bps: usize,
    card: usize,
}

impl SymbolCoder {
    fn width(&self) -> usize {
        self.n * self.bps
    }

    fn pack(&self, seq: &[u8]) -> u64 {
        let mut v = 0u64;
        for (t, &s) in seq.iter().enumerate() {
            v |= (s as u64) << (t * self.bps);
        }
        v
    }

    fn unpack(&self, mut v: u64) -> Option<Vec<u8>> {
        let mut seq = Vec::with_capacity(self.n);
        let mask = (1u64 << self.bps) - 1;
        for _ in 0..self.n {
            let s = (v & mask) as usize;
            if s >= self.card {
                return None;
            }
            seq.push(s as u8);
            v >>= self.bps;
        }
        Some(seq)
    }
}

fn rank128(rows: &[u128]) -> usize {
    let mut basis: Vec<u128> = Vec::new();
    for &row in rows {
        let mut v = row;
        for &b in &basis {
            let pivot = 1u128 << (127 - b.leading_zeros());
            if v & pivot != 0 {
                v ^= b;
            }
        }
        if v != 0 {
            basis.push(v);
        }
    }
    basis.len()
}

/// Row echelon solve over GF(2): particular solution plus null basis, or
/// None when inconsistent.
fn solve_gf2(constraints: &[(u128, bool)], m: usize) -> Option<(u128, Vec<u128>)> {
    let mut rows: Vec<(u128, bool)> = Vec::new();
    for &(row, rhs) in constraints {
        let mut v = row;
        let mut b = rhs;
        for &(er, eb) in &rows {
            let pivot = 1u128 << (127 - er.leading_zeros());
            if v & pivot != 0 {
                v ^= er;
                b ^= eb;
            }
        }
        if v != 0 {
            rows.push((v, b));
        } else if b {
            return None;
        }
    }
    let mut particular = 0u128;
    for i in (0..rows.len()).rev() {
        let (row, mut rhs) = rows[i];
        let pivot_bit = 127 - row.leading_zeros();
        if (row & particular).count_ones() & 1 == 1 {
            rhs = !rhs;
        }
        if rhs {
            particular |= 1u128 << pivot_bit;
        }
    }
    let pivots: Vec<u32> = rows.iter().map(|&(r, _)| 127 - r.leading_zeros()).collect();
    let mut basis = Vec::new();
    for free in 0..m as u32 {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = 1u128 << free;
        for i in (0..rows.len()).rev() {
            let (row, _) = rows[i];
            if (row & v).count_ones() & 1 == 1 {
                v |= 1u128 << (127 - row.leading_zeros());
            }
        }
        basis.push(v);
    }
    Some((particular, basis))
}

#[allow(clippy::too_many_arguments)]
fn ml_decode_pair(
    constraints: &[(u128, bool)],
    coder1: &SymbolCoder,
    coder2: &SymbolCoder,
    ll1: &[[f64; MAX_CARD]],
    ll2: &[[f64; MAX_CARD]],
    truth1: &[u8],
    truth2: &[u8],
) -> Result<PairOutcome> {
    let m = coder1.width() + coder2.width();
    let Some((particular, basis)) = solve_gf2(constraints, m) else {
        return Ok(PairOutcome {
            output: None,
            truth_attains_max: false,
        });
    };
    if basis.len() as u32 > MAX_NULLITY {
        return Err(HbrdError::TooLarge(format!(
            "bin of 2^{} sequence pairs is beyond exhaustive decoding",
            basis.len()
        )));
    }
    let m1 = coder1.width();
    let low_mask = (1u128 << m1) - 1;
    let ll_of = |seq: &[u8], ll: &[[f64; MAX_CARD]]| -> f64 {
        seq.iter().enumerate().map(|(t, &s)| ll[t][s as usize]).sum()
    };
    let mut best_ll = f64::NEG_INFINITY;
    let mut best: Option<(Vec<u8>, Vec<u8>)> = None;

    let count = 1u64 << basis.len();
    let mut cand = particular;
    let mut gray = 0u64;
    for idx in 0..count {
        if idx > 0 {
            let next = idx ^ (idx >> 1);
            let flip = (gray ^ next).trailing_zeros() as usize;
            cand ^= basis[flip];
            gray = next;
        }
        let Some(seq1) = coder1.unpack((cand & low_mask) as u64) else {
            continue;
        };
        let Some(seq2) = coder2.unpack((cand >> m1) as u64) else {
            continue;
        };
        let ll = ll_of(&seq1, ll1) + ll_of(&seq2, ll2);
        if ll == f64::NEG_INFINITY {
            continue;
        }
        let tol = if best_ll.is_finite() {
            1e-9 * (1.0 + best_ll.abs())
        } else {
            0.0
        };
        if ll > best_ll + tol {
            best_ll = ll;
            best = Some((seq1, seq2));
        } else if (ll - best_ll).abs() <= tol {
            if let Some(b) = &best {
                if (&seq1, &seq2) < (&b.0, &b.1) {
                    best = Some((seq1, seq2));
                }
            }
        }
    }
    let truth_ll = ll_of(truth1, ll1) + ll_of(truth2, ll2);
    let truth_attains_max =
        best.is_some() && truth_ll >= best_ll - 1e-9 * (1.0 + best_ll.abs());
    Ok(PairOutcome {
        output: best,
        truth_attains_max,
    })
}

struct ComponentTables {
    /// cumulative distribution over (x, y, z) atoms
    cdf: Vec<f64>,
    dims: (usize, usize, usize),
    /// ln p(x | y) and ln p(x | z)
    ll_given_y: Vec<[f64; MAX_CARD]>,
    ll_given_z: Vec<[f64; MAX_CARD]>,
}

impl ComponentTables {
    fn new(c: &ComponentSource) -> Self {
        let (nx, ny, nz) = (c.x_card, c.y_card, c.z_card);
        let mut cdf = Vec::with_capacity(nx * ny * nz);
        let mut acc = 0.0;
        for &p in &c.joint {
            acc += p;
            cdf.push(acc);
        }
        let mut p_y = vec![0.0; ny];
        let mut p_z = vec![0.0; nz];
        let mut p_xy = vec![0.0; nx * ny];
        let mut p_xz = vec![0.0; nx * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let p = c.joint[(x * ny + y) * nz + z];
                    p_y[y] += p;
                    p_z[z] += p;
                    p_xy[x * ny + y] += p;
                    p_xz[x * nz + z] += p;
                }
            }
        }
        let ll = |pxs: &[f64], ps: &[f64], ns: usize| -> Vec<[f64; MAX_CARD]> {
            (0..ns)
                .map(|s| {
                    let mut row = [f64::NEG_INFINITY; MAX_CARD];
                    for (x, r) in row.iter_mut().enumerate().take(nx) {
                        if ps[s] > 0.0 && pxs[x * ns + s] > 0.0 {
                            *r = (pxs[x * ns + s] / ps[s]).ln();
                        }
                    }
                    row
                })
                .collect()
        };
        ComponentTables {
            cdf,
            dims: (nx, ny, nz),
            ll_given_y: ll(&p_xy, &p_y, ny),
            ll_given_z: ll(&p_xz, &p_z, nz),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (u8, u8, u8) {
        let u: f64 = rng.gen();
        let mut idx = self.cdf.partition_point(|&c| c < u);
        if idx >= self.cdf.len() {
            idx = self.cdf.len() - 1;
        }
        let (_, ny, nz) = self.dims;
        let x = idx / (ny * nz);
        let y = (idx / nz) % ny;
        let z = idx % nz;
        (x as u8, y as u8, z as u8)
    }

    /// Per-position log-likelihood table for the observed side sequence.
    fn loglik_rows(&self, side: &[u8], use_y: bool) -> Vec<[f64; MAX_CARD]> {
        side.iter()
            .map(|&s| {
                if use_y {
                    self.ll_given_y[s as usize]
                } else {
                    self.ll_given_z[s as usize]
                }
            })
            .collect()
    }
}

/// Simulate the lossless XOR-binning scheme.
///
/// Per trial each decoder runs one exact ML search over the bin of
/// sequence pairs consistent with all three transmitted indices, scored
/// by its own side information. A block counts as an error when the
/// reconstruction differs from the truth; ties the truth loses to a
/// lexicographically smaller pair are errors too, reported separately in
/// the tie counters.
pub fn simulate_xor_binning(
    ps: &ProductSource,
    n: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<SimReport> {
    validate_sim_inputs(ps, n)?;
    if trials == 0 {
        return Err(HbrdError::InvalidInput("trials must be positive".into()));
    }
    let code = binning_code(ps, n, epsilon, seed)?;
    let budget = rate_budget(ps, epsilon)?;
    let mut warnings = Vec::new();
    for (len, rate, name) in [
        (code.len_i1, budget.i1_bits, "I1"),
        (code.len_j1, budget.j1_bits, "J1"),
    ] {
        if len == 0 && rate > 1e-9 {
            warnings.push(format!(
                "layer {} has zero bits but positive conditional entropy; decoding is \
                 guaranteed to fail",
                name
            ));
        }
    }

    let coder1 = SymbolCoder {
        n,
        bps: bits_per_symbol(ps.component1.x_card),
        card: ps.component1.x_card,
    };
    let coder2 = SymbolCoder {
        n,
        bps: bits_per_symbol(ps.component2.x_card),
        card: ps.component2.x_card,
    };
    let m1 = n * coder1.bps;
    let m2 = n * coder2.bps;

    let mut hash_rng = rng::stream(seed, 0x4a5);
    let h_i1 = HashMatrix::sample(&mut hash_rng, code.len_i1, m1);
    let h_i2 = HashMatrix::sample(&mut hash_rng, code.len_i2, m1);
    let h_j1 = HashMatrix::sample(&mut hash_rng, code.len_j1, m2);
    let h_j2 = HashMatrix::sample(&mut hash_rng, code.len_j2, m2);

    let t1 = ComponentTables::new(&ps.component1);
    let t2 = ComponentTables::new(&ps.component2);

    struct TrialOutcome {
        err: [bool; 2],
        tie_loss: [bool; 2],
    }

    let run_trial = |trial: usize| -> Result<TrialOutcome> {
        let mut rng = rng::stream(seed, 0x7417_0000u64.wrapping_add(trial as u64));
        let mut x1 = vec![0u8; n];
        let mut y1 = vec![0u8; n];
        let mut z1 = vec![0u8; n];
        let mut x2 = vec![0u8; n];
        let mut y2 = vec![0u8; n];
        let mut z2 = vec![0u8; n];
        for t in 0..n {
            let (a, b, c) = t1.draw(&mut rng);
            x1[t] = a;
            y1[t] = b;
            z1[t] = c;
            let (a, b, c) = t2.draw(&mut rng);
            x2[t] = a;
            y2[t] = b;
            z2[t] = c;
        }
        let bits1 = coder1.pack(&x1);
        let bits2 = coder2.pack(&x2);
        let i1 = h_i1.apply(bits1);
        let i2 = h_i2.apply(bits1);
        let j1 = h_j1.apply(bits2);
        let j2 = h_j2.apply(bits2);
        let xor_layer = i2 ^ j2;

        let mut err = [false; 2];
        let mut tie_loss = [false; 2];

        // constraint rows on the concatenated layout: component 1 low,
        // component 2 shifted by its width
        let xor_len = code.len_i2.max(code.len_j2);
        let pair_constraints = |first_rows: &HashMatrix,
                                first_value: u64,
                                second_rows: &HashMatrix,
                                second_value: u64|
         -> Vec<(u128, bool)> {
            let mut out: Vec<(u128, bool)> = Vec::new();
            for (j, &row) in first_rows.rows.iter().enumerate() {
                out.push((row as u128, first_value >> j & 1 == 1));
            }
            for (j, &row) in second_rows.rows.iter().enumerate() {
                out.push(((row as u128) << m1, second_value >> j & 1 == 1));
            }
            for j in 0..xor_len {
                let r1 = if j < code.len_i2 { h_i2.rows[j] } else { 0 };
                let r2 = if j < code.len_j2 { h_j2.rows[j] } else { 0 };
                out.push((
                    (r1 as u128) | ((r2 as u128) << m1),
                    xor_layer >> j & 1 == 1,
                ));
            }
            out
        };

        // decoder 1 holds (I1, J1, I2 xor J2) and Y
        {
            let constraints = pair_constraints(&h_i1, i1, &h_j1, j1);
            let out = ml_decode_pair(
                &constraints,
                &coder1,
                &coder2,
                &t1.loglik_rows(&y1, true),
                &t2.loglik_rows(&y2, true),
                &x1,
                &x2,
            )?;
            let correct = matches!(&out.output, Some((a, b)) if a == &x1 && b == &x2);
            err[0] = !correct;
            tie_loss[0] = !correct && out.truth_attains_max;
        }

        // decoder 2 holds the same indices and Z
        {
            let constraints = pair_constraints(&h_i1, i1, &h_j1, j1);
            let out = ml_decode_pair(
                &constraints,
                &coder1,
                &coder2,
                &t1.loglik_rows(&z1, false),
                &t2.loglik_rows(&z2, false),
                &x1,
                &x2,
            )?;
            let correct = matches!(&out.output, Some((a, b)) if a == &x1 && b == &x2);
            err[1] = !correct;
            tie_loss[1] = !correct && out.truth_attains_max;
        }
        Ok(TrialOutcome { err, tie_loss })
    };

    let outcomes: Vec<Result<TrialOutcome>> = (0..trials).into_par_iter().map(run_trial).collect();
    let mut e1 = 0usize;
    let mut e2 = 0usize;
    let mut tl1 = 0usize;
    let mut tl2 = 0usize;
    for o in outcomes {
        let o = o?;
        e1 += o.err[0] as usize;
        e2 += o.err[1] as usize;
        tl1 += o.tie_loss[0] as usize;
        tl2 += o.tie_loss[1] as usize;
    }
    Ok(SimReport {
        n,
        trials,
        seed,
        epsilon,
        code,
        rate_bits: code.rate_bits_per_symbol(),
        decoder1_error_rate: e1 as f64 / trials as f64,
        decoder2_error_rate: e2 as f64 / trials as f64,
        decoder1_errors: e1,
        decoder2_errors: e2,
        decoder1_tie_losses: tl1,
        decoder2_tie_losses: tl2,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;
    use crate::optimizer::lossless_rate;
    use approx::assert_abs_diff_eq;

    #[test]
    fn budget_on_butterfly_is_one_bit() {
        let ps = builtins::fig2_butterfly();
        let b = rate_budget(&ps, 0.0).unwrap();
        assert_abs_diff_eq!(b.i1_bits, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.i2_bits, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.j1_bits, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.j2_bits, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.total_bits, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn budget_extra_layers_vanish_with_shared_side_info() {
        // Y = Z in both components
        let mut joint = vec![0.0; 8];
        for x in 0..2 {
            for s in 0..2 {
                joint[(x * 2 + s) * 2 + s] = 0.5 * if x == s { 0.9 } else { 0.1 };
            }
        }
        let comp = ComponentSource::new(2, 2, 2, joint).unwrap();
        let ps = ProductSource::new(
            comp.clone(),
            comp,
            crate::source::DistortionSpec::hamming(2),
            crate::source::DistortionSpec::hamming(2),
        )
        .unwrap();
        let b = rate_budget(&ps, 0.0).unwrap();
        assert_abs_diff_eq!(b.i2_bits, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.j2_bits, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn budget_total_matches_lossless_rate() {
        for seed in 0..10u64 {
            let ps = builtins::random_mismatched_binary(seed);
            let b = rate_budget(&ps, 0.0).unwrap();
            let exact = nats_to_bits(lossless_rate(&ps).unwrap());
            assert_abs_diff_eq!(b.total_bits, exact, epsilon = 1e-10);
        }
        let noisy = builtins::noisy_butterfly(0.05);
        let b = rate_budget(&noisy, 0.0).unwrap();
        assert_abs_diff_eq!(
            b.total_bits,
            nats_to_bits(lossless_rate(&noisy).unwrap()),
            epsilon = 1e-10
        );
    }

    #[test]
    fn butterfly_single_symbol_is_exact_one_bit() {
        let ps = builtins::fig2_butterfly();
        let report = simulate_xor_binning(&ps, 1, 0.0, 2000, 7).unwrap();
        assert_eq!(report.code.len_i1, 0);
        assert_eq!(report.code.len_j1, 0);
        assert_eq!(report.code.len_i2, 1);
        assert_eq!(report.code.len_j2, 1);
        assert_abs_diff_eq!(report.rate_bits, 1.0, epsilon = 1e-12);
        assert_eq!(report.decoder1_errors, 0);
        assert_eq!(report.decoder2_errors, 0);
        assert_eq!(report.decoder1_tie_losses, 0);
        assert_eq!(report.decoder2_tie_losses, 0);
    }

    #[test]
    fn perfect_side_info_needs_no_bits() {
        // Y = Z = X in both components
        let mut joint = vec![0.0; 8];
        joint[0] = 0.5;
        joint[7] = 0.5;
        let comp = ComponentSource::new(2, 2, 2, joint).unwrap();
        let ps = ProductSource::new(
            comp.clone(),
            comp,
            crate::source::DistortionSpec::hamming(2),
            crate::source::DistortionSpec::hamming(2),
        )
        .unwrap();
        let report = simulate_xor_binning(&ps, 8, 0.0, 300, 1).unwrap();
        assert_eq!(report.code.sent_bits(), 0);
        assert_abs_diff_eq!(report.rate_bits, 0.0, epsilon = 1e-12);
        assert_eq!(report.decoder1_errors + report.decoder2_errors, 0);
    }

    #[test]
    fn singleton_bins_are_error_free() {
        // slack far above every entropy: all indices saturate at the block
        // width, the hashes become invertible, and decoding is exact
        let ps = builtins::noisy_butterfly(0.2);
        let report = simulate_xor_binning(&ps, 6, 3.0, 300, 3).unwrap();
        assert_eq!(report.code.len_i1, 6);
        assert_eq!(report.code.len_j2, 6);
        assert_eq!(report.decoder1_errors, 0);
        assert_eq!(report.decoder2_errors, 0);
    }

    #[test]
    fn noisy_butterfly_error_rates_are_small() {
        let ps = builtins::noisy_butterfly(0.05);
        let report = simulate_xor_binning(&ps, 20, 0.15, 2000, 0).unwrap();
        assert!(
            report.decoder1_error_rate <= 0.05,
            "decoder 1 error {}",
            report.decoder1_error_rate
        );
        assert!(
            report.decoder2_error_rate <= 0.05,
            "decoder 2 error {}",
            report.decoder2_error_rate
        );
        // transmitted rate within the per-layer slack budget of the
        // lossless rate: three layers each padded by epsilon plus rounding
        let exact = nats_to_bits(lossless_rate(&ps).unwrap());
        assert!(report.rate_bits <= exact + 3.0 * 0.15 + 3.0 / 20.0 + 1e-12);
        assert!(report.rate_bits >= exact);
    }

    #[test]
    fn error_rate_improves_with_block_length() {
        let ps = builtins::noisy_butterfly(0.05);
        let mut short_sum = 0.0;
        let mut long_sum = 0.0;
        for seed in 0..10u64 {
            let short = simulate_xor_binning(&ps, 8, 0.15, 400, seed).unwrap();
            let long = simulate_xor_binning(&ps, 20, 0.15, 400, seed).unwrap();
            short_sum += 0.5 * (short.decoder1_error_rate + short.decoder2_error_rate);
            long_sum += 0.5 * (long.decoder1_error_rate + long.decoder2_error_rate);
        }
        assert!(
            long_sum <= short_sum,
            "mean error grew with block length: {} vs {}",
            long_sum / 10.0,
            short_sum / 10.0
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let ps = builtins::noisy_butterfly(0.05);
        let a = simulate_xor_binning(&ps, 12, 0.2, 200, 9).unwrap();
        let b = simulate_xor_binning(&ps, 12, 0.2, 200, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn gf2_solver_roundtrip() {
        let mut rng = rng::stream(3, 0x6f2);
        for _ in 0..50 {
            let m = 12;
            let h = HashMatrix::sample(&mut rng, 5, m);
            let x: u64 = rng.gen::<u64>() & ((1 << m) - 1);
            let v = h.apply(x);
            let constraints: Vec<(u128, bool)> = h
                .rows
                .iter()
                .enumerate()
                .map(|(j, &row)| (row as u128, v >> j & 1 == 1))
                .collect();
            let (particular, basis) = solve_gf2(&constraints, m).unwrap();
            assert_eq!(h.apply(particular as u64), v);
            assert_eq!(basis.len(), m - 5);
            for &b in &basis {
                assert_eq!(h.apply((particular ^ b) as u64), v);
            }
            // x must be reachable: x ^ particular lies in the span
            let mut span = vec![particular];
            for &b in &basis {
                let mut next = span.clone();
                for s in &span {
                    next.push(s ^ b);
                }
                span = next;
            }
            assert!(span.contains(&(x as u128)));
        }
    }
}
