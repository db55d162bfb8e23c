//! Exact audit of the converse entropy inequality.
//!
//! For a product of two degraded triples (A_i - B_i - C_i) and any
//! deterministic function T = f(A^n), the entropy H(T) dominates a sum of
//! four conditional informations per time index, built from past and
//! future slices of the side sequences. The auditor materializes the
//! exact joint law of (A^n, B^n, C^n, T) and evaluates every term by
//! exact summation, so a violation would be a counterexample, not noise.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::builtins::random_simplex;
use crate::error::{HbrdError, Result};
use crate::prob::entropy_term;
use crate::rng;
use crate::source::{ComponentSource, Var};
use rand::Rng;

/// Atom-count ceiling for the exact joint law.
pub const MAX_ATOMS: usize = 1_000_000;

/// One auditable instance: two degraded component triples, a block
/// length, and a total function table on `A^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaInstance {
    /// Triple (A1, B1, C1) stored in the (X, Y, Z) slots.
    pub comp1: ComponentSource,
    /// Triple (A2, B2, C2).
    pub comp2: ComponentSource,
    pub n: usize,
    pub t_card: usize,
    /// f(a1^n, a2^n), indexed by `a1_index * |A2|^n + a2_index` with each
    /// sequence packed in base |A_i|, time 0 most significant.
    pub t_table: Vec<usize>,
}

impl LemmaInstance {
    pub fn new(
        comp1: ComponentSource,
        comp2: ComponentSource,
        n: usize,
        t_card: usize,
        t_table: Vec<usize>,
    ) -> Result<Self> {
        let inst = LemmaInstance {
            comp1,
            comp2,
            n,
            t_card,
            t_table,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 3 {
            return Err(HbrdError::InvalidInput(
                "block length must be 1, 2, or 3".into(),
            ));
        }
        for (i, c) in [&self.comp1, &self.comp2].into_iter().enumerate() {
            if !c.check_markov([Var::X, Var::Y, Var::Z], 1e-9)? {
                return Err(HbrdError::InvalidInput(format!(
                    "component {} does not satisfy the A - B - C chain within 1e-9",
                    i + 1
                )));
            }
        }
        let a_seqs = self.comp1.x_card.pow(self.n as u32) * self.comp2.x_card.pow(self.n as u32);
        if self.t_table.len() != a_seqs {
            return Err(HbrdError::InvalidInput(format!(
                "function table has {} entries, the source block needs {}",
                self.t_table.len(),
                a_seqs
            )));
        }
        if self.t_card == 0 || self.t_table.iter().any(|&t| t >= self.t_card) {
            return Err(HbrdError::InvalidInput(
                "function values must lie below the stated range size".into(),
            ));
        }
        if self.atoms() > MAX_ATOMS {
            return Err(HbrdError::TooLarge(format!(
                "joint block law would have {} atoms (limit {})",
                self.atoms(),
                MAX_ATOMS
            )));
        }
        Ok(())
    }

    pub fn atoms(&self) -> usize {
        let per1 = self.comp1.x_card * self.comp1.y_card * self.comp1.z_card;
        let per2 = self.comp2.x_card * self.comp2.y_card * self.comp2.z_card;
        (per1 * per2).pow(self.n as u32)
    }
}

/// Result of auditing one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaAudit {
    /// H(T) in nats.
    pub lhs: f64,
    /// Sum over time of the four information terms.
    pub rhs: f64,
    /// The four terms at each time index.
    pub terms: Vec<[f64; 4]>,
    /// lhs - rhs.
    pub slack: f64,
    /// slack >= -1e-9.
    pub holds: bool,
}

/// One realized block: sequences per component and role, plus T.
struct Atom {
    seqs: [[Vec<u8>; 3]; 2],
    t: u8,
    p: f64,
}

#[derive(Debug, Clone, Copy)]
enum Role {
    A = 0,
    B = 1,
    C = 2,
}

/// A set of coordinates entering one side of a mutual information.
#[derive(Debug, Clone, Copy)]
enum Slice {
    T,
    /// (component, role, time)
    At(usize, Role, usize),
    /// strictly before `time`
    Past(usize, Role, usize),
    /// strictly after `time`
    Future(usize, Role, usize),
    Full(usize, Role),
}

fn pack_group(atom: &Atom, group: &[Slice], n: usize) -> u64 {
    let mut key = 1u64; // leading 1 guards against length ambiguity
    let mut push = |v: u8| {
        key = (key << 2) | v as u64;
    };
    for s in group {
        match *s {
            Slice::T => push(atom.t),
            Slice::At(c, r, t) => push(atom.seqs[c][r as usize][t]),
            Slice::Past(c, r, t) => {
                for i in 0..t {
                    push(atom.seqs[c][r as usize][i]);
                }
            }
            Slice::Future(c, r, t) => {
                for i in t + 1..n {
                    push(atom.seqs[c][r as usize][i]);
                }
            }
            Slice::Full(c, r) => {
                for i in 0..n {
                    push(atom.seqs[c][r as usize][i]);
                }
            }
        }
    }
    key
}

/// Exact I(G1; G2 | G3) over the atom list.
fn grouped_mi(atoms: &[Atom], g1: &[Slice], g2: &[Slice], g3: &[Slice], n: usize) -> f64 {
    let mut m123: BTreeMap<(u64, u64, u64), f64> = BTreeMap::new();
    let mut m13: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut m23: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut m3: BTreeMap<u64, f64> = BTreeMap::new();
    for atom in atoms {
        let k1 = pack_group(atom, g1, n);
        let k2 = pack_group(atom, g2, n);
        let k3 = pack_group(atom, g3, n);
        *m123.entry((k1, k2, k3)).or_insert(0.0) += atom.p;
        *m13.entry((k1, k3)).or_insert(0.0) += atom.p;
        *m23.entry((k2, k3)).or_insert(0.0) += atom.p;
        *m3.entry(k3).or_insert(0.0) += atom.p;
    }
    let mut total = 0.0;
    for (&(k1, k2, k3), &p123) in &m123 {
        if p123 == 0.0 {
            continue;
        }
        let p13 = m13[&(k1, k3)];
        let p23 = m23[&(k2, k3)];
        let p3 = m3[&k3];
        total += p123 * ((p123 * p3) / (p13 * p23)).ln();
    }
    total.max(0.0)
}

fn enumerate_atoms(inst: &LemmaInstance) -> Vec<Atom> {
    let n = inst.n;
    let comps = [&inst.comp1, &inst.comp2];
    let seq_counts: Vec<usize> = comps
        .iter()
        .map(|c| (c.x_card * c.y_card * c.z_card).pow(n as u32))
        .collect();
    let decode = |c: &ComponentSource, mut idx: usize| -> ([Vec<u8>; 3], f64) {
        let (nx, ny, nz) = (c.x_card, c.y_card, c.z_card);
        let mut a = vec![0u8; n];
        let mut b = vec![0u8; n];
        let mut cc = vec![0u8; n];
        let mut p = 1.0;
        for t in (0..n).rev() {
            let triple = idx % (nx * ny * nz);
            idx /= nx * ny * nz;
            let x = triple / (ny * nz);
            let y = (triple / nz) % ny;
            let z = triple % nz;
            a[t] = x as u8;
            b[t] = y as u8;
            cc[t] = z as u8;
            p *= c.joint[(x * ny + y) * nz + z];
        }
        ([a, b, cc], p)
    };
    let a_index = |c: &ComponentSource, seq: &[u8]| -> usize {
        seq.iter().fold(0usize, |acc, &s| acc * c.x_card + s as usize)
    };
    let mut atoms = Vec::new();
    for i1 in 0..seq_counts[0] {
        let (seq1, p1) = decode(comps[0], i1);
        if p1 == 0.0 {
            continue;
        }
        let a1 = a_index(comps[0], &seq1[0]);
        for i2 in 0..seq_counts[1] {
            let (seq2, p2) = decode(comps[1], i2);
            let p = p1 * p2;
            if p == 0.0 {
                continue;
            }
            let a2 = a_index(comps[1], &seq2[0]);
            let t = inst.t_table[a1 * comps[1].x_card.pow(n as u32) + a2] as u8;
            atoms.push(Atom {
                seqs: [seq1.clone(), seq2],
                t,
                p,
            });
        }
    }
    atoms
}

/// Evaluate the inequality exactly on one instance.
pub fn lemma1_audit(inst: &LemmaInstance) -> Result<LemmaAudit> {
    inst.validate()?;
    let n = inst.n;
    let atoms = enumerate_atoms(inst);

    // H(T)
    let mut pt: BTreeMap<u8, f64> = BTreeMap::new();
    for atom in &atoms {
        *pt.entry(atom.t).or_insert(0.0) += atom.p;
    }
    let lhs: f64 = pt.values().map(|&p| entropy_term(p)).sum();

    use Role::{A, B, C};
    let mut terms = Vec::with_capacity(n);
    let mut rhs = 0.0;
    for t in 0..n {
        let common1 = [
            Slice::T,
            Slice::Past(0, B, t),
            Slice::Past(0, C, t),
            Slice::Future(0, C, t),
            Slice::Full(1, C),
        ];
        let term1 = grouped_mi(&atoms, &common1, &[Slice::At(0, A, t)], &[Slice::At(0, C, t)], n);
        let mut cond2 = vec![Slice::At(0, B, t)];
        cond2.extend_from_slice(&common1);
        let term2 = grouped_mi(
            &atoms,
            &[Slice::Future(0, B, t), Slice::Full(1, B)],
            &[Slice::At(0, A, t)],
            &cond2,
            n,
        );
        let common2 = [
            Slice::T,
            Slice::Full(0, B),
            Slice::Past(1, B, t),
            Slice::Full(0, C),
            Slice::Past(1, C, t),
            Slice::Future(1, C, t),
        ];
        let term3 = grouped_mi(&atoms, &common2, &[Slice::At(1, A, t)], &[Slice::At(1, C, t)], n);
        let mut cond4 = vec![Slice::At(1, B, t)];
        cond4.extend_from_slice(&common2);
        let term4 = grouped_mi(
            &atoms,
            &[Slice::Future(1, B, t)],
            &[Slice::At(1, A, t)],
            &cond4,
            n,
        );
        rhs += term1 + term2 + term3 + term4;
        terms.push([term1, term2, term3, term4]);
    }

    let slack = lhs - rhs;
    Ok(LemmaAudit {
        lhs,
        rhs,
        terms,
        slack,
        holds: slack >= -1e-9,
    })
}

/// Summary of a randomized regression sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSweep {
    pub instances: usize,
    pub block_length: usize,
    pub min_slack: f64,
    pub violations: usize,
    pub seed: u64,
}

/// A random degraded component generated as p(a) p(b|a) p(c|b), so the
/// chain holds exactly.
pub fn random_degraded_component<R: Rng>(
    rng: &mut R,
    na: usize,
    nb: usize,
    nc: usize,
) -> ComponentSource {
    let pa = random_simplex(rng, na, 0.02);
    let b_rows: Vec<Vec<f64>> = (0..na).map(|_| random_simplex(rng, nb, 0.02)).collect();
    let c_rows: Vec<Vec<f64>> = (0..nb).map(|_| random_simplex(rng, nc, 0.02)).collect();
    ComponentSource::from_chain(&pa, &b_rows, &c_rows).expect("generative chain is valid")
}

/// A random instance at the given block length: alphabets of size 2 or 3
/// for single-symbol blocks, binary for longer blocks, and a uniformly
/// random function table.
pub fn random_instance(seed: u64, n: usize) -> Result<LemmaInstance> {
    let mut rng = rng::stream(seed, 0x1e44a);
    let mut pick = |rng: &mut rand_chacha::ChaCha8Rng| -> [usize; 3] {
        if n == 1 {
            [
                rng.gen_range(2..=3),
                rng.gen_range(2..=3),
                rng.gen_range(2..=3),
            ]
        } else {
            [2, 2, 2]
        }
    };
    let dims1 = pick(&mut rng);
    let comp1 = random_degraded_component(&mut rng, dims1[0], dims1[1], dims1[2]);
    let dims2 = pick(&mut rng);
    let comp2 = random_degraded_component(&mut rng, dims2[0], dims2[1], dims2[2]);
    let a_seqs = comp1.x_card.pow(n as u32) * comp2.x_card.pow(n as u32);
    let t_card = rng.gen_range(1..=4usize.min(a_seqs));
    let t_table: Vec<usize> = (0..a_seqs).map(|_| rng.gen_range(0..t_card)).collect();
    LemmaInstance::new(comp1, comp2, n, t_card, t_table)
}

/// Audit `count` random instances; every one must hold.
pub fn lemma1_sweep(count: usize, n: usize, seed: u64) -> Result<LemmaSweep> {
    if count == 0 {
        return Err(HbrdError::InvalidInput("count must be positive".into()));
    }
    let audits: Vec<Result<LemmaAudit>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let inst = random_instance(seed.wrapping_add(i as u64), n)?;
            lemma1_audit(&inst)
        })
        .collect();
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    for a in audits {
        let a = a?;
        min_slack = min_slack.min(a.slack);
        violations += (!a.holds) as usize;
    }
    Ok(LemmaSweep {
        instances: count,
        block_length: n,
        min_slack,
        violations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::JointDist;
    use approx::assert_abs_diff_eq;

    fn bsc_component(crossover: f64) -> ComponentSource {
        ComponentSource::from_chain(
            &[0.5, 0.5],
            &[
                vec![1.0 - crossover, crossover],
                vec![crossover, 1.0 - crossover],
            ],
            &[
                vec![1.0 - crossover, crossover],
                vec![crossover, 1.0 - crossover],
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_function_has_zero_slack() {
        let inst = LemmaInstance::new(
            bsc_component(0.1),
            bsc_component(0.2),
            2,
            1,
            vec![0; 16],
        )
        .unwrap();
        let audit = lemma1_audit(&inst).unwrap();
        assert_abs_diff_eq!(audit.lhs, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(audit.rhs, 0.0, epsilon = 1e-12);
        assert!(audit.holds);
        assert_abs_diff_eq!(audit.slack, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_function_on_symmetric_components_holds() {
        let inst = LemmaInstance::new(
            bsc_component(0.1),
            bsc_component(0.1),
            1,
            4,
            (0..4).collect(),
        )
        .unwrap();
        let audit = lemma1_audit(&inst).unwrap();
        assert!(audit.holds, "slack {}", audit.slack);
        assert!(audit.slack >= 0.0);
        assert!(audit.lhs > 0.0);
    }

    #[test]
    fn degenerate_side_chains_make_identity_tight() {
        // B = C = constant: the remaining information terms are
        // I(T; A1) and I(T; A2 | T-measurable data), so for the identity
        // function the bound is attained with equality
        let blind = ComponentSource::from_chain(
            &[0.5, 0.5],
            &[vec![1.0], vec![1.0]],
            &[vec![1.0]],
        )
        .unwrap();
        let inst =
            LemmaInstance::new(blind.clone(), blind.clone(), 1, 4, (0..4).collect()).unwrap();
        let audit = lemma1_audit(&inst).unwrap();
        assert_abs_diff_eq!(audit.lhs, (4.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(audit.slack, 0.0, epsilon = 1e-12);
        assert!(audit.holds);

        // a constant function still collapses the right side entirely
        let inst0 = LemmaInstance::new(blind.clone(), blind, 1, 1, vec![0; 4]).unwrap();
        let audit0 = lemma1_audit(&inst0).unwrap();
        assert_abs_diff_eq!(audit0.rhs, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(audit0.slack, audit0.lhs, epsilon = 1e-12);
    }

    #[test]
    fn random_instances_hold_at_every_block_length() {
        for n in 1..=3 {
            let count = if n == 3 { 4 } else { 40 };
            let sweep = lemma1_sweep(count, n, 7).unwrap();
            assert_eq!(sweep.violations, 0, "n = {}: {:?}", n, sweep);
            assert!(sweep.min_slack >= -1e-9);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let a = lemma1_sweep(25, 2, 3).unwrap();
        let b = lemma1_sweep(25, 2, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_degraded_components() {
        // Z = X xor Y breaks the chain
        let mut joint = vec![0.0; 8];
        for x in 0..2 {
            for y in 0..2 {
                joint[(x * 2 + y) * 2 + (x ^ y)] = 0.25;
            }
        }
        let bad = ComponentSource::new(2, 2, 2, joint).unwrap();
        let err = LemmaInstance::new(bad, bsc_component(0.1), 1, 2, vec![0, 1, 1, 0]);
        assert!(err.is_err());
    }

    #[test]
    fn single_letter_assembly_matches_reference_information_terms() {
        // Substitutions (A1,B1,C1) = (X1,Y1,Z1) and (A2,B2,C2) = (X2,Z2,Z2)
        // at n = 1: the audit terms must equal I(T,Z2; X1|Z1) and
        // I(T,Y1,Z1; X2|Z2) computed independently over the full joint,
        // with the other two terms identically zero.
        let comp1 = bsc_component(0.15);
        // comp2 with B2 = C2 = Z2: diagonal in the last two slots
        let base2 = bsc_component(0.25);
        let (nx, ny) = (base2.x_card, base2.y_card);
        let mut dup = vec![0.0; nx * ny * ny];
        for x in 0..nx {
            for s in 0..ny {
                // probability that X2 = x and Z2 = s under the chain
                let mut p = 0.0;
                for yy in 0..ny {
                    p += base2.joint[(x * ny + yy) * base2.z_card + s.min(base2.z_card - 1)]
                        * if yy == s { 1.0 } else { 0.0 };
                }
                let _ = p;
                // rebuild directly: p(x, z) with both side slots equal to z
                let mut pxz = 0.0;
                for yy in 0..ny {
                    pxz += base2.joint[(x * ny + yy) * base2.z_card + s];
                }
                dup[(x * ny + s) * ny + s] = pxz;
            }
        }
        let comp2 = ComponentSource::new(nx, ny, ny, dup).unwrap();

        let mut rng = rng::stream(11, 0xf00);
        let t_card = 3;
        let t_table: Vec<usize> = (0..4).map(|_| rng.gen_range(0..t_card)).collect();
        let inst =
            LemmaInstance::new(comp1.clone(), comp2.clone(), 1, t_card, t_table.clone()).unwrap();
        let audit = lemma1_audit(&inst).unwrap();
        assert_abs_diff_eq!(audit.terms[0][1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(audit.terms[0][3], 0.0, epsilon = 1e-12);

        // independent reference: joint over (x1,y1,z1,x2,b2,c2,t)
        let d1 = comp1.dist();
        let d2 = comp2.dist();
        let mut dims = vec![2, 2, 2, 2, 2, 2, t_card];
        let total: usize = dims.iter().product();
        let mut p = vec![0.0; total];
        for x1 in 0..2 {
            for y1 in 0..2 {
                for z1 in 0..2 {
                    for x2 in 0..2 {
                        for b2 in 0..2 {
                            for c2 in 0..2 {
                                let t = t_table[x1 * 2 + x2];
                                let v = d1.prob(&[x1, y1, z1]) * d2.prob(&[x2, b2, c2]);
                                if v > 0.0 {
                                    let idx = ((((((x1 * 2 + y1) * 2 + z1) * 2 + x2) * 2 + b2)
                                        * 2
                                        + c2)
                                        * t_card)
                                        + t;
                                    p[idx] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        let joint = JointDist::new(std::mem::take(&mut dims), p).unwrap();
        // axes: x1=0, y1=1, z1=2, x2=3, b2=4, c2=5, t=6
        let ref_term1 = joint.mutual_information(&[6, 5], &[0], &[2]).unwrap();
        let ref_term3 = joint.mutual_information(&[6, 1, 2], &[3], &[5]).unwrap();
        assert_abs_diff_eq!(audit.terms[0][0], ref_term1, epsilon = 1e-12);
        assert_abs_diff_eq!(audit.terms[0][2], ref_term3, epsilon = 1e-12);
    }
}
