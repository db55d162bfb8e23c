//! Source models: one degraded component triple (X, Y, Z) and the product
//! of two independent components, together with distortion specifications
//! and degradedness classification.

use serde::{Deserialize, Serialize};

use crate::error::{HbrdError, Result};
use crate::prob::{JointDist, DEFAULT_MARKOV_TOL};

/// The three variables of one component triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    Z,
}

impl Var {
    fn axis(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y => 1,
            Var::Z => 2,
        }
    }
}

/// Joint pmf p(x, y, z) of one component on finite alphabets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSource {
    /// Alphabet sizes |X|, |Y|, |Z|.
    pub x_card: usize,
    pub y_card: usize,
    pub z_card: usize,
    /// Row-major p(x, y, z), length `x_card * y_card * z_card`.
    pub joint: Vec<f64>,
}

impl ComponentSource {
    pub fn new(x_card: usize, y_card: usize, z_card: usize, joint: Vec<f64>) -> Result<Self> {
        let src = Self {
            x_card,
            y_card,
            z_card,
            joint,
        };
        let report = src.validate()?;
        if !report.is_empty() {
            return Err(HbrdError::InvalidInput(report.join("; ")));
        }
        Ok(src)
    }

    /// Build from generative parts p(x), p(y|x), p(z|y); the chain
    /// X - Y - Z then holds exactly by construction.
    pub fn from_chain(px: &[f64], y_given_x: &[Vec<f64>], z_given_y: &[Vec<f64>]) -> Result<Self> {
        let nx = px.len();
        let ny = y_given_x.first().map(|r| r.len()).unwrap_or(0);
        let nz = z_given_y.first().map(|r| r.len()).unwrap_or(0);
        if y_given_x.len() != nx || z_given_y.len() != ny || ny == 0 || nz == 0 {
            return Err(HbrdError::InvalidInput(
                "chain factor dimensions are inconsistent".into(),
            ));
        }
        let mut joint = vec![0.0; nx * ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    joint[(x * ny + y) * nz + z] = px[x] * y_given_x[x][y] * z_given_y[y][z];
                }
            }
        }
        Self::new(nx, ny, nz, joint)
    }

    /// Invariant report: empty when the pmf is valid.
    pub fn validate(&self) -> Result<Vec<String>> {
        let dist = JointDist::new(
            vec![self.x_card, self.y_card, self.z_card],
            self.joint.clone(),
        )?;
        Ok(dist.validate())
    }

    /// The component joint as a generic three-axis distribution (X, Y, Z).
    pub fn dist(&self) -> JointDist {
        JointDist::new(
            vec![self.x_card, self.y_card, self.z_card],
            self.joint.clone(),
        )
        .expect("validated at construction")
    }

    pub fn card(&self, v: Var) -> usize {
        match v {
            Var::X => self.x_card,
            Var::Y => self.y_card,
            Var::Z => self.z_card,
        }
    }

    /// Marginal pmf of X.
    pub fn px(&self) -> Vec<f64> {
        self.dist().marginal_flat(&[0]).expect("axis 0 exists")
    }

    /// H(target | given) in nats.
    pub fn conditional_entropy(&self, target: Var, given: Var) -> Result<f64> {
        self.dist()
            .conditional_entropy(&[target.axis()], &[given.axis()])
    }

    /// Unconditional H(target) in nats.
    pub fn entropy(&self, target: Var) -> Result<f64> {
        self.dist().entropy(&[target.axis()])
    }

    /// I(a; b | c) in nats over the component triple.
    pub fn mutual_information(&self, a: &[Var], b: &[Var], c: &[Var]) -> Result<f64> {
        let ax: Vec<usize> = a.iter().map(|v| v.axis()).collect();
        let bx: Vec<usize> = b.iter().map(|v| v.axis()).collect();
        let cx: Vec<usize> = c.iter().map(|v| v.axis()).collect();
        self.dist().mutual_information(&ax, &bx, &cx)
    }

    /// Markov test for the chain `order[0] - order[1] - order[2]`.
    pub fn check_markov(&self, order: [Var; 3], tol: f64) -> Result<bool> {
        if tol <= 0.0 {
            return Err(HbrdError::InvalidInput("markov tolerance must be > 0".into()));
        }
        self.dist()
            .is_markov(order[0].axis(), order[1].axis(), order[2].axis(), tol)
    }

    /// Same triple with the roles of Y and Z exchanged.
    pub fn swap_side_info(&self) -> ComponentSource {
        let (nx, ny, nz) = (self.x_card, self.y_card, self.z_card);
        let mut joint = vec![0.0; nx * ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    joint[(x * nz + z) * ny + y] = self.joint[(x * ny + y) * nz + z];
                }
            }
        }
        ComponentSource {
            x_card: nx,
            y_card: nz,
            z_card: ny,
            joint,
        }
    }
}

/// Per-component distortion measures for the two decoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    /// |X̂|: reproduction alphabet of the Y-side decoder.
    pub hat_card: usize,
    /// |X̃|: reproduction alphabet of the Z-side decoder.
    pub tilde_card: usize,
    /// Row-major |X| x |X̂| matrix of distortion values.
    pub hat_matrix: Vec<f64>,
    /// Row-major |X| x |X̃| matrix.
    pub tilde_matrix: Vec<f64>,
}

impl DistortionSpec {
    pub fn new(
        x_card: usize,
        hat_card: usize,
        tilde_card: usize,
        hat_matrix: Vec<f64>,
        tilde_matrix: Vec<f64>,
    ) -> Result<Self> {
        if hat_matrix.len() != x_card * hat_card || tilde_matrix.len() != x_card * tilde_card {
            return Err(HbrdError::InvalidInput(
                "distortion matrix dimensions do not match alphabets".into(),
            ));
        }
        if hat_matrix
            .iter()
            .chain(tilde_matrix.iter())
            .any(|&d| !d.is_finite() || d < 0.0)
        {
            return Err(HbrdError::InvalidInput(
                "distortion values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            hat_card,
            tilde_card,
            hat_matrix,
            tilde_matrix,
        })
    }

    /// Hamming distortion on both decoders with reproduction alphabets
    /// equal to the source alphabet.
    pub fn hamming(x_card: usize) -> Self {
        let mut m = vec![1.0; x_card * x_card];
        for i in 0..x_card {
            m[i * x_card + i] = 0.0;
        }
        Self {
            hat_card: x_card,
            tilde_card: x_card,
            hat_matrix: m.clone(),
            tilde_matrix: m,
        }
    }

    pub fn hat(&self, x: usize, xhat: usize) -> f64 {
        self.hat_matrix[x * self.hat_card + xhat]
    }

    pub fn tilde(&self, x: usize, xtilde: usize) -> f64 {
        self.tilde_matrix[x * self.tilde_card + xtilde]
    }
}

/// The four distortion targets (D̂₁, D̂₂, D̃₁, D̃₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionQuadruple {
    pub dhat1: f64,
    pub dhat2: f64,
    pub dtilde1: f64,
    pub dtilde2: f64,
}

impl DistortionQuadruple {
    pub fn new(dhat1: f64, dhat2: f64, dtilde1: f64, dtilde2: f64) -> Result<Self> {
        let q = Self {
            dhat1,
            dhat2,
            dtilde1,
            dtilde2,
        };
        if q.as_array().iter().any(|&d| !d.is_finite() || d < 0.0) {
            return Err(HbrdError::InvalidInput(
                "distortion targets must be finite and nonnegative".into(),
            ));
        }
        Ok(q)
    }

    pub const ZERO: DistortionQuadruple = DistortionQuadruple {
        dhat1: 0.0,
        dhat2: 0.0,
        dtilde1: 0.0,
        dtilde2: 0.0,
    };

    pub fn as_array(&self) -> [f64; 4] {
        [self.dhat1, self.dhat2, self.dtilde1, self.dtilde2]
    }
}

/// Names for the four distortion constraints, used in reports and errors.
pub const CONSTRAINT_NAMES: [&str; 4] = ["Dhat1", "Dhat2", "Dtilde1", "Dtilde2"];

/// Product of two independent component sources plus distortion specs.
///
/// Independence across components is structural: the joint law is always
/// the tensor product of the two component joints and is never stored in
/// denormalized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSource {
    pub component1: ComponentSource,
    pub component2: ComponentSource,
    pub distortion1: DistortionSpec,
    pub distortion2: DistortionSpec,
}

impl ProductSource {
    pub fn new(
        component1: ComponentSource,
        component2: ComponentSource,
        distortion1: DistortionSpec,
        distortion2: DistortionSpec,
    ) -> Result<Self> {
        if distortion1.hat_matrix.len() != component1.x_card * distortion1.hat_card
            || distortion2.hat_matrix.len() != component2.x_card * distortion2.hat_card
        {
            return Err(HbrdError::InvalidInput(
                "distortion spec does not match component alphabet".into(),
            ));
        }
        Ok(Self {
            component1,
            component2,
            distortion1,
            distortion2,
        })
    }

    pub fn component(&self, i: usize) -> &ComponentSource {
        match i {
            1 => &self.component1,
            2 => &self.component2,
            _ => panic!("component index must be 1 or 2"),
        }
    }

    pub fn distortion(&self, i: usize) -> &DistortionSpec {
        match i {
            1 => &self.distortion1,
            2 => &self.distortion2,
            _ => panic!("component index must be 1 or 2"),
        }
    }

    /// Joint law over (X1, Y1, Z1, X2, Y2, Z2) as a six-axis distribution.
    pub fn full_dist(&self) -> JointDist {
        self.component1.dist().tensor(&self.component2.dist())
    }
}

/// Which degraded orderings a product source satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegradednessKind {
    /// Both components satisfy X - Y - Z.
    Matched,
    /// Component 1 satisfies X - Y - Z, component 2 satisfies X - Z - Y.
    Mismatched,
    /// Both orderings hold simultaneously.
    Both,
    Neither,
}

/// Degradedness classification with the underlying per-chain results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegradednessClass {
    pub kind: DegradednessKind,
    /// X1 - Y1 - Z1
    pub chain1_y: bool,
    /// X2 - Y2 - Z2
    pub chain2_y: bool,
    /// X1 - Z1 - Y1
    pub chain1_z: bool,
    /// X2 - Z2 - Y2
    pub chain2_z: bool,
}

/// Evaluates the component Markov chains and classifies the source as
/// matched-order, mismatched-order, both, or neither.
pub fn classify_degradedness(ps: &ProductSource, tol: f64) -> Result<DegradednessClass> {
    let chain1_y = ps.component1.check_markov([Var::X, Var::Y, Var::Z], tol)?;
    let chain2_y = ps.component2.check_markov([Var::X, Var::Y, Var::Z], tol)?;
    let chain1_z = ps.component1.check_markov([Var::X, Var::Z, Var::Y], tol)?;
    let chain2_z = ps.component2.check_markov([Var::X, Var::Z, Var::Y], tol)?;
    let matched = chain1_y && chain2_y;
    let mismatched = chain1_y && chain2_z;
    let kind = match (matched, mismatched) {
        (true, true) => DegradednessKind::Both,
        (true, false) => DegradednessKind::Matched,
        (false, true) => DegradednessKind::Mismatched,
        (false, false) => DegradednessKind::Neither,
    };
    Ok(DegradednessClass {
        kind,
        chain1_y,
        chain2_y,
        chain1_z,
        chain2_z,
    })
}

/// `classify_degradedness` at the default Markov tolerance.
pub fn classify_degradedness_default(ps: &ProductSource) -> Result<DegradednessClass> {
    classify_degradedness(ps, DEFAULT_MARKOV_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;
    use crate::prob::LN_2;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_component_is_valid() {
        let src = ComponentSource::new(2, 2, 2, vec![0.125; 8]).unwrap();
        assert!(src.validate().unwrap().is_empty());
    }

    #[test]
    fn normalization_violation_reported() {
        let src = ComponentSource {
            x_card: 2,
            y_card: 2,
            z_card: 2,
            joint: vec![0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.124],
        };
        let report = src.validate().unwrap();
        assert_eq!(report.len(), 1);
        assert!(report[0].contains("sum to"));
    }

    #[test]
    fn negativity_violation_reported() {
        let src = ComponentSource {
            x_card: 2,
            y_card: 1,
            z_card: 1,
            joint: vec![1.01, -0.01],
        };
        let report = src.validate().unwrap();
        assert!(report.iter().any(|s| s.contains("negative")));
    }

    #[test]
    fn conditional_entropy_examples() {
        // Y = X: H(X|Y) = 0. Z constant: H(X|Z) = ln 2.
        let src = ComponentSource::new(2, 2, 1, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(src.conditional_entropy(Var::X, Var::Y).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(src.conditional_entropy(Var::X, Var::Z).unwrap(), LN_2, epsilon = 1e-15);
        assert!(src.conditional_entropy(Var::X, Var::X).is_err());
    }

    #[test]
    fn butterfly_is_mismatched() {
        let ps = builtins::fig2_butterfly();
        let class = classify_degradedness_default(&ps).unwrap();
        assert_eq!(class.kind, DegradednessKind::Mismatched);
        assert!(class.chain1_y && class.chain2_z);
        assert!(!class.chain2_y || !class.chain1_z);
    }

    #[test]
    fn matched_butterfly_variant() {
        // Y1 = X1, Z1 constant; Y2 = X2, Z2 constant: matched order.
        let comp = ComponentSource::new(2, 2, 1, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let ps = ProductSource::new(
            comp.clone(),
            comp,
            DistortionSpec::hamming(2),
            DistortionSpec::hamming(2),
        )
        .unwrap();
        let class = classify_degradedness_default(&ps).unwrap();
        assert_eq!(class.kind, DegradednessKind::Matched);
    }

    #[test]
    fn all_constant_side_info_is_both() {
        let comp = ComponentSource::new(2, 1, 1, vec![0.5, 0.5]).unwrap();
        let ps = ProductSource::new(
            comp.clone(),
            comp,
            DistortionSpec::hamming(2),
            DistortionSpec::hamming(2),
        )
        .unwrap();
        let class = classify_degradedness_default(&ps).unwrap();
        assert_eq!(class.kind, DegradednessKind::Both);
        assert!(class.chain1_y && class.chain2_y && class.chain1_z && class.chain2_z);
    }

    #[test]
    fn relabel_swaps_chain_sets() {
        let ps = builtins::fig2_butterfly();
        let original = classify_degradedness_default(&ps).unwrap();
        let swapped = ProductSource::new(
            ps.component1.swap_side_info(),
            ps.component2.swap_side_info(),
            ps.distortion1.clone(),
            ps.distortion2.clone(),
        )
        .unwrap();
        let relabeled = classify_degradedness_default(&swapped).unwrap();
        // Swapping Y and Z in both components exchanges the chain sets.
        assert_eq!(relabeled.chain1_y, original.chain1_z);
        assert_eq!(relabeled.chain2_y, original.chain2_z);
        assert_eq!(relabeled.chain1_z, original.chain1_y);
        assert_eq!(relabeled.chain2_z, original.chain2_y);
        assert_eq!(
            relabeled.chain1_y && relabeled.chain2_y,
            original.chain1_z && original.chain2_z
        );
    }
}
