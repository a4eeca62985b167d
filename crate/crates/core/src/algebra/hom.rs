//! Graded homomorphisms between Carnot algebras.

use std::sync::Arc;

use num_traits::Zero;

use super::{AlgebraError, AlgebraVector, CarnotAlgebra};
use crate::linalg::Matrix;
use crate::scalar::{Rational, Scalar};

/// Relative tolerance for the float homomorphism check in [`GradedHom::new`].
pub const FLOAT_HOM_TOL: f64 = 1e-9;

/// Layer-preserving linear map `g → g'` that is a Lie homomorphism.
#[derive(Debug, Clone)]
pub struct GradedHom<S> {
    source: Arc<CarnotAlgebra>,
    target: Arc<CarnotAlgebra>,
    matrix: Matrix<S>,
}

impl<S: Scalar> PartialEq for GradedHom<S> {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
            && *self.source == *other.source
            && *self.target == *other.target
    }
}

impl<S: Scalar> GradedHom<S> {
    /// Checks shape, block structure and the homomorphism property.
    pub fn new(
        source: Arc<CarnotAlgebra>,
        target: Arc<CarnotAlgebra>,
        matrix: Matrix<S>,
    ) -> Result<Self, AlgebraError> {
        let h = Self::new_unchecked(source, target, matrix)?;
        h.check_graded()?;
        let scale = h.matrix.max_abs().max(1.0);
        let tol = if S::EXACT {
            0.0
        } else {
            FLOAT_HOM_TOL * scale * scale
        };
        let (a, b, defect) = h.worst_pair();
        if defect > tol {
            return Err(AlgebraError::NotHomomorphism { a, b, defect });
        }
        Ok(h)
    }

    /// Checks only the matrix shape. Intended for tests that need non-homomorphisms.
    pub fn new_unchecked(
        source: Arc<CarnotAlgebra>,
        target: Arc<CarnotAlgebra>,
        matrix: Matrix<S>,
    ) -> Result<Self, AlgebraError> {
        if matrix.cols() != source.dim() {
            return Err(AlgebraError::DimensionMismatch {
                expected: source.dim(),
                found: matrix.cols(),
            });
        }
        if matrix.rows() != target.dim() {
            return Err(AlgebraError::DimensionMismatch {
                expected: target.dim(),
                found: matrix.rows(),
            });
        }
        Ok(GradedHom {
            source,
            target,
            matrix,
        })
    }

    pub fn identity(alg: Arc<CarnotAlgebra>) -> Self {
        let n = alg.dim();
        GradedHom {
            source: alg.clone(),
            target: alg,
            matrix: Matrix::identity(n),
        }
    }

    /// Dilation `δ_r` as a graded automorphism.
    pub fn dilation(alg: Arc<CarnotAlgebra>, r: &S) -> Result<Self, AlgebraError> {
        if *r <= S::zero() {
            return Err(AlgebraError::NonPositiveDilation);
        }
        let n = alg.dim();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = r.powi(alg.layer_of(i) as u32);
        }
        Ok(GradedHom {
            source: alg.clone(),
            target: alg,
            matrix: m,
        })
    }

    /// Unique graded extension of a horizontal block `V_1 → V'_1`.
    ///
    /// Returns the homomorphism and its defect; fails if the defect exceeds
    /// `tol` (or is nonzero in exact mode).
    pub fn from_horizontal(
        source: Arc<CarnotAlgebra>,
        target: Arc<CarnotAlgebra>,
        block: &Matrix<S>,
        tol: f64,
    ) -> Result<(Self, f64), AlgebraError> {
        let (d1, d1t) = (source.layer_dims()[0], target.layer_dims()[0]);
        if block.cols() != d1 || block.rows() != d1t {
            return Err(AlgebraError::DimensionMismatch {
                expected: d1 * d1t,
                found: block.rows() * block.cols(),
            });
        }
        let (n, nt) = (source.dim(), target.dim());
        let mut m = Matrix::zeros(nt, n);
        for r in 0..d1t {
            for c in 0..d1 {
                m[(r, c)] = block[(r, c)].clone();
            }
        }
        for j in 1..source.step() {
            let next = source.layer_range(j + 1);
            // spanning pairs [e_a, e_b], a ∈ V_1, b ∈ V_j
            let mut pairs = Vec::new();
            let mut cols: Vec<Vec<Rational>> = Vec::new();
            for a in source.layer_range(1) {
                for b in source.layer_range(j) {
                    let v = source.bracket_slice(
                        source.basis_vector::<Rational>(a).coords(),
                        source.basis_vector::<Rational>(b).coords(),
                    );
                    let v = v[next.clone()].to_vec();
                    if v.iter().all(Zero::is_zero) {
                        continue;
                    }
                    pairs.push((a, b));
                    cols.push(v);
                }
            }
            let span = Matrix::from_rows(cols.clone()).transpose();
            let images: Vec<Vec<S>> = pairs
                .iter()
                .map(|&(a, b)| target.bracket_slice(&m.column(a), &m.column(b)))
                .collect();
            for (t, k) in next.clone().enumerate() {
                let mut e = vec![Rational::zero(); next.len()];
                e[t] = num_traits::One::one();
                let coeffs = span.solve(&e).expect("bracket-generating algebra");
                let mut col = vec![S::zero(); nt];
                for (c, img) in coeffs.iter().zip(&images) {
                    if c.is_zero() {
                        continue;
                    }
                    let c = S::from_rational(c);
                    for (o, v) in col.iter_mut().zip(img) {
                        *o = o.clone() + c.clone() * v.clone();
                    }
                }
                for (r, v) in col.into_iter().enumerate() {
                    m[(r, k)] = v;
                }
            }
        }
        let h = GradedHom {
            source,
            target,
            matrix: m,
        };
        let defect = h.homomorphism_defect();
        let limit = if S::EXACT { 0.0 } else { tol };
        if defect > limit {
            return Err(AlgebraError::ExtensionFailed(defect));
        }
        Ok((h, defect))
    }

    pub fn source(&self) -> &Arc<CarnotAlgebra> {
        &self.source
    }

    pub fn target(&self) -> &Arc<CarnotAlgebra> {
        &self.target
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.matrix
    }

    /// Block `V_j → V'_j` (1-based `j`); empty if either side lacks layer `j`.
    pub fn layer_block(&self, j: usize) -> Matrix<S> {
        if j > self.source.step() || j > self.target.step() {
            return Matrix::zeros(0, 0);
        }
        let rows: Vec<usize> = self.target.layer_range(j).collect();
        let cols: Vec<usize> = self.source.layer_range(j).collect();
        self.matrix.select(&rows, &cols)
    }

    pub fn apply(&self, x: &AlgebraVector<S>) -> Result<AlgebraVector<S>, AlgebraError> {
        self.source.check(x)?;
        Ok(AlgebraVector::new(self.matrix.mul_vec(x.coords())))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &GradedHom<S>) -> Result<GradedHom<S>, AlgebraError> {
        if *other.target != *self.source {
            return Err(AlgebraError::Unsupported(
                "composition of mismatched algebras".into(),
            ));
        }
        Ok(GradedHom {
            source: other.source.clone(),
            target: self.target.clone(),
            matrix: self.matrix.mul_mat(&other.matrix),
        })
    }

    pub fn inverse(&self) -> Result<GradedHom<S>, AlgebraError> {
        let inv = self.matrix.inverse().ok_or(AlgebraError::NotInvertible)?;
        Ok(GradedHom {
            source: self.target.clone(),
            target: self.source.clone(),
            matrix: inv,
        })
    }

    pub fn is_invertible(&self) -> bool {
        self.matrix.rows() == self.matrix.cols() && self.matrix.inverse().is_some()
    }

    /// Product of the layer-block determinants (square blocks only).
    pub fn determinant(&self) -> S {
        let mut det = S::one();
        for j in 1..=self.source.step().max(self.target.step()) {
            let b = self.layer_block(j);
            if b.rows() != b.cols()
                || (b.rows() == 0 && (j <= self.source.step() || j <= self.target.step()))
            {
                return S::zero();
            }
            det = det * b.determinant();
        }
        det
    }

    pub fn to_f64(&self) -> GradedHom<f64> {
        GradedHom {
            source: self.source.clone(),
            target: self.target.clone(),
            matrix: self.matrix.map(Scalar::to_f64),
        }
    }

    /// Largest entry of `Φ[e_a,e_b] − [Φe_a,Φe_b]` over basis pairs.
    pub fn homomorphism_defect(&self) -> f64 {
        self.worst_pair().2
    }

    fn worst_pair(&self) -> (usize, usize, f64) {
        let n = self.source.dim();
        let cols: Vec<Vec<S>> = (0..n).map(|i| self.matrix.column(i)).collect();
        let mut worst = (0, 0, 0.0);
        for a in 0..n {
            for b in a + 1..n {
                let lhs = {
                    let br = self.source.bracket_slice(
                        self.source.basis_vector::<S>(a).coords(),
                        self.source.basis_vector::<S>(b).coords(),
                    );
                    self.matrix.mul_vec(&br)
                };
                let rhs = self.target.bracket_slice(&cols[a], &cols[b]);
                let d = lhs
                    .iter()
                    .zip(&rhs)
                    .map(|(x, y)| {
                        let diff = x.clone() - y.clone();
                        if diff.is_zero() {
                            0.0
                        } else {
                            diff.to_f64().abs().max(f64::MIN_POSITIVE)
                        }
                    })
                    .fold(0.0, f64::max);
                if d > worst.2 {
                    worst = (a, b, d);
                }
            }
        }
        worst
    }

    fn check_graded(&self) -> Result<(), AlgebraError> {
        for r in 0..self.matrix.rows() {
            for c in 0..self.matrix.cols() {
                if self.target.layer_of(r) != self.source.layer_of(c)
                    && !self.matrix[(r, c)].is_zero()
                {
                    return Err(AlgebraError::NotGraded { row: r, col: c });
                }
            }
        }
        Ok(())
    }
}

/// Output of [`decompose_product_automorphism`].
#[derive(Debug, Clone)]
pub struct ProductDecomposition<S> {
    /// `sigma[i]` is the factor that factor `i` is mapped onto.
    pub sigma: Vec<usize>,
    /// `φ_i : G_i → G_{σ(i)}`.
    pub factor_homs: Vec<GradedHom<S>>,
}

impl<S: Scalar> ProductDecomposition<S> {
    /// Reassembles the full matrix on the product.
    pub fn reassemble(&self, product: &CarnotAlgebra) -> Matrix<S> {
        let n = product.dim();
        let mut m = Matrix::zeros(n, n);
        let factors = product.factors();
        for (i, phi) in self.factor_homs.iter().enumerate() {
            let (src, dst) = (&factors[i].indices, &factors[self.sigma[i]].indices);
            for (r, &gr) in dst.iter().enumerate() {
                for (c, &gc) in src.iter().enumerate() {
                    m[(gr, gc)] = phi.matrix()[(r, c)].clone();
                }
            }
        }
        m
    }
}

/// Splits a graded automorphism of a product into a factor permutation and factor maps.
pub fn decompose_product_automorphism<S: Scalar>(
    product: &CarnotAlgebra,
    phi: &GradedHom<S>,
) -> Result<ProductDecomposition<S>, AlgebraError> {
    let factors = product.factors();
    if factors.len() < 2 {
        return Err(AlgebraError::NotAProduct(
            "algebra has no product structure".into(),
        ));
    }
    for (i, f) in factors.iter().enumerate() {
        if f.algebra.is_abelian() {
            return Err(AlgebraError::Unsupported(format!(
                "factor {} is abelian",
                i + 1
            )));
        }
        if !f.indecomposable {
            return Err(AlgebraError::Unsupported(format!(
                "factor {} is not marked indecomposable",
                i + 1
            )));
        }
    }
    if **phi.source() != *product || **phi.target() != *product {
        return Err(AlgebraError::Unsupported(
            "map is not an endomorphism of the product".into(),
        ));
    }
    if !phi.is_invertible() {
        return Err(AlgebraError::NotInvertible);
    }
    phi.check_graded()?;
    let scale = phi.matrix().max_abs().max(1.0);
    let tol = if S::EXACT {
        0.0
    } else {
        FLOAT_HOM_TOL * scale * scale
    };
    let (a, b, defect) = phi.worst_pair();
    if defect > tol {
        return Err(AlgebraError::NotHomomorphism { a, b, defect });
    }
    let m = phi.matrix();
    let block_nonzero = |src: usize, dst: usize| -> bool {
        let sub = m.select(&factors[dst].indices, &factors[src].indices);
        !sub.is_zero() && (S::EXACT || sub.max_abs() > 1e-9 * scale)
    };
    let k = factors.len();
    let mut sigma = Vec::with_capacity(k);
    for i in 0..k {
        let targets: Vec<usize> = (0..k).filter(|&j| block_nonzero(i, j)).collect();
        if targets.len() != 1 {
            return Err(AlgebraError::NotAProduct(format!(
                "factor {} maps into {} factors",
                i + 1,
                targets.len()
            )));
        }
        sigma.push(targets[0]);
    }
    let mut seen = vec![false; k];
    for &s in &sigma {
        if std::mem::replace(&mut seen[s], true) {
            return Err(AlgebraError::NotAProduct(
                "block support is not a permutation".into(),
            ));
        }
    }
    let mut factor_homs = Vec::with_capacity(k);
    for i in 0..k {
        let (src, dst) = (&factors[i], &factors[sigma[i]]);
        let sub = m.select(&dst.indices, &src.indices);
        factor_homs.push(GradedHom::new(
            src.algebra.clone(),
            dst.algebra.clone(),
            sub,
        )?);
    }
    let dec = ProductDecomposition { sigma, factor_homs };
    let back = dec.reassemble(product);
    let residual = back.sub(m).max_abs();
    if (S::EXACT && !back.sub(m).is_zero()) || residual > 1e-9 * scale {
        return Err(AlgebraError::NotAProduct(
            "reassembly does not reproduce the map".into(),
        ));
    }
    Ok(dec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JLinearity {
    Linear,
    Antilinear,
    Neither,
}

/// Compares `φ∘J` with `±J∘φ`.
pub fn classify_j_linearity<S: Scalar>(
    alg: &CarnotAlgebra,
    phi: &GradedHom<S>,
) -> Result<JLinearity, AlgebraError> {
    let j = alg
        .complex_structure()
        .ok_or(AlgebraError::NotComplexified)?;
    let js = j.map(S::from_rational);
    let pj = phi.matrix().mul_mat(&js);
    let jp = js.mul_mat(phi.matrix());
    let close = |a: &Matrix<S>, b: &Matrix<S>| {
        let d = a.sub(b);
        if S::EXACT {
            d.is_zero()
        } else {
            d.max_abs() <= 1e-9 * phi.matrix().max_abs().max(1.0)
        }
    };
    Ok(if close(&pj, &jp) {
        JLinearity::Linear
    } else if close(&pj, &jp.scale(&-S::one())) {
        JLinearity::Antilinear
    } else {
        JLinearity::Neither
    })
}

/// Complex conjugation `e_k ↦ e_k`, `J e_k ↦ −J e_k` on a complexified algebra.
pub fn conjugation(alg: Arc<CarnotAlgebra>) -> Result<GradedHom<Rational>, AlgebraError> {
    if alg.complex_structure().is_none() {
        return Err(AlgebraError::NotComplexified);
    }
    let n = alg.dim();
    let m = Matrix::from_fn(n, n, |r, c| {
        if r != c {
            Rational::zero()
        } else if r % 2 == 0 {
            num_traits::One::one()
        } else {
            -<Rational as num_traits::One>::one()
        }
    });
    GradedHom::new(alg.clone(), alg, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{complexify, direct_product, heisenberg};
    use crate::scalar::rat;

    fn h1() -> Arc<CarnotAlgebra> {
        Arc::new(heisenberg(1))
    }

    #[test]
    fn horizontal_extension_forces_center_entry() {
        let block = Matrix::from_rows(vec![vec![rat(2, 1), rat(0, 1)], vec![rat(0, 1), rat(1, 1)]]);
        let (h, defect) = GradedHom::from_horizontal(h1(), h1(), &block, 0.0).unwrap();
        assert_eq!(defect, 0.0);
        assert_eq!(h.matrix()[(2, 2)], rat(2, 1));
        assert_eq!(h.determinant(), rat(4, 1));
    }

    #[test]
    fn non_symplectic_block_fails_on_h2() {
        let h2 = Arc::new(heisenberg(2));
        let mut block = Matrix::<Rational>::identity(4);
        block[(0, 0)] = rat(2, 1);
        let err = GradedHom::from_horizontal(h2.clone(), h2, &block, 0.0).unwrap_err();
        assert!(matches!(err, AlgebraError::ExtensionFailed(_)));
    }

    #[test]
    fn non_graded_matrix_rejected() {
        let mut m = Matrix::<Rational>::identity(3);
        m[(2, 0)] = rat(1, 1);
        let err = GradedHom::new(h1(), h1(), m).unwrap_err();
        assert_eq!(err, AlgebraError::NotGraded { row: 2, col: 0 });
    }

    #[test]
    fn swap_decomposes_as_transposition() {
        let h = heisenberg(1);
        let p = Arc::new(direct_product(&[(&h, true), (&h, true)]).unwrap());
        let n = p.dim();
        let (a, b) = (&p.factors()[0].indices, &p.factors()[1].indices);
        let mut m = Matrix::<Rational>::zeros(n, n);
        for t in 0..3 {
            m[(b[t], a[t])] = rat(1, 1);
            m[(a[t], b[t])] = rat(1, 1);
        }
        let phi = GradedHom::new(p.clone(), p.clone(), m.clone()).unwrap();
        let dec = decompose_product_automorphism(&p, &phi).unwrap();
        assert_eq!(dec.sigma, vec![1, 0]);
        assert_eq!(dec.factor_homs[0].matrix(), &Matrix::identity(3));
        assert_eq!(dec.reassemble(&p), m);
    }

    #[test]
    fn mixing_block_is_not_a_homomorphism() {
        let h = heisenberg(1);
        let p = Arc::new(direct_product(&[(&h, true), (&h, true)]).unwrap());
        // e1 -> e1 + e1', everything else identity on V_1
        let mut block = Matrix::<Rational>::identity(4);
        block[(2, 0)] = rat(1, 1);
        assert!(GradedHom::from_horizontal(p.clone(), p.clone(), &block, 0.0).is_err());
        let mut m = Matrix::<Rational>::identity(6);
        m[(2, 0)] = rat(1, 1);
        let phi = GradedHom::new_unchecked(p.clone(), p.clone(), m).unwrap();
        assert!(matches!(
            decompose_product_automorphism(&p, &phi),
            Err(AlgebraError::NotHomomorphism { .. })
        ));
    }

    #[test]
    fn unmarked_factors_are_rejected() {
        let h = heisenberg(1);
        let p = Arc::new(direct_product(&[(&h, false), (&h, true)]).unwrap());
        let id = GradedHom::<Rational>::identity(p.clone());
        assert!(matches!(
            decompose_product_automorphism(&p, &id),
            Err(AlgebraError::Unsupported(_))
        ));
    }

    #[test]
    fn conjugation_is_antilinear_and_partial_map_is_neither() {
        let (c, j) = complexify(&heisenberg(1));
        let c = Arc::new(c);
        let conj = conjugation(c.clone()).unwrap();
        assert_eq!(
            classify_j_linearity(&c, &conj).unwrap(),
            JLinearity::Antilinear
        );
        // J-linear on V_1 (identity) but conjugation on V_2
        let mut m = Matrix::<Rational>::identity(6);
        m[(5, 5)] = rat(-1, 1);
        let odd = GradedHom::new_unchecked(c.clone(), c.clone(), m).unwrap();
        assert_eq!(classify_j_linearity(&c, &odd).unwrap(), JLinearity::Neither);
        // J itself is a J-linear automorphism only up to the bracket: J∘J = -id
        assert_eq!(j.mul_mat(&j), Matrix::identity(6).scale(&rat(-1, 1)));
    }
}
