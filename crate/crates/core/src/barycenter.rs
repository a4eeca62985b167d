//! Center of mass of discrete probability measures on a Carnot group.

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{AlgebraError, AlgebraVector, CarnotAlgebra, GradedHom};
use crate::bch::GroupPoint;
use crate::scalar::Scalar;

/// Tolerance on `Σ w = 1` for float weights.
pub const FLOAT_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("measure has empty support")]
    Empty,
    #[error("{points} support points but {weights} weights")]
    LengthMismatch { points: usize, weights: usize },
    #[error("weight {index} is not positive")]
    NonPositiveWeight { index: usize },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("support point {index} has dimension {found}, expected {expected}")]
    PointDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<S> {
    support: Vec<GroupPoint<S>>,
    weights: Vec<S>,
}

impl<S: Scalar> DiscreteMeasure<S> {
    /// Checks positivity, matching lengths, common dimension and unit mass.
    pub fn new(support: Vec<GroupPoint<S>>, weights: Vec<S>) -> Result<Self, MeasureError> {
        if support.is_empty() {
            return Err(MeasureError::Empty);
        }
        if support.len() != weights.len() {
            return Err(MeasureError::LengthMismatch {
                points: support.len(),
                weights: weights.len(),
            });
        }
        let n = support[0].dim();
        for (index, p) in support.iter().enumerate() {
            if p.dim() != n {
                return Err(MeasureError::PointDimension {
                    index,
                    expected: n,
                    found: p.dim(),
                });
            }
        }
        for (index, w) in weights.iter().enumerate() {
            if *w <= S::zero() {
                return Err(MeasureError::NonPositiveWeight { index });
            }
        }
        let total = pairwise_sum_scalars(&weights);
        let defect = total.clone() - S::one();
        let ok = if S::EXACT {
            defect.is_zero()
        } else {
            defect.to_f64().abs() <= FLOAT_WEIGHT_TOL
        };
        if !ok {
            return Err(MeasureError::WeightSum(total.to_f64()));
        }
        Ok(DiscreteMeasure { support, weights })
    }

    /// Rescales positive raw weights to unit mass.
    pub fn normalized(support: Vec<GroupPoint<S>>, raw: Vec<S>) -> Result<Self, MeasureError> {
        if raw.is_empty() {
            return Err(MeasureError::Empty);
        }
        let total = pairwise_sum_scalars(&raw);
        if total <= S::zero() {
            return Err(MeasureError::WeightSum(total.to_f64()));
        }
        let weights = raw.into_iter().map(|w| w / total.clone()).collect();
        if S::EXACT {
            Self::new(support, weights)
        } else {
            // rounding in the division can leave the sum a few ulps from one
            let m = Self::new_unchecked_sum(support, weights)?;
            Ok(m)
        }
    }

    fn new_unchecked_sum(
        support: Vec<GroupPoint<S>>,
        weights: Vec<S>,
    ) -> Result<Self, MeasureError> {
        match Self::new(support.clone(), weights.clone()) {
            Err(MeasureError::WeightSum(_)) => Ok(DiscreteMeasure { support, weights }),
            other => other,
        }
    }

    /// Equal weights on the given points.
    pub fn uniform(support: Vec<GroupPoint<S>>) -> Result<Self, MeasureError> {
        let n = support.len();
        Self::normalized(support, vec![S::one(); n])
    }

    pub fn dirac(x: GroupPoint<S>) -> Self {
        DiscreteMeasure {
            support: vec![x],
            weights: vec![S::one()],
        }
    }

    pub fn support(&self) -> &[GroupPoint<S>] {
        &self.support
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    /// Push-forward by a point map; weights are unchanged.
    pub fn push_forward(&self, f: impl Fn(&GroupPoint<S>) -> GroupPoint<S>) -> Self {
        DiscreteMeasure {
            support: self.support.iter().map(f).collect(),
            weights: self.weights.clone(),
        }
    }

    /// `(ℓ_z)_* ν`.
    pub fn translate(&self, alg: &CarnotAlgebra, z: &GroupPoint<S>) -> Result<Self, AlgebraError> {
        alg.check(z.log())?;
        self.check_dim(alg)?;
        Ok(self.push_forward(|x| GroupPoint::from_coords(alg.bch_slice(z.coords(), x.coords()))))
    }

    /// `I_* ν` for the inversion `x ↦ x⁻¹`.
    pub fn invert(&self) -> Self {
        self.push_forward(|x| GroupPoint::exp(x.log().neg()))
    }

    /// `(exp∘Φ∘log)_* ν`.
    pub fn push_hom(&self, phi: &GradedHom<S>) -> Result<Self, AlgebraError> {
        self.check_dim(phi.source())?;
        let support = self
            .support
            .iter()
            .map(|x| phi.apply(x.log()).map(GroupPoint::exp))
            .collect::<Result<_, _>>()?;
        Ok(DiscreteMeasure {
            support,
            weights: self.weights.clone(),
        })
    }

    /// Combines repeated support points, keeping first-occurrence order.
    pub fn merge_duplicates(&self) -> Self {
        let mut support: Vec<GroupPoint<S>> = Vec::new();
        let mut weights: Vec<S> = Vec::new();
        for (x, w) in self.support.iter().zip(&self.weights) {
            match support.iter().position(|y| y == x) {
                Some(i) => weights[i] = weights[i].clone() + w.clone(),
                None => {
                    support.push(x.clone());
                    weights.push(w.clone());
                }
            }
        }
        DiscreteMeasure { support, weights }
    }

    fn check_dim(&self, alg: &CarnotAlgebra) -> Result<(), AlgebraError> {
        if self.dim() != alg.dim() {
            return Err(AlgebraError::DimensionMismatch {
                expected: alg.dim(),
                found: self.dim(),
            });
        }
        Ok(())
    }

    pub fn to_f64(&self) -> DiscreteMeasure<f64> {
        DiscreteMeasure {
            support: self.support.iter().map(GroupPoint::to_f64).collect(),
            weights: self.weights.iter().map(Scalar::to_f64).collect(),
        }
    }
}

fn pairwise_sum_scalars<S: Scalar>(v: &[S]) -> S {
    match v.len() {
        0 => S::zero(),
        1 => v[0].clone(),
        n => pairwise_sum_scalars(&v[..n / 2]) + pairwise_sum_scalars(&v[n / 2..]),
    }
}

/// Below this many terms, sums run on the calling thread.
const PARALLEL_MIN: usize = 512;

/// Sum of vectors by a balanced binary tree over the input order.
pub fn pairwise_sum<S: Scalar>(vs: &[Vec<S>], dim: usize) -> Vec<S> {
    match vs.len() {
        0 => vec![S::zero(); dim],
        1 => vs[0].clone(),
        n => {
            let (a, b) = if n >= PARALLEL_MIN {
                rayon::join(
                    || pairwise_sum(&vs[..n / 2], dim),
                    || pairwise_sum(&vs[n / 2..], dim),
                )
            } else {
                (
                    pairwise_sum(&vs[..n / 2], dim),
                    pairwise_sum(&vs[n / 2..], dim),
                )
            };
            a.into_iter().zip(b).map(|(x, y)| x + y).collect()
        }
    }
}

/// `Σ_k w_k f(x_k)` with a parallel map and a fixed reduction tree.
fn weighted_sum<S: Scalar>(
    measure: &DiscreteMeasure<S>,
    dim: usize,
    f: impl Fn(&GroupPoint<S>) -> Vec<S> + Sync,
) -> Vec<S> {
    let term = |(x, w): (&GroupPoint<S>, &S)| -> Vec<S> {
        f(x).into_iter().map(|v| v * w.clone()).collect()
    };
    let terms: Vec<Vec<S>> = if measure.len() >= PARALLEL_MIN {
        measure
            .support
            .par_iter()
            .zip(measure.weights.par_iter())
            .map(term)
            .collect()
    } else {
        measure
            .support
            .iter()
            .zip(measure.weights.iter())
            .map(term)
            .collect()
    };
    pairwise_sum(&terms, dim)
}

/// `Σ_k w_k d(base, x_k)^p` with the homogeneous quasi-distance.
pub fn moment<S: Scalar>(
    alg: &CarnotAlgebra,
    measure: &DiscreteMeasure<S>,
    p: f64,
    base: &GroupPoint<S>,
) -> Result<f64, AlgebraError> {
    if p <= 0.0 {
        return Err(AlgebraError::Unsupported(format!(
            "moment order must be positive, got {p}"
        )));
    }
    alg.check(base.log())?;
    measure.check_dim(alg)?;
    let terms: Vec<Vec<f64>> = measure
        .support
        .iter()
        .zip(&measure.weights)
        .map(|(x, w)| {
            let v = alg.log_based_slice(base.coords(), x.coords());
            let d = alg.homogeneous_norm_f64(&v.iter().map(Scalar::to_f64).collect::<Vec<_>>());
            vec![w.to_f64() * d.powf(p)]
        })
        .collect();
    Ok(pairwise_sum(&terms, 1)[0])
}

/// `C_ν(x) = Σ_k w_k log(x⁻¹ x_k)`.
pub fn c_map<S: Scalar>(
    alg: &CarnotAlgebra,
    measure: &DiscreteMeasure<S>,
    x: &GroupPoint<S>,
) -> Result<AlgebraVector<S>, AlgebraError> {
    alg.check(x.log())?;
    measure.check_dim(alg)?;
    Ok(AlgebraVector::new(weighted_sum(measure, alg.dim(), |y| {
        alg.log_based_slice(x.coords(), y.coords())
    })))
}

/// Center of mass `C_ν^{-1}(0)`, solved layer by layer.
///
/// Layer `i` of `log com` is `Σ_k w_k (Y_k^i + P^i(-X̄, Y_k))`, where `P^i` only
/// sees the layers of `X̄` below `i`.
pub fn com<S: Scalar>(
    alg: &CarnotAlgebra,
    measure: &DiscreteMeasure<S>,
) -> Result<GroupPoint<S>, AlgebraError> {
    measure.check_dim(alg)?;
    let n = alg.dim();
    let mut xbar = vec![S::zero(); n];
    for i in 1..=alg.step() {
        let range = alg.layer_range(i);
        let neg: Vec<S> = xbar.iter().map(|v| -v.clone()).collect();
        let layer = if i == 1 {
            weighted_sum(measure, n, |y| y.coords().to_vec())
        } else {
            weighted_sum(measure, n, |y| {
                let mut p = alg.bch_p_slice(&neg, y.coords());
                for r in range.clone() {
                    p[r] = p[r].clone() + y.coords()[r].clone();
                }
                p
            })
        };
        for r in range {
            xbar[r] = layer[r].clone();
        }
    }
    Ok(GroupPoint::from_coords(xbar))
}

/// Residuals of the three equivariance laws.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceReport {
    /// `com((ℓ_z)_*ν)` against `z·com(ν)`.
    pub translation: f64,
    /// `com(I_*ν)` against `com(ν)⁻¹`.
    pub inversion: f64,
    /// `com(Φ_*ν)` against `Φ(com ν)`.
    pub homomorphism: f64,
}

impl EquivarianceReport {
    pub fn max_residual(&self) -> f64 {
        self.translation.max(self.inversion).max(self.homomorphism)
    }
}

/// Checks translation, inversion and homomorphism equivariance of `com`.
pub fn verify_equivariance<S: Scalar>(
    alg: &CarnotAlgebra,
    measure: &DiscreteMeasure<S>,
    z: &GroupPoint<S>,
    phi: &GradedHom<S>,
) -> Result<EquivarianceReport, AlgebraError> {
    if **phi.source() != *alg {
        return Err(AlgebraError::Unsupported(
            "homomorphism source differs from the algebra".into(),
        ));
    }
    let c = com(alg, measure)?;
    let diff = |a: &GroupPoint<S>, b: &GroupPoint<S>| a.log().sub(b.log()).max_abs();

    let translated = com(alg, &measure.translate(alg, z)?)?;
    let translation = diff(&translated, &alg.mul(z, &c)?);

    let inverted = com(alg, &measure.invert())?;
    let inversion = diff(&inverted, &alg.inv(&c)?);

    let pushed = com(phi.target(), &measure.push_hom(phi)?)?;
    let homomorphism = diff(&pushed, &GroupPoint::exp(phi.apply(c.log())?));

    Ok(EquivarianceReport {
        translation,
        inversion,
        homomorphism,
    })
}

/// Moment of `log_* ν` against a coordinate monomial.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialMoment<S> {
    /// Exponent of each coordinate.
    pub exponents: Vec<u32>,
    /// `Σ_j exponents[j] · layer(j)`.
    pub weighted_degree: usize,
    pub value: S,
    /// `C` with `|Y^α| ≤ C |Y|^{weighted_degree}`.
    pub bound_constant: f64,
}

/// Linear layer means and polynomial moments of `log_* ν` up to weighted degree `m-1`.
///
/// `log com(ν)` is a polynomial in these numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet<S> {
    pub layer_means: Vec<Vec<S>>,
    pub monomials: Vec<MonomialMoment<S>>,
}

impl<S: Scalar> MomentSet<S> {
    /// Whether `|A| ≤ C (1 + M_m)` holds for every monomial moment, given the
    /// `m`-th moment `M_m` about the identity.
    pub fn satisfies_bounds(&self, mth_moment: f64) -> bool {
        self.monomials.iter().all(|a| {
            let v = a.value.to_f64();
            v.is_finite() && v.abs() <= a.bound_constant * (1.0 + mth_moment) * (1.0 + 1e-12)
        })
    }
}

fn exponent_vectors(layers: &[usize], max_deg: usize) -> Vec<Vec<u32>> {
    fn rec(layers: &[usize], i: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == layers.len() {
            out.push(cur.clone());
            return;
        }
        let mut e = 0;
        while e * layers[i] <= left {
            cur.push(e as u32);
            rec(layers, i + 1, left - e * layers[i], cur, out);
            cur.pop();
            e += 1;
        }
    }
    let mut out = Vec::new();
    rec(layers, 0, max_deg, &mut Vec::new(), &mut out);
    out
}

pub fn moment_set<S: Scalar>(
    alg: &CarnotAlgebra,
    measure: &DiscreteMeasure<S>,
) -> Result<MomentSet<S>, AlgebraError> {
    measure.check_dim(alg)?;
    let n = alg.dim();
    let means = weighted_sum(measure, n, |y| y.coords().to_vec());
    let layer_means = (1..=alg.step())
        .map(|j| means[alg.layer_range(j)].to_vec())
        .collect();
    let layers: Vec<usize> = (0..n).map(|i| alg.layer_of(i)).collect();
    let bounds = alg.unit_ball_box();
    let max_deg = alg.step().saturating_sub(1);
    let mut monomials = Vec::new();
    for exps in exponent_vectors(&layers, max_deg) {
        let degree: usize = exps.iter().map(|&e| e as usize).sum();
        if degree < 2 {
            continue;
        }
        let weighted_degree = exps
            .iter()
            .zip(&layers)
            .map(|(&e, &l)| e as usize * l)
            .sum();
        let value = weighted_sum(measure, 1, |y| {
            vec![y
                .coords()
                .iter()
                .zip(&exps)
                .fold(S::one(), |acc, (c, &e)| acc * c.powi(e))]
        })
        .remove(0);
        let bound_constant = bounds
            .iter()
            .zip(&exps)
            .map(|(b, &e)| f64::powi(*b, e as i32))
            .product();
        monomials.push(MonomialMoment {
            exponents: exps,
            weighted_degree,
            value,
            bound_constant,
        });
    }
    Ok(MomentSet {
        layer_means,
        monomials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::builtin;
    use crate::scalar::{rat, Rational};

    fn pt(c: &[i64]) -> GroupPoint<Rational> {
        GroupPoint::from_coords(c.iter().map(|&v| rat(v, 1)).collect())
    }

    #[test]
    fn heisenberg_midpoint() {
        let h = builtin("H1").unwrap();
        let nu = DiscreteMeasure::uniform(vec![pt(&[1, 0, 0]), pt(&[0, 1, 0])]).unwrap();
        let c = com(&h, &nu).unwrap();
        assert_eq!(c.coords(), &[rat(1, 2), rat(1, 2), rat(0, 1)]);
        assert!(c_map(&h, &nu, &c).unwrap().is_zero());
    }

    #[test]
    fn dirac_mass_is_its_own_center() {
        let f = builtin("free(2,3)").unwrap();
        let x = pt(&[1, -2, 3, 1, 2]);
        assert_eq!(com(&f, &DiscreteMeasure::dirac(x.clone())).unwrap(), x);
    }

    #[test]
    fn second_moment_of_center_point() {
        let h = builtin("H1").unwrap();
        let nu = DiscreteMeasure::uniform(vec![pt(&[0, 0, 0]), pt(&[0, 0, 1])]).unwrap();
        let m = moment(&h, &nu, 2.0, &pt(&[0, 0, 0])).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!(moment(&h, &nu, 0.0, &pt(&[0, 0, 0])).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let x = pt(&[0, 0, 0]);
        assert_eq!(
            DiscreteMeasure::new(vec![x.clone()], vec![rat(1, 2)]),
            Err(MeasureError::WeightSum(0.5))
        );
        assert_eq!(
            DiscreteMeasure::new(vec![x.clone(), x.clone()], vec![rat(3, 2), rat(-1, 2)]),
            Err(MeasureError::NonPositiveWeight { index: 1 })
        );
        assert_eq!(
            DiscreteMeasure::<Rational>::new(vec![], vec![]),
            Err(MeasureError::Empty)
        );
    }

    #[test]
    fn step_three_residual_vanishes() {
        let f = builtin("free(2,3)").unwrap();
        let nu = DiscreteMeasure::new(
            vec![
                pt(&[1, 0, 2, 0, 1]),
                pt(&[0, 1, -1, 3, 0]),
                pt(&[-1, 2, 0, 0, 1]),
            ],
            vec![rat(1, 2), rat(1, 3), rat(1, 6)],
        )
        .unwrap();
        let c = com(&f, &nu).unwrap();
        assert!(c_map(&f, &nu, &c).unwrap().is_zero());
    }

    #[test]
    fn moments_respect_bounds() {
        let f = builtin("free(2,4)").unwrap();
        let nu = DiscreteMeasure::uniform(vec![
            pt(&[1, 0, 2, 0, 1, 0, 1, 2]),
            pt(&[3, 1, -1, 3, 0, 2, 0, 0]),
        ])
        .unwrap();
        let ms = moment_set(&f, &nu).unwrap();
        assert_eq!(ms.layer_means.len(), 4);
        assert!(ms.monomials.iter().all(|a| a.weighted_degree <= 3));
        let m4 = moment(&f, &nu, 4.0, &GroupPoint::identity(8)).unwrap();
        assert!(ms.satisfies_bounds(m4));
    }
}
