//! Seeded sampling of rational graded homomorphisms and automorphisms.

use std::sync::Arc;

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{AlgebraError, AlgebraKind, CarnotAlgebra, GradedHom};
use crate::linalg::Matrix;
use crate::scalar::{rat, Rational};

/// Random rational `p/q` with `|p| <= max_num`, `1 <= q <= max_den`.
pub fn random_rational<R: Rng + ?Sized>(rng: &mut R, max_num: i64, max_den: i64) -> Rational {
    let p = rng.random_range(-max_num..=max_num);
    let q = rng.random_range(1..=max_den);
    rat(p, q)
}

fn random_nonzero<R: Rng + ?Sized>(rng: &mut R, max_num: i64, max_den: i64) -> Rational {
    loop {
        let r = random_rational(rng, max_num, max_den);
        if !r.is_zero() {
            return r;
        }
    }
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix<Rational> {
    Matrix::from_fn(rows, cols, |_, _| random_rational(rng, 3, 3))
}

fn random_invertible<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix<Rational> {
    loop {
        let m = random_matrix(rng, n, n);
        if !m.determinant().is_zero() {
            return m;
        }
    }
}

fn is_free(kind: &AlgebraKind) -> bool {
    matches!(
        kind,
        AlgebraKind::Free { .. } | AlgebraKind::Heisenberg(1) | AlgebraKind::Abelian(_)
    )
}

/// Random graded homomorphism out of a free algebra (any horizontal block extends).
pub fn random_graded_hom<R: Rng + ?Sized>(
    source: Arc<CarnotAlgebra>,
    target: Arc<CarnotAlgebra>,
    rng: &mut R,
) -> Result<GradedHom<Rational>, AlgebraError> {
    if !is_free(source.kind()) {
        return Err(AlgebraError::Unsupported(format!(
            "random homomorphisms need a free source, got {}",
            source.name()
        )));
    }
    let block = random_matrix(rng, target.layer_dims()[0], source.layer_dims()[0]);
    Ok(GradedHom::from_horizontal(source, target, &block, 0.0)?.0)
}

/// Conformal symplectic block for `H_n` in the basis `(e_1, …, e_2n)`.
fn random_csp_block<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix<Rational> {
    let d = 2 * n;
    let omega = Matrix::from_fn(d, d, |r, c| {
        if r / 2 != c / 2 || r == c {
            Rational::zero()
        } else if r % 2 == 0 {
            Rational::one()
        } else {
            -Rational::one()
        }
    });
    let mut m = Matrix::identity(d);
    for _ in 0..d {
        let v: Vec<Rational> = (0..d).map(|_| rat(rng.random_range(-1..=1), 1)).collect();
        let t = random_nonzero(rng, 1, 2);
        let vv = Matrix::from_fn(d, d, |r, c| v[r].clone() * v[c].clone());
        let transvection = Matrix::identity(d).add(&vv.mul_mat(&omega).scale(&t));
        m = transvection.mul_mat(&m);
    }
    if rng.random_bool(0.5) {
        let flip = Matrix::from_fn(d, d, |r, c| {
            if r != c {
                Rational::zero()
            } else if r % 2 == 0 {
                Rational::one()
            } else {
                -Rational::one()
            }
        });
        m = m.mul_mat(&flip);
    }
    m.scale(&random_nonzero(rng, 3, 2))
}

fn random_horizontal_block<R: Rng + ?Sized>(
    kind: &AlgebraKind,
    d1: usize,
    rng: &mut R,
) -> Option<Matrix<Rational>> {
    match kind {
        AlgebraKind::Abelian(_) | AlgebraKind::Free { .. } => Some(random_invertible(rng, d1)),
        AlgebraKind::Heisenberg(n) => Some(random_csp_block(rng, *n)),
        AlgebraKind::Complexified(base) => {
            let real = random_horizontal_block(base, d1 / 2, rng)?;
            // complexified real block, times a complex scalar a + ib
            let a = random_rational(rng, 2, 2);
            let b = loop {
                let b = random_rational(rng, 2, 2);
                if !(a.is_zero() && b.is_zero()) {
                    break b;
                }
            };
            let m = Matrix::from_fn(d1, d1, |r, c| {
                let base = real[(r / 2, c / 2)].clone();
                match (r % 2, c % 2) {
                    (0, 0) | (1, 1) => base * a.clone(),
                    (1, 0) => base * b.clone(),
                    _ => -(base * b.clone()),
                }
            });
            if rng.random_bool(0.5) {
                let conj = Matrix::from_fn(d1, d1, |r, c| {
                    if r != c {
                        Rational::zero()
                    } else if r % 2 == 0 {
                        Rational::one()
                    } else {
                        -Rational::one()
                    }
                });
                Some(m.mul_mat(&conj))
            } else {
                Some(m)
            }
        }
        AlgebraKind::Product(_) | AlgebraKind::Custom => None,
    }
}

/// Random graded automorphism.
///
/// Products get independent factor automorphisms composed with a uniformly
/// random permutation of identical factors. Unknown families fall back to a
/// random dilation.
pub fn random_graded_automorphism<R: Rng + ?Sized>(
    alg: Arc<CarnotAlgebra>,
    rng: &mut R,
) -> Result<GradedHom<Rational>, AlgebraError> {
    if !alg.factors().is_empty() {
        let k = alg.factors().len();
        let mut sigma: Vec<usize> = (0..k).collect();
        // shuffle within classes of identical factors
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for i in 0..k {
            match classes
                .iter_mut()
                .find(|c| *alg.factors()[c[0]].algebra == *alg.factors()[i].algebra)
            {
                Some(c) => c.push(i),
                None => classes.push(vec![i]),
            }
        }
        for class in &classes {
            let mut shuffled = class.clone();
            shuffled.shuffle(rng);
            for (src, dst) in class.iter().zip(shuffled) {
                sigma[*src] = dst;
            }
        }
        return random_product_automorphism(alg, &sigma, rng);
    }
    let d1 = alg.layer_dims()[0];
    match random_horizontal_block(alg.kind(), d1, rng) {
        Some(block) => Ok(GradedHom::from_horizontal(alg.clone(), alg, &block, 0.0)?.0),
        None => {
            let r = loop {
                let r = random_rational(rng, 3, 2);
                if r > Rational::zero() {
                    break r;
                }
            };
            GradedHom::dilation(alg, &r)
        }
    }
}

/// Product automorphism sending factor `i` onto factor `sigma[i]` by random factor maps.
pub fn random_product_automorphism<R: Rng + ?Sized>(
    alg: Arc<CarnotAlgebra>,
    sigma: &[usize],
    rng: &mut R,
) -> Result<GradedHom<Rational>, AlgebraError> {
    let factors = alg.factors();
    if sigma.len() != factors.len() {
        return Err(AlgebraError::NotAProduct(
            "permutation length differs from factor count".into(),
        ));
    }
    let n = alg.dim();
    let mut m = Matrix::zeros(n, n);
    for (i, &s) in sigma.iter().enumerate() {
        if *factors[i].algebra != *factors[s].algebra {
            return Err(AlgebraError::Unsupported(
                "permutation mixes non-identical factors".into(),
            ));
        }
        let phi = random_graded_automorphism(factors[i].algebra.clone(), rng)?;
        for (r, &gr) in factors[s].indices.iter().enumerate() {
            for (c, &gc) in factors[i].indices.iter().enumerate() {
                m[(gr, gc)] = phi.matrix()[(r, c)].clone();
            }
        }
    }
    GradedHom::new(alg.clone(), alg, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{builtin, classify_j_linearity, JLinearity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_automorphisms_are_invertible_homomorphisms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in [
            "H1",
            "H2",
            "free(2,3)",
            "H1xH1",
            "H2xH2",
            "H1C",
            "free(2,4)",
        ] {
            let alg = Arc::new(builtin(name).unwrap());
            for _ in 0..5 {
                let phi = random_graded_automorphism(alg.clone(), &mut rng).unwrap();
                assert!(phi.is_invertible(), "{name}");
                assert_eq!(phi.homomorphism_defect(), 0.0, "{name}");
            }
        }
    }

    #[test]
    fn complexified_samples_are_linear_or_antilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alg = Arc::new(builtin("H1C").unwrap());
        for _ in 0..10 {
            let phi = random_graded_automorphism(alg.clone(), &mut rng).unwrap();
            assert_ne!(
                classify_j_linearity(&alg, &phi).unwrap(),
                JLinearity::Neither
            );
        }
    }

    #[test]
    fn homs_into_h2_extend() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h1 = Arc::new(builtin("H1").unwrap());
        let h2 = Arc::new(builtin("H2").unwrap());
        for _ in 0..5 {
            let phi = random_graded_hom(h1.clone(), h2.clone(), &mut rng).unwrap();
            assert_eq!(phi.homomorphism_defect(), 0.0);
        }
    }
}
