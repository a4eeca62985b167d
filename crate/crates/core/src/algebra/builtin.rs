//! Built-in algebras: Heisenberg, free nilpotent, abelian, products, complexifications.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};

use super::{AlgebraDef, AlgebraError, AlgebraKind, CarnotAlgebra, ProductFactor};
use crate::linalg::Matrix;
use crate::scalar::Rational;

/// Abelian algebra `ℝ^n` (step 1).
pub fn abelian(n: usize) -> CarnotAlgebra {
    let def = AlgebraDef {
        layer_dims: vec![n],
        brackets: Vec::new(),
        inner_product: None,
    };
    let mut alg = CarnotAlgebra::new(&def).expect("abelian algebra is valid");
    alg.set_meta(format!("R{n}"), AlgebraKind::Abelian(n));
    alg
}

/// Heisenberg algebra `H_n`: layers `(2n, 1)`, `[e_{2i-1}, e_{2i}] = e_{2n+1}`.
pub fn heisenberg(n: usize) -> CarnotAlgebra {
    assert!(n >= 1, "H_n needs n >= 1");
    let top = 2 * n;
    let def = AlgebraDef {
        layer_dims: vec![2 * n, 1],
        brackets: (0..n)
            .map(|i| (2 * i, 2 * i + 1, top, Rational::one()))
            .collect(),
        inner_product: None,
    };
    let mut alg = CarnotAlgebra::new(&def).expect("Heisenberg algebra is valid");
    alg.set_meta(format!("H{n}"), AlgebraKind::Heisenberg(n));
    alg
}

type Poly = BTreeMap<Vec<u8>, Rational>;

fn poly_bracket(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (wa, ca) in a {
        for (wb, cb) in b {
            let mut ab = wa.clone();
            ab.extend_from_slice(wb);
            let mut ba = wb.clone();
            ba.extend_from_slice(wa);
            *out.entry(ab).or_insert_with(Rational::zero) += ca * cb;
            *out.entry(ba).or_insert_with(Rational::zero) -= ca * cb;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn is_lyndon(w: &[u8]) -> bool {
    (1..w.len()).all(|i| w < &w[i..])
}

/// Lyndon words over `{0..rank-1}` of length `1..=max_len`, by length then lexicographically.
pub(crate) fn lyndon_words(rank: usize, max_len: usize) -> Vec<Vec<u8>> {
    // Duval's generation in lexicographic order
    let mut out = Vec::new();
    let mut w: Vec<u8> = vec![0];
    loop {
        if w.len() <= max_len {
            out.push(w.clone());
        }
        let m = w.len();
        while w.len() < max_len {
            w.push(w[w.len() - m]);
        }
        while let Some(&last) = w.last() {
            if last as usize == rank - 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            None => break,
            Some(last) => *last += 1,
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    debug_assert!(out.iter().all(|w| is_lyndon(w)));
    out
}

/// Standard bracketing of a Lyndon word as a noncommutative polynomial.
fn lyndon_poly(w: &[u8]) -> Poly {
    if w.len() == 1 {
        return Poly::from([(w.to_vec(), Rational::one())]);
    }
    let split = (1..w.len())
        .find(|&i| is_lyndon(&w[i..]))
        .expect("suffix of length 1 is Lyndon");
    poly_bracket(&lyndon_poly(&w[..split]), &lyndon_poly(&w[split..]))
}

/// Free nilpotent Lie algebra of the given rank and step, in the Lyndon basis.
pub fn free_nilpotent(rank: usize, step: usize) -> Result<CarnotAlgebra, AlgebraError> {
    if rank == 0 || step == 0 {
        return Err(AlgebraError::Unsupported(
            "free algebra needs rank, step >= 1".into(),
        ));
    }
    if step > super::MAX_STEP {
        return Err(AlgebraError::StepTooLarge(step));
    }
    let words = lyndon_words(rank, step);
    let polys: Vec<Poly> = words.iter().map(|w| lyndon_poly(w)).collect();
    let mut layer_dims = vec![0; step];
    for w in &words {
        layer_dims[w.len() - 1] += 1;
    }
    let mut brackets = Vec::new();
    for a in 0..words.len() {
        for b in a + 1..words.len() {
            let len = words[a].len() + words[b].len();
            if len > step {
                continue;
            }
            let target = poly_bracket(&polys[a], &polys[b]);
            if target.is_empty() {
                continue;
            }
            let basis: Vec<usize> = (0..words.len())
                .filter(|&k| words[k].len() == len)
                .collect();
            let mut monos: Vec<&Vec<u8>> = basis.iter().flat_map(|&k| polys[k].keys()).collect();
            monos.sort();
            monos.dedup();
            let m = Matrix::from_fn(monos.len(), basis.len(), |r, c| {
                polys[basis[c]]
                    .get(monos[r])
                    .cloned()
                    .unwrap_or_else(Rational::zero)
            });
            let rhs: Vec<Rational> = monos
                .iter()
                .map(|w| target.get(*w).cloned().unwrap_or_else(Rational::zero))
                .collect();
            let coeffs = m
                .solve(&rhs)
                .expect("Lie polynomial lies in the Lyndon span");
            for (c, k) in coeffs.into_iter().zip(&basis) {
                if !c.is_zero() {
                    brackets.push((a, b, *k, c));
                }
            }
        }
    }
    let def = AlgebraDef {
        layer_dims,
        brackets,
        inner_product: None,
    };
    let mut alg = CarnotAlgebra::new(&def)?;
    alg.set_meta(
        format!("free({rank},{step})"),
        AlgebraKind::Free { rank, step },
    );
    alg.set_lyndon_words(words);
    Ok(alg)
}

/// Direct product; each factor carries a caller-asserted indecomposability flag.
///
/// Layer `j` of the product lists `V_j` of each factor in order.
pub fn direct_product(factors: &[(&CarnotAlgebra, bool)]) -> Result<CarnotAlgebra, AlgebraError> {
    if factors.is_empty() {
        return Err(AlgebraError::Unsupported("empty product".into()));
    }
    let step = factors.iter().map(|(a, _)| a.step()).max().unwrap();
    let mut layer_dims = vec![0; step];
    for (a, _) in factors {
        for (j, d) in a.layer_dims().iter().enumerate() {
            layer_dims[j] += d;
        }
    }
    // global index of each factor basis vector
    let mut maps: Vec<Vec<usize>> = factors.iter().map(|(a, _)| vec![0; a.dim()]).collect();
    let mut next = 0;
    for j in 1..=step {
        for (f, (a, _)) in factors.iter().enumerate() {
            if j <= a.step() {
                for i in a.layer_range(j) {
                    maps[f][i] = next;
                    next += 1;
                }
            }
        }
    }
    let n = next;
    let mut brackets = Vec::new();
    let mut inner: Option<Vec<Vec<Rational>>> = None;
    for (f, (a, _)) in factors.iter().enumerate() {
        for c in a.structure_constants() {
            brackets.push((maps[f][c.i], maps[f][c.j], maps[f][c.k], c.value.clone()));
        }
        if let Some(g) = a.inner_product() {
            let target = inner.get_or_insert_with(|| {
                (0..n)
                    .map(|r| {
                        (0..n)
                            .map(|c| {
                                if r == c {
                                    Rational::one()
                                } else {
                                    Rational::zero()
                                }
                            })
                            .collect()
                    })
                    .collect()
            });
            for r in 0..a.dim() {
                for c in 0..a.dim() {
                    target[maps[f][r]][maps[f][c]] = g[(r, c)].clone();
                }
            }
        }
    }
    let def = AlgebraDef {
        layer_dims,
        brackets,
        inner_product: inner,
    };
    let mut alg = CarnotAlgebra::new(&def)?;
    let name = factors
        .iter()
        .map(|(a, _)| a.name().to_string())
        .collect::<Vec<_>>()
        .join("x");
    let kind = AlgebraKind::Product(factors.iter().map(|(a, _)| a.kind().clone()).collect());
    alg.set_meta(name, kind);
    alg.set_factors(
        factors
            .iter()
            .zip(maps)
            .map(|((a, indec), indices)| ProductFactor {
                algebra: Arc::new((*a).clone()),
                indices,
                indecomposable: *indec,
            })
            .collect(),
    );
    Ok(alg)
}

/// Complexification as a real algebra of dimension `2N`.
///
/// Basis vector `e_k` becomes `2k` and `J e_k` becomes `2k+1`, so layers stay
/// contiguous. Returns the algebra and `J`.
pub fn complexify(alg: &CarnotAlgebra) -> (CarnotAlgebra, Matrix<Rational>) {
    let n = alg.dim();
    let mut brackets = Vec::new();
    for c in alg.structure_constants() {
        let (i, j, k, v) = (c.i, c.j, c.k, &c.value);
        // [e_i, e_j] = v e_k, [Je_i, e_j] = [e_i, Je_j] = v Je_k, [Je_i, Je_j] = -v e_k
        brackets.push((2 * i, 2 * j, 2 * k, v.clone()));
        brackets.push((2 * i + 1, 2 * j, 2 * k + 1, v.clone()));
        brackets.push((2 * i, 2 * j + 1, 2 * k + 1, v.clone()));
        brackets.push((2 * i + 1, 2 * j + 1, 2 * k, -v.clone()));
    }
    let inner = alg.inner_product().map(|g| {
        (0..2 * n)
            .map(|r| {
                (0..2 * n)
                    .map(|c| {
                        if r % 2 == c % 2 {
                            g[(r / 2, c / 2)].clone()
                        } else {
                            Rational::zero()
                        }
                    })
                    .collect()
            })
            .collect()
    });
    let def = AlgebraDef {
        layer_dims: alg.layer_dims().iter().map(|d| 2 * d).collect(),
        brackets,
        inner_product: inner,
    };
    let mut out = CarnotAlgebra::new(&def).expect("complexification of a valid algebra is valid");
    let j = Matrix::from_fn(2 * n, 2 * n, |r, c| {
        if r / 2 != c / 2 {
            Rational::zero()
        } else if r % 2 == 1 && c % 2 == 0 {
            Rational::one()
        } else if r % 2 == 0 && c % 2 == 1 {
            -Rational::one()
        } else {
            Rational::zero()
        }
    });
    out.set_meta(
        format!("{}C", alg.name()),
        AlgebraKind::Complexified(Box::new(alg.kind().clone())),
    );
    out.set_complex_structure(j.clone());
    (out, j)
}

/// Resolves a built-in algebra name.
///
/// Accepted: `H<n>`, `H<n>C`, `R<n>`, `free(<rank>,<step>)`, and products
/// joined by `x`, e.g. `H1xH1`. Nonabelian product factors are marked
/// indecomposable.
pub fn builtin(name: &str) -> Result<CarnotAlgebra, AlgebraError> {
    let name = name.trim();
    let parts: Vec<&str> = name.split(['x', '×']).map(str::trim).collect();
    if parts.len() > 1 {
        let algs = parts
            .iter()
            .map(|p| builtin_single(p))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<(&CarnotAlgebra, bool)> = algs.iter().map(|a| (a, !a.is_abelian())).collect();
        return direct_product(&refs);
    }
    builtin_single(name)
}

fn builtin_single(name: &str) -> Result<CarnotAlgebra, AlgebraError> {
    let unknown = || AlgebraError::Unsupported(format!("unknown built-in algebra '{name}'"));
    if let Some(args) = name.strip_prefix("free(").and_then(|s| s.strip_suffix(')')) {
        let (r, s) = args.split_once(',').ok_or_else(unknown)?;
        let r: usize = r.trim().parse().map_err(|_| unknown())?;
        let s: usize = s.trim().parse().map_err(|_| unknown())?;
        return free_nilpotent(r, s);
    }
    if let Some(rest) = name.strip_prefix('H') {
        let (num, complex) = match rest.strip_suffix('C') {
            Some(n) => (n, true),
            None => (rest, false),
        };
        let n: usize = num.parse().map_err(|_| unknown())?;
        if n == 0 {
            return Err(unknown());
        }
        let h = heisenberg(n);
        return Ok(if complex { complexify(&h).0 } else { h });
    }
    if let Some(num) = name.strip_prefix('R') {
        let n: usize = num.parse().map_err(|_| unknown())?;
        if n == 0 {
            return Err(unknown());
        }
        return Ok(abelian(n));
    }
    Err(unknown())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{AlgebraVector, JLinearity};
    use crate::scalar::rat;

    #[test]
    fn lyndon_counts_match_witt_formula() {
        // Witt: rank 2 gives 2, 1, 2, 3, 6 words of lengths 1..5
        let w = lyndon_words(2, 5);
        let counts: Vec<usize> = (1..=5)
            .map(|l| w.iter().filter(|x| x.len() == l).count())
            .collect();
        assert_eq!(counts, vec![2, 1, 2, 3, 6]);
        let w3 = lyndon_words(3, 3);
        let counts: Vec<usize> = (1..=3)
            .map(|l| w3.iter().filter(|x| x.len() == l).count())
            .collect();
        assert_eq!(counts, vec![3, 3, 8]);
    }

    #[test]
    fn free_algebras_have_expected_layers() {
        assert_eq!(free_nilpotent(2, 2).unwrap().layer_dims(), &[2, 1]);
        assert_eq!(free_nilpotent(2, 3).unwrap().layer_dims(), &[2, 1, 2]);
        assert_eq!(free_nilpotent(2, 4).unwrap().layer_dims(), &[2, 1, 2, 3]);
        assert_eq!(free_nilpotent(3, 2).unwrap().layer_dims(), &[3, 3]);
    }

    #[test]
    fn free_rank_two_step_two_is_heisenberg() {
        assert_eq!(free_nilpotent(2, 2).unwrap(), heisenberg(1));
    }

    #[test]
    fn product_layers_interleave_factors() {
        let h = heisenberg(1);
        let p = direct_product(&[(&h, true), (&h, true)]).unwrap();
        assert_eq!(p.layer_dims(), &[4, 2]);
        assert_eq!(p.factors()[0].indices, vec![0, 1, 4]);
        assert_eq!(p.factors()[1].indices, vec![2, 3, 5]);
        let e = |i| p.basis_vector::<Rational>(i);
        assert_eq!(p.bracket(&e(2), &e(3)).unwrap(), e(5));
        assert!(p.bracket(&e(0), &e(3)).unwrap().is_zero());
    }

    #[test]
    fn complexified_abelian_line() {
        let (c, j) = complexify(&abelian(1));
        assert_eq!(c.layer_dims(), &[2]);
        assert_eq!(
            j,
            Matrix::from_rows(vec![
                vec![rat(0, 1), rat(-1, 1)],
                vec![rat(1, 1), rat(0, 1)]
            ])
        );
    }

    #[test]
    fn complexified_heisenberg_is_bilinear() {
        let (c, j) = complexify(&heisenberg(1));
        assert_eq!(c.layer_dims(), &[4, 2]);
        assert_eq!(j.mul_mat(&j), Matrix::identity(6).scale(&rat(-1, 1)));
        let e1 = c.basis_vector::<Rational>(0);
        let e2 = c.basis_vector::<Rational>(2);
        let je2 = AlgebraVector::new(j.mul_vec(e2.coords()));
        let lhs = c.bracket(&e1, &je2).unwrap();
        let rhs = AlgebraVector::new(j.mul_vec(c.bracket(&e1, &e2).unwrap().coords()));
        assert_eq!(lhs, rhs);
        let id = crate::algebra::GradedHom::<crate::Rational>::identity(Arc::new(c.clone()));
        assert_eq!(
            crate::algebra::classify_j_linearity(&c, &id).unwrap(),
            JLinearity::Linear
        );
    }

    #[test]
    fn builtin_names_resolve() {
        assert_eq!(builtin("H2").unwrap().layer_dims(), &[4, 1]);
        assert_eq!(builtin("H1C").unwrap().layer_dims(), &[4, 2]);
        assert_eq!(builtin("free(2,3)").unwrap().dim(), 5);
        assert_eq!(builtin("H1xH1").unwrap().factors().len(), 2);
        assert!(builtin("Q7").is_err());
    }
}
