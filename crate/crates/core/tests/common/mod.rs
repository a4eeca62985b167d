//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use carnot_core::algebra::random_rational;
use carnot_core::{AlgebraVector, CarnotAlgebra, GroupPoint, Rational};
use num_traits::{One, Zero};
use rand::Rng;

pub fn random_point<R: Rng>(alg: &CarnotAlgebra, rng: &mut R) -> GroupPoint<Rational> {
    GroupPoint::from_coords((0..alg.dim()).map(|_| random_rational(rng, 5, 4)).collect())
}

pub fn random_point_f64<R: Rng>(alg: &CarnotAlgebra, rng: &mut R) -> GroupPoint<f64> {
    GroupPoint::from_coords(
        (0..alg.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

/// Square matrices over the rationals, just enough for unipotent exp/log.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat(pub Vec<Vec<Rational>>);

impl Mat {
    pub fn zero(n: usize) -> Self {
        Mat(vec![vec![Rational::zero(); n]; n])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.0[i][i] = Rational::one();
        }
        m
    }

    fn n(&self) -> usize {
        self.0.len()
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        let n = self.n();
        let mut out = Self::zero(n);
        for i in 0..n {
            for k in 0..n {
                if self.0[i][k].is_zero() {
                    continue;
                }
                for j in 0..n {
                    out.0[i][j] += &self.0[i][k] * &o.0[k][j];
                }
            }
        }
        out
    }

    pub fn add(&self, o: &Mat) -> Mat {
        Mat(self
            .0
            .iter()
            .zip(&o.0)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect())
    }

    pub fn scale(&self, s: &Rational) -> Mat {
        Mat(self
            .0
            .iter()
            .map(|r| r.iter().map(|x| x * s).collect())
            .collect())
    }

    /// `exp` of a nilpotent matrix.
    pub fn exp_nil(&self) -> Mat {
        let n = self.n();
        let mut out = Self::identity(n);
        let mut term = Self::identity(n);
        for k in 1..=n {
            term = term
                .mul(self)
                .scale(&Rational::new(1.into(), (k as i64).into()));
            out = out.add(&term);
        }
        out
    }

    /// `log` of a unipotent matrix.
    pub fn log_unipotent(&self) -> Mat {
        let n = self.n();
        let m = self.add(&Self::identity(n).scale(&Rational::from_integer((-1).into())));
        let mut out = Self::zero(n);
        let mut pw = Self::identity(n);
        for k in 1..=n {
            pw = pw.mul(&m);
            let sign = if k % 2 == 1 { 1 } else { -1 };
            out = out.add(&pw.scale(&Rational::new(sign.into(), (k as i64).into())));
        }
        out
    }
}

/// Faithful nilpotent matrices for `H_n`: `(x, y, t) ↦ [[0, x^T, t], [0, 0, y], [0, 0, 0]]`.
pub fn heisenberg_matrix(n: usize, v: &[Rational]) -> Mat {
    let size = n + 2;
    let mut m = Mat::zero(size);
    for i in 0..n {
        m.0[0][1 + i] = v[2 * i].clone();
        m.0[1 + i][size - 1] = v[2 * i + 1].clone();
    }
    m.0[0][size - 1] = v[2 * n].clone();
    m
}

pub fn heisenberg_coords(n: usize, m: &Mat) -> Vec<Rational> {
    let size = n + 2;
    let mut v = vec![Rational::zero(); 2 * n + 1];
    for i in 0..n {
        v[2 * i] = m.0[0][1 + i].clone();
        v[2 * i + 1] = m.0[1 + i][size - 1].clone();
    }
    v[2 * n] = m.0[0][size - 1].clone();
    v
}

/// Product through the matrix representation.
pub fn heisenberg_oracle_mul(n: usize, x: &[Rational], y: &[Rational]) -> Vec<Rational> {
    let g = heisenberg_matrix(n, x)
        .exp_nil()
        .mul(&heisenberg_matrix(n, y).exp_nil());
    heisenberg_coords(n, &g.log_unipotent())
}

/// Truncated tensor algebra over `rank` letters, words of length at most `depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor(pub BTreeMap<Vec<u8>, Rational>);

impl Tensor {
    pub fn zero() -> Self {
        Tensor(BTreeMap::new())
    }

    pub fn one() -> Self {
        Tensor(BTreeMap::from([(Vec::new(), Rational::one())]))
    }

    pub fn letter(a: u8) -> Self {
        Tensor(BTreeMap::from([(vec![a], Rational::one())]))
    }

    pub fn add(&self, o: &Tensor) -> Tensor {
        let mut out = self.0.clone();
        for (w, c) in &o.0 {
            *out.entry(w.clone()).or_insert_with(Rational::zero) += c;
        }
        out.retain(|_, c| !c.is_zero());
        Tensor(out)
    }

    pub fn scale(&self, s: &Rational) -> Tensor {
        let mut out: BTreeMap<_, _> = self.0.iter().map(|(w, c)| (w.clone(), c * s)).collect();
        out.retain(|_, c: &mut Rational| !c.is_zero());
        Tensor(out)
    }

    pub fn mul(&self, o: &Tensor, depth: usize) -> Tensor {
        let mut out = BTreeMap::new();
        for (a, ca) in &self.0 {
            for (b, cb) in &o.0 {
                if a.len() + b.len() > depth {
                    continue;
                }
                let mut w = a.clone();
                w.extend_from_slice(b);
                *out.entry(w).or_insert_with(Rational::zero) += ca * cb;
            }
        }
        out.retain(|_, c: &mut Rational| !c.is_zero());
        Tensor(out)
    }

    pub fn bracket(&self, o: &Tensor, depth: usize) -> Tensor {
        self.mul(o, depth).add(
            &o.mul(self, depth)
                .scale(&Rational::from_integer((-1).into())),
        )
    }

    pub fn exp(&self, depth: usize) -> Tensor {
        let mut out = Tensor::one();
        let mut term = Tensor::one();
        for k in 1..=depth {
            term = term
                .mul(self, depth)
                .scale(&Rational::new(1.into(), (k as i64).into()));
            out = out.add(&term);
        }
        out
    }

    /// `log` of an element with constant term 1.
    pub fn log(&self, depth: usize) -> Tensor {
        let m = self.add(&Tensor::one().scale(&Rational::from_integer((-1).into())));
        let mut out = Tensor::zero();
        let mut pw = Tensor::one();
        for k in 1..=depth {
            pw = pw.mul(&m, depth);
            let sign = if k % 2 == 1 { 1 } else { -1 };
            out = out.add(&pw.scale(&Rational::new(sign.into(), (k as i64).into())));
        }
        out
    }
}

/// Embedding of a free nilpotent algebra into its truncated tensor algebra.
///
/// Layer-one basis vectors go to letters; higher layers are solved for from the
/// structure constants, and the embedding is then checked to be a Lie homomorphism.
pub struct FreeEmbedding {
    pub alg: Arc<CarnotAlgebra>,
    pub depth: usize,
    pub images: Vec<Tensor>,
}

impl FreeEmbedding {
    pub fn new(alg: Arc<CarnotAlgebra>) -> Self {
        let depth = alg.step();
        let n = alg.dim();
        let mut images: Vec<Option<Tensor>> = vec![None; n];
        for i in alg.layer_range(1) {
            images[i] = Some(Tensor::letter(i as u8));
        }
        for j in 2..=depth {
            let target: Vec<usize> = alg.layer_range(j).collect();
            let mut rows: Vec<Vec<Rational>> = Vec::new();
            let mut rhs: Vec<Tensor> = Vec::new();
            for a in alg.layer_range(1) {
                for b in alg.layer_range(j - 1) {
                    let c = alg
                        .bracket(&alg.basis_vector::<Rational>(a), &alg.basis_vector(b))
                        .unwrap();
                    rows.push(target.iter().map(|&l| c.coords()[l].clone()).collect());
                    let ia = images[a].as_ref().unwrap();
                    let ib = images[b].as_ref().unwrap();
                    rhs.push(ia.bracket(ib, depth));
                }
            }
            let solved = solve_tensor_system(&rows, &rhs, target.len());
            for (l, t) in target.iter().zip(solved) {
                images[*l] = Some(t);
            }
        }
        let images: Vec<Tensor> = images.into_iter().map(Option::unwrap).collect();
        let emb = FreeEmbedding { alg, depth, images };
        emb.assert_lie_hom();
        emb
    }

    pub fn embed(&self, v: &[Rational]) -> Tensor {
        let mut out = Tensor::zero();
        for (c, t) in v.iter().zip(&self.images) {
            if !c.is_zero() {
                out = out.add(&t.scale(c));
            }
        }
        out
    }

    /// Coordinates of a Lie element in the image.
    pub fn coords(&self, t: &Tensor) -> Vec<Rational> {
        let words: Vec<Vec<u8>> = {
            let mut w: Vec<Vec<u8>> = self
                .images
                .iter()
                .flat_map(|t| t.0.keys().cloned())
                .collect();
            w.extend(t.0.keys().cloned());
            w.sort();
            w.dedup();
            w
        };
        let rows: Vec<Vec<Rational>> = words
            .iter()
            .map(|w| {
                self.images
                    .iter()
                    .map(|im| im.0.get(w).cloned().unwrap_or_else(Rational::zero))
                    .collect()
            })
            .collect();
        let b: Vec<Rational> = words
            .iter()
            .map(|w| t.0.get(w).cloned().unwrap_or_else(Rational::zero))
            .collect();
        solve_exact(&rows, &b, self.images.len()).expect("element lies in the embedded Lie algebra")
    }

    fn assert_lie_hom(&self) {
        let n = self.alg.dim();
        for a in 0..n {
            for b in 0..n {
                let c = self
                    .alg
                    .bracket(
                        &self.alg.basis_vector::<Rational>(a),
                        &self.alg.basis_vector(b),
                    )
                    .unwrap();
                let lhs = self.embed(c.coords());
                let rhs = self.images[a].bracket(&self.images[b], self.depth);
                assert_eq!(
                    lhs, rhs,
                    "embedding is not a Lie homomorphism at ({a}, {b})"
                );
            }
        }
    }

    /// Product through the tensor-algebra representation.
    pub fn oracle_mul(&self, x: &[Rational], y: &[Rational]) -> Vec<Rational> {
        let d = self.depth;
        let g = self.embed(x).exp(d).mul(&self.embed(y).exp(d), d);
        self.coords(&g.log(d))
    }
}

/// Least-squares-free exact solve of an overdetermined consistent system `A x = b`.
pub fn solve_exact(a: &[Vec<Rational>], b: &[Rational], cols: usize) -> Option<Vec<Rational>> {
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(r, v)| {
            let mut r = r.clone();
            r.push(v.clone());
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = m[row][col].recip();
        for v in m[row].iter_mut() {
            *v *= &inv;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..=cols {
                    let t = &f * &m[row][c];
                    m[r][c] -= t;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if m[row..].iter().any(|r| !r[cols].is_zero()) || pivots.len() < cols {
        return None;
    }
    let mut x = vec![Rational::zero(); cols];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = m[r][cols].clone();
    }
    Some(x)
}

fn solve_tensor_system(rows: &[Vec<Rational>], rhs: &[Tensor], cols: usize) -> Vec<Tensor> {
    let mut words: Vec<Vec<u8>> = rhs.iter().flat_map(|t| t.0.keys().cloned()).collect();
    words.sort();
    words.dedup();
    let mut out = vec![Tensor::zero(); cols];
    for w in words {
        let b: Vec<Rational> = rhs
            .iter()
            .map(|t| t.0.get(&w).cloned().unwrap_or_else(Rational::zero))
            .collect();
        let x = solve_exact(rows, &b, cols).expect("bracket images determine the next layer");
        for (o, c) in out.iter_mut().zip(x) {
            *o = o.add(&Tensor(BTreeMap::from([(w.clone(), c)])));
        }
    }
    out
}

/// Rank over the rationals by elimination.
pub fn rank(rows: &[Vec<Rational>]) -> usize {
    let mut m = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        for i in r + 1..m.len() {
            if !m[i][c].is_zero() {
                let f = &m[i][c] / &m[r][c];
                for k in c..cols {
                    let t = &f * &m[r][k];
                    m[i][k] -= t;
                }
            }
        }
        r += 1;
    }
    r
}

/// Explicit spanning set of `I²` (vertical one-forms wedged with everything, and
/// their differentials), as rows over the pair basis `θ_i∧θ_j`, `i < j`.
///
/// `dθ_k = -Σ_{i<j} c_ij^k θ_i∧θ_j` is read directly from brackets of basis vectors.
pub fn i2_span(alg: &CarnotAlgebra) -> Vec<Vec<Rational>> {
    let n = alg.dim();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let idx = |i: usize, j: usize| {
        pairs
            .iter()
            .position(|&p| p == (i.min(j), i.max(j)))
            .unwrap()
    };
    let vertical: Vec<usize> = (0..n).filter(|&k| alg.layer_of(k) >= 2).collect();
    let mut rows = Vec::new();
    for &k in &vertical {
        for i in 0..n {
            if i == k {
                continue;
            }
            let mut r = vec![Rational::zero(); pairs.len()];
            r[idx(k, i)] = if k < i {
                Rational::one()
            } else {
                -Rational::one()
            };
            rows.push(r);
        }
        let mut r = vec![Rational::zero(); pairs.len()];
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let c = alg
                .bracket(&alg.basis_vector::<Rational>(i), &alg.basis_vector(j))
                .unwrap();
            r[p] = -c.coords()[k].clone();
        }
        rows.push(r);
    }
    rows
}

/// Center of mass by Newton's method on `Σ w_k log(c⁻¹ x_k) = 0` with a finite-difference Jacobian.
pub fn newton_com(alg: &CarnotAlgebra, support: &[GroupPoint<f64>], weights: &[f64]) -> Vec<f64> {
    let n = alg.dim();
    let residual = |c: &[f64]| -> Vec<f64> {
        let cp = GroupPoint::from_coords(c.to_vec());
        let mut acc = vec![0.0; n];
        for (x, w) in support.iter().zip(weights) {
            let v = alg.log_based(&cp, x).unwrap();
            for (a, b) in acc.iter_mut().zip(v.coords()) {
                *a += w * b;
            }
        }
        acc
    };
    let mut c = vec![0.0; n];
    for (x, w) in support.iter().zip(weights) {
        for (a, b) in c.iter_mut().zip(x.coords()) {
            *a += w * b;
        }
    }
    for _ in 0..50 {
        let f = residual(&c);
        if f.iter().all(|v| v.abs() < 1e-15) {
            break;
        }
        let h = 1e-6;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[a] += h;
            cm[a] -= h;
            let (fp, fm) = (residual(&cp), residual(&cm));
            for r in 0..n {
                jac[(r, a)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let step = jac
            .lu()
            .solve(&nalgebra::DVector::from_vec(f))
            .expect("Jacobian is invertible");
        for a in 0..n {
            c[a] -= step[a];
        }
    }
    c
}

/// Quasi-distance between two float points, evaluated exactly from their binary values.
pub fn exact_quasi_distance(alg: &CarnotAlgebra, x: &[f64], y: &[f64]) -> f64 {
    let lift = |v: &[f64]| {
        GroupPoint::from_coords(
            v.iter()
                .map(|c| carnot_core::scalar::rational_from_f64(*c).unwrap())
                .collect::<Vec<Rational>>(),
        )
    };
    alg.quasi_distance(&lift(x), &lift(y)).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn to_f64(v: &AlgebraVector<Rational>) -> Vec<f64> {
    v.to_f64().coords().to_vec()
}
