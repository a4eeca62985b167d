//! Left-invariant exterior forms on a Carnot algebra.
//!
//! A basis covector `θ_i` is dual to the basis vector `e_i` and has weight
//! `-layer(i)`. Monomials `θ_{i_1}∧…∧θ_{i_k}` with `i_1 < … < i_k` are stored as
//! bitmasks, so algebras of dimension at most 64 are supported.
//!
//! The differential ideal `I*` is generated by the vertical covectors (dual to
//! layers two and up) and their differentials; `J*` is its annihilator.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::algebra::{AlgebraVector, CarnotAlgebra, GradedHom};
use crate::linalg::Matrix;
use crate::scalar::{Rational, Scalar};

/// Largest algebra dimension representable by the bitmask encoding.
pub const MAX_FORM_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("forms live on different algebras")]
    AlgebraMismatch,
    #[error("expected a form of degree {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("degree {0} exceeds the algebra dimension")]
    DegreeTooLarge(usize),
    #[error("algebra has step 1; the bracket map into the second layer is empty")]
    StepOne,
    #[error("form is not weight-homogeneous")]
    NotHomogeneous,
    #[error("algebra is free in step two, so no two-form test family exists")]
    Free,
    #[error("matrix has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
}

fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(i)
        }
    })
}

fn mask_of(indices: &[usize]) -> u64 {
    indices.iter().fold(0, |m, &i| m | (1u64 << i))
}

/// Sign of `θ_A ∧ θ_B` relative to the sorted monomial, `None` if they overlap.
fn wedge_sign(a: u64, b: u64) -> Option<bool> {
    if a & b != 0 {
        return None;
    }
    let mut inversions = 0u32;
    for j in bits(b) {
        inversions += (a >> j >> 1).count_ones();
    }
    Some(inversions % 2 == 1)
}

/// All `k`-subsets of `pool` as masks, in lexicographic order of index lists.
fn subsets(pool: &[usize], k: usize) -> Vec<u64> {
    fn rec(pool: &[usize], k: usize, start: usize, acc: u64, out: &mut Vec<u64>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for p in start..pool.len() {
            if pool.len() - p < k {
                break;
            }
            rec(pool, k - 1, p + 1, acc | (1u64 << pool[p]), out);
        }
    }
    let mut out = Vec::new();
    rec(pool, k, 0, 0, &mut out);
    out
}

/// Homogeneous-degree exterior form with constant coefficients.
#[derive(Clone)]
pub struct GradedForm<S> {
    alg: Arc<CarnotAlgebra>,
    degree: usize,
    terms: BTreeMap<u64, S>,
}

impl<S: Scalar> GradedForm<S> {
    /// The zero form of degree `k`.
    ///
    /// # Panics
    /// Panics if the algebra has dimension above [`MAX_FORM_DIM`].
    pub fn zero(alg: Arc<CarnotAlgebra>, k: usize) -> Self {
        assert!(
            alg.dim() <= MAX_FORM_DIM,
            "forms need dimension <= {MAX_FORM_DIM}"
        );
        GradedForm {
            alg,
            degree: k,
            terms: BTreeMap::new(),
        }
    }

    /// The constant `c` as a 0-form.
    pub fn scalar(alg: Arc<CarnotAlgebra>, c: S) -> Self {
        let mut f = Self::zero(alg, 0);
        f.push(0, c);
        f
    }

    /// `θ_{i_1}∧…∧θ_{i_k}` for arbitrary (0-based) indices; repeated indices give zero.
    pub fn monomial(alg: Arc<CarnotAlgebra>, indices: &[usize]) -> Self {
        let k = indices.len();
        let mut f = Self::zero(alg, k);
        let mut mask = 0u64;
        let mut negative = false;
        for &i in indices {
            assert!(i < f.alg.dim(), "index {i} out of range");
            match wedge_sign(mask, 1u64 << i) {
                Some(s) => negative ^= s,
                None => return f,
            }
            mask |= 1u64 << i;
        }
        f.push(mask, if negative { -S::one() } else { S::one() });
        f
    }

    /// The dual covector `θ_i`.
    pub fn theta(alg: Arc<CarnotAlgebra>, i: usize) -> Self {
        Self::monomial(alg, &[i])
    }

    /// `θ_1∧…∧θ_N`.
    pub fn volume(alg: Arc<CarnotAlgebra>) -> Self {
        let n = alg.dim();
        let mut f = Self::zero(alg, n);
        f.push(if n == 64 { u64::MAX } else { (1u64 << n) - 1 }, S::one());
        f
    }

    /// The 1-form `Σ c_i θ_i`.
    pub fn one_form(alg: Arc<CarnotAlgebra>, coeffs: &[S]) -> Self {
        let mut f = Self::zero(alg, 1);
        for (i, c) in coeffs.iter().enumerate() {
            f.push(1u64 << i, c.clone());
        }
        f
    }

    /// Builds a form from `(indices, coefficient)` pairs with sorted or unsorted indices.
    pub fn from_terms(alg: Arc<CarnotAlgebra>, k: usize, terms: &[(Vec<usize>, S)]) -> Self {
        let mut f = Self::zero(alg.clone(), k);
        for (idx, c) in terms {
            assert_eq!(idx.len(), k, "term degree differs from form degree");
            f = f.add(&Self::monomial(alg.clone(), idx).scale(c));
        }
        f
    }

    fn push(&mut self, mask: u64, c: S) {
        let scale = c.to_f64().abs();
        let entry = self.terms.entry(mask).or_insert_with(S::zero);
        *entry = entry.clone() + c;
        if entry.is_negligible(scale) {
            self.terms.remove(&mask);
        }
    }

    pub fn algebra(&self) -> &Arc<CarnotAlgebra> {
        &self.alg
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms as sorted index lists with their coefficients.
    pub fn terms(&self) -> Vec<(Vec<usize>, S)> {
        self.terms
            .iter()
            .map(|(m, c)| (bits(*m).collect(), c.clone()))
            .collect()
    }

    /// Coefficient of the monomial with the given sorted indices.
    pub fn coefficient(&self, indices: &[usize]) -> S {
        self.terms
            .get(&mask_of(indices))
            .cloned()
            .unwrap_or_else(S::zero)
    }

    /// Coefficient of `θ_1∧…∧θ_N` (zero unless the form has top degree).
    pub fn volume_coefficient(&self) -> S {
        if self.degree != self.alg.dim() {
            return S::zero();
        }
        self.terms.values().next().cloned().unwrap_or_else(S::zero)
    }

    pub fn max_abs(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.to_f64().abs())
            .fold(0.0, f64::max)
    }

    fn same_algebra(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.alg, &other.alg) || *self.alg == *other.alg
    }

    /// # Panics
    /// Panics on different algebras or degrees.
    pub fn add(&self, other: &Self) -> Self {
        assert!(self.same_algebra(other), "forms live on different algebras");
        assert_eq!(
            self.degree, other.degree,
            "adding forms of different degree"
        );
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.push(*m, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map(|c| -c.clone())
    }

    pub fn scale(&self, s: &S) -> Self {
        let mut out = Self::zero(self.alg.clone(), self.degree);
        for (m, c) in &self.terms {
            out.push(*m, c.clone() * s.clone());
        }
        out
    }

    fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> GradedForm<T> {
        let mut out = GradedForm::zero(self.alg.clone(), self.degree);
        for (m, c) in &self.terms {
            out.push(*m, f(c));
        }
        out
    }

    pub fn to_f64(&self) -> GradedForm<f64> {
        self.map(|c| c.to_f64())
    }

    /// Exterior product. Degrees above `N` give the zero form of the summed degree.
    pub fn wedge(&self, other: &Self) -> Result<Self, FormError> {
        if !self.same_algebra(other) {
            return Err(FormError::AlgebraMismatch);
        }
        let mut out = Self::zero(self.alg.clone(), self.degree + other.degree);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                if let Some(negative) = wedge_sign(*a, *b) {
                    let c = ca.clone() * cb.clone();
                    out.push(a | b, if negative { -c } else { c });
                }
            }
        }
        Ok(out)
    }

    /// Weight of a monomial mask.
    fn mask_weight(alg: &CarnotAlgebra, mask: u64) -> i64 {
        -(bits(mask).map(|i| alg.layer_of(i) as i64).sum::<i64>())
    }

    /// Weight if the form is nonzero and weight-homogeneous.
    pub fn weight(&self) -> Option<i64> {
        let mut ws = self.terms.keys().map(|m| Self::mask_weight(&self.alg, *m));
        let w = ws.next()?;
        ws.all(|v| v == w).then_some(w)
    }

    /// Homogeneous components in order of decreasing weight.
    pub fn weight_split(&self) -> Vec<(i64, GradedForm<S>)> {
        let mut parts: BTreeMap<i64, GradedForm<S>> = BTreeMap::new();
        for (m, c) in &self.terms {
            let w = Self::mask_weight(&self.alg, *m);
            parts
                .entry(w)
                .or_insert_with(|| Self::zero(self.alg.clone(), self.degree))
                .push(*m, c.clone());
        }
        parts.into_iter().rev().collect()
    }

    /// Chevalley–Eilenberg differential, `dθ_k = -Σ_{i<j} c_{ij}^k θ_i∧θ_j`.
    pub fn d(&self) -> Self {
        let mut dtheta: Vec<Vec<(u64, bool, S)>> = vec![Vec::new(); self.alg.dim()];
        for sc in self.alg.structure_constants() {
            // sc.i < sc.j, so θ_i∧θ_j is already sorted
            dtheta[sc.k].push(((1u64 << sc.i) | (1u64 << sc.j), true, sc.coefficient::<S>()));
        }
        let mut out = Self::zero(self.alg.clone(), self.degree + 1);
        for (m, c) in &self.terms {
            for (pos, s) in bits(*m).enumerate() {
                let rest = m & !(1u64 << s);
                // θ_{i_1}∧…∧dθ_s∧…: move dθ_s past `pos` one-forms
                let before = rest & ((1u64 << s) - 1);
                for (pair, negative, coef) in &dtheta[s] {
                    let Some(sign) = wedge_sign(before, *pair) else {
                        continue;
                    };
                    let after = rest & !before;
                    let Some(sign2) = wedge_sign(before | pair, after) else {
                        continue;
                    };
                    let flip = sign ^ sign2 ^ (pos % 2 == 1) ^ negative;
                    let v = c.clone() * coef.clone();
                    out.push(rest | pair, if flip { -v } else { v });
                }
            }
        }
        out
    }

    /// Interior product `i_Y`.
    pub fn interior(&self, y: &AlgebraVector<S>) -> Result<Self, FormError> {
        if y.dim() != self.alg.dim() {
            return Err(FormError::AlgebraMismatch);
        }
        if self.degree == 0 {
            return Ok(Self::zero(self.alg.clone(), 0));
        }
        let mut out = Self::zero(self.alg.clone(), self.degree - 1);
        for (m, c) in &self.terms {
            for (pos, s) in bits(*m).enumerate() {
                if y[s].is_zero() {
                    continue;
                }
                let v = c.clone() * y[s].clone();
                out.push(m & !(1u64 << s), if pos % 2 == 1 { -v } else { v });
            }
        }
        Ok(out)
    }

    /// Pullback along the linear map with matrix `m` (target × source) from `source`.
    ///
    /// The form must live on an algebra of dimension `m.rows()`.
    pub fn pullback_matrix(
        &self,
        source: Arc<CarnotAlgebra>,
        m: &Matrix<S>,
    ) -> Result<Self, FormError> {
        if m.rows() != self.alg.dim() || m.cols() != source.dim() {
            return Err(FormError::Shape {
                rows: m.rows(),
                cols: m.cols(),
                expected_rows: self.alg.dim(),
                expected_cols: source.dim(),
            });
        }
        let pulled: Vec<GradedForm<S>> = (0..m.rows())
            .map(|j| GradedForm::one_form(source.clone(), m.row(j)))
            .collect();
        let mut out = GradedForm::zero(source.clone(), self.degree);
        for (mask, c) in &self.terms {
            let mut acc = GradedForm::scalar(source.clone(), c.clone());
            for j in bits(*mask) {
                acc = acc.wedge(&pulled[j])?;
                if acc.is_zero() {
                    break;
                }
            }
            if !acc.is_zero() {
                out = out.add(&acc);
            }
        }
        Ok(out)
    }

    /// Pullback `φ^*` by a graded homomorphism into this form's algebra.
    pub fn pullback_hom(&self, phi: &GradedHom<S>) -> Result<Self, FormError> {
        if **phi.target() != *self.alg {
            return Err(FormError::AlgebraMismatch);
        }
        self.pullback_matrix(phi.source().clone(), phi.matrix())
    }

    /// Pullback by the dilation `δ_r`: the weight-`w` part scales by `r^{-w}`.
    pub fn pullback_dilation(&self, r: &S) -> Self {
        let mut out = Self::zero(self.alg.clone(), self.degree);
        for (m, c) in &self.terms {
            let e = (-Self::mask_weight(&self.alg, *m)) as u32;
            out.push(*m, c.clone() * r.powi(e));
        }
        out
    }
}

impl<S: Scalar> PartialEq for GradedForm<S> {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree && self.terms == other.terms && self.same_algebra(other)
    }
}

impl<S: Scalar> fmt::Debug for GradedForm<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GradedForm({}; {self})", self.alg.name())
    }
}

impl<S: Scalar> fmt::Display for GradedForm<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (m, c)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            let name: Vec<String> = bits(*m).map(|i| format!("θ{}", i + 1)).collect();
            if name.is_empty() {
                write!(f, "{c}")?;
            } else if c.is_one() {
                write!(f, "{}", name.join("∧"))?;
            } else {
                write!(f, "({c}) {}", name.join("∧"))?;
            }
        }
        Ok(())
    }
}

/// Ideal data in one degree.
#[derive(Debug, Clone)]
pub struct FormIdealBasis {
    pub degree: usize,
    /// Basis of `I^k`: vertical monomials, then reduced horizontal rows.
    pub ideal: Vec<GradedForm<Rational>>,
    /// Basis of `J^k`.
    pub annihilator: Vec<GradedForm<Rational>>,
    /// Horizontal monomials spanning a complement of `I^k` in `Λ^k`.
    pub quotient_reps: Vec<GradedForm<Rational>>,
    /// Basis of `J^{N-k}` dual to `quotient_reps`: `α_i∧γ_j = δ_ij vol`.
    pub dual: Vec<GradedForm<Rational>>,
}

impl FormIdealBasis {
    pub fn quotient_dim(&self) -> usize {
        self.quotient_reps.len()
    }
}

/// Ideal data for every degree, computed once per algebra.
#[derive(Debug)]
pub struct IdealCache {
    degrees: Vec<FormIdealBasis>,
}

impl IdealCache {
    pub fn degree(&self, k: usize) -> Option<&FormIdealBasis> {
        self.degrees.get(k)
    }

    fn build(alg: &Arc<CarnotAlgebra>) -> Self {
        let n = alg.dim();
        let d1 = alg.layer_dims()[0];
        let horizontal: Vec<usize> = (0..d1).collect();
        let vertical: Vec<usize> = (d1..n).collect();
        let vertical_mask = mask_of(&vertical);
        let dtheta: Vec<GradedForm<Rational>> = vertical
            .iter()
            .map(|&v| GradedForm::theta(alg.clone(), v).d())
            .collect();

        // Horizontal part of I^k: span of θ_K∧(dθ_v)_h for horizontal K.
        let mut horiz_rows: Vec<(Vec<u64>, Vec<Vec<Rational>>, Vec<usize>)> =
            Vec::with_capacity(n + 1);
        for k in 0..=n {
            let cols = if k <= d1 {
                subsets(&horizontal, k)
            } else {
                Vec::new()
            };
            let col_of: BTreeMap<u64, usize> =
                cols.iter().enumerate().map(|(i, m)| (*m, i)).collect();
            let mut rows = Vec::new();
            if k >= 2 && k <= d1 {
                for kmask in subsets(&horizontal, k - 2) {
                    let mut base = GradedForm::<Rational>::zero(alg.clone(), k - 2);
                    base.push(kmask, Rational::one());
                    for dv in &dtheta {
                        let g = base.wedge(dv).expect("same algebra");
                        let mut row = vec![Rational::zero(); cols.len()];
                        let mut any = false;
                        for (m, c) in &g.terms {
                            if let Some(&ci) = col_of.get(m) {
                                row[ci] = c.clone();
                                any = true;
                            }
                        }
                        if any {
                            rows.push(row);
                        }
                    }
                }
            }
            let (basis, pivots) = crate::linalg::row_space(rows, cols.len());
            horiz_rows.push((cols, basis, pivots));
        }

        let mut degrees = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let (cols, basis, pivots) = &horiz_rows[k];
            let mut ideal: Vec<GradedForm<Rational>> = Vec::new();
            for m in subsets(&(0..n).collect::<Vec<_>>(), k) {
                if m & vertical_mask != 0 {
                    let mut f = GradedForm::zero(alg.clone(), k);
                    f.push(m, Rational::one());
                    ideal.push(f);
                }
            }
            for row in basis {
                let mut f = GradedForm::zero(alg.clone(), k);
                for (ci, c) in row.iter().enumerate() {
                    if !c.is_zero() {
                        f.push(cols[ci], c.clone());
                    }
                }
                ideal.push(f);
            }
            let quotient_masks: Vec<u64> = (0..cols.len())
                .filter(|c| !pivots.contains(c))
                .map(|c| cols[c])
                .collect();
            let quotient_reps = quotient_masks
                .iter()
                .map(|&m| {
                    let mut f = GradedForm::zero(alg.clone(), k);
                    f.push(m, Rational::one());
                    f
                })
                .collect();
            degrees.push(FormIdealBasis {
                degree: k,
                ideal,
                annihilator: Vec::new(),
                quotient_reps,
                dual: Vec::new(),
            });
        }

        // J^{N-k} = Ann(I^k): forms θ_H'∧θ_V with H' horizontal of size d1-k whose
        // pairing with every horizontal row of I^k vanishes.
        for k in 0..=n {
            let jdeg = n - k;
            if k > d1 {
                continue;
            }
            let (cols, basis, _) = &horiz_rows[k];
            let all_h = mask_of(&horizontal);
            // unknown g_T for T = complement of a horizontal k-subset
            let unknowns: Vec<u64> = cols.iter().map(|s| (all_h & !s) | vertical_mask).collect();
            let signs: Vec<bool> = cols
                .iter()
                .zip(&unknowns)
                .map(|(s, t)| wedge_sign(*s, *t).expect("disjoint"))
                .collect();
            let system = Matrix::from_fn(basis.len(), cols.len(), |r, c| {
                let v = basis[r][c].clone();
                if signs[c] {
                    -v
                } else {
                    v
                }
            });
            let null = if basis.is_empty() {
                (0..cols.len())
                    .map(|c| {
                        let mut e = vec![Rational::zero(); cols.len()];
                        e[c] = Rational::one();
                        e
                    })
                    .collect()
            } else {
                system.nullspace()
            };
            let to_form = |v: &Vec<Rational>| {
                let mut f = GradedForm::zero(alg.clone(), jdeg);
                for (c, x) in v.iter().enumerate() {
                    if !x.is_zero() {
                        f.push(unknowns[c], x.clone());
                    }
                }
                f
            };
            let annihilator: Vec<GradedForm<Rational>> = null.iter().map(to_form).collect();

            // dual basis to the quotient representatives
            let reps = &degrees[k].quotient_reps;
            let q = reps.len();
            let pairing = Matrix::from_fn(q, q, |i, j| {
                reps[i]
                    .wedge(&annihilator[j])
                    .expect("same algebra")
                    .volume_coefficient()
            });
            let inv = if q == 0 {
                pairing.clone()
            } else {
                pairing
                    .inverse()
                    .expect("pairing between quotient and annihilator is nondegenerate")
            };
            let dual = (0..q)
                .map(|j| {
                    let mut f = GradedForm::zero(alg.clone(), jdeg);
                    for (l, a) in annihilator.iter().enumerate() {
                        f = f.add(&a.scale(&inv[(l, j)]));
                    }
                    f
                })
                .collect();
            degrees[jdeg].annihilator = annihilator;
            degrees[k].dual = dual;
        }
        IdealCache { degrees }
    }
}

fn cache(alg: &Arc<CarnotAlgebra>) -> Arc<IdealCache> {
    alg.form_ideals
        .get_or_init(|| Arc::new(IdealCache::build(alg)))
        .clone()
}

/// Ideal data for degree `k`.
pub fn form_ideal_basis(alg: &Arc<CarnotAlgebra>, k: usize) -> Result<FormIdealBasis, FormError> {
    if k > alg.dim() {
        return Err(FormError::DegreeTooLarge(k));
    }
    Ok(cache(alg).degrees[k].clone())
}

/// Basis of `I^k`.
pub fn ideal_i(alg: &Arc<CarnotAlgebra>, k: usize) -> Result<Vec<GradedForm<Rational>>, FormError> {
    Ok(form_ideal_basis(alg, k)?.ideal)
}

/// Basis of `J^k = Ann(I^{N-k}) ∩ Λ^k`.
pub fn ideal_j(alg: &Arc<CarnotAlgebra>, k: usize) -> Result<Vec<GradedForm<Rational>>, FormError> {
    Ok(form_ideal_basis(alg, k)?.annihilator)
}

/// `dim Λ^k / I^k`.
pub fn quotient_dim(alg: &Arc<CarnotAlgebra>, k: usize) -> Result<usize, FormError> {
    Ok(form_ideal_basis(alg, k)?.quotient_dim())
}

/// Result of pairing `Λ^k/I^k` with `J^{N-k}`.
#[derive(Debug, Clone, PartialEq)]
pub enum DualityPairing {
    /// `I^k = Λ^k`.
    Trivial,
    /// Representatives `α_i` and `γ_j ∈ J^{N-k}` with `α_i∧γ_j = δ_ij vol`.
    Dual {
        alphas: Vec<GradedForm<Rational>>,
        gammas: Vec<GradedForm<Rational>>,
    },
}

pub fn duality_pairing(alg: &Arc<CarnotAlgebra>, k: usize) -> Result<DualityPairing, FormError> {
    let b = form_ideal_basis(alg, k)?;
    if b.quotient_reps.is_empty() {
        Ok(DualityPairing::Trivial)
    } else {
        Ok(DualityPairing::Dual {
            alphas: b.quotient_reps,
            gammas: b.dual,
        })
    }
}

/// Outcome of testing the bracket map `Λ²V_1 → V_2` for injectivity.
#[derive(Debug, Clone, PartialEq)]
pub enum StepTwoObstruction {
    Free,
    /// Kernel basis; entries `(i, j, a_ij)` with `i < j` horizontal.
    Kernel(Vec<Vec<(usize, usize, Rational)>>),
}

/// Kernel of the bracket map on `Λ²V_1`, or `Free` if it is injective.
pub fn free_step2_obstruction(alg: &CarnotAlgebra) -> Result<StepTwoObstruction, FormError> {
    if alg.step() < 2 {
        return Err(FormError::StepOne);
    }
    let d1 = alg.layer_dims()[0];
    let v2 = alg.layer_range(2);
    let pairs: Vec<(usize, usize)> = (0..d1)
        .flat_map(|i| (i + 1..d1).map(move |j| (i, j)))
        .collect();
    let mut m = Matrix::zeros(v2.len(), pairs.len());
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let b = alg
            .bracket(&alg.basis_vector::<Rational>(i), &alg.basis_vector(j))
            .expect("basis vectors match");
        for (r, k) in v2.clone().enumerate() {
            m[(r, c)] = b[k].clone();
        }
    }
    let kernel = m.nullspace();
    if kernel.is_empty() {
        return Ok(StepTwoObstruction::Free);
    }
    Ok(StepTwoObstruction::Kernel(
        kernel
            .into_iter()
            .map(|v| {
                let lead = v
                    .iter()
                    .find(|x| !x.is_zero())
                    .cloned()
                    .unwrap_or_else(Rational::one);
                let sign = if lead < Rational::zero() {
                    -Rational::one()
                } else {
                    Rational::one()
                };
                pairs
                    .iter()
                    .zip(v)
                    .filter(|(_, x)| !x.is_zero())
                    .map(|(&(i, j), x)| (i, j, x * sign.clone()))
                    .collect()
            })
            .collect(),
    ))
}

/// Test forms used to detect factor permutations.
#[derive(Debug, Clone)]
pub struct RigidityForms {
    /// `i_{e_a} vol` for each horizontal basis vector `e_a`.
    pub codegree_one: Vec<GradedForm<Rational>>,
    /// Dual pairs `(α_k, γ_k)` with `α_k ∈ Λ¹_h∧Λ¹_h`; `None` for free algebras.
    pub two_forms: Option<Vec<(GradedForm<Rational>, GradedForm<Rational>)>>,
}

/// The codegree-one family `i_{e_a} vol`, one per horizontal direction.
pub fn codegree_one_forms(alg: &Arc<CarnotAlgebra>) -> Vec<GradedForm<Rational>> {
    let vol = GradedForm::<Rational>::volume(alg.clone());
    (0..alg.layer_dims()[0])
        .map(|a| {
            vol.interior(&alg.basis_vector(a))
                .expect("dimension matches")
        })
        .collect()
}

/// Representatives of `Λ²/I²` paired with their duals in `J^{N-2}`.
pub fn two_form_pairs(
    alg: &Arc<CarnotAlgebra>,
) -> Result<Vec<(GradedForm<Rational>, GradedForm<Rational>)>, FormError> {
    if alg.dim() < 2 {
        return Err(FormError::Free);
    }
    match duality_pairing(alg, 2)? {
        DualityPairing::Trivial => Err(FormError::Free),
        DualityPairing::Dual { alphas, gammas } => Ok(alphas.into_iter().zip(gammas).collect()),
    }
}

pub fn rigidity_test_forms(alg: &Arc<CarnotAlgebra>) -> RigidityForms {
    RigidityForms {
        codegree_one: codegree_one_forms(alg),
        two_forms: two_form_pairs(alg).ok(),
    }
}

/// Number of basis `k`-covectors of each weight, keyed by weight.
pub fn weight_spectrum(alg: &CarnotAlgebra, k: usize) -> BTreeMap<i64, usize> {
    let mut out = BTreeMap::new();
    if k > alg.dim() {
        return out;
    }
    for m in subsets(&(0..alg.dim()).collect::<Vec<_>>(), k) {
        *out.entry(GradedForm::<f64>::mask_weight(alg, m))
            .or_insert(0) += 1;
    }
    out
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
