//! Graded nilpotent (Carnot) Lie algebras given by structure constants.
//!
//! The basis is ordered layer by layer, so projections onto layers are
//! coordinate slices. Indices are 0-based throughout the API; `Display`
//! impls print them 1-based to match definition files.

mod builtin;
mod hom;
mod random;

use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::{Arc, OnceLock};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{Rational, Scalar};

pub use builtin::{abelian, builtin, complexify, direct_product, free_nilpotent, heisenberg};
pub use hom::{
    classify_j_linearity, conjugation, decompose_product_automorphism, GradedHom, JLinearity,
    ProductDecomposition,
};
pub use random::{
    random_graded_automorphism, random_graded_hom, random_product_automorphism, random_rational,
};

/// Largest supported nilpotency step.
pub const MAX_STEP: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dilation factor must be positive")]
    NonPositiveDilation,
    #[error("invalid algebra: {0}")]
    Invalid(Violation),
    #[error("step {0} exceeds the supported maximum of {MAX_STEP}")]
    StepTooLarge(usize),
    #[error("matrix entry ({row},{col}) maps between different layers")]
    NotGraded { row: usize, col: usize },
    #[error("not a Lie homomorphism on basis pair ({a},{b}), defect {defect:e}")]
    NotHomomorphism { a: usize, b: usize, defect: f64 },
    #[error("horizontal block does not extend to a graded homomorphism (defect {0:e})")]
    ExtensionFailed(f64),
    #[error("map is not invertible")]
    NotInvertible,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("not a product: {0}")]
    NotAProduct(String),
    #[error("algebra carries no complex structure")]
    NotComplexified,
}

/// First violated axiom found by [`validate_algebra`], with 0-based witnesses.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    Antisymmetry {
        i: usize,
        j: usize,
        k: usize,
    },
    Grading {
        i: usize,
        j: usize,
        k: usize,
    },
    Jacobi {
        i: usize,
        j: usize,
        l: usize,
        k: usize,
    },
    /// `[V_1, V_layer]` does not span `V_{layer+1}` (layers 1-based).
    BracketGenerating {
        layer: usize,
    },
    InnerProduct(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(s) => write!(f, "shape: {s}"),
            Violation::Antisymmetry { i, j, k } => {
                write!(f, "antisymmetry, ({},{},{})", i + 1, j + 1, k + 1)
            }
            Violation::Grading { i, j, k } => write!(f, "grading, ({},{},{})", i + 1, j + 1, k + 1),
            Violation::Jacobi { i, j, l, k } => write!(
                f,
                "jacobi, ({},{},{}) component {}",
                i + 1,
                j + 1,
                l + 1,
                k + 1
            ),
            Violation::BracketGenerating { layer } => write!(
                f,
                "bracket-generating, [V_1,V_{layer}] does not span V_{}",
                layer + 1
            ),
            Violation::InnerProduct(s) => write!(f, "inner product: {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationReport {
    Pass,
    Fail(Violation),
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        matches!(self, ValidationReport::Pass)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationReport::Pass => write!(f, "pass"),
            ValidationReport::Fail(v) => write!(f, "fail({v})"),
        }
    }
}

/// Raw algebra definition, as read from a file or assembled by hand.
///
/// `brackets` lists `(i, j, k, c)` meaning `c[i][j][k] = c`. Entries with
/// `i > j` are allowed and checked against antisymmetry; missing mirrored
/// entries are implied.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraDef {
    pub layer_dims: Vec<usize>,
    pub brackets: Vec<(usize, usize, usize, Rational)>,
    pub inner_product: Option<Vec<Vec<Rational>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstant {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: Rational,
    value_f64: f64,
}

impl StructureConstant {
    /// The constant in scalar type `S`.
    pub fn coefficient<S: Scalar>(&self) -> S {
        S::from_parts(&self.value, self.value_f64)
    }
}

/// Family an algebra belongs to, used to sample automorphisms.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgebraKind {
    Abelian(usize),
    Heisenberg(usize),
    Free { rank: usize, step: usize },
    Complexified(Box<AlgebraKind>),
    Product(Vec<AlgebraKind>),
    Custom,
}

/// One factor of an explicit direct product.
#[derive(Debug, Clone)]
pub struct ProductFactor {
    pub algebra: Arc<CarnotAlgebra>,
    /// Global basis index of each factor basis vector.
    pub indices: Vec<usize>,
    /// Caller-asserted indecomposability.
    pub indecomposable: bool,
}

/// Carnot algebra with exact structure constants.
#[derive(Debug, Clone)]
pub struct CarnotAlgebra {
    name: String,
    kind: AlgebraKind,
    layer_dims: Vec<usize>,
    layer_of: Vec<usize>,
    offsets: Vec<usize>,
    consts: Vec<StructureConstant>,
    inner: Option<Matrix<Rational>>,
    layer_gram: Vec<Option<(Matrix<Rational>, Matrix<f64>)>>,
    factors: Vec<ProductFactor>,
    complex_structure: Option<Matrix<Rational>>,
    lyndon_words: Option<Vec<Vec<u8>>>,
    pub(crate) form_ideals: OnceLock<Arc<crate::exterior::IdealCache>>,
}

impl PartialEq for CarnotAlgebra {
    fn eq(&self, other: &Self) -> bool {
        self.layer_dims == other.layer_dims
            && self.consts == other.consts
            && self.inner == other.inner
    }
}

/// Coordinates of an algebra element in the graded basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraVector<S> {
    coords: Vec<S>,
}

impl<S: Scalar> AlgebraVector<S> {
    pub fn new(coords: Vec<S>) -> Self {
        AlgebraVector { coords }
    }

    pub fn zeros(n: usize) -> Self {
        AlgebraVector {
            coords: vec![S::zero(); n],
        }
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.coords[i] = S::one();
        v
    }

    pub fn from_i64(coords: &[i64]) -> Self {
        AlgebraVector {
            coords: coords.iter().map(|&c| S::from_i64(c)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[S] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<S> {
        self.coords
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(Zero::is_zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        AlgebraVector {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        AlgebraVector {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        }
    }

    pub fn neg(&self) -> Self {
        AlgebraVector {
            coords: self.coords.iter().map(|a| -a.clone()).collect(),
        }
    }

    pub fn scale(&self, s: &S) -> Self {
        AlgebraVector {
            coords: self.coords.iter().map(|a| a.clone() * s.clone()).collect(),
        }
    }

    pub fn to_f64(&self) -> AlgebraVector<f64> {
        AlgebraVector {
            coords: self.coords.iter().map(Scalar::to_f64).collect(),
        }
    }

    /// Max-norm of the coordinates, as f64.
    pub fn max_abs(&self) -> f64 {
        self.coords
            .iter()
            .map(|c| c.to_f64().abs())
            .fold(0.0, f64::max)
    }
}

impl<S> Index<usize> for AlgebraVector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.coords[i]
    }
}

impl<S> IndexMut<usize> for AlgebraVector<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.coords[i]
    }
}

impl<S: fmt::Display> fmt::Display for AlgebraVector<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Checks the Carnot algebra axioms for a raw definition.
pub fn validate_algebra(def: &AlgebraDef) -> ValidationReport {
    match check_definition(def) {
        Ok(_) => ValidationReport::Pass,
        Err(v) => ValidationReport::Fail(v),
    }
}

type DenseTable = Vec<Vec<Vec<(usize, Rational)>>>;

fn check_definition(def: &AlgebraDef) -> Result<DenseTable, Violation> {
    if def.layer_dims.is_empty() {
        return Err(Violation::Shape("no layers".into()));
    }
    if def.layer_dims.contains(&0) {
        return Err(Violation::Shape("empty layer".into()));
    }
    let n: usize = def.layer_dims.iter().sum();
    let layer_of = layer_index(&def.layer_dims);

    // explicit dense table c[i][j] = sparse vector over k
    let mut given: std::collections::BTreeMap<(usize, usize, usize), Rational> = Default::default();
    for (i, j, k, c) in &def.brackets {
        if *i >= n || *j >= n || *k >= n {
            return Err(Violation::Shape(format!(
                "bracket index out of range ({},{},{})",
                i + 1,
                j + 1,
                k + 1
            )));
        }
        let e = given.entry((*i, *j, *k)).or_insert_with(Rational::zero);
        *e += c;
    }
    for (&(i, j, k), c) in &given {
        if c.is_zero() {
            continue;
        }
        if i == j {
            return Err(Violation::Antisymmetry { i, j, k });
        }
        if let Some(mirror) = given.get(&(j, i, k)) {
            if *mirror != -c.clone() {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                return Err(Violation::Antisymmetry { i: a, j: b, k });
            }
        }
    }
    let mut table: DenseTable = vec![vec![Vec::new(); n]; n];
    for (&(i, j, k), c) in &given {
        if c.is_zero() {
            continue;
        }
        if i < j || !given.contains_key(&(j, i, k)) {
            let (a, b, v) = if i < j {
                (i, j, c.clone())
            } else {
                (j, i, -c.clone())
            };
            table[a][b].push((k, v.clone()));
            table[b][a].push((k, -v));
        }
    }
    for i in 0..n {
        for j in 0..n {
            for (k, _) in &table[i][j] {
                if layer_of[*k] != layer_of[i] + layer_of[j] {
                    let (a, b) = (i.min(j), i.max(j));
                    return Err(Violation::Grading { i: a, j: b, k: *k });
                }
            }
        }
    }
    let br = |x: &[Rational], y: &[Rational]| -> Vec<Rational> {
        let mut out = vec![Rational::zero(); n];
        for i in 0..n {
            if x[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if y[j].is_zero() {
                    continue;
                }
                for (k, c) in &table[i][j] {
                    out[*k] += &x[i] * &y[j] * c;
                }
            }
        }
        out
    };
    let unit = |i: usize| -> Vec<Rational> {
        let mut v = vec![Rational::zero(); n];
        v[i] = Rational::one();
        v
    };
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                let (ei, ej, el) = (unit(i), unit(j), unit(l));
                let t1 = br(&ei, &br(&ej, &el));
                let t2 = br(&ej, &br(&el, &ei));
                let t3 = br(&el, &br(&ei, &ej));
                for k in 0..n {
                    if !(t1[k].clone() + t2[k].clone() + t3[k].clone()).is_zero() {
                        return Err(Violation::Jacobi { i, j, l, k });
                    }
                }
            }
        }
    }
    let offsets = layer_offsets(&def.layer_dims);
    for layer in 1..def.layer_dims.len() {
        let (lo, hi) = (offsets[layer], offsets[layer + 1]);
        let mut rows = Vec::new();
        for a in offsets[0]..offsets[1] {
            for b in offsets[layer - 1]..offsets[layer] {
                let v = br(&unit(a), &unit(b));
                rows.push(v[lo..hi].to_vec());
            }
        }
        let rank = if rows.is_empty() {
            0
        } else {
            Matrix::from_rows(rows).rank()
        };
        if rank < hi - lo {
            return Err(Violation::BracketGenerating { layer });
        }
    }
    if let Some(g) = &def.inner_product {
        if g.len() != n || g.iter().any(|r| r.len() != n) {
            return Err(Violation::InnerProduct(format!(
                "expected a {n}x{n} matrix"
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if g[i][j] != g[j][i] {
                    return Err(Violation::InnerProduct(format!(
                        "not symmetric at ({},{})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let m = Matrix::from_rows(g.clone());
        for p in 1..=n {
            let idx: Vec<usize> = (0..p).collect();
            if m.select(&idx, &idx).determinant() <= Rational::zero() {
                return Err(Violation::InnerProduct("not positive definite".into()));
            }
        }
    }
    Ok(table)
}

fn layer_index(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .enumerate()
        .flat_map(|(j, &d)| std::iter::repeat_n(j + 1, d))
        .collect()
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for d in dims {
        off.push(off.last().unwrap() + d);
    }
    off
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

impl CarnotAlgebra {
    /// Validates a definition and builds the algebra.
    pub fn new(def: &AlgebraDef) -> Result<Self, AlgebraError> {
        Self::with_name(def, "custom")
    }

    pub fn with_name(def: &AlgebraDef, name: &str) -> Result<Self, AlgebraError> {
        if def.layer_dims.len() > MAX_STEP {
            return Err(AlgebraError::StepTooLarge(def.layer_dims.len()));
        }
        let table = check_definition(def).map_err(AlgebraError::Invalid)?;
        let n: usize = def.layer_dims.iter().sum();
        let mut consts = Vec::new();
        for (i, row) in table.iter().enumerate() {
            for (j, entries) in row.iter().enumerate().skip(i + 1) {
                let mut entries = entries.clone();
                entries.sort_by_key(|e| e.0);
                for (k, c) in entries {
                    consts.push(StructureConstant {
                        i,
                        j,
                        k,
                        value_f64: c.to_f64(),
                        value: c,
                    });
                }
            }
        }
        let inner = def.inner_product.clone().map(Matrix::from_rows);
        let offsets = layer_offsets(&def.layer_dims);
        let layer_gram = (0..def.layer_dims.len())
            .map(|j| {
                inner.as_ref().and_then(|g| {
                    let idx: Vec<usize> = (offsets[j]..offsets[j + 1]).collect();
                    let block = g.select(&idx, &idx);
                    if block == Matrix::identity(idx.len()) {
                        None
                    } else {
                        let f = block.map(Scalar::to_f64);
                        Some((block, f))
                    }
                })
            })
            .collect();
        let inner = inner.filter(|g| *g != Matrix::identity(n));
        Ok(CarnotAlgebra {
            name: name.to_string(),
            kind: AlgebraKind::Custom,
            layer_of: layer_index(&def.layer_dims),
            layer_dims: def.layer_dims.clone(),
            offsets,
            consts,
            inner,
            layer_gram,
            factors: Vec::new(),
            complex_structure: None,
            lyndon_words: None,
            form_ideals: OnceLock::new(),
        })
    }

    /// Re-exports the definition (brackets with `i < j` only).
    pub fn definition(&self) -> AlgebraDef {
        AlgebraDef {
            layer_dims: self.layer_dims.clone(),
            brackets: self
                .consts
                .iter()
                .map(|c| (c.i, c.j, c.k, c.value.clone()))
                .collect(),
            inner_product: self.inner.as_ref().map(Matrix::to_rows),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &AlgebraKind {
        &self.kind
    }

    pub(crate) fn set_meta(&mut self, name: String, kind: AlgebraKind) {
        self.name = name;
        self.kind = kind;
    }

    pub(crate) fn set_factors(&mut self, factors: Vec<ProductFactor>) {
        self.factors = factors;
    }

    pub(crate) fn set_complex_structure(&mut self, j: Matrix<Rational>) {
        self.complex_structure = Some(j);
    }

    pub(crate) fn set_lyndon_words(&mut self, words: Vec<Vec<u8>>) {
        self.lyndon_words = Some(words);
    }

    /// Total dimension `N`.
    pub fn dim(&self) -> usize {
        self.layer_of.len()
    }

    /// Step `m`.
    pub fn step(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Layer (1-based) of basis vector `i`.
    pub fn layer_of(&self, i: usize) -> usize {
        self.layer_of[i]
    }

    /// Index range of layer `j` (1-based).
    pub fn layer_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j - 1]..self.offsets[j]
    }

    /// Homogeneous dimension `ν = Σ j d_j`.
    pub fn homogeneous_dim(&self) -> usize {
        self.layer_dims
            .iter()
            .enumerate()
            .map(|(j, d)| (j + 1) * d)
            .sum()
    }

    pub fn structure_constants(&self) -> &[StructureConstant] {
        &self.consts
    }

    pub fn is_abelian(&self) -> bool {
        self.consts.is_empty()
    }

    /// Inner product matrix; `None` means the identity.
    pub fn inner_product(&self) -> Option<&Matrix<Rational>> {
        self.inner.as_ref()
    }

    pub fn factors(&self) -> &[ProductFactor] {
        &self.factors
    }

    /// Complex structure `J` if this algebra was built by [`complexify`].
    pub fn complex_structure(&self) -> Option<&Matrix<Rational>> {
        self.complex_structure.as_ref()
    }

    /// Lyndon words labelling the basis of a free nilpotent algebra.
    pub fn lyndon_words(&self) -> Option<&[Vec<u8>]> {
        self.lyndon_words.as_deref()
    }

    pub fn check<S>(&self, x: &AlgebraVector<S>) -> Result<(), AlgebraError> {
        if x.coords.len() == self.dim() {
            Ok(())
        } else {
            Err(AlgebraError::DimensionMismatch {
                expected: self.dim(),
                found: x.coords.len(),
            })
        }
    }

    pub fn zero<S: Scalar>(&self) -> AlgebraVector<S> {
        AlgebraVector::zeros(self.dim())
    }

    pub fn basis_vector<S: Scalar>(&self, i: usize) -> AlgebraVector<S> {
        AlgebraVector::basis(self.dim(), i)
    }

    /// Lie bracket `[X, Y]`.
    pub fn bracket<S: Scalar>(
        &self,
        x: &AlgebraVector<S>,
        y: &AlgebraVector<S>,
    ) -> Result<AlgebraVector<S>, AlgebraError> {
        self.check(x)?;
        self.check(y)?;
        Ok(AlgebraVector::new(self.bracket_slice(&x.coords, &y.coords)))
    }

    pub(crate) fn bracket_slice<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); x.len()];
        self.bracket_into(x, y, &mut out);
        out
    }

    pub(crate) fn bracket_into<S: Scalar>(&self, x: &[S], y: &[S], out: &mut [S]) {
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for c in &self.consts {
            let (xi, xj, yi, yj) = (&x[c.i], &x[c.j], &y[c.i], &y[c.j]);
            if (xi.is_zero() || yj.is_zero()) && (xj.is_zero() || yi.is_zero()) {
                continue;
            }
            let w = xi.clone() * yj.clone() - xj.clone() * yi.clone();
            let coef = S::from_parts(&c.value, c.value_f64);
            out[c.k] = out[c.k].clone() + coef * w;
        }
    }

    /// `δ_r X`.
    pub fn dilate<S: Scalar>(
        &self,
        r: &S,
        x: &AlgebraVector<S>,
    ) -> Result<AlgebraVector<S>, AlgebraError> {
        self.check(x)?;
        if *r <= S::zero() {
            return Err(AlgebraError::NonPositiveDilation);
        }
        Ok(self.dilate_unchecked(r, x))
    }

    pub(crate) fn dilate_unchecked<S: Scalar>(
        &self,
        r: &S,
        x: &AlgebraVector<S>,
    ) -> AlgebraVector<S> {
        let mut pw = r.clone();
        let mut out = x.clone();
        for j in 1..=self.step() {
            for i in self.layer_range(j) {
                out.coords[i] = out.coords[i].clone() * pw.clone();
            }
            pw = pw * r.clone();
        }
        out
    }

    /// `π_j X` as a full-length vector (zero outside layer `j`, 1-based).
    pub fn project_layer<S: Scalar>(
        &self,
        j: usize,
        x: &AlgebraVector<S>,
    ) -> Result<AlgebraVector<S>, AlgebraError> {
        self.check(x)?;
        if j == 0 || j > self.step() {
            return Err(AlgebraError::Unsupported(format!(
                "layer {j} outside 1..={}",
                self.step()
            )));
        }
        let range = self.layer_range(j);
        let mut out = AlgebraVector::zeros(self.dim());
        for i in range {
            out.coords[i] = x.coords[i].clone();
        }
        Ok(out)
    }

    /// Squared Euclidean norm of `π_j X` (1-based `j`).
    pub fn layer_norm_sq<S: Scalar>(&self, j: usize, x: &[S]) -> S {
        let range = self.layer_range(j);
        let xs = &x[range.clone()];
        match &self.layer_gram[j - 1] {
            None => xs
                .iter()
                .fold(S::zero(), |acc, v| acc + v.clone() * v.clone()),
            Some((g, gf)) => {
                let mut acc = S::zero();
                for a in 0..xs.len() {
                    for b in 0..xs.len() {
                        let coef = S::from_parts(&g[(a, b)], gf[(a, b)]);
                        acc = acc + coef * xs[a].clone() * xs[b].clone();
                    }
                }
                acc
            }
        }
    }

    /// Float Gram matrix of layer `j` (1-based), if an inner product was given.
    pub(crate) fn layer_gram_f64(&self, j: usize) -> Option<&Matrix<f64>> {
        self.layer_gram[j - 1].as_ref().map(|(_, gf)| gf)
    }

    /// Exponent `E = 2 m!` in the homogeneous norm.
    pub fn norm_exponent(&self) -> u64 {
        2 * factorial(self.step())
    }

    /// `|X|^{2m!} = Σ_j |π_j X|_e^{2m!/j}`, exact in rational mode.
    pub fn homogeneous_norm_pow<S: Scalar>(&self, x: &AlgebraVector<S>) -> S {
        let mf = factorial(self.step());
        let mut acc = S::zero();
        for j in 1..=self.step() {
            let q = self.layer_norm_sq(j, &x.coords);
            acc = acc + q.powi((mf / j as u64) as u32);
        }
        acc
    }

    /// Homogeneous norm `|X|`.
    pub fn homogeneous_norm<S: Scalar>(&self, x: &AlgebraVector<S>) -> f64 {
        self.homogeneous_norm_f64(&x.to_f64().coords)
    }

    pub(crate) fn homogeneous_norm_f64(&self, x: &[f64]) -> f64 {
        // t_j = |π_j X|_e^{1/j}; |X| = (Σ t_j^E)^{1/E}, evaluated relative to max t_j
        let mut t = [0.0f64; MAX_STEP];
        let mut tmax: f64 = 0.0;
        for j in 1..=self.step() {
            let q = self.layer_norm_sq(j, x).max(0.0);
            t[j - 1] = q.powf(0.5 / j as f64);
            tmax = tmax.max(t[j - 1]);
        }
        if tmax == 0.0 {
            return 0.0;
        }
        let e = self.norm_exponent() as f64;
        let s: f64 = t[..self.step()].iter().map(|tj| (tj / tmax).powf(e)).sum();
        tmax * s.powf(1.0 / e)
    }

    /// Euclidean norm `sqrt(X^T G X)`.
    pub fn euclidean_norm<S: Scalar>(&self, x: &AlgebraVector<S>) -> f64 {
        let xf: Vec<f64> = x.coords.iter().map(Scalar::to_f64).collect();
        match &self.inner {
            None => crate::scalar::norm2(&xf),
            Some(g) => {
                let gf = g.map(Scalar::to_f64);
                let gx = gf.mul_vec(&xf);
                gx.iter()
                    .zip(&xf)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .max(0.0)
                    .sqrt()
            }
        }
    }

    /// Largest coordinate bound `max |x_i|` over the unit quasi-ball, per layer.
    pub(crate) fn unit_ball_box(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for j in 1..=self.step() {
            let range = self.layer_range(j);
            let bound: Vec<f64> = match &self.layer_gram[j - 1] {
                None => vec![1.0; range.len()],
                Some((_, gf)) => {
                    // |x_a| <= sqrt((G^{-1})_{aa}) on {x^T G x <= 1}
                    let inv = gf.inverse().expect("inner product block is invertible");
                    (0..range.len())
                        .map(|a| inv[(a, a)].max(0.0).sqrt())
                        .collect()
                }
            };
            out.extend(bound);
        }
        out
    }
}
