//! Group law in exponential coordinates via the truncated BCH series.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::algebra::{AlgebraError, AlgebraVector, CarnotAlgebra, MAX_STEP};
use crate::linalg::Matrix;
use crate::scalar::{rat, Rational, Scalar};

/// Group element `x = exp X`, stored by its exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint<S> {
    log: AlgebraVector<S>,
}

impl<S: Scalar> GroupPoint<S> {
    pub fn exp(v: AlgebraVector<S>) -> Self {
        GroupPoint { log: v }
    }

    pub fn identity(n: usize) -> Self {
        GroupPoint {
            log: AlgebraVector::zeros(n),
        }
    }

    pub fn from_coords(coords: Vec<S>) -> Self {
        GroupPoint {
            log: AlgebraVector::new(coords),
        }
    }

    /// `log x`.
    pub fn log(&self) -> &AlgebraVector<S> {
        &self.log
    }

    pub fn into_log(self) -> AlgebraVector<S> {
        self.log
    }

    pub fn coords(&self) -> &[S] {
        self.log.coords()
    }

    pub fn dim(&self) -> usize {
        self.log.dim()
    }

    pub fn is_identity(&self) -> bool {
        self.log.is_zero()
    }

    pub fn to_f64(&self) -> GroupPoint<f64> {
        GroupPoint {
            log: self.log.to_f64(),
        }
    }
}

impl<S: fmt::Display> fmt::Display for GroupPoint<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp{}", self.log)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Letter {
    X,
    Y,
}

/// One term `c · [w_1, [w_2, …, [w_{k−1}, w_k]…]]` of `P(X, Y)`.
#[derive(Debug, Clone)]
pub struct BchTerm {
    pub coefficient: Rational,
    pub word: Vec<Letter>,
    coefficient_f64: f64,
    node: usize,
    y_count: usize,
}

/// Evaluation node: `[letter, child]`, with `child == None` meaning `[X, Y]`.
#[derive(Debug, Clone)]
struct Node {
    letter: Letter,
    child: Option<usize>,
}

/// BCH polynomial `P(X,Y)` for a given step, as right-nested bracket terms.
#[derive(Debug, Clone)]
pub struct BchTable {
    step: usize,
    terms: Vec<BchTerm>,
    nodes: Vec<Node>,
}

static TABLES: [OnceLock<BchTable>; MAX_STEP + 1] = [const { OnceLock::new() }; MAX_STEP + 1];

type Series = BTreeMap<Vec<Letter>, Rational>;

fn series_mul(a: &Series, b: &Series, max_deg: usize) -> Series {
    let mut out = Series::new();
    for (wa, ca) in a {
        for (wb, cb) in b {
            if wa.len() + wb.len() > max_deg {
                continue;
            }
            let mut w = wa.clone();
            w.extend_from_slice(wb);
            *out.entry(w).or_insert_with(Rational::zero) += ca * cb;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn factorial(n: usize) -> Rational {
    rat((1..=n as i64).product(), 1)
}

impl BchTable {
    /// Table for step `m`, built once per process.
    pub fn for_step(m: usize) -> &'static BchTable {
        assert!(
            (1..=MAX_STEP).contains(&m),
            "step {m} outside 1..={MAX_STEP}"
        );
        TABLES[m].get_or_init(|| BchTable::build(m))
    }

    fn build(m: usize) -> BchTable {
        // Z = e^X e^Y − 1, truncated at degree m
        let mut z = Series::new();
        for a in 0..=m {
            for b in 0..=(m - a) {
                if a + b == 0 {
                    continue;
                }
                let mut w = vec![Letter::X; a];
                w.extend(std::iter::repeat_n(Letter::Y, b));
                z.insert(w, Rational::one() / (factorial(a) * factorial(b)));
            }
        }
        // log(1 + Z) = Σ (−1)^{n+1} Z^n / n
        let mut log = Series::new();
        let mut power = z.clone();
        for n in 1..=m {
            let c = rat(if n % 2 == 1 { 1 } else { -1 }, n as i64);
            for (w, v) in &power {
                *log.entry(w.clone()).or_insert_with(Rational::zero) += v * &c;
            }
            power = series_mul(&power, &z, m);
        }
        // Dynkin: a degree-k Lie element equals (1/k) Σ c_w [w] (right-nested)
        let mut canon: BTreeMap<Vec<Letter>, Rational> = BTreeMap::new();
        for (w, c) in log {
            let k = w.len();
            if k < 2 || c.is_zero() {
                continue;
            }
            let (a, b) = (w[k - 2], w[k - 1]);
            if a == b {
                continue;
            }
            let mut w = w;
            let mut c = c / rat(k as i64, 1);
            if a == Letter::Y {
                w[k - 2] = Letter::X;
                w[k - 1] = Letter::Y;
                c = -c;
            }
            *canon.entry(w).or_insert_with(Rational::zero) += c;
        }
        let mut nodes: Vec<Node> = Vec::new();
        let mut index: BTreeMap<Vec<Letter>, usize> = BTreeMap::new();
        let mut terms = Vec::new();
        let mut entries: Vec<(Vec<Letter>, Rational)> =
            canon.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        entries.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        for (word, coefficient) in entries {
            let node = Self::intern(&word, &mut nodes, &mut index);
            terms.push(BchTerm {
                coefficient_f64: coefficient.to_f64(),
                y_count: word.iter().filter(|l| **l == Letter::Y).count(),
                coefficient,
                word,
                node,
            });
        }
        BchTable {
            step: m,
            terms,
            nodes,
        }
    }

    fn intern(
        word: &[Letter],
        nodes: &mut Vec<Node>,
        index: &mut BTreeMap<Vec<Letter>, usize>,
    ) -> usize {
        if let Some(&i) = index.get(word) {
            return i;
        }
        let node = if word.len() == 2 {
            Node {
                letter: Letter::X,
                child: None,
            }
        } else {
            let child = Self::intern(&word[1..], nodes, index);
            Node {
                letter: word[0],
                child: Some(child),
            }
        };
        nodes.push(node);
        index.insert(word.to_vec(), nodes.len() - 1);
        nodes.len() - 1
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn terms(&self) -> &[BchTerm] {
        &self.terms
    }

    /// `P(X,Y)` restricted to terms with `y_filter` letters `Y` (all terms if `None`).
    fn eval<S: Scalar>(
        &self,
        alg: &CarnotAlgebra,
        x: &[S],
        y: &[S],
        y_filter: Option<usize>,
    ) -> Vec<S> {
        let n = x.len();
        let mut out = vec![S::zero(); n];
        if self.terms.is_empty() || x.iter().all(Zero::is_zero) || y.iter().all(Zero::is_zero) {
            return out;
        }
        let mut vals: Vec<Vec<S>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.child {
                None => alg.bracket_slice(x, y),
                Some(c) => {
                    let lhs = if node.letter == Letter::X { x } else { y };
                    alg.bracket_slice(lhs, &vals[c])
                }
            };
            vals.push(v);
        }
        for t in &self.terms {
            if y_filter.is_some_and(|k| t.y_count != k) {
                continue;
            }
            let c = S::from_parts(&t.coefficient, t.coefficient_f64);
            for (o, v) in out.iter_mut().zip(&vals[t.node]) {
                if !v.is_zero() {
                    *o = o.clone() + c.clone() * v.clone();
                }
            }
        }
        out
    }
}

fn add_slices<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.clone() + y.clone())
        .collect()
}

impl CarnotAlgebra {
    pub fn bch_table(&self) -> &'static BchTable {
        BchTable::for_step(self.step())
    }

    /// Nonlinear BCH part `P(X,Y)`, with `X ∗ Y = X + Y + P(X,Y)`.
    pub fn bch_p<S: Scalar>(
        &self,
        x: &AlgebraVector<S>,
        y: &AlgebraVector<S>,
    ) -> Result<AlgebraVector<S>, AlgebraError> {
        self.check(x)?;
        self.check(y)?;
        Ok(AlgebraVector::new(self.bch_p_slice(x.coords(), y.coords())))
    }

    pub(crate) fn bch_p_slice<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        self.bch_table().eval(self, x, y, None)
    }

    /// `X ∗ Y`.
    pub(crate) fn bch_slice<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        let p = self.bch_p_slice(x, y);
        x.iter()
            .zip(y)
            .zip(p)
            .map(|((a, b), c)| a.clone() + b.clone() + c)
            .collect()
    }

    pub fn mul<S: Scalar>(
        &self,
        x: &GroupPoint<S>,
        y: &GroupPoint<S>,
    ) -> Result<GroupPoint<S>, AlgebraError> {
        self.check(x.log())?;
        self.check(y.log())?;
        Ok(GroupPoint::from_coords(
            self.bch_slice(x.coords(), y.coords()),
        ))
    }

    pub fn inv<S: Scalar>(&self, x: &GroupPoint<S>) -> Result<GroupPoint<S>, AlgebraError> {
        self.check(x.log())?;
        Ok(GroupPoint::exp(x.log().neg()))
    }

    /// `log(x⁻¹ y)`.
    pub fn log_based<S: Scalar>(
        &self,
        x: &GroupPoint<S>,
        y: &GroupPoint<S>,
    ) -> Result<AlgebraVector<S>, AlgebraError> {
        self.check(x.log())?;
        self.check(y.log())?;
        Ok(AlgebraVector::new(
            self.log_based_slice(x.coords(), y.coords()),
        ))
    }

    pub(crate) fn log_based_slice<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        let neg: Vec<S> = x.iter().map(|v| -v.clone()).collect();
        self.bch_slice(&neg, y)
    }

    /// `|log(x⁻¹y)|`.
    pub fn quasi_distance<S: Scalar>(
        &self,
        x: &GroupPoint<S>,
        y: &GroupPoint<S>,
    ) -> Result<f64, AlgebraError> {
        let v = self.log_based(x, y)?;
        Ok(self.homogeneous_norm(&v))
    }

    /// `|log(x⁻¹y)|^{2m!}`, exact in rational mode.
    pub fn quasi_distance_pow<S: Scalar>(
        &self,
        x: &GroupPoint<S>,
        y: &GroupPoint<S>,
    ) -> Result<S, AlgebraError> {
        let v = self.log_based(x, y)?;
        Ok(self.homogeneous_norm_pow(&v))
    }

    /// Left-invariant frame at `x`: column `i` holds `d/dt log(x·exp(t e_i))` at `t = 0`.
    pub fn left_invariant_frame<S: Scalar>(
        &self,
        x: &GroupPoint<S>,
    ) -> Result<Matrix<S>, AlgebraError> {
        self.check(x.log())?;
        let n = self.dim();
        let table = self.bch_table();
        let mut m: Matrix<S> = Matrix::identity(n);
        for i in 0..n {
            let e = self.basis_vector::<S>(i);
            let lin = table.eval(self, x.coords(), e.coords(), Some(1));
            for (r, v) in lin.into_iter().enumerate() {
                m[(r, i)] = m[(r, i)].clone() + v;
            }
        }
        Ok(m)
    }

    /// Gaussian sample rescaled to `|X| = 1`.
    pub fn sample_unit_sphere<R: Rng + ?Sized>(&self, rng: &mut R) -> AlgebraVector<f64> {
        loop {
            let v: Vec<f64> = (0..self.dim())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let v = AlgebraVector::new(v);
            let r = self.homogeneous_norm(&v);
            if r > 1e-12 {
                return self.dilate_unchecked(&(1.0 / r), &v);
            }
        }
    }
}

/// Empirical constants in `|P(X,Y)| ≤ C(|X|+|Y|)` and `|[X,Y]| ≤ C(|X|+|Y|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BchBoundsReport {
    pub max_p_ratio: f64,
    pub max_bracket_ratio: f64,
    pub samples_used: usize,
    pub samples_skipped: usize,
}

/// Evaluates the BCH growth ratios over sample pairs, skipping `X = Y = 0`.
pub fn verify_bch_bounds<S: Scalar>(
    alg: &CarnotAlgebra,
    samples: &[(AlgebraVector<S>, AlgebraVector<S>)],
) -> Result<BchBoundsReport, AlgebraError> {
    if samples.is_empty() {
        return Err(AlgebraError::Unsupported("need at least one sample".into()));
    }
    let mut rep = BchBoundsReport {
        max_p_ratio: 0.0,
        max_bracket_ratio: 0.0,
        samples_used: 0,
        samples_skipped: 0,
    };
    for (x, y) in samples {
        let denom = alg.homogeneous_norm(x) + alg.homogeneous_norm(y);
        if denom == 0.0 {
            rep.samples_skipped += 1;
            continue;
        }
        let p = alg.bch_p(x, y)?;
        let b = alg.bracket(x, y)?;
        rep.max_p_ratio = rep.max_p_ratio.max(alg.homogeneous_norm(&p) / denom);
        rep.max_bracket_ratio = rep.max_bracket_ratio.max(alg.homogeneous_norm(&b) / denom);
        rep.samples_used += 1;
    }
    Ok(rep)
}

/// `X ∗ Y` on plain coordinate vectors.
pub fn bch_product<S: Scalar>(alg: &CarnotAlgebra, x: &[S], y: &[S]) -> Vec<S> {
    add_slices(x, y)
        .into_iter()
        .zip(alg.bch_p_slice(x, y))
        .map(|(a, b)| a + b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::heisenberg;

    fn q(v: &[i64]) -> GroupPoint<Rational> {
        GroupPoint::exp(AlgebraVector::from_i64(v))
    }

    #[test]
    fn step_two_table_is_half_bracket() {
        let t = BchTable::for_step(2);
        assert_eq!(t.terms().len(), 1);
        assert_eq!(t.terms()[0].coefficient, rat(1, 2));
        assert_eq!(t.terms()[0].word, vec![Letter::X, Letter::Y]);
    }

    #[test]
    fn step_three_matches_classical_coefficients() {
        // P = 1/2[X,Y] + 1/12[X,[X,Y]] − 1/12[Y,[X,Y]] up to degree 3
        let t = BchTable::for_step(3);
        let get = |w: &[Letter]| {
            t.terms()
                .iter()
                .find(|term| term.word == w)
                .map(|term| term.coefficient.clone())
                .unwrap_or_else(Rational::zero)
        };
        use Letter::{X, Y};
        assert_eq!(get(&[X, Y]), rat(1, 2));
        assert_eq!(get(&[X, X, Y]), rat(1, 12));
        assert_eq!(get(&[Y, X, Y]), rat(-1, 12));
    }

    #[test]
    fn heisenberg_products() {
        let h = heisenberg(1);
        assert_eq!(
            h.bch_p(q(&[1, 0, 0]).log(), q(&[0, 1, 0]).log()).unwrap(),
            AlgebraVector::new(vec![rat(0, 1), rat(0, 1), rat(1, 2)])
        );
        let xy = h.mul(&q(&[1, 0, 0]), &q(&[0, 1, 0])).unwrap();
        assert_eq!(xy.coords(), &[rat(1, 1), rat(1, 1), rat(1, 2)]);
        let lb = h.log_based(&q(&[1, 0, 0]), &q(&[1, 1, 0])).unwrap();
        assert_eq!(lb.coords(), &[rat(0, 1), rat(1, 1), rat(-1, 2)]);
        assert!(h.log_based(&xy, &xy).unwrap().is_zero());
    }

    #[test]
    fn inverse_and_identity() {
        let h = heisenberg(2);
        let x = q(&[1, -2, 3, 4, 5]);
        let xi = h.inv(&x).unwrap();
        assert!(h.mul(&x, &xi).unwrap().is_identity());
        assert!(h.bch_p(x.log(), &h.zero()).unwrap().is_zero());
    }

    #[test]
    fn distance_to_center_unit() {
        let h = heisenberg(1);
        let d = h
            .quasi_distance(&GroupPoint::identity(3), &q(&[0, 0, 1]))
            .unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn frame_is_standard_heisenberg_fields() {
        let h = heisenberg(1);
        let x = GroupPoint::exp(AlgebraVector::new(vec![rat(2, 1), rat(4, 1), rat(0, 1)]));
        let f = h.left_invariant_frame(&x).unwrap();
        // X_1 = ∂1 − (y/2)∂3, X_2 = ∂2 + (x/2)∂3
        assert_eq!(f[(2, 0)], rat(-2, 1));
        assert_eq!(f[(2, 1)], rat(1, 1));
        assert_eq!(f[(2, 2)], rat(1, 1));
    }

    #[test]
    fn mismatch_is_an_error() {
        let h = heisenberg(1);
        assert!(h.mul(&q(&[1, 0, 0]), &q(&[1, 0])).is_err());
    }
}
