//! Maps between Carnot groups given by point evaluators in exponential coordinates.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{AlgebraError, CarnotAlgebra, GradedHom};
use crate::bch::GroupPoint;
use crate::linalg::Matrix;

/// Point evaluator on exponential coordinates.
pub type PointFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Full graded matrix of the Pansu differential at a point.
pub type DifferentialFn = dyn Fn(&[f64]) -> Matrix<f64> + Send + Sync;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("point {point:?} lies outside the domain of {map}")]
    Domain { map: String, point: Vec<f64> },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Where a sampled map may be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Everywhere,
    /// Closed coordinate box in exponential coordinates.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Closed quasi-ball `{y : |log(c⁻¹y)| <= radius}`.
    QuasiBall {
        center: Vec<f64>,
        radius: f64,
    },
}

impl Domain {
    pub fn contains(&self, alg: &CarnotAlgebra, y: &[f64]) -> bool {
        match self {
            Domain::Everywhere => true,
            Domain::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b),
            Domain::QuasiBall { center, radius } => {
                let v = alg.log_based_slice(center, y);
                alg.homogeneous_norm_f64(&v) <= *radius
            }
        }
    }
}

/// Map `G → G'` sampled through a thread-safe evaluator.
#[derive(Clone)]
pub struct SampledMap {
    name: String,
    source: Arc<CarnotAlgebra>,
    target: Arc<CarnotAlgebra>,
    eval: Arc<PointFn>,
    domain: Domain,
    differential: Option<Arc<DifferentialFn>>,
}

impl fmt::Debug for SampledMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledMap")
            .field("name", &self.name)
            .field("source", &self.source.name())
            .field("target", &self.target.name())
            .field("domain", &self.domain)
            .field("analytic_differential", &self.differential.is_some())
            .finish()
    }
}

impl SampledMap {
    pub fn new(
        name: impl Into<String>,
        source: Arc<CarnotAlgebra>,
        target: Arc<CarnotAlgebra>,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        SampledMap {
            name: name.into(),
            source,
            target,
            eval: Arc::new(eval),
            domain: Domain::Everywhere,
            differential: None,
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Attaches a closed-form Pansu differential (full `N' × N` graded matrix).
    pub fn with_differential(
        mut self,
        d: impl Fn(&[f64]) -> Matrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.differential = Some(Arc::new(d));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &Arc<CarnotAlgebra> {
        &self.source
    }

    pub fn target(&self) -> &Arc<CarnotAlgebra> {
        &self.target
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.domain.contains(&self.source, x)
    }

    /// Evaluates after checking the domain.
    pub fn eval(&self, x: &GroupPoint<f64>) -> Result<GroupPoint<f64>, MapError> {
        self.source.check(x.log())?;
        Ok(GroupPoint::from_coords(self.eval_coords(x.coords())?))
    }

    pub fn eval_coords(&self, x: &[f64]) -> Result<Vec<f64>, MapError> {
        if !self.in_domain(x) {
            return Err(MapError::Domain {
                map: self.name.clone(),
                point: x.to_vec(),
            });
        }
        Ok((self.eval)(x))
    }

    /// Evaluates without the domain check.
    pub fn eval_raw(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    /// Closed-form Pansu differential at `x`, if one was attached.
    pub fn analytic_differential(&self, x: &[f64]) -> Option<Matrix<f64>> {
        self.differential.as_ref().map(|d| d(x))
    }

    /// `ℓ_b ∘ f ∘ ℓ_a`.
    pub fn translated(
        &self,
        a: &GroupPoint<f64>,
        b: &GroupPoint<f64>,
    ) -> Result<SampledMap, MapError> {
        self.source.check(a.log())?;
        self.target.check(b.log())?;
        let (src, tgt) = (self.source.clone(), self.target.clone());
        let inner = self.clone();
        let (a, b) = (a.coords().to_vec(), b.coords().to_vec());
        let a_inv: Vec<f64> = a.iter().map(|v| -v).collect();
        let domain = match &self.domain {
            Domain::Everywhere => Domain::Everywhere,
            Domain::QuasiBall { center, radius } => Domain::QuasiBall {
                center: src.bch_slice(&a_inv, center),
                radius: *radius,
            },
            Domain::Box { .. } => {
                return Err(MapError::Unsupported(
                    "translating a box domain is not supported".into(),
                ))
            }
        };
        let (s2, t2, a2) = (src.clone(), tgt.clone(), a.clone());
        let mut out = SampledMap::new(format!("translated({})", self.name), src, tgt, move |x| {
            let y = inner.eval_raw(&s2.bch_slice(&a2, x));
            t2.bch_slice(&b, &y)
        })
        .with_domain(domain);
        if let Some(d) = self.differential.clone() {
            let s3 = self.source.clone();
            out = out.with_differential(move |x| d(&s3.bch_slice(&a, x)));
        }
        Ok(out)
    }

    /// `h = δ_{1/r} ∘ f ∘ δ_r`.
    pub fn conjugated_by_dilation(&self, r: f64) -> Result<SampledMap, MapError> {
        if r <= 0.0 {
            return Err(AlgebraError::NonPositiveDilation.into());
        }
        let (src, tgt) = (self.source.clone(), self.target.clone());
        let inner = self.clone();
        let domain = match &self.domain {
            Domain::Everywhere => Domain::Everywhere,
            Domain::Box { .. } => {
                return Err(MapError::Unsupported(
                    "dilating a box domain is not supported".into(),
                ))
            }
            Domain::QuasiBall { center, radius } => Domain::QuasiBall {
                center: dilate_slice(&src, 1.0 / r, center),
                radius: radius / r,
            },
        };
        let (s2, t2) = (src.clone(), tgt.clone());
        let mut out = SampledMap::new(format!("conj({}, {r})", self.name), src, tgt, move |x| {
            dilate_slice(&t2, 1.0 / r, &inner.eval_raw(&dilate_slice(&s2, r, x)))
        })
        .with_domain(domain);
        if let Some(d) = self.differential.clone() {
            let s3 = self.source.clone();
            out = out.with_differential(move |x| d(&dilate_slice(&s3, r, x)));
        }
        Ok(out)
    }

    /// `Φ ∘ f` for a graded homomorphism `Φ` out of the target.
    pub fn then_hom(&self, phi: &GradedHom<f64>) -> Result<SampledMap, MapError> {
        if **phi.source() != *self.target {
            return Err(MapError::Unsupported(
                "homomorphism source differs from the map target".into(),
            ));
        }
        let inner = self.clone();
        let m = phi.matrix().clone();
        let m2 = m.clone();
        let mut out = SampledMap::new(
            format!("hom∘{}", self.name),
            self.source.clone(),
            phi.target().clone(),
            move |x| m.mul_vec(&inner.eval_raw(x)),
        )
        .with_domain(self.domain.clone());
        if let Some(d) = self.differential.clone() {
            out = out.with_differential(move |x| m2.mul_mat(&d(x)));
        }
        Ok(out)
    }

    /// `Φ ∘ f ∘ Φ⁻¹` for a graded automorphism `Φ`; the map must be defined everywhere.
    pub fn conjugated_by_hom(&self, phi: &GradedHom<f64>) -> Result<SampledMap, MapError> {
        if *self.source != *self.target
            || **phi.source() != *self.source
            || **phi.target() != *self.source
        {
            return Err(MapError::Unsupported(
                "conjugation needs an automorphism of the map's algebra".into(),
            ));
        }
        if !matches!(self.domain, Domain::Everywhere) {
            return Err(MapError::Unsupported(
                "conjugation needs a map defined everywhere".into(),
            ));
        }
        let inv = phi
            .inverse()
            .map_err(|e| MapError::Unsupported(format!("conjugating homomorphism: {e}")))?;
        let (m, minv) = (phi.matrix().clone(), inv.matrix().clone());
        let (m2, minv2) = (m.clone(), minv.clone());
        let inner = self.clone();
        let mut out = SampledMap::new(
            format!("conj({})", self.name),
            self.source.clone(),
            self.target.clone(),
            move |x| m.mul_vec(&inner.eval_raw(&minv.mul_vec(x))),
        );
        if let Some(d) = self.differential.clone() {
            out = out.with_differential(move |x| m2.mul_mat(&d(&minv2.mul_vec(x))).mul_mat(&minv2));
        }
        Ok(out)
    }
}

/// `δ_r` on a coordinate slice.
pub fn dilate_slice(alg: &CarnotAlgebra, r: f64, x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, v)| v * r.powi(alg.layer_of(i) as i32))
        .collect()
}

/// The constant map with value `c`.
pub fn constant(source: Arc<CarnotAlgebra>, target: Arc<CarnotAlgebra>, c: Vec<f64>) -> SampledMap {
    let n = source.dim();
    let nt = target.dim();
    SampledMap::new("constant", source, target, move |_| c.clone())
        .with_differential(move |_| Matrix::zeros(nt, n))
}

/// `exp ∘ Φ ∘ log` for a graded homomorphism `Φ`.
pub fn from_hom(phi: &GradedHom<f64>) -> SampledMap {
    let m = phi.matrix().clone();
    let m2 = m.clone();
    SampledMap::new(
        "hom",
        phi.source().clone(),
        phi.target().clone(),
        move |x| m.mul_vec(x),
    )
    .with_differential(move |_| m2.clone())
}

pub fn identity(alg: Arc<CarnotAlgebra>) -> SampledMap {
    let n = alg.dim();
    SampledMap::new("identity", alg.clone(), alg, |x| x.to_vec())
        .with_differential(move |_| Matrix::identity(n))
}

/// `δ_λ`.
pub fn dilation(alg: Arc<CarnotAlgebra>, lambda: f64) -> Result<SampledMap, MapError> {
    let phi = GradedHom::dilation(alg, &lambda)?;
    let mut f = from_hom(&phi);
    f.name = format!("dilation({lambda})");
    Ok(f)
}

/// Left translation `ℓ_a`.
pub fn left_translation(alg: Arc<CarnotAlgebra>, a: Vec<f64>) -> Result<SampledMap, MapError> {
    alg.check(&crate::AlgebraVector::new(a.clone()))?;
    let n = alg.dim();
    let a2 = alg.clone();
    Ok(
        SampledMap::new("left_translation", alg.clone(), alg, move |x| {
            a2.bch_slice(&a, x)
        })
        .with_differential(move |_| Matrix::identity(n)),
    )
}

fn is_first_heisenberg(alg: &CarnotAlgebra) -> bool {
    if alg.layer_dims() != [2, 1] {
        return false;
    }
    let b = alg.bracket_slice(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
    b == [0.0, 0.0, 1.0]
}

/// Contact shear `(x, y, t) ↦ (x, y + εx², t + εx³/6)` of the first Heisenberg group.
///
/// Its Pansu differential has horizontal block `[[1, 0], [2εx, 1]]` and
/// vertical entry 1.
pub fn contact_shear(alg: Arc<CarnotAlgebra>, eps: f64) -> Result<SampledMap, MapError> {
    if !is_first_heisenberg(&alg) {
        return Err(MapError::Unsupported(format!(
            "contact shear needs the first Heisenberg algebra with [e1,e2] = e3, got {}",
            alg.name()
        )));
    }
    Ok(SampledMap::new(
        format!("contact_shear({eps})"),
        alg.clone(),
        alg,
        move |p| {
            let x = p[0];
            vec![x, p[1] + eps * x * x, p[2] + eps * x * x * x / 6.0]
        },
    )
    .with_differential(move |p| {
        Matrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![2.0 * eps * p[0], 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
    }))
}

/// Contact map of the first Heisenberg group with conformal factor `1 + 2εs`, `s = t + xy/2`.
///
/// In the coordinates `(x, y, s)` it is `(x(1 + 2εs), y, s + εs²)`. Its Pansu
/// differential has horizontal block `[[1 + 2εs, 2εx²], [0, 1]]` and vertical
/// entry `1 + 2εs`.
pub fn contact_scaling(alg: Arc<CarnotAlgebra>, eps: f64) -> Result<SampledMap, MapError> {
    if !is_first_heisenberg(&alg) {
        return Err(MapError::Unsupported(format!(
            "contact scaling needs the first Heisenberg algebra with [e1,e2] = e3, got {}",
            alg.name()
        )));
    }
    Ok(SampledMap::new(
        format!("contact_scaling({eps})"),
        alg.clone(),
        alg,
        move |p| {
            let s = p[2] + p[0] * p[1] / 2.0;
            let (x, y, s2) = (p[0] * (1.0 + 2.0 * eps * s), p[1], s + eps * s * s);
            vec![x, y, s2 - x * y / 2.0]
        },
    )
    .with_differential(move |p| {
        let lambda = 1.0 + 2.0 * eps * (p[2] + p[0] * p[1] / 2.0);
        Matrix::from_rows(vec![
            vec![lambda, 2.0 * eps * p[0] * p[0], 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, lambda],
        ])
    }))
}

/// `x ↦ x · exp(q(π_1 log x))` with `q` quadratic from `V_1` to `V_1`.
///
/// `coeffs[a][b][c]` is the coefficient of `x_b x_c` in component `a`.
pub fn quadratic_right_perturbation(
    alg: Arc<CarnotAlgebra>,
    coeffs: Vec<Vec<Vec<f64>>>,
) -> Result<SampledMap, MapError> {
    let d1 = alg.layer_dims()[0];
    if coeffs.len() != d1
        || coeffs
            .iter()
            .any(|m| m.len() != d1 || m.iter().any(|r| r.len() != d1))
    {
        return Err(MapError::Unsupported(format!(
            "quadratic needs {d1}x{d1}x{d1} coefficients"
        )));
    }
    let a2 = alg.clone();
    Ok(SampledMap::new(
        "quadratic_right_perturbation",
        alg.clone(),
        alg,
        move |x| {
            let mut q = vec![0.0; x.len()];
            for (a, qa) in coeffs.iter().enumerate() {
                let mut s = 0.0;
                for b in 0..d1 {
                    for c in 0..d1 {
                        s += qa[b][c] * x[b] * x[c];
                    }
                }
                q[a] = s;
            }
            a2.bch_slice(x, &q)
        },
    ))
}

/// `exp(Φ log x + ε x_N² e_N)`: a graded homomorphism plus a top-layer perturbation.
///
/// Not contact away from `x_N = 0`; its abelianization still equals that of `Φ`.
pub fn vertical_square_perturbation(phi: &GradedHom<f64>, eps: f64) -> SampledMap {
    let m = phi.matrix().clone();
    let (n, nt) = (phi.source().dim(), phi.target().dim());
    SampledMap::new(
        format!("vertical_square({eps})"),
        phi.source().clone(),
        phi.target().clone(),
        move |x| {
            let mut y = m.mul_vec(x);
            y[nt - 1] += eps * x[n - 1] * x[n - 1];
            y
        },
    )
}

/// Multilinear interpolation of values on a tensor grid in exponential coordinates.
#[derive(Debug, Clone)]
pub struct TabulatedMap {
    axes: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl TabulatedMap {
    /// Builds from scattered rows `(x, f(x))` that must fill a full tensor grid.
    pub fn from_rows(n: usize, rows: &[(Vec<f64>, Vec<f64>)]) -> Result<Self, MapError> {
        if rows.is_empty() {
            return Err(MapError::Unsupported("tabulated map has no rows".into()));
        }
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); n];
        for (x, _) in rows {
            if x.len() != n {
                return Err(MapError::Unsupported(format!(
                    "row has {} domain coordinates, expected {n}",
                    x.len()
                )));
            }
            for (axis, v) in axes.iter_mut().zip(x) {
                axis.push(*v);
            }
        }
        for axis in &mut axes {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
            if axis.len() < 2 {
                return Err(MapError::Unsupported(
                    "each axis needs at least two grid values".into(),
                ));
            }
        }
        let total: usize = axes.iter().map(Vec::len).product();
        if total != rows.len() {
            return Err(MapError::Unsupported(format!(
                "{} rows do not form a full tensor grid of {total} nodes",
                rows.len()
            )));
        }
        let mut values = vec![Vec::new(); total];
        let mut seen = vec![false; total];
        for (x, y) in rows {
            let mut idx = 0;
            for (axis, v) in axes.iter().zip(x) {
                let k = axis
                    .binary_search_by(|a| a.total_cmp(v))
                    .expect("value taken from this axis");
                idx = idx * axis.len() + k;
            }
            if seen[idx] {
                return Err(MapError::Unsupported(format!("duplicate grid node {x:?}")));
            }
            seen[idx] = true;
            values[idx] = y.clone();
        }
        let m = values[0].len();
        if values.iter().any(|v| v.len() != m) {
            return Err(MapError::Unsupported(
                "rows have differing range dimension".into(),
            ));
        }
        Ok(TabulatedMap { axes, values })
    }

    pub fn domain(&self) -> Domain {
        Domain::Box {
            lo: self.axes.iter().map(|a| a[0]).collect(),
            hi: self
                .axes
                .iter()
                .map(|a| *a.last().expect("nonempty axis"))
                .collect(),
        }
    }

    pub fn range_dim(&self) -> usize {
        self.values[0].len()
    }

    /// Interpolated value; points outside the box are clamped to it.
    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let n = self.axes.len();
        let mut lower = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for (axis, &v) in self.axes.iter().zip(x) {
            let k = match axis.partition_point(|a| *a <= v) {
                0 => 0,
                p if p >= axis.len() => axis.len() - 2,
                p => p - 1,
            };
            let t = ((v - axis[k]) / (axis[k + 1] - axis[k])).clamp(0.0, 1.0);
            lower.push(k);
            frac.push(t);
        }
        let mut out = vec![0.0; self.range_dim()];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = 0;
            for d in 0..n {
                let up = (corner >> d) & 1;
                w *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
                idx = idx * self.axes[d].len() + lower[d] + up;
            }
            if w != 0.0 {
                for (o, v) in out.iter_mut().zip(&self.values[idx]) {
                    *o += w * v;
                }
            }
        }
        out
    }

    pub fn into_map(
        self,
        source: Arc<CarnotAlgebra>,
        target: Arc<CarnotAlgebra>,
    ) -> Result<SampledMap, MapError> {
        if self.axes.len() != source.dim() || self.range_dim() != target.dim() {
            return Err(MapError::Unsupported(
                "table dimensions differ from the algebras".into(),
            ));
        }
        let domain = self.domain();
        Ok(
            SampledMap::new("tabulated", source, target, move |x| self.interpolate(x))
                .with_domain(domain),
        )
    }
}
