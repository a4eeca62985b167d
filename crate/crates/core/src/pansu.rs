//! Pansu differentials, rescaled maps, Pansu pullbacks of forms and distortion.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{AlgebraError, CarnotAlgebra, GradedHom};
use crate::bch::GroupPoint;
use crate::exterior::{FormError, GradedForm};
use crate::linalg::Matrix;
use crate::mollifier::{
    default_nodes_per_axis, dilate_slice, spectral_norm, Domain, MapError, MollKernel,
    MollifyError, SampledMap,
};

/// Default central-difference step for horizontal derivatives.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Bracket/contact defect above which a horizontal block is rejected.
pub const EXTENSION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PansuError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("map is not contact at the base point (defect {defect:e} > {tol:e})")]
    NotContact { defect: f64, tol: f64 },
    #[error("{0}")]
    Probe(String),
}

impl From<MollifyError> for PansuError {
    fn from(e: MollifyError) -> Self {
        PansuError::Probe(e.to_string())
    }
}

/// How a differential was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    /// Horizontal central differences plus graded extension.
    Analytic,
    /// Formula attached to the map.
    ClosedForm,
    /// Read off the rescaled map `f_{x,r}` at a finite `r`.
    RescaledEstimate { r: f64 },
}

/// `D_P f(x)` as a graded homomorphism.
#[derive(Debug, Clone)]
pub struct PansuDifferential {
    pub base: GroupPoint<f64>,
    pub hom: GradedHom<f64>,
    pub provenance: Provenance,
    /// Max of the extension defect and the non-horizontal part of the derivative.
    pub residual: f64,
}

impl PansuDifferential {
    pub fn matrix(&self) -> &Matrix<f64> {
        self.hom.matrix()
    }

    pub fn is_zero(&self) -> bool {
        self.hom.matrix().max_abs() == 0.0
    }
}

/// `f_{x,r} = δ_{1/r} ∘ ℓ_{f(x)⁻¹} ∘ f ∘ ℓ_x ∘ δ_r`.
pub fn rescaled_map(f: &SampledMap, x: &GroupPoint<f64>, r: f64) -> Result<SampledMap, PansuError> {
    if !(r > 0.0) {
        return Err(AlgebraError::NonPositiveDilation.into());
    }
    let src = f.source().clone();
    let tgt = f.target().clone();
    src.check(x.log())?;
    let base = f.eval_coords(x.coords())?;
    let xc = x.coords().to_vec();
    let domain = match f.domain() {
        Domain::Everywhere => Domain::Everywhere,
        Domain::QuasiBall { center, radius } => Domain::QuasiBall {
            center: dilate_slice(&src, 1.0 / r, &src.log_based_slice(&xc, center)),
            radius: radius / r,
        },
        Domain::Box { .. } => {
            return Err(
                MapError::Unsupported("rescaling a box domain is not supported".into()).into(),
            )
        }
    };
    let inner = f.clone();
    let (s2, t2) = (src.clone(), tgt.clone());
    Ok(
        SampledMap::new(format!("rescaled({}, {r})", f.name()), src, tgt, move |v| {
            let y = inner.eval_raw(&s2.bch_slice(&xc, &dilate_slice(&s2, r, v)));
            dilate_slice(&t2, 1.0 / r, &t2.log_based_slice(&base, &y))
        })
        .with_domain(domain),
    )
}

/// Left-invariant derivatives `X_a f(x)` in the chart `log(f(x)⁻¹ ·)` by central differences.
///
/// Column `a` is the derivative along basis direction `a` of the source.
pub fn left_invariant_jacobian(
    f: &SampledMap,
    x: &[f64],
    steps: &[f64],
) -> Result<Matrix<f64>, PansuError> {
    let (src, tgt) = (f.source(), f.target());
    let base = f.eval_coords(x)?;
    let mut jac = Matrix::zeros(tgt.dim(), src.dim());
    for (a, &h) in steps.iter().enumerate() {
        if !(h > 0.0) {
            return Err(PansuError::NonPositiveStep(h));
        }
        let mut e = vec![0.0; src.dim()];
        e[a] = h;
        let plus = f.eval_coords(&src.bch_slice(x, &e))?;
        e[a] = -h;
        let minus = f.eval_coords(&src.bch_slice(x, &e))?;
        let wp = tgt.log_based_slice(&base, &plus);
        let wm = tgt.log_based_slice(&base, &minus);
        for r in 0..tgt.dim() {
            jac[(r, a)] = (wp[r] - wm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `D_P f(x)` from horizontal central differences with step `h`.
///
/// The horizontal block is extended to the unique graded homomorphism. The
/// residual combines the extension defect with the vertical components of the
/// horizontal derivatives, which vanish for contact maps.
pub fn pansu_differential_analytic(
    f: &SampledMap,
    x: &GroupPoint<f64>,
    h: f64,
) -> Result<PansuDifferential, PansuError> {
    if !(h > 0.0) {
        return Err(PansuError::NonPositiveStep(h));
    }
    let (src, tgt) = (f.source().clone(), f.target().clone());
    src.check(x.log())?;
    let d1 = src.layer_dims()[0];
    let d1t = tgt.layer_dims()[0];
    let jac = left_invariant_jacobian(f, x.coords(), &vec![h; d1])?;
    let block = Matrix::from_fn(d1t, d1, |r, c| jac[(r, c)]);
    let scale = block.max_abs().max(1.0);
    let mut vertical: f64 = 0.0;
    for r in d1t..tgt.dim() {
        for c in 0..d1 {
            vertical = vertical.max(jac[(r, c)].abs());
        }
    }
    let tol = EXTENSION_TOL * scale * scale;
    let (hom, defect) = match GradedHom::from_horizontal(src, tgt, &block, tol) {
        Ok(v) => v,
        Err(AlgebraError::ExtensionFailed(defect)) => {
            return Err(PansuError::NotContact { defect, tol })
        }
        Err(e) => return Err(e.into()),
    };
    let residual = defect.max(vertical);
    if residual > tol {
        return Err(PansuError::NotContact {
            defect: residual,
            tol,
        });
    }
    Ok(PansuDifferential {
        base: x.clone(),
        hom,
        provenance: Provenance::Analytic,
        residual,
    })
}

/// Closed-form differential when the map carries one, otherwise [`pansu_differential_analytic`].
pub fn pansu_differential(
    f: &SampledMap,
    x: &GroupPoint<f64>,
    h: f64,
) -> Result<PansuDifferential, PansuError> {
    match f.analytic_differential(x.coords()) {
        Some(m) => {
            let hom = GradedHom::new(f.source().clone(), f.target().clone(), m)?;
            Ok(PansuDifferential {
                base: x.clone(),
                residual: hom.homomorphism_defect(),
                hom,
                provenance: Provenance::ClosedForm,
            })
        }
        None => pansu_differential_analytic(f, x, h),
    }
}

/// Estimate of `D_P f(x)` from the horizontal part of `f_{x,r}(exp(±e_a))`.
pub fn pansu_differential_rescaled(
    f: &SampledMap,
    x: &GroupPoint<f64>,
    r: f64,
) -> Result<PansuDifferential, PansuError> {
    let g = rescaled_map(f, x, r)?;
    let (src, tgt) = (f.source().clone(), f.target().clone());
    let (d1, d1t) = (src.layer_dims()[0], tgt.layer_dims()[0]);
    let mut block = Matrix::zeros(d1t, d1);
    for a in 0..d1 {
        let mut e = vec![0.0; src.dim()];
        e[a] = 1.0;
        let plus = g.eval_coords(&e)?;
        e[a] = -1.0;
        let minus = g.eval_coords(&e)?;
        for r in 0..d1t {
            block[(r, a)] = 0.5 * (plus[r] - minus[r]);
        }
    }
    let (hom, defect) = GradedHom::from_horizontal(src, tgt, &block, f64::INFINITY)?;
    Ok(PansuDifferential {
        base: x.clone(),
        hom,
        provenance: Provenance::RescaledEstimate { r },
        residual: defect,
    })
}

/// Scalar coefficient function on the target group.
pub type CoefficientFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// `ω = a · α` with `α` left-invariant and weight-homogeneous.
#[derive(Clone)]
pub struct CoefficientForm {
    template: GradedForm<f64>,
    weight: i64,
    coefficient: Arc<CoefficientFn>,
}

impl fmt::Debug for CoefficientForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientForm")
            .field("template", &self.template)
            .field("weight", &self.weight)
            .finish()
    }
}

impl CoefficientForm {
    pub fn new(
        template: GradedForm<f64>,
        coefficient: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, FormError> {
        let weight = template.weight().ok_or(FormError::NotHomogeneous)?;
        Ok(CoefficientForm {
            template,
            weight,
            coefficient: Arc::new(coefficient),
        })
    }

    /// Constant coefficient 1.
    pub fn left_invariant(template: GradedForm<f64>) -> Result<Self, FormError> {
        Self::new(template, |_| 1.0)
    }

    pub fn template(&self) -> &GradedForm<f64> {
        &self.template
    }

    pub fn weight(&self) -> i64 {
        self.weight
    }

    pub fn degree(&self) -> usize {
        self.template.degree()
    }

    pub fn coefficient_at(&self, y: &[f64]) -> f64 {
        (self.coefficient)(y)
    }

    /// `a(y) α`.
    pub fn at(&self, y: &[f64]) -> GradedForm<f64> {
        self.template.scale(&self.coefficient_at(y))
    }
}

/// `f_P^*ω(x) = a(y) · D_P f(x)^* α` with `y = f(x)`; zero when `D_P f(x) = 0`.
pub fn pansu_pullback(
    dp: &PansuDifferential,
    omega: &CoefficientForm,
    y: &[f64],
) -> Result<GradedForm<f64>, PansuError> {
    let src = dp.hom.source().clone();
    if dp.is_zero() {
        return Ok(GradedForm::zero(src, omega.degree()));
    }
    let pulled = omega.template().pullback_hom(&dp.hom)?;
    Ok(pulled.scale(&omega.coefficient_at(y)))
}

/// Horizontal operator norm, layer determinant product and distortion quotient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub horizontal_norm: f64,
    /// `Π_j det(V_j block)`; `None` when the source and target layer dimensions differ.
    pub det: Option<f64>,
    /// `|D_h f|^ν / det`, or infinity when `det <= 0`.
    pub k: f64,
}

pub fn distortion(dp: &PansuDifferential) -> Distortion {
    let (src, tgt) = (dp.hom.source(), dp.hom.target());
    let block = dp.hom.layer_block(1);
    let weighted = weighted_block(src, tgt, &block);
    let horizontal_norm = spectral_norm(&weighted);
    let det = if src.layer_dims() == tgt.layer_dims() {
        Some(
            (1..=src.step())
                .map(|j| dp.hom.layer_block(j).determinant())
                .product::<f64>(),
        )
    } else {
        None
    };
    let k = match det {
        Some(d) if d > 0.0 => horizontal_norm.powi(src.homogeneous_dim() as i32) / d,
        _ => f64::INFINITY,
    };
    Distortion {
        horizontal_norm,
        det,
        k,
    }
}

/// `L'^T A L^{-T}` with `G = L L^T` on the horizontal layers, so the spectral norm is the operator norm.
fn weighted_block(src: &CarnotAlgebra, tgt: &CarnotAlgebra, block: &Matrix<f64>) -> Matrix<f64> {
    let to_na = |m: &Matrix<f64>| nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)]);
    let mut a = to_na(block);
    if let Some(g) = tgt.layer_gram_f64(1) {
        if let Some(ch) = nalgebra::Cholesky::new(to_na(g)) {
            a = ch.l().transpose() * a;
        }
    }
    if let Some(g) = src.layer_gram_f64(1) {
        if let Some(ch) = nalgebra::Cholesky::new(to_na(g)) {
            if let Some(inv) = ch.l().transpose().try_inverse() {
                a *= inv;
            }
        }
    }
    Matrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)])
}

/// `L^p` distances between `f_{x,r}` and `D_P f(x)` over a unit-ball grid, per `r`.
#[derive(Debug, Clone)]
pub struct PansuProbe {
    pub differential: PansuDifferential,
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `log distance` against `log r`.
    pub exponent: f64,
}

/// Runs the rescaled-map convergence probe at `x`.
///
/// The differential comes from [`pansu_differential`] with [`DEFAULT_STEP`].
/// Distances use the homogeneous quasi-distance and the midpoint grid of the
/// unit quasi-ball with Lebesgue cell weights.
pub fn pansu_convergence_probe(
    f: &SampledMap,
    x: &GroupPoint<f64>,
    rs: &[f64],
    p: f64,
) -> Result<PansuProbe, PansuError> {
    if !(p >= 1.0) {
        return Err(PansuError::Probe(format!(
            "exponent p must be at least 1, got {p}"
        )));
    }
    let dp = pansu_differential(f, x, DEFAULT_STEP)?;
    let src = f.source().clone();
    let tgt = f.target().clone();
    let grid = MollKernel::new(src.clone(), default_nodes_per_axis(src.dim()).min(7))?;
    let m = dp.matrix().clone();
    let mut rows = Vec::with_capacity(rs.len());
    for &r in rs {
        let g = rescaled_map(f, x, r)?;
        let mut acc = 0.0;
        for v in grid.nodes() {
            let y = g.eval_coords(v)?;
            let phi = m.mul_vec(v);
            let d = tgt.homogeneous_norm_f64(&tgt.log_based_slice(&phi, &y));
            acc += d.powf(p);
        }
        rows.push((r, (acc * grid.cell_volume()).powf(1.0 / p)));
    }
    let exponent = fit_exponent(&rows);
    Ok(PansuProbe {
        differential: dp,
        rows,
        exponent,
    })
}

/// Least-squares slope of `ln y` against `ln x` over rows with `y > 0`.
///
/// Infinite when fewer than two rows are positive.
pub fn fit_exponent(rows: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return f64::INFINITY;
    }
    sxy / sxx
}
