//! Distributional check of `d(f_P^*α ∧ β) = f_P^*(dα) ∧ β`.
//!
//! Both sides are paired with tensor bumps `φ`: the left side as
//! `(-1)^N ∫ f_P^*α ∧ β ∧ dφ`, the right side as `∫ f_P^*(dα) ∧ β φ`,
//! each by the midpoint rule on the support box of `φ`.

use std::time::Instant;

use rayon::prelude::*;

use crate::bch::GroupPoint;
use crate::exterior::GradedForm;
use crate::mollifier::SampledMap;
use crate::pansu::{pansu_differential, DEFAULT_STEP};

use super::approx::CoordinateBump;
use super::config::ExperimentConfig;
use super::maps::{build_map, parse_form};
use super::report::{fmt_f64, Check, Report, ReportRow};
use super::HarnessError;

/// Discrepancies at or below this count as exact zero.
pub const ZERO_TOL: f64 = 1e-9;

/// Largest admissible ratio between successive levels.
pub const RATIO_LIMIT: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct DcheckSetup {
    pub id: String,
    pub map: SampledMap,
    /// Left-invariant part of `α` on the target.
    pub alpha: GradedForm<f64>,
    /// Coefficient of `α`; `None` means constant 1.
    pub coefficient: Option<CoordinateBump>,
    /// Closed left-invariant form on the source.
    pub beta: GradedForm<f64>,
    pub centers: Vec<Vec<f64>>,
    pub half_width: f64,
    pub base: usize,
    pub levels: usize,
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcheckRow {
    pub level: usize,
    pub per_axis: usize,
    /// Max over test functions of `|LHS - RHS|`.
    pub discrepancy: f64,
    /// Max over test functions of `|RHS|`, for scale.
    pub magnitude: f64,
    pub runtime_ms: Option<u128>,
}

#[derive(Debug, Clone)]
pub struct DcheckReport {
    pub id: String,
    pub rows: Vec<DcheckRow>,
}

impl DcheckReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[1].discrepancy / w[0].discrepancy)
            .collect()
    }

    pub fn vanishes(&self) -> bool {
        self.rows.iter().all(|r| r.discrepancy <= ZERO_TOL)
    }

    /// Either identically negligible or shrinking by at least `RATIO_LIMIT` per level.
    pub fn converges(&self) -> bool {
        self.vanishes() || self.ratios().iter().all(|r| *r <= RATIO_LIMIT)
    }

    pub fn to_report(&self) -> Report {
        let rows = self
            .rows
            .iter()
            .map(|r| ReportRow {
                experiment: self.id.clone(),
                level: r.level.to_string(),
                norm: r.magnitude,
                max_error: r.discrepancy,
                runtime_ms: r.runtime_ms,
            })
            .collect();
        let detail = self
            .ratios()
            .iter()
            .map(|r| fmt_f64(*r))
            .collect::<Vec<_>>()
            .join(" ");
        Report {
            rows,
            checks: vec![Check::new(
                "discrepancy vanishes or halves per level",
                self.converges(),
                format!("ratios {detail}"),
            )],
            notes: Vec::new(),
        }
    }
}

fn tensor_bump(x: &[f64], c: &[f64], w: f64) -> (f64, Vec<f64>) {
    let n = x.len();
    let s: Vec<f64> = x.iter().zip(c).map(|(a, b)| (a - b) / w).collect();
    let base: Vec<f64> = s.iter().map(|t| (1.0 - t * t).max(0.0)).collect();
    let val: f64 = base.iter().map(|b| b.powi(4)).product();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let mut g = 4.0 * base[i].powi(3) * (-2.0 * s[i] / w);
        for j in 0..n {
            if j != i {
                g *= base[j].powi(4);
            }
        }
        grad[i] = g;
    }
    (val, grad)
}

/// Left-invariant one-form `Σ_b (X_b u) θ_b` from a coordinate gradient.
fn horizontal_differential(
    alg: &std::sync::Arc<crate::algebra::CarnotAlgebra>,
    y: &[f64],
    grad: &[f64],
) -> Result<GradedForm<f64>, HarnessError> {
    let frame = alg.left_invariant_frame(&GroupPoint::from_coords(y.to_vec()))?;
    let coeffs: Vec<f64> = (0..alg.dim())
        .map(|b| (0..alg.dim()).map(|i| grad[i] * frame[(i, b)]).sum())
        .collect();
    Ok(GradedForm::one_form(alg.clone(), &coeffs))
}

fn check_setup(setup: &DcheckSetup) -> Result<(), HarnessError> {
    let (src, tgt) = (setup.map.source(), setup.map.target());
    if src.dim() != tgt.dim() {
        return Err(HarnessError::Hypothesis(
            "source and target dimensions differ".into(),
        ));
    }
    let n = src.dim();
    if setup.alpha.degree() + setup.beta.degree() + 1 != n {
        return Err(HarnessError::Hypothesis(format!(
            "deg α + deg β = {} but must be N - 1 = {}",
            setup.alpha.degree() + setup.beta.degree(),
            n - 1
        )));
    }
    if !setup.beta.d().is_zero() {
        return Err(HarnessError::Hypothesis("β is not closed".into()));
    }
    let nu = src.homogeneous_dim() as i64;
    match (setup.alpha.weight(), setup.beta.weight()) {
        (Some(wa), Some(wb)) if wa + wb == 1 - nu => Ok(()),
        (wa, wb) => Err(HarnessError::Hypothesis(format!(
            "wt α + wt β = {wa:?} + {wb:?}, need 1 - ν = {}",
            1 - nu
        ))),
    }
}

/// Integrand values `(lhs, rhs)` at `x` for the test function centred at `c`.
fn integrands(setup: &DcheckSetup, x: &[f64], c: &[f64]) -> Result<(f64, f64), HarnessError> {
    let (phi, grad) = tensor_bump(x, c, setup.half_width);
    if phi == 0.0 && grad.iter().all(|g| *g == 0.0) {
        return Ok((0.0, 0.0));
    }
    let f = &setup.map;
    let (src, tgt) = (f.source(), f.target());
    let y = f.eval_coords(x)?;
    let dp = pansu_differential(f, &GroupPoint::from_coords(x.to_vec()), DEFAULT_STEP)?;
    let (a, da) = match &setup.coefficient {
        None => (1.0, GradedForm::zero(tgt.clone(), 1)),
        Some(b) => (
            b.value(&y),
            horizontal_differential(tgt, &y, &b.gradient(&y))?,
        ),
    };
    let dphi = horizontal_differential(src, x, &grad)?;
    let sign = if src.dim() % 2 == 0 { 1.0 } else { -1.0 };
    let lhs = setup
        .alpha
        .scale(&a)
        .pullback_hom(&dp.hom)?
        .wedge(&setup.beta)?
        .wedge(&dphi)?
        .volume_coefficient()
        * sign;
    let d_alpha = da.wedge(&setup.alpha)?.add(&setup.alpha.d().scale(&a));
    let rhs = d_alpha
        .pullback_hom(&dp.hom)?
        .wedge(&setup.beta)?
        .volume_coefficient()
        * phi;
    Ok((lhs, rhs))
}

pub fn run_exterior_derivative_check(setup: &DcheckSetup) -> Result<DcheckReport, HarnessError> {
    check_setup(setup)?;
    let n = setup.map.source().dim();
    if setup.centers.iter().any(|c| c.len() != n) {
        return Err(HarnessError::Config(format!(
            "test-function centres need {n} coordinates"
        )));
    }
    let mut rows = Vec::with_capacity(setup.levels);
    for level in 0..setup.levels {
        let start = Instant::now();
        let per_axis = setup.base << level;
        let h = 2.0 * setup.half_width / per_axis as f64;
        let total = per_axis.pow(n as u32);
        let mut discrepancy: f64 = 0.0;
        let mut magnitude: f64 = 0.0;
        for c in &setup.centers {
            let vals: Vec<(f64, f64)> = (0..total)
                .into_par_iter()
                .map(|mut idx| {
                    let mut x = vec![0.0; n];
                    for a in (0..n).rev() {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        x[a] = c[a] - setup.half_width + (i as f64 + 0.5) * h;
                    }
                    integrands(setup, &x, c)
                })
                .collect::<Result<_, _>>()?;
            let cell = h.powi(n as i32);
            let lhs: f64 = vals.iter().map(|v| v.0).sum::<f64>() * cell;
            let rhs: f64 = vals.iter().map(|v| v.1).sum::<f64>() * cell;
            discrepancy = discrepancy.max((lhs - rhs).abs());
            magnitude = magnitude.max(rhs.abs());
        }
        log::info!("{}: level {level}: discrepancy {discrepancy:e}", setup.id);
        rows.push(DcheckRow {
            level,
            per_axis,
            discrepancy,
            magnitude,
            runtime_ms: setup.timings.then(|| start.elapsed().as_millis()),
        });
    }
    Ok(DcheckReport {
        id: setup.id.clone(),
        rows,
    })
}

/// Three fixed centres near the identity.
pub fn default_centers(n: usize) -> Vec<Vec<f64>> {
    let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
    vec![
        vec![0.0; n],
        (0..n).map(|i| 0.1 * sign(i)).collect(),
        (0..n)
            .map(|i| -0.15 * sign(i + 1) * (i as f64 + 1.0) / n as f64)
            .collect(),
    ]
}

pub fn setup_from_config(
    cfg: &ExperimentConfig,
    timings: bool,
) -> Result<DcheckSetup, HarnessError> {
    use rand::SeedableRng;
    let src = super::io::load_algebra(&cfg.algebra.source, &cfg.base_dir)?;
    let tgt = match &cfg.algebra.target {
        Some(t) => super::io::load_algebra(t, &cfg.base_dir)?,
        None => src.clone(),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed());
    let map = build_map(
        cfg.section(&cfg.map, "map")?,
        src.clone(),
        tgt.clone(),
        cfg,
        &mut rng,
    )?;
    let forms = cfg.section(&cfg.forms, "forms")?;
    let coefficient = match forms.coefficient.as_str() {
        "one" => None,
        "bump" => Some(CoordinateBump::unit(tgt.dim())),
        other => {
            return Err(HarnessError::Config(format!(
                "unknown coefficient '{other}'"
            )))
        }
    };
    let d = cfg.section(&cfg.dcheck, "dcheck")?;
    Ok(DcheckSetup {
        id: cfg.experiment.id.clone(),
        alpha: parse_form(&forms.omega, &tgt)?,
        beta: parse_form(&forms.gamma, &src)?,
        coefficient,
        map,
        centers: d
            .centers
            .clone()
            .unwrap_or_else(|| default_centers(src.dim())),
        half_width: d.half_width,
        base: d.base,
        levels: d.levels,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::builtin;
    use crate::mollifier::map::contact_shear;
    use std::sync::Arc;

    #[test]
    fn bump_gradient_matches_difference_quotient() {
        let c = [0.1, -0.2, 0.0];
        let x = [0.3, 0.1, -0.2];
        let (_, g) = tensor_bump(&x, &c, 0.5);
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (tensor_bump(&xp, &c, 0.5).0 - tensor_bump(&xm, &c, 0.5).0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn weight_condition_is_enforced() {
        let alg = Arc::new(builtin("H1").unwrap());
        let setup = DcheckSetup {
            id: "x".into(),
            map: contact_shear(alg.clone(), 0.2).unwrap(),
            alpha: GradedForm::monomial(alg.clone(), &[0, 1]),
            coefficient: None,
            beta: GradedForm::scalar(alg.clone(), 1.0),
            centers: default_centers(3),
            half_width: 0.5,
            base: 4,
            levels: 1,
            timings: false,
        };
        assert!(matches!(
            run_exterior_derivative_check(&setup),
            Err(HarnessError::Hypothesis(_))
        ));
    }
}
