//! Convergence of `f_ρ^*ω ∧ γ` to the Pansu pullback `f_P^*ω ∧ γ`.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::algebra::CarnotAlgebra;
use crate::exterior::GradedForm;
use crate::linalg::Matrix;
use crate::mollifier::{dilate_slice, mollify_coords, MollKernel, SampledMap};
use crate::pansu::{
    fit_exponent, pansu_differential, pansu_pullback, CoefficientForm, DEFAULT_STEP,
};

use super::config::{ExperimentConfig, GridSpec};
use super::maps::{build_map, parse_form};
use super::report::{fmt_f64, Check, Report, ReportRow};
use super::HarnessError;

/// Relative finite-difference step of the mollified map, per layer: `h_j = ρ^j / 20`.
pub const FD_FRACTION: f64 = 1.0 / 20.0;

/// Pointwise errors below this multiple of the Pansu-side scale count as rounding.
pub const ROUNDING_FLOOR: f64 = 1e-9;

/// Everything the approximation experiment needs.
#[derive(Debug, Clone)]
pub struct ApproxSetup {
    pub id: String,
    pub map: SampledMap,
    /// `ω = a α` on the target.
    pub omega: CoefficientForm,
    /// Left-invariant `γ` on the source.
    pub gamma: GradedForm<f64>,
    pub grid: GridSpec,
    pub rhos: Vec<f64>,
    pub p: f64,
    pub m: Option<f64>,
    pub kernel_nodes: usize,
    pub omega_continuous: bool,
    pub map_sobolev: bool,
    pub timings: bool,
}

/// One hypothesis of the convergence result, with its margin.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub label: &'static str,
    pub holds: bool,
    /// Slack in the inequality; `None` for caller assertions.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub rho: f64,
    /// `L^s` Riemann sum of the pointwise error.
    pub norm: f64,
    pub max_error: f64,
    /// Largest coefficient of `f_P^*ω ∧ γ` on the grid.
    pub pansu_max: f64,
    pub runtime_ms: Option<u128>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub id: String,
    pub s: f64,
    pub hypotheses: Vec<Hypothesis>,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares decay exponent of the norms in `ρ`.
    pub exponent: f64,
    pub monotone: bool,
    /// `wt ω + wt γ < -ν`: the Pansu side must vanish identically.
    pub deficit: bool,
    /// Largest relative error of the dilation scaling identity, when checked.
    pub scaling_error: Option<f64>,
}

impl ConvergenceReport {
    pub fn final_over_initial(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if a.norm > 0.0 => b.norm / a.norm,
            _ => 0.0,
        }
    }

    /// Every pointwise error is at rounding level, so there is nothing left to decrease.
    pub fn at_rounding_level(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.max_error <= ROUNDING_FLOOR * r.pansu_max.max(1.0))
    }

    pub fn pansu_vanishes(&self) -> bool {
        self.rows.iter().all(|r| r.pansu_max == 0.0)
    }

    pub fn to_report(&self) -> Report {
        let rows = self
            .rows
            .iter()
            .map(|r| ReportRow {
                experiment: self.id.clone(),
                level: fmt_f64(r.rho),
                norm: r.norm,
                max_error: r.max_error,
                runtime_ms: r.runtime_ms,
            })
            .collect();
        let mut checks = vec![Check::new(
            "monotone decrease",
            self.monotone || self.at_rounding_level(),
            format!(
                "fitted exponent {:.4}, final/initial {:.4e}, max error at rounding level: {}",
                self.exponent,
                self.final_over_initial(),
                self.at_rounding_level()
            ),
        )];
        if self.deficit {
            checks.push(Check::new(
                "pansu side vanishes",
                self.pansu_vanishes(),
                "weight-deficit case",
            ));
        }
        if let Some(e) = self.scaling_error {
            checks.push(Check::new(
                "scaling identity",
                e <= 1e-6,
                format!("max relative error {e:.3e}"),
            ));
        }
        let mut notes: Vec<String> = self
            .hypotheses
            .iter()
            .map(|h| match h.margin {
                Some(m) => format!(
                    "hypothesis [{}] {}: margin {m}",
                    h.label,
                    if h.holds { "holds" } else { "FAILS" }
                ),
                None => format!(
                    "hypothesis [{}] {} (caller assertion)",
                    h.label,
                    if h.holds { "asserted" } else { "NOT asserted" }
                ),
            })
            .collect();
        notes.push(format!("s = {}", self.s));
        Report {
            rows,
            checks,
            notes,
        }
    }
}

/// The five hypothesis bullets with their margins.
pub fn check_hypotheses(setup: &ApproxSetup) -> Vec<Hypothesis> {
    let src = setup.map.source();
    let nu = src.homogeneous_dim() as f64;
    let w_omega = setup.omega.weight() as f64;
    let w_gamma = setup.gamma.weight().unwrap_or(i64::MAX) as f64;
    let inv_m = setup.m.map(|m| 1.0 / m).unwrap_or(0.0);
    vec![
        Hypothesis {
            label: "wt ω + wt γ <= -ν",
            holds: w_omega + w_gamma <= -nu,
            margin: Some(-nu - (w_omega + w_gamma)),
        },
        Hypothesis {
            label: "p >= -wt ω > 0",
            holds: w_omega < 0.0 && setup.p >= -w_omega,
            margin: Some(setup.p + w_omega),
        },
        Hypothesis {
            label: "1/p <= 1/m + 1/ν",
            holds: 1.0 / setup.p <= inv_m + 1.0 / nu,
            margin: Some(inv_m + 1.0 / nu - 1.0 / setup.p),
        },
        Hypothesis {
            label: "ω has continuous bounded coefficients",
            holds: setup.omega_continuous,
            margin: None,
        },
        Hypothesis {
            label: "f is locally W^{1,p} near the grid",
            holds: setup.map_sobolev,
            margin: None,
        },
    ]
}

/// Cell centres of the grid and the cell volume.
pub fn grid_points(grid: &GridSpec) -> Result<(Vec<Vec<f64>>, f64), HarnessError> {
    let n = grid.lo.len();
    if grid.hi.len() != n || grid.n == 0 {
        return Err(HarnessError::Config(
            "grid needs matching lo/hi and n >= 1".into(),
        ));
    }
    let widths: Vec<f64> = grid
        .lo
        .iter()
        .zip(&grid.hi)
        .map(|(a, b)| (b - a) / grid.n as f64)
        .collect();
    if widths.iter().any(|w| !(*w > 0.0)) {
        return Err(HarnessError::Config(
            "grid needs lo < hi in every coordinate".into(),
        ));
    }
    let total = grid.n.pow(n as u32);
    let mut pts = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut x = vec![0.0; n];
        for a in (0..n).rev() {
            let i = idx % grid.n;
            idx /= grid.n;
            x[a] = grid.lo[a] + (i as f64 + 0.5) * widths[a];
        }
        pts.push(x);
    }
    Ok((pts, widths.iter().product()))
}

/// Left-invariant Jacobian of `f_ρ` at `x` with per-layer steps `ρ^j / 20`.
fn mollified_jacobian(
    f: &SampledMap,
    kernel: &MollKernel,
    x: &[f64],
    rho: f64,
) -> Result<(Vec<f64>, Matrix<f64>), HarnessError> {
    let (src, tgt) = (f.source(), f.target());
    let fx = mollify_coords(f, kernel, x, rho)?;
    let mut jac = Matrix::zeros(tgt.dim(), src.dim());
    for a in 0..src.dim() {
        let h = rho.powi(src.layer_of(a) as i32) * FD_FRACTION;
        let mut e = vec![0.0; src.dim()];
        e[a] = h;
        let plus = mollify_coords(f, kernel, &src.bch_slice(x, &e), rho)?;
        e[a] = -h;
        let minus = mollify_coords(f, kernel, &src.bch_slice(x, &e), rho)?;
        let wp = tgt.log_based_slice(&fx, &plus);
        let wm = tgt.log_based_slice(&fx, &minus);
        for r in 0..tgt.dim() {
            jac[(r, a)] = (wp[r] - wm[r]) / (2.0 * h);
        }
    }
    Ok((fx, jac))
}

/// Ordinary pullback `(F^*α ∧ γ)(x)` from a left-invariant Jacobian.
fn ordinary_pullback(
    src: &Arc<CarnotAlgebra>,
    alpha: &GradedForm<f64>,
    jac: &Matrix<f64>,
    gamma: &GradedForm<f64>,
) -> Result<GradedForm<f64>, HarnessError> {
    Ok(alpha.pullback_matrix(src.clone(), jac)?.wedge(gamma)?)
}

struct PointValues {
    error: f64,
    pansu: f64,
}

fn point_values(
    setup: &ApproxSetup,
    kernel: &MollKernel,
    x: &[f64],
    rho: f64,
) -> Result<PointValues, HarnessError> {
    let f = &setup.map;
    let src = f.source();
    let fx = f.eval_coords(x)?;
    let dp = pansu_differential(
        f,
        &crate::bch::GroupPoint::from_coords(x.to_vec()),
        DEFAULT_STEP,
    )?;
    let pansu = pansu_pullback(&dp, &setup.omega, &fx)?.wedge(&setup.gamma)?;
    let (frx, jac) = mollified_jacobian(f, kernel, x, rho)?;
    let ours = ordinary_pullback(src, &setup.omega.at(&frx), &jac, &setup.gamma)?;
    Ok(PointValues {
        error: ours.sub(&pansu).max_abs(),
        pansu: pansu.max_abs(),
    })
}

/// `(f_ρ^*α∧γ)(x)` against `ρ^{-(ν+w_α+w_γ)} (h_1^*α∧γ)(δ_{1/ρ}x)` for top-degree products.
fn scaling_identity_error(
    setup: &ApproxSetup,
    kernel: &MollKernel,
    xs: &[Vec<f64>],
) -> Result<Option<f64>, HarnessError> {
    let src = setup.map.source();
    let alpha = setup.omega.template();
    if alpha.degree() + setup.gamma.degree() != src.dim() {
        return Ok(None);
    }
    let (Some(wa), Some(wg)) = (alpha.weight(), setup.gamma.weight()) else {
        return Ok(None);
    };
    let nu = src.homogeneous_dim() as i64;
    let mut worst: f64 = 0.0;
    for &rho in &setup.rhos {
        let Ok(h) = setup.map.conjugated_by_dilation(rho) else {
            return Ok(None);
        };
        for x in xs {
            let (_, j) = mollified_jacobian(&setup.map, kernel, x, rho)?;
            let lhs = ordinary_pullback(src, alpha, &j, &setup.gamma)?.volume_coefficient();
            let xs1 = dilate_slice(src, 1.0 / rho, x);
            let (_, j1) = mollified_jacobian(&h, kernel, &xs1, 1.0)?;
            let rhs = ordinary_pullback(src, alpha, &j1, &setup.gamma)?.volume_coefficient()
                * rho.powi(-(nu + wa + wg) as i32);
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(Some(worst))
}

/// Runs the experiment after checking the hypotheses.
pub fn run_approximation_experiment(
    setup: &ApproxSetup,
) -> Result<ConvergenceReport, HarnessError> {
    let hypotheses = check_hypotheses(setup);
    for h in &hypotheses {
        log::info!(
            "hypothesis [{}]: {} (margin {:?})",
            h.label,
            h.holds,
            h.margin
        );
    }
    if let Some(h) = hypotheses.iter().find(|h| !h.holds) {
        return Err(HarnessError::Hypothesis(format!(
            "{} (margin {:?})",
            h.label, h.margin
        )));
    }
    if setup.rhos.iter().any(|r| !(*r > 0.0)) {
        return Err(HarnessError::Hypothesis("every ρ must be positive".into()));
    }
    let src = setup.map.source().clone();
    let nu = src.homogeneous_dim() as i64;
    let w_omega = setup.omega.weight();
    let w_gamma = setup.gamma.weight().unwrap_or(0);
    let s = setup.p / (-w_omega) as f64;
    let kernel = MollKernel::new(src.clone(), setup.kernel_nodes)?;
    let (points, cell) = grid_points(&setup.grid)?;
    if points[0].len() != src.dim() {
        return Err(HarnessError::Config(format!(
            "grid has dimension {}, algebra {}",
            points[0].len(),
            src.dim()
        )));
    }
    let mut rows = Vec::with_capacity(setup.rhos.len());
    for &rho in &setup.rhos {
        let start = Instant::now();
        let vals: Vec<PointValues> = points
            .par_iter()
            .map(|x| point_values(setup, &kernel, x, rho))
            .collect::<Result<_, _>>()?;
        let mut acc = 0.0;
        let mut max_error: f64 = 0.0;
        let mut pansu_max: f64 = 0.0;
        for v in &vals {
            acc += v.error.powf(s);
            max_error = max_error.max(v.error);
            pansu_max = pansu_max.max(v.pansu);
        }
        let norm = (acc * cell).powf(1.0 / s);
        log::info!(
            "{}: rho {rho}: norm {norm:e}, max error {max_error:e}",
            setup.id
        );
        rows.push(ConvergenceRow {
            rho,
            norm,
            max_error,
            pansu_max,
            runtime_ms: setup.timings.then(|| start.elapsed().as_millis()),
        });
    }
    let samples: Vec<Vec<f64>> = [0, points.len() / 2, points.len() - 1]
        .iter()
        .map(|&i| points[i].clone())
        .collect();
    let scaling_error = scaling_identity_error(setup, &kernel, &samples)?;
    let monotone = rows.windows(2).all(|w| w[1].norm < w[0].norm);
    let exponent = fit_exponent(&rows.iter().map(|r| (r.rho, r.norm)).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        id: setup.id.clone(),
        s,
        hypotheses,
        rows,
        exponent,
        monotone,
        deficit: w_omega + w_gamma < -nu,
        scaling_error,
    })
}

/// Assembles the setup from a configuration.
pub fn setup_from_config(
    cfg: &ExperimentConfig,
    timings: bool,
) -> Result<ApproxSetup, HarnessError> {
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
    let template = parse_form(&forms.omega, &tgt)?;
    let omega = match forms.coefficient.as_str() {
        "one" => CoefficientForm::left_invariant(template)?,
        "bump" => {
            let b = CoordinateBump::unit(tgt.dim());
            CoefficientForm::new(template, move |y| b.value(y))?
        }
        other => {
            return Err(HarnessError::Config(format!(
                "unknown coefficient '{other}'"
            )))
        }
    };
    let gamma = parse_form(&forms.gamma, &src)?;
    let a = cfg.section(&cfg.approx, "approx")?;
    Ok(ApproxSetup {
        id: cfg.experiment.id.clone(),
        map,
        omega,
        gamma,
        grid: cfg.section(&cfg.grid, "grid")?.clone(),
        rhos: a.rho.clone(),
        p: a.p,
        m: a.m,
        kernel_nodes: a
            .kernel_nodes
            .unwrap_or_else(|| crate::mollifier::default_nodes_per_axis(src.dim())),
        omega_continuous: a.omega_continuous,
        map_sobolev: a.map_sobolev,
        timings,
    })
}

/// Gaussian bump `exp(-|y - c|² / w²)` in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateBump {
    pub center: Vec<f64>,
    pub width: f64,
}

impl CoordinateBump {
    pub fn unit(n: usize) -> Self {
        CoordinateBump {
            center: vec![0.0; n],
            width: 1.0,
        }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let r2: f64 = y
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        (-r2 / (self.width * self.width)).exp()
    }

    /// Euclidean gradient in exponential coordinates.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let v = self.value(y);
        let w2 = self.width * self.width;
        y.iter()
            .zip(&self.center)
            .map(|(a, c)| -2.0 * (a - c) / w2 * v)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{builtin, random_graded_automorphism};
    use crate::mollifier::map::{contact_shear, from_hom};
    use rand::SeedableRng;

    fn setup(map: SampledMap, omega: &str, gamma: &str, rhos: Vec<f64>, n: usize) -> ApproxSetup {
        let src = map.source().clone();
        let tgt = map.target().clone();
        ApproxSetup {
            id: "t".into(),
            omega: CoefficientForm::left_invariant(parse_form(omega, &tgt).unwrap()).unwrap(),
            gamma: parse_form(gamma, &src).unwrap(),
            map,
            grid: GridSpec {
                lo: vec![-0.5; 3],
                hi: vec![0.5; 3],
                n,
            },
            rhos,
            p: 4.0,
            m: None,
            kernel_nodes: 9,
            omega_continuous: true,
            map_sobolev: true,
            timings: false,
        }
    }

    #[test]
    fn automorphism_gives_tiny_norms() {
        let alg = Arc::new(builtin("H1").unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let phi = random_graded_automorphism(alg, &mut rng).unwrap().to_f64();
        let rep =
            run_approximation_experiment(&setup(from_hom(&phi), "vol", "1", vec![0.4, 0.2], 3))
                .unwrap();
        for r in &rep.rows {
            assert!(r.max_error < 1e-6, "{rep:?}");
        }
        assert!(rep.scaling_error.unwrap() < 1e-6);
    }

    #[test]
    fn weight_gate_rejects_bad_forms() {
        let alg = Arc::new(builtin("H1").unwrap());
        let s = setup(contact_shear(alg, 0.2).unwrap(), "1,3", "1", vec![0.4], 2);
        assert!(matches!(
            run_approximation_experiment(&s),
            Err(HarnessError::Hypothesis(_))
        ));
    }

    #[test]
    fn deficit_variant_has_vanishing_pansu_side() {
        let alg = Arc::new(builtin("H1").unwrap());
        let s = setup(
            contact_shear(alg, 0.3).unwrap(),
            "1,3",
            "3",
            vec![0.4, 0.2],
            3,
        );
        let rep = run_approximation_experiment(&s).unwrap();
        assert!(rep.deficit && rep.pansu_vanishes(), "{rep:?}");
    }

    #[test]
    fn grid_is_cell_centred() {
        let (pts, cell) = grid_points(&GridSpec {
            lo: vec![0.0, -1.0],
            hi: vec![1.0, 1.0],
            n: 2,
        })
        .unwrap();
        assert_eq!(
            pts,
            vec![
                vec![0.25, -0.5],
                vec![0.25, 0.5],
                vec![0.75, -0.5],
                vec![0.75, 0.5]
            ]
        );
        assert_eq!(cell, 0.5);
    }
}
