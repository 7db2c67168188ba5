//! The SOLVE → ESTIMATE → MARK → REFINE loop with Dörfler marking.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::estimator::{estimate, minorant_with, EstimatorConstants, EstimatorReport, MinorantParts};
use crate::geometry::sub;
use crate::spaces::FeField;
use crate::io::{HistoryWriter, IoError};
use crate::manufactured::{triple_norm_error, ManufacturedCase, TripleNormError};
use crate::mesh::{MarkedSet, Mesh, MeshError};
use crate::optimality::{
    assemble_kkt, gauge_fix_v, interpolate_data, solve_optimality, Discretization, OptimalityError,
    OptimalitySolution,
};

#[derive(Debug, Error)]
pub enum AfemError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid configuration: {field} {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("iteration {iteration} failed after {} records: {source}", records.len())]
    Solve {
        iteration: usize,
        records: Vec<ConvergenceRecord>,
        #[source]
        source: OptimalityError,
    },
}

/// Which indicator drives the refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dörfler marking with the majorant indicators `M_T`.
    AdaptiveMajorant,
    /// Dörfler marking with the elementwise exact error.
    AdaptiveExact,
    /// Refine every cell.
    Uniform,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive" | "adaptive-majorant" => Ok(Mode::AdaptiveMajorant),
            "exact" | "adaptive-exact" => Ok(Mode::AdaptiveExact),
            "uniform" => Ok(Mode::Uniform),
            other => Err(format!("unknown mode `{other}` (expected adaptive, exact or uniform)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::AdaptiveMajorant => "adaptive",
            Mode::AdaptiveExact => "exact",
            Mode::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfemConfig {
    pub mode: Mode,
    /// Dörfler bulk parameter in `(0, 1)`.
    pub theta: f64,
    pub kappa: f64,
    /// Subdivisions per axis of the initial mesh.
    pub initial_n: usize,
    /// Maximal number of records (solves).
    pub max_iterations: usize,
    /// A refined mesh above this many unknowns is not solved.
    pub max_dof: usize,
    pub tol_kkt: f64,
    pub tol_aux: f64,
    pub max_solver_iterations: usize,
    pub out_dir: Option<PathBuf>,
    /// Write a VTK snapshot per iteration (when `out_dir` is set).
    pub write_vtk: bool,
    pub deterministic: bool,
    pub constants: EstimatorConstants,
}

impl Default for AfemConfig {
    fn default() -> Self {
        AfemConfig {
            mode: Mode::AdaptiveMajorant,
            theta: 0.5,
            kappa: 1.0,
            initial_n: 6,
            max_iterations: 20,
            max_dof: 150_000,
            tol_kkt: 1e-10,
            tol_aux: 1e-10,
            max_solver_iterations: 100_000,
            out_dir: None,
            write_vtk: true,
            deterministic: true,
            constants: EstimatorConstants::benchmark(),
        }
    }
}

impl AfemConfig {
    pub fn validate(&self) -> Result<(), AfemError> {
        let bad = |field: &'static str, message: String| Err(AfemError::Invalid { field, message });
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta", format!("must lie in (0, 1), got {}", self.theta));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("kappa", format!("must be positive, got {}", self.kappa));
        }
        if self.initial_n == 0 {
            return bad("n", "must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iters", "must be positive".into());
        }
        if !(self.tol_kkt > 0.0 && self.tol_kkt < 1.0) {
            return bad("tol_kkt", format!("must lie in (0, 1), got {}", self.tol_kkt));
        }
        if !(self.tol_aux > 0.0 && self.tol_aux < 1.0) {
            return bad("tol_aux", format!("must lie in (0, 1), got {}", self.tol_aux));
        }
        if self.max_solver_iterations == 0 {
            return bad("max_solver_iters", "must be positive".into());
        }
        if !self.constants.validate() {
            return bad("c_m", "estimator constants must be positive".into());
        }
        Ok(())
    }
}

/// One solve of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    pub dof: usize,
    pub n_cells: usize,
    pub error_h: f64,
    pub error_j: f64,
    pub total: f64,
    pub m_h: Option<f64>,
    /// Minorant with the exact adjoint error as candidate, optimally scaled.
    pub m_minus: Option<f64>,
    pub kkt_iterations: usize,
    pub kkt_residual: f64,
    pub aux_converged: bool,
    /// Cells marked after this solve, and how many of them lie in `ω`.
    pub marked: usize,
    pub marked_in_omega: usize,
    pub seconds: f64,
}

impl ConvergenceRecord {
    pub fn bound_holds(&self) -> bool {
        self.m_h.is_none_or(|m| self.total <= m + 1e-8 * (1.0 + m))
    }
}

/// Minimal prefix of the cells sorted by descending indicator (ties by
/// index) whose indicators sum to at least `θ` times the total.
pub fn dorfler_mark(indicators: &[f64], theta: f64) -> MarkedSet {
    assert!(indicators.iter().all(|v| *v >= 0.0 && v.is_finite()), "indicators must be finite and nonnegative");
    let total: f64 = indicators.iter().sum();
    if total == 0.0 {
        return MarkedSet::new(Vec::new(), indicators.len()).expect("empty set is valid");
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let target = theta * total;
    let mut acc = 0.0;
    let mut chosen = Vec::new();
    for c in order {
        if acc >= target {
            break;
        }
        acc += indicators[c];
        chosen.push(c);
    }
    MarkedSet::new(chosen, indicators.len()).expect("indices are distinct and in range")
}

/// Everything computed on one mesh.
pub struct IterationState {
    pub disc: Discretization,
    pub solution: OptimalitySolution,
    pub error: TripleNormError,
    pub estimate: Option<EstimatorReport>,
}

/// Result of a completed run.
pub struct AfemOutcome {
    pub records: Vec<ConvergenceRecord>,
    pub last: Option<IterationState>,
}

impl AfemOutcome {
    /// Every solve converged and the majorant bound held on every record.
    pub fn success(&self) -> bool {
        self.records.iter().all(|r| r.bound_holds() && r.aux_converged)
    }
}

/// Solve, evaluate errors and bounds on one mesh.
pub fn solve_on_mesh(
    mesh: Arc<Mesh>,
    case: &ManufacturedCase,
    config: &AfemConfig,
    with_majorant: bool,
) -> Result<(IterationState, ConvergenceRecord), OptimalityError> {
    let start = std::time::Instant::now();
    let disc = Discretization::new(mesh)?;
    let data = interpolate_data(case, &disc)?;
    let sys = gauge_fix_v(assemble_kkt(case, &disc, &data)?);
    let sol = solve_optimality(&disc, &data, &sys, config.tol_kkt, config.max_solver_iterations)?;
    let error = triple_norm_error(
        &disc.mesh,
        |c, g, l| sol.h_bar(c, g, l),
        |c, g, l| sol.zeta_j(&disc.map, c, g, l),
        case.kappa,
    );
    let (est, aux_converged) = if with_majorant {
        let (rep, _, _) = estimate(&disc, &sol, case, &config.constants, config.tol_aux, config.max_solver_iterations)?;
        let ok = rep.aux_reports.iter().all(|r| r.converged);
        (Some(rep), ok)
    } else {
        (None, true)
    };
    let parts = exact_proxy_minorant(&disc, &sol, case)?;
    let record = ConvergenceRecord {
        iteration: 0,
        dof: disc.dof_count(),
        n_cells: disc.mesh.n_cells(),
        error_h: error.error_h,
        error_j: error.error_j,
        total: error.total,
        m_h: est.as_ref().map(|r| r.m_h),
        m_minus: Some(parts.best()),
        kkt_iterations: sol.report.iterations,
        kkt_residual: sol.report.relative_residual,
        aux_converged,
        marked: 0,
        marked_in_omega: 0,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((
        IterationState {
            disc,
            solution: sol,
            error,
            estimate: est,
        },
        record,
    ))
}

/// Minorant parts for the benchmark with `Φ = Ē − Ē_h − ∇(E₀ v̄_h)`, where
/// `E₀ v̄_h` is the nodal extension of `v̄_h` by zero (`ω̄` lies inside `Ω`)
/// and the exact multiplier is constant.
pub fn exact_proxy_minorant(
    disc: &Discretization,
    sol: &OptimalitySolution,
    case: &ManufacturedCase,
) -> Result<MinorantParts, OptimalityError> {
    let mesh = &disc.mesh;
    let mut ext = vec![0.0; disc.u_space.n_dofs()];
    for (sv, &pv) in disc.map.vertex_to_parent.iter().enumerate() {
        let Some(d) = disc.u_space.entity_dof(pv) else {
            return Err(OptimalityError::Dimension("control domain touches the boundary".into()));
        };
        ext[d] = sol.v.entity_value(sv);
    }
    let ext = FeField::from_values(disc.u_space.clone(), ext)?;
    Ok(minorant_with(
        mesh,
        case,
        |c, g, l| sol.h_bar(c, g, l),
        |c, g, l| sol.zeta_j(&disc.map, c, g, l),
        |c, g, l| {
            let e = sub(ManufacturedCase::e_bar(g.point(l), mesh.mu(c)), sol.e.eval_vector(c, g, l));
            sub(e, ext.grad(c, g))
        },
        |c, g, l| sub(ManufacturedCase::rot_e_bar(g.point(l), mesh.mu(c)), sol.e.curl(c, g)),
    ))
}

/// Run the loop on the benchmark case.
pub fn run(config: &AfemConfig, case: &ManufacturedCase) -> Result<AfemOutcome, AfemError> {
    run_with_observer(config, case, |_, _| {})
}

/// Run the loop, calling `observer` after every solve.
pub fn run_with_observer(
    config: &AfemConfig,
    case: &ManufacturedCase,
    mut observer: impl FnMut(&IterationState, &ConvergenceRecord),
) -> Result<AfemOutcome, AfemError> {
    config.validate()?;
    if (case.kappa - config.kappa).abs() > 0.0 {
        return Err(AfemError::Config(format!(
            "case kappa {} differs from configured kappa {}",
            case.kappa, config.kappa
        )));
    }
    let mut mesh = Arc::new(ManufacturedCase::initial_mesh(config.initial_n)?);
    let mut writer = match &config.out_dir {
        Some(dir) => Some(HistoryWriter::create(dir, config)?),
        None => None,
    };
    let mut records: Vec<ConvergenceRecord> = Vec::new();
    let mut last = None;
    for iteration in 0..config.max_iterations {
        if iteration > 0 {
            let dof = Discretization::new(mesh.clone())
                .map_err(|source| AfemError::Solve {
                    iteration,
                    records: records.clone(),
                    source,
                })?
                .dof_count();
            if dof > config.max_dof {
                break;
            }
        }
        let with_majorant = true;
        let (state, mut record) =
            solve_on_mesh(mesh.clone(), case, config, with_majorant).map_err(|source| AfemError::Solve {
                iteration,
                records: records.clone(),
                source,
            })?;
        record.iteration = iteration;
        if iteration == 0 && record.dof > config.max_dof {
            return Err(AfemError::Config(format!(
                "max_dof {} is below the initial dof count {}",
                config.max_dof, record.dof
            )));
        }
        let more = iteration + 1 < config.max_iterations;
        let next = if more {
            let marked = match config.mode {
                Mode::Uniform => None,
                Mode::AdaptiveMajorant => {
                    let est = state.estimate.as_ref().expect("majorant computed");
                    Some(dorfler_mark(&est.indicators, config.theta))
                }
                Mode::AdaptiveExact => {
                    let ind: Vec<f64> = state.error.cell_squared.iter().map(|v| v.sqrt()).collect();
                    Some(dorfler_mark(&ind, config.theta))
                }
            };
            match marked {
                None => {
                    record.marked = mesh.n_cells();
                    record.marked_in_omega = mesh.in_omega_flags().iter().filter(|f| **f).count();
                    Some(mesh.uniform_refine()?)
                }
                Some(m) => {
                    record.marked = m.len();
                    record.marked_in_omega = m.cells().iter().filter(|&&c| mesh.in_omega(c)).count();
                    Some(mesh.bisect(&m)?)
                }
            }
        } else {
            None
        };
        if let Some(w) = writer.as_mut() {
            w.append(&record)?;
            if config.write_vtk {
                w.snapshot(&state, &record)?;
            }
        }
        observer(&state, &record);
        records.push(record);
        last = Some(state);
        match next {
            Some(m) => mesh = Arc::new(m),
            None => break,
        }
    }
    if let Some(w) = writer.as_mut() {
        w.finish(&records)?;
    }
    Ok(AfemOutcome { records, last })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dorfler_examples() {
        assert_eq!(dorfler_mark(&[4.0, 3.0, 2.0, 1.0], 0.5).cells(), &[0, 1]);
        let m = dorfler_mark(&[1.0, 0.0, 2.0, 3.0], 0.999_999);
        let mut c = m.cells().to_vec();
        c.sort();
        assert_eq!(c, vec![0, 2, 3]);
        assert!(dorfler_mark(&[0.0; 5], 0.5).is_empty());
        // ties broken by index
        assert_eq!(dorfler_mark(&[1.0, 1.0, 1.0, 1.0], 0.5).cells(), &[0, 1]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("adaptive".parse::<Mode>().unwrap(), Mode::AdaptiveMajorant);
        assert_eq!("exact".parse::<Mode>().unwrap(), Mode::AdaptiveExact);
        assert_eq!("uniform".parse::<Mode>().unwrap(), Mode::Uniform);
        assert!("foo".parse::<Mode>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = AfemConfig::default();
        assert!(c.validate().is_ok());
        c.theta = 1.5;
        assert!(c.validate().is_err());
        c.theta = 0.5;
        c.kappa = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn max_dof_at_initial_gives_one_record() {
        let config = AfemConfig {
            initial_n: 3,
            max_dof: 0,
            ..AfemConfig::default()
        };
        assert!(matches!(run(&config, &ManufacturedCase::default()), Err(AfemError::Config(_))));
        let first = solve_on_mesh(
            Arc::new(ManufacturedCase::initial_mesh(3).unwrap()),
            &ManufacturedCase::default(),
            &config,
            false,
        )
        .unwrap()
        .1;
        let config = AfemConfig {
            max_dof: first.dof,
            ..config
        };
        let out = run(&config, &ManufacturedCase::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].dof, first.dof);
    }
}
