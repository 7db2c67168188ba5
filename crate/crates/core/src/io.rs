//! Run artifacts: history CSV, key=value configuration files, run manifest,
//! merged comparison tables and legacy VTK snapshots.

use std::fmt::Write as _;
use std::io::Write as IoWrite;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::afem::{AfemConfig, AfemError, ConvergenceRecord, IterationState, Mode};
use crate::estimator::EstimatorConstants;
use crate::geometry::Vec3;
use crate::mesh::Mesh;
use crate::spaces::FeField;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

pub const HISTORY_HEADER: &str = "DoF,err_H,err_j,total,M_h";

/// One row of `history.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub dof: usize,
    pub error_h: f64,
    pub error_j: f64,
    pub total: f64,
    pub m_h: Option<f64>,
}

impl From<&ConvergenceRecord> for HistoryRow {
    fn from(r: &ConvergenceRecord) -> Self {
        HistoryRow {
            dof: r.dof,
            error_h: r.error_h,
            error_j: r.error_j,
            total: r.total,
            m_h: r.m_h,
        }
    }
}

/// Shortest exact form is not required; 17 significant digits always
/// round-trip.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn history_fields(row: &HistoryRow) -> [String; 5] {
    [
        row.dof.to_string(),
        format_f64(row.error_h),
        format_f64(row.error_j),
        format_f64(row.total),
        row.m_h.map(format_f64).unwrap_or_default(),
    ]
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |e| {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        IoError::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        }
    }
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(HISTORY_HEADER.split(',')).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(history_fields(r)).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

/// Parse `history.csv` content; `path` is only used in error messages.
pub fn parse_history(path: &Path, reader: impl std::io::Read) -> Result<Vec<HistoryRow>, IoError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers().map_err(csv_err(path))?;
    if header.iter().collect::<Vec<_>>().join(",") != HISTORY_HEADER {
        return Err(IoError::Parse {
            path: path.into(),
            line: 1,
            message: format!("expected header `{HISTORY_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |message: String| IoError::Parse {
            path: path.into(),
            line,
            message,
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
        rows.push(HistoryRow {
            dof: rec[0].parse().map_err(|e| err(format!("`{}`: {e}", &rec[0])))?,
            error_h: num(&rec[1])?,
            error_j: num(&rec[2])?,
            total: num(&rec[3])?,
            m_h: if rec[4].is_empty() { None } else { Some(num(&rec[4])?) },
        });
    }
    Ok(rows)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>, IoError> {
    let f = fs::File::open(path).map_err(file_err(path))?;
    parse_history(path, f)
}

/// Entries of a run configuration file. The file is TOML; every key is
/// optional and unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    mode: Option<Spanned<String>>,
    n: Option<Spanned<usize>>,
    theta: Option<Spanned<f64>>,
    kappa: Option<Spanned<f64>>,
    max_dof: Option<Spanned<usize>>,
    max_iters: Option<Spanned<usize>>,
    tol_kkt: Option<Spanned<f64>>,
    tol_aux: Option<Spanned<f64>>,
    max_solver_iters: Option<Spanned<usize>>,
    out: Option<Spanned<PathBuf>>,
    vtk: Option<Spanned<bool>>,
    deterministic: Option<Spanned<bool>>,
    c_m: Option<Spanned<f64>>,
    c_p_omega: Option<Spanned<f64>>,
    c_p_domain: Option<Spanned<f64>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse a run configuration such as
///
/// ```toml
/// mode = "adaptive"   # adaptive, exact or uniform
/// n = 6
/// theta = 0.5
/// kappa = 1.0
/// max_dof = 150000
/// ```
///
/// Keys: `mode`, `n`, `theta`, `kappa`, `max_dof`, `max_iters`, `tol_kkt`,
/// `tol_aux`, `max_solver_iters`, `out`, `vtk`, `deterministic`, `c_m`,
/// `c_p_omega`, `c_p_domain`. Missing keys keep their defaults.
pub fn parse_config(path: &Path, text: &str) -> Result<AfemConfig, IoError> {
    let parse_err = |offset: usize, message: String| IoError::Parse {
        path: path.into(),
        line: line_of(text, offset),
        message,
    };
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let offset = e.span().map(|s| s.start).unwrap_or(0);
        parse_err(offset, e.message().to_string())
    })?;
    let mut spans: Vec<(&'static str, usize)> = Vec::new();
    let mut c = AfemConfig::default();
    macro_rules! take {
        ($field:ident, $key:literal, $target:expr) => {
            if let Some(v) = file.$field {
                spans.push(($key, v.span().start));
                $target = v.into_inner();
            }
        };
    }
    if let Some(m) = file.mode {
        let start = m.span().start;
        c.mode = m.get_ref().parse::<Mode>().map_err(|e| parse_err(start, e))?;
    }
    take!(n, "n", c.initial_n);
    take!(theta, "theta", c.theta);
    take!(kappa, "kappa", c.kappa);
    take!(max_dof, "max_dof", c.max_dof);
    take!(max_iters, "max_iters", c.max_iterations);
    take!(tol_kkt, "tol_kkt", c.tol_kkt);
    take!(tol_aux, "tol_aux", c.tol_aux);
    take!(max_solver_iters, "max_solver_iters", c.max_solver_iterations);
    take!(vtk, "vtk", c.write_vtk);
    take!(deterministic, "deterministic", c.deterministic);
    take!(c_m, "c_m", c.constants.c_m);
    take!(c_p_omega, "c_p_omega", c.constants.c_p_omega);
    take!(c_p_domain, "c_p_domain", c.constants.c_p_domain);
    if let Some(o) = file.out {
        c.out_dir = Some(o.into_inner());
    }
    match c.validate() {
        Ok(()) => Ok(c),
        Err(AfemError::Invalid { field, message }) => {
            let line = spans.iter().find(|(k, _)| *k == field).map(|(_, o)| line_of(text, *o));
            Err(IoError::Invalid {
                path: path.into(),
                line,
                message: format!("{field} {message}"),
            })
        }
        Err(e) => Err(IoError::Invalid {
            path: path.into(),
            line: None,
            message: e.to_string(),
        }),
    }
}

pub fn load_config(path: &Path) -> Result<AfemConfig, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_config(path, &text)
}

/// Config echo plus estimator constants and data discretisation.
pub fn manifest_text(config: &AfemConfig) -> String {
    let k: &EstimatorConstants = &config.constants;
    let mut s = String::new();
    let _ = writeln!(s, "# magafem run manifest");
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "mode = {}", config.mode);
    let _ = writeln!(s, "n = {}", config.initial_n);
    let _ = writeln!(s, "theta = {}", config.theta);
    let _ = writeln!(s, "kappa = {}", config.kappa);
    let _ = writeln!(s, "max_dof = {}", config.max_dof);
    let _ = writeln!(s, "max_iters = {}", config.max_iterations);
    let _ = writeln!(s, "tol_kkt = {:e}", config.tol_kkt);
    let _ = writeln!(s, "tol_aux = {:e}", config.tol_aux);
    let _ = writeln!(s, "max_solver_iters = {}", config.max_solver_iterations);
    let _ = writeln!(s, "deterministic = {}", config.deterministic);
    let _ = writeln!(s, "c_m = {}", k.c_m);
    let _ = writeln!(s, "c_p_omega = {}", k.c_p_omega);
    let _ = writeln!(s, "c_p_domain = {}", k.c_p_domain);
    let _ = writeln!(s, "d_domain = {}", k.d_domain);
    let _ = writeln!(s, "d_omega = {}", k.d_omega);
    let _ = writeln!(s, "# j_d,h = edge interpolant of j_d on the control submesh");
    let _ = writeln!(s, "# H_d,h = edge interpolant of H_d in the unconstrained edge space");
    let _ = writeln!(s, "# DoF = dim(E_h) + dim(u_h) + dim(v_h)");
    s
}

/// Incrementally writes `history.csv`, `diagnostics.csv`, `manifest.txt`
/// and `iterNNN.vtk` into a run directory.
pub struct HistoryWriter {
    dir: PathBuf,
    history: csv::Writer<fs::File>,
    diagnostics: csv::Writer<fs::File>,
}

pub const DIAGNOSTICS_HEADER: &str =
    "iteration,DoF,cells,M_minus,kkt_iterations,kkt_residual,aux_converged,marked,marked_in_omega,seconds";

impl HistoryWriter {
    pub fn create(dir: &Path, config: &AfemConfig) -> Result<Self, IoError> {
        fs::create_dir_all(dir).map_err(file_err(dir))?;
        let manifest = dir.join("manifest.txt");
        fs::write(&manifest, manifest_text(config)).map_err(file_err(&manifest))?;
        let open = |name: &str, header: &str| -> Result<csv::Writer<fs::File>, IoError> {
            let p = dir.join(name);
            let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
            w.write_record(header.split(',')).map_err(csv_err(&p))?;
            w.flush().map_err(file_err(&p))?;
            Ok(w)
        };
        Ok(HistoryWriter {
            dir: dir.to_path_buf(),
            history: open("history.csv", HISTORY_HEADER)?,
            diagnostics: open("diagnostics.csv", DIAGNOSTICS_HEADER)?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Append one record to both tables and flush them.
    pub fn append(&mut self, r: &ConvergenceRecord) -> Result<(), IoError> {
        let hp = self.dir.join("history.csv");
        self.history.write_record(history_fields(&r.into())).map_err(csv_err(&hp))?;
        self.history.flush().map_err(file_err(&hp))?;
        let dp = self.dir.join("diagnostics.csv");
        self.diagnostics
            .write_record([
                r.iteration.to_string(),
                r.dof.to_string(),
                r.n_cells.to_string(),
                r.m_minus.map(format_f64).unwrap_or_default(),
                r.kkt_iterations.to_string(),
                format_f64(r.kkt_residual),
                r.aux_converged.to_string(),
                r.marked.to_string(),
                r.marked_in_omega.to_string(),
                format!("{:.3}", r.seconds),
            ])
            .map_err(csv_err(&dp))?;
        self.diagnostics.flush().map_err(file_err(&dp))
    }

    /// Write `iterNNN.vtk` for the given state.
    pub fn snapshot(&mut self, state: &IterationState, r: &ConvergenceRecord) -> Result<(), IoError> {
        let path = self.dir.join(format!("iter{:03}.vtk", r.iteration));
        write_state_vtk(&path, state)
    }

    /// Append a summary line to the manifest.
    pub fn finish(&mut self, records: &[ConvergenceRecord]) -> Result<(), IoError> {
        let path = self.dir.join("manifest.txt");
        let mut f = fs::OpenOptions::new().append(true).open(&path).map_err(file_err(&path))?;
        let bound = records.iter().all(|r| r.bound_holds());
        writeln!(f, "records = {}", records.len()).map_err(file_err(&path))?;
        writeln!(f, "bound_holds = {bound}").map_err(file_err(&path))
    }
}

/// Cell-averaged vectors (edge/face fields) and point scalars (nodal fields)
/// attached to an unstructured grid.
#[derive(Default)]
pub struct VtkData {
    pub cell_scalars: Vec<(String, Vec<f64>)>,
    pub cell_vectors: Vec<(String, Vec<Vec3>)>,
    pub point_scalars: Vec<(String, Vec<f64>)>,
}

/// Legacy ASCII unstructured grid of tetrahedra (cell type 10) with cell
/// data `mu` and `in_omega` plus any extra arrays.
pub fn vtk_string(mesh: &Mesh, extra: &VtkData) -> String {
    let mut s = String::new();
    let nc = mesh.n_cells();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nmagafem\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    let _ = writeln!(s, "CELLS {} {}", nc, 5 * nc);
    for c in mesh.cells() {
        let [a, b, cc, d] = c.vertices;
        let _ = writeln!(s, "4 {a} {b} {cc} {d}");
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(s, "10");
    }
    let _ = writeln!(s, "CELL_DATA {nc}");
    let scalar = |s: &mut String, name: &str, vals: &mut dyn Iterator<Item = f64>| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals {
            let _ = writeln!(s, "{v}");
        }
    };
    scalar(&mut s, "mu", &mut (0..nc).map(|c| mesh.mu(c)));
    scalar(&mut s, "in_omega", &mut (0..nc).map(|c| if mesh.in_omega(c) { 1.0 } else { 0.0 }));
    for (name, vals) in &extra.cell_scalars {
        assert_eq!(vals.len(), nc, "cell array {name} has wrong length");
        scalar(&mut s, name, &mut vals.iter().copied());
    }
    for (name, vals) in &extra.cell_vectors {
        assert_eq!(vals.len(), nc, "cell array {name} has wrong length");
        let _ = writeln!(s, "VECTORS {name} double");
        for v in vals {
            let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
        }
    }
    if !extra.point_scalars.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
        for (name, vals) in &extra.point_scalars {
            assert_eq!(vals.len(), mesh.n_vertices(), "point array {name} has wrong length");
            scalar(&mut s, name, &mut vals.iter().copied());
        }
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &Mesh, extra: &VtkData) -> Result<(), IoError> {
    fs::write(path, vtk_string(mesh, extra)).map_err(file_err(path))
}

const CENTROID: [f64; 4] = [0.25; 4];

/// Cell averages of an edge or face field (exact for lowest order).
pub fn cell_averages(field: &FeField) -> Vec<Vec3> {
    let mesh = field.mesh();
    (0..mesh.n_cells())
        .map(|c| {
            let g = mesh.geometry(c);
            field.eval_vector(c, &g, &CENTROID)
        })
        .collect()
}

/// Snapshot of one iteration: `Ē_h`, `H̄_h`, `ζ j̄_h` (cell averages), `ū_h`
/// and `v̄_h` (vertex values, `v̄_h` zero outside `ω`) and the indicators.
pub fn write_state_vtk(path: &Path, state: &IterationState) -> Result<(), IoError> {
    let disc = &state.disc;
    let sol = &state.solution;
    let mesh = &disc.mesh;
    let mut data = VtkData::default();
    let n = mesh.n_cells();
    let (mut e, mut h, mut j) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for c in 0..n {
        let g = mesh.geometry(c);
        e.push(sol.e.eval_vector(c, &g, &CENTROID));
        h.push(sol.h_bar(c, &g, &CENTROID));
        j.push(sol.zeta_j(&disc.map, c, &g, &CENTROID));
    }
    data.cell_vectors.push(("E".into(), e));
    data.cell_vectors.push(("H".into(), h));
    data.cell_vectors.push(("j".into(), j));
    data.cell_scalars
        .push(("error".into(), state.error.cell_squared.iter().map(|v| v.sqrt()).collect()));
    if let Some(est) = &state.estimate {
        data.cell_scalars.push(("M_T".into(), est.indicators.clone()));
    }
    let u: Vec<f64> = (0..mesh.n_vertices()).map(|v| sol.u.entity_value(v)).collect();
    let mut v = vec![0.0; mesh.n_vertices()];
    for (sv, &pv) in disc.map.vertex_to_parent.iter().enumerate() {
        v[pv] = sol.v.entity_value(sv);
    }
    data.point_scalars.push(("u".into(), u));
    data.point_scalars.push(("v".into(), v));
    write_vtk(path, mesh, &data)
}

/// Merge the histories of several run directories into one table with
/// columns `run,DoF,total,M_h`, the run named after its directory.
pub fn write_comparison(runs: &[PathBuf], out: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(out).map_err(csv_err(out))?;
    w.write_record(["run", "DoF", "total", "M_h"]).map_err(csv_err(out))?;
    for dir in runs {
        let rows = read_history(&dir.join("history.csv"))?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        for r in rows {
            w.write_record([
                name.clone(),
                r.dof.to_string(),
                format_f64(r.total),
                r.m_h.map(format_f64).unwrap_or_default(),
            ])
            .map_err(csv_err(out))?;
        }
    }
    w.flush().map_err(file_err(out))
}
