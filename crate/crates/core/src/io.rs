//! JSON file formats for controllers, systems, polytopes and problems.
//!
//! Reals are written in scientific notation with 17 significant digits, so every
//! `f64` survives a save/load round trip bit for bit. Selector indices in files
//! are 1-based.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::context::StatsSnapshot;
use crate::error::{Error, Result};
use crate::exact::ReachPieceJson;
use crate::ltllbox::{Method, Propagation, Selection};
use crate::polytope::{BoundingBox, HPolytope};
use crate::tll::{LtiSystem, ScalarTll, TllController};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentJson {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub selectors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ControllerJson {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(rename = "M")]
    pub big_m: usize,
    pub components: Vec<ComponentJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolytopeJson {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ControllerRef {
    Path(String),
    Inline(ControllerJson),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProblemJson {
    pub controller: ControllerRef,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "X0")]
    pub x0: PolytopeJson,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub steps: usize,
}

/// A closed-loop reachability problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub controller: TllController,
    pub system: LtiSystem,
    pub x0: HPolytope,
    pub epsilon: f64,
    pub steps: usize,
}

impl Problem {
    pub fn new(
        controller: TllController,
        system: LtiSystem,
        x0: HPolytope,
        epsilon: f64,
        steps: usize,
    ) -> Result<Self> {
        system.check_controller(controller.input_dim(), controller.output_dim())?;
        if x0.dim() != system.state_dim() {
            return Err(Error::dim(format!(
                "X0 lives in R^{} but the state dimension is {}",
                x0.dim(),
                system.state_dim()
            )));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if steps == 0 {
            return Err(Error::invalid("T must be at least 1"));
        }
        Ok(Self {
            controller,
            system,
            x0,
            epsilon,
            steps,
        })
    }
}

/// Writes floats as `d.dddddddddddddddde±x` (17 significant digits).
struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value
        .serialize(&mut ser)
        .expect("serializing plain data to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn from_json_str<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = to_json_string(value);
    s.push('\n');
    fs::write(path, s).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json_str(&read(path)?)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::invalid(format!(
            "{what}: row {} has length {} (expected {c})",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl From<&TllController> for ControllerJson {
    fn from(c: &TllController) -> Self {
        ControllerJson {
            n: c.input_dim(),
            m: c.output_dim(),
            big_n: c.num_functions(),
            big_m: c.num_groups(),
            components: c
                .components()
                .iter()
                .map(|s| ComponentJson {
                    w: (0..s.num_functions()).map(|i| s.weight(i).to_vec()).collect(),
                    b: (0..s.num_functions()).map(|i| s.bias(i)).collect(),
                    selectors: s
                        .selectors()
                        .iter()
                        .map(|set| set.iter().map(|i| i + 1).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ControllerJson> for TllController {
    type Error = Error;

    fn try_from(j: ControllerJson) -> Result<Self> {
        if j.components.len() != j.m {
            return Err(Error::invalid(format!(
                "header says m = {} but {} components are listed",
                j.m,
                j.components.len()
            )));
        }
        let mut comps = Vec::with_capacity(j.m);
        for (k, c) in j.components.into_iter().enumerate() {
            let name = format!("component {}", k + 1);
            if c.w.len() != j.big_n || c.b.len() != j.big_n {
                return Err(Error::invalid(format!(
                    "{name}: expected N = {} functions, found {} weight rows and {} biases",
                    j.big_n,
                    c.w.len(),
                    c.b.len()
                )));
            }
            if c.selectors.len() != j.big_m {
                return Err(Error::invalid(format!(
                    "{name}: expected M = {} selector sets, found {}",
                    j.big_m,
                    c.selectors.len()
                )));
            }
            if let Some(row) = c.w.iter().position(|r| r.len() != j.n) {
                return Err(Error::invalid(format!(
                    "{name}: weight row {} has length {} (expected n = {})",
                    row + 1,
                    c.w[row].len(),
                    j.n
                )));
            }
            let mut sets = Vec::with_capacity(c.selectors.len());
            for (s, set) in c.selectors.iter().enumerate() {
                if let Some(&bad) = set.iter().find(|&&i| i == 0 || i > j.big_n) {
                    return Err(Error::invalid(format!(
                        "{name}: selector set {} contains index {bad} outside 1..={}",
                        s + 1,
                        j.big_n
                    )));
                }
                sets.push(set.iter().map(|i| i - 1).collect());
            }
            let tll = ScalarTll::new(c.w, c.b, sets)
                .map_err(|e| Error::invalid(format!("{name}: {e}")))?;
            comps.push(tll);
        }
        TllController::new(comps)
    }
}

impl From<&HPolytope> for PolytopeJson {
    fn from(p: &HPolytope) -> Self {
        PolytopeJson {
            c: p.to_rows(),
            d: p.offsets().to_vec(),
        }
    }
}

impl TryFrom<PolytopeJson> for HPolytope {
    type Error = Error;

    fn try_from(j: PolytopeJson) -> Result<Self> {
        let Some(first) = j.c.first() else {
            return Err(Error::invalid("polytope has no constraints (must be compact)"));
        };
        HPolytope::from_rows(first.len(), &j.c, &j.d)
    }
}

impl From<&LtiSystem> for SystemJson {
    fn from(s: &LtiSystem) -> Self {
        SystemJson {
            a: matrix_rows(s.a()),
            b: matrix_rows(s.b()),
        }
    }
}

impl TryFrom<SystemJson> for LtiSystem {
    type Error = Error;

    fn try_from(j: SystemJson) -> Result<Self> {
        LtiSystem::new(matrix_from_rows(&j.a, "A")?, matrix_from_rows(&j.b, "B")?)
    }
}

impl From<&Problem> for ProblemJson {
    fn from(p: &Problem) -> Self {
        let sys = SystemJson::from(&p.system);
        ProblemJson {
            controller: ControllerRef::Inline(ControllerJson::from(&p.controller)),
            a: sys.a,
            b: sys.b,
            x0: PolytopeJson::from(&p.x0),
            epsilon: p.epsilon,
            steps: p.steps,
        }
    }
}

impl ProblemJson {
    /// Resolve into a validated problem; relative controller paths are taken
    /// relative to `base`.
    pub fn resolve(self, base: Option<&Path>) -> Result<Problem> {
        let controller = match self.controller {
            ControllerRef::Inline(c) => TllController::try_from(c)?,
            ControllerRef::Path(p) => {
                let mut path = PathBuf::from(&p);
                if path.is_relative() {
                    if let Some(b) = base {
                        path = b.join(path);
                    }
                }
                load_controller(&path)?
            }
        };
        let system = LtiSystem::try_from(SystemJson {
            a: self.a,
            b: self.b,
        })?;
        let x0 = HPolytope::try_from(self.x0)?;
        Problem::new(controller, system, x0, self.epsilon, self.steps)
    }
}

pub fn save_controller(c: &TllController, path: &Path) -> Result<()> {
    write_json(&ControllerJson::from(c), path)
}

pub fn load_controller(path: &Path) -> Result<TllController> {
    TllController::try_from(read_json::<ControllerJson>(path)?)
}

pub fn save_system(s: &LtiSystem, path: &Path) -> Result<()> {
    write_json(&SystemJson::from(s), path)
}

pub fn load_system(path: &Path) -> Result<LtiSystem> {
    LtiSystem::try_from(read_json::<SystemJson>(path)?)
}

pub fn save_polytope(p: &HPolytope, path: &Path) -> Result<()> {
    write_json(&PolytopeJson::from(p), path)
}

pub fn load_polytope(path: &Path) -> Result<HPolytope> {
    HPolytope::try_from(read_json::<PolytopeJson>(path)?)
}

pub fn save_problem(p: &Problem, path: &Path) -> Result<()> {
    write_json(&ProblemJson::from(p), path)
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    read_json::<ProblemJson>(path)?.resolve(path.parent())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultStats {
    pub nodes: u64,
    pub lp_calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// Result file of a reachability run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachResultJson {
    pub boxes: Vec<BoundingBox>,
    pub method_per_step: Vec<Method>,
    /// Cost estimates per step when the method was chosen automatically.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<Selection>,
    /// Pieces of the exact one-step reachable set, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<ReachPieceJson>>,
    pub stats: ResultStats,
}

impl ReachResultJson {
    pub fn new(p: &Propagation, stats: StatsSnapshot, wall_ms: Option<f64>) -> Self {
        Self {
            boxes: p.boxes.clone(),
            method_per_step: p.methods.clone(),
            selections: p.selections.iter().flatten().copied().collect(),
            pieces: None,
            stats: ResultStats {
                nodes: stats.nodes,
                lp_calls: stats.lp_calls,
                wall_ms,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Problem,
    Controller,
    System,
    Polytope,
}

/// Parse and fully validate a file of any supported kind.
pub fn validate_file(path: &Path) -> Result<FileKind> {
    let text = read(path)?;
    let value: serde_json::Value = from_json_str(&text)?;
    let has = |k: &str| value.get(k).is_some();
    if has("controller") {
        load_problem(path)?;
        Ok(FileKind::Problem)
    } else if has("components") {
        load_controller(path)?;
        Ok(FileKind::Controller)
    } else if has("A") && has("B") {
        load_system(path)?;
        Ok(FileKind::System)
    } else if has("C") && has("d") {
        load_polytope(path)?;
        Ok(FileKind::Polytope)
    } else {
        Err(Error::invalid("unrecognized file: expected a problem, controller, system or polytope"))
    }
}
