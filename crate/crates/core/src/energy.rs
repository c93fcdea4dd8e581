// SPDX-License-Identifier: Apache-2.0

//! Capacitance models and link energy evaluation.
//!
//! All capacitances are in attofarads. A normalized energy is the Frobenius
//! product `⟨T, C⟩` (aF); multiplying by `V_dd²/2` gives the energy per link
//! cycle. [`TechnologyParams::to_femtojoules`] performs that conversion.
//!
//! The TSV templates are placeholders with plausible magnitudes, not
//! extracted parasitics. Physical studies should load calibrated matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::io::{read_matrix_csv, write_matrix_csv};
use crate::stats::SwitchingMatrix;
use crate::{Error, Result};

const SYMMETRY_RTOL: f64 = 1e-12;

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::Asymmetric);
            }
        }
    }
    Ok(())
}

fn check_nonnegative(m: &DMatrix<f64>) -> Result<()> {
    for ((row, col), &value) in m.iter().enumerate().map(|(k, v)| ((k % m.nrows(), k / m.nrows()), v)) {
        if value < 0.0 {
            return Err(Error::NegativeCapacitance { row, col, value });
        }
    }
    Ok(())
}

/// Capacitance matrix of a metal-wire link: ground capacitances on the
/// diagonal, coupling capacitances off it.
#[derive(Clone, Debug, PartialEq)]
pub struct Capacitance2D {
    c: DMatrix<f64>,
}

impl Capacitance2D {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        check_square(&c)?;
        check_symmetric(&c)?;
        check_nonnegative(&c)?;
        Ok(Self { c })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn width(&self) -> usize {
        self.c.nrows()
    }
}

/// Linear, bit-probability dependent TSV capacitance model:
/// `C_ij = C_T0,ij + ΔC_T,ij·(p_i + p_j)`.
///
/// `ΔC_T` is stored with its sign; depletion in p-doped substrate makes it
/// negative.
#[derive(Clone, Debug, PartialEq)]
pub struct Capacitance3D {
    c_t0: DMatrix<f64>,
    delta_c_t: DMatrix<f64>,
}

impl Capacitance3D {
    pub fn new(c_t0: DMatrix<f64>, delta_c_t: DMatrix<f64>) -> Result<Self> {
        check_square(&c_t0)?;
        check_square(&delta_c_t)?;
        if c_t0.nrows() != delta_c_t.nrows() {
            return Err(Error::DimensionMismatch {
                expected: c_t0.nrows(),
                got: delta_c_t.nrows(),
            });
        }
        check_symmetric(&c_t0)?;
        check_symmetric(&delta_c_t)?;
        check_nonnegative(&c_t0)?;
        check_nonnegative(&(&c_t0 + &delta_c_t * 2.0))?;
        Ok(Self { c_t0, delta_c_t })
    }

    pub fn c_t0(&self) -> &DMatrix<f64> {
        &self.c_t0
    }

    pub fn delta_c_t(&self) -> &DMatrix<f64> {
        &self.delta_c_t
    }

    pub fn width(&self) -> usize {
        self.c_t0.nrows()
    }
}

/// Either kind of link capacitance model.
#[derive(Clone, Debug, PartialEq)]
pub enum LinkCapacitance {
    Planar(Capacitance2D),
    Tsv(Capacitance3D),
}

impl LinkCapacitance {
    pub fn width(&self) -> usize {
        match self {
            Self::Planar(c) => c.width(),
            Self::Tsv(c) => c.width(),
        }
    }

    pub fn is_3d(&self) -> bool {
        matches!(self, Self::Tsv(_))
    }

    /// Normalized energy for switching `t` and bit probabilities `p` (the
    /// latter only matters for TSV links).
    pub fn normalized_energy(&self, t: &SwitchingMatrix, p: &DVector<f64>) -> Result<f64> {
        match self {
            Self::Planar(c) => energy_2d(t, c),
            Self::Tsv(c) => energy_3d(t, p, c),
        }
    }

    /// Capacitance matrix at bit probabilities `p`.
    pub fn effective(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            Self::Planar(c) => Ok(c.matrix().clone()),
            Self::Tsv(c) => effective_tsv_capacitance(c, p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TechnologyParams {
    /// Supply voltage in volts.
    pub vdd: f64,
    /// Base clock period in seconds.
    pub clock_period: f64,
}

impl Default for TechnologyParams {
    fn default() -> Self {
        Self {
            vdd: 1.0,
            clock_period: 1e-9,
        }
    }
}

impl TechnologyParams {
    pub fn new(vdd: f64, clock_period: f64) -> Result<Self> {
        if !(vdd > 0.0) || !(clock_period > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "vdd ({vdd}) and clock period ({clock_period}) must be positive"
            )));
        }
        Ok(Self { vdd, clock_period })
    }

    /// Converts a normalized energy in aF into fJ: `E·V_dd²/2`.
    pub fn to_femtojoules(&self, normalized_af: f64) -> f64 {
        normalized_af * 1e-3 * self.vdd * self.vdd / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Planar,
    Tsv,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2d" | "2D" => Ok(Self::Planar),
            "3d" | "3D" => Ok(Self::Tsv),
            other => Err(Error::InvalidParameter(format!(
                "unknown capacitance model kind `{other}`"
            ))),
        }
    }
}

/// Paths of the two files of a 3D model named `base`.
pub fn tsv_model_paths(base: &Path) -> (PathBuf, PathBuf) {
    let s = base.to_string_lossy();
    let stem = s
        .strip_suffix(".ct0.csv")
        .or_else(|| s.strip_suffix(".dct.csv"))
        .unwrap_or(&s)
        .to_owned();
    (
        PathBuf::from(format!("{stem}.ct0.csv")),
        PathBuf::from(format!("{stem}.dct.csv")),
    )
}

fn read_cap_file(path: &Path, kind: &str) -> Result<DMatrix<f64>> {
    let (header, m) = read_matrix_csv(BufReader::new(File::open(path)?))?;
    if let Some(k) = header.get("kind") {
        if k != kind {
            return Err(Error::Parse {
                line: 1,
                msg: format!("{}: expected kind={kind}, found kind={k}", path.display()),
            });
        }
    }
    if let Some(units) = header.get("units") {
        if units != "aF" {
            return Err(Error::Parse {
                line: 1,
                msg: format!("{}: unsupported units `{units}`", path.display()),
            });
        }
    }
    if let Some(n) = header.get("N") {
        if n.parse::<usize>().ok() != Some(m.nrows()) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("{}: header N={n} but {} rows", path.display(), m.nrows()),
            });
        }
    }
    Ok(m)
}

/// Loads a capacitance model. For 3D models `path` names either file of the
/// pair or the common stem.
pub fn load_capacitance_model(path: &Path, kind: ModelKind) -> Result<LinkCapacitance> {
    match kind {
        ModelKind::Planar => Ok(LinkCapacitance::Planar(Capacitance2D::new(read_cap_file(
            path, "2d",
        )?)?)),
        ModelKind::Tsv => {
            let (ct0, dct) = tsv_model_paths(path);
            let c_t0 = read_cap_file(&ct0, "3d")?;
            let delta = read_cap_file(&dct, "3d")?;
            Ok(LinkCapacitance::Tsv(Capacitance3D::new(c_t0, delta)?))
        }
    }
}

/// Writes a model in the format read by [`load_capacitance_model`]. For 3D
/// models `path` is the stem of the file pair.
pub fn save_capacitance_model(path: &Path, model: &LinkCapacitance) -> Result<()> {
    let write = |p: &Path, kind: &str, m: &DMatrix<f64>| -> Result<()> {
        let n = m.nrows().to_string();
        let mut w = BufWriter::new(File::create(p)?);
        write_matrix_csv(&mut w, &[("kind", kind), ("units", "aF"), ("N", &n)], m)
    };
    match model {
        LinkCapacitance::Planar(c) => write(path, "2d", c.matrix()),
        LinkCapacitance::Tsv(c) => {
            let (ct0, dct) = tsv_model_paths(path);
            write(&ct0, "3d", c.c_t0())?;
            write(&dct, "3d", c.delta_c_t())
        }
    }
}

/// Bus of `n` parallel wires: `c_ground` on the diagonal and
/// `c_couple/|i−j|` between wires up to `neighbor_range` apart.
pub fn template_2d_bus(
    n: usize,
    c_ground: f64,
    c_couple: f64,
    neighbor_range: usize,
) -> Result<Capacitance2D> {
    if n == 0 || neighbor_range == 0 || c_ground < 0.0 || c_couple < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bus template needs n ≥ 1, range ≥ 1 and non-negative capacitances \
             (n={n}, range={neighbor_range}, ground={c_ground}, couple={c_couple})"
        )));
    }
    let c = DMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j);
        if d == 0 {
            c_ground
        } else if d <= neighbor_range {
            c_couple / d as f64
        } else {
            0.0
        }
    });
    Capacitance2D::new(c)
}

/// TSV array laid out row-major on a grid with `cols` columns. Side
/// neighbours couple with weight 1, diagonal neighbours with `1/√2`.
///
/// `width` need not fill the last row, which is how an extra code line (the
/// invert bit, for instance) is appended to a square array.
pub fn tsv_array(
    width: usize,
    cols: usize,
    c0_neighbor: f64,
    dc_neighbor: f64,
    c0_ground: f64,
    dc_ground: f64,
) -> Result<Capacitance3D> {
    if width == 0 || cols == 0 {
        return Err(Error::InvalidParameter("empty TSV array".into()));
    }
    let pos = |k: usize| ((k / cols) as i64, (k % cols) as i64);
    let weight = |i: usize, j: usize| {
        let (ri, ci) = pos(i);
        let (rj, cj) = pos(j);
        match ((ri - rj).abs(), (ci - cj).abs()) {
            (0, 1) | (1, 0) => 1.0,
            (1, 1) => std::f64::consts::FRAC_1_SQRT_2,
            _ => 0.0,
        }
    };
    let build = |ground: f64, neighbor: f64| {
        DMatrix::from_fn(width, width, |i, j| {
            if i == j {
                ground
            } else {
                neighbor * weight(i, j)
            }
        })
    };
    Capacitance3D::new(build(c0_ground, c0_neighbor), build(dc_ground, dc_neighbor))
}

/// Full `rows × cols` TSV array of width `width = rows·cols`.
pub fn template_3d_tsv(
    width: usize,
    rows: usize,
    cols: usize,
    c0_neighbor: f64,
    dc_neighbor: f64,
    c0_ground: f64,
    dc_ground: f64,
) -> Result<Capacitance3D> {
    if rows * cols != width {
        return Err(Error::DimensionMismatch {
            expected: width,
            got: rows * cols,
        });
    }
    tsv_array(width, cols, c0_neighbor, dc_neighbor, c0_ground, dc_ground)
}

/// `C_T0 + ΔC_T ∘ (p·1ᵀ + 1·pᵀ)`.
pub fn effective_tsv_capacitance(model: &Capacitance3D, p: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = model.width();
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.len(),
        });
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!(
            "bit probability {bad} outside [0, 1]"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        model.c_t0[(i, j)] + model.delta_c_t[(i, j)] * (p[i] + p[j])
    }))
}

fn frobenius(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    if t.shape() != c.shape() {
        return Err(Error::DimensionMismatch {
            expected: c.nrows(),
            got: t.nrows(),
        });
    }
    Ok(t.dot(c))
}

/// `⟨T, C_M⟩` in aF.
pub fn energy_2d(t: &SwitchingMatrix, c: &Capacitance2D) -> Result<f64> {
    frobenius(t.matrix(), c.matrix())
}

/// `⟨T, C_T0 + ΔC_T ∘ (p·1ᵀ + 1·pᵀ)⟩` in aF.
pub fn energy_3d(t: &SwitchingMatrix, p: &DVector<f64>, c: &Capacitance3D) -> Result<f64> {
    if t.width() != c.width() {
        return Err(Error::DimensionMismatch {
            expected: c.width(),
            got: t.width(),
        });
    }
    frobenius(t.matrix(), &effective_tsv_capacitance(c, p)?)
}
