//! Euler-Bernoulli finite-element model of the stepped cantilever spar and its
//! generalized eigensolution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// kg/m³
    pub density: f64,
    /// Pa
    pub young_modulus: f64,
    /// Pa; carried for completeness, unused by the bending-only model.
    pub shear_modulus: f64,
    pub poisson: f64,
}

impl MaterialSpec {
    /// Aluminium 7075-T6.
    pub fn al7075_t6() -> Self {
        Self { density: 2810.0, young_modulus: 71.7e9, shear_modulus: 26.9e9, poisson: 0.33 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.density, self.young_modulus, self.shear_modulus].iter().all(|v| v.is_finite() && *v > 0.0)
            && self.poisson > 0.0
            && self.poisson < 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::FiniteElement(format!("invalid material {self:?}")))
        }
    }
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self::al7075_t6()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub start: f64,
    pub end: f64,
    /// Bending-direction height, m.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparGeometry {
    pub free_length: f64,
    /// Constant in-plane thickness, m.
    pub thickness: f64,
    pub sections: Vec<Section>,
    pub motor_station: f64,
    pub motor_mass: f64,
}

impl SparGeometry {
    /// Four-section spar with heights fitted so the first three bending
    /// frequencies land near 2.48, 13.37 and 24.10 Hz. The section
    /// dimensions and motor mass are calibration constants, not measured data.
    pub fn calibrated() -> Self {
        let s = |start, end, height_mm: f64| Section { start, end, height: height_mm * 1e-3 };
        Self {
            free_length: 0.8,
            thickness: 2.3e-3,
            sections: vec![s(0.0, 0.04, 3.09), s(0.04, 0.28, 3.00), s(0.28, 0.34, 1.73), s(0.34, 0.8, 0.69)],
            motor_station: 0.48,
            motor_mass: 2e-4,
        }
    }

    pub fn prismatic(free_length: f64, thickness: f64, height: f64) -> Self {
        Self {
            free_length,
            thickness,
            sections: vec![Section { start: 0.0, end: free_length, height }],
            motor_station: free_length / 2.0,
            motor_mass: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::FiniteElement(m));
        if !(self.free_length > 0.0 && self.thickness > 0.0) {
            return bad("length and thickness must be positive".into());
        }
        let tol = 1e-9 * self.free_length;
        let mut cursor = 0.0;
        for s in &self.sections {
            if (s.start - cursor).abs() > tol || s.end <= s.start {
                return bad(format!("sections not contiguous at {} m", s.start));
            }
            if !(s.height > 0.0) {
                return bad(format!("section at {} m has non-positive height", s.start));
            }
            cursor = s.end;
        }
        if self.sections.is_empty() || (cursor - self.free_length).abs() > tol {
            return bad("sections must cover the free length".into());
        }
        if !(self.motor_station > 0.0 && self.motor_station < self.free_length) {
            return bad(format!("motor station {} outside the span", self.motor_station));
        }
        if !(self.motor_mass >= 0.0) {
            return bad("motor mass must be non-negative".into());
        }
        Ok(())
    }

    fn height_at(&self, x: f64) -> f64 {
        self.sections.iter().find(|s| x >= s.start && x < s.end).unwrap_or_else(|| self.sections.last().unwrap()).height
    }
}

impl Default for SparGeometry {
    fn default() -> Self {
        Self::calibrated()
    }
}

/// Assembled cantilever matrices. The clamped root node is eliminated, so DOF
/// `2(i-1)` is the deflection and `2(i-1)+1` the rotation of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeModel {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub free_length: f64,
    pub n_elements: usize,
    pub motor_station: f64,
}

impl FeModel {
    pub fn element_length(&self) -> f64 {
        self.free_length / self.n_elements as f64
    }

    pub fn dof_count(&self) -> usize {
        self.mass.nrows()
    }

    pub fn node_positions(&self) -> Vec<f64> {
        (0..=self.n_elements).map(|i| i as f64 * self.element_length()).collect()
    }

    /// Row vector mapping DOFs to the transverse deflection at `x`.
    pub fn deflection_row(&self, x: f64) -> Result<DVector<f64>> {
        self.interpolation_row(x, hermite)
    }

    /// Row vector `s` such that `s . u` is the slope at span station `x`.
    pub fn slope_row(&self, x: f64) -> Result<DVector<f64>> {
        self.interpolation_row(x, hermite_slope)
    }

    fn interpolation_row(&self, x: f64, basis: fn(f64, f64) -> [f64; 4]) -> Result<DVector<f64>> {
        if !(0.0..=self.free_length * (1.0 + 1e-12)).contains(&x) {
            return Err(Error::FiniteElement(format!("station {x} m outside the span")));
        }
        let le = self.element_length();
        let e = ((x / le).floor() as usize).min(self.n_elements - 1);
        let xi = (x - e as f64 * le) / le;
        let n = basis(xi, le);
        let mut row = DVector::zeros(self.dof_count());
        for (local, w) in n.iter().enumerate() {
            let node = e + local / 2;
            if node > 0 {
                row[2 * (node - 1) + local % 2] += w;
            }
        }
        Ok(row)
    }
}

fn hermite(xi: f64, l: f64) -> [f64; 4] {
    let (x2, x3) = (xi * xi, xi * xi * xi);
    [1.0 - 3.0 * x2 + 2.0 * x3, l * (xi - 2.0 * x2 + x3), 3.0 * x2 - 2.0 * x3, l * (x3 - x2)]
}

/// d/dx of [`hermite`].
fn hermite_slope(xi: f64, l: f64) -> [f64; 4] {
    let x2 = xi * xi;
    [(6.0 * x2 - 6.0 * xi) / l, 1.0 - 4.0 * xi + 3.0 * x2, (6.0 * xi - 6.0 * x2) / l, 3.0 * x2 - 2.0 * xi]
}

pub fn assemble_fe(geometry: &SparGeometry, material: &MaterialSpec, n_elements: usize) -> Result<FeModel> {
    geometry.validate()?;
    material.validate()?;
    if n_elements < 4 {
        return Err(Error::FiniteElement("at least 4 elements required".into()));
    }
    let le = geometry.free_length / n_elements as f64;
    for s in &geometry.sections {
        let k = s.end / le;
        if (k - k.round()).abs() > 1e-6 {
            return Err(Error::FiniteElement(format!(
                "section boundary at {} m is not an element edge with {n_elements} elements",
                s.end
            )));
        }
    }

    let full = 2 * (n_elements + 1);
    let mut k = DMatrix::<f64>::zeros(full, full);
    let mut m = DMatrix::<f64>::zeros(full, full);
    let l = le;
    for e in 0..n_elements {
        let h = geometry.height_at((e as f64 + 0.5) * le);
        let ei = material.young_modulus * geometry.thickness * h.powi(3) / 12.0;
        let rho_a = material.density * geometry.thickness * h;
        let ke = DMatrix::from_row_slice(
            4,
            4,
            &[
                12.0,
                6.0 * l,
                -12.0,
                6.0 * l,
                6.0 * l,
                4.0 * l * l,
                -6.0 * l,
                2.0 * l * l,
                -12.0,
                -6.0 * l,
                12.0,
                -6.0 * l,
                6.0 * l,
                2.0 * l * l,
                -6.0 * l,
                4.0 * l * l,
            ],
        ) * (ei / l.powi(3));
        let me = DMatrix::from_row_slice(
            4,
            4,
            &[
                156.0,
                22.0 * l,
                54.0,
                -13.0 * l,
                22.0 * l,
                4.0 * l * l,
                13.0 * l,
                -3.0 * l * l,
                54.0,
                13.0 * l,
                156.0,
                -22.0 * l,
                -13.0 * l,
                -3.0 * l * l,
                -22.0 * l,
                4.0 * l * l,
            ],
        ) * (rho_a * l / 420.0);
        let mut kv = k.view_mut((2 * e, 2 * e), (4, 4));
        kv += &ke;
        let mut mv = m.view_mut((2 * e, 2 * e), (4, 4));
        mv += &me;
    }
    let mut model = FeModel {
        mass: m.view((2, 2), (full - 2, full - 2)).into_owned(),
        stiffness: k.view((2, 2), (full - 2, full - 2)).into_owned(),
        free_length: geometry.free_length,
        n_elements,
        motor_station: geometry.motor_station,
    };
    if geometry.motor_mass > 0.0 {
        let n = model.deflection_row(geometry.motor_station)?;
        model.mass += geometry.motor_mass * &n * n.transpose();
    }
    Ok(model)
}

/// Analytic modal model of the spar.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Ascending.
    pub frequencies_hz: Vec<f64>,
    pub damping_ratios: Vec<f64>,
    /// Mass-normalized shapes, DOFs x modes; sign fixed by positive tip deflection.
    pub shapes: DMatrix<f64>,
    pub model: FeModel,
}

impl GroundTruth {
    pub fn mode_count(&self) -> usize {
        self.frequencies_hz.len()
    }

    /// Shapes sampled at span stations, stations x modes.
    pub fn shapes_at(&self, stations: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(stations.len(), self.mode_count());
        for (i, &x) in stations.iter().enumerate() {
            let row = self.model.deflection_row(x)?;
            out.set_row(i, &(row.transpose() * &self.shapes));
        }
        Ok(out)
    }

    /// Shape slopes at span stations, stations x modes.
    pub fn slopes_at(&self, stations: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(stations.len(), self.mode_count());
        for (i, &x) in stations.iter().enumerate() {
            let row = self.model.slope_row(x)?;
            out.set_row(i, &(row.transpose() * &self.shapes));
        }
        Ok(out)
    }

    /// Keeps only the first `n` modes.
    pub fn truncated(&self, n: usize) -> GroundTruth {
        let n = n.min(self.mode_count());
        GroundTruth {
            frequencies_hz: self.frequencies_hz[..n].to_vec(),
            damping_ratios: self.damping_ratios[..n].to_vec(),
            shapes: self.shapes.columns(0, n).into_owned(),
            model: self.model.clone(),
        }
    }
}

/// Default prescribed modal damping, mode 1 upwards. Higher modes reuse the
/// last value.
pub const DEFAULT_DAMPING: [f64; 3] = [0.008, 0.012, 0.028];

/// Solves `K phi = w^2 M phi` through a Cholesky reduction to a symmetric
/// standard problem. `damping` is per mode; a shorter list is padded with its
/// last entry.
pub fn modal_solve(model: &FeModel, n_modes: usize, damping: &[f64]) -> Result<GroundTruth> {
    let dof = model.dof_count();
    if n_modes == 0 || n_modes > dof {
        return Err(Error::FiniteElement(format!("cannot extract {n_modes} modes from {dof} DOFs")));
    }
    let Some(&last) = damping.last() else {
        return Err(Error::FiniteElement("no damping ratios given".into()));
    };
    if damping.iter().any(|z| !(*z >= 0.0 && *z < 1.0)) {
        return Err(Error::FiniteElement("damping ratios must lie in [0, 1)".into()));
    }
    let chol = model
        .mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::FiniteElement("mass matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(dof, dof))
        .ok_or_else(|| Error::FiniteElement("singular Cholesky factor".into()))?;
    let mut c = &l_inv * &model.stiffness * l_inv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..dof).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let tip = model.deflection_row(model.free_length)?;
    let mut shapes = DMatrix::zeros(dof, n_modes);
    let mut freqs = Vec::with_capacity(n_modes);
    for (j, &i) in order.iter().take(n_modes).enumerate() {
        let lambda = eig.eigenvalues[i];
        if !(lambda > 0.0) {
            return Err(Error::FiniteElement("non-positive stiffness eigenvalue".into()));
        }
        freqs.push(lambda.sqrt() / (2.0 * std::f64::consts::PI));
        let mut phi = l_inv.tr_mul(&eig.eigenvectors.column(i));
        if tip.dot(&phi) < 0.0 {
            phi = -phi;
        }
        shapes.set_column(j, &phi);
    }
    Ok(GroundTruth {
        frequencies_hz: freqs,
        damping_ratios: (0..n_modes).map(|j| *damping.get(j).unwrap_or(&last)).collect(),
        shapes,
        model: model.clone(),
    })
}
