//! Loewner-framework realization from half-spectrum samples.
//!
//! In-band frequency samples are split into right points `lambda_j` (full
//! channel vectors `w_j`, scalar right direction 1) and left points `mu_i`
//! (one channel `c_i` each, value `v_i`). Both sets are closed under complex
//! conjugation, pairs stored adjacently as `[s, conj(s)]`, which lets the
//! pencil be rotated into an exactly real one. The rank-k projection of the
//! pencil gives a descriptor model `(E, A, B, C)` whose generalized
//! eigenvalues are the identified poles.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::next::HalfSpectrumSet;

/// Singular-value ratio below which an order is flagged as exceeding the
/// numerical rank of the data.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Reciprocal condition of `E` below which the pencil is treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// Even-indexed in-band samples go right, odd-indexed left.
    #[default]
    Alternating,
    /// Lower half of the band right, upper half left.
    Contiguous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoewnerData {
    pub right_points: Vec<Complex64>,
    /// channels x right points
    pub right_values: DMatrix<Complex64>,
    pub left_points: Vec<Complex64>,
    /// Channel selected by each left point's direction.
    pub left_channels: Vec<usize>,
    pub left_values: Vec<Complex64>,
    pub band: [f64; 2],
    /// In-band frequency samples used, before conjugate closure.
    pub sample_count: usize,
}

impl LoewnerData {
    pub fn channel_count(&self) -> usize {
        self.right_values.nrows()
    }

    /// Largest order the data can support.
    pub fn max_order(&self) -> usize {
        self.left_points.len().min(self.right_points.len())
    }
}

pub fn build_loewner_data(spectra: &HalfSpectrumSet, band: [f64; 2], max_order: usize) -> Result<LoewnerData> {
    build_loewner_data_with(spectra, band, max_order, Partition::Alternating)
}

/// Selects samples with `band[0] <= f <= band[1]` and `f > 0` (the zero
/// frequency is its own conjugate and is skipped).
pub fn build_loewner_data_with(
    spectra: &HalfSpectrumSet,
    band: [f64; 2],
    max_order: usize,
    partition: Partition,
) -> Result<LoewnerData> {
    let [lo, hi] = band;
    let top = spectra.frequencies.last().copied().unwrap_or(0.0);
    if !(lo >= 0.0 && hi > lo) || hi > top * (1.0 + 1e-12) {
        return Err(Error::LoewnerData(format!("band [{lo}, {hi}] Hz outside the spectrum grid [0, {top}]")));
    }
    let slack = 1e-9 * hi;
    let idx: Vec<usize> = (0..spectra.frequencies.len())
        .filter(|&k| {
            let f = spectra.frequencies[k];
            f > 0.0 && f >= lo - slack && f <= hi + slack
        })
        .collect();
    if idx.len() < 2 * max_order.max(1) {
        return Err(Error::LoewnerData(format!(
            "{} samples in band, order {max_order} needs at least {}",
            idx.len(),
            2 * max_order.max(1)
        )));
    }
    let (right, left): (Vec<usize>, Vec<usize>) = match partition {
        Partition::Alternating => {
            (idx.iter().step_by(2).copied().collect(), idx.iter().skip(1).step_by(2).copied().collect())
        }
        Partition::Contiguous => {
            let half = idx.len().div_ceil(2);
            (idx[..half].to_vec(), idx[half..].to_vec())
        }
    };
    let p = spectra.channel_count();
    let s = |k: usize| Complex64::new(0.0, 2.0 * std::f64::consts::PI * spectra.frequencies[k]);

    let mut right_points = Vec::with_capacity(2 * right.len());
    let mut right_values = DMatrix::from_element(p, 2 * right.len(), Complex64::new(0.0, 0.0));
    for (j, &k) in right.iter().enumerate() {
        right_points.push(s(k));
        right_points.push(s(k).conj());
        for c in 0..p {
            right_values[(c, 2 * j)] = spectra.values[(c, k)];
            right_values[(c, 2 * j + 1)] = spectra.values[(c, k)].conj();
        }
    }
    let mut left_points = Vec::with_capacity(2 * left.len());
    let mut left_channels = Vec::with_capacity(2 * left.len());
    let mut left_values = Vec::with_capacity(2 * left.len());
    for (i, &k) in left.iter().enumerate() {
        let c = i % p;
        let v = spectra.values[(c, k)];
        left_points.extend([s(k), s(k).conj()]);
        left_channels.extend([c, c]);
        left_values.extend([v, v.conj()]);
    }
    Ok(LoewnerData {
        right_points,
        right_values,
        left_points,
        left_channels,
        left_values,
        band,
        sample_count: idx.len(),
    })
}

/// Complex Loewner and shifted Loewner matrices, left x right.
pub fn loewner_matrices(data: &LoewnerData) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let (nl, nr) = (data.left_points.len(), data.right_points.len());
    let mut l = DMatrix::from_element(nl, nr, Complex64::new(0.0, 0.0));
    let mut ls = l.clone();
    for i in 0..nl {
        let (mu, v, c) = (data.left_points[i], data.left_values[i], data.left_channels[i]);
        for j in 0..nr {
            let (lambda, w) = (data.right_points[j], data.right_values[(c, j)]);
            let d = mu - lambda;
            l[(i, j)] = (v - w) / d;
            ls[(i, j)] = (mu * v - lambda * w) / d;
        }
    }
    (l, ls)
}

/// `P^H M P` for block-diagonal `P = blockdiag((1/sqrt2) [[1, -i], [1, i]])`,
/// exploiting the `[[a, b], [conj b, conj a]]` structure of conjugate-closed
/// blocks so the result is real by construction.
fn realify_pencil(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = (m.nrows() / 2, m.ncols() / 2);
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let a = m[(2 * i, 2 * j)];
            let b = m[(2 * i, 2 * j + 1)];
            out[(2 * i, 2 * j)] = a.re + b.re;
            out[(2 * i, 2 * j + 1)] = a.im - b.im;
            out[(2 * i + 1, 2 * j)] = -a.im - b.im;
            out[(2 * i + 1, 2 * j + 1)] = a.re - b.re;
        }
    }
    out
}

/// Loewner pencil in real form with its projection bases, computed once and
/// truncated for every requested order.
#[derive(Debug, Clone)]
pub struct LoewnerPencil {
    pub l: DMatrix<f64>,
    pub ls: DMatrix<f64>,
    pub v: DVector<f64>,
    pub w: DMatrix<f64>,
    /// Leading left singular vectors of `[L, Ls]`.
    y: DMatrix<f64>,
    /// Leading right singular vectors of `[L; Ls]`.
    x: DMatrix<f64>,
    /// Singular values of `[L, Ls]`.
    pub singular_values: Vec<f64>,
    pub band: [f64; 2],
    pub sample_count: usize,
}

impl LoewnerPencil {
    pub fn new(data: &LoewnerData, max_order: usize) -> Result<Self> {
        let max_order = max_order.min(data.max_order());
        let (lc, lsc) = loewner_matrices(data);
        let l = realify_pencil(&lc);
        let ls = realify_pencil(&lsc);
        let sqrt2 = std::f64::consts::SQRT_2;
        let v = DVector::from_fn(data.left_values.len(), |i, _| {
            let z = data.left_values[i - i % 2];
            sqrt2 * if i % 2 == 0 { z.re } else { -z.im }
        });
        let w = DMatrix::from_fn(data.channel_count(), data.right_points.len(), |c, j| {
            let z = data.right_values[(c, j - j % 2)];
            sqrt2 * if j % 2 == 0 { z.re } else { z.im }
        });

        let (nl, nr) = (l.nrows(), l.ncols());
        let mut row_stack = DMatrix::zeros(nl, 2 * nr);
        row_stack.columns_mut(0, nr).copy_from(&l);
        row_stack.columns_mut(nr, nr).copy_from(&ls);
        let mut col_stack = DMatrix::zeros(2 * nl, nr);
        col_stack.rows_mut(0, nl).copy_from(&l);
        col_stack.rows_mut(nl, nl).copy_from(&ls);

        let svd_rows = SVD::new(row_stack, true, false);
        let svd_cols = SVD::new(col_stack, false, true);
        let (u, s1) = sorted_u(&svd_rows);
        let vt = sorted_vt(&svd_cols);
        let y = u.columns(0, max_order.min(u.ncols())).into_owned();
        let x = vt.rows(0, max_order.min(vt.nrows())).transpose();
        Ok(Self { l, ls, v, w, y, x, singular_values: s1, band: data.band, sample_count: data.sample_count })
    }

    pub fn max_order(&self) -> usize {
        self.y.ncols().min(self.x.ncols())
    }

    pub fn realize(&self, k: usize) -> Result<RealizedModel> {
        if k == 0 || !k.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("order {k} must be even and positive")));
        }
        if k > self.max_order() {
            return Err(Error::InvalidConfig(format!(
                "order {k} exceeds the {} available from the data",
                self.max_order()
            )));
        }
        let yk = self.y.columns(0, k);
        let xk = self.x.columns(0, k);
        let e = -(yk.transpose() * &self.l * xk);
        let a = -(yk.transpose() * &self.ls * xk);
        let b = yk.transpose() * &self.v;
        let c = &self.w * xk;

        let s_e = e.clone().svd(false, false).singular_values;
        let (smax, smin) = (s_e.max(), s_e.min());
        if !(smax > 0.0) || smin / smax < SINGULAR_TOLERANCE {
            return Err(Error::SingularPencil {
                order: k,
                reason: format!("E has reciprocal condition {:.3e}", if smax > 0.0 { smin / smax } else { 0.0 }),
            });
        }
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        let sk = self.singular_values.get(k - 1).copied().unwrap_or(0.0);
        let rank_deficient = !(s1 > 0.0) || sk / s1 < RANK_TOLERANCE;
        if rank_deficient {
            log::warn!("order {k} exceeds the numerical rank of the Loewner data");
        }
        Ok(RealizedModel { order: k, e, a, b, c, band: self.band, sample_count: self.sample_count, rank_deficient })
    }
}

fn sorted_order(s: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order
}

fn sorted_u(svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> (DMatrix<f64>, Vec<f64>) {
    let order = sorted_order(&svd.singular_values);
    let u = svd.u.as_ref().expect("left vectors requested");
    (u.select_columns(order.iter()), order.iter().map(|&i| svd.singular_values[i]).collect())
}

fn sorted_vt(svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> DMatrix<f64> {
    let order = sorted_order(&svd.singular_values);
    svd.v_t.as_ref().expect("right vectors requested").select_rows(order.iter())
}

/// Order-`k` descriptor model `E x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedModel {
    pub order: usize,
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub band: [f64; 2],
    pub sample_count: usize,
    /// `sigma_k / sigma_1` fell below [`RANK_TOLERANCE`].
    pub rank_deficient: bool,
}

impl RealizedModel {
    /// `C (sE - A)^{-1} B`, one entry per channel.
    pub fn transfer(&self, s: Complex64) -> Vec<Complex64> {
        let k = self.order;
        let m = DMatrix::from_fn(k, k, |i, j| s * self.e[(i, j)] - self.a[(i, j)]);
        let rhs = DVector::from_fn(k, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m.lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(k, Complex64::new(f64::NAN, 0.0)));
        (0..self.c.nrows()).map(|c| (0..k).map(|j| x[j] * self.c[(c, j)]).sum()).collect()
    }
}

/// One-shot realization; sweeps over many orders should build a
/// [`LoewnerPencil`] once instead.
pub fn realize(data: &LoewnerData, k: usize) -> Result<RealizedModel> {
    LoewnerPencil::new(data, k)?.realize(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleEstimate {
    /// rad/s
    pub pole: Complex64,
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    /// Scaled so the largest-modulus entry is 1.
    pub shape: Vec<Complex64>,
}

impl PoleEstimate {
    pub fn from_pole(pole: Complex64, shape: Vec<Complex64>) -> Self {
        let (frequency_hz, damping_ratio) = pole_to_modal(pole);
        Self { pole, frequency_hz, damping_ratio, shape }
    }
}

/// `lambda = -zeta w + i w sqrt(1 - zeta^2)`, `w = 2 pi f`.
pub fn pole_from_modal(frequency_hz: f64, damping_ratio: f64) -> Complex64 {
    let w = 2.0 * std::f64::consts::PI * frequency_hz;
    Complex64::new(-damping_ratio * w, w * (1.0 - damping_ratio * damping_ratio).sqrt())
}

/// `(|lambda| / 2 pi, -Re(lambda) / |lambda|)`.
pub fn pole_to_modal(pole: Complex64) -> (f64, f64) {
    let r = pole.norm();
    (r / (2.0 * std::f64::consts::PI), -pole.re / r)
}

/// Upper-half-plane generalized eigenvalues of `(A, E)` with shapes `C v`.
pub fn extract_poles(model: &RealizedModel) -> Result<Vec<PoleEstimate>> {
    let k = model.order;
    let e_inv = model
        .e
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularPencil { order: k, reason: "E is not invertible".into() })?;
    let m = &e_inv * &model.a;
    let eig = m.complex_eigenvalues();
    let mut poles: Vec<Complex64> = eig.iter().copied().filter(|z| z.im > 0.0 && z.is_finite()).collect();
    poles.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));

    let mc = m.map(|x| Complex64::new(x, 0.0));
    let scale = m.norm().max(f64::MIN_POSITIVE);
    Ok(poles
        .into_iter()
        .map(|p| {
            let v = inverse_iteration(&mc, p, scale);
            let mut shape: Vec<Complex64> =
                (0..model.c.nrows()).map(|c| (0..k).map(|j| v[j] * model.c[(c, j)]).sum()).collect();
            normalise_shape(&mut shape);
            PoleEstimate::from_pole(p, shape)
        })
        .collect())
}

fn inverse_iteration(m: &DMatrix<Complex64>, lambda: Complex64, scale: f64) -> DVector<Complex64> {
    let k = m.nrows();
    let shift = lambda + Complex64::new(scale * 1e-13, scale * 1e-13);
    let shifted = m - DMatrix::from_diagonal_element(k, k, shift);
    let lu = shifted.lu();
    let mut v = DVector::from_fn(k, |i, _| Complex64::new(1.0, 0.1 * i as f64));
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(next) if next.iter().all(|z| z.is_finite()) => {
                let n = next.norm();
                if n == 0.0 {
                    break;
                }
                v = next.unscale(n);
            }
            _ => break,
        }
    }
    v
}

fn normalise_shape(shape: &mut [Complex64]) {
    if let Some(big) = shape.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
        if big.norm() > 0.0 {
            for z in shape.iter_mut() {
                *z /= big;
            }
        }
    }
}
