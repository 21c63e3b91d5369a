//! Modal Assurance Criterion, cross-run comparison and AutoMAC-driven sensor
//! placement.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modeset::ModeSet;

/// `|a^H b|^2 / ((a^H a)(b^H b))`, clamped to `[0, 1]`.
pub fn mac(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Mac(format!("length mismatch {} vs {}", a.len(), b.len())));
    }
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::Mac("zero shape vector".into()));
    }
    let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    Ok((dot.norm_sqr() / (na * nb)).clamp(0.0, 1.0))
}

pub fn mac_real(a: &[f64], b: &[f64]) -> Result<f64> {
    let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    mac(&c(a), &c(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacMatrix {
    pub values: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl MacMatrix {
    /// Sum of the strictly upper-triangular entries.
    pub fn upper_off_diagonal_sum(&self) -> f64 {
        let n = self.values.nrows().min(self.values.ncols());
        (0..n).flat_map(|i| (i + 1..self.values.ncols()).map(move |j| (i, j))).map(|ij| self.values[ij]).sum()
    }
}

fn labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("mode {i}")).collect()
}

pub fn mac_matrix(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Result<MacMatrix> {
    let mut values = DMatrix::zeros(a.len(), b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            values[(i, j)] = mac(x, y)?;
        }
    }
    Ok(MacMatrix { values, row_labels: labels(a.len()), col_labels: labels(b.len()) })
}

/// MAC of a shape list against itself; symmetric with unit diagonal.
pub fn automac(shapes: &[Vec<Complex64>]) -> Result<MacMatrix> {
    if shapes.is_empty() {
        return Err(Error::Mac("no shapes".into()));
    }
    let n = shapes.len();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        mac(&shapes[i], &shapes[i])?;
        values[(i, i)] = 1.0;
        for j in i + 1..n {
            let m = mac(&shapes[i], &shapes[j])?;
            values[(i, j)] = m;
            values[(j, i)] = m;
        }
    }
    Ok(MacMatrix { values, row_labels: labels(n), col_labels: labels(n) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    /// 0-based indices into the two mode sets.
    pub index_a: usize,
    pub index_b: usize,
    pub frequency_a: f64,
    pub frequency_b: f64,
    /// `100 (b - a) / a`
    pub frequency_diff_pct: f64,
    pub damping_a: f64,
    pub damping_b: f64,
    pub damping_diff_pct: f64,
    /// `None` when the shapes have different lengths.
    pub mac: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pairs: Vec<ModePair>,
    pub unpaired_a: Vec<usize>,
    pub unpaired_b: Vec<usize>,
}

fn pct(a: f64, b: f64) -> f64 {
    100.0 * (b - a) / a
}

/// Pairs modes greedily by smallest relative frequency difference; pairs are
/// reported in ascending reference frequency.
pub fn compare_runs(a: &ModeSet, b: &ModeSet) -> ComparisonReport {
    let (ma, mb) = (a.modes(), b.modes());
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(ma.len() * mb.len());
    for (i, x) in ma.iter().enumerate() {
        for (j, y) in mb.iter().enumerate() {
            candidates.push(((y.frequency_hz - x.frequency_hz).abs() / x.frequency_hz, i, j));
        }
    }
    candidates.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let (mut used_a, mut used_b) = (vec![false; ma.len()], vec![false; mb.len()]);
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let (x, y) = (&ma[i], &mb[j]);
        pairs.push(ModePair {
            index_a: i,
            index_b: j,
            frequency_a: x.frequency_hz,
            frequency_b: y.frequency_hz,
            frequency_diff_pct: pct(x.frequency_hz, y.frequency_hz),
            damping_a: x.damping_ratio,
            damping_b: y.damping_ratio,
            damping_diff_pct: pct(x.damping_ratio, y.damping_ratio),
            mac: mac(&x.shape, &y.shape).ok(),
        });
    }
    pairs.sort_by_key(|p| p.index_a);
    ComparisonReport {
        pairs,
        unpaired_a: (0..ma.len()).filter(|&i| !used_a[i]).collect(),
        unpaired_b: (0..mb.len()).filter(|&j| !used_b[j]).collect(),
    }
}

impl ComparisonReport {
    /// Plain-text table: mode, reference and case values with percentage
    /// differences for frequency and damping, then MAC.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4} {:>10} {:>10} {:>9} {:>9} {:>9} {:>9} {:>7}",
            "mode", "f_ref_Hz", "f_case_Hz", "df_%", "zeta_ref", "zeta_case", "dzeta_%", "MAC"
        );
        for p in &self.pairs {
            let mac = p.mac.map_or_else(|| "-".to_string(), |m| format!("{m:.3}"));
            let _ = writeln!(
                out,
                "{:>4} {:>10.2} {:>10.2} {:>9.2} {:>9.4} {:>9.4} {:>9.2} {:>7}",
                p.index_a + 1,
                p.frequency_a,
                p.frequency_b,
                p.frequency_diff_pct,
                p.damping_a,
                p.damping_b,
                p.damping_diff_pct,
                mac
            );
        }
        for i in &self.unpaired_a {
            let _ = writeln!(out, "# unpaired reference mode {}", i + 1);
        }
        for j in &self.unpaired_b {
            let _ = writeln!(out, "# unpaired case mode {}", j + 1);
        }
        out
    }
}

/// Above this many subsets the search falls back to greedy elimination.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    /// Ascending candidate indices.
    pub indices: Vec<usize>,
    pub positions: Vec<f64>,
    pub objective: f64,
    pub method: SearchMethod,
    pub subsets_evaluated: u64,
}

/// Sum of upper off-diagonal AutoMAC entries of `shapes` (candidates x modes)
/// restricted to the rows in `subset`. Infinite when some mode vanishes on
/// the subset.
pub fn placement_objective(shapes: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let modes = shapes.ncols();
    let norms: Vec<f64> = (0..modes).map(|m| subset.iter().map(|&r| shapes[(r, m)].powi(2)).sum()).collect();
    if norms.iter().any(|n| !(*n > 0.0)) {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for a in 0..modes {
        for b in a + 1..modes {
            let dot: f64 = subset.iter().map(|&r| shapes[(r, a)] * shapes[(r, b)]).sum();
            total += (dot * dot / (norms[a] * norms[b])).min(1.0);
        }
    }
    total
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Chooses `n_sensors` of the candidate stations minimizing
/// [`placement_objective`]; ties go to the lexicographically smallest index
/// set.
pub fn optimize_placement(candidates: &[f64], shapes: &DMatrix<f64>, n_sensors: usize) -> Result<PlacementResult> {
    let n = candidates.len();
    if shapes.nrows() != n {
        return Err(Error::Placement(format!("{} shape rows for {n} candidates", shapes.nrows())));
    }
    if n_sensors == 0 || n_sensors > n {
        return Err(Error::Placement(format!("cannot choose {n_sensors} of {n} candidates")));
    }
    if shapes.ncols() == 0 {
        return Err(Error::Placement("no mode shapes".into()));
    }
    if n_sensors < shapes.ncols() {
        log::warn!("{n_sensors} sensors for {} modes: AutoMAC may be rank-deficient", shapes.ncols());
    }
    let (indices, objective, method, evaluated) = if binomial(n, n_sensors) <= EXHAUSTIVE_LIMIT {
        let (best, obj, count) = exhaustive(shapes, n, n_sensors);
        (best, obj, SearchMethod::Exhaustive, count)
    } else {
        let (best, obj, count) = greedy(shapes, n, n_sensors);
        (best, obj, SearchMethod::Greedy, count)
    };
    if !objective.is_finite() {
        return Err(Error::Placement("every subset leaves some mode unobserved".into()));
    }
    Ok(PlacementResult {
        positions: indices.iter().map(|&i| candidates[i]).collect(),
        indices,
        objective,
        method,
        subsets_evaluated: evaluated,
    })
}

fn exhaustive(shapes: &DMatrix<f64>, n: usize, k: usize) -> (Vec<usize>, f64, u64) {
    let mut current: Vec<usize> = (0..k).collect();
    let mut best = current.clone();
    let mut best_obj = placement_objective(shapes, &current);
    let mut count = 1u64;
    // lexicographic enumeration: the first minimum found wins ties
    while let Some(pos) = (0..k).rev().find(|&i| current[i] < n - k + i) {
        current[pos] += 1;
        for i in pos + 1..k {
            current[i] = current[i - 1] + 1;
        }
        let obj = placement_objective(shapes, &current);
        count += 1;
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&current);
        }
    }
    (best, best_obj, count)
}

fn greedy(shapes: &DMatrix<f64>, n: usize, k: usize) -> (Vec<usize>, f64, u64) {
    let mut current: Vec<usize> = (0..n).collect();
    let mut count = 0u64;
    while current.len() > k {
        let mut choice = (f64::INFINITY, current.len() - 1);
        // removing later entries first keeps ties lexicographically small
        for drop in (0..current.len()).rev() {
            let trial: Vec<usize> = current.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &c)| c).collect();
            let obj = placement_objective(shapes, &trial);
            count += 1;
            if obj < choice.0 {
                choice = (obj, drop);
            }
        }
        current.remove(choice.1);
    }
    let obj = placement_objective(shapes, &current);
    (current, obj, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modeset::Mode;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    fn set(f: &[f64], z: &[f64]) -> ModeSet {
        ModeSet::new(
            f.iter()
                .zip(z)
                .enumerate()
                .map(|(i, (&f, &z))| Mode {
                    frequency_hz: f,
                    damping_ratio: z,
                    shape: c(&[1.0, i as f64, (i * i) as f64 + 0.5]),
                    cluster_size: 15,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mac_identity_and_orthogonality() {
        let a = c(&[0.3, -1.2, 2.0]);
        assert!((mac(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mac(&c(&[1.0, 0.0]), &c(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(mac(&c(&[0.0, 0.0]), &a[..2]).is_err());
        assert!(mac(&a, &a[..2]).is_err());
    }

    #[test]
    fn automac_of_orthogonal_and_duplicate_shapes() {
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            c(&v)
        };
        let m = automac(&[e(0), e(1), e(2)]).unwrap();
        assert_eq!(m.values, DMatrix::identity(3, 3));
        let phi = c(&[1.0, 2.0, -0.5]);
        let m = automac(&[phi.clone(), phi]).unwrap();
        assert!(m.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    /// Analytic clamped-free beam modes.
    fn cantilever_mode(n: usize, x: f64) -> f64 {
        let bl: f64 = [1.875_104_068_711_961, 4.694_091_132_974_175, 7.854_757_438_237_613][n];
        let s = (bl.sinh() - bl.sin()) / (bl.cosh() + bl.cos());
        let b = bl * x;
        b.cosh() - b.cos() - s * (b.sinh() - b.sin())
    }

    #[test]
    fn analytic_cantilever_modes_are_well_separated() {
        let xs: Vec<f64> = (1..=7).map(|i| i as f64 / 7.0).collect();
        let shapes: Vec<Vec<Complex64>> =
            (0..3).map(|n| c(&xs.iter().map(|&x| cantilever_mode(n, x)).collect::<Vec<_>>())).collect();
        let m = automac(&shapes).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(m.values[(i, j)] < 0.3, "{i},{j}: {}", m.values[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn comparison_reproduces_reference_table() {
        let r = compare_runs(
            &set(&[2.48, 13.37, 24.10], &[0.008, 0.012, 0.028]),
            &set(&[2.45, 13.30, 22.84], &[0.014, 0.015, 0.031]),
        );
        let round = |v: f64| (v * 100.0).round() / 100.0;
        let df: Vec<f64> = r.pairs.iter().map(|p| round(p.frequency_diff_pct)).collect();
        let dz: Vec<f64> = r.pairs.iter().map(|p| round(p.damping_diff_pct)).collect();
        assert_eq!(df, vec![-1.21, -0.52, -5.23]);
        assert_eq!(dz, vec![75.0, 25.0, 10.71]);
        let table = r.to_table();
        assert!(table.contains("-1.21") && table.contains("75.00") && table.contains("10.71"));
    }

    #[test]
    fn self_comparison_is_all_zero() {
        let m = set(&[2.48, 13.37, 24.10], &[0.008, 0.012, 0.028]);
        let r = compare_runs(&m, &m);
        assert!(r.pairs.iter().all(|p| p.frequency_diff_pct == 0.0 && p.damping_diff_pct == 0.0));
        assert!(r.pairs.iter().all(|p| (p.mac.unwrap() - 1.0).abs() < 1e-12));
        assert!(r.unpaired_a.is_empty() && r.unpaired_b.is_empty());
    }

    #[test]
    fn extra_modes_are_listed_as_unpaired() {
        let r = compare_runs(&set(&[2.48, 13.37, 24.10], &[0.01; 3]), &set(&[2.5, 24.0], &[0.01; 2]));
        assert_eq!(r.pairs.len(), 2);
        assert_eq!(r.unpaired_a, vec![1]);
        assert!(r.to_table().contains("unpaired reference mode 2"));
    }

    fn brute_force(shapes: &DMatrix<f64>, k: usize) -> (Vec<usize>, f64) {
        let n = shapes.nrows();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let obj = placement_objective(shapes, &subset);
            let better = match &best {
                None => true,
                Some((s, o)) => obj < *o || (obj == *o && subset < *s),
            };
            if better {
                best = Some((subset, obj));
            }
        }
        best.unwrap()
    }

    #[test]
    fn exhaustive_search_matches_brute_force() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let shapes = DMatrix::from_fn(10, 3, |r, m| cantilever_mode(m, xs[r]));
        let res = optimize_placement(&xs, &shapes, 3).unwrap();
        let (oracle, obj) = brute_force(&shapes, 3);
        assert_eq!(res.method, SearchMethod::Exhaustive);
        assert_eq!(res.indices, oracle);
        assert_eq!(res.subsets_evaluated, 120);
        assert!((res.objective - obj).abs() < 1e-12);
        assert!((placement_objective(&shapes, &res.indices) - res.objective).abs() < 1e-12);
    }

    #[test]
    fn full_set_is_forced() {
        let xs: Vec<f64> = (1..=7).map(|i| i as f64 / 7.0).collect();
        let shapes = DMatrix::from_fn(7, 3, |r, m| cantilever_mode(m, xs[r]));
        let res = optimize_placement(&xs, &shapes, 7).unwrap();
        assert_eq!(res.indices, (0..7).collect::<Vec<_>>());
        let cols: Vec<Vec<Complex64>> = (0..3).map(|m| c(shapes.column(m).as_slice())).collect();
        assert!((res.objective - automac(&cols).unwrap().upper_off_diagonal_sum()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pair_reaches_zero() {
        let shapes = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 0.3, 0.9, 0.5, 0.5]);
        let res = optimize_placement(&[0.1, 0.2, 0.3, 0.4], &shapes, 2).unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.indices, vec![0, 1]);
    }

    #[test]
    fn greedy_is_never_better_than_exhaustive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let shapes = DMatrix::from_fn(9, 3, |_, _| rng.random_range(-1.0..1.0));
            let (_, ex, _) = exhaustive(&shapes, 9, 4);
            let (_, gr, _) = greedy(&shapes, 9, 4);
            assert!(gr >= ex - 1e-15);
        }
    }

    #[test]
    fn large_searches_fall_back_to_greedy() {
        let xs: Vec<f64> = (1..=40).map(|i| i as f64 / 40.0).collect();
        let shapes = DMatrix::from_fn(40, 3, |r, m| cantilever_mode(m, xs[r]));
        let res = optimize_placement(&xs, &shapes, 10).unwrap();
        assert_eq!(res.method, SearchMethod::Greedy);
        assert_eq!(res.indices.len(), 10);
        assert!(optimize_placement(&xs, &shapes, 41).is_err());
    }

    fn arb_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), len)
            .prop_map(|v| v.into_iter().map(|(r, i)| Complex64::new(r, i)).collect())
            .prop_filter("nonzero", |v: &Vec<Complex64>| v.iter().any(|z| z.norm() > 1e-3))
    }

    proptest! {
        #[test]
        fn mac_is_scale_and_phase_invariant(
            (a, b) in (1usize..10).prop_flat_map(|n| (arb_vec(n), arb_vec(n))),
            alpha in (0.01f64..100.0, -3.2f64..3.2),
            beta in (0.01f64..100.0, -3.2f64..3.2),
        ) {
            let m = mac(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            let sa = Complex64::from_polar(alpha.0, alpha.1);
            let sb = Complex64::from_polar(beta.0, beta.1);
            let a2: Vec<Complex64> = a.iter().map(|z| z * sa).collect();
            let b2: Vec<Complex64> = b.iter().map(|z| z * sb).collect();
            prop_assert!((mac(&a2, &b2).unwrap() - m).abs() < 1e-12);
            prop_assert!((mac(&b, &a).unwrap() - m).abs() < 1e-15);
        }

        #[test]
        fn automac_is_symmetric_with_unit_diagonal(
            shapes in (2usize..8).prop_flat_map(|n| prop::collection::vec(arb_vec(n), 1..6)),
        ) {
            let m = automac(&shapes).unwrap();
            for i in 0..shapes.len() {
                prop_assert!((m.values[(i, i)] - 1.0).abs() < 1e-12);
                for j in 0..shapes.len() {
                    prop_assert_eq!(m.values[(i, j)], m.values[(j, i)]);
                }
            }
        }
    }
}
