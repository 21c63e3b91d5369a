//! Stabilisation diagram over a grid of model orders.
//!
//! Every order is realized from one shared Loewner pencil. Poles first pass
//! hard frequency and damping screens, then are compared with the nearest
//! surviving pole of the previous realized order for frequency, damping and
//! shape consistency. Poles consistent on all three counts are clustered
//! into modes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loewner::{build_loewner_data, extract_poles, LoewnerPencil, PoleEstimate};
use crate::metrics::mac;
use crate::modeset::{Mode, ModeSet};
use crate::next::HalfSpectrumSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub k_step: usize,
    /// `[zeta_min, zeta_max]`
    pub damping_range: [f64; 2],
    /// `[f_min, f_max]`, Hz; also the identification band.
    pub frequency_range: [f64; 2],
    /// Relative frequency tolerance.
    pub freq_tol: f64,
    /// Relative damping tolerance.
    pub damp_tol: f64,
    pub mac_tol: f64,
    pub min_cluster_size: usize,
}

impl Default for StabConfig {
    fn default() -> Self {
        Self {
            k_min: 32,
            k_max: 60,
            k_step: 2,
            damping_range: [0.005, 0.03],
            frequency_range: [0.0, 30.0],
            freq_tol: 0.01,
            damp_tol: 0.05,
            mac_tol: 0.95,
            min_cluster_size: 5,
        }
    }
}

impl StabConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("stabilisation: {m}")));
        if self.k_min == 0 || self.k_min > self.k_max {
            return bad("need 0 < k_min <= k_max");
        }
        if self.k_step == 0 || !self.k_step.is_multiple_of(2) || !self.k_min.is_multiple_of(2) {
            return bad("orders and order step must be even");
        }
        let [z0, z1] = self.damping_range;
        if !(0.0 <= z0 && z0 < z1 && z1 < 1.0) {
            return bad("damping range must satisfy 0 <= min < max < 1");
        }
        let [f0, f1] = self.frequency_range;
        if !(f0 >= 0.0 && f0 < f1 && f1.is_finite()) {
            return bad("frequency range must satisfy 0 <= min < max");
        }
        if !(self.freq_tol > 0.0 && self.damp_tol > 0.0) {
            return bad("soft tolerances must be positive");
        }
        if !(self.mac_tol > 0.0 && self.mac_tol <= 1.0) {
            return bad("MAC threshold must lie in (0, 1]");
        }
        if self.min_cluster_size == 0 {
            return bad("minimum cluster size must be positive");
        }
        Ok(())
    }

    pub fn orders(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.k_step.max(1)).collect()
    }

    fn hard_pass(&self, p: &PoleEstimate) -> bool {
        let [z0, z1] = self.damping_range;
        let [f0, f1] = self.frequency_range;
        p.damping_ratio >= z0 && p.damping_ratio <= z1 && p.frequency_hz >= f0 && p.frequency_hz <= f1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabPole {
    pub estimate: PoleEstimate,
    pub hard_pass: bool,
    pub freq_stable: bool,
    pub damp_stable: bool,
    pub shape_stable: bool,
}

impl StabPole {
    pub fn fully_stable(&self) -> bool {
        self.freq_stable && self.damp_stable && self.shape_stable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderResult {
    pub order: usize,
    /// Every upper-half-plane pole, including those failing the hard screen.
    pub poles: Vec<StabPole>,
    /// Realization failure, in which case `poles` is empty.
    pub failure: Option<String>,
}

/// Member reference: `(index into orders, index into that order's poles)`.
pub type PoleRef = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<PoleRef>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StabilisationDiagram {
    pub orders: Vec<OrderResult>,
    pub clusters: Vec<Cluster>,
}

impl StabilisationDiagram {
    pub fn pole(&self, r: PoleRef) -> &StabPole {
        &self.orders[r.0].poles[r.1]
    }

    /// Rows of `order frequency_hz damping hard freq damp shape stable`, flags
    /// as 0/1, hard-screened poles included.
    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "# order frequency_hz damping_ratio hard_pass freq_stable damp_stable shape_stable fully_stable\n",
        );
        for o in &self.orders {
            if let Some(f) = &o.failure {
                let _ = writeln!(out, "# order {} failed: {f}", o.order);
            }
            for p in &o.poles {
                let b = |x: bool| u8::from(x);
                let _ = writeln!(
                    out,
                    "{} {:.6} {:.6} {} {} {} {} {}",
                    o.order,
                    p.estimate.frequency_hz,
                    p.estimate.damping_ratio,
                    b(p.hard_pass),
                    b(p.freq_stable),
                    b(p.damp_stable),
                    b(p.shape_stable),
                    b(p.fully_stable())
                );
            }
        }
        out
    }
}

/// Moves a pole right by the exponential taper decay, undoing the window's
/// artificial damping exactly.
fn correct_for_taper(p: PoleEstimate, shift: f64) -> PoleEstimate {
    if shift == 0.0 {
        return p;
    }
    let pole = p.pole + shift;
    PoleEstimate::from_pole(pole, p.shape)
}

pub fn run_sweep(spectra: &HalfSpectrumSet, cfg: &StabConfig) -> Result<StabilisationDiagram> {
    cfg.validate()?;
    let orders = cfg.orders();
    let data = build_loewner_data(spectra, cfg.frequency_range, cfg.k_max)?;
    let pencil = LoewnerPencil::new(&data, cfg.k_max)?;
    let shift = spectra.taper.pole_shift();

    let realized: Vec<OrderResult> = orders
        .par_iter()
        .map(|&k| match pencil.realize(k).and_then(|m| extract_poles(&m)) {
            Ok(poles) => OrderResult {
                order: k,
                poles: poles
                    .into_iter()
                    .map(|p| {
                        let estimate = correct_for_taper(p, shift);
                        StabPole {
                            hard_pass: cfg.hard_pass(&estimate),
                            estimate,
                            freq_stable: false,
                            damp_stable: false,
                            shape_stable: false,
                        }
                    })
                    .collect(),
                failure: None,
            },
            Err(e) => OrderResult { order: k, poles: Vec::new(), failure: Some(e.to_string()) },
        })
        .collect();
    if realized.iter().all(|o| o.failure.is_some()) {
        return Err(Error::AllOrdersFailed {
            diagnostics: realized
                .iter()
                .map(|o| format!("k={}: {}", o.order, o.failure.as_deref().unwrap_or("")))
                .collect(),
        });
    }
    let mut diagram = StabilisationDiagram { orders: realized, clusters: Vec::new() };
    apply_soft_flags(&mut diagram, cfg);
    diagram.clusters = form_clusters(&diagram, cfg);
    Ok(diagram)
}

/// Flags each hard-passing pole against the nearest-frequency hard-passing
/// pole of the previous realized order; ties go to the higher MAC.
pub fn apply_soft_flags(diagram: &mut StabilisationDiagram, cfg: &StabConfig) {
    let mut previous: Option<usize> = None;
    for idx in 0..diagram.orders.len() {
        if diagram.orders[idx].failure.is_some() {
            continue;
        }
        let prev: Vec<PoleEstimate> = match previous {
            Some(p) => diagram.orders[p].poles.iter().filter(|q| q.hard_pass).map(|q| q.estimate.clone()).collect(),
            None => Vec::new(),
        };
        for pole in diagram.orders[idx].poles.iter_mut() {
            pole.freq_stable = false;
            pole.damp_stable = false;
            pole.shape_stable = false;
            if !pole.hard_pass {
                continue;
            }
            let est = &pole.estimate;
            let mut best: Option<(f64, f64, &PoleEstimate)> = None;
            for q in &prev {
                let d = (q.frequency_hz - est.frequency_hz).abs();
                let m = mac(&est.shape, &q.shape).unwrap_or(0.0);
                let better = match best {
                    None => true,
                    Some((bd, bm, _)) => d < bd || (d == bd && m > bm),
                };
                if better {
                    best = Some((d, m, q));
                }
            }
            if let Some((d, m, q)) = best {
                pole.freq_stable = d / q.frequency_hz <= cfg.freq_tol;
                pole.damp_stable = (est.damping_ratio - q.damping_ratio).abs() / q.damping_ratio <= cfg.damp_tol;
                pole.shape_stable = m >= cfg.mac_tol;
            }
        }
        previous = Some(idx);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Greedy clustering of fully stable poles in ascending frequency. A pole
/// joins the qualifying cluster with the highest MAC against its
/// representative (the highest-order member); a cluster takes at most one pole
/// per order.
pub fn form_clusters(diagram: &StabilisationDiagram, cfg: &StabConfig) -> Vec<Cluster> {
    let mut stable: Vec<PoleRef> = diagram
        .orders
        .iter()
        .enumerate()
        .flat_map(|(o, r)| r.poles.iter().enumerate().filter(|(_, p)| p.fully_stable()).map(move |(i, _)| (o, i)))
        .collect();
    stable.sort_by(|a, b| {
        let (pa, pb) = (diagram.pole(*a), diagram.pole(*b));
        pa.estimate.frequency_hz.total_cmp(&pb.estimate.frequency_hz).then(a.cmp(b))
    });

    struct Working {
        members: Vec<PoleRef>,
        freqs: Vec<f64>,
        representative: PoleRef,
    }
    let mut clusters: Vec<Working> = Vec::new();
    for r in stable {
        let p = diagram.pole(r);
        let mut choice: Option<(usize, f64)> = None;
        for (ci, c) in clusters.iter().enumerate() {
            if c.members.iter().any(|m| m.0 == r.0) {
                continue;
            }
            let med = median(c.freqs.clone());
            if (p.estimate.frequency_hz - med).abs() / med > cfg.freq_tol {
                continue;
            }
            let m = mac(&p.estimate.shape, &diagram.pole(c.representative).estimate.shape).unwrap_or(0.0);
            if m >= cfg.mac_tol && choice.is_none_or(|(_, bm)| m > bm) {
                choice = Some((ci, m));
            }
        }
        match choice {
            Some((ci, _)) => {
                let c = &mut clusters[ci];
                c.members.push(r);
                c.freqs.push(p.estimate.frequency_hz);
                if diagram.orders[r.0].order > diagram.orders[c.representative.0].order {
                    c.representative = r;
                }
            }
            None => {
                clusters.push(Working { members: vec![r], freqs: vec![p.estimate.frequency_hz], representative: r })
            }
        }
    }
    clusters.into_iter().map(|c| Cluster { members: c.members }).collect()
}

/// Clusters with at least `min_cluster_size` members become modes: median
/// frequency and damping, shape of the highest-order member.
pub fn cluster_modes(diagram: &StabilisationDiagram, cfg: &StabConfig) -> Result<ModeSet> {
    let clusters = if diagram.clusters.is_empty() { form_clusters(diagram, cfg) } else { diagram.clusters.clone() };
    let mut modes = Vec::new();
    for c in clusters.iter().filter(|c| c.members.len() >= cfg.min_cluster_size) {
        let top = *c.members.iter().max_by_key(|m| (diagram.orders[m.0].order, std::cmp::Reverse(m.1))).unwrap();
        let f = median(c.members.iter().map(|&m| diagram.pole(m).estimate.frequency_hz).collect());
        let z = median(c.members.iter().map(|&m| diagram.pole(m).estimate.damping_ratio).collect());
        if !(z > 0.0 && z < 1.0 && f > 0.0) {
            log::warn!("dropping cluster at {f} Hz with damping {z}");
            continue;
        }
        modes.push(Mode {
            frequency_hz: f,
            damping_ratio: z,
            shape: diagram.pole(top).estimate.shape.clone(),
            cluster_size: c.members.len(),
        });
    }
    if modes.is_empty() {
        log::warn!("no cluster reached {} stable poles", cfg.min_cluster_size);
    }
    ModeSet::new(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loewner::pole_from_modal;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn est(f: f64, z: f64, shape: &[f64]) -> PoleEstimate {
        PoleEstimate::from_pole(pole_from_modal(f, z), shape.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    fn diagram(
        orders: &[usize],
        per_order: impl Fn(usize, usize) -> Vec<PoleEstimate>,
        cfg: &StabConfig,
    ) -> StabilisationDiagram {
        let mut d = StabilisationDiagram {
            orders: orders
                .iter()
                .enumerate()
                .map(|(i, &k)| OrderResult {
                    order: k,
                    poles: per_order(i, k)
                        .into_iter()
                        .map(|e| StabPole {
                            hard_pass: cfg.hard_pass(&e),
                            estimate: e,
                            freq_stable: false,
                            damp_stable: false,
                            shape_stable: false,
                        })
                        .collect(),
                    failure: None,
                })
                .collect(),
            clusters: Vec::new(),
        };
        apply_soft_flags(&mut d, cfg);
        d.clusters = form_clusters(&d, cfg);
        d
    }

    #[test]
    fn constructed_diagram_gives_two_modes() {
        let cfg = StabConfig::default();
        let orders = cfg.orders();
        // 16 orders so 15 carry a predecessor; mode 2 misses one order
        let orders: Vec<usize> = std::iter::once(30).chain(orders).collect();
        let d = diagram(
            &orders,
            |i, _| {
                let j = 1e-4 * (i % 3) as f64;
                let mut v = vec![est(2.48 * (1.0 + j), 0.008, &[1.0, 2.0, 3.0])];
                if i != 7 {
                    v.push(est(13.37 * (1.0 - j), 0.012, &[1.0, -1.0, 0.5]));
                }
                v
            },
            &cfg,
        );
        let modes = cluster_modes(&d, &cfg).unwrap();
        let sizes: Vec<usize> = modes.modes().iter().map(|m| m.cluster_size).collect();
        // the order after the gap has no mode-2 predecessor
        assert_eq!(sizes, vec![15, 13]);
        assert!((modes.modes()[0].frequency_hz - 2.48).abs() < 1e-3);
    }

    #[test]
    fn fifteen_and_fourteen_stable_poles() {
        let cfg = StabConfig::default();
        let orders: Vec<usize> = (30..=60).step_by(2).collect();
        let d = diagram(
            &orders,
            |i, _| {
                let mut v = vec![est(2.48, 0.008, &[1.0, 2.0, 3.0])];
                if i >= 1 {
                    v.push(est(13.37, 0.012, &[1.0, -1.0, 0.5]));
                }
                v
            },
            &cfg,
        );
        let sizes: Vec<usize> = cluster_modes(&d, &cfg).unwrap().modes().iter().map(|m| m.cluster_size).collect();
        assert_eq!(sizes, vec![15, 14]);
    }

    #[test]
    fn mac_gate_separates_close_families() {
        let cfg = StabConfig::default();
        let orders: Vec<usize> = (30..=60).step_by(2).collect();
        let d =
            diagram(&orders, |_, _| vec![est(10.0, 0.01, &[1.0, 0.0, 0.1]), est(10.03, 0.01, &[0.0, 1.0, 0.1])], &cfg);
        let modes = cluster_modes(&d, &cfg).unwrap();
        assert_eq!(modes.len(), 2);
        assert!(modes.modes().iter().all(|m| m.cluster_size == 15));
    }

    #[test]
    fn empty_diagram_gives_empty_modeset() {
        let cfg = StabConfig::default();
        assert!(cluster_modes(&StabilisationDiagram::default(), &cfg).unwrap().is_empty());
    }

    #[test]
    fn first_order_has_no_soft_flags() {
        let cfg = StabConfig::default();
        let d = diagram(&[32, 34], |_, _| vec![est(5.0, 0.01, &[1.0, 2.0])], &cfg);
        assert!(d.orders[0].poles.iter().all(|p| !p.freq_stable && !p.damp_stable && !p.shape_stable));
        assert!(d.orders[1].poles[0].fully_stable());
    }

    #[test]
    fn hard_screen_is_a_pure_filter() {
        let cfg = StabConfig::default();
        let d = diagram(
            &[32, 34],
            |_, _| {
                vec![est(5.0, 0.001, &[1.0]), est(35.0, 0.01, &[1.0]), est(12.0, 0.01, &[1.0]), est(20.0, 0.2, &[1.0])]
            },
            &cfg,
        );
        for p in d.orders.iter().flat_map(|o| &o.poles) {
            let e = &p.estimate;
            let inside = (0.005..=0.03).contains(&e.damping_ratio) && (0.0..=30.0).contains(&e.frequency_hz);
            assert_eq!(p.hard_pass, inside);
            assert!(p.hard_pass || !p.fully_stable());
        }
    }

    #[test]
    fn predecessor_ties_prefer_higher_mac() {
        let cfg = StabConfig::default();
        let d = diagram(
            &[32, 34],
            |i, _| {
                if i == 0 {
                    vec![est(9.9, 0.01, &[0.0, 1.0]), est(10.1, 0.01, &[1.0, 0.0])]
                } else {
                    vec![est(10.0, 0.01, &[1.0, 0.0])]
                }
            },
            &cfg,
        );
        assert!(d.orders[1].poles[0].shape_stable);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = StabConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.orders().len(), 15);
        assert_eq!(cfg.orders().first(), Some(&32));
        assert_eq!(cfg.orders().last(), Some(&60));
        assert!(StabConfig { k_step: 3, ..cfg.clone() }.validate().is_err());
        assert!(StabConfig { damping_range: [0.03, 0.005], ..cfg.clone() }.validate().is_err());
        assert!(StabConfig { mac_tol: 1.5, ..cfg }.validate().is_err());
    }

    proptest! {
        #[test]
        fn widening_screens_never_removes_poles(
            fz in prop::collection::vec((0.5f64..40.0, 0.0005f64..0.08), 1..20),
            widen in (0.0f64..0.004, 0.0f64..0.05, 0.0f64..10.0),
        ) {
            let narrow = StabConfig::default();
            let wide = StabConfig {
                damping_range: [narrow.damping_range[0] - widen.0, narrow.damping_range[1] + widen.1],
                frequency_range: [0.0, narrow.frequency_range[1] + widen.2],
                ..narrow.clone()
            };
            for (f, z) in fz {
                let e = est(f, z, &[1.0]);
                prop_assert!(!narrow.hard_pass(&e) || wide.hard_pass(&e));
            }
        }

        #[test]
        fn cluster_medians_stay_within_members(
            jitter in prop::collection::vec((-0.004f64..0.004, -0.02f64..0.02), 16),
        ) {
            let cfg = StabConfig::default();
            let orders: Vec<usize> = (30..=60).step_by(2).collect();
            let d = diagram(&orders, |i, _| vec![est(7.0 * (1.0 + jitter[i].0), 0.01 * (1.0 + jitter[i].1), &[1.0, 0.5])], &cfg);
            let modes = cluster_modes(&d, &cfg).unwrap();
            for (m, c) in modes.modes().iter().zip(d.clusters.iter().filter(|c| c.members.len() >= 5)) {
                let fs: Vec<f64> = c.members.iter().map(|&r| d.pole(r).estimate.frequency_hz).collect();
                let zs: Vec<f64> = c.members.iter().map(|&r| d.pole(r).estimate.damping_ratio).collect();
                prop_assert!(fs.iter().cloned().fold(f64::INFINITY, f64::min) <= m.frequency_hz);
                prop_assert!(fs.iter().cloned().fold(0.0, f64::max) >= m.frequency_hz);
                prop_assert!(zs.iter().cloned().fold(f64::INFINITY, f64::min) <= m.damping_ratio);
                prop_assert!(zs.iter().cloned().fold(0.0, f64::max) >= m.damping_ratio);
            }
        }
    }
}
