//! Synthetic test rig: a stepped aluminium cantilever spar with a motor point
//! mass, driven by hammer hits or by propeller-like forcing (broadband floor
//! plus shaft-rate harmonics), observed by a line of flapwise accelerometers.
//!
//! Response is computed by modal superposition. Each modal coordinate is
//! advanced with the exact zero-order-hold discretization of its second-order
//! ODE, so integration is unconditionally stable and bit-reproducible.

mod excitation;
mod fe;

pub use excitation::*;
pub use fe::*;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::record::{AcquisitionRecord, SensorSpec};

pub const DEFAULT_N_ELEMENTS: usize = 40;
pub const DEFAULT_N_MODES: usize = 6;
/// Sensor noise standard deviation, m/s².
pub const DEFAULT_NOISE_RMS: f64 = 0.01;

/// Seven flapwise accelerometers; the two outboard units use the low
/// sensitivity range.
pub fn default_sensors() -> Vec<SensorSpec> {
    [0.12, 0.24, 0.36, 0.48, 0.60, 0.70, 0.80]
        .iter()
        .enumerate()
        .map(|(i, &x)| SensorSpec::new(format!("A{}", i + 1), x, if i < 5 { 100.0 } else { 10.0 }))
        .collect()
}

/// Calibrated spar, Al 7075-T6, 40 elements, first six modes with the default
/// damping ratios.
pub fn default_truth() -> Result<GroundTruth> {
    let model = assemble_fe(&SparGeometry::calibrated(), &MaterialSpec::al7075_t6(), DEFAULT_N_ELEMENTS)?;
    modal_solve(&model, DEFAULT_N_MODES, &DEFAULT_DAMPING)
}

/// One modal coordinate `q'' + 2 zeta w q' + w^2 q = u` under zero-order hold.
#[derive(Debug, Clone)]
pub struct ModalIntegrator {
    omega: f64,
    zeta: f64,
    ad: [[f64; 2]; 2],
    bd: [f64; 2],
    state: [f64; 2],
}

impl ModalIntegrator {
    pub fn new(omega: f64, zeta: f64, dt: f64) -> Self {
        let wd = omega * (1.0 - zeta * zeta).sqrt();
        let sigma = zeta * omega;
        let (s, c) = (wd * dt).sin_cos();
        let e = (-sigma * dt).exp();
        let ad = [[e * (c + sigma / wd * s), e * s / wd], [-e * omega * omega / wd * s, e * (c - sigma / wd * s)]];
        let bd = [-2.0 * zeta / omega * ad[0][1] - (ad[1][1] - 1.0) / (omega * omega), ad[0][1]];
        Self { omega, zeta, ad, bd, state: [0.0, 0.0] }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.state[0], self.state[1])
    }

    pub fn set_state(&mut self, q: f64, qdot: f64) {
        self.state = [q, qdot];
    }

    /// Returns the coordinate acceleration at the current step, then advances
    /// one step holding `u`.
    pub fn step(&mut self, u: f64) -> f64 {
        let [q, v] = self.state;
        let acc = -self.omega * self.omega * q - 2.0 * self.zeta * self.omega * v + u;
        self.state = [
            self.ad[0][0] * q + self.ad[0][1] * v + self.bd[0] * u,
            self.ad[1][0] * q + self.ad[1][1] * v + self.bd[1] * u,
        ];
        acc
    }

    /// `0.5 q'^2 + 0.5 w^2 q^2` per unit modal mass.
    pub fn energy(&self) -> f64 {
        0.5 * self.state[1] * self.state[1] + 0.5 * self.omega * self.omega * self.state[0] * self.state[0]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationOptions {
    /// Adds an independent Gaussian perturbation to one mode's sensor-station
    /// shape samples: `(mode index, rms relative to the shape's rms)`.
    pub shape_perturbation: Option<(usize, f64)>,
}

pub fn simulate(
    truth: &GroundTruth,
    case: &ExcitationCase,
    sensors: &[SensorSpec],
    sample_rate: f64,
    duration: f64,
    noise_rms: f64,
    seed: u64,
) -> Result<AcquisitionRecord> {
    simulate_with(truth, case, sensors, sample_rate, duration, noise_rms, seed, &SimulationOptions::default())
}

/// Force at the forcing station is the deterministic part of `case` plus
/// white Gaussian broadband force; output is acceleration at the sensor
/// stations plus white Gaussian sensor noise. Force and noise draw from
/// separate ChaCha8 streams of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with(
    truth: &GroundTruth,
    case: &ExcitationCase,
    sensors: &[SensorSpec],
    sample_rate: f64,
    duration: f64,
    noise_rms: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<AcquisitionRecord> {
    case.validate()?;
    if !(sample_rate > 0.0 && duration > 0.0 && sample_rate.is_finite() && duration.is_finite()) {
        return Err(Error::Simulation("sample rate and duration must be positive".into()));
    }
    if !(noise_rms >= 0.0) {
        return Err(Error::Simulation("noise rms must be non-negative".into()));
    }
    if sensors.is_empty() {
        return Err(Error::Simulation("no sensors".into()));
    }
    let n = (duration * sample_rate).round() as usize;
    let dt = 1.0 / sample_rate;
    let stations: Vec<f64> = sensors.iter().map(|s| s.span_position).collect();
    let mut phi_s = truth.shapes_at(&stations)?;
    if let Some((mode, level)) = options.shape_perturbation {
        if mode >= truth.mode_count() {
            return Err(Error::Simulation(format!("no mode {mode} to perturb")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let col = phi_s.column(mode);
        let rms = (col.norm_squared() / col.len() as f64).sqrt();
        let normal = Normal::new(0.0, level * rms).map_err(|e| Error::Simulation(e.to_string()))?;
        for i in 0..phi_s.nrows() {
            phi_s[(i, mode)] += normal.sample(&mut rng);
        }
    }
    let station = case.forcing_station(truth.model.motor_station);
    let mut phi_f = truth.shapes_at(&[station])?;
    if case.moment_arm != 0.0 {
        phi_f += truth.slopes_at(&[station])? * case.moment_arm;
    }

    let mut force = deterministic_force(case, sample_rate, n);
    if case.broadband_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let normal = Normal::new(0.0, case.broadband_level).map_err(|e| Error::Simulation(e.to_string()))?;
        for f in force.iter_mut() {
            *f += normal.sample(&mut rng);
        }
    }

    let modal: Vec<Vec<f64>> = (0..truth.mode_count())
        .into_par_iter()
        .map(|m| {
            let w = 2.0 * std::f64::consts::PI * truth.frequencies_hz[m];
            let mut integ = ModalIntegrator::new(w, truth.damping_ratios[m], dt);
            let gain = phi_f[(0, m)];
            force.iter().map(|&f| integ.step(gain * f)).collect()
        })
        .collect();

    let mut samples = DMatrix::<f64>::zeros(sensors.len(), n);
    for (m, qdd) in modal.iter().enumerate() {
        for s in 0..sensors.len() {
            let g = phi_s[(s, m)];
            for (k, a) in qdd.iter().enumerate() {
                samples[(s, k)] += g * a;
            }
        }
    }
    if noise_rms > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, noise_rms).map_err(|e| Error::Simulation(e.to_string()))?;
        for k in 0..n {
            for s in 0..sensors.len() {
                samples[(s, k)] += normal.sample(&mut rng);
            }
        }
    }
    AcquisitionRecord::new(sensors.to_vec(), sample_rate, samples, &case.label)
}
