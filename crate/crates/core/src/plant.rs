//! Quasi-static single-bus model of droop-controlled inverters.
//!
//! Units: frequency in Hz, power in kW, droop in Hz/kW, time in seconds.
//! The bus frequency is the algebraic solution of the droop lines under power
//! balance; each DG's output power follows its droop target through a
//! first-order lag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("DG {dg}: {field} must be positive, got {value}")]
    NonPositive { dg: usize, field: &'static str, value: f64 },
    #[error("load schedule: {0}")]
    Schedule(String),
    #[error("plant step dt = {dt} s exceeds limit {limit} s (min tau_p / 5)")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("dimension mismatch: {what} has {found} entries, expected {expected}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("measurement noise sigma must be finite and non-negative, got {0}")]
    BadNoise(f64),
}

/// Per-DG droop parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgParams {
    /// Rated frequency, Hz.
    pub f0: f64,
    /// Active power set point, kW.
    pub p0: f64,
    /// Frequency droop, Hz/kW.
    pub kp: f64,
    /// Output-power lag time constant, s.
    pub tau_p: f64,
    /// Rated voltage, V. Unused by the frequency path.
    pub v0: f64,
    /// Reactive set point, kvar. Unused by the frequency path.
    pub q0: f64,
    /// Voltage droop, V/kvar. Unused by the frequency path.
    pub kq: f64,
}

pub const DEFAULT_TAU_P: f64 = 0.2;
pub const RATED_FREQUENCY: f64 = 50.0;
pub const RATED_VOLTAGE: f64 = 230.0;

/// Droop coefficients of the five reference DGs, Hz/kW.
pub const REFERENCE_DROOP: [f64; 5] = [0.002, 0.0022, 0.0025, 0.0027, 0.003];
/// Active power set point shared by the reference DGs, kW.
pub const REFERENCE_P0: f64 = 35.0;

impl DgParams {
    pub fn new(f0: f64, p0: f64, kp: f64) -> Self {
        Self { f0, p0, kp, tau_p: DEFAULT_TAU_P, v0: RATED_VOLTAGE, q0: 0.0, kq: 0.0 }
    }

    /// The five reference DGs.
    pub fn reference_set() -> Vec<DgParams> {
        REFERENCE_DROOP
            .iter()
            .map(|&kp| DgParams::new(RATED_FREQUENCY, REFERENCE_P0, kp))
            .collect()
    }

    pub fn validate(&self, dg: usize) -> Result<(), PlantError> {
        for (field, value) in [("f0", self.f0), ("kp", self.kp), ("tau_p", self.tau_p)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PlantError::NonPositive { dg: dg + 1, field, value });
            }
        }
        Ok(())
    }
}

/// `f0 - kp·(p - P0) + delta_f`
pub fn droop_frequency(params: &DgParams, p: f64, delta_f: f64) -> f64 {
    params.f0 - params.kp * (p - params.p0) + delta_f
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusSolution {
    pub f_bus: f64,
    /// Droop power of each DG at `f_bus`, kW.
    pub p_star: Vec<f64>,
}

/// Solves the common bus frequency under `Σ P_i = p_load`, every DG on its
/// own droop line shifted by `delta_f[i]`.
pub fn solve_bus(dgs: &[DgParams], delta_f: &[f64], p_load: f64) -> BusSolution {
    assert_eq!(dgs.len(), delta_f.len(), "one correction per DG");
    let mut stiffness = 0.0;
    let mut weighted = 0.0;
    let mut p0_total = 0.0;
    for (dg, &d) in dgs.iter().zip(delta_f) {
        stiffness += 1.0 / dg.kp;
        weighted += (dg.f0 + d) / dg.kp;
        p0_total += dg.p0;
    }
    let f_bus = (weighted + p0_total - p_load) / stiffness;
    let p_star = dgs
        .iter()
        .zip(delta_f)
        .map(|(dg, &d)| dg.p0 + (dg.f0 + d - f_bus) / dg.kp)
        .collect();
    BusSolution { f_bus, p_star }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStep {
    pub time: f64,
    pub load: f64,
}

/// Piecewise-constant load, kW.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSchedule {
    initial: f64,
    steps: Vec<LoadStep>,
}

impl LoadSchedule {
    pub fn new(initial: f64, steps: Vec<LoadStep>) -> Result<Self, PlantError> {
        if !(initial > 0.0 && initial.is_finite()) {
            return Err(PlantError::Schedule(format!("initial load must be positive, got {initial}")));
        }
        for (k, s) in steps.iter().enumerate() {
            if !(s.load > 0.0 && s.load.is_finite()) {
                return Err(PlantError::Schedule(format!("step {} load must be positive, got {}", k + 1, s.load)));
            }
            if !(s.time >= 0.0 && s.time.is_finite()) {
                return Err(PlantError::Schedule(format!("step {} time must be non-negative, got {}", k + 1, s.time)));
            }
            if k > 0 && s.time <= steps[k - 1].time {
                return Err(PlantError::Schedule(format!("step times must be strictly increasing (step {})", k + 1)));
            }
        }
        Ok(Self { initial, steps })
    }

    /// 175 kW, up to 200 kW at 30 s, back to 175 kW at 60 s.
    pub fn reference() -> Self {
        Self::new(
            175.0,
            vec![LoadStep { time: 30.0, load: 200.0 }, LoadStep { time: 60.0, load: 175.0 }],
        )
        .expect("valid reference schedule")
    }

    pub fn constant(load: f64) -> Result<Self, PlantError> {
        Self::new(load, Vec::new())
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn steps(&self) -> &[LoadStep] {
        &self.steps
    }

    pub fn load_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t + time_eps(t))
            .last()
            .map_or(self.initial, |s| s.load)
    }
}

fn time_eps(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub f_bus: f64,
    pub p_out: Vec<f64>,
    /// Secondary correction currently applied to each droop line, Hz.
    pub delta_f_cmd: Vec<f64>,
    pub p_load: f64,
    next_step: usize,
}

impl PlantState {
    /// Settled state at `t = 0` for the schedule's initial load.
    pub fn settled(dgs: &[DgParams], schedule: &LoadSchedule, delta_f: Vec<f64>) -> Self {
        let p_load = schedule.load_at(0.0);
        let next_step = schedule.steps().iter().take_while(|s| s.time <= time_eps(0.0)).count();
        let bus = solve_bus(dgs, &delta_f, p_load);
        Self { t: 0.0, f_bus: bus.f_bus, p_out: bus.p_star, delta_f_cmd: delta_f, p_load, next_step }
    }

    /// Advances by `dt`: applies load steps due by `t + dt`, re-solves the bus
    /// with the current corrections and moves each output power toward its
    /// droop target with the exact first-order discretization.
    pub fn step(&mut self, dgs: &[DgParams], schedule: &LoadSchedule, dt: f64) -> Result<(), PlantError> {
        if dgs.len() != self.p_out.len() {
            return Err(PlantError::Dimension { what: "DG list", expected: self.p_out.len(), found: dgs.len() });
        }
        let limit = max_step(dgs);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(PlantError::StepTooLarge { dt, limit });
        }
        let t_next = self.t + dt;
        while let Some(s) = schedule.steps().get(self.next_step) {
            if s.time > t_next + time_eps(t_next) {
                break;
            }
            self.p_load = s.load;
            self.next_step += 1;
        }
        let bus = solve_bus(dgs, &self.delta_f_cmd, self.p_load);
        for ((p, target), dg) in self.p_out.iter_mut().zip(&bus.p_star).zip(dgs) {
            let alpha = -(-dt / dg.tau_p).exp_m1();
            *p += alpha * (target - *p);
        }
        self.f_bus = bus.f_bus;
        self.t = t_next;
        Ok(())
    }
}

/// Largest admissible plant step: `min(tau_p) / 5`.
pub fn max_step(dgs: &[DgParams]) -> f64 {
    dgs.iter().map(|d| d.tau_p).fold(f64::INFINITY, f64::min) / 5.0
}

/// Seeded zero-mean Gaussian measurement noise.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    sigma: f64,
    normal: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn new(sigma: f64, seed: u64) -> Result<Self, PlantError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(PlantError::BadNoise(sigma));
        }
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"));
        Ok(Self { sigma, normal, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn silent() -> Self {
        Self::new(0.0, 0).expect("zero sigma")
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

/// Frequency deviation seen by DG `i`: `f0 - f_bus + noise`.
pub fn measure_deviation(state: &PlantState, dg: &DgParams, noise: &mut NoiseSampler) -> f64 {
    dg.f0 - state.f_bus + noise.sample()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn droop_line() {
        let dg1 = DgParams::reference_set()[0];
        assert!((droop_frequency(&dg1, 45.0, 0.0) - 49.98).abs() < 1e-12);
        assert_eq!(droop_frequency(&dg1, 35.0, 0.0), 50.0);
        assert!((droop_frequency(&dg1, 35.0, 0.05) - 50.05).abs() < 1e-12);
    }

    #[test]
    fn balanced_set_points() {
        let dgs = DgParams::reference_set();
        let bus = solve_bus(&dgs, &[0.0; 5], 175.0);
        assert!((bus.f_bus - 50.0).abs() < 1e-12);
        for p in &bus.p_star {
            assert!((p - 35.0).abs() < 1e-9);
        }
    }

    #[test]
    fn parameter_validation() {
        let mut dg = DgParams::new(50.0, 35.0, 0.002);
        assert!(dg.validate(0).is_ok());
        dg.kp = 0.0;
        assert!(matches!(dg.validate(2), Err(PlantError::NonPositive { dg: 3, field: "kp", .. })));
        dg.kp = 0.002;
        dg.tau_p = -1.0;
        assert!(dg.validate(0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(LoadSchedule::new(0.0, vec![]).is_err());
        assert!(LoadSchedule::new(
            100.0,
            vec![LoadStep { time: 5.0, load: 1.0 }, LoadStep { time: 5.0, load: 2.0 }]
        )
        .is_err());
        assert!(LoadSchedule::new(100.0, vec![LoadStep { time: 5.0, load: -1.0 }]).is_err());
        let s = LoadSchedule::reference();
        assert_eq!(s.load_at(29.99), 175.0);
        assert_eq!(s.load_at(30.0), 200.0);
        assert_eq!(s.load_at(75.0), 175.0);
    }

    #[test]
    fn filter_step_matches_closed_form() {
        let mut dgs = DgParams::reference_set();
        for d in &mut dgs {
            d.tau_p = 0.2;
        }
        let schedule = LoadSchedule::constant(200.0).unwrap();
        let mut st = PlantState::settled(&dgs, &LoadSchedule::constant(175.0).unwrap(), vec![0.0; 5]);
        st.p_load = 200.0;
        st.step(&dgs, &schedule, 0.01).unwrap();
        // 35 + (1 - e^-0.05) * (41.0732 - 35)
        assert!((st.p_out[0] - 35.2962).abs() < 1e-4, "{}", st.p_out[0]);
        assert!((st.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn steady_state_only_advances_time() {
        let dgs = DgParams::reference_set();
        let schedule = LoadSchedule::constant(190.0).unwrap();
        let mut st = PlantState::settled(&dgs, &schedule, vec![0.001; 5]);
        let before = st.clone();
        st.step(&dgs, &schedule, 0.01).unwrap();
        assert_eq!(st.p_out, before.p_out);
        assert_eq!(st.f_bus, before.f_bus);
        assert_eq!(st.t, 0.01);
    }

    #[test]
    fn load_step_drops_frequency() {
        let dgs = DgParams::reference_set();
        let schedule = LoadSchedule::reference();
        let mut st = PlantState::settled(&dgs, &schedule, vec![0.0; 5]);
        for _ in 0..3001 {
            st.step(&dgs, &schedule, 0.01).unwrap();
        }
        assert!(st.t > 30.0);
        assert_eq!(st.p_load, 200.0);
        assert!(st.f_bus < 50.0);
    }

    #[test]
    fn rejects_large_step() {
        let dgs = DgParams::reference_set();
        let schedule = LoadSchedule::reference();
        let mut st = PlantState::settled(&dgs, &schedule, vec![0.0; 5]);
        assert!(st.step(&dgs, &schedule, 0.04).is_ok());
        assert!(matches!(st.step(&dgs, &schedule, 0.05), Err(PlantError::StepTooLarge { .. })));
        assert!(st.step(&dgs, &schedule, 0.0).is_err());
    }

    #[test]
    fn noise_free_measurement() {
        let dgs = DgParams::reference_set();
        let st = PlantState::settled(&dgs, &LoadSchedule::constant(175.0).unwrap(), vec![0.0; 5]);
        let mut noise = NoiseSampler::silent();
        assert!(measure_deviation(&st, &dgs[0], &mut noise).abs() < 1e-12);
        assert!(NoiseSampler::new(-1.0, 0).is_err());
    }
}
