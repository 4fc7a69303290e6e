//! Experiment harness: fidelity traces, error-scaling sweeps, noise-model
//! comparison, timing-jitter averages, splitting sweeps and gate-fidelity maps.
//!
//! Sweep points run in parallel on the rayon pool; each point is a single
//! deterministic trajectory, and results are returned in grid order.

use crate::config::{Coupling, ScenarioConfig, ScenarioKind, SweepAxis};
use crate::errorbudget::{self, Subspace};
use crate::hilbert::{self, Layout, QuantumState, Spin};
use crate::lindblad::{self, Bath, Damping, Diagnostics, EvolveOptions, Generator, NoiseSpec, Trajectory};
use crate::metrics::{self, GateFidelity};
use crate::model::{self, GatePlan, SystemSpec};
use crate::output::{schema, CsvTable};
use crate::{Error, Mat, Result, Vector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::f64::consts::PI;

/// One simulation point, in units ω_c = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub mu: f64,
    pub omega_q: f64,
    pub coupling: Coupling,
    pub n_qubits: usize,
    pub n_max: Option<usize>,
    pub noise: NoiseSpec,
    pub spins: Vec<Spin>,
}

impl Point {
    /// Two transversally coupled qubits starting in |↑↓⟩.
    pub fn new(mu: f64, noise: NoiseSpec) -> Point {
        Point { mu, omega_q: 0.0, coupling: Coupling::Transversal, n_qubits: 2, n_max: None, noise, spins: vec![Spin::Up, Spin::Down] }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Point> {
        Ok(Point {
            mu: cfg.system.mu,
            omega_q: cfg.system.omega_q,
            coupling: cfg.system.coupling,
            n_qubits: cfg.system.n_qubits,
            n_max: cfg.system.n_max,
            noise: cfg.noise.to_spec()?,
            spins: cfg.initial.spins()?,
        })
    }

    pub fn nbar(&self) -> Result<f64> {
        self.noise.nbar(1.0)
    }

    fn spec_with(&self, omega_q: f64) -> Result<SystemSpec> {
        let n_max = match self.n_max {
            Some(n) => n,
            None => hilbert::default_cutoff(self.nbar()?, self.mu, self.n_qubits),
        };
        let axis = match self.coupling {
            Coupling::Transversal => hilbert::Axis::X,
            Coupling::Longitudinal => hilbert::Axis::Z,
        };
        let h = hilbert::HilbertSpec::new(self.n_qubits, n_max)?;
        SystemSpec::new(1.0, omega_q, self.mu, model::pattern(axis, self.n_qubits), h)
    }

    pub fn system(&self) -> Result<SystemSpec> {
        self.spec_with(self.omega_q)
    }

    pub fn plan(&self) -> Result<GatePlan> {
        model::gate_time(self.mu, 1.0)
    }

    pub fn initial_state(&self, spec: &SystemSpec) -> Result<QuantumState> {
        let q = QuantumState::pure(Layout::Qubits(self.n_qubits), &hilbert::spin_vector(&self.spins))?;
        let th = hilbert::thermal_state_nbar(self.nbar()?, spec.hilbert.n_max)?;
        QuantumState::product(&q, &th.state)
    }

    /// Ideal stroboscopic gate after m periods, always taken at ω_q = 0.
    pub fn ideal_gate(&self, m: u64) -> Result<Mat> {
        let spec = self.spec_with(0.0)?.with_cutoff(1)?;
        Ok(model::stroboscopic_propagator(&spec, m)?.operator.into_matrix())
    }

    /// Ideal qubit state after m periods.
    pub fn target(&self, m: u64) -> Result<Vector> {
        Ok(self.ideal_gate(m)? * hilbert::spin_vector(&self.spins))
    }

    fn with_axis(&self, axis: SweepAxis, x: f64) -> Result<Point> {
        let mut p = self.clone();
        match axis {
            SweepAxis::Temperature => p.noise.bath = Bath::Temperature(x),
            SweepAxis::Nbar => p.noise.bath = Bath::Nbar(x),
            SweepAxis::Q => p.noise.damping = Damping::Q(x),
            SweepAxis::KappaNbar => {
                let nbar = self.nbar()?;
                if x > 0.0 && nbar <= 0.0 {
                    return Err(Error::InvalidConfig("kappa_nbar sweep needs a bath with nbar > 0".into()));
                }
                p.noise.damping = Damping::Kappa(if x == 0.0 { 0.0 } else { x / nbar });
            }
            SweepAxis::GammaPhi => p.noise.gamma_phi = x,
            SweepAxis::Gamma1 => p.noise.gamma1 = x,
            SweepAxis::OmegaQ => p.omega_q = x,
            SweepAxis::Mu => p.mu = x,
        }
        p.noise = NoiseSpec::new(p.noise.damping, p.noise.bath, p.noise.gamma_phi, p.noise.gamma1, p.noise.correlated)?;
        Ok(p)
    }

    fn small_error_regime(&self) -> Result<bool> {
        let kappa = self.noise.kappa(1.0);
        Ok(errorbudget::total_error_estimate(kappa, self.nbar()?, self.noise.gamma_phi + self.noise.gamma1, self.mu).small_error_regime)
    }
}

/// Integration and sampling settings shared by all points of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub evolve: EvolveOptions,
    pub samples_per_period: usize,
    /// Trace length as a multiple of t_max.
    pub span: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { evolve: EvolveOptions::default(), samples_per_period: 40, span: 1.1 }
    }
}

impl Settings {
    pub fn from_config(cfg: &ScenarioConfig) -> Settings {
        Settings {
            evolve: EvolveOptions { steps_per_period: cfg.integrator.steps_per_period, ..Default::default() },
            samples_per_period: cfg.integrator.samples_per_period,
            span: cfg.integrator.span,
        }
    }
}

/// A sampled trajectory with its stroboscopic schedule.
#[derive(Clone, Debug)]
pub struct TraceSeries {
    pub point: Point,
    pub plan: GatePlan,
    pub n_max: usize,
    pub samples_per_period: usize,
    pub trajectory: Trajectory,
}

impl TraceSeries {
    fn index_of_period(&self, m: u64) -> usize {
        m as usize * self.samples_per_period
    }

    /// Fidelity with the maximally entangled target at t_1, …, t_max.
    pub fn stroboscopic_fidelities(&self) -> Vec<f64> {
        (1..=self.plan.m).map(|m| self.trajectory.records[self.index_of_period(m)].fidelity.unwrap_or(f64::NAN)).collect()
    }

    /// Fidelity at each t_m with the ideal state U(t_m)|ψ₀⟩ of that period.
    pub fn ideal_fidelities(&self) -> Result<Vec<f64>> {
        (1..=self.plan.m)
            .map(|m| Ok(metrics::fidelity_matrix(&self.trajectory.reduced[self.index_of_period(m)], &self.point.target(m)?)))
            .collect()
    }

    pub fn fidelity_at_tmax(&self) -> f64 {
        *self.stroboscopic_fidelities().last().unwrap()
    }

    /// Sample with the largest fidelity, as (t/T_c, F).
    pub fn peak(&self) -> (f64, f64) {
        self.trajectory
            .records
            .iter()
            .filter_map(|r| r.fidelity.map(|f| (r.t_over_tc, f)))
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
    }
}

/// Trace on [0, span·t_max] with `samples_per_period` samples per period.
pub fn run_trace(point: &Point, settings: &Settings) -> Result<TraceSeries> {
    let spec = point.system()?;
    let plan = point.plan()?;
    let rho0 = point.initial_state(&spec)?;
    let spp = settings.samples_per_period;
    let n = (settings.span * (plan.m * spp as u64) as f64).ceil() as usize;
    let period = 2.0 * PI;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * period / spp as f64).collect();
    let target = point.target(plan.m)?;
    let trajectory = lindblad::evolve(&rho0, *times.last().unwrap(), &spec, &point.noise, &times, Some(&target), &settings.evolve)?;
    Ok(TraceSeries { point: point.clone(), plan, n_max: spec.hilbert.n_max, samples_per_period: spp, trajectory })
}

/// One trace per temperature k_BT/ω_c.
pub fn fidelity_trace(base: &Point, temperatures: &[f64], settings: &Settings) -> Result<Vec<TraceSeries>> {
    temperatures
        .par_iter()
        .map(|&t| run_trace(&base.with_axis(SweepAxis::Temperature, t)?, settings))
        .collect()
}

/// Error at t_max for one point.
#[derive(Clone, Debug, Serialize)]
pub struct PointOutcome {
    pub x: f64,
    pub xi: f64,
    pub fidelity: f64,
    pub n_max: usize,
    pub small_error_regime: bool,
    pub diagnostics: Option<Diagnostics>,
    pub error: Option<String>,
    /// Whether a failure came from the numerical guards.
    pub numerical_failure: bool,
}

impl PointOutcome {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// F at the given sample times (periods), against the t_max target.
fn fidelities_at(point: &Point, periods: &[f64], settings: &Settings) -> Result<(Vec<f64>, usize, Diagnostics)> {
    let spec = point.system()?;
    let plan = point.plan()?;
    let rho0 = point.initial_state(&spec)?;
    let target = point.target(plan.m)?;
    let times: Vec<f64> = periods.iter().map(|p| p * 2.0 * PI).collect();
    let t_end = *times.last().unwrap();
    let opts = EvolveOptions { positivity: lindblad::PositivityCheck::EverySample, ..settings.evolve.clone() };
    let tr = lindblad::evolve(&rho0, t_end, &spec, &point.noise, &times, Some(&target), &opts)?;
    Ok((tr.records.iter().map(|r| r.fidelity.unwrap()).collect(), spec.hilbert.n_max, tr.diagnostics))
}

/// ξ = 1 − F(t_max).
pub fn xi_at_tmax(point: &Point, x: f64, settings: &Settings) -> PointOutcome {
    let run = || -> Result<(f64, usize, Diagnostics, bool)> {
        let m = point.plan()?.m as f64;
        let (f, n_max, d) = fidelities_at(point, &[m], settings)?;
        Ok((f[0], n_max, d, point.small_error_regime()?))
    };
    match run() {
        Ok((f, n_max, d, small)) => PointOutcome {
            x,
            xi: 1.0 - f,
            fidelity: f,
            n_max,
            small_error_regime: small,
            diagnostics: Some(d),
            error: None,
            numerical_failure: false,
        },
        Err(e) => PointOutcome {
            x,
            xi: f64::NAN,
            fidelity: f64::NAN,
            n_max: 0,
            small_error_regime: false,
            diagnostics: None,
            numerical_failure: e.is_numerical(),
            error: Some(e.to_string()),
        },
    }
}

/// Least-squares fit result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
    pub n_points: usize,
}

/// y ≈ offset + slope·x with the offset held fixed.
pub fn fit_with_offset(x: &[f64], y: &[f64], offset: f64) -> Fit {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * (b - offset)).sum();
    let slope = sxy / sxx;
    let residual_norm = x.iter().zip(y).map(|(a, b)| (b - offset - slope * a).powi(2)).sum::<f64>().sqrt();
    Fit { slope, intercept: offset, residual_norm, n_points: x.len() }
}

/// Ordinary least squares y ≈ intercept + slope·x.
pub fn fit_affine(x: &[f64], y: &[f64]) -> Fit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_norm = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>().sqrt();
    Fit { slope, intercept, residual_norm, n_points: x.len() }
}

/// log y ≈ intercept + exponent·log x; `slope` holds the exponent.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Fit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_affine(&lx, &ly)
}

/// Per-point errors along one axis with a fit.
#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<PointOutcome>,
    /// Error at the zero-noise end of the axis, when it has one.
    pub zero_offset: Option<PointOutcome>,
    pub fit: Option<Fit>,
    /// Set when any point failed; the fit is then withheld.
    pub poisoned: bool,
}

impl SweepResult {
    pub fn xi(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.xi).collect()
    }
}

fn zero_of(axis: SweepAxis) -> Option<f64> {
    match axis {
        SweepAxis::KappaNbar | SweepAxis::GammaPhi | SweepAxis::Gamma1 | SweepAxis::OmegaQ => Some(0.0),
        SweepAxis::Q => Some(f64::INFINITY),
        SweepAxis::Temperature | SweepAxis::Nbar | SweepAxis::Mu => None,
    }
}

pub fn error_sweep(base: &Point, axis: SweepAxis, values: &[f64], settings: &Settings) -> Result<SweepResult> {
    let points: Vec<Point> = values.iter().map(|&x| base.with_axis(axis, x)).collect::<Result<_>>()?;
    let zero = zero_of(axis).map(|z| base.with_axis(axis, z)).transpose()?;
    let mut jobs: Vec<(Point, f64)> = points.into_iter().zip(values.iter().copied()).collect();
    if let Some(z) = zero {
        jobs.push((z, zero_of(axis).unwrap()));
    }
    let mut outcomes: Vec<PointOutcome> = jobs.par_iter().map(|(p, x)| xi_at_tmax(p, *x, settings)).collect();
    let zero_offset = zero_of(axis).map(|_| outcomes.pop().unwrap());
    let poisoned = outcomes.iter().chain(zero_offset.iter()).any(|p| !p.ok());
    // Fit against the rate; for a Q axis that is 1/Q.
    let xs: Vec<f64> = values.iter().map(|&v| if axis == SweepAxis::Q { 1.0 / v } else { v }).collect();
    let ys: Vec<f64> = outcomes.iter().map(|p| p.xi).collect();
    let fit = if poisoned || values.len() < 2 {
        None
    } else {
        Some(match &zero_offset {
            Some(z) => fit_with_offset(&xs, &ys, z.xi),
            None => fit_affine(&xs, &ys),
        })
    };
    Ok(SweepResult { axis, points: outcomes, zero_offset, fit, poisoned })
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseComparison {
    pub uncorrelated: SweepResult,
    pub correlated: SweepResult,
}

impl NoiseComparison {
    /// ξ_uncorrelated/ξ_correlated per point.
    pub fn ratios(&self) -> Vec<f64> {
        self.uncorrelated.points.iter().zip(&self.correlated.points).map(|(u, c)| u.xi / c.xi).collect()
    }
}

/// Rethermalization error of both dissipator models along κn̄/ω_c.
pub fn noise_model_comparison(base: &Point, kappa_nbar: &[f64], settings: &Settings) -> Result<NoiseComparison> {
    let mut u = base.clone();
    u.noise.correlated = false;
    let mut c = base.clone();
    c.noise.correlated = true;
    Ok(NoiseComparison {
        uncorrelated: error_sweep(&u, SweepAxis::KappaNbar, kappa_nbar, settings)?,
        correlated: error_sweep(&c, SweepAxis::KappaNbar, kappa_nbar, settings)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct JitterPoint {
    pub nbar: f64,
    pub kappa_nbar: f64,
    /// Mean error over the window.
    pub xi_window: f64,
    pub xi_point: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct JitterResult {
    pub window: f64,
    pub points: Vec<JitterPoint>,
    /// ξ̄ ≈ β̄ + ᾱ·κn̄/ω_c.
    pub fit: Option<Fit>,
}

/// Sample times (periods) spanning a window centred on t_max.
pub fn window_periods(m: u64, window: f64, samples: usize) -> Result<Vec<f64>> {
    let c = m as f64;
    if window < 0.0 || 0.5 * window > c {
        return Err(Error::InvalidConfig(format!("timing window {window} does not fit around t_max = {m} periods")));
    }
    if window == 0.0 || samples <= 1 {
        return Ok(vec![c]);
    }
    Ok((0..samples).map(|k| c - 0.5 * window + window * k as f64 / (samples - 1) as f64).collect())
}

/// Mean error over a timing window (ω_c/2π)Δt around t_max.
pub fn timing_jitter_point(point: &Point, window: f64, samples: usize, settings: &Settings) -> Result<JitterPoint> {
    let m = point.plan()?.m;
    let mut periods = window_periods(m, window, samples)?;
    let centre = m as f64;
    if !periods.iter().any(|&p| p == centre) {
        periods.push(centre);
        periods.sort_by(|a, b| a.total_cmp(b));
    }
    let (f, _, diagnostics) = fidelities_at(point, &periods, settings)?;
    let k0 = periods.iter().position(|&p| p == centre).unwrap();
    let window_f: Vec<f64> = if window == 0.0 {
        vec![f[k0]]
    } else {
        window_periods(m, window, samples)?.iter().map(|p| f[periods.iter().position(|q| q == p).unwrap()]).collect()
    };
    let mean = window_f.iter().sum::<f64>() / window_f.len() as f64;
    let nbar = point.nbar()?;
    Ok(JitterPoint { nbar, kappa_nbar: point.noise.kappa(1.0) * nbar, xi_window: 1.0 - mean, xi_point: 1.0 - f[k0], diagnostics })
}

/// Window-averaged error along a grid of n̄_th with the configured damping.
pub fn timing_jitter_average(base: &Point, nbars: &[f64], window: f64, samples: usize, settings: &Settings) -> Result<JitterResult> {
    let points: Vec<JitterPoint> = nbars
        .par_iter()
        .map(|&n| timing_jitter_point(&base.with_axis(SweepAxis::Nbar, n)?, window, samples, settings))
        .collect::<Result<_>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.kappa_nbar).collect();
    let y: Vec<f64> = points.iter().map(|p| p.xi_window).collect();
    let fit = (points.len() >= 2 && x.iter().any(|&v| v != x[0])).then(|| fit_affine(&x, &y));
    Ok(JitterResult { window, points, fit })
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingRow {
    pub omega_q: f64,
    pub xi_aligned: f64,
    pub xi_dfs: f64,
    pub xi_closed_form: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingResult {
    pub rows: Vec<SplittingRow>,
    /// Power law of the aligned-start error; `slope` is the exponent.
    pub fit_aligned: Option<Fit>,
    pub fit_dfs: Option<Fit>,
}

/// Splitting error for |↓↓⟩ (aligned) and |↑↓⟩ (dfs) starts against ω_q/ω_c.
pub fn splitting_sweep(base: &Point, omega_q: &[f64], settings: &Settings) -> Result<SplittingResult> {
    let mut aligned = base.clone();
    aligned.spins = vec![Spin::Down; base.n_qubits];
    let mut dfs = base.clone();
    dfs.spins = (0..base.n_qubits).map(|i| if i % 2 == 0 { Spin::Up } else { Spin::Down }).collect();
    let k_bt = match base.noise.bath {
        Bath::Temperature(t) => t,
        Bath::Nbar(n) if n > 0.0 => 1.0 / (1.0 + 1.0 / n).ln(),
        Bath::Nbar(_) => 0.0,
    };
    let n_max = base.system()?.hilbert.n_max;
    let rows: Vec<SplittingRow> = omega_q
        .par_iter()
        .map(|&w| {
            let a = xi_at_tmax(&aligned.with_axis(SweepAxis::OmegaQ, w)?, w, settings);
            let d = xi_at_tmax(&dfs.with_axis(SweepAxis::OmegaQ, w)?, w, settings);
            for p in [&a, &d] {
                if let Some(e) = &p.error {
                    return Err(Error::Diagnostics(format!("splitting point omega_q = {w}: {e}")));
                }
            }
            let closed = errorbudget::splitting_error(base.mu, k_bt, w, 10 * n_max, Subspace::Aligned).xi;
            Ok(SplittingRow { omega_q: w, xi_aligned: a.xi, xi_dfs: d.xi, xi_closed_form: closed })
        })
        .collect::<Result<_>>()?;
    let positive: Vec<&SplittingRow> = rows.iter().filter(|r| r.omega_q > 0.0).collect();
    let fit_of = |f: &dyn Fn(&SplittingRow) -> f64| {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.iter().map(|r| (r.omega_q, f(r))).filter(|(_, y)| *y > 0.0).unzip();
        (x.len() >= 2).then(|| fit_power_law(&x, &y))
    };
    let fit_aligned = fit_of(&|r| r.xi_aligned);
    let fit_dfs = fit_of(&|r| r.xi_dfs);
    Ok(SplittingResult { rows, fit_aligned, fit_dfs })
}

/// Extra Fock levels for gate-fidelity runs on the default cutoff.
pub const GATE_CUTOFF_MARGIN: usize = 4;

/// Average gate fidelity of the gate at t_max with the resonator starting thermal.
/// The Pauli images M(P) = tr_a[e^{Lt} P⊗ρ_th] are integrated directly.
pub fn gate_fidelity(point: &Point, settings: &Settings) -> Result<GateFidelity> {
    if point.n_qubits != 2 {
        return Err(Error::UnsupportedPattern("gate fidelity is defined for two qubits".into()));
    }
    let mut spec = point.system()?;
    if point.n_max.is_none() {
        // Off-diagonal Pauli images need a little more room than ρ does.
        spec = spec.with_cutoff(spec.hilbert.n_max + GATE_CUTOFF_MARGIN)?;
    }
    let plan = point.plan()?;
    let gen = Generator::new(&spec, &point.noise, settings.evolve.frame)?;
    let th = hilbert::thermal_state_nbar(point.nbar()?, spec.hilbert.n_max)?;
    let h = spec.hilbert;
    let u_id = hilbert::Operator::new(Layout::Qubits(2), point.ideal_gate(plan.m)?)?;
    let channel = |p: &Mat| -> Result<Mat> {
        let norm = crate::linalg::trace_norm_hermitian(p);
        let out = lindblad::propagate_product(p, th.state.matrix(), norm, plan.t_m, &gen, &settings.evolve)?;
        Ok(metrics::partial_trace_matrix(&out, h))
    };
    metrics::avg_gate_fidelity(channel, &u_id)
}

#[derive(Clone, Debug, Serialize)]
pub struct GateMapCell {
    pub kappa_nbar: f64,
    pub gamma: f64,
    pub avg_gate_error: f64,
    pub ent_infidelity: f64,
}

/// Ē over a (κn̄/ω_c, Γ/ω_c) grid.
pub fn gate_fidelity_map(base: &Point, kappa_nbar: &[f64], gamma: &[f64], settings: &Settings) -> Result<Vec<GateMapCell>> {
    let cells: Vec<(f64, f64)> = kappa_nbar.iter().flat_map(|&k| gamma.iter().map(move |&g| (k, g))).collect();
    cells
        .par_iter()
        .map(|&(k, g)| {
            let p = base.with_axis(SweepAxis::KappaNbar, k)?.with_axis(SweepAxis::GammaPhi, g)?;
            let f = gate_fidelity(&p, settings)?;
            Ok(GateMapCell { kappa_nbar: k, gamma: g, avg_gate_error: f.average_error, ent_infidelity: 1.0 - f.entanglement })
        })
        .collect()
}

/// Artifacts of one configured scenario.
#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    pub table: CsvTable,
    pub sidecar: serde_json::Value,
    /// A point or trajectory tripped a numerical guard.
    pub numerical_failure: bool,
}

fn sweep_values(cfg: &ScenarioConfig) -> Vec<f64> {
    cfg.sweep.as_ref().map(|s| s.values.clone()).unwrap_or_default()
}

fn start_table(cfg: &ScenarioConfig, columns: &[&str]) -> CsvTable {
    let mut t = CsvTable::new(columns);
    t.meta("scenario", cfg.name.clone())
        .meta("kind", serde_json::to_value(cfg.kind).unwrap().as_str().unwrap_or_default().to_string())
        .meta("schema_version", cfg.schema_version.to_string())
        .meta("config_hash", cfg.hash())
        .meta("config", cfg.canonical_json());
    t
}

fn sweep_table(cfg: &ScenarioConfig, r: &SweepResult) -> Result<CsvTable> {
    let mut cols = vec![r.axis.name()];
    cols.extend(schema::SWEEP_TAIL);
    let mut t = start_table(cfg, &cols);
    for p in &r.points {
        let drift = p.diagnostics.map(|d| d.max_trace_drift).unwrap_or(f64::NAN);
        t.push(vec![p.x, p.xi, p.fidelity, drift, if p.ok() { 1.0 } else { 0.0 }])?;
    }
    Ok(t)
}

/// Runs a configured scenario and returns its table and sidecar.
pub fn run_config(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let base = Point::from_config(cfg)?;
    let settings = Settings::from_config(cfg);
    base.plan()?;
    base.system()?;
    let head = json!({ "scenario": cfg.name, "kind": cfg.kind, "config_hash": cfg.hash() });
    let mut numerical_failure = false;
    let (table, results) = match cfg.kind {
        ScenarioKind::FidelityTrace => {
            let temps = match &cfg.sweep {
                Some(s) if s.axis == SweepAxis::Temperature => s.values.clone(),
                Some(s) => return Err(Error::InvalidConfig(format!("fidelity traces sweep temperature, not {}", s.axis.name()))),
                None => vec![match base.noise.bath {
                    Bath::Temperature(t) => t,
                    Bath::Nbar(_) => return Err(Error::InvalidConfig("fidelity traces need noise.temperature".into())),
                }],
            };
            let series = fidelity_trace(&base, &temps, &settings)?;
            let mut t = start_table(cfg, &schema::TRACE);
            let mut summary = Vec::new();
            for (temp, s) in temps.iter().zip(&series) {
                for r in &s.trajectory.records {
                    t.push(vec![*temp, r.t_over_tc, r.fidelity.unwrap_or(f64::NAN), r.log_negativity.unwrap_or(f64::NAN), r.mean_n])?;
                }
                let (tp, fp) = s.peak();
                summary.push(json!({
                    "k_bt_over_wc": temp,
                    "n_max": s.n_max,
                    "stroboscopic_periods": (1..=s.plan.m).collect::<Vec<_>>(),
                    "stroboscopic_fidelity": s.stroboscopic_fidelities(),
                    "fidelity_at_tmax": s.fidelity_at_tmax(),
                    "peak": { "t_over_Tc": tp, "fidelity": fp },
                    "diagnostics": s.trajectory.diagnostics,
                }));
            }
            (t, json!({ "t_max_periods": series[0].plan.m, "series": summary }))
        }
        ScenarioKind::ErrorSweep => {
            let axis = cfg.sweep.as_ref().unwrap().axis;
            let r = error_sweep(&base, axis, &sweep_values(cfg), &settings)?;
            numerical_failure = r.points.iter().chain(r.zero_offset.iter()).any(|p| p.numerical_failure);
            (sweep_table(cfg, &r)?, serde_json::to_value(&r).unwrap())
        }
        ScenarioKind::NoiseComparison => {
            let axis = cfg.sweep.as_ref().unwrap().axis;
            if axis != SweepAxis::KappaNbar {
                return Err(Error::InvalidConfig("noise comparison sweeps kappa_nbar".into()));
            }
            let r = noise_model_comparison(&base, &sweep_values(cfg), &settings)?;
            numerical_failure = r.uncorrelated.points.iter().chain(&r.correlated.points).any(|p| p.numerical_failure);
            let mut t = start_table(cfg, &schema::NOISE_COMPARISON);
            for ((u, c), ratio) in r.uncorrelated.points.iter().zip(&r.correlated.points).zip(r.ratios()) {
                t.push(vec![u.x, u.xi, c.xi, ratio])?;
            }
            (t, json!({ "comparison": r, "ratios": r.ratios() }))
        }
        ScenarioKind::Jitter => {
            let sw = cfg.sweep.as_ref().unwrap();
            if sw.axis != SweepAxis::Nbar {
                return Err(Error::InvalidConfig("jitter scenarios sweep nbar".into()));
            }
            let j = cfg.jitter.as_ref().unwrap();
            let r = timing_jitter_average(&base, &sw.values, j.window, j.samples, &settings)?;
            let mut t = start_table(cfg, &schema::JITTER);
            for p in &r.points {
                t.push(vec![p.nbar, p.kappa_nbar, p.xi_window, p.xi_point])?;
            }
            (t, serde_json::to_value(&r).unwrap())
        }
        ScenarioKind::SplittingSweep => {
            let sw = cfg.sweep.as_ref().unwrap();
            if sw.axis != SweepAxis::OmegaQ {
                return Err(Error::InvalidConfig("splitting sweeps use the omega_q axis".into()));
            }
            let r = splitting_sweep(&base, &sw.values, &settings)?;
            let mut t = start_table(cfg, &schema::SPLITTING);
            for row in &r.rows {
                t.push(vec![row.omega_q, row.xi_aligned, row.xi_dfs, row.xi_closed_form])?;
            }
            (t, serde_json::to_value(&r).unwrap())
        }
        ScenarioKind::GateFidelityMap => {
            let (a, b) = (cfg.sweep.as_ref().unwrap(), cfg.sweep2.as_ref().unwrap());
            if a.axis != SweepAxis::KappaNbar || b.axis != SweepAxis::GammaPhi {
                return Err(Error::InvalidConfig("gate-fidelity maps use sweep = kappa_nbar and sweep2 = gamma_phi".into()));
            }
            let cells = gate_fidelity_map(&base, &a.values, &b.values, &settings)?;
            let mut t = start_table(cfg, &schema::GATE_MAP);
            for c in &cells {
                t.push(vec![c.kappa_nbar, c.gamma, c.avg_gate_error, c.ent_infidelity])?;
            }
            let grid: Vec<Vec<f64>> = a
                .values
                .iter()
                .enumerate()
                .map(|(i, _)| (0..b.values.len()).map(|j| cells[i * b.values.len() + j].avg_gate_error).collect())
                .collect();
            (t, json!({ "kappa_nbar_over_wc": a.values, "gamma_over_wc": b.values, "avg_gate_error": grid }))
        }
    };
    let mut sidecar = head;
    sidecar["results"] = results;
    sidecar["numerical_failure"] = json!(numerical_failure);
    Ok(ScenarioOutput { table, sidecar, numerical_failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn cheap() -> Settings {
        Settings { evolve: EvolveOptions { steps_per_period: 80, ..Default::default() }, samples_per_period: 8, span: 1.1 }
    }

    #[test]
    fn fits_recover_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
        let f = fit_affine(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 0.5).abs() < 1e-12 && f.residual_norm < 1e-12);
        let g = fit_with_offset(&x, &y, 0.5);
        assert!((g.slope - 2.0).abs() < 1e-12);
        let p: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((fit_power_law(&x, &p).slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn window_grid() {
        assert_eq!(window_periods(4, 0.0, 21).unwrap(), vec![4.0]);
        let w = window_periods(16, 0.05, 5).unwrap();
        assert!((w[0] - 15.975).abs() < 1e-12 && (w[4] - 16.025).abs() < 1e-12 && (w[2] - 16.0).abs() < 1e-12);
        assert!(window_periods(1, 3.0, 5).is_err());
    }

    #[test]
    fn noiseless_trace_peaks_at_stroboscopic_times() {
        let p = Point::new(0.25, NoiseSpec::noiseless(0.5));
        let s = run_trace(&p, &cheap()).unwrap();
        assert_eq!(s.plan.m, 1);
        assert!(s.fidelity_at_tmax() > 1.0 - 1e-5, "{} {:?}", s.fidelity_at_tmax(), s.stroboscopic_fidelities());
        let (tp, _) = s.peak();
        assert!((tp - 1.0).abs() <= 1.0 / 8.0 + 1e-12);
        assert!(s.trajectory.t_over_tc().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn intermediate_peak_matches_gate_amplitudes() {
        // At m = 1 for μ = 1/8 the state is cos(π/16)|↑↓⟩ + i sin(π/16)|↓↑⟩.
        let p = Point::new(0.125, NoiseSpec::noiseless(0.0));
        let s = run_trace(&p, &cheap()).unwrap();
        let want = (PI / 16.0).cos() + (PI / 16.0).sin();
        assert!((s.stroboscopic_fidelities()[0] - 0.5 * want * want).abs() < 1e-6);
        for f in s.ideal_fidelities().unwrap() {
            assert!(f > 1.0 - 1e-6);
        }
    }

    #[test]
    fn zero_noise_sweep_is_flat() {
        let p = Point::new(0.25, NoiseSpec::noiseless(0.0));
        let r = error_sweep(&p, SweepAxis::GammaPhi, &[0.0, 0.0], &cheap());
        assert!(r.is_ok());
        let r = error_sweep(&p, SweepAxis::Temperature, &[0.0, 0.5, 1.0], &cheap()).unwrap();
        assert!(r.points.iter().all(|q| q.xi.abs() <= 1e-5));
        assert!(r.fit.unwrap().slope.abs() < 1e-5);
    }

    #[test]
    fn dephasing_sweep_linear() {
        let p = Point::new(0.25, NoiseSpec::noiseless(0.0));
        let r = error_sweep(&p, SweepAxis::GammaPhi, &[1e-3, 2e-3], &cheap()).unwrap();
        let f = r.fit.unwrap();
        assert!(!r.poisoned && r.zero_offset.as_ref().unwrap().xi.abs() < 1e-6);
        // Γ-only error at μ = 1/4 grows by about 0.1/μ² per unit Γ.
        assert!(f.slope > 1.2 && f.slope < 2.0, "{}", f.slope);
    }

    #[test]
    fn failed_points_poison_fit() {
        let mut p = Point::new(0.25, NoiseSpec::noiseless(3.0));
        p.n_max = Some(4);
        let r = error_sweep(&p, SweepAxis::GammaPhi, &[1e-3, 2e-3], &cheap()).unwrap();
        assert!(r.poisoned && r.fit.is_none());
        assert!(r.points.iter().all(|q| q.numerical_failure && q.xi.is_nan()));
    }

    #[test]
    fn jitter_window_cannot_improve() {
        let p = Point::new(0.25, NoiseSpec::with_q(1.0, 1e4));
        let s = cheap();
        let mut prev = -1.0;
        for w in [0.0, 0.05, 0.1] {
            let j = timing_jitter_point(&p, w, 11, &s).unwrap();
            assert!(j.xi_window >= prev - 1e-12);
            prev = j.xi_window;
        }
    }

    #[test]
    fn gate_fidelity_noiseless_is_perfect() {
        let p = Point::new(0.25, NoiseSpec::noiseless(0.5));
        let f = gate_fidelity(&p, &cheap()).unwrap();
        assert!(f.average_error.abs() < 1e-4, "{}", f.average_error);
    }

    #[test]
    fn configured_runs_are_deterministic() {
        let text = r#"
schema_version = 1
kind = "error-sweep"
name = "tiny"
[system]
mu = 0.25
[noise]
temperature = 0.5
[sweep]
axis = "gamma_phi"
values = [1e-3, 2e-3]
[integrator]
steps_per_period = 80
samples_per_period = 8
"#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let a = run_config(&cfg).unwrap();
        let b = run_config(&cfg).unwrap();
        assert_eq!(a.table.render(), b.table.render());
        assert_eq!(a.table.columns[0], "gamma_over_wc");
        assert!(a.sidecar["results"]["fit"]["slope"].is_number());
    }

    #[test]
    fn non_commensurate_mu_rejected() {
        let p = Point::new(0.3, NoiseSpec::noiseless(0.0));
        assert!(matches!(run_trace(&p, &cheap()), Err(Error::Commensurability { .. })));
    }
}
