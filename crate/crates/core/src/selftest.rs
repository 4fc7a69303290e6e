//! Oracle-equivalence and invariant checks at small dimensions.

use crate::hilbert::{self, Layout, QuantumState, Spin};
use crate::lindblad::{self, Bath, Damping, EvolveOptions, NoiseSpec, PositivityCheck};
use crate::model::{self, SystemSpec};
use crate::scenarios::{self, Point, Settings};
use crate::{linalg, metrics, Mat, Result, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s += &format!("{} {:<28} {:.3e} <= {:.1e}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
        }
        s
    }
}

fn check(name: &'static str, value: f64, tolerance: f64, scale: f64) -> CheckResult {
    let tolerance = tolerance * scale;
    CheckResult { name, value, tolerance, pass: value.is_finite() && value <= tolerance }
}

/// Runs every check; `tolerance_scale` multiplies all tolerances.
pub fn run(seed: u64, tolerance_scale: f64) -> Result<Report> {
    let s = tolerance_scale;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Integrator against the dense superoperator exponential, d = 24.
    let spec = SystemSpec::transversal(0.15, 0.07, 5)?;
    let noise = NoiseSpec::new(Damping::Q(40.0), Bath::Nbar(0.2), 0.02, 0.01, true)?;
    let q = QuantumState::pure(Layout::Qubits(2), &hilbert::spin_vector(&[Spin::Up, Spin::Down]))?;
    let rho0 = QuantumState::product(&q, &hilbert::thermal_state_nbar(0.0, 5)?.state)?;
    let opts = EvolveOptions { steps_per_period: 400, positivity: PositivityCheck::Off, top_fock_tol: 1.0, ..Default::default() };
    let t = 4.0;
    let tr = lindblad::evolve(&rho0, t, &spec, &noise, &[], None, &opts)?;
    let sup = lindblad::superoperator(&spec, &noise, lindblad::SUPEROPERATOR_DIM_LIMIT)?;
    let exact = sup.propagate(rho0.matrix(), t);
    checks.push(check("evolve_vs_superoperator", linalg::trace_distance(tr.final_state.matrix(), &exact), 1e-8, s));
    checks.push(check("trace_drift", tr.diagnostics.max_trace_drift, 1e-7, s));
    checks.push(check("positivity", (-tr.final_state.min_eigenvalue()).max(0.0), 1e-6, s));

    // Noise-free stroboscopic gate against the ideal state.
    let mut p = Point::new(0.25, NoiseSpec::noiseless(0.5));
    p.n_max = Some(16);
    let o = scenarios::xi_at_tmax(&p, 0.0, &Settings::default());
    checks.push(check("stroboscopic_gate", o.xi.abs(), 1e-5, s));

    // Echoed controlled phase.
    let lspec = SystemSpec::longitudinal(0.125, 0.3, 20)?;
    let (gate, _) = model::qubit_factor(&model::cphase_sequence(&lspec, 2)?)?;
    let cz = Mat::from_diagonal(&Vector::from_vec(vec![crate::c(-1.0, 0.0), crate::c(1.0, 0.0), crate::c(1.0, 0.0), crate::c(1.0, 0.0)]));
    checks.push(check("controlled_phase", linalg::phase_free_distance(gate.matrix(), &cz), 1e-6, s));

    let bell = QuantumState::pure(Layout::Qubits(2), &hilbert::target_bell())?;
    checks.push(check("bell_log_negativity", (metrics::log_negativity(&bell)? - 1.0).abs(), 1e-9, s));

    let h = hilbert::HilbertSpec::new(2, 4)?;
    let v = metrics::haar_state(&mut rng, h.dim());
    let reduced = metrics::partial_trace_matrix(&linalg::projector(&v), h);
    checks.push(check("partial_trace_preservation", (linalg::trace(&reduced).re - 1.0).abs(), 1e-12, s));

    // Pure dephasing of |+⟩: coherence decays as e^{−Γt/2}.
    let dspec = SystemSpec::transversal(0.0, 0.0, 1)?;
    let dnoise = NoiseSpec::new(Damping::Q(f64::INFINITY), Bath::Nbar(0.0), 0.1, 0.0, false)?;
    let plus = Vector::from_vec(vec![crate::c(0.5, 0.0); 4]);
    let res = QuantumState::pure(Layout::Resonator(1), &hilbert::fock_vector(0, 1)?)?;
    let r0 = QuantumState::product(&QuantumState::pure(Layout::Qubits(2), &plus)?, &res)?;
    let t = 2.0 * PI;
    let d = lindblad::evolve(&r0, t, &dspec, &dnoise, &[], None, &EvolveOptions { top_fock_tol: 1.0, ..Default::default() })?;
    let red = metrics::partial_trace_resonator(&d.final_state)?;
    let want = 0.25 * (-0.1 * t / 2.0f64).exp();
    checks.push(check("dephasing_rate", (red.matrix()[(0, 2)].re - want).abs(), 1e-8, s));

    Ok(Report { seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes_and_is_deterministic() {
        let a = run(7, 1.0).unwrap();
        assert!(a.all_pass(), "{}", a.render());
        assert_eq!(a.render(), run(7, 1.0).unwrap().render());
        let bad = run(7, 1e-30).unwrap();
        assert!(!bad.all_pass());
    }
}
