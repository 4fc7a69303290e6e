//! Closed-form error laws, requirement checks and first-order perturbed states.
//!
//! Rates are given relative to ω_c unless a name says otherwise.

use crate::hilbert::{self, Axis, Layout, QuantumState};
use crate::linalg;
use crate::{c, Error, Mat, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fitted rethermalization coefficient α_κ.
pub const ALPHA_KAPPA: f64 = 4.0;
/// α_Γ·μ², so that α_Γ = 0.1/μ².
pub const ALPHA_GAMMA_MU2: f64 = 0.1;
/// c_γ, so that α_γ = 0.38/μ².
pub const C_GAMMA: f64 = 0.38;
/// Default ratio for "≪".
pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Boltzmann weight below which the Υ_q sum stops.
pub const UPSILON_WEIGHT_CUTOFF: f64 = 1e-12;
/// k_B/h in GHz per kelvin.
pub const KB_OVER_H_GHZ_PER_K: f64 = 20.836_619_12;

/// A ratio compared against a "≪" threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub ratio: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn new(ratio: f64, threshold: f64) -> Check {
        Check { ratio, threshold, pass: ratio <= threshold }
    }
}

/// k_BT ≪ Qμ²ω_c, as r = k_BT/(Qμ²ω_c).
pub fn hot_gate_check(k_bt: f64, q: f64, mu: f64, omega_c: f64, threshold: f64) -> Check {
    let ratio = if q.is_infinite() { 0.0 } else { k_bt / (q * mu * mu * omega_c) };
    Check::new(ratio, threshold)
}

/// Temperature (K) at which k_BT equals Q·g_eff, with g_eff/2π in GHz.
pub fn hot_gate_temperature_bound(q: f64, g_eff_ghz: f64) -> f64 {
    q * g_eff_ghz / KB_OVER_H_GHZ_PER_K
}

/// Γ ≪ μ²ω_c, as r = Γ/(μ²ω_c).
pub fn dephasing_check(gamma: f64, mu: f64, omega_c: f64, threshold: f64) -> Check {
    Check::new(gamma / (mu * mu * omega_c), threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Rates small against g_eff = μ²ω_c by the default threshold.
    pub small_error_regime: bool,
}

/// ξ ≈ α_κ(κ/ω_c)n̄ + α_Γ Γ/ω_c.
pub fn total_error_estimate(kappa: f64, nbar: f64, gamma: f64, mu: f64) -> Estimate {
    let mu2 = mu * mu;
    let value = ALPHA_KAPPA * kappa * nbar + ALPHA_GAMMA_MU2 / mu2 * gamma;
    Estimate { value, small_error_regime: kappa * nbar <= DEFAULT_THRESHOLD * mu2 && gamma <= DEFAULT_THRESHOLD * mu2 }
}

/// First-order rethermalization error; independent of the coupling.
pub fn retherm_error_analytic(kappa: f64, nbar: f64, q: f64, correlated: bool) -> f64 {
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let full = PI * kappa * nbar + 0.5 * PI * inv_q;
    if correlated {
        0.5 * full
    } else {
        full
    }
}

/// ξ_γ ≈ (c_γ/μ²) γ₁/ω_c.
pub fn relaxation_error(gamma1: f64, mu: f64) -> f64 {
    C_GAMMA / (mu * mu) * gamma1
}

/// Averaged-error coefficients for a jitter window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterCoefficients {
    pub mu: f64,
    /// (ω_c/2π)Δt.
    pub window: f64,
    pub alpha_kappa: f64,
    pub beta_kappa: f64,
    pub alpha_gamma: f64,
    pub beta_gamma: f64,
}

pub const JITTER_TABLE: [JitterCoefficients; 1] = [JitterCoefficients {
    mu: 1.0 / 16.0,
    window: 0.05,
    alpha_kappa: 4.03,
    beta_kappa: 2.2e-4,
    alpha_gamma: 24.22,
    beta_gamma: 5.1e-4,
}];

pub fn jitter_coefficients(mu: f64, window: f64) -> Option<JitterCoefficients> {
    JITTER_TABLE.iter().copied().find(|j| (j.mu - mu).abs() < 1e-12 && (j.window - window).abs() < 1e-12)
}

/// ξ̄ = ᾱ_κ(κ/ω_c)n̄ + ᾱ_Γ Γ/ω_c + β̄_κ + β̄_Γ over a window (ω_c/2π)Δt.
/// A zero window gives the pointwise law; other windows need tabulated coefficients.
pub fn jitter_error(mu: f64, nbar: f64, kappa: f64, gamma: f64, window: f64) -> Result<f64> {
    if window < 0.0 {
        return Err(Error::InvalidSpec(format!("jitter window must be >= 0, got {window}")));
    }
    if window == 0.0 {
        return Ok(total_error_estimate(kappa, nbar, gamma, mu).value);
    }
    let j = jitter_coefficients(mu, window).ok_or_else(|| {
        Error::RequiresSimulation(format!("no jitter coefficients for mu = {mu}, window = {window}; run the jitter scenario"))
    })?;
    Ok(j.alpha_kappa * kappa * nbar + j.alpha_gamma * gamma + j.beta_kappa + j.beta_gamma)
}

/// L_n^{(0)}(x) for n = 0..=n_max by the three-term recurrence.
pub fn laguerre(n_max: usize, x: f64) -> Vec<f64> {
    let mut l = Vec::with_capacity(n_max + 1);
    l.push(1.0);
    if n_max >= 1 {
        l.push(1.0 - x);
    }
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * l[k] - kf * l[k - 1]) / (kf + 1.0);
        l.push(next);
    }
    l
}

/// χ_n(μ) = e^{−2μ²} L_n(4μ²).
pub fn chi(n: usize, mu: f64) -> f64 {
    (-2.0 * mu * mu).exp() * laguerre(n, 4.0 * mu * mu)[n]
}

/// Υ_q = Z⁻¹ Σ_n e^{−βω_c n} χ_n²; k_bt in units of ω_c. Returns the value
/// and whether `n_max` cut the sum before the weights fell below the cutoff.
pub fn upsilon_q(mu: f64, k_bt: f64, n_max: usize) -> (f64, bool) {
    let x = if k_bt > 0.0 { (-1.0 / k_bt).exp() } else { 0.0 };
    let lag = laguerre(n_max, 4.0 * mu * mu);
    let e = (-2.0 * mu * mu).exp();
    let mut sum = 0.0;
    let mut w = 1.0 - x;
    for (n, l) in lag.iter().enumerate() {
        if w < UPSILON_WEIGHT_CUTOFF && n > 0 {
            return (sum, false);
        }
        sum += w * (e * l).powi(2);
        w *= x;
    }
    (sum, w >= UPSILON_WEIGHT_CUTOFF)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    /// {|↑↑⟩, |↓↓⟩}.
    Aligned,
    /// {|↑↓⟩, |↓↑⟩}, quasi decoherence-free.
    Dfs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub xi: f64,
    pub upsilon: f64,
    /// ω_q/(8μ²ω_c) within the default threshold.
    pub perturbative: bool,
    pub truncated: bool,
    pub note: Option<String>,
}

/// Splitting-induced error ξ_q = Υ_q ω_q²/(16 g_eff²) at t_max; ω_q and k_BT in units of ω_c.
pub fn splitting_error(mu: f64, k_bt: f64, omega_q: f64, n_max: usize, subspace: Subspace) -> SplittingEstimate {
    let (upsilon, truncated) = upsilon_q(mu, k_bt, n_max);
    let g_eff = mu * mu;
    let perturbative = omega_q <= DEFAULT_THRESHOLD * 8.0 * g_eff;
    match subspace {
        Subspace::Aligned => SplittingEstimate {
            xi: upsilon * omega_q * omega_q / (16.0 * g_eff * g_eff),
            upsilon,
            perturbative,
            truncated,
            note: None,
        },
        Subspace::Dfs => SplittingEstimate {
            xi: 0.0,
            upsilon,
            perturbative,
            truncated,
            note: Some("vanishes at second order on the dfs subspace; the true error is nonzero but suppressed".into()),
        },
    }
}

/// Perturbed qubit state with the size of its correction.
#[derive(Clone, Debug)]
pub struct Perturbed {
    pub state: QuantumState,
    pub correction_norm: f64,
    /// Correction exceeds 0.1 in max-norm.
    pub too_large: bool,
}

fn dissipator(l: &Mat, rho: &Mat) -> Mat {
    let ldl = l.adjoint() * l;
    l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * c(0.5, 0.0)
}

fn qubit_layout(rho: &QuantumState) -> Result<usize> {
    match rho.layout() {
        Layout::Qubits(n) => Ok(n),
        other => Err(Error::LayoutMismatch(format!("expected a qubit-only state, got {other:?}"))),
    }
}

fn perturb(rho: &QuantumState, delta: Mat) -> Perturbed {
    let correction_norm = linalg::max_norm(&delta);
    let mut m = rho.matrix() + delta;
    linalg::hermitize(&mut m);
    let tr = linalg::trace(&m).re;
    m /= c(tr, 0.0);
    Perturbed { state: QuantumState::trusted(rho.layout(), m), correction_norm, too_large: correction_norm > 0.1 }
}

/// ϱ_id + 2κ(2n̄+1)t_m μ² D[S]ϱ_id, with κ in units of ω_c and t_m in 1/ω_c.
pub fn first_order_retherm_state(rho_id: &QuantumState, kappa: f64, nbar: f64, t_m: f64, mu: f64, s_qubit: &Mat) -> Result<Perturbed> {
    let n = qubit_layout(rho_id)?;
    if s_qubit.nrows() != 1 << n {
        return Err(Error::LayoutMismatch("collective spin does not act on this register".into()));
    }
    let delta = dissipator(s_qubit, rho_id.matrix()) * c(2.0 * kappa * (2.0 * nbar + 1.0) * t_m * mu * mu, 0.0);
    Ok(perturb(rho_id, delta))
}

/// ϱ_id + γ_φ t Σ_i D[σ_i^z]ϱ_id.
pub fn first_order_dephasing_state(rho_id: &QuantumState, gamma_phi: f64, t: f64) -> Result<Perturbed> {
    let n = qubit_layout(rho_id)?;
    let mut delta = linalg::zeros(1 << n);
    for site in 1..=n {
        let z = hilbert::on_site(&hilbert::pauli_matrix(Axis::Z), site, n)?;
        delta += dissipator(&z, rho_id.matrix());
    }
    Ok(perturb(rho_id, delta * c(gamma_phi * t, 0.0)))
}

/// Model parameters relative to ω_c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    pub mu: f64,
    pub k_bt: f64,
    pub q: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub omega_q: f64,
}

/// Laboratory parameters: frequencies f = ω/2π in GHz, temperature in K.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub f_c_ghz: f64,
    pub g_ghz: f64,
    pub temperature_k: f64,
    pub q: f64,
    pub gamma_ghz: f64,
    pub gamma1_ghz: f64,
    pub f_q_ghz: f64,
}

impl PhysicalParams {
    pub fn to_inputs(&self) -> Result<BudgetInputs> {
        let finite = [self.f_c_ghz, self.g_ghz, self.temperature_k, self.gamma_ghz, self.gamma1_ghz, self.f_q_ghz];
        if !(self.f_c_ghz > 0.0) || finite.iter().any(|v| !v.is_finite() || *v < 0.0) || !(self.q > 0.0) {
            return Err(Error::InvalidSpec(format!("physical parameters must be non-negative with f_c, Q > 0: {self:?}")));
        }
        Ok(BudgetInputs {
            mu: self.g_ghz / self.f_c_ghz,
            k_bt: KB_OVER_H_GHZ_PER_K * self.temperature_k / self.f_c_ghz,
            q: self.q,
            gamma: self.gamma_ghz / self.f_c_ghz,
            gamma1: self.gamma1_ghz / self.f_c_ghz,
            omega_q: self.f_q_ghz / self.f_c_ghz,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    CircuitQed,
    Saw,
}

impl Preset {
    pub fn params(self) -> PhysicalParams {
        match self {
            Preset::CircuitQed => PhysicalParams {
                f_c_ghz: 0.16,
                g_ghz: 0.01,
                temperature_k: 1.0,
                q: 1e5,
                gamma_ghz: 9.6e-5,
                gamma1_ghz: 0.0,
                f_q_ghz: 0.0,
            },
            Preset::Saw => PhysicalParams {
                f_c_ghz: 1.0,
                g_ghz: 0.002,
                temperature_k: 0.5,
                q: 1e6,
                gamma_ghz: 1e-6,
                gamma1_ghz: 0.0,
                f_q_ghz: 0.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub inputs: BudgetInputs,
    pub physical: Option<PhysicalParams>,
    pub nbar: f64,
    /// g_eff/ω_c = μ².
    pub g_eff: f64,
    pub kappa: f64,
    pub hot_gate: Check,
    pub dephasing: Check,
    pub xi_kappa: f64,
    pub xi_gamma: f64,
    pub xi_q: f64,
    pub xi_relax: f64,
    pub total: f64,
    pub small_error_regime: bool,
    pub splitting_perturbative: bool,
}

/// Largest Fock level included in the Υ_q sum of a budget.
const BUDGET_UPSILON_NMAX: usize = 100_000;

pub fn budget(inputs: BudgetInputs, physical: Option<PhysicalParams>, threshold: f64) -> Result<BudgetReport> {
    let BudgetInputs { mu, k_bt, q, gamma, gamma1, omega_q } = inputs;
    if !(mu > 0.0) || k_bt < 0.0 || !(q > 0.0) || gamma < 0.0 || gamma1 < 0.0 || omega_q < 0.0 {
        return Err(Error::InvalidSpec(format!("budget inputs out of range: {inputs:?}")));
    }
    let nbar = hilbert::thermal_occupation(1.0, k_bt)?;
    let kappa = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let xi_kappa = ALPHA_KAPPA * kappa * nbar;
    let xi_gamma = ALPHA_GAMMA_MU2 / (mu * mu) * gamma;
    let split = splitting_error(mu, k_bt, omega_q, BUDGET_UPSILON_NMAX, Subspace::Aligned);
    let xi_relax = relaxation_error(gamma1, mu);
    // Rethermalization and dephasing terms plus splitting and relaxation, each non-negative.
    let total = xi_kappa + xi_gamma + split.xi + xi_relax;
    Ok(BudgetReport {
        inputs,
        physical,
        nbar,
        g_eff: mu * mu,
        kappa,
        hot_gate: hot_gate_check(k_bt, q, mu, 1.0, threshold),
        dephasing: dephasing_check(gamma, mu, 1.0, threshold),
        xi_kappa,
        xi_gamma,
        xi_q: split.xi,
        xi_relax,
        total,
        small_error_regime: total_error_estimate(kappa, nbar, gamma, mu).small_error_regime,
        splitting_perturbative: split.perturbative,
    })
}

pub fn budget_physical(p: PhysicalParams, threshold: f64) -> Result<BudgetReport> {
    budget(p.to_inputs()?, Some(p), threshold)
}
