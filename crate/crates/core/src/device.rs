//! Device-level calculators: charge and singlet–triplet double dots,
//! SAW resonator coupling, and dispersive-regime parameters.
//!
//! All energies share one unit chosen by the caller.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ratio below which a "≪" condition counts as satisfied.
pub const MUCH_LESS_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeQubitParams {
    pub epsilon: f64,
    pub t_c: f64,
    pub g_ch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeCouplings {
    pub omega_q: f64,
    pub g_x: f64,
    pub g_z: f64,
}

pub fn charge_qubit_couplings(p: &ChargeQubitParams) -> Result<ChargeCouplings> {
    if !(p.t_c > 0.0) {
        return Err(Error::InvalidSpec(format!("tunnel coupling must be positive, got {}", p.t_c)));
    }
    let omega_q = (p.epsilon * p.epsilon + 4.0 * p.t_c * p.t_c).sqrt();
    Ok(ChargeCouplings { omega_q, g_x: p.g_ch * 2.0 * p.t_c / omega_q, g_z: p.g_ch * p.epsilon / omega_q })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StQubitParams {
    pub epsilon: f64,
    pub t_c: f64,
    pub g0: f64,
    /// Magnetic gradient; carried as metadata only.
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StCoupling {
    /// t_c²/4ε, absent at ε = 0.
    pub j_asymptotic: Option<f64>,
    /// |ε₋| with ε± = ½(−ε ± √(ε²+t_c²)).
    pub j_exact: f64,
    pub g_sp: f64,
    pub epsilon_plus: f64,
    pub epsilon_minus: f64,
}

pub fn st_qubit_coupling(p: &StQubitParams) -> Result<StCoupling> {
    if !(p.t_c > 0.0) {
        return Err(Error::InvalidSpec(format!("tunnel coupling must be positive, got {}", p.t_c)));
    }
    let omega = p.epsilon.hypot(p.t_c);
    let epsilon_plus = 0.5 * (-p.epsilon + omega);
    let epsilon_minus = 0.5 * (-p.epsilon - omega);
    Ok(StCoupling {
        j_asymptotic: (p.epsilon != 0.0).then(|| p.t_c * p.t_c / (4.0 * p.epsilon)),
        j_exact: epsilon_minus.abs(),
        g_sp: 0.5 * p.g0 * (1.0 + p.epsilon / omega),
        epsilon_plus,
        epsilon_minus,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SawParams {
    pub alpha_eff: f64,
    pub l: f64,
    pub lambda: f64,
    pub volume: f64,
}

/// Relative charge coupling ζ = g_ch/ω_c = √α_eff · √(l²λ/V).
pub fn saw_coupling(p: &SawParams) -> Result<f64> {
    if !(p.alpha_eff >= 0.0 && p.l > 0.0 && p.lambda > 0.0 && p.volume > 0.0) {
        return Err(Error::InvalidSpec(format!("SAW parameters must be positive: {p:?}")));
    }
    Ok(p.alpha_eff.sqrt() * (p.l * p.l * p.lambda / p.volume).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispersive {
    pub g_eff: f64,
    /// √n̄ g/|Δ|.
    pub thermal_ratio: f64,
    /// |Δ|/ω_c.
    pub detuning_ratio: f64,
    pub valid: bool,
}

/// Effective exchange g²/Δ and the check √n̄ g ≪ |Δ| ≪ ω_c.
pub fn dispersive_params(g: f64, detuning: f64, nbar: f64, omega_c: f64, threshold: f64) -> Result<Dispersive> {
    if detuning == 0.0 || !detuning.is_finite() {
        return Err(Error::InvalidSpec("dispersive detuning must be nonzero".into()));
    }
    if !(omega_c > 0.0) || nbar < 0.0 {
        return Err(Error::InvalidSpec(format!("need omega_c > 0 and nbar >= 0, got {omega_c}, {nbar}")));
    }
    let thermal_ratio = nbar.sqrt() * g.abs() / detuning.abs();
    let detuning_ratio = detuning.abs() / omega_c;
    Ok(Dispersive {
        g_eff: g * g / detuning,
        thermal_ratio,
        detuning_ratio,
        valid: thermal_ratio <= threshold && detuning_ratio <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn charge_qubit_limits() {
        let c0 = charge_qubit_couplings(&ChargeQubitParams { epsilon: 0.0, t_c: 0.3, g_ch: 0.01 }).unwrap();
        assert!((c0.g_x - 0.01).abs() < 1e-15 && c0.g_z == 0.0 && (c0.omega_q - 0.6).abs() < 1e-15);
        let far = charge_qubit_couplings(&ChargeQubitParams { epsilon: 100.0, t_c: 1.0, g_ch: 1.0 }).unwrap();
        assert!((far.g_z - 1.0).abs() < 1e-3);
        assert!((far.g_x - 1.0 / 50.0).abs() < 1e-4);
        assert!(charge_qubit_couplings(&ChargeQubitParams { epsilon: 1.0, t_c: 0.0, g_ch: 1.0 }).is_err());
    }

    proptest! {
        #[test]
        fn charge_couplings_preserve_norm(eps in -50.0f64..50.0, tc in 1e-3f64..10.0, g in 0.0f64..2.0) {
            let c = charge_qubit_couplings(&ChargeQubitParams { epsilon: eps, t_c: tc, g_ch: g }).unwrap();
            prop_assert!((c.g_x * c.g_x + c.g_z * c.g_z - g * g).abs() <= 1e-12 * (1.0 + g * g));
        }

        #[test]
        fn st_coupling_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0, tc in 0.01f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let p = |e| st_qubit_coupling(&StQubitParams { epsilon: e, t_c: tc, g0: 1.0, delta: 0.0 }).unwrap().g_sp;
            prop_assert!(p(lo) <= p(hi) + 1e-15);
        }
    }

    #[test]
    fn st_coupling_limits() {
        let at = |e: f64| st_qubit_coupling(&StQubitParams { epsilon: e, t_c: 1.0, g0: 2.0, delta: 0.0 }).unwrap();
        assert!(at(-1e6).g_sp < 1e-11);
        assert!((at(0.0).g_sp - 1.0).abs() < 1e-15);
        assert!(at(0.0).j_asymptotic.is_none());
        assert!((at(1e6).g_sp - 2.0).abs() < 1e-11);
        // Far on the negative side the exact splitting approaches |t_c²/4ε|.
        let s = at(-200.0);
        assert!((s.j_exact - s.j_asymptotic.unwrap().abs()).abs() < 1e-8);
        assert!((s.epsilon_plus - (200.0 + 1.0 / 800.0)).abs() < 1e-8);
    }

    #[test]
    fn st_coupling_continuous() {
        let mut prev = None;
        for k in -400..=400 {
            let g = st_qubit_coupling(&StQubitParams { epsilon: k as f64 * 0.01, t_c: 0.5, g0: 1.0, delta: 0.1 }).unwrap();
            if let Some(p) = prev {
                let d: f64 = g.g_sp - p;
                assert!(d.abs() < 0.02);
            }
            prev = Some(g.g_sp);
        }
    }

    #[test]
    fn saw_coupling_scaling() {
        let base = SawParams { alpha_eff: 0.1, l: 1.0, lambda: 2.0, volume: 50.0 };
        assert_eq!(saw_coupling(&SawParams { alpha_eff: 0.0, ..base }).unwrap(), 0.0);
        let z = saw_coupling(&base).unwrap();
        assert!((saw_coupling(&SawParams { l: 2.0, ..base }).unwrap() - 2.0 * z).abs() < 1e-15);
        // Mode depth 0.3λ: ζ/√(l²/A) = √(α_eff/0.3), spanning ≈0.5–1.5 for α_eff/α ∈ [10, 100].
        let alpha = 1.0 / 137.036;
        for (ratio, lo, hi) in [(10.0, 0.45, 0.55), (100.0, 1.45, 1.6)] {
            let area = 40.0;
            let p = SawParams { alpha_eff: ratio * alpha, l: 1.0, lambda: 3.0, volume: 0.3 * 3.0 * area };
            let pref = saw_coupling(&p).unwrap() / (1.0f64 / area).sqrt();
            assert!(pref > lo && pref < hi, "{pref}");
        }
        assert!(saw_coupling(&SawParams { volume: 0.0, ..base }).is_err());
    }

    #[test]
    fn dispersive_cases() {
        assert_eq!(dispersive_params(0.0, 0.05, 1.0, 1.0, MUCH_LESS_THRESHOLD).unwrap().g_eff, 0.0);
        // √n̄ g/Δ = 0.05 and Δ/ω_c = 0.05.
        let ok = dispersive_params(0.0025, 0.05, 1.0, 1.0, MUCH_LESS_THRESHOLD).unwrap();
        assert!(ok.valid && (ok.thermal_ratio - 0.05).abs() < 1e-12);
        assert!((ok.g_eff - 0.0025f64.powi(2) / 0.05).abs() < 1e-15);
        assert!(!dispersive_params(0.001, 0.5, 1.0, 1.0, MUCH_LESS_THRESHOLD).unwrap().valid);
        assert!(dispersive_params(0.001, 0.0, 1.0, 1.0, MUCH_LESS_THRESHOLD).is_err());
    }
}
