//! Fidelity, entanglement, occupation and average-gate-fidelity measures.

use crate::hilbert::{self, Axis, HilbertSpec, Layout, Operator, QuantumState};
use crate::linalg;
use crate::{c, Error, Mat, Result, Vector, C64};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Metrics of one trajectory sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Time in units of the resonator period 2π/ω_c.
    pub t_over_tc: f64,
    pub fidelity: Option<f64>,
    pub log_negativity: Option<f64>,
    pub mean_n: f64,
}

/// tr_a on a raw joint matrix.
pub fn partial_trace_matrix(m: &Mat, h: HilbertSpec) -> Mat {
    let dq = h.qubit_dim();
    let df = h.fock_dim();
    Mat::from_fn(dq, dq, |a, b| {
        let mut s = C64::new(0.0, 0.0);
        for n in 0..df {
            s += m[(a * df + n, b * df + n)];
        }
        s
    })
}

/// Reduced qubit state ϱ = tr_a ρ.
pub fn partial_trace_resonator(rho: &QuantumState) -> Result<QuantumState> {
    let Layout::Joint(h) = rho.layout() else {
        return Err(Error::LayoutMismatch("partial trace needs a joint state".into()));
    };
    Ok(QuantumState::trusted(Layout::Qubits(h.n_qubits), partial_trace_matrix(rho.matrix(), h)))
}

/// ⟨ψ|m|ψ⟩ for a qubit density matrix.
pub fn fidelity_matrix(m: &Mat, target: &Vector) -> f64 {
    (target.adjoint() * m * target)[(0, 0)].re
}

/// F = ⟨Ψ_tar|ϱ|Ψ_tar⟩.
pub fn state_fidelity(rho: &QuantumState, target: &Vector) -> Result<f64> {
    if rho.dim() != target.len() {
        return Err(Error::LayoutMismatch(format!("state dim {} vs target dim {}", rho.dim(), target.len())));
    }
    Ok(fidelity_matrix(rho.matrix(), target).clamp(0.0, 1.0))
}

/// Partial transpose on qubit 1 of a two-qubit matrix.
pub fn partial_transpose_first(m: &Mat) -> Mat {
    // Index a = 2 i1 + i2; transpose i1 ↔ j1.
    Mat::from_fn(4, 4, |a, b| {
        let (i1, i2) = (a / 2, a % 2);
        let (j1, j2) = (b / 2, b % 2);
        m[(2 * j1 + i2, 2 * i1 + j2)]
    })
}

/// E_N = log₂‖ϱ^{T₁}‖₁ on a raw two-qubit matrix, clipped at 0.
pub fn log_negativity_matrix(m: &Mat) -> f64 {
    let pt = partial_transpose_first(m);
    let norm: f64 = pt.singular_values().iter().sum();
    norm.log2().max(0.0)
}

pub fn log_negativity(rho: &QuantumState) -> Result<f64> {
    if rho.layout() != Layout::Qubits(2) {
        return Err(Error::LayoutMismatch("log-negativity needs a two-qubit state".into()));
    }
    Ok(log_negativity_matrix(rho.matrix()))
}

/// tr(ρ a†a) on a raw joint matrix.
pub fn mean_occupation_matrix(m: &Mat, h: HilbertSpec) -> f64 {
    (0..h.dim()).map(|i| h.fock_of(i) as f64 * m[(i, i)].re).sum()
}

pub fn mean_occupation(rho: &QuantumState) -> Result<f64> {
    match rho.layout() {
        Layout::Joint(h) => Ok(mean_occupation_matrix(rho.matrix(), h)),
        Layout::Resonator(n_max) => Ok((0..=n_max).map(|n| n as f64 * rho.matrix()[(n, n)].re).sum()),
        Layout::Qubits(_) => Err(Error::LayoutMismatch("mean occupation needs a resonator factor".into())),
    }
}

/// The 16 two-qubit Pauli operators in the order
/// 𝟙, σ₁^x, σ₁^y, σ₁^z, σ₂^x, σ₂^y, σ₂^z, σ₁^xσ₂^x, σ₁^xσ₂^y, …, σ₁^zσ₂^z.
pub fn pauli_basis_two_qubit() -> Vec<(String, Mat)> {
    let id = linalg::identity(2);
    let name = |a: Axis| match a {
        Axis::X => "x",
        Axis::Y => "y",
        Axis::Z => "z",
    };
    let mut out = vec![("I".to_string(), linalg::identity(4))];
    for a in Axis::ALL {
        out.push((format!("{}1", name(a)), linalg::kron(&hilbert::pauli_matrix(a), &id)));
    }
    for a in Axis::ALL {
        out.push((format!("{}2", name(a)), linalg::kron(&id, &hilbert::pauli_matrix(a))));
    }
    for a in Axis::ALL {
        for b in Axis::ALL {
            out.push((
                format!("{}1{}2", name(a), name(b)),
                linalg::kron(&hilbert::pauli_matrix(a), &hilbert::pauli_matrix(b)),
            ));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateFidelity {
    /// F̄ = (d F_ent + 1)/(d + 1).
    pub average: f64,
    /// Ē = 1 − F̄.
    pub average_error: f64,
    pub entanglement: f64,
}

/// Deviation from trace preservation tolerated by [`avg_gate_fidelity`].
pub const TRACE_PRESERVATION_TOL: f64 = 1e-6;

/// Average gate fidelity of a two-qubit channel against `u_id`, from
/// F_ent = (1/d³) Σ_P tr[P† U† M(P) U] over the Pauli basis.
pub fn avg_gate_fidelity<F>(channel: F, u_id: &Operator) -> Result<GateFidelity>
where
    F: Fn(&Mat) -> Result<Mat> + Sync,
{
    if u_id.layout() != Layout::Qubits(2) {
        return Err(Error::LayoutMismatch("average gate fidelity is defined for two qubits".into()));
    }
    let d = 4.0;
    let u = u_id.matrix();
    let basis = pauli_basis_two_qubit();
    let images: Vec<Mat> = basis.par_iter().map(|(_, p)| channel(p)).collect::<Result<_>>()?;
    let mut sum = C64::new(0.0, 0.0);
    for ((label, p), mp) in basis.iter().zip(&images) {
        let tr = linalg::trace(mp);
        let want = if label == "I" { d } else { 0.0 };
        if (tr - c(want, 0.0)).norm() > TRACE_PRESERVATION_TOL * d {
            return Err(Error::Diagnostics(format!("channel is not trace preserving: tr M({label}) = {tr}")));
        }
        sum += linalg::trace(&(p.adjoint() * u.adjoint() * mp * u));
    }
    let f_ent = sum.re / (d * d * d);
    let avg = (d * f_ent + 1.0) / (d + 1.0);
    Ok(GateFidelity { average: avg, average_error: 1.0 - avg, entanglement: f_ent })
}

/// Haar-random pure state of dimension `dim`.
pub fn haar_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    let v = Vector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    let n = v.norm();
    v / c(n, 0.0)
}

/// Monte-Carlo estimate of the average fidelity ⟨ψ|U† M(|ψ⟩⟨ψ|) U|ψ⟩ over Haar states;
/// returns (mean, standard error).
pub fn haar_average_fidelity<F, R>(channel: F, u_id: &Operator, samples: usize, rng: &mut R) -> Result<(f64, f64)>
where
    F: Fn(&Mat) -> Result<Mat>,
    R: Rng + ?Sized,
{
    let u = u_id.matrix();
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let psi = haar_state(rng, u.nrows());
        let out = channel(&linalg::projector(&psi))?;
        let phi = u * &psi;
        vals.push(fidelity_matrix(&out, &phi));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
