//! Spin–resonator Hamiltonian, polaron-frame propagators, ideal stroboscopic
//! gates and the echoed controlled-phase sequence.

use crate::hilbert::{self, Axis, HilbertSpec, Layout, Operator};
use crate::linalg;
use crate::{c, Error, Mat, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Physical model of N qubits coupled to one resonator mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub omega_c: f64,
    pub omega_q: f64,
    pub g: f64,
    /// η_i^α, one row (x, y, z) per qubit.
    pub couplings: Vec<[f64; 3]>,
    pub hilbert: HilbertSpec,
}

impl SystemSpec {
    pub fn new(omega_c: f64, omega_q: f64, g: f64, couplings: Vec<[f64; 3]>, hilbert: HilbertSpec) -> Result<Self> {
        if !(omega_c > 0.0) {
            return Err(Error::InvalidSpec(format!("omega_c must be positive, got {omega_c}")));
        }
        if !(omega_q >= 0.0) {
            return Err(Error::InvalidSpec(format!("omega_q must be >= 0, got {omega_q}")));
        }
        if !(g >= 0.0) {
            return Err(Error::InvalidSpec(format!("g must be >= 0, got {g}")));
        }
        if couplings.len() != hilbert.n_qubits {
            return Err(Error::InvalidSpec(format!(
                "{} coupling rows for {} qubits",
                couplings.len(),
                hilbert.n_qubits
            )));
        }
        Ok(SystemSpec { omega_c, omega_q, g, couplings, hilbert })
    }

    /// Two qubits with σ^x coupling at ω_c = 1.
    pub fn transversal(mu: f64, omega_q: f64, n_max: usize) -> Result<Self> {
        Self::new(1.0, omega_q, mu, pattern(Axis::X, 2), HilbertSpec::new(2, n_max)?)
    }

    /// Two qubits with σ^z coupling at ω_c = 1.
    pub fn longitudinal(mu: f64, omega_q: f64, n_max: usize) -> Result<Self> {
        Self::new(1.0, omega_q, mu, pattern(Axis::Z, 2), HilbertSpec::new(2, n_max)?)
    }

    /// μ = g/ω_c.
    pub fn mu(&self) -> f64 {
        self.g / self.omega_c
    }

    pub fn with_cutoff(&self, n_max: usize) -> Result<Self> {
        let h = HilbertSpec::new(self.hilbert.n_qubits, n_max)?;
        Ok(SystemSpec { hilbert: h, ..self.clone() })
    }

    /// S on the qubit register.
    pub fn qubit_spin(&self) -> Mat {
        hilbert::qubit_collective_spin(self.hilbert.n_qubits, &self.couplings).expect("validated couplings")
    }

    pub fn is_longitudinal(&self) -> bool {
        self.couplings.iter().all(|r| r[0] == 0.0 && r[1] == 0.0)
    }

    /// True when S commutes with Σσ^z, so the polaron form stays exact for ω_q ≠ 0.
    pub fn spin_commutes_with_splitting(&self) -> bool {
        let s = self.qubit_spin();
        let sz = hilbert::qubit_total(Axis::Z, self.hilbert.n_qubits);
        linalg::max_norm(&(&s * &sz - &sz * &s)) < 1e-12
    }
}

/// Identical coupling along one axis for every qubit.
pub fn pattern(axis: Axis, n_qubits: usize) -> Vec<[f64; 3]> {
    let mut row = [0.0; 3];
    row[axis.index()] = 1.0;
    vec![row; n_qubits]
}

/// Stroboscopic gate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatePlan {
    pub m: u64,
    pub mu: f64,
    pub omega_c: f64,
    /// t_m = 2πm/ω_c.
    pub t_m: f64,
    /// m μ², equal to 1/16 for the maximally entangling gate.
    pub phase: f64,
}

impl GatePlan {
    pub fn new(m: u64, mu: f64, omega_c: f64) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidSpec("stroboscopic index m must be >= 1".into()));
        }
        Ok(GatePlan { m, mu, omega_c, t_m: 2.0 * PI * m as f64 / omega_c, phase: m as f64 * mu * mu })
    }
}

/// m = 1/(16μ²) and t_max = π/(8 g_eff) with g_eff = μ²ω_c.
pub fn gate_time(mu: f64, omega_c: f64) -> Result<GatePlan> {
    if !(mu > 0.0) || !(omega_c > 0.0) {
        return Err(Error::InvalidSpec(format!("need mu > 0 and omega_c > 0, got {mu}, {omega_c}")));
    }
    let x = 1.0 / (16.0 * mu * mu);
    let m = x.round();
    if (x - m).abs() > 1e-9 || m < 1.0 {
        let mut nearest = Vec::new();
        for k in [x.floor(), x.ceil()] {
            let k = k.max(1.0);
            let cand = 1.0 / (4.0 * k.sqrt());
            if !nearest.contains(&cand) {
                nearest.push(cand);
            }
        }
        return Err(Error::Commensurability { mu, nearest });
    }
    GatePlan::new(m as u64, mu, omega_c)
}

/// H = ω_c a†a + (ω_q/2)S^z + g S⊗(a + a†).
pub fn hamiltonian(spec: &SystemSpec) -> Operator {
    let h = spec.hilbert;
    let a = hilbert::annihilator(h.n_max).expect("validated cutoff").into_matrix();
    let n = a.adjoint() * &a;
    let x = &a + a.adjoint();
    let s = spec.qubit_spin();
    let sz = hilbert::qubit_total(Axis::Z, h.n_qubits);
    let mut m = linalg::kron(&linalg::identity(h.qubit_dim()), &n) * c(spec.omega_c, 0.0);
    if spec.omega_q != 0.0 {
        m += linalg::kron(&sz, &linalg::identity(h.fock_dim())) * c(spec.omega_q / 2.0, 0.0);
    }
    m += linalg::kron(&s, &x) * c(spec.g, 0.0);
    Operator::from_parts(Layout::Joint(h), m)
}

/// U = exp[μ S (a − a†)].
pub fn polaron_unitary(spec: &SystemSpec) -> Operator {
    let h = spec.hilbert;
    let a = hilbert::annihilator(h.n_max).expect("validated cutoff").into_matrix();
    let s = spec.qubit_spin();
    // μS(a − a†) = −iX with X = iμS(a − a†) hermitian.
    let x = linalg::kron(&s, &(&a - a.adjoint())) * c(0.0, spec.mu());
    Operator::from_parts(Layout::Joint(h), linalg::expm_hermitian(&x, 1.0))
}

/// A propagator together with how it was obtained.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub operator: Operator,
    pub method: PropagatorMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagatorMethod {
    /// Closed polaron-frame form, exact.
    Polaron,
    /// Dense exponentiation of H, used when the polaron form is not exact.
    Dense,
    /// Stroboscopic formula applied although ω_q ≠ 0.
    Approximate,
}

/// exp[i 2πm μ² S²] on the qubit register.
pub fn stroboscopic_propagator(spec: &SystemSpec, m: u64) -> Result<Propagator> {
    if m < 1 {
        return Err(Error::InvalidSpec("stroboscopic index m must be >= 1".into()));
    }
    let s = spec.qubit_spin();
    let s2 = &s * &s;
    let w = 2.0 * PI * m as f64 * spec.mu() * spec.mu();
    let u = linalg::hermitian_fn(&s2, |lam| C64::from_polar(1.0, w * lam));
    let exact = spec.omega_q == 0.0;
    Ok(Propagator {
        operator: Operator::from_parts(Layout::Qubits(spec.hilbert.n_qubits), u),
        method: if exact { PropagatorMethod::Polaron } else { PropagatorMethod::Approximate },
    })
}

/// U_id^x(m, μ) = exp[i 4πm μ² σ₁^x σ₂^x].
pub fn ideal_gate_xx(m: u64, mu: f64) -> Operator {
    let xx = linalg::kron(&hilbert::pauli_matrix(Axis::X), &hilbert::pauli_matrix(Axis::X));
    let theta = 4.0 * PI * m as f64 * mu * mu;
    let u = linalg::identity(4) * c(theta.cos(), 0.0) + xx * c(0.0, theta.sin());
    Operator::from_parts(Layout::Qubits(2), u)
}

/// e^{−iHt} on the joint space, in closed polaron form whenever that form is exact.
pub fn exact_propagator(spec: &SystemSpec, t: f64) -> Propagator {
    let h = spec.hilbert;
    if spec.omega_q != 0.0 && !spec.spin_commutes_with_splitting() {
        return Propagator {
            operator: Operator::from_parts(Layout::Joint(h), linalg::expm_hermitian(hamiltonian(spec).matrix(), t)),
            method: PropagatorMethod::Dense,
        };
    }
    let u = polaron_unitary(spec).into_matrix();
    let s = spec.qubit_spin();
    let sz = hilbert::qubit_total(Axis::Z, h.n_qubits);
    // Qubit factor exp[i μ²ω_c t S² − i (ω_q/2) t S^z]; both terms commute.
    let gen = (&s * &s) * c(-spec.mu() * spec.mu() * spec.omega_c, 0.0) + sz * c(spec.omega_q / 2.0, 0.0);
    let q = linalg::expm_hermitian(&gen, t);
    let free: Vec<C64> = (0..=h.n_max).map(|n| C64::from_polar(1.0, -spec.omega_c * t * n as f64)).collect();
    let mut mid = linalg::kron(&q, &linalg::identity(h.fock_dim()));
    for j in 0..mid.ncols() {
        for i in 0..mid.nrows() {
            mid[(i, j)] *= free[h.fock_of(i)];
        }
    }
    let op = &u * mid * u.adjoint();
    Propagator { operator: Operator::from_parts(Layout::Joint(h), op), method: PropagatorMethod::Polaron }
}

/// Instantaneous pulse U_α(φ) = exp[−iφ/2 Σ_i σ_i^α] on the qubit register.
pub fn pulse(axis: Axis, phi: f64, n_qubits: usize) -> Mat {
    let single = linalg::identity(2) * c((phi / 2.0).cos(), 0.0) + hilbert::pauli_matrix(axis) * c(0.0, -(phi / 2.0).sin());
    let mut out = Mat::identity(1, 1);
    for _ in 0..n_qubits {
        out = linalg::kron(&out, &single);
    }
    out
}

/// U_z(−φ) U_x(π) e^{−iHt_m} U_x(π) e^{−iHt_m} with φ = 16mπμ², joint space.
pub fn cphase_sequence(spec: &SystemSpec, m: u64) -> Result<Operator> {
    if m < 1 {
        return Err(Error::InvalidSpec("stroboscopic index m must be >= 1".into()));
    }
    if !spec.is_longitudinal() {
        return Err(Error::UnsupportedPattern("controlled phase needs purely longitudinal coupling".into()));
    }
    let h = spec.hilbert;
    let plan = GatePlan::new(m, spec.mu(), spec.omega_c)?;
    let phi = 16.0 * m as f64 * PI * spec.mu() * spec.mu();
    let step = exact_propagator(spec, plan.t_m).operator.into_matrix();
    let ux = hilbert::embed_qubits(&pulse(Axis::X, PI, h.n_qubits), h).into_matrix();
    let uz = hilbert::embed_qubits(&pulse(Axis::Z, -phi, h.n_qubits), h).into_matrix();
    let total = uz * &ux * &step * ux * step;
    Ok(Operator::from_parts(Layout::Joint(h), total))
}

/// Splits a joint operator O ≈ Q ⊗ 1 into Q and the max-norm residual ‖O − Q⊗1‖.
pub fn qubit_factor(op: &Operator) -> Result<(Operator, f64)> {
    let Layout::Joint(h) = op.layout() else {
        return Err(Error::LayoutMismatch("qubit_factor needs a joint operator".into()));
    };
    let dq = h.qubit_dim();
    let m = op.matrix();
    let q = Mat::from_fn(dq, dq, |a, b| m[(h.index(a, 0), h.index(b, 0))]);
    let full = linalg::kron(&q, &linalg::identity(h.fock_dim()));
    let resid = linalg::max_diff(m, &full);
    Ok((Operator::from_parts(Layout::Qubits(h.n_qubits), q), resid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{spin_vector, target_bell, Spin};

    #[test]
    fn gate_time_values() {
        let p = gate_time(0.25, 1.0).unwrap();
        assert_eq!(p.m, 1);
        assert!((p.t_m - 2.0 * PI).abs() < 1e-12);
        assert_eq!(gate_time(0.125, 1.0).unwrap().m, 4);
        assert_eq!(gate_time(1.0 / 16.0, 1.0).unwrap().m, 16);
        match gate_time(0.3, 1.0) {
            Err(Error::Commensurability { nearest, .. }) => assert!(nearest.contains(&0.25)),
            other => panic!("expected commensurability error, got {other:?}"),
        }
        match gate_time(0.1, 1.0) {
            Err(Error::Commensurability { nearest, .. }) => {
                assert_eq!(nearest.len(), 2);
                for mu in nearest {
                    assert!(gate_time(mu, 1.0).is_ok());
                }
            }
            other => panic!("expected commensurability error, got {other:?}"),
        }
        assert!(GatePlan::new(0, 0.25, 1.0).is_err());
    }

    #[test]
    fn free_hamiltonian_spectrum() {
        let spec = SystemSpec::transversal(0.0, 0.0, 6).unwrap();
        let w = linalg::eigvals_hermitian(hamiltonian(&spec).matrix());
        let mut want: Vec<f64> = (0..4).flat_map(|_| (0..=6).map(|n| n as f64)).collect();
        want.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn displaced_oscillator_spectrum() {
        // One qubit, η^z = 1: levels n ω_c − g²/ω_c, each twice (S = ±1).
        let mu = 0.125;
        let spec = SystemSpec::new(1.0, 0.0, mu, pattern(Axis::Z, 1), HilbertSpec::new(1, 40).unwrap()).unwrap();
        let w = linalg::eigvals_hermitian(hamiltonian(&spec).matrix());
        for n in 0..=20 {
            let want = n as f64 - mu * mu;
            assert!((w[2 * n] - want).abs() < 1e-6, "n={n}: {} vs {want}", w[2 * n]);
            assert!((w[2 * n + 1] - want).abs() < 1e-6);
        }
    }

    #[test]
    fn transversal_ground_energy() {
        let mu = 0.125;
        let spec = SystemSpec::transversal(mu, 0.0, 40).unwrap();
        let w = linalg::eigvals_hermitian(hamiltonian(&spec).matrix());
        assert!((w[0] + 4.0 * mu * mu).abs() < 1e-6);
    }

    #[test]
    fn polaron_identities() {
        let spec0 = SystemSpec::transversal(0.0, 0.0, 10).unwrap();
        assert!(linalg::max_diff(polaron_unitary(&spec0).matrix(), &linalg::identity(44)) < 1e-12);

        let spec = SystemSpec::transversal(0.125, 0.0, 30).unwrap();
        let h = spec.hilbert;
        let u = polaron_unitary(&spec).into_matrix();
        let a = hilbert::embed_resonator(hilbert::annihilator(h.n_max).unwrap().matrix(), h).into_matrix();
        let s = hilbert::embed_qubits(&spec.qubit_spin(), h).into_matrix();
        let lhs = &u * &a * u.adjoint();
        let rhs = &a + &s * c(spec.mu(), 0.0);
        // Truncation errors leak down from n_max; eight levels of margin suffice here.
        for i in 0..h.dim() {
            for j in 0..h.dim() {
                if h.fock_of(i) <= h.n_max - 8 && h.fock_of(j) <= h.n_max - 8 {
                    assert!((lhs[(i, j)] - rhs[(i, j)]).norm() < 1e-6);
                }
            }
        }
        assert!(linalg::max_norm(&(&u * &s - &s * &u)) < 1e-10);
    }

    #[test]
    fn stroboscopic_gate_is_xx_gate() {
        let spec = SystemSpec::transversal(0.25, 0.0, 4).unwrap();
        let p = stroboscopic_propagator(&spec, 1).unwrap();
        assert_eq!(p.method, PropagatorMethod::Polaron);
        let u = ideal_gate_xx(1, 0.25);
        assert!(linalg::phase_free_distance(p.operator.matrix(), u.matrix()) < 1e-12);
        let psi = u.matrix() * spin_vector(&[Spin::Up, Spin::Down]);
        assert!((psi - target_bell()).norm() < 1e-12);

        let spec0 = SystemSpec::transversal(0.0, 0.0, 4).unwrap();
        let p0 = stroboscopic_propagator(&spec0, 3).unwrap();
        assert!(linalg::max_diff(p0.operator.matrix(), &linalg::identity(4)) < 1e-14);
        assert!(stroboscopic_propagator(&spec, 0).is_err());
        let approx = SystemSpec::transversal(0.25, 0.1, 4).unwrap();
        assert_eq!(stroboscopic_propagator(&approx, 1).unwrap().method, PropagatorMethod::Approximate);
    }

    #[test]
    fn longitudinal_relative_phase() {
        let (m, mu) = (3u64, 0.1);
        let spec = SystemSpec::longitudinal(mu, 0.0, 4).unwrap();
        let u = stroboscopic_propagator(&spec, m).unwrap().operator.into_matrix();
        let phi = 4.0 * 2.0 * PI * m as f64 * mu * mu;
        assert!(linalg::max_diff(&u, &Mat::from_diagonal(&u.diagonal())) < 1e-14);
        let rel = u[(0, 0)] / u[(1, 1)];
        assert!((rel - C64::from_polar(1.0, phi)).norm() < 1e-12);
        assert!((u[(3, 3)] - u[(0, 0)]).norm() < 1e-12);
        assert!((u[(2, 2)] - u[(1, 1)]).norm() < 1e-12);
    }

    #[test]
    fn xx_gate_amplitudes() {
        let psi = ideal_gate_xx(1, 0.125).matrix() * spin_vector(&[Spin::Up, Spin::Down]);
        let th = PI / 16.0;
        assert!((psi[1] - c(th.cos(), 0.0)).norm() < 1e-14);
        assert!((psi[2] - c(0.0, th.sin())).norm() < 1e-14);
        let u5 = ideal_gate_xx(5, 0.25).into_matrix();
        let u1 = ideal_gate_xx(1, 0.25).into_matrix();
        assert!(linalg::max_diff(&u5, &(-u1)) < 1e-12);
        assert!(ideal_gate_xx(2, 0.2).is_unitary());
    }

    #[test]
    fn exact_propagator_at_stroboscopic_time() {
        let spec = SystemSpec::transversal(0.125, 0.0, 40).unwrap();
        let p0 = exact_propagator(&spec, 0.0);
        assert!(linalg::max_diff(p0.operator.matrix(), &linalg::identity(spec.hilbert.dim())) < 1e-10);
        let p = exact_propagator(&spec, 2.0 * PI);
        assert_eq!(p.method, PropagatorMethod::Polaron);
        let (q, resid) = qubit_factor(&p.operator).unwrap();
        assert!(resid < 1e-6, "residual {resid}");
        let gate = stroboscopic_propagator(&spec, 1).unwrap().operator;
        assert!(linalg::max_diff(q.matrix(), gate.matrix()) < 1e-6);
    }

    #[test]
    fn exact_propagator_matches_dense_exponential() {
        // Truncation breaks the polaron identity only near n_max; compare on low levels.
        let spec = SystemSpec::transversal(0.125, 0.0, 12).unwrap();
        let h = spec.hilbert;
        let dense_h = hamiltonian(&spec).into_matrix();
        for t in [0.7, 2.3, 5.1] {
            let p = exact_propagator(&spec, t).operator.into_matrix();
            let d = linalg::expm_hermitian(&dense_h, t);
            let mut worst: f64 = 0.0;
            for i in 0..h.dim() {
                for j in 0..h.dim() {
                    if h.fock_of(i) <= 3 && h.fock_of(j) <= 3 {
                        worst = worst.max((p[(i, j)] - d[(i, j)]).norm());
                    }
                }
            }
            assert!(worst < 1e-8, "t={t}: {worst}");
        }
    }

    #[test]
    fn dense_fallback_for_transversal_splitting() {
        let spec = SystemSpec::transversal(0.125, 0.05, 6).unwrap();
        let p = exact_propagator(&spec, 1.0);
        assert_eq!(p.method, PropagatorMethod::Dense);
        assert!(p.operator.is_unitary());
        let lspec = SystemSpec::longitudinal(0.125, 0.3, 12).unwrap();
        let pl = exact_propagator(&lspec, 1.3);
        assert_eq!(pl.method, PropagatorMethod::Polaron);
    }

    #[test]
    fn cphase_is_controlled_z() {
        // m μ² = 1/32: φ = π/2, phase e^{2iφ} = −1 on |↑↑⟩.
        let mut gates = Vec::new();
        for wq in [0.0, 0.3] {
            let spec = SystemSpec::longitudinal(0.125, wq, 30).unwrap();
            let (q, resid) = qubit_factor(&cphase_sequence(&spec, 2).unwrap()).unwrap();
            assert!(resid < 1e-6);
            let want = Mat::from_diagonal(&crate::Vector::from_vec(vec![
                c(-1.0, 0.0),
                c(1.0, 0.0),
                c(1.0, 0.0),
                c(1.0, 0.0),
            ]));
            assert!(linalg::phase_free_distance(q.matrix(), &want) < 1e-6);
            gates.push(q.into_matrix());
        }
        assert!(linalg::phase_free_distance(&gates[0], &gates[1]) < 1e-8);
        let spec = SystemSpec::longitudinal(0.125, 0.0, 10).unwrap();
        assert!(cphase_sequence(&spec, 0).is_err());
        let tspec = SystemSpec::transversal(0.125, 0.0, 10).unwrap();
        assert!(matches!(cphase_sequence(&tspec, 2), Err(Error::UnsupportedPattern(_))));
    }

    #[test]
    fn pulses() {
        let ux = pulse(Axis::X, PI, 2);
        let xx = linalg::kron(&hilbert::pauli_matrix(Axis::X), &hilbert::pauli_matrix(Axis::X));
        assert!(linalg::max_diff(&ux, &(-xx)) < 1e-14);
        assert!(linalg::max_diff(&pulse(Axis::Z, 0.0, 2), &linalg::identity(4)) < 1e-15);
    }
}
