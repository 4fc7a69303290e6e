//! Hilbert spaces, elementary operators and canonical states for N qubits
//! tensored with one truncated bosonic mode.

use crate::linalg;
use crate::{c, Error, Mat, Result, Vector, C64};
use serde::{Deserialize, Serialize};

/// Tolerance for claimed hermiticity and unitarity.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Truncated tail weight of the thermal state above which the cutoff is rejected.
pub const MAX_THERMAL_TAIL: f64 = 1e-6;

/// Thermal weight allowed in the two top Fock levels when picking a default cutoff.
/// The runtime guard during evolution is ten times looser.
pub const CUTOFF_TOP_MARGIN: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpec {
    pub n_qubits: usize,
    /// Highest retained Fock level.
    pub n_max: usize,
}

impl HilbertSpec {
    pub fn new(n_qubits: usize, n_max: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidSpec("at least one qubit is required".into()));
        }
        if n_max < 1 {
            return Err(Error::InvalidSpec(format!("fock cutoff must be >= 1, got {n_max}")));
        }
        Ok(HilbertSpec { n_qubits, n_max })
    }

    pub fn qubit_dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.qubit_dim() * self.fock_dim()
    }

    /// Joint index of qubit basis state `q` and Fock level `n`.
    pub fn index(&self, q: usize, n: usize) -> usize {
        q * self.fock_dim() + n
    }

    /// Fock level of a joint index.
    pub fn fock_of(&self, i: usize) -> usize {
        i % self.fock_dim()
    }
}

/// Tensor-factor layout of an operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    Joint(HilbertSpec),
    Qubits(usize),
    /// Resonator only, tagged with its n_max.
    Resonator(usize),
}

impl Layout {
    pub fn dim(&self) -> usize {
        match *self {
            Layout::Joint(h) => h.dim(),
            Layout::Qubits(n) => 1 << n,
            Layout::Resonator(n_max) => n_max + 1,
        }
    }
}

/// Dense operator with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    layout: Layout,
    mat: Mat,
}

impl Operator {
    pub fn new(layout: Layout, mat: Mat) -> Result<Self> {
        let d = layout.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::LayoutMismatch(format!(
                "matrix is {}x{}, layout needs {d}x{d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Operator { layout, mat })
    }

    pub(crate) fn from_parts(layout: Layout, mat: Mat) -> Self {
        debug_assert_eq!(mat.nrows(), layout.dim());
        Operator { layout, mat }
    }

    pub fn identity(layout: Layout) -> Self {
        Operator { layout, mat: linalg::identity(layout.dim()) }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    pub fn into_matrix(self) -> Mat {
        self.mat
    }

    pub fn dagger(&self) -> Operator {
        Operator { layout: self.layout, mat: self.mat.adjoint() }
    }

    pub fn is_hermitian(&self) -> bool {
        linalg::is_hermitian(&self.mat, STRUCTURE_TOL)
    }

    pub fn is_unitary(&self) -> bool {
        linalg::is_unitary(&self.mat, STRUCTURE_TOL)
    }

    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!("{:?} vs {:?}", self.layout, other.layout)));
        }
        Ok(Operator { layout: self.layout, mat: &self.mat * &other.mat })
    }

    pub fn scale(&self, z: C64) -> Operator {
        Operator { layout: self.layout, mat: &self.mat * z }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!("{:?} vs {:?}", self.layout, other.layout)));
        }
        Ok(Operator { layout: self.layout, mat: &self.mat + &other.mat })
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.mat)
    }
}

/// Density matrix satisfying hermiticity, unit trace and positivity.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    op: Operator,
}

impl QuantumState {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-9;
    pub const POSITIVITY_TOL: f64 = 1e-9;

    /// Validates all invariants, including positivity via an eigensolve.
    pub fn new(op: Operator) -> Result<Self> {
        if !linalg::is_hermitian(&op.mat, Self::HERMITIAN_TOL) {
            return Err(Error::InvalidSpec("density matrix is not hermitian".into()));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidSpec(format!("density matrix trace is {tr}")));
        }
        if !linalg::is_psd_within(&op.mat, Self::POSITIVITY_TOL) {
            return Err(Error::InvalidSpec("density matrix has a negative eigenvalue".into()));
        }
        Ok(QuantumState { op })
    }

    /// Wraps a matrix known to be a state, e.g. the output of a checked integrator.
    pub(crate) fn trusted(layout: Layout, mat: Mat) -> Self {
        QuantumState { op: Operator::from_parts(layout, mat) }
    }

    pub fn pure(layout: Layout, psi: &Vector) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("state vector has norm {norm}")));
        }
        Operator::new(layout, linalg::projector(psi)).map(|op| QuantumState { op })
    }

    /// Maximally mixed state.
    pub fn mixed(layout: Layout) -> Self {
        let d = layout.dim();
        QuantumState { op: Operator::from_parts(layout, linalg::identity(d) / c(d as f64, 0.0)) }
    }

    /// qubits ⊗ resonator.
    pub fn product(qubits: &QuantumState, resonator: &QuantumState) -> Result<Self> {
        let (Layout::Qubits(n), Layout::Resonator(n_max)) = (qubits.layout(), resonator.layout())
        else {
            return Err(Error::LayoutMismatch("product needs a qubit and a resonator state".into()));
        };
        let h = HilbertSpec::new(n, n_max)?;
        Ok(QuantumState::trusted(Layout::Joint(h), linalg::kron(qubits.matrix(), resonator.matrix())))
    }

    pub fn layout(&self) -> Layout {
        self.op.layout
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn matrix(&self) -> &Mat {
        &self.op.mat
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigvals_hermitian(&self.op.mat)[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Single-qubit spin basis state, |↑⟩ = (1,0).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

/// 2×2 Pauli matrix in the basis (|↑⟩, |↓⟩).
pub fn pauli_matrix(axis: Axis) -> Mat {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match axis {
        Axis::X => Mat::from_row_slice(2, 2, &[z, one, one, z]),
        Axis::Y => Mat::from_row_slice(2, 2, &[z, -i, i, z]),
        Axis::Z => Mat::from_row_slice(2, 2, &[one, z, z, -one]),
    }
}

/// σ⁻ = |↓⟩⟨↑|.
pub fn sigma_minus_matrix() -> Mat {
    let mut m = linalg::zeros(2);
    m[(1, 0)] = c(1.0, 0.0);
    m
}

/// Places a single-qubit matrix on `site` (1-based) of an n-qubit register.
pub fn on_site(m: &Mat, site: usize, n_qubits: usize) -> Result<Mat> {
    if site < 1 || site > n_qubits {
        return Err(Error::InvalidSpec(format!("qubit site {site} out of range 1..={n_qubits}")));
    }
    let mut out = Mat::identity(1, 1);
    for k in 1..=n_qubits {
        let f = if k == site { m.clone() } else { linalg::identity(2) };
        out = linalg::kron(&out, &f);
    }
    Ok(out)
}

/// Qubit-only operator embedded as op ⊗ 1 on the joint space.
pub fn embed_qubits(op: &Mat, spec: HilbertSpec) -> Operator {
    Operator::from_parts(Layout::Joint(spec), linalg::kron(op, &linalg::identity(spec.fock_dim())))
}

/// Resonator-only operator embedded as 1 ⊗ op on the joint space.
pub fn embed_resonator(op: &Mat, spec: HilbertSpec) -> Operator {
    Operator::from_parts(Layout::Joint(spec), linalg::kron(&linalg::identity(spec.qubit_dim()), op))
}

/// Truncated ladder operator a with ⟨n−1|a|n⟩ = √n.
pub fn annihilator(n_max: usize) -> Result<Operator> {
    if n_max < 1 {
        return Err(Error::InvalidSpec(format!("fock cutoff must be >= 1, got {n_max}")));
    }
    let mut m = linalg::zeros(n_max + 1);
    for n in 1..=n_max {
        m[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    Ok(Operator::from_parts(Layout::Resonator(n_max), m))
}

/// a†a.
pub fn number_operator(n_max: usize) -> Result<Operator> {
    annihilator(n_max)?;
    let m = Mat::from_diagonal(&Vector::from_iterator(n_max + 1, (0..=n_max).map(|n| c(n as f64, 0.0))));
    Ok(Operator::from_parts(Layout::Resonator(n_max), m))
}

/// Pauli operator σ_site^axis on the joint space.
pub fn pauli(axis: Axis, site: usize, spec: HilbertSpec) -> Result<Operator> {
    Ok(embed_qubits(&on_site(&pauli_matrix(axis), site, spec.n_qubits)?, spec))
}

/// σ⁻ on `site`, joint space.
pub fn sigma_minus(site: usize, spec: HilbertSpec) -> Result<Operator> {
    Ok(embed_qubits(&on_site(&sigma_minus_matrix(), site, spec.n_qubits)?, spec))
}

/// Σ_i σ_i^axis on the qubit register alone.
pub fn qubit_total(axis: Axis, n_qubits: usize) -> Mat {
    let mut s = linalg::zeros(1 << n_qubits);
    for i in 1..=n_qubits {
        s += on_site(&pauli_matrix(axis), i, n_qubits).expect("site in range");
    }
    s
}

/// S = Σ η_i^α σ_i^α on the qubit register alone.
pub fn qubit_collective_spin(n_qubits: usize, couplings: &[[f64; 3]]) -> Result<Mat> {
    if couplings.len() != n_qubits {
        return Err(Error::InvalidSpec(format!(
            "coupling table has {} rows for {} qubits",
            couplings.len(),
            n_qubits
        )));
    }
    let mut s = linalg::zeros(1 << n_qubits);
    for (i, row) in couplings.iter().enumerate() {
        for axis in Axis::ALL {
            let eta = row[axis.index()];
            if eta != 0.0 {
                s += on_site(&pauli_matrix(axis), i + 1, n_qubits)? * c(eta, 0.0);
            }
        }
    }
    Ok(s)
}

/// S embedded in the joint space.
pub fn collective_spin(spec: HilbertSpec, couplings: &[[f64; 3]]) -> Result<Operator> {
    Ok(embed_qubits(&qubit_collective_spin(spec.n_qubits, couplings)?, spec))
}

/// Whether the truncated displacement D(α) can be trusted at this cutoff.
pub fn displacement_reliable(alpha: C64, n_max: usize) -> bool {
    alpha.norm_sqr() + alpha.norm() <= n_max as f64 / 4.0
}

/// D(α) = exp(α a† − α* a) on the truncated mode.
pub fn displacement(alpha: C64, n_max: usize) -> Result<Operator> {
    let a = annihilator(n_max)?.into_matrix();
    if !displacement_reliable(alpha, n_max) {
        log::warn!("displacement |alpha| = {} is unreliable at n_max = {n_max}", alpha.norm());
    }
    // α a† − α* a = −i X with X = i(α a† − α* a) hermitian.
    let x = (a.adjoint() * alpha - &a * alpha.conj()) * c(0.0, 1.0);
    Ok(Operator::from_parts(Layout::Resonator(n_max), linalg::expm_hermitian(&x, 1.0)))
}

/// Bose–Einstein occupation 1/(exp(ω_c/k_BT) − 1); `temperature` is k_BT.
pub fn thermal_occupation(omega_c: f64, temperature: f64) -> Result<f64> {
    if !(omega_c > 0.0) {
        return Err(Error::InvalidSpec(format!("omega_c must be positive, got {omega_c}")));
    }
    if !(temperature >= 0.0) {
        return Err(Error::InvalidSpec(format!("temperature must be >= 0, got {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega_c / temperature).exp_m1())
}

/// Boltzmann ratio x = n̄/(n̄+1) between successive Fock populations.
fn boltzmann_ratio(nbar: f64) -> f64 {
    nbar / (nbar + 1.0)
}

/// Truncated thermal state together with the weight removed by the cutoff.
#[derive(Clone, Debug)]
pub struct ThermalState {
    pub state: QuantumState,
    pub nbar: f64,
    /// Weight of the untruncated distribution above n_max.
    pub tail_weight: f64,
}

/// Thermal resonator state with occupation `nbar`, renormalized after truncation.
pub fn thermal_state_nbar(nbar: f64, n_max: usize) -> Result<ThermalState> {
    annihilator(n_max)?;
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(Error::InvalidSpec(format!("thermal occupation must be >= 0, got {nbar}")));
    }
    let x = boltzmann_ratio(nbar);
    let tail_weight = x.powi(n_max as i32 + 1);
    if tail_weight > MAX_THERMAL_TAIL {
        return Err(Error::CutoffTooSmall(format!(
            "thermal tail weight {tail_weight:.3e} beyond n_max = {n_max} (nbar = {nbar:.4})"
        )));
    }
    let mut p: Vec<f64> = (0..=n_max).map(|n| x.powi(n as i32)).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    let m = Mat::from_diagonal(&Vector::from_iterator(n_max + 1, p.into_iter().map(|v| c(v, 0.0))));
    Ok(ThermalState { state: QuantumState::trusted(Layout::Resonator(n_max), m), nbar, tail_weight })
}

/// Thermal resonator state at temperature k_BT = `temperature`.
pub fn thermal_state(omega_c: f64, temperature: f64, n_max: usize) -> Result<ThermalState> {
    thermal_state_nbar(thermal_occupation(omega_c, temperature)?, n_max)
}

/// Population of the two top levels of an untruncated thermal distribution.
fn thermal_top_two(nbar: f64, n_max: usize) -> f64 {
    let x = boltzmann_ratio(nbar);
    (1.0 - x) * x.powi(n_max as i32 - 1) * (1.0 + x)
}

/// Default Fock cutoff: ceil(n̄ + 10√(n̄+1) + 4μN + 10), raised until the top two
/// levels hold less than [`CUTOFF_TOP_MARGIN`] of the state displaced by up to
/// 2μN. The displaced tail at n is taken as the thermal tail at (√n − 2μN)².
pub fn default_cutoff(nbar: f64, mu: f64, n_qubits: usize) -> usize {
    let base = nbar + 10.0 * (nbar + 1.0).sqrt() + 4.0 * mu * n_qubits as f64 + 10.0;
    let alpha = 2.0 * mu.abs() * n_qubits as f64;
    let mut n_max = base.ceil() as usize;
    let effective = |n: usize| ((n as f64).sqrt() - alpha).max(0.0).powi(2).floor() as usize;
    while nbar > 0.0 && thermal_top_two(nbar, effective(n_max).max(1)) > CUTOFF_TOP_MARGIN {
        n_max += 1;
    }
    n_max
}

/// Fock basis vector |n⟩.
pub fn fock_vector(n: usize, n_max: usize) -> Result<Vector> {
    if n > n_max {
        return Err(Error::InvalidSpec(format!("fock level {n} above cutoff {n_max}")));
    }
    let mut v = Vector::zeros(n_max + 1);
    v[n] = c(1.0, 0.0);
    Ok(v)
}

/// Product spin state, qubit 1 first.
pub fn spin_vector(spins: &[Spin]) -> Vector {
    let mut idx = 0usize;
    for s in spins {
        idx = 2 * idx + matches!(s, Spin::Down) as usize;
    }
    let mut v = Vector::zeros(1 << spins.len());
    v[idx] = c(1.0, 0.0);
    v
}

/// Parses a label such as "ud" (↑↓) into spins.
pub fn parse_spins(label: &str) -> Result<Vec<Spin>> {
    label
        .chars()
        .map(|ch| match ch {
            'u' | 'U' | '↑' => Ok(Spin::Up),
            'd' | 'D' | '↓' => Ok(Spin::Down),
            other => Err(Error::InvalidConfig(format!("bad spin label character {other:?}"))),
        })
        .collect()
}

/// Target Bell state (|↑↓⟩ + i|↓↑⟩)/√2.
pub fn target_bell() -> Vector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = Vector::zeros(4);
    v[1] = c(s, 0.0);
    v[2] = c(0.0, s);
    v
}
