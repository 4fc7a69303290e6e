//! Lindblad generator for the spin–resonator model and its time integration.
//!
//! The production path integrates ρ̃ = e^{iH₀t} ρ e^{−iH₀t} with H₀ = ω_c a†a by
//! fixed-step RK4. Every operator in the frame picks up the phase
//! e^{iω_c t (n_i − n_j)} on entry (i, j), so the fast free rotation never has
//! to be resolved by the step. Outputs are always reported in the lab frame.

use crate::hilbert::{self, Axis, HilbertSpec, Layout, Operator, QuantumState};
use crate::linalg;
use crate::metrics::{self, MetricRecord};
use crate::model::{self, SystemSpec};
use crate::{c, Error, Mat, Result, Vector, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Resonator damping, as quality factor or rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    /// κ = ω_c/Q; `Q = inf` disables damping.
    Q(f64),
    Kappa(f64),
}

/// Bath occupation, as temperature k_BT or directly as n̄_th.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bath {
    Temperature(f64),
    Nbar(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub damping: Damping,
    pub bath: Bath,
    /// Γ, entering as (Γ/4) Σ D[σ_i^z]; a single-qubit coherence decays at Γ/2, so Γ = 2/T₂*.
    pub gamma_phi: f64,
    /// γ₁, entering as γ₁ Σ D[σ_i^−].
    pub gamma1: f64,
    /// Use D[a + μS] and D[a† + μS] instead of D[a] and D[a†].
    pub correlated: bool,
}

impl NoiseSpec {
    pub fn new(damping: Damping, bath: Bath, gamma_phi: f64, gamma1: f64, correlated: bool) -> Result<Self> {
        let ok = match damping {
            Damping::Q(q) => q > 0.0,
            Damping::Kappa(k) => k >= 0.0 && k.is_finite(),
        } && match bath {
            Bath::Temperature(t) => t >= 0.0 && t.is_finite(),
            Bath::Nbar(n) => n >= 0.0 && n.is_finite(),
        } && gamma_phi >= 0.0
            && gamma1 >= 0.0
            && gamma_phi.is_finite()
            && gamma1.is_finite();
        if !ok {
            return Err(Error::InvalidSpec(format!("noise rates must be non-negative: {damping:?} {bath:?} {gamma_phi} {gamma1}")));
        }
        Ok(NoiseSpec { damping, bath, gamma_phi, gamma1, correlated })
    }

    /// Closed system with the resonator initially at temperature k_BT.
    pub fn noiseless(temperature: f64) -> Self {
        NoiseSpec { damping: Damping::Kappa(0.0), bath: Bath::Temperature(temperature), gamma_phi: 0.0, gamma1: 0.0, correlated: false }
    }

    pub fn with_q(temperature: f64, q: f64) -> Self {
        NoiseSpec { damping: Damping::Q(q), ..Self::noiseless(temperature) }
    }

    pub fn kappa(&self, omega_c: f64) -> f64 {
        match self.damping {
            Damping::Q(q) if q.is_infinite() => 0.0,
            Damping::Q(q) => omega_c / q,
            Damping::Kappa(k) => k,
        }
    }

    pub fn nbar(&self, omega_c: f64) -> Result<f64> {
        match self.bath {
            Bath::Temperature(t) => hilbert::thermal_occupation(omega_c, t),
            Bath::Nbar(n) => Ok(n),
        }
    }
}

/// Dissipators as (rate, L) with D[L]ρ = LρL† − ½{L†L, ρ}, dense on the joint space.
pub fn dissipators(spec: &SystemSpec, noise: &NoiseSpec) -> Result<Vec<(f64, Mat)>> {
    let h = spec.hilbert;
    let kappa = noise.kappa(spec.omega_c);
    let nbar = noise.nbar(spec.omega_c)?;
    let mut out = Vec::new();
    if kappa > 0.0 {
        let a = hilbert::embed_resonator(hilbert::annihilator(h.n_max)?.matrix(), h).into_matrix();
        let (down, up) = if noise.correlated {
            let s = hilbert::embed_qubits(&spec.qubit_spin(), h).into_matrix() * c(spec.mu(), 0.0);
            (&a + &s, a.adjoint() + s)
        } else {
            (a.clone(), a.adjoint())
        };
        out.push((kappa * (nbar + 1.0), down));
        if nbar > 0.0 {
            out.push((kappa * nbar, up));
        }
    }
    for site in 1..=h.n_qubits {
        if noise.gamma_phi > 0.0 {
            out.push((noise.gamma_phi / 4.0, hilbert::pauli(Axis::Z, site, h)?.into_matrix()));
        }
        if noise.gamma1 > 0.0 {
            out.push((noise.gamma1, hilbert::sigma_minus(site, h)?.into_matrix()));
        }
    }
    Ok(out)
}

/// Frame used by the integrator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Rotating with ω_c a†a (default).
    Rotating,
    /// Laboratory frame; stiff, intended for cross-checks at small cutoffs.
    Lab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityCheck {
    EverySample,
    FinalOnly,
    Off,
}

/// Integrator settings and runtime guards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Steps per resonator period; at least 80.
    pub steps_per_period: usize,
    pub frame: Frame,
    pub positivity: PositivityCheck,
    pub trace_tol: f64,
    pub top_fock_tol: f64,
    pub positivity_tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            steps_per_period: 160,
            frame: Frame::Rotating,
            positivity: PositivityCheck::EverySample,
            trace_tol: 1e-7,
            top_fock_tol: 1e-7,
            positivity_tol: 1e-6,
        }
    }
}

/// Worst-case integration health over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub max_step: f64,
    pub max_trace_drift: f64,
    /// Largest population (or absolute diagonal weight) found in the two top Fock levels.
    pub max_top_fock: f64,
    pub positivity_checks: usize,
}

/// Sampled evolution.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub omega_c: f64,
    pub records: Vec<MetricRecord>,
    /// Reduced qubit state at every sample.
    pub reduced: Vec<Mat>,
    pub final_state: QuantumState,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    /// Time grid in units of 2π/ω_c.
    pub fn t_over_tc(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t_over_tc).collect()
    }
}

/// Sparse row storage with, per entry, the Fock-level difference n_i − n_j.
#[derive(Clone, Debug)]
struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<C64>,
    dn: Vec<i32>,
}

impl Csr {
    fn from_dense(m: &Mat, h: HilbertSpec) -> Csr {
        let d = m.nrows();
        let mut ptr = vec![0];
        let (mut col, mut val, mut dn) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..d {
            for j in 0..d {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    col.push(j);
                    val.push(v);
                    dn.push(h.fock_of(i) as i32 - h.fock_of(j) as i32);
                }
            }
            ptr.push(col.len());
        }
        Csr { ptr, col, val, dn }
    }

    fn is_diagonal(&self) -> bool {
        (0..self.ptr.len() - 1).all(|i| self.col[self.ptr[i]..self.ptr[i + 1]].iter().all(|&j| j == i))
    }

    /// Entry values at time t in the chosen frame.
    fn values_at(&self, phases: &Phases) -> Vec<C64> {
        self.val.iter().zip(&self.dn).map(|(v, &k)| v * phases.get(k)).collect()
    }
}

/// Table of e^{iω_c t k} for the Fock differences present.
struct Phases {
    offset: i32,
    table: Vec<C64>,
}

impl Phases {
    fn new(omega_t: f64, max_dn: i32, frame: Frame) -> Phases {
        let table = (-max_dn..=max_dn)
            .map(|k| match frame {
                Frame::Rotating => C64::from_polar(1.0, omega_t * k as f64),
                Frame::Lab => c(1.0, 0.0),
            })
            .collect();
        Phases { offset: max_dn, table }
    }

    fn get(&self, k: i32) -> C64 {
        self.table[(k + self.offset) as usize]
    }
}

/// out[:, j] = A ρ[:, j] for every column (column-major storage).
fn left_mul(a: &Csr, vals: &[C64], rho: &[C64], out: &mut [C64], d: usize) {
    for j in 0..d {
        let x = &rho[j * d..(j + 1) * d];
        let y = &mut out[j * d..(j + 1) * d];
        for i in 0..d {
            let mut s = C64::new(0.0, 0.0);
            for e in a.ptr[i]..a.ptr[i + 1] {
                s += vals[e] * x[a.col[e]];
            }
            y[i] = s;
        }
    }
}

/// out += X A† (column-major storage).
fn right_mul_adjoint_add(a: &Csr, vals: &[C64], x: &[C64], out: &mut [C64], d: usize, scale: C64) {
    for j in 0..d {
        let y = j * d;
        for e in a.ptr[j]..a.ptr[j + 1] {
            let w = vals[e].conj() * scale;
            let k = a.col[e] * d;
            for i in 0..d {
                out[y + i] += w * x[k + i];
            }
        }
    }
}

/// Generator of the master equation in a given frame.
pub(crate) struct Generator {
    h: HilbertSpec,
    omega_c: f64,
    frame: Frame,
    max_dn: i32,
    /// K = H_I − (i/2) Σ c L†L.
    k: Csr,
    /// √c L for non-diagonal jumps.
    jumps: Vec<Csr>,
    /// Σ c l_i conj(l_j) for diagonal jumps, column-major.
    diag_weight: Option<Vec<C64>>,
    max_rate: f64,
}

impl Generator {
    pub(crate) fn new(spec: &SystemSpec, noise: &NoiseSpec, frame: Frame) -> Result<Generator> {
        let h = spec.hilbert;
        let d = h.dim();
        let mut k = model::hamiltonian(spec).into_matrix();
        if frame == Frame::Rotating {
            for i in 0..d {
                k[(i, i)] -= c(spec.omega_c * h.fock_of(i) as f64, 0.0);
            }
        }
        let mut jumps = Vec::new();
        let mut diag: Option<Vec<C64>> = None;
        let mut max_rate = 0.0;
        for (rate, l) in dissipators(spec, noise)? {
            let ldl = l.adjoint() * &l;
            k -= ldl * c(0.0, 0.5 * rate);
            let one = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let rows = (0..d).map(|i| l.row(i).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
            let cols = (0..d).map(|j| l.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
            max_rate += rate * (rows * cols).max(one * one);
            let scaled = l * c(rate.sqrt(), 0.0);
            let csr = Csr::from_dense(&scaled, h);
            if csr.is_diagonal() {
                let w = diag.get_or_insert_with(|| vec![C64::new(0.0, 0.0); d * d]);
                let dv = scaled.diagonal();
                for j in 0..d {
                    for i in 0..d {
                        w[i + j * d] += dv[i] * dv[j].conj();
                    }
                }
            } else {
                jumps.push(csr);
            }
        }
        let k = Csr::from_dense(&k, h);
        let max_dn = k.dn.iter().chain(jumps.iter().flat_map(|j| j.dn.iter())).map(|x| x.abs()).max().unwrap_or(0);
        Ok(Generator { h, omega_c: spec.omega_c, frame, max_dn, k, jumps, diag_weight: diag, max_rate })
    }

    pub(crate) fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Largest dissipative rate, Σ c ‖L‖².
    pub(crate) fn max_rate(&self) -> f64 {
        self.max_rate
    }

    /// out = L_t(x) in this generator's frame. With `hermitian` set, x must be hermitian.
    pub(crate) fn apply(&self, t: f64, x: &[C64], out: &mut [C64], work: &mut [C64], hermitian: bool) {
        let d = self.dim();
        let ph = Phases::new(self.omega_c * t, self.max_dn, self.frame);
        let kv = self.k.values_at(&ph);
        left_mul(&self.k, &kv, x, work, d);
        let mi = c(0.0, -1.0);
        if hermitian {
            // −i(Kx − xK†) = −i(M − M†) with M = Kx and x = x†.
            for j in 0..d {
                for i in 0..d {
                    out[i + j * d] = mi * (work[i + j * d] - work[j + i * d].conj());
                }
            }
        } else {
            for v in 0..d * d {
                out[v] = mi * work[v];
            }
            right_mul_adjoint_add(&self.k, &kv, x, out, d, c(0.0, 1.0));
        }
        for jump in &self.jumps {
            let jv = jump.values_at(&ph);
            left_mul(jump, &jv, x, work, d);
            right_mul_adjoint_add(jump, &jv, work, out, d, c(1.0, 0.0));
        }
        if let Some(w) = &self.diag_weight {
            for v in 0..d * d {
                out[v] += w[v] * x[v];
            }
        }
    }

    /// Maps a matrix between frames: sign = −1 rotating → lab, +1 lab → rotating.
    pub(crate) fn change_frame(&self, t: f64, x: &mut [C64], sign: f64) {
        if self.frame == Frame::Lab {
            return;
        }
        let d = self.dim();
        let df = self.h.fock_dim() as i32;
        let ph = Phases::new(sign * self.omega_c * t, df, Frame::Rotating);
        for j in 0..d {
            let nj = self.h.fock_of(j) as i32;
            for i in 0..d {
                x[i + j * d] *= ph.get(self.h.fock_of(i) as i32 - nj);
            }
        }
    }
}

fn to_vec(m: &Mat) -> Vec<C64> {
    m.as_slice().to_vec()
}

fn to_mat(v: &[C64], d: usize) -> Mat {
    Mat::from_column_slice(d, d, v)
}

fn hermitize_slice(x: &mut [C64], d: usize) {
    for j in 0..d {
        for i in 0..j {
            let v = 0.5 * (x[i + j * d] + x[j + i * d].conj());
            x[i + j * d] = v;
            x[j + i * d] = v.conj();
        }
        x[j + j * d].im = 0.0;
    }
}

fn check_spec(spec: &SystemSpec, layout: Layout) -> Result<()> {
    if layout != Layout::Joint(spec.hilbert) {
        return Err(Error::LayoutMismatch(format!("state layout {layout:?} does not match {:?}", spec.hilbert)));
    }
    Ok(())
}

/// dρ/dt = −i[H, ρ] + dissipators, lab frame.
pub fn lindblad_rhs(rho: &QuantumState, spec: &SystemSpec, noise: &NoiseSpec) -> Result<Operator> {
    check_spec(spec, rho.layout())?;
    let gen = Generator::new(spec, noise, Frame::Lab)?;
    let d = gen.dim();
    let x = to_vec(rho.matrix());
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    let mut work = out.clone();
    gen.apply(0.0, &x, &mut out, &mut work, true);
    Ok(Operator::from_parts(rho.layout(), to_mat(&out, d)))
}

/// Vectorized lab-frame generator L with vec(dρ/dt) = L vec(ρ), column stacking.
#[derive(Clone, Debug)]
pub struct Superoperator {
    pub dim: usize,
    pub matrix: Mat,
}

/// Default cap on d for [`superoperator`].
pub const SUPEROPERATOR_DIM_LIMIT: usize = 64;

pub fn superoperator(spec: &SystemSpec, noise: &NoiseSpec, dim_limit: usize) -> Result<Superoperator> {
    let d = spec.hilbert.dim();
    if d > dim_limit {
        return Err(Error::DimensionLimit(format!("superoperator needs d <= {dim_limit}, got {d}")));
    }
    let id = linalg::identity(d);
    let hm = model::hamiltonian(spec).into_matrix();
    let mut l = (linalg::kron(&id, &hm) - linalg::kron(&hm.transpose(), &id)) * c(0.0, -1.0);
    for (rate, op) in dissipators(spec, noise)? {
        let ldl = op.adjoint() * &op;
        let term = linalg::kron(&op.conjugate(), &op)
            - linalg::kron(&id, &ldl) * c(0.5, 0.0)
            - linalg::kron(&ldl.transpose(), &id) * c(0.5, 0.0);
        l += term * c(rate, 0.0);
    }
    Ok(Superoperator { dim: d, matrix: l })
}

impl Superoperator {
    /// exp(Lt) vec(x), reshaped.
    pub fn propagate(&self, x: &Mat, t: f64) -> Mat {
        let e = linalg::expm(&(&self.matrix * c(t, 0.0)));
        let v = e * Vector::from_column_slice(x.as_slice());
        Mat::from_column_slice(self.dim, self.dim, v.as_slice())
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        let v = &self.matrix * Vector::from_column_slice(x.as_slice());
        Mat::from_column_slice(self.dim, self.dim, v.as_slice())
    }
}

/// What the integrator is propagating.
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    State,
    /// Hermitian operator, with its trace norm as scale for the guards.
    Linear(f64),
}

struct Sample {
    t: f64,
    lab: Mat,
}

/// Fixed-step RK4 from 0 to `t_end`; calls `on_sample` with the lab-frame matrix at each sample time.
fn integrate(
    x0: &Mat,
    kind: Kind,
    t_end: f64,
    gen: &Generator,
    sample_times: &[f64],
    opts: &EvolveOptions,
    mut on_sample: impl FnMut(Sample, &mut Diagnostics) -> Result<()>,
) -> Result<(Mat, Diagnostics)> {
    if opts.steps_per_period < 80 {
        return Err(Error::InvalidConfig(format!("steps_per_period must be >= 80, got {}", opts.steps_per_period)));
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidConfig(format!("t_end must be >= 0, got {t_end}")));
    }
    for w in sample_times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidConfig("sample times must be strictly increasing".into()));
        }
    }
    if let (Some(&first), Some(&last)) = (sample_times.first(), sample_times.last()) {
        if first < 0.0 || last > t_end * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!("sample times must lie in [0, {t_end}]")));
        }
    }
    let d = gen.dim();
    let h = gen.h;
    let period = 2.0 * PI / gen.omega_c;
    let mut h_max = period / opts.steps_per_period as f64;
    if gen.max_rate() > 0.0 {
        h_max = h_max.min(0.05 / gen.max_rate());
    }
    if gen.frame == Frame::Lab {
        // Free rotation up to n_max ω_c must stay inside the RK4 stability region.
        h_max = h_max.min(1.0 / (gen.omega_c * (h.n_max as f64 + 1.0)));
    }
    let hermitian = true;
    let (scale, is_state) = match kind {
        Kind::State => (1.0, true),
        Kind::Linear(s) => (s.max(1e-300), false),
    };
    let top_levels: Vec<usize> =
        (0..h.qubit_dim()).flat_map(|q| [h.index(q, h.n_max - 1), h.index(q, h.n_max)]).collect();

    let mut y = to_vec(x0);
    let tr0: C64 = (0..d).map(|i| y[i + i * d]).sum();
    let zero = C64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; d * d], vec![zero; d * d], vec![zero; d * d], vec![zero; d * d]);
    let mut tmp = vec![zero; d * d];
    let mut work = vec![zero; d * d];
    let mut diag = Diagnostics::default();

    let mut checkpoints: Vec<f64> = sample_times.to_vec();
    if checkpoints.last().is_none_or(|&l| l < t_end) {
        checkpoints.push(t_end);
    }
    let mut t = 0.0;
    let mut next_sample = 0usize;
    for &stop in &checkpoints {
        let span = stop - t;
        let n = if span <= 0.0 { 0 } else { (span / h_max - 1e-9).ceil().max(1.0) as usize };
        let step = if n > 0 { span / n as f64 } else { 0.0 };
        for s in 0..n {
            let t0 = t + s as f64 * step;
            gen.apply(t0, &y, &mut k1, &mut work, hermitian);
            for v in 0..d * d {
                tmp[v] = y[v] + k1[v] * (0.5 * step);
            }
            gen.apply(t0 + 0.5 * step, &tmp, &mut k2, &mut work, hermitian);
            for v in 0..d * d {
                tmp[v] = y[v] + k2[v] * (0.5 * step);
            }
            gen.apply(t0 + 0.5 * step, &tmp, &mut k3, &mut work, hermitian);
            for v in 0..d * d {
                tmp[v] = y[v] + k3[v] * step;
            }
            gen.apply(t0 + step, &tmp, &mut k4, &mut work, hermitian);
            for v in 0..d * d {
                y[v] += (k1[v] + (k2[v] + k3[v]) * 2.0 + k4[v]) * (step / 6.0);
            }
            hermitize_slice(&mut y, d);

            let tr: C64 = (0..d).map(|i| y[i + i * d]).sum();
            let drift = (tr - tr0).norm() / scale;
            if !drift.is_finite() || drift > opts.trace_tol {
                return Err(Error::StepInstability(format!(
                    "trace drift {drift:.3e} exceeds {:.1e} at t = {:.6}",
                    opts.trace_tol,
                    t0 + step
                )));
            }
            diag.max_trace_drift = diag.max_trace_drift.max(drift);
            let top: f64 = if is_state {
                top_levels.iter().map(|&i| y[i + i * d].re).sum()
            } else {
                top_levels.iter().map(|&i| y[i + i * d].norm()).sum::<f64>() / scale
            };
            diag.max_top_fock = diag.max_top_fock.max(top);
            if top > opts.top_fock_tol {
                return Err(Error::CutoffTooSmall(format!(
                    "population {top:.3e} in the top two Fock levels (n_max = {}) at t = {:.6}",
                    h.n_max,
                    t0 + step
                )));
            }
        }
        diag.steps += n;
        diag.max_step = diag.max_step.max(step);
        t = stop;
        if next_sample < sample_times.len() && sample_times[next_sample] == stop {
            let mut lab = y.clone();
            gen.change_frame(t, &mut lab, -1.0);
            on_sample(Sample { t, lab: to_mat(&lab, d) }, &mut diag)?;
            next_sample += 1;
        }
    }
    let mut lab = y;
    gen.change_frame(t, &mut lab, -1.0);
    Ok((to_mat(&lab, d), diag))
}

/// Integrates ρ₀ to `t_end` and records metrics at `sample_times` (simulation units).
/// `target` sets the pure qubit state used for the fidelity column.
pub fn evolve(
    rho0: &QuantumState,
    t_end: f64,
    spec: &SystemSpec,
    noise: &NoiseSpec,
    sample_times: &[f64],
    target: Option<&Vector>,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    check_spec(spec, rho0.layout())?;
    if let Some(tg) = target {
        if tg.len() != spec.hilbert.qubit_dim() {
            return Err(Error::LayoutMismatch("target dimension differs from the qubit register".into()));
        }
    }
    let gen = Generator::new(spec, noise, opts.frame)?;
    let h = spec.hilbert;
    let period = 2.0 * PI / spec.omega_c;
    let mut records = Vec::with_capacity(sample_times.len());
    let mut reduced = Vec::with_capacity(sample_times.len());
    let check_every = opts.positivity == PositivityCheck::EverySample;
    let (last, mut diag) = integrate(rho0.matrix(), Kind::State, t_end, &gen, sample_times, opts, |s, diag| {
        if check_every {
            diag.positivity_checks += 1;
            if !linalg::is_psd_within(&s.lab, opts.positivity_tol) {
                return Err(Error::Diagnostics(format!(
                    "state lost positivity beyond {:.1e} at t = {:.6}",
                    opts.positivity_tol, s.t
                )));
            }
        }
        let red = metrics::partial_trace_matrix(&s.lab, h);
        records.push(MetricRecord {
            t_over_tc: s.t / period,
            fidelity: target.map(|tg| metrics::fidelity_matrix(&red, tg)),
            log_negativity: (h.n_qubits == 2).then(|| metrics::log_negativity_matrix(&red)),
            mean_n: metrics::mean_occupation_matrix(&s.lab, h),
        });
        reduced.push(red);
        Ok(())
    })?;
    if opts.positivity != PositivityCheck::Off {
        diag.positivity_checks += 1;
        if !linalg::is_psd_within(&last, opts.positivity_tol) {
            return Err(Error::Diagnostics("final state lost positivity".into()));
        }
    }
    Ok(Trajectory {
        omega_c: spec.omega_c,
        records,
        reduced,
        final_state: QuantumState::trusted(rho0.layout(), last),
        diagnostics: diag,
    })
}

/// Applies the same Lindblad flow as [`evolve`] to a hermitian, not necessarily
/// positive operator by integrating it directly.
pub fn propagate_linear(
    x: &Operator,
    t: f64,
    spec: &SystemSpec,
    noise: &NoiseSpec,
    opts: &EvolveOptions,
) -> Result<(Operator, Diagnostics)> {
    check_spec(spec, x.layout())?;
    if !linalg::is_hermitian(x.matrix(), 1e-10) {
        return Err(Error::InvalidSpec("propagate_linear needs a hermitian operator".into()));
    }
    let gen = Generator::new(spec, noise, opts.frame)?;
    let scale = linalg::trace_norm_hermitian(x.matrix());
    let (out, diag) = integrate(x.matrix(), Kind::Linear(scale), t, &gen, &[], opts, |_, _| Ok(()))?;
    Ok((Operator::from_parts(x.layout(), out), diag))
}

/// Like [`propagate_linear`] for X = P ⊗ ρ_th, whose trace norm is tr|P|.
pub(crate) fn propagate_product(
    p: &Mat,
    resonator: &Mat,
    trace_norm: f64,
    t: f64,
    gen: &Generator,
    opts: &EvolveOptions,
) -> Result<Mat> {
    let x = linalg::kron(p, resonator);
    integrate(&x, Kind::Linear(trace_norm), t, gen, &[], opts, |_, _| Ok(())).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{spin_vector, Spin};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(d: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = linalg::zeros(d);
        for k in 0..3 {
            let v = metrics::haar_state(&mut rng, d);
            m += linalg::projector(&v) * c([0.5, 0.3, 0.2][k], 0.0);
        }
        m
    }

    fn initial(spec: &SystemSpec, spins: &[Spin], temperature: f64) -> QuantumState {
        let q = QuantumState::pure(Layout::Qubits(spec.hilbert.n_qubits), &spin_vector(spins)).unwrap();
        let th = hilbert::thermal_state(spec.omega_c, temperature, spec.hilbert.n_max).unwrap();
        QuantumState::product(&q, &th.state).unwrap()
    }

    fn noisy() -> NoiseSpec {
        NoiseSpec::new(Damping::Q(50.0), Bath::Temperature(1.0), 0.02, 0.01, false).unwrap()
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::new(Damping::Q(0.0), Bath::Nbar(1.0), 0.0, 0.0, false).is_err());
        assert!(NoiseSpec::new(Damping::Kappa(-1.0), Bath::Nbar(1.0), 0.0, 0.0, false).is_err());
        assert!(NoiseSpec::new(Damping::Kappa(1.0), Bath::Temperature(-1.0), 0.0, 0.0, false).is_err());
        let n = NoiseSpec::with_q(2.0, 1e4);
        assert!((n.kappa(1.0) - 1e-4).abs() < 1e-18);
        assert_eq!(NoiseSpec::with_q(2.0, f64::INFINITY).kappa(1.0), 0.0);
    }

    #[test]
    fn rhs_reduces_to_commutator() {
        let spec = SystemSpec::transversal(0.2, 0.1, 4).unwrap();
        let rho = QuantumState::trusted(Layout::Joint(spec.hilbert), random_state(spec.hilbert.dim(), 1));
        let got = lindblad_rhs(&rho, &spec, &NoiseSpec::noiseless(1.0)).unwrap().into_matrix();
        let hm = model::hamiltonian(&spec).into_matrix();
        let want = (&hm * rho.matrix() - rho.matrix() * &hm) * c(0.0, -1.0);
        assert!(linalg::max_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn dephasing_coherence_rate() {
        // (Γ/4)(D[σ₁^z] + D[σ₂^z]) on |↑↓⟩⟨↓↑|: both sites flip sign, rate 2·(Γ/4)·2 = Γ.
        let spec = SystemSpec::transversal(0.0, 0.0, 1).unwrap();
        let h = spec.hilbert;
        let gamma = 0.3;
        let noise = NoiseSpec::new(Damping::Kappa(0.0), Bath::Nbar(0.0), gamma, 0.0, false).unwrap();
        let gen = Generator::new(&spec, &noise, Frame::Lab).unwrap();
        let d = h.dim();
        let (i, j) = (h.index(1, 0), h.index(2, 0));
        let mut x = vec![C64::new(0.0, 0.0); d * d];
        x[i + j * d] = c(1.0, 0.0);
        x[j + i * d] = c(1.0, 0.0);
        let mut out = x.clone();
        let mut work = x.clone();
        gen.apply(0.0, &x, &mut out, &mut work, true);
        assert!((out[i + j * d] + c(gamma, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rhs_traceless_and_hermitian() {
        let spec = SystemSpec::transversal(0.2, 0.1, 4).unwrap();
        let rho = QuantumState::trusted(Layout::Joint(spec.hilbert), random_state(spec.hilbert.dim(), 2));
        for correlated in [false, true] {
            let noise = NoiseSpec { correlated, ..noisy() };
            let r = lindblad_rhs(&rho, &spec, &noise).unwrap();
            assert!(r.trace().norm() < 1e-12);
            assert!(linalg::is_hermitian(r.matrix(), 1e-12));
        }
    }

    #[test]
    fn thermal_fixed_point() {
        let spec = SystemSpec::transversal(0.0, 0.0, 30).unwrap();
        let noise = NoiseSpec::new(Damping::Q(20.0), Bath::Temperature(2.0), 0.0, 0.0, false).unwrap();
        let th = hilbert::thermal_state(1.0, 2.0, 30).unwrap();
        let q = QuantumState::pure(Layout::Qubits(2), &spin_vector(&[Spin::Up, Spin::Down])).unwrap();
        let rho = QuantumState::product(&q, &th.state).unwrap();
        let r = lindblad_rhs(&rho, &spec, &noise).unwrap();
        // Detailed balance holds except at the truncation edge, where the weight is ~1e-7.
        assert!(linalg::max_norm(r.matrix()) < 1e-6, "{}", linalg::max_norm(r.matrix()));
        let red = metrics::partial_trace_matrix(r.matrix(), spec.hilbert);
        assert!(linalg::max_norm(&red) < 1e-15);
    }

    #[test]
    fn superoperator_matches_rhs() {
        let spec = SystemSpec::transversal(0.2, 0.1, 3).unwrap();
        let rho = QuantumState::trusted(Layout::Joint(spec.hilbert), random_state(spec.hilbert.dim(), 3));
        for correlated in [false, true] {
            let noise = NoiseSpec { correlated, ..noisy() };
            let l = superoperator(&spec, &noise, SUPEROPERATOR_DIM_LIMIT).unwrap();
            let direct = lindblad_rhs(&rho, &spec, &noise).unwrap().into_matrix();
            assert!(linalg::max_diff(&l.apply(rho.matrix()), &direct) < 1e-12);
        }
        let big = SystemSpec::transversal(0.2, 0.0, 20).unwrap();
        assert!(matches!(superoperator(&big, &noisy(), 64), Err(Error::DimensionLimit(_))));
    }

    #[test]
    fn superoperator_contraction_and_stationary_state() {
        let spec = SystemSpec::new(1.0, 0.0, 0.0, model::pattern(Axis::X, 1), HilbertSpec::new(1, 5).unwrap()).unwrap();
        let noise = NoiseSpec::new(Damping::Q(10.0), Bath::Nbar(0.05), 0.05, 0.0, false).unwrap();
        let l = superoperator(&spec, &noise, 64).unwrap();
        // The flow is a contraction in trace norm.
        let x0 = random_state(12, 9) - random_state(12, 10);
        let n0 = linalg::trace_norm_hermitian(&x0);
        for t in [0.5, 2.0, 8.0] {
            assert!(linalg::trace_norm_hermitian(&l.propagate(&x0, t)) <= n0 + 1e-12);
        }
        // Null vector: thermal resonator ⊗ diagonal qubit state.
        let th = hilbert::thermal_state_nbar(0.05, 5).unwrap();
        let mut q = linalg::zeros(2);
        q[(0, 0)] = c(0.7, 0.0);
        q[(1, 1)] = c(0.3, 0.0);
        let x = linalg::kron(&q, th.state.matrix());
        // Truncated thermal state is stationary except for the boundary term.
        let resid = l.apply(&x);
        assert!(linalg::max_norm(&resid) < 2e-3 * th.state.matrix()[(5, 5)].re.max(1e-3));
        let mut coh = x.clone();
        coh[(0, 6)] = c(0.1, 0.0);
        coh[(6, 0)] = c(0.1, 0.0);
        assert!(linalg::max_norm(&l.apply(&coh)) > 1e-3);
    }

    fn trace_distance_after(spec: &SystemSpec, noise: &NoiseSpec, rho0: &QuantumState, t: f64, opts: &EvolveOptions) -> f64 {
        let tr = evolve(rho0, t, spec, noise, &[], None, opts).unwrap();
        let sup = superoperator(spec, noise, 64).unwrap();
        let want = sup.propagate(rho0.matrix(), t);
        linalg::trace_distance(tr.final_state.matrix(), &want)
    }

    #[test]
    fn evolve_matches_superoperator_exponential() {
        let spec = SystemSpec::transversal(0.15, 0.07, 5).unwrap();
        let noise = NoiseSpec::new(Damping::Q(40.0), Bath::Nbar(0.2), 0.02, 0.01, true).unwrap();
        let rho0 = initial(&spec, &[Spin::Up, Spin::Down], 0.0);
        // Guards off: this compares integrators on a deliberately small space.
        let opts = EvolveOptions { steps_per_period: 400, positivity: PositivityCheck::Off, top_fock_tol: 1.0, ..Default::default() };
        for t in [1.3, 4.0] {
            let dist = trace_distance_after(&spec, &noise, &rho0, t, &opts);
            assert!(dist < 1e-8, "t={t}: {dist:e}");
        }
    }

    #[test]
    fn rotating_and_lab_frames_agree() {
        let spec = SystemSpec::transversal(0.125, 0.0, 8).unwrap();
        let noise = NoiseSpec::new(Damping::Q(100.0), Bath::Nbar(0.1), 0.01, 0.0, false).unwrap();
        let rho0 = initial(&spec, &[Spin::Up, Spin::Down], 0.0);
        let rot = EvolveOptions { positivity: PositivityCheck::Off, ..Default::default() };
        let lab = EvolveOptions { frame: Frame::Lab, steps_per_period: 2000, ..rot.clone() };
        let a = evolve(&rho0, 3.0, &spec, &noise, &[], None, &rot).unwrap();
        let b = evolve(&rho0, 3.0, &spec, &noise, &[], None, &lab).unwrap();
        assert!(linalg::trace_distance(a.final_state.matrix(), b.final_state.matrix()) < 1e-7);
    }

    #[test]
    fn noiseless_evolution_matches_exact_propagator() {
        let spec = SystemSpec::transversal(0.125, 0.0, 40).unwrap();
        let noise = NoiseSpec::noiseless(1.0);
        let rho0 = initial(&spec, &[Spin::Up, Spin::Down], 1.0);
        let t = 2.0 * PI;
        let tr = evolve(&rho0, t, &spec, &noise, &[t], None, &EvolveOptions::default()).unwrap();
        let u = model::exact_propagator(&spec, t).operator.into_matrix();
        let want = &u * rho0.matrix() * u.adjoint();
        let dist = linalg::trace_distance(tr.final_state.matrix(), &want);
        assert!(dist < 1e-6, "{dist:e}");
        assert!(tr.diagnostics.max_trace_drift < 1e-7);
    }

    #[test]
    fn pure_dephasing_decay() {
        let spec = SystemSpec::transversal(0.0, 0.0, 2).unwrap();
        let gamma = 0.05;
        let noise = NoiseSpec::new(Damping::Kappa(0.0), Bath::Nbar(0.0), gamma, 0.0, false).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = Vector::zeros(4);
        psi[1] = c(s, 0.0);
        psi[2] = c(s, 0.0);
        let q = QuantumState::pure(Layout::Qubits(2), &psi).unwrap();
        let vac = hilbert::thermal_state(1.0, 0.0, 2).unwrap().state;
        let rho0 = QuantumState::product(&q, &vac).unwrap();
        let times: Vec<f64> = (1..=5).map(|k| k as f64 * 3.0).collect();
        let tr = evolve(&rho0, 15.0, &spec, &noise, &times, None, &EvolveOptions::default()).unwrap();
        for (t, red) in times.iter().zip(&tr.reduced) {
            assert!((red[(1, 2)].re - 0.5 * (-gamma * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn occupation_relaxes_from_vacuum() {
        let spec = SystemSpec::transversal(0.0, 0.0, 25).unwrap();
        let noise = NoiseSpec::new(Damping::Q(10.0), Bath::Temperature(1.0), 0.0, 0.0, false).unwrap();
        let rho0 = initial(&spec, &[Spin::Up, Spin::Down], 0.0);
        let times: Vec<f64> = (1..=20).map(|k| k as f64 * 5.0).collect();
        let tr = evolve(&rho0, 100.0, &spec, &noise, &times, None, &EvolveOptions::default()).unwrap();
        let nbar = hilbert::thermal_occupation(1.0, 1.0).unwrap();
        let mut prev = 0.0;
        for r in &tr.records {
            assert!(r.mean_n >= prev - 1e-12 && r.mean_n <= nbar + 1e-9);
            prev = r.mean_n;
        }
        assert!((prev - nbar * (1.0 - (-0.1f64 * 100.0).exp())).abs() < 1e-3);
    }

    #[test]
    fn propagate_linear_properties() {
        let spec = SystemSpec::transversal(0.2, 0.0, 6).unwrap();
        let noise = noisy();
        let opts = EvolveOptions { top_fock_tol: 1.0, ..Default::default() };
        let h = spec.hilbert;
        let th = hilbert::thermal_state(1.0, 0.5, 6).unwrap();
        let basis = metrics::pauli_basis_two_qubit();
        let x = Operator::from_parts(Layout::Joint(h), linalg::kron(&basis[7].1, th.state.matrix()));
        let y = Operator::from_parts(Layout::Joint(h), linalg::kron(&basis[3].1, th.state.matrix()));
        let t = 3.0;
        let (px, _) = propagate_linear(&x, t, &spec, &noise, &opts).unwrap();
        let (py, _) = propagate_linear(&y, t, &spec, &noise, &opts).unwrap();
        assert!(px.trace().norm() < 1e-9);
        let comb = x.scale(c(0.3, 0.0)).add(&y.scale(c(-1.7, 0.0))).unwrap();
        let (pc, _) = propagate_linear(&comb, t, &spec, &noise, &opts).unwrap();
        let want = px.scale(c(0.3, 0.0)).add(&py.scale(c(-1.7, 0.0))).unwrap();
        assert!(linalg::max_diff(pc.matrix(), want.matrix()) < 1e-9);

        let rho0 = initial(&spec, &[Spin::Up, Spin::Down], 0.5);
        let tr = evolve(&rho0, t, &spec, &noise, &[], None, &opts).unwrap();
        let (pr, _) = propagate_linear(rho0.operator(), t, &spec, &noise, &opts).unwrap();
        assert!(linalg::max_diff(pr.matrix(), tr.final_state.matrix()) < 1e-12);
    }

    #[test]
    fn cutoff_guard_trips() {
        // Strong coupling pushes population to the top of a tiny Fock space.
        let spec = SystemSpec::transversal(0.25, 0.0, 3).unwrap();
        let rho0 = initial(&spec, &[Spin::Up, Spin::Up], 0.0);
        let res = evolve(&rho0, 2.0, &spec, &NoiseSpec::noiseless(0.0), &[], None, &EvolveOptions::default());
        assert!(matches!(res, Err(Error::CutoffTooSmall(_))));
    }

    #[test]
    fn rejects_bad_sampling() {
        let spec = SystemSpec::transversal(0.1, 0.0, 4).unwrap();
        let rho0 = initial(&spec, &[Spin::Up, Spin::Down], 0.0);
        let n = NoiseSpec::noiseless(0.0);
        let o = EvolveOptions::default();
        assert!(evolve(&rho0, 1.0, &spec, &n, &[0.5, 0.4], None, &o).is_err());
        assert!(evolve(&rho0, 1.0, &spec, &n, &[2.0], None, &o).is_err());
        let slow = EvolveOptions { steps_per_period: 40, ..o };
        assert!(evolve(&rho0, 1.0, &spec, &n, &[], None, &slow).is_err());
    }
}
