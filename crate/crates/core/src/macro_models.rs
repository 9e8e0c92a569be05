//! Conformation-tensor models: Oldroyd-B, FENE-P and the corotational
//! variant, their homogeneous-flow integrator and free-energy functionals.

use crate::dumbbell::{FlowParams, StressTensor};
use crate::error::{Error, Result};
use crate::io::{Field, Table};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Eigenvalues are floored here before taking logarithms.
const LOG_FLOOR: f64 = 1e-14;

/// Velocity gradient κ = ∇u. Symmetric and skew parts are available through
/// [`Tensor::symmetric_part`] and [`Tensor::skew_part`].
pub type VelocityGradient<T> = Tensor<T>;

/// Symmetric positive-definite second moment A = E(X ⊗ X).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConformationTensor<T>(Tensor<T>);

impl<T: Real> ConformationTensor<T> {
    /// Checks symmetry (to 1e−12, relative to the largest entry when that
    /// exceeds one) and positive definiteness.
    pub fn new(a: Tensor<T>) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::invalid("conformation", "entries must be finite"));
        }
        let scale = T::one().max(a.frobenius_norm());
        if a.max_abs_asymmetry() > T::lit(1e-12) * scale {
            return Err(Error::invalid("conformation", "tensor is not symmetric"));
        }
        let a = a.symmetric_part();
        let min = a.min_eigenvalue();
        if !(min > T::zero()) {
            return Err(Error::NotSpd {
                min_eigenvalue: min.to_f64_lossy(),
            });
        }
        Ok(Self(a))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Tensor::identity(dim))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }
}

/// κA + Aκᵀ − (A − I)/We.
pub fn oldroyd_b_rhs<T: Real>(a: &ConformationTensor<T>, kappa: &VelocityGradient<T>, we: T) -> Tensor<T> {
    let a = a.tensor();
    upper_convected(a, kappa) - (*a - Tensor::identity(a.dim())).scale(T::one() / we)
}

/// κA + Aκᵀ − A/(We(1 − trA/b)) + I/We.
pub fn fene_p_rhs<T: Real>(a: &ConformationTensor<T>, kappa: &VelocityGradient<T>, we: T, b: T) -> Result<Tensor<T>> {
    let g = peterlin_factor(a.trace(), b)?;
    let at = a.tensor();
    Ok(upper_convected(at, kappa) - at.scale(g / we) + Tensor::identity(at.dim()).scale(T::one() / we))
}

/// WA + AWᵀ − (A − I)/We with W = (κ − κᵀ)/2.
pub fn corotational_rhs<T: Real>(a: &ConformationTensor<T>, kappa: &VelocityGradient<T>, we: T) -> Tensor<T> {
    oldroyd_b_rhs(a, &kappa.skew_part(), we)
}

/// τ = (ε/We)(A − I).
pub fn stress_from_conformation<T: Real>(a: &ConformationTensor<T>, eps: T, we: T) -> StressTensor<T> {
    StressTensor::new((*a.tensor() - Tensor::identity(a.dim())).scale(eps / we))
}

/// A = (We/ε)τ + I, the inverse of [`stress_from_conformation`].
pub fn conformation_from_stress<T: Real>(tau: &StressTensor<T>, eps: T, we: T) -> Result<ConformationTensor<T>> {
    ConformationTensor::new(tau.tensor().scale(we / eps) + Tensor::identity(tau.dim()))
}

fn upper_convected<T: Real>(a: &Tensor<T>, kappa: &Tensor<T>) -> Tensor<T> {
    let ka = *kappa * *a;
    ka + ka.transpose()
}

/// 1/(1 − trA/b), the FENE-P spring factor.
fn peterlin_factor<T: Real>(trace: T, b: T) -> Result<T> {
    let s = T::one() - trace / b;
    if s > T::zero() {
        Ok(T::one() / s)
    } else {
        Err(Error::ClosureDomain {
            trace: trace.to_f64_lossy(),
            b: b.to_f64_lossy(),
        })
    }
}

/// Constitutive law evolved by the deterministic solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MacroModel<T> {
    OldroydB,
    FeneP { b: T },
    Corotational,
}

impl<T: Real> MacroModel<T> {
    pub fn fene_p(b: T) -> Result<Self> {
        if !(b > T::zero()) || !b.is_finite() {
            return Err(Error::invalid("b", "FENE-P extensibility must be finite and > 0"));
        }
        Ok(MacroModel::FeneP { b })
    }

    pub fn rhs(&self, a: &ConformationTensor<T>, kappa: &VelocityGradient<T>, we: T) -> Result<Tensor<T>> {
        match *self {
            MacroModel::OldroydB => Ok(oldroyd_b_rhs(a, kappa, we)),
            MacroModel::FeneP { b } => fene_p_rhs(a, kappa, we, b),
            MacroModel::Corotational => Ok(corotational_rhs(a, kappa, we)),
        }
    }

    /// Stationary conformation without flow.
    pub fn equilibrium(&self, dim: usize) -> ConformationTensor<T> {
        match *self {
            MacroModel::FeneP { b } => {
                ConformationTensor(Tensor::identity(dim).scale(b / (b + T::from_usize_lossy(dim))))
            }
            _ => ConformationTensor::identity(dim),
        }
    }

    /// Polymer stress carried by A: (ε/We)(A − I), or (ε/We)(A/(1 − trA/b) − I)
    /// for FENE-P.
    pub fn stress(&self, a: &ConformationTensor<T>, eps: T, we: T) -> Result<StressTensor<T>> {
        match *self {
            MacroModel::FeneP { b } => {
                let g = peterlin_factor(a.trace(), b)?;
                Ok(StressTensor::new(
                    (a.tensor().scale(g) - Tensor::identity(a.dim())).scale(eps / we),
                ))
            }
            _ => Ok(stress_from_conformation(a, eps, we)),
        }
    }

    /// One semi-implicit step: convective terms explicit, relaxation
    /// implicit. Fails with `NotSpd` if the update loses definiteness.
    ///
    /// Oldroyd-B: B = (A + δt(κA + Aκᵀ) + (δt/We)I)/(1 + δt/We).
    /// FENE-P: B(1 + c/(1 − trB/b)) = A + δt(κA + Aκᵀ) + cI with c = δt/We;
    /// the trace equation is solved first, then B follows by scaling.
    pub fn step(&self, a: &ConformationTensor<T>, kappa: &VelocityGradient<T>, we: T, dt: T) -> Result<ConformationTensor<T>> {
        let d = a.dim();
        let c = dt / we;
        let k = match self {
            MacroModel::Corotational => kappa.skew_part(),
            _ => *kappa,
        };
        let r = *a.tensor() + upper_convected(a.tensor(), &k).scale(dt) + Tensor::identity(d).scale(c);
        let b_next = match *self {
            MacroModel::OldroydB | MacroModel::Corotational => r.scale(T::one() / (T::one() + c)),
            MacroModel::FeneP { b } => {
                let t = fene_p_trace(r.trace(), c, b)?;
                r.scale(T::one() / (T::one() + c / (T::one() - t / b)))
            }
        };
        let next = ConformationTensor::new(b_next.symmetric_part())?;
        if let MacroModel::FeneP { b } = *self {
            peterlin_factor(next.trace(), b)?;
        }
        Ok(next)
    }

    /// Free energy and its dissipation for a field of conformations.
    pub fn free_energy(
        &self,
        u_l2_sq: T,
        field: &[(ConformationTensor<T>, T)],
        params: &FlowParams<T>,
    ) -> Result<FreeEnergyRecord<T>> {
        match *self {
            MacroModel::FeneP { b } => fene_p_free_energy(u_l2_sq, field, params, b),
            _ => oldroyd_b_free_energy(u_l2_sq, field, params),
        }
    }
}

/// Root of t + c·t/(1 − t/b) = s on [0, b) by safeguarded Newton.
fn fene_p_trace<T: Real>(s: T, c: T, b: T) -> Result<T> {
    if !(s > T::zero()) {
        return Err(Error::NotSpd {
            min_eigenvalue: s.to_f64_lossy(),
        });
    }
    let f = |t: T| t + c * t / (T::one() - t / b) - s;
    let (mut lo, mut hi) = (T::zero(), b);
    let mut t = s.min(b * T::lit(0.5));
    for _ in 0..200 {
        let ft = f(t);
        if ft > T::zero() {
            hi = t;
        } else {
            lo = t;
        }
        let w = T::one() - t / b;
        let dfdt = T::one() + c / (w * w);
        let mut next = t - ft / dfdt;
        if !(next > lo && next < hi) {
            next = (lo + hi) * T::lit(0.5);
        }
        if (next - t).abs() <= T::epsilon() * T::lit(4.0) * b || hi - lo <= T::epsilon() * b {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// Kinetic and entropic free energy plus its dissipation rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEnergyRecord<T> {
    pub kinetic: T,
    pub entropic: T,
    pub total: T,
    pub dissipation: T,
}

/// tr(ln A) via symmetric eigendecomposition with floored eigenvalues.
pub fn trace_log<T: Real>(a: &Tensor<T>) -> T {
    let (vals, _) = a.symmetric_eigen();
    vals.as_slice().iter().map(|&l| l.max(T::lit(LOG_FLOOR)).ln()).sum()
}

fn require_spd<T: Real>(a: &ConformationTensor<T>) -> Result<Tensor<T>> {
    let inv = a.tensor().inverse();
    let min = a.tensor().min_eigenvalue();
    match inv {
        Some(inv) if min > T::zero() => Ok(inv),
        _ => Err(Error::NotSpd {
            min_eigenvalue: min.to_f64_lossy(),
        }),
    }
}

/// Oldroyd-B free energy (Re/2)‖u‖² + (ε/2We)Σ m·tr(A − ln A − I) and its
/// dissipation (ε/2We²)Σ m·tr(A + A⁻¹ − 2I).
pub fn oldroyd_b_free_energy<T: Real>(
    u_l2_sq: T,
    field: &[(ConformationTensor<T>, T)],
    params: &FlowParams<T>,
) -> Result<FreeEnergyRecord<T>> {
    let we = params.weissenberg;
    let mut ent = T::zero();
    let mut dis = T::zero();
    for (a, m) in field {
        let inv = require_spd(a)?;
        let d = T::from_usize_lossy(a.dim());
        ent += *m * (a.trace() - trace_log(a.tensor()) - d);
        dis += *m * (a.trace() + inv.trace() - T::lit(2.0) * d);
    }
    let kinetic = params.reynolds * T::lit(0.5) * u_l2_sq;
    let entropic = params.epsilon / (T::lit(2.0) * we) * ent;
    Ok(FreeEnergyRecord {
        kinetic,
        entropic,
        total: kinetic + entropic,
        dissipation: params.epsilon / (T::lit(2.0) * we * we) * dis,
    })
}

/// FENE-P free energy with entropic density
/// −ln det A − b ln(1 − trA/b) + (b + d) ln(b/(b + d)), zero at equilibrium,
/// and dissipation density trA/(1 − trA/b)² − 2d/(1 − trA/b) + tr A⁻¹.
pub fn fene_p_free_energy<T: Real>(
    u_l2_sq: T,
    field: &[(ConformationTensor<T>, T)],
    params: &FlowParams<T>,
    b: T,
) -> Result<FreeEnergyRecord<T>> {
    let we = params.weissenberg;
    let mut ent = T::zero();
    let mut dis = T::zero();
    for (a, m) in field {
        let inv = require_spd(a)?;
        let g = peterlin_factor(a.trace(), b)?;
        let d = T::from_usize_lossy(a.dim());
        let tr = a.trace();
        ent += *m * (-trace_log(a.tensor()) - b * (-tr / b).ln_1p() + (b + d) * (b / (b + d)).ln());
        dis += *m * (tr * g * g - T::lit(2.0) * d * g + inv.trace());
    }
    let kinetic = params.reynolds * T::lit(0.5) * u_l2_sq;
    let entropic = params.epsilon / (T::lit(2.0) * we) * ent;
    Ok(FreeEnergyRecord {
        kinetic,
        entropic,
        total: kinetic + entropic,
        dissipation: params.epsilon / (T::lit(2.0) * we * we) * dis,
    })
}

/// Energy (Re/2)‖u‖² + (ε/2We)Σ m·trA. Not monotone in general.
pub fn energy_functional<T: Real>(field: &[(ConformationTensor<T>, T)], u_l2_sq: T, params: &FlowParams<T>) -> T {
    let tr: T = field.iter().map(|(a, m)| *m * a.trace()).sum();
    params.reynolds * T::lit(0.5) * u_l2_sq + params.epsilon / (T::lit(2.0) * params.weissenberg) * tr
}

/// Output of [`integrate_homogeneous`]: the state after every step.
#[derive(Clone, Debug)]
pub struct HomogeneousRun<T> {
    pub times: Vec<T>,
    pub states: Vec<ConformationTensor<T>>,
    /// Steps that needed dt halving to stay SPD.
    pub halved_steps: usize,
}

impl<T: Real> HomogeneousRun<T> {
    pub fn last(&self) -> &ConformationTensor<T> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Columns t, A_ij (upper triangle), free_energy, dissipation.
    pub fn to_table(&self, model: &MacroModel<T>, params: &FlowParams<T>) -> Result<Table> {
        let d = self.last().dim();
        let names = ["x", "y", "z"];
        let mut header = vec!["t".to_string()];
        for i in 0..d {
            for j in i..d {
                header.push(format!("A_{}{}", names[i], names[j]));
            }
        }
        header.push("free_energy".into());
        header.push("dissipation".into());
        let mut table = Table::new(header);
        for (t, a) in self.times.iter().zip(&self.states) {
            let fe = model.free_energy(T::zero(), &[(*a, T::one())], params)?;
            let mut row: Vec<Field> = vec![t.to_f64_lossy().into()];
            for i in 0..d {
                for j in i..d {
                    row.push(a.tensor()[(i, j)].to_f64_lossy().into());
                }
            }
            row.push(fe.total.to_f64_lossy().into());
            row.push(fe.dissipation.to_f64_lossy().into());
            table.push(row);
        }
        Ok(table)
    }
}

/// Largest number of dt halvings tried for a single step.
const MAX_HALVINGS: u32 = 20;

/// One step of length `dt`, split recursively into halves when the direct
/// update loses positive definiteness. Returns the state and the depth used.
pub(crate) fn robust_step<T: Real>(
    model: &MacroModel<T>,
    a: &ConformationTensor<T>,
    kappa: &VelocityGradient<T>,
    we: T,
    dt: T,
    time: T,
) -> Result<(ConformationTensor<T>, u32)> {
    fn go<T: Real>(
        model: &MacroModel<T>,
        a: &ConformationTensor<T>,
        kappa: &VelocityGradient<T>,
        we: T,
        dt: T,
        depth: u32,
        time: T,
    ) -> Result<(ConformationTensor<T>, u32)> {
        match model.step(a, kappa, we, dt) {
            Ok(next) => Ok((next, depth)),
            Err(Error::NotSpd { .. }) | Err(Error::ClosureDomain { .. }) if depth < MAX_HALVINGS => {
                let h = dt * T::lit(0.5);
                let (mid, d1) = go(model, a, kappa, we, h, depth + 1, time)?;
                let (end, d2) = go(model, &mid, kappa, we, h, depth + 1, time + h)?;
                Ok((end, d1.max(d2)))
            }
            Err(e @ (Error::NotSpd { .. } | Error::ClosureDomain { .. })) => Err(Error::IntegratorFailure {
                time: time.to_f64_lossy(),
                reason: format!("positive definiteness lost after {MAX_HALVINGS} halvings: {e}"),
            }),
            Err(e) => Err(e),
        }
    }
    go(model, a, kappa, we, dt, 0, time)
}

/// Integrates dA/dt = rhs(A, κ(t)) from `a0` to `t_end` with the
/// semi-implicit step of [`MacroModel::step`] and step `params.dt`.
pub fn integrate_homogeneous<T, K>(
    model: &MacroModel<T>,
    kappa_of_t: K,
    a0: &ConformationTensor<T>,
    params: &FlowParams<T>,
    t_end: T,
) -> Result<HomogeneousRun<T>>
where
    T: Real,
    K: Fn(T) -> VelocityGradient<T>,
{
    params.validate()?;
    let (we, dt) = (params.weissenberg, params.dt);
    if !(dt < we) {
        return Err(Error::invalid("dt", "must be smaller than We to resolve relaxation"));
    }
    if !(t_end >= T::zero()) {
        return Err(Error::invalid("t_end", "must be ≥ 0"));
    }
    if let MacroModel::FeneP { b } = *model {
        peterlin_factor(a0.trace(), b)?;
    }
    let n = (t_end / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let mut run = HomogeneousRun {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        halved_steps: 0,
    };
    run.times.push(T::zero());
    run.states.push(*a0);
    let mut a = *a0;
    for i in 0..n {
        let t = T::from_usize_lossy(i) * dt;
        let t_next = (T::from_usize_lossy(i + 1) * dt).min(t_end);
        let kappa = kappa_of_t(t);
        if !kappa.is_finite() {
            return Err(Error::invalid("kappa", "velocity gradient must be finite"));
        }
        let (next, depth) = robust_step(model, &a, &kappa, we, t_next - t, t)?;
        if depth > 0 {
            run.halved_steps += 1;
        }
        a = next;
        run.times.push(t_next);
        run.states.push(a);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_f64_rows(rows)
    }

    fn ca(rows: &[&[f64]]) -> ConformationTensor<f64> {
        ConformationTensor::new(t(rows)).unwrap()
    }

    fn params(we: f64, dt: f64) -> FlowParams<f64> {
        FlowParams::new(1.0, we, 0.5, dt).unwrap()
    }

    fn random_spd(rng: &mut SplitMix64, d: usize) -> Tensor<f64> {
        let mut m = Tensor::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        m * m.transpose() + Tensor::identity(d).scale(0.05)
    }

    #[test]
    fn right_hand_sides_by_hand() {
        let g = 0.7;
        let k = t(&[&[0.0, g], &[0.0, 0.0]]);
        let r = oldroyd_b_rhs(&ConformationTensor::identity(2), &k, 1.0);
        assert_eq!(r, t(&[&[0.0, g], &[g, 0.0]]));
        let r = fene_p_rhs(&ConformationTensor::identity(2), &Tensor::zeros(2), 1.0, 4.0).unwrap();
        assert!((r - Tensor::identity(2).scale(-1.0)).frobenius_norm() < 1e-15);
        let w = t(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let r = corotational_rhs(&ca(&[&[2.0, 0.0], &[0.0, 1.0]]), &w, 1.0);
        assert!((r - t(&[&[-1.0, -1.0], &[-1.0, 0.0]])).frobenius_norm() < 1e-15);
        let s = t(&[&[0.3, 0.1], &[0.1, -0.2]]);
        let a = ca(&[&[1.5, 0.2], &[0.2, 0.7]]);
        assert_eq!(corotational_rhs(&a, &s, 2.0), (*a.tensor() - Tensor::identity(2)).scale(-0.5));
    }

    #[test]
    fn fene_p_large_b_recovers_oldroyd_b() {
        let k = t(&[&[0.1, 0.6], &[-0.2, -0.1]]);
        let a = ca(&[&[1.5, 0.2], &[0.2, 0.7]]);
        let ob = oldroyd_b_rhs(&a, &k, 1.3);
        let fp = fene_p_rhs(&a, &k, 1.3, 1e8).unwrap();
        assert!((fp - ob).frobenius_norm() <= 1e-6 * ob.frobenius_norm());
        assert!(matches!(fene_p_rhs(&a, &k, 1.0, 2.0), Err(Error::ClosureDomain { .. })));
    }

    #[test]
    fn stress_round_trip() {
        let a = ca(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let tau = stress_from_conformation(&a, 0.5, 2.0);
        assert!((tau.get(0, 0) - 0.25).abs() < 1e-15 && tau.get(0, 1) == 0.0);
        let back = conformation_from_stress(&tau, 0.5, 2.0).unwrap();
        assert!((*back.tensor() - *a.tensor()).frobenius_norm() < 1e-15);
    }

    #[test]
    fn oldroyd_b_relaxation_is_exponential() {
        let p = params(1.0, 1e-3);
        let a0 = ca(&[&[3.0, 0.0], &[0.0, 3.0]]);
        let run = integrate_homogeneous(&MacroModel::OldroydB, |_| Tensor::zeros(2), &a0, &p, 1.0).unwrap();
        for (time, a) in run.times.iter().zip(&run.states).step_by(100) {
            let exact = 1.0 + 2.0 * (-time).exp();
            assert!(((a.tensor()[(0, 0)] - exact) / exact).abs() < 1e-3);
        }
    }

    #[test]
    fn fene_p_relaxes_to_fixed_point() {
        let m = MacroModel::fene_p(8.0).unwrap();
        let run = integrate_homogeneous(&m, |_| Tensor::zeros(2), &ConformationTensor::identity(2), &params(1.0, 1e-2), 30.0)
            .unwrap();
        let a = run.last().tensor();
        assert!((a[(0, 0)] - 0.8).abs() < 1e-9 && (a[(1, 1)] - 0.8).abs() < 1e-9);
        assert!((m.equilibrium(2).trace() - 1.6).abs() < 1e-15);
    }

    #[test]
    fn fene_p_trace_solver_matches_equation() {
        for &(s, c, b) in &[(1.0f64, 0.01, 9.0), (50.0, 0.1, 60.0), (1e-3, 0.5, 4.0)] {
            let t = fene_p_trace(s, c, b).unwrap();
            assert!(t > 0.0 && t < b);
            assert!((t + c * t / (1.0 - t / b) - s).abs() < 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn free_energy_values_by_hand() {
        let p = FlowParams::new(1.0, 1.0, 0.5, 0.1).unwrap();
        // The functional itself is defined at ε = 1 even though flows need ε < 1.
        let p1 = FlowParams { epsilon: 1.0, ..p };
        let e = std::f64::consts::E;
        let rec = oldroyd_b_free_energy(0.0, &[(ca(&[&[e, 0.0], &[0.0, 1.0]]), 1.0)], &p1).unwrap();
        assert!((rec.entropic - (e - 2.0) / 2.0).abs() < 1e-14);
        let zero = oldroyd_b_free_energy(0.0, &[(ConformationTensor::identity(2), 1.0)], &p).unwrap();
        assert_eq!(zero.total, 0.0);
        let m = MacroModel::fene_p(8.0).unwrap();
        let eq = m.free_energy(0.0, &[(m.equilibrium(2), 1.0)], &p).unwrap();
        assert!(eq.entropic.abs() < 1e-12 && eq.dissipation.abs() < 1e-12);
    }

    #[test]
    fn entropic_bounded_by_dissipation_on_random_spd() {
        let mut rng = SplitMix64::seed_from_u64(17);
        let p = params(1.0, 0.1);
        for _ in 0..1000 {
            let a = ConformationTensor::new(random_spd(&mut rng, 3)).unwrap();
            let r = oldroyd_b_free_energy(0.0, &[(a, 1.0)], &p).unwrap();
            assert!(r.entropic >= -1e-12);
            assert!(r.entropic <= r.dissipation * p.weissenberg + 1e-12);
        }
    }

    #[test]
    fn fene_p_free_energy_positive_and_limit() {
        let mut rng = SplitMix64::seed_from_u64(3);
        let p = params(1.0, 0.1);
        let b = 20.0;
        for _ in 0..1000 {
            let mut a = random_spd(&mut rng, 2);
            let tr = a.trace();
            if tr >= b {
                a = a.scale(0.9 * b / tr);
            }
            let a = ConformationTensor::new(a).unwrap();
            let r = fene_p_free_energy(0.0, &[(a, 1.0)], &p, b).unwrap();
            assert!(r.entropic >= -1e-12);
            assert!(r.entropic <= r.dissipation * p.weissenberg + 1e-10);
        }
        // As b → ∞ the density tends to tr(A − ln A − I) for A near I.
        let a = ca(&[&[1.3, 0.1], &[0.1, 0.8]]);
        let ob = oldroyd_b_free_energy(0.0, &[(a, 1.0)], &p).unwrap();
        let fp = fene_p_free_energy(0.0, &[(a, 1.0)], &p, 1e6).unwrap();
        assert!((ob.entropic - fp.entropic).abs() < 1e-4);
    }

    #[test]
    fn energy_rises_while_free_energy_falls() {
        let p = params(1.0, 1e-2);
        let a0 = ca(&[&[0.1, 0.0], &[0.0, 0.1]]);
        let run = integrate_homogeneous(&MacroModel::OldroydB, |_| Tensor::zeros(2), &a0, &p, 5.0).unwrap();
        let first = [(run.states[0], 1.0)];
        let last = [(*run.last(), 1.0)];
        assert!(energy_functional(&last, 0.0, &p) > energy_functional(&first, 0.0, &p));
        let f0 = oldroyd_b_free_energy(0.0, &first, &p).unwrap().total;
        let f1 = oldroyd_b_free_energy(0.0, &last, &p).unwrap().total;
        assert!(f1 < f0);
        let unit = [(ConformationTensor::identity(2), 3.0)];
        assert!((energy_functional(&unit, 0.0, &p) - 0.5 / 2.0 * 2.0 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_identity_along_trajectory() {
        let p = params(1.0, 1e-3);
        let k = t(&[&[0.1, 0.8], &[-0.3, -0.1]]);
        let a0 = ca(&[&[1.4, 0.3], &[0.3, 0.9]]);
        let run = integrate_homogeneous(&MacroModel::OldroydB, |_| k, &a0, &p, 0.2).unwrap();
        for w in run.states.windows(2).step_by(20) {
            let (a, b) = (w[0].tensor(), w[1].tensor());
            let lhs = trace_log(b) - trace_log(a);
            let rhs = (a.inverse().unwrap() * (*b - *a)).trace();
            assert!((lhs - rhs).abs() < 10.0 * p.dt * p.dt);
        }
    }

    #[test]
    fn single_precision_integration() {
        let p = FlowParams::<f32>::new(1.0, 1.0, 0.5, 1e-2).unwrap();
        let k = Tensor::<f32>::from_f64_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let run = integrate_homogeneous(&MacroModel::OldroydB, |_| k, &ConformationTensor::identity(2), &p, 20.0).unwrap();
        let a = run.last().tensor();
        assert!((a[(0, 1)] - 1.0).abs() < 1e-3 && (a[(0, 0)] - 3.0).abs() < 1e-3);
    }
}
