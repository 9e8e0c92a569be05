//! 1D Couette flow between plates at y = 0 and y = 1.
//!
//! Velocity u(t, y) uses continuous piecewise-affine elements; the shear
//! stress and the microstructure are piecewise constant, one cell per
//! interval. The micro-macro (CONNFFESSIT) path carries a dumbbell ensemble
//! per cell, whose configuration X = (P, Q) obeys
//!
//! dP = (−P/(2We) + ∂_y u·Q)dt + dV/√We,  dQ = −Q/(2We)dt + dW/√We.
//!
//! The macro path carries a conformation tensor per cell instead. Both use
//! the same ordering: τⁿ drives the implicit velocity solve, and the
//! microstructure then sees ∂_y uⁿ⁺¹.

use crate::dumbbell::{
    evolve_ensemble, kramers_statistics, DumbbellEnsemble, FlowParams, ForceModel, StepPolicy, StepReport,
};
use crate::error::{Error, Result};
use crate::io::{Field, Table};
use crate::linalg::Tridiagonal;
use crate::macro_models::{robust_step, ConformationTensor, FreeEnergyRecord, MacroModel};
use crate::scalar::Real;
use crate::tensor::{Tensor, Vector};
use crate::variance::{BrownianNoise, BrownianStrategy, TransverseNoise};

/// Discretization and model choices for one shear run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig<T> {
    /// Flow parameters; `params.dt` is the time step.
    pub params: FlowParams<T>,
    pub dy: T,
    /// Dumbbells per cell.
    pub replicas: usize,
    pub model: ForceModel<T>,
    pub brownian: BrownianStrategy,
    pub transverse: TransverseNoise,
    pub seed: u64,
    /// Optional clamp |Q| ≤ cutoff applied after every micro step.
    pub q_cutoff: Option<T>,
    pub policy: StepPolicy<T>,
}

impl<T: Real> SchemeConfig<T> {
    pub fn new(params: FlowParams<T>, dy: T, replicas: usize, model: ForceModel<T>, seed: u64) -> Result<Self> {
        let cfg = Self {
            params,
            dy,
            replicas,
            model,
            brownian: BrownianStrategy::IndependentPerCell,
            transverse: TransverseNoise::Shared,
            seed,
            q_cutoff: None,
            policy: StepPolicy::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dt(&self) -> T {
        self.params.dt
    }

    /// Number of cells 1/Δy; Δy must divide the unit interval.
    pub fn cells(&self) -> Result<usize> {
        if !(self.dy > T::zero() && self.dy <= T::one()) {
            return Err(Error::invalid("dy", "must lie in (0, 1]"));
        }
        let n = (T::one() / self.dy).round();
        if (n * self.dy - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::invalid("dy", "1/dy must be an integer"));
        }
        Ok(n.to_f64_lossy() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.cells()?;
        if self.replicas == 0 {
            return Err(Error::invalid("k", "need at least one dumbbell per cell"));
        }
        if let Some(c) = self.q_cutoff {
            if !(c > T::zero()) {
                return Err(Error::invalid("q_cutoff", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Constitutive law matching the force model: Hookean gives Oldroyd-B,
    /// FENE gives FENE-P.
    pub fn closure(&self) -> MacroModel<T> {
        match self.model {
            ForceModel::Hookean => MacroModel::OldroydB,
            ForceModel::Fene { b } => MacroModel::FeneP { b },
        }
    }

    pub fn noise(&self) -> BrownianNoise {
        BrownianNoise {
            seed: self.seed,
            strategy: self.brownian,
            transverse: self.transverse,
        }
    }
}

/// Per-cell microstructure.
#[derive(Clone, Debug)]
pub enum Microstructure<T> {
    Ensemble(DumbbellEnsemble<T>),
    Conformation(Vec<ConformationTensor<T>>),
}

#[derive(Clone, Debug)]
pub struct ShearState<T> {
    pub time: T,
    pub steps: u64,
    pub y_nodes: Vec<T>,
    /// Nodal velocities including both walls.
    pub u: Vec<T>,
    /// Shear stress τ_xy per cell.
    pub tau: Vec<T>,
    /// Wall velocities at y = 0 and y = 1.
    pub boundary: (T, T),
    pub micro: Microstructure<T>,
    /// Macro steps that needed dt halving.
    pub halved_steps: usize,
}

fn nodes<T: Real>(cells: usize) -> Vec<T> {
    (0..=cells)
        .map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(cells))
        .collect()
}

fn initial_velocity<T: Real>(y: &[T], boundary: (T, T), u0: &dyn Fn(T) -> T) -> Vec<T> {
    let n = y.len() - 1;
    let mut u: Vec<T> = y.iter().map(|&y| u0(y)).collect();
    u[0] = boundary.0;
    u[n] = boundary.1;
    u
}

impl<T: Real> ShearState<T> {
    /// Micro-macro state with equilibrium ensembles drawn according to the
    /// Brownian strategy of `cfg` and initial velocity `u0` (wall values
    /// are imposed).
    pub fn micro(cfg: &SchemeConfig<T>, boundary: (T, T), u0: &dyn Fn(T) -> T) -> Result<Self> {
        cfg.validate()?;
        let cells = cfg.cells()?;
        let ens = cfg.noise().initial_ensemble(&cfg.model, cells, cfg.replicas)?;
        let y = nodes(cells);
        let mut state = Self {
            time: T::zero(),
            steps: 0,
            u: initial_velocity(&y, boundary, u0),
            y_nodes: y,
            tau: vec![T::zero(); cells],
            boundary,
            micro: Microstructure::Ensemble(ens),
            halved_steps: 0,
        };
        state.tau = state.stress(cfg)?;
        Ok(state)
    }

    /// Deterministic state with equilibrium conformations.
    pub fn macroscopic(cfg: &SchemeConfig<T>, boundary: (T, T), u0: &dyn Fn(T) -> T) -> Result<Self> {
        cfg.validate()?;
        let cells = cfg.cells()?;
        let y = nodes(cells);
        let a = cfg.closure().equilibrium(2);
        let mut state = Self {
            time: T::zero(),
            steps: 0,
            u: initial_velocity(&y, boundary, u0),
            y_nodes: y,
            tau: vec![T::zero(); cells],
            boundary,
            micro: Microstructure::Conformation(vec![a; cells]),
            halved_steps: 0,
        };
        state.tau = state.stress(cfg)?;
        Ok(state)
    }

    /// Couette startup: fluid at rest, walls moving from t = 0.
    pub fn startup_micro(cfg: &SchemeConfig<T>, boundary: (T, T)) -> Result<Self> {
        Self::micro(cfg, boundary, &|_| T::zero())
    }

    pub fn startup_macro(cfg: &SchemeConfig<T>, boundary: (T, T)) -> Result<Self> {
        Self::macroscopic(cfg, boundary, &|_| T::zero())
    }

    pub fn cells(&self) -> usize {
        self.tau.len()
    }

    pub fn dy(&self) -> T {
        T::one() / T::from_usize_lossy(self.cells())
    }

    pub fn ensemble(&self) -> Option<&DumbbellEnsemble<T>> {
        match &self.micro {
            Microstructure::Ensemble(e) => Some(e),
            Microstructure::Conformation(_) => None,
        }
    }

    pub fn conformations(&self) -> Option<&[ConformationTensor<T>]> {
        match &self.micro {
            Microstructure::Conformation(a) => Some(a),
            Microstructure::Ensemble(_) => None,
        }
    }

    /// ∂_y u per cell.
    pub fn shear_rates(&self) -> Vec<T> {
        let inv = T::from_usize_lossy(self.cells());
        self.u.windows(2).map(|w| (w[1] - w[0]) * inv).collect()
    }

    /// ∫u² dy of the piecewise-affine velocity.
    pub fn velocity_l2_sq(&self) -> T {
        let third = self.dy() / T::lit(3.0);
        self.u
            .windows(2)
            .map(|w| third * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]))
            .sum()
    }

    /// Per-cell τ_xy from the current microstructure.
    pub fn stress(&self, cfg: &SchemeConfig<T>) -> Result<Vec<T>> {
        match &self.micro {
            Microstructure::Ensemble(ens) => {
                let scale = cfg.params.epsilon / (cfg.params.weissenberg * T::from_usize_lossy(ens.replicas()));
                (0..ens.cells())
                    .map(|c| {
                        let mut sum = T::zero();
                        for x in ens.cell(c).chunks_exact(2) {
                            sum += x[0] * x[1] * cfg.model.force_factor(x[0] * x[0] + x[1] * x[1])?;
                        }
                        Ok(scale * sum)
                    })
                    .collect()
            }
            Microstructure::Conformation(_) => Ok(self.stress_statistics(cfg)?.into_iter().map(|(s, _)| s).collect()),
        }
    }

    /// Per-cell τ_xy with its Monte Carlo standard error (zero for the macro
    /// path).
    pub fn stress_statistics(&self, cfg: &SchemeConfig<T>) -> Result<Vec<(T, T)>> {
        let (eps, we) = (cfg.params.epsilon, cfg.params.weissenberg);
        match &self.micro {
            Microstructure::Ensemble(ens) => Ok(kramers_statistics(ens, &cfg.model, &cfg.params)?
                .into_iter()
                .map(|e| (e.stress.get(0, 1), e.std_error[(0, 1)]))
                .collect()),
            Microstructure::Conformation(a) => {
                let closure = cfg.closure();
                a.iter()
                    .map(|a| Ok((closure.stress(a, eps, we)?.get(0, 1), T::zero())))
                    .collect()
            }
        }
    }

    /// Rows (t, y, u).
    pub fn push_velocity_rows(&self, table: &mut Table) {
        for (y, u) in self.y_nodes.iter().zip(&self.u) {
            table.push(vec![
                self.time.to_f64_lossy().into(),
                y.to_f64_lossy().into(),
                u.to_f64_lossy().into(),
            ]);
        }
    }

    /// Rows (t, cell, tau).
    pub fn push_stress_rows(&self, table: &mut Table) {
        for (c, tau) in self.tau.iter().enumerate() {
            table.push(vec![self.time.to_f64_lossy().into(), Field::from(c), tau.to_f64_lossy().into()]);
        }
    }
}

pub fn velocity_table() -> Table {
    Table::new(["t", "y", "u"])
}

pub fn stress_table() -> Table {
    Table::new(["t", "cell", "tau"])
}

/// Implicit velocity update
/// (Re/δt)∫(uⁿ⁺¹ − uⁿ)v + (1 − ε)∫∂_y uⁿ⁺¹ ∂_y v = −∫τ ∂_y v
/// for every interior hat function v, walls held at `boundary`.
pub fn velocity_update<T: Real>(u: &[T], tau: &[T], boundary: (T, T), params: &FlowParams<T>) -> Result<Vec<T>> {
    let cells = tau.len();
    if u.len() != cells + 1 {
        return Err(Error::invalid("u", "need one nodal value per cell plus one"));
    }
    let mut next = u.to_vec();
    next[0] = boundary.0;
    next[cells] = boundary.1;
    if cells < 2 {
        return Ok(next);
    }
    let dy = T::one() / T::from_usize_lossy(cells);
    let nu = T::one() - params.epsilon;
    assert!(nu > T::zero(), "velocity system is singular unless ε < 1");
    let m = params.reynolds / params.dt;
    let diag = m * dy * T::lit(4.0 / 6.0) + nu * T::lit(2.0) / dy;
    let off = m * dy / T::lit(6.0) - nu / dy;
    let n = cells - 1;
    let mut rhs = vec![T::zero(); n];
    for (k, r) in rhs.iter_mut().enumerate() {
        let i = k + 1;
        let mass = m * dy * (u[i - 1] + T::lit(4.0) * u[i] + u[i + 1]) / T::lit(6.0);
        *r = mass - (tau[i - 1] - tau[i]);
    }
    rhs[0] -= off * boundary.0;
    rhs[n - 1] -= off * boundary.1;
    let sol = Tridiagonal::constant(n, diag, off).solve(&rhs)?;
    next[1..cells].copy_from_slice(&sol);
    Ok(next)
}

fn shear_gradient<T: Real>(rate: T) -> Tensor<T> {
    let mut k = Tensor::zeros(2);
    k[(0, 1)] = rate;
    k
}

/// One CONNFFESSIT step: implicit velocity solve with τⁿ, then one
/// Euler-Maruyama step of every ensemble with κ = [[0, ∂_y uⁿ⁺¹], [0, 0]],
/// then τⁿ⁺¹ from the new ensembles. The state is unchanged on error.
pub fn connffessit_step<T: Real>(state: &mut ShearState<T>, cfg: &SchemeConfig<T>) -> Result<StepReport> {
    let Microstructure::Ensemble(ens) = &mut state.micro else {
        return Err(Error::invalid("state", "CONNFFESSIT step needs dumbbell ensembles"));
    };
    if ens.cells() != state.tau.len() || ens.dim() != 2 {
        return Err(Error::invalid("state", "ensemble layout does not match the velocity grid"));
    }
    let u_next = velocity_update(&state.u, &state.tau, state.boundary, &cfg.params)?;
    let inv = T::from_usize_lossy(state.tau.len());
    let kappa: Vec<Tensor<T>> = u_next.windows(2).map(|w| shear_gradient((w[1] - w[0]) * inv)).collect();
    let report = evolve_ensemble(ens, &cfg.model, &kappa, &cfg.params, &cfg.noise(), &cfg.policy)?;
    if let Some(cap) = cfg.q_cutoff {
        for c in 0..ens.cells() {
            for r in 0..ens.replicas() {
                let x = ens.get(c, r);
                if x[1].abs() > cap {
                    let mut y = x;
                    y[1] = cap.copysign(x[1]);
                    ens.set(c, r, &y);
                }
            }
        }
    }
    state.u = u_next;
    state.time += cfg.dt();
    state.steps += 1;
    state.tau = state.stress(cfg)?;
    Ok(report)
}

/// Deterministic counterpart of [`connffessit_step`] with a conformation
/// tensor per cell, advanced by the semi-implicit macro step (with dt
/// halving when definiteness is lost).
pub fn macro_shear_step<T: Real>(state: &mut ShearState<T>, cfg: &SchemeConfig<T>) -> Result<()> {
    let closure = cfg.closure();
    let Microstructure::Conformation(field) = &state.micro else {
        return Err(Error::invalid("state", "macro step needs conformation tensors"));
    };
    let u_next = velocity_update(&state.u, &state.tau, state.boundary, &cfg.params)?;
    let inv = T::from_usize_lossy(state.tau.len());
    let mut next = Vec::with_capacity(field.len());
    let mut halved = 0;
    for (a, w) in field.iter().zip(u_next.windows(2)) {
        let k = shear_gradient((w[1] - w[0]) * inv);
        let (b, depth) = robust_step(&closure, a, &k, cfg.params.weissenberg, cfg.dt(), state.time)?;
        halved += usize::from(depth > 0);
        next.push(b);
    }
    state.micro = Microstructure::Conformation(next);
    state.u = u_next;
    state.time += cfg.dt();
    state.steps += 1;
    state.halved_steps += halved;
    state.tau = state.stress(cfg)?;
    Ok(())
}

/// Advances either path by one step.
pub fn shear_step<T: Real>(state: &mut ShearState<T>, cfg: &SchemeConfig<T>) -> Result<()> {
    match state.micro {
        Microstructure::Ensemble(_) => connffessit_step(state, cfg).map(|_| ()),
        Microstructure::Conformation(_) => macro_shear_step(state, cfg),
    }
}

/// Number of steps of size dt covering [0, t_end], rounded to nearest.
pub fn step_count<T: Real>(t_end: T, dt: T) -> usize {
    (t_end / dt).round().max(T::zero()).to_f64_lossy() as usize
}

/// Runs to `t_end`.
pub fn run_to<T: Real>(state: &mut ShearState<T>, cfg: &SchemeConfig<T>, t_end: T) -> Result<()> {
    let target = step_count(t_end, cfg.dt()) as u64;
    while state.steps < target {
        shear_step(state, cfg)?;
    }
    Ok(())
}

/// Free-energy time series of a macro shear trajectory.
#[derive(Clone, Debug, Default)]
pub struct FreeEnergyMonitor<T> {
    pub times: Vec<T>,
    pub records: Vec<FreeEnergyRecord<T>>,
    /// Indices i with F_i > F_{i−1} + 1e−12, recorded only without wall
    /// forcing.
    pub increases: Vec<usize>,
    pub zero_forcing: bool,
}

impl<T: Real> FreeEnergyMonitor<T> {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            records: Vec::new(),
            increases: Vec::new(),
            zero_forcing: true,
        }
    }

    pub fn record(&mut self, state: &ShearState<T>, cfg: &SchemeConfig<T>) -> Result<()> {
        let field = state
            .conformations()
            .ok_or_else(|| Error::invalid("state", "free energy needs conformation tensors"))?;
        let dy = state.dy();
        let weighted: Vec<(ConformationTensor<T>, T)> = field.iter().map(|a| (*a, dy)).collect();
        let rec = cfg.closure().free_energy(state.velocity_l2_sq(), &weighted, &cfg.params)?;
        let forcing = state.boundary.0 != T::zero() || state.boundary.1 != T::zero();
        self.zero_forcing &= !forcing;
        if let Some(prev) = self.records.last() {
            if !forcing && rec.total > prev.total + T::lit(1e-12) {
                self.increases.push(self.records.len());
            }
        }
        self.times.push(state.time);
        self.records.push(rec);
        Ok(())
    }

    /// Columns t, kinetic, entropic, free_energy, dissipation, increase.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "kinetic", "entropic", "free_energy", "dissipation", "increase"]);
        for (i, (time, r)) in self.times.iter().zip(&self.records).enumerate() {
            t.push(vec![
                time.to_f64_lossy().into(),
                r.kinetic.to_f64_lossy().into(),
                r.entropic.to_f64_lossy().into(),
                r.total.to_f64_lossy().into(),
                r.dissipation.to_f64_lossy().into(),
                Field::from(usize::from(self.increases.contains(&i))),
            ]);
        }
        t
    }
}

/// Free energy of every state in a macro trajectory.
pub fn free_energy_monitor<T: Real>(trajectory: &[ShearState<T>], cfg: &SchemeConfig<T>) -> Result<FreeEnergyMonitor<T>> {
    let mut m = FreeEnergyMonitor::new();
    for s in trajectory {
        m.record(s, cfg)?;
    }
    Ok(m)
}

/// L² distance between a coarse and a fine solution, velocity (P1) plus
/// stress (P0), evaluated exactly on the fine grid. The fine cell count must
/// be a multiple of the coarse one.
pub fn solution_distance<T: Real>(coarse: &ShearState<T>, fine: &ShearState<T>) -> Result<T> {
    let (nc, nf) = (coarse.cells(), fine.cells());
    if nf % nc != 0 {
        return Err(Error::invalid("dy", "grids must be nested"));
    }
    let r = nf / nc;
    let h = fine.dy();
    let coarse_u = |i: usize| {
        let c = (i / r).min(nc - 1);
        let s = T::from_usize_lossy(i - c * r) / T::from_usize_lossy(r);
        coarse.u[c] * (T::one() - s) + coarse.u[c + 1] * s
    };
    let mut eu = T::zero();
    let mut et = T::zero();
    for i in 0..nf {
        let d0 = coarse_u(i) - fine.u[i];
        let d1 = coarse_u(i + 1) - fine.u[i + 1];
        eu += h / T::lit(3.0) * (d0 * d0 + d0 * d1 + d1 * d1);
        let dt = coarse.tau[i / r] - fine.tau[i];
        et += h * dt * dt;
    }
    Ok(eu.sqrt() + et.sqrt())
}

/// Which discretization parameter a study row varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyAxis {
    TimeStep,
    CellSize,
    Replicas,
}

impl StudyAxis {
    pub fn name(&self) -> &'static str {
        match self {
            StudyAxis::TimeStep => "dt",
            StudyAxis::CellSize => "dy",
            StudyAxis::Replicas => "k",
        }
    }
}

/// Error rows and fitted log-log orders of a convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceReport<T> {
    pub rows: Vec<(StudyAxis, T, T)>,
    pub order_dt: Option<T>,
    pub order_dy: Option<T>,
    pub order_k: Option<T>,
}

impl<T: Real> ConvergenceReport<T> {
    pub fn errors(&self, axis: StudyAxis) -> Vec<(T, T)> {
        self.rows.iter().filter(|r| r.0 == axis).map(|r| (r.1, r.2)).collect()
    }

    /// Columns parameter, value, error; fitted orders follow as rows with
    /// parameter `order_<axis>` and an empty error.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["parameter", "value", "error"]);
        for (axis, v, e) in &self.rows {
            t.push(vec![axis.name().into(), v.to_f64_lossy().into(), e.to_f64_lossy().into()]);
        }
        for (name, o) in [("order_dt", self.order_dt), ("order_dy", self.order_dy), ("order_k", self.order_k)] {
            if let Some(o) = o {
                t.push(vec![name.into(), o.to_f64_lossy().into(), "".into()]);
            }
        }
        t
    }
}

/// Least-squares slope of ln(error) against ln(value).
pub fn log_log_slope<T: Real>(points: &[(T, T)]) -> Option<T> {
    let pts: Vec<(T, T)> = points
        .iter()
        .filter(|p| p.0 > T::zero() && p.1 > T::zero())
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > T::zero()).then(|| sxy / sxx)
}

/// Grids of a convergence study. Every list varies one parameter with the
/// others held at the base configuration.
#[derive(Clone, Debug)]
pub struct StudyPlan<T> {
    pub dts: Vec<T>,
    pub dys: Vec<T>,
    pub ks: Vec<usize>,
    /// Independent seeds averaged (root mean square) per K.
    pub repeats: usize,
    pub t_end: T,
    pub boundary: (T, T),
    /// Refinement factor of the deterministic reference over the finest
    /// δt or Δy in the plan.
    pub reference_refinement: usize,
}

/// Self-convergence of the Hookean shear solver.
///
/// δt and Δy orders are measured on the deterministic Oldroyd-B path against
/// a reference refined by `reference_refinement` in the varied parameter.
/// The K order is measured on the CONNFFESSIT path against the Oldroyd-B
/// solution at the same δt and Δy.
pub fn convergence_study<T: Real>(base: &SchemeConfig<T>, plan: &StudyPlan<T>) -> Result<ConvergenceReport<T>> {
    base.validate()?;
    let mut cfg = *base;
    cfg.model = ForceModel::Hookean;
    let refine = T::from_usize_lossy(plan.reference_refinement.max(2));
    let run_macro = |c: &SchemeConfig<T>| -> Result<ShearState<T>> {
        let mut s = ShearState::startup_macro(c, plan.boundary)?;
        run_to(&mut s, c, plan.t_end)?;
        Ok(s)
    };
    let with_dt = |dt: T| SchemeConfig {
        params: FlowParams { dt, ..cfg.params },
        ..cfg
    };
    let with_dy = |dy: T| SchemeConfig { dy, ..cfg };
    let mut rows = Vec::new();

    if !plan.dts.is_empty() {
        let finest = plan.dts.iter().copied().fold(T::infinity(), T::min);
        let reference = run_macro(&with_dt(finest / refine))?;
        for &dt in &plan.dts {
            let s = run_macro(&with_dt(dt))?;
            rows.push((StudyAxis::TimeStep, dt, solution_distance(&s, &reference)?));
        }
    }
    if !plan.dys.is_empty() {
        let finest = plan.dys.iter().copied().fold(T::infinity(), T::min);
        let reference = run_macro(&with_dy(finest / refine))?;
        for &dy in &plan.dys {
            let s = run_macro(&with_dy(dy))?;
            rows.push((StudyAxis::CellSize, dy, solution_distance(&s, &reference)?));
        }
    }
    if !plan.ks.is_empty() {
        let reference = run_macro(&cfg)?;
        for &k in &plan.ks {
            let mut sq = T::zero();
            for rep in 0..plan.repeats.max(1) {
                let c = SchemeConfig {
                    replicas: k,
                    seed: crate::rng::derive_key(cfg.seed, crate::rng::Purpose::Generic, &[k as u64, rep as u64]),
                    ..cfg
                };
                let mut s = ShearState::startup_micro(&c, plan.boundary)?;
                run_to(&mut s, &c, plan.t_end)?;
                let e = solution_distance(&s, &reference)?;
                sq += e * e;
            }
            let rms = (sq / T::from_usize_lossy(plan.repeats.max(1))).sqrt();
            rows.push((StudyAxis::Replicas, T::from_usize_lossy(k), rms));
        }
    }
    let slope = |axis| {
        let pts: Vec<(T, T)> = rows
            .iter()
            .filter(|r: &&(StudyAxis, T, T)| r.0 == axis)
            .map(|r| (r.1, r.2))
            .collect();
        log_log_slope(&pts)
    };
    Ok(ConvergenceReport {
        order_dt: slope(StudyAxis::TimeStep),
        order_dy: slope(StudyAxis::CellSize),
        order_k: slope(StudyAxis::Replicas),
        rows,
    })
}

/// Analytic steady Couette state for Oldroyd-B with walls (0, 1): u = y,
/// A_xy = We, A_xx = 1 + 2We², A_yy = 1.
pub fn steady_couette_conformation<T: Real>(we: T) -> Tensor<T> {
    Tensor::from_rows(&[&[T::one() + T::lit(2.0) * we * we, we], &[we, T::one()]])
}

/// Sample mean and variance of Q over all replicas of all cells.
pub fn transverse_moments<T: Real>(ens: &DumbbellEnsemble<T>) -> (T, T) {
    let n = T::from_usize_lossy(ens.cells() * ens.replicas());
    let q = |x: &Vector<T>| x[1];
    let mut mean = T::zero();
    for c in 0..ens.cells() {
        for r in 0..ens.replicas() {
            mean += q(&ens.get(c, r));
        }
    }
    mean /= n;
    let mut var = T::zero();
    for c in 0..ens.cells() {
        for r in 0..ens.replicas() {
            let d = q(&ens.get(c, r)) - mean;
            var += d * d;
        }
    }
    (mean, var / (n - T::one()))
}
