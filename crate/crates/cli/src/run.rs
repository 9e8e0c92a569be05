//! Subcommand bodies: each turns a resolved configuration into named tables.

use std::fs;
use std::path::Path;

use micromacro::dumbbell::{FlowParams, ForceModel};
use micromacro::fokker_planck::{relax, stationary_density, FpOperator};
use micromacro::io::{Field, Table};
use micromacro::macro_models::{integrate_homogeneous, ConformationTensor, MacroModel};
use micromacro::pgd::{pgd_solve, ProductGrid};
use micromacro::rng::{derive_key, Purpose};
use micromacro::shear::{convergence_study, shear_step, step_count, stress_table, velocity_table, FreeEnergyMonitor, SchemeConfig, ShearState, StudyPlan};
use micromacro::tensor::Tensor;
use micromacro::variance::*;
use micromacro::DensityGrid;

use crate::config::RunConfig;
use crate::output::sha256_hex;

pub enum RunError {
    Config(String),
    Core(micromacro::Error),
    Io(String),
}

impl From<micromacro::Error> for RunError {
    fn from(e: micromacro::Error) -> Self {
        RunError::Core(e)
    }
}

pub type Outputs = Vec<(&'static str, Table)>;

pub fn dispatch(cfg: &RunConfig) -> Result<Outputs, RunError> {
    match cfg.command.as_str() {
        "shear" => shear(cfg),
        "homogeneous" => homogeneous(cfg),
        "fokker-planck" => fokker_planck(cfg),
        "pgd" => pgd(cfg),
        "rb-offline" => rb_offline_cmd(cfg),
        "rb-online" => rb_online_cmd(cfg),
        "variance-study" => variance_study(cfg),
        "convergence-study" => convergence(cfg),
        other => Err(RunError::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn force_model(cfg: &RunConfig) -> Result<ForceModel<f64>, RunError> {
    Ok(match cfg.s("model") {
        "fene" => ForceModel::fene(cfg.f("b"))?,
        _ => ForceModel::Hookean,
    })
}

fn flow(cfg: &RunConfig) -> Result<FlowParams<f64>, RunError> {
    Ok(FlowParams::new(cfg.f("re"), cfg.f("we"), cfg.f("eps"), cfg.f("dt"))?)
}

fn kappa(cfg: &RunConfig) -> Tensor<f64> {
    Tensor::from_f64_rows(&[&[cfg.f("kappa_xx"), cfg.f("kappa_xy")], &[cfg.f("kappa_yx"), cfg.f("kappa_yy")]])
}

fn scheme(cfg: &RunConfig, model: ForceModel<f64>) -> Result<SchemeConfig<f64>, RunError> {
    Ok(SchemeConfig::new(flow(cfg)?, cfg.f("dy"), cfg.n("k"), model, cfg.seed)?)
}

fn walls(cfg: &RunConfig) -> (f64, f64) {
    (cfg.f("u_bottom"), cfg.f("u_top"))
}

fn shear(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let mut sc = scheme(cfg, force_model(cfg)?)?;
    sc.brownian = BrownianStrategy::parse(cfg.s("strategy")).expect("checked by the schema");
    sc.q_cutoff = cfg.opt_f("q_cutoff");
    let micro = cfg.s("method") == "micro";
    let mut state = if micro {
        ShearState::startup_micro(&sc, walls(cfg))?
    } else {
        ShearState::startup_macro(&sc, walls(cfg))?
    };
    let (mut vel, mut stress) = (velocity_table(), stress_table());
    let mut monitor = FreeEnergyMonitor::new();
    let n = step_count(cfg.f("t_end"), sc.dt());
    let every = cfg.n("every");
    for step in 0..=n {
        if step > 0 {
            shear_step(&mut state, &sc)?;
        }
        if step % every == 0 || step == n {
            state.push_velocity_rows(&mut vel);
            state.push_stress_rows(&mut stress);
            if !micro {
                monitor.record(&state, &sc)?;
            }
        }
    }
    let mut out = vec![("velocity.csv", vel), ("stress.csv", stress)];
    if !micro {
        out.push(("free_energy.csv", monitor.to_table()));
    }
    Ok(out)
}

fn homogeneous(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let law = match cfg.s("law") {
        "fene-p" => MacroModel::fene_p(cfg.f("b"))?,
        "corotational" => MacroModel::Corotational,
        _ => MacroModel::OldroydB,
    };
    let a0 = match (cfg.opt_f("a0_xx"), cfg.opt_f("a0_xy"), cfg.opt_f("a0_yy")) {
        (None, None, None) => law.equilibrium(2),
        (Some(xx), xy, Some(yy)) => {
            let xy = xy.unwrap_or(0.0);
            ConformationTensor::new(Tensor::from_f64_rows(&[&[xx, xy], &[xy, yy]]))?
        }
        _ => return Err(RunError::Config("initial conformation needs both a0_xx and a0_yy".into())),
    };
    let p = flow(cfg)?;
    let k = kappa(cfg);
    let run = integrate_homogeneous(&law, |_| k, &a0, &p, cfg.f("t_end"))?;
    Ok(vec![("trajectory.csv", run.to_table(&law, &p)?)])
}

fn fokker_planck(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let model = force_model(cfg)?;
    let (k, we) = (kappa(cfg), cfg.f("we"));
    let inf = stationary_density(&model, &k, we, cfg.n("n"))?.density;
    let mesh = inf.mesh().clone();
    let mut psi0 = match cfg.s("initial") {
        "uniform" => DensityGrid::from_fn(mesh.clone(), |_, _| 1.0)?,
        _ => {
            let s = cfg.f("shift");
            DensityGrid::from_fn(mesh.clone(), |x, y| (-((x - s).powi(2) + y * y) / 2.0).exp())?
        }
    };
    psi0.normalize()?;
    let op = FpOperator::new(&mesh, &model, &k, we)?;
    let dt = cfg.f("dt_fraction") * op.stable_dt();
    let steps = (cfg.f("t_end") / dt).ceil() as usize;
    let run = relax(&op, &psi0, &inf, dt, steps, cfg.n("every"))?;
    Ok(vec![
        ("entropy.csv", run.to_table()),
        ("density.csv", run.final_density.to_table()),
        ("stationary.csv", inf.to_table()),
    ])
}

fn pgd(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let grid = ProductGrid::unit_square(cfg.n("nx"), cfg.n("ny"))?;
    let pi = std::f64::consts::PI;
    let f = match cfg.s("rhs") {
        "constant" => grid.sample(|_, _| 1.0),
        "separable" => grid.sample(|x, y| (pi * x).sin() * (2.0 * pi * y).sin()),
        _ => grid.sample(|x, y| 1.0 / (1.0 + x + y)),
    };
    let sol = pgd_solve(&f, &grid, cfg.f("tol"), cfg.n("n_max"), cfg.f("als_tol"), cfg.n("als_max"))?;
    let u = sol.reconstruct();
    let mut field = Table::new(["x", "y", "u"]);
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            field.push(vec![grid.x(i).into(), grid.y(j).into(), u[i * grid.ny + j].into()]);
        }
    }
    Ok(vec![("terms.csv", sol.terms_table()), ("residuals.csv", sol.residual_table()), ("solution.csv", field)])
}

/// Model and flow parameters of a reduced-basis run. Re and ε do not enter
/// the sampled quantity and are fixed.
fn rb_flow(we: f64, dt: f64) -> Result<FlowParams<f64>, RunError> {
    Ok(FlowParams::new(1.0, we, 0.5, dt)?)
}

const BASIS_HEADER: [&str; 8] = [
    "rank",
    "trial_index",
    "lambda_xx",
    "lambda_xy",
    "lambda_yx",
    "lambda_yy",
    "reference_mean",
    "selection_variance",
];

fn rb_offline_cmd(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let model = force_model(cfg)?;
    let params = rb_flow(cfg.f("we"), cfg.f("dt"))?;
    let trial = shear_dominated_gradients(
        &linspace(cfg.f("rate_min"), cfg.f("rate_max"), cfg.n("n_rates")),
        &linspace(cfg.f("elong_min"), cfg.f("elong_max"), cfg.n("n_elong")),
    );
    let basis = rb_offline(&trial, cfg.n("n_basis"), cfg.n("m_large"), &model, &params, cfg.n("steps"), cfg.seed)?;
    let mut t = Table::new(BASIS_HEADER);
    for (rank, l) in basis.parameters.iter().enumerate() {
        let mut row: Vec<Field> = vec![rank.into(), basis.trial_indices[rank].into()];
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            row.push(l[(i, j)].into());
        }
        row.push(basis.reference_means[rank].into());
        row.push(basis.selection_variance[rank].into());
        t.push(row);
    }
    Ok(vec![("basis.csv", t)])
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Rebuilds the basis written by `rb-offline`, checking the file against
/// the checksum in that run's manifest.
fn load_basis(dir: &Path) -> Result<(RbBasis<f64>, serde_json::Value), RunError> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", manifest_path.display())))?;
    let bad = |what: &str| RunError::Config(format!("{}: {what}", manifest_path.display()));
    if manifest["command"] != "rb-offline" {
        return Err(bad("not the manifest of an rb-offline run"));
    }
    let c = &manifest["config"];
    let num = |k: &str| c[k].as_f64().ok_or_else(|| bad(&format!("config lacks `{k}`")));
    let int = |k: &str| c[k].as_u64().ok_or_else(|| bad(&format!("config lacks `{k}`")));
    let model = match c["model"].as_str() {
        Some("fene") => ForceModel::fene(num("b")?)?,
        Some("hookean") => ForceModel::Hookean,
        _ => return Err(bad("config lacks `model`")),
    };
    let basis_path = dir.join("basis.csv");
    let bytes = fs::read(&basis_path).map_err(|e| io_err(&basis_path, e))?;
    let expected = manifest["outputs"]
        .as_array()
        .and_then(|o| o.iter().find(|e| e["file"] == "basis.csv"))
        .and_then(|e| e["sha256"].as_str())
        .ok_or_else(|| bad("no checksum for basis.csv"))?;
    if sha256_hex(&bytes) != expected {
        return Err(RunError::Config(format!("{}: checksum does not match the manifest", basis_path.display())));
    }
    let text = String::from_utf8_lossy(&bytes);
    let mut lines = text.split("\r\n").filter(|l| !l.is_empty());
    if lines.next() != Some(BASIS_HEADER.join(",").as_str()) {
        return Err(RunError::Config(format!("{}: unexpected header", basis_path.display())));
    }
    let mut basis = RbBasis {
        parameters: Vec::new(),
        trial_indices: Vec::new(),
        reference_means: Vec::new(),
        selection_variance: Vec::new(),
        m_large: int("m_large")? as usize,
        seed: int("seed")?,
        steps: int("steps")? as usize,
        model,
        params: rb_flow(num("we")?, num("dt")?)?,
    };
    for line in lines {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| RunError::Config(format!("{}: {e}", basis_path.display())))?;
        if v.len() != BASIS_HEADER.len() {
            return Err(RunError::Config(format!("{}: malformed row", basis_path.display())));
        }
        basis.trial_indices.push(v[1] as usize);
        basis.parameters.push(Tensor::from_f64_rows(&[&[v[2], v[3]], &[v[4], v[5]]]));
        basis.reference_means.push(v[6]);
        basis.selection_variance.push(v[7]);
    }
    Ok((basis, c.clone()))
}

fn rb_online_cmd(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let (basis, offline) = load_basis(Path::new(cfg.s("basis_dir")))?;
    let range = |k: &str| offline[k].as_f64().unwrap_or(0.0);
    let tests = shear_dominated_gradients(
        &linspace(range("rate_min"), range("rate_max"), cfg.n("n_test_rates")),
        &linspace(range("elong_min"), range("elong_max"), cfg.n("n_test_elong")),
    );
    let mut rows = Vec::with_capacity(tests.len());
    for (i, lam) in tests.iter().enumerate() {
        let seed = derive_key(cfg.seed, Purpose::Parameters, &[i as u64]);
        rows.push((*lam, rb_online(lam, &basis, cfg.n("m_small"), seed)?));
    }
    let mut factors: Vec<f64> = rows.iter().map(|(_, e)| e.reduction_factor()).collect();
    factors.sort_by(f64::total_cmp);
    let median = if factors.len() % 2 == 1 {
        factors[factors.len() / 2]
    } else {
        0.5 * (factors[factors.len() / 2 - 1] + factors[factors.len() / 2])
    };
    let mut summary = Table::new(["statistic", "value"]);
    summary.push(vec!["median_reduction".into(), median.into()]);
    summary.push(vec!["min_reduction".into(), factors[0].into()]);
    summary.push(vec!["max_reduction".into(), factors[factors.len() - 1].into()]);
    Ok(vec![("estimates.csv", rb_estimate_table(&rows)), ("summary.csv", summary)])
}

fn variance_study(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let sc = scheme(cfg, ForceModel::Hookean)?;
    let strategies: Vec<BrownianStrategy> = cfg
        .s("strategies")
        .split(',')
        .map(|w| BrownianStrategy::parse(w.trim()).expect("checked by the schema"))
        .collect();
    let reports = variance_comparison_study(&sc, walls(cfg), cfg.f("t_end"), &strategies, cfg.n("repeats"))?;
    let mut boot = Table::new(["first", "second", "quantity", "difference", "lower", "upper"]);
    let level = cfg.f("level");
    let mut tag = 0u64;
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            for (q, name) in [(StudyQuantity::VelocityMid, "u_mid"), (StudyQuantity::StressMeanCell, "tau_mean_cell")] {
                let point = match q {
                    StudyQuantity::VelocityMid => reports[i].var_u() - reports[j].var_u(),
                    StudyQuantity::StressMeanCell => reports[i].var_tau() - reports[j].var_tau(),
                };
                let seed = derive_key(cfg.seed, Purpose::Resample, &[tag]);
                tag += 1;
                let (lo, hi) = bootstrap_difference(&reports[i], &reports[j], q, cfg.n("resamples"), level, seed);
                boot.push(vec![
                    reports[i].strategy.name().into(),
                    reports[j].strategy.name().into(),
                    name.into(),
                    point.into(),
                    lo.into(),
                    hi.into(),
                ]);
            }
        }
    }
    Ok(vec![("strategies.csv", strategy_table(&reports)), ("bootstrap.csv", boot)])
}

fn convergence(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let base = scheme(cfg, force_model(cfg)?)?;
    let halvings = |x: f64, n: usize| (0..n).map(|i| x / 2f64.powi(i as i32)).collect::<Vec<_>>();
    let plan = StudyPlan {
        dts: halvings(cfg.f("dt"), cfg.n("dt_levels")),
        dys: halvings(cfg.f("dy"), cfg.n("dy_levels")),
        ks: (0..cfg.n("k_levels")).map(|i| cfg.n("k") * cfg.n("k_factor").pow(i as u32)).collect(),
        repeats: cfg.n("repeats"),
        t_end: cfg.f("t_end"),
        boundary: walls(cfg),
        reference_refinement: cfg.n("reference_refinement"),
    };
    Ok(vec![("convergence.csv", convergence_study(&base, &plan)?.to_table())])
}
