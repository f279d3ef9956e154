//! Experiment runners producing result rows.

use log::{info, warn};
use serde::Serialize;

use thzcov_core::analysis::{density_spacing, LocationAnalysis};
use thzcov_core::beamtrain::{array_sweep, training_budget, training_stages_for, OmegaMode, TrainingError};
use thzcov_core::geometry::representative_location;
use thzcov_core::simulate::{
    estimate_association, estimate_coverage_curve, ppp_baseline_coverage, sample_pointing_losses, Estimate, SimSetup,
};
use thzcov_core::{Model, PointingErrorDist, Topology};

use crate::config::{ConfigError, Experiment, OmegaModeConfig, RunConfig, Scale};
use crate::CliError;

/// Which columns a run fills.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub analytic: bool,
    pub sim: bool,
    pub pass: bool,
}

impl Mode {
    pub const ANALYZE: Mode = Mode {
        analytic: true,
        sim: false,
        pass: false,
    };
    pub const SIMULATE: Mode = Mode {
        analytic: false,
        sim: true,
        pass: false,
    };
    pub const VALIDATE: Mode = Mode {
        analytic: true,
        sim: true,
        pass: true,
    };
    pub const BOTH: Mode = Mode {
        analytic: true,
        sim: true,
        pass: false,
    };
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub topology: String,
    pub location_x: Option<f64>,
    pub location_y: Option<f64>,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub analytic: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_ci95: Option<f64>,
    pub n_trials: Option<u64>,
    pub seed: Option<u64>,
    pub trunc_radius_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub with_pass: bool,
    pub notes: Vec<String>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.pass == Some(false)).count()
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    mode: Mode,
    report: Report,
}

impl Ctx<'_> {
    fn sweep_name(&self) -> String {
        match self.cfg.sweep.scale {
            Scale::Db => format!("{}_dB", self.cfg.sweep.name),
            _ => self.cfg.sweep.name.clone(),
        }
    }

    fn row(&self, experiment: &str, topology: Option<Topology>, ue: Option<(f64, f64)>, point: f64) -> ResultRow {
        ResultRow {
            experiment: experiment.to_string(),
            topology: topology.map(|t| t.name().to_string()).unwrap_or_default(),
            location_x: ue.map(|u| u.0),
            location_y: ue.map(|u| u.1),
            sweep_name: self.sweep_name(),
            sweep_value: point,
            ..ResultRow::default()
        }
    }

    fn with_sim(&self, mut row: ResultRow, e: Estimate) -> ResultRow {
        row.sim_mean = Some(e.mean);
        row.sim_ci95 = Some(e.half_width_95);
        row.n_trials = Some(e.n_trials);
        row.seed = Some(self.cfg.sim.seed);
        row
    }

    fn push(&mut self, mut row: ResultRow) {
        if self.mode.pass {
            if let (Some(a), Some(s)) = (row.analytic, row.sim_mean) {
                row.pass = Some((a - s).abs() <= self.cfg.tolerance);
            }
        }
        self.report.rows.push(row);
    }

    fn grid_topologies(&mut self) -> Vec<Topology> {
        let (grid, other): (Vec<Topology>, Vec<Topology>) = self.cfg.topologies.iter().partition(|t| t.is_grid());
        for t in other {
            let note = format!("topology {} is skipped: experiment {} needs a lattice", t.name(), self.cfg.experiment.name());
            warn!("{note}");
            self.report.notes.push(note);
        }
        grid
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &RunConfig, mode: Mode) -> Result<Report, CliError> {
    if mode.sim && cfg.experiment != Experiment::TrainingVsArray {
        cfg.check_trials()?;
    }
    if mode.pass && cfg.experiment == Experiment::TrainingVsArray {
        return Err(ConfigError::Invalid {
            key: "experiment.name".into(),
            msg: "training_vs_array has no simulation to validate against".into(),
        }
        .into());
    }
    let mut ctx = Ctx {
        cfg,
        mode,
        report: Report {
            with_pass: mode.pass,
            ..Report::default()
        },
    };
    let base = Model::new(cfg.params.clone()).map_err(ConfigError::from)?;
    match cfg.experiment {
        Experiment::CoverageVsBeta | Experiment::Validate => coverage_vs_beta(&mut ctx, &base)?,
        Experiment::AssociationVsLambdaW => association_vs_lambda_w(&mut ctx, &base)?,
        Experiment::CoverageVsDensity => coverage_vs_density(&mut ctx, &base)?,
        Experiment::TrainingVsArray => training_vs_array(&mut ctx, &base)?,
        Experiment::PeDistribution => pe_distribution(&mut ctx, &base),
    }
    Ok(ctx.report)
}

fn topology_model(base: &Model, t: Topology) -> Result<Model, CliError> {
    Ok(base.with(|p| p.topology = t).map_err(ConfigError::from)?)
}

fn coverage_vs_beta(ctx: &mut Ctx, base: &Model) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let name = cfg.experiment.name();
    let points = &cfg.sweep.points;
    let betas: Vec<f64> = points.iter().map(|&p| cfg.sweep.value(p)).collect();
    for &t in &cfg.topologies {
        let model = topology_model(base, t)?;
        if !t.is_grid() {
            // Poisson baseline at the density of a square grid with the same spacing
            if !ctx.mode.sim {
                ctx.report.notes.push(format!("topology {} has no analytic coverage; simulate it", t.name()));
                continue;
            }
            let lambda_a = 1.0 / (cfg.params.d_ap * cfg.params.d_ap);
            ctx.report.notes.push(format!(
                "topology {}: AP positions redrawn every trial at density {} m^-2, UE at the origin",
                t.name(),
                crate::output::fmt_f64(lambda_a)
            ));
            info!("{name}: ppp baseline at lambda_A = {lambda_a}");
            let est = ppp_baseline_coverage(&model, lambda_a, &betas, cfg.sim.n_trials, cfg.sim.seed, &cfg.sim.options)?;
            for (&p, e) in points.iter().zip(est) {
                let row = ctx.with_sim(ctx.row(name, Some(t), None, p), e);
                ctx.push(row);
            }
            continue;
        }
        for &loc in &cfg.locations {
            let ue = representative_location(t, loc).map_err(thzcov_core::analysis::AnalysisError::from)?;
            info!("{name}: {} location {loc}", t.name());
            let analysis = if ctx.mode.analytic {
                Some(LocationAnalysis::new(&model, ue, &cfg.analysis)?)
            } else {
                None
            };
            let sim = if ctx.mode.sim {
                let setup = SimSetup::new(&model, ue, &cfg.sim.options)?;
                let est = estimate_coverage_curve(&setup, &betas, cfg.sim.n_trials, cfg.sim.seed)?;
                Some((setup.radius, est))
            } else {
                None
            };
            for (k, (&p, &b)) in points.iter().zip(&betas).enumerate() {
                let mut row = ctx.row(name, Some(t), Some((ue.x0, ue.y0)), p);
                if let Some(a) = &analysis {
                    row.analytic = Some(a.coverage(b).p_c);
                    row.trunc_radius_m = Some(a.truncation.radius);
                }
                if let Some((radius, est)) = &sim {
                    row = ctx.with_sim(row, est[k]);
                    row.trunc_radius_m.get_or_insert(*radius);
                }
                ctx.push(row);
            }
        }
    }
    Ok(())
}

fn association_vs_lambda_w(ctx: &mut Ctx, base: &Model) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let name = cfg.experiment.name();
    let indep = format!("{name}_independent");
    for t in ctx.grid_topologies() {
        let model_t = topology_model(base, t)?;
        for &loc in &cfg.locations {
            let ue = representative_location(t, loc).map_err(thzcov_core::analysis::AnalysisError::from)?;
            info!("{name}: {} location {loc}", t.name());
            let mut extra = Vec::new();
            for &p in &cfg.sweep.points {
                let lw = cfg.sweep.value(p);
                let model = model_t.with(|q| q.lambda_w = lw).map_err(ConfigError::from)?;
                let mut row = ctx.row(name, Some(t), Some((ue.x0, ue.y0)), p);
                if ctx.mode.analytic {
                    let a = LocationAnalysis::new(&model, ue, &cfg.analysis)?;
                    row.analytic = Some(a.association_total());
                    row.trunc_radius_m = Some(a.truncation.radius);
                    let mut r = row.clone();
                    r.experiment = indep.clone();
                    r.analytic = Some(a.association_total_independent());
                    extra.push(r);
                }
                if ctx.mode.sim {
                    let setup = SimSetup::new(&model, ue, &cfg.sim.options)?;
                    let est = estimate_association(&setup, cfg.sim.n_trials, cfg.sim.seed)?;
                    row = ctx.with_sim(row, est.total);
                    row.trunc_radius_m.get_or_insert(setup.radius);
                }
                ctx.push(row);
            }
            ctx.report.rows.extend(extra);
        }
    }
    Ok(())
}

fn coverage_vs_density(ctx: &mut Ctx, base: &Model) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let name = cfg.experiment.name();
    let beta = thzcov_core::params::db_to_linear(cfg.beta_db);
    for &t in &cfg.topologies {
        let model_t = topology_model(base, t)?;
        if !t.is_grid() {
            if !ctx.mode.sim {
                ctx.report.notes.push(format!("topology {} has no analytic coverage; simulate it", t.name()));
                continue;
            }
            ctx.report
                .notes
                .push(format!("topology {}: AP positions redrawn every trial, UE at the origin", t.name()));
            for &p in &cfg.sweep.points {
                let lambda_a = cfg.sweep.value(p);
                info!("{name}: ppp at lambda_A = {lambda_a}");
                let est = ppp_baseline_coverage(&model_t, lambda_a, &[beta], cfg.sim.n_trials, cfg.sim.seed, &cfg.sim.options)?;
                let row = ctx.with_sim(ctx.row(name, Some(t), None, p), est[0]);
                ctx.push(row);
            }
            continue;
        }
        for &loc in &cfg.locations {
            let ue = representative_location(t, loc).map_err(thzcov_core::analysis::AnalysisError::from)?;
            for &p in &cfg.sweep.points {
                let lambda_a = cfg.sweep.value(p);
                let d_ap = density_spacing(t, lambda_a)?;
                let model = model_t.with(|q| q.d_ap = d_ap).map_err(ConfigError::from)?;
                info!("{name}: {} location {loc} at lambda_A = {lambda_a} (d_AP = {d_ap:.3} m)", t.name());
                let mut row = ctx.row(name, Some(t), Some((ue.x0, ue.y0)), p);
                if ctx.mode.analytic {
                    let a = LocationAnalysis::new(&model, ue, &cfg.analysis)?;
                    row.analytic = Some(a.coverage(beta).p_c);
                    row.trunc_radius_m = Some(a.truncation.radius);
                }
                if ctx.mode.sim {
                    let setup = SimSetup::new(&model, ue, &cfg.sim.options)?;
                    let est = estimate_coverage_curve(&setup, &[beta], cfg.sim.n_trials, cfg.sim.seed)?;
                    row = ctx.with_sim(row, est[0]);
                    row.trunc_radius_m.get_or_insert(setup.radius);
                }
                ctx.push(row);
            }
        }
    }
    Ok(())
}

fn training_vs_array(ctx: &mut Ctx, base: &Model) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let tc = &cfg.training;
    let name = cfg.experiment.name();
    let mode = match tc.omega_mode {
        OmegaModeConfig::Fixed => OmegaMode::Fixed,
        OmegaModeConfig::Tied => OmegaMode::Tied { kappa: tc.kappa },
    };
    let n_a: Vec<u32> = cfg.sweep.points.iter().map(|&p| cfg.sweep.value(p) as u32).collect();
    let mut first_error: Option<TrainingError> = None;
    let mut feasible = 0usize;
    for t in ctx.grid_topologies() {
        let model = topology_model(base, t)?;
        match training_budget(&model, &tc.options) {
            Ok(b) => ctx.report.notes.push(format!(
                "{} at N_A = {}: I_intra = {:e} W, I_inter = {:e} W, eta = {:.4}, N_ct_max = {}, N_ct = {}, N_BT = {}",
                t.name(),
                cfg.params.n_a,
                b.i_intra,
                b.i_inter,
                b.eta,
                b.n_ct_max,
                b.n_ct,
                b.n_bt
            )),
            Err(e) => ctx.report.notes.push(format!("{} at N_A = {}: {e}", t.name(), cfg.params.n_a)),
        }
        let stages: Vec<(f64, Option<TrainingError>)> = match tc.n_ct {
            Some(n_ct) => n_a
                .iter()
                .map(|&n| {
                    let omega_t = match mode {
                        OmegaMode::Fixed => cfg.params.omega_t,
                        OmegaMode::Tied { kappa } => kappa * thzcov_core::params::GAUSSIAN_BEAM_SCALE / n as f64,
                    };
                    let m = model
                        .with(|p| {
                            p.n_a = n;
                            p.omega_t = omega_t;
                        })
                        .map_err(ConfigError::from)?;
                    Ok(match training_stages_for(&m, n_ct) {
                        Ok(s) => (s as f64, None),
                        Err(e) => (f64::INFINITY, Some(e)),
                    })
                })
                .collect::<Result<_, CliError>>()?,
            None => array_sweep(&model, &n_a, mode, &tc.options)?
                .into_iter()
                .map(|pt| {
                    let err = pt.budget.is_none().then(|| {
                        training_budget(
                            &model.with(|p| {
                                p.n_a = pt.n_a;
                                p.omega_t = pt.omega_t;
                            })
                            .expect("validated by the sweep"),
                            &tc.options,
                        )
                        .expect_err("infeasible point")
                    });
                    (pt.stages(), err)
                })
                .collect(),
        };
        for (&p, (s, err)) in cfg.sweep.points.iter().zip(stages) {
            let mut row = ctx.row(name, Some(t), None, p);
            row.analytic = Some(s);
            match err {
                Some(e) => {
                    warn!("{} N_A = {p}: {e}", t.name());
                    first_error.get_or_insert(e);
                }
                None => feasible += 1,
            }
            ctx.push(row);
        }
    }
    if feasible == 0 {
        if let Some(e) = first_error {
            return Err(e.into());
        }
    }
    Ok(())
}

fn pe_distribution(ctx: &mut Ctx, base: &Model) {
    let cfg = ctx.cfg;
    let name = cfg.experiment.name();
    let dist = PointingErrorDist::from_params(&cfg.params);
    let samples = ctx.mode.sim.then(|| {
        let mut s = sample_pointing_losses(base, cfg.sim.options.pointing, cfg.sim.n_trials, cfg.sim.seed);
        s.sort_by(f64::total_cmp);
        s
    });
    for &p in &cfg.sweep.points {
        let h = cfg.sweep.value(p);
        let mut row = ctx.row(name, None, None, p);
        if ctx.mode.analytic {
            row.analytic = Some(dist.cdf(h));
        }
        if let Some(s) = &samples {
            let below = s.partition_point(|&x| x <= h) as u64;
            row = ctx.with_sim(row, Estimate::bernoulli(below, s.len() as u64));
        }
        ctx.push(row);
    }
}
