//! Monte-Carlo experiments over a multi-cell network.
//!
//! Every drop places users, draws slow fading towards every base station,
//! pilots, fast fading, uplink symbols and noise from its own random stream
//! (seeded by the scenario seed, stream = drop index). Each base station then
//! estimates the channels of its own cell with every selected method, and the
//! downlink rates follow from the MF and ZF precoders of all base stations.
//! The draw order never depends on the method subset or on the worker count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{
    blind_from_svd, genie_bound_estimate, ls_all, ls_estimate, pasp_from_svd, semi_blind_estimate,
    semi_blind_estimate_observed, train_map_estimate, EstimateSet, Method, PaspOptions, SemiBlindProblem,
};
use crate::evaluation::{
    downlink_rates, empirical_cdf, mean, mf_precoder, percentile, subspace_angle, zf_precoder, FailureRecord,
    MetricsRecord, MetricsTable,
};
use crate::numerics::{svd, OptimizerOptions, SvdResult};
use crate::scenario::{allocate_pilots, build_layout, drop_users, network_fading, CellLayout, PilotBook, Scenario};
use crate::signal::{cn01, cn_matrix, draw_channels, synth_training_scaled, write_matrix_csv};
use crate::{CMat, Error, Result, C64};

/// Random-initialization streams live above every drop stream.
const INIT_STREAM_OFFSET: u64 = 1 << 40;

fn default_drops() -> usize {
    1
}
fn default_workers() -> usize {
    1
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_checkpoints() -> Vec<usize> {
    let mut c: Vec<usize> = (0..=10).map(|e| 1 << e).collect();
    c.push(1280);
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_drops")]
    pub drops: usize,
    /// Uplink lengths for the rate sweep; the scenario's `T_ul` is used
    /// when absent.
    #[serde(default)]
    pub sweep: Option<Vec<usize>>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Write `H`, `Y_ul`, `Y_tr` and `X` of base station 0 in drop 0.
    #[serde(default)]
    pub dump_matrices: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            drops: default_drops(),
            sweep: None,
            out: default_out(),
            workers: default_workers(),
            dump_matrices: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSettings {
    /// Iteration counts at which the average MF rate is reported.
    pub checkpoints: Vec<usize>,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            checkpoints: default_checkpoints(),
        }
    }
}

/// Contents of a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    #[serde(default)]
    pub experiment: ExperimentSettings,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub pasp: PaspOptions,
    #[serde(default)]
    pub convergence: ConvergenceSettings,
}

impl ExperimentPlan {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            experiment: ExperimentSettings::default(),
            optimizer: OptimizerOptions::default(),
            pasp: PaspOptions::default(),
            convergence: ConvergenceSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.optimizer.validate()?;
        let e = &self.experiment;
        if e.drops == 0 {
            return Err(Error::Config("drops must be at least 1".into()));
        }
        if e.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if e.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if e.sweep.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(Error::Config("sweep must not be empty".into()));
        }
        let c = &self.convergence.checkpoints;
        if c.is_empty() || c[0] == 0 || c.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("checkpoints must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    /// Uplink lengths evaluated, base value first when there is no sweep.
    pub fn uplink_lengths(&self) -> Vec<usize> {
        self.experiment
            .sweep
            .clone()
            .unwrap_or_else(|| vec![self.scenario.t_ul])
    }

    fn has(&self, m: Method) -> bool {
        self.experiment.methods.contains(&m)
    }

    /// Selected methods in canonical order, without duplicates.
    pub fn methods(&self) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| self.has(*m)).collect()
    }
}

/// Everything random about one drop.
#[derive(Clone, Debug)]
pub struct DropRealization {
    pub pilots: PilotBook,
    /// Slow fading towards every base station, users in natural order.
    pub beta: Vec<Vec<f64>>,
    /// `channels[j]`: `M x LK` true channels to base station `j`.
    pub channels: Vec<CMat>,
    /// `T_max x LK` uplink symbols, shared by all base stations.
    pub x: CMat,
    pub y_tr: Vec<CMat>,
    /// `M x T_max` uplink noise per base station.
    noise_ul: Vec<CMat>,
    rho_ul: f64,
}

impl DropRealization {
    /// `sqrt(rho_ul) G_j X^H + N_j` restricted to the first `t_ul` samples.
    pub fn uplink(&self, bs: usize, t_ul: usize) -> CMat {
        let x = self.x.rows(0, t_ul);
        let mut y = &self.channels[bs] * x.adjoint() * C64::new(self.rho_ul.sqrt(), 0.0);
        y += self.noise_ul[bs].columns(0, t_ul);
        y
    }
}

pub fn drop_rng(seed: u64, drop: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(drop as u64);
    rng
}

/// Draws drop `drop`; `t_max` uplink samples are generated.
pub fn realize_drop(scenario: &Scenario, layout: &CellLayout, drop: usize, t_max: usize) -> Result<DropRealization> {
    let mut rng = drop_rng(scenario.seed, drop);
    let positions = drop_users(layout, scenario, &mut rng);
    let fading = network_fading(&positions, layout, scenario, &mut rng);
    let pilots = allocate_pilots(scenario, &mut rng)?;
    let channels: Vec<CMat> = fading
        .iter()
        .map(|f| draw_channels(f, scenario.antennas, &mut rng).h)
        .collect();
    let x = cn_matrix(t_max, scenario.total_users(), &mut rng);
    let rho_tr = scenario.rho_tr();
    let y_tr = channels
        .iter()
        .map(|h| synth_training_scaled(h, rho_tr, &pilots, 1.0, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let noise_ul = (0..channels.len())
        .map(|_| cn_matrix(scenario.antennas, t_max, &mut rng))
        .collect();
    Ok(DropRealization {
        pilots,
        beta: fading.into_iter().map(|f| f.beta).collect(),
        channels,
        x,
        y_tr,
        noise_ul,
        rho_ul: scenario.rho_ul,
    })
}

/// Cell order seen by base station `bs`: its own cell first.
pub fn cell_order(bs: usize, cells: usize) -> Vec<usize> {
    std::iter::once(bs).chain((0..cells).filter(|&i| i != bs)).collect()
}

fn reorder_users(order: &[usize], k: usize) -> Vec<usize> {
    order.iter().flat_map(|&c| (c * k)..(c * k + k)).collect()
}

fn select_columns(m: &CMat, cols: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

/// Observations and prior knowledge of one base station with its own cell
/// moved to index 0.
pub struct LocalView {
    pub y_ul: CMat,
    pub y_tr: CMat,
    pub x: CMat,
    pub pilots: PilotBook,
    pub beta: Vec<f64>,
}

impl LocalView {
    pub fn new(real: &DropRealization, bs: usize, t_ul: usize) -> Self {
        let k = real.pilots.users_per_cell();
        let order = cell_order(bs, real.pilots.cells());
        let users = reorder_users(&order, k);
        Self {
            y_ul: real.uplink(bs, t_ul),
            y_tr: real.y_tr[bs].clone(),
            x: select_columns(&real.x.rows(0, t_ul).into_owned(), &users),
            pilots: real.pilots.reorder_cells(&order),
            beta: users.iter().map(|&n| real.beta[bs][n]).collect(),
        }
    }
}

/// Lazily shared intermediate results of one base station.
struct Workspace<'a> {
    view: &'a LocalView,
    scenario: &'a Scenario,
    pasp_opts: &'a PaspOptions,
    dec: Option<SvdResult>,
    ls_all: Option<CMat>,
    pasp: Option<EstimateSet>,
}

impl<'a> Workspace<'a> {
    fn dec(&mut self) -> Result<&SvdResult> {
        if self.dec.is_none() {
            self.dec = Some(svd(&self.view.y_ul)?);
        }
        Ok(self.dec.as_ref().expect("just set"))
    }

    fn ls_all(&mut self) -> Result<&CMat> {
        if self.ls_all.is_none() {
            self.ls_all = Some(ls_all(&self.view.y_tr, &self.view.pilots, self.scenario.rho_tr())?);
        }
        Ok(self.ls_all.as_ref().expect("just set"))
    }

    fn pasp(&mut self) -> Result<&EstimateSet> {
        if self.pasp.is_none() {
            let ls = self.ls_all()?.clone();
            let dec = self.dec()?.clone();
            let est = pasp_from_svd(&dec, &ls, &self.view.beta, &self.view.pilots, self.pasp_opts)?;
            self.pasp = Some(est);
        }
        Ok(self.pasp.as_ref().expect("just set"))
    }

    fn blind(&mut self) -> Result<EstimateSet> {
        let t = self.view.y_ul.ncols();
        let dec = self.dec()?.clone();
        blind_from_svd(&dec, &self.view.beta, self.scenario.rho_ul, t)
    }
}

fn own_cell_estimate(ws: &mut Workspace<'_>, method: Method, opts: &OptimizerOptions) -> Result<CMat> {
    let k = ws.view.pilots.users_per_cell();
    let s = ws.scenario;
    let v = ws.view;
    let est = match method {
        Method::Ls => ls_estimate(&v.y_tr, &v.pilots.block(0), s.rho_tr())?,
        Method::TrainMap => train_map_estimate(&v.y_tr, &v.pilots, &v.beta, s.rho_tr())?,
        Method::Blind => ws.blind()?.cell_block(0, k),
        Method::Pasp => ws.pasp()?.cell_block(0, k),
        Method::SemiBlind => {
            let init = ws.pasp()?.h_hat.clone();
            let problem = SemiBlindProblem::new(&v.y_ul, &v.y_tr, &v.pilots, &v.beta, s.rho_ul, s.rho_tr())?;
            semi_blind_estimate(&init, &problem, opts)?.cell_block(0, k)
        }
        Method::Genie => genie_bound_estimate(&v.y_tr, &v.y_ul, &v.x, &v.pilots, &v.beta, s.rho_tr(), s.rho_ul)?,
    };
    if est.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(est)
    } else {
        Err(Error::NonFinite("channel estimate"))
    }
}

/// Records of one drop at one uplink length.
fn evaluate_drop(
    plan: &ExperimentPlan,
    real: &DropRealization,
    drop: usize,
    t_ul: usize,
    table: &mut MetricsTable,
) -> Result<()> {
    let s = &plan.scenario;
    let l = s.cells;
    let k = s.users_per_cell;
    let views: Vec<LocalView> = (0..l).map(|bs| LocalView::new(real, bs, t_ul)).collect();
    let mut spaces: Vec<Workspace<'_>> = views
        .iter()
        .map(|view| Workspace {
            view,
            scenario: s,
            pasp_opts: &plan.pasp,
            dec: None,
            ls_all: None,
            pasp: None,
        })
        .collect();
    for method in plan.methods() {
        let estimates: Result<Vec<CMat>> = spaces
            .iter_mut()
            .map(|ws| own_cell_estimate(ws, method, &plan.optimizer))
            .collect();
        let estimates = match estimates {
            Ok(e) => e,
            Err(err) => {
                table.failures.push(FailureRecord {
                    drop,
                    method,
                    t_ul,
                    reason: err.to_string(),
                });
                continue;
            }
        };
        let mf: Vec<CMat> = estimates.iter().map(|e| mf_precoder(e).w).collect();
        let zf: Vec<CMat> = estimates.iter().map(|e| zf_precoder(e).w).collect();
        let rate_mf = downlink_rates(&real.channels, &mf, s.rho_dl(), k)?;
        let rate_zf = downlink_rates(&real.channels, &zf, s.rho_dl(), k)?;
        for (cell, est) in estimates.iter().enumerate() {
            for user in 0..k {
                let n = cell * k + user;
                let h = real.channels[cell].column(n).into_owned();
                let e = est.column(user).into_owned();
                table.records.push(MetricsRecord {
                    drop,
                    cell,
                    user,
                    method,
                    t_ul,
                    angle_deg: subspace_angle(&h, &e)?.degrees,
                    rate_mf: rate_mf[n],
                    rate_zf: rate_zf[n],
                    mse: (&e - &h).norm_squared() / h.len() as f64,
                });
            }
        }
    }
    Ok(())
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs all drops and returns the per-user records.
pub fn simulate(plan: &ExperimentPlan) -> Result<MetricsTable> {
    plan.validate()?;
    let layout = build_layout(&plan.scenario)?;
    let lengths = plan.uplink_lengths();
    let t_max = lengths.iter().copied().max().unwrap_or(0);
    let pool = thread_pool(plan.experiment.workers)?;
    let per_drop: Vec<Result<MetricsTable>> = pool.install(|| {
        (0..plan.experiment.drops)
            .into_par_iter()
            .map(|d| {
                let real = realize_drop(&plan.scenario, &layout, d, t_max)?;
                let mut table = MetricsTable::default();
                for &t in &lengths {
                    evaluate_drop(plan, &real, d, t, &mut table)?;
                }
                Ok(table)
            })
            .collect()
    });
    let mut table = MetricsTable::default();
    for part in per_drop {
        let part = part?;
        table.records.extend(part.records);
        table.failures.extend(part.failures);
    }
    Ok(table)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_series<W: Write>(out: &mut W, x_name: &str, x: &[f64], names: &[String], cols: &[Vec<f64>]) -> Result<()> {
    write!(out, "{x_name}")?;
    for n in names {
        write!(out, ",{n}")?;
    }
    writeln!(out)?;
    for (i, xv) in x.iter().enumerate() {
        if xv.fract() == 0.0 {
            write!(out, "{xv}")?;
        } else {
            write!(out, "{xv:.6}")?;
        }
        for c in cols {
            write!(out, ",{:.6}", c[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn cdf_columns(table: &MetricsTable, methods: &[Method], grid: &[f64], t_ul: usize, pick: fn(&MetricsRecord) -> f64) -> Vec<Vec<f64>> {
    methods
        .iter()
        .map(|&m| {
            let xs: Vec<f64> = table.select(m, t_ul).map(pick).collect();
            empirical_cdf(&xs, grid).unwrap_or_else(|_| vec![f64::NAN; grid.len()])
        })
        .collect()
}

fn stat_or_nan(xs: &[f64], f: impl Fn(&[f64]) -> Result<f64>) -> f64 {
    f(xs).unwrap_or(f64::NAN)
}

/// Writes all CSV tables for `table` into `dir`; returns the file paths.
pub fn write_outputs(plan: &ExperimentPlan, table: &MetricsTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let methods = plan.methods();
    let names: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
    let base = plan.uplink_lengths()[0];
    let mut files = Vec::new();

    let angle_grid: Vec<f64> = (0..=180).map(|i| i as f64 * 0.5).collect();
    let cols = cdf_columns(table, &methods, &angle_grid, base, |r| r.angle_deg);
    write_series(&mut create(dir, "angle_cdf.csv")?, "theta_deg", &angle_grid, &names, &cols)?;
    files.push(dir.join("angle_cdf.csv"));

    let max_rate = table
        .records
        .iter()
        .filter(|r| r.t_ul == base)
        .flat_map(|r| [r.rate_mf, r.rate_zf])
        .fold(0.0, f64::max);
    let steps = (max_rate / 0.05).ceil() as usize + 1;
    let rate_grid: Vec<f64> = (0..=steps).map(|i| i as f64 * 0.05).collect();
    for (name, pick) in [
        ("rate_cdf_mf.csv", (|r: &MetricsRecord| r.rate_mf) as fn(&MetricsRecord) -> f64),
        ("rate_cdf_zf.csv", |r: &MetricsRecord| r.rate_zf),
    ] {
        let cols = cdf_columns(table, &methods, &rate_grid, base, pick);
        write_series(&mut create(dir, name)?, "rate", &rate_grid, &names, &cols)?;
        files.push(dir.join(name));
    }

    let lengths = plan.uplink_lengths();
    let xs: Vec<f64> = lengths.iter().map(|&t| t as f64).collect();
    for (prec, pick) in [
        ("mf", (|r: &MetricsRecord| r.rate_mf) as fn(&MetricsRecord) -> f64),
        ("zf", |r: &MetricsRecord| r.rate_zf),
    ] {
        for (stat, f) in [
            ("mean", (|v: &[f64]| Ok(mean(v))) as fn(&[f64]) -> Result<f64>),
            ("p5", |v: &[f64]| percentile(v, 5.0)),
        ] {
            let cols: Vec<Vec<f64>> = methods
                .iter()
                .map(|&m| {
                    lengths
                        .iter()
                        .map(|&t| stat_or_nan(&table.select(m, t).map(pick).collect::<Vec<_>>(), f))
                        .collect()
                })
                .collect();
            let name = format!("sweep_{prec}_{stat}.csv");
            write_series(&mut create(dir, &name)?, "T_ul", &xs, &names, &cols)?;
            files.push(dir.join(name));
        }
    }

    let mut out = create(dir, "summary.csv")?;
    writeln!(
        out,
        "method,T_ul,drops_ok,drops_failed,mean_angle_deg,mean_rate_mf,mean_rate_zf,p5_rate_mf,p5_rate_zf"
    )?;
    for &m in &methods {
        let failed = table.failed_drops(m, base);
        let angles = table.angles(m, base);
        let mf = table.rates_mf(m, base);
        let zf = table.rates_zf(m, base);
        writeln!(
            out,
            "{m},{base},{},{failed},{:.6},{:.6},{:.6},{:.6},{:.6}",
            plan.experiment.drops - failed,
            mean(&angles),
            mean(&mf),
            mean(&zf),
            stat_or_nan(&mf, |v| percentile(v, 5.0)),
            stat_or_nan(&zf, |v| percentile(v, 5.0)),
        )?;
    }
    out.flush()?;
    files.push(dir.join("summary.csv"));

    let mut out = create(dir, "metrics.csv")?;
    table.write_csv(&mut out)?;
    out.flush()?;
    files.push(dir.join("metrics.csv"));

    let mut out = create(dir, "failures.csv")?;
    writeln!(out, "drop,method,T_ul,reason")?;
    for f in &table.failures {
        writeln!(out, "{},{},{},\"{}\"", f.drop, f.method, f.t_ul, f.reason.replace('"', "'"))?;
    }
    out.flush()?;
    files.push(dir.join("failures.csv"));

    if plan.experiment.dump_matrices {
        let layout = build_layout(&plan.scenario)?;
        let real = realize_drop(&plan.scenario, &layout, 0, base.max(plan.uplink_lengths().into_iter().max().unwrap_or(0)))?;
        let dump = dir.join("dump");
        fs::create_dir_all(&dump)?;
        for (name, m) in [
            ("H.csv", real.channels[0].clone()),
            ("Y_ul.csv", real.uplink(0, base)),
            ("Y_tr.csv", real.y_tr[0].clone()),
            ("X.csv", real.x.rows(0, base).into_owned()),
        ] {
            let mut out = create(&dump, name)?;
            write_matrix_csv(&m, &mut out)?;
            out.flush()?;
            files.push(dump.join(name));
        }
    }
    Ok(files)
}

/// Runs the plan and writes its CSV tables into the configured directory.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<MetricsTable> {
    let table = simulate(plan)?;
    write_outputs(plan, &table, &plan.experiment.out)?;
    Ok(table)
}

/// Starting points of the convergence study, in output column order.
pub const CONVERGENCE_INITS: [&str; 4] = ["random", "ls", "blind", "pasp"];

/// Result of the convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub checkpoints: Vec<usize>,
    /// `rates[init][c]`: average MF rate after `checkpoints[c]` iterations,
    /// averaged over users and drops.
    pub rates: Vec<Vec<f64>>,
    /// `per_drop[d][init][c]`: the same per drop.
    pub per_drop: Vec<Vec<Vec<f64>>>,
    /// `traces[d][init][bs]`: semi-blind objective after each iteration.
    pub traces: Vec<Vec<Vec<Vec<f64>>>>,
}

fn initial_estimates(ws: &mut Workspace<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<CMat>> {
    let v = ws.view;
    let mean_beta = mean(&v.beta);
    let (m, n) = (v.y_ul.nrows(), v.beta.len());
    let random = CMat::from_fn(m, n, |_, _| cn01(rng) * mean_beta.sqrt());
    let ls = ws.ls_all()?.clone();
    let blind = ws.blind()?.h_hat;
    let pasp = ws.pasp()?.h_hat.clone();
    Ok(vec![random, ls, blind, pasp])
}

fn convergence_drop(plan: &ExperimentPlan, layout: &CellLayout, drop: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
    let s = &plan.scenario;
    let (l, k) = (s.cells, s.users_per_cell);
    let checkpoints = &plan.convergence.checkpoints;
    let last = *checkpoints.last().expect("validated");
    let opts = OptimizerOptions {
        max_iters: last,
        ..plan.optimizer.clone()
    };
    let real = realize_drop(s, layout, drop, s.t_ul)?;
    let mut init_rng = drop_rng(s.seed, drop);
    init_rng.set_stream(INIT_STREAM_OFFSET + drop as u64);

    // blocks[init][bs][c]: own-cell iterate at checkpoint c
    let mut blocks = vec![vec![Vec::new(); l]; CONVERGENCE_INITS.len()];
    let mut traces = vec![Vec::with_capacity(l); CONVERGENCE_INITS.len()];
    for bs in 0..l {
        let view = LocalView::new(&real, bs, s.t_ul);
        let mut ws = Workspace {
            view: &view,
            scenario: s,
            pasp_opts: &plan.pasp,
            dec: None,
            ls_all: None,
            pasp: None,
        };
        let inits = initial_estimates(&mut ws, &mut init_rng)?;
        let problem = SemiBlindProblem::new(&view.y_ul, &view.y_tr, &view.pilots, &view.beta, s.rho_ul, s.rho_tr())?;
        for (i, init) in inits.iter().enumerate() {
            let mut snaps: Vec<CMat> = Vec::with_capacity(checkpoints.len());
            let mut latest = init.columns(0, k).into_owned();
            let est = semi_blind_estimate_observed(init, &problem, &opts, |it, h| {
                latest = h.columns(0, k).into_owned();
                if snaps.len() < checkpoints.len() && it == checkpoints[snaps.len()] {
                    snaps.push(latest.clone());
                }
            })?;
            // the optimizer may stop before the last checkpoint
            while snaps.len() < checkpoints.len() {
                snaps.push(latest.clone());
            }
            blocks[i][bs] = snaps;
            traces[i].push(est.trace.unwrap_or_default());
        }
    }
    let rates = (0..CONVERGENCE_INITS.len())
        .map(|i| {
            (0..checkpoints.len())
                .map(|c| {
                    let w: Vec<CMat> = (0..l).map(|bs| mf_precoder(&blocks[i][bs][c]).w).collect();
                    downlink_rates(&real.channels, &w, s.rho_dl(), k).map(|r| mean(&r))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rates, traces))
}

/// Semi-blind iterations from four starting points; average MF rate versus
/// iteration count.
pub fn convergence_study(plan: &ExperimentPlan) -> Result<ConvergenceReport> {
    plan.validate()?;
    let layout = build_layout(&plan.scenario)?;
    let pool = thread_pool(plan.experiment.workers)?;
    let per: Vec<Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)>> = pool.install(|| {
        (0..plan.experiment.drops)
            .into_par_iter()
            .map(|d| convergence_drop(plan, &layout, d))
            .collect()
    });
    let per: Vec<_> = per.into_iter().collect::<Result<_>>()?;
    let checkpoints = plan.convergence.checkpoints.clone();
    let rates = (0..CONVERGENCE_INITS.len())
        .map(|i| {
            (0..checkpoints.len())
                .map(|c| mean(&per.iter().map(|(r, _)| r[i][c]).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    let (per_drop, traces) = per.into_iter().unzip();
    Ok(ConvergenceReport {
        checkpoints,
        rates,
        per_drop,
        traces,
    })
}

/// Runs the convergence study and writes `converge.csv`.
pub fn run_convergence_study(plan: &ExperimentPlan) -> Result<ConvergenceReport> {
    let report = convergence_study(plan)?;
    let dir = &plan.experiment.out;
    fs::create_dir_all(dir)?;
    let names: Vec<String> = CONVERGENCE_INITS.iter().map(|s| s.to_string()).collect();
    let xs: Vec<f64> = report.checkpoints.iter().map(|&c| c as f64).collect();
    let mut out = create(dir, "converge.csv")?;
    write_series(&mut out, "iterations", &xs, &names, &report.rates)?;
    out.flush()?;
    Ok(report)
}
