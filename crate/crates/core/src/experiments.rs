//! Registry of the reference scenarios and the Monte Carlo harness that runs them.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::array_model::{ArrayGeometry, DoaMode, PhiSetting, Scenario};
use crate::chan_est::{dft_pilots, ls_estimate_per_user, training_block};
use crate::linalg::frobenius;
use crate::montecarlo::fold_trials;
use crate::noise_spectrum::{
    crossover_width_deg, default_zeta, fmt, pq_onebit_analytic, pq_sigmadelta_sector, run_spectrum_unchecked,
    uniform_grid, Pipeline, SpectrumOptions, SpectrumRun, DEFAULT_GRID_POINTS,
};
use crate::receivers::{
    g_phi, phi_star, se_mrc_closed_form, se_simulated_unchecked, Architecture, CsiMode, ReceiverKind,
    SeOptions, SeResult,
};
use crate::rng::{derive_seed, purpose, stream_rng, trial_rng};
use crate::sigma_delta::sd_linear_model;
use crate::{Error, Result};

/// Trial count used unless a run asks for more.
pub const DESK_TRIALS: usize = 1000;
/// Trial count of the published figures.
pub const FULL_SCALE_TRIALS: usize = 10_000;

/// SNR grid `−10:2:20` dB.
pub fn default_snr_grid() -> Vec<f64> {
    (0..16).map(|i| -10.0 + 2.0 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Spectrum,
    Se,
    PhiOpt,
    ChanEst,
}

/// Swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    SnrDb(Vec<f64>),
    DOverLambda(Vec<f64>),
    M(Vec<usize>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::SnrDb(v) => v.len(),
            Sweep::DOverLambda(v) => v.len(),
            Sweep::M(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::SnrDb(_) => "snr_db",
            Sweep::DOverLambda(_) => "d_over_lambda",
            Sweep::M(_) => "m",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    /// Figure caption the parameters are taken from.
    pub caption: String,
    pub kind: ExperimentKind,
    pub scenario: Scenario,
    pub geometry: ArrayGeometry,
    pub sweep: Sweep,
    pub architectures: Vec<Architecture>,
    pub receiver: ReceiverKind,
    pub csi: Vec<CsiMode>,
    pub trials: usize,
    pub seed: u64,
    pub doa_mode: DoaMode,
    /// Adds closed-form MRC rows for the Sigma-Delta architecture.
    pub closed_form: bool,
}

impl ExperimentSpec {
    /// Every problem with the spec, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.sweep.is_empty() {
            out.push(format!("{}: sweep list is empty", self.sweep.axis()));
        }
        if self.trials < 1 {
            out.push("trials: must be at least 1".into());
        }
        if self.architectures.is_empty() {
            out.push("arch: no architecture selected".into());
        }
        if self.csi.is_empty() {
            out.push("csi: no CSI mode selected".into());
        }
        if let Err(e) = self.geometry.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.scenario.validate() {
            out.push(e.to_string());
        }
        match &self.sweep {
            Sweep::DOverLambda(v) if v.iter().any(|&d| !(d > 0.0)) => {
                out.push("d_over_lambda: every spacing must be positive".into())
            }
            Sweep::M(v) if v.iter().any(|&m| m < 1) => {
                out.push("M: every antenna count must be at least 1".into())
            }
            _ => {}
        }
        if self.kind == ExperimentKind::Se && self.receiver == ReceiverKind::Zf {
            let min_m = match &self.sweep {
                Sweep::M(v) => v.iter().copied().min().unwrap_or(0),
                _ => self.geometry.m,
            };
            if min_m <= self.scenario.k {
                out.push(format!(
                    "M: zero forcing needs more antennas than users (M = {min_m}, K = {})",
                    self.scenario.k
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p))
        }
    }

    /// Scenario and geometry at each sweep point, with the point's axis value.
    pub fn points(&self) -> Vec<SweepPoint> {
        let base = |scn: Scenario, geom: ArrayGeometry| SweepPoint {
            snr_db: scn.snr_db(),
            scenario: scn,
            geometry: geom,
        };
        match &self.sweep {
            // Keep the requested value rather than the dB round trip through p0.
            Sweep::SnrDb(v) => v
                .iter()
                .map(|&s| SweepPoint {
                    snr_db: s,
                    ..base(self.scenario.with_snr_db(s), self.geometry)
                })
                .collect(),
            Sweep::DOverLambda(v) => v
                .iter()
                .map(|&d| {
                    base(
                        self.scenario.clone(),
                        ArrayGeometry {
                            d_over_lambda: d,
                            ..self.geometry
                        },
                    )
                })
                .collect(),
            Sweep::M(v) => v
                .iter()
                .map(|&m| base(self.scenario.clone(), ArrayGeometry { m, ..self.geometry }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub scenario: Scenario,
    pub geometry: ArrayGeometry,
    pub snr_db: f64,
}

/// The common scenario: 10 users, sector of 40° centred at 30°.
fn reference_scenario(l: usize, snr_db: f64) -> Scenario {
    Scenario::new(10, l, 30f64.to_radians(), 40f64.to_radians(), snr_db).expect("reference scenario is valid")
}

fn spec(
    name: &str,
    caption: &str,
    kind: ExperimentKind,
    l: usize,
    snr_db: f64,
    sweep: Sweep,
) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        caption: caption.into(),
        kind,
        scenario: reference_scenario(l, snr_db),
        geometry: ArrayGeometry {
            m: 100,
            d_over_lambda: 0.25,
        },
        sweep,
        architectures: Architecture::ALL.to_vec(),
        receiver: ReceiverKind::Mrc,
        csi: vec![CsiMode::Perfect],
        trials: DESK_TRIALS,
        seed: 1,
        doa_mode: DoaMode::PerTrial,
        closed_form: false,
    }
}

/// Names of the builtin experiments.
pub const BUILTIN: [&str; 5] = ["fig1", "fig2", "fig3", "fig4", "fig5"];

/// Builtin experiment by name.
pub fn builtin(name: &str) -> Result<ExperimentSpec> {
    let mut s = match name {
        "fig1" => {
            let mut s = spec(
                "fig1",
                "Spatial spectrum of the quantization noise for the ΣΔ and standard one-bit \
                 architectures when L = 50, d = λ/4, and SNR = 0 dB.",
                ExperimentKind::Spectrum,
                50,
                0.0,
                Sweep::SnrDb(vec![0.0]),
            );
            s.doa_mode = DoaMode::Fixed;
            s
        }
        "fig2" => {
            let mut s = spec(
                "fig2",
                "Spatial spectrum of the quantization noise for the ΣΔ and standard one-bit \
                 architectures for different antenna spacings when L = 50 and SNR = 0 dB.",
                ExperimentKind::Spectrum,
                50,
                0.0,
                Sweep::DOverLambda(vec![0.5, 0.25, 0.125, 0.0625]),
            );
            s.doa_mode = DoaMode::Fixed;
            s
        }
        "fig3" => {
            let mut s = spec(
                "fig3",
                "SE versus SNR for MRC receiver with perfect CSI, L = 50, and d = λ/4.",
                ExperimentKind::Se,
                50,
                0.0,
                Sweep::SnrDb(default_snr_grid()),
            );
            s.closed_form = true;
            s
        }
        "fig4" => {
            let mut s = spec(
                "fig4",
                "SE versus SNR for ZF receiver with and without channel estimation error. \
                 L = 20, d = λ/4.",
                ExperimentKind::Se,
                20,
                0.0,
                Sweep::SnrDb(default_snr_grid()),
            );
            s.receiver = ReceiverKind::Zf;
            s.csi = vec![CsiMode::Perfect, CsiMode::Ls];
            s
        }
        "fig5" => {
            let mut s = spec(
                "fig5",
                "SE versus M for ZF receiver with and without channel estimation error. \
                 L = 15, d = λ/4, SNR = 10 dB.",
                ExperimentKind::Se,
                15,
                10.0,
                Sweep::M(vec![100, 150, 200, 250, 300]),
            );
            s.receiver = ReceiverKind::Zf;
            s.csi = vec![CsiMode::Perfect, CsiMode::Ls];
            s
        }
        other => return Err(Error::UnknownExperiment(other.into())),
    };
    s.scenario.phi = PhiSetting::Auto;
    Ok(s)
}

/// One spectral-efficiency row.
#[derive(Debug, Clone, Serialize)]
pub struct SeRow {
    pub snr_db: f64,
    pub m: usize,
    pub d_over_lambda: f64,
    pub arch: Architecture,
    pub receiver: ReceiverKind,
    pub csi: CsiMode,
    /// `simulated` or `closed_form`.
    pub method: &'static str,
    pub result: SeResult,
}

/// Spectrum run at one sweep point.
#[derive(Debug, Clone)]
pub struct SpectrumPoint {
    pub snr_db: f64,
    pub m: usize,
    pub d_over_lambda: f64,
    pub run: SpectrumRun,
    /// Beamwidth around the sector centre where Sigma-Delta beats one-bit, from
    /// the analytic curves.
    pub crossover_deg: f64,
    pub pq_onebit_sector: f64,
    pub pq_sd_sector: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChanEstRow {
    pub snr_db: f64,
    pub m: usize,
    pub d_over_lambda: f64,
    pub arch: Architecture,
    /// `E‖Ĝ − G‖² / E‖G‖²`.
    pub nmse: f64,
    pub nmse_stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiRow {
    pub snr_db: f64,
    pub m: usize,
    pub d_over_lambda: f64,
    pub phi_star: f64,
    pub g_phi_star: f64,
    pub phi_auto: f64,
    pub g_phi_auto: f64,
    pub g_phi_zero: f64,
}

#[derive(Debug, Clone)]
pub enum ExperimentOutput {
    Spectrum(Vec<SpectrumPoint>),
    Se(Vec<SeRow>),
    ChanEst(Vec<ChanEstRow>),
    PhiOpt(Vec<PhiRow>),
}

/// CSV-ready table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file_name: &str, header: &[&str]) -> Self {
        Self {
            file_name: file_name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(&self.file_name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub output: ExperimentOutput,
    pub wall_time_s: f64,
}

impl ExperimentResult {
    pub fn tables(&self) -> Vec<Table> {
        match &self.output {
            ExperimentOutput::Se(rows) => se_tables(rows),
            ExperimentOutput::Spectrum(points) => spectrum_tables(points),
            ExperimentOutput::ChanEst(rows) => {
                let mut t = Table::new(
                    "chanest.csv",
                    &[
                        "snr_db",
                        "arch",
                        "nmse",
                        "nmse_stderr",
                        "m",
                        "d_over_lambda",
                        "trials",
                    ],
                );
                for r in rows {
                    t.rows.push(vec![
                        fmt(r.snr_db),
                        r.arch.to_string(),
                        fmt(r.nmse),
                        fmt(r.nmse_stderr),
                        r.m.to_string(),
                        fmt(r.d_over_lambda),
                        r.trials.to_string(),
                    ]);
                }
                vec![t]
            }
            ExperimentOutput::PhiOpt(rows) => {
                let mut t = Table::new(
                    "phi_opt.csv",
                    &[
                        "snr_db",
                        "m",
                        "d_over_lambda",
                        "phi_star_deg",
                        "g_phi_star",
                        "phi_auto_deg",
                        "g_phi_auto",
                        "g_phi_zero",
                    ],
                );
                for r in rows {
                    t.rows.push(vec![
                        fmt(r.snr_db),
                        r.m.to_string(),
                        fmt(r.d_over_lambda),
                        fmt(r.phi_star.to_degrees()),
                        fmt(r.g_phi_star),
                        fmt(r.phi_auto.to_degrees()),
                        fmt(r.g_phi_auto),
                        fmt(r.g_phi_zero),
                    ]);
                }
                vec![t]
            }
        }
    }

    /// Writes every table and `manifest.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in self.tables() {
            written.push(t.write(dir)?);
        }
        let manifest = Manifest {
            experiment: &self.spec.name,
            caption: &self.spec.caption,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.spec.seed,
            trials: self.spec.trials,
            wall_time_s: self.wall_time_s,
            spec: &self.spec,
        };
        let path = dir.join("manifest.toml");
        fs::write(&path, toml::to_string(&manifest)?)?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    caption: &'a str,
    version: &'a str,
    seed: u64,
    trials: usize,
    wall_time_s: f64,
    spec: &'a ExperimentSpec,
}

fn se_tables(rows: &[SeRow]) -> Vec<Table> {
    let mut main = Table::new(
        "se.csv",
        &[
            "snr_db",
            "arch",
            "receiver",
            "se_sum",
            "se_stderr",
            "m",
            "d_over_lambda",
            "csi",
            "method",
            "trials",
            "skipped",
        ],
    );
    let mut per_user = Table::new(
        "se_per_user.csv",
        &[
            "snr_db",
            "arch",
            "receiver",
            "m",
            "d_over_lambda",
            "csi",
            "method",
            "user",
            "se",
            "se_stderr",
        ],
    );
    for r in rows {
        main.rows.push(vec![
            fmt(r.snr_db),
            r.arch.to_string(),
            r.receiver.to_string(),
            fmt(r.result.sum),
            fmt(r.result.sum_stderr),
            r.m.to_string(),
            fmt(r.d_over_lambda),
            r.csi.to_string(),
            r.method.to_string(),
            r.result.trials.to_string(),
            r.result.skipped.to_string(),
        ]);
        for (k, (se, err)) in r.result.per_user.iter().zip(&r.result.stderr).enumerate() {
            per_user.rows.push(vec![
                fmt(r.snr_db),
                r.arch.to_string(),
                r.receiver.to_string(),
                r.m.to_string(),
                fmt(r.d_over_lambda),
                r.csi.to_string(),
                r.method.to_string(),
                k.to_string(),
                fmt(*se),
                fmt(*err),
            ]);
        }
    }
    vec![main, per_user]
}

fn spectrum_tables(points: &[SpectrumPoint]) -> Vec<Table> {
    let mut curves = Table::new(
        "spectrum.csv",
        &[
            "u",
            "rho_onebit_sim",
            "rho_onebit_analytic",
            "rho_sd_sim",
            "rho_sd_analytic",
            "d_over_lambda",
            "m",
            "snr_db",
        ],
    );
    let mut summary = Table::new(
        "spectrum_summary.csv",
        &[
            "snr_db",
            "m",
            "d_over_lambda",
            "phi_deg",
            "crossover_deg",
            "pq_onebit_sector",
            "pq_sd_sector",
            "max_dev_onebit",
            "max_dev_sd",
            "trials",
        ],
    );
    for p in points {
        let r = &p.run;
        for i in 0..r.u_grid.len() {
            curves.rows.push(vec![
                fmt(r.u_grid[i]),
                fmt(r.onebit_sim[i]),
                fmt(r.onebit_analytic[i]),
                fmt(r.sd_sim[i]),
                fmt(r.sd_analytic[i]),
                fmt(p.d_over_lambda),
                p.m.to_string(),
                fmt(p.snr_db),
            ]);
        }
        summary.rows.push(vec![
            fmt(p.snr_db),
            p.m.to_string(),
            fmt(p.d_over_lambda),
            fmt(r.phi.to_degrees()),
            fmt(p.crossover_deg),
            fmt(p.pq_onebit_sector),
            fmt(p.pq_sd_sector),
            fmt(r.max_relative_deviation(Pipeline::OneBit)),
            fmt(r.max_relative_deviation(Pipeline::SigmaDelta)),
            r.trials.to_string(),
        ]);
    }
    vec![curves, summary]
}

/// Runs a spec. Results depend only on the spec, never on thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    let output = match spec.kind {
        ExperimentKind::Spectrum => ExperimentOutput::Spectrum(run_spectrum_points(spec)?),
        ExperimentKind::Se => ExperimentOutput::Se(run_se_points(spec)?),
        ExperimentKind::ChanEst => ExperimentOutput::ChanEst(run_chanest_points(spec)?),
        ExperimentKind::PhiOpt => ExperimentOutput::PhiOpt(run_phi_points(spec)?),
    };
    Ok(ExperimentResult {
        spec: spec.clone(),
        output,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn run_spectrum_points(spec: &ExperimentSpec) -> Result<Vec<SpectrumPoint>> {
    let grid = uniform_grid(DEFAULT_GRID_POINTS);
    let mut out = Vec::new();
    for p in spec.points() {
        let mut opts = SpectrumOptions::new(spec.trials, spec.seed);
        opts.doa_mode = spec.doa_mode;
        let run = run_spectrum_unchecked(&p.scenario, &p.geometry, &opts, &grid)?;
        let crossover = crossover_width_deg(
            &run.curve(Pipeline::OneBit, false),
            &run.curve(Pipeline::SigmaDelta, false),
            p.scenario.theta0.sin(),
        );
        let (d1, d2) = p.scenario.sector();
        let zeta = default_zeta(&p.scenario, &p.geometry)?;
        let model = sd_linear_model(&vec![p.scenario.input_power(); p.geometry.m])?;
        out.push(SpectrumPoint {
            snr_db: p.snr_db,
            m: p.geometry.m,
            d_over_lambda: p.geometry.d_over_lambda,
            crossover_deg: crossover,
            pq_onebit_sector: pq_onebit_analytic(&p.scenario, &p.geometry, zeta)?,
            pq_sd_sector: pq_sigmadelta_sector(&model, &p.geometry, run.phi, d1, d2),
            run,
        });
    }
    Ok(out)
}

fn run_se_points(spec: &ExperimentSpec) -> Result<Vec<SeRow>> {
    let mut rows = Vec::new();
    for p in spec.points() {
        for &csi in &spec.csi {
            for &arch in &spec.architectures {
                let mut opts = SeOptions::new(spec.trials, spec.seed);
                opts.doa_mode = spec.doa_mode;
                opts.csi = csi;
                let result = se_simulated_unchecked(spec.receiver, &p.scenario, &p.geometry, arch, &opts)?;
                rows.push(SeRow {
                    snr_db: p.snr_db,
                    m: p.geometry.m,
                    d_over_lambda: p.geometry.d_over_lambda,
                    arch,
                    receiver: spec.receiver,
                    csi,
                    method: "simulated",
                    result,
                });
            }
            if spec.closed_form
                && csi == CsiMode::Perfect
                && spec.receiver == ReceiverKind::Mrc
                && spec.architectures.contains(&Architecture::SigmaDelta)
            {
                let mut opts = SeOptions::new(spec.trials, spec.seed);
                opts.doa_mode = spec.doa_mode;
                rows.push(SeRow {
                    snr_db: p.snr_db,
                    m: p.geometry.m,
                    d_over_lambda: p.geometry.d_over_lambda,
                    arch: Architecture::SigmaDelta,
                    receiver: ReceiverKind::Mrc,
                    csi,
                    method: "closed_form",
                    result: se_mrc_closed_form_averaged(&p.scenario, &p.geometry, &opts)?,
                });
            }
        }
    }
    Ok(rows)
}

/// Closed-form Sigma-Delta MRC spectral efficiency averaged over the DoA sets
/// of the trials that [`crate::receivers::se_simulated`] would draw with the
/// same options.
pub fn se_mrc_closed_form_averaged(
    scn: &Scenario,
    geom: &ArrayGeometry,
    opts: &SeOptions,
) -> Result<SeResult> {
    scn.validate()?;
    geom.validate()?;
    let model = sd_linear_model(&vec![scn.input_power(); geom.m])?;
    let phi = scn.steering_phase(geom)?;
    let fixed = match opts.doa_mode {
        DoaMode::Fixed => {
            let mut rng = stream_rng(derive_seed(opts.seed, purpose::FIXED_DOAS), 0);
            Some(crate::array_model::draw_doa_set(scn, &mut rng))
        }
        DoaMode::PerTrial => None,
    };
    let k = scn.k;
    let trials = opts.trials.max(1);
    let (sum, sq) = fold_trials(
        trials,
        || (vec![0.0; k], vec![0.0; k]),
        |acc, t| {
            let doas = match &fixed {
                Some(d) => d.clone(),
                None => {
                    let mut rng = trial_rng(opts.seed, t);
                    crate::array_model::draw_doa_set(scn, &mut rng)
                }
            };
            let se = se_mrc_closed_form(scn, geom, &doas, Some(&model), phi).expect("scenario validated");
            for (i, v) in se.iter().enumerate() {
                acc.0[i] += v;
                acc.1[i] += v * v;
            }
        },
        |mut a, b| {
            for i in 0..k {
                a.0[i] += b.0[i];
                a.1[i] += b.1[i];
            }
            a
        },
    );
    let n = trials as f64;
    let per_user: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| {
            if trials < 2 {
                0.0
            } else {
                let m = s / n;
                ((q / n - m * m).max(0.0) / (n - 1.0)).sqrt()
            }
        })
        .collect();
    let total: f64 = per_user.iter().sum();
    // DoAs are shared, so per-user values move together; the sum error is their sum.
    let sum_stderr = stderr.iter().sum();
    Ok(SeResult {
        per_user,
        sum: total,
        stderr,
        sum_stderr,
        trials,
        skipped: 0,
    })
}

fn run_chanest_points(spec: &ExperimentSpec) -> Result<Vec<ChanEstRow>> {
    let mut rows = Vec::new();
    for p in spec.points() {
        for &arch in &spec.architectures {
            let (nmse, stderr) = channel_estimation_nmse(
                &p.scenario,
                &p.geometry,
                arch,
                spec.trials,
                spec.seed,
                spec.doa_mode,
            )?;
            rows.push(ChanEstRow {
                snr_db: p.snr_db,
                m: p.geometry.m,
                d_over_lambda: p.geometry.d_over_lambda,
                arch,
                nmse,
                nmse_stderr: stderr,
                trials: spec.trials,
            });
        }
    }
    Ok(rows)
}

/// Normalized LS estimation error `E‖Ĝ − G‖² / E‖G‖²` with `η = K` DFT pilots,
/// on the same channels and noise as the spectral-efficiency runs.
pub fn channel_estimation_nmse(
    scn: &Scenario,
    geom: &ArrayGeometry,
    arch: Architecture,
    trials: usize,
    seed: u64,
    doa_mode: DoaMode,
) -> Result<(f64, f64)> {
    scn.validate()?;
    geom.validate()?;
    let phi = dft_pilots(scn.k, scn.k)?;
    let fixed = match doa_mode {
        DoaMode::Fixed => {
            let mut rng = stream_rng(derive_seed(seed, purpose::FIXED_DOAS), 0);
            Some(crate::array_model::draw_doa_set(scn, &mut rng))
        }
        DoaMode::PerTrial => None,
    };
    let trials = trials.max(1);
    let (err, err_sq, pow) = fold_trials(
        trials,
        || (0.0, 0.0, 0.0),
        |acc, t| {
            let mut rng = trial_rng(seed, t);
            let real = crate::array_model::draw_channel_with(scn, geom, fixed.as_ref(), &mut rng)
                .expect("scenario validated");
            let mut trng = stream_rng(derive_seed(seed, purpose::TRAINING), t as u64);
            let y =
                training_block(&real.channel, scn, geom, arch, &phi, &mut trng).expect("dimensions agree");
            let g_hat =
                ls_estimate_per_user(&y, &real.steering, &phi, scn.p0, scn.k).expect("dimensions agree");
            let e = frobenius(&(g_hat - &real.channel)).powi(2);
            acc.0 += e;
            acc.1 += e * e;
            acc.2 += frobenius(&real.channel).powi(2);
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
    );
    let n = trials as f64;
    let mean = err / n;
    let se = if trials < 2 {
        0.0
    } else {
        ((err_sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    };
    let norm = pow / n;
    Ok((mean / norm, se / norm))
}

fn run_phi_points(spec: &ExperimentSpec) -> Result<Vec<PhiRow>> {
    spec.points()
        .into_iter()
        .map(|p| {
            let best = phi_star(&p.scenario, &p.geometry)?;
            let auto = p.geometry.spatial_frequency(p.scenario.theta0.sin());
            Ok(PhiRow {
                snr_db: p.snr_db,
                m: p.geometry.m,
                d_over_lambda: p.geometry.d_over_lambda,
                phi_star: best,
                g_phi_star: g_phi(&p.scenario, &p.geometry, best)?,
                phi_auto: auto,
                g_phi_auto: g_phi(&p.scenario, &p.geometry, auto)?,
                g_phi_zero: g_phi(&p.scenario, &p.geometry, 0.0)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_parameters() {
        let f1 = builtin("fig1").unwrap();
        assert_eq!((f1.scenario.l, f1.geometry.d_over_lambda), (50, 0.25));
        assert_eq!(f1.sweep, Sweep::SnrDb(vec![0.0]));
        assert!(f1.caption.contains("L = 50"));
        let f5 = builtin("fig5").unwrap();
        assert_eq!(f5.scenario.l, 15);
        assert!((f5.scenario.snr_db() - 10.0).abs() < 1e-12);
        assert!(matches!(f5.sweep, Sweep::M(_)));
        assert_eq!(f5.receiver, ReceiverKind::Zf);
        for name in BUILTIN {
            assert!(builtin(name).unwrap().problems().is_empty(), "{name}");
        }
        assert!(matches!(builtin("fig9"), Err(Error::UnknownExperiment(_))));
        assert_eq!(default_snr_grid().len(), 16);
        assert_eq!(default_snr_grid()[15], 20.0);
    }

    #[test]
    fn problems_are_reported_together() {
        let mut s = builtin("fig4").unwrap();
        s.trials = 0;
        s.architectures.clear();
        s.geometry.m = 5;
        let p = s.problems();
        assert!(p.len() >= 3, "{p:?}");
    }

    #[test]
    fn tiny_run_is_deterministic() {
        let mut s = builtin("fig3").unwrap();
        s.trials = 1;
        s.geometry.m = 16;
        s.sweep = Sweep::SnrDb(vec![0.0, 10.0]);
        let a = run_experiment(&s).unwrap().tables();
        let b = run_experiment(&s).unwrap().tables();
        assert_eq!(a, b);
        assert_eq!(a[0].rows.len(), 2 * 4);
    }
}
